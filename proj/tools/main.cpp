#include "lam3c/checkpoint.hpp"
#include "lam3c/config.hpp"
#include "lam3c/gradcheck.hpp"
#include "lam3c/ply.hpp"
#include "lam3c/rng.hpp"
#include "lam3c/sinkhorn.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <sstream>

namespace fs = std::filesystem;
using namespace lam3c;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kHardFailure = 2;

struct Common {
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--seed", common.seed, "Seed for every random draw");
  cmd->add_flag("--strict", common.strict, "Fail hard on per-item errors; requires --seed");
}

void require_seed(const Common& common) {
  if (common.strict && !common.seed) {
    throw ConfigError("--strict requires an explicit --seed");
  }
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int run_align(const fs::path& input, const fs::path& output, const std::string& config_path, int jobs,
              const Common& common) {
  require_seed(common);
  AlignConfig config = config_path.empty() ? AlignConfig{} : align_config_from_json(read_text_file(config_path));
  if (common.seed) {
    config.seed = *common.seed;
  }
  const PipelineReport report = cli_align(input, output, config, jobs);
  write_text_file(output / "report.csv", report_to_csv(report));
  write_text_file(output / "report.json", report_to_json(report));
  for (const auto& row : report.rows) {
    if (!row.ok()) {
      std::cerr << "warning: " << row.name << ": " << row.error << '\n';
    }
  }
  std::cerr << report.rows.size() - report.failures() << " aligned, " << report.failures() << " failed\n";
  return common.strict && report.failures() > 0 ? kHardFailure : kOk;
}

int run_gen_scenes(const fs::path& out, int count, const std::string& spec_path, bool toy, double max_tilt,
                   const Common& common) {
  require_seed(common);
  if (count < 1) {
    throw ConfigError("--count must be positive");
  }
  SceneSpec base = toy ? toy_scene_spec() : SceneSpec{};
  if (!spec_path.empty()) {
    base = scene_spec_from_json(read_text_file(spec_path));
  }
  const std::uint64_t seed = common.seed.value_or(base.seed);
  fs::create_directories(out);
  for (int i = 0; i < count; ++i) {
    const SceneSpec spec =
        sample_scene_spec(base, CounterRng(seed).fork(static_cast<std::uint64_t>(i)).next_u64(), max_tilt);
    const auto [cloud, truth] = generate_room(spec);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04d", i);
    write_ply(out / (std::string(stem) + ".ply"), cloud);
    write_text_file(out / (std::string(stem) + ".json"),
                    "{\n\"spec\": " + scene_spec_to_json(spec) + ",\n\"truth\": " + ground_truth_to_json(truth) + "\n}\n");
  }
  std::cerr << "wrote " << count << " scenes to " << out << '\n';
  return kOk;
}

int run_train(const std::string& config_path, const fs::path& scenes_dir, const fs::path& out,
              std::optional<std::int64_t> steps, const Common& common) {
  require_seed(common);
  TrainConfig config =
      config_path.empty() ? toy_train_config() : train_config_from_json(read_text_file(config_path), toy_train_config());
  if (common.seed) {
    config.seed = *common.seed;
  }
  if (steps) {
    config.total_steps = *steps;
  }
  config.resolved().check();
  std::vector<PointCloud> scenes;
  for (auto& named : load_ply_directory(scenes_dir)) {
    if (!named.cloud.colors) {
      std::cerr << "warning: " << named.name << " has no colors; zeros are used\n";
    }
    scenes.push_back(ensure_normals(named.cloud));
  }
  if (scenes.empty()) {
    throw ConfigError("no .ply scenes in " + scenes_dir.string());
  }
  fs::create_directories(out);
  write_text_file(out / "config.json", train_config_to_json(config));
  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  if (!metrics) {
    throw IoError("cannot write " + (out / "metrics.jsonl").string());
  }
  std::optional<TrainResult> result;
  try {
    result = train(config, scenes, &metrics, [&](const MetricsRecord& r) {
      if (r.step % 100 == 0 || r.step + 1 == config.total_steps) {
        std::cerr << "step " << r.step << " total " << r.total << " usage " << r.usage_entropy << '\n';
      }
    });
  } catch (const NumericError& e) {
    write_text_file(out / "diagnostic.json", e.diagnostic);
    std::cerr << "error: " << e.what() << "; batch written to " << (out / "diagnostic.json") << '\n';
    return kHardFailure;
  }
  Checkpoint ck;
  ck.metadata["steps"] = std::to_string(result->state.step);
  ck.metadata["seed"] = std::to_string(config.seed);
  append_model(ck, result->state.student, "student.");
  append_model(ck, result->state.teacher.params, "teacher.");
  save_checkpoint(out / "checkpoint.lam3c", ck);
  nlohmann::ordered_json summary;
  summary["steps"] = result->state.step;
  summary["final_total"] = result->metrics.back().total;
  summary["final_epoch_usage_entropy"] = result->final_epoch_usage_entropy;
  summary["max_usage_entropy"] = std::log(static_cast<double>(config.model.prototypes));
  summary["scenes"] = scenes.size();
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  return kOk;
}

int run_gradcheck(int instances, double tolerance, const Common& common) {
  require_seed(common);
  GradcheckOptions options;
  options.instances = instances;
  options.tolerance = tolerance;
  options.seed = common.seed.value_or(0);
  const GradcheckReport report = run_gradcheck(options);
  std::cout << report.to_json() << '\n';
  return report.passed() ? kOk : kHardFailure;
}

Matrix read_csv_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) {
          throw std::invalid_argument(cell);
        }
      } catch (const std::logic_error&) {
        throw ConfigError("bad matrix entry '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("ragged matrix rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw ConfigError("empty matrix");
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

int run_sinkhorn(const std::string& input, double temperature, int iterations, bool softmax_only) {
  Matrix values;
  if (input == "-") {
    values = read_csv_matrix(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) {
      throw ConfigError("cannot open " + input);
    }
    values = read_csv_matrix(in);
  }
  const LogitsBatch logits{values, temperature};
  try {
    logits.check();
  } catch (const Error& e) {
    // Rows of -inf are reported by the Sinkhorn routine itself.
    if (values.allFinite() || values.hasNaN()) {
      throw ConfigError(e.what());
    }
  }
  if (iterations < 1) {
    throw ConfigError("--iterations must be >= 1");
  }
  const AssignmentMatrix q = softmax_only ? softmax_rows(logits) : sinkhorn_normalize(logits, iterations);
  for (Eigen::Index i = 0; i < q.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.values.cols(); ++j) {
      std::cout << (j ? "," : "") << real(q.values(i, j));
    }
    std::cout << '\n';
  }
  return kOk;
}

int run_export_pca(const fs::path& checkpoint, const fs::path& scene, const fs::path& out, const std::string& prefix) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const ModelParams params = model_from_checkpoint(ck, prefix);
  if (params.head.dim() < 3) {
    throw ConfigError("embedding dimension " + std::to_string(params.head.dim()) + " is below 3");
  }
  const PointCloud cloud = ensure_normals(read_ply(scene).cloud.compacted());
  const Matrix z = encode(params.encoder, cloud).values;
  write_ply(out, pca_colors(cloud, z));
  std::cerr << "wrote " << cloud.size() << " colored points to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates many short-lived matrices above the default mmap threshold.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  CLI::App app{"lam3c: self-supervised loss stack and alignment pipeline for noisy point clouds"};
  app.require_subcommand(1);
  int code = kOk;

  Common align_common;
  std::string align_in, align_out, align_config;
  int jobs = 1;
  auto* align = app.add_subcommand("align", "Downsample, filter, level, scale and add normals to a directory of PLY scenes");
  align->add_option("--input", align_in, "Directory of .ply scenes")->required();
  align->add_option("--output", align_out, "Output directory for aligned scenes and reports")->required();
  align->add_option("--config", align_config, "Alignment config JSON");
  align->add_option("--jobs", jobs, "Scenes processed in parallel")->check(CLI::PositiveNumber);
  add_common(align, align_common);

  Common gen_common;
  std::string gen_out, gen_spec;
  int gen_count = 8;
  bool gen_toy = false;
  double gen_tilt = 0.0;
  auto* gen = app.add_subcommand("gen-scenes", "Write synthetic rooms as PLY plus ground-truth JSON");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of scenes");
  gen->add_option("--spec", gen_spec, "Base scene spec JSON");
  gen->add_flag("--toy", gen_toy, "Use the small training-room preset");
  gen->add_option("--max-tilt", gen_tilt, "Tilt drawn uniformly in [0, max] degrees");
  add_common(gen, gen_common);

  Common train_common;
  std::string train_config, train_scenes, train_out;
  std::optional<std::int64_t> train_steps;
  auto* trainer = app.add_subcommand("train-toy", "Train the toy encoder on a directory of scenes");
  trainer->add_option("--config", train_config, "Training config JSON (defaults: toy preset)");
  trainer->add_option("--scenes", train_scenes, "Directory of .ply scenes")->required();
  trainer->add_option("--out", train_out, "Run directory")->required();
  trainer->add_option("--steps", train_steps, "Override total_steps");
  add_common(trainer, train_common);

  Common grad_common;
  int grad_instances = 100;
  double grad_tolerance = 1e-4;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  grad->add_option("--instances", grad_instances, "Random instances per loss")->check(CLI::PositiveNumber);
  grad->add_option("--tolerance", grad_tolerance, "Maximum relative error");
  add_common(grad, grad_common);

  std::string sk_input;
  double sk_temperature = 1.0;
  int sk_iterations = 3;
  bool sk_softmax = false;
  auto* sk = app.add_subcommand("sinkhorn", "Sinkhorn-normalize a CSV logit matrix");
  sk->add_option("--input", sk_input, "CSV file, or - for stdin")->required();
  sk->add_option("--temperature", sk_temperature, "Temperature dividing the logits");
  sk->add_option("--iterations", sk_iterations, "Column/row alternations");
  sk->add_flag("--softmax", sk_softmax, "Row softmax only");

  std::string pca_checkpoint, pca_scene, pca_out, pca_prefix = "student.";
  auto* pca = app.add_subcommand("export-pca", "Color a scene by the top-3 principal components of its embeddings");
  pca->add_option("--checkpoint", pca_checkpoint, "Checkpoint written by train-toy")->required();
  pca->add_option("--scene", pca_scene, "Scene PLY")->required();
  pca->add_option("--out", pca_out, "Colored output PLY")->required();
  pca->add_option("--prefix", pca_prefix, "Tensor prefix: student. or teacher.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*align) {
      code = run_align(align_in, align_out, align_config, jobs, align_common);
    } else if (*gen) {
      code = run_gen_scenes(gen_out, gen_count, gen_spec, gen_toy, gen_tilt, gen_common);
    } else if (*trainer) {
      code = run_train(train_config, train_scenes, train_out, train_steps, train_common);
    } else if (*grad) {
      code = run_gradcheck(grad_instances, grad_tolerance, grad_common);
    } else if (*sk) {
      code = run_sinkhorn(sk_input, sk_temperature, sk_iterations, sk_softmax);
    } else if (*pca) {
      code = run_export_pca(pca_checkpoint, pca_scene, pca_out, pca_prefix);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kHardFailure;
  }
  return code;
}
