#include "lam3c/pipeline.hpp"

#include "lam3c/normals.hpp"
#include "lam3c/ply.hpp"
#include "lam3c/rng.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

namespace lam3c {

using nlohmann::ordered_json;

void AlignConfig::check() const {
  if (sor.k < 1 || !(sor.std_mult > 0.0)) {
    throw ConfigError("sor.k must be >= 1 and sor.std_mult > 0");
  }
  if (ransac_iterations < 1) {
    throw ConfigError("ransac_iterations must be >= 1");
  }
  if (ransac_threshold && !(*ransac_threshold > 0.0)) {
    throw ConfigError("ransac_threshold must be positive");
  }
  if (!(min_inlier_ratio >= 0.0 && min_inlier_ratio <= 1.0)) {
    throw ConfigError("min_inlier_ratio must lie in [0, 1]");
  }
  if (refine_iterations < 0) {
    throw ConfigError("refine_iterations must be >= 0");
  }
  if (scale.fixed && !(*scale.fixed > 0.0)) {
    throw ConfigError("a fixed scale target must be positive");
  }
  if (!(scale.median > 0.0) || scale.log_std < 0.0) {
    throw ConfigError("scale.median must be positive and scale.log_std >= 0");
  }
  if (normal_k < 1) {
    throw ConfigError("normal_k must be >= 1");
  }
}

std::size_t PipelineReport::failures() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SceneReport& r) { return !r.ok(); }));
}

std::uint64_t scene_seed(std::uint64_t seed, const std::string& name) {
  return CounterRng(seed).fork(name).next_u64();
}

PointCloud random_downsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed) {
  PointCloud valid = cloud.compacted();
  if (max_points == 0 || valid.size() <= max_points) {
    return valid;
  }
  CounterRng rng(seed);
  const auto keep = sample_without_replacement(valid.size(), max_points, rng);
  return valid.subset(keep);
}

namespace {

double degrees(double radians) { return radians * 180.0 / std::numbers::pi; }

double angle_to_z(const Vec3& n, bool unsigned_axis) {
  const double c = unsigned_axis ? std::abs(n.z()) : n.z();
  return degrees(std::acos(std::clamp(c / n.norm(), -1.0, 1.0)));
}

}  // namespace

AlignOutput align_scene(const PointCloud& input, const AlignConfig& config, const std::string& name) {
  const auto start = std::chrono::steady_clock::now();
  AlignOutput out;
  SceneReport& report = out.report;
  report.name = name;
  report.input_points = input.valid_count();
  const CounterRng rng(scene_seed(config.seed, name));

  PointCloud cloud = random_downsample(input, config.downsample_points, rng.fork("downsample").next_u64());
  report.downsampled_points = cloud.size();

  SorResult sor = sor_filter(cloud, config.sor);
  report.sor_removed = cloud.size() - sor.cloud.size();
  report.sor_passthrough = sor.passthrough;
  PointCloud work = std::move(sor.cloud);

  const double diagonal = aabb_diagonal(work);
  if (!(diagonal > 0.0)) {
    throw DegenerateGeometryError("scene '" + name + "' has zero extent");
  }
  RansacOptions ransac;
  ransac.iterations = config.ransac_iterations;
  ransac.inlier_threshold = config.ransac_threshold.value_or(default_inlier_threshold(diagonal));
  ransac.min_inlier_ratio = config.min_inlier_ratio;
  ransac.seed = rng.fork("ransac").next_u64();
  const std::optional<Plane> plane = detect_dominant_plane(work, ransac);

  RigidSimilarity transform;
  std::optional<Vec3> pivot;
  if (plane) {
    report.plane_found = true;
    report.angle_before_deg = angle_to_z(plane->normal, true);
    ZUpOptions zup;
    zup.refine_threshold = ransac.inlier_threshold;
    zup.max_refine_iterations = config.refine_iterations;
    ZUpResult aligned = align_z_up(work, *plane, zup);
    report.angle_after_deg = angle_to_z(aligned.refined_plane.normal, false);
    report.rotation_deg = degrees(aligned.transform.rotation_angle());
    transform = aligned.transform;
    work = std::move(aligned.cloud);
    const Vec3 c = centroid(work);
    pivot = Vec3(c.x(), c.y(), 0.0);
  }

  if (config.scale.fixed) {
    report.s_target = *config.scale.fixed;
  } else {
    CounterRng draw = rng.fork("scale");
    report.s_target = std::exp(std::log(config.scale.median) + config.scale.log_std * draw.normal());
  }
  ScaleResult scaled = scale_align(work, report.s_target, pivot);
  report.alpha = scaled.alpha;
  transform = scaled.transform.after(transform);

  NormalsResult normals = estimate_normals(scaled.cloud, static_cast<std::size_t>(config.normal_k));
  report.degenerate_normals = static_cast<std::size_t>(std::count(normals.degenerate.begin(), normals.degenerate.end(), 1));
  out.cloud = std::move(normals.cloud);
  out.transform = transform;
  report.final_diagonal = aabb_diagonal(out.cloud);
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

PipelineReport cli_align(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                         const AlignConfig& config, int jobs) {
  config.check();
  if (!std::filesystem::is_directory(input_dir)) {
    throw IoError("input directory " + input_dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(input_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ply") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::filesystem::create_directories(output_dir);

  PipelineReport report;
  report.rows.resize(files.size());
  auto process = [&](std::size_t i) {
    const std::string name = files[i].filename().string();
    const auto start = std::chrono::steady_clock::now();
    try {
      const PointCloud input = read_ply(files[i]).cloud;
      AlignOutput out = align_scene(input, config, name);
      write_ply(output_dir / name, out.cloud);
      report.rows[i] = std::move(out.report);
    } catch (const std::exception& e) {
      SceneReport row;
      row.name = name;
      row.error = e.what();
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      report.rows[i] = std::move(row);
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), files.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < files.size(); ++i) {
      process(i);
    }
    return report;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < files.size(); i = next++) {
        process(i);
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  return report;
}

namespace {

const std::vector<std::string> kColumns = {
    "name",          "input_points",    "downsampled_points", "sor_removed", "sor_passthrough",
    "plane_found",   "angle_before_deg", "angle_after_deg",   "rotation_deg", "alpha",
    "s_target",      "final_diagonal",  "degenerate_normals", "wall_ms",     "error"};

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  return out + "\"";
}

// One CSV record starting at `pos`; advances past its line break.
std::vector<std::string> parse_record(const std::string& text, std::size_t& pos) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          fields.back() += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) {
    throw IoError("unterminated quoted CSV field");
  }
  return fields;
}

bool parse_bool(const std::string& s) {
  if (s == "true") {
    return true;
  }
  if (s == "false") {
    return false;
  }
  throw IoError("bad boolean '" + s + "' in report");
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) {
    return std::nullopt;
  }
  return std::stod(s);
}

}  // namespace

std::string report_to_csv(const PipelineReport& report) {
  std::string out;
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    out += (c ? "," : "") + kColumns[c];
  }
  out += '\n';
  auto opt = [](const std::optional<double>& v) { return v ? real(*v) : std::string(); };
  for (const SceneReport& r : report.rows) {
    out += quote(r.name) + "," + std::to_string(r.input_points) + "," + std::to_string(r.downsampled_points) + "," +
           std::to_string(r.sor_removed) + "," + (r.sor_passthrough ? "true" : "false") + "," +
           (r.plane_found ? "true" : "false") + "," + opt(r.angle_before_deg) + "," + opt(r.angle_after_deg) + "," +
           real(r.rotation_deg) + "," + real(r.alpha) + "," + real(r.s_target) + "," + real(r.final_diagonal) + "," +
           std::to_string(r.degenerate_normals) + "," + real(r.wall_ms) + "," + quote(r.error) + "\n";
  }
  return out;
}

PipelineReport report_from_csv(const std::string& text) {
  std::size_t pos = 0;
  if (parse_record(text, pos) != kColumns) {
    throw IoError("report CSV header does not match");
  }
  PipelineReport report;
  while (pos < text.size()) {
    const auto f = parse_record(text, pos);
    if (f.size() == 1 && f[0].empty()) {
      continue;
    }
    if (f.size() != kColumns.size()) {
      throw IoError("report CSV row has " + std::to_string(f.size()) + " fields");
    }
    try {
      SceneReport r;
      r.name = f[0];
      r.input_points = std::stoull(f[1]);
      r.downsampled_points = std::stoull(f[2]);
      r.sor_removed = std::stoull(f[3]);
      r.sor_passthrough = parse_bool(f[4]);
      r.plane_found = parse_bool(f[5]);
      r.angle_before_deg = parse_optional(f[6]);
      r.angle_after_deg = parse_optional(f[7]);
      r.rotation_deg = std::stod(f[8]);
      r.alpha = std::stod(f[9]);
      r.s_target = std::stod(f[10]);
      r.final_diagonal = std::stod(f[11]);
      r.degenerate_normals = std::stoull(f[12]);
      r.wall_ms = std::stod(f[13]);
      r.error = f[14];
      report.rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw IoError(std::string("bad number in report CSV: ") + e.what());
    }
  }
  return report;
}

std::string report_to_json(const PipelineReport& report) {
  ordered_json rows = ordered_json::array();
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  for (const SceneReport& r : report.rows) {
    rows.push_back({{"name", r.name},
                    {"input_points", r.input_points},
                    {"downsampled_points", r.downsampled_points},
                    {"sor_removed", r.sor_removed},
                    {"sor_passthrough", r.sor_passthrough},
                    {"plane_found", r.plane_found},
                    {"angle_before_deg", opt(r.angle_before_deg)},
                    {"angle_after_deg", opt(r.angle_after_deg)},
                    {"rotation_deg", r.rotation_deg},
                    {"alpha", r.alpha},
                    {"s_target", r.s_target},
                    {"final_diagonal", r.final_diagonal},
                    {"degenerate_normals", r.degenerate_normals},
                    {"wall_ms", r.wall_ms},
                    {"error", r.error}});
  }
  return ordered_json{{"scenes", rows}, {"failures", report.failures()}}.dump(2);
}

PipelineReport report_from_json(const std::string& text) {
  PipelineReport report;
  try {
    const ordered_json j = ordered_json::parse(text);
    auto opt = [](const ordered_json& v) { return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()); };
    for (const auto& row : j.at("scenes")) {
      SceneReport r;
      r.name = row.at("name").get<std::string>();
      r.input_points = row.at("input_points").get<std::size_t>();
      r.downsampled_points = row.at("downsampled_points").get<std::size_t>();
      r.sor_removed = row.at("sor_removed").get<std::size_t>();
      r.sor_passthrough = row.at("sor_passthrough").get<bool>();
      r.plane_found = row.at("plane_found").get<bool>();
      r.angle_before_deg = opt(row.at("angle_before_deg"));
      r.angle_after_deg = opt(row.at("angle_after_deg"));
      r.rotation_deg = row.at("rotation_deg").get<double>();
      r.alpha = row.at("alpha").get<double>();
      r.s_target = row.at("s_target").get<double>();
      r.final_diagonal = row.at("final_diagonal").get<double>();
      r.degenerate_normals = row.at("degenerate_normals").get<std::size_t>();
      r.wall_ms = row.at("wall_ms").get<double>();
      r.error = row.at("error").get<std::string>();
      report.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad report JSON: ") + e.what());
  }
  return report;
}

std::vector<NamedCloud> load_ply_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ply") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedCloud> out;
  for (const auto& f : files) {
    out.push_back({f.filename().string(), read_ply(f).cloud});
  }
  return out;
}

PointCloud ensure_normals(const PointCloud& cloud, int k) {
  if (cloud.normals) {
    return cloud;
  }
  return estimate_normals(cloud, static_cast<std::size_t>(k)).cloud;
}

Matrix pca_project(const Matrix& embeddings, int components) {
  if (embeddings.cols() < components) {
    throw InvalidArgument("embedding dimension " + std::to_string(embeddings.cols()) + " is below " +
                          std::to_string(components) + " components");
  }
  if (embeddings.rows() == 0) {
    throw InvalidArgument("no embeddings to project");
  }
  const Eigen::RowVectorXd mean = embeddings.colwise().mean();
  const Matrix centered = embeddings.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(embeddings.rows());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd basis(embeddings.cols(), components);
  for (int c = 0; c < components; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(embeddings.cols() - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) {
      v = -v;
    }
    basis.col(c) = v;
  }
  return centered * basis;
}

PointCloud pca_colors(const PointCloud& cloud, const Matrix& embeddings) {
  if (static_cast<std::size_t>(embeddings.rows()) != cloud.size()) {
    throw ShapeError("embedding rows do not match the cloud size");
  }
  const Matrix proj = pca_project(embeddings, 3);
  PointCloud out = cloud;
  Positions colors(cloud.size(), Vec3::Constant(0.5));
  for (int c = 0; c < 3; ++c) {
    const double lo = proj.col(c).minCoeff();
    const double hi = proj.col(c).maxCoeff();
    if (hi - lo <= 1e-12 * (1.0 + std::abs(hi))) {
      continue;
    }
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      colors[static_cast<std::size_t>(i)][c] = (proj(i, c) - lo) / (hi - lo);
    }
  }
  out.colors = std::move(colors);
  return out;
}

}  // namespace lam3c
