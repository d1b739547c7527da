#include "lam3c/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace lam3c {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads optional fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) {
      throw ConfigError(where_ + " must be a JSON object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (const json* v = take(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception& e) {
        throw ConfigError(where_ + "." + key + ": " + e.what());
      }
    }
  }

  void get(const char* key, std::optional<double>& out) {
    if (const json* v = take(key)) {
      if (v->is_null()) {
        out.reset();
      } else {
        double value = 0.0;
        get_number(key, *v, value);
        out = value;
      }
    }
  }

  void get(const char* key, Vec3& out) {
    if (const json* v = take(key)) {
      if (!v->is_array() || v->size() != 3) {
        throw ConfigError(where_ + "." + key + " must be an array of 3 numbers");
      }
      for (int i = 0; i < 3; ++i) {
        get_number(key, (*v)[static_cast<std::size_t>(i)], out[i]);
      }
    }
  }

  void get(const char* key, CropRange& out) {
    if (const json* v = take(key)) {
      if (!v->is_array() || v->size() != 2) {
        throw ConfigError(where_ + "." + key + " must be [min_fraction, max_fraction]");
      }
      get_number(key, (*v)[0], out.min_fraction);
      get_number(key, (*v)[1], out.max_fraction);
    }
  }

  void get(const char* key, Schedule& out) {
    if (const json* v = take(key)) {
      if (v->is_number()) {
        const double value = v->get<double>();
        out = Schedule::constant(value, out.total_steps);
        return;
      }
      Fields f(*v, where_ + "." + key);
      std::string kind = to_string(out.kind);
      f.get("kind", kind);
      try {
        out.kind = schedule_kind_from_string(kind);
      } catch (const Error& e) {
        throw ConfigError(where_ + "." + key + ": " + e.what());
      }
      f.get("start", out.start);
      f.get("end", out.end);
      if (out.kind == ScheduleKind::constant) {
        out.end = out.start;
      }
      f.finish();
    }
  }

  const json* child(const char* key) { return take(key); }
  const std::string& where() const { return where_; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) {
        throw ConfigError("unknown key '" + where_ + "." + item.key() + "'");
      }
    }
  }

 private:
  const json* take(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) {
      return nullptr;
    }
    seen_.insert(key);
    return &*it;
  }

  void get_number(const char* key, const json& v, double& out) const {
    if (!v.is_number()) {
      throw ConfigError(where_ + "." + key + " must be numeric");
    }
    out = v.get<double>();
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

ordered_json schedule_json(const Schedule& s) {
  return ordered_json{{"kind", to_string(s.kind)}, {"start", s.start}, {"end", s.end}};
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

std::string form_name(LaplacianForm form) { return form == LaplacianForm::pairwise ? "pairwise" : "huber_residual"; }

}  // namespace

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base) {
  const json doc = parse_document(text);
  TrainConfig c = base;
  Fields f(doc, "train");
  std::size_t batch_size = c.batch_size;
  f.get("batch_size", batch_size);
  c.batch_size = batch_size;
  f.get("total_steps", c.total_steps);
  f.get("seed", c.seed);
  f.get("student_temperature", c.student_temperature);
  f.get("teacher_temperature", c.teacher_temperature);
  f.get("lambda", c.lambda);
  f.get("ema_momentum", c.ema_momentum);
  f.get("weight_decay", c.weight_decay);
  f.get("base_lr", c.base_lr);
  f.get("final_lr", c.final_lr);
  f.get("warmup_fraction", c.warmup_fraction);
  f.get("sinkhorn_iterations", c.sinkhorn_iterations);
  if (const json* loss = f.child("loss")) {
    Fields l(*loss, "train.loss");
    l.get("w_unmask", c.loss.w_unmask);
    l.get("w_mask", c.loss.w_mask);
    l.get("w_roll", c.loss.w_roll);
    l.get("mu", c.loss.mu);
    l.get("huber_delta", c.loss.huber_delta);
    std::string form = form_name(c.loss.laplacian_form);
    l.get("laplacian_form", form);
    if (form == "pairwise") {
      c.loss.laplacian_form = LaplacianForm::pairwise;
    } else if (form == "huber_residual") {
      c.loss.laplacian_form = LaplacianForm::huber_residual;
    } else {
      throw ConfigError("train.loss.laplacian_form must be 'pairwise' or 'huber_residual'");
    }
    l.finish();
  }
  f.get("laplacian_k", c.laplacian_k);
  f.get("laplacian_max_radius", c.laplacian_max_radius);
  f.get("laplacian_sigma", c.laplacian_sigma);
  f.get("noise_sigma", c.noise_sigma);
  f.get("noise_dropout", c.noise_dropout);
  f.get("correspondence_cutoff", c.correspondence_cutoff);
  if (const json* model = f.child("model")) {
    Fields m(*model, "train.model");
    m.get("hidden", c.model.hidden);
    m.get("embedding_dim", c.model.embedding_dim);
    m.get("prototypes", c.model.prototypes);
    m.finish();
  }
  if (const json* views = f.child("views")) {
    Fields v(*views, "train.views");
    v.get("global_crop", c.views.global_crop);
    v.get("local_crop", c.views.local_crop);
    v.get("random_rotation", c.views.random_rotation);
    v.get("random_flip", c.views.random_flip);
    v.get("jitter_sigma", c.views.jitter_sigma);
    v.get("color_jitter", c.views.color_jitter);
    v.get("mask_grid", c.views.mask_grid);
    v.get("mask_ratio", c.views.mask_ratio);
    std::size_t min_points = c.views.min_points;
    v.get("min_points", min_points);
    c.views.min_points = min_points;
    v.finish();
  }
  f.get("record_wall_time", c.record_wall_time);
  f.finish();
  c.resolved().check();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["batch_size"] = c.batch_size;
  j["total_steps"] = c.total_steps;
  j["seed"] = c.seed;
  j["student_temperature"] = c.student_temperature;
  j["teacher_temperature"] = schedule_json(c.teacher_temperature);
  j["lambda"] = schedule_json(c.lambda);
  j["ema_momentum"] = schedule_json(c.ema_momentum);
  j["weight_decay"] = schedule_json(c.weight_decay);
  j["base_lr"] = c.base_lr;
  j["final_lr"] = c.final_lr;
  j["warmup_fraction"] = c.warmup_fraction;
  j["sinkhorn_iterations"] = c.sinkhorn_iterations;
  j["loss"] = {{"w_unmask", c.loss.w_unmask},
               {"w_mask", c.loss.w_mask},
               {"w_roll", c.loss.w_roll},
               {"mu", c.loss.mu},
               {"huber_delta", c.loss.huber_delta},
               {"laplacian_form", form_name(c.loss.laplacian_form)}};
  j["laplacian_k"] = c.laplacian_k;
  j["laplacian_max_radius"] = c.laplacian_max_radius;
  j["laplacian_sigma"] = c.laplacian_sigma ? ordered_json(*c.laplacian_sigma) : ordered_json(nullptr);
  j["noise_sigma"] = c.noise_sigma;
  j["noise_dropout"] = c.noise_dropout;
  j["correspondence_cutoff"] = c.correspondence_cutoff;
  j["model"] = {{"hidden", c.model.hidden}, {"embedding_dim", c.model.embedding_dim}, {"prototypes", c.model.prototypes}};
  j["views"] = {{"global_crop", {c.views.global_crop.min_fraction, c.views.global_crop.max_fraction}},
                {"local_crop", {c.views.local_crop.min_fraction, c.views.local_crop.max_fraction}},
                {"random_rotation", c.views.random_rotation},
                {"random_flip", c.views.random_flip},
                {"jitter_sigma", c.views.jitter_sigma},
                {"color_jitter", c.views.color_jitter},
                {"mask_grid", c.views.mask_grid},
                {"mask_ratio", c.views.mask_ratio},
                {"min_points", c.views.min_points}};
  j["record_wall_time"] = c.record_wall_time;
  return j.dump(2);
}

AlignConfig align_config_from_json(const std::string& text) {
  const json doc = parse_document(text);
  AlignConfig c;
  Fields f(doc, "align");
  std::size_t downsample = c.downsample_points;
  f.get("downsample_points", downsample);
  c.downsample_points = downsample;
  if (const json* sor = f.child("sor")) {
    Fields s(*sor, "align.sor");
    std::size_t k = c.sor.k;
    s.get("k", k);
    c.sor.k = k;
    s.get("std_mult", c.sor.std_mult);
    s.finish();
  }
  f.get("ransac_iterations", c.ransac_iterations);
  f.get("ransac_threshold", c.ransac_threshold);
  f.get("min_inlier_ratio", c.min_inlier_ratio);
  f.get("refine_iterations", c.refine_iterations);
  if (const json* scale = f.child("scale")) {
    Fields s(*scale, "align.scale");
    s.get("fixed", c.scale.fixed);
    s.get("median", c.scale.median);
    s.get("log_std", c.scale.log_std);
    s.finish();
  }
  f.get("normal_k", c.normal_k);
  f.get("seed", c.seed);
  f.finish();
  c.check();
  return c;
}

std::string align_config_to_json(const AlignConfig& c) {
  ordered_json j;
  j["downsample_points"] = c.downsample_points;
  j["sor"] = {{"k", c.sor.k}, {"std_mult", c.sor.std_mult}};
  j["ransac_iterations"] = c.ransac_iterations;
  j["ransac_threshold"] = c.ransac_threshold ? ordered_json(*c.ransac_threshold) : ordered_json(nullptr);
  j["min_inlier_ratio"] = c.min_inlier_ratio;
  j["refine_iterations"] = c.refine_iterations;
  j["scale"] = {{"fixed", c.scale.fixed ? ordered_json(*c.scale.fixed) : ordered_json(nullptr)},
                {"median", c.scale.median},
                {"log_std", c.scale.log_std}};
  j["normal_k"] = c.normal_k;
  j["seed"] = c.seed;
  return j.dump(2);
}

SceneSpec scene_spec_from_json(const std::string& text) {
  const json doc = parse_document(text);
  SceneSpec s;
  Fields f(doc, "scene");
  f.get("extents", s.extents);
  f.get("density", s.density);
  f.get("ceiling_coverage", s.ceiling_coverage);
  f.get("furniture_count", s.furniture_count);
  f.get("furniture_min_size", s.furniture_min_size);
  f.get("furniture_max_size", s.furniture_max_size);
  f.get("surface_noise", s.surface_noise);
  std::size_t outliers = s.outlier_count;
  f.get("outlier_count", outliers);
  s.outlier_count = outliers;
  f.get("outlier_radius", s.outlier_radius);
  f.get("ghost_fraction", s.ghost_fraction);
  f.get("ghost_offset", s.ghost_offset);
  f.get("hole_count", s.hole_count);
  f.get("hole_radius", s.hole_radius);
  f.get("tilt_deg", s.tilt_deg);
  f.get("scale", s.scale);
  f.get("translation", s.translation);
  std::size_t max_points = s.max_points;
  f.get("max_points", max_points);
  s.max_points = max_points;
  f.get("seed", s.seed);
  f.finish();
  s.check();
  return s;
}

std::string scene_spec_to_json(const SceneSpec& s) {
  ordered_json j;
  j["extents"] = vec_json(s.extents);
  j["density"] = s.density;
  j["ceiling_coverage"] = s.ceiling_coverage;
  j["furniture_count"] = s.furniture_count;
  j["furniture_min_size"] = vec_json(s.furniture_min_size);
  j["furniture_max_size"] = vec_json(s.furniture_max_size);
  j["surface_noise"] = s.surface_noise;
  j["outlier_count"] = s.outlier_count;
  j["outlier_radius"] = s.outlier_radius;
  j["ghost_fraction"] = s.ghost_fraction;
  j["ghost_offset"] = s.ghost_offset;
  j["hole_count"] = s.hole_count;
  j["hole_radius"] = s.hole_radius;
  j["tilt_deg"] = s.tilt_deg;
  j["scale"] = s.scale;
  j["translation"] = vec_json(s.translation);
  j["max_points"] = s.max_points;
  j["seed"] = s.seed;
  return j.dump(2);
}

TrainConfig toy_train_config() {
  TrainConfig c;
  c.total_steps = 2000;
  c.batch_size = 4;
  c.laplacian_max_radius = 0.5;
  c.views.min_points = 64;
  return c;
}

SceneSpec toy_scene_spec() {
  SceneSpec s;
  s.extents = Vec3(4.0, 3.5, 2.4);
  s.density = 60.0;
  s.furniture_count = 3;
  s.max_points = 1024;
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

}  // namespace lam3c
