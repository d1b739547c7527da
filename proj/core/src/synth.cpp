#include "lam3c/synth.hpp"

#include "lam3c/alignment.hpp"
#include "lam3c/rng.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lam3c {

using nlohmann::json;

void SceneSpec::check() const {
  if (extents.minCoeff() <= 0.0) {
    throw ConfigError("room extents must be positive");
  }
  if (!(extents.z() < std::min(extents.x(), extents.y()))) {
    throw ConfigError("room height must be below both floor extents so the floor is the largest plane");
  }
  if (!(density > 0.0)) {
    throw ConfigError("density must be positive");
  }
  if (!(ceiling_coverage >= 0.0 && ceiling_coverage <= 0.9)) {
    throw ConfigError("ceiling_coverage must lie in [0, 0.9]");
  }
  if (!(ghost_fraction >= 0.0 && ghost_fraction <= 1.0)) {
    throw ConfigError("ghost_fraction must lie in [0, 1]");
  }
  const double floor_area = extents.x() * extents.y();
  const double wall_area = std::max(extents.x(), extents.y()) * extents.z();
  const double hole_area = hole_count * std::numbers::pi * hole_radius * hole_radius;
  if (hole_area >= 0.5 * (floor_area - wall_area)) {
    throw ConfigError("holes could make a wall outweigh the floor");
  }
  if (furniture_count < 0 || hole_count < 0) {
    throw ConfigError("counts must be non-negative");
  }
  if (!(scale > 0.0)) {
    throw ConfigError("scale must be positive");
  }
  if (!(outlier_radius > 0.75)) {
    throw ConfigError("outlier_radius must exceed 0.75 room diagonals");
  }
}

std::size_t GroundTruth::count(PointLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

namespace {

struct Sample {
  Vec3 position;
  Vec3 color;
  Vec3 inward;  // unit normal pointing into the room
  int surface;
  PointLabel label;
};

void sample_rect(std::vector<Sample>& out, CounterRng& rng, const Vec3& origin, const Vec3& u, const Vec3& v,
                 const Vec3& inward, double density, double keep, const Vec3& color, int surface) {
  const double area = u.norm() * v.norm();
  const auto count = static_cast<std::size_t>(std::llround(area * density * keep));
  for (std::size_t i = 0; i < count; ++i) {
    const Vec3 p = origin + rng.uniform() * u + rng.uniform() * v;
    out.push_back(Sample{p, color, inward, surface, PointLabel::surface});
  }
}

Vec3 jitter_color(const Vec3& c, CounterRng& rng) {
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    out[i] = std::clamp(c[i] + rng.normal(0.0, 0.03), 0.0, 1.0);
  }
  return out;
}

}  // namespace

std::pair<PointCloud, GroundTruth> generate_room(const SceneSpec& spec) {
  spec.check();
  CounterRng root(spec.seed);
  CounterRng rng = root.fork("surfaces");
  const double lx = spec.extents.x();
  const double ly = spec.extents.y();
  const double lz = spec.extents.z();

  std::vector<Sample> samples;
  const Vec3 floor_color(0.55, 0.40, 0.25);
  const Vec3 wall_color(0.85, 0.84, 0.78);
  const Vec3 ceiling_color(0.95, 0.95, 0.93);
  sample_rect(samples, rng, Vec3(0, 0, 0), Vec3(lx, 0, 0), Vec3(0, ly, 0), Vec3::UnitZ(), spec.density, 1.0,
              floor_color, kFloor);
  sample_rect(samples, rng, Vec3(0, 0, 0), Vec3(0, ly, 0), Vec3(0, 0, lz), Vec3::UnitX(), spec.density, 1.0,
              wall_color, kWallXMin);
  sample_rect(samples, rng, Vec3(lx, 0, 0), Vec3(0, ly, 0), Vec3(0, 0, lz), -Vec3::UnitX(), spec.density, 1.0,
              wall_color, kWallXMax);
  sample_rect(samples, rng, Vec3(0, 0, 0), Vec3(lx, 0, 0), Vec3(0, 0, lz), Vec3::UnitY(), spec.density, 1.0,
              wall_color, kWallYMin);
  sample_rect(samples, rng, Vec3(0, ly, 0), Vec3(lx, 0, 0), Vec3(0, 0, lz), -Vec3::UnitY(), spec.density, 1.0,
              wall_color, kWallYMax);
  sample_rect(samples, rng, Vec3(0, 0, lz), Vec3(lx, 0, 0), Vec3(0, ly, 0), -Vec3::UnitZ(), spec.density,
              spec.ceiling_coverage, ceiling_color, kCeiling);

  CounterRng furn = root.fork("furniture");
  for (int b = 0; b < spec.furniture_count; ++b) {
    Vec3 size;
    for (int a = 0; a < 3; ++a) {
      size[a] = furn.uniform(spec.furniture_min_size[a], spec.furniture_max_size[a]);
    }
    size.x() = std::min(size.x(), 0.8 * lx);
    size.y() = std::min(size.y(), 0.8 * ly);
    size.z() = std::min(size.z(), 0.8 * lz);
    const Vec3 lo(furn.uniform(0.05, lx - size.x() - 0.05), furn.uniform(0.05, ly - size.y() - 0.05), 0.0);
    const Vec3 color(furn.uniform(0.1, 0.9), furn.uniform(0.1, 0.9), furn.uniform(0.1, 0.9));
    const int id = kFirstFurniture + b;
    // Top and four sides; the bottom rests on the floor.
    sample_rect(samples, furn, lo + Vec3(0, 0, size.z()), Vec3(size.x(), 0, 0), Vec3(0, size.y(), 0), Vec3::UnitZ(),
                spec.density, 1.0, color, id);
    sample_rect(samples, furn, lo, Vec3(0, size.y(), 0), Vec3(0, 0, size.z()), -Vec3::UnitX(), spec.density, 1.0,
                color, id);
    sample_rect(samples, furn, lo + Vec3(size.x(), 0, 0), Vec3(0, size.y(), 0), Vec3(0, 0, size.z()), Vec3::UnitX(),
                spec.density, 1.0, color, id);
    sample_rect(samples, furn, lo, Vec3(size.x(), 0, 0), Vec3(0, 0, size.z()), -Vec3::UnitY(), spec.density, 1.0,
                color, id);
    sample_rect(samples, furn, lo + Vec3(0, size.y(), 0), Vec3(size.x(), 0, 0), Vec3(0, 0, size.z()), Vec3::UnitY(),
                spec.density, 1.0, color, id);
  }

  CounterRng noise = root.fork("noise");
  for (auto& s : samples) {
    s.position += Vec3(noise.normal(), noise.normal(), noise.normal()) * spec.surface_noise;
    s.color = jitter_color(s.color, noise);
  }

  // Ghost copies of floor and wall points, shifted along the inward normal.
  if (spec.ghost_fraction > 0.0) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].surface >= kFloor && samples[i].surface <= kWallYMax) {
        candidates.push_back(i);
      }
    }
    CounterRng ghost = root.fork("ghost");
    const auto count = static_cast<std::size_t>(std::llround(spec.ghost_fraction * static_cast<double>(candidates.size())));
    for (const auto r : sample_without_replacement(candidates.size(), count, ghost)) {
      Sample g = samples[candidates[r]];
      g.position += spec.ghost_offset * g.inward + Vec3(ghost.normal(), ghost.normal(), ghost.normal()) * spec.surface_noise;
      g.label = PointLabel::ghost;
      samples.push_back(g);
    }
  }

  if (spec.hole_count > 0 && !samples.empty()) {
    CounterRng holes = root.fork("holes");
    std::vector<Vec3> centers;
    for (int h = 0; h < spec.hole_count; ++h) {
      centers.push_back(samples[static_cast<std::size_t>(holes.below(samples.size()))].position);
    }
    const double r2 = spec.hole_radius * spec.hole_radius;
    std::erase_if(samples, [&](const Sample& s) {
      return std::any_of(centers.begin(), centers.end(),
                         [&](const Vec3& c) { return (s.position - c).squaredNorm() <= r2; });
    });
  }

  if (spec.max_points > 0) {
    const std::size_t budget = spec.max_points > spec.outlier_count ? spec.max_points - spec.outlier_count : 0;
    if (samples.size() > budget) {
      CounterRng down = root.fork("downsample");
      std::vector<Sample> kept;
      kept.reserve(budget);
      for (const auto i : sample_without_replacement(samples.size(), budget, down)) {
        kept.push_back(samples[i]);
      }
      samples = std::move(kept);
    }
  }

  const Vec3 room_center = 0.5 * spec.extents;
  const double room_diag = spec.extents.norm();
  CounterRng out_rng = root.fork("outliers");
  for (std::size_t o = 0; o < spec.outlier_count; ++o) {
    Vec3 dir(out_rng.normal(), out_rng.normal(), out_rng.normal());
    dir.normalize();
    const double r = out_rng.uniform(0.75, spec.outlier_radius) * room_diag;
    const Vec3 color(out_rng.uniform(), out_rng.uniform(), out_rng.uniform());
    samples.push_back(Sample{room_center + r * dir, color, Vec3::UnitZ(), kOutlierSurface, PointLabel::outlier});
  }

  CounterRng pose = root.fork("pose");
  const double axis_angle = pose.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec3 axis(std::cos(axis_angle), std::sin(axis_angle), 0.0);
  const Mat3 tilt = Eigen::AngleAxisd(spec.tilt_deg * std::numbers::pi / 180.0, axis).toRotationMatrix();

  PointCloud cloud;
  GroundTruth truth;
  cloud.positions.reserve(samples.size());
  Positions colors;
  colors.reserve(samples.size());
  for (const auto& s : samples) {
    cloud.positions.push_back(spec.scale * (tilt * s.position) + spec.translation);
    colors.push_back(s.color);
    truth.labels.push_back(s.label);
    truth.surface_ids.push_back(s.surface);
  }
  cloud.colors = std::move(colors);

  truth.tilt = tilt;
  truth.scale = spec.scale;
  truth.translation = spec.translation;
  truth.up = tilt * Vec3::UnitZ();
  truth.floor.normal = truth.up;
  truth.floor.offset = truth.up.dot(spec.translation);
  truth.floor.inlier_count = static_cast<std::size_t>(std::count(truth.surface_ids.begin(), truth.surface_ids.end(), kFloor));
  truth.floor.inlier_ratio =
      samples.empty() ? 0.0 : static_cast<double>(truth.floor.inlier_count) / static_cast<double>(samples.size());
  PointCloud body;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (truth.labels[i] != PointLabel::outlier) {
      body.positions.push_back(cloud.positions[i]);
    }
  }
  truth.diagonal = body.empty() ? 0.0 : aabb_diagonal(body);
  return {std::move(cloud), std::move(truth)};
}

SceneSpec sample_scene_spec(const SceneSpec& base, std::uint64_t seed, double max_tilt_deg) {
  CounterRng rng = CounterRng(seed).fork("scene-spec");
  SceneSpec spec = base;
  spec.seed = seed;
  spec.extents.x() = base.extents.x() * rng.uniform(0.8, 1.25);
  spec.extents.y() = base.extents.y() * rng.uniform(0.8, 1.25);
  spec.extents.z() = std::min(base.extents.z() * rng.uniform(0.9, 1.1), 0.9 * std::min(spec.extents.x(), spec.extents.y()));
  spec.furniture_count = base.furniture_count + static_cast<int>(rng.below(3));
  spec.tilt_deg = rng.uniform(0.0, max_tilt_deg);
  return spec;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 json_vec(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

}  // namespace

std::string ground_truth_to_json(const GroundTruth& truth) {
  json j;
  j["floor"] = {{"normal", vec_json(truth.floor.normal)},
                {"offset", truth.floor.offset},
                {"inlier_count", truth.floor.inlier_count},
                {"inlier_ratio", truth.floor.inlier_ratio}};
  j["up"] = vec_json(truth.up);
  j["diagonal"] = truth.diagonal;
  j["tilt"] = json::array();
  for (int r = 0; r < 3; ++r) {
    j["tilt"].push_back(vec_json(truth.tilt.row(r).transpose()));
  }
  j["scale"] = truth.scale;
  j["translation"] = vec_json(truth.translation);
  std::vector<int> labels;
  labels.reserve(truth.labels.size());
  for (const auto l : truth.labels) {
    labels.push_back(static_cast<int>(l));
  }
  j["labels"] = labels;
  j["surface_ids"] = truth.surface_ids;
  j["counts"] = {{"surface", truth.count(PointLabel::surface)},
                 {"ghost", truth.count(PointLabel::ghost)},
                 {"outlier", truth.count(PointLabel::outlier)}};
  return j.dump(2);
}

GroundTruth ground_truth_from_json(const std::string& text) {
  const json j = json::parse(text);
  GroundTruth t;
  t.floor.normal = json_vec(j.at("floor").at("normal"));
  t.floor.offset = j.at("floor").at("offset").get<double>();
  t.floor.inlier_count = j.at("floor").at("inlier_count").get<std::size_t>();
  t.floor.inlier_ratio = j.at("floor").at("inlier_ratio").get<double>();
  t.up = json_vec(j.at("up"));
  t.diagonal = j.at("diagonal").get<double>();
  for (int r = 0; r < 3; ++r) {
    t.tilt.row(r) = json_vec(j.at("tilt").at(r)).transpose();
  }
  t.scale = j.at("scale").get<double>();
  t.translation = json_vec(j.at("translation"));
  for (const int l : j.at("labels").get<std::vector<int>>()) {
    t.labels.push_back(static_cast<PointLabel>(l));
  }
  t.surface_ids = j.at("surface_ids").get<std::vector<int>>();
  return t;
}

}  // namespace lam3c
