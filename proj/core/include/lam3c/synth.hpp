#pragma once

#include "lam3c/plane.hpp"
#include "lam3c/point_cloud.hpp"

#include <string>
#include <utility>

namespace lam3c {

enum class PointLabel : std::uint8_t { surface = 0, ghost = 1, outlier = 2 };

// Which generated surface a point came from.
enum SurfaceId : int { kOutlierSurface = -1, kFloor = 0, kWallXMin = 1, kWallXMax = 2, kWallYMin = 3,
                       kWallYMax = 4, kCeiling = 5, kFirstFurniture = 6 };

struct SceneSpec {
  Vec3 extents{5.0, 4.0, 2.6};  // room x, y, z in meters; z must be the smallest
  double density = 500.0;        // points per square meter
  double ceiling_coverage = 0.5; // fraction of the ceiling that is sampled
  int furniture_count = 4;
  Vec3 furniture_min_size{0.4, 0.4, 0.4};
  Vec3 furniture_max_size{1.6, 1.0, 1.0};
  double surface_noise = 0.005;

  std::size_t outlier_count = 0;
  double outlier_radius = 3.0;   // outliers lie 0.75 to outlier_radius room diagonals from the center

  double ghost_fraction = 0.0;   // of floor and wall points, duplicated
  double ghost_offset = 0.05;    // meters, along the inward surface normal

  int hole_count = 0;
  double hole_radius = 0.3;

  double tilt_deg = 0.0;         // about a random horizontal axis
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  std::size_t max_points = 20000;  // 0 keeps everything
  std::uint64_t seed = 0;

  void check() const;
};

struct GroundTruth {
  Plane floor;               // in the output frame
  Vec3 up = Vec3::UnitZ();   // true up axis in the output frame
  double diagonal = 0.0;     // AABB diagonal of the non-outlier points
  Mat3 tilt = Mat3::Identity();
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();
  std::vector<PointLabel> labels;
  std::vector<int> surface_ids;

  std::size_t count(PointLabel label) const;
};

// Floor, four walls, a partial ceiling and box furniture, with surface noise,
// ghost copies of floor/wall points, spherical holes and far outliers, then
// tilted, scaled and translated. Deterministic per spec.seed.
std::pair<PointCloud, GroundTruth> generate_room(const SceneSpec& spec);

// `base` with extents, furniture and tilt varied by `seed`; tilt is uniform in [0, max_tilt_deg].
SceneSpec sample_scene_spec(const SceneSpec& base, std::uint64_t seed, double max_tilt_deg);

std::string ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const std::string& text);

}  // namespace lam3c
