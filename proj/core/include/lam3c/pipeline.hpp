#pragma once

#include "lam3c/alignment.hpp"
#include "lam3c/outliers.hpp"
#include "lam3c/plane.hpp"
#include "lam3c/point_cloud.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lam3c {

// Target diagonal: a fixed value, or a log-normal draw per scene.
struct ScaleTarget {
  std::optional<double> fixed;
  double median = 8.0;  // meters
  double log_std = 0.25;
};

struct AlignConfig {
  std::size_t downsample_points = 20000;  // 0 disables
  SorOptions sor;
  int ransac_iterations = 512;
  std::optional<double> ransac_threshold;  // default: 0.02 of the diagonal, capped at 0.05
  double min_inlier_ratio = 0.15;
  int refine_iterations = 10;
  ScaleTarget scale;
  int normal_k = 16;
  std::uint64_t seed = 0;

  void check() const;
};

struct SceneReport {
  std::string name;
  std::size_t input_points = 0;
  std::size_t downsampled_points = 0;
  std::size_t sor_removed = 0;
  bool sor_passthrough = false;
  bool plane_found = false;
  std::optional<double> angle_before_deg;  // detected plane normal vs +Z
  std::optional<double> angle_after_deg;   // refined plane normal vs +Z
  double rotation_deg = 0.0;
  double alpha = 1.0;
  double s_target = 0.0;
  double final_diagonal = 0.0;
  std::size_t degenerate_normals = 0;
  double wall_ms = 0.0;
  std::string error;  // non-empty for a failed scene

  bool ok() const { return error.empty(); }
  bool operator==(const SceneReport&) const = default;
};

struct PipelineReport {
  std::vector<SceneReport> rows;

  std::size_t failures() const;
  bool operator==(const PipelineReport&) const = default;
};

struct AlignOutput {
  PointCloud cloud;
  RigidSimilarity transform;  // input frame to output frame
  SceneReport report;
};

// Per-scene stream seed: depends on the config seed and the scene name only.
std::uint64_t scene_seed(std::uint64_t seed, const std::string& name);

PointCloud random_downsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed);

// downsample -> SOR -> dominant plane -> z-up -> scale -> normals. A missing
// plane leaves the orientation untouched. Scaling pivots on the centroid's
// xy at z = 0 so an aligned floor stays at z = 0.
AlignOutput align_scene(const PointCloud& input, const AlignConfig& config, const std::string& name);

// Every *.ply in `input_dir` (sorted by name) aligned into `output_dir`.
// Per-file failures become error rows; rows follow input order for any `jobs`.
PipelineReport cli_align(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                         const AlignConfig& config, int jobs = 1);

std::string report_to_csv(const PipelineReport& report);
PipelineReport report_from_csv(const std::string& text);
std::string report_to_json(const PipelineReport& report);
PipelineReport report_from_json(const std::string& text);

struct NamedCloud {
  std::string name;
  PointCloud cloud;
};

// Every *.ply in `dir`, sorted by file name.
std::vector<NamedCloud> load_ply_directory(const std::filesystem::path& dir);

// The cloud with PCA normals added when it has none.
PointCloud ensure_normals(const PointCloud& cloud, int k = 16);

// Projection of the rows of `embeddings` onto their top `components`
// principal directions, each sign-fixed so its largest-magnitude loading is positive.
Matrix pca_project(const Matrix& embeddings, int components = 3);

// Cloud recolored by the top-3 principal components of its embeddings,
// min-max scaled per channel; constant channels become 0.5.
PointCloud pca_colors(const PointCloud& cloud, const Matrix& embeddings);

}  // namespace lam3c
