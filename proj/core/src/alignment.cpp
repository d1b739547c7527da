#include "lam3c/alignment.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace lam3c {

Mat3 minimal_rotation(const Vec3& from, const Vec3& to) {
  const Vec3 a = from.normalized();
  const Vec3 b = to.normalized();
  const double c = a.dot(b);
  if (c < -1.0 + 1e-12) {
    // Half turn about an axis orthogonal to a.
    Vec3 axis = a.cross(Vec3::UnitX());
    if (axis.norm() < 1e-6) {
      axis = a.cross(Vec3::UnitY());
    }
    axis.normalize();
    return 2.0 * axis * axis.transpose() - Mat3::Identity();
  }
  const Vec3 v = a.cross(b);
  Mat3 vx;
  vx << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  Mat3 r = Mat3::Identity() + vx + vx * vx / (1.0 + c);
  // Re-orthonormalize against rounding.
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

namespace {

std::vector<Vec3> band_points(const PointCloud& cloud, double threshold, std::vector<std::size_t>* ids) {
  std::vector<Vec3> pts;
  ids->clear();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_valid(i) && std::abs(cloud.positions[i].z()) <= threshold) {
      pts.push_back(cloud.positions[i]);
      ids->push_back(i);
    }
  }
  return pts;
}

}  // namespace

ZUpResult align_z_up(const PointCloud& cloud, const Plane& plane, const ZUpOptions& options) {
  ZUpResult result;
  Vec3 n = plane.normal.normalized();
  double offset = plane.offset / plane.normal.norm();

  std::size_t above = 0;
  std::size_t below = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_valid(i)) {
      continue;
    }
    const double s = n.dot(cloud.positions[i]) - offset;
    if (s > 0.0) {
      ++above;
    } else if (s < 0.0) {
      ++below;
    }
  }
  if (below > above) {
    n = -n;
    offset = -offset;
    result.flipped = true;
  }

  RigidSimilarity t;
  t.rotation = minimal_rotation(n, Vec3::UnitZ());
  t.translation = Vec3(0.0, 0.0, -offset);
  PointCloud current = transform_cloud(cloud, t);

  std::vector<std::size_t> ids;
  std::vector<std::size_t> previous;
  for (int it = 0; it < options.max_refine_iterations; ++it) {
    const auto pts = band_points(current, options.refine_threshold, &ids);
    if (pts.size() < 3 || ids == previous) {
      break;
    }
    Plane fit = fit_plane(pts);
    if (fit.normal.z() < 0.0) {
      fit.normal = -fit.normal;
      fit.offset = -fit.offset;
    }
    RigidSimilarity correction;
    correction.rotation = minimal_rotation(fit.normal, Vec3::UnitZ());
    correction.translation = Vec3(0.0, 0.0, -fit.offset);
    current = transform_cloud(current, correction);
    t = correction.after(t);
    previous = ids;
    ++result.refine_iterations;
  }

  const auto final_pts = band_points(current, options.refine_threshold, &ids);
  if (final_pts.size() >= 3) {
    result.refined_plane = fit_plane(final_pts);
    result.refined_plane.inlier_count = final_pts.size();
    result.refined_plane.inlier_ratio =
        static_cast<double>(final_pts.size()) / static_cast<double>(std::max<std::size_t>(1, cloud.valid_count()));
  }
  result.cloud = std::move(current);
  result.transform = t;
  return result;
}

double aabb_diagonal(const PointCloud& cloud) {
  bool any = false;
  Vec3 lo;
  Vec3 hi;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_valid(i)) {
      continue;
    }
    if (!any) {
      lo = hi = cloud.positions[i];
      any = true;
    } else {
      lo = lo.cwiseMin(cloud.positions[i]);
      hi = hi.cwiseMax(cloud.positions[i]);
    }
  }
  if (!any) {
    throw EmptyCloudError("bounding box of an empty cloud");
  }
  return (hi - lo).norm();
}

ScaleResult scale_align(const PointCloud& cloud, double s_target, std::optional<Vec3> pivot) {
  if (!(s_target > 0.0)) {
    throw InvalidArgument("s_target must be positive");
  }
  const double current = aabb_diagonal(cloud);
  if (!(current > 0.0)) {
    throw DegenerateGeometryError("cannot scale a cloud with zero diagonal");
  }
  const Vec3 c = pivot.value_or(centroid(cloud));
  ScaleResult result;
  result.alpha = s_target / current;
  result.transform.scale = result.alpha;
  result.transform.translation = c - result.alpha * c;
  result.cloud = cloud;
  for (auto& p : result.cloud.positions) {
    p = c + result.alpha * (p - c);
  }
  return result;
}

}  // namespace lam3c
