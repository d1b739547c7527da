#include "lam3c/point_cloud.hpp"

#include <algorithm>
#include <cmath>

namespace lam3c {

std::size_t PointCloud::valid_count() const {
  if (valid.empty()) {
    return positions.size();
  }
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

std::vector<std::size_t> PointCloud::valid_indices() const {
  std::vector<std::size_t> out;
  out.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (is_valid(i)) {
      out.push_back(i);
    }
  }
  return out;
}

void PointCloud::check_invariants() const {
  const auto n = positions.size();
  if (colors && colors->size() != n) {
    throw InvalidArgument("colors length does not match positions");
  }
  if (normals && normals->size() != n) {
    throw InvalidArgument("normals length does not match positions");
  }
  if (!valid.empty() && valid.size() != n) {
    throw InvalidArgument("validity mask length does not match positions");
  }
  for (const auto& extra : extras) {
    if (extra.values.size() != n) {
      throw InvalidArgument("extra property '" + extra.name + "' length does not match positions");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!positions[i].allFinite()) {
      throw InvalidArgument("non-finite position at index " + std::to_string(i));
    }
    if (normals && std::abs((*normals)[i].norm() - 1.0) > 1e-6) {
      throw InvalidArgument("non-unit normal at index " + std::to_string(i));
    }
    if (colors && ((*colors)[i].minCoeff() < 0.0 || (*colors)[i].maxCoeff() > 1.0)) {
      throw InvalidArgument("color outside [0,1] at index " + std::to_string(i));
    }
  }
}

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  PointCloud out;
  out.positions.reserve(indices.size());
  for (const auto i : indices) {
    out.positions.push_back(positions.at(i));
  }
  auto pick = [&](const Positions& src) {
    Positions dst;
    dst.reserve(indices.size());
    for (const auto i : indices) {
      dst.push_back(src[i]);
    }
    return dst;
  };
  if (colors) {
    out.colors = pick(*colors);
  }
  if (normals) {
    out.normals = pick(*normals);
  }
  if (!valid.empty()) {
    out.valid.reserve(indices.size());
    for (const auto i : indices) {
      out.valid.push_back(valid[i]);
    }
  }
  for (const auto& extra : extras) {
    ExtraProperty e{extra.name, extra.ply_type, {}};
    e.values.reserve(indices.size());
    for (const auto i : indices) {
      e.values.push_back(extra.values[i]);
    }
    out.extras.push_back(std::move(e));
  }
  return out;
}

PointCloud PointCloud::compacted() const {
  if (valid.empty()) {
    return *this;
  }
  const auto idx = valid_indices();
  PointCloud out = subset(idx);
  out.valid.clear();
  return out;
}

Vec3 centroid(const PointCloud& cloud) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_valid(i)) {
      sum += cloud.positions[i];
      ++n;
    }
  }
  if (n == 0) {
    throw EmptyCloudError("centroid of an empty cloud");
  }
  return sum / static_cast<double>(n);
}

RigidSimilarity RigidSimilarity::after(const RigidSimilarity& first) const {
  RigidSimilarity out;
  out.rotation = rotation * first.rotation;
  out.scale = scale * first.scale;
  out.translation = scale * (rotation * first.translation) + translation;
  return out;
}

RigidSimilarity RigidSimilarity::inverse() const {
  RigidSimilarity out;
  out.rotation = rotation.transpose();
  out.scale = 1.0 / scale;
  out.translation = -(out.scale * (out.rotation * translation));
  return out;
}

double RigidSimilarity::rotation_angle() const {
  const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

bool RigidSimilarity::is_valid(double tol) const {
  if (!(scale > 0.0) || !std::isfinite(scale) || !translation.allFinite()) {
    return false;
  }
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    return false;
  }
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidSimilarity& transform) {
  PointCloud out = cloud;
  for (auto& p : out.positions) {
    p = transform.apply(p);
  }
  if (out.normals) {
    for (auto& n : *out.normals) {
      n = (transform.rotation * n).normalized();
    }
  }
  return out;
}

}  // namespace lam3c
