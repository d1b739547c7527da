#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lam3c {

// Row-major so that one point / one sample occupies a contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using Positions = std::vector<Vec3>;
using Mask = std::vector<std::uint8_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too few (valid) points for the requested operation.
class EmptyCloudError : public Error {
 public:
  using Error::Error;
};

// Coincident, collinear or zero-extent input where a scale or direction is required.
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lam3c
