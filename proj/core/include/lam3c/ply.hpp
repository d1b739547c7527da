#pragma once

#include "lam3c/point_cloud.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lam3c {

enum class PlyFormat { ascii, binary_little_endian };

struct PlyReadResult {
  PointCloud cloud;
  PlyFormat format = PlyFormat::binary_little_endian;
  std::string position_type = "float";  // "float" or "double", as stored
  std::vector<std::string> warnings;
};

struct PlyWriteOptions {
  PlyFormat format = PlyFormat::binary_little_endian;
  std::string position_type = "float";
};

// Vertex x/y/z (float or double), optional red/green/blue (uchar, mapped to
// [0, 1]) and nx/ny/nz. Other vertex properties are kept as extras; other
// elements are skipped. Throws IoError on malformed input.
PlyReadResult parse_ply(const std::string& bytes);
PlyReadResult read_ply(const std::filesystem::path& path);

// Only valid points are written. Extras are dropped with a warning.
std::string serialize_ply(const PointCloud& cloud, const PlyWriteOptions& options = {},
                          std::vector<std::string>* warnings = nullptr);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud, const PlyWriteOptions& options = {},
               std::vector<std::string>* warnings = nullptr);

}  // namespace lam3c
