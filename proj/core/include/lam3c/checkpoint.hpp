#pragma once

#include "lam3c/model.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lam3c {

inline constexpr char kCheckpointMagic[] = "LAM3C1";

struct NamedTensor {
  std::string name;
  Matrix values;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> metadata;

  const NamedTensor* find(const std::string& name) const;
};

// Layout: the 6 magic bytes, a little-endian u64 header length, a JSON header
// listing {name, shape, dtype, offset, nbytes} per tensor, then the float32
// little-endian payload. Offsets are relative to the payload start.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& bytes);

// Tensors are named "<prefix><tensor>", e.g. "student.layer0.weight".
void append_model(Checkpoint& checkpoint, const ModelParams& params, const std::string& prefix);
ModelParams model_from_checkpoint(const Checkpoint& checkpoint, const std::string& prefix = "student.");

// Every value rounded to float32, i.e. exactly what a checkpoint stores.
ModelParams quantize_to_float32(const ModelParams& params);

}  // namespace lam3c
