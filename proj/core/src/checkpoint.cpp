#include "lam3c/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lam3c {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) {
      return &t;
    }
  }
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  json header;
  header["format"] = kCheckpointMagic;
  header["version"] = 1;
  header["metadata"] = checkpoint.metadata;
  json entries = json::array();
  std::string payload;
  for (const auto& t : checkpoint.tensors) {
    const std::size_t nbytes = static_cast<std::size_t>(t.values.size()) * sizeof(float);
    entries.push_back({{"name", t.name},
                       {"shape", {t.values.rows(), t.values.cols()}},
                       {"dtype", "float32"},
                       {"offset", payload.size()},
                       {"nbytes", nbytes}});
    for (Eigen::Index i = 0; i < t.values.size(); ++i) {
      const float f = static_cast<float>(t.values.data()[i]);
      char bytes[sizeof(float)];
      std::memcpy(bytes, &f, sizeof(float));
      payload.append(bytes, sizeof(float));
    }
  }
  header["tensors"] = std::move(entries);
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, kMagicLen);
  put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen + 8 || bytes.compare(0, kMagicLen, kCheckpointMagic) != 0) {
    throw IoError("not a LAM3C1 checkpoint");
  }
  const std::uint64_t header_len = get_u64(bytes, kMagicLen);
  const std::size_t data_start = kMagicLen + 8 + header_len;
  if (data_start > bytes.size()) {
    throw IoError("truncated checkpoint header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(kMagicLen + 8, header_len));
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  Checkpoint out;
  if (header.contains("metadata")) {
    out.metadata = header["metadata"].get<std::map<std::string, std::string>>();
  }
  for (const auto& entry : header.at("tensors")) {
    if (entry.at("dtype").get<std::string>() != "float32") {
      throw IoError("unsupported tensor dtype");
    }
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto nbytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
    if (data_start + offset + nbytes > bytes.size()) {
      throw IoError("truncated checkpoint payload");
    }
    NamedTensor t{entry.at("name").get<std::string>(), Matrix(rows, cols)};
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
      float f = 0.0F;
      std::memcpy(&f, bytes.data() + data_start + offset + static_cast<std::size_t>(i) * sizeof(float), sizeof(float));
      t.values.data()[i] = static_cast<double>(f);
    }
    out.tensors.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  const auto bytes = serialize_checkpoint(checkpoint);
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) {
    throw IoError("failed writing " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << file.rdbuf();
  return parse_checkpoint(ss.str());
}

void append_model(Checkpoint& checkpoint, const ModelParams& params, const std::string& prefix) {
  for_each_tensor(params, [&](const std::string& name, const Matrix& t) {
    checkpoint.tensors.push_back(NamedTensor{prefix + name, t});
  });
}

ModelParams model_from_checkpoint(const Checkpoint& checkpoint, const std::string& prefix) {
  auto get = [&](const std::string& name) -> const Matrix& {
    const auto* t = checkpoint.find(prefix + name);
    if (t == nullptr) {
      throw IoError("checkpoint lacks tensor " + prefix + name);
    }
    return t->values;
  };
  ModelParams params;
  for (std::size_t l = 0;; ++l) {
    const auto* w = checkpoint.find(prefix + "layer" + std::to_string(l) + ".weight");
    if (w == nullptr) {
      break;
    }
    params.encoder.layers.push_back(DenseLayer{w->values, get("layer" + std::to_string(l) + ".bias")});
  }
  if (params.encoder.layers.empty()) {
    throw IoError("checkpoint has no encoder layers under prefix '" + prefix + "'");
  }
  params.encoder.mask_token = get("mask_token");
  params.head.projection = get("prototypes");
  return params;
}

ModelParams quantize_to_float32(const ModelParams& params) {
  ModelParams out = params;
  for_each_tensor(out, [](const std::string&, Matrix& t) {
    t = t.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  });
  return out;
}

}  // namespace lam3c
