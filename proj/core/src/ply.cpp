#include "lam3c/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace lam3c {

static_assert(std::endian::native == std::endian::little, "binary PLY support assumes a little-endian host");

namespace {

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

Scalar parse_scalar(const std::string& name) {
  static const std::map<std::string, Scalar> table = {
      {"char", Scalar::i8},    {"int8", Scalar::i8},     {"uchar", Scalar::u8},   {"uint8", Scalar::u8},
      {"short", Scalar::i16},  {"int16", Scalar::i16},   {"ushort", Scalar::u16}, {"uint16", Scalar::u16},
      {"int", Scalar::i32},    {"int32", Scalar::i32},   {"uint", Scalar::u32},   {"uint32", Scalar::u32},
      {"float", Scalar::f32},  {"float32", Scalar::f32}, {"double", Scalar::f64}, {"float64", Scalar::f64}};
  const auto it = table.find(name);
  if (it == table.end()) {
    throw IoError("unknown PLY scalar type '" + name + "'");
  }
  return it->second;
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::i8:
    case Scalar::u8:
      return 1;
    case Scalar::i16:
    case Scalar::u16:
      return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32:
      return 4;
    case Scalar::f64:
      return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  std::string type_name;
  Scalar type = Scalar::f32;
  bool is_list = false;
  Scalar count_type = Scalar::u8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos, bool binary) : bytes_(bytes), pos_(pos), binary_(binary) {
    if (!binary_) {
      stream_.str(bytes_.substr(pos_));
    }
  }

  double read(Scalar s) {
    if (!binary_) {
      std::string token;
      if (!(stream_ >> token)) {
        throw IoError("PLY body ended early");
      }
      try {
        return std::stod(token);
      } catch (const std::exception&) {
        throw IoError("bad PLY value '" + token + "'");
      }
    }
    const std::size_t n = scalar_size(s);
    if (pos_ + n > bytes_.size()) {
      throw IoError("PLY body ended early");
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    switch (s) {
      case Scalar::i8: return static_cast<double>(load<std::int8_t>(p));
      case Scalar::u8: return static_cast<double>(load<std::uint8_t>(p));
      case Scalar::i16: return static_cast<double>(load<std::int16_t>(p));
      case Scalar::u16: return static_cast<double>(load<std::uint16_t>(p));
      case Scalar::i32: return static_cast<double>(load<std::int32_t>(p));
      case Scalar::u32: return static_cast<double>(load<std::uint32_t>(p));
      case Scalar::f32: return static_cast<double>(load<float>(p));
      case Scalar::f64: return load<double>(p);
    }
    return 0.0;
  }

 private:
  template <typename T>
  static T load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
  }

  const std::string& bytes_;
  std::size_t pos_;
  bool binary_;
  std::istringstream stream_;
};

bool is_integer_type(Scalar s) { return s != Scalar::f32 && s != Scalar::f64; }

}  // namespace

PlyReadResult parse_ply(const std::string& bytes) {
  PlyReadResult result;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= bytes.size()) {
      throw IoError("PLY header not terminated");
    }
    const std::size_t end = bytes.find('\n', pos);
    const std::size_t stop = end == std::string::npos ? bytes.size() : end;
    std::string line = bytes.substr(pos, stop - pos);
    pos = end == std::string::npos ? bytes.size() : end + 1;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    return line;
  };

  if (next_line() != "ply") {
    throw IoError("missing 'ply' magic");
  }
  bool have_format = false;
  std::vector<Element> elements;
  while (true) {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string keyword;
    in >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") {
      continue;
    }
    if (keyword == "end_header") {
      break;
    }
    if (keyword == "format") {
      std::string fmt;
      in >> fmt;
      if (fmt == "ascii") {
        result.format = PlyFormat::ascii;
      } else if (fmt == "binary_little_endian") {
        result.format = PlyFormat::binary_little_endian;
      } else {
        throw IoError("unsupported PLY format '" + fmt + "'");
      }
      have_format = true;
    } else if (keyword == "element") {
      Element e;
      long long count = -1;
      in >> e.name >> count;
      if (!in || count < 0) {
        throw IoError("bad element line '" + line + "'");
      }
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) {
        throw IoError("property before any element");
      }
      Property p;
      std::string type;
      in >> type;
      if (type == "list") {
        std::string count_type;
        in >> count_type >> p.type_name >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(count_type);
      } else {
        p.type_name = type;
        in >> p.name;
      }
      if (!in) {
        throw IoError("bad property line '" + line + "'");
      }
      p.type = parse_scalar(p.type_name);
      elements.back().properties.push_back(std::move(p));
    } else {
      throw IoError("unknown PLY header keyword '" + keyword + "'");
    }
  }
  if (!have_format) {
    throw IoError("PLY header lacks a format line");
  }

  const auto vertex_it = std::find_if(elements.begin(), elements.end(), [](const Element& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) {
    throw IoError("PLY has no vertex element");
  }
  const Element& vertex = *vertex_it;
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < vertex.properties.size(); ++i) {
    if (vertex.properties[i].is_list) {
      throw IoError("list properties on vertices are not supported");
    }
    column[vertex.properties[i].name] = i;
  }
  for (const char* axis : {"x", "y", "z"}) {
    if (!column.contains(axis)) {
      throw IoError(std::string("PLY vertex lacks '") + axis + "'");
    }
  }
  const bool has_colors = column.contains("red") && column.contains("green") && column.contains("blue");
  const bool has_normals = column.contains("nx") && column.contains("ny") && column.contains("nz");
  result.position_type = vertex.properties[column["x"]].type == Scalar::f64 ? "double" : "float";

  std::vector<bool> known(vertex.properties.size(), false);
  for (const char* name : {"x", "y", "z"}) {
    known[column[name]] = true;
  }
  if (has_colors) {
    for (const char* name : {"red", "green", "blue"}) {
      known[column[name]] = true;
    }
  }
  if (has_normals) {
    for (const char* name : {"nx", "ny", "nz"}) {
      known[column[name]] = true;
    }
  }
  std::vector<std::size_t> extra_columns;
  for (std::size_t i = 0; i < vertex.properties.size(); ++i) {
    if (!known[i]) {
      extra_columns.push_back(i);
      result.cloud.extras.push_back(ExtraProperty{vertex.properties[i].name, vertex.properties[i].type_name, {}});
      result.warnings.push_back("unknown vertex property '" + vertex.properties[i].name + "' kept as extra");
    }
  }

  Reader reader(bytes, pos, result.format == PlyFormat::binary_little_endian);
  std::vector<double> row(vertex.properties.size());
  for (const Element& element : elements) {
    if (&element != &vertex) {
      if (&element > &vertex) {
        break;  // nothing after the vertices is needed
      }
      for (std::size_t r = 0; r < element.count; ++r) {
        for (const Property& p : element.properties) {
          if (p.is_list) {
            const double n = reader.read(p.count_type);
            for (long long c = 0; c < static_cast<long long>(n); ++c) {
              reader.read(p.type);
            }
          } else {
            reader.read(p.type);
          }
        }
      }
      if (element.count > 0) {
        result.warnings.push_back("skipped element '" + element.name + "'");
      }
      continue;
    }
    auto& cloud = result.cloud;
    cloud.positions.reserve(vertex.count);
    Positions colors;
    Positions normals;
    for (std::size_t r = 0; r < vertex.count; ++r) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] = reader.read(vertex.properties[c].type);
      }
      cloud.positions.emplace_back(row[column["x"]], row[column["y"]], row[column["z"]]);
      if (has_colors) {
        Vec3 rgb(row[column["red"]], row[column["green"]], row[column["blue"]]);
        if (is_integer_type(vertex.properties[column["red"]].type)) {
          rgb /= 255.0;
        }
        colors.push_back(rgb);
      }
      if (has_normals) {
        normals.emplace_back(row[column["nx"]], row[column["ny"]], row[column["nz"]]);
      }
      for (std::size_t e = 0; e < extra_columns.size(); ++e) {
        cloud.extras[e].values.push_back(row[extra_columns[e]]);
      }
    }
    if (has_colors) {
      cloud.colors = std::move(colors);
    }
    if (has_normals) {
      cloud.normals = std::move(normals);
    }
  }
  for (const auto& p : result.cloud.positions) {
    if (!p.allFinite()) {
      throw IoError("PLY contains non-finite coordinates");
    }
  }
  return result;
}

PlyReadResult read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_ply(buffer.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

std::uint8_t to_byte(double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); }

std::string format_real(double v, bool as_double) {
  char buf[64];
  if (as_double) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v)));
  }
  return buf;
}

}  // namespace

std::string serialize_ply(const PointCloud& cloud, const PlyWriteOptions& options, std::vector<std::string>* warnings) {
  if (options.position_type != "float" && options.position_type != "double") {
    throw InvalidArgument("position_type must be 'float' or 'double'");
  }
  const bool as_double = options.position_type == "double";
  const bool binary = options.format == PlyFormat::binary_little_endian;
  const auto indices = cloud.valid_indices();
  if (warnings != nullptr) {
    for (const auto& extra : cloud.extras) {
      warnings->push_back("dropped vertex property '" + extra.name + "' on write");
    }
  }

  std::string out = "ply\n";
  out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  out += "element vertex " + std::to_string(indices.size()) + "\n";
  for (const char* axis : {"x", "y", "z"}) {
    out += "property " + options.position_type + " " + axis + "\n";
  }
  if (cloud.colors) {
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  if (cloud.normals) {
    out += "property float nx\nproperty float ny\nproperty float nz\n";
  }
  out += "end_header\n";

  for (const auto i : indices) {
    const Vec3& p = cloud.positions[i];
    if (binary) {
      for (int a = 0; a < 3; ++a) {
        if (as_double) {
          put(out, p[a]);
        } else {
          put(out, static_cast<float>(p[a]));
        }
      }
      if (cloud.colors) {
        for (int a = 0; a < 3; ++a) {
          put(out, to_byte((*cloud.colors)[i][a]));
        }
      }
      if (cloud.normals) {
        for (int a = 0; a < 3; ++a) {
          put(out, static_cast<float>((*cloud.normals)[i][a]));
        }
      }
    } else {
      std::string line = format_real(p.x(), as_double) + " " + format_real(p.y(), as_double) + " " +
                         format_real(p.z(), as_double);
      if (cloud.colors) {
        for (int a = 0; a < 3; ++a) {
          line += " " + std::to_string(to_byte((*cloud.colors)[i][a]));
        }
      }
      if (cloud.normals) {
        for (int a = 0; a < 3; ++a) {
          line += " " + format_real((*cloud.normals)[i][a], false);
        }
      }
      out += line + "\n";
    }
  }
  return out;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud, const PlyWriteOptions& options,
               std::vector<std::string>* warnings) {
  const std::string bytes = serialize_ply(cloud, options, warnings);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

}  // namespace lam3c
