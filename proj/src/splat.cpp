#include "splatsim/splat.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "splatsim/error.hpp"

namespace splatsim {

static_assert(std::endian::native == std::endian::little,
              "splat PLY I/O assumes a little-endian host");

Mat3 GaussianKernel::covariance() const {
  const Mat3 r = rotation.normalized().toRotationMatrix();
  const Vec3 s = scale();
  return r * s.cwiseAbs2().asDiagonal() * r.transpose();
}

namespace {

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat, kDouble };

PlyType parse_type(const std::string& t) {
  static const std::unordered_map<std::string, PlyType> types = {
      {"char", PlyType::kInt8},     {"int8", PlyType::kInt8},
      {"uchar", PlyType::kUInt8},   {"uint8", PlyType::kUInt8},
      {"short", PlyType::kInt16},   {"int16", PlyType::kInt16},
      {"ushort", PlyType::kUInt16}, {"uint16", PlyType::kUInt16},
      {"int", PlyType::kInt32},     {"int32", PlyType::kInt32},
      {"uint", PlyType::kUInt32},   {"uint32", PlyType::kUInt32},
      {"float", PlyType::kFloat},   {"float32", PlyType::kFloat},
      {"double", PlyType::kDouble}, {"float64", PlyType::kDouble}};
  const auto it = types.find(t);
  if (it == types.end()) throw ParseError("unsupported PLY property type: " + t);
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUInt8: return 1;
    case PlyType::kInt16:
    case PlyType::kUInt16: return 2;
    case PlyType::kInt32:
    case PlyType::kUInt32:
    case PlyType::kFloat: return 4;
    case PlyType::kDouble: return 8;
  }
  return 0;
}

template <typename T>
T read_as(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

double read_value(const char* p, PlyType t) {
  switch (t) {
    case PlyType::kInt8: return read_as<std::int8_t>(p);
    case PlyType::kUInt8: return read_as<std::uint8_t>(p);
    case PlyType::kInt16: return read_as<std::int16_t>(p);
    case PlyType::kUInt16: return read_as<std::uint16_t>(p);
    case PlyType::kInt32: return read_as<std::int32_t>(p);
    case PlyType::kUInt32: return read_as<std::uint32_t>(p);
    case PlyType::kFloat: return read_as<float>(p);
    case PlyType::kDouble: return read_as<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type;
  std::size_t offset;
};

}  // namespace

GaussianSet load_splat_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open PLY file: " + path.string());

  std::string line;
  std::getline(in, line);
  if (line != "ply") throw ParseError(path.string() + ": missing 'ply' magic");

  std::size_t count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<Property> props;
  std::size_t stride = 0;
  bool format_ok = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") {
        throw ParseError(path.string() + ": only binary_little_endian PLY is supported");
      }
      format_ok = true;
    } else if (tag == "element") {
      std::string name;
      ls >> name;
      if (seen_vertex && !in_vertex) continue;
      if (name == "vertex") {
        ls >> count;
        in_vertex = true;
        seen_vertex = true;
      } else {
        if (seen_vertex) in_vertex = false;
        else throw ParseError(path.string() + ": vertex element must come first");
      }
    } else if (tag == "property" && in_vertex) {
      std::string type;
      std::string name;
      ls >> type;
      if (type == "list") throw ParseError(path.string() + ": list properties unsupported in vertex element");
      ls >> name;
      const PlyType t = parse_type(type);
      props.push_back({name, t, stride});
      stride += type_size(t);
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!format_ok) throw ParseError(path.string() + ": missing format line");

  auto find = [&](const std::string& name) -> const Property* {
    for (const auto& p : props) {
      if (p.name == name) return &p;
    }
    return nullptr;
  };
  auto require = [&](const std::string& name) -> const Property& {
    const Property* p = find(name);
    if (p == nullptr) {
      throw SchemaError(path.string() + ": missing required field '" + name + "'");
    }
    return *p;
  };

  const std::array<const char*, 14> required = {
      "x",       "y",       "z",       "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
      "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",  "rot_2",  "rot_3"};
  std::array<const Property*, 14> field{};
  for (std::size_t i = 0; i < 14; ++i) field[i] = &require(required[i]);
  const Property* label = find("label");

  std::vector<char> data(count * stride);
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size()) {
    throw ParseError(path.string() + ": truncated vertex data");
  }

  GaussianSet set;
  set.kernels.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const char* rec = data.data() + k * stride;
    std::array<double, 14> v{};
    for (std::size_t i = 0; i < 14; ++i) {
      v[i] = read_value(rec + field[i]->offset, field[i]->type);
      if (!std::isfinite(v[i])) {
        throw ParseError(path.string() + ": non-finite value in field '" +
                         field[i]->name + "' at element " + std::to_string(k));
      }
    }
    GaussianKernel& g = set.kernels[k];
    g.position = Vec3(v[0], v[1], v[2]);
    g.color_dc = Vec3(v[3], v[4], v[5]);
    g.opacity_logit = v[6];
    g.log_scale = Vec3(v[7], v[8], v[9]);
    g.rotation = Quat(v[10], v[11], v[12], v[13]);
    if (g.rotation.squaredNorm() == 0.0) {
      throw ParseError(path.string() + ": zero quaternion at element " + std::to_string(k));
    }
    if (label != nullptr) {
      g.label = static_cast<int>(read_value(rec + label->offset, label->type));
    }
  }
  return set;
}

void save_splat_ply(const GaussianSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write PLY file: " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << set.kernels.size() << "\n";
  for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2",
                           "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
                           "rot_1", "rot_2", "rot_3"}) {
    out << "property double " << name << "\n";
  }
  out << "property int label\nend_header\n";
  for (const GaussianKernel& g : set.kernels) {
    const std::array<double, 14> v = {
        g.position.x(), g.position.y(), g.position.z(), g.color_dc.x(),
        g.color_dc.y(), g.color_dc.z(), g.opacity_logit, g.log_scale.x(),
        g.log_scale.y(), g.log_scale.z(), g.rotation.w(), g.rotation.x(),
        g.rotation.y(), g.rotation.z()};
    out.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
    const std::int32_t label = g.label;
    out.write(reinterpret_cast<const char*>(&label), sizeof label);
  }
}

}  // namespace splatsim
