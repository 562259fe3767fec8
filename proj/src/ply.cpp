#include "mrpriv/ply.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mrpriv {

namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

ScalarType parse_type(const std::string& t) {
  if (t == "char" || t == "int8") return ScalarType::Int8;
  if (t == "uchar" || t == "uint8") return ScalarType::UInt8;
  if (t == "short" || t == "int16") return ScalarType::Int16;
  if (t == "ushort" || t == "uint16") return ScalarType::UInt16;
  if (t == "int" || t == "int32") return ScalarType::Int32;
  if (t == "uint" || t == "uint32") return ScalarType::UInt32;
  if (t == "float" || t == "float32") return ScalarType::Float32;
  if (t == "double" || t == "float64") return ScalarType::Float64;
  throw PlyError("PLY: unknown property type '" + t + "'");
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::Float32;
  bool is_list = false;
  ScalarType count_type = ScalarType::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

enum class Encoding { Ascii, BinaryLE, BinaryBE };

template <typename T>
T read_raw(std::istream& in, bool swap) {
  std::array<char, sizeof(T)> buf{};
  in.read(buf.data(), sizeof(T));
  if (!in) throw PlyError("PLY: unexpected end of binary data");
  if (swap) std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

double read_binary_scalar(std::istream& in, ScalarType t, bool swap) {
  switch (t) {
    case ScalarType::Int8: return read_raw<std::int8_t>(in, swap);
    case ScalarType::UInt8: return read_raw<std::uint8_t>(in, swap);
    case ScalarType::Int16: return read_raw<std::int16_t>(in, swap);
    case ScalarType::UInt16: return read_raw<std::uint16_t>(in, swap);
    case ScalarType::Int32: return read_raw<std::int32_t>(in, swap);
    case ScalarType::UInt32: return read_raw<std::uint32_t>(in, swap);
    case ScalarType::Float32: return read_raw<float>(in, swap);
    case ScalarType::Float64: return read_raw<double>(in, swap);
  }
  return 0.0;
}

double read_ascii_scalar(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw PlyError("PLY: unexpected end of ASCII data");
  // strtod accepts nan/inf so they can be rejected as non-finite below.
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw PlyError("PLY: malformed number '" + tok + "'");
  return v;
}

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlyError("PLY: cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw PlyError("PLY: missing magic in " + path.string());

  Encoding encoding = Encoding::Ascii;
  bool have_format = false;
  std::vector<Element> elements;
  std::optional<int> file_label;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "comment") {
      std::string key;
      int label = 0;
      if (ls >> key >> label && key == "space_label") file_label = label;
      continue;
    }
    if (kw.empty() || kw == "obj_info") continue;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") encoding = Encoding::Ascii;
      else if (fmt == "binary_little_endian") encoding = Encoding::BinaryLE;
      else if (fmt == "binary_big_endian") encoding = Encoding::BinaryBE;
      else throw PlyError("PLY: unsupported format '" + fmt + "'");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw PlyError("PLY: malformed element line '" + line + "'");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) throw PlyError("PLY: property before element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_type(ct);
        p.type = parse_type(it);
      } else {
        ls >> p.name;
        p.type = parse_type(type);
      }
      if (p.name.empty()) throw PlyError("PLY: malformed property line '" + line + "'");
      elements.back().properties.push_back(std::move(p));
    } else if (kw == "end_header") {
      header_done = true;
      break;
    } else {
      throw PlyError("PLY: unexpected header line '" + line + "'");
    }
  }
  if (!header_done || !have_format) throw PlyError("PLY: incomplete header");

  const Element* vertex = nullptr;
  for (const auto& e : elements)
    if (e.name == "vertex") vertex = &e;
  if (vertex == nullptr) throw PlyError("PLY: no vertex element");
  if (vertex->count == 0) throw PlyError("PLY: empty vertex list");

  auto find_prop = [&](const char* name) -> int {
    for (std::size_t i = 0; i < vertex->properties.size(); ++i)
      if (vertex->properties[i].name == name && !vertex->properties[i].is_list)
        return static_cast<int>(i);
    return -1;
  };
  const std::array<int, 3> pos_idx{find_prop("x"), find_prop("y"), find_prop("z")};
  const std::array<int, 3> nrm_idx{find_prop("nx"), find_prop("ny"), find_prop("nz")};
  for (int i : pos_idx)
    if (i < 0) throw PlyError("PLY: vertex element lacks x/y/z");
  const bool has_normals = nrm_idx[0] >= 0 && nrm_idx[1] >= 0 && nrm_idx[2] >= 0;

  const bool swap = (encoding == Encoding::BinaryLE) != (std::endian::native == std::endian::little);
  auto read_scalar = [&](ScalarType t) {
    return encoding == Encoding::Ascii ? read_ascii_scalar(in) : read_binary_scalar(in, t, swap);
  };

  PointCloud cloud;
  cloud.has_normals = has_normals;
  cloud.label = file_label;
  std::vector<double> values;
  for (const auto& e : elements) {
    const bool is_vertex = &e == vertex;
    if (is_vertex) cloud.points.reserve(e.count);
    for (std::size_t n = 0; n < e.count; ++n) {
      values.assign(e.properties.size(), 0.0);
      for (std::size_t pi = 0; pi < e.properties.size(); ++pi) {
        const auto& p = e.properties[pi];
        if (p.is_list) {
          const double cnt = read_scalar(p.count_type);
          if (cnt < 0 || !std::isfinite(cnt)) throw PlyError("PLY: bad list length");
          for (std::size_t j = 0; j < static_cast<std::size_t>(cnt); ++j) read_scalar(p.type);
        } else {
          values[pi] = read_scalar(p.type);
        }
      }
      if (!is_vertex) continue;
      OrientedPoint pt;
      for (int a = 0; a < 3; ++a) pt.position[a] = values[static_cast<std::size_t>(pos_idx[a])];
      if (!pt.position.allFinite()) throw PlyError("PLY: non-finite vertex position");
      if (has_normals) {
        for (int a = 0; a < 3; ++a) pt.normal[a] = values[static_cast<std::size_t>(nrm_idx[a])];
        if (!pt.normal.allFinite()) throw PlyError("PLY: non-finite vertex normal");
      } else {
        pt.normal = Vec3::Zero();
      }
      cloud.points.push_back(pt);
    }
    if (is_vertex) break;  // trailing elements (faces etc.) are never used
  }

  if (has_normals) {
    // float32 storage keeps unit normals well within 1e-6; anything further off
    // is renormalized, and zero normals are flagged unreliable.
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      Vec3& n = cloud[i].normal;
      const double len = n.norm();
      if (len == 0.0) {
        if (cloud.unreliable.empty()) cloud.unreliable.assign(cloud.size(), 0);
        cloud.unreliable[i] = 1;
        n = Vec3::UnitZ();
      } else if (std::abs(len - 1.0) > 1e-6) {
        n /= len;
      }
    }
  }
  return cloud;
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyFormat format) {
  if (cloud.empty()) throw PreconditionError("save_ply: empty cloud");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PlyError("PLY: cannot write " + path.string());

  out << "ply\n"
      << (format == PlyFormat::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n");
  if (cloud.label) out << "comment space_label " << *cloud.label << "\n";
  out << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "end_header\n";

  auto values_of = [&](const OrientedPoint& p) {
    std::array<float, 6> v{};
    for (int a = 0; a < 3; ++a) {
      v[static_cast<std::size_t>(a)] = static_cast<float>(p.position[a]);
      v[static_cast<std::size_t>(a + 3)] = static_cast<float>(p.normal[a]);
    }
    return v;
  };
  const std::size_t nvals = cloud.has_normals ? 6 : 3;

  if (format == PlyFormat::Ascii) {
    out.precision(std::numeric_limits<float>::max_digits10);
    for (const auto& p : cloud.points) {
      const auto v = values_of(p);
      for (std::size_t i = 0; i < nvals; ++i) out << (i ? " " : "") << v[i];
      out << "\n";
    }
  } else {
    for (const auto& p : cloud.points) {
      const auto v = values_of(p);
      for (std::size_t i = 0; i < nvals; ++i) {
        std::array<char, 4> buf{};
        std::memcpy(buf.data(), &v[i], 4);
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
        out.write(buf.data(), 4);
      }
    }
  }
  if (!out) throw PlyError("PLY: write failed for " + path.string());
}

}  // namespace mrpriv
