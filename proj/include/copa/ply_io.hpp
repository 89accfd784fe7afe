#pragma once

// PLY reader/writer for colored point clouds. Supports format ascii 1.0 and
// binary_little_endian 1.0 with vertex properties x,y,z (float32/float64)
// and red,green,blue (uint8). Unknown scalar vertex properties are skipped;
// non-vertex elements after the vertex block are ignored.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/point_cloud.hpp"

namespace copa {

namespace ply_detail {

enum class ScalarType { f32, f64, u8, i8, u16, i16, u32, i32 };

inline std::optional<ScalarType> parse_type(const std::string& t) {
  if (t == "float" || t == "float32") return ScalarType::f32;
  if (t == "double" || t == "float64") return ScalarType::f64;
  if (t == "uchar" || t == "uint8") return ScalarType::u8;
  if (t == "char" || t == "int8") return ScalarType::i8;
  if (t == "ushort" || t == "uint16") return ScalarType::u16;
  if (t == "short" || t == "int16") return ScalarType::i16;
  if (t == "uint" || t == "uint32") return ScalarType::u32;
  if (t == "int" || t == "int32") return ScalarType::i32;
  return std::nullopt;
}

inline std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::f64: return 8;
    case ScalarType::f32: case ScalarType::u32: case ScalarType::i32: return 4;
    case ScalarType::u16: case ScalarType::i16: return 2;
    default: return 1;
  }
}

inline double read_binary_scalar(std::istream& in, ScalarType t) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(type_size(t)));
  // Little-endian decode; host is assumed little-endian or the bytes are
  // assembled manually below, so this stays portable.
  auto u16 = [&] { return std::uint16_t(buf[0]) | std::uint16_t(buf[1]) << 8; };
  auto u32 = [&] {
    return std::uint32_t(buf[0]) | std::uint32_t(buf[1]) << 8 |
           std::uint32_t(buf[2]) << 16 | std::uint32_t(buf[3]) << 24;
  };
  auto u64 = [&] {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | buf[i];
    return v;
  };
  switch (t) {
    case ScalarType::f32: {
      const std::uint32_t v = u32();
      float f;
      std::memcpy(&f, &v, 4);
      return f;
    }
    case ScalarType::f64: {
      const std::uint64_t v = u64();
      double d;
      std::memcpy(&d, &v, 8);
      return d;
    }
    case ScalarType::u8: return buf[0];
    case ScalarType::i8: return static_cast<std::int8_t>(buf[0]);
    case ScalarType::u16: return u16();
    case ScalarType::i16: return static_cast<std::int16_t>(u16());
    case ScalarType::u32: return u32();
    case ScalarType::i32: return static_cast<std::int32_t>(u32());
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type;
};

}  // namespace ply_detail

// Loads a colored point cloud. Colors are rescaled from [0,255] to [0,1];
// point order is preserved.
inline PointCloud load_ply(const std::string& path) {
  using namespace ply_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_ply: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError("load_ply: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw FormatError("load_ply: not a PLY file (line \"" + line + "\")");

  bool binary = false;
  bool in_vertex_element = false;
  bool seen_format = false;
  std::size_t vertex_count = 0;
  std::vector<Property> vertex_props;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    auto bad = [&](const std::string& why) {
      return FormatError("load_ply: " + why + " at header line " +
                         std::to_string(line_no) + ": \"" + line + "\"");
    };
    if (word == "comment" || word.empty()) continue;
    if (word == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (ver != "1.0") throw bad("unsupported version");
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw bad("unsupported format \"" + fmt + "\"");
      seen_format = true;
    } else if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (!ls) throw bad("malformed element");
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) vertex_count = count;
    } else if (word == "property") {
      std::string type_word;
      ls >> type_word;
      if (type_word == "list") {
        if (in_vertex_element) throw bad("list property on vertex element unsupported");
        continue;
      }
      const auto type = parse_type(type_word);
      std::string name;
      ls >> name;
      if (!type || name.empty()) throw bad("malformed property");
      if (in_vertex_element) vertex_props.push_back({name, *type});
    } else if (word == "end_header") {
      break;
    } else {
      throw bad("unknown header keyword \"" + word + "\"");
    }
  }
  if (!seen_format) throw FormatError("load_ply: missing format line in " + path);

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (int i = 0; i < static_cast<int>(vertex_props.size()); ++i) {
    const auto& p = vertex_props[static_cast<std::size_t>(i)];
    if (p.name == "x") ix = i;
    else if (p.name == "y") iy = i;
    else if (p.name == "z") iz = i;
    else if (p.name == "red") ir = i;
    else if (p.name == "green") ig = i;
    else if (p.name == "blue") ib = i;
  }
  if (ix < 0 || iy < 0 || iz < 0)
    throw FormatError("load_ply: vertex element lacks x/y/z properties in " + path);
  if (ir < 0 || ig < 0 || ib < 0)
    throw FormatError("load_ply: vertex element lacks red/green/blue properties in " + path);
  if (vertex_count == 0) throw EmptyCloudError("load_ply: zero vertices in " + path);

  PointCloud cloud;
  cloud.positions.reserve(vertex_count);
  cloud.colors.reserve(vertex_count);
  const std::size_t nprops = vertex_props.size();
  std::vector<double> row(nprops);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (binary) {
      for (std::size_t p = 0; p < nprops; ++p)
        row[p] = read_binary_scalar(in, vertex_props[p].type);
      if (!in) throw FormatError("load_ply: truncated binary vertex data in " + path);
    } else {
      do {
        if (!std::getline(in, line))
          throw FormatError("load_ply: truncated ASCII vertex data in " + path);
        ++line_no;
      } while (line.find_first_not_of(" \t\r") == std::string::npos);
      std::istringstream ls(line);
      for (std::size_t p = 0; p < nprops; ++p) {
        if (!(ls >> row[p]))
          throw FormatError("load_ply: malformed vertex at line " +
                            std::to_string(line_no) + ": \"" + line + "\"");
      }
    }
    const Vec3 pos{row[static_cast<std::size_t>(ix)], row[static_cast<std::size_t>(iy)],
                   row[static_cast<std::size_t>(iz)]};
    const Vec3 col{row[static_cast<std::size_t>(ir)] / 255.0,
                   row[static_cast<std::size_t>(ig)] / 255.0,
                   row[static_cast<std::size_t>(ib)] / 255.0};
    cloud.add(pos, col);
  }
  validate(cloud);
  return cloud;
}

// Writes a cloud as PLY; colors quantized to 8 bits. Positions are stored
// as float64 so a save/load round trip only quantizes colors.
inline void save_ply(const PointCloud& cloud, const std::string& path, bool binary = false) {
  require_non_empty(cloud, "save_ply");
  validate(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_ply: cannot open " + path + " for writing");

  out << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";

  auto quantize = [](double c) {
    const int v = static_cast<int>(std::lround(c * 255.0));
    return static_cast<std::uint8_t>(std::min(255, std::max(0, v)));
  };
  out << std::setprecision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    const auto& c = cloud.colors[i];
    const std::uint8_t rgb[3] = {quantize(c[0]), quantize(c[1]), quantize(c[2])};
    if (binary) {
      out.write(reinterpret_cast<const char*>(p.data()), 24);
      out.write(reinterpret_cast<const char*>(rgb), 3);
    } else {
      out << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << int(rgb[0]) << ' ' << int(rgb[1])
          << ' ' << int(rgb[2]) << '\n';
    }
  }
  if (!out) throw IoError("save_ply: write failed for " + path);
}

}  // namespace copa
