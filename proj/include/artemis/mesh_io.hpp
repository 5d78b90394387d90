#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "artemis/error.hpp"
#include "artemis/mesh.hpp"

namespace artemis {

enum class MeshFormat { obj, ply };

inline std::string_view to_string(MeshFormat f) { return f == MeshFormat::obj ? "obj" : "ply"; }

inline std::optional<MeshFormat> parse_format(std::string_view s) {
  if (s == "obj" || s == "OBJ") return MeshFormat::obj;
  if (s == "ply" || s == "PLY") return MeshFormat::ply;
  return std::nullopt;
}

// PLY files start with the "ply" magic line; anything else is tried as OBJ
// unless the filename says otherwise.
inline MeshFormat infer_format(std::string_view bytes, std::string_view filename = {}) {
  if (bytes.size() >= 4 && bytes.substr(0, 3) == "ply" && (bytes[3] == '\n' || bytes[3] == '\r')) {
    return MeshFormat::ply;
  }
  if (const auto dot = filename.rfind('.'); dot != std::string_view::npos) {
    std::string ext(filename.substr(dot + 1));
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == "ply") return MeshFormat::ply;
  }
  return MeshFormat::obj;
}

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline bool parse_int(std::string_view tok, long long& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

[[noreturn]] inline void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what,
              "line=" + std::to_string(line));
}

struct Corner {
  long long position;
  long long uv;      // -1 when absent
  long long normal;  // -1 when absent
};

// Resolves corner attribute indices into per-vertex arrays. A position keeps
// its own slot for the first attribute combination seen; later disagreeing
// combinations get appended copies.
inline void assemble_vertices(TriangleMesh& mesh, const std::vector<Vec3>& raw_positions,
                              const std::vector<Vec2>& raw_uvs, const std::vector<Vec3>& raw_normals,
                              std::vector<Corner>& corners, const std::vector<std::uint32_t>& face_sizes) {
  const bool all_uv = !corners.empty() && std::all_of(corners.begin(), corners.end(),
                                                      [](const Corner& c) { return c.uv >= 0; });
  const bool all_n = !corners.empty() && std::all_of(corners.begin(), corners.end(),
                                                     [](const Corner& c) { return c.normal >= 0; });
  for (Corner& c : corners) {
    if (!all_uv) c.uv = -1;
    if (!all_n) c.normal = -1;
  }

  mesh.positions = raw_positions;
  std::vector<Vec2> uvs(all_uv ? raw_positions.size() : 0);
  std::vector<Vec3> normals(all_n ? raw_positions.size() : 0, Vec3{0, 0, 1});

  struct Slot {
    long long uv = -2;
    long long normal = -2;
  };
  std::vector<Slot> slots(raw_positions.size());
  struct KeyHash {
    std::size_t operator()(const std::array<long long, 3>& k) const {
      std::size_t h = std::hash<long long>{}(k[0]);
      h ^= std::hash<long long>{}(k[1]) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= std::hash<long long>{}(k[2]) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      return h;
    }
  };
  std::unordered_map<std::array<long long, 3>, std::uint32_t, KeyHash> extra;

  std::vector<std::uint32_t> corner_vertex(corners.size());
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const Corner& c = corners[i];
    Slot& slot = slots[static_cast<std::size_t>(c.position)];
    if (slot.uv == -2) {
      slot.uv = c.uv;
      slot.normal = c.normal;
      if (all_uv) uvs[c.position] = raw_uvs[c.uv];
      if (all_n) normals[c.position] = normalized(raw_normals[c.normal]);
      corner_vertex[i] = static_cast<std::uint32_t>(c.position);
    } else if (slot.uv == c.uv && slot.normal == c.normal) {
      corner_vertex[i] = static_cast<std::uint32_t>(c.position);
    } else {
      const std::array<long long, 3> key{c.position, c.uv, c.normal};
      auto [it, inserted] = extra.try_emplace(key, static_cast<std::uint32_t>(mesh.positions.size()));
      if (inserted) {
        mesh.positions.push_back(raw_positions[c.position]);
        if (all_uv) uvs.push_back(raw_uvs[c.uv]);
        if (all_n) normals.push_back(normalized(raw_normals[c.normal]));
      }
      corner_vertex[i] = it->second;
    }
  }

  std::size_t base = 0;
  for (std::uint32_t n : face_sizes) {
    for (std::uint32_t k = 1; k + 1 < n; ++k) {
      mesh.faces.push_back({corner_vertex[base], corner_vertex[base + k], corner_vertex[base + k + 1]});
    }
    base += n;
  }
  if (all_uv) mesh.uvs = std::move(uvs);
  if (all_n) {
    for (Vec3& n : normals) {
      if (length(n) == 0.0) n = {0, 0, 1};
    }
    mesh.normals = std::move(normals);
  }
}

inline TriangleMesh parse_obj(std::string_view text) {
  TriangleMesh mesh;
  std::vector<Vec3> positions;
  std::vector<Vec2> uvs;
  std::vector<Vec3> normals;
  std::vector<Corner> corners;
  std::vector<std::uint32_t> face_sizes;
  std::string mtllib;
  std::string material;

  auto resolve = [](long long idx, std::size_t count, std::size_t line, const char* what) -> long long {
    long long r = idx > 0 ? idx - 1 : static_cast<long long>(count) + idx;
    if (idx == 0 || r < 0 || r >= static_cast<long long>(count)) {
      throw Error(ErrorCode::IndexError,
                  "line " + std::to_string(line) + ": " + what + " index " + std::to_string(idx) +
                      " out of range (" + std::to_string(count) + " defined)",
                  "line=" + std::to_string(line));
    }
    return r;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::string_view kw = tok[0];
    if (kw == "v") {
      if (tok.size() < 4) parse_fail(line_no, "vertex needs 3 coordinates");
      Vec3 p;
      if (!parse_double(tok[1], p.x) || !parse_double(tok[2], p.y) || !parse_double(tok[3], p.z)) {
        parse_fail(line_no, "malformed vertex coordinate");
      }
      positions.push_back(p);
    } else if (kw == "vt") {
      if (tok.size() < 2) parse_fail(line_no, "texture coordinate needs at least 1 value");
      Vec2 t;
      if (!parse_double(tok[1], t.x) || (tok.size() > 2 && !parse_double(tok[2], t.y))) {
        parse_fail(line_no, "malformed texture coordinate");
      }
      uvs.push_back(t);
    } else if (kw == "vn") {
      if (tok.size() < 4) parse_fail(line_no, "normal needs 3 components");
      Vec3 n;
      if (!parse_double(tok[1], n.x) || !parse_double(tok[2], n.y) || !parse_double(tok[3], n.z)) {
        parse_fail(line_no, "malformed normal");
      }
      normals.push_back(n);
    } else if (kw == "f") {
      if (tok.size() < 4) parse_fail(line_no, "face needs at least 3 vertices");
      for (std::size_t i = 1; i < tok.size(); ++i) {
        std::string_view ref = tok[i];
        std::string_view parts[3];
        int nparts = 0;
        std::size_t start = 0;
        for (std::size_t k = 0; k <= ref.size(); ++k) {
          if (k == ref.size() || ref[k] == '/') {
            if (nparts == 3) parse_fail(line_no, "malformed face corner '" + std::string(ref) + "'");
            parts[nparts++] = ref.substr(start, k - start);
            start = k + 1;
          }
        }
        Corner c{-1, -1, -1};
        long long v = 0;
        if (!parse_int(parts[0], v)) parse_fail(line_no, "malformed face corner '" + std::string(ref) + "'");
        c.position = resolve(v, positions.size(), line_no, "vertex");
        if (nparts > 1 && !parts[1].empty()) {
          if (!parse_int(parts[1], v)) parse_fail(line_no, "malformed texture index");
          c.uv = resolve(v, uvs.size(), line_no, "texture");
        }
        if (nparts > 2 && !parts[2].empty()) {
          if (!parse_int(parts[2], v)) parse_fail(line_no, "malformed normal index");
          c.normal = resolve(v, normals.size(), line_no, "normal");
        }
        corners.push_back(c);
      }
      face_sizes.push_back(static_cast<std::uint32_t>(tok.size() - 1));
    } else if (kw == "mtllib") {
      if (mtllib.empty() && tok.size() > 1) mtllib = std::string(tok[1]);
    } else if (kw == "usemtl") {
      if (material.empty() && tok.size() > 1) material = std::string(tok[1]);
    } else if (kw == "o" || kw == "g") {
      if (mesh.name.empty() && tok.size() > 1) mesh.name = std::string(tok[1]);
    }
    // s, l, p, and vendor extensions are ignored.
    if (end == text.size()) break;
  }

  if (face_sizes.empty()) throw Error(ErrorCode::EmptyMesh, "OBJ contains no faces");
  assemble_vertices(mesh, positions, uvs, normals, corners, face_sizes);
  if (!mtllib.empty() || !material.empty()) {
    mesh.texture_ref = material.empty() ? mtllib : mtllib + "#" + material;
  }
  return mesh;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::optional<PlyType> ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8: case PlyType::u8: return 1;
    case PlyType::i16: case PlyType::u16: return 2;
    case PlyType::i32: case PlyType::u32: case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Little-endian binary cursor.
class PlyBinaryReader {
 public:
  PlyBinaryReader(std::string_view data, std::size_t offset) : data_(data), offset_(offset) {}

  double read(PlyType t) {
    const std::size_t n = ply_size(t);
    if (offset_ + n > data_.size()) {
      throw Error(ErrorCode::ParseError, "binary PLY truncated at byte " + std::to_string(offset_),
                  "offset=" + std::to_string(offset_));
    }
    const char* p = data_.data() + offset_;
    offset_ += n;
    switch (t) {
      case PlyType::i8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
      case PlyType::u8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
      case PlyType::i16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
      case PlyType::u16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
      case PlyType::i32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
      case PlyType::u32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
      case PlyType::f32: { float v; std::memcpy(&v, p, 4); return v; }
      case PlyType::f64: { double v; std::memcpy(&v, p, 8); return v; }
    }
    return 0.0;
  }

 private:
  std::string_view data_;
  std::size_t offset_;
};

// Whitespace token cursor over the ASCII body, tracking line numbers.
class PlyAsciiReader {
 public:
  PlyAsciiReader(std::string_view data, std::size_t offset, std::size_t line)
      : data_(data), offset_(offset), line_(line) {}

  double read() {
    while (offset_ < data_.size() && (is_space(data_[offset_]) || data_[offset_] == '\n')) {
      if (data_[offset_] == '\n') ++line_;
      ++offset_;
    }
    std::size_t end = offset_;
    while (end < data_.size() && !is_space(data_[end]) && data_[end] != '\n') ++end;
    if (end == offset_) parse_fail(line_, "unexpected end of PLY data");
    double v = 0.0;
    if (!parse_double(data_.substr(offset_, end - offset_), v)) {
      parse_fail(line_, "malformed PLY value '" + std::string(data_.substr(offset_, end - offset_)) + "'");
    }
    offset_ = end;
    return v;
  }

  std::size_t line() const { return line_; }

 private:
  std::string_view data_;
  std::size_t offset_;
  std::size_t line_;
};

inline TriangleMesh parse_ply(std::string_view bytes, std::vector<std::string>* warnings) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= bytes.size()) parse_fail(line_no + 1, "PLY header not terminated by end_header");
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) end = bytes.size();
    std::string_view line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = std::min(bytes.size(), end + 1);
    ++line_no;
    return line;
  };

  if (next_line() != "ply") parse_fail(1, "missing 'ply' magic");
  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string_view line = next_line();
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) parse_fail(line_no, "malformed format line");
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        parse_fail(line_no, "unsupported PLY format '" + std::string(tok[1]) + "'");
      }
    } else if (tok[0] == "element") {
      long long count = 0;
      if (tok.size() != 3 || !parse_int(tok[2], count) || count < 0) {
        parse_fail(line_no, "malformed element line");
      }
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) parse_fail(line_no, "property before any element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = ply_type(tok[2]);
        const auto it = ply_type(tok[3]);
        if (!ct || !it) parse_fail(line_no, "unknown PLY list type");
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *it;
        prop.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        const auto t = ply_type(tok[1]);
        if (!t) parse_fail(line_no, "unknown PLY type '" + std::string(tok[1]) + "'");
        prop.type = *t;
        prop.name = std::string(tok[2]);
      } else {
        parse_fail(line_no, "malformed property line");
      }
      elements.back().properties.push_back(std::move(prop));
    } else {
      parse_fail(line_no, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }

  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<Vec2> uvs;
  std::vector<Corner> corners;
  std::vector<std::uint32_t> face_sizes;
  bool has_normals = false;
  bool has_uvs = false;

  PlyBinaryReader bin(bytes, pos);
  PlyAsciiReader ascii(bytes, pos, line_no);
  auto read_value = [&](PlyType t) { return binary ? bin.read(t) : ascii.read(); };

  for (const PlyElement& el : elements) {
    if (el.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, iu = -1, iv = -1;
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        const std::string& n = el.properties[k].name;
        const int ki = static_cast<int>(k);
        if (n == "x") ix = ki;
        else if (n == "y") iy = ki;
        else if (n == "z") iz = ki;
        else if (n == "nx") inx = ki;
        else if (n == "ny") iny = ki;
        else if (n == "nz") inz = ki;
        else if (n == "u" || n == "s" || n == "texture_u") iu = ki;
        else if (n == "v" || n == "t" || n == "texture_v") iv = ki;
      }
      if (ix < 0 || iy < 0 || iz < 0) parse_fail(line_no, "vertex element lacks x/y/z");
      has_normals = inx >= 0 && iny >= 0 && inz >= 0;
      has_uvs = iu >= 0 && iv >= 0;
      std::vector<double> row(el.properties.size());
      for (std::size_t i = 0; i < el.count; ++i) {
        for (std::size_t k = 0; k < el.properties.size(); ++k) {
          const PlyProperty& p = el.properties[k];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(read_value(p.count_type));
            for (std::size_t j = 0; j < n; ++j) read_value(p.type);
            row[k] = 0.0;
          } else {
            row[k] = read_value(p.type);
          }
        }
        positions.push_back({row[ix], row[iy], row[iz]});
        if (has_normals) normals.push_back({row[inx], row[iny], row[inz]});
        if (has_uvs) uvs.push_back({row[iu], row[iv]});
      }
    } else if (el.name == "face") {
      int list_idx = -1;
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        const PlyProperty& p = el.properties[k];
        if (p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index")) {
          list_idx = static_cast<int>(k);
        }
      }
      if (list_idx < 0) parse_fail(line_no, "face element lacks vertex_indices");
      for (std::size_t i = 0; i < el.count; ++i) {
        for (std::size_t k = 0; k < el.properties.size(); ++k) {
          const PlyProperty& p = el.properties[k];
          if (!p.is_list) {
            read_value(p.type);
            continue;
          }
          const double raw_n = read_value(p.count_type);
          if (raw_n < 0) parse_fail(binary ? line_no : ascii.line(), "negative list length");
          const auto n = static_cast<std::size_t>(raw_n);
          if (static_cast<int>(k) != list_idx) {
            for (std::size_t j = 0; j < n; ++j) read_value(p.type);
            continue;
          }
          if (n < 3) parse_fail(binary ? line_no : ascii.line(), "face with fewer than 3 vertices");
          for (std::size_t j = 0; j < n; ++j) {
            const double raw = read_value(p.type);
            if (raw < 0 || raw >= static_cast<double>(positions.size()) || raw != std::floor(raw)) {
              throw Error(ErrorCode::IndexError,
                          "face " + std::to_string(i) + " references missing vertex " +
                              std::to_string(static_cast<long long>(raw)));
            }
            const auto vi = static_cast<long long>(raw);
            corners.push_back({vi, -1, -1});
          }
          face_sizes.push_back(static_cast<std::uint32_t>(n));
        }
      }
    } else {
      if (warnings) warnings->push_back("ignored PLY element '" + el.name + "'");
      for (std::size_t i = 0; i < el.count; ++i) {
        for (const PlyProperty& p : el.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(read_value(p.count_type));
            for (std::size_t j = 0; j < n; ++j) read_value(p.type);
          } else {
            read_value(p.type);
          }
        }
      }
    }
  }

  if (face_sizes.empty()) throw Error(ErrorCode::EmptyMesh, "PLY contains no faces");
  TriangleMesh mesh;
  // PLY attributes are already per-vertex, so no corner splitting happens.
  assemble_vertices(mesh, positions, uvs, normals, corners, face_sizes);
  if (has_normals) {
    std::vector<Vec3> n(positions.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
      n[i] = normalized(normals[i]);
      if (length(n[i]) == 0.0) n[i] = {0, 0, 1};
    }
    mesh.normals = std::move(n);
  }
  if (has_uvs) mesh.uvs = uvs;
  return mesh;
}

}  // namespace detail

/**
 * Parses OBJ or PLY bytes into a validated TriangleMesh.
 *
 * Polygons are fan-triangulated from their first corner. Throws ParseError
 * (with line or byte offset), IndexError, or EmptyMesh.
 */
inline TriangleMesh load_mesh(std::string_view bytes, MeshFormat format,
                              std::vector<std::string>* warnings = nullptr) {
  if (bytes.empty()) throw Error(ErrorCode::ParseError, "empty input");
  TriangleMesh mesh = format == MeshFormat::obj ? detail::parse_obj(bytes) : detail::parse_ply(bytes, warnings);
  validate(mesh);
  return mesh;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TriangleMesh load_mesh_file(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  const std::string bytes = read_file_bytes(path);
  TriangleMesh mesh = load_mesh(bytes, infer_format(bytes, path), warnings);
  if (mesh.name.empty()) {
    const auto slash = path.find_last_of("/\\");
    mesh.name = slash == std::string::npos ? path : path.substr(slash + 1);
  }
  return mesh;
}

/// Positions and faces only, `%.9g` coordinates, 1-based indices.
inline std::string export_obj(const TriangleMesh& mesh) {
  std::string out;
  out.reserve(mesh.positions.size() * 40 + mesh.faces.size() * 24);
  char buf[128];
  for (const Vec3& p : mesh.positions) {
    const int n = std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x, p.y, p.z);
    out.append(buf, static_cast<std::size_t>(n));
  }
  for (const Face& f : mesh.faces) {
    const int n = std::snprintf(buf, sizeof buf, "f %u %u %u\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

}  // namespace artemis
