#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "artemis/error.hpp"
#include "artemis/ids.hpp"
#include "artemis/mesh.hpp"
#include "artemis/selection.hpp"
#include "artemis/time.hpp"

namespace artemis {

using Json = nlohmann::ordered_json;

enum class FieldKind { text, number, enumeration, date };

struct FieldEntry {
  std::string key;
  FieldKind kind = FieldKind::text;
  std::vector<std::string> allowed;  // enumeration only

  friend bool operator==(const FieldEntry&, const FieldEntry&) = default;
};

/// A user-defined record layout attached to annotations. Versioned so
/// existing annotations keep validating after the layout evolves.
struct FieldSchema {
  std::string name;
  int version = 1;
  std::vector<FieldEntry> entries;

  const FieldEntry* find(std::string_view key) const {
    for (const FieldEntry& e : entries) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  friend bool operator==(const FieldSchema&, const FieldSchema&) = default;
};

inline const FieldSchema& empty_schema() {
  static const FieldSchema kNone{"none", 1, {}};
  return kNone;
}

inline std::string_view to_string(FieldKind k) {
  switch (k) {
    case FieldKind::text: return "text";
    case FieldKind::number: return "number";
    case FieldKind::enumeration: return "enum";
    case FieldKind::date: return "date";
  }
  return "text";
}

inline void check_schema(const FieldSchema& s) {
  if (s.name.empty()) throw Error(ErrorCode::InvalidArgument, "schema name must not be empty");
  if (s.version < 1) throw Error(ErrorCode::InvalidArgument, "schema version must be >= 1");
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (s.entries[i].key == s.entries[j].key) {
        throw Error(ErrorCode::InvalidArgument, "duplicate schema key '" + s.entries[i].key + "'");
      }
    }
    if (s.entries[i].kind == FieldKind::enumeration && s.entries[i].allowed.empty()) {
      throw Error(ErrorCode::InvalidArgument, "enum key '" + s.entries[i].key + "' has no allowed values");
    }
  }
}

inline Json schema_to_json(const FieldSchema& s) {
  Json entries = Json::array();
  for (const FieldEntry& e : s.entries) {
    Json j{{"key", e.key}, {"kind", std::string(to_string(e.kind))}};
    if (e.kind == FieldKind::enumeration) j["values"] = e.allowed;
    entries.push_back(std::move(j));
  }
  return Json{{"name", s.name}, {"version", s.version}, {"entries", std::move(entries)}};
}

inline FieldSchema schema_from_json(const Json& j) {
  try {
    FieldSchema s;
    s.name = j.at("name").get<std::string>();
    s.version = j.value("version", 1);
    for (const Json& e : j.value("entries", Json::array())) {
      FieldEntry entry;
      entry.key = e.at("key").get<std::string>();
      const std::string kind = e.value("kind", "text");
      if (kind == "text") {
        entry.kind = FieldKind::text;
      } else if (kind == "number") {
        entry.kind = FieldKind::number;
      } else if (kind == "enum") {
        entry.kind = FieldKind::enumeration;
        entry.allowed = e.at("values").get<std::vector<std::string>>();
      } else if (kind == "date") {
        entry.kind = FieldKind::date;
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown field kind '" + kind + "'");
      }
      s.entries.push_back(std::move(entry));
    }
    check_schema(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed schema: ") + e.what());
  }
}

/// Schemas keyed by (name, version). Always holds the empty `none` v1 schema.
class SchemaRegistry {
 public:
  SchemaRegistry() { schemas_[{empty_schema().name, empty_schema().version}] = empty_schema(); }

  SchemaRegistry(const SchemaRegistry& other) {
    std::shared_lock lock(other.mutex_);
    schemas_ = other.schemas_;
  }

  void add(const FieldSchema& schema) {
    check_schema(schema);
    std::unique_lock lock(mutex_);
    schemas_[{schema.name, schema.version}] = schema;
  }

  std::optional<FieldSchema> find(const std::string& name, int version) const {
    std::shared_lock lock(mutex_);
    auto it = schemas_.find({name, version});
    if (it == schemas_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<FieldSchema> latest(const std::string& name) const {
    std::shared_lock lock(mutex_);
    std::optional<FieldSchema> out;
    for (const auto& [key, schema] : schemas_) {
      if (key.first == name) out = schema;
    }
    return out;
  }

  std::vector<FieldSchema> all() const {
    std::shared_lock lock(mutex_);
    std::vector<FieldSchema> out;
    for (const auto& [key, schema] : schemas_) out.push_back(schema);
    return out;
  }

  std::vector<FieldSchema> versions(const std::string& name) const {
    std::shared_lock lock(mutex_);
    std::vector<FieldSchema> out;
    for (const auto& [key, schema] : schemas_) {
      if (key.first == name) out.push_back(schema);
    }
    return out;
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, int>, FieldSchema> schemas_;
};

using FieldMap = std::vector<std::pair<std::string, std::string>>;

inline bool is_number_text(std::string_view s) {
  if (s.empty()) return false;
  double v = 0.0;
  std::string_view t = s;
  if (t.front() == '+') t.remove_prefix(1);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  return res.ec == std::errc() && res.ptr == t.data() + t.size() && std::isfinite(v);
}

/// Keys of `fields` that break the schema (unknown key, duplicate, wrong
/// kind, or enum value not allowed). Empty when the map conforms.
inline std::vector<std::string> schema_violations(const FieldMap& fields, const FieldSchema& schema) {
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto& [key, value] = fields[i];
    bool dup = false;
    for (std::size_t j = 0; j < i; ++j) dup = dup || fields[j].first == key;
    const FieldEntry* entry = schema.find(key);
    bool ok = !dup && entry != nullptr;
    if (ok) {
      switch (entry->kind) {
        case FieldKind::text: break;
        case FieldKind::number: ok = is_number_text(value); break;
        case FieldKind::enumeration:
          ok = std::find(entry->allowed.begin(), entry->allowed.end(), value) != entry->allowed.end();
          break;
        case FieldKind::date: ok = is_calendar_date(value); break;
      }
    }
    if (!ok && std::find(bad.begin(), bad.end(), key) == bad.end()) bad.push_back(key);
  }
  return bad;
}

inline void require_conforming(const FieldMap& fields, const FieldSchema& schema) {
  const auto bad = schema_violations(fields, schema);
  if (bad.empty()) return;
  std::string keys;
  for (const auto& k : bad) keys += (keys.empty() ? "" : ",") + k;
  throw Error(ErrorCode::SchemaViolation,
              "fields violate schema '" + schema.name + "' v" + std::to_string(schema.version) + ": " + keys, keys);
}

struct Color {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Color&, const Color&) = default;
};

/**
 * One annotated region: the selected faces and the vertices they touch
 * (central part) plus title, display color, and id (metadata part), and the
 * structured field map.
 */
struct AnnotationRecord {
  std::string id;  // UUID, no urn prefix
  std::string mesh_id;
  std::string title;
  Color color;
  SelectionSet roi;
  std::vector<std::uint32_t> derived_vertices;
  std::string description;
  FieldMap fields;
  std::string schema_name = "none";
  int schema_version = 1;
  Timestamp created_at{};
  Timestamp modified_at{};
  std::string creator;
  // Unrecognized top-level JSON-LD members carried through unchanged.
  std::map<std::string, Json> extensions;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct AnnotationInput {
  SelectionSet roi;
  std::string title;
  Color color;
  std::string description;
  FieldMap fields;
  std::string creator;
};

inline AnnotationRecord create_annotation(const TriangleMesh& mesh, const AnnotationInput& in,
                                          const FieldSchema& schema, Timestamp now = now_utc()) {
  if (in.roi.mesh_id != mesh.id) {
    throw Error(ErrorCode::UnknownMesh, "ROI refers to mesh '" + in.roi.mesh_id + "', not '" + mesh.id + "'");
  }
  if (in.roi.faces.empty()) throw Error(ErrorCode::EmptyROI, "ROI has no faces");
  for (std::uint32_t f : in.roi.faces) {
    if (f >= mesh.face_count()) {
      throw Error(ErrorCode::ValidationError, "ROI face " + std::to_string(f) + " out of range");
    }
  }
  require_conforming(in.fields, schema);
  AnnotationRecord r;
  r.id = uuid_v4();
  r.mesh_id = mesh.id;
  r.title = in.title;
  r.color = in.color;
  r.roi = SelectionSet::from_faces(mesh.id, in.roi.faces);
  r.derived_vertices = derive_vertices(mesh, r.roi.faces);
  r.description = in.description;
  r.fields = in.fields;
  r.schema_name = schema.name;
  r.schema_version = schema.version;
  r.created_at = now;
  r.modified_at = now;
  r.creator = in.creator;
  return r;
}

// Edits keep id and created_at; modified_at strictly increases.
inline AnnotationRecord touch(AnnotationRecord r, Timestamp now = now_utc()) {
  r.modified_at = std::max(now, r.modified_at + std::chrono::milliseconds(1));
  return r;
}

}  // namespace artemis
