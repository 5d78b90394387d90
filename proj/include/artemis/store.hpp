#pragma once

// On-disk annotation store.
//
//   <root>/models/<id>/mesh.(obj|ply)              original upload bytes; id = SHA-256 of them
//   <root>/models/<id>/meta.json                   ModelEntry
//   <root>/models/<id>/annotations/<uuid>.jsonld   one WADM document per annotation
//   <root>/models/<id>/heatmaps/<detector>.json    cached detector response
//   <root>/schemas/<name>.json                     all versions of one field schema
//   <root>/detectors.json                          remote detector registry
//
// Every file is written to a hidden temporary next to its target and
// renamed into place, so readers only ever observe complete documents.
// Leftover temporaries from an interrupted write are removed on open.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "artemis/annotation.hpp"
#include "artemis/bvh.hpp"
#include "artemis/detector.hpp"
#include "artemis/error.hpp"
#include "artemis/gesture.hpp"
#include "artemis/heatmap.hpp"
#include "artemis/ids.hpp"
#include "artemis/mesh.hpp"
#include "artemis/mesh_io.hpp"
#include "artemis/time.hpp"
#include "artemis/wadm.hpp"

namespace artemis {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Atomic file writes

/// Called between writing a temporary and renaming it over the target.
/// Tests install a throwing hook to simulate a crash at that point.
using WriteFaultHook = std::function<void(const fs::path& temp, const fs::path& target)>;

inline WriteFaultHook& write_fault_hook() {
  static WriteFaultHook hook;
  return hook;
}

inline bool is_temp_name(const std::string& filename) {
  return filename.size() > 1 && filename[0] == '.' && filename.find(".tmp-") != std::string::npos;
}

inline void atomic_write(const fs::path& target, std::string_view bytes) {
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + target.parent_path().string() + "': " + ec.message());
  const fs::path temp = target.parent_path() / ("." + target.filename().string() + ".tmp-" + uuid_v4().substr(0, 8));
  const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot write '" + temp.string() + "'");
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fs::remove(temp, ec);
      throw Error(ErrorCode::IoError, "write to '" + temp.string() + "' failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    fs::remove(temp, ec);
    throw Error(ErrorCode::IoError, "cannot flush '" + temp.string() + "'");
  }
  if (const auto& hook = write_fault_hook()) hook(temp, target);
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw Error(ErrorCode::IoError, "cannot move '" + temp.string() + "' into place");
  }
}

inline std::string read_text(const fs::path& p) { return read_file_bytes(p.string()); }

// ---------------------------------------------------------------------------
// Model metadata

struct ModelEntry {
  std::string model_id;
  std::string source_name;
  MeshFormat format = MeshFormat::obj;
  std::size_t face_count = 0;
  std::size_t vertex_count = 0;
  AABB bounds;
  std::optional<std::string> texture_ref;
  Timestamp uploaded_at{};

  friend bool operator==(const ModelEntry& a, const ModelEntry& b) {
    return a.model_id == b.model_id && a.source_name == b.source_name && a.format == b.format &&
           a.face_count == b.face_count && a.vertex_count == b.vertex_count && a.bounds.min == b.bounds.min &&
           a.bounds.max == b.bounds.max && a.texture_ref == b.texture_ref && a.uploaded_at == b.uploaded_at;
  }
};

inline Json to_json(const ModelEntry& e) {
  auto v = [](const Vec3& p) { return Json::array({p.x, p.y, p.z}); };
  Json j;
  j["model_id"] = e.model_id;
  j["name"] = e.source_name;
  j["format"] = std::string(to_string(e.format));
  j["face_count"] = e.face_count;
  j["vertex_count"] = e.vertex_count;
  j["bounding_box"] = {{"min", v(e.bounds.min)}, {"max", v(e.bounds.max)}};
  j["texture"] = e.texture_ref ? Json(*e.texture_ref) : Json(nullptr);
  j["uploaded_at"] = format_rfc3339(e.uploaded_at);
  return j;
}

inline ModelEntry model_entry_from_json(const Json& j) {
  try {
    auto v = [](const Json& a) { return Vec3{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; };
    ModelEntry e;
    e.model_id = j.at("model_id").get<std::string>();
    e.source_name = j.at("name").get<std::string>();
    e.format = parse_format(j.at("format").get<std::string>()).value_or(MeshFormat::obj);
    e.face_count = j.at("face_count").get<std::size_t>();
    e.vertex_count = j.at("vertex_count").get<std::size_t>();
    e.bounds.min = v(j.at("bounding_box").at("min"));
    e.bounds.max = v(j.at("bounding_box").at("max"));
    if (j.contains("texture") && j["texture"].is_string()) e.texture_ref = j["texture"].get<std::string>();
    const auto ts = parse_rfc3339(j.at("uploaded_at").get<std::string>());
    if (!ts) throw Error(ErrorCode::IoError, "bad uploaded_at in model metadata");
    e.uploaded_at = *ts;
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::IoError, std::string("corrupt model metadata: ") + ex.what());
  }
}

inline bool is_model_id(std::string_view s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

inline bool is_safe_name(std::string_view s) {
  return !s.empty() && s.size() <= 128 && s != "." && s != ".." && s[0] != '.' &&
         std::all_of(s.begin(), s.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
         });
}

// ---------------------------------------------------------------------------
// Annotation payloads

/// Client-supplied annotation content. Absent members keep their current
/// value on update and take defaults on create.
struct AnnotationPatch {
  std::optional<std::vector<std::uint32_t>> faces;
  std::optional<std::string> title;
  std::optional<Color> color;
  std::optional<std::string> description;
  std::optional<FieldMap> fields;
  std::optional<std::string> schema_name;
  std::optional<int> schema_version;
  std::optional<std::string> creator;
};

inline constexpr Color kDefaultColor{255, 96, 0};

inline Color parse_color(const Json& j, const std::string& path) {
  auto channel = [&](const Json& c, const std::string& p) {
    if (!c.is_number_integer() || c.get<long long>() < 0 || c.get<long long>() > 255) {
      throw Error(ErrorCode::ValidationError, p + ": color channel must be an integer in 0..255", p);
    }
    return static_cast<std::uint8_t>(c.get<int>());
  };
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s.size() == 7 && s[0] == '#' &&
        std::all_of(s.begin() + 1, s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
      auto hex = [&](std::size_t i) { return static_cast<std::uint8_t>(std::stoi(s.substr(i, 2), nullptr, 16)); };
      return {hex(1), hex(3), hex(5)};
    }
  } else if (j.is_array() && j.size() == 3) {
    return {channel(j[0], path + "[0]"), channel(j[1], path + "[1]"), channel(j[2], path + "[2]")};
  } else if (j.is_object() && j.contains("r") && j.contains("g") && j.contains("b")) {
    return {channel(j["r"], path + ".r"), channel(j["g"], path + ".g"), channel(j["b"], path + ".b")};
  }
  throw Error(ErrorCode::ValidationError, path + ": color must be \"#rrggbb\", [r,g,b] or {r,g,b}", path);
}

inline std::string color_hex(const Color& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

inline AnnotationPatch annotation_patch_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ValidationError, "annotation payload must be a JSON object", "$");
  auto text = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) {
      throw Error(ErrorCode::ValidationError, std::string("$.") + key + " must be a string", std::string("$.") + key);
    }
    return j[key].get<std::string>();
  };
  AnnotationPatch p;
  if (j.contains("faces")) {
    const Json& f = j["faces"];
    if (!f.is_array()) throw Error(ErrorCode::ValidationError, "$.faces must be an array", "$.faces");
    std::vector<std::uint32_t> faces;
    for (const Json& v : f) {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xFFFFFFFFu) {
        throw Error(ErrorCode::ValidationError, "$.faces entries must be face indices", "$.faces");
      }
      faces.push_back(v.get<std::uint32_t>());
    }
    p.faces = std::move(faces);
  }
  p.title = text("title");
  p.description = text("description");
  p.creator = text("creator");
  if (j.contains("color")) p.color = parse_color(j["color"], "$.color");
  if (j.contains("fields")) {
    const Json& f = j["fields"];
    if (!f.is_object()) throw Error(ErrorCode::ValidationError, "$.fields must be an object", "$.fields");
    FieldMap fields;
    for (const auto& [k, v] : f.items()) {
      if (v.is_string()) {
        fields.emplace_back(k, v.get<std::string>());
      } else if (v.is_number()) {
        fields.emplace_back(k, v.dump());
      } else {
        throw Error(ErrorCode::ValidationError, "$.fields." + k + " must be a string or number", "$.fields." + k);
      }
    }
    p.fields = std::move(fields);
  }
  if (j.contains("schema")) {
    const Json& s = j["schema"];
    if (s.is_string()) {
      p.schema_name = s.get<std::string>();
    } else if (s.is_object() && s.contains("name") && s["name"].is_string()) {
      p.schema_name = s["name"].get<std::string>();
      if (s.contains("version")) {
        if (!s["version"].is_number_integer()) {
          throw Error(ErrorCode::ValidationError, "$.schema.version must be an integer", "$.schema.version");
        }
        p.schema_version = s["version"].get<int>();
      }
    } else {
      throw Error(ErrorCode::ValidationError, "$.schema must be a name or {name, version}", "$.schema");
    }
  }
  return p;
}

/// One problem with one document of an import collection.
struct DocumentViolation {
  std::size_t document = 0;
  std::string id;
  std::string path;
  std::string rule;
  std::string message;
};

class ImportRejected : public Error {
 public:
  explicit ImportRejected(std::vector<DocumentViolation> v)
      : Error(ErrorCode::ValidationError, summarize(v), summarize(v)), violations_(std::move(v)) {}

  const std::vector<DocumentViolation>& violations() const { return violations_; }

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& v : violations_) {
      arr.push_back({{"document", v.document}, {"id", v.id}, {"path", v.path}, {"rule", v.rule}, {"message", v.message}});
    }
    return arr;
  }

 private:
  static std::string summarize(const std::vector<DocumentViolation>& v) {
    std::string out = "import rejected:";
    for (const auto& x : v) out += " [" + std::to_string(x.document) + "] " + x.path + " " + x.message + ";";
    return out;
  }

  std::vector<DocumentViolation> violations_;
};

/// Canonical text form used for every JSON body the store hands out.
inline std::string canonical_text(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Single-flight cache: concurrent first requests for a key share one build.

template <class T>
class SingleFlight {
 public:
  template <class Make>
  std::shared_ptr<const T> get(const std::string& key, Make make) {
    std::shared_future<std::shared_ptr<const T>> future;
    std::promise<std::shared_ptr<const T>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        future = it->second;
      } else {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const T>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mutex_);
        entries_.erase(key);
      }
    }
    return future.get();
  }

  void clear() {
    std::lock_guard lock(mutex_);
    entries_.clear();
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_future<std::shared_ptr<const T>>> entries_;
};

// ---------------------------------------------------------------------------

class Store {
 public:
  /// Opens (creating if needed) a store rooted at `root`. The remote
  /// detector registry is read from `detectors_file`, default
  /// <root>/detectors.json.
  explicit Store(fs::path root, std::optional<fs::path> detectors_file = std::nullopt)
      : root_(std::move(root)), detectors_file_(detectors_file.value_or(root_ / "detectors.json")) {
    std::error_code ec;
    fs::create_directories(root_ / "models", ec);
    fs::create_directories(root_ / "schemas", ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create store at '" + root_.string() + "': " + ec.message());
    remove_stale_temporaries();
    load_schemas();
    if (fs::exists(detectors_file_)) {
      try {
        detectors_.load_json(nlohmann::json::parse(read_text(detectors_file_)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, "corrupt detector registry '" + detectors_file_.string() + "': " + e.what());
      }
    }
  }

  const fs::path& root() const { return root_; }

  /// Clock used for upload and annotation timestamps.
  std::function<Timestamp()> clock = [] { return now_utc(); };

  // -- models ---------------------------------------------------------------

  /// Persists a mesh upload. Returns the entry and whether it was new;
  /// identical bytes always map to the same entry.
  std::pair<ModelEntry, bool> upload_model(std::string_view bytes, std::optional<MeshFormat> format,
                                           const std::string& name) {
    const MeshFormat fmt = format.value_or(infer_format(bytes, name));
    TriangleMesh mesh = load_mesh(bytes, fmt);
    const std::string id = sha256_hex(bytes);
    std::unique_lock lock(upload_mutex_);
    if (fs::exists(model_dir(id) / "meta.json")) return {model(id), false};
    ModelEntry e;
    e.model_id = id;
    e.source_name = name.empty() ? (mesh.name.empty() ? "model." + std::string(to_string(fmt)) : mesh.name) : name;
    e.format = fmt;
    e.face_count = mesh.face_count();
    e.vertex_count = mesh.vertex_count();
    e.bounds = bounding_box(mesh);
    e.texture_ref = mesh.texture_ref;
    e.uploaded_at = clock();
    atomic_write(model_dir(id) / ("mesh." + std::string(to_string(fmt))), bytes);
    // meta.json last: a model exists once its metadata does.
    atomic_write(model_dir(id) / "meta.json", canonical_text(to_json(e)));
    return {e, true};
  }

  bool has_model(const std::string& id) const {
    return is_model_id(id) && fs::exists(model_dir(id) / "meta.json");
  }

  ModelEntry model(const std::string& id) const {
    require_model(id);
    try {
      return model_entry_from_json(Json::parse(read_text(model_dir(id) / "meta.json")));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, std::string("corrupt model metadata: ") + e.what());
    }
  }

  /// All models, ordered by upload time then id.
  std::vector<ModelEntry> models() const {
    std::vector<ModelEntry> out;
    for (const auto& dir : fs::directory_iterator(root_ / "models")) {
      const std::string id = dir.path().filename().string();
      if (has_model(id)) out.push_back(model(id));
    }
    std::sort(out.begin(), out.end(), [](const ModelEntry& a, const ModelEntry& b) {
      return std::tie(a.uploaded_at, a.model_id) < std::tie(b.uploaded_at, b.model_id);
    });
    return out;
  }

  std::string mesh_bytes(const std::string& id) const {
    const ModelEntry e = model(id);
    return read_text(model_dir(id) / ("mesh." + std::string(to_string(e.format))));
  }

  std::shared_ptr<const TriangleMesh> mesh(const std::string& id) {
    require_model(id);
    return meshes_.get(id, [&] {
      const ModelEntry e = model(id);
      TriangleMesh m = load_mesh(mesh_bytes(id), e.format);
      m.id = id;
      m.name = e.source_name;
      return m;
    });
  }

  /// Built lazily on first use, once per model even under concurrent calls.
  std::shared_ptr<const BVH> bvh(const std::string& id) {
    const auto m = mesh(id);
    return bvhs_.get(id, [&] {
      ++bvh_builds_;
      return BVH(*m);
    });
  }

  std::size_t bvh_builds() const { return bvh_builds_.load(); }

  SelectionSet select(const std::string& id, const Gesture& g) {
    const auto m = mesh(id);
    return run_gesture(*m, *bvh(id), g);
  }

  // -- schemas --------------------------------------------------------------

  const SchemaRegistry& schemas() const { return schemas_; }

  void add_schema(const FieldSchema& s) {
    check_schema(s);
    if (!is_safe_name(s.name)) {
      throw Error(ErrorCode::InvalidArgument, "schema names are limited to letters, digits, '.', '-' and '_'");
    }
    std::unique_lock lock(schema_mutex_);
    if (const auto existing = schemas_.find(s.name, s.version)) {
      if (*existing == s) return;
      throw Error(ErrorCode::IdConflict, "schema '" + s.name + "' v" + std::to_string(s.version) + " already exists");
    }
    if (s.name == empty_schema().name) throw Error(ErrorCode::IdConflict, "schema 'none' is built in");
    auto versions = schemas_.versions(s.name);
    versions.push_back(s);
    Json arr = Json::array();
    for (const auto& v : versions) arr.push_back(schema_to_json(v));
    atomic_write(root_ / "schemas" / (s.name + ".json"), canonical_text(arr));
    schemas_.add(s);
  }

  // -- detectors ------------------------------------------------------------

  const DetectorRegistry& detectors() const { return detectors_; }
  DetectorRegistry& detectors() { return detectors_; }

  void register_detector(const DetectorDescriptor& d) {
    std::unique_lock lock(detector_mutex_);
    detectors_.add(d);
    atomic_write(detectors_file_, canonical_text(detectors_.remote_json()));
  }

  /// Runs a detector and returns the response body text. A stored result is
  /// returned verbatim unless `force` is set.
  std::string detect(const std::string& id, const std::string& detector, bool force = false) {
    require_model(id);
    const auto d = detectors_.find(detector);
    if (!d) throw Error(ErrorCode::DetectorUnknown, "unknown detector '" + detector + "'");
    const fs::path cache = model_dir(id) / "heatmaps" / (d->name + ".json");
    if (!force && fs::exists(cache)) return read_text(cache);
    const HeatMap hm = run_detector(detectors_, d->name, *mesh(id));
    const std::string body = canonical_text(heatmap_response(hm));
    atomic_write(cache, body);
    return body;
  }

  static Json heatmap_response(const HeatMap& hm) {
    double lo = 0.0, hi = 0.0, sum = 0.0;
    if (!hm.values.empty()) {
      lo = *std::min_element(hm.values.begin(), hm.values.end());
      hi = *std::max_element(hm.values.begin(), hm.values.end());
      for (double v : hm.values) sum += v;
    }
    Json j;
    j["mesh_id"] = hm.mesh_id;
    j["detector"] = hm.detector;
    j["normalized"] = hm.normalized;
    j["stats"] = {{"min", lo}, {"max", hi}, {"mean", hm.values.empty() ? 0.0 : sum / double(hm.values.size())}};
    j["values"] = hm.values;
    return j;
  }

  // -- annotations ----------------------------------------------------------

  AnnotationRecord create_annotation(const std::string& id, const AnnotationPatch& p) {
    const auto m = mesh(id);
    const FieldSchema schema = resolve_schema(p.schema_name.value_or(empty_schema().name), p.schema_version);
    AnnotationInput in;
    in.roi = SelectionSet::from_faces(id, p.faces.value_or(std::vector<std::uint32_t>{}));
    in.title = p.title.value_or("");
    in.color = p.color.value_or(kDefaultColor);
    in.description = p.description.value_or("");
    in.fields = p.fields.value_or(FieldMap{});
    in.creator = p.creator.value_or("");
    auto lock = write_lock(id);
    AnnotationRecord r = artemis::create_annotation(*m, in, schema, clock());
    write_annotation(r);
    return r;
  }

  AnnotationRecord annotation(const std::string& id, const std::string& annotation_id) {
    require_model(id);
    auto lock = read_lock(id);
    return read_annotation(id, annotation_id);
  }

  /// Sorted by created_at, then id.
  std::vector<AnnotationRecord> annotations(const std::string& id) {
    require_model(id);
    auto lock = read_lock(id);
    return read_all(id);
  }

  AnnotationRecord update_annotation(const std::string& id, const std::string& annotation_id, const AnnotationPatch& p) {
    const auto m = mesh(id);
    auto lock = write_lock(id);
    AnnotationRecord r = read_annotation(id, annotation_id);
    if (p.faces) {
      if (p.faces->empty()) throw Error(ErrorCode::EmptyROI, "ROI has no faces");
      for (std::uint32_t f : *p.faces) {
        if (f >= m->face_count()) throw Error(ErrorCode::ValidationError, "ROI face " + std::to_string(f) + " out of range");
      }
      r.roi = SelectionSet::from_faces(id, *p.faces);
      r.derived_vertices = derive_vertices(*m, r.roi.faces);
    }
    if (p.title) r.title = *p.title;
    if (p.color) r.color = *p.color;
    if (p.description) r.description = *p.description;
    if (p.creator) r.creator = *p.creator;
    if (p.fields) r.fields = *p.fields;
    if (p.schema_name || p.schema_version) {
      const FieldSchema s = resolve_schema(p.schema_name.value_or(r.schema_name), p.schema_version);
      r.schema_name = s.name;
      r.schema_version = s.version;
    }
    require_conforming(r.fields, resolve_schema(r.schema_name, r.schema_version));
    r = touch(std::move(r), clock());
    write_annotation(r);
    return r;
  }

  /// Idempotent; returns whether something was deleted.
  bool delete_annotation(const std::string& id, const std::string& annotation_id) {
    require_model(id);
    if (!is_uuid(annotation_id)) return false;
    auto lock = write_lock(id);
    std::error_code ec;
    const bool removed = fs::remove(annotation_path(id, annotation_id), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot delete annotation: " + ec.message());
    return removed;
  }

  Json export_annotations(const std::string& id) {
    Json arr = Json::array();
    for (const auto& r : annotations(id)) arr.push_back(to_wadm(r));
    return arr;
  }

  /**
   * Imports a WADM collection. All documents are checked before anything is
   * written: structural problems and references outside the mesh raise
   * ImportRejected, ids already present raise IdConflict unless `overwrite`.
   */
  std::size_t import_annotations(const std::string& id, const Json& collection, bool overwrite = false) {
    const auto m = mesh(id);
    if (!collection.is_array()) {
      throw ImportRejected({{0, "", "$", "type", "import payload must be a JSON array of annotations"}});
    }
    std::vector<DocumentViolation> problems;
    std::vector<AnnotationRecord> records;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < collection.size(); ++i) {
      const Json& doc = collection[i];
      const std::string doc_id = doc.is_object() && doc.contains("id") && doc["id"].is_string() ? doc["id"].get<std::string>() : "";
      auto report = [&](std::string path, std::string rule, std::string message) {
        problems.push_back({i, doc_id, std::move(path), std::move(rule), std::move(message)});
      };
      const auto violations = validate_wadm(doc);
      for (const auto& v : violations) report(v.path, v.rule, v.message);
      if (!violations.empty()) continue;
      AnnotationRecord r;
      try {
        r = from_wadm(doc, schemas_);
      } catch (const Error& e) {
        const bool selector = e.code() == ErrorCode::SelectorUnsupported;
        report(selector ? "$.target.selector.type" : "$.body.value", selector ? "selector" : "schema", e.what());
        continue;
      }
      if (r.mesh_id != id) report("$.target.source", "model", "annotation targets model '" + r.mesh_id + "'");
      bool faces_ok = true;
      for (std::uint32_t f : r.roi.faces) {
        if (f >= m->face_count()) {
          report("$.target.selector.faces", "face-range",
                 "face index " + std::to_string(f) + " >= face count " + std::to_string(m->face_count()));
          faces_ok = false;
          break;
        }
      }
      if (faces_ok && r.derived_vertices != derive_vertices(*m, r.roi.faces)) {
        report("$.target.selector.vertices", "derived", "vertices are not the union of the selected faces' vertices");
      }
      if (!seen.insert(r.id).second) report("$.id", "unique", "duplicate id within the collection");
      records.push_back(std::move(r));
    }
    if (!problems.empty()) throw ImportRejected(std::move(problems));

    auto lock = write_lock(id);
    if (!overwrite) {
      std::string clashes;
      for (const auto& r : records) {
        if (fs::exists(annotation_path(id, r.id))) clashes += (clashes.empty() ? "" : ",") + r.id;
      }
      if (!clashes.empty()) throw Error(ErrorCode::IdConflict, "annotations already exist: " + clashes, clashes);
    }
    for (const auto& r : records) write_annotation(r);
    return records.size();
  }

  /// Self-contained print-oriented HTML; deterministic for a fixed store
  /// state and `generated_at`.
  std::string report(const std::string& id, Timestamp generated_at);

  /// Store-wide scan: paths of annotation files that fail validate_wadm.
  std::vector<std::string> invalid_annotation_files() const {
    std::vector<std::string> bad;
    for (const auto& dir : fs::directory_iterator(root_ / "models")) {
      const fs::path ann = dir.path() / "annotations";
      if (!fs::exists(ann)) continue;
      for (const auto& f : fs::directory_iterator(ann)) {
        if (is_temp_name(f.path().filename().string())) continue;
        try {
          if (!validate_wadm(nlohmann::ordered_json::parse(read_text(f.path()))).empty()) bad.push_back(f.path().string());
        } catch (const nlohmann::json::exception&) {
          bad.push_back(f.path().string());
        }
      }
    }
    return bad;
  }

 private:
  fs::path model_dir(const std::string& id) const { return root_ / "models" / id; }

  fs::path annotation_path(const std::string& id, const std::string& annotation_id) const {
    return model_dir(id) / "annotations" / (annotation_id + ".jsonld");
  }

  void require_model(const std::string& id) const {
    if (!has_model(id)) throw Error(ErrorCode::UnknownModel, "unknown model '" + id + "'", id);
  }

  FieldSchema resolve_schema(const std::string& name, std::optional<int> version) const {
    const auto s = version ? schemas_.find(name, *version) : schemas_.latest(name);
    if (!s) {
      throw Error(ErrorCode::UnknownSchema,
                  "unknown schema '" + name + "'" + (version ? " v" + std::to_string(*version) : std::string()), name);
    }
    return *s;
  }

  std::shared_mutex& model_mutex(const std::string& id) {
    std::lock_guard lock(locks_mutex_);
    auto& slot = model_locks_[id];
    if (!slot) slot = std::make_unique<std::shared_mutex>();
    return *slot;
  }

  std::unique_lock<std::shared_mutex> write_lock(const std::string& id) { return std::unique_lock(model_mutex(id)); }
  std::shared_lock<std::shared_mutex> read_lock(const std::string& id) { return std::shared_lock(model_mutex(id)); }

  void write_annotation(const AnnotationRecord& r) {
    atomic_write(annotation_path(r.mesh_id, r.id), canonical_text(to_wadm(r)));
  }

  AnnotationRecord read_file(const fs::path& p) const {
    try {
      return from_wadm(Json::parse(read_text(p)), schemas_);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, "corrupt annotation file '" + p.string() + "': " + e.what());
    }
  }

  AnnotationRecord read_annotation(const std::string& id, const std::string& annotation_id) const {
    const fs::path p = is_uuid(annotation_id) ? annotation_path(id, annotation_id) : fs::path();
    if (p.empty() || !fs::exists(p)) {
      throw Error(ErrorCode::NotFound, "unknown annotation '" + annotation_id + "'", annotation_id);
    }
    return read_file(p);
  }

  std::vector<AnnotationRecord> read_all(const std::string& id) const {
    std::vector<AnnotationRecord> out;
    const fs::path dir = model_dir(id) / "annotations";
    if (!fs::exists(dir)) return out;
    for (const auto& f : fs::directory_iterator(dir)) {
      const std::string name = f.path().filename().string();
      if (is_temp_name(name) || f.path().extension() != ".jsonld") continue;
      out.push_back(read_file(f.path()));
    }
    std::sort(out.begin(), out.end(), [](const AnnotationRecord& a, const AnnotationRecord& b) {
      return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
    });
    return out;
  }

  void remove_stale_temporaries() {
    std::error_code ec;
    std::vector<fs::path> stale;
    for (auto it = fs::recursive_directory_iterator(root_, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
      if (it->is_regular_file() && is_temp_name(it->path().filename().string())) stale.push_back(it->path());
    }
    for (const auto& p : stale) fs::remove(p, ec);
  }

  void load_schemas() {
    for (const auto& f : fs::directory_iterator(root_ / "schemas")) {
      if (f.path().extension() != ".json" || is_temp_name(f.path().filename().string())) continue;
      try {
        const Json arr = Json::parse(read_text(f.path()));
        for (const Json& s : arr) schemas_.add(schema_from_json(s));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, "corrupt schema file '" + f.path().string() + "': " + e.what());
      }
    }
  }

  fs::path root_;
  fs::path detectors_file_;
  SchemaRegistry schemas_;
  DetectorRegistry detectors_;
  SingleFlight<TriangleMesh> meshes_;
  SingleFlight<BVH> bvhs_;
  std::atomic<std::size_t> bvh_builds_{0};
  std::mutex upload_mutex_;
  std::mutex schema_mutex_;
  std::mutex detector_mutex_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::shared_mutex>> model_locks_;
};

// ---------------------------------------------------------------------------
// Report

namespace detail {

inline std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string vec_text(const Vec3& v) { return "(" + fixed(v.x) + ", " + fixed(v.y) + ", " + fixed(v.z) + ")"; }

inline void row(std::string& out, std::string_view label, const std::string& html_value) {
  out += "<tr><th>";
  out += label;
  out += "</th><td>" + html_value + "</td></tr>\n";
}

inline constexpr std::string_view kReportStyle = R"(body { font-family: Georgia, "Times New Roman", serif; margin: 2cm; color: #111; }
h1 { font-size: 20pt; margin-bottom: 0; }
.generated { color: #555; margin-top: 4pt; }
section { margin-top: 18pt; page-break-inside: avoid; }
table { border-collapse: collapse; width: 100%; }
th, td { border: 1px solid #bbb; padding: 3pt 6pt; text-align: left; vertical-align: top; }
th { width: 30%; background: #f2f2f2; }
.swatch { display: inline-block; width: 14pt; height: 14pt; border: 1px solid #333; vertical-align: middle; margin-right: 6pt; }
.description { white-space: pre-wrap; }
@media print { body { margin: 1cm; } section.annotation { page-break-before: auto; } }
)";

}  // namespace detail

inline std::string Store::report(const std::string& id, Timestamp generated_at) {
  const ModelEntry e = model(id);
  const auto m = mesh(id);
  const auto records = annotations(id);
  const std::vector<double> areas = face_areas(*m);
  using detail::html_escape;
  using detail::row;

  std::string out;
  out += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  out += "<title>Annotation report: " + html_escape(e.source_name) + "</title>\n";
  out += "<style>\n" + std::string(detail::kReportStyle) + "</style>\n</head>\n<body>\n";
  out += "<header>\n<h1>Annotation report</h1>\n<p class=\"generated\">Generated " + format_rfc3339(generated_at) +
         "</p>\n</header>\n";

  out += "<section class=\"model\">\n<h2>Model</h2>\n<table>\n";
  row(out, "Name", html_escape(e.source_name));
  row(out, "Model id", "<code>" + e.model_id + "</code>");
  row(out, "Format", std::string(to_string(e.format)));
  row(out, "Faces", std::to_string(e.face_count));
  row(out, "Vertices", std::to_string(e.vertex_count));
  row(out, "Bounding box min", detail::vec_text(e.bounds.min));
  row(out, "Bounding box max", detail::vec_text(e.bounds.max));
  row(out, "Total surface area", detail::fixed(total_area(*m)));
  row(out, "Texture", e.texture_ref ? html_escape(*e.texture_ref) : std::string("none"));
  row(out, "Annotations", std::to_string(records.size()));
  out += "</table>\n</section>\n";

  if (records.empty()) {
    out += "<section class=\"no-annotations\">\n<h2>Annotations</h2>\n<p>No annotations.</p>\n</section>\n";
  }
  std::size_t index = 0;
  for (const AnnotationRecord& r : records) {
    double region = 0.0;
    for (std::uint32_t f : r.roi.faces) region += areas[f];
    out += "<section class=\"annotation\" id=\"annotation-" + r.id + "\">\n";
    out += "<h2><span class=\"swatch\" style=\"background:" + color_hex(r.color) + "\"></span>" +
           std::to_string(++index) + ". " + html_escape(r.title) + "</h2>\n<table>\n";
    row(out, "Id", "<code>urn:uuid:" + r.id + "</code>");
    row(out, "Color", color_hex(r.color));
    row(out, "Creator", html_escape(r.creator));
    row(out, "Created", format_rfc3339(r.created_at));
    row(out, "Modified", format_rfc3339(r.modified_at));
    row(out, "Description", "<span class=\"description\">" + html_escape(r.description) + "</span>");
    row(out, "Schema", html_escape(r.schema_name) + " v" + std::to_string(r.schema_version));
    row(out, "Selected faces", std::to_string(r.roi.faces.size()));
    row(out, "Selected vertices", std::to_string(r.derived_vertices.size()));
    row(out, "Region surface area", detail::fixed(region));
    out += "</table>\n<h3>Fields</h3>\n";
    if (r.fields.empty()) {
      out += "<p>No fields.</p>\n";
    } else {
      out += "<table class=\"fields\">\n";
      for (const auto& [k, v] : r.fields) row(out, html_escape(k), html_escape(v));
      out += "</table>\n";
    }
    out += "</section>\n";
  }
  out += "</body>\n</html>\n";
  return out;
}

}  // namespace artemis
