#pragma once

// Detector plugins: built-in geometric detectors plus remote HTTP services.
//
// Wire protocol for remote detectors:
//
//   POST <endpoint>
//   { "mesh": { "positions": [x,y,z,...], "faces": [i,j,k,...] }, "model_id": "<id>" }
//
//   200 { "values": [v0, v1, ...] }   one finite number per vertex
//
// Any other status is reported as DetectorUnreachable with the response
// body attached.

#include <chrono>
#include <cmath>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "artemis/error.hpp"
#include "artemis/heatmap.hpp"
#include "artemis/mesh.hpp"

namespace artemis {

inline constexpr std::string_view kBuiltinPrefix = "builtin:";
inline constexpr std::chrono::milliseconds kDefaultDetectorTimeout{120'000};

struct DetectorDescriptor {
  std::string name;
  std::string endpoint;  // http://host[:port]/path or builtin:<name>
  std::string output = "per_vertex_scalar";

  bool builtin() const { return endpoint.rfind(kBuiltinPrefix, 0) == 0; }

  friend bool operator==(const DetectorDescriptor&, const DetectorDescriptor&) = default;
};

inline nlohmann::ordered_json to_json(const DetectorDescriptor& d) {
  return {{"name", d.name}, {"endpoint", d.endpoint}, {"output", d.output}};
}

class DetectorRegistry {
 public:
  DetectorRegistry() {
    detectors_.push_back({"saliency", "builtin:saliency"});
    detectors_.push_back({"defect", "builtin:defect"});
  }

  DetectorRegistry(const DetectorRegistry& other) {
    std::shared_lock lock(other.mutex_);
    detectors_ = other.detectors_;
    timeout_ = other.timeout_;
  }

  void add(const DetectorDescriptor& d) {
    if (d.name.empty()) throw Error(ErrorCode::InvalidArgument, "detector name must not be empty");
    if (d.name.rfind(kBuiltinPrefix, 0) == 0) {
      throw Error(ErrorCode::InvalidArgument, "detector names may not start with 'builtin:'");
    }
    if (d.output != "per_vertex_scalar") {
      throw Error(ErrorCode::InvalidArgument, "unsupported detector output '" + d.output + "'");
    }
    if (d.builtin()) {
      throw Error(ErrorCode::InvalidArgument, "builtin endpoints cannot be registered");
    }
    if (d.endpoint.rfind("http://", 0) != 0) {
      throw Error(ErrorCode::InvalidArgument, "detector endpoint must be an http:// URL");
    }
    std::unique_lock lock(mutex_);
    for (const auto& existing : detectors_) {
      if (existing.name == d.name) throw Error(ErrorCode::IdConflict, "detector '" + d.name + "' already registered");
    }
    detectors_.push_back(d);
  }

  /// Accepts a plain name or `builtin:<name>`.
  std::optional<DetectorDescriptor> find(std::string_view name) const {
    std::shared_lock lock(mutex_);
    for (const auto& d : detectors_) {
      if (d.name == name || (d.builtin() && d.endpoint == name)) return d;
    }
    return std::nullopt;
  }

  std::vector<DetectorDescriptor> list() const {
    std::shared_lock lock(mutex_);
    return detectors_;
  }

  std::chrono::milliseconds timeout() const {
    std::shared_lock lock(mutex_);
    return timeout_;
  }

  void set_timeout(std::chrono::milliseconds t) {
    if (t.count() <= 0) throw Error(ErrorCode::InvalidArgument, "detector timeout must be positive");
    std::unique_lock lock(mutex_);
    timeout_ = t;
  }

  /// Remote entries only; built-ins are implicit.
  nlohmann::ordered_json remote_json() const {
    std::shared_lock lock(mutex_);
    auto arr = nlohmann::ordered_json::array();
    for (const auto& d : detectors_) {
      if (!d.builtin()) arr.push_back(to_json(d));
    }
    return arr;
  }

  void load_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, "detector registry must be a JSON array");
    for (const auto& e : j) {
      if (!e.is_object() || !e.contains("name") || !e.contains("endpoint") || !e["name"].is_string() ||
          !e["endpoint"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "detector entries need string 'name' and 'endpoint'");
      }
      add({e["name"].get<std::string>(), e["endpoint"].get<std::string>(),
           e.value("output", std::string("per_vertex_scalar"))});
    }
  }

 private:
  mutable std::shared_mutex mutex_;
  std::vector<DetectorDescriptor> detectors_;
  std::chrono::milliseconds timeout_ = kDefaultDetectorTimeout;
};

namespace detail {

struct Url {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline Url split_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "malformed URL '" + url + "'");
  const std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string request_body(const TriangleMesh& mesh) {
  nlohmann::json positions = nlohmann::json::array();
  nlohmann::json faces = nlohmann::json::array();
  auto& pa = positions.get_ref<nlohmann::json::array_t&>();
  auto& fa = faces.get_ref<nlohmann::json::array_t&>();
  pa.reserve(mesh.positions.size() * 3);
  fa.reserve(mesh.faces.size() * 3);
  for (const Vec3& p : mesh.positions) {
    pa.emplace_back(p.x);
    pa.emplace_back(p.y);
    pa.emplace_back(p.z);
  }
  for (const Face& f : mesh.faces) {
    for (std::uint32_t v : f) fa.emplace_back(v);
  }
  nlohmann::json body;
  body["mesh"] = {{"positions", std::move(positions)}, {"faces", std::move(faces)}};
  body["model_id"] = mesh.id;
  return body.dump();
}

inline std::vector<double> parse_values(const std::string& text, std::size_t expected) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("detector response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("values") || !doc["values"].is_array()) {
    throw Error(ErrorCode::ProtocolError, "detector response lacks a 'values' array");
  }
  const auto& arr = doc["values"];
  if (arr.size() != expected) {
    throw Error(ErrorCode::ProtocolError, "detector returned " + std::to_string(arr.size()) + " values for " +
                                              std::to_string(expected) + " vertices");
  }
  std::vector<double> values;
  values.reserve(expected);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number() || !std::isfinite(arr[i].get<double>())) {
      throw Error(ErrorCode::ProtocolError, "detector value " + std::to_string(i) + " is not a finite number");
    }
    values.push_back(arr[i].get<double>());
  }
  return values;
}

inline std::vector<double> call_remote(const DetectorDescriptor& d, const TriangleMesh& mesh,
                                       std::chrono::milliseconds timeout) {
  const Url url = split_url(d.endpoint);
  httplib::Client client(url.origin);
  if (!client.is_valid()) throw Error(ErrorCode::DetectorUnreachable, "invalid endpoint '" + d.endpoint + "'");
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  const auto start = std::chrono::steady_clock::now();
  const auto res = client.Post(url.path, request_body(mesh), "application/json");
  const auto elapsed = std::chrono::steady_clock::now() - start;
  if (!res) {
    const httplib::Error err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed >= timeout);
    if (timed_out) {
      throw Error(ErrorCode::DetectorTimeout,
                  "detector '" + d.name + "' did not answer within " + std::to_string(timeout.count()) + " ms");
    }
    throw Error(ErrorCode::DetectorUnreachable, "detector '" + d.name + "' unreachable: " + httplib::to_string(err),
                httplib::to_string(err));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::DetectorUnreachable,
                "detector '" + d.name + "' answered HTTP " + std::to_string(res->status), res->body);
  }
  return parse_values(res->body, mesh.vertex_count());
}

}  // namespace detail

/// Runs a detector and returns a normalized heat map.
inline HeatMap run_detector(const DetectorRegistry& registry, std::string_view name, const TriangleMesh& mesh,
                            std::optional<std::chrono::milliseconds> timeout = std::nullopt) {
  const auto d = registry.find(name);
  if (!d) throw Error(ErrorCode::DetectorUnknown, "unknown detector '" + std::string(name) + "'");
  validate(mesh);
  if (d->endpoint == "builtin:saliency") return saliency_map(mesh);
  if (d->endpoint == "builtin:defect") return defect_map(mesh);

  HeatMap hm;
  hm.mesh_id = mesh.id;
  hm.detector = d->name;
  hm.values = detail::call_remote(*d, mesh, timeout.value_or(registry.timeout()));
  if (!satisfies_normalized(hm.values)) hm.values = min_max_normalize(hm.values);
  hm.normalized = true;
  return hm;
}

}  // namespace artemis
