#pragma once

// HTTP/1.1 JSON API over a Store, rooted at /api/v1.
//
//   POST   /models                              upload (raw body or multipart "file")
//   GET    /models                              list
//   GET    /models/{id}                         entry
//   GET    /models/{id}/mesh                    original bytes
//   POST   /models/{id}/select/{brush|lasso}    gesture -> {mesh_id, faces}
//   POST   /models/{id}/annotations             create
//   GET    /models/{id}/annotations             list (WADM documents)
//   GET    /models/{id}/annotations/export      canonical WADM collection
//   POST   /models/{id}/annotations/import      ?overwrite=true
//   GET    /models/{id}/annotations/{aid}
//   PUT    /models/{id}/annotations/{aid}
//   DELETE /models/{id}/annotations/{aid}
//   GET    /detectors
//   POST   /detectors                           register a remote detector
//   POST   /models/{id}/detect/{name}           ?force=true
//   GET    /models/{id}/report                  ?format=html&timestamp=<rfc3339>
//   GET    /schemas
//   POST   /schemas
//
// Errors: { "error": { "code", "message", "details" } }.

#include <cstdlib>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "artemis/error.hpp"
#include "artemis/gesture.hpp"
#include "artemis/store.hpp"

namespace artemis {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidStroke:
    case ErrorCode::InvalidPolygon:
    case ErrorCode::InvalidGesture:
    case ErrorCode::MeshMismatch:
    case ErrorCode::UnknownMesh:
      return 400;
    case ErrorCode::UnknownModel:
    case ErrorCode::NotFound:
    case ErrorCode::DetectorUnknown:
      return 404;
    case ErrorCode::IdConflict:
      return 409;
    case ErrorCode::DetectorUnreachable:
      return 502;
    case ErrorCode::DetectorTimeout:
      return 504;
    case ErrorCode::IoError:
      return 500;
    default:
      return 422;
  }
}

inline Json error_json(std::string_view code, const std::string& message, Json details) {
  Json e;
  e["code"] = std::string(code);
  e["message"] = message;
  e["details"] = std::move(details);
  return {{"error", std::move(e)}};
}

inline Json error_json(const Error& e) {
  if (const auto* rejected = dynamic_cast<const ImportRejected*>(&e)) {
    return error_json(to_string(e.code()), "import rejected", rejected->to_json());
  }
  return error_json(to_string(e.code()), e.what(), e.details());
}

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path store_root = "artemis-store";
  std::optional<fs::path> detectors_file;
  std::optional<std::chrono::milliseconds> detector_timeout;

  /// ARTEMIS_LISTEN, ARTEMIS_STORE, ARTEMIS_DETECTORS, ARTEMIS_DETECTOR_TIMEOUT (ms).
  static ServiceConfig from_env() {
    ServiceConfig c;
    if (const char* v = std::getenv("ARTEMIS_LISTEN")) c.set_listen(v);
    if (const char* v = std::getenv("ARTEMIS_STORE")) c.store_root = v;
    if (const char* v = std::getenv("ARTEMIS_DETECTORS")) c.detectors_file = fs::path(v);
    if (const char* v = std::getenv("ARTEMIS_DETECTOR_TIMEOUT")) c.set_timeout_ms(v);
    return c;
  }

  /// "host:port", ":port" or "port".
  void set_listen(const std::string& addr) {
    const auto colon = addr.rfind(':');
    const std::string host_part = colon == std::string::npos ? "" : addr.substr(0, colon);
    const std::string port_part = colon == std::string::npos ? addr : addr.substr(colon + 1);
    int p = -1;
    try {
      std::size_t used = 0;
      p = std::stoi(port_part, &used);
      if (used != port_part.size()) p = -1;
    } catch (const std::exception&) {
    }
    if (p < 0 || p > 65535) throw Error(ErrorCode::InvalidArgument, "bad listen address '" + addr + "'");
    if (!host_part.empty()) host = host_part;
    port = p;
  }

  void set_timeout_ms(const std::string& ms) {
    long long v = 0;
    try {
      std::size_t used = 0;
      v = std::stoll(ms, &used);
      if (used != ms.size()) v = 0;
    } catch (const std::exception&) {
    }
    if (v <= 0) throw Error(ErrorCode::InvalidArgument, "bad detector timeout '" + ms + "'");
    detector_timeout = std::chrono::milliseconds(v);
  }
};

class Service {
 public:
  explicit Service(Store& store) : store_(store) {
    server_.set_payload_max_length(std::size_t{1} << 31);
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send(res, http_status(e.code()), error_json(e));
      } catch (const std::exception& e) {
        send(res, 500, error_json("InternalError", e.what(), ""));
      } catch (...) {
        send(res, 500, error_json("InternalError", "unknown failure", ""));
      }
    });
    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404) {
        send(res, 404, error_json("NotFound", "no route for " + req.method + " " + req.path, ""));
      } else if (res.status == 405) {
        send(res, 405, error_json("MethodNotAllowed", req.method + " not allowed on " + req.path, ""));
      }
    });
    routes();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ~Service() { stop(); }

  /// Binds without serving; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop().
  void serve() { server_.listen_after_bind(); }

  /// Serves on a background thread.
  void start() {
    thread_ = std::thread([this] { serve(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(canonical_text(body), "application/json");
  }

  static Json parse_body(const httplib::Request& req, ErrorCode code) {
    try {
      return Json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(code, std::string("request body is not valid JSON: ") + e.what(), "$");
    }
  }

  static bool flag(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return false;
    const std::string v = req.get_param_value(name);
    return v.empty() || v == "true" || v == "1";
  }

  void routes() {
    using Req = const httplib::Request&;
    using Res = httplib::Response&;
    const std::string m = "/api/v1/models";
    const std::string id = "/([^/]+)";

    server_.Post(m, [this](Req req, Res res) { upload(req, res); });
    server_.Get(m, [this](Req, Res res) {
      Json arr = Json::array();
      for (const auto& e : store_.models()) arr.push_back(to_json(e));
      send(res, 200, arr);
    });
    server_.Get(m + id, [this](Req req, Res res) { send(res, 200, to_json(store_.model(req.matches[1]))); });
    server_.Get(m + id + "/mesh", [this](Req req, Res res) {
      const std::string model_id = req.matches[1];
      const ModelEntry e = store_.model(model_id);
      res.set_content(store_.mesh_bytes(model_id), e.format == MeshFormat::obj ? "model/obj" : "application/ply");
    });

    server_.Post(m + id + "/select/(brush|lasso)", [this](Req req, Res res) {
      const std::string model_id = req.matches[1];
      store_.model(model_id);
      const Gesture g = gesture_from_json(parse_body(req, ErrorCode::InvalidGesture), parse_gesture_mode(req.matches[2].str()));
      send(res, 200, selection_to_json(store_.select(model_id, g)));
    });

    server_.Post(m + id + "/annotations", [this](Req req, Res res) {
      const std::string model_id = req.matches[1];
      store_.model(model_id);
      const auto patch = annotation_patch_from_json(parse_body(req, ErrorCode::ValidationError));
      send(res, 201, to_wadm(store_.create_annotation(model_id, patch)));
    });
    server_.Get(m + id + "/annotations", [this](Req req, Res res) {
      send(res, 200, store_.export_annotations(req.matches[1]));
    });
    server_.Get(m + id + "/annotations/export", [this](Req req, Res res) {
      send(res, 200, store_.export_annotations(req.matches[1]));
    });
    server_.Post(m + id + "/annotations/import", [this](Req req, Res res) {
      const std::string model_id = req.matches[1];
      store_.model(model_id);
      const Json docs = parse_body(req, ErrorCode::ValidationError);
      const std::size_t n = store_.import_annotations(model_id, docs, flag(req, "overwrite"));
      send(res, 200, Json{{"imported", n}});
    });
    server_.Get(m + id + "/annotations" + id, [this](Req req, Res res) {
      send(res, 200, to_wadm(store_.annotation(req.matches[1], req.matches[2])));
    });
    server_.Put(m + id + "/annotations" + id, [this](Req req, Res res) {
      const std::string model_id = req.matches[1];
      store_.model(model_id);
      const auto patch = annotation_patch_from_json(parse_body(req, ErrorCode::ValidationError));
      send(res, 200, to_wadm(store_.update_annotation(model_id, req.matches[2], patch)));
    });
    server_.Delete(m + id + "/annotations" + id, [this](Req req, Res res) {
      send(res, 200, Json{{"deleted", store_.delete_annotation(req.matches[1], req.matches[2])}});
    });

    server_.Get("/api/v1/detectors", [this](Req, Res res) {
      Json arr = Json::array();
      for (const auto& d : store_.detectors().list()) arr.push_back(to_json(d));
      send(res, 200, arr);
    });
    server_.Post("/api/v1/detectors", [this](Req req, Res res) {
      const Json j = parse_body(req, ErrorCode::InvalidArgument);
      if (!j.is_object() || !j.contains("name") || !j.contains("endpoint") || !j["name"].is_string() ||
          !j["endpoint"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "detector needs string 'name' and 'endpoint'");
      }
      DetectorDescriptor d{j["name"].get<std::string>(), j["endpoint"].get<std::string>()};
      if (j.contains("output") && j["output"].is_string()) d.output = j["output"].get<std::string>();
      store_.register_detector(d);
      send(res, 201, to_json(d));
    });
    server_.Post(m + id + "/detect" + id, [this](Req req, Res res) {
      res.set_content(store_.detect(req.matches[1], req.matches[2], flag(req, "force")), "application/json");
    });

    server_.Get(m + id + "/report", [this](Req req, Res res) {
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "html";
      if (format != "html") throw Error(ErrorCode::InvalidArgument, "unsupported report format '" + format + "'");
      Timestamp ts = now_utc();
      if (req.has_param("timestamp")) {
        const auto parsed = parse_rfc3339(req.get_param_value("timestamp"));
        if (!parsed) throw Error(ErrorCode::InvalidArgument, "timestamp must be RFC 3339");
        ts = *parsed;
      }
      res.set_content(store_.report(req.matches[1], ts), "text/html; charset=utf-8");
    });

    server_.Get("/api/v1/schemas", [this](Req, Res res) {
      Json arr = Json::array();
      for (const auto& s : store_.schemas().all()) arr.push_back(schema_to_json(s));
      send(res, 200, arr);
    });
    server_.Post("/api/v1/schemas", [this](Req req, Res res) {
      const FieldSchema s = schema_from_json(parse_body(req, ErrorCode::InvalidArgument));
      store_.add_schema(s);
      send(res, 201, schema_to_json(s));
    });
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    std::string bytes, name;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) throw Error(ErrorCode::InvalidArgument, "multipart upload needs a 'file' part");
      const auto file = req.get_file_value("file");
      bytes = file.content;
      name = file.filename;
    } else {
      bytes = req.body;
    }
    if (req.has_param("name")) name = req.get_param_value("name");
    std::optional<MeshFormat> format;
    if (req.has_param("format")) {
      format = parse_format(req.get_param_value("format"));
      if (!format) throw Error(ErrorCode::InvalidArgument, "format must be obj or ply");
    }
    const auto [entry, created] = store_.upload_model(bytes, format, name);
    send(res, created ? 201 : 200, to_json(entry));
  }

  Store& store_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace artemis
