// artemis: headless driver for mesh inspection, selection, annotation,
// detectors, reports and the HTTP service.
//
// Exit codes: 0 success, 1 validation or parse failure, 2 I/O or network failure.

#include <charconv>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "artemis/service.hpp"
#include "artemis/store.hpp"

using namespace artemis;

namespace {

struct Options {
  bool json = false;
  std::string store;
  std::string timestamp;
  std::string detectors;
  long long timeout_ms = 0;
  std::string output;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::DetectorUnreachable:
    case ErrorCode::DetectorTimeout:
      return 2;
    default:
      return 1;
  }
}

void write_output(const Options& o, const std::string& text) {
  if (o.output.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    atomic_write(o.output, text);
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::optional<Timestamp> timestamp_option(const Options& o) {
  if (o.timestamp.empty()) return std::nullopt;
  const auto ts = parse_rfc3339(o.timestamp);
  if (!ts) throw Error(ErrorCode::InvalidArgument, "--timestamp must be RFC 3339, got '" + o.timestamp + "'");
  return ts;
}

std::optional<fs::path> detectors_file(const Options& o) {
  if (!o.detectors.empty()) return fs::path(o.detectors);
  if (const char* env = std::getenv("ARTEMIS_DETECTORS")) return fs::path(env);
  return std::nullopt;
}

std::string store_root(const Options& o) {
  if (!o.store.empty()) return o.store;
  if (const char* env = std::getenv("ARTEMIS_STORE")) return env;
  return "";
}

std::unique_ptr<Store> open_store(const Options& o, bool required) {
  const std::string root = store_root(o);
  if (root.empty()) {
    if (required) throw Error(ErrorCode::InvalidArgument, "this command needs --store <dir>");
    return nullptr;
  }
  auto store = std::make_unique<Store>(root, detectors_file(o));
  if (o.timeout_ms > 0) store->detectors().set_timeout(std::chrono::milliseconds(o.timeout_ms));
  if (const auto ts = timestamp_option(o)) store->clock = [t = *ts] { return t; };
  return store;
}

/// A model id already in the store, or a mesh file (uploaded when a store is given).
std::string resolve_model(Store& store, const std::string& ref) {
  if (is_model_id(ref) && (store.has_model(ref) || !fs::exists(ref))) {
    store.model(ref);
    return ref;
  }
  if (!fs::exists(ref)) throw Error(ErrorCode::IoError, "'" + ref + "' is neither a stored model id nor a readable file");
  const std::string bytes = read_file_bytes(ref);
  return store.upload_model(bytes, std::nullopt, fs::path(ref).filename().string()).first.model_id;
}

/// In-memory mesh whose id is the SHA-256 of the file bytes, as in the store.
TriangleMesh load_for_cli(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  TriangleMesh m = load_mesh(bytes, infer_format(bytes, path));
  m.id = sha256_hex(bytes);
  if (m.name.empty()) m.name = fs::path(path).filename().string();
  return m;
}

Json read_json_file(const std::string& path, ErrorCode on_parse_error) {
  const std::string text = read_file_bytes(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(on_parse_error, "'" + path + "' is not valid JSON: " + e.what());
  }
}

int cmd_info(const Options& o, const std::string& path) {
  const TriangleMesh m = load_for_cli(path);
  const AABB box = bounding_box(m);
  if (o.json) {
    Json j;
    j["name"] = m.name;
    j["model_id"] = m.id;
    j["faces"] = m.face_count();
    j["vertices"] = m.vertex_count();
    j["bounding_box"] = {{"min", {box.min.x, box.min.y, box.min.z}}, {"max", {box.max.x, box.max.y, box.max.z}}};
    j["total_area"] = total_area(m);
    j["normals"] = m.normals.has_value();
    j["uvs"] = m.uvs.has_value();
    j["texture"] = m.texture_ref ? Json(*m.texture_ref) : Json(nullptr);
    write_output(o, canonical_text(j));
    return 0;
  }
  std::string out;
  out += "name: " + m.name + "\n";
  out += "model_id: " + m.id + "\n";
  out += "faces: " + std::to_string(m.face_count()) + ", vertices: " + std::to_string(m.vertex_count()) + "\n";
  out += "bounding_box: min (" + fmt(box.min.x) + ", " + fmt(box.min.y) + ", " + fmt(box.min.z) + ") max (" +
         fmt(box.max.x) + ", " + fmt(box.max.y) + ", " + fmt(box.max.z) + ")\n";
  out += "total_area: " + fmt(total_area(m)) + "\n";
  out += std::string("normals: ") + (m.normals ? "yes" : "no") + "\n";
  out += std::string("uvs: ") + (m.uvs ? "yes" : "no") + "\n";
  out += "texture: " + m.texture_ref.value_or("none") + "\n";
  write_output(o, out);
  return 0;
}

int cmd_select(const Options& o, const std::string& model, const std::string& gesture_path) {
  const Gesture g = gesture_from_json(read_json_file(gesture_path, ErrorCode::InvalidGesture));
  SelectionSet s;
  if (auto store = open_store(o, false)) {
    s = store->select(resolve_model(*store, model), g);
  } else {
    const TriangleMesh m = load_for_cli(model);
    s = run_gesture(m, BVH(m), g);
  }
  if (o.json) {
    write_output(o, canonical_text(selection_to_json(s)));
  } else {
    std::string out;
    for (std::uint32_t f : s.faces) out += std::to_string(f) + "\n";
    write_output(o, out);
  }
  return 0;
}

int cmd_detect(const Options& o, const std::string& detector, const std::string& model, bool force) {
  if (auto store = open_store(o, false)) {
    write_output(o, store->detect(resolve_model(*store, model), detector, force));
    return 0;
  }
  DetectorRegistry registry;
  if (const auto file = detectors_file(o); file && fs::exists(*file)) {
    registry.load_json(read_json_file(file->string(), ErrorCode::InvalidArgument));
  }
  if (o.timeout_ms > 0) registry.set_timeout(std::chrono::milliseconds(o.timeout_ms));
  const TriangleMesh m = load_for_cli(model);
  write_output(o, canonical_text(Store::heatmap_response(run_detector(registry, detector, m))));
  return 0;
}

struct AnnotateArgs {
  std::string model;
  std::string faces;
  std::string gesture;
  std::string title;
  std::string color;
  std::string description;
  std::vector<std::string> fields;
  std::string schema;
  std::string creator;
};

std::vector<std::uint32_t> parse_face_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    unsigned long long v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size() || v > 0xFFFFFFFFull) {
      throw Error(ErrorCode::ValidationError, "--faces expects comma-separated face indices, got '" + item + "'");
    }
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

int cmd_annotate(const Options& o, const AnnotateArgs& a) {
  auto store = open_store(o, true);
  const std::string id = resolve_model(*store, a.model);
  AnnotationPatch p;
  if (!a.gesture.empty()) {
    p.faces = store->select(id, gesture_from_json(read_json_file(a.gesture, ErrorCode::InvalidGesture))).faces;
  } else {
    p.faces = parse_face_list(a.faces);
  }
  p.title = a.title;
  p.description = a.description;
  p.creator = a.creator;
  if (!a.color.empty()) p.color = parse_color(Json(a.color), "--color");
  if (!a.fields.empty()) {
    FieldMap fields;
    for (const auto& kv : a.fields) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ValidationError, "--field expects key=value, got '" + kv + "'");
      fields.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    p.fields = std::move(fields);
  }
  if (!a.schema.empty()) {
    const auto colon = a.schema.rfind(':');
    if (colon == std::string::npos) {
      p.schema_name = a.schema;
    } else {
      p.schema_name = a.schema.substr(0, colon);
      try {
        p.schema_version = std::stoi(a.schema.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ValidationError, "--schema expects name or name:version");
      }
    }
  }
  const AnnotationRecord r = store->create_annotation(id, p);
  write_output(o, o.json ? canonical_text(to_wadm(r)) : r.id + "\n");
  return 0;
}

int cmd_export(const Options& o, const std::string& model) {
  auto store = open_store(o, true);
  write_output(o, canonical_text(store->export_annotations(resolve_model(*store, model))));
  return 0;
}

int cmd_import(const Options& o, const std::string& model, const std::string& file, bool overwrite) {
  auto store = open_store(o, true);
  const std::string id = resolve_model(*store, model);
  const std::size_t n = store->import_annotations(id, read_json_file(file, ErrorCode::ValidationError), overwrite);
  write_output(o, o.json ? canonical_text(Json{{"imported", n}}) : "imported " + std::to_string(n) + "\n");
  return 0;
}

int cmd_report(const Options& o, const std::string& model) {
  auto store = open_store(o, true);
  const std::string id = resolve_model(*store, model);
  write_output(o, store->report(id, timestamp_option(o).value_or(now_utc())));
  return 0;
}

int cmd_upload(const Options& o, const std::string& path) {
  auto store = open_store(o, true);
  const std::string id = resolve_model(*store, path);
  write_output(o, o.json ? canonical_text(to_json(store->model(id))) : id + "\n");
  return 0;
}

int cmd_serve(const Options& o, const std::string& listen) {
  ServiceConfig cfg = ServiceConfig::from_env();
  if (!listen.empty()) cfg.set_listen(listen);
  if (!o.store.empty()) cfg.store_root = o.store;
  if (const auto file = detectors_file(o)) cfg.detectors_file = *file;
  if (o.timeout_ms > 0) cfg.detector_timeout = std::chrono::milliseconds(o.timeout_ms);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Store store(cfg.store_root, cfg.detectors_file);
  if (cfg.detector_timeout) store.detectors().set_timeout(*cfg.detector_timeout);
  Service service(store);
  const int port = service.bind(cfg.host, cfg.port);
  std::cout << "listening on http://" << cfg.host << ":" << port << "/api/v1 (store " << cfg.store_root.string()
            << ")" << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  waiter.detach();
  service.serve();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surface-space 3D mesh annotation tool", "artemis"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_flag("--json", o.json, "Machine-readable output");
  app.add_option("--store", o.store, "Store directory (default $ARTEMIS_STORE)");
  app.add_option("--timestamp", o.timestamp, "RFC 3339 time used for reports and new records");
  app.add_option("--detectors", o.detectors, "Remote detector registry file (default $ARTEMIS_DETECTORS)");
  app.add_option("--timeout", o.timeout_ms, "Remote detector timeout in milliseconds")->check(CLI::PositiveNumber);
  app.add_option("-o,--output", o.output, "Write output to a file instead of stdout");

  std::function<int()> run;
  std::string a1, a2, listen;
  bool force = false, overwrite = false;
  AnnotateArgs ann;

  auto* info = app.add_subcommand("info", "Summarize a mesh file");
  info->add_option("mesh", a1, "OBJ or PLY file")->required();
  info->callback([&] { run = [&] { return cmd_info(o, a1); }; });

  auto* select = app.add_subcommand("select", "Run a gesture file against a mesh");
  select->add_option("model", a1, "Mesh file or stored model id")->required();
  select->add_option("gesture", a2, "Gesture JSON file")->required();
  select->callback([&] { run = [&] { return cmd_select(o, a1, a2); }; });

  auto* detect = app.add_subcommand("detect", "Run a detector and print its heat map");
  detect->add_option("detector", a1, "Detector name, e.g. builtin:saliency")->required();
  detect->add_option("model", a2, "Mesh file or stored model id")->required();
  detect->add_flag("--force", force, "Recompute even if the store holds a result");
  detect->callback([&] { run = [&] { return cmd_detect(o, a1, a2, force); }; });

  auto* annotate = app.add_subcommand("annotate", "Create an annotation in the store");
  annotate->add_option("model", ann.model, "Mesh file or stored model id")->required();
  auto* faces = annotate->add_option("--faces", ann.faces, "Comma-separated face indices");
  auto* gesture = annotate->add_option("--gesture", ann.gesture, "Gesture file selecting the faces");
  faces->excludes(gesture);
  annotate->add_option("--title", ann.title, "Title");
  annotate->add_option("--color", ann.color, "Display color #rrggbb");
  annotate->add_option("--description", ann.description, "Free-text description");
  annotate->add_option("--field", ann.fields, "Structured field key=value (repeatable)");
  annotate->add_option("--schema", ann.schema, "Field schema name[:version]");
  annotate->add_option("--creator", ann.creator, "Creator");
  annotate->callback([&] {
    if (ann.faces.empty() && ann.gesture.empty()) throw CLI::ValidationError("annotate", "--faces or --gesture is required");
    run = [&] { return cmd_annotate(o, ann); };
  });

  auto* exp = app.add_subcommand("export", "Print the WADM collection of a model");
  exp->add_option("model", a1, "Mesh file or stored model id")->required();
  exp->callback([&] { run = [&] { return cmd_export(o, a1); }; });

  auto* imp = app.add_subcommand("import", "Import a WADM collection into a model");
  imp->add_option("model", a1, "Mesh file or stored model id")->required();
  imp->add_option("file", a2, "WADM JSON-LD array")->required();
  imp->add_flag("--overwrite", overwrite, "Replace annotations with the same id");
  imp->callback([&] { run = [&] { return cmd_import(o, a1, a2, overwrite); }; });

  auto* report = app.add_subcommand("report", "Write the HTML report of a model");
  report->add_option("model", a1, "Mesh file or stored model id")->required();
  report->callback([&] { run = [&] { return cmd_report(o, a1); }; });

  auto* upload = app.add_subcommand("upload", "Add a mesh file to the store and print its id");
  upload->add_option("mesh", a1, "OBJ or PLY file")->required();
  upload->callback([&] { run = [&] { return cmd_upload(o, a1); }; });

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--listen", listen, "host:port (default $ARTEMIS_LISTEN or 127.0.0.1:8080)");
  serve->callback([&] { run = [&] { return cmd_serve(o, listen); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return run();
  } catch (const ImportRejected& e) {
    std::cerr << "error: ValidationError: import rejected\n";
    for (const auto& v : e.violations()) {
      std::cerr << "  document " << v.document << (v.id.empty() ? "" : " (" + v.id + ")") << ": " << v.path << ": "
                << v.message << "\n";
    }
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
