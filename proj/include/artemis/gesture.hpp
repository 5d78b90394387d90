#pragma once

// JSON forms of cameras and selection gestures, shared by the gesture files
// read by the CLI and the select endpoint of the service.
//
//   camera:  { "eye": [x,y,z], "look_dir": [x,y,z] | "target": [x,y,z],
//              "up": [x,y,z], "vfov": radians, "aspect": w/h,
//              "near": d, "far": d }
//   stroke:  { "samples": [[x,y], ...], "radius": r }      (NDC)
//   polygon: { "vertices": [[x,y], ...] }                  (NDC)
//   gesture: { "camera": ..., "mode": "brush"|"lasso", "stroke"|"polygon": ... }

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <variant>

#include "json.hpp"

#include "artemis/bvh.hpp"
#include "artemis/camera.hpp"
#include "artemis/error.hpp"
#include "artemis/selection.hpp"

namespace artemis {

enum class GestureMode { brush, lasso };

inline std::string_view to_string(GestureMode m) { return m == GestureMode::brush ? "brush" : "lasso"; }

inline std::optional<GestureMode> parse_gesture_mode(std::string_view s) {
  if (s == "brush") return GestureMode::brush;
  if (s == "lasso") return GestureMode::lasso;
  return std::nullopt;
}

struct Gesture {
  CameraPose camera;
  std::variant<BrushStroke, LassoPolygon> shape;

  GestureMode mode() const { return std::holds_alternative<BrushStroke>(shape) ? GestureMode::brush : GestureMode::lasso; }
};

namespace detail {

[[noreturn]] inline void bad_gesture(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidGesture, path + ": " + what, path);
}

inline double number_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) bad_gesture(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad_gesture(path, "expected a finite number");
  return v;
}

inline Vec3 vec3_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) bad_gesture(path, "expected [x, y, z]");
  return {number_at(j[0], path + "[0]"), number_at(j[1], path + "[1]"), number_at(j[2], path + "[2]")};
}

inline std::vector<ScreenPoint> points_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) bad_gesture(path, "expected an array of [x, y] points");
  std::vector<ScreenPoint> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (j[i].is_array() && j[i].size() == 2) {
      out.push_back({number_at(j[i][0], p + "[0]"), number_at(j[i][1], p + "[1]")});
    } else if (j[i].is_object() && j[i].contains("x") && j[i].contains("y")) {
      out.push_back({number_at(j[i]["x"], p + ".x"), number_at(j[i]["y"], p + ".y")});
    } else {
      bad_gesture(p, "expected [x, y]");
    }
  }
  return out;
}

}  // namespace detail

inline CameraPose camera_from_json(const nlohmann::json& j, const std::string& path = "$.camera") {
  if (!j.is_object()) detail::bad_gesture(path, "expected an object");
  if (!j.contains("eye")) detail::bad_gesture(path + ".eye", "required");
  const Vec3 eye = detail::vec3_at(j["eye"], path + ".eye");
  Vec3 look;
  if (j.contains("look_dir")) {
    look = detail::vec3_at(j["look_dir"], path + ".look_dir");
  } else if (j.contains("target")) {
    look = detail::vec3_at(j["target"], path + ".target") - eye;
  } else {
    detail::bad_gesture(path + ".look_dir", "required (or target)");
  }
  const Vec3 up = j.contains("up") ? detail::vec3_at(j["up"], path + ".up") : Vec3{0, 1, 0};
  auto num = [&](const char* key, double fallback) {
    return j.contains(key) ? detail::number_at(j[key], path + "." + key) : fallback;
  };
  try {
    return CameraPose(eye, look, up, num("vfov", std::numbers::pi / 3), num("aspect", 1.0), num("near", 0.01),
                      num("far", 1000.0));
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidGesture, path + ": " + e.what(), path);
  }
}

inline nlohmann::ordered_json camera_to_json(const CameraPose& c) {
  auto v = [](const Vec3& p) { return nlohmann::ordered_json::array({p.x, p.y, p.z}); };
  return {{"eye", v(c.eye())}, {"look_dir", v(c.look_dir())}, {"up", v(c.up())}, {"vfov", c.vfov()},
          {"aspect", c.aspect()}, {"near", c.near()}, {"far", c.far()}};
}

/// Parses a gesture object. When `mode` is given (the select endpoint
/// carries it in the path) a "mode" member is optional but must agree.
inline Gesture gesture_from_json(const nlohmann::json& j, std::optional<GestureMode> mode = std::nullopt) {
  if (!j.is_object()) detail::bad_gesture("$", "expected an object");
  if (j.contains("mode")) {
    const auto m = j["mode"].is_string() ? parse_gesture_mode(j["mode"].get<std::string>()) : std::nullopt;
    if (!m) detail::bad_gesture("$.mode", "must be \"brush\" or \"lasso\"");
    if (mode && *mode != *m) detail::bad_gesture("$.mode", "does not match the requested mode");
    mode = m;
  }
  if (!mode) detail::bad_gesture("$.mode", "required");
  if (!j.contains("camera")) detail::bad_gesture("$.camera", "required");
  Gesture g{camera_from_json(j["camera"]), BrushStroke{}};
  const bool has_stroke = j.contains("stroke"), has_polygon = j.contains("polygon");
  if (*mode == GestureMode::brush) {
    if (!has_stroke || has_polygon) detail::bad_gesture("$.stroke", "brush gestures carry exactly a stroke");
    const auto& s = j["stroke"];
    if (!s.is_object() || !s.contains("samples") || !s.contains("radius")) {
      detail::bad_gesture("$.stroke", "expected {samples, radius}");
    }
    g.shape = BrushStroke{detail::points_at(s["samples"], "$.stroke.samples"),
                          detail::number_at(s["radius"], "$.stroke.radius")};
  } else {
    if (!has_polygon || has_stroke) detail::bad_gesture("$.polygon", "lasso gestures carry exactly a polygon");
    const auto& p = j["polygon"];
    if (!p.is_object() || !p.contains("vertices")) detail::bad_gesture("$.polygon", "expected {vertices}");
    g.shape = LassoPolygon{detail::points_at(p["vertices"], "$.polygon.vertices")};
  }
  return g;
}

/// Runs the selection engine; engine validation errors surface as
/// InvalidGesture with the engine's code in the details.
inline SelectionSet run_gesture(const TriangleMesh& mesh, const BVH& bvh, const Gesture& g) {
  try {
    if (const auto* stroke = std::get_if<BrushStroke>(&g.shape)) return brush_select(mesh, bvh, g.camera, *stroke);
    return lasso_select(mesh, bvh, g.camera, std::get<LassoPolygon>(g.shape));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidStroke || e.code() == ErrorCode::InvalidPolygon) {
      throw Error(ErrorCode::InvalidGesture, e.what(), std::string(to_string(e.code())));
    }
    throw;
  }
}

/// Canonical selection response body, shared by CLI `--json` and the service.
inline nlohmann::ordered_json selection_to_json(const SelectionSet& s) {
  return {{"mesh_id", s.mesh_id}, {"faces", s.faces}};
}

}  // namespace artemis
