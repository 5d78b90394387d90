#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include "artemis/bvh.hpp"
#include "artemis/error.hpp"
#include "artemis/geometry.hpp"

namespace artemis {

/// Point in normalized device coordinates: x right, y up, both in [-1, 1]
/// for the visible viewport.
struct ScreenPoint {
  double x = 0.0;
  double y = 0.0;
  friend constexpr bool operator==(const ScreenPoint&, const ScreenPoint&) = default;
};

/**
 * Pinhole camera. The constructor orthonormalizes `up` against `look_dir`
 * and throws InvalidArgument for a degenerate pose.
 */
class CameraPose {
 public:
  CameraPose() : CameraPose({0, 0, 0}, {0, 0, -1}, {0, 1, 0}, std::numbers::pi / 2, 1.0, 0.01, 100.0) {}

  CameraPose(const Vec3& eye, const Vec3& look_dir, const Vec3& up, double vfov, double aspect, double near,
             double far)
      : eye_(eye), vfov_(vfov), aspect_(aspect), near_(near), far_(far) {
    if (!(vfov > 0.0 && vfov < std::numbers::pi)) throw Error(ErrorCode::InvalidArgument, "vfov must lie in (0, pi)");
    if (!(aspect > 0.0) || !std::isfinite(aspect)) throw Error(ErrorCode::InvalidArgument, "aspect must be > 0");
    if (!(near > 0.0 && near < far) || !std::isfinite(far)) {
      throw Error(ErrorCode::InvalidArgument, "clip distances must satisfy 0 < near < far");
    }
    if (!(length(look_dir) > 0.0)) throw Error(ErrorCode::InvalidArgument, "look_dir must be non-zero");
    look_ = normalized(look_dir);
    const Vec3 r = cross(look_, up);
    if (!(length(r) > 1e-12 * std::max(1.0, length(up)))) {
      throw Error(ErrorCode::InvalidArgument, "up must not be parallel to look_dir");
    }
    right_ = normalized(r);
    up_ = cross(right_, look_);
  }

  const Vec3& eye() const { return eye_; }
  const Vec3& look_dir() const { return look_; }
  const Vec3& up() const { return up_; }
  const Vec3& right() const { return right_; }
  double vfov() const { return vfov_; }
  double aspect() const { return aspect_; }
  double near() const { return near_; }
  double far() const { return far_; }

  CameraPose transformed(const RigidTransform& xf) const {
    return {xf.apply(eye_), xf.rotate(look_), xf.rotate(up_), vfov_, aspect_, near_, far_};
  }

 private:
  Vec3 eye_;
  Vec3 look_;
  Vec3 up_;
  Vec3 right_;
  double vfov_;
  double aspect_;
  double near_;
  double far_;
};

inline Ray pick_ray(const CameraPose& cam, const ScreenPoint& p) {
  const double ty = std::tan(cam.vfov() / 2.0);
  const double tx = ty * cam.aspect();
  const Vec3 dir = cam.look_dir() + cam.right() * (p.x * tx) + cam.up() * (p.y * ty);
  return {cam.eye(), normalized(dir)};
}

struct Projection {
  ScreenPoint ndc;
  double depth = 0.0;   // distance from the eye along the pick ray
  double view_z = 0.0;  // eye-space depth along look_dir
};

/// Perspective projection; nullopt when q lies in front of the near plane
/// (including behind the eye).
inline std::optional<Projection> project_point(const CameraPose& cam, const Vec3& q) {
  const Vec3 d = q - cam.eye();
  const double z = dot(d, cam.look_dir());
  if (!(z >= cam.near())) return std::nullopt;
  const double ty = std::tan(cam.vfov() / 2.0);
  const double tx = ty * cam.aspect();
  const ScreenPoint ndc{dot(d, cam.right()) / (z * tx), dot(d, cam.up()) / (z * ty)};
  return Projection{ndc, length(d), z};
}

}  // namespace artemis
