#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "zfusion/errors.hpp"

namespace zfusion {

enum class ClassId { kCar = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr int kNumClasses = 3;

inline const char* class_name(ClassId c) {
  switch (c) {
    case ClassId::kCar: return "car";
    case ClassId::kPedestrian: return "pedestrian";
    case ClassId::kCyclist: return "cyclist";
  }
  throw ArgumentError("class_name: bad class id");
}

inline ClassId class_from_name(const std::string& s) {
  if (s == "car") return ClassId::kCar;
  if (s == "pedestrian") return ClassId::kPedestrian;
  if (s == "cyclist") return ClassId::kCyclist;
  throw ArgumentError("unknown class label: " + s);
}

/// wrap an angle into (-pi, pi]
inline double normalize_yaw(double theta) {
  const double two_pi = 2.0 * M_PI;
  double t = std::fmod(theta, two_pi);
  if (t <= -M_PI) t += two_pi;
  if (t > M_PI) t -= two_pi;
  return t;
}

/// Oriented box: center (x,y,z), extents (w,l,h), yaw about the vertical
/// axis. `w` spans the local y direction, `l` the local x direction.
struct Box3D {
  double x = 0, y = 0, z = 0;
  double w = 1, l = 1, h = 1;
  double theta = 0;
  ClassId cls = ClassId::kCar;
  std::optional<double> score;
};

inline void validate_box(const Box3D& b, const char* who) {
  if (!(b.w > 0 && b.l > 0 && b.h > 0)) {
    throw ContractError(std::string(who) + ": degenerate box (nonpositive extent)");
  }
}

}  // namespace zfusion
