#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "zfusion/box.hpp"
#include "zfusion/errors.hpp"
#include "zfusion/rng.hpp"
#include "zfusion/tensor.hpp"

namespace zfusion {

/// One radar return: position in meters, ego-motion-compensated radial
/// velocity in m/s.
struct RadarPoint {
  double x = 0, y = 0, z = 0;
  double v_r = 0;
};

/// Axis-aligned 3D region. Membership is half-open per axis: lo <= c < hi.
struct RangeSpec {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{1, 1, 1};

  bool contains(double x, double y, double z) const {
    const double c[3] = {x, y, z};
    for (int a = 0; a < 3; ++a) {
      if (!(c[a] >= lo[a] && c[a] < hi[a])) return false;
    }
    return true;
  }
  double extent(int axis) const { return hi[axis] - lo[axis]; }
};

inline void validate_range(const RangeSpec& r, const char* who) {
  for (int a = 0; a < 3; ++a) {
    if (!(r.lo[a] < r.hi[a])) {
      throw ArgumentError(std::string(who) + ": range min must be < max on axis " +
                          std::to_string(a));
    }
  }
}

/// The radar point-cloud range used by the full-scale pipeline.
inline RangeSpec default_pcr() {
  return RangeSpec{{0.0, -25.6, -3.0}, {51.2, 25.6, 2.0}};
}

struct VoxelSpec {
  std::array<double, 3> size{0.16, 0.16, 0.24};
};

/// Number of whole voxels per axis; a trailing partial voxel is dropped.
inline std::array<std::int64_t, 3> voxel_grid_dims(const VoxelSpec& v, const RangeSpec& r) {
  std::array<std::int64_t, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    if (!(v.size[a] > 0)) throw ArgumentError("voxel size must be positive");
    dims[a] = static_cast<std::int64_t>(std::floor(r.extent(a) / v.size[a] + 1e-9));
    if (dims[a] < 1) throw ArgumentError("voxel grid has no whole voxel on some axis");
  }
  return dims;
}

struct Voxel {
  std::vector<RadarPoint> points;

  /// mean of {x, y, z, v_r} over the contained points, plus the count
  std::array<double, 5> feature() const {
    std::array<double, 5> f{0, 0, 0, 0, 0};
    for (const RadarPoint& p : points) {
      f[0] += p.x;
      f[1] += p.y;
      f[2] += p.z;
      f[3] += p.v_r;
    }
    const double n = static_cast<double>(points.size());
    if (!points.empty()) {
      for (int i = 0; i < 4; ++i) f[i] /= n;
    }
    f[4] = n;
    return f;
  }
};

using VoxelIndex = std::array<std::int64_t, 3>;

struct VoxelGrid {
  std::array<std::int64_t, 3> dims{};
  VoxelSpec spec;
  RangeSpec range;
  std::map<VoxelIndex, Voxel> cells;  // ordered for deterministic iteration

  std::size_t stored_points() const {
    std::size_t n = 0;
    for (const auto& [idx, v] : cells) n += v.points.size();
    return n;
  }
};

/// Keep exactly the points with lo <= coord < hi on all three axes, in
/// input order.
inline std::vector<RadarPoint> filter_pcr(const std::vector<RadarPoint>& points,
                                          const RangeSpec& r) {
  validate_range(r, "filter_pcr");
  std::vector<RadarPoint> out;
  out.reserve(points.size());
  for (const RadarPoint& p : points) {
    if (r.contains(p.x, p.y, p.z)) out.push_back(p);
  }
  return out;
}

/// Bin points into voxels: index = floor((coord - lo) / size). Points must
/// already be range-filtered; a point outside the range is a contract
/// violation. Points falling in a dropped trailing partial voxel are
/// silently skipped.
inline VoxelGrid voxelize(const std::vector<RadarPoint>& points, const VoxelSpec& spec,
                          const RangeSpec& range) {
  validate_range(range, "voxelize");
  VoxelGrid grid;
  grid.dims = voxel_grid_dims(spec, range);
  grid.spec = spec;
  grid.range = range;
  for (const RadarPoint& p : points) {
    if (!range.contains(p.x, p.y, p.z)) {
      throw ContractError("voxelize: point outside range; filter_pcr first");
    }
    const double c[3] = {p.x, p.y, p.z};
    VoxelIndex idx{};
    bool in_grid = true;
    for (int a = 0; a < 3; ++a) {
      idx[a] = static_cast<std::int64_t>(std::floor((c[a] - range.lo[a]) / spec.size[a]));
      if (idx[a] < 0) idx[a] = 0;  // guard against roundoff just below lo
      if (idx[a] >= grid.dims[a]) in_grid = false;
    }
    if (in_grid) grid.cells[idx].points.push_back(p);
  }
  return grid;
}

// ---------------------------------------------------------------------------
// rigid transforms (also carry the augmentation flip/scale)

/// Maps points as  p' = scale * R * flip(p) + t  where flip negates y when
/// flip_y is set. Ego poses use flip_y = false, scale = 1.
struct RigidTransform {
  std::array<std::array<double, 3>, 3> R{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  std::array<double, 3> t{0, 0, 0};
  bool flip_y = false;
  double scale = 1.0;
};

inline void validate_transform(const RigidTransform& rt, const char* who) {
  if (!(rt.scale > 0)) throw ArgumentError(std::string(who) + ": scale must be positive");
  // R^T R == I within 1e-10
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += rt.R[k][i] * rt.R[k][j];
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - want) > 1e-10) {
        throw ArgumentError(std::string(who) + ": rotation not orthonormal");
      }
    }
  }
}

inline RigidTransform z_rotation(double angle) {
  RigidTransform rt;
  const double c = std::cos(angle), s = std::sin(angle);
  rt.R = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  return rt;
}

inline bool is_pure_rigid(const RigidTransform& rt) {
  return !rt.flip_y && rt.scale == 1.0;
}

/// a then b is compose(b, a): result(p) = b(a(p)). Pure rigid only.
inline RigidTransform compose_rigid(const RigidTransform& b, const RigidTransform& a) {
  if (!is_pure_rigid(a) || !is_pure_rigid(b)) {
    throw ArgumentError("compose_rigid: flip/scale transforms cannot be composed");
  }
  RigidTransform out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += b.R[i][k] * a.R[k][j];
      out.R[i][j] = s;
    }
    out.t[i] = b.t[i];
    for (int k = 0; k < 3; ++k) out.t[i] += b.R[i][k] * a.t[k];
  }
  return out;
}

inline RigidTransform invert_rigid(const RigidTransform& rt) {
  if (!is_pure_rigid(rt)) {
    throw ArgumentError("invert_rigid: flip/scale transforms cannot be inverted here");
  }
  RigidTransform out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.R[i][j] = rt.R[j][i];
    double s = 0;
    for (int k = 0; k < 3; ++k) s += rt.R[k][i] * rt.t[k];
    out.t[i] = -s;
  }
  return out;
}

inline RadarPoint apply_transform(const RigidTransform& rt, const RadarPoint& p) {
  const double in[3] = {p.x, rt.flip_y ? -p.y : p.y, p.z};
  double out[3];
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int k = 0; k < 3; ++k) s += rt.R[i][k] * in[k];
    out[i] = rt.scale * s + rt.t[i];
  }
  // distances scale, so velocities scale with them; flip/rotation leave the
  // radial magnitude alone
  return RadarPoint{out[0], out[1], out[2], rt.scale * p.v_r};
}

inline Box3D apply_transform(const RigidTransform& rt, const Box3D& b) {
  const RadarPoint c = apply_transform(rt, RadarPoint{b.x, b.y, b.z, 0});
  const double angle = std::atan2(rt.R[1][0], rt.R[0][0]);
  Box3D out = b;
  out.x = c.x;
  out.y = c.y;
  out.z = c.z;
  out.w = rt.scale * b.w;
  out.l = rt.scale * b.l;
  out.h = rt.scale * b.h;
  out.theta = normalize_yaw((rt.flip_y ? -b.theta : b.theta) + angle);
  return out;
}

// ---------------------------------------------------------------------------
// multi-frame stacking

struct Frame {
  std::vector<RadarPoint> points;
  RigidTransform pose;  // world <- ego
};

/// Concatenate the last k frames' points, each mapped into the newest
/// frame's ego coordinates via (pose_current)^-1 o (pose_past). Frames are
/// ordered oldest -> current.
inline std::vector<RadarPoint> stack_frames(const std::vector<Frame>& frames, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > frames.size()) {
    throw ArgumentError("stack_frames: k must be in [1, number of frames], got " +
                        std::to_string(k) + " with " + std::to_string(frames.size()) +
                        " frames");
  }
  const RigidTransform to_current = invert_rigid(frames.back().pose);
  std::vector<RadarPoint> out;
  for (std::size_t f = frames.size() - static_cast<std::size_t>(k); f < frames.size(); ++f) {
    const RigidTransform m = compose_rigid(to_current, frames[f].pose);
    for (const RadarPoint& p : frames[f].points) out.push_back(apply_transform(m, p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// recorded augmentation

struct AugmentSpec {
  double max_rotation = M_PI / 8.0;  // yaw drawn from [-max_rotation, max_rotation]
  double scale_min = 0.95;
  double scale_max = 1.05;
  double flip_y_prob = 0.5;
};

struct AugmentResult {
  std::vector<RadarPoint> points;
  std::vector<Box3D> boxes;
  RigidTransform recorded;
};

/// Draw one rotation/scale/flip triple from the seed (in that order), apply
/// the same transform to points and boxes, and hand back the transform so
/// the caller can replay it bit-exactly through apply_transform.
inline AugmentResult augment(const std::vector<RadarPoint>& points,
                             const std::vector<Box3D>& boxes, const AugmentSpec& spec,
                             std::uint64_t seed) {
  if (spec.flip_y_prob < 0 || spec.flip_y_prob > 1) {
    throw ArgumentError("augment: flip probability outside [0,1]");
  }
  if (!(spec.scale_min > 0) || spec.scale_min > spec.scale_max) {
    throw ArgumentError("augment: bad scale range");
  }
  Rng rng(seed);
  const double angle = rng.uniform(-spec.max_rotation, spec.max_rotation);
  const double scale = rng.uniform(spec.scale_min, spec.scale_max);
  const bool flip = rng.bernoulli(spec.flip_y_prob);

  AugmentResult res;
  res.recorded = z_rotation(angle);
  res.recorded.flip_y = flip;
  res.recorded.scale = scale;
  res.points.reserve(points.size());
  for (const RadarPoint& p : points) res.points.push_back(apply_transform(res.recorded, p));
  res.boxes.reserve(boxes.size());
  for (const Box3D& b : boxes) res.boxes.push_back(apply_transform(res.recorded, b));
  return res;
}

// ---------------------------------------------------------------------------
// point-cloud I/O: CSV (one "x,y,z,v_r" line per point) and the flat binary
// tensor layout (N x 4)

inline void write_points_csv(const std::string& path, const std::vector<RadarPoint>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  char line[160];
  for (const RadarPoint& p : points) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g\n", p.x, p.y, p.z, p.v_r);
    out << line;
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<RadarPoint> read_points_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<RadarPoint> points;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RadarPoint p;
    char extra;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf %c", &p.x, &p.y, &p.z, &p.v_r, &extra) != 4) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected x,y,z,v_r");
    }
    points.push_back(p);
  }
  return points;
}

inline Tensor points_to_tensor(const std::vector<RadarPoint>& points) {
  Tensor t({points.size(), 4});
  for (std::size_t i = 0; i < points.size(); ++i) {
    t(i, 0) = points[i].x;
    t(i, 1) = points[i].y;
    t(i, 2) = points[i].z;
    t(i, 3) = points[i].v_r;
  }
  return t;
}

inline std::vector<RadarPoint> tensor_to_points(const Tensor& t) {
  if (t.rank() != 2 || t.size(1) != 4) {
    throw ShapeError("tensor_to_points: want [N,4], got " + t.shape_str());
  }
  std::vector<RadarPoint> points(t.size(0));
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = RadarPoint{t(i, 0), t(i, 1), t(i, 2), t(i, 3)};
  }
  return points;
}

}  // namespace zfusion
