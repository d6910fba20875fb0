#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "slamf/camera.hpp"
#include "slamf/graph.hpp"
#include "slamf/image.hpp"
#include "slamf/imu.hpp"
#include "slamf/lie.hpp"
#include "slamf/plucker.hpp"
#include "slamf/pose_graph.hpp"
#include "slamf/rng.hpp"

namespace slamf {

// Ground-truth world shared by the end-to-end fixtures. Camera poses map
// world points into the camera frame (the same convention the reprojection
// residual uses), lines satisfy the Klein quadric by construction.
struct Scene {
  std::vector<PoseSE3> cameras;
  std::vector<Vec3> points;
  std::vector<PluckerLine> lines;
  Intrinsics intrinsics;
  std::uint64_t seed = 0;
};

struct PixelObservation {
  int camera = 0;
  int point = 0;
  Vec2 uv = Vec2::Zero();
};

struct BaFixture {
  Scene scene;
  std::vector<PixelObservation> observations;
};

struct LineObservationRecord {
  int camera = 0;
  int line = 0;
  LineObservation observation;
};

struct LineFixture {
  Scene scene;
  std::vector<LineObservationRecord> observations;
};

struct PoseGraphFixture {
  Problem problem;
  std::vector<PoseSE3> truth;
};

// Circle trajectory with sinusoidal yaw; twice continuously differentiable,
// so body rates and specific force have closed forms. radius = 0 and
// yaw_amplitude = 0 gives a stationary sensor.
struct TrajectorySpec {
  double radius = 1.0;          // m
  double angular_rate = 0.5;    // rad/s around the circle
  double height = 0.0;          // constant z, m
  double yaw_amplitude = 0.12;  // rad
  double yaw_frequency = 0.2;   // Hz
  double duration = 1.0;        // s
  double rate = 200.0;          // samples/s
};

struct ImuSequence {
  std::vector<ImuSample> samples;
  std::vector<ImuState> states;  // ground truth at each sample time
};

struct ImageFieldFixture {
  GaussianFieldSource field{std::vector<GaussianBlob>{}};
  ImageRaster raster;
};

namespace detail {

inline Mat3 rot_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r = Mat3::Identity();
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

// Camera-from-world pose for a camera at `center` whose optical axis points
// at `target`, with the image x axis kept horizontal.
inline PoseSE3 look_at(const Vec3& center, const Vec3& target) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = Vec3::UnitZ().cross(z);
  if (x.norm() < 1e-12) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r_wc;
  r_wc.col(0) = x;
  r_wc.col(1) = y;
  r_wc.col(2) = z;
  return PoseSE3{r_wc.transpose(), -(r_wc.transpose() * center)};
}

// Evenly spaced camera centers on a 120-degree arc of radius 6 facing the
// origin, where the point cloud lives.
inline std::vector<PoseSE3> arc_cameras(int n_cams) {
  std::vector<PoseSE3> out;
  constexpr double third_pi = 1.0471975511965976;
  for (int i = 0; i < n_cams; ++i) {
    const double angle =
        n_cams == 1 ? 0.0 : -third_pi + 2.0 * third_pi * i / (n_cams - 1);
    const Vec3 center(6.0 * std::cos(angle), 6.0 * std::sin(angle), 0.0);
    out.push_back(look_at(center, Vec3::Zero()));
  }
  return out;
}

inline Intrinsics scene_intrinsics() {
  Intrinsics k;
  k.fx = 500.0;
  k.fy = 500.0;
  k.cx = 320.0;
  k.cy = 320.0;
  return k;
}

inline bool depth_in_range(const PoseSE3& cam, const Vec3& point) {
  const double z = (cam * point).z();
  return z >= 0.3 && z <= 30.0;
}

}  // namespace detail

// Arc of cameras facing a random point cloud, plus every in-range pixel
// observation (exact projection + optional Gaussian pixel noise).
inline BaFixture make_ba_scene(int n_cams, int n_points, double pixel_noise_sigma,
                               std::uint64_t seed) {
  if (n_cams < 2) throw std::invalid_argument("make_ba_scene: need at least 2 cameras");
  if (n_points < 1) throw std::invalid_argument("make_ba_scene: need at least 1 point");

  SplitMix64 rng(seed);
  BaFixture out;
  out.scene.seed = seed;
  out.scene.intrinsics = detail::scene_intrinsics();
  out.scene.cameras = detail::arc_cameras(n_cams);
  for (int i = 0; i < n_points; ++i) {
    out.scene.points.emplace_back(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                  rng.uniform(-1.5, 1.5));
  }

  for (int c = 0; c < n_cams; ++c) {
    for (int p = 0; p < n_points; ++p) {
      if (!detail::depth_in_range(out.scene.cameras[c], out.scene.points[p])) continue;
      const auto uv = project(out.scene.intrinsics,
                              out.scene.cameras[c] * out.scene.points[p]);
      if (!uv) continue;
      Vec2 noisy = *uv;
      if (pixel_noise_sigma > 0.0) {
        noisy.x() += rng.gaussian(pixel_noise_sigma);
        noisy.y() += rng.gaussian(pixel_noise_sigma);
      }
      out.observations.push_back({c, p, noisy});
    }
  }

  std::vector<int> views(n_points, 0);
  for (const auto& obs : out.observations) ++views[obs.point];
  for (int p = 0; p < n_points; ++p) {
    if (views[p] < 2) {
      throw std::runtime_error("make_ba_scene: point " + std::to_string(p) +
                               " visible in fewer than 2 cameras");
    }
  }
  return out;
}

// Same camera arc observing random 3D line segments; observations are the
// projected segment endpoints, which lie exactly on the projected infinite
// line at the ground truth.
inline LineFixture make_line_scene(int n_cams, int n_lines, std::uint64_t seed) {
  if (n_cams < 2) throw std::invalid_argument("make_line_scene: need at least 2 cameras");
  if (n_lines < 1) throw std::invalid_argument("make_line_scene: need at least 1 line");

  SplitMix64 rng(seed);
  LineFixture out;
  out.scene.seed = seed;
  out.scene.intrinsics = detail::scene_intrinsics();
  out.scene.cameras = detail::arc_cameras(n_cams);

  std::vector<std::pair<Vec3, Vec3>> endpoints;
  for (int i = 0; i < n_lines; ++i) {
    const Vec3 p1(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    Vec3 delta(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (delta.norm() < 0.3) delta += Vec3(0.5, 0.5, 0.5);
    const Vec3 p2 = p1 + delta;
    endpoints.emplace_back(p1, p2);
    out.scene.lines.push_back(line_from_two_points(p1, p2));
  }

  for (int c = 0; c < n_cams; ++c) {
    for (int l = 0; l < n_lines; ++l) {
      const auto& [p1, p2] = endpoints[l];
      if (!detail::depth_in_range(out.scene.cameras[c], p1) ||
          !detail::depth_in_range(out.scene.cameras[c], p2)) {
        continue;
      }
      const auto s = project(out.scene.intrinsics, out.scene.cameras[c] * p1);
      const auto e = project(out.scene.intrinsics, out.scene.cameras[c] * p2);
      if (!s || !e) continue;
      LineObservation obs;
      obs.x_s = Vec3(s->x(), s->y(), 1.0);
      obs.x_e = Vec3(e->x(), e->y(), 1.0);
      out.observations.push_back({c, l, obs});
    }
  }
  return out;
}

// Ring of poses with sequential odometry edges and closing loop edges. The
// first node is fixed to pin the gauge; initial values are dead-reckoned
// from the (possibly noisy) sequential measurements, so a zero-noise graph
// starts exactly at the ground truth. Loop-closure edges carry the exact
// relative pose; the noise parameter applies to odometry only.
inline PoseGraphFixture make_pose_graph(int n_nodes, double odom_noise, int loop_edges,
                                        std::uint64_t seed) {
  if (n_nodes < 3) throw std::invalid_argument("make_pose_graph: need at least 3 nodes");
  if (loop_edges < 0) throw std::invalid_argument("make_pose_graph: negative loop count");

  SplitMix64 rng(seed);
  PoseGraphFixture out;
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (int i = 0; i < n_nodes; ++i) {
    const double angle = two_pi * i / n_nodes;
    PoseSE3 x;
    x.R = detail::rot_z(angle + two_pi / 4.0);
    x.t = Vec3(5.0 * std::cos(angle), 5.0 * std::sin(angle), 0.0);
    out.truth.push_back(x);
  }

  std::vector<PoseSE3> measurements;
  for (int i = 0; i + 1 < n_nodes; ++i) {
    PoseSE3 z = out.truth[i].inverse() * out.truth[i + 1];
    if (odom_noise > 0.0) z = z * exp_se3(rng.gaussian_vec6(odom_noise));
    measurements.push_back(z);
  }

  PoseSE3 running = out.truth[0];
  out.problem.add_variable(0, VariableKind::PoseSE3Local, running, true);
  for (int i = 1; i < n_nodes; ++i) {
    running = running * measurements[i - 1];
    running.reorthonormalize();
    out.problem.add_variable(i, VariableKind::PoseSE3Local, running);
  }
  for (int i = 0; i + 1 < n_nodes; ++i) {
    out.problem.add_factor(std::make_shared<RelativePoseFactor>(i, i + 1, measurements[i]));
  }
  for (int l = 0; l < loop_edges; ++l) {
    const int i = (l * n_nodes) / std::max(1, loop_edges);
    const int j = l == 0 ? n_nodes - 1 : (i + n_nodes / 2) % n_nodes;
    const int a = std::min(i, j), b = std::max(i, j);
    out.problem.add_factor(
        std::make_shared<RelativePoseFactor>(a, b, out.truth[a].inverse() * out.truth[b]));
  }
  return out;
}

// Samples the trajectory's closed-form specific force and body rate, applies
// biases and per-sample Gaussian noise, and returns the exact kinematic state
// at every sample time.
inline ImuSequence make_imu_sequence(const TrajectorySpec& traj, const Vec3& ba, const Vec3& bg,
                                     const ImuNoise& noise, const GravityVector& g,
                                     std::uint64_t seed) {
  if (traj.rate < 50.0) {
    throw std::invalid_argument("make_imu_sequence: rate must be at least 50 Hz");
  }
  if (traj.duration <= 0.0) {
    throw std::invalid_argument("make_imu_sequence: duration must be positive");
  }

  SplitMix64 rng(seed);
  ImuSequence out;
  constexpr double two_pi = 6.283185307179586476925286766559;
  const double omega = traj.angular_rate;
  const int n = static_cast<int>(std::lround(traj.duration * traj.rate));
  for (int k = 0; k <= n; ++k) {
    const double t = k / traj.rate;
    const double c = std::cos(omega * t), s = std::sin(omega * t);
    const Vec3 p(traj.radius * c, traj.radius * s, traj.height);
    const Vec3 v(-traj.radius * omega * s, traj.radius * omega * c, 0.0);
    const Vec3 acc(-traj.radius * omega * omega * c, -traj.radius * omega * omega * s, 0.0);
    const double yaw = traj.yaw_amplitude * std::sin(two_pi * traj.yaw_frequency * t);
    const double yaw_rate =
        traj.yaw_amplitude * two_pi * traj.yaw_frequency * std::cos(two_pi * traj.yaw_frequency * t);
    const Mat3 r = detail::rot_z(yaw);

    ImuSample sample;
    sample.t = t;
    sample.a = r.transpose() * (acc + g.g_w) + ba;
    sample.omega = Vec3(0.0, 0.0, yaw_rate) + bg;
    if (noise.sigma_a > 0.0) sample.a += rng.gaussian_vec3(noise.sigma_a);
    if (noise.sigma_g > 0.0) sample.omega += rng.gaussian_vec3(noise.sigma_g);
    out.samples.push_back(sample);

    ImuState state;
    state.p = p;
    state.q = Quat(r);
    state.v = v;
    state.ba = ba;
    state.bg = bg;
    out.states.push_back(state);
  }
  return out;
}

// Three well-separated Gaussian blobs with seeded centers, widths and
// amplitudes, plus a 128x128 rasterization sampled at integer pixels. The
// analytic field answers exact value/gradient queries for the oracles.
inline ImageFieldFixture make_image_field(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const Vec2 bases[3] = {Vec2(32.0, 40.0), Vec2(96.0, 48.0), Vec2(60.0, 100.0)};
  std::vector<GaussianBlob> blobs;
  for (const Vec2& base : bases) {
    GaussianBlob blob;
    blob.center = base + Vec2(rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0));
    blob.sigma = rng.uniform(6.0, 10.0);
    blob.amplitude = rng.uniform(80.0, 160.0);
    blobs.push_back(blob);
  }

  ImageFieldFixture out;
  out.field = GaussianFieldSource(blobs);
  out.raster = ImageRaster(128, 128);
  for (int v = 0; v < 128; ++v) {
    for (int u = 0; u < 128; ++u) {
      out.raster.at(u, v) = *out.field.value(Vec2(u, v));
    }
  }
  return out;
}

}  // namespace slamf
