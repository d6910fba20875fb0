#pragma once

// Randomized finite-difference audit of every analytic Jacobian the library
// ships. Each factor family draws a seeded stream of random instances,
// compares each analytic block against the manifold central-difference
// oracle, and keeps the worst instance's full matrices so mismatches can be
// dumped as CSV heatmaps. The `jacobian-check` command and the acceptance
// harness both run this same code path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slamf/imu.hpp"
#include "slamf/numdiff.hpp"
#include "slamf/photometric.hpp"
#include "slamf/plucker.hpp"
#include "slamf/pose_graph.hpp"
#include "slamf/reprojection.hpp"
#include "slamf/rng.hpp"

namespace slamf {

// Audit result for one Jacobian block of one factor family. The scaled error
// metric matches the oracle module: with denom_floor = abs_floor / tolerance,
// "max_scaled_error <= tolerance" is equivalent to
// "|a - n| <= max(tolerance * max(|a|, |n|), abs_floor)" entrywise.
struct JacobianBlockReport {
  std::string family;
  std::string block;
  double tolerance = 1e-5;
  double denom_floor = 1e-2;
  int instances = 0;
  double max_scaled_error = 0.0;
  int worst_instance = -1;  // attempt index within the family stream
  MatX worst_analytic;
  MatX worst_numeric;

  bool passed(int required_instances) const {
    return instances >= required_instances && max_scaled_error <= tolerance;
  }
  std::string label() const { return family + "/" + block; }
};

struct JacobianSuiteOptions {
  std::vector<std::string> families;  // empty = every known family
  int instances = 120;                // valid instances required per block
  double step = 0.0;                  // 0 = per-family default (1e-6; 1e-5 photometric)
  std::uint64_t seed = 901;
};

inline std::vector<std::string> jacobian_suite_families() {
  return {"reprojection", "photometric", "relative_pose", "plucker_line", "imu_preintegration"};
}

namespace detail {

inline double suite_step(const JacobianSuiteOptions& opts, double fallback) {
  return opts.step > 0.0 ? opts.step : fallback;
}

inline Vec3 suite_vec3(SplitMix64& rng, double scale) {
  return Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale),
              rng.uniform(-scale, scale));
}

inline Vec3 suite_rotation_vector(SplitMix64& rng, double max_angle) {
  Vec3 dir = rng.gaussian_vec3();
  while (dir.norm() < 1e-8) dir = rng.gaussian_vec3();
  return dir.normalized() * rng.uniform(0.0, max_angle);
}

inline Quat suite_unit_quaternion(SplitMix64& rng) {
  Quat q(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
  while (q.norm() < 1e-8) q = Quat(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
  return q.normalized();
}

inline PoseSE3 suite_pose(SplitMix64& rng, double rot_scale, double trans_scale) {
  return PoseSE3{exp_so3(suite_rotation_vector(rng, rot_scale)),
                 suite_vec3(rng, trans_scale)};
}

inline void fold_comparison(JacobianBlockReport& report, int instance, const MatX& analytic,
                            const MatX& numeric) {
  const double err = scaled_jacobian_error(analytic, numeric, report.denom_floor);
  if (report.worst_instance < 0 || err > report.max_scaled_error) {
    report.worst_instance = instance;
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
  report.max_scaled_error = std::max(report.max_scaled_error, err);
  ++report.instances;
}

inline void run_reprojection_family(const JacobianSuiteOptions& opts,
                                    std::vector<JacobianBlockReport>& out) {
  const PerturbationSpec spec{suite_step(opts, 1e-6)};
  JacobianBlockReport pose{"reprojection", "pose", 1e-5, 1e-2};
  JacobianBlockReport point{"reprojection", "point", 1e-5, 1e-2};
  JacobianBlockReport intrinsics_block{"reprojection", "intrinsics", 1e-5, 1e-2};
  JacobianBlockReport inverse_depth{"reprojection", "inverse_depth", 1e-5, 1e-2};
  JacobianBlockReport quaternion{"reprojection", "quaternion", 1e-5, 1e-2};
  SplitMix64 rng(opts.seed + 1);
  const int cap = 50 * opts.instances;

  // Pose and point blocks through the point-landmark factor.
  for (int i = 0, done = 0; i < cap && done < opts.instances; ++i) {
    const PoseSE3 T{exp_so3(suite_rotation_vector(rng, 2.0)), suite_vec3(rng, 1.5)};
    const Vec3 Xc(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(0.5, 10.0));
    const Vec3 X = T.inverse() * Xc;
    const Intrinsics K{rng.uniform(100.0, 600.0), rng.uniform(100.0, 600.0),
                       rng.uniform(200.0, 400.0), rng.uniform(100.0, 300.0)};
    const auto center = project(K, Xc);
    if (!center) continue;
    const Vec2 observed = *center + Vec2(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));

    Problem problem;
    problem.add_variable(1, VariableKind::PoseSE3Global, T);
    problem.add_variable(2, VariableKind::Point3, X);
    const ReprojectionFactor factor(1, 2, K, observed);
    const auto report = check_factor_jacobians(problem, factor, spec, pose.denom_floor);
    if (!report.oracle_ok) continue;
    fold_comparison(pose, i, report.analytic[0], report.numeric[0]);
    fold_comparison(point, i, report.analytic[1], report.numeric[1]);
    ++done;
  }

  // Self-calibration block: re-projection of a back-projected pixel, probed
  // through the additive intrinsics update.
  for (int i = 0, done = 0; i < cap && done < opts.instances; ++i) {
    const PoseSE3 T = suite_pose(rng, 2.0, 1.0);
    const Intrinsics K{rng.uniform(100.0, 600.0), rng.uniform(150.0, 700.0),
                       rng.uniform(200.0, 400.0), rng.uniform(100.0, 300.0)};
    const Vec2 p1(rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0));
    const double z = rng.uniform(0.5, 10.0);
    if ((T * back_project(K, p1, z)).z() < 0.2) continue;
    const auto analytic = jacobian_intrinsics(T, K, p1, z);
    if (!analytic) continue;
    const auto fn = [&](const Value& v) -> std::optional<VecX> {
      const Intrinsics& k = std::get<Intrinsics>(v);
      const auto px = project(k, T * back_project(k, p1, z));
      if (!px) return std::nullopt;
      return VecX(*px);
    };
    const auto numeric = numeric_value_jacobian(fn, VariableKind::IntrinsicsVar, K, spec);
    if (!numeric) continue;
    fold_comparison(intrinsics_block, i, *analytic, *numeric);
    ++done;
  }

  // Host inverse-depth block of the re-projected pixel.
  for (int i = 0, done = 0; i < cap && done < opts.instances; ++i) {
    const PoseSE3 T = suite_pose(rng, 2.0, 1.0);
    const Intrinsics K{rng.uniform(100.0, 600.0), rng.uniform(150.0, 700.0),
                       rng.uniform(200.0, 400.0), rng.uniform(100.0, 300.0)};
    const Vec2 p1(rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0));
    const double rho = rng.uniform(0.1, 2.0);
    if ((T * back_project(K, p1, 1.0 / rho)).z() < 0.2) continue;
    const auto analytic = jacobian_inverse_depth(T, K, p1, rho);
    if (!analytic) continue;
    const auto fn = [&](const Value& v) -> std::optional<VecX> {
      const double r = std::get<double>(v);
      if (r <= 0.0) return std::nullopt;
      const auto px = project(K, T * back_project(K, p1, 1.0 / r));
      if (!px) return std::nullopt;
      return VecX(*px);
    };
    const auto numeric = numeric_value_jacobian(fn, VariableKind::InverseDepth, rho, spec);
    if (!numeric) continue;
    fold_comparison(inverse_depth, i, MatX(*analytic), MatX(*numeric));
    ++done;
  }

  // Rotation of a point by a quaternion, probed through the normalized
  // imaginary part at the identity.
  for (int i = 0; i < opts.instances; ++i) {
    const Vec3 X = suite_vec3(rng, 3.0);
    const auto fn = [&X](const Value& v) -> std::optional<VecX> {
      const Vec3& im = std::get<Vec3>(v);
      const Quat q = Quat(1.0, im.x(), im.y(), im.z()).normalized();
      return VecX(quat_rotate(q, X));
    };
    const Vec3 zero = Vec3::Zero();
    const auto numeric = numeric_value_jacobian(fn, VariableKind::Point3, zero, spec);
    if (!numeric) continue;
    fold_comparison(quaternion, i, MatX(jacobian_quaternion(X)), *numeric);
  }

  out.push_back(std::move(pose));
  out.push_back(std::move(point));
  out.push_back(std::move(intrinsics_block));
  out.push_back(std::move(inverse_depth));
  out.push_back(std::move(quaternion));
}

inline std::shared_ptr<const IntensitySource> suite_field(SplitMix64& rng) {
  std::vector<GaussianBlob> blobs;
  for (int i = 0; i < 3; ++i) {
    GaussianBlob b;
    b.center = Vec2(rng.uniform(34.0, 94.0), rng.uniform(34.0, 94.0));
    b.sigma = rng.uniform(10.0, 20.0);
    b.amplitude = rng.uniform(20.0, 120.0);
    blobs.push_back(b);
  }
  return std::make_shared<GaussianFieldSource>(std::move(blobs));
}

inline void run_photometric_family(const JacobianSuiteOptions& opts,
                                   std::vector<JacobianBlockReport>& out) {
  // Intensity curvature makes the quadratic finite-difference remainder the
  // binding term, hence the larger default probe and looser tolerance.
  const PerturbationSpec spec{suite_step(opts, 1e-5)};
  JacobianBlockReport warp{"photometric", "warp_pose", 1e-4, 1e-3};
  SplitMix64 rng(opts.seed + 2);
  const int cap = 50 * opts.instances;

  for (int i = 0, done = 0; i < cap && done < opts.instances; ++i) {
    const auto field1 = suite_field(rng);
    const auto field2 = suite_field(rng);
    const Intrinsics K{rng.uniform(80.0, 120.0), rng.uniform(80.0, 120.0), 64.0, 64.0};
    Vec6 xi;
    xi.head<3>() = suite_rotation_vector(rng, 0.3);
    xi.tail<3>() = suite_vec3(rng, 0.5);
    const PoseSE3 T = exp_se3(xi);
    const Vec2 p2(rng.uniform(20.0, 108.0), rng.uniform(20.0, 108.0));
    const Vec3 X = T.inverse() * back_project(K, p2, rng.uniform(1.0, 5.0));
    if (X.z() < 0.2) continue;

    Problem problem;
    problem.add_variable(0, VariableKind::PoseSE3Global, T);
    const PhotometricFactor factor(0, field1, field2, X, K);
    const auto report = check_factor_jacobians(problem, factor, spec, warp.denom_floor);
    if (!report.oracle_ok) continue;
    fold_comparison(warp, i, report.analytic[0], report.numeric[0]);
    ++done;
  }

  out.push_back(std::move(warp));
}

inline void run_relative_pose_family(const JacobianSuiteOptions& opts,
                                     std::vector<JacobianBlockReport>& out) {
  const PerturbationSpec spec{suite_step(opts, 1e-6)};
  JacobianBlockReport pose_i{"relative_pose", "pose_i", 1e-5, 1e-2};
  JacobianBlockReport pose_j{"relative_pose", "pose_j", 1e-5, 1e-2};
  SplitMix64 rng(opts.seed + 3);
  const VariableKind kinds[] = {VariableKind::PoseSE3Global, VariableKind::PoseSE3Local};
  const int cap = 50 * opts.instances;

  // Consistent measurements: at zero residual the blocks are well defined for
  // either registration convention, so both are cycled through.
  for (int i = 0, done = 0; i < cap && done < opts.instances; ++i) {
    const PoseSE3 x_i = suite_pose(rng, 1.5, 2.0);
    const PoseSE3 x_j = suite_pose(rng, 1.5, 2.0);
    const PoseSE3 z = x_i.inverse() * x_j;

    Problem problem;
    problem.add_variable(0, kinds[i % 2], x_i);
    problem.add_variable(1, kinds[(i / 2) % 2], x_j);
    const RelativePoseFactor factor(0, 1, z);
    const auto report = check_factor_jacobians(problem, factor, spec, pose_i.denom_floor);
    if (!report.oracle_ok) continue;
    fold_comparison(pose_i, i, report.analytic[0], report.numeric[0]);
    fold_comparison(pose_j, i, report.analytic[1], report.numeric[1]);
    ++done;
  }

  out.push_back(std::move(pose_i));
  out.push_back(std::move(pose_j));
}

inline void run_plucker_family(const JacobianSuiteOptions& opts,
                               std::vector<JacobianBlockReport>& out) {
  const PerturbationSpec spec{suite_step(opts, 1e-6)};
  JacobianBlockReport line{"plucker_line", "line", 1e-5, 1e-2};
  JacobianBlockReport pose{"plucker_line", "pose", 1e-5, 1e-2};
  SplitMix64 rng(opts.seed + 4);
  const VariableKind kinds[] = {VariableKind::PoseSE3Global, VariableKind::PoseSE3Local};
  const int cap = 50 * opts.instances;

  for (int i = 0, done = 0; i < cap && done < opts.instances; ++i) {
    const Intrinsics K{rng.uniform(80.0, 120.0), rng.uniform(80.0, 120.0), 64.0, 64.0};
    const PoseSE3 T_cw = suite_pose(rng, 1.0, 1.5);
    const Vec3 pc1(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(2.0, 8.0));
    const Vec3 pc2(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(2.0, 8.0));
    if ((pc2 - pc1).norm() < 0.5) continue;
    const PoseSE3 T_wc = T_cw.inverse();
    const PluckerLine L_w = line_from_two_points(T_wc * pc1, T_wc * pc2);
    if (L_w.m.norm() < 1e-2 || L_w.d.norm() < 1e-2) continue;
    const auto p1 = project(K, pc1), p2 = project(K, pc2);
    if (!p1 || !p2) continue;

    LineObservation obs;
    obs.x_s = Vec3(p1->x() + rng.uniform(-2.0, 2.0), p1->y() + rng.uniform(-2.0, 2.0), 1.0);
    obs.x_e = Vec3(p2->x() + rng.uniform(-2.0, 2.0), p2->y() + rng.uniform(-2.0, 2.0), 1.0);

    Problem problem;
    problem.add_variable(0, VariableKind::OrthonormalLineVar, orthonormal_from_plucker(L_w));
    problem.add_variable(1, kinds[i % 2], T_cw);
    const PluckerLineFactor factor(0, 1, obs, K);
    const auto report = check_factor_jacobians(problem, factor, spec, line.denom_floor);
    if (!report.oracle_ok) continue;
    fold_comparison(line, i, report.analytic[0], report.numeric[0]);
    fold_comparison(pose, i, report.analytic[1], report.numeric[1]);
    ++done;
  }

  out.push_back(std::move(line));
  out.push_back(std::move(pose));
}

inline void run_imu_family(const JacobianSuiteOptions& opts,
                           std::vector<JacobianBlockReport>& out) {
  const PerturbationSpec spec{suite_step(opts, 1e-6)};
  JacobianBlockReport state_i{"imu_preintegration", "state_i", 1e-4, 1e-3};
  JacobianBlockReport state_j{"imu_preintegration", "state_j", 1e-4, 1e-3};
  JacobianBlockReport bias_accel{"imu_preintegration", "accel_bias_i", 1e-4, 1e-3};
  JacobianBlockReport bias_gyro{"imu_preintegration", "gyro_bias_i", 1e-4, 1e-3};
  SplitMix64 rng(opts.seed + 5);
  const GravityVector g;

  for (int i = 0; i < opts.instances; ++i) {
    const Vec3 ba_lin = suite_vec3(rng, 0.05);
    const Vec3 bg_lin = suite_vec3(rng, 0.01);

    Vec3 accel_amp, accel_freq, accel_phase, gyro_amp, gyro_freq, gyro_phase;
    for (int axis = 0; axis < 3; ++axis) {
      accel_amp[axis] = rng.uniform(0.45, 1.5);
      accel_freq[axis] = rng.uniform(1.0, 5.0);
      accel_phase[axis] = rng.uniform(0.0, 6.28318530717958647692);
      gyro_amp[axis] = rng.uniform(0.24, 0.8);
      gyro_freq[axis] = rng.uniform(1.0, 5.0);
      gyro_phase[axis] = rng.uniform(0.0, 6.28318530717958647692);
    }
    const Vec3 accel_offset = suite_vec3(rng, 2.0);
    const Vec3 gyro_offset = suite_vec3(rng, 0.3);

    std::vector<ImuSample> samples;
    for (int k = 0; k <= 20; ++k) {
      ImuSample s;
      s.t = static_cast<double>(k) / 100.0;
      for (int axis = 0; axis < 3; ++axis) {
        s.a[axis] = accel_offset[axis] +
                    accel_amp[axis] * std::sin(accel_freq[axis] * s.t + accel_phase[axis]);
        s.omega[axis] = gyro_offset[axis] +
                        gyro_amp[axis] * std::sin(gyro_freq[axis] * s.t + gyro_phase[axis]);
      }
      s.a += ba_lin;
      s.omega += bg_lin;
      samples.push_back(s);
    }
    const Preintegration pre = integrate_sequence(make_preintegration(ba_lin, bg_lin), samples);

    // The accelerometer-bias offset exercises the exactly linear correction;
    // the gyroscope bias sits at the linearization point, where the
    // first-order rotation correction has a well-defined exact derivative.
    ImuState si;
    si.p = suite_vec3(rng, 3.0);
    si.q = suite_unit_quaternion(rng);
    si.v = suite_vec3(rng, 1.5);
    si.ba = ba_lin + suite_vec3(rng, 3e-3);
    si.bg = bg_lin;
    ImuState sj = propagate_state(si, pre, g);
    sj.p += suite_vec3(rng, 1e-2);
    sj.q = quat_multiply(sj.q, quat_from_small_angle(suite_vec3(rng, 1e-2))).normalized();
    sj.v += suite_vec3(rng, 1e-2);
    sj.ba += suite_vec3(rng, 1e-3);
    sj.bg += suite_vec3(rng, 1e-4);

    Problem problem;
    problem.add_variable(0, VariableKind::ImuStateVar, si);
    problem.add_variable(1, VariableKind::ImuStateVar, sj);
    const ImuFactor factor(0, 1, pre, g);
    const auto report = check_factor_jacobians(problem, factor, spec, state_i.denom_floor);
    if (!report.oracle_ok) continue;
    fold_comparison(state_i, i, report.analytic[0], report.numeric[0]);
    fold_comparison(state_j, i, report.analytic[1], report.numeric[1]);
    fold_comparison(bias_accel, i, MatX(report.analytic[0].middleCols(9, 3)),
                    MatX(report.numeric[0].middleCols(9, 3)));
    fold_comparison(bias_gyro, i, MatX(report.analytic[0].middleCols(12, 3)),
                    MatX(report.numeric[0].middleCols(12, 3)));
  }

  out.push_back(std::move(state_i));
  out.push_back(std::move(state_j));
  out.push_back(std::move(bias_accel));
  out.push_back(std::move(bias_gyro));
}

}  // namespace detail

inline std::vector<JacobianBlockReport> run_jacobian_suite(const JacobianSuiteOptions& opts = {}) {
  if (opts.instances < 1) {
    throw std::invalid_argument("jacobian suite requires instances >= 1");
  }
  const std::vector<std::string> families =
      opts.families.empty() ? jacobian_suite_families() : opts.families;
  std::vector<JacobianBlockReport> out;
  for (const std::string& family : families) {
    if (family == "reprojection") {
      detail::run_reprojection_family(opts, out);
    } else if (family == "photometric") {
      detail::run_photometric_family(opts, out);
    } else if (family == "relative_pose") {
      detail::run_relative_pose_family(opts, out);
    } else if (family == "plucker_line") {
      detail::run_plucker_family(opts, out);
    } else if (family == "imu_preintegration") {
      detail::run_imu_family(opts, out);
    } else {
      std::string known;
      for (const std::string& f : jacobian_suite_families()) {
        known += (known.empty() ? "" : ", ") + f;
      }
      throw std::invalid_argument("unknown factor family '" + family + "' (expected one of " +
                                  known + ")");
    }
  }
  return out;
}

// Fixed-width summary, one line per audited block.
inline std::string jacobian_suite_table(const std::vector<JacobianBlockReport>& reports,
                                        int required_instances) {
  std::string out = "block                              instances  max_rel_err  tolerance  status\n";
  char line[160];
  for (const JacobianBlockReport& r : reports) {
    std::snprintf(line, sizeof line, "%-34s %9d  %11.3e  %9.0e  %s\n", r.label().c_str(),
                  r.instances, r.max_scaled_error, r.tolerance,
                  r.passed(required_instances) ? "pass" : "FAIL");
    out += line;
  }
  return out;
}

// Entry-by-entry dump of the worst instance of one block.
inline std::string jacobian_mismatch_csv(const JacobianBlockReport& report) {
  std::string out = "row,col,analytic,numeric,rel_err\n";
  char line[200];
  for (int row = 0; row < report.worst_analytic.rows(); ++row) {
    for (int col = 0; col < report.worst_analytic.cols(); ++col) {
      const double a = report.worst_analytic(row, col);
      const double n = report.worst_numeric(row, col);
      const double denom = std::max({std::abs(a), std::abs(n), report.denom_floor});
      std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g\n", row, col, a, n,
                    std::abs(a - n) / denom);
      out += line;
    }
  }
  return out;
}

}  // namespace slamf
