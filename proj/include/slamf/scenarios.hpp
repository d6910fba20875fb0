#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "slamf/graph.hpp"
#include "slamf/photometric.hpp"
#include "slamf/plucker.hpp"
#include "slamf/pose_graph.hpp"
#include "slamf/reprojection.hpp"
#include "slamf/rng.hpp"
#include "slamf/synth.hpp"

namespace slamf {

namespace detail {

inline VecX uniform_delta(SplitMix64& rng, int dim, double scale) {
  VecX d(dim);
  for (int i = 0; i < dim; ++i) d(i) = rng.uniform(-scale, scale);
  return d;
}

}  // namespace detail

// Bundle-adjustment problem over a generated scene: cameras first (ids 0..),
// then points. The first two cameras stay fixed, pinning both the rigid gauge
// and the scale; the remaining states start from a seeded perturbation of the
// ground truth applied through the solver's own retraction.
struct BaProblem {
  Problem problem;
  std::size_t n_observations = 0;
  std::vector<VariableId> camera_ids;
  std::vector<VariableId> point_ids;
};

inline BaProblem assemble_ba_problem(const BaFixture& fx, double perturbation,
                                     std::uint64_t seed) {
  SplitMix64 rng(seed);
  BaProblem out;
  const int n_cams = static_cast<int>(fx.scene.cameras.size());
  for (int c = 0; c < n_cams; ++c) {
    Value value = fx.scene.cameras[c];
    const bool fixed = c < 2;
    if (!fixed && perturbation > 0.0) {
      value = apply_update(VariableKind::PoseSE3Global, value,
                           detail::uniform_delta(rng, 6, perturbation));
    }
    out.problem.add_variable(c, VariableKind::PoseSE3Global, value, fixed);
    out.camera_ids.push_back(c);
  }
  for (std::size_t p = 0; p < fx.scene.points.size(); ++p) {
    Value value = fx.scene.points[p];
    if (perturbation > 0.0) {
      value = apply_update(VariableKind::Point3, value,
                           detail::uniform_delta(rng, 3, perturbation));
    }
    const VariableId id = n_cams + static_cast<VariableId>(p);
    out.problem.add_variable(id, VariableKind::Point3, value);
    out.point_ids.push_back(id);
  }
  for (const auto& obs : fx.observations) {
    out.problem.add_factor(std::make_shared<ReprojectionFactor>(
        obs.camera, n_cams + obs.point, fx.scene.intrinsics, obs.uv));
  }
  out.n_observations = fx.observations.size();
  return out;
}

// Root-mean-square residual per pixel coordinate at the current state.
inline double pixel_rmse(const Problem& problem, std::size_t n_observations) {
  if (n_observations == 0) return 0.0;
  return std::sqrt(total_error(problem) / (2.0 * n_observations));
}

struct PgoProblem {
  Problem problem;
  std::vector<PoseSE3> truth;
};

inline PgoProblem assemble_pgo_problem(const PoseGraphFixture& fx, double perturbation,
                                       std::uint64_t seed) {
  SplitMix64 rng(seed);
  PgoProblem out;
  out.problem = fx.problem;
  out.truth = fx.truth;
  if (perturbation > 0.0) {
    for (const auto& [id, var] : fx.problem.variables()) {
      if (var.fixed) continue;
      out.problem.set_value(id, apply_update(var.kind, var.value,
                                             detail::uniform_delta(rng, 6, perturbation)));
    }
  }
  return out;
}

// Rebuilds the same graph with the variant edge parameterization; the
// world-frame measurements are reconstructed from the ground truth, which is
// exact for graphs generated without odometry noise.
inline Problem variant_edges_problem(const PgoProblem& src) {
  Problem out;
  for (const auto& [id, var] : src.problem.variables()) {
    out.add_variable(id, var.kind, var.value, var.fixed);
  }
  for (const auto& factor : src.problem.factors()) {
    const VariableId i = factor->variable_ids()[0];
    const VariableId j = factor->variable_ids()[1];
    out.add_factor(std::make_shared<RelativePoseFactorVariant>(
        i, j,
        src.truth[static_cast<std::size_t>(j)] *
            src.truth[static_cast<std::size_t>(i)].inverse(),
        factor->information()));
  }
  return out;
}

inline double max_node_twist_error(const Problem& problem,
                                   const std::vector<PoseSE3>& truth) {
  double worst = 0.0;
  for (const auto& [id, var] : problem.variables()) {
    const PoseSE3& x = std::get<PoseSE3>(var.value);
    const Vec6 e = log_se3(truth[static_cast<std::size_t>(id)].inverse() * x);
    worst = std::max(worst, e.norm());
  }
  return worst;
}

// Direct-alignment problem: one free pose observed through a grid of points
// on the z = 2 plane. Each host intensity is the field sampled at the target
// pose's projection, so the residual vanishes exactly at `target`.
struct PhotometricProblem {
  Problem problem;
  PoseSE3 target;
  std::size_t n_observations = 0;
};

inline PhotometricProblem assemble_photometric_problem(const ImageFieldFixture& fx,
                                                       double twist_scale,
                                                       std::uint64_t seed) {
  SplitMix64 rng(seed);
  PhotometricProblem out;
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi(i) = rng.uniform(-twist_scale, twist_scale);
  out.target = exp_se3(xi);

  Intrinsics k;
  k.fx = 100.0;
  k.fy = 100.0;
  k.cx = 64.0;
  k.cy = 64.0;
  const auto field = std::make_shared<GaussianFieldSource>(fx.field);
  out.problem.add_variable(0, VariableKind::PoseSE3Global, PoseSE3::Identity());
  for (double y = -0.5; y <= 0.51; y += 0.2) {
    for (double x = -0.5; x <= 0.51; x += 0.2) {
      const Vec3 point(x, y, 2.0);
      const auto uv = project(k, out.target * point);
      if (!uv) continue;
      const auto host = field->value(*uv);
      if (!host) continue;
      out.problem.add_factor(std::make_shared<PhotometricFactor>(
          0, std::make_shared<ConstantSource>(*host), field, point, k));
      ++out.n_observations;
    }
  }
  return out;
}

// Line-only refinement: cameras fixed at the ground truth, one orthonormal
// line variable per generated line, seeded through the line retraction.
struct LineBaProblem {
  Problem problem;
  std::vector<PluckerLine> truth_lines;
  std::size_t n_observations = 0;
  std::vector<VariableId> line_ids;
};

inline LineBaProblem assemble_line_ba_problem(const LineFixture& fx, double perturbation,
                                              std::uint64_t seed) {
  SplitMix64 rng(seed);
  LineBaProblem out;
  out.truth_lines = fx.scene.lines;
  for (std::size_t c = 0; c < fx.scene.cameras.size(); ++c) {
    out.problem.add_variable(static_cast<VariableId>(c), VariableKind::PoseSE3Global,
                             fx.scene.cameras[c], true);
  }
  for (std::size_t l = 0; l < fx.scene.lines.size(); ++l) {
    Value value = orthonormal_from_plucker(fx.scene.lines[l]);
    if (perturbation > 0.0) {
      value = apply_update(VariableKind::OrthonormalLineVar, value,
                           detail::uniform_delta(rng, 4, perturbation));
    }
    const VariableId id = 100 + static_cast<VariableId>(l);
    out.problem.add_variable(id, VariableKind::OrthonormalLineVar, value);
    out.line_ids.push_back(id);
  }
  for (const auto& rec : fx.observations) {
    out.problem.add_factor(std::make_shared<PluckerLineFactor>(
        100 + rec.line, rec.camera, rec.observation, fx.scene.intrinsics));
  }
  out.n_observations = fx.observations.size();
  return out;
}

inline double line_residual_rms(const Problem& problem, std::size_t n_observations) {
  if (n_observations == 0) return 0.0;
  return std::sqrt(total_error(problem) / (2.0 * n_observations));
}

// Inertial-only chain: keyframe states joined by preintegrated segments, the
// first state fixed. States start from a seeded perturbation of the ground
// truth (bias components at a tenth of the pose/velocity scale).
struct VioProblem {
  Problem problem;
  std::vector<ImuState> truth_states;
  std::vector<VariableId> state_ids;
};

inline VioProblem assemble_vio_problem(const ImuSequence& seq, int n_keyframes,
                                       const Vec3& ba_lin, const Vec3& bg_lin,
                                       const ImuNoise& noise, const GravityVector& g,
                                       double perturbation, std::uint64_t seed) {
  if (n_keyframes < 2) throw std::invalid_argument("assemble_vio_problem: need >= 2 keyframes");
  if (seq.samples.size() < 2) throw std::invalid_argument("assemble_vio_problem: empty sequence");

  SplitMix64 rng(seed);
  VioProblem out;
  const std::size_t n = seq.samples.size();
  std::vector<std::size_t> indices;
  for (int k = 0; k < n_keyframes; ++k) {
    indices.push_back(k * (n - 1) / (n_keyframes - 1));
  }
  for (int k = 0; k < n_keyframes; ++k) {
    const ImuState& truth = seq.states[indices[k]];
    out.truth_states.push_back(truth);
    Value value = truth;
    if (k > 0 && perturbation > 0.0) {
      VecX delta = detail::uniform_delta(rng, 15, perturbation);
      delta.tail<6>() *= 0.1;
      value = apply_update(VariableKind::ImuStateVar, value, delta);
    }
    out.problem.add_variable(k, VariableKind::ImuStateVar, value, k == 0);
    out.state_ids.push_back(k);
  }
  for (int k = 0; k + 1 < n_keyframes; ++k) {
    Preintegration pre = make_preintegration(ba_lin, bg_lin, noise);
    const std::vector<ImuSample> segment(seq.samples.begin() + indices[k],
                                         seq.samples.begin() + indices[k + 1] + 1);
    pre = integrate_sequence(pre, segment);
    out.problem.add_factor(std::make_shared<ImuFactor>(k, k + 1, std::move(pre), g));
  }
  return out;
}

}  // namespace slamf
