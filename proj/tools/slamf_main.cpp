// Command-line front end: runs synthetic estimation scenarios from flat
// key = value config files, audits analytic Jacobians against the
// finite-difference oracle, and round-trips pose-graph files.
//
// Exit codes: 0 success/converged, 2 solver did not converge (or an audit
// block failed), 1 configuration or usage error.

#include <algorithm>
#include <climits>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "slamf/io.hpp"
#include "slamf/jacobian_suite.hpp"
#include "slamf/scenarios.hpp"
#include "slamf/solver.hpp"

namespace {

using namespace slamf;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flat config: `key = value` lines grouped under optional `[section]`
// headers; keys are addressed as "section.key". '#' starts a comment.

struct FlatConfig {
  std::string path;
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

FlatConfig parse_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  FlatConfig cfg;
  cfg.path = path;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(path + ": line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError(path + ": line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ": line " + std::to_string(lineno) +
                        ": expected 'key = value' or '[section]', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ": line " + std::to_string(lineno) + ": empty key");
    }
    if (value.empty()) {
      throw ConfigError(path + ": line " + std::to_string(lineno) + ": empty value for key '" +
                        key + "'");
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values.count(full)) {
      throw ConfigError(path + ": line " + std::to_string(lineno) + ": duplicate key '" + full +
                        "' (first set at line " + std::to_string(cfg.lines.at(full)) + ")");
    }
    cfg.values[full] = value;
    cfg.lines[full] = lineno;
  }
  return cfg;
}

// Typed accessors that record which keys were consumed, so leftover keys can
// be rejected as misspellings instead of silently ignored.
class ConfigReader {
 public:
  explicit ConfigReader(FlatConfig cfg) : cfg_(std::move(cfg)) {}

  const std::string& path() const { return cfg_.path; }

  std::string require_string(const std::string& key) {
    const std::string* raw = find(key);
    if (!raw) throw ConfigError(cfg_.path + ": missing required key '" + key + "'");
    return *raw;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const std::string* raw = find(key);
    return raw ? *raw : fallback;
  }

  double get_double(const std::string& key, double fallback) {
    const std::string* raw = find(key);
    if (!raw) return fallback;
    return parse_double(key, *raw);
  }

  int get_int(const std::string& key, int fallback) {
    const std::string* raw = find(key);
    if (!raw) return fallback;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(*raw, &pos);
      if (pos != raw->size() || v < INT_MIN || v > INT_MAX) throw std::invalid_argument("range");
      return static_cast<int>(v);
    } catch (const std::exception&) {
      fail_key(key, "malformed integer '" + *raw + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const std::string* raw = find(key);
    if (!raw) return fallback;
    try {
      std::size_t pos = 0;
      if (raw->find('-') != std::string::npos) throw std::invalid_argument("negative");
      const unsigned long long v = std::stoull(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument("trailing");
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      fail_key(key, "malformed unsigned integer '" + *raw + "'");
    }
  }

  Vec3 get_vec3(const std::string& key, const Vec3& fallback) {
    const std::string* raw = find(key);
    if (!raw) return fallback;
    std::istringstream in(*raw);
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    if (tokens.size() != 3) fail_key(key, "expected three space-separated reals, got '" + *raw + "'");
    Vec3 out;
    for (int i = 0; i < 3; ++i) out[i] = parse_double(key, tokens[static_cast<std::size_t>(i)]);
    return out;
  }

  void reject_unused() const {
    for (const auto& [key, value] : cfg_.values) {
      if (!used_.count(key)) {
        throw ConfigError(cfg_.path + ": line " + std::to_string(cfg_.lines.at(key)) +
                          ": unrecognized key '" + key + "'");
      }
    }
  }

 private:
  const std::string* find(const std::string& key) {
    const auto it = cfg_.values.find(key);
    if (it == cfg_.values.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  double parse_double(const std::string& key, const std::string& raw) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail_key(key, "malformed number '" + raw + "'");
    }
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& what) const {
    throw ConfigError(cfg_.path + ": line " + std::to_string(cfg_.lines.at(key)) + ": key '" +
                      key + "': " + what);
  }

  FlatConfig cfg_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Solver options ([solver] section) and the SLAMF_THREADS cap.

SolverOptions solver_options_from(ConfigReader& cfg) {
  SolverOptions opts;
  const std::string method = cfg.get_string("solver.method", "gn");
  if (method == "gn") {
    opts.method = SolveMethod::GaussNewton;
  } else if (method == "lm") {
    opts.method = SolveMethod::LevenbergMarquardt;
  } else {
    throw ConfigError(cfg.path() + ": solver.method must be 'gn' or 'lm', got '" + method + "'");
  }
  opts.max_iterations = cfg.get_int("solver.max_iterations", opts.max_iterations);
  opts.abs_tolerance = cfg.get_double("solver.abs_tolerance", opts.abs_tolerance);
  opts.rel_tolerance = cfg.get_double("solver.rel_tolerance", opts.rel_tolerance);
  opts.rel_stall_window = cfg.get_int("solver.rel_stall_window", opts.rel_stall_window);
  opts.lm_lambda_init = cfg.get_double("solver.lambda_init", opts.lm_lambda_init);
  opts.lm_lambda_up = cfg.get_double("solver.lambda_up", opts.lm_lambda_up);
  opts.lm_lambda_down = cfg.get_double("solver.lambda_down", opts.lm_lambda_down);
  opts.lm_lambda_max = cfg.get_double("solver.lambda_max", opts.lm_lambda_max);
  opts.num_threads = cfg.get_int("solver.threads", opts.num_threads);

  const std::string timing = cfg.get_string("solver.timing", "deterministic");
  if (timing == "deterministic") {
    opts.record_millis = false;  // millis column stays 0, outputs byte-stable
  } else if (timing == "measured") {
    opts.record_millis = true;
  } else {
    throw ConfigError(cfg.path() + ": solver.timing must be 'deterministic' or 'measured', got '" +
                      timing + "'");
  }

  if (const char* env = std::getenv("SLAMF_THREADS")) {
    const std::string raw(env);
    int cap = 0;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(raw, &pos);
      if (pos != raw.size() || v < 1 || v > INT_MAX) throw std::invalid_argument("range");
      cap = static_cast<int>(v);
    } catch (const std::exception&) {
      throw ConfigError("SLAMF_THREADS must be a positive integer, got '" + raw + "'");
    }
    opts.num_threads = std::min(opts.num_threads, cap);
  }
  return opts;
}

// ---------------------------------------------------------------------------
// Artifacts.

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_quat(std::string& out, const Quat& q) {
  const Quat c = quat_normalize_canonical(q);
  out += "," + format_g17(c.w()) + "," + format_g17(c.x()) + "," + format_g17(c.y()) + "," +
         format_g17(c.z());
}

void append_vec3(std::string& out, const Vec3& v) {
  out += "," + format_g17(v.x()) + "," + format_g17(v.y()) + "," + format_g17(v.z());
}

// One row per variable; the component list depends on the kind:
//   pose:          tx ty tz qw qx qy qz        (canonical qw >= 0)
//   point:         x y z
//   inverse_depth: rho
//   intrinsics:    fx fy cx cy
//   line:          mx my mz dx dy dz           (Plucker moment, direction)
//   imu_state:     p(3) q(wxyz) v(3) ba(3) bg(3)
std::string final_state_csv(const Problem& problem) {
  std::string out = "id,kind,components\n";
  for (const auto& [id, var] : problem.variables()) {
    out += std::to_string(id);
    if (const auto* pose = std::get_if<PoseSE3>(&var.value)) {
      out += ",pose";
      append_vec3(out, pose->t);
      append_quat(out, Quat(pose->R));
    } else if (const auto* point = std::get_if<Vec3>(&var.value)) {
      out += ",point";
      append_vec3(out, *point);
    } else if (const auto* rho = std::get_if<double>(&var.value)) {
      out += ",inverse_depth," + format_g17(*rho);
    } else if (const auto* k = std::get_if<Intrinsics>(&var.value)) {
      out += ",intrinsics," + format_g17(k->fx) + "," + format_g17(k->fy) + "," +
             format_g17(k->cx) + "," + format_g17(k->cy);
    } else if (const auto* line = std::get_if<OrthonormalLine>(&var.value)) {
      const PluckerLine L = plucker_from_orthonormal(*line);
      out += ",line";
      append_vec3(out, L.m);
      append_vec3(out, L.d);
    } else if (const auto* s = std::get_if<ImuState>(&var.value)) {
      out += ",imu_state";
      append_vec3(out, s->p);
      append_quat(out, s->q);
      append_vec3(out, s->v);
      append_vec3(out, s->ba);
      append_vec3(out, s->bg);
    }
    out += "\n";
  }
  return out;
}

std::string summary_line(const std::string& scenario, std::uint64_t seed, double final_error,
                         std::size_t iters, bool converged) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s,%llu,%.17g,%zu,%s", scenario.c_str(),
                static_cast<unsigned long long>(seed), final_error, iters,
                converged ? "true" : "false");
  return buf;
}

void write_run_artifacts(const std::string& out_dir, const SolveReport& report,
                         const Problem& problem, const std::string& summary) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir + "/iterations.csv", iteration_stats_csv(report));
  write_text_file(out_dir + "/final_state.csv", final_state_csv(problem));
  write_text_file(out_dir + "/summary.csv", "scenario,seed,final_E,iters,converged\n" + summary + "\n");
}

// Runs the solver, writes artifacts, prints the summary, maps the outcome to
// the exit-code contract. Invalid solver options surface as config errors.
int finish_run(const std::string& scenario, std::uint64_t seed, Problem& problem,
               const SolverOptions& opts, const std::string& out_dir,
               const std::function<void(const Problem&)>& report_metric) {
  SolveReport report;
  try {
    report = solve(problem, opts);
  } catch (const std::invalid_argument&) {
    throw;  // bad option values are configuration errors (exit 1)
  } catch (const std::exception& e) {
    std::cerr << "solve failed: " << e.what() << "\n";
    return 2;
  }

  const std::string summary =
      summary_line(scenario, seed, report.final_error, report.iterations.size(), report.converged);
  write_run_artifacts(out_dir, report, problem, summary);
  if (report_metric) report_metric(problem);
  std::cout << "scenario,seed,final_E,iters,converged\n" << summary << "\n";
  return report.converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// Scenario runners.

int run_ba(ConfigReader& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 1);
  const std::string out_dir = cfg.get_string("output_dir", "out");
  const int cameras = cfg.get_int("generator.cameras", 10);
  const int points = cfg.get_int("generator.points", 100);
  const double pixel_noise = cfg.get_double("generator.pixel_noise", 0.0);
  const double perturbation = cfg.get_double("generator.perturbation", 0.05);
  const SolverOptions opts = solver_options_from(cfg);
  cfg.reject_unused();

  BaProblem ba = assemble_ba_problem(make_ba_scene(cameras, points, pixel_noise, seed),
                                     perturbation, seed + 1);
  const std::size_t n_obs = ba.n_observations;
  return finish_run("ba", seed, ba.problem, opts, out_dir, [n_obs](const Problem& p) {
    std::cerr << "ba: final pixel rmse " << format_g17(pixel_rmse(p, n_obs)) << "\n";
  });
}

int run_pgo(ConfigReader& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 1);
  const std::string out_dir = cfg.get_string("output_dir", "out");
  const int nodes = cfg.get_int("generator.nodes", 20);
  const int loops = cfg.get_int("generator.loops", 1);
  const double odometry_noise = cfg.get_double("generator.odometry_noise", 0.0);
  const double perturbation = cfg.get_double("generator.perturbation", 0.1);
  const std::string convention = cfg.get_string("generator.convention", "local");
  if (convention != "local" && convention != "world") {
    throw ConfigError(cfg.path() + ": generator.convention must be 'local' or 'world', got '" +
                      convention + "'");
  }
  const SolverOptions opts = solver_options_from(cfg);
  cfg.reject_unused();

  PgoProblem pgo = assemble_pgo_problem(make_pose_graph(nodes, odometry_noise, loops, seed),
                                        perturbation, seed + 1);
  Problem problem = convention == "world" ? variant_edges_problem(pgo) : pgo.problem;
  const std::vector<PoseSE3> truth = pgo.truth;
  return finish_run("pgo", seed, problem, opts, out_dir, [truth](const Problem& p) {
    std::cerr << "pgo: max node twist error " << format_g17(max_node_twist_error(p, truth))
              << "\n";
  });
}

int run_vio(ConfigReader& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 1);
  const std::string out_dir = cfg.get_string("output_dir", "out");
  TrajectorySpec traj;
  traj.radius = cfg.get_double("generator.radius", traj.radius);
  traj.angular_rate = cfg.get_double("generator.angular_rate", traj.angular_rate);
  traj.height = cfg.get_double("generator.height", traj.height);
  traj.yaw_amplitude = cfg.get_double("generator.yaw_amplitude", traj.yaw_amplitude);
  traj.yaw_frequency = cfg.get_double("generator.yaw_frequency", traj.yaw_frequency);
  traj.duration = cfg.get_double("generator.duration", 2.0);
  traj.rate = cfg.get_double("generator.rate", traj.rate);
  const Vec3 accel_bias = cfg.get_vec3("generator.accel_bias", Vec3::Zero());
  const Vec3 gyro_bias = cfg.get_vec3("generator.gyro_bias", Vec3::Zero());
  ImuNoise noise;
  noise.sigma_a = cfg.get_double("generator.accel_noise", 0.0);
  noise.sigma_g = cfg.get_double("generator.gyro_noise", 0.0);
  noise.sigma_ba = 0.0;
  noise.sigma_bg = 0.0;
  const int keyframes = cfg.get_int("generator.keyframes", 6);
  const double perturbation = cfg.get_double("generator.perturbation", 0.01);
  const SolverOptions opts = solver_options_from(cfg);
  cfg.reject_unused();

  const GravityVector g;
  const ImuSequence seq = make_imu_sequence(traj, accel_bias, gyro_bias, noise, g, seed);
  VioProblem vio = assemble_vio_problem(seq, keyframes, accel_bias, gyro_bias, noise, g,
                                        perturbation, seed + 1);
  const std::vector<ImuState> truth = vio.truth_states;
  const std::vector<VariableId> ids = vio.state_ids;
  return finish_run("vio", seed, vio.problem, opts, out_dir, [truth, ids](const Problem& p) {
    double worst = 0.0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const ImuState& est = std::get<ImuState>(p.value(ids[k]));
      worst = std::max(worst, (est.p - truth[k].p).norm());
    }
    std::cerr << "vio: max keyframe position error " << format_g17(worst) << "\n";
  });
}

int run_line_ba(ConfigReader& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 1);
  const std::string out_dir = cfg.get_string("output_dir", "out");
  const int cameras = cfg.get_int("generator.cameras", 4);
  const int lines = cfg.get_int("generator.lines", 6);
  const double perturbation = cfg.get_double("generator.perturbation", 0.02);
  const SolverOptions opts = solver_options_from(cfg);
  cfg.reject_unused();

  LineBaProblem problem = assemble_line_ba_problem(make_line_scene(cameras, lines, seed),
                                                   perturbation, seed + 1);
  const std::size_t n_obs = problem.n_observations;
  return finish_run("line-ba", seed, problem.problem, opts, out_dir, [n_obs](const Problem& p) {
    std::cerr << "line-ba: residual rms " << format_g17(line_residual_rms(p, n_obs)) << "\n";
  });
}

int jacobian_check_impl(const std::string& factor, int instances, double step, std::uint64_t seed,
                        const std::string& out_dir, bool emit_summary) {
  JacobianSuiteOptions opts;
  if (factor != "all") opts.families = {factor};
  opts.instances = instances;
  opts.step = step;
  opts.seed = seed;
  const std::vector<JacobianBlockReport> reports = run_jacobian_suite(opts);

  std::filesystem::create_directories(out_dir);
  bool all_passed = true;
  double worst = 0.0;
  for (const JacobianBlockReport& r : reports) {
    write_text_file(out_dir + "/jacobian_" + r.family + "_" + r.block + ".csv",
                    jacobian_mismatch_csv(r));
    all_passed = all_passed && r.passed(instances);
    worst = std::max(worst, r.max_scaled_error);
  }
  const std::string table = jacobian_suite_table(reports, instances);
  write_text_file(out_dir + "/jacobian_table.txt", table);
  std::cout << table;

  if (emit_summary) {
    const std::string summary = summary_line("jacobian-check", seed, worst,
                                             static_cast<std::size_t>(instances), all_passed);
    write_text_file(out_dir + "/summary.csv",
                    "scenario,seed,final_E,iters,converged\n" + summary + "\n");
    std::cout << "scenario,seed,final_E,iters,converged\n" << summary << "\n";
  }
  return all_passed ? 0 : 2;
}

int run_jacobian_check(ConfigReader& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed", 901);
  const std::string out_dir = cfg.get_string("output_dir", "out");
  const std::string factor = cfg.get_string("generator.factor", "all");
  const int instances = cfg.get_int("generator.instances", 120);
  const double step = cfg.get_double("generator.step", 0.0);
  cfg.reject_unused();
  return jacobian_check_impl(factor, instances, step, seed, out_dir, /*emit_summary=*/true);
}

int cmd_run(const std::string& cfg_path) {
  ConfigReader cfg(parse_config_file(cfg_path));
  const std::string scenario = cfg.require_string("scenario");
  if (scenario == "ba") return run_ba(cfg);
  if (scenario == "pgo") return run_pgo(cfg);
  if (scenario == "vio") return run_vio(cfg);
  if (scenario == "line-ba") return run_line_ba(cfg);
  if (scenario == "jacobian-check") return run_jacobian_check(cfg);
  throw ConfigError(cfg.path() + ": unknown scenario '" + scenario +
                    "' (expected ba, pgo, vio, line-ba, or jacobian-check)");
}

int cmd_g2o_roundtrip(const std::string& input, const std::string& output) {
  const G2oGraph graph = g2o_read(input);
  for (const std::string& w : graph.warnings) std::cerr << "warning: " << w << "\n";
  g2o_write(graph.problem, output);
  std::cout << graph.problem.variables().size() << " vertices, "
            << graph.problem.factors().size() << " edges\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slamf: manifold nonlinear least-squares scenarios, Jacobian audits, and pose-graph file tools"};
  app.require_subcommand(1);

  std::string cfg_path;
  CLI::App* run = app.add_subcommand("run", "Run a scenario described by a config file");
  run->add_option("config", cfg_path, "Flat key = value config file")->required();

  std::string factor = "all";
  double step = 0.0;
  int instances = 120;
  std::uint64_t seed = 901;
  std::string out_dir = ".";
  CLI::App* jc = app.add_subcommand("jacobian-check",
                                    "Audit analytic Jacobians against the finite-difference oracle");
  jc->set_help_flag("--help", "Print help");  // frees -h so --h can be the step option
  jc->add_option("--factor", factor,
                 "Factor family (reprojection, photometric, relative_pose, plucker_line, "
                 "imu_preintegration) or 'all'");
  jc->add_option("--h", step, "Finite-difference step (0 = per-family default)");
  jc->add_option("--instances", instances, "Random instances required per block");
  jc->add_option("--seed", seed, "Base seed for the instance streams");
  jc->add_option("--out", out_dir, "Directory for mismatch CSV files");

  std::string g2o_in, g2o_out;
  CLI::App* rt = app.add_subcommand("g2o-roundtrip", "Read a pose-graph file and write it back out");
  rt->add_option("input", g2o_in, "Input pose-graph file")->required();
  rt->add_option("output", g2o_out, "Output pose-graph file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(cfg_path);
    if (jc->parsed()) return jacobian_check_impl(factor, instances, step, seed, out_dir,
                                                 /*emit_summary=*/false);
    if (rt->parsed()) return cmd_g2o_roundtrip(g2o_in, g2o_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
