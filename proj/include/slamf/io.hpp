#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slamf/graph.hpp"
#include "slamf/image.hpp"
#include "slamf/imu.hpp"
#include "slamf/lie.hpp"
#include "slamf/plucker.hpp"
#include "slamf/pose_graph.hpp"

namespace slamf {

namespace detail {

struct Token {
  std::string text;
  int column = 0;  // 1-based character offset in the source line
};

inline std::vector<Token> tokenize_line(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

[[noreturn]] inline void parse_fail(const std::string& what, int line, int column) {
  throw std::runtime_error("parse error at line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + what);
}

inline double parse_real(const Token& tok, int line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(tok.text, &used);
  } catch (const std::exception&) {
    parse_fail("expected a real number, got '" + tok.text + "'", line, tok.column);
  }
  if (used != tok.text.size()) {
    parse_fail("trailing characters in number '" + tok.text + "'", line, tok.column);
  }
  return value;
}

inline std::int64_t parse_id(const Token& tok, int line) {
  std::size_t used = 0;
  std::int64_t value = 0;
  try {
    value = std::stoll(tok.text, &used);
  } catch (const std::exception&) {
    parse_fail("expected an integer id, got '" + tok.text + "'", line, tok.column);
  }
  if (used != tok.text.size() || value < 0) {
    parse_fail("expected a non-negative integer id, got '" + tok.text + "'", line, tok.column);
  }
  return value;
}

// Reads x y z qx qy qz qw from tokens[start..start+6]; normalizes a non-unit
// quaternion and reports it through `warnings`.
inline PoseSE3 parse_pose_tokens(const std::vector<Token>& toks, std::size_t start, int line,
                                 std::vector<std::string>* warnings, const char* what) {
  double v[7];
  for (std::size_t k = 0; k < 7; ++k) v[k] = parse_real(toks[start + k], line);
  Quat q(v[6], v[3], v[4], v[5]);  // (qw, qx, qy, qz) constructor order
  const double norm = q.norm();
  if (std::abs(norm - 1.0) > 1e-9) {
    if (warnings != nullptr) {
      warnings->push_back("line " + std::to_string(line) + ": " + what +
                          " quaternion has norm " + std::to_string(norm) + ", normalized");
    }
  }
  q.normalize();
  return PoseSE3{q.toRotationMatrix(), Vec3(v[0], v[1], v[2])};
}

// Tangent permutation between the file convention (translation first) and the
// internal twist order (rotation first): delta_file = P * delta_internal with
// P = [[0, I], [I, 0]], hence Omega_internal = P^T * Omega_file * P.
inline Mat6 tangent_permutation() {
  Mat6 p = Mat6::Zero();
  p.topRightCorner<3, 3>() = Mat3::Identity();
  p.bottomLeftCorner<3, 3>() = Mat3::Identity();
  return p;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

struct G2oGraph {
  Problem problem;
  std::vector<std::string> warnings;
};

// Pose-graph reader for the ecosystem text format: `VERTEX_SE3:QUAT id x y z
// qx qy qz qw` and `EDGE_SE3:QUAT i j x y z qx qy qz qw` followed by the 21
// row-major upper-triangle entries of the 6x6 information matrix in
// translation-first tangent order. Blank lines and `#` comments are skipped;
// anything else is rejected with its location.
inline G2oGraph g2o_read_stream(std::istream& in) {
  G2oGraph out;
  const Mat6 perm = detail::tangent_permutation();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = detail::tokenize_line(line);
    if (toks.empty() || toks[0].text[0] == '#') continue;
    if (toks[0].text == "VERTEX_SE3:QUAT") {
      if (toks.size() != 9) {
        detail::parse_fail("VERTEX_SE3:QUAT needs 8 fields (id + pose), got " +
                               std::to_string(toks.size() - 1),
                           line_no, toks[0].column);
      }
      const std::int64_t id = detail::parse_id(toks[1], line_no);
      const PoseSE3 pose =
          detail::parse_pose_tokens(toks, 2, line_no, &out.warnings, "vertex");
      try {
        out.problem.add_variable(id, VariableKind::PoseSE3Local, pose);
      } catch (const std::invalid_argument& err) {
        detail::parse_fail(err.what(), line_no, toks[1].column);
      }
    } else if (toks[0].text == "EDGE_SE3:QUAT") {
      if (toks.size() != 31) {
        detail::parse_fail("EDGE_SE3:QUAT needs 30 fields (ids + pose + 21 info), got " +
                               std::to_string(toks.size() - 1),
                           line_no, toks[0].column);
      }
      const std::int64_t i = detail::parse_id(toks[1], line_no);
      const std::int64_t j = detail::parse_id(toks[2], line_no);
      const PoseSE3 z = detail::parse_pose_tokens(toks, 3, line_no, &out.warnings, "edge");
      Mat6 info_file;
      std::size_t t = 10;
      for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c, ++t) {
          const double v = detail::parse_real(toks[t], line_no);
          info_file(r, c) = v;
          info_file(c, r) = v;
        }
      }
      const Mat6 info = perm.transpose() * info_file * perm;
      try {
        out.problem.add_factor(std::make_shared<RelativePoseFactor>(i, j, z, info));
      } catch (const std::invalid_argument& err) {
        detail::parse_fail(err.what(), line_no, toks[1].column);
      }
    } else {
      detail::parse_fail("unknown record '" + toks[0].text + "'", line_no, toks[0].column);
    }
  }
  return out;
}

inline G2oGraph g2o_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return g2o_read_stream(in);
  } catch (const std::runtime_error& err) {
    throw std::runtime_error(path + ": " + err.what());
  }
}

// Writes vertices in ascending id order, then one edge per relative-pose
// factor, with 17 significant digits so a rewrite after a read is
// byte-identical. Only pose variables and relative-pose factors are
// serializable in this format.
inline void g2o_write_stream(const Problem& problem, std::ostream& out) {
  const Mat6 perm = detail::tangent_permutation();
  for (const auto& [id, var] : problem.variables()) {
    if (!std::holds_alternative<PoseSE3>(var.value)) {
      throw std::runtime_error("g2o write: variable " + std::to_string(id) +
                               " is not a pose");
    }
    const PoseSE3& x = std::get<PoseSE3>(var.value);
    const Quat q = quat_normalize_canonical(Quat(x.R));
    out << "VERTEX_SE3:QUAT " << id;
    for (const double v : {x.t.x(), x.t.y(), x.t.z(), q.x(), q.y(), q.z(), q.w()}) {
      out << ' ' << detail::format_real(v);
    }
    out << '\n';
  }
  for (const auto& factor : problem.factors()) {
    const auto* rel = dynamic_cast<const RelativePoseFactor*>(factor.get());
    if (rel == nullptr) {
      throw std::runtime_error("g2o write: factor '" + factor->name() +
                               "' has no edge representation");
    }
    const PoseSE3& z = rel->measurement();
    const Quat q = quat_normalize_canonical(Quat(z.R));
    out << "EDGE_SE3:QUAT " << rel->variable_ids()[0] << ' ' << rel->variable_ids()[1];
    for (const double v : {z.t.x(), z.t.y(), z.t.z(), q.x(), q.y(), q.z(), q.w()}) {
      out << ' ' << detail::format_real(v);
    }
    const Mat6 info_file = perm * Mat6(rel->information()) * perm.transpose();
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) out << ' ' << detail::format_real(info_file(r, c));
    }
    out << '\n';
  }
}

inline void g2o_write(const Problem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  g2o_write_stream(problem, out);
}

// IMU sample log as CSV with the fixed header `t,ax,ay,az,wx,wy,wz`.
inline void imu_csv_write_stream(const std::vector<ImuSample>& samples, std::ostream& out) {
  out << "t,ax,ay,az,wx,wy,wz\n";
  for (const auto& s : samples) {
    out << detail::format_real(s.t);
    for (const double v : {s.a.x(), s.a.y(), s.a.z(), s.omega.x(), s.omega.y(), s.omega.z()}) {
      out << ',' << detail::format_real(v);
    }
    out << '\n';
  }
}

inline std::vector<ImuSample> imu_csv_read_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse error at line 1: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,ax,ay,az,wx,wy,wz") {
    detail::parse_fail("expected header 't,ax,ay,az,wx,wy,wz'", 1, 1);
  }
  std::vector<ImuSample> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<detail::Token> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
        start = i + 1;
      }
    }
    if (fields.size() != 7) {
      detail::parse_fail("expected 7 comma-separated fields, got " +
                             std::to_string(fields.size()),
                         line_no, 1);
    }
    double v[7];
    for (int k = 0; k < 7; ++k) v[k] = detail::parse_real(fields[k], line_no);
    ImuSample s;
    s.t = v[0];
    s.a = Vec3(v[1], v[2], v[3]);
    s.omega = Vec3(v[4], v[5], v[6]);
    out.push_back(s);
  }
  return out;
}

// Plain-text raster grid: `width height` on the first line, then one row of
// reals per image row.
inline void raster_write_stream(const ImageRaster& img, std::ostream& out) {
  out << img.width << ' ' << img.height << '\n';
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      if (u > 0) out << ' ';
      out << detail::format_real(img.at(u, v));
    }
    out << '\n';
  }
}

inline ImageRaster raster_read_stream(std::istream& in) {
  int w = 0, h = 0;
  if (!(in >> w >> h) || w < 2 || h < 2) {
    throw std::runtime_error("parse error at line 1: expected 'width height' (both >= 2)");
  }
  ImageRaster img(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!(in >> img.at(u, v))) {
        throw std::runtime_error("parse error: raster value " +
                                 std::to_string(v * w + u + 1) + " of " +
                                 std::to_string(w * h) + " missing or malformed");
      }
    }
  }
  return img;
}

// Line fixtures: one 3D line per row as 6 reals (moment, direction).
inline void lines_write_stream(const std::vector<PluckerLine>& lines, std::ostream& out) {
  for (const auto& l : lines) {
    for (int k = 0; k < 6; ++k) {
      if (k > 0) out << ' ';
      out << detail::format_real(k < 3 ? l.m(k) : l.d(k - 3));
    }
    out << '\n';
  }
}

inline std::vector<PluckerLine> lines_read_stream(std::istream& in) {
  std::vector<PluckerLine> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = detail::tokenize_line(line);
    if (toks.empty()) continue;
    if (toks.size() != 6) {
      detail::parse_fail("expected 6 reals per line, got " + std::to_string(toks.size()),
                         line_no, toks[0].column);
    }
    PluckerLine l;
    for (int k = 0; k < 6; ++k) {
      const double v = detail::parse_real(toks[k], line_no);
      (k < 3 ? l.m(k) : l.d(k - 3)) = v;
    }
    out.push_back(l);
  }
  return out;
}

// Segment observations: one per row as 4 reals (u_s, v_s, u_e, v_e).
inline void line_observations_write_stream(const std::vector<LineObservation>& obs,
                                           std::ostream& out) {
  for (const auto& o : obs) {
    out << detail::format_real(o.x_s.x()) << ' ' << detail::format_real(o.x_s.y()) << ' '
        << detail::format_real(o.x_e.x()) << ' ' << detail::format_real(o.x_e.y()) << '\n';
  }
}

inline std::vector<LineObservation> line_observations_read_stream(std::istream& in) {
  std::vector<LineObservation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = detail::tokenize_line(line);
    if (toks.empty()) continue;
    if (toks.size() != 4) {
      detail::parse_fail("expected 4 reals per observation, got " +
                             std::to_string(toks.size()),
                         line_no, toks[0].column);
    }
    LineObservation o;
    o.x_s = Vec3(detail::parse_real(toks[0], line_no), detail::parse_real(toks[1], line_no), 1.0);
    o.x_e = Vec3(detail::parse_real(toks[2], line_no), detail::parse_real(toks[3], line_no), 1.0);
    out.push_back(o);
  }
  return out;
}

// Small conveniences used by the command-line tool.
inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << content;
}

}  // namespace slamf
