#pragma once

// Serial-chain kinematics for da Vinci EndoWrist tools.
//
// Each chain row is a DH transform composed as
//   Trans_x(a) * Rot_x(alpha) * Trans_z(D) * Rot_z(theta)
// i.e. D and theta act along the z-axis of the frame already transformed
// by a and alpha (this is NOT the classic distal convention).
//
// A ToolPose is the tip position plus the tool-axis direction, taken as
// the y-axis of the final chain frame. Orientation about the tool axis is
// deliberately not part of the pose.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dvrl {

class KinematicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularPoseError : public KinematicsError {
 public:
  using KinematicsError::KinematicsError;
};

class UnreachablePoseError : public KinematicsError {
 public:
  using KinematicsError::KinematicsError;
};

struct DhRow {
  enum class Binding { None, D, Theta };

  double a = 0.0;             // meters
  double alpha = 0.0;         // radians, in (-pi, pi]
  double d_offset = 0.0;      // meters
  double theta_offset = 0.0;  // radians, in (-pi, pi]
  Binding binding = Binding::None;
  int joint = -1;             // joint index entering D or theta
  double sign = 1.0;
};

struct ToolPose {
  Eigen::Vector3d position;   // base frame, meters
  Eigen::Vector3d direction;  // unit tool axis
};

struct JointLimit {
  double min;
  double max;
};

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

// Row transform with the bound joint value substituted.
inline Eigen::Matrix4d dh_transform(const DhRow& row, double q) {
  const double d =
      row.d_offset + (row.binding == DhRow::Binding::D ? row.sign * q : 0.0);
  const double th = row.theta_offset +
      (row.binding == DhRow::Binding::Theta ? row.sign * q : 0.0);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  const double ct = std::cos(th), st = std::sin(th);
  Eigen::Matrix4d t;
  t << ct, -st, 0.0, row.a,
       ca * st, ca * ct, -sa, -sa * d,
       sa * st, sa * ct, ca, ca * d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

class ToolKinematics {
 public:
  ToolKinematics(std::string name, std::vector<DhRow> rows,
                 std::map<std::string, double> link_lengths,
                 std::vector<JointLimit> limits)
      : name_(std::move(name)),
        rows_(std::move(rows)),
        links_(std::move(link_lengths)),
        limits_(std::move(limits)) {
    int n = 0;
    for (const auto& r : rows_) {
      if (r.binding != DhRow::Binding::None) {
        if (r.joint < 0) throw KinematicsError("unbound joint index");
        n = std::max(n, r.joint + 1);
      }
      if (r.alpha <= -M_PI || r.alpha > M_PI)
        throw KinematicsError("alpha outside (-pi, pi]");
      if (r.theta_offset <= -M_PI || r.theta_offset > M_PI)
        throw KinematicsError("theta_offset outside (-pi, pi]");
    }
    njoints_ = n;
    for (const auto& [k, v] : links_)
      if (v <= 0.0) throw KinematicsError("link length must be positive: " + k);
    if (static_cast<int>(limits_.size()) != njoints_)
      throw KinematicsError("joint limit count mismatch");
  }

  const std::string& name() const { return name_; }
  const std::vector<DhRow>& rows() const { return rows_; }
  const std::vector<JointLimit>& joint_limits() const { return limits_; }
  int joint_count() const { return njoints_; }

  double link(const std::string& key) const {
    auto it = links_.find(key);
    if (it == links_.end()) throw KinematicsError("unknown link length: " + key);
    return it->second;
  }
  const std::map<std::string, double>& link_lengths() const { return links_; }

  bool within_limits(const Eigen::VectorXd& q, double slack = 0.0) const {
    for (int i = 0; i < njoints_; ++i)
      if (q[i] < limits_[i].min - slack || q[i] > limits_[i].max + slack)
        return false;
    return true;
  }

  Eigen::VectorXd clamp_to_limits(const Eigen::VectorXd& q) const {
    Eigen::VectorXd out = q;
    for (int i = 0; i < njoints_; ++i)
      out[i] = std::clamp(out[i], limits_[i].min, limits_[i].max);
    return out;
  }

  Eigen::VectorXd mid_range() const {
    Eigen::VectorXd q(njoints_);
    for (int i = 0; i < njoints_; ++i)
      q[i] = 0.5 * (limits_[i].min + limits_[i].max);
    return q;
  }

  Eigen::Matrix4d chain_transform(const Eigen::VectorXd& q) const {
    check_dims(q);
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    for (const auto& row : rows_) {
      const double qv = row.binding == DhRow::Binding::None ? 0.0 : q[row.joint];
      t = t * dh_transform(row, qv);
    }
    return t;
  }

  ToolPose forward(const Eigen::VectorXd& q, bool check_limits = false) const {
    check_dims(q);
    if (check_limits && !within_limits(q))
      throw KinematicsError(name_ + ": joint limits violated");
    const Eigen::Matrix4d t = chain_transform(q);
    return ToolPose{t.block<3, 1>(0, 3), t.block<3, 1>(0, 1)};
  }

  // Shipped defaults. Link lengths are not dictated by the kinematics; they
  // follow the publicly documented dVRK tool dimensions and can be
  // overridden through a tool definition file.
  static ToolKinematics lnd() {
    const double l1 = 0.4318, l3 = 0.4162, l4 = 0.0091;
    std::vector<DhRow> rows = {
        {0, M_PI / 2, 0, M_PI / 2, DhRow::Binding::Theta, 0, 1.0},
        {0, -M_PI / 2, 0, -M_PI / 2, DhRow::Binding::Theta, 1, 1.0},
        {0, M_PI / 2, -l1, 0, DhRow::Binding::D, 2, 1.0},
        {0, 0, l3, 0, DhRow::Binding::Theta, 3, 1.0},
        {0, -M_PI / 2, 0, -M_PI / 2, DhRow::Binding::Theta, 4, 1.0},
        {l4, -M_PI / 2, 0, -M_PI / 2, DhRow::Binding::Theta, 5, 1.0},
    };
    std::vector<JointLimit> lim = {{-1.2, 1.2}, {-0.9, 0.9}, {0.05, 0.24},
                                   {-2.2, 2.2}, {-1.4, 1.4}, {-1.4, 1.4}};
    return ToolKinematics("LND", std::move(rows),
                          {{"l1", l1}, {"l3", l3}, {"l4", l4}}, std::move(lim));
  }

  static ToolKinematics suction_irrigation() {
    const double l2 = 0.4318, l5 = 0.0102;
    std::vector<DhRow> rows = {
        {0, M_PI / 2, 0, M_PI / 2, DhRow::Binding::Theta, 0, 1.0},
        {0, -M_PI / 2, 0, -M_PI / 2, DhRow::Binding::Theta, 1, 1.0},
        {0, M_PI / 2, -l2, 0, DhRow::Binding::D, 2, 1.0},
        {0, -M_PI / 2, 0, -M_PI / 2, DhRow::Binding::Theta, 3, 1.0},
        {l5, -M_PI / 2, 0, -M_PI / 2, DhRow::Binding::Theta, 4, 1.0},
    };
    std::vector<JointLimit> lim = {
        {-1.2, 1.2}, {-0.9, 0.9}, {0.05, 0.24}, {-1.4, 1.4}, {-1.4, 1.4}};
    return ToolKinematics("SuctionIrrigation", std::move(rows),
                          {{"l2", l2}, {"l5", l5}}, std::move(lim));
  }

  static ToolKinematics by_name(const std::string& name) {
    if (name == "LND" || name == "lnd") return lnd();
    if (name == "SuctionIrrigation" || name == "suction")
      return suction_irrigation();
    throw KinematicsError("unknown tool: " + name);
  }

  static ToolKinematics from_file(const std::string& path);

 private:
  void check_dims(const Eigen::VectorXd& q) const {
    if (q.size() != njoints_)
      throw KinematicsError(name_ + ": expected " + std::to_string(njoints_) +
                            " joints, got " + std::to_string(q.size()));
  }

  std::string name_;
  std::vector<DhRow> rows_;
  std::map<std::string, double> links_;
  std::vector<JointLimit> limits_;
  int njoints_ = 0;
};

inline ToolPose forward_kinematics(const ToolKinematics& tool,
                                   const Eigen::VectorXd& q,
                                   bool check_limits = false) {
  return tool.forward(q, check_limits);
}

// Analytic inverse for the Suction & Irrigation tool.
//
// The joint angles are recovered via the tool's DH thetas
//   theta1 = q1 + pi/2, theta2 = q2 - pi/2, theta5 = q5 - pi/2,
//   theta6 = q6 - pi/2,
// with two-argument arctangents and explicit branch resolution: candidate
// branches are checked against forward kinematics and the joint limits.
// Returns (q1, q2, q3, q5, q6).
inline Eigen::VectorXd ik_suction(const ToolPose& pose,
                                  const ToolKinematics& tool,
                                  double tol = 1e-6) {
  if (tool.joint_count() != 5)
    throw KinematicsError("ik_suction needs a 5-joint tool");
  const double l2 = tool.link("l2");
  const double l5 = tool.link("l5");

  const Eigen::Vector3d p = pose.position;
  const Eigen::Vector3d v = pose.direction.normalized();
  const double px = p.x(), py = p.y(), pz = p.z();
  const double vx = v.x(), vy = v.y(), vz = v.z();

  if (std::hypot(px, pz) <= 1e-6)
    throw SingularPoseError("theta1 singularity: p_x and p_z both near zero");

  const double t1_base = std::atan2(pz, px);
  bool saw_reachable = false;
  bool saw_nonsingular = false;

  std::optional<Eigen::VectorXd> best;
  double best_err = tol;

  for (const double t1 : {t1_base, wrap_angle(t1_base + M_PI)}) {
    const double c6 = std::clamp(std::sin(t1) * vx - std::cos(t1) * vz,
                                 -1.0, 1.0);
    const double s6_mag = std::sqrt(std::max(0.0, 1.0 - c6 * c6));
    if (s6_mag <= 1e-3) continue;
    saw_nonsingular = true;
    for (const double t6 : {-std::acos(c6), std::acos(c6)}) {
      const double s6 = std::sin(t6);
      const double s25 = -vy / s6;
      const double c25 = -(vx * std::cos(t1) + vz * std::sin(t1)) / s6;
      const double num = px / std::cos(t1) - l5 * c25;
      const double den = -py + l5 * s25;
      if (std::hypot(num, den) < 1e-9) continue;  // theta2 undefined
      const double t2_base = std::atan2(num, den);
      for (const double t2 : {t2_base, wrap_angle(t2_base + M_PI)}) {
        double q3;
        if (std::abs(std::cos(t2)) >= 0.5) {
          q3 = (-py + l5 * s25) / std::cos(t2) + l2;
        } else {
          // Algebraically equivalent extraction through the shaft reach,
          // well conditioned where cos(theta2) is small.
          const double reach = -(px * std::cos(t1) + pz * std::sin(t1));
          const double cq2 = -std::sin(t2);  // cos(q2)
          if (std::abs(cq2) < 1e-9) continue;
          q3 = (reach + l5 * c25) / cq2 + l2;  // cos(q2+q5) = -c25
        }
        const double t5 = std::atan2(s25, c25) - t2;
        Eigen::VectorXd q(5);
        q << wrap_angle(t1 - M_PI / 2), wrap_angle(t2 + M_PI / 2), q3,
            wrap_angle(t5 + M_PI / 2), wrap_angle(t6 + M_PI / 2);
        const ToolPose fk = tool.forward(q);
        const double err = std::max((fk.position - p).norm(),
                                    (fk.direction - v).norm());
        if (err > tol) continue;
        saw_reachable = true;
        if (!tool.within_limits(q, 1e-9)) continue;
        if (err <= best_err) {
          best_err = err;
          best = q;
        }
      }
    }
  }

  if (best) return *best;
  if (!saw_nonsingular)
    throw SingularPoseError("wrist singularity: sin(theta6) near zero");
  if (saw_reachable)
    throw UnreachablePoseError("pose only reachable outside joint limits");
  throw UnreachablePoseError("no analytic solution reproduces the pose");
}

struct NumericIkResult {
  Eigen::VectorXd joints;
  bool converged = false;
  double residual = 0.0;
  int iterations = 0;
  bool limit_clamped = false;
  std::vector<double> residual_trace;  // accepted residuals, non-increasing
};

namespace detail {

inline Eigen::Matrix<double, 6, 1> pose_residual(const ToolKinematics& tool,
                                                 const Eigen::VectorXd& q,
                                                 const ToolPose& target) {
  const ToolPose fk = tool.forward(q);
  Eigen::Matrix<double, 6, 1> r;
  r.head<3>() = target.position - fk.position;
  r.tail<3>() = target.direction - fk.direction;
  return r;
}

}  // namespace detail

namespace detail {

inline NumericIkResult ik_numeric_once(const ToolKinematics& tool,
                                       const ToolPose& target,
                                       const Eigen::VectorXd& q_init,
                                       double lambda, int max_iter,
                                       double step_cap, double tol) {
  const int n = tool.joint_count();
  if (q_init.size() != n) throw KinematicsError("q_init dimension mismatch");

  NumericIkResult res;
  res.joints = tool.clamp_to_limits(q_init);
  res.limit_clamped = (res.joints - q_init).norm() > 0;

  Eigen::Matrix<double, 6, 1> r =
      detail::pose_residual(tool, res.joints, target);
  res.residual = r.norm();
  res.residual_trace.push_back(res.residual);
  if (res.residual < tol) {
    res.converged = true;
    return res;
  }

  const double h = 1e-7;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd qp = res.joints, qm = res.joints;
      qp[j] += h;
      qm[j] -= h;
      const ToolPose fp = tool.forward(qp);
      const ToolPose fm = tool.forward(qm);
      jac.block<3, 1>(0, j) = (fp.position - fm.position) / (2 * h);
      jac.block<3, 1>(3, j) = (fp.direction - fm.direction) / (2 * h);
    }
    Eigen::Matrix<double, 6, 6> a = jac * jac.transpose();
    a.diagonal().array() += lambda * lambda;
    Eigen::VectorXd step = jac.transpose() * a.ldlt().solve(r);
    const double mag = step.cwiseAbs().maxCoeff();
    if (mag > step_cap) step *= step_cap / mag;

    // Backtrack so the accepted residual never increases.
    bool accepted = false;
    for (int bt = 0; bt < 8; ++bt) {
      Eigen::VectorXd cand = tool.clamp_to_limits(res.joints + step);
      const Eigen::Matrix<double, 6, 1> rc =
          detail::pose_residual(tool, cand, target);
      if (rc.norm() <= res.residual) {
        if ((cand - (res.joints + step)).norm() > 0) res.limit_clamped = true;
        res.joints = cand;
        r = rc;
        res.residual = rc.norm();
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    res.residual_trace.push_back(res.residual);
    if (!accepted) break;  // stuck; report best effort
    if (res.residual < tol) {
      res.converged = true;
      break;
    }
  }
  if (res.residual < 1e-8) res.converged = true;
  return res;
}

}  // namespace detail

// Damped-least-squares iteration toward a target pose. Used to validate the
// analytic route and to drive tools without a closed-form inverse (LND).
// A stalled descent retries from a few deterministic restarts spread across
// the limit box; the best attempt is reported.
inline NumericIkResult ik_numeric(const ToolKinematics& tool,
                                  const ToolPose& target,
                                  const Eigen::VectorXd& q_init,
                                  double lambda = 1e-3, int max_iter = 200,
                                  double step_cap = 0.1, double tol = 1e-10) {
  NumericIkResult best =
      detail::ik_numeric_once(tool, target, q_init, lambda, max_iter,
                              step_cap, tol);
  const bool clamped_seed = best.limit_clamped;
  for (int attempt = 1; attempt <= 6 && !best.converged; ++attempt) {
    Eigen::VectorXd q(tool.joint_count());
    for (int j = 0; j < q.size(); ++j) {
      // low-discrepancy fractions keep the restarts spread and reproducible
      double frac = 0.5 + 0.6180339887498949 * attempt +
                    0.3819660112501051 * (j + 1) * attempt;
      frac -= std::floor(frac);
      const auto& lim = tool.joint_limits()[j];
      q[j] = lim.min + frac * (lim.max - lim.min);
    }
    NumericIkResult res = detail::ik_numeric_once(tool, target, q, lambda,
                                                  max_iter, step_cap, tol);
    if (res.converged || res.residual < best.residual) {
      res.limit_clamped = clamped_seed || res.limit_clamped;
      best = res;
    }
  }
  return best;
}

// --- Tool definition files -------------------------------------------------
//
// Line-oriented key-value format:
//   tool <name>
//   links l1=0.4318 l3=0.4162 l4=0.0091
//   frame a=<v> alpha=<v> d=<v> theta=<v> [bind=d:+q3 | bind=theta:+q1]
//   limit q1 = -1.2 1.2
// Values accept plain numbers, pi, [-]pi/N, and [-]<link name>.

namespace detail {

inline double parse_value(const std::string& tok,
                          const std::map<std::string, double>& links) {
  std::string s = tok;
  double sign = 1.0;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    if (s[0] == '-') sign = -1.0;
    s = s.substr(1);
  }
  if (s == "pi") return sign * M_PI;
  if (s.rfind("pi/", 0) == 0) return sign * M_PI / std::stod(s.substr(3));
  if (auto it = links.find(s); it != links.end()) return sign * it->second;
  return sign * std::stod(s);
}

}  // namespace detail

inline ToolKinematics ToolKinematics::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KinematicsError("cannot open tool file: " + path);

  std::string name;
  std::map<std::string, double> links;
  std::vector<DhRow> rows;
  std::map<std::string, JointLimit> limits;
  int max_joint = -1;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos)
      line = line.substr(0, pos);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    const auto fail = [&](const std::string& msg) {
      throw KinematicsError(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (head == "tool") {
      if (!(ls >> name)) fail("missing tool name");
    } else if (head == "links") {
      std::string kv;
      while (ls >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) fail("expected name=value");
        links[kv.substr(0, eq)] =
            detail::parse_value(kv.substr(eq + 1), links);
      }
    } else if (head == "frame") {
      DhRow row;
      std::string kv;
      while (ls >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) fail("expected key=value");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "a") row.a = detail::parse_value(val, links);
        else if (key == "alpha") row.alpha = detail::parse_value(val, links);
        else if (key == "d") row.d_offset = detail::parse_value(val, links);
        else if (key == "theta")
          row.theta_offset = detail::parse_value(val, links);
        else if (key == "bind") {
          // d:+q3 or theta:-q1
          auto colon = val.find(':');
          if (colon == std::string::npos) fail("bind needs axis:joint");
          const std::string axis = val.substr(0, colon);
          std::string jref = val.substr(colon + 1);
          if (row.binding != DhRow::Binding::None)
            fail("at most one joint binding per frame");
          if (axis == "d") row.binding = DhRow::Binding::D;
          else if (axis == "theta") row.binding = DhRow::Binding::Theta;
          else fail("bind axis must be d or theta");
          row.sign = 1.0;
          if (!jref.empty() && (jref[0] == '+' || jref[0] == '-')) {
            if (jref[0] == '-') row.sign = -1.0;
            jref = jref.substr(1);
          }
          if (jref.size() < 2 || jref[0] != 'q') fail("joint must be qN");
          row.joint = std::stoi(jref.substr(1)) - 1;
          max_joint = std::max(max_joint, row.joint);
        } else {
          fail("unknown frame key: " + key);
        }
      }
      rows.push_back(row);
    } else if (head == "limit") {
      std::string jref, eq;
      double lo, hi;
      if (!(ls >> jref >> eq >> lo >> hi) || eq != "=")
        fail("expected: limit qN = lo hi");
      limits[jref] = JointLimit{lo, hi};
    } else {
      fail("unknown directive: " + head);
    }
  }
  if (name.empty()) throw KinematicsError(path + ": missing tool name");

  // Joint indices are dense but frames may skip joints (Suction has no q4);
  // limits are keyed by the joint names actually bound.
  std::vector<int> joint_ids;
  for (const auto& r : rows)
    if (r.binding != DhRow::Binding::None) joint_ids.push_back(r.joint);
  std::sort(joint_ids.begin(), joint_ids.end());
  joint_ids.erase(std::unique(joint_ids.begin(), joint_ids.end()),
                  joint_ids.end());
  std::vector<JointLimit> lim;
  std::vector<DhRow> remapped = rows;
  for (auto& r : remapped) {
    if (r.binding == DhRow::Binding::None) continue;
    const auto it =
        std::find(joint_ids.begin(), joint_ids.end(), r.joint);
    const int dense = static_cast<int>(it - joint_ids.begin());
    const std::string key = "q" + std::to_string(r.joint + 1);
    auto lit = limits.find(key);
    if (lit == limits.end())
      throw KinematicsError(path + ": missing limit for " + key);
    if (static_cast<int>(lim.size()) <= dense) lim.resize(dense + 1);
    lim[dense] = lit->second;
    r.joint = dense;
  }
  return ToolKinematics(name, std::move(remapped), std::move(links),
                        std::move(lim));
}

}  // namespace dvrl
