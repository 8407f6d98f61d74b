#pragma once

// Kinematic scene model for a single PSM arm: a box workspace with a table
// half-space, eta-scaled Cartesian stepping, direct jaw setting and rigid
// grasp attachment. No dynamics anywhere.

#include <cmath>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

namespace dvrl {

struct Workspace {
  Eigen::Vector3d center;      // p_c, meters
  double rho;                  // half-extent, meters
  double table_height;         // z in base frame, meters
  double eta;                  // meters of travel per unit action

  void validate() const {
    if (rho <= 0) throw std::invalid_argument("workspace rho must be > 0");
    if (eta <= 0) throw std::invalid_argument("workspace eta must be > 0");
    // tolerance so a table at exactly center.z - rho survives the usual
    // floating-point noise in either direction
    if (table_height < center.z() - rho - 1e-12 ||
        table_height > center.z() + rho + 1e-12)
      throw std::invalid_argument("table height outside workspace box");
  }
};

struct PsmState {
  Eigen::Vector3d position;  // end-effector, base frame
  double jaw = 1.0;          // 0 closed .. 1 open
  bool attached = false;
};

struct SceneObject {
  Eigen::Vector3d position;
  double grasp_radius = 0.005;
};

inline Eigen::Vector3d clamp_to_workspace(const Eigen::Vector3d& p,
                                          const Workspace& ws) {
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i)
    out[i] = std::clamp(p[i], ws.center[i] - ws.rho, ws.center[i] + ws.rho);
  out.z() = std::max(out.z(), ws.table_height);
  return out;
}

inline Eigen::Vector3d normalize(const Eigen::Vector3d& p,
                                 const Workspace& ws) {
  return (p - ws.center) / ws.rho;
}

inline Eigen::Vector3d denormalize(const Eigen::Vector3d& p_norm,
                                   const Workspace& ws) {
  return p_norm * ws.rho + ws.center;
}

// One Cartesian step. Out-of-range action components are clamped and
// reported, not rejected. phi is absent for jaw-less control (Reach).
// A rigidly attached object tracks the gripper point.
inline PsmState step_arm(const PsmState& state, Eigen::Vector3d delta,
                         std::optional<double> phi, const Workspace& ws,
                         SceneObject* attached_object = nullptr,
                         bool* clamped = nullptr) {
  bool did_clamp = false;
  for (int i = 0; i < 3; ++i) {
    if (delta[i] < -1.0 || delta[i] > 1.0) did_clamp = true;
    delta[i] = std::clamp(delta[i], -1.0, 1.0);
  }
  PsmState next = state;
  next.position = clamp_to_workspace(ws.eta * delta + state.position, ws);
  if (phi) {
    double ph = *phi;
    if (ph < -1.0 || ph > 1.0) did_clamp = true;
    ph = std::clamp(ph, -1.0, 1.0);
    next.jaw = (ph + 1.0) / 2.0;
  }
  if (state.attached && attached_object)
    attached_object->position = next.position;
  if (clamped) *clamped = did_clamp;
  return next;
}

// Attachment rule: jaw closed below 0.25 (strict) and object within the
// proximity radius. While attached the object coincides with the gripper;
// on release it falls straight down to the table.
inline void update_grasp(PsmState& state, SceneObject& obj,
                         const Workspace& ws) {
  const bool hold = state.jaw < 0.25 &&
      (state.position - obj.position).norm() <= obj.grasp_radius;
  if (hold) {
    state.attached = true;
    obj.position = state.position;
  } else if (state.attached) {
    state.attached = false;
    obj.position.z() = ws.table_height;
  }
}

}  // namespace dvrl
