#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splatsim/image.hpp"
#include "splatsim/renderer.hpp"
#include "splatsim/scenario.hpp"
#include "splatsim/springmass.hpp"

namespace splatsim {

enum class ActionMode { kJointTarget, kEePoseTarget, kPlanarTarget };
std::string to_string(ActionMode m);
ActionMode action_mode_from_string(const std::string& s);

// Payload per mode: arm joint targets (rad, m); end-effector pose as
// x y z qw qx qy qz; planar x y at the task's pusher height. `gripper` is the
// commanded openness in [0, 1].
struct Action {
  ActionMode mode = ActionMode::kJointTarget;
  std::vector<double> payload;
  double gripper = 1.0;

  static Action hold(const std::vector<double>& arm_q, double gripper);
  static Action ee_pose(const RigidTransform& pose, double gripper);
  static Action planar(double x, double y);
};

struct Observation {
  int frame = 0;
  std::vector<Image> images;  // one per scenario camera when rendering
  Vec3 ee_position = Vec3::Zero();
  Quat ee_orientation = Quat::Identity();
  double gripper_openness = 1.0;
  // Flat policy-facing state: (x, y) for push-T, otherwise position,
  // quaternion (w x y z) and openness.
  std::vector<double> ee_state;
};

struct StepInfo {
  int frame = 0;
  double link_force = 0.0;    // N, all robot links
  double finger_force = 0.0;  // N
  double ground_force = 0.0;
  double static_force = 0.0;
  bool ik_clamped = false;
  bool gripper_halted = false;
  // Raw per-frame criterion quantities.
  std::size_t in_box = 0;
  std::array<std::size_t, 2> crossings{0, 0};
  double msd = 0.0;
  bool done = false;
  std::uint64_t trajectory_hash = 0;
};

struct EnvOptions {
  bool render = false;
  RenderOptions render_options;
  std::uint64_t seed = 0;  // kernel sampling for generated splats
  // Overrides applied on top of the scenario's simulation parameters.
  std::optional<int> substeps;
};

// Gym-style environment over one scenario. Owns its twins, kernels and robot
// state; independent instances may run on different threads.
class Environment {
 public:
  explicit Environment(Scenario scenario, EnvOptions options = {});
  ~Environment();
  Environment(Environment&&) noexcept;
  Environment& operator=(Environment&&) noexcept;

  Observation reset(const InitialState& initial);
  std::pair<Observation, StepInfo> step(const Action& action);

  const Scenario& scenario() const { return scenario_; }
  const SpringMassModel& model() const { return model_; }
  const std::vector<double>& joints() const { return q_; }
  double opening() const;
  int frame() const { return frame_; }
  bool done() const;
  std::uint64_t trajectory_hash() const { return hash_; }
  std::string trajectory_hash_hex() const;

  // Particles and springs of object o in the combined model.
  std::pair<int, int> object_range(std::size_t o) const;
  // Target particles for push-T (object 0 at the task target pose).
  const std::vector<Vec3>& target_particles() const { return target_; }
  // Object 0 particle centroid.
  Vec3 object_centroid(std::size_t o = 0) const;
  // Current static pose (after reset randomization).
  RigidTransform static_pose(const std::string& name) const;
  // World-frame toy-packing region and rope openings for this episode.
  OrientedBox box_region() const;
  std::vector<Opening> openings() const;

  // Per-frame criterion traces since reset.
  const std::vector<std::size_t>& in_box_trace() const { return in_box_; }
  const std::vector<std::array<std::size_t, 2>>& crossing_trace() const {
    return crossings_;
  }
  const std::vector<double>& msd_trace() const { return msd_; }
  // Criterion quantity as doubles (count, min crossing count, or MSD).
  std::vector<double> criterion_trace() const;
  Verdict verdict() const;

  // Scene kernels at the current state (robot, statics, objects).
  GaussianSet scene_kernels() const;
  std::vector<Image> render_all() const;
  Image render_camera(std::size_t camera) const;

 private:
  struct Impl;
  Observation observe() const;
  void record_criteria(StepInfo& info);
  void build();

  Scenario scenario_;
  EnvOptions options_;
  SpringMassModel model_;
  std::vector<double> q_;
  GripperState gripper_;
  int frame_ = 0;
  std::uint64_t hash_ = 0;
  std::vector<Vec3> target_;
  std::vector<std::size_t> in_box_;
  std::vector<std::array<std::size_t, 2>> crossings_;
  std::vector<double> msd_;
  std::unique_ptr<Impl> impl_;
};

// Translucent yellow silhouette of `particles` drawn over `img`.
void overlay_goal_mask(Image& img, const Camera& camera,
                       std::span<const Vec3> particles, double radius,
                       double alpha = 0.4);

}  // namespace splatsim
