#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "splatsim/geometry.hpp"
#include "splatsim/mesh.hpp"

namespace splatsim {

enum class Integrator {
  // v += dt (g + F/m), springs evaluated at the start of the substep.
  kExplicit,
  // Linearized backward Euler on the spring and damping forces.
  kImplicit,
};

struct SimParams {
  double frame_dt = 1.0 / 30.0;
  int substeps = 20;
  double spring_damping = 0.0;  // N s/m
  double global_drag = 0.1;     // 1/s
  double self_collision_radius = 0.0;  // m; 0 disables
  double contact_offset = 0.002;       // m
  double contact_stiffness = 1e4;      // N/m, penalty bookkeeping only
  double friction_mu_ground = 0.5;
  double friction_mu_robot = 0.8;
  double friction_mu_mesh = 0.5;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  Integrator integrator = Integrator::kImplicit;
  int solver_max_iters = 30;
  double solver_tolerance = 1e-5;  // relative residual

  double substep_dt() const { return frame_dt / substeps; }
  void validate() const;
};

struct Spring {
  int i = 0;
  int j = 0;
  double rest_length = 0.0;
  double stiffness = 0.0;
};

struct ContactReport {
  // Mean normal force over the frame per robot link, in N.
  std::vector<double> link_force;
  // Penalty-form bookkeeping: contact_stiffness times deepest penetration.
  std::vector<double> link_penalty_force;
  double static_force = 0.0;
  double ground_force = 0.0;
  std::vector<std::uint8_t> particle_contact;

  void reset(std::size_t links, std::size_t particles);
  void merge(const ContactReport& other);
  double total_link_force() const;
};

class SpringMassModel {
 public:
  SpringMassModel() = default;
  SpringMassModel(std::vector<Vec3> positions, std::vector<double> masses,
                  std::vector<Spring> springs, SimParams params = {});

  std::vector<Vec3> x;
  std::vector<Vec3> v;
  std::vector<double> mass;
  SimParams params;

  std::size_t size() const { return x.size(); }
  const std::vector<Spring>& springs() const { return springs_; }
  void set_stiffness(std::span<const double> stiffness);
  void set_uniform_stiffness(double y);

  // Kinematic particles ignore forces and contacts; their velocity is
  // whatever the caller prescribes.
  void set_pinned(int particle, bool pinned);
  bool pinned(int particle) const { return pinned_[particle] != 0; }
  double inv_mass(int particle) const {
    return pinned_[particle] ? 0.0 : 1.0 / mass[particle];
  }

  bool connected(int a, int b) const;
  // Springs touching particle i as (spring index, other endpoint), sorted
  // by other endpoint.
  std::span<const std::pair<int, int>> incident(int i) const;
  // The whole adjacency in particle order; entries of particle i live in
  // [incident_offsets()[i], incident_offsets()[i + 1]).
  std::span<const std::pair<int, int>> incident_all() const { return adj_; }
  std::span<const int> incident_offsets() const { return adj_offset_; }

  // Damping coefficient giving ratio zeta for the median spring.
  double damping_for_ratio(double zeta) const;

  Vec3 momentum() const;
  double kinetic_energy() const;
  double spring_energy() const;

  std::uint64_t state_hash() const;
  std::uint64_t degenerate_springs = 0;
  std::uint64_t solver_iterations = 0;
  // Previous implicit velocity increment, used as the next initial guess.
  std::vector<Vec3> warm_start;

  void validate() const;

 private:
  void build_adjacency();

  std::vector<Spring> springs_;
  std::vector<std::uint8_t> pinned_;
  std::vector<int> adj_offset_;
  std::vector<std::pair<int, int>> adj_;
};

// Explicit spring update, positions untouched.
void step_springs(SpringMassModel& model, double dt);
// Linearly implicit spring update, positions untouched.
void step_springs_implicit(SpringMassModel& model, double dt);
// Dispatches on model.params.integrator and applies global drag.
void integrate_forces(SpringMassModel& model, double dt);

// Close pairs not joined by a spring, sorted.
std::vector<std::pair<int, int>> self_collision_pairs(
    const SpringMassModel& model);
void self_collision(SpringMassModel& model);

// Collider whose pose moves from pose_prev to pose_next over dt.
struct MeshContactInput {
  const MeshDistanceField* field = nullptr;
  RigidTransform pose_prev;
  RigidTransform pose_next;
  double mu = 0.0;
};

// Sum of m * dv_n over contacting particles (N s) and deepest penetration.
struct ContactImpulse {
  double impulse = 0.0;
  double max_penetration = 0.0;
};

ContactImpulse collide_mesh(SpringMassModel& model,
                            const MeshContactInput& input, double dt,
                            std::span<std::uint8_t> contact_flags = {});
ContactImpulse collide_ground(SpringMassModel& model, double z0, double mu,
                              double dt);

struct StaticCollider {
  std::shared_ptr<const MeshDistanceField> field;
  RigidTransform pose;
};

// Robot link meshes posed at a fraction s in [0, 1] of the frame.
struct KinematicColliders {
  std::vector<std::shared_ptr<const MeshDistanceField>> link_fields;
  std::function<std::vector<RigidTransform>(double)> poses_at;
};

// Kinematic particle targets at the frame end; particles move linearly
// from their current positions.
struct PinTargets {
  std::vector<int> particles;
  std::vector<Vec3> end_positions;
};

struct FrameInputs {
  const KinematicColliders* robot = nullptr;
  std::span<const StaticCollider> static_meshes;
  std::optional<double> ground;
  const PinTargets* pins = nullptr;
};

// One control frame of params.substeps substeps. Throws SimulationFault with
// the substep index when the state becomes non-finite.
ContactReport simulate_frame(SpringMassModel& model, const FrameInputs& in);

// Gripper opening update with force-latched halt.
struct GripperState {
  double opening = 0.0;
  double max_opening = 0.08;
  bool halted = false;
};

double grasp_step(double opening, double closing_speed,
                  const ContactReport& report, double f_max, double frame_dt,
                  std::span<const int> finger_links = {});
// Stateful variant: once the force threshold trips the opening stays put
// until `close` is released.
void grasp_update(GripperState& g, bool close, double speed,
                  const ContactReport& report, double f_max, double frame_dt,
                  std::span<const int> finger_links = {});

}  // namespace splatsim
