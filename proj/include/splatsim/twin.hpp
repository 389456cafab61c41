#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatsim/mesh.hpp"
#include "splatsim/springmass.hpp"

namespace splatsim {

enum class StiffnessMode { kUniform, kPerSpring };

struct TwinSpec {
  double connection_radius = 0.02;  // d, m
  int max_neighbors = 30;
  StiffnessMode stiffness_mode = StiffnessMode::kUniform;
  double stiffness = 500.0;             // used when uniform
  std::vector<double> spring_stiffness;  // used when per-spring
  double particle_spacing = 0.01;
  double total_mass = 0.1;  // kg

  void validate() const;
};

// Springs between every pair within connection_radius, each node keeping at
// most max_neighbors nearest partners; the union of per-node picks is used.
// Isolated node indices are appended to `isolated` when non-null.
SpringMassModel build_spring_mass(std::span<const Vec3> points,
                                  const TwinSpec& spec, SimParams params = {},
                                  std::vector<int>* isolated = nullptr);

struct RigidTwinOptions {
  double radius = 0.5;       // in units of frame_scale
  double frame_scale = 0.0;  // m; 0 uses the mesh's largest extent
  int max_neighbors = 50;
  double stiffness = 3e4;
  double total_mass = 0.1;
};

// Voxel-center lattice points of the given spacing lying inside the mesh.
std::vector<Vec3> sample_interior(const TriangleMesh& mesh, double spacing);

SpringMassModel build_rigid_twin(const TriangleMesh& mesh, double spacing,
                                 const RigidTwinOptions& opt = {},
                                 SimParams params = {});

struct TrackedFrame {
  double time = 0.0;
  std::vector<Vec3> points;
  std::vector<Vec3> controls;
};

struct TrackedTrajectory {
  std::vector<TrackedFrame> frames;

  void validate() const;
};

void save_trajectory(const TrackedTrajectory& traj,
                     const std::filesystem::path& path);
TrackedTrajectory load_trajectory(const std::filesystem::path& path);

enum class Correspondence { kIndex, kChamfer };

struct LossOptions {
  Correspondence correspondence = Correspondence::kIndex;
  std::optional<double> ground;
};

struct LossResult {
  double loss = 0.0;  // +inf when the rollout faulted
  std::string fault;
};

// Nearest particle to each control point of the first frame.
std::vector<int> control_particles(const SpringMassModel& model,
                                   const TrackedTrajectory& traj);

// Rolls the model through the trajectory with control particles pinned to
// the tracked controls. Records the simulated particle positions per frame
// when `rollout` is non-null.
LossResult trajectory_loss(const SpringMassModel& model,
                           const TrackedTrajectory& traj,
                           const LossOptions& opt = {},
                           std::vector<std::vector<Vec3>>* rollout = nullptr);

// Generates a trajectory by simulating `model` with the given control
// particle paths; handy for self-consistency fixtures.
TrackedTrajectory synthesize_trajectory(
    const SpringMassModel& model, std::span<const int> control_particles,
    std::span<const std::vector<Vec3>> control_paths,
    std::optional<double> ground = std::nullopt);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool fixed() const { return lo == hi; }
};

struct GlobalParamRanges {
  Range connection_radius{0.02, 0.02};
  Range stiffness{100.0, 3000.0};  // searched in log space
  Range friction{0.5, 0.5};
  Range damping{0.0, 0.0};
};

struct CemOptions {
  int population = 32;
  int elite = 8;
  int generations = 20;
  std::uint64_t seed = 0;
};

struct GlobalParams {
  double connection_radius = 0.0;
  double stiffness = 0.0;
  double friction = 0.0;
  double damping = 0.0;
};

struct GlobalFit {
  GlobalParams best;
  double loss = 0.0;
  std::vector<double> trace;  // best-so-far loss after each generation
};

// Template used to rebuild candidate twins: spacing, mass, neighbor cap and
// simulation settings come from here, the searched fields are overwritten.
struct TwinTemplate {
  TwinSpec spec;
  SimParams params;
  LossOptions loss;
};

SpringMassModel make_candidate(const TrackedTrajectory& traj,
                               const TwinTemplate& base,
                               const GlobalParams& p);

GlobalFit identify_global_params(const TrackedTrajectory& traj,
                                 const TwinTemplate& base,
                                 const GlobalParamRanges& ranges,
                                 const CemOptions& opt = {});

struct SpsaOptions {
  int iterations = 60;
  double step = 1.0;          // on log Y
  double perturbation = 0.1;  // on log Y
  double y_min = 10.0;
  double y_max = 1e5;
  std::uint64_t seed = 0;
};

struct RefineResult {
  std::vector<double> stiffness;
  std::vector<double> trace;  // best-so-far loss, entry 0 is the input loss
  bool diverged = false;
};

RefineResult refine_per_spring_stiffness(const SpringMassModel& model,
                                         const TrackedTrajectory& traj,
                                         const SpsaOptions& opt = {},
                                         const LossOptions& loss = {});

}  // namespace splatsim
