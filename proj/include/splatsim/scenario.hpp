#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatsim/alignment.hpp"
#include "splatsim/geometry.hpp"
#include "splatsim/mesh.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/renderer.hpp"
#include "splatsim/robot.hpp"
#include "splatsim/springmass.hpp"
#include "splatsim/twin.hpp"

namespace splatsim {

enum class TaskType { kToyPacking, kRopeRouting, kPushT };
std::string to_string(TaskType t);
TaskType task_from_string(const std::string& s);

// Planar randomization of one dimension. Bounds are in the config units
// (cm for x and y, degrees for theta) so grid points stay rational until the
// final conversion. A non-empty `values` list replaces the interval.
struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> values;
  bool discrete() const { return !values.empty(); }
  bool collapsed() const { return !discrete() && lo == hi; }
};

struct PlanarRanges {
  GridAxis x, y, theta;
};

enum class TwinKind { kDeformable, kRigid };

struct ObjectSpec {
  std::string name;
  TwinKind kind = TwinKind::kDeformable;
  TriangleMesh shape;  // in the object frame
  double spacing = 0.01;
  TwinSpec twin;            // deformable objects
  RigidTwinOptions rigid;   // rigid objects
  RigidTransform nominal;   // object frame -> world at the nominal pose
  Vec3 color = Vec3(0.8, 0.5, 0.3);
  std::optional<std::filesystem::path> splat_file;  // object-frame kernels
  PlanarRanges ranges;
};

// Static collider; several boxes may share a name and move together.
struct StaticSpec {
  std::string name;
  std::vector<TriangleMesh> parts;  // in the static's frame
  RigidTransform nominal;
  Vec3 color = Vec3(0.6, 0.6, 0.6);
  PlanarRanges ranges;
};

struct NamedCamera {
  std::string name;
  Camera camera;
};

struct TaskSpec {
  TaskType type = TaskType::kToyPacking;
  // Toy packing: in-box region, in the frame of `box_static`.
  std::string box_static;
  OrientedBox box_region;
  std::optional<double> threshold_fraction;  // replaces threshold when set
  ToyPackingCriterion toy;
  // Rope routing: openings in the frame of `clip_static`.
  std::string clip_static;
  std::vector<Opening> openings;
  RopeRoutingCriterion rope;
  // Push-T: target pose of the object frame.
  RigidTransform target;
  PushTCriterion pusht;
  // End-effector height for planar actions.
  double planar_height = 0.02;
};

struct Scenario {
  std::string name;
  std::string version = "1";
  std::filesystem::path source;
  std::string config_hash;  // hex digest of the canonical config text
  SimParams params;
  // When set, spring damping is derived from this ratio for the median
  // spring of the combined twin.
  std::optional<double> damping_ratio;
  double ground = 0.0;
  double horizon_s = 15.0;
  int episodes = 1;

  RobotModel robot;
  std::vector<double> home;  // full joint vector
  double gripper_speed = 0.1;  // m/s
  double f_max = 15.0;         // N
  int ik_iterations = 8;

  std::vector<ObjectSpec> objects;
  std::vector<StaticSpec> statics;
  std::vector<NamedCamera> cameras;
  std::optional<ColorPolynomial> color_transform;
  int robot_points_per_link = 300;

  TaskSpec task;

  int horizon_frames() const;
  const StaticSpec* find_static(const std::string& name) const;
};

// Scenario JSON. Relative paths resolve against `base_dir`.
Scenario parse_scenario(const std::string& text,
                        const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

struct PlanarPose {
  std::string name;  // object or static name
  double x = 0.0;    // m
  double y = 0.0;    // m
  double theta = 0.0;  // rad
};

struct InitialState {
  std::string episode;
  std::vector<PlanarPose> poses;
  const PlanarPose* find(const std::string& name) const;
};

struct GridEntity {
  std::string name;
  PlanarRanges ranges;
};

// Evenly spaced grid over every non-collapsed axis. Discrete axes use their
// listed values; the remaining factor of `count` is split over interval
// axes by assigning prime factors, largest first, to the axis with the
// fewest points so far. An interval axis with one point sits at its
// midpoint. Episodes are ordered with the first axis outermost.
std::vector<InitialState> sample_initial_grid(
    const std::vector<GridEntity>& entities, int count);
std::vector<InitialState> sample_initial_grid(const Scenario& scenario);

std::string to_json(const InitialState& s);
InitialState initial_state_from_json(const std::string& text);

}  // namespace splatsim
