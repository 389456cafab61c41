#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatsim/geometry.hpp"
#include "splatsim/mesh.hpp"

namespace splatsim {

enum class JointType { kFixed, kRevolute, kPrismatic };

struct Joint {
  std::string name;
  JointType type = JointType::kFixed;
  int parent = -1;  // link index
  int child = -1;   // link index
  RigidTransform origin;
  Vec3 axis = Vec3::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
};

struct Link {
  std::string name;
  // Collision/visual geometry in the link frame; empty when the link has
  // none.
  TriangleMesh mesh;
  int parent_joint = -1;

  bool has_mesh() const { return !mesh.triangles.empty(); }
};

// Kinematic tree. Links are stored parent-before-child; link 0 is the root
// and sits at `base`.
class RobotModel {
 public:
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;
  RigidTransform base;
  // Actuated joints in the order of the joint vector q.
  std::vector<int> actuated;
  // Positions in q of the finger joints; each finger sits at opening / 2.
  std::vector<int> gripper;
  int ee_link = -1;
  double velocity_limit = 1.0;  // rad/s, l2 over arm joints

  std::size_t dof() const { return actuated.size(); }
  int link_index(const std::string& link_name) const;
  // Indices into q that are not gripper joints.
  std::vector<int> arm_joints() const;

  // Finishes construction: orders links, collects actuated joints, checks
  // the tree. Called by load_urdf; call it after building a robot by hand.
  void finalize();

  std::vector<RigidTransform> forward_kinematics(
      std::span<const double> q) const;
  RigidTransform ee_pose(std::span<const double> q) const;

  // Sets the finger joints of q from a gripper opening in meters.
  void set_opening(std::vector<double>& q, double opening) const;
  double opening(std::span<const double> q) const;
  std::vector<double> clamp_to_limits(std::span<const double> q) const;
};

// URDF subset: link, joint (fixed/revolute/continuous/prismatic), origin,
// axis, limit, and collision or visual geometry of type box or OBJ mesh.
// Mesh filenames are resolved relative to the URDF file.
RobotModel load_urdf(const std::filesystem::path& path);
RobotModel parse_urdf(const std::string& xml,
                      const std::filesystem::path& base_dir = {});

// Proportional joint velocity with the l2 norm capped at `limit`.
std::vector<double> joint_velocity_controller(std::span<const double> current,
                                              std::span<const double> target,
                                              double limit, double gain = 5.0);

struct IkOptions {
  double damping = 0.05;
  // Position-only task (orientation rows dropped).
  bool position_only = false;
  double fd_step = 1e-6;
};

struct IkStep {
  std::vector<double> target;
  bool clamped = false;
};

// One damped least-squares step toward `goal` for the arm joints; gripper
// joints are carried over unchanged.
IkStep resolved_rate_step(const RobotModel& robot, std::span<const double> q,
                          const RigidTransform& goal,
                          const IkOptions& opt = {});

// 6-vector pose error (position, rotation vector) of goal relative to pose.
Eigen::Matrix<double, 6, 1> pose_error(const RigidTransform& pose,
                                       const RigidTransform& goal);

}  // namespace splatsim
