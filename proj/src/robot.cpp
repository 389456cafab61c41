#include "splatsim/robot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "splatsim/error.hpp"

namespace splatsim {

namespace pt = boost::property_tree;

namespace {

Vec3 parse_vec3(const std::string& text, const Vec3& fallback) {
  if (text.empty()) return fallback;
  std::istringstream in(text);
  Vec3 v;
  if (!(in >> v.x() >> v.y() >> v.z()) || !v.allFinite())
    throw ParseError("urdf: bad 3-vector '" + text + "'");
  return v;
}

RigidTransform parse_origin(const pt::ptree& node) {
  const auto origin = node.get_child_optional("origin");
  if (!origin) return {};
  const Vec3 xyz =
      parse_vec3(origin->get<std::string>("<xmlattr>.xyz", ""), Vec3::Zero());
  const Vec3 rpy =
      parse_vec3(origin->get<std::string>("<xmlattr>.rpy", ""), Vec3::Zero());
  return {rpy_to_quat(rpy), xyz};
}

std::optional<TriangleMesh> parse_geometry(const pt::ptree& holder,
                                           const std::filesystem::path& dir,
                                           const std::string& link_name) {
  const auto geom = holder.get_child_optional("geometry");
  if (!geom) return std::nullopt;
  const RigidTransform origin = parse_origin(holder);
  if (const auto box = geom->get_child_optional("box")) {
    const Vec3 size = parse_vec3(box->get<std::string>("<xmlattr>.size", ""),
                                 Vec3::Zero());
    if ((size.array() <= 0.0).any())
      throw ParseError("urdf: link " + link_name + " has a non-positive box");
    return make_box_mesh(0.5 * size, Vec3::Zero(), link_name)
        .transformed(origin);
  }
  if (const auto mesh = geom->get_child_optional("mesh")) {
    std::string file = mesh->get<std::string>("<xmlattr>.filename", "");
    if (file.rfind("file://", 0) == 0) file = file.substr(7);
    TriangleMesh m = load_mesh_obj(dir / file);
    const Vec3 scale = parse_vec3(
        mesh->get<std::string>("<xmlattr>.scale", ""), Vec3::Ones());
    for (Vec3& v : m.vertices) v = v.cwiseProduct(scale);
    m.name = link_name;
    return m.transformed(origin);
  }
  return std::nullopt;
}

RigidTransform joint_motion(const Joint& j, double q) {
  switch (j.type) {
    case JointType::kRevolute:
      return {Quat(Eigen::AngleAxisd(q, j.axis)), Vec3::Zero()};
    case JointType::kPrismatic:
      return RigidTransform::from_translation(j.axis * q);
    case JointType::kFixed:
      break;
  }
  return {};
}

}  // namespace

int RobotModel::link_index(const std::string& link_name) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if (links[i].name == link_name) return static_cast<int>(i);
  return -1;
}

std::vector<int> RobotModel::arm_joints() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(actuated.size()); ++i)
    if (std::find(gripper.begin(), gripper.end(), i) == gripper.end())
      out.push_back(i);
  return out;
}

void RobotModel::finalize() {
  if (links.empty()) throw InvalidArgument("robot has no links");
  std::vector<int> parent_joint(links.size(), -1);
  for (std::size_t j = 0; j < joints.size(); ++j) {
    const Joint& jt = joints[j];
    if (jt.parent < 0 || jt.child < 0 ||
        jt.parent >= static_cast<int>(links.size()) ||
        jt.child >= static_cast<int>(links.size()))
      throw InvalidArgument("joint " + jt.name + " references a missing link");
    if (parent_joint[jt.child] != -1)
      throw InvalidArgument("link " + links[jt.child].name +
                            " has two parent joints");
    parent_joint[jt.child] = static_cast<int>(j);
    if (jt.type != JointType::kFixed) {
      if (jt.axis.norm() < 1e-12)
        throw InvalidArgument("joint " + jt.name + " has a zero axis");
      joints[j].axis.normalize();
      if (!(jt.lower <= jt.upper) || !std::isfinite(jt.lower) ||
          !std::isfinite(jt.upper))
        throw InvalidArgument("joint " + jt.name + " has invalid limits");
    }
  }
  int roots = 0;
  for (std::size_t i = 0; i < links.size(); ++i) {
    links[i].parent_joint = parent_joint[i];
    if (parent_joint[i] == -1) ++roots;
  }
  if (roots != 1 || parent_joint[0] != -1)
    throw InvalidArgument("robot must be a tree rooted at link 0");

  // Parent-first joint order.
  std::vector<int> order;
  std::vector<int> frontier = {0};
  while (!frontier.empty()) {
    const int link = frontier.front();
    frontier.erase(frontier.begin());
    for (std::size_t j = 0; j < joints.size(); ++j)
      if (joints[j].parent == link) {
        order.push_back(static_cast<int>(j));
        frontier.push_back(joints[j].child);
      }
  }
  if (order.size() != joints.size())
    throw InvalidArgument("robot joint graph is not connected");
  std::vector<Joint> sorted;
  for (int j : order) sorted.push_back(joints[j]);
  joints = std::move(sorted);
  for (std::size_t j = 0; j < joints.size(); ++j)
    links[joints[j].child].parent_joint = static_cast<int>(j);

  actuated.clear();
  for (std::size_t j = 0; j < joints.size(); ++j)
    if (joints[j].type != JointType::kFixed)
      actuated.push_back(static_cast<int>(j));
  for (int g : gripper)
    if (g < 0 || g >= static_cast<int>(actuated.size()))
      throw InvalidArgument("gripper joint index out of range");
  if (ee_link < 0) ee_link = joints.empty() ? 0 : joints.back().child;
}

std::vector<RigidTransform> RobotModel::forward_kinematics(
    std::span<const double> q) const {
  if (q.size() != actuated.size())
    throw InvalidArgument("joint vector has " + std::to_string(q.size()) +
                          " entries, robot has " +
                          std::to_string(actuated.size()));
  std::vector<double> joint_q(joints.size(), 0.0);
  for (std::size_t i = 0; i < actuated.size(); ++i) joint_q[actuated[i]] = q[i];
  std::vector<RigidTransform> poses(links.size());
  poses[0] = base;
  for (std::size_t j = 0; j < joints.size(); ++j) {
    const Joint& jt = joints[j];
    poses[jt.child] = poses[jt.parent] * jt.origin * joint_motion(jt, joint_q[j]);
  }
  return poses;
}

RigidTransform RobotModel::ee_pose(std::span<const double> q) const {
  return forward_kinematics(q)[ee_link];
}

void RobotModel::set_opening(std::vector<double>& q, double opening) const {
  for (int g : gripper) {
    const Joint& jt = joints[actuated[g]];
    q[g] = std::clamp(0.5 * opening, jt.lower, jt.upper);
  }
}

double RobotModel::opening(std::span<const double> q) const {
  double sum = 0.0;
  for (int g : gripper) sum += q[g];
  return gripper.empty() ? 0.0 : 2.0 * sum / static_cast<double>(gripper.size());
}

std::vector<double> RobotModel::clamp_to_limits(
    std::span<const double> q) const {
  std::vector<double> out(q.begin(), q.end());
  for (std::size_t i = 0; i < actuated.size(); ++i) {
    const Joint& jt = joints[actuated[i]];
    out[i] = std::clamp(out[i], jt.lower, jt.upper);
  }
  return out;
}

RobotModel parse_urdf(const std::string& xml,
                      const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(xml);
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("urdf: ") + e.what());
  }
  const auto root = tree.get_child_optional("robot");
  if (!root) throw SchemaError("urdf: missing <robot>");

  RobotModel robot;
  robot.name = root->get<std::string>("<xmlattr>.name", "robot");
  std::map<std::string, int> link_ids;
  for (const auto& [tag, node] : *root) {
    if (tag != "link") continue;
    Link link;
    link.name = node.get<std::string>("<xmlattr>.name", "");
    if (link.name.empty()) throw SchemaError("urdf: link without name");
    const auto* geom_holder = node.get_child_optional("collision")
                                  ? &node.get_child("collision")
                                  : (node.get_child_optional("visual")
                                         ? &node.get_child("visual")
                                         : nullptr);
    if (geom_holder)
      if (auto mesh = parse_geometry(*geom_holder, base_dir, link.name))
        link.mesh = std::move(*mesh);
    if (!link_ids.emplace(link.name, static_cast<int>(robot.links.size()))
             .second)
      throw SchemaError("urdf: duplicate link " + link.name);
    robot.links.push_back(std::move(link));
  }

  std::map<std::string, int> child_count;
  for (const auto& [tag, node] : *root) {
    if (tag != "joint") continue;
    Joint j;
    j.name = node.get<std::string>("<xmlattr>.name", "");
    const std::string type = node.get<std::string>("<xmlattr>.type", "");
    if (type == "fixed") {
      j.type = JointType::kFixed;
    } else if (type == "revolute" || type == "continuous") {
      j.type = JointType::kRevolute;
    } else if (type == "prismatic") {
      j.type = JointType::kPrismatic;
    } else {
      throw SchemaError("urdf: joint " + j.name + " has unsupported type '" +
                        type + "'");
    }
    const auto parent = node.get<std::string>("parent.<xmlattr>.link", "");
    const auto child = node.get<std::string>("child.<xmlattr>.link", "");
    if (!link_ids.contains(parent) || !link_ids.contains(child))
      throw SchemaError("urdf: joint " + j.name + " references unknown link");
    j.parent = link_ids.at(parent);
    j.child = link_ids.at(child);
    j.origin = parse_origin(node);
    j.axis = parse_vec3(node.get<std::string>("axis.<xmlattr>.xyz", ""),
                        Vec3::UnitX());
    if (type == "continuous") {
      j.lower = -4.0 * std::acos(0.0);
      j.upper = 4.0 * std::acos(0.0);
    } else if (j.type != JointType::kFixed) {
      if (!node.get_child_optional("limit"))
        throw SchemaError("urdf: joint " + j.name + " lacks <limit>");
      j.lower = node.get<double>("limit.<xmlattr>.lower", 0.0);
      j.upper = node.get<double>("limit.<xmlattr>.upper", 0.0);
    }
    robot.joints.push_back(std::move(j));
  }

  // The root link must come first for finalize().
  std::vector<bool> is_child(robot.links.size(), false);
  for (const Joint& j : robot.joints) is_child[j.child] = true;
  const auto root_it = std::find(is_child.begin(), is_child.end(), false);
  if (root_it == is_child.end()) throw SchemaError("urdf: no root link");
  const int root_id = static_cast<int>(root_it - is_child.begin());
  if (root_id != 0) {
    std::swap(robot.links[0], robot.links[root_id]);
    for (Joint& j : robot.joints)
      for (int* l : {&j.parent, &j.child})
        if (*l == 0)
          *l = root_id;
        else if (*l == root_id)
          *l = 0;
  }

  // Non-standard extensions read by this library only.
  robot.velocity_limit =
      root->get<double>("velocity_limit.<xmlattr>.value", robot.velocity_limit);
  std::vector<std::string> gripper_names;
  for (const auto& [tag, node] : *root)
    if (tag == "gripper_joint")
      gripper_names.push_back(node.get<std::string>("<xmlattr>.name", ""));
  const std::string ee = root->get<std::string>("end_effector.<xmlattr>.link", "");

  robot.finalize();
  for (const std::string& g : gripper_names) {
    int found = -1;
    for (std::size_t i = 0; i < robot.actuated.size(); ++i)
      if (robot.joints[robot.actuated[i]].name == g) found = static_cast<int>(i);
    if (found < 0) throw SchemaError("urdf: unknown gripper joint " + g);
    robot.gripper.push_back(found);
  }
  if (!ee.empty()) {
    robot.ee_link = robot.link_index(ee);
    if (robot.ee_link < 0) throw SchemaError("urdf: unknown end_effector " + ee);
  }
  return robot;
}

RobotModel load_urdf(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_urdf(buf.str(), path.parent_path());
}

std::vector<double> joint_velocity_controller(std::span<const double> current,
                                              std::span<const double> target,
                                              double limit, double gain) {
  if (!(limit > 0.0)) throw InvalidArgument("velocity limit must be positive");
  if (current.size() != target.size())
    throw InvalidArgument("joint vectors differ in length");
  std::vector<double> v(current.size());
  double norm2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = gain * (target[i] - current[i]);
    norm2 += v[i] * v[i];
  }
  const double norm = std::sqrt(norm2);
  if (norm > limit)
    for (double& x : v) x *= limit / norm;
  return v;
}

Eigen::Matrix<double, 6, 1> pose_error(const RigidTransform& pose,
                                       const RigidTransform& goal) {
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = goal.translation - pose.translation;
  const Eigen::AngleAxisd aa(canonical(goal.rotation * pose.rotation.inverse()));
  e.tail<3>() = aa.axis() * aa.angle();
  return e;
}

IkStep resolved_rate_step(const RobotModel& robot, std::span<const double> q,
                          const RigidTransform& goal, const IkOptions& opt) {
  if (!goal.translation.allFinite() || !goal.rotation.coeffs().allFinite())
    throw InvalidArgument("IK goal is not finite");
  const std::vector<int> arm = robot.arm_joints();
  const int rows = opt.position_only ? 3 : 6;
  const RigidTransform pose = robot.ee_pose(q);
  const Eigen::VectorXd err = pose_error(pose, goal).head(rows);

  Eigen::MatrixXd jac(rows, static_cast<Eigen::Index>(arm.size()));
  std::vector<double> probe(q.begin(), q.end());
  for (std::size_t c = 0; c < arm.size(); ++c) {
    const int i = arm[c];
    probe[i] = q[i] + opt.fd_step;
    const auto plus = pose_error(pose, robot.ee_pose(probe));
    probe[i] = q[i] - opt.fd_step;
    const auto minus = pose_error(pose, robot.ee_pose(probe));
    probe[i] = q[i];
    jac.col(static_cast<Eigen::Index>(c)) =
        ((plus - minus) / (2.0 * opt.fd_step)).head(rows);
  }
  const Eigen::MatrixXd jjt =
      jac * jac.transpose() +
      opt.damping * opt.damping * Eigen::MatrixXd::Identity(rows, rows);
  const Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);

  IkStep out;
  out.target.assign(q.begin(), q.end());
  for (std::size_t c = 0; c < arm.size(); ++c)
    out.target[arm[c]] += dq(static_cast<Eigen::Index>(c));
  const std::vector<double> clamped = robot.clamp_to_limits(out.target);
  out.clamped = clamped != out.target;
  out.target = clamped;
  return out;
}

}  // namespace splatsim
