#include "splatsim/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "splatsim/alignment.hpp"
#include "splatsim/error.hpp"
#include "splatsim/random.hpp"

namespace splatsim {

std::string to_string(ActionMode m) {
  switch (m) {
    case ActionMode::kJointTarget: return "joint";
    case ActionMode::kEePoseTarget: return "ee_pose";
    case ActionMode::kPlanarTarget: return "planar";
  }
  return "joint";
}

ActionMode action_mode_from_string(const std::string& s) {
  if (s == "joint") return ActionMode::kJointTarget;
  if (s == "ee_pose") return ActionMode::kEePoseTarget;
  if (s == "planar") return ActionMode::kPlanarTarget;
  throw SchemaError("unknown action mode '" + s + "'");
}

Action Action::hold(const std::vector<double>& arm_q, double gripper) {
  return {ActionMode::kJointTarget, arm_q, gripper};
}

Action Action::ee_pose(const RigidTransform& pose, double gripper) {
  const Quat q = canonical(pose.rotation);
  return {ActionMode::kEePoseTarget,
          {pose.translation.x(), pose.translation.y(), pose.translation.z(),
           q.w(), q.x(), q.y(), q.z()},
          gripper};
}

Action Action::planar(double x, double y) {
  return {ActionMode::kPlanarTarget, {x, y}, 0.0};
}

namespace {

RigidTransform planar_about(const Vec3& pivot, const PlanarPose* p) {
  if (!p) return {};
  return RigidTransform::from_translation(pivot + Vec3(p->x, p->y, 0.0)) *
         RigidTransform::from_axis_angle(Vec3::UnitZ(), p->theta) *
         RigidTransform::from_translation(-pivot);
}

GaussianKernel transformed(GaussianKernel k, const RigidTransform& t) {
  k.position = t.apply(k.position);
  k.rotation = (t.rotation * k.rotation).normalized();
  return k;
}

std::vector<GaussianKernel> surface_kernels(const TriangleMesh& mesh,
                                            std::size_t count,
                                            std::uint64_t seed,
                                            const Vec3& color, int label) {
  double area = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) area += mesh.triangle_area(t);
  const double s = 0.7 * std::sqrt(area / static_cast<double>(count));
  std::vector<GaussianKernel> out;
  for (const Vec3& p : sample_surface(mesh, count, seed)) {
    GaussianKernel k;
    k.position = p;
    k.set_scale(Vec3::Constant(s));
    k.set_opacity(0.95);
    k.set_color(color);
    k.label = label;
    out.push_back(k);
  }
  return out;
}

// Tool pointing down, fingers closing across the radial direction.
RigidTransform tool_down(const Vec3& p) {
  const double yaw = std::atan2(p.y(), p.x());
  return {Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
               Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY())),
          p};
}

}  // namespace

struct Environment::Impl {
  // Combined model at the nominal poses.
  SpringMassModel base;
  std::vector<std::pair<int, int>> particle_range;  // [begin, end)
  std::vector<std::pair<int, int>> spring_range;
  std::vector<Vec3> rest_centroid;
  std::vector<std::pair<int, int>> object_segments;  // object 0 springs

  std::vector<GaussianSet> object_kernels_nominal;
  std::vector<GaussianSet> object_kernels;
  std::vector<LbsBinding> bindings;
  std::vector<std::vector<std::vector<int>>> neighborhoods;

  std::vector<std::vector<GaussianKernel>> link_kernels;  // link frame
  std::vector<std::vector<GaussianKernel>> static_kernels;  // static frame

  KinematicColliders robot;
  std::vector<int> finger_links;
  std::vector<std::vector<std::shared_ptr<const MeshDistanceField>>> static_fields;
  std::vector<RigidTransform> static_pose;
  std::vector<StaticCollider> colliders;
  ContactReport last_report;
};

Environment::~Environment() = default;
Environment::Environment(Environment&&) noexcept = default;
Environment& Environment::operator=(Environment&&) noexcept = default;

Environment::Environment(Scenario scenario, EnvOptions options)
    : scenario_(std::move(scenario)), options_(options), impl_(std::make_unique<Impl>()) {
  if (options_.substeps) scenario_.params.substeps = *options_.substeps;
  scenario_.params.validate();
  build();
}

void Environment::build() {
  Impl& m = *impl_;
  const RobotModel& robot = scenario_.robot;

  // Twins, merged into one model so cross-object contacts share a solver.
  std::vector<Vec3> x;
  std::vector<double> mass;
  std::vector<Spring> springs;
  for (std::size_t o = 0; o < scenario_.objects.size(); ++o) {
    const ObjectSpec& spec = scenario_.objects[o];
    SpringMassModel part;
    if (spec.kind == TwinKind::kRigid) {
      part = build_rigid_twin(spec.shape, spec.spacing, spec.rigid, scenario_.params);
    } else {
      const std::vector<Vec3> pts = sample_interior(spec.shape, spec.spacing);
      if (pts.empty()) throw SchemaError("object " + spec.name + " has no interior samples");
      part = build_spring_mass(pts, spec.twin, scenario_.params);
    }
    const int off = static_cast<int>(x.size());
    const int s0 = static_cast<int>(springs.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      x.push_back(spec.nominal.apply(part.x[i]));
      mass.push_back(part.mass[i]);
    }
    for (Spring s : part.springs()) {
      s.i += off;
      s.j += off;
      springs.push_back(s);
    }
    m.particle_range.emplace_back(off, static_cast<int>(x.size()));
    m.spring_range.emplace_back(s0, static_cast<int>(springs.size()));
    m.rest_centroid.push_back(
        centroid(std::span<const Vec3>(x).subspan(off, part.size())));
  }
  m.base = SpringMassModel(x, mass, springs, scenario_.params);
  if (scenario_.damping_ratio)
    m.base.params.spring_damping = m.base.damping_for_ratio(*scenario_.damping_ratio);
  for (int s = m.spring_range[0].first; s < m.spring_range[0].second; ++s)
    m.object_segments.emplace_back(m.base.springs()[s].i, m.base.springs()[s].j);

  // Object kernels and their LBS bindings against the object's particles.
  const auto global_nbr = particle_neighborhoods(m.base);
  for (std::size_t o = 0; o < scenario_.objects.size(); ++o) {
    const ObjectSpec& spec = scenario_.objects[o];
    const auto [b, e] = m.particle_range[o];
    const std::span<const Vec3> pts(m.base.x.data() + b, static_cast<std::size_t>(e - b));
    GaussianSet set;
    if (spec.splat_file) {
      set = load_splat_ply(*spec.splat_file);
      for (GaussianKernel& k : set.kernels) k = transformed(k, spec.nominal);
    } else {
      for (const Vec3& p : pts) {
        GaussianKernel k;
        k.position = p;
        k.set_scale(Vec3::Constant(0.6 * spec.spacing));
        k.set_opacity(0.95);
        k.set_color(spec.color);
        set.kernels.push_back(k);
      }
    }
    for (GaussianKernel& k : set.kernels) k.label = 1000 + static_cast<int>(o);
    m.bindings.push_back(compute_lbs_weights(set, pts));
    std::vector<std::vector<int>> local(pts.size());
    for (int i = b; i < e; ++i)
      for (int j : global_nbr[i])
        if (j >= b && j < e) local[i - b].push_back(j - b);
    m.neighborhoods.push_back(std::move(local));
    m.object_kernels_nominal.push_back(set);
  }
  m.object_kernels = m.object_kernels_nominal;

  // Robot colliders and kernels.
  m.robot.link_fields.resize(robot.links.size());
  m.link_kernels.resize(robot.links.size());
  for (std::size_t l = 0; l < robot.links.size(); ++l) {
    if (!robot.links[l].has_mesh()) continue;
    m.robot.link_fields[l] = std::make_shared<MeshDistanceField>(robot.links[l].mesh);
    const double shade = 0.35 + 0.4 * static_cast<double>(l) / robot.links.size();
    m.link_kernels[l] = surface_kernels(
        robot.links[l].mesh, static_cast<std::size_t>(scenario_.robot_points_per_link),
        mix_seed(options_.seed, l), Vec3::Constant(shade), static_cast<int>(l));
  }
  for (int g : robot.gripper) m.finger_links.push_back(robot.joints[robot.actuated[g]].child);

  for (std::size_t s = 0; s < scenario_.statics.size(); ++s) {
    const StaticSpec& spec = scenario_.statics[s];
    std::vector<std::shared_ptr<const MeshDistanceField>> fields;
    std::vector<GaussianKernel> kernels;
    for (std::size_t p = 0; p < spec.parts.size(); ++p) {
      fields.push_back(std::make_shared<MeshDistanceField>(spec.parts[p]));
      auto k = surface_kernels(spec.parts[p], 400, mix_seed(options_.seed, 100 + 16 * s + p),
                               spec.color, -2);
      kernels.insert(kernels.end(), k.begin(), k.end());
    }
    m.static_fields.push_back(std::move(fields));
    m.static_kernels.push_back(std::move(kernels));
    m.static_pose.push_back(spec.nominal);
  }

  if (scenario_.task.type == TaskType::kPushT) {
    const RigidTransform to_target = scenario_.task.target * scenario_.objects[0].nominal.inverse();
    const auto [b, e] = m.particle_range[0];
    for (int i = b; i < e; ++i) target_.push_back(to_target.apply(m.base.x[i]));
  }

  q_ = scenario_.home;
  gripper_.max_opening = 0.0;
  for (int g : robot.gripper) gripper_.max_opening += robot.joints[robot.actuated[g]].upper;
  gripper_.opening = robot.opening(q_);
  model_ = m.base;
}

Observation Environment::reset(const InitialState& initial) {
  Impl& m = *impl_;
  model_ = m.base;
  for (std::size_t o = 0; o < scenario_.objects.size(); ++o) {
    const RigidTransform t =
        planar_about(m.rest_centroid[o], initial.find(scenario_.objects[o].name));
    const auto [b, e] = m.particle_range[o];
    for (int i = b; i < e; ++i) model_.x[i] = t.apply(m.base.x[i]);
    m.object_kernels[o] = m.object_kernels_nominal[o];
    for (GaussianKernel& k : m.object_kernels[o].kernels) k = transformed(k, t);
  }

  m.colliders.clear();
  for (std::size_t s = 0; s < scenario_.statics.size(); ++s) {
    const StaticSpec& spec = scenario_.statics[s];
    const PlanarPose* p = initial.find(spec.name);
    RigidTransform pose = spec.nominal;
    if (p) {
      pose.rotation = (Quat(Eigen::AngleAxisd(p->theta, Vec3::UnitZ())) * pose.rotation).normalized();
      pose.translation += Vec3(p->x, p->y, 0.0);
    }
    m.static_pose[s] = pose;
    for (const auto& f : m.static_fields[s]) m.colliders.push_back({f, pose});
  }

  // Particles deeper than the tolerance, or springs passing through a
  // static part thinner than the particle spacing, reject the placement.
  constexpr double kOverlapTolerance = 0.002;
  for (std::size_t i = 0; i < model_.size(); ++i)
    if (model_.x[i].z() < scenario_.ground - kOverlapTolerance)
      throw ResetFault("reset " + initial.episode + ": particle " + std::to_string(i) +
                       " starts below the ground");
  for (std::size_t s = 0; s < scenario_.statics.size(); ++s) {
    const RigidTransform inv = m.static_pose[s].inverse();
    std::vector<Vec3> local(model_.size());
    for (std::size_t i = 0; i < model_.size(); ++i) local[i] = inv.apply(model_.x[i]);
    auto overlap = [&] {
      throw ResetFault("reset " + initial.episode + ": object overlaps static '" +
                       scenario_.statics[s].name + "'");
    };
    for (const auto& f : m.static_fields[s]) {
      const auto& box = f->bounds();
      for (const Vec3& p : local)
        if (box.exteriorDistance(p) == 0.0 && f->query(p).signed_distance < -kOverlapTolerance)
          overlap();
      for (const Spring& sp : model_.springs()) {
        const Vec3& a = local[sp.i];
        const Vec3& b = local[sp.j];
        if (box.exteriorDistance(a) > (b - a).norm()) continue;
        for (double t : {0.25, 0.5, 0.75})
          if (f->query(a + t * (b - a)).signed_distance < -kOverlapTolerance) overlap();
      }
    }
  }

  q_ = scenario_.home;
  gripper_.opening = scenario_.robot.opening(q_);
  gripper_.halted = false;
  m.last_report = {};
  frame_ = 0;
  in_box_.clear();
  crossings_.clear();
  msd_.clear();
  Fnv1a h;
  h.add(scenario_.config_hash);
  h.add(to_json(initial));
  h.add(model_.state_hash());
  hash_ = h.value();
  return observe();
}

double Environment::opening() const { return gripper_.opening; }

bool Environment::done() const { return frame_ >= scenario_.horizon_frames(); }

std::string Environment::trajectory_hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
  return buf;
}

std::pair<int, int> Environment::object_range(std::size_t o) const {
  return impl_->particle_range.at(o);
}

Vec3 Environment::object_centroid(std::size_t o) const {
  const auto [b, e] = impl_->particle_range.at(o);
  return centroid(std::span<const Vec3>(model_.x).subspan(b, e - b));
}

RigidTransform Environment::static_pose(const std::string& name) const {
  for (std::size_t s = 0; s < scenario_.statics.size(); ++s)
    if (scenario_.statics[s].name == name) return impl_->static_pose[s];
  throw InvalidArgument("no static named '" + name + "'");
}

OrientedBox Environment::box_region() const {
  return scenario_.task.box_region.transformed(static_pose(scenario_.task.box_static));
}

std::vector<Opening> Environment::openings() const {
  const RigidTransform t = static_pose(scenario_.task.clip_static);
  std::vector<Opening> out = scenario_.task.openings;
  for (Opening& o : out) {
    for (Vec3& v : o.vertices) v = t.apply(v);
    o.normal = t.apply_vector(o.normal);
  }
  return out;
}

std::pair<Observation, StepInfo> Environment::step(const Action& action) {
  if (done()) throw InvalidArgument("episode already reached its horizon");
  Impl& m = *impl_;
  const RobotModel& robot = scenario_.robot;
  const SimParams& prm = model_.params;
  const std::vector<int> arm = robot.arm_joints();
  StepInfo info;

  // Action -> arm joint target.
  std::vector<double> target = q_;
  bool clamped = false;
  auto solve_ik = [&](const RigidTransform& goal) {
    std::vector<double> qi = q_;
    for (int it = 0; it < scenario_.ik_iterations; ++it) {
      IkStep st = resolved_rate_step(robot, qi, goal);
      clamped = clamped || st.clamped;
      qi = std::move(st.target);
      if (pose_error(robot.ee_pose(qi), goal).norm() < 1e-9) break;
    }
    return qi;
  };
  switch (action.mode) {
    case ActionMode::kJointTarget:
      if (action.payload.size() != arm.size())
        throw InvalidArgument("joint action needs " + std::to_string(arm.size()) + " values");
      for (std::size_t a = 0; a < arm.size(); ++a) target[arm[a]] = action.payload[a];
      break;
    case ActionMode::kEePoseTarget: {
      if (action.payload.size() != 7) throw InvalidArgument("ee_pose action needs 7 values");
      const auto& p = action.payload;
      Quat q(p[3], p[4], p[5], p[6]);
      if (!(q.norm() > 0.0)) throw InvalidArgument("ee_pose quaternion is zero");
      target = solve_ik({q.normalized(), Vec3(p[0], p[1], p[2])});
      break;
    }
    case ActionMode::kPlanarTarget:
      if (action.payload.size() != 2) throw InvalidArgument("planar action needs 2 values");
      target = solve_ik(tool_down(
          Vec3(action.payload[0], action.payload[1], scenario_.task.planar_height)));
      break;
  }
  for (double v : action.payload)
    if (!std::isfinite(v)) throw InvalidArgument("action has a non-finite value");

  std::vector<double> cur(arm.size()), tgt(arm.size());
  for (std::size_t a = 0; a < arm.size(); ++a) {
    cur[a] = q_[arm[a]];
    tgt[a] = target[arm[a]];
  }
  const std::vector<double> qd = joint_velocity_controller(cur, tgt, robot.velocity_limit);
  std::vector<double> q_next = q_;
  for (std::size_t a = 0; a < arm.size(); ++a) q_next[arm[a]] = cur[a] + prm.frame_dt * qd[a];
  q_next = robot.clamp_to_limits(q_next);

  // Gripper: close with the force latch, open freely.
  const double want =
      (action.mode == ActionMode::kPlanarTarget ? 0.0 : std::clamp(action.gripper, 0.0, 1.0)) *
      gripper_.max_opening;
  if (want < gripper_.opening) {
    grasp_update(gripper_, true, scenario_.gripper_speed, m.last_report, scenario_.f_max,
                 prm.frame_dt, m.finger_links);
    gripper_.opening = std::max(gripper_.opening, want);
  } else {
    gripper_.halted = false;
    gripper_.opening = std::min(want, gripper_.opening + scenario_.gripper_speed * prm.frame_dt);
  }
  robot.set_opening(q_next, gripper_.opening);

  const std::vector<double> q_prev = q_;
  m.robot.poses_at = [&](double s) {
    std::vector<double> qs(q_prev.size());
    for (std::size_t i = 0; i < qs.size(); ++i) qs[i] = q_prev[i] + s * (q_next[i] - q_prev[i]);
    return robot.forward_kinematics(qs);
  };
  const std::vector<Vec3> x_prev = model_.x;
  FrameInputs in;
  in.robot = &m.robot;
  in.static_meshes = m.colliders;
  in.ground = scenario_.ground;
  try {
    m.last_report = simulate_frame(model_, in);
  } catch (const SimulationFault& f) {
    throw SimulationFault(std::string(f.what()) + " at frame " + std::to_string(frame_),
                          f.substep());
  }
  m.robot.poses_at = nullptr;

  for (std::size_t o = 0; o < scenario_.objects.size(); ++o) {
    const auto [b, e] = m.particle_range[o];
    const auto n = static_cast<std::size_t>(e - b);
    lbs_update_kernels(m.object_kernels[o], m.bindings[o],
                       std::span<const Vec3>(x_prev).subspan(b, n),
                       std::span<const Vec3>(model_.x).subspan(b, n), m.neighborhoods[o]);
  }

  q_ = q_next;
  ++frame_;
  Fnv1a h;
  h.add(hash_);
  h.add(model_.state_hash());
  for (double v : q_) h.add(v);
  h.add(gripper_.opening);
  hash_ = h.value();

  info.frame = frame_;
  info.ik_clamped = clamped;
  info.gripper_halted = gripper_.halted;
  info.link_force = m.last_report.total_link_force();
  for (int l : m.finger_links) info.finger_force += m.last_report.link_force[l];
  info.ground_force = m.last_report.ground_force;
  info.static_force = m.last_report.static_force;
  record_criteria(info);
  info.done = done();
  info.trajectory_hash = hash_;
  return {observe(), info};
}

void Environment::record_criteria(StepInfo& info) {
  const auto [b, e] = impl_->particle_range[0];
  const std::span<const Vec3> pts(model_.x.data() + b, static_cast<std::size_t>(e - b));
  switch (scenario_.task.type) {
    case TaskType::kToyPacking:
      info.in_box = particles_in_obb(pts, box_region());
      in_box_.push_back(info.in_box);
      break;
    case TaskType::kRopeRouting: {
      const auto ops = openings();
      for (int k = 0; k < 2; ++k)
        info.crossings[k] = count_crossings(model_.x, impl_->object_segments, ops[k]);
      crossings_.push_back(info.crossings);
      break;
    }
    case TaskType::kPushT:
      info.msd = mean_squared_distance(pts, target_);
      msd_.push_back(info.msd);
      break;
  }
}

std::vector<double> Environment::criterion_trace() const {
  std::vector<double> out;
  switch (scenario_.task.type) {
    case TaskType::kToyPacking:
      for (std::size_t c : in_box_) out.push_back(static_cast<double>(c));
      break;
    case TaskType::kRopeRouting:
      for (const auto& c : crossings_) out.push_back(static_cast<double>(std::min(c[0], c[1])));
      break;
    case TaskType::kPushT:
      out = msd_;
      break;
  }
  return out;
}

Verdict Environment::verdict() const {
  switch (scenario_.task.type) {
    case TaskType::kToyPacking: {
      ToyPackingCriterion c = scenario_.task.toy;
      if (scenario_.task.threshold_fraction) {
        const auto [b, e] = impl_->particle_range[0];
        c.threshold = static_cast<std::size_t>(
            std::llround(*scenario_.task.threshold_fraction * (e - b)));
      }
      return toy_packing_success(in_box_, c);
    }
    case TaskType::kRopeRouting:
      return rope_routing_success(crossings_, scenario_.task.rope);
    case TaskType::kPushT:
      return pusht_success(msd_, scenario_.task.pusht);
  }
  return {};
}

Observation Environment::observe() const {
  Observation o;
  o.frame = frame_;
  const RigidTransform ee = scenario_.robot.ee_pose(q_);
  o.ee_position = ee.translation;
  o.ee_orientation = canonical(ee.rotation);
  o.gripper_openness = gripper_.max_opening > 0 ? gripper_.opening / gripper_.max_opening : 0.0;
  if (scenario_.task.type == TaskType::kPushT) {
    o.ee_state = {o.ee_position.x(), o.ee_position.y()};
  } else {
    o.ee_state = {o.ee_position.x(),     o.ee_position.y(),     o.ee_position.z(),
                  o.ee_orientation.w(), o.ee_orientation.x(), o.ee_orientation.y(),
                  o.ee_orientation.z(), o.gripper_openness};
  }
  if (options_.render) o.images = render_all();
  return o;
}

GaussianSet Environment::scene_kernels() const {
  const Impl& m = *impl_;
  GaussianSet out;
  const auto poses = scenario_.robot.forward_kinematics(q_);
  for (std::size_t l = 0; l < m.link_kernels.size(); ++l)
    for (const GaussianKernel& k : m.link_kernels[l]) out.kernels.push_back(transformed(k, poses[l]));
  for (std::size_t s = 0; s < m.static_kernels.size(); ++s)
    for (const GaussianKernel& k : m.static_kernels[s])
      out.kernels.push_back(transformed(k, m.static_pose[s]));
  for (const GaussianSet& set : m.object_kernels)
    out.kernels.insert(out.kernels.end(), set.kernels.begin(), set.kernels.end());
  return out;
}

Image Environment::render_camera(std::size_t camera) const {
  const NamedCamera& nc = scenario_.cameras.at(camera);
  const Camera cam = nc.camera.resolved(scenario_.robot.forward_kinematics(q_));
  Image img = render(scene_kernels(), cam, scenario_.color_transform, options_.render_options);
  if (scenario_.task.type == TaskType::kPushT && nc.camera.mount_link < 0)
    overlay_goal_mask(img, cam, target_, 0.6 * scenario_.objects[0].spacing);
  return img;
}

std::vector<Image> Environment::render_all() const {
  std::vector<Image> out;
  for (std::size_t c = 0; c < scenario_.cameras.size(); ++c) out.push_back(render_camera(c));
  return out;
}

void overlay_goal_mask(Image& img, const Camera& camera,
                       std::span<const Vec3> particles, double radius,
                       double alpha) {
  std::vector<char> mask(static_cast<std::size_t>(img.width) * img.height, 0);
  for (const Vec3& w : particles) {
    const Vec3 p = camera.world_to_camera.apply(w);
    if (p.z() <= 1e-6) continue;
    const double u = camera.fx * p.x() / p.z() + camera.cx;
    const double v = camera.fy * p.y() / p.z() + camera.cy;
    const double r = camera.fx * radius / p.z();
    const int x0 = std::max(0, static_cast<int>(std::floor(u - r)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(u + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(v - r)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(v + r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if ((x - u) * (x - u) + (y - v) * (y - v) <= r * r) mask[img.index(x, y)] = 1;
  }
  const Vec3 yellow(1.0, 0.9, 0.1);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) img.rgb[i] = alpha * yellow + (1.0 - alpha) * img.rgb[i];
}

}  // namespace splatsim
