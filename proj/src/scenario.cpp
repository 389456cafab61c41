#include "splatsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "splatsim/error.hpp"
#include "splatsim/random.hpp"

namespace splatsim {

using nlohmann::json;

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::kToyPacking: return "toy_packing";
    case TaskType::kRopeRouting: return "rope_routing";
    case TaskType::kPushT: return "push_t";
  }
  return "toy_packing";
}

TaskType task_from_string(const std::string& s) {
  if (s == "toy_packing") return TaskType::kToyPacking;
  if (s == "rope_routing") return TaskType::kRopeRouting;
  if (s == "push_t") return TaskType::kPushT;
  throw SchemaError("unknown task type '" + s + "'");
}

int Scenario::horizon_frames() const {
  return static_cast<int>(std::llround(horizon_s / params.frame_dt));
}

const StaticSpec* Scenario::find_static(const std::string& n) const {
  for (const StaticSpec& s : statics)
    if (s.name == n) return &s;
  return nullptr;
}

const PlanarPose* InitialState::find(const std::string& n) const {
  for (const PlanarPose& p : poses)
    if (p.name == n) return &p;
  return nullptr;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Vec3 vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw SchemaError(what + ": expected a 3-vector");
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw ParseError(what + ": non-finite value");
  return v;
}

Vec3 vec3_or(const json& j, const char* key, const Vec3& fallback) {
  return j.contains(key) ? vec3(j.at(key), key) : fallback;
}

RigidTransform pose(const json& j) {
  RigidTransform t;
  if (j.is_null()) return t;
  t.translation = vec3_or(j, "xyz", Vec3::Zero());
  t.rotation = rpy_to_quat(vec3_or(j, "rpy", Vec3::Zero()));
  return t;
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts,
                          const std::string& name) {
  TriangleMesh out;
  out.name = name;
  for (const TriangleMesh& m : parts) {
    const int off = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (auto t : m.triangles) out.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
  }
  return out;
}

// A shape expands to one or more closed meshes.
std::vector<TriangleMesh> shape_parts(const json& j,
                                      const std::filesystem::path& base,
                                      const std::string& name) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "box") {
    return {make_box_mesh(vec3(j.at("half_extents"), "half_extents"),
                          vec3_or(j, "center", Vec3::Zero()), name)};
  }
  if (type == "prism") {
    std::vector<Eigen::Vector2d> poly;
    for (const json& p : j.at("polygon"))
      poly.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    const json& z = j.at("z");
    return {make_prism_mesh(poly, z.at(0).get<double>(), z.at(1).get<double>(), name)};
  }
  if (type == "obj") {
    TriangleMesh m = load_mesh_obj(resolve(base, j.at("path").get<std::string>()));
    m.name = name;
    return {m};
  }
  if (type == "union") {
    std::vector<TriangleMesh> out;
    for (const json& p : j.at("parts")) {
      auto sub = shape_parts(p, base, name);
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }
  if (type == "bin") {
    // Open-top box: floor plus four walls around an inner w x d x h cavity
    // whose floor top sits at z = wall.
    const Vec3 in = vec3(j.at("inner"), "inner");
    const double t = j.at("wall").get<double>();
    const double hx = 0.5 * in.x(), hy = 0.5 * in.y(), h = in.z();
    std::vector<TriangleMesh> out;
    out.push_back(make_box_mesh(Vec3(hx + t, hy + t, 0.5 * t), Vec3(0, 0, 0.5 * t), name));
    const double zc = t + 0.5 * h;
    out.push_back(make_box_mesh(Vec3(0.5 * t, hy + t, 0.5 * h), Vec3(hx + 0.5 * t, 0, zc), name));
    out.push_back(make_box_mesh(Vec3(0.5 * t, hy + t, 0.5 * h), Vec3(-hx - 0.5 * t, 0, zc), name));
    out.push_back(make_box_mesh(Vec3(hx, 0.5 * t, 0.5 * h), Vec3(0, hy + 0.5 * t, zc), name));
    out.push_back(make_box_mesh(Vec3(hx, 0.5 * t, 0.5 * h), Vec3(0, -hy - 0.5 * t, zc), name));
    return out;
  }
  throw SchemaError("unknown shape type '" + type + "'");
}

GridAxis axis(const json& j, const char* key) {
  GridAxis a;
  if (!j.contains(key)) return a;
  const json& v = j.at(key);
  if (v.is_object()) {
    for (const json& x : v.at("values")) a.values.push_back(x.get<double>());
    if (a.values.empty()) throw SchemaError(std::string(key) + ": empty value set");
    return a;
  }
  if (!v.is_array() || v.size() != 2)
    throw SchemaError(std::string(key) + ": expected [lo, hi]");
  a.lo = v[0].get<double>();
  a.hi = v[1].get<double>();
  if (a.hi < a.lo) throw SchemaError(std::string(key) + ": hi < lo");
  return a;
}

PlanarRanges ranges(const json& j) {
  PlanarRanges r;
  if (!j.is_object()) return r;
  r.x = axis(j, "x");
  r.y = axis(j, "y");
  r.theta = axis(j, "theta");
  return r;
}

void parse_sim(const json& j, SimParams& p) {
  p.frame_dt = j.value("frame_dt", p.frame_dt);
  p.substeps = j.value("substeps", p.substeps);
  p.spring_damping = j.value("spring_damping", p.spring_damping);
  p.global_drag = j.value("global_drag", p.global_drag);
  p.self_collision_radius = j.value("self_collision_radius", p.self_collision_radius);
  p.contact_offset = j.value("contact_offset", p.contact_offset);
  p.contact_stiffness = j.value("contact_stiffness", p.contact_stiffness);
  p.friction_mu_ground = j.value("friction_mu_ground", p.friction_mu_ground);
  p.friction_mu_robot = j.value("friction_mu_robot", p.friction_mu_robot);
  p.friction_mu_mesh = j.value("friction_mu_mesh", p.friction_mu_mesh);
  if (j.contains("gravity")) p.gravity = vec3(j.at("gravity"), "gravity");
  if (j.contains("integrator")) {
    const std::string s = j.at("integrator").get<std::string>();
    if (s == "implicit")
      p.integrator = Integrator::kImplicit;
    else if (s == "explicit")
      p.integrator = Integrator::kExplicit;
    else
      throw SchemaError("unknown integrator '" + s + "'");
  }
  p.solver_max_iters = j.value("solver_max_iters", p.solver_max_iters);
  p.solver_tolerance = j.value("solver_tolerance", p.solver_tolerance);
  p.validate();
}

Camera parse_camera(const json& j, const RobotModel& robot) {
  Camera c;
  if (j.contains("eye")) {
    c = Camera::look_at(vec3(j.at("eye"), "eye"), vec3(j.at("target"), "target"),
                        vec3_or(j, "up", Vec3::UnitZ()));
  }
  if (j.contains("mount_link")) {
    const std::string link = j.at("mount_link").get<std::string>();
    c.mount_link = robot.link_index(link);
    if (c.mount_link < 0) throw SchemaError("camera mount link '" + link + "' not in robot");
    c.mount_offset = pose(j.value("offset", json()));
  }
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.fx = j.value("fx", c.fx);
  c.fy = j.value("fy", c.fx);
  c.cx = j.value("cx", 0.5 * (c.width - 1));
  c.cy = j.value("cy", 0.5 * (c.height - 1));
  c.validate();
  return c;
}

Opening parse_opening(const json& j) {
  if (j.contains("vertices")) {
    Opening o;
    for (const json& v : j.at("vertices")) o.vertices.push_back(vec3(v, "vertex"));
    if (o.vertices.size() < 3) throw SchemaError("opening needs >= 3 vertices");
    o.normal = vec3(j.at("normal"), "normal").normalized();
    return o;
  }
  return Opening::rectangle(vec3(j.at("center"), "center"), vec3(j.at("u"), "u"),
                            vec3(j.at("v"), "v"), j.at("half_u").get<double>(),
                            j.at("half_v").get<double>());
}

}  // namespace

Scenario parse_scenario(const std::string& text,
                        const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  Scenario s;
  try {
    s.name = j.at("name").get<std::string>();
    s.version = j.value("version", s.version);
    s.horizon_s = j.value("horizon_s", s.horizon_s);
    s.episodes = j.value("episodes", s.episodes);
    s.ground = j.value("ground", s.ground);
    if (j.contains("sim")) {
      parse_sim(j.at("sim"), s.params);
      if (j.at("sim").contains("spring_damping_ratio"))
        s.damping_ratio = j.at("sim").at("spring_damping_ratio").get<double>();
    }
    if (!(s.horizon_s > 0.0)) throw SchemaError("horizon_s must be positive");
    if (s.episodes < 1) throw SchemaError("episodes must be >= 1");

    const json& r = j.at("robot");
    const auto urdf = resolve(base_dir, r.at("urdf").get<std::string>());
    s.robot = load_urdf(urdf);
    s.home.assign(s.robot.dof(), 0.0);
    if (r.contains("home")) {
      s.home = r.at("home").get<std::vector<double>>();
      if (s.home.size() != s.robot.dof())
        throw SchemaError("robot.home has " + std::to_string(s.home.size()) +
                          " entries, robot has " + std::to_string(s.robot.dof()));
    }
    if (r.contains("home_opening")) s.robot.set_opening(s.home, r.at("home_opening").get<double>());
    s.gripper_speed = r.value("gripper_speed", s.gripper_speed);
    s.f_max = r.value("f_max", s.f_max);
    s.ik_iterations = r.value("ik_iterations", s.ik_iterations);
    s.robot_points_per_link = r.value("points_per_link", s.robot_points_per_link);

    for (const json& o : j.value("objects", json::array())) {
      ObjectSpec spec;
      spec.name = o.at("name").get<std::string>();
      const std::string kind = o.value("kind", "deformable");
      if (kind == "rigid")
        spec.kind = TwinKind::kRigid;
      else if (kind != "deformable")
        throw SchemaError("object " + spec.name + ": unknown kind '" + kind + "'");
      spec.shape = merge_meshes(shape_parts(o.at("shape"), base_dir, spec.name), spec.name);
      spec.spacing = o.value("spacing", spec.spacing);
      spec.nominal = pose(o.value("pose", json()));
      if (o.contains("color")) spec.color = vec3(o.at("color"), "color");
      if (o.contains("splat")) spec.splat_file = resolve(base_dir, o.at("splat").get<std::string>());
      spec.ranges = ranges(o.value("ranges", json()));
      if (o.contains("twin")) {
        const json& t = o.at("twin");
        spec.twin.connection_radius = t.value("connection_radius", spec.twin.connection_radius);
        spec.twin.max_neighbors = t.value("max_neighbors", spec.twin.max_neighbors);
        spec.twin.stiffness = t.value("stiffness", spec.twin.stiffness);
        spec.twin.total_mass = t.value("total_mass", spec.twin.total_mass);
        if (t.contains("spring_stiffness")) {
          spec.twin.spring_stiffness = t.at("spring_stiffness").get<std::vector<double>>();
          spec.twin.stiffness_mode = StiffnessMode::kPerSpring;
        }
      }
      spec.twin.particle_spacing = spec.spacing;
      if (o.contains("rigid")) {
        const json& t = o.at("rigid");
        spec.rigid.radius = t.value("radius", spec.rigid.radius);
        spec.rigid.frame_scale = t.value("frame_scale", spec.rigid.frame_scale);
        spec.rigid.max_neighbors = t.value("max_neighbors", spec.rigid.max_neighbors);
        spec.rigid.stiffness = t.value("stiffness", spec.rigid.stiffness);
        spec.rigid.total_mass = t.value("total_mass", spec.rigid.total_mass);
      }
      s.objects.push_back(std::move(spec));
    }
    if (s.objects.empty()) throw SchemaError("scenario has no objects");

    for (const json& o : j.value("statics", json::array())) {
      StaticSpec st;
      st.name = o.at("name").get<std::string>();
      st.parts = shape_parts(o.at("shape"), base_dir, st.name);
      st.nominal = pose(o.value("pose", json()));
      if (o.contains("color")) st.color = vec3(o.at("color"), "color");
      st.ranges = ranges(o.value("ranges", json()));
      s.statics.push_back(std::move(st));
    }

    for (const json& c : j.value("cameras", json::array()))
      s.cameras.push_back({c.at("name").get<std::string>(), parse_camera(c, s.robot)});

    if (j.contains("color_transform"))
      s.color_transform = load_color_transform(
          resolve(base_dir, j.at("color_transform").get<std::string>()));

    const json& t = j.at("task");
    s.task.type = task_from_string(t.at("type").get<std::string>());
    s.task.planar_height = t.value("planar_height", s.task.planar_height);
    switch (s.task.type) {
      case TaskType::kToyPacking: {
        s.task.box_static = t.at("box_static").get<std::string>();
        if (!s.find_static(s.task.box_static))
          throw SchemaError("task.box_static '" + s.task.box_static + "' not found");
        const json& b = t.at("box_region");
        s.task.box_region.center = vec3(b.at("center"), "box_region.center");
        s.task.box_region.half_extents = vec3(b.at("half_extents"), "box_region.half_extents");
        s.task.box_region.rotation = rpy_to_quat(vec3_or(b, "rpy", Vec3::Zero()));
        if (t.contains("threshold_fraction"))
          s.task.threshold_fraction = t.at("threshold_fraction").get<double>();
        s.task.toy.threshold = t.value("threshold", s.task.toy.threshold);
        s.task.toy.window = t.value("window", s.task.toy.window);
        s.task.toy.need = t.value("need", s.task.toy.need);
        break;
      }
      case TaskType::kRopeRouting: {
        s.task.clip_static = t.at("clip_static").get<std::string>();
        if (!s.find_static(s.task.clip_static))
          throw SchemaError("task.clip_static '" + s.task.clip_static + "' not found");
        for (const json& o : t.at("openings")) s.task.openings.push_back(parse_opening(o));
        if (s.task.openings.size() != 2) throw SchemaError("rope routing needs two openings");
        s.task.rope.seg_threshold = t.value("seg_threshold", s.task.rope.seg_threshold);
        s.task.rope.window = t.value("window", s.task.rope.window);
        s.task.rope.need = t.value("need", s.task.rope.need);
        break;
      }
      case TaskType::kPushT: {
        s.task.target = pose(t.at("target"));
        s.task.pusht.tol = t.value("tol", s.task.pusht.tol);
        s.task.pusht.window = t.value("window", s.task.pusht.window);
        s.task.pusht.min_frames = t.value("min_frames", s.task.pusht.min_frames);
        break;
      }
    }

    Fnv1a h;
    h.add(j.dump());
    h.add(read_text(urdf));
    std::ostringstream hex;
    hex << std::hex << h.value();
    s.config_hash = hex.str();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scenario: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  Scenario s = parse_scenario(read_text(path), path.parent_path());
  s.source = path;
  return s;
}

namespace {

struct Dim {
  std::size_t entity;
  int component;  // 0 x, 1 y, 2 theta
  const GridAxis* axis;
  int points = 1;
};

std::vector<int> prime_factors(int n) {
  std::vector<int> f;
  for (int p = 2; p * p <= n; ++p)
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  if (n > 1) f.push_back(n);
  std::sort(f.rbegin(), f.rend());
  return f;
}

double axis_value(const GridAxis& a, int k, int points) {
  if (a.discrete()) return a.values[k];
  if (points == 1) return 0.5 * (a.lo + a.hi);
  // Integer numerator, one division: identical on every IEEE platform.
  return (a.lo * (points - 1 - k) + a.hi * k) / (points - 1);
}

}  // namespace

std::vector<InitialState> sample_initial_grid(
    const std::vector<GridEntity>& entities, int count) {
  if (count < 1) throw InvalidArgument("grid needs count >= 1");
  std::vector<Dim> dims;
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const GridAxis* ax[3] = {&entities[e].ranges.x, &entities[e].ranges.y,
                             &entities[e].ranges.theta};
    for (int c = 0; c < 3; ++c)
      if (!ax[c]->collapsed()) dims.push_back({e, c, ax[c]});
  }

  int discrete = 1;
  for (Dim& d : dims)
    if (d.axis->discrete()) {
      d.points = static_cast<int>(d.axis->values.size());
      discrete *= d.points;
    }
  // Interval axes share the remaining factor; a remainder is covered by the
  // next larger grid and truncated.
  const int rest = std::max(1, (count + discrete - 1) / discrete);
  std::vector<Dim*> intervals;
  for (Dim& d : dims)
    if (!d.axis->discrete()) intervals.push_back(&d);
  if (!intervals.empty()) {
    for (int p : prime_factors(rest)) {
      Dim* best = intervals.front();
      for (Dim* d : intervals)
        if (d->points < best->points) best = d;
      best->points *= p;
    }
  }

  std::size_t total = 1;
  for (const Dim& d : dims) total *= static_cast<std::size_t>(d.points);
  std::vector<InitialState> out;
  std::vector<int> idx(dims.size(), 0);
  for (std::size_t n = 0; n < static_cast<std::size_t>(count); ++n) {
    InitialState s;
    char id[32];
    std::snprintf(id, sizeof id, "ep%03zu", n);
    s.episode = id;
    for (const GridEntity& e : entities) s.poses.push_back({e.name});
    if (n < total) {
      // Mixed-radix decode, first axis outermost.
      std::size_t r = n;
      for (std::size_t d = dims.size(); d-- > 0;) {
        idx[d] = static_cast<int>(r % dims[d].points);
        r /= dims[d].points;
      }
      for (std::size_t d = 0; d < dims.size(); ++d) {
        const double v = axis_value(*dims[d].axis, idx[d], dims[d].points);
        PlanarPose& p = s.poses[dims[d].entity];
        if (dims[d].component == 0) p.x = v * 0.01;
        if (dims[d].component == 1) p.y = v * 0.01;
        if (dims[d].component == 2) p.theta = v * std::numbers::pi / 180.0;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<InitialState> sample_initial_grid(const Scenario& scenario) {
  std::vector<GridEntity> entities;
  for (const ObjectSpec& o : scenario.objects) entities.push_back({o.name, o.ranges});
  // Statics only join the grid when randomized.
  for (const StaticSpec& s : scenario.statics)
    if (!s.ranges.x.collapsed() || !s.ranges.y.collapsed() || !s.ranges.theta.collapsed())
      entities.push_back({s.name, s.ranges});
  return sample_initial_grid(entities, scenario.episodes);
}

std::string to_json(const InitialState& s) {
  json j;
  j["episode"] = s.episode;
  j["poses"] = json::array();
  for (const PlanarPose& p : s.poses)
    j["poses"].push_back({{"name", p.name}, {"x", p.x}, {"y", p.y}, {"theta", p.theta}});
  return j.dump();
}

InitialState initial_state_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("initial state: ") + e.what());
  }
  try {
    InitialState s;
    s.episode = j.at("episode").get<std::string>();
    for (const json& p : j.at("poses"))
      s.poses.push_back({p.at("name").get<std::string>(), p.at("x").get<double>(),
                         p.at("y").get<double>(), p.at("theta").get<double>()});
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("initial state: ") + e.what());
  }
}

}  // namespace splatsim
