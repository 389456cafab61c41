#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "splatsim/alignment.hpp"
#include "splatsim/env.hpp"
#include "splatsim/episode.hpp"
#include "splatsim/error.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/policy.hpp"
#include "splatsim/scenario.hpp"
#include "splatsim/twin.hpp"

namespace py = pybind11;
using namespace splatsim;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(std::span<const Vec3> pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = pts[i][k];
  return out;
}

std::vector<Vec3> from_array(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("expected an (N, 3) array");
  const auto r = a.unchecked<2>();
  std::vector<Vec3> out(r.shape(0));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) out[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> image_array(const Image& img) {
  py::array_t<double> out({py::ssize_t{img.height}, py::ssize_t{img.width}, py::ssize_t{3}});
  auto m = out.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < 3; ++k) m(y, x, k) = img.at(x, y)[k];
  return out;
}

py::dict observation_dict(const Observation& o) {
  py::dict d;
  d["frame"] = o.frame;
  d["ee_position"] = o.ee_position;
  d["ee_orientation"] = std::vector<double>{o.ee_orientation.w(), o.ee_orientation.x(),
                                            o.ee_orientation.y(), o.ee_orientation.z()};
  d["gripper_openness"] = o.gripper_openness;
  d["ee_state"] = o.ee_state;
  py::list images;
  for (const Image& img : o.images) images.append(image_array(img));
  d["images"] = images;
  return d;
}

py::dict info_dict(const StepInfo& i) {
  py::dict d;
  d["frame"] = i.frame;
  d["link_force"] = i.link_force;
  d["finger_force"] = i.finger_force;
  d["ground_force"] = i.ground_force;
  d["static_force"] = i.static_force;
  d["ik_clamped"] = i.ik_clamped;
  d["gripper_halted"] = i.gripper_halted;
  d["in_box"] = i.in_box;
  d["crossings"] = i.crossings;
  d["msd"] = i.msd;
  d["done"] = i.done;
  d["trajectory_hash"] = i.trajectory_hash;
  return d;
}

py::dict outcome_dict(const EpisodeOutcome& o) {
  py::dict d;
  d["policy"] = o.policy;
  d["checkpoint"] = o.checkpoint;
  d["episode"] = o.episode;
  d["domain"] = to_string(o.domain);
  d["success"] = o.success;
  d["faulted"] = o.faulted;
  d["fault"] = o.fault;
  d["trajectory_hash"] = o.trajectory_hash;
  return d;
}

}  // namespace

PYBIND11_MODULE(_splatsim, m) {
  m.doc() = "Spring-mass digital twins rendered with Gaussian splats.";
  m.attr("__version__") = SPLATSIM_VERSION;

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", error.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());
  py::register_exception<SimulationFault>(m, "SimulationFault", error.ptr());
  py::register_exception<ResetFault>(m, "ResetFault", error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", error.ptr());
  py::register_exception<PolicyFault>(m, "PolicyFault", error.ptr());

  // --- scenarios ---
  py::class_<PlanarPose>(m, "PlanarPose")
      .def(py::init<>())
      .def(py::init([](std::string name, double x, double y, double theta) {
             return PlanarPose{std::move(name), x, y, theta};
           }),
           py::arg("name"), py::arg("x"), py::arg("y"), py::arg("theta"))
      .def_readwrite("name", &PlanarPose::name)
      .def_readwrite("x", &PlanarPose::x)
      .def_readwrite("y", &PlanarPose::y)
      .def_readwrite("theta", &PlanarPose::theta);

  py::class_<InitialState>(m, "InitialState")
      .def(py::init<>())
      .def_readwrite("episode", &InitialState::episode)
      .def_readwrite("poses", &InitialState::poses)
      .def("to_json", [](const InitialState& s) { return to_json(s); })
      .def_static("from_json", &initial_state_from_json);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("version", &Scenario::version)
      .def_readonly("config_hash", &Scenario::config_hash)
      .def_readwrite("episodes", &Scenario::episodes)
      .def_readonly("horizon_s", &Scenario::horizon_s)
      .def("horizon_frames", &Scenario::horizon_frames)
      .def_property_readonly("task", [](const Scenario& s) { return to_string(s.task.type); })
      .def_property_readonly("cameras", [](const Scenario& s) {
        std::vector<std::string> names;
        for (const NamedCamera& c : s.cameras) names.push_back(c.name);
        return names;
      });

  m.def("load_scenario", &load_scenario, py::arg("path"));
  m.def("sample_initial_grid", py::overload_cast<const Scenario&>(&sample_initial_grid),
        py::arg("scenario"));

  // --- environment ---
  py::class_<Action>(m, "Action")
      .def(py::init([](std::string mode, std::vector<double> payload, double gripper) {
             return Action{action_mode_from_string(mode), std::move(payload), gripper};
           }),
           py::arg("mode"), py::arg("payload"), py::arg("gripper") = 1.0)
      .def_property_readonly("mode", [](const Action& a) { return to_string(a.mode); })
      .def_readonly("payload", &Action::payload)
      .def_readonly("gripper", &Action::gripper)
      .def_static("hold", &Action::hold, py::arg("arm_q"), py::arg("gripper"))
      .def_static("planar", &Action::planar, py::arg("x"), py::arg("y"))
      .def_static(
          "ee_pose",
          [](const Vec3& p, const std::array<double, 4>& wxyz, double gripper) {
            RigidTransform t;
            t.translation = p;
            t.rotation = Quat(wxyz[0], wxyz[1], wxyz[2], wxyz[3]).normalized();
            return Action::ee_pose(t, gripper);
          },
          py::arg("position"), py::arg("orientation_wxyz"), py::arg("gripper"));

  py::class_<Environment>(m, "Environment")
      .def(py::init([](const Scenario& sc, bool render, std::uint64_t seed,
                       std::optional<int> substeps) {
             EnvOptions o;
             o.render = render;
             o.seed = seed;
             o.substeps = substeps;
             return Environment(sc, o);
           }),
           py::arg("scenario"), py::arg("render") = false, py::arg("seed") = 0,
           py::arg("substeps") = py::none())
      .def("reset", [](Environment& e, const InitialState& s) {
             py::gil_scoped_release release;
             Observation o = e.reset(s);
             py::gil_scoped_acquire acquire;
             return observation_dict(o);
           })
      .def("step", [](Environment& e, const Action& a) {
             std::pair<Observation, StepInfo> r;
             {
               py::gil_scoped_release release;
               r = e.step(a);
             }
             return py::make_tuple(observation_dict(r.first), info_dict(r.second));
           })
      .def_property_readonly("done", &Environment::done)
      .def_property_readonly("frame", &Environment::frame)
      .def_property_readonly("joints", &Environment::joints)
      .def_property_readonly("opening", &Environment::opening)
      .def_property_readonly("trajectory_hash", &Environment::trajectory_hash_hex)
      .def_property_readonly("particles",
                             [](const Environment& e) { return to_array(e.model().x); })
      .def("object_centroid", &Environment::object_centroid, py::arg("object") = 0)
      .def("criterion_trace", &Environment::criterion_trace)
      .def("verdict", [](const Environment& e) {
             const Verdict v = e.verdict();
             py::dict d;
             d["success"] = v.success;
             d["qualifying_frames"] = v.qualifying_frames;
             d["short_trace"] = v.short_trace;
             return d;
           })
      .def("render_camera", [](const Environment& e, std::size_t c) {
             return image_array(e.render_camera(c));
           });

  m.def(
      "run_episode",
      [](Environment& env, const std::string& kind, double sigma, const InitialState& s,
         std::uint64_t seed, const std::string& command, double timeout_s) {
        PolicySpec spec;
        spec.kind = kind;
        spec.sigma = sigma;
        spec.command = command;
        spec.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000));
        RunOptions opt;
        opt.seed = seed;
        EpisodeResult r;
        {
          py::gil_scoped_release release;
          auto policy = make_policy(spec);
          r = run_episode(env, *policy, s, opt);
        }
        return outcome_dict(r.outcome);
      },
      py::arg("env"), py::arg("policy") = "pick_place", py::arg("sigma") = 0.0,
      py::arg("initial"), py::arg("seed") = 0, py::arg("command") = "",
      py::arg("timeout_s") = 30.0);

  // --- metrics ---
  m.def("pearson", [](std::vector<double> x, std::vector<double> y) { return pearson(x, y); });
  m.def("mmrv", [](std::vector<double> sim, std::vector<double> real) {
    return mmrv(sim, real);
  });
  m.def("clopper_pearson", &clopper_pearson, py::arg("k"), py::arg("n"),
        py::arg("confidence") = 0.95);
  m.def("beta_quantile", &beta_quantile, py::arg("p"), py::arg("a"), py::arg("b"));
  m.def(
      "beta_posterior",
      [](int k, int n, double confidence) {
        const BetaPosterior p = beta_posterior(k, n, confidence);
        py::dict d;
        d["alpha"] = p.alpha;
        d["beta"] = p.beta;
        d["mean"] = p.mean;
        d["lo"] = p.lo;
        d["hi"] = p.hi;
        return d;
      },
      py::arg("k"), py::arg("n"), py::arg("confidence") = 0.95);

  // --- alignment ---
  m.def(
      "icp_refine",
      [](const Points& src, const Points& dst, int max_iters) {
        IcpOptions o;
        o.max_iters = max_iters;
        const IcpResult r = icp_refine(from_array(src), from_array(dst), {}, o);
        return py::make_tuple(Eigen::Matrix4d(r.transform.matrix()), r.rms);
      },
      py::arg("src"), py::arg("dst"), py::arg("max_iters") = 100);
  m.def(
      "fit_color_transform",
      [](const Points& p, const Points& q, int degree, bool robust) {
        ColorFitOptions o;
        o.degree = degree;
        o.robust = robust;
        const ColorFit fit = fit_color_transform(from_array(p), from_array(q), o);
        return to_array(fit.poly.coefficients);
      },
      py::arg("p"), py::arg("q"), py::arg("degree") = 2, py::arg("robust") = true);

  // --- twins ---
  py::class_<SpringMassModel>(m, "SpringMassModel")
      .def_property_readonly("positions", [](const SpringMassModel& s) { return to_array(s.x); })
      .def_property_readonly("num_springs",
                             [](const SpringMassModel& s) { return s.springs().size(); })
      .def("__len__", &SpringMassModel::size);

  m.def(
      "build_spring_mass",
      [](const Points& points, double connection_radius, int max_neighbors,
         double stiffness, double total_mass, double spring_damping) {
        TwinSpec spec;
        spec.connection_radius = connection_radius;
        spec.max_neighbors = max_neighbors;
        spec.stiffness = stiffness;
        spec.total_mass = total_mass;
        SimParams params;
        params.spring_damping = spring_damping;
        return build_spring_mass(from_array(points), spec, params);
      },
      py::arg("points"), py::arg("connection_radius"), py::arg("max_neighbors") = 30,
      py::arg("stiffness") = 500.0, py::arg("total_mass") = 0.1,
      py::arg("spring_damping") = 0.0);

  m.def(
      "synthesize_trajectory",
      [](const SpringMassModel& model, std::vector<int> controls,
         const std::vector<Points>& paths, const std::filesystem::path& out) {
        std::vector<std::vector<Vec3>> p;
        for (const Points& a : paths) p.push_back(from_array(a));
        const TrackedTrajectory traj = synthesize_trajectory(model, controls, p);
        save_trajectory(traj, out);
        return traj.frames.size();
      },
      py::arg("model"), py::arg("controls"), py::arg("paths"), py::arg("out"),
      "Simulates with the given control paths and writes the tracked trajectory.");
}
