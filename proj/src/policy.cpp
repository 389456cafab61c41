#include "splatsim/policy.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "splatsim/error.hpp"
#include "splatsim/image.hpp"

namespace splatsim {

using nlohmann::json;

namespace {

RigidTransform tool_down_at(const Vec3& p) {
  const double yaw = std::atan2(p.y(), p.x());
  return {Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
               Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY())),
          p};
}

std::string fixed3(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::fixed << v;
  return s.str();
}

}  // namespace

// --- Pick and place ---

std::string ScriptedPickPlace::name() const { return "pick_place(sigma=" + fixed3(sigma_) + ")"; }

void ScriptedPickPlace::begin(const Environment& env, const InitialState&,
                              std::uint64_t seed) {
  rng_ = Rng(seed);
  phase_ = 0;
  phase_frames_ = 0;
  const Scenario& sc = env.scenario();
  if (sc.task.type == TaskType::kPushT)
    throw InvalidArgument("pick_place policy does not apply to push_t scenarios");
  const auto [b, e] = env.object_range(0);
  const auto& x = env.model().x;
  Vec3 c = env.object_centroid(0);

  if (sc.task.type == TaskType::kRopeRouting) {
    const auto ops = env.openings();
    place_ = 0.5 * (centroid(ops[0].vertices) + centroid(ops[1].vertices));
    // Grab the rope where it passes closest to the clip.
    double best = 1e300;
    for (int i = b; i < e; ++i) {
      const double d = (x[i] - place_).head<2>().squaredNorm();
      if (d < best) {
        best = d;
        c = x[i];
      }
    }
  } else {
    const OrientedBox box = env.box_region();
    place_ = box.center + Vec3(0, 0, box.half_extents.z() + 0.03);
  }
  // Fingertips extend 1.5 cm past the TCP; keep them 1 mm off the ground.
  grasp_ = c;
  grasp_.z() = std::max(c.z(), 0.016);
  const Vec3 dg(rng_.normal(0.0, sigma_), rng_.normal(0.0, sigma_), 0.0);
  const Vec3 dp(rng_.normal(0.0, sigma_), rng_.normal(0.0, sigma_), 0.0);
  grasp_ += dg;
  place_ += dp;
}

std::vector<Action> ScriptedPickPlace::act(const Observation& obs, const Environment& env) {
  constexpr double kCarry = 0.16;
  constexpr double kApproach = 0.08;
  const Vec3 jitter(rng_.normal(0.0, 0.25 * sigma_), rng_.normal(0.0, 0.25 * sigma_), 0.0);
  auto go = [&](const Vec3& p, double gripper) {
    return Action::ee_pose(tool_down_at(p + jitter), gripper);
  };
  auto reached = [&](const Vec3& p) { return (obs.ee_position - p).norm() < 0.006; };
  ++phase_frames_;
  auto advance = [&] {
    ++phase_;
    phase_frames_ = 0;
  };

  Vec3 target;
  double grip = 1.0;
  switch (phase_) {
    case 0:  // above the grasp point
      target = grasp_ + Vec3(0, 0, kApproach);
      if (reached(target) || phase_frames_ > 90) advance();
      break;
    case 1:  // descend
      target = grasp_;
      if (reached(target) || phase_frames_ > 60) advance();
      break;
    case 2:  // close until the force latch or fully shut
      target = grasp_;
      grip = 0.0;
      if (phase_frames_ > 40 || (phase_frames_ > 5 && env.opening() <= 1e-6)) advance();
      break;
    case 3:  // lift
      target = Vec3(grasp_.x(), grasp_.y(), kCarry);
      grip = 0.0;
      if (reached(target) || phase_frames_ > 60) advance();
      break;
    case 4:  // carry
      target = Vec3(place_.x(), place_.y(), kCarry);
      grip = 0.0;
      if (reached(target) || phase_frames_ > 90) advance();
      break;
    case 5:  // lower
      target = place_;
      grip = 0.0;
      if (reached(target) || phase_frames_ > 60) advance();
      break;
    case 6:  // release
      target = place_;
      grip = 1.0;
      if (phase_frames_ > 25) advance();
      break;
    default:  // retreat and hold
      target = Vec3(place_.x(), place_.y(), kCarry);
      break;
  }
  return {go(target, grip)};
}

// --- Planar push ---

std::string ScriptedPush::name() const { return "push(sigma=" + fixed3(sigma_) + ")"; }

void ScriptedPush::begin(const Environment&, const InitialState&, std::uint64_t seed) {
  rng_ = Rng(seed);
  plan_.clear();
  cursor_ = 0;
  waypoint_frames_ = 0;
}

std::vector<Action> ScriptedPush::act(const Observation& obs, const Environment& env) {
  const Eigen::Vector2d ee(obs.ee_position.x(), obs.ee_position.y());
  ++waypoint_frames_;
  if (cursor_ < plan_.size() &&
      ((ee - plan_[cursor_]).norm() < 0.004 || waypoint_frames_ > 45)) {
    ++cursor_;
    waypoint_frames_ = 0;
  }
  if (cursor_ >= plan_.size()) {
    // New stroke on the particle farthest from its target.
    const auto [b, e] = env.object_range(0);
    const auto& x = env.model().x;
    const auto& target = env.target_particles();
    int worst = b;
    double worst_d = -1.0;
    for (int i = b; i < e; ++i) {
      const double d = (target[i - b] - x[i]).head<2>().norm();
      if (d > worst_d) {
        worst_d = d;
        worst = i;
      }
    }
    const Eigen::Vector2d p = x[worst].head<2>();
    Eigen::Vector2d dir = (target[worst - b] - x[worst]).head<2>();
    if (dir.norm() < 1e-6) return {Action::planar(ee.x(), ee.y())};
    dir.normalize();
    const Vec3 c3 = env.object_centroid(0);
    const Eigen::Vector2d c(c3.x(), c3.y());
    const Eigen::Vector2d noise(rng_.normal(0.0, sigma_), rng_.normal(0.0, sigma_));
    // Swing wide of the block, come in from behind, then push through.
    const Eigen::Vector2d away = (p - c).norm() > 1e-6 ? Eigen::Vector2d((p - c).normalized()) : -dir;
    plan_ = {p + 0.06 * away - 0.04 * dir + noise, p - 0.03 * dir + noise,
             p + std::min(worst_d, 0.05) * dir + noise};
    cursor_ = 0;
  }
  const Eigen::Vector2d goal = plan_[cursor_];
  // Cap the per-frame step so the pusher sweeps rather than jumps.
  Eigen::Vector2d step = goal - ee;
  if (step.norm() > 0.01) step *= 0.01 / step.norm();
  return {Action::planar(ee.x() + step.x(), ee.y() + step.y())};
}

// --- External process ---

ExternalPolicy::ExternalPolicy(std::string command, std::chrono::milliseconds timeout,
                               std::filesystem::path image_dir)
    : command_(std::move(command)), timeout_(timeout), image_dir_(std::move(image_dir)) {}

ExternalPolicy::~ExternalPolicy() { stop(); }

void ExternalPolicy::stop() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  pid_ = -1;
  buffer_.clear();
}

void ExternalPolicy::begin(const Environment&, const InitialState& initial, std::uint64_t seed) {
  stop();
  episode_ = initial.episode;
  int in[2], out[2];
  if (::pipe(in) != 0 || ::pipe(out) != 0) throw PolicyFault("pipe: " + std::string(std::strerror(errno)));
  const std::string seed_env = std::to_string(seed);
  pid_ = ::fork();
  if (pid_ < 0) throw PolicyFault("fork: " + std::string(std::strerror(errno)));
  if (pid_ == 0) {
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::close(in[0]);
    ::close(in[1]);
    ::close(out[0]);
    ::close(out[1]);
    ::setenv("SPLATSIM_SEED", seed_env.c_str(), 1);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in[0]);
  ::close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
  ::signal(SIGPIPE, SIG_IGN);
}

std::vector<Action> ExternalPolicy::act(const Observation& obs, const Environment& env) {
  if (pid_ <= 0) throw PolicyFault("policy process not running");
  json req = {{"episode", episode_}, {"frame", obs.frame}, {"ee_state", obs.ee_state}};
  json images = json::array();
  if (!image_dir_.empty()) {
    std::filesystem::create_directories(image_dir_);
    for (std::size_t c = 0; c < obs.images.size(); ++c) {
      const auto path = image_dir_ / (episode_ + "_" + env.scenario().cameras[c].name + ".png");
      save_png(obs.images[c], path);
      images.push_back(path.string());
    }
  }
  req["images"] = images;
  const std::string line = req.dump() + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::write(to_child_, line.data() + sent, line.size() - sent);
    if (n <= 0) throw PolicyFault("policy process closed its input");
    sent += static_cast<std::size_t>(n);
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0)
      throw PolicyFault("policy timed out after " + std::to_string(timeout_.count()) + " ms");
    pollfd pfd{from_child_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) continue;
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n <= 0) throw PolicyFault("policy process exited");
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
  const std::string reply = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);

  std::vector<Action> out;
  try {
    const json j = json::parse(reply);
    const ActionMode mode = action_mode_from_string(j.value("mode", "ee_pose"));
    for (const json& a : j.at("actions")) {
      std::vector<double> v = a.get<std::vector<double>>();
      Action act;
      act.mode = mode;
      if (mode != ActionMode::kPlanarTarget) {
        if (v.empty()) throw PolicyFault("empty action vector");
        act.gripper = v.back();
        v.pop_back();
      }
      act.payload = std::move(v);
      out.push_back(std::move(act));
    }
  } catch (const json::exception& e) {
    throw PolicyFault(std::string("bad policy reply: ") + e.what());
  } catch (const SchemaError& e) {
    throw PolicyFault(e.what());
  }
  if (out.empty()) throw PolicyFault("policy returned no actions");
  return out;
}

std::string PolicySpec::label() const {
  if (kind == "external") return "external";
  return kind + "_s" + fixed3(sigma);
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec,
                                    const std::filesystem::path& image_dir) {
  if (spec.kind == "pick_place") return std::make_unique<ScriptedPickPlace>(spec.sigma);
  if (spec.kind == "push") return std::make_unique<ScriptedPush>(spec.sigma);
  if (spec.kind == "external") {
    if (spec.command.empty()) throw InvalidArgument("external policy needs a command");
    return std::make_unique<ExternalPolicy>(spec.command, spec.timeout, image_dir);
  }
  throw InvalidArgument("unknown policy kind '" + spec.kind + "'");
}

}  // namespace splatsim
