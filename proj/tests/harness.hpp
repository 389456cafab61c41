#pragma once

// Scripted scenario drivers shared by the environment tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "splatsim/env.hpp"

namespace splatsim::harness {

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(SPLATSIM_ASSET_DIR) / "scenarios" / (name + ".json");
}

struct PushResult {
  double max_drift = 0.0;  // max relative pairwise distance change
  Vec3 moved = Vec3::Zero();
  int frames = 0;
};

// Rigid-body check on object 0: the pusher starts 3 cm behind the block on
// its centroid line, then pushes along +x at `speed` m/s until the horizon.
inline PushResult straight_push(Environment& env, double speed) {
  InitialState s;
  s.episode = "push";
  env.reset(s);
  const auto [b, e] = env.object_range(0);
  const auto& x = env.model().x;
  const std::vector<Vec3> rest(x.begin() + b, x.begin() + e);
  double xmin = 1e300;
  for (const Vec3& p : rest) xmin = std::min(xmin, p.x());
  const Vec3 c0 = env.object_centroid(0);

  PushResult r;
  auto measure = [&] {
    for (int i = b; i < e; ++i)
      for (int j = i + 1; j < e; ++j) {
        const double d0 = (rest[i - b] - rest[j - b]).norm();
        r.max_drift = std::max(r.max_drift, std::abs((x[i] - x[j]).norm() - d0) / d0);
      }
  };
  const Vec3 ee = env.scenario().robot.ee_pose(env.joints()).translation;
  double px = ee.x(), py = ee.y();
  const double sx = xmin - 0.03, sy = c0.y();
  while (!env.done() && std::hypot(sx - px, sy - py) > 1e-9) {
    const double dx = sx - px, dy = sy - py, n = std::hypot(dx, dy);
    const double step = std::min(n, 0.006);
    px += dx / n * step;
    py += dy / n * step;
    env.step(Action::planar(px, py));
    measure();
  }
  for (int i = 0; i < 20 && !env.done(); ++i) {
    env.step(Action::planar(px, py));
    measure();
  }
  while (!env.done()) {
    px += speed * env.scenario().params.frame_dt;
    env.step(Action::planar(px, py));
    measure();
  }
  r.moved = env.object_centroid(0) - c0;
  r.frames = env.frame();
  return r;
}

}  // namespace splatsim::harness
