#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "splatsim/env.hpp"
#include "splatsim/error.hpp"
#include "splatsim/random.hpp"

namespace splatsim {

// Raised when an external policy times out, exits, or sends bad JSON.
class PolicyFault : public Error {
 public:
  using Error::Error;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void begin(const Environment& env, const InitialState& initial,
                     std::uint64_t seed) = 0;
  // A chunk of actions executed in order before the next query.
  virtual std::vector<Action> act(const Observation& obs,
                                  const Environment& env) = 0;
};

// Waypoint pick-and-place over object 0: approach, descend, close, lift,
// carry over the goal, lower, release. Grasp and place points get a
// per-episode Gaussian offset of standard deviation `sigma` (m) and every
// waypoint a smaller per-frame jitter.
class ScriptedPickPlace : public Policy {
 public:
  explicit ScriptedPickPlace(double sigma = 0.0) : sigma_(sigma) {}
  std::string name() const override;
  void begin(const Environment& env, const InitialState& initial,
             std::uint64_t seed) override;
  std::vector<Action> act(const Observation& obs, const Environment& env) override;

 private:
  double sigma_;
  Rng rng_{0};
  int phase_ = 0;
  int phase_frames_ = 0;
  Vec3 grasp_ = Vec3::Zero();
  Vec3 place_ = Vec3::Zero();
};

// Planar pusher: repeatedly picks the particle farthest from its target,
// moves behind it and pushes it toward the target.
class ScriptedPush : public Policy {
 public:
  explicit ScriptedPush(double sigma = 0.0) : sigma_(sigma) {}
  std::string name() const override;
  void begin(const Environment& env, const InitialState& initial,
             std::uint64_t seed) override;
  std::vector<Action> act(const Observation& obs, const Environment& env) override;

 private:
  double sigma_;
  Rng rng_{0};
  std::vector<Eigen::Vector2d> plan_;
  std::size_t cursor_ = 0;
  int waypoint_frames_ = 0;
};

// Child process speaking line-delimited JSON on stdin/stdout. One process
// per episode; each request waits at most `timeout`.
class ExternalPolicy : public Policy {
 public:
  ExternalPolicy(std::string command, std::chrono::milliseconds timeout,
                 std::filesystem::path image_dir = {});
  ~ExternalPolicy() override;
  std::string name() const override { return "external"; }
  void begin(const Environment& env, const InitialState& initial,
             std::uint64_t seed) override;
  std::vector<Action> act(const Observation& obs, const Environment& env) override;

 private:
  void stop();
  std::string command_;
  std::chrono::milliseconds timeout_;
  std::filesystem::path image_dir_;
  std::string episode_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// "pick_place", "push", or "external"; sigma applies to the scripted ones.
struct PolicySpec {
  std::string kind = "pick_place";
  double sigma = 0.0;
  std::string command;
  std::chrono::milliseconds timeout{30000};
  std::string label() const;  // policy id used in outcome records
};

std::unique_ptr<Policy> make_policy(const PolicySpec& spec,
                                    const std::filesystem::path& image_dir = {});

}  // namespace splatsim
