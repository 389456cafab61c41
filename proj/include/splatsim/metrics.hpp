#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splatsim/geometry.hpp"

namespace splatsim {

struct Verdict {
  bool success = false;
  int qualifying_frames = 0;
  // Set when the trace was shorter than the window.
  bool short_trace = false;
};

// --- Toy packing: particles inside the box's oriented bounding box. ---

struct ToyPackingCriterion {
  std::size_t threshold = 3050;
  int window = 100;
  int need = 30;  // qualifying frames must exceed this
};

std::vector<std::size_t> in_box_counts(
    std::span<const std::vector<Vec3>> frames, const OrientedBox& box);
Verdict toy_packing_success(std::span<const std::size_t> counts,
                            const ToyPackingCriterion& c = {});

// --- Rope routing: spring segments through two clip openings. ---

// Planar polygon; vertices are coplanar and ordered around the boundary.
struct Opening {
  std::vector<Vec3> vertices;
  Vec3 normal = Vec3::UnitX();

  // Rectangle centred at `center` spanning +-half_u along u and +-half_v
  // along v; the normal is u x v.
  static Opening rectangle(const Vec3& center, const Vec3& u, const Vec3& v,
                           double half_u, double half_v);
};

bool segment_crosses(const Vec3& a, const Vec3& b, const Opening& opening);
std::size_t count_crossings(std::span<const Vec3> positions,
                            std::span<const std::pair<int, int>> segments,
                            const Opening& opening);

struct RopeRoutingCriterion {
  std::size_t seg_threshold = 100;  // crossings must exceed this
  int window = 100;
  int need = 30;
};

// counts[f] holds the crossing count of each opening at frame f.
Verdict rope_routing_success(
    std::span<const std::array<std::size_t, 2>> counts,
    const RopeRoutingCriterion& c = {});

// --- T-block pushing: mean squared distance to the target pose. ---

struct PushTCriterion {
  double tol = 0.002;  // m^2
  int window = 100;
  int min_frames = 1;  // 1 is the any-frame reading
};

double mean_squared_distance(std::span<const Vec3> a, std::span<const Vec3> b);
Verdict pusht_success(std::span<const double> msd_per_frame,
                      const PushTCriterion& c = {});

// --- Sim-vs-real statistics. ---

double pearson(std::span<const double> x, std::span<const double> y);
// Mean over i of max over j of |real_i - real_j| where the strict sim and
// real orderings of (i, j) disagree.
double mmrv(std::span<const double> sim, std::span<const double> real);

// Inverse of the regularized incomplete beta by bisection to 1e-12.
double beta_quantile(double p, double a, double b);

std::pair<double, double> clopper_pearson(int k, int n,
                                          double confidence = 0.95);

struct BetaPosterior {
  double alpha = 1.0;
  double beta = 1.0;
  double mean = 0.5;
  double lo = 0.0;
  double hi = 1.0;
};
// Uniform prior; central credible interval at `confidence`.
BetaPosterior beta_posterior(int k, int n, double confidence = 0.95);

// --- Outcome records. ---

enum class Domain { kSim, kReal, kReplay };
std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct EpisodeOutcome {
  std::string policy;
  std::string checkpoint;
  std::string episode;
  Domain domain = Domain::kSim;
  bool success = false;
  bool faulted = false;
  std::string fault;
  std::string trajectory_hash;  // hex, empty when unknown
  std::vector<double> trace;    // raw per-frame criterion quantity

  std::string key() const { return policy + "/" + checkpoint + "/" + episode; }
};

void save_outcomes(std::span<const EpisodeOutcome> outcomes,
                   const std::filesystem::path& path);
std::vector<EpisodeOutcome> load_outcomes(const std::filesystem::path& path);

struct Confusion {
  int tp = 0;  // replay +, truth +
  int fp = 0;  // replay +, truth -
  int fn = 0;  // replay -, truth +
  int tn = 0;  // replay -, truth -
  int total() const { return tp + fp + fn + tn; }
};

// Matches episodes by (policy, checkpoint, episode); throws InvalidArgument
// listing any key present on one side only.
Confusion replay_confusion(std::span<const EpisodeOutcome> replay,
                           std::span<const EpisodeOutcome> truth);

struct PolicyScore {
  std::string policy;
  std::string checkpoint;
  Domain domain = Domain::kSim;
  int successes = 0;
  int trials = 0;
  int faults = 0;
  double rate() const { return trials ? double(successes) / trials : 0.0; }
};

// Per (policy, checkpoint, domain) counts, sorted by that key.
std::vector<PolicyScore> score_outcomes(std::span<const EpisodeOutcome> outcomes);

}  // namespace splatsim
