#include "splatsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <boost/math/special_functions/beta.hpp>
#include <nlohmann/json.hpp>

#include "splatsim/error.hpp"

namespace splatsim {

using nlohmann::json;

namespace {

template <typename T>
std::span<const T> tail(std::span<const T> v, int window, bool& short_trace) {
  if (window < 1) throw InvalidArgument("criterion window must be >= 1");
  const auto w = static_cast<std::size_t>(window);
  short_trace = v.size() < w;
  return short_trace ? v : v.subspan(v.size() - w);
}

}  // namespace

std::vector<std::size_t> in_box_counts(
    std::span<const std::vector<Vec3>> frames, const OrientedBox& box) {
  std::vector<std::size_t> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(particles_in_obb(f, box));
  return out;
}

Verdict toy_packing_success(std::span<const std::size_t> counts,
                            const ToyPackingCriterion& c) {
  Verdict v;
  for (std::size_t n : tail(counts, c.window, v.short_trace))
    if (n >= c.threshold) ++v.qualifying_frames;
  v.success = v.qualifying_frames > c.need;
  return v;
}

Opening Opening::rectangle(const Vec3& center, const Vec3& u, const Vec3& v,
                           double half_u, double half_v) {
  const Vec3 uu = u.normalized(), vv = v.normalized();
  Opening o;
  o.vertices = {center - half_u * uu - half_v * vv,
                center + half_u * uu - half_v * vv,
                center + half_u * uu + half_v * vv,
                center - half_u * uu + half_v * vv};
  o.normal = uu.cross(vv).normalized();
  return o;
}

bool segment_crosses(const Vec3& a, const Vec3& b, const Opening& opening) {
  if (opening.vertices.size() < 3) return false;
  const Vec3& o = opening.vertices[0];
  const double da = opening.normal.dot(a - o);
  const double db = opening.normal.dot(b - o);
  // Half-open side test so a chain through the plane is counted once.
  const bool crosses = (da <= 0.0 && db > 0.0) || (da > 0.0 && db <= 0.0);
  if (!crosses) return false;
  const Vec3 p = a + (da / (da - db)) * (b - a);
  const Vec3 eu = (opening.vertices[1] - o).normalized();
  const Vec3 ev = opening.normal.cross(eu);
  const double px = eu.dot(p - o), py = ev.dot(p - o);
  bool inside = false;
  const std::size_t n = opening.vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = eu.dot(opening.vertices[i] - o), yi = ev.dot(opening.vertices[i] - o);
    const double xj = eu.dot(opening.vertices[j] - o), yj = ev.dot(opening.vertices[j] - o);
    if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi)
      inside = !inside;
  }
  return inside;
}

std::size_t count_crossings(std::span<const Vec3> positions,
                            std::span<const std::pair<int, int>> segments,
                            const Opening& opening) {
  std::size_t n = 0;
  for (const auto& [i, j] : segments)
    n += segment_crosses(positions[i], positions[j], opening);
  return n;
}

Verdict rope_routing_success(
    std::span<const std::array<std::size_t, 2>> counts,
    const RopeRoutingCriterion& c) {
  Verdict v;
  for (const auto& f : tail(counts, c.window, v.short_trace))
    if (f[0] > c.seg_threshold && f[1] > c.seg_threshold) ++v.qualifying_frames;
  v.success = v.qualifying_frames > c.need;
  return v;
}

double mean_squared_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size())
    throw InvalidArgument("particle counts differ: " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
  if (a.empty()) throw InvalidArgument("no particles");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).squaredNorm();
  return s / static_cast<double>(a.size());
}

Verdict pusht_success(std::span<const double> msd_per_frame,
                      const PushTCriterion& c) {
  Verdict v;
  for (double m : tail(msd_per_frame, c.window, v.short_trace))
    if (m < c.tol) ++v.qualifying_frames;
  v.success = v.qualifying_frames >= c.min_frames;
  return v;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidArgument("pearson needs two equal-length lists of >= 2 values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericalError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mmrv(std::span<const double> sim, std::span<const double> real) {
  if (sim.size() != real.size() || sim.size() < 2)
    throw InvalidArgument("mmrv needs two equal-length lists of >= 2 values");
  double total = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < sim.size(); ++j) {
      if ((sim[i] < sim[j]) != (real[i] < real[j]))
        worst = std::max(worst, std::abs(real[i] - real[j]));
    }
    total += worst;
  }
  return total / static_cast<double>(sim.size());
}

double beta_quantile(double p, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("beta parameters must be > 0");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (boost::math::ibeta(a, b, mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::pair<double, double> clopper_pearson(int k, int n, double confidence) {
  if (n < 1 || k < 0 || k > n)
    throw InvalidArgument("clopper_pearson needs 0 <= k <= n and n >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw InvalidArgument("confidence must lie in (0, 1)");
  const double alpha = 1.0 - confidence;
  const double lo = k == 0 ? 0.0 : beta_quantile(alpha / 2, k, n - k + 1);
  const double hi = k == n ? 1.0 : beta_quantile(1 - alpha / 2, k + 1, n - k);
  return {lo, hi};
}

BetaPosterior beta_posterior(int k, int n, double confidence) {
  if (n < 0 || k < 0 || k > n)
    throw InvalidArgument("beta_posterior needs 0 <= k <= n");
  BetaPosterior post;
  post.alpha = k + 1.0;
  post.beta = n - k + 1.0;
  post.mean = post.alpha / (post.alpha + post.beta);
  const double tail_p = 0.5 * (1.0 - confidence);
  post.lo = beta_quantile(tail_p, post.alpha, post.beta);
  post.hi = beta_quantile(1.0 - tail_p, post.alpha, post.beta);
  return post;
}

std::string to_string(Domain d) {
  switch (d) {
    case Domain::kSim: return "sim";
    case Domain::kReal: return "real";
    case Domain::kReplay: return "replay";
  }
  return "sim";
}

Domain domain_from_string(const std::string& s) {
  if (s == "sim") return Domain::kSim;
  if (s == "real") return Domain::kReal;
  if (s == "replay") return Domain::kReplay;
  throw SchemaError("unknown domain '" + s + "'");
}

void save_outcomes(std::span<const EpisodeOutcome> outcomes,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const EpisodeOutcome& o : outcomes) {
    json j = {{"policy", o.policy},       {"checkpoint", o.checkpoint},
              {"episode", o.episode},     {"domain", to_string(o.domain)},
              {"success", o.success},     {"faulted", o.faulted},
              {"fault", o.fault},         {"trajectory_hash", o.trajectory_hash},
              {"trace", o.trace}};
    out << j.dump() << '\n';
  }
}

std::vector<EpisodeOutcome> load_outcomes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<EpisodeOutcome> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      for (const char* f : {"policy", "episode", "success"})
        if (!j.contains(f))
          throw SchemaError(path.string() + ":" + std::to_string(lineno) +
                            ": missing field '" + f + "'");
      EpisodeOutcome o;
      o.policy = j.at("policy").get<std::string>();
      o.checkpoint = j.value("checkpoint", "");
      o.episode = j.at("episode").get<std::string>();
      o.domain = domain_from_string(j.value("domain", "sim"));
      o.success = j.at("success").get<bool>();
      o.faulted = j.value("faulted", false);
      o.fault = j.value("fault", "");
      o.trajectory_hash = j.value("trajectory_hash", "");
      o.trace = j.value("trace", std::vector<double>{});
      if (o.policy.empty() || o.episode.empty())
        throw SchemaError(path.string() + ":" + std::to_string(lineno) +
                          ": empty id");
      out.push_back(std::move(o));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return out;
}

Confusion replay_confusion(std::span<const EpisodeOutcome> replay,
                           std::span<const EpisodeOutcome> truth) {
  std::map<std::string, bool> gt;
  for (const EpisodeOutcome& o : truth) gt[o.key()] = o.success;
  std::set<std::string> seen;
  std::vector<std::string> unmatched;
  Confusion c;
  for (const EpisodeOutcome& o : replay) {
    const auto it = gt.find(o.key());
    if (it == gt.end()) {
      unmatched.push_back(o.key());
      continue;
    }
    seen.insert(o.key());
    if (o.success)
      (it->second ? c.tp : c.fp)++;
    else
      (it->second ? c.fn : c.tn)++;
  }
  for (const auto& [key, ok] : gt)
    if (!seen.contains(key)) unmatched.push_back(key);
  if (!unmatched.empty()) {
    std::string msg = "unmatched episode ids:";
    for (const auto& k : unmatched) msg += " " + k;
    throw InvalidArgument(msg);
  }
  return c;
}

std::vector<PolicyScore> score_outcomes(std::span<const EpisodeOutcome> outcomes) {
  std::map<std::tuple<std::string, std::string, int>, PolicyScore> acc;
  for (const EpisodeOutcome& o : outcomes) {
    auto& s = acc[{o.policy, o.checkpoint, static_cast<int>(o.domain)}];
    s.policy = o.policy;
    s.checkpoint = o.checkpoint;
    s.domain = o.domain;
    ++s.trials;
    s.successes += o.success && !o.faulted;
    s.faults += o.faulted;
  }
  std::vector<PolicyScore> out;
  for (auto& [key, s] : acc) out.push_back(s);
  return out;
}

}  // namespace splatsim
