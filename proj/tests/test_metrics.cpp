#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "splatsim/error.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/random.hpp"

using namespace splatsim;

namespace {

std::vector<std::size_t> trace_with(int qualifying, std::size_t hit,
                                    std::size_t miss, int frames = 150) {
  std::vector<std::size_t> t(frames, miss);
  for (int i = 0; i < qualifying; ++i) t[frames - 1 - 2 * i] = hit;
  return t;
}

// Segment against triangle (v0, v1, v2), parametric t in [0, 1].
bool segment_hits_triangle(const Vec3& a, const Vec3& b, const Vec3& v0,
                           const Vec3& v1, const Vec3& v2) {
  const Vec3 dir = b - a;
  const Vec3 e1 = v1 - v0, e2 = v2 - v0;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return false;
  const Vec3 s = a - v0;
  const double u = s.dot(p) / det;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) / det;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(q) / det;
  return t >= 0.0 && t <= 1.0;
}

bool oracle_crosses(const Vec3& a, const Vec3& b, const Opening& o) {
  for (std::size_t i = 1; i + 1 < o.vertices.size(); ++i)
    if (segment_hits_triangle(a, b, o.vertices[0], o.vertices[i], o.vertices[i + 1]))
      return true;
  return false;
}

double textbook_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) /
         std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

double enumerated_mmrv(const std::vector<double>& sim, const std::vector<double>& real) {
  const std::size_t n = sim.size();
  std::vector<std::vector<double>> viol(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const bool s = sim[i] < sim[j];
      const bool r = real[i] < real[j];
      viol[i][j] = (s != r) ? std::abs(real[i] - real[j]) : 0.0;
    }
  double total = 0.0;
  for (const auto& row : viol) total += *std::max_element(row.begin(), row.end());
  return total / static_cast<double>(n);
}

double beta_pdf(double x, double a, double b) {
  const double lb = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp((a - 1) * std::log(x) + (b - 1) * std::log1p(-x) - lb);
}

double simpson(double lo, double hi, double a, double b, int intervals = 20000) {
  const double h = (hi - lo) / intervals;
  auto f = [&](double x) {
    if (x <= 0.0 || x >= 1.0) return (a == 1.0 && b == 1.0) ? 1.0 : 0.0;
    return beta_pdf(x, a, b);
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

EpisodeOutcome outcome(const std::string& id, bool ok, Domain d) {
  EpisodeOutcome o;
  o.policy = "pi";
  o.checkpoint = "c0";
  o.episode = id;
  o.domain = d;
  o.success = ok;
  return o;
}

}  // namespace

TEST(ToyPacking, AllInsideSucceeds) {
  OrientedBox box;
  box.half_extents = Vec3(0.1, 0.1, 0.1);
  std::vector<std::vector<Vec3>> frames(120, std::vector<Vec3>(3095, Vec3(0.01, 0.0, 0.0)));
  const auto counts = in_box_counts(frames, box);
  EXPECT_EQ(counts.front(), 3095u);
  const Verdict v = toy_packing_success(counts);
  EXPECT_TRUE(v.success);
  EXPECT_EQ(v.qualifying_frames, 100);
  EXPECT_FALSE(v.short_trace);
}

TEST(ToyPacking, CountBelowThresholdFails) {
  const std::vector<std::size_t> t(150, 3049);
  EXPECT_FALSE(toy_packing_success(t).success);
}

TEST(ToyPacking, ThirtyFramesFailThirtyOneSucceed) {
  EXPECT_FALSE(toy_packing_success(trace_with(30, 3050, 10)).success);
  EXPECT_TRUE(toy_packing_success(trace_with(31, 3050, 10)).success);
  EXPECT_EQ(toy_packing_success(trace_with(31, 3050, 10)).qualifying_frames, 31);
}

TEST(ToyPacking, OnlyFinalWindowCounts) {
  std::vector<std::size_t> t(200, 0);
  std::fill(t.begin(), t.begin() + 100, 3095);
  EXPECT_FALSE(toy_packing_success(t).success);
}

TEST(ToyPacking, ShortTraceUsesTail) {
  const std::vector<std::size_t> t(40, 3095);
  const Verdict v = toy_packing_success(t);
  EXPECT_TRUE(v.short_trace);
  EXPECT_TRUE(v.success);
}

TEST(RopeRouting, CrossingsMatchTriangleOracle) {
  const Opening o = Opening::rectangle(Vec3(0.1, -0.05, 0.2), Vec3(0.3, 1.0, 0.1),
                                       Vec3(-0.2, 0.1, 1.0), 0.04, 0.025);
  Rng rng(77);
  std::vector<Vec3> pts;
  std::vector<std::pair<int, int>> segs;
  int hits = 0;
  for (int s = 0; s < 500; ++s) {
    Vec3 c = Vec3(0.1, -0.05, 0.2) +
             Vec3(rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06));
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    d *= rng.uniform(0.005, 0.08) / d.norm();
    const Vec3 a = c - d, b = c + d;
    const bool want = oracle_crosses(a, b, o);
    EXPECT_EQ(segment_crosses(a, b, o), want) << "segment " << s;
    hits += want;
    pts.push_back(a);
    pts.push_back(b);
    segs.emplace_back(2 * s, 2 * s + 1);
  }
  EXPECT_GT(hits, 20);
  EXPECT_EQ(count_crossings(pts, segs, o), static_cast<std::size_t>(hits));
}

TEST(RopeRouting, ThreadedRopeSucceedsAndLyingRopeFails) {
  // Tube of particles along x with springs between neighbours within 1.2 cm.
  std::vector<Vec3> rope;
  for (int i = 0; i <= 250; ++i)
    for (int a = -2; a <= 2; ++a)
      for (int b = -2; b <= 2; ++b)
        rope.emplace_back(0.004 * i, 0.004 * a, 0.1 + 0.004 * b);
  std::vector<std::pair<int, int>> springs;
  for (std::size_t i = 0; i < rope.size(); ++i)
    for (std::size_t j = i + 1; j < rope.size() && rope[j].x() - rope[i].x() <= 0.012; ++j)
      if ((rope[i] - rope[j]).norm() <= 0.012)
        springs.emplace_back(static_cast<int>(i), static_cast<int>(j));

  const Opening o1 = Opening::rectangle(Vec3(0.3, 0, 0.1), Vec3::UnitY(), Vec3::UnitZ(), 0.02, 0.02);
  const Opening o2 = Opening::rectangle(Vec3(0.7, 0, 0.1), Vec3::UnitY(), Vec3::UnitZ(), 0.02, 0.02);
  std::vector<std::array<std::size_t, 2>> counts(
      100, {count_crossings(rope, springs, o1), count_crossings(rope, springs, o2)});
  EXPECT_GT(counts[0][0], 100u);
  EXPECT_GT(counts[0][1], 100u);
  EXPECT_TRUE(rope_routing_success(counts).success);

  std::vector<Vec3> lying = rope;
  for (Vec3& p : lying) p.z() -= 0.1;
  const Opening high = Opening::rectangle(Vec3(0.3, 0, 0.1), Vec3::UnitY(), Vec3::UnitZ(), 0.02, 0.02);
  EXPECT_EQ(count_crossings(lying, springs, high), 0u);
  std::vector<std::array<std::size_t, 2>> none(100, {0, 0});
  EXPECT_FALSE(rope_routing_success(none).success);
}

TEST(RopeRouting, BothOpeningsRequired) {
  std::vector<std::array<std::size_t, 2>> counts(100, {500, 100});
  EXPECT_FALSE(rope_routing_success(counts).success);
  counts.assign(100, {101, 101});
  EXPECT_TRUE(rope_routing_success(counts).success);
}

TEST(PushT, OffsetFixtures) {
  const std::vector<Vec3> target(50, Vec3(0.2, 0.1, 0.0));
  auto shifted = [&](double d) {
    std::vector<Vec3> p = target;
    for (Vec3& x : p) x += Vec3(0.0, d, 0.0);
    return p;
  };
  EXPECT_DOUBLE_EQ(mean_squared_distance(target, target), 0.0);
  EXPECT_NEAR(mean_squared_distance(shifted(0.04), target), 0.0016, 1e-15);
  EXPECT_NEAR(mean_squared_distance(shifted(0.05), target), 0.0025, 1e-15);

  auto verdict = [&](double d) {
    std::vector<double> msd(100, 0.01);
    msd.back() = mean_squared_distance(shifted(d), target);
    return pusht_success(msd).success;
  };
  EXPECT_TRUE(verdict(0.0));
  EXPECT_TRUE(verdict(0.04));
  EXPECT_FALSE(verdict(0.05));
  EXPECT_THROW(mean_squared_distance(shifted(0.0), std::vector<Vec3>(3)),
               InvalidArgument);
}

TEST(PushT, MinFramesKnob) {
  std::vector<double> msd(100, 0.01);
  msd[99] = 0.001;
  PushTCriterion strict;
  strict.min_frames = 2;
  EXPECT_TRUE(pusht_success(msd).success);
  EXPECT_FALSE(pusht_success(msd, strict).success);
}

TEST(Pearson, PerfectCorrelation) {
  const std::vector<double> a{0.1, 0.5, 0.9}, b{0.9, 0.5, 0.1};
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-15);
  EXPECT_NEAR(pearson(b, a), -1.0, 1e-15);
}

TEST(Pearson, ZeroVarianceThrows) {
  const std::vector<double> a{0.5, 0.5, 0.5}, b{0.1, 0.2, 0.3};
  EXPECT_THROW(pearson(a, b), NumericalError);
  EXPECT_THROW(pearson(std::vector<double>{1.0}, std::vector<double>{1.0}),
               InvalidArgument);
}

TEST(Pearson, MatchesTextbookFormula) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(10), y(10);
    for (int i = 0; i < 10; ++i) {
      x[i] = rng.uniform();
      y[i] = 0.5 * x[i] + 0.5 * rng.uniform();
    }
    EXPECT_NEAR(pearson(x, y), textbook_pearson(x, y), 1e-12);
  }
}

TEST(Mmrv, WorkedExample) {
  const std::vector<double> real{0.9, 0.5, 0.1}, sim{0.1, 0.5, 0.9};
  EXPECT_DOUBLE_EQ(mmrv(sim, real), (0.8 + 0.4 + 0.8) / 3.0);
  EXPECT_NEAR(mmrv(sim, real), 2.0 / 3.0, 1e-15);
}

TEST(Mmrv, IdenticalRankingIsZero) {
  const std::vector<double> a{0.2, 0.7, 0.4};
  EXPECT_EQ(mmrv(a, a), 0.0);
}

TEST(Mmrv, MatchesEnumerationWithTies) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng.index(9));
    std::vector<double> sim(n), real(n);
    for (int i = 0; i < n; ++i) {
      // Coarse grid so ties show up in both lists.
      sim[i] = static_cast<double>(rng.index(6)) / 5.0;
      real[i] = static_cast<double>(rng.index(11)) / 10.0;
    }
    EXPECT_NEAR(mmrv(sim, real), enumerated_mmrv(sim, real), 1e-12);
  }
}

TEST(Mmrv, AgreeingOrderGivesZero) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> real(8), sim(8);
    for (int i = 0; i < 8; ++i) {
      real[i] = static_cast<double>(rng.index(5)) / 4.0;
      sim[i] = 0.1 + 0.5 * real[i] * real[i];  // strictly monotone, ties kept
    }
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        ASSERT_EQ(sim[i] < sim[j], real[i] < real[j]);
    EXPECT_EQ(mmrv(sim, real), 0.0);
  }
}

TEST(ClopperPearson, ZeroOfTwenty) {
  const auto [lo, hi] = clopper_pearson(0, 20);
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 1.0 - std::pow(0.025, 1.0 / 20.0), 1e-9);
  EXPECT_NEAR(hi, 0.1684, 1e-4);
}

TEST(ClopperPearson, AllSuccessesReachOne) {
  for (int n : {1, 5, 20}) {
    const auto [lo, hi] = clopper_pearson(n, n);
    EXPECT_EQ(hi, 1.0);
    EXPECT_NEAR(lo, std::pow(0.025, 1.0 / n), 1e-9);
  }
}

TEST(ClopperPearson, InvalidArguments) {
  EXPECT_THROW(clopper_pearson(3, 2), InvalidArgument);
  EXPECT_THROW(clopper_pearson(0, 0), InvalidArgument);
  EXPECT_THROW(clopper_pearson(-1, 4), InvalidArgument);
}

TEST(ClopperPearson, MonteCarloCoverage) {
  const int n = 20;
  std::vector<std::pair<double, double>> ci;
  for (int k = 0; k <= n; ++k) ci.push_back(clopper_pearson(k, n));
  Rng rng(2024);
  for (double p : {0.1, 0.5, 0.9}) {
    int covered = 0;
    for (int d = 0; d < 10000; ++d) {
      int k = 0;
      for (int i = 0; i < n; ++i) k += rng.uniform() < p;
      covered += ci[k].first <= p && p <= ci[k].second;
    }
    EXPECT_GE(covered, 9500) << "p=" << p;
  }
}

TEST(ClopperPearson, NestedInConfidence) {
  for (int n = 1; n <= 50; ++n)
    for (int k = 0; k <= n; ++k) {
      const auto a = clopper_pearson(k, n, 0.90);
      const auto b = clopper_pearson(k, n, 0.95);
      const auto c = clopper_pearson(k, n, 0.99);
      ASSERT_LE(b.first, a.first);
      ASSERT_LE(c.first, b.first);
      ASSERT_GE(b.second, a.second);
      ASSERT_GE(c.second, b.second);
    }
}

TEST(BetaPosterior, ClosedFormMean) {
  const BetaPosterior p = beta_posterior(3, 10);
  EXPECT_EQ(p.alpha, 4.0);
  EXPECT_EQ(p.beta, 8.0);
  EXPECT_NEAR(p.mean, 1.0 / 3.0, 1e-15);
  const BetaPosterior prior = beta_posterior(0, 0);
  EXPECT_EQ(prior.alpha, 1.0);
  EXPECT_EQ(prior.beta, 1.0);
  EXPECT_EQ(prior.mean, 0.5);
  EXPECT_NEAR(prior.lo, 0.025, 1e-9);
  EXPECT_NEAR(prior.hi, 0.975, 1e-9);
}

TEST(BetaPosterior, DensityIntegratesToOne) {
  for (auto [k, n] : {std::pair{3, 10}, std::pair{0, 0}, std::pair{19, 20}}) {
    const BetaPosterior p = beta_posterior(k, n);
    EXPECT_NEAR(simpson(0.0, 1.0, p.alpha, p.beta), 1.0, 1e-6);
    EXPECT_NEAR(simpson(p.lo, p.hi, p.alpha, p.beta), 0.95, 1e-6);
  }
}

TEST(Confusion, ReproducesTable) {
  std::vector<EpisodeOutcome> replay, truth;
  int id = 0;
  auto add = [&](int count, bool r, bool g) {
    for (int i = 0; i < count; ++i, ++id) {
      replay.push_back(outcome("e" + std::to_string(id), r, Domain::kReplay));
      truth.push_back(outcome("e" + std::to_string(id), g, Domain::kReal));
    }
  };
  add(106, true, true);
  add(37, true, false);
  add(25, false, true);
  add(132, false, false);
  std::reverse(truth.begin(), truth.end());
  const Confusion c = replay_confusion(replay, truth);
  EXPECT_EQ(c.tp, 106);
  EXPECT_EQ(c.fp, 37);
  EXPECT_EQ(c.fn, 25);
  EXPECT_EQ(c.tn, 132);
  EXPECT_EQ(c.total(), 300);
}

TEST(Confusion, SelfReplayIsDiagonal) {
  std::vector<EpisodeOutcome> a;
  for (int i = 0; i < 12; ++i) a.push_back(outcome("e" + std::to_string(i), i % 3 == 0, Domain::kSim));
  const Confusion c = replay_confusion(a, a);
  EXPECT_EQ(c.fp, 0);
  EXPECT_EQ(c.fn, 0);
  EXPECT_EQ(c.tp + c.tn, 12);
}

TEST(Confusion, UnmatchedIdsAreListed) {
  std::vector<EpisodeOutcome> a{outcome("x1", true, Domain::kReplay)};
  std::vector<EpisodeOutcome> b{outcome("x2", true, Domain::kReal)};
  try {
    replay_confusion(a, b);
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pi/c0/x1"), std::string::npos);
    EXPECT_NE(msg.find("pi/c0/x2"), std::string::npos);
  }
}

TEST(Outcomes, RoundTripAndVerdictReproduces) {
  const std::vector<std::size_t> counts = trace_with(31, 3060, 2000);
  EpisodeOutcome o = outcome("ep7", toy_packing_success(counts).success, Domain::kSim);
  o.trace.assign(counts.begin(), counts.end());
  o.trajectory_hash = "00ff";
  const auto path = std::filesystem::temp_directory_path() / "splatsim_outcomes.jsonl";
  save_outcomes(std::vector<EpisodeOutcome>{o}, path);
  const auto back = load_outcomes(path);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].key(), o.key());
  EXPECT_EQ(back[0].trace, o.trace);
  EXPECT_EQ(back[0].trajectory_hash, "00ff");
  std::vector<std::size_t> again(back[0].trace.begin(), back[0].trace.end());
  EXPECT_EQ(toy_packing_success(again).success, o.success);
  std::filesystem::remove(path);
}

TEST(Outcomes, MalformedLineReportsLocation) {
  const auto path = std::filesystem::temp_directory_path() / "splatsim_bad.jsonl";
  {
    std::ofstream f(path);
    f << R"({"policy":"a","episode":"1","success":true})" << "\n{not json\n";
  }
  try {
    load_outcomes(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Scores, GroupsAndCountsFaults) {
  std::vector<EpisodeOutcome> v;
  for (int i = 0; i < 5; ++i) v.push_back(outcome("e" + std::to_string(i), i < 3, Domain::kSim));
  v[4].faulted = true;
  v.push_back(outcome("e0", true, Domain::kReal));
  const auto s = score_outcomes(v);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].domain, Domain::kSim);
  EXPECT_EQ(s[0].successes, 3);
  EXPECT_EQ(s[0].trials, 5);
  EXPECT_EQ(s[0].faults, 1);
  EXPECT_DOUBLE_EQ(s[0].rate(), 0.6);
  EXPECT_EQ(s[1].trials, 1);
}
