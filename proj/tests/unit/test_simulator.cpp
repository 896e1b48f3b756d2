#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace crossed;

namespace {

std::string csv_of(const IndexedDataset& d) {
  std::ostringstream out;
  write_csv(out, d);
  return out.str();
}

}  // namespace

TEST_CASE("generator streams") {
  SplitMix64 a(7), b(7), c(7, 1);
  CHECK(a() == b());
  CHECK(a() != c());
  SplitMix64 d(7);
  d.discard(5);
  SplitMix64 e(7);
  for (int k = 0; k < 5; ++k) e();
  CHECK(d() == e());
}

TEST_CASE("effect distributions have zero mean and the requested variance") {
  for (EffectDist dist : {EffectDist::Gaussian, EffectDist::Uniform, EffectDist::Laplace, EffectDist::ScaledT5}) {
    CAPTURE(to_string(dist));
    SplitMix64 rng(11);
    const int n = 400000;
    double sum = 0, sq = 0;
    for (int k = 0; k < n; ++k) {
      const double v = draw_effect(dist, 2.0, rng);
      sum += v;
      sq += v * v;
    }
    CHECK(std::abs(sum / n) <= 0.02);
    CHECK(sq / n == doctest::Approx(2.0).epsilon(0.03));
    CHECK(parse_effect_dist(to_string(dist)) == dist);
  }
  SplitMix64 rng(1);
  CHECK(draw_effect(EffectDist::Laplace, 0.0, rng) == 0.0);
}

TEST_CASE("exact-count pattern") {
  const SimConfig cfg = SimConfig::square_design(1600, 5, 3);
  CHECK(cfg.rows == 80);
  CHECK(cfg.cols == 80);
  SplitMix64 rng(3);
  const Pattern p = sample_pattern(cfg, rng);
  CHECK(p.size() == 1600);
  CHECK(std::set<std::pair<Index, Index>>(p.begin(), p.end()).size() == 1600);
  CHECK(std::is_sorted(p.begin(), p.end()));
  CHECK(simulate_crossed(cfg).data.profile().n == 1600);
}

TEST_CASE("probability pattern") {
  SimConfig cfg;
  cfg.rows = 100;
  cfg.cols = 100;
  cfg.fill = FillProb{0.2};
  CHECK(cfg.expected_n() == doctest::Approx(2000.0));
  const auto n = simulate_crossed(cfg).data.profile().n;
  CHECK(n > 1800);
  CHECK(n < 2200);
}

TEST_CASE("configuration checks") {
  SimConfig cfg;
  cfg.fill = FillCount{cfg.rows * cfg.cols + 1};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SimConfig{};
  cfg.beta = {1.0, 2.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SimConfig{};
  cfg.vc_truth = {-1.0, 0.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("determinism") {
  SimConfig cfg = SimConfig::square_design(400, 2, 9);
  CHECK(csv_of(simulate_crossed(cfg).data) == csv_of(simulate_crossed(cfg).data));
  CHECK(csv_of(simulate_crossed(cfg, 0).data) != csv_of(simulate_crossed(cfg, 1).data));

  SplitMix64 rng(1);
  const Pattern fixed = sample_pattern(cfg, rng);
  const auto a = simulate_crossed(cfg, 0, &fixed);
  const auto b = simulate_crossed(cfg, 1, &fixed);
  CHECK(a.data.profile().row_counts == b.data.profile().row_counts);
}

TEST_CASE("noiseless simulation is recovered by the fit") {
  SimConfig cfg = SimConfig::square_design(900, 3, 4);
  cfg.vc_truth = {0.0, 0.0, 0.0};
  cfg.beta = {1.0, -2.0, 0.5, 4.0};
  const auto sim = simulate_crossed(cfg);
  CHECK(sim.truth.a.cwiseAbs().maxCoeff() == 0.0);
  const auto res = fit<double>(sim.data);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(res.beta(k) - cfg.beta[static_cast<std::size_t>(k)]) <= 1e-10);
}

TEST_CASE("study output shape") {
  StudyOptions opts;
  opts.replicates = 4;
  std::vector<SimConfig> grid;
  for (Count n : {400, 1600, 6400}) grid.push_back(SimConfig::square_design(n, 2, 1));
  const auto res = mc_study(grid, opts);
  CHECK(res.failures == 0);
  CHECK(res.rows.size() == 3 * (2 + 4));
  std::ostringstream csv;
  write_study_csv(csv, res);
  const std::string text = csv.str();
  CHECK(text.rfind("N,R,C,param,truth,mean_est,mse,coverage,secs", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 18);
  const auto slopes = study_slopes(res);
  CHECK(slopes.count("beta1") == 1);
  CHECK(slopes.count("sigma2_e") == 1);

  opts.replicates = 2;
  const auto single = mc_study({SimConfig::square_design(400, 0, 2)}, opts);
  for (const auto& row : single.rows) {
    CHECK(std::isfinite(row.mse));
    CHECK(row.replicates_ok == 2);
  }
  CHECK(study_slopes(single).empty());
}

TEST_CASE("log-log slope") {
  CHECK(loglog_slope({1, 10, 100}, {5, 0.5, 0.05}) == doctest::Approx(-1.0));
  CHECK(loglog_slope({2, 4, 8}, {3, 12, 48}) == doctest::Approx(2.0));
}

TEST_CASE("bench rows") {
  FitOptions opts;
  const auto one = bench_fit({1600}, 2, 1, 1, opts);
  CHECK(one.size() == 1);
  CHECK(one[0].n == 1600);
  CHECK(one[0].secs > 0.0);
}

TEST_CASE("unbiased components under every effect distribution") {
  for (EffectDist dist : {EffectDist::Gaussian, EffectDist::Laplace, EffectDist::ScaledT5}) {
    SimConfig cfg;
    cfg.dist = {dist, dist, dist};
    cfg.seed = 21;
    const std::size_t reps = 200;
    std::array<std::vector<double>, 3> est;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto vc = fit<double>(simulate_crossed(cfg, r).data).vc;
      est[0].push_back(vc.sigma2_a_raw);
      est[1].push_back(vc.sigma2_b_raw);
      est[2].push_back(vc.sigma2_e_raw);
    }
    for (int k = 0; k < 3; ++k) {
      const auto& v = est[static_cast<std::size_t>(k)];
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / reps;
      double ss = 0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double se = std::sqrt(ss / (reps - 1) / reps);
      CAPTURE(k);
      CHECK(std::abs(mean - cfg.vc_truth[static_cast<std::size_t>(k)]) <= 4 * se);
    }
  }
}
