#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossed/report.hpp"
#include "support.hpp"

using namespace crossed;
using crossed::testing::obs;
using crossed::testing::random_design;
using crossed::testing::rel_err;

namespace {

SimConfig noiseless_config() {
  SimConfig cfg;
  cfg.rows = 30;
  cfg.cols = 30;
  cfg.fill = FillCount{300};
  cfg.covariates = 3;
  cfg.beta = {0.5, -1.0, 2.0, 3.0};
  cfg.vc_truth = {0.0, 0.0, 0.0};
  return cfg;
}

}  // namespace

TEST_CASE("noiseless data") {
  const SimConfig cfg = noiseless_config();
  const auto res = fit<double>(simulate_crossed(cfg).data);
  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(cfg.beta.data(), 4);
  CHECK(rel_err(res.beta, beta) <= 1e-10);
  CHECK(std::abs(res.vc.sigma2_a_raw) <= 1e-12);
  CHECK(std::abs(res.vc.sigma2_b_raw) <= 1e-12);
  CHECK(std::abs(res.vc.sigma2_e_raw) <= 1e-12);
}

TEST_CASE("auto mode runs six passes and follows the mode rule") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = random_design(40, 25, 0.3, 2, seed, {seed % 2 ? 2.0 : 0.2, 0.5, 1.0});
    const auto res = fit<double>(d);
    CHECK(res.passes == 6);
    CHECK_FALSE(res.degraded);
    const bool row = res.vc_step2.sigma2_a * static_cast<double>(d.profile().max_row) >=
                     res.vc_step2.sigma2_b * static_cast<double>(d.profile().max_col);
    CHECK((res.mode == GlsMode::RowGLS) == row);

    const Eigen::MatrixXd cov =
        res.mode == GlsMode::RowGLS
            ? var_beta_rls<double>(d, res.vc, rls_fit<double>(d, res.vc).neq)
            : var_beta_cls<double>(d, res.vc, cls_fit<double>(d, res.vc).neq);
    CHECK(rel_err(res.cov_beta, cov) <= 1e-12);
    CHECK(res.se_beta.size() == 3);
  }
}

TEST_CASE("forced modes") {
  const auto d = random_design(30, 30, 0.3, 1, 3);
  FitOptions opts;
  opts.mode = FitMode::Col;
  CHECK(fit<double>(d, opts).mode == GlsMode::ColumnGLS);
  opts.mode = FitMode::Row;
  CHECK(fit<double>(d, opts).mode == GlsMode::RowGLS);
  CHECK(parse_fit_mode("both-compare") == FitMode::BothCompare);
  CHECK(to_string(FitMode::Auto) == "auto");
  CHECK_THROWS(parse_fit_mode("rows"));
}

TEST_CASE("both-compare keeps the smaller standard error") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = random_design(30, 30, 0.3, 2, seed);
    FitOptions opts;
    opts.mode = FitMode::BothCompare;
    opts.compare_coefficient = 2;
    const auto res = fit<double>(d, opts);
    REQUIRE(res.comparison.has_value());
    CHECK(res.comparison->coefficient == 2);
    const double chosen = res.se_beta(2);
    CHECK(chosen == doctest::Approx(std::min(res.comparison->se_row, res.comparison->se_col)));
    CHECK((res.mode == GlsMode::RowGLS) == (res.comparison->se_row <= res.comparison->se_col));
  }
}

TEST_CASE("singular moment system degrades to OLS") {
  std::vector<Observation> recs;
  for (int i = 0; i < 6; ++i) {
    recs.push_back(obs("r" + std::to_string(i), "c" + std::to_string(i % 2), {1.0, double(i)}, i * 0.5 + (i % 3)));
  }
  const auto res = fit<double>(dataset_from_observations(recs));
  CHECK(res.degraded);
  CHECK(res.beta == res.ols_beta);
  CHECK(res.cov_beta == res.ols_cov_sandwich);
  CHECK(res.vc.sigma2_a == 0.0);
  CHECK(res.vc.sigma2_b == 0.0);
  CHECK_FALSE(res.warnings.empty());
}

TEST_CASE("deterministic reduction gives identical fits for any shard count") {
  const auto d = random_design(120, 100, 0.3, 3, 4);
  FitOptions opts;
  opts.deterministic_reduction = true;
  opts.emit_diagnostics = true;
  const auto base = fit<double>(d, opts);
  for (std::size_t shards : {2u, 3u, 8u}) {
    opts.shards = shards;
    const auto res = fit<double>(d, opts);
    CHECK(res.beta == base.beta);
    CHECK(res.cov_beta == base.cov_beta);
    CHECK(res.vc == base.vc);
    CHECK(res.diagnostics->eff_columns_stat == base.diagnostics->eff_columns_stat);
  }
}

TEST_CASE("scale equivariance") {
  const auto d = random_design(30, 30, 0.3, 2, 5);
  std::vector<Index> rows, cols;
  std::vector<double> y;
  Eigen::MatrixXd x(3, d.profile().n);
  Eigen::Index at = 0;
  d.scan([&](const RecordBatch& b) {
    for (std::size_t k = 0; k < b.size(); ++k, ++at) {
      rows.push_back(b.rows[k]);
      cols.push_back(b.cols[k]);
      x.col(at) = b.x.col(static_cast<Eigen::Index>(k));
      y.push_back(10.0 * b.y[k]);
    }
  });
  const auto scaled = dataset_from_indexed(rows, cols, x, y, d.row_keys(), d.col_keys());
  const auto a = fit<double>(d);
  const auto b = fit<double>(scaled);
  CHECK(rel_err(b.beta, 10.0 * a.beta) <= 1e-10);
  CHECK(rel_err(b.se_beta, 10.0 * a.se_beta) <= 1e-10);
  CHECK(b.vc.sigma2_a == doctest::Approx(100.0 * a.vc.sigma2_a).epsilon(1e-10));
}

TEST_CASE("JSON report round trip") {
  FitOptions opts;
  opts.emit_diagnostics = true;
  const auto res = fit<double>(random_design(30, 30, 0.3, 2, 6), opts);
  const auto j = nlohmann::json::parse(to_json(res).dump());
  REQUIRE(j["beta"].size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(j["beta"][k].get<double>() == res.beta(k));
    CHECK(j["se"][k].get<double>() == res.se_beta(k));
    CHECK(j["cov_beta"][k][k].get<double>() == res.cov_beta(k, k));
  }
  CHECK(j["sigma2"]["raw_a"].get<double>() == res.vc.sigma2_a_raw);
  CHECK(j["mode"] == std::string(to_string(res.mode)));
  CHECK(j["profile"]["N"].get<Count>() == res.profile.n);
  CHECK(j["passes"].get<int>() == 8);
  CHECK(j["diagnostics"]["eff_columns_stat"].get<double>() == res.diagnostics->eff_columns_stat);
  CHECK_FALSE(j.contains("comparison"));
}
