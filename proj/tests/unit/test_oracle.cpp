#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossed/oracle.hpp"
#include "support.hpp"

using namespace crossed;
using crossed::testing::obs;
using crossed::testing::random_design;
using crossed::testing::rel_err;
using VC = VarianceComponents<double>;

TEST_CASE("dense covariance assembly") {
  const auto d = oracle::materialize(random_design(10, 10, 0.5, 1, 1));
  const auto n = static_cast<Eigen::Index>(d.n());
  CHECK(oracle::dense_covariance(d, VC::fixed(0, 0, 1)) == Eigen::MatrixXd::Identity(n, n));

  const auto pair = oracle::materialize(
      dataset_from_observations({obs("a", "u", {1.0}, 1.0), obs("a", "v", {1.0}, 2.0)}));
  Eigen::Matrix2d want;
  want << 2.0 + 0.5 + 1.0, 2.0, 2.0, 2.0 + 0.5 + 1.0;
  CHECK(oracle::dense_covariance(pair, VC::fixed(2.0, 0.5, 1.0)) == want);
}

TEST_CASE("dense covariance is symmetric positive semidefinite") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = oracle::materialize(random_design(20, 20, 0.3, 0, seed));
    const Eigen::MatrixXd v = oracle::dense_covariance(d, VC::fixed(1.5, 0.7, 0.0));
    CHECK(v == v.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("orderings are consistent") {
  const auto d = oracle::materialize(random_design(12, 9, 0.5, 1, 2));
  const Eigen::MatrixXd p = d.permutation();
  CHECK(rel_err(p * d.b_c() * p.transpose(), d.b_r()) == 0.0);
  CHECK(rel_err(p * d.a_c() * p.transpose(), d.a_r()) == 0.0);
  CHECK(d.z.sum() == static_cast<double>(d.n()));
}

TEST_CASE("dense GLS") {
  const auto d = oracle::materialize(random_design(20, 20, 0.4, 2, 3));
  const auto n = static_cast<Eigen::Index>(d.n());
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const auto ols = oracle::dense_gls(d.x, d.y, id);
  const Eigen::VectorXd qr = d.x.colPivHouseholderQr().solve(d.y);
  CHECK(rel_err(ols.beta, qr) <= 1e-10);

  const auto scaled = oracle::dense_gls(d.x, d.y, 3.0 * id);
  CHECK(rel_err(scaled.beta, ols.beta) <= 1e-12);
  CHECK(rel_err(scaled.cov, 3.0 * ols.cov) <= 1e-12);

  const Eigen::MatrixXd v = oracle::dense_covariance(d, VC::fixed(2.0, 0.5, 1.0));
  const auto gls = oracle::dense_gls(d.x, d.y, v);
  const Eigen::VectorXd score = d.x.transpose() * v.llt().solve(d.y - d.x * gls.beta);
  CHECK(score.cwiseAbs().maxCoeff() <= 1e-9 * (d.x.transpose() * v.llt().solve(d.y)).cwiseAbs().maxCoeff());

  CHECK_THROWS_AS(oracle::dense_gls(d.x, d.y, Eigen::MatrixXd::Zero(n, n)), Error);
}

TEST_CASE("sandwich with matching weight equals the GLS covariance") {
  const auto d = oracle::materialize(random_design(15, 15, 0.5, 2, 4));
  const Eigen::MatrixXd v = oracle::dense_covariance(d, VC::fixed(2.0, 0.5, 1.0));
  CHECK(rel_err(oracle::dense_sandwich(d.x, v, v), oracle::dense_gls(d.x, d.y, v).cov) <= 1e-10);
}

TEST_CASE("exact efficiency") {
  const auto d = oracle::materialize(random_design(15, 15, 0.5, 1, 5));
  const Eigen::VectorXd x = d.x.col(1);
  CHECK(oracle::exact_efficiency(x, VC::fixed(2.0, 0.0, 1.0), d).rls == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oracle::exact_efficiency(x, VC::fixed(0.0, 2.0, 1.0), d).cls == doctest::Approx(1.0).epsilon(1e-12));
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto e = oracle::exact_efficiency(x, VC::fixed(0.3 * seed, 2.0, 1.0), d);
    CHECK(e.rls > 0.0);
    CHECK(e.rls <= 1.0 + 1e-12);
    CHECK(e.cls > 0.0);
    CHECK(e.cls <= 1.0 + 1e-12);
  }
}

TEST_CASE("size guard") {
  SimConfig cfg;
  cfg.rows = 200;
  cfg.cols = 200;
  cfg.fill = FillCount{6000};
  CHECK_THROWS_AS(oracle::materialize(simulate_crossed(cfg).data), Error);
}
