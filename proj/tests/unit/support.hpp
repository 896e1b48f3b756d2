#pragma once

#include <Eigen/Dense>

#include "crossed/simulator.hpp"

namespace crossed::testing {

inline IndexedDataset random_design(Count rows, Count cols, double fill, std::size_t p, std::uint64_t seed,
                                    std::array<double, 3> vc = {2.0, 0.5, 1.0}) {
  SimConfig cfg;
  cfg.rows = rows;
  cfg.cols = cols;
  cfg.fill = FillProb{fill};
  cfg.covariates = p;
  cfg.beta.assign(p + 1, 1.0);
  cfg.vc_truth = vc;
  cfg.seed = seed;
  return simulate_crossed(cfg).data;
}

inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-300);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

inline Observation obs(std::string r, std::string c, std::vector<double> x, double y) {
  return {std::move(r), std::move(c), std::move(x), y};
}

}  // namespace crossed::testing
