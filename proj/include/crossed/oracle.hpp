#pragma once

#include "crossed/ingest.hpp"
#include "crossed/moments.hpp"

// Dense reference implementations. Every quantity here is built from explicit
// N x N matrices, so it is only usable on small instances.
namespace crossed::oracle {

inline constexpr Count kMaxDenseN = 5000;

// Records in row ordering: sorted by (row, column).
struct DenseDesign {
  Count r = 0;
  Count c = 0;
  std::vector<Index> rows;
  std::vector<Index> cols;
  Eigen::MatrixXd z;  // R x C incidence
  Eigen::MatrixXd x;  // N x width
  Eigen::VectorXd y;
  std::vector<std::size_t> col_order;  // col_order[k] = row-ordering position of the k-th record in column ordering

  Count n() const { return static_cast<Count>(rows.size()); }

  Eigen::MatrixXd a_r() const;          // same-row indicator, row ordering
  Eigen::MatrixXd b_r() const;          // same-column indicator, row ordering
  Eigen::MatrixXd b_c() const;          // same-column indicator, column ordering
  Eigen::MatrixXd a_c() const;          // same-row indicator, column ordering
  Eigen::MatrixXd permutation() const;  // P with (row-ordered) = P (column-ordered)
};

// Throws TooLarge when N exceeds kMaxDenseN.
DenseDesign materialize(const IndexedDataset& data);

// V_R = sE I + sA A_R + sB B_R in row ordering (clamped components).
Eigen::MatrixXd dense_covariance(const DenseDesign& d, const VarianceComponents<double>& vc);

struct DenseGls {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;  // (X' V^-1 X)^-1
};

// Throws SingularCovariance when V is not positive definite.
DenseGls dense_gls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& v);

// (X' W^-1 X)^-1 X' W^-1 V W^-1 X (X' W^-1 X)^-1.
Eigen::MatrixXd dense_sandwich(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weight,
                               const Eigen::MatrixXd& v);

// Two-pass textbook computation with explicit group means.
UStatistics<double> naive_u_statistics(const DenseDesign& d, const Eigen::VectorXd& beta);

struct ExactEfficiency {
  double rls = 1.0;
  double cls = 1.0;
};

// Efficiency of the single-factor GLS estimators relative to full GLS for a
// single predictor `x` given in row ordering.
ExactEfficiency exact_efficiency(const Eigen::VectorXd& x, const VarianceComponents<double>& vc,
                                 const DenseDesign& d);

}  // namespace crossed::oracle
