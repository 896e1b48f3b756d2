#pragma once

#include <limits>

#include "crossed/gls.hpp"

namespace crossed {

namespace detail {

template <typename Scalar>
Matrix<Scalar> symmetrized(const Matrix<Scalar>& m) {
  return (m + m.transpose()) / Scalar(2);
}

template <typename Scalar>
double min_eigenvalue(const Matrix<Scalar>& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m, Eigen::EigenvaluesOnly);
  return static_cast<double>(es.eigenvalues()(0));
}

// Smallest eigenvalue of the block without the intercept row and column.
template <typename Scalar>
double min_eigenvalue_without_intercept(const Matrix<Scalar>& m) {
  const auto k = m.rows() - 1;
  if (k <= 0) return 0.0;
  return min_eigenvalue<Scalar>(m.bottomRightCorner(k, k));
}

template <typename Scalar>
Vector<Scalar> counts_vector(const std::vector<Count>& counts) {
  Vector<Scalar> v(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t g = 0; g < counts.size(); ++g) v(static_cast<Eigen::Index>(g)) = static_cast<Scalar>(counts[g]);
  return v;
}

}  // namespace detail

// Covariance of the single-factor GLS estimator under the full two-factor
// covariance: A^-1 + A^-1 W A^-1 with A = X' V^-1 X for the modelled factor
// and W the variance of X' V^-1 b for the other factor's effects b.
// One pass; O(G p) extra memory for the other factor's G groups.
template <typename Scalar = double>
Matrix<Scalar> var_beta_gls(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                            const NormalEquations<Scalar>& neq_in, const ScanOptions& opts = {}) {
  NormalEquations<Scalar> neq = neq_in;
  if (!(neq.vc == vc) || neq.a.size() == 0) assemble(neq, vc);
  const Side own = neq.side;
  const Side cross = other(own);
  const auto w = static_cast<Eigen::Index>(data.width());
  const auto groups = static_cast<Eigen::Index>(data.profile().groups(cross));
  const Matrix<Scalar> a_inv = inverse_spd<Scalar>(neq.a);
  const Vector<Scalar> wts = neq.group_weights(vc);
  const Matrix<Scalar> weighted_totals = neq.group_x * wts.asDiagonal();

  struct Acc {
    Matrix<Scalar> totals;    // X over each cross group
    Matrix<Scalar> shrunken;  // sum of weighted own-group totals per cross group
    void merge(const Acc& o) {
      totals += o.totals;
      shrunken += o.shrunken;
    }
  };
  Acc acc = reduce_scan(
      data, opts, [&] { return Acc{Matrix<Scalar>::Zero(w, groups), Matrix<Scalar>::Zero(w, groups)}; },
      [&](Acc& a, const RecordBatch& b) {
        const auto g_own = b.groups(own);
        const auto g_cross = b.groups(cross);
        for (std::size_t k = 0; k < b.size(); ++k) {
          a.totals.col(g_cross[k]) += b.x.col(static_cast<Eigen::Index>(k)).template cast<Scalar>();
          a.shrunken.col(g_cross[k]) += weighted_totals.col(g_own[k]);
        }
      });
  const Scalar e = vc.sigma2_e;
  const Matrix<Scalar> g = acc.totals - vc.group(own) * acc.shrunken;
  const Matrix<Scalar> middle = (vc.group(cross) / (e * e)) * (g * g.transpose());
  return detail::symmetrized<Scalar>(a_inv + a_inv * middle * a_inv);
}

template <typename Scalar = double>
Matrix<Scalar> var_beta_rls(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                            const NormalEquations<Scalar>& neq, const ScanOptions& opts = {}) {
  if (neq.side != Side::Row) throw Error(ErrorCode::InvalidArgument, "normal equations are not row-weighted");
  return var_beta_gls<Scalar>(data, vc, neq, opts);
}

template <typename Scalar = double>
Matrix<Scalar> var_beta_cls(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                            const NormalEquations<Scalar>& neq, const ScanOptions& opts = {}) {
  if (neq.side != Side::Col) throw Error(ErrorCode::InvalidArgument, "normal equations are not column-weighted");
  return var_beta_gls<Scalar>(data, vc, neq, opts);
}

// (X'X)^-1 X' V_R X (X'X)^-1 with
// X' V_R X = sE X'X + sA sum_i X_i X_i' + sB sum_j X_j X_j'.
template <typename Scalar = double>
Matrix<Scalar> var_beta_ols_sandwich(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                                     const Matrix<Scalar>& xtx, const ScanOptions& opts = {}) {
  const auto w = static_cast<Eigen::Index>(data.width());
  const auto& prof = data.profile();
  struct Acc {
    Matrix<Scalar> rows, cols;
    void merge(const Acc& o) {
      rows += o.rows;
      cols += o.cols;
    }
  };
  Acc acc = reduce_scan(
      data, opts,
      [&] {
        return Acc{Matrix<Scalar>::Zero(w, static_cast<Eigen::Index>(prof.r)),
                   Matrix<Scalar>::Zero(w, static_cast<Eigen::Index>(prof.c))};
      },
      [&](Acc& a, const RecordBatch& b) {
        for (std::size_t k = 0; k < b.size(); ++k) {
          const auto xk = b.x.col(static_cast<Eigen::Index>(k)).template cast<Scalar>();
          a.rows.col(b.rows[k]) += xk;
          a.cols.col(b.cols[k]) += xk;
        }
      });
  const Matrix<Scalar> xtx_inv = inverse_spd<Scalar>(xtx);
  const Matrix<Scalar> middle = vc.sigma2_e * xtx + vc.sigma2_a * (acc.rows * acc.rows.transpose()) +
                                vc.sigma2_b * (acc.cols * acc.cols.transpose());
  return detail::symmetrized<Scalar>(xtx_inv * middle * xtx_inv);
}

// Variance of the grand mean under the model; the bias scale of the moment
// estimators. Uses whatever components are passed (plug-in at fit time).
template <typename Scalar>
double upsilon_diagnostic(const VarianceComponents<Scalar>& vc, const DatasetProfile& p) {
  const double n = static_cast<double>(p.n);
  return static_cast<double>(vc.sigma2_a) * static_cast<double>(p.sum_sq_row) / (n * n) +
         static_cast<double>(vc.sigma2_b) * static_cast<double>(p.sum_sq_col) / (n * n) +
         static_cast<double>(vc.sigma2_e) / n;
}

// Per-column first- and second-order covariate means used by the CLT
// conditions for the row-weighted estimator.
template <typename Scalar = double>
struct ColumnMeans {
  Matrix<Scalar> row_means;         // width x R, xbar_i.
  Matrix<Scalar> col_means;         // width x C, xbar_.j
  Matrix<Scalar> second_order;      // width x C, shrunken average of xbar_i. over rows in column j
  Vector<Scalar> c;                 // sum_i Z_ij sE / (sE + sA N_i.)
  Vector<Scalar> inverse_row_size;  // sum_i Z_ij / N_i.
  Matrix<Scalar> centered_scatter;  // sum Z_ij (x_ij - xbar_i.)(x_ij - xbar_i.)'
};

template <typename Scalar = double>
ColumnMeans<Scalar> column_means(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                                 const ScanOptions& opts = {}) {
  if (!(vc.sigma2_e > Scalar(0))) {
    throw Error(ErrorCode::InvalidArgument, "sigma2_E must be positive");
  }
  const auto w = static_cast<Eigen::Index>(data.width());
  const auto& prof = data.profile();
  const auto n_rows = static_cast<Eigen::Index>(prof.r);
  const auto n_cols = static_cast<Eigen::Index>(prof.c);
  const Vector<Scalar> row_n = detail::counts_vector<Scalar>(prof.row_counts);
  const Scalar a = vc.sigma2_a;
  const Scalar e = vc.sigma2_e;

  struct RowAcc {
    Matrix<Scalar> totals;
    void merge(const RowAcc& o) { totals += o.totals; }
  };
  RowAcc rows = reduce_scan(
      data, opts, [&] { return RowAcc{Matrix<Scalar>::Zero(w, n_rows)}; },
      [&](RowAcc& acc, const RecordBatch& b) {
        for (std::size_t k = 0; k < b.size(); ++k) {
          acc.totals.col(b.rows[k]) += b.x.col(static_cast<Eigen::Index>(k)).template cast<Scalar>();
        }
      });

  ColumnMeans<Scalar> out;
  out.row_means = rows.totals * row_n.cwiseInverse().asDiagonal();
  // shrink_i = sA / (sA + sE / N_i.), c_i = sE / (sE + sA N_i.)
  const Vector<Scalar> shrink =
      (a * row_n).cwiseQuotient(Vector<Scalar>::Constant(n_rows, e) + a * row_n);
  const Vector<Scalar> c_row = Vector<Scalar>::Constant(n_rows, e)
                                   .cwiseQuotient(Vector<Scalar>::Constant(n_rows, e) + a * row_n);
  const Matrix<Scalar> shrunk_means = out.row_means * shrink.asDiagonal();

  struct ColAcc {
    Matrix<Scalar> totals, second;
    Vector<Scalar> c, inv_size;
    CompensatedSum<Matrix<Scalar>> scatter;
    void merge(const ColAcc& o) {
      totals += o.totals;
      second += o.second;
      c += o.c;
      inv_size += o.inv_size;
      scatter.merge(o.scatter);
    }
  };
  ColAcc cols = reduce_scan(
      data, opts,
      [&] {
        return ColAcc{Matrix<Scalar>::Zero(w, n_cols), Matrix<Scalar>::Zero(w, n_cols),
                      Vector<Scalar>::Zero(n_cols), Vector<Scalar>::Zero(n_cols), {w, w}};
      },
      [&](ColAcc& acc, const RecordBatch& b) {
        Matrix<Scalar> centered = b.x.template cast<Scalar>();
        for (std::size_t k = 0; k < b.size(); ++k) {
          const auto kk = static_cast<Eigen::Index>(k);
          const Index i = b.rows[k];
          const Index j = b.cols[k];
          acc.totals.col(j) += centered.col(kk);
          acc.second.col(j) += shrunk_means.col(i);
          acc.c(j) += c_row(i);
          acc.inv_size(j) += Scalar(1) / row_n(i);
          centered.col(kk) -= out.row_means.col(i);
        }
        acc.scatter.add(centered * centered.transpose());
      });
  const Vector<Scalar> col_n_inv = detail::counts_vector<Scalar>(prof.col_counts).cwiseInverse();
  out.col_means = cols.totals * col_n_inv.asDiagonal();
  out.second_order = cols.second * col_n_inv.asDiagonal();
  out.c = std::move(cols.c);
  out.inverse_row_size = std::move(cols.inv_size);
  out.centered_scatter = detail::symmetrized<Scalar>(cols.scatter.value());
  return out;
}

// Finite-sample magnitudes of the quantities in the consistency and CLT
// conditions. No pass/fail judgement is attached.
struct Diagnostics {
  double upsilon_hat = 0;
  double eps_r = 0;
  double eps_c = 0;
  double eff_columns_stat = 0;
  double c_j_concentration = 0;
  double c_ij_concentration = 0;
  double info_rowmeans_min_eig = 0;
  double info_centered_min_eig = 0;
  double info_colshrunk_min_eig = 0;
  double eff_rls_lb = 1;
  double eff_cls_lb = 1;
  std::vector<double> k;  // component 0 (intercept) is not used by the conditions
};

template <typename Scalar = double>
Diagnostics clt_diagnostics(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                            const ScanOptions& opts = {}) {
  const auto& prof = data.profile();
  const ColumnMeans<Scalar> cm = column_means<Scalar>(data, vc, opts);
  const Vector<Scalar> col_n = detail::counts_vector<Scalar>(prof.col_counts);
  const Vector<Scalar> col_n2 = col_n.cwiseProduct(col_n);
  const Vector<Scalar> row_n = detail::counts_vector<Scalar>(prof.row_counts);

  Diagnostics d;
  d.upsilon_hat = upsilon_diagnostic(vc, prof);
  d.eps_r = prof.eps_r();
  d.eps_c = prof.eps_c();
  const auto bounds = efficiency_lower_bounds(vc, prof);
  d.eff_rls_lb = bounds.rls;
  d.eff_cls_lb = bounds.cls;

  const Scalar r = static_cast<Scalar>(prof.r);
  d.eff_columns_stat = static_cast<double>(cm.inverse_row_size.squaredNorm() / (r * r));

  d.c_j_concentration = static_cast<double>(cm.c.cwiseAbs2().maxCoeff() / cm.c.squaredNorm());
  // c_ij depends on i only; each row contributes N_i. equal terms.
  const Vector<Scalar> c_row = Vector<Scalar>::Constant(row_n.size(), vc.sigma2_e)
                                   .cwiseQuotient(Vector<Scalar>::Constant(row_n.size(), vc.sigma2_e) +
                                                  vc.sigma2_a * row_n);
  const Vector<Scalar> c_row2 = c_row.cwiseAbs2();
  d.c_ij_concentration = static_cast<double>(c_row2.maxCoeff() / row_n.dot(c_row2));

  d.info_rowmeans_min_eig = detail::min_eigenvalue<Scalar>(
      detail::symmetrized<Scalar>(cm.row_means * cm.row_means.transpose()));
  d.info_centered_min_eig = detail::min_eigenvalue_without_intercept<Scalar>(cm.centered_scatter);

  const Matrix<Scalar> diff = cm.col_means - cm.second_order;
  const Vector<Scalar> k = diff * col_n2 / col_n2.sum();
  const Matrix<Scalar> dev = diff.colwise() - k;
  const Matrix<Scalar> scatter = dev * col_n2.asDiagonal() * dev.transpose() / col_n2.maxCoeff();
  d.info_colshrunk_min_eig = detail::min_eigenvalue_without_intercept<Scalar>(detail::symmetrized<Scalar>(scatter));
  d.k.resize(static_cast<std::size_t>(k.size()));
  for (Eigen::Index t = 0; t < k.size(); ++t) d.k[static_cast<std::size_t>(t)] = static_cast<double>(k(t));
  return d;
}

}  // namespace crossed
