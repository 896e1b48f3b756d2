#pragma once

#include <cmath>

#include "crossed/scan.hpp"

namespace crossed {

// Within-row, within-column and total sums of squared residual deviations.
template <typename Scalar = double>
struct UStatistics {
  Scalar u_a = 0;
  Scalar u_b = 0;
  Scalar u_e = 0;
};

// Expectation matrix of the U-statistics as a linear function of
// (sigma2_A, sigma2_B, sigma2_E). Entries are exact integers.
struct MomentMatrix {
  std::array<std::array<Count, 3>, 3> m{};
  Count n = 0;

  template <typename Scalar = double>
  Eigen::Matrix<Scalar, 3, 3> as() const {
    Eigen::Matrix<Scalar, 3, 3> out;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out(i, j) = static_cast<Scalar>(m[i][j]);
    return out;
  }
};

inline MomentMatrix build_moment_matrix(const DatasetProfile& p) {
  MomentMatrix mm;
  const Count n2 = p.n * p.n;
  mm.m = {{{0, p.n - p.r, p.n - p.r},
           {p.n - p.c, 0, p.n - p.c},
           {n2 - p.sum_sq_row, n2 - p.sum_sq_col, n2 - p.n}}};
  mm.n = p.n;
  return mm;
}

// Residuals are recomputed from (y, x, beta) on every pass.
template <typename Scalar = double>
UStatistics<Scalar> compute_u_statistics(const IndexedDataset& data, const Vector<Scalar>& beta,
                                         const ScanOptions& opts = {}) {
  if (static_cast<std::size_t>(beta.size()) != data.width()) {
    throw Error(ErrorCode::WidthMismatch, "coefficient vector does not match dataset width");
  }
  const auto& prof = data.profile();
  struct Acc {
    GroupMoments<Scalar> rows, cols, all;
    void merge(const Acc& o) {
      rows.merge(o.rows);
      cols.merge(o.cols);
      all.merge(o.all);
    }
  };
  Acc acc = reduce_scan(
      data, opts,
      [&] {
        return Acc{GroupMoments<Scalar>(static_cast<std::size_t>(prof.r)),
                   GroupMoments<Scalar>(static_cast<std::size_t>(prof.c)), GroupMoments<Scalar>(1)};
      },
      [&](Acc& a, const RecordBatch& b) {
        const Vector<Scalar> fitted = b.x.transpose().template cast<Scalar>() * beta;
        for (std::size_t k = 0; k < b.size(); ++k) {
          const Scalar eta = static_cast<Scalar>(b.y[k]) - fitted(static_cast<Eigen::Index>(k));
          a.rows.add(b.rows[k], eta);
          a.cols.add(b.cols[k], eta);
          a.all.add(0, eta);
        }
      });
  UStatistics<Scalar> u{acc.rows.within_ss(), acc.cols.within_ss(), acc.all.m2(0)};
  using std::isfinite;
  if (!isfinite(u.u_a) || !isfinite(u.u_b) || !isfinite(u.u_e)) {
    throw Error(ErrorCode::NonFinite, "U-statistic accumulation overflowed");
  }
  return u;
}

// Positive floor applied to sigma2_E so that GLS weights stay defined.
template <typename Scalar>
Scalar error_floor(Scalar u_e, Count n) {
  return Scalar(1e-12) * (u_e / static_cast<Scalar>(std::max<Count>(n - 1, 1)) + Scalar(1));
}

// Singularity is judged on the row-equilibrated matrix (each row scaled to
// unit max-norm), since the rows of M live on scales N and N^2.
template <typename Scalar = double>
bool moment_matrix_singular(const MomentMatrix& mm) {
  Eigen::Matrix<Scalar, 3, 3> m = mm.as<Scalar>();
  for (int i = 0; i < 3; ++i) {
    const Scalar scale = m.row(i).cwiseAbs().maxCoeff();
    if (scale == Scalar(0)) return true;
    m.row(i) /= scale;
  }
  using std::abs;
  using std::pow;
  const Scalar norm = m.norm();
  return abs(m.determinant()) <= Scalar(1e-12) * norm * norm * norm;
}

namespace detail {

template <typename Scalar>
VarianceComponents<Scalar> solve_moment_system(const MomentMatrix& mm, const Eigen::Matrix<Scalar, 3, 1>& rhs,
                                               Scalar floor) {
  if (moment_matrix_singular<Scalar>(mm)) {
    throw Error(ErrorCode::SingularMomentSystem,
                "moment system is singular; variance components are not identifiable for this design");
  }
  const Eigen::Matrix<Scalar, 3, 1> sol = mm.as<Scalar>().partialPivLu().solve(rhs);

  VarianceComponents<Scalar> vc;
  vc.sigma2_a_raw = sol(0);
  vc.sigma2_b_raw = sol(1);
  vc.sigma2_e_raw = sol(2);
  vc.sigma2_a = std::max(vc.sigma2_a_raw, Scalar(0));
  vc.sigma2_b = std::max(vc.sigma2_b_raw, Scalar(0));
  vc.sigma2_e = std::max(vc.sigma2_e_raw, floor);
  vc.clamped = {vc.sigma2_a != vc.sigma2_a_raw, vc.sigma2_b != vc.sigma2_b_raw,
                vc.sigma2_e != vc.sigma2_e_raw};
  return vc;
}

}  // namespace detail

// Solves M * (sigma2_A, sigma2_B, sigma2_E) = (u_a, u_b, u_e) as written.
template <typename Scalar = double>
VarianceComponents<Scalar> solve_variance_components(const MomentMatrix& mm, const UStatistics<Scalar>& u) {
  return detail::solve_moment_system<Scalar>(mm, Eigen::Matrix<Scalar, 3, 1>(u.u_a, u.u_b, u.u_e),
                                             error_floor(u.u_e, mm.n));
}

// Right-hand side whose expectation is M * (sigma2_A, sigma2_B, sigma2_E):
// the third row of M is the expectation of N * u_e, the pairwise form
// 1/2 sum over all pairs of squared differences.
template <typename Scalar = double>
Eigen::Matrix<Scalar, 3, 1> moment_rhs(const UStatistics<Scalar>& u, Count n) {
  return {u.u_a, u.u_b, static_cast<Scalar>(n) * u.u_e};
}

// Unbiased moment estimates: E[moment_rhs] = M * sigma2 under the model.
template <typename Scalar = double>
VarianceComponents<Scalar> unbiased_variance_components(const MomentMatrix& mm, const UStatistics<Scalar>& u) {
  return detail::solve_moment_system<Scalar>(mm, moment_rhs(u, mm.n), error_floor(u.u_e, mm.n));
}

// Steps 2 and 4 of the alternating fit in one call.
template <typename Scalar = double>
VarianceComponents<Scalar> estimate_variance_components(const IndexedDataset& data,
                                                        const Vector<Scalar>& beta,
                                                        const ScanOptions& opts = {}) {
  return unbiased_variance_components(build_moment_matrix(data.profile()),
                                      compute_u_statistics<Scalar>(data, beta, opts));
}

}  // namespace crossed
