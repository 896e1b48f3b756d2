#pragma once

#include <string_view>
#include <utility>

#include "crossed/scan.hpp"

namespace crossed {

enum class GlsMode { RowGLS, ColumnGLS };

constexpr std::string_view to_string(GlsMode m) noexcept {
  return m == GlsMode::RowGLS ? "RowGLS" : "ColumnGLS";
}
constexpr Side side_of(GlsMode m) noexcept { return m == GlsMode::RowGLS ? Side::Row : Side::Col; }

// Symmetric positive definite solve with a relative pivot floor.
template <typename Scalar, typename Rhs>
Matrix<Scalar> solve_spd(const Matrix<Scalar>& a, const Eigen::MatrixBase<Rhs>& rhs) {
  Eigen::LDLT<Matrix<Scalar>> ldlt(a);
  const Scalar max_diag = a.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(max_diag > Scalar(0)) ||
      ldlt.vectorD().minCoeff() <= Scalar(1e-12) * max_diag) {
    throw Error(ErrorCode::SingularDesign,
                "normal equations are singular; the covariates are collinear or constant");
  }
  return ldlt.solve(rhs.template cast<Scalar>());
}

template <typename Scalar>
Matrix<Scalar> inverse_spd(const Matrix<Scalar>& a) {
  Matrix<Scalar> inv = solve_spd<Scalar>(a, Matrix<Scalar>::Identity(a.rows(), a.cols()));
  return (inv + inv.transpose()) / Scalar(2);
}

template <typename Scalar = double>
struct OlsFit {
  Vector<Scalar> beta;
  Matrix<Scalar> xtx;
  Vector<Scalar> xty;
};

template <typename Scalar = double>
OlsFit<Scalar> ols_fit(const IndexedDataset& data, const ScanOptions& opts = {}) {
  const auto w = static_cast<Eigen::Index>(data.width());
  struct Acc {
    CompensatedSum<Matrix<Scalar>> xtx;
    CompensatedSum<Vector<Scalar>> xty;
    void merge(const Acc& o) {
      xtx.merge(o.xtx);
      xty.merge(o.xty);
    }
  };
  Acc acc = reduce_scan(
      data, opts, [&] { return Acc{{w, w}, {w, 1}}; },
      [&](Acc& a, const RecordBatch& b) {
        const Matrix<Scalar> x = b.x.template cast<Scalar>();
        const auto y = Eigen::Map<const Eigen::VectorXd>(b.y.data(), static_cast<Eigen::Index>(b.size()))
                           .template cast<Scalar>();
        a.xtx.add(x * x.transpose());
        a.xty.add(x * y);
      });
  OlsFit<Scalar> fit;
  fit.xtx = acc.xtx.value();
  fit.xtx = (fit.xtx + fit.xtx.transpose().eval()) / Scalar(2);
  fit.xty = acc.xty.value();
  fit.beta = solve_spd<Scalar>(fit.xtx, fit.xty);
  return fit;
}

// Normal equations for GLS that models one grouping factor. `side` = Row is
// the row-weighted estimator. Besides the weighted system (a, b) the
// vc-independent sums are retained so the system can be re-weighted and the
// covariance pass can reuse the group totals.
template <typename Scalar = double>
struct NormalEquations {
  Side side = Side::Row;
  Matrix<Scalar> a;
  Vector<Scalar> b;
  Matrix<Scalar> xtx;
  Vector<Scalar> xty;
  Matrix<Scalar> group_x;  // width x G covariate totals
  Vector<Scalar> group_y;  // response totals
  Vector<Scalar> group_n;  // counts
  VarianceComponents<Scalar> vc;

  // 1 / (sigma2_E + s * N_g) for the grouping variance s in use.
  Vector<Scalar> group_weights(const VarianceComponents<Scalar>& v) const {
    const Scalar s = v.group(side);
    return (Vector<Scalar>::Constant(group_n.size(), v.sigma2_e) + s * group_n).cwiseInverse();
  }
};

// Recomputes (a, b) for new components; no data pass.
template <typename Scalar>
void assemble(NormalEquations<Scalar>& neq, const VarianceComponents<Scalar>& vc) {
  if (!(vc.sigma2_e > Scalar(0))) {
    throw Error(ErrorCode::InvalidArgument, "sigma2_E must be positive for GLS weighting");
  }
  const Scalar e = vc.sigma2_e;
  const Scalar s = vc.group(neq.side);
  const Vector<Scalar> wts = neq.group_weights(vc);
  Matrix<Scalar> between = neq.group_x * wts.asDiagonal() * neq.group_x.transpose();
  neq.a = neq.xtx / e - (s / e) * between;
  neq.a = (neq.a + neq.a.transpose().eval()) / Scalar(2);
  neq.b = neq.xty / e - (s / e) * (neq.group_x * wts.cwiseProduct(neq.group_y));
  neq.vc = vc;
}

template <typename Scalar = double>
NormalEquations<Scalar> accumulate_group_totals(const IndexedDataset& data, Side side,
                                                const ScanOptions& opts = {}) {
  const auto w = static_cast<Eigen::Index>(data.width());
  const auto& counts = data.profile().counts(side);
  const auto groups = static_cast<Eigen::Index>(counts.size());
  struct Acc {
    CompensatedSum<Matrix<Scalar>> xtx;
    CompensatedSum<Vector<Scalar>> xty;
    Matrix<Scalar> gx;
    Vector<Scalar> gy;
    void merge(const Acc& o) {
      xtx.merge(o.xtx);
      xty.merge(o.xty);
      gx += o.gx;
      gy += o.gy;
    }
  };
  Acc acc = reduce_scan(
      data, opts,
      [&] { return Acc{{w, w}, {w, 1}, Matrix<Scalar>::Zero(w, groups), Vector<Scalar>::Zero(groups)}; },
      [&](Acc& a, const RecordBatch& b) {
        const Matrix<Scalar> x = b.x.template cast<Scalar>();
        const auto y = Eigen::Map<const Eigen::VectorXd>(b.y.data(), static_cast<Eigen::Index>(b.size()))
                           .template cast<Scalar>();
        a.xtx.add(x * x.transpose());
        a.xty.add(x * y);
        const auto g = b.groups(side);
        for (std::size_t k = 0; k < b.size(); ++k) {
          a.gx.col(g[k]) += x.col(static_cast<Eigen::Index>(k));
          a.gy(g[k]) += y(static_cast<Eigen::Index>(k));
        }
      });
  NormalEquations<Scalar> neq;
  neq.side = side;
  neq.xtx = acc.xtx.value();
  neq.xtx = (neq.xtx + neq.xtx.transpose().eval()) / Scalar(2);
  neq.xty = acc.xty.value();
  neq.group_x = std::move(acc.gx);
  neq.group_y = std::move(acc.gy);
  neq.group_n.resize(groups);
  for (Eigen::Index g = 0; g < groups; ++g) neq.group_n(g) = static_cast<Scalar>(counts[g]);
  return neq;
}

template <typename Scalar = double>
struct GlsFit {
  Vector<Scalar> beta;
  NormalEquations<Scalar> neq;
};

// GLS with covariance sigma2_E I + s * (block indicator of `side`), via the
// Woodbury identity in a single pass.
template <typename Scalar = double>
GlsFit<Scalar> gls_fit(const IndexedDataset& data, Side side, const VarianceComponents<Scalar>& vc,
                       const ScanOptions& opts = {}) {
  if (!(vc.sigma2_e > Scalar(0))) {
    throw Error(ErrorCode::InvalidArgument, "sigma2_E must be positive for GLS weighting");
  }
  GlsFit<Scalar> fit;
  fit.neq = accumulate_group_totals<Scalar>(data, side, opts);
  assemble(fit.neq, vc);
  fit.beta = solve_spd<Scalar>(fit.neq.a, fit.neq.b);
  return fit;
}

template <typename Scalar = double>
GlsFit<Scalar> rls_fit(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                       const ScanOptions& opts = {}) {
  return gls_fit<Scalar>(data, Side::Row, vc, opts);
}

template <typename Scalar = double>
GlsFit<Scalar> cls_fit(const IndexedDataset& data, const VarianceComponents<Scalar>& vc,
                       const ScanOptions& opts = {}) {
  return gls_fit<Scalar>(data, Side::Col, vc, opts);
}

template <typename Scalar>
GlsMode select_gls_mode(const VarianceComponents<Scalar>& vc, const DatasetProfile& profile) {
  return vc.sigma2_a * static_cast<Scalar>(profile.max_row) >=
                 vc.sigma2_b * static_cast<Scalar>(profile.max_col)
             ? GlsMode::RowGLS
             : GlsMode::ColumnGLS;
}

struct EfficiencyBounds {
  double rls = 1.0;
  double cls = 1.0;
};

// Worst-case efficiency of each single-factor GLS relative to full GLS for a
// single predictor.
template <typename Scalar>
EfficiencyBounds efficiency_lower_bounds(const VarianceComponents<Scalar>& vc,
                                         const DatasetProfile& profile) {
  const double e = static_cast<double>(vc.sigma2_e);
  auto bound = [e](double load) { return 4.0 * e * (e + load) / ((2.0 * e + load) * (2.0 * e + load)); };
  return {bound(static_cast<double>(vc.sigma2_b) * static_cast<double>(profile.max_col)),
          bound(static_cast<double>(vc.sigma2_a) * static_cast<double>(profile.max_row))};
}

}  // namespace crossed
