#include "crossed/oracle.hpp"

#include <algorithm>
#include <numeric>

namespace crossed::oracle {

namespace {

Eigen::MatrixXd same_group(const std::vector<Index>& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index t = 0; t < n; ++t) m(s, t) = g[s] == g[t] ? 1.0 : 0.0;
  return m;
}

Eigen::LDLT<Eigen::MatrixXd> factor_pd(const Eigen::MatrixXd& v) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
  const double scale = v.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-14 * scale) {
    throw Error(ErrorCode::SingularCovariance, "covariance matrix is not positive definite");
  }
  return ldlt;
}

}  // namespace

Eigen::MatrixXd DenseDesign::a_r() const { return same_group(rows); }
Eigen::MatrixXd DenseDesign::b_r() const { return same_group(cols); }

Eigen::MatrixXd DenseDesign::b_c() const {
  std::vector<Index> c(col_order.size());
  for (std::size_t k = 0; k < col_order.size(); ++k) c[k] = cols[col_order[k]];
  return same_group(c);
}

Eigen::MatrixXd DenseDesign::a_c() const {
  std::vector<Index> r(col_order.size());
  for (std::size_t k = 0; k < col_order.size(); ++k) r[k] = rows[col_order[k]];
  return same_group(r);
}

Eigen::MatrixXd DenseDesign::permutation() const {
  const auto n = static_cast<Eigen::Index>(col_order.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < col_order.size(); ++k) p(static_cast<Eigen::Index>(col_order[k]), static_cast<Eigen::Index>(k)) = 1.0;
  return p;
}

DenseDesign materialize(const IndexedDataset& data) {
  const auto& prof = data.profile();
  if (prof.n > kMaxDenseN) {
    throw Error(ErrorCode::TooLarge, "dense oracle limited to N <= " + std::to_string(kMaxDenseN));
  }
  const auto w = static_cast<Eigen::Index>(data.width());
  std::vector<Index> rows;
  std::vector<Index> cols;
  std::vector<double> ys;
  std::vector<Eigen::VectorXd> xs;
  data.scan([&](const RecordBatch& b) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      rows.push_back(b.rows[k]);
      cols.push_back(b.cols[k]);
      ys.push_back(b.y[k]);
      xs.emplace_back(b.x.col(static_cast<Eigen::Index>(k)));
    }
  });
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t s, std::size_t t) {
    return std::pair(rows[s], cols[s]) < std::pair(rows[t], cols[t]);
  });

  DenseDesign d;
  d.r = prof.r;
  d.c = prof.c;
  const auto n = static_cast<Eigen::Index>(order.size());
  d.x.resize(n, w);
  d.y.resize(n);
  d.z = Eigen::MatrixXd::Zero(prof.r, prof.c);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t src = order[static_cast<std::size_t>(k)];
    d.rows.push_back(rows[src]);
    d.cols.push_back(cols[src]);
    d.x.row(k) = xs[src].transpose();
    d.y(k) = ys[src];
    d.z(rows[src], cols[src]) = 1.0;
  }
  d.col_order.resize(order.size());
  std::iota(d.col_order.begin(), d.col_order.end(), 0);
  std::sort(d.col_order.begin(), d.col_order.end(), [&](std::size_t s, std::size_t t) {
    return std::pair(d.cols[s], d.rows[s]) < std::pair(d.cols[t], d.rows[t]);
  });
  return d;
}

Eigen::MatrixXd dense_covariance(const DenseDesign& d, const VarianceComponents<double>& vc) {
  if (d.n() > kMaxDenseN) throw Error(ErrorCode::TooLarge, "dense covariance too large");
  const auto n = static_cast<Eigen::Index>(d.n());
  return vc.sigma2_e * Eigen::MatrixXd::Identity(n, n) + vc.sigma2_a * d.a_r() + vc.sigma2_b * d.b_r();
}

DenseGls dense_gls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& v) {
  const auto ldlt = factor_pd(v);
  const Eigen::MatrixXd vinv_x = ldlt.solve(x);
  const Eigen::MatrixXd info = x.transpose() * vinv_x;
  Eigen::LDLT<Eigen::MatrixXd> info_ldlt(info);
  if (info_ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularCovariance, "X' V^-1 X is singular");
  }
  DenseGls out;
  out.cov = info_ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  out.cov = (out.cov + out.cov.transpose()).eval() / 2.0;
  out.beta = out.cov * (vinv_x.transpose() * y);
  return out;
}

Eigen::MatrixXd dense_sandwich(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weight,
                               const Eigen::MatrixXd& v) {
  const auto ldlt = factor_pd(weight);
  const Eigen::MatrixXd winv_x = ldlt.solve(x);
  const Eigen::MatrixXd bread = (x.transpose() * winv_x).inverse();
  const Eigen::MatrixXd meat = winv_x.transpose() * v * winv_x;
  Eigen::MatrixXd out = bread * meat * bread;
  return (out + out.transpose()) / 2.0;
}

UStatistics<double> naive_u_statistics(const DenseDesign& d, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = d.y - d.x * beta;
  const auto n = eta.size();
  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(d.r), col_sum = Eigen::VectorXd::Zero(d.c);
  Eigen::VectorXd row_n = Eigen::VectorXd::Zero(d.r), col_n = Eigen::VectorXd::Zero(d.c);
  for (Eigen::Index k = 0; k < n; ++k) {
    row_sum(d.rows[k]) += eta(k);
    row_n(d.rows[k]) += 1;
    col_sum(d.cols[k]) += eta(k);
    col_n(d.cols[k]) += 1;
  }
  const Eigen::VectorXd row_mean = row_sum.cwiseQuotient(row_n);
  const Eigen::VectorXd col_mean = col_sum.cwiseQuotient(col_n);
  const double grand = eta.mean();
  UStatistics<double> u;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double dr = eta(k) - row_mean(d.rows[k]);
    const double dc = eta(k) - col_mean(d.cols[k]);
    const double dg = eta(k) - grand;
    u.u_a += dr * dr;
    u.u_b += dc * dc;
    u.u_e += dg * dg;
  }
  return u;
}

ExactEfficiency exact_efficiency(const Eigen::VectorXd& x, const VarianceComponents<double>& vc,
                                 const DenseDesign& d) {
  if (d.n() > 2000) throw Error(ErrorCode::TooLarge, "exact efficiency limited to N <= 2000");
  if (x.size() != d.n()) throw Error(ErrorCode::WidthMismatch, "predictor length differs from N");
  const auto n = static_cast<Eigen::Index>(d.n());
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);

  auto efficiency = [&](const Eigen::VectorXd& xv, const Eigen::MatrixXd& v_model,
                        const Eigen::MatrixXd& v_full) {
    const Eigen::VectorXd vm_x = factor_pd(v_model).solve(xv);
    const Eigen::VectorXd vf_x = factor_pd(v_full).solve(xv);
    const double num = xv.dot(vm_x);
    return num * num / (vm_x.dot(v_full * vm_x) * xv.dot(vf_x));
  };

  ExactEfficiency out;
  const Eigen::MatrixXd a_r = d.a_r();
  const Eigen::MatrixXd v_r = vc.sigma2_e * id + vc.sigma2_a * a_r + vc.sigma2_b * d.b_r();
  out.rls = efficiency(x, vc.sigma2_e * id + vc.sigma2_a * a_r, v_r);

  Eigen::VectorXd x_col(n);
  for (Eigen::Index k = 0; k < n; ++k) x_col(k) = x(static_cast<Eigen::Index>(d.col_order[k]));
  const Eigen::MatrixXd b_c = d.b_c();
  const Eigen::MatrixXd v_c = vc.sigma2_e * id + vc.sigma2_a * d.a_c() + vc.sigma2_b * b_c;
  out.cls = efficiency(x_col, vc.sigma2_e * id + vc.sigma2_b * b_c, v_c);
  return out;
}

}  // namespace crossed::oracle
