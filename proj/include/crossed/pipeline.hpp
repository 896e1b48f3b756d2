#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

#include "crossed/inference.hpp"
#include "crossed/moments.hpp"

namespace crossed {

enum class FitMode { Auto, Row, Col, BothCompare };

std::string_view to_string(FitMode mode) noexcept;
FitMode parse_fit_mode(std::string_view text);

struct FitOptions {
  FitMode mode = FitMode::Auto;
  DedupPolicy dedup_policy = DedupPolicy::AssumeUnique;
  bool emit_diagnostics = false;
  bool deterministic_reduction = false;
  std::size_t shards = 1;
  // Coefficient whose standard error decides BothCompare; defaults to the
  // first non-intercept coefficient (or the intercept when there is none).
  std::optional<std::size_t> compare_coefficient;

  ScanOptions scan() const { return {std::max<std::size_t>(shards, 1), deterministic_reduction}; }
};

struct ProfileSummary {
  Count n = 0, r = 0, c = 0;
  Count max_row = 0, max_col = 0;
  Count sum_sq_row = 0, sum_sq_col = 0;
  double eps_r = 0, eps_c = 0;

  static ProfileSummary of(const DatasetProfile& p) {
    return {p.n, p.r, p.c, p.max_row, p.max_col, p.sum_sq_row, p.sum_sq_col, p.eps_r(), p.eps_c()};
  }
};

struct ModeComparison {
  std::size_t coefficient = 0;
  double se_row = 0;
  double se_col = 0;
};

template <typename Scalar = double>
struct FitResult {
  Vector<Scalar> beta;
  Matrix<Scalar> cov_beta;
  Vector<Scalar> se_beta;
  VarianceComponents<Scalar> vc;        // step 4, used for cov_beta
  VarianceComponents<Scalar> vc_step2;  // from OLS residuals, used for mode selection
  GlsMode mode = GlsMode::RowGLS;

  Vector<Scalar> ols_beta;
  Matrix<Scalar> ols_cov_naive;
  Vector<Scalar> ols_naive_se;
  Matrix<Scalar> ols_cov_sandwich;
  Vector<Scalar> ols_sandwich_se;

  double upsilon_hat = 0;
  EfficiencyBounds efficiency;
  std::optional<Diagnostics> diagnostics;
  std::optional<ModeComparison> comparison;

  ProfileSummary profile;
  DesignFlags flags;
  bool degraded = false;  // moment system singular after step 2; OLS output only
  std::vector<std::string> warnings;
  std::map<std::string, double> timings;  // seconds per step
  int passes = 0;
};

namespace detail {

class StepTimer {
 public:
  explicit StepTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  void mark(const std::string& step) {
    const auto now = std::chrono::steady_clock::now();
    sink_[step] += std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }

 private:
  std::map<std::string, double>& sink_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

template <typename Scalar>
Vector<Scalar> standard_errors(const Matrix<Scalar>& cov) {
  using std::sqrt;
  return cov.diagonal().cwiseMax(Scalar(0)).cwiseSqrt();
}

}  // namespace detail

// The alternating fit: OLS, moment components on OLS residuals, single-factor
// GLS chosen by the efficiency-bound rule, moment components on GLS
// residuals, and the GLS covariance under the two-factor model.
template <typename Scalar = double>
FitResult<Scalar> fit(const IndexedDataset& data, const FitOptions& opts = {}) {
  const ScanOptions so = opts.scan();
  const DatasetProfile& prof = data.profile();
  const auto w = static_cast<Eigen::Index>(data.width());

  FitResult<Scalar> res;
  res.profile = ProfileSummary::of(prof);
  res.flags = design_flags(prof);
  for (const auto& m : res.flags.messages()) res.warnings.push_back("degenerate design: " + m);
  detail::StepTimer timer(res.timings);

  // Step 1
  const OlsFit<Scalar> ols = ols_fit<Scalar>(data, so);
  res.ols_beta = ols.beta;
  ++res.passes;
  timer.mark("ols");

  // Step 2
  const MomentMatrix mm = build_moment_matrix(prof);
  const UStatistics<Scalar> u2 = compute_u_statistics<Scalar>(data, ols.beta, so);
  ++res.passes;
  const Scalar dof = static_cast<Scalar>(std::max<Count>(prof.n - static_cast<Count>(w), 1));
  res.ols_cov_naive = (u2.u_e / dof) * inverse_spd<Scalar>(ols.xtx);
  res.ols_naive_se = detail::standard_errors<Scalar>(res.ols_cov_naive);

  std::optional<VarianceComponents<Scalar>> vc2;
  try {
    vc2 = unbiased_variance_components(mm, u2);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::SingularMomentSystem) throw;
  }
  timer.mark("moments_step2");

  if (!vc2) {
    // Only an error variance is identifiable; report OLS with the classical
    // covariance, which is what the sandwich reduces to without random effects.
    const Scalar e = std::max(u2.u_e / static_cast<Scalar>(std::max<Count>(prof.n - 1, 1)),
                              error_floor(u2.u_e, prof.n));
    res.vc = res.vc_step2 = VarianceComponents<Scalar>::fixed(0, 0, e);
    res.degraded = true;
    res.warnings.push_back("moment system is singular; returning OLS with sandwich covariance");
    res.beta = ols.beta;
    res.ols_cov_sandwich = var_beta_ols_sandwich<Scalar>(data, res.vc, ols.xtx, so);
    ++res.passes;
    res.ols_sandwich_se = detail::standard_errors<Scalar>(res.ols_cov_sandwich);
    res.cov_beta = res.ols_cov_sandwich;
    res.se_beta = res.ols_sandwich_se;
    res.upsilon_hat = upsilon_diagnostic(res.vc, prof);
    res.efficiency = efficiency_lower_bounds(res.vc, prof);
    timer.mark("inference");
    return res;
  }
  res.vc_step2 = *vc2;

  // Steps 3 to 5 for one side.
  struct Branch {
    GlsFit<Scalar> gls;
    VarianceComponents<Scalar> vc4;
    Matrix<Scalar> cov;
  };
  auto run_branch = [&](GlsMode mode) {
    Branch br{gls_fit<Scalar>(data, side_of(mode), *vc2, so), {}, {}};
    ++res.passes;
    timer.mark("gls");
    const UStatistics<Scalar> u4 = compute_u_statistics<Scalar>(data, br.gls.beta, so);
    ++res.passes;
    try {
      br.vc4 = unbiased_variance_components(mm, u4);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::SingularMomentSystem) throw;
      br.vc4 = *vc2;
      res.warnings.push_back("moment system singular on GLS residuals; reusing step-2 components");
    }
    timer.mark("moments_step4");
    br.cov = var_beta_gls<Scalar>(data, br.vc4, br.gls.neq, so);
    ++res.passes;
    timer.mark("inference");
    return br;
  };

  std::optional<Branch> chosen;
  switch (opts.mode) {
    case FitMode::Auto:
      res.mode = select_gls_mode(*vc2, prof);
      chosen = run_branch(res.mode);
      break;
    case FitMode::Row:
      res.mode = GlsMode::RowGLS;
      chosen = run_branch(res.mode);
      break;
    case FitMode::Col:
      res.mode = GlsMode::ColumnGLS;
      chosen = run_branch(res.mode);
      break;
    case FitMode::BothCompare: {
      const std::size_t coef = opts.compare_coefficient.value_or(w > 1 ? 1 : 0);
      if (coef >= static_cast<std::size_t>(w)) {
        throw Error(ErrorCode::InvalidArgument, "comparison coefficient index out of range");
      }
      Branch row = run_branch(GlsMode::RowGLS);
      Branch col = run_branch(GlsMode::ColumnGLS);
      const auto k = static_cast<Eigen::Index>(coef);
      ModeComparison cmp{coef, static_cast<double>(row.cov(k, k)), static_cast<double>(col.cov(k, k))};
      using std::sqrt;
      cmp.se_row = std::sqrt(std::max(cmp.se_row, 0.0));
      cmp.se_col = std::sqrt(std::max(cmp.se_col, 0.0));
      res.comparison = cmp;
      res.mode = cmp.se_row <= cmp.se_col ? GlsMode::RowGLS : GlsMode::ColumnGLS;
      chosen = std::move(res.mode == GlsMode::RowGLS ? row : col);
      break;
    }
  }
  res.beta = chosen->gls.beta;
  res.vc = chosen->vc4;
  res.cov_beta = chosen->cov;
  res.se_beta = detail::standard_errors<Scalar>(res.cov_beta);

  res.ols_cov_sandwich = var_beta_ols_sandwich<Scalar>(data, res.vc, ols.xtx, so);
  ++res.passes;
  res.ols_sandwich_se = detail::standard_errors<Scalar>(res.ols_cov_sandwich);
  res.upsilon_hat = upsilon_diagnostic(res.vc, prof);
  res.efficiency = efficiency_lower_bounds(res.vc, prof);
  timer.mark("ols_sandwich");

  if (opts.emit_diagnostics) {
    res.diagnostics = clt_diagnostics<Scalar>(data, res.vc, so);
    res.passes += 2;
    timer.mark("diagnostics");
  }
  return res;
}

}  // namespace crossed
