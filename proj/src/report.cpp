#include "crossed/report.hpp"

namespace crossed {

namespace {

nlohmann::json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
  return out;
}

}  // namespace

nlohmann::json to_json(const VarianceComponents<double>& vc) {
  return {{"a", vc.sigma2_a},         {"b", vc.sigma2_b},         {"e", vc.sigma2_e},
          {"raw_a", vc.sigma2_a_raw}, {"raw_b", vc.sigma2_b_raw}, {"raw_e", vc.sigma2_e_raw},
          {"clamped", {vc.clamped[0], vc.clamped[1], vc.clamped[2]}}};
}

nlohmann::json to_json(const ProfileSummary& p) {
  return {{"N", p.n},
          {"R", p.r},
          {"C", p.c},
          {"max_row", p.max_row},
          {"max_col", p.max_col},
          {"sum_sq_row", p.sum_sq_row},
          {"sum_sq_col", p.sum_sq_col},
          {"eps_r", p.eps_r},
          {"eps_c", p.eps_c}};
}

nlohmann::json to_json(const Diagnostics& d) {
  return {{"upsilon_hat", d.upsilon_hat},
          {"eps_r", d.eps_r},
          {"eps_c", d.eps_c},
          {"eff_columns_stat", d.eff_columns_stat},
          {"c_j_concentration", d.c_j_concentration},
          {"c_ij_concentration", d.c_ij_concentration},
          {"info_rowmeans_min_eig", d.info_rowmeans_min_eig},
          {"info_centered_min_eig", d.info_centered_min_eig},
          {"info_colshrunk_min_eig", d.info_colshrunk_min_eig},
          {"eff_rls_lb", d.eff_rls_lb},
          {"eff_cls_lb", d.eff_cls_lb},
          {"k", d.k},
          {"k_intercept_used", false},
          {"plug_in", "computed with the estimated (clamped) variance components"}};
}

nlohmann::json to_json(const FitResult<double>& fit) {
  nlohmann::json j;
  j["beta"] = vec(fit.beta);
  j["se"] = vec(fit.se_beta);
  j["cov_beta"] = mat(fit.cov_beta);
  j["ols_beta"] = vec(fit.ols_beta);
  j["ols_naive_se"] = vec(fit.ols_naive_se);
  j["ols_sandwich_se"] = vec(fit.ols_sandwich_se);
  j["sigma2"] = to_json(fit.vc);
  j["steps"] = {{"vc_step2", to_json(fit.vc_step2)}, {"vc_step4", to_json(fit.vc)}};
  j["mode"] = std::string(to_string(fit.mode));
  j["upsilon_hat"] = fit.upsilon_hat;
  j["efficiency_lower_bounds"] = {{"rls", fit.efficiency.rls}, {"cls", fit.efficiency.cls}};
  j["diagnostics"] = fit.diagnostics ? to_json(*fit.diagnostics) : nlohmann::json(nullptr);
  if (fit.comparison) {
    j["comparison"] = {{"coefficient", fit.comparison->coefficient},
                       {"se_row", fit.comparison->se_row},
                       {"se_col", fit.comparison->se_col}};
  }
  j["profile"] = to_json(fit.profile);
  j["degenerate_design"] = fit.flags.any();
  j["degraded"] = fit.degraded;
  j["warnings"] = fit.warnings;
  j["timings"] = fit.timings;
  j["passes"] = fit.passes;
  return j;
}

}  // namespace crossed
