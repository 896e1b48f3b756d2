#include "crossed/simulator.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

namespace crossed {

std::string_view to_string(EffectDist d) noexcept {
  switch (d) {
    case EffectDist::Gaussian: return "gaussian";
    case EffectDist::Uniform: return "uniform";
    case EffectDist::Laplace: return "laplace";
    case EffectDist::ScaledT5: return "t5";
  }
  return "unknown";
}

EffectDist parse_effect_dist(std::string_view text) {
  if (text == "gaussian") return EffectDist::Gaussian;
  if (text == "uniform") return EffectDist::Uniform;
  if (text == "laplace") return EffectDist::Laplace;
  if (text == "t5" || text == "scaled-t5") return EffectDist::ScaledT5;
  throw Error(ErrorCode::InvalidArgument, "unknown effect distribution '" + std::string(text) + "'");
}

double draw_effect(EffectDist dist, double variance, SplitMix64& rng) {
  const double sd = std::sqrt(variance);
  switch (dist) {
    case EffectDist::Gaussian:
      return sd * std::normal_distribution<double>(0.0, 1.0)(rng);
    case EffectDist::Uniform:
      return sd * std::sqrt(3.0) * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    case EffectDist::Laplace: {
      const double mag = std::exponential_distribution<double>(1.0)(rng);
      const bool neg = (rng() >> 63) != 0;
      return (neg ? -mag : mag) * sd / std::sqrt(2.0);
    }
    case EffectDist::ScaledT5:
      return sd * std::sqrt(3.0 / 5.0) * std::student_t_distribution<double>(5.0)(rng);
  }
  return 0.0;
}

void SimConfig::validate() const {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidArgument, "rows and cols must be positive");
  if (const auto* fc = std::get_if<FillCount>(&fill)) {
    if (fc->cells < 1 || fc->cells > rows * cols) {
      throw Error(ErrorCode::InvalidArgument, "fill count must lie in [1, rows*cols]");
    }
  } else {
    const double q = std::get<FillProb>(fill).q;
    if (!(q > 0.0 && q <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fill probability must lie in (0, 1]");
  }
  if (beta.size() != covariates + 1) {
    throw Error(ErrorCode::WidthMismatch, "beta must have covariates + 1 entries");
  }
  if (vc_truth[0] < 0 || vc_truth[1] < 0 || vc_truth[2] < 0 ||
      !std::isfinite(vc_truth[0] + vc_truth[1] + vc_truth[2])) {
    throw Error(ErrorCode::InvalidArgument, "variance components must be finite and nonnegative");
  }
}

double SimConfig::expected_n() const {
  if (const auto* fc = std::get_if<FillCount>(&fill)) return static_cast<double>(fc->cells);
  return std::get<FillProb>(fill).q * static_cast<double>(rows) * static_cast<double>(cols);
}

SimConfig SimConfig::square_design(Count n, std::size_t covariates, std::uint64_t seed) {
  SimConfig cfg;
  const Count side = std::llround(2.0 * std::sqrt(static_cast<double>(n)));
  cfg.rows = cfg.cols = side;
  cfg.fill = FillCount{side * side / 4};
  cfg.covariates = covariates;
  cfg.beta.assign(covariates + 1, 1.0);
  cfg.vc_truth = {2.0, 0.5, 1.0};
  cfg.seed = seed;
  return cfg;
}

Pattern sample_pattern(const SimConfig& config, SplitMix64& rng) {
  const auto total = static_cast<std::uint64_t>(config.rows * config.cols);
  const auto cols = static_cast<std::uint64_t>(config.cols);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Pattern cells;
  if (const auto* fc = std::get_if<FillCount>(&config.fill)) {
    // Selection sampling: exact count, output in row-major order.
    auto needed = static_cast<std::uint64_t>(fc->cells);
    cells.reserve(needed);
    for (std::uint64_t t = 0; t < total && needed > 0; ++t) {
      if (static_cast<double>(total - t) * unif(rng) < static_cast<double>(needed)) {
        cells.emplace_back(static_cast<Index>(t / cols), static_cast<Index>(t % cols));
        --needed;
      }
    }
  } else {
    const double q = std::get<FillProb>(config.fill).q;
    for (std::uint64_t t = 0; t < total; ++t) {
      if (unif(rng) < q) cells.emplace_back(static_cast<Index>(t / cols), static_cast<Index>(t % cols));
    }
  }
  return cells;
}

Simulated simulate_crossed(const SimConfig& config, std::uint64_t replicate, const Pattern* fixed_pattern) {
  config.validate();
  SplitMix64 rng(config.seed, replicate);
  Pattern drawn;
  if (!fixed_pattern) drawn = sample_pattern(config, rng);
  const Pattern& cells = fixed_pattern ? *fixed_pattern : drawn;
  if (cells.empty()) throw Error(ErrorCode::EmptyDataset, "sampled pattern has no observed cells");

  TruthRecord truth;
  truth.beta = config.beta;
  truth.vc = config.vc_truth;
  truth.a.resize(config.rows);
  truth.b.resize(config.cols);
  for (Eigen::Index i = 0; i < truth.a.size(); ++i) truth.a(i) = draw_effect(config.dist[0], config.vc_truth[0], rng);
  for (Eigen::Index j = 0; j < truth.b.size(); ++j) truth.b(j) = draw_effect(config.dist[1], config.vc_truth[1], rng);

  const auto n = cells.size();
  const auto w = static_cast<Eigen::Index>(config.covariates + 1);
  const Eigen::Map<const Eigen::VectorXd> beta(config.beta.data(), w);
  std::vector<std::int64_t> row_map(static_cast<std::size_t>(config.rows), -1);
  std::vector<std::int64_t> col_map(static_cast<std::size_t>(config.cols), -1);
  std::vector<std::string> row_keys;
  std::vector<std::string> col_keys;
  std::vector<Index> rows(n);
  std::vector<Index> cols(n);
  std::vector<double> y(n);
  Eigen::MatrixXd x(w, static_cast<Eigen::Index>(n));
  std::normal_distribution<double> normal(0.0, 1.0);

  for (std::size_t k = 0; k < n; ++k) {
    const auto [i, j] = cells[k];
    if (row_map[i] < 0) {
      row_map[i] = static_cast<std::int64_t>(row_keys.size());
      row_keys.push_back("r" + std::to_string(i));
    }
    if (col_map[j] < 0) {
      col_map[j] = static_cast<std::int64_t>(col_keys.size());
      col_keys.push_back("c" + std::to_string(j));
    }
    rows[k] = static_cast<Index>(row_map[i]);
    cols[k] = static_cast<Index>(col_map[j]);
    const auto kk = static_cast<Eigen::Index>(k);
    x(0, kk) = 1.0;
    for (Eigen::Index t = 1; t < w; ++t) x(t, kk) = normal(rng);
    const double e = draw_effect(config.dist[2], config.vc_truth[2], rng);
    y[k] = x.col(kk).dot(beta) + truth.a(i) + truth.b(j) + e;
  }
  return {dataset_from_indexed(std::move(rows), std::move(cols), std::move(x), std::move(y),
                               std::move(row_keys), std::move(col_keys)),
          std::move(truth)};
}

namespace {

constexpr double kZ975 = 1.959963984540054;

ReplicateRecord summarize(const FitResult<double>& fit, const DatasetProfile& prof, double secs) {
  ReplicateRecord rec;
  rec.ok = true;
  rec.n = prof.n;
  rec.max_row = prof.max_row;
  rec.max_col = prof.max_col;
  rec.beta = fit.beta;
  rec.se_beta = fit.se_beta;
  rec.ols_naive_se = fit.ols_naive_se;
  rec.ols_sandwich_se = fit.ols_sandwich_se;
  rec.vc_step2 = fit.vc_step2;
  rec.vc = fit.vc;
  rec.mode = fit.mode;
  rec.degraded = fit.degraded;
  rec.secs = secs;
  return rec;
}

}  // namespace

StudyResult mc_study(const std::vector<SimConfig>& grid, const StudyOptions& opts) {
  if (opts.replicates < 2) throw Error(ErrorCode::InvalidArgument, "a study needs at least 2 replicates");
  StudyResult result;
  for (const SimConfig& cfg : grid) {
    cfg.validate();
    std::optional<Pattern> pattern;
    if (opts.fix_pattern) {
      SplitMix64 prng(cfg.seed, std::uint64_t{1} << 23);
      pattern = sample_pattern(cfg, prng);
    }
    const std::size_t w = cfg.covariates + 1;
    const std::size_t params = w + 3;
    std::vector<double> sum(params, 0.0), sum_sq_err(params, 0.0);
    std::vector<std::size_t> covered(w, 0);
    std::size_t ok = 0;
    double secs = 0.0;
    std::vector<ReplicateRecord> kept;

    for (std::size_t rep = 0; rep < opts.replicates; ++rep) {
      ReplicateRecord rec;
      try {
        Simulated sim = simulate_crossed(cfg, rep, pattern ? &*pattern : nullptr);
        const auto t0 = std::chrono::steady_clock::now();
        FitResult<double> f = fit<double>(sim.data, opts.fit);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec = summarize(f, sim.data.profile(), dt);
      } catch (const Error& err) {
        rec.error = err.what();
        ++result.failures;
      }
      if (rec.ok) {
        ++ok;
        secs += rec.secs;
        const std::array<double, 3> raw{rec.vc.sigma2_a_raw, rec.vc.sigma2_b_raw, rec.vc.sigma2_e_raw};
        for (std::size_t t = 0; t < params; ++t) {
          const double est = t < w ? rec.beta(static_cast<Eigen::Index>(t)) : raw[t - w];
          const double truth = t < w ? cfg.beta[t] : cfg.vc_truth[t - w];
          sum[t] += est;
          sum_sq_err[t] += (est - truth) * (est - truth);
          if (t < w && std::abs(est - truth) <= kZ975 * rec.se_beta(static_cast<Eigen::Index>(t))) {
            ++covered[t];
          }
        }
      }
      if (opts.keep_replicates) kept.push_back(std::move(rec));
    }

    static const std::array<const char*, 3> vc_names{"sigma2_a", "sigma2_b", "sigma2_e"};
    for (std::size_t t = 0; t < params; ++t) {
      StudyRow row;
      row.n = cfg.expected_n();
      row.r = cfg.rows;
      row.c = cfg.cols;
      row.param = t < w ? "beta" + std::to_string(t) : vc_names[t - w];
      row.truth = t < w ? cfg.beta[t] : cfg.vc_truth[t - w];
      row.replicates_ok = ok;
      if (ok > 0) {
        row.mean_est = sum[t] / static_cast<double>(ok);
        row.mse = sum_sq_err[t] / static_cast<double>(ok);
        if (t < w) row.coverage = static_cast<double>(covered[t]) / static_cast<double>(ok);
        row.secs = secs / static_cast<double>(ok);
      } else {
        row.mean_est = row.mse = std::numeric_limits<double>::quiet_NaN();
      }
      result.rows.push_back(std::move(row));
    }
    if (opts.keep_replicates) result.replicates.push_back(std::move(kept));
  }
  return result;
}

void write_study_csv(std::ostream& out, const StudyResult& result) {
  out << "N,R,C,param,truth,mean_est,mse,coverage,secs\n";
  const auto old_prec = out.precision(10);
  for (const StudyRow& r : result.rows) {
    out << r.n << ',' << r.r << ',' << r.c << ',' << r.param << ',' << r.truth << ',' << r.mean_est << ','
        << r.mse << ',';
    if (!std::isnan(r.coverage)) out << r.coverage;
    out << ',' << r.secs << '\n';
  }
  out.precision(old_prec);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "slope needs at least two points");
  }
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd resp(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    design(k, 0) = 1.0;
    design(k, 1) = std::log(x[static_cast<std::size_t>(k)]);
    resp(k) = std::log(y[static_cast<std::size_t>(k)]);
  }
  return design.colPivHouseholderQr().solve(resp)(1);
}

std::map<std::string, double> study_slopes(const StudyResult& result) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const StudyRow& r : result.rows) {
    if (std::isnan(r.mse) || r.mse <= 0) continue;
    series[r.param].first.push_back(r.n);
    series[r.param].second.push_back(r.mse);
  }
  std::map<std::string, double> out;
  for (const auto& [param, xy] : series) {
    if (xy.first.size() >= 2) out[param] = loglog_slope(xy.first, xy.second);
  }
  return out;
}

std::vector<BenchRow> bench_fit(const std::vector<Count>& sizes, std::size_t covariates, std::uint64_t seed,
                                std::size_t repeats, const FitOptions& fit_opts) {
  std::vector<BenchRow> rows;
  for (Count n : sizes) {
    const Simulated sim = simulate_crossed(SimConfig::square_design(n, covariates, seed));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t rep = 0; rep < std::max<std::size_t>(repeats, 1); ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const FitResult<double> f = fit<double>(sim.data, fit_opts);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    rows.push_back({sim.data.profile().n, best});
  }
  return rows;
}

}  // namespace crossed
