#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <random>
#include <variant>

#include "crossed/pipeline.hpp"

namespace crossed {

// SplitMix64 as a counter-based generator: output k of a stream is a fixed
// mix of (origin + k * gamma), so streams can be positioned in O(1).
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  SplitMix64(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(seed) + (stream << 40) * kGamma) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += kGamma;
    return mix(state_);
  }

  void discard(std::uint64_t k) { state_ += k * kGamma; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

enum class EffectDist { Gaussian, Uniform, Laplace, ScaledT5 };

std::string_view to_string(EffectDist d) noexcept;
EffectDist parse_effect_dist(std::string_view text);

// Zero-mean draw with the requested variance.
double draw_effect(EffectDist dist, double variance, SplitMix64& rng);

struct FillCount {
  Count cells = 0;
};
struct FillProb {
  double q = 0.25;
};

struct SimConfig {
  Count rows = 40;
  Count cols = 40;
  std::variant<FillCount, FillProb> fill = FillCount{400};
  std::size_t covariates = 0;
  std::vector<double> beta{1.0};  // length covariates + 1, intercept first
  std::array<double, 3> vc_truth{2.0, 0.5, 1.0};
  std::array<EffectDist, 3> dist{EffectDist::Gaussian, EffectDist::Gaussian, EffectDist::Gaussian};
  std::uint64_t seed = 1;

  void validate() const;
  // Expected number of observations.
  double expected_n() const;

  // R = C = 2 sqrt(N), exactly RC/4 observed cells, all coefficients 1,
  // components (2, 0.5, 1), Gaussian effects.
  static SimConfig square_design(Count n, std::size_t covariates, std::uint64_t seed = 1);
};

// Realised random effects for every configured row and column.
struct TruthRecord {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  std::vector<double> beta;
  std::array<double, 3> vc{};
};

// Observed cells as (row, column) pairs of configured indices, row-major.
using Pattern = std::vector<std::pair<Index, Index>>;

Pattern sample_pattern(const SimConfig& config, SplitMix64& rng);

struct Simulated {
  IndexedDataset data;
  TruthRecord truth;
};

// Replicate r draws from stream r of the configured seed; the pattern is
// drawn first unless supplied.
Simulated simulate_crossed(const SimConfig& config, std::uint64_t replicate = 0,
                           const Pattern* fixed_pattern = nullptr);

struct StudyOptions {
  std::size_t replicates = 100;
  FitOptions fit;
  bool fix_pattern = false;
  bool keep_replicates = false;
};

// Summary of one replicate's fit.
struct ReplicateRecord {
  bool ok = false;
  std::string error;
  Count n = 0, max_row = 0, max_col = 0;
  Eigen::VectorXd beta, se_beta, ols_naive_se, ols_sandwich_se;
  VarianceComponents<double> vc_step2, vc;
  GlsMode mode = GlsMode::RowGLS;
  bool degraded = false;
  double secs = 0;
};

struct StudyRow {
  double n = 0;
  Count r = 0, c = 0;
  std::string param;
  double truth = 0;
  double mean_est = 0;
  double mse = 0;
  double coverage = std::numeric_limits<double>::quiet_NaN();  // beta only
  double secs = 0;
  std::size_t replicates_ok = 0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<std::vector<ReplicateRecord>> replicates;  // per grid cell, when kept
  std::size_t failures = 0;
};

// Variance-component summaries use the raw step-4 estimates.
StudyResult mc_study(const std::vector<SimConfig>& grid, const StudyOptions& opts);

void write_study_csv(std::ostream& out, const StudyResult& result);

// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Slope per parameter across the grid cells of a study.
std::map<std::string, double> study_slopes(const StudyResult& result);

struct BenchRow {
  Count n = 0;
  double secs = 0;
};

// Fits the square design at each size, timing the fit only (best of
// `repeats`); identical seeds give identical estimates.
std::vector<BenchRow> bench_fit(const std::vector<Count>& sizes, std::size_t covariates,
                                std::uint64_t seed, std::size_t repeats, const FitOptions& fit_opts);

}  // namespace crossed
