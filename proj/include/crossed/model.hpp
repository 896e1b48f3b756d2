#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "crossed/error.hpp"
#include "crossed/types.hpp"

namespace crossed {

// One streamed record. `x` carries the intercept in position 0.
struct Observation {
  std::string row_key;
  std::string col_key;
  std::vector<double> x;
  double y = 0.0;
};

// Throws Error{NonFinite | WidthMismatch | MissingIntercept}.
void validate_observation(const Observation& obs, std::size_t width);
void validate_observation(std::span<const double> x, double y, std::size_t width,
                          std::uint64_t line = 0);

// Counts of the observation pattern. Integer fields are exact; ratios are
// computed on demand.
struct DatasetProfile {
  Count n = 0;
  Count r = 0;
  Count c = 0;
  std::vector<Count> row_counts;
  std::vector<Count> col_counts;
  Count max_row = 0;
  Count max_col = 0;
  Count sum_sq_row = 0;
  Count sum_sq_col = 0;

  double eps_r() const { return static_cast<double>(max_row) / static_cast<double>(n); }
  double eps_c() const { return static_cast<double>(max_col) / static_cast<double>(n); }

  const std::vector<Count>& counts(Side s) const { return s == Side::Row ? row_counts : col_counts; }
  Count groups(Side s) const { return s == Side::Row ? r : c; }
  Count max_count(Side s) const { return s == Side::Row ? max_row : max_col; }
  Count sum_sq(Side s) const { return s == Side::Row ? sum_sq_row : sum_sq_col; }

  DatasetProfile transposed() const;
};

// Throws EmptyDataset when either map is empty or N = 0, InvalidArgument on
// a zero count or when the two margins disagree.
DatasetProfile build_profile(std::vector<Count> row_counts, std::vector<Count> col_counts);

// Conditions under which the moment system may be singular.
struct DesignFlags {
  bool few_rows = false;       // R < 2
  bool few_cols = false;       // C < 2
  bool dominant_row = false;   // eps_r > 1/2
  bool dominant_col = false;   // eps_c > 1/2

  bool any() const { return few_rows || few_cols || dominant_row || dominant_col; }
  std::vector<std::string> messages() const;
};

DesignFlags design_flags(const DatasetProfile& profile);

// Variance components (sigma2_A, sigma2_B, sigma2_E). The raw values are the
// moment solutions; the unsuffixed values are clamped to the feasible region.
template <typename Scalar = double>
struct VarianceComponents {
  Scalar sigma2_a_raw = 0;
  Scalar sigma2_b_raw = 0;
  Scalar sigma2_e_raw = 0;
  Scalar sigma2_a = 0;
  Scalar sigma2_b = 0;
  Scalar sigma2_e = 1;
  std::array<bool, 3> clamped{false, false, false};

  // Components supplied directly (no clamping).
  static VarianceComponents fixed(Scalar a, Scalar b, Scalar e) {
    VarianceComponents vc;
    vc.sigma2_a_raw = vc.sigma2_a = a;
    vc.sigma2_b_raw = vc.sigma2_b = b;
    vc.sigma2_e_raw = vc.sigma2_e = e;
    return vc;
  }

  Scalar group(Side s) const { return s == Side::Row ? sigma2_a : sigma2_b; }

  VarianceComponents swapped() const {
    VarianceComponents vc = *this;
    std::swap(vc.sigma2_a_raw, vc.sigma2_b_raw);
    std::swap(vc.sigma2_a, vc.sigma2_b);
    std::swap(vc.clamped[0], vc.clamped[1]);
    return vc;
  }

  template <typename Other>
  VarianceComponents<Other> cast() const {
    VarianceComponents<Other> vc;
    vc.sigma2_a_raw = static_cast<Other>(sigma2_a_raw);
    vc.sigma2_b_raw = static_cast<Other>(sigma2_b_raw);
    vc.sigma2_e_raw = static_cast<Other>(sigma2_e_raw);
    vc.sigma2_a = static_cast<Other>(sigma2_a);
    vc.sigma2_b = static_cast<Other>(sigma2_b);
    vc.sigma2_e = static_cast<Other>(sigma2_e);
    vc.clamped = clamped;
    return vc;
  }

  bool operator==(const VarianceComponents&) const = default;
};

}  // namespace crossed
