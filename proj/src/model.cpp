#include "crossed/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crossed {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::MissingIntercept: return "MissingIntercept";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::SingularMomentSystem: return "SingularMomentSystem";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

std::string at_line(std::uint64_t line) {
  return line ? " (line " + std::to_string(line) + ")" : std::string{};
}

}  // namespace

void validate_observation(std::span<const double> x, double y, std::size_t width,
                          std::uint64_t line) {
  if (x.size() != width) {
    throw Error(ErrorCode::WidthMismatch,
                "record has " + std::to_string(x.size()) + " covariates including intercept, expected " +
                    std::to_string(width) + at_line(line),
                line);
  }
  if (!std::isfinite(y) || !std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::NonFinite, "non-finite value in record" + at_line(line), line);
  }
  if (x.empty() || x[0] != 1.0) {
    throw Error(ErrorCode::MissingIntercept, "first covariate must be the intercept 1" + at_line(line),
                line);
  }
}

void validate_observation(const Observation& obs, std::size_t width) {
  validate_observation(obs.x, obs.y, width);
}

DatasetProfile DatasetProfile::transposed() const {
  DatasetProfile t = *this;
  std::swap(t.r, t.c);
  std::swap(t.row_counts, t.col_counts);
  std::swap(t.max_row, t.max_col);
  std::swap(t.sum_sq_row, t.sum_sq_col);
  return t;
}

DatasetProfile build_profile(std::vector<Count> row_counts, std::vector<Count> col_counts) {
  if (row_counts.empty() || col_counts.empty()) {
    throw Error(ErrorCode::EmptyDataset, "dataset has no observations");
  }
  auto tally = [](const std::vector<Count>& counts, Count& total, Count& max, Count& sum_sq) {
    total = max = sum_sq = 0;
    for (Count k : counts) {
      if (k < 1) throw Error(ErrorCode::InvalidArgument, "group counts must be positive");
      total += k;
      max = std::max(max, k);
      sum_sq += k * k;
    }
  };
  DatasetProfile p;
  Count n_rows = 0;
  Count n_cols = 0;
  tally(row_counts, n_rows, p.max_row, p.sum_sq_row);
  tally(col_counts, n_cols, p.max_col, p.sum_sq_col);
  if (n_rows != n_cols) {
    throw Error(ErrorCode::InvalidArgument, "row and column counts disagree on N");
  }
  p.n = n_rows;
  p.r = static_cast<Count>(row_counts.size());
  p.c = static_cast<Count>(col_counts.size());
  p.row_counts = std::move(row_counts);
  p.col_counts = std::move(col_counts);
  return p;
}

DesignFlags design_flags(const DatasetProfile& profile) {
  DesignFlags f;
  f.few_rows = profile.r < 2;
  f.few_cols = profile.c < 2;
  f.dominant_row = 2 * profile.max_row > profile.n;
  f.dominant_col = 2 * profile.max_col > profile.n;
  return f;
}

std::vector<std::string> DesignFlags::messages() const {
  std::vector<std::string> out;
  if (few_rows) out.emplace_back("fewer than two distinct rows");
  if (few_cols) out.emplace_back("fewer than two distinct columns");
  if (dominant_row) out.emplace_back("a single row holds more than half of the observations");
  if (dominant_col) out.emplace_back("a single column holds more than half of the observations");
  return out;
}

}  // namespace crossed
