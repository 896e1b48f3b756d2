#include "crossed/pipeline.hpp"

namespace crossed {

std::string_view to_string(FitMode mode) noexcept {
  switch (mode) {
    case FitMode::Auto: return "auto";
    case FitMode::Row: return "row";
    case FitMode::Col: return "col";
    case FitMode::BothCompare: return "both-compare";
  }
  return "unknown";
}

FitMode parse_fit_mode(std::string_view text) {
  if (text == "auto") return FitMode::Auto;
  if (text == "row") return FitMode::Row;
  if (text == "col") return FitMode::Col;
  if (text == "both-compare") return FitMode::BothCompare;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + std::string(text) + "'");
}

}  // namespace crossed
