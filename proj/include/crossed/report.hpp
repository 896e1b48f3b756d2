#pragma once

#include <iosfwd>

#include <json.hpp>

#include "crossed/pipeline.hpp"

namespace crossed {

// Frozen field names: beta, se, sigma2{a,b,e,raw_a,raw_b,raw_e}, mode,
// diagnostics, profile, steps{vc_step2, vc_step4}, plus the OLS columns.
nlohmann::json to_json(const FitResult<double>& fit);
nlohmann::json to_json(const VarianceComponents<double>& vc);
nlohmann::json to_json(const Diagnostics& d);
nlohmann::json to_json(const ProfileSummary& p);

}  // namespace crossed
