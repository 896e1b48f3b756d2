#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace crossed {

using Index = std::uint32_t;
using Count = std::int64_t;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Which grouping factor a computation is organised around. Row corresponds
// to the row-weighted GLS (intra-row correlation), Col to its mirror.
enum class Side { Row, Col };

constexpr Side other(Side s) noexcept { return s == Side::Row ? Side::Col : Side::Row; }

}  // namespace crossed
