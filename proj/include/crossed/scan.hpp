#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "crossed/ingest.hpp"

namespace crossed {

struct ScanOptions {
  std::size_t shards = 1;
  // Partition into a fixed number of logical blocks merged in block order, so
  // results are bit-identical for every shard count.
  bool deterministic = false;
};

inline constexpr std::size_t kLogicalBlocks = 16;

// Runs `visit(acc, batch)` over every record, one accumulator per block, and
// merges the block accumulators in block order with `acc.merge(other)`.
template <typename Make, typename Visit>
auto reduce_scan(const IndexedDataset& data, const ScanOptions& opts, Make make, Visit visit) {
  using Acc = decltype(make());
  const std::size_t shards = std::max<std::size_t>(opts.shards, 1);
  const std::size_t blocks = opts.deterministic ? kLogicalBlocks : shards;
  const std::size_t threads = std::min(shards, blocks);

  auto run_block = [&](std::size_t b, Acc& acc) {
    data.scan(b, blocks, [&](const RecordBatch& batch) { visit(acc, batch); });
  };

  if (threads == 1) {
    Acc total = make();
    run_block(0, total);
    for (std::size_t b = 1; b < blocks; ++b) {
      Acc part = make();
      run_block(b, part);
      total.merge(part);
    }
    return total;
  }

  std::vector<std::optional<Acc>> parts(blocks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < blocks; b = next++) {
          try {
            Acc acc = make();
            run_block(b, acc);
            parts[b].emplace(std::move(acc));
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  Acc total = std::move(*parts[0]);
  for (std::size_t b = 1; b < blocks; ++b) total.merge(*parts[b]);
  return total;
}

// Error-free-transformation summation (TwoSum) applied elementwise to an
// Eigen object; value() = sum + compensation.
template <typename Dense>
class CompensatedSum {
 public:
  CompensatedSum() = default;
  CompensatedSum(Eigen::Index rows, Eigen::Index cols)
      : sum_(Dense::Zero(rows, cols)), comp_(Dense::Zero(rows, cols)) {}

  template <typename Expr>
  void add(const Eigen::MatrixBase<Expr>& term) {
    // Named temporaries keep the evaluation order fixed.
    Dense t = sum_ + term;
    Dense bp = t - sum_;
    comp_.array() += (sum_ - (t - bp)).array() + (term - bp).array();
    sum_ = std::move(t);
  }

  void merge(const CompensatedSum& other) {
    add(other.sum_);
    comp_ += other.comp_;
  }

  Dense value() const { return sum_ + comp_; }

 private:
  Dense sum_;
  Dense comp_;
};

// Per-group running (count, mean, sum of squared deviations), mergeable with
// the pairwise update of Chan, Golub and LeVeque.
template <typename Scalar>
class GroupMoments {
 public:
  GroupMoments() = default;
  explicit GroupMoments(std::size_t groups) : n_(groups, 0), mean_(groups, 0), m2_(groups, 0) {}

  void add(std::size_t g, Scalar v) {
    const Count n = ++n_[g];
    const Scalar delta = v - mean_[g];
    mean_[g] += delta / static_cast<Scalar>(n);
    m2_[g] += delta * (v - mean_[g]);
  }

  void merge(const GroupMoments& other) {
    for (std::size_t g = 0; g < n_.size(); ++g) {
      const Count nb = other.n_[g];
      if (nb == 0) continue;
      const Count na = n_[g];
      if (na == 0) {
        n_[g] = nb;
        mean_[g] = other.mean_[g];
        m2_[g] = other.m2_[g];
        continue;
      }
      const Count n = na + nb;
      const Scalar delta = other.mean_[g] - mean_[g];
      mean_[g] += delta * static_cast<Scalar>(nb) / static_cast<Scalar>(n);
      m2_[g] += other.m2_[g] + delta * delta * static_cast<Scalar>(na) * static_cast<Scalar>(nb) /
                                   static_cast<Scalar>(n);
      n_[g] = n;
    }
  }

  std::size_t size() const { return n_.size(); }
  Count count(std::size_t g) const { return n_[g]; }
  Scalar mean(std::size_t g) const { return mean_[g]; }
  Scalar m2(std::size_t g) const { return m2_[g]; }

  // Sum over groups of within-group squared deviations.
  Scalar within_ss() const {
    Scalar s = 0;
    Scalar c = 0;
    for (Scalar v : m2_) {  // Kahan; R or C terms
      const Scalar y = v - c;
      const Scalar t = s + y;
      c = (t - s) - y;
      s = t;
    }
    return s;
  }

 private:
  std::vector<Count> n_;
  std::vector<Scalar> mean_;
  std::vector<Scalar> m2_;
};

}  // namespace crossed
