#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crossed/model.hpp"

namespace crossed {

// Layout of a delimited observation file: row_id, col_id, y, x1..xp.
struct CsvSchema {
  std::optional<std::size_t> covariates;  // p; inferred from the first line when empty
  char delimiter = ',';
  bool has_header = true;
};

// A parsed but not yet indexed line. `x` includes the synthesized intercept.
struct RawRecord {
  std::string_view row_key;
  std::string_view col_key;
  std::span<const double> x;
  double y = 0.0;
  std::uint64_t offset = 0;  // byte offset of the line start
  std::uint64_t line = 0;    // 1-based line number, 0 when scanning a non-leading shard
};

// Rescannable delimited text, either a file or an owned buffer. Every scan
// re-reads the text from the start of its byte range.
class ScanSource {
 public:
  static ScanSource from_file(const std::filesystem::path& path, CsvSchema schema = {});
  static ScanSource from_buffer(std::string text, CsvSchema schema = {});

  std::size_t covariates() const { return covariates_; }
  std::size_t width() const { return covariates_ + 1; }
  const CsvSchema& schema() const { return schema_; }
  std::uint64_t size_bytes() const { return size_; }
  std::string describe() const;

  // Visits the records whose line start falls in shard `shard` of `nshards`
  // equal byte ranges, in file order.
  void scan(std::size_t shard, std::size_t nshards,
            const std::function<void(const RawRecord&)>& visit) const;

 private:
  ScanSource() = default;
  void init();

  std::optional<std::filesystem::path> path_;
  std::shared_ptr<const std::string> buffer_;
  CsvSchema schema_;
  std::size_t covariates_ = 0;
  std::uint64_t size_ = 0;
  std::uint64_t data_begin_ = 0;  // first byte after the header line
};

ScanSource open_source(const std::filesystem::path& path, CsvSchema schema = {});

enum class DedupPolicy { AssumeUnique, KeepLast, KeepFirst, Error };

std::string_view to_string(DedupPolicy policy) noexcept;
DedupPolicy parse_dedup_policy(std::string_view text);

// A contiguous group of indexed records. Column k of `x` is the covariate
// vector of record k.
struct RecordBatch {
  std::span<const Index> rows;
  std::span<const Index> cols;
  Eigen::Map<const Eigen::MatrixXd> x{nullptr, 0, 0};
  std::span<const double> y;

  std::size_t size() const { return y.size(); }
  std::span<const Index> groups(Side s) const { return s == Side::Row ? rows : cols; }
};

using BatchVisitor = std::function<void(const RecordBatch&)>;

inline constexpr std::size_t kBatchSize = 2048;

class RecordStore {
 public:
  virtual ~RecordStore() = default;
  virtual void scan(std::size_t shard, std::size_t nshards, const BatchVisitor& visit) const = 0;
};

// Records with dense row/column indices assigned in first-appearance order,
// plus the profile of the deduplicated stream. Cheap to copy.
class IndexedDataset {
 public:
  IndexedDataset(std::shared_ptr<const RecordStore> store, std::size_t width,
                 DatasetProfile profile, std::shared_ptr<const std::vector<std::string>> row_keys,
                 std::shared_ptr<const std::vector<std::string>> col_keys, DedupPolicy policy);

  std::size_t width() const { return width_; }
  const DatasetProfile& profile() const { return *profile_; }
  DesignFlags flags() const { return design_flags(*profile_); }
  DedupPolicy dedup_policy() const { return policy_; }

  const std::vector<std::string>& row_keys() const { return *row_keys_; }
  const std::vector<std::string>& col_keys() const { return *col_keys_; }

  void scan(std::size_t shard, std::size_t nshards, const BatchVisitor& visit) const {
    store_->scan(shard, nshards, visit);
  }
  void scan(const BatchVisitor& visit) const { store_->scan(0, 1, visit); }

  // Same records with the roles of rows and columns exchanged.
  IndexedDataset transposed() const;

 private:
  std::shared_ptr<const RecordStore> store_;
  std::size_t width_;
  std::shared_ptr<const DatasetProfile> profile_;
  std::shared_ptr<const std::vector<std::string>> row_keys_;
  std::shared_ptr<const std::vector<std::string>> col_keys_;
  DedupPolicy policy_;
};

// One indexing pass over the source. Memory is O(R + C) for AssumeUnique and
// O(distinct cells) for the other policies.
IndexedDataset index_dataset(const ScanSource& source,
                             DedupPolicy policy = DedupPolicy::AssumeUnique);

// In-memory construction; each x must already carry the intercept.
IndexedDataset dataset_from_observations(const std::vector<Observation>& records,
                                         DedupPolicy policy = DedupPolicy::KeepLast);

// Takes ownership of pre-indexed columns. `x` is width x N. Indices must be
// dense (every index in [0, R) and [0, C) used at least once); cells unique.
IndexedDataset dataset_from_indexed(std::vector<Index> rows, std::vector<Index> cols,
                                    Eigen::MatrixXd x, std::vector<double> y,
                                    std::vector<std::string> row_keys,
                                    std::vector<std::string> col_keys);

}  // namespace crossed

namespace crossed {

// Writes the dataset with a header, covariates without the intercept, and
// shortest round-trip decimal formatting.
void write_csv(std::ostream& out, const IndexedDataset& data);

}  // namespace crossed
