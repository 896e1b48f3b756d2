#include "crossed/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace crossed {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

void split(std::string_view line, char delim, std::vector<std::string_view>& fields) {
  fields.clear();
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string where(std::uint64_t line, std::uint64_t offset) {
  return line ? "line " + std::to_string(line) : "byte offset " + std::to_string(offset);
}

double parse_real(std::string_view field, std::uint64_t line, std::uint64_t offset) {
  std::string_view t = trim(field);
  double value = 0.0;
  // from_chars rejects a leading '+', which is valid in decimal notation.
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::ParseError,
                "cannot parse '" + std::string(field) + "' as a number at " + where(line, offset), line);
  }
  return value;
}

// Calls visit(offset, line) for every line whose first byte lies in
// [begin, end). `begin` need not be a line start.
template <typename Visit>
void for_each_line_in_buffer(std::string_view text, std::uint64_t begin, std::uint64_t end,
                             bool at_line_start, Visit&& visit) {
  std::size_t pos = begin;
  if (!at_line_start && pos > 0 && text[pos - 1] != '\n') {
    std::size_t nl = text.find('\n', pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
  }
  while (pos < end && pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::size_t stop = nl == std::string_view::npos ? text.size() : nl;
    visit(pos, text.substr(pos, stop - pos));
    pos = stop + 1;
  }
}

template <typename Visit>
void for_each_line_in_file(const std::filesystem::path& path, std::uint64_t begin, std::uint64_t end,
                           bool at_line_start, Visit&& visit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::uint64_t pos = begin;
  std::string line;
  if (!at_line_start && pos > 0) {
    in.seekg(static_cast<std::streamoff>(pos - 1));
    std::getline(in, line);
    pos = static_cast<std::uint64_t>(in.tellg());
    if (!in) return;
  } else {
    in.seekg(static_cast<std::streamoff>(pos));
  }
  while (pos < end && std::getline(in, line)) {
    visit(pos, std::string_view(line));
    pos += line.size() + 1;
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "read failure on " + path.string());
}

}  // namespace

ScanSource ScanSource::from_file(const std::filesystem::path& path, CsvSchema schema) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": not a readable file");
  }
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  ScanSource s;
  s.path_ = path;
  s.schema_ = schema;
  s.size_ = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot stat " + path.string());
  s.init();
  return s;
}

ScanSource ScanSource::from_buffer(std::string text, CsvSchema schema) {
  ScanSource s;
  s.size_ = text.size();
  s.buffer_ = std::make_shared<const std::string>(std::move(text));
  s.schema_ = schema;
  s.init();
  return s;
}

ScanSource open_source(const std::filesystem::path& path, CsvSchema schema) {
  return ScanSource::from_file(path, schema);
}

std::string ScanSource::describe() const { return path_ ? path_->string() : std::string("<buffer>"); }

void ScanSource::init() {
  // Read the first non-blank line to settle the header and the width.
  std::optional<std::string> first;
  std::uint64_t first_end = 0;
  auto grab = [&](std::uint64_t offset, std::string_view line) {
    if (!first && !is_blank(line)) {
      first = std::string(line);
      first_end = offset + line.size() + 1;
    }
  };
  // Only the prefix of the file is needed; stop at the first non-blank line.
  if (buffer_) {
    std::string_view text(*buffer_);
    std::size_t pos = 0;
    while (!first && pos < text.size()) {
      std::size_t nl = text.find('\n', pos);
      std::size_t stop = nl == std::string_view::npos ? text.size() : nl;
      grab(pos, text.substr(pos, stop - pos));
      pos = stop + 1;
    }
  } else {
    std::ifstream in(*path_, std::ios::binary);
    std::string line;
    std::uint64_t pos = 0;
    while (!first && std::getline(in, line)) {
      grab(pos, line);
      pos += line.size() + 1;
    }
  }

  std::vector<std::string_view> fields;
  if (schema_.has_header) {
    if (!first) {
      covariates_ = schema_.covariates.value_or(0);
      data_begin_ = size_;
      return;
    }
    split(*first, schema_.delimiter, fields);
    if (fields.size() < 3 || trim(fields[0]) != "row_id" || trim(fields[1]) != "col_id" ||
        trim(fields[2]) != "y") {
      throw Error(ErrorCode::MalformedHeader,
                  "header of " + describe() + " must start with row_id,col_id,y", 1);
    }
    std::size_t p = fields.size() - 3;
    if (schema_.covariates && *schema_.covariates != p) {
      throw Error(ErrorCode::MalformedHeader,
                  "header lists " + std::to_string(p) + " covariates, schema expects " +
                      std::to_string(*schema_.covariates),
                  1);
    }
    covariates_ = p;
    data_begin_ = std::min<std::uint64_t>(first_end, size_);
    return;
  }
  data_begin_ = 0;
  if (schema_.covariates) {
    covariates_ = *schema_.covariates;
  } else if (first) {
    split(*first, schema_.delimiter, fields);
    if (fields.size() < 3) {
      throw Error(ErrorCode::ParseError, "expected at least 3 fields on first record of " + describe(), 1);
    }
    covariates_ = fields.size() - 3;
  }
}

void ScanSource::scan(std::size_t shard, std::size_t nshards,
                      const std::function<void(const RawRecord&)>& visit) const {
  if (nshards == 0 || shard >= nshards) {
    throw Error(ErrorCode::InvalidArgument, "shard index out of range");
  }
  const std::uint64_t span = size_ - data_begin_;
  const std::uint64_t lo = data_begin_ + span * shard / nshards;
  const std::uint64_t hi = data_begin_ + span * (shard + 1) / nshards;
  const std::size_t expected_fields = covariates_ + 3;
  // Line numbers are only tracked from the start of the data.
  const bool track_lines = shard == 0;
  std::uint64_t line_no = schema_.has_header ? 1 : 0;

  std::vector<std::string_view> fields;
  std::vector<double> x(width(), 1.0);
  RawRecord rec;

  auto on_line = [&](std::uint64_t offset, std::string_view line) {
    ++line_no;
    if (is_blank(line)) return;
    const std::uint64_t ln = track_lines ? line_no : 0;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    split(line, schema_.delimiter, fields);
    if (fields.size() != expected_fields) {
      throw Error(ErrorCode::ParseError,
                  "expected " + std::to_string(expected_fields) + " fields, found " +
                      std::to_string(fields.size()) + " at " + where(ln, offset) + " of " + describe(),
                  ln);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw Error(ErrorCode::ParseError, "empty row or column key at " + where(ln, offset), ln);
    }
    rec.row_key = fields[0];
    rec.col_key = fields[1];
    rec.y = parse_real(fields[2], ln, offset);
    for (std::size_t k = 0; k < covariates_; ++k) x[k + 1] = parse_real(fields[3 + k], ln, offset);
    rec.x = x;
    rec.offset = offset;
    rec.line = ln;
    validate_observation(rec.x, rec.y, width(), ln);
    visit(rec);
  };

  const bool at_line_start = shard == 0;
  if (buffer_) {
    for_each_line_in_buffer(*buffer_, lo, hi, at_line_start, on_line);
  } else {
    for_each_line_in_file(*path_, lo, hi, at_line_start, on_line);
  }
}

std::string_view to_string(DedupPolicy policy) noexcept {
  switch (policy) {
    case DedupPolicy::AssumeUnique: return "assume-unique";
    case DedupPolicy::KeepLast: return "keep-last";
    case DedupPolicy::KeepFirst: return "keep-first";
    case DedupPolicy::Error: return "error";
  }
  return "unknown";
}

DedupPolicy parse_dedup_policy(std::string_view text) {
  if (text == "assume-unique") return DedupPolicy::AssumeUnique;
  if (text == "keep-last") return DedupPolicy::KeepLast;
  if (text == "keep-first") return DedupPolicy::KeepFirst;
  if (text == "error") return DedupPolicy::Error;
  throw Error(ErrorCode::InvalidArgument, "unknown dedup policy '" + std::string(text) + "'");
}

namespace {

std::uint64_t cell_key(Index row, Index col) {
  return (static_cast<std::uint64_t>(row) << 32) | col;
}

using KeyMap = std::unordered_map<std::string, Index>;

// Assigns dense indices to keys in first-appearance order.
class KeyIndexer {
 public:
  Index intern(std::string_view key) {
    scratch_.assign(key);
    auto [it, inserted] = map_.try_emplace(scratch_, static_cast<Index>(keys_.size()));
    if (inserted) {
      keys_.push_back(scratch_);
      counts_.push_back(0);
    }
    return it->second;
  }
  void bump(Index i) { ++counts_[i]; }

  KeyMap map_;
  std::vector<std::string> keys_;
  std::vector<Count> counts_;

 private:
  std::string scratch_;
};

// Accumulates records into fixed-size batches and forwards them.
class BatchBuilder {
 public:
  BatchBuilder(std::size_t width, const BatchVisitor& visit) : width_(width), visit_(visit) {
    rows_.reserve(kBatchSize);
    cols_.reserve(kBatchSize);
    y_.reserve(kBatchSize);
    x_.reserve(kBatchSize * width);
  }

  void push(Index row, Index col, std::span<const double> x, double y) {
    rows_.push_back(row);
    cols_.push_back(col);
    x_.insert(x_.end(), x.begin(), x.end());
    y_.push_back(y);
    if (y_.size() == kBatchSize) flush();
  }

  void flush() {
    if (y_.empty()) return;
    RecordBatch b{rows_, cols_,
                  Eigen::Map<const Eigen::MatrixXd>(x_.data(), static_cast<Eigen::Index>(width_),
                                                    static_cast<Eigen::Index>(y_.size())),
                  y_};
    visit_(b);
    rows_.clear();
    cols_.clear();
    x_.clear();
    y_.clear();
  }

 private:
  std::size_t width_;
  const BatchVisitor& visit_;
  std::vector<Index> rows_;
  std::vector<Index> cols_;
  std::vector<double> x_;
  std::vector<double> y_;
};

// Re-parses the text on every scan and maps keys through the index.
class TextStore final : public RecordStore {
 public:
  TextStore(ScanSource source, KeyMap rows, KeyMap cols,
            std::optional<std::unordered_map<std::uint64_t, std::uint64_t>> winners)
      : source_(std::move(source)),
        rows_(std::move(rows)),
        cols_(std::move(cols)),
        winners_(std::move(winners)) {}

  void scan(std::size_t shard, std::size_t nshards, const BatchVisitor& visit) const override {
    BatchBuilder builder(source_.width(), visit);
    std::string key;
    auto lookup = [&](const KeyMap& map, std::string_view k) {
      key.assign(k);
      auto it = map.find(key);
      if (it == map.end()) {
        throw Error(ErrorCode::IoError, "key '" + key + "' not seen when indexing " +
                                            source_.describe() + "; the source changed between passes");
      }
      return it->second;
    };
    source_.scan(shard, nshards, [&](const RawRecord& rec) {
      Index r = lookup(rows_, rec.row_key);
      Index c = lookup(cols_, rec.col_key);
      if (winners_) {
        auto it = winners_->find(cell_key(r, c));
        if (it == winners_->end() || it->second != rec.offset) return;
      }
      builder.push(r, c, rec.x, rec.y);
    });
    builder.flush();
  }

 private:
  ScanSource source_;
  KeyMap rows_;
  KeyMap cols_;
  std::optional<std::unordered_map<std::uint64_t, std::uint64_t>> winners_;
};

class MemoryStore final : public RecordStore {
 public:
  MemoryStore(std::vector<Index> rows, std::vector<Index> cols, Eigen::MatrixXd x,
              std::vector<double> y)
      : rows_(std::move(rows)), cols_(std::move(cols)), x_(std::move(x)), y_(std::move(y)) {}

  void scan(std::size_t shard, std::size_t nshards, const BatchVisitor& visit) const override {
    if (nshards == 0 || shard >= nshards) {
      throw Error(ErrorCode::InvalidArgument, "shard index out of range");
    }
    const std::size_t n = y_.size();
    const std::size_t begin = n * shard / nshards;
    const std::size_t end = n * (shard + 1) / nshards;
    const auto w = x_.rows();
    for (std::size_t lo = begin; lo < end; lo += kBatchSize) {
      const std::size_t len = std::min(kBatchSize, end - lo);
      RecordBatch b{std::span<const Index>(rows_).subspan(lo, len),
                    std::span<const Index>(cols_).subspan(lo, len),
                    Eigen::Map<const Eigen::MatrixXd>(x_.data() + static_cast<std::ptrdiff_t>(lo) * w, w,
                                                      static_cast<Eigen::Index>(len)),
                    std::span<const double>(y_).subspan(lo, len)};
      visit(b);
    }
  }

 private:
  std::vector<Index> rows_;
  std::vector<Index> cols_;
  Eigen::MatrixXd x_;
  std::vector<double> y_;
};

class TransposedStore final : public RecordStore {
 public:
  explicit TransposedStore(std::shared_ptr<const RecordStore> base) : base_(std::move(base)) {}

  void scan(std::size_t shard, std::size_t nshards, const BatchVisitor& visit) const override {
    base_->scan(shard, nshards, [&](const RecordBatch& b) {
      RecordBatch t{b.cols, b.rows, b.x, b.y};
      visit(t);
    });
  }

 private:
  std::shared_ptr<const RecordStore> base_;
};

}  // namespace

IndexedDataset::IndexedDataset(std::shared_ptr<const RecordStore> store, std::size_t width,
                               DatasetProfile profile,
                               std::shared_ptr<const std::vector<std::string>> row_keys,
                               std::shared_ptr<const std::vector<std::string>> col_keys,
                               DedupPolicy policy)
    : store_(std::move(store)),
      width_(width),
      profile_(std::make_shared<const DatasetProfile>(std::move(profile))),
      row_keys_(std::move(row_keys)),
      col_keys_(std::move(col_keys)),
      policy_(policy) {}

IndexedDataset IndexedDataset::transposed() const {
  return IndexedDataset(std::make_shared<TransposedStore>(store_), width_, profile_->transposed(),
                        col_keys_, row_keys_, policy_);
}

IndexedDataset index_dataset(const ScanSource& source, DedupPolicy policy) {
  KeyIndexer rows;
  KeyIndexer cols;
  std::optional<std::unordered_map<std::uint64_t, std::uint64_t>> winners;
  if (policy != DedupPolicy::AssumeUnique) winners.emplace();

  source.scan(0, 1, [&](const RawRecord& rec) {
    Index r = rows.intern(rec.row_key);
    Index c = cols.intern(rec.col_key);
    if (winners) {
      auto [it, inserted] = winners->try_emplace(cell_key(r, c), rec.offset);
      if (!inserted) {
        if (policy == DedupPolicy::Error) {
          throw Error(ErrorCode::DuplicateCell,
                      "duplicate cell (" + std::string(rec.row_key) + ", " + std::string(rec.col_key) +
                          ") at line " + std::to_string(rec.line),
                      rec.line);
        }
        if (policy == DedupPolicy::KeepLast) it->second = rec.offset;
        return;
      }
    }
    rows.bump(r);
    cols.bump(c);
  });

  DatasetProfile profile = build_profile(std::move(rows.counts_), std::move(cols.counts_));
  if (policy == DedupPolicy::Error) winners.reset();
  auto store = std::make_shared<TextStore>(source, std::move(rows.map_), std::move(cols.map_),
                                           std::move(winners));
  return IndexedDataset(std::move(store), source.width(), std::move(profile),
                        std::make_shared<const std::vector<std::string>>(std::move(rows.keys_)),
                        std::make_shared<const std::vector<std::string>>(std::move(cols.keys_)),
                        policy);
}

IndexedDataset dataset_from_observations(const std::vector<Observation>& records, DedupPolicy policy) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no observations");
  const std::size_t width = records.front().x.size();
  KeyIndexer rows;
  KeyIndexer cols;
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<const Observation*> kept;
  std::vector<Index> ri;
  std::vector<Index> ci;
  for (const Observation& obs : records) {
    validate_observation(obs, width);
    Index r = rows.intern(obs.row_key);
    Index c = cols.intern(obs.col_key);
    if (policy != DedupPolicy::AssumeUnique) {
      auto [it, inserted] = slot.try_emplace(cell_key(r, c), kept.size());
      if (!inserted) {
        if (policy == DedupPolicy::Error) {
          throw Error(ErrorCode::DuplicateCell,
                      "duplicate cell (" + obs.row_key + ", " + obs.col_key + ")");
        }
        if (policy == DedupPolicy::KeepLast) kept[it->second] = &obs;
        continue;
      }
    }
    kept.push_back(&obs);
    ri.push_back(r);
    ci.push_back(c);
    rows.bump(r);
    cols.bump(c);
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(kept.size()));
  std::vector<double> y(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    x.col(static_cast<Eigen::Index>(k)) =
        Eigen::Map<const Eigen::VectorXd>(kept[k]->x.data(), static_cast<Eigen::Index>(width));
    y[k] = kept[k]->y;
  }
  DatasetProfile profile = build_profile(std::move(rows.counts_), std::move(cols.counts_));
  auto store = std::make_shared<MemoryStore>(std::move(ri), std::move(ci), std::move(x), std::move(y));
  return IndexedDataset(std::move(store), width, std::move(profile),
                        std::make_shared<const std::vector<std::string>>(std::move(rows.keys_)),
                        std::make_shared<const std::vector<std::string>>(std::move(cols.keys_)),
                        policy);
}

IndexedDataset dataset_from_indexed(std::vector<Index> rows, std::vector<Index> cols, Eigen::MatrixXd x,
                                    std::vector<double> y, std::vector<std::string> row_keys,
                                    std::vector<std::string> col_keys) {
  const std::size_t n = y.size();
  if (rows.size() != n || cols.size() != n || static_cast<std::size_t>(x.cols()) != n) {
    throw Error(ErrorCode::InvalidArgument, "record columns have inconsistent lengths");
  }
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "dataset has no observations");
  std::vector<Count> rc(row_keys.size(), 0);
  std::vector<Count> cc(col_keys.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (rows[k] >= rc.size() || cols[k] >= cc.size()) {
      throw Error(ErrorCode::InvalidArgument, "record index outside the key tables");
    }
    ++rc[rows[k]];
    ++cc[cols[k]];
    validate_observation(std::span<const double>(x.col(static_cast<Eigen::Index>(k)).data(),
                                                 static_cast<std::size_t>(x.rows())),
                         y[k], static_cast<std::size_t>(x.rows()));
  }
  const std::size_t width = static_cast<std::size_t>(x.rows());
  DatasetProfile profile = build_profile(std::move(rc), std::move(cc));
  auto store = std::make_shared<MemoryStore>(std::move(rows), std::move(cols), std::move(x), std::move(y));
  return IndexedDataset(std::move(store), width, std::move(profile),
                        std::make_shared<const std::vector<std::string>>(std::move(row_keys)),
                        std::make_shared<const std::vector<std::string>>(std::move(col_keys)),
                        DedupPolicy::AssumeUnique);
}

}  // namespace crossed

#include <ostream>

namespace crossed {

namespace {

void put_real(std::ostream& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

}  // namespace

void write_csv(std::ostream& out, const IndexedDataset& data) {
  const std::size_t w = data.width();
  out << "row_id,col_id,y";
  for (std::size_t t = 1; t < w; ++t) out << ",x" << t;
  out << '\n';
  const auto& rk = data.row_keys();
  const auto& ck = data.col_keys();
  data.scan([&](const RecordBatch& b) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      out << rk[b.rows[k]] << ',' << ck[b.cols[k]] << ',';
      put_real(out, b.y[k]);
      for (std::size_t t = 1; t < w; ++t) {
        out << ',';
        put_real(out, b.x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)));
      }
      out << '\n';
    }
  });
}

}  // namespace crossed
