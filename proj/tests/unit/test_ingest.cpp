#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "crossed/ingest.hpp"
#include "support.hpp"

using namespace crossed;
using crossed::testing::obs;

namespace {

std::vector<RawRecord> parse_all(const ScanSource& src, std::vector<std::vector<double>>* xs = nullptr) {
  std::vector<RawRecord> out;
  src.scan(0, 1, [&](const RawRecord& r) {
    out.push_back(r);
    if (xs) xs->emplace_back(r.x.begin(), r.x.end());
  });
  return out;
}

struct Flat {
  std::vector<std::string> rows, cols;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
};

Flat flatten(const IndexedDataset& d) {
  Flat f;
  d.scan([&](const RecordBatch& b) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      f.rows.push_back(d.row_keys()[b.rows[k]]);
      f.cols.push_back(d.col_keys()[b.cols[k]]);
      const auto c = b.x.col(static_cast<Eigen::Index>(k));
      f.x.emplace_back(c.data(), c.data() + c.size());
      f.y.push_back(b.y[k]);
    }
  });
  return f;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("headerless line with one covariate") {
  CsvSchema schema;
  schema.covariates = 1;
  schema.has_header = false;
  std::vector<std::vector<double>> xs;
  const auto recs = parse_all(ScanSource::from_buffer("r1,c1,2.0,0.5\n", schema), &xs);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].y == 2.0);
  CHECK(xs[0] == std::vector<double>{1.0, 0.5});
}

TEST_CASE("header is skipped") {
  std::vector<std::vector<double>> xs;
  const auto src = ScanSource::from_buffer("row_id,col_id,y,x1\nr1,c1,2.0,0.5\n");
  CHECK(src.covariates() == 1);
  const auto recs = parse_all(src, &xs);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].y == 2.0);
  CHECK(recs[0].line == 2);
  CHECK(xs[0] == std::vector<double>{1.0, 0.5});
}

TEST_CASE("parse errors carry the line number") {
  CsvSchema schema;
  schema.has_header = false;
  try {
    parse_all(ScanSource::from_buffer("r1,c1,abc,0.5\n", schema));
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(e.line() == 1);
  }
  CHECK(code_of([] { parse_all(ScanSource::from_buffer("a,b,c\nr1,c1,1\n")); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([] { parse_all(ScanSource::from_buffer("row_id,col_id,y,x1\nr1,c1,1\n")); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_all(ScanSource::from_buffer("row_id,col_id,y\nr1,c1,inf\n")); }) ==
        ErrorCode::NonFinite);
  CHECK(code_of([] { ScanSource::from_file("/nonexistent/obs.csv"); }) == ErrorCode::IoError);
}

TEST_CASE("deduplication policies") {
  const std::string text = "row_id,col_id,y\nr1,c1,1.0\nr2,c1,4.0\nr1,c1,9.0\nr2,c2,2.0\n";
  const auto src = ScanSource::from_buffer(text);

  const auto last = flatten(index_dataset(src, DedupPolicy::KeepLast));
  CHECK(last.y == std::vector<double>{4.0, 9.0, 2.0});
  const auto first = flatten(index_dataset(src, DedupPolicy::KeepFirst));
  CHECK(first.y == std::vector<double>{1.0, 4.0, 2.0});
  CHECK(code_of([&] { index_dataset(src, DedupPolicy::Error); }) == ErrorCode::DuplicateCell);

  const auto mem = dataset_from_observations({obs("r1", "c1", {1.0}, 1.0), obs("r1", "c1", {1.0}, 9.0)});
  CHECK(mem.profile().n == 1);
  CHECK(flatten(mem).y == std::vector<double>{9.0});

  CHECK(parse_dedup_policy("keep-first") == DedupPolicy::KeepFirst);
  CHECK(to_string(DedupPolicy::AssumeUnique) == "assume-unique");
  CHECK_THROWS(parse_dedup_policy("newest"));
}

TEST_CASE("distinct cells keep every record") {
  const auto d = dataset_from_observations(
      {obs("a", "u", {1.0}, 1.0), obs("a", "v", {1.0}, 2.0), obs("b", "u", {1.0}, 3.0)});
  CHECK(d.profile().n == 3);
  CHECK(d.profile().r == 2);
  CHECK(d.profile().c == 2);
  CHECK(d.row_keys() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("a single row carrying every observation is flagged") {
  const auto d = dataset_from_observations(
      {obs("a", "u", {1.0}, 1.0), obs("a", "v", {1.0}, 2.0), obs("a", "w", {1.0}, 3.0)});
  CHECK(d.flags().any());
}

TEST_CASE("byte-range shards partition the records") {
  std::ostringstream csv;
  write_csv(csv, crossed::testing::random_design(30, 20, 0.4, 2, 7));
  const auto src = ScanSource::from_buffer(csv.str());
  const auto all = parse_all(src);
  for (std::size_t shards : {2u, 3u, 7u, 64u}) {
    std::vector<std::uint64_t> offsets;
    for (std::size_t s = 0; s < shards; ++s) {
      src.scan(s, shards, [&](const RawRecord& r) { offsets.push_back(r.offset); });
    }
    REQUIRE(offsets.size() == all.size());
    for (std::size_t k = 0; k < all.size(); ++k) CHECK(offsets[k] == all[k].offset);
  }
}

TEST_CASE("csv round trip is exact") {
  const auto d = crossed::testing::random_design(25, 15, 0.5, 3, 11);
  std::ostringstream csv;
  write_csv(csv, d);
  const auto back = index_dataset(ScanSource::from_buffer(csv.str()));
  const Flat a = flatten(d), b = flatten(back);
  CHECK(a.rows == b.rows);
  CHECK(a.cols == b.cols);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(back.profile().row_counts == d.profile().row_counts);
}

TEST_CASE("file and buffer sources agree") {
  const auto d = crossed::testing::random_design(10, 10, 0.5, 1, 3);
  const auto path = std::filesystem::temp_directory_path() / "crossed_ingest_test.csv";
  {
    std::ofstream f(path);
    write_csv(f, d);
  }
  const auto from_file = flatten(index_dataset(open_source(path)));
  CHECK(from_file.y == flatten(d).y);
  std::filesystem::remove(path);
}

TEST_CASE("transposed dataset swaps roles") {
  const auto d = crossed::testing::random_design(12, 8, 0.5, 1, 5);
  const auto t = d.transposed();
  CHECK(t.profile().row_counts == d.profile().col_counts);
  CHECK(t.row_keys() == d.col_keys());
  const Flat a = flatten(d), b = flatten(t);
  CHECK(a.rows == b.cols);
  CHECK(a.y == b.y);
}

TEST_CASE("custom delimiter") {
  CsvSchema schema;
  schema.delimiter = '\t';
  const auto d = index_dataset(ScanSource::from_buffer("row_id\tcol_id\ty\tx1\nr\tc\t1.5\t+2\n", schema));
  CHECK(flatten(d).x[0] == std::vector<double>{1.0, 2.0});
}
