#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracle.hpp"
#include "qube/ingest.hpp"

using namespace qube;

TEST_CASE("record parsing basics") {
  const auto rs = parse_records("class=od,date=20200101/20200102,param=t/z\n");
  REQUIRE(rs.size() == 1);
  REQUIRE(rs[0].pairs.size() == 3);
  CHECK(rs[0].pairs[0].first == "class");
  CHECK(rs[0].pairs[0].second ==
        std::vector<CoordinateValue>{CoordinateValue::of_str("od")});
  CHECK(rs[0].pairs[1].second.size() == 2);
  CHECK(rs[0].pairs[1].second[0] == CoordinateValue::of_date(20200101));
  CHECK(rs[0].cartesian_size() == 4);
  CHECK(expand_record(rs[0]).size() == 4);

  CHECK(parse_records("").empty());
  CHECK(parse_records("\n\n").empty());
  CHECK(parse_records("# only a comment\n").empty());
  CHECK(parse_records("  \t \n").empty());  // whitespace-only line skipped

  // Comments and blanks between records; no trailing newline needed.
  const auto rs2 = parse_records("# header\na=1\n\nb=2");
  CHECK(rs2.size() == 2);
}

TEST_CASE("record parsing errors carry positions") {
  try {
    parse_records("a=1,a=2\n");
    FAIL("expected DuplicateDimensionError");
  } catch (const DuplicateDimensionError& e) {
    CHECK(e.line() == 1);
    CHECK(e.dim() == "a");
  }

  try {
    parse_records("a=1\nb\n");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 2);
  }

  CHECK_THROWS_AS(parse_records("=1\n"), SyntaxError);
  CHECK_THROWS_AS(parse_records("a=\n"), SyntaxError);
  CHECK_THROWS_AS(parse_records("a=1/\n"), SyntaxError);
  CHECK_THROWS_AS(parse_records("a=1,\n"), SyntaxError);
  CHECK_THROWS_AS(parse_records("root=1\n"), SyntaxError);
  CHECK_THROWS_AS(parse_records("a b=1\n"), SyntaxError);
  CHECK_THROWS_AS(parse_records("a=1,=2\n"), SyntaxError);
}

TEST_CASE("record values decode like all other tokens") {
  const auto rs = parse_records("s=42~s,esc=x%2Cy,d=20240101,neg=-5\n");
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].pairs[0].second[0] == CoordinateValue::of_str("42"));
  CHECK(rs[0].pairs[1].second[0] == CoordinateValue::of_str("x,y"));
  CHECK(rs[0].pairs[2].second[0] == CoordinateValue::of_date(20240101));
  CHECK(rs[0].pairs[3].second[0] == CoordinateValue::of_int(-5));
}

TEST_CASE("per-dimension type overrides") {
  std::map<DimensionName, ValueTag> overrides = {{"id", ValueTag::Str},
                                                 {"n", ValueTag::Int}};
  const auto rs = parse_records("id=0012,n=7\n", overrides);
  CHECK(rs[0].pairs[0].second[0] == CoordinateValue::of_str("0012"));
  CHECK(rs[0].pairs[1].second[0] == CoordinateValue::of_int(7));

  // Override that cannot parse is an error with position.
  CHECK_THROWS_AS(parse_records("n=abc\n", overrides), SyntaxError);

  // Explicit markers beat overrides.
  const auto rs2 = parse_records("n=5~s\n", overrides);
  CHECK(rs2[0].pairs[0].second[0] == CoordinateValue::of_str("5"));
}

TEST_CASE("records round trip through render") {
  std::mt19937_64 rng(4242);
  for (int iter = 0; iter < 40; ++iter) {
    const testutil::Family fam = testutil::random_family(rng);
    // Build records straight from family pools.
    std::vector<MetadataRecord> records;
    std::uniform_int_distribution<std::size_t> pick_schema(0, fam.schemas.size() - 1);
    for (int r = 0; r < 10; ++r) {
      MetadataRecord rec;
      for (const DimensionName& d : fam.schemas[pick_schema(rng)]) {
        const auto& pool = fam.pools.at(d);
        std::uniform_int_distribution<std::size_t> n(1, pool.size());
        std::vector<CoordinateValue> vals(pool.begin(),
                                          pool.begin() + static_cast<long>(n(rng)));
        rec.pairs.emplace_back(d, std::move(vals));
      }
      records.push_back(std::move(rec));
    }
    const std::string text = render_records(records);
    const auto back = parse_records(text);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(back[i] == records[i]);
  }
}

TEST_CASE("expand_record enumerates the cartesian product in order") {
  MetadataRecord rec;
  rec.pairs.emplace_back(
      "a", std::vector<CoordinateValue>{CoordinateValue::of_int(1),
                                        CoordinateValue::of_int(2)});
  rec.pairs.emplace_back(
      "b", std::vector<CoordinateValue>{CoordinateValue::of_int(10),
                                        CoordinateValue::of_int(20)});
  const auto tuples = expand_record(rec);
  REQUIRE(tuples.size() == 4);
  CHECK(tuples[0][0].second == CoordinateValue::of_int(1));
  CHECK(tuples[0][1].second == CoordinateValue::of_int(10));
  CHECK(tuples[1][1].second == CoordinateValue::of_int(20));  // rightmost fastest
  CHECK(tuples[2][0].second == CoordinateValue::of_int(2));

  MetadataRecord bad;
  bad.pairs.emplace_back("a", std::vector<CoordinateValue>{});
  CHECK_THROWS_AS(expand_record(bad), QubeError);
}

TEST_CASE("build equals union of record expansions") {
  const std::string text =
      "date=20240101/20240102,param=t/z,level=1/2\n"
      "date=20240102/20240103,param=t,level=2/3\n"
      "station=x1\n";
  const auto records = parse_records(text);
  const Qube q = build(records);
  CHECK(q.canonical_hint());

  testutil::TupleMap want;
  for (const auto& r : records)
    for (const Tuple& t : expand_record(r)) want.emplace(t, PayloadRef::none());
  CHECK(testutil::expand(q) == want);
  CHECK(count_leaves(q) == want.size());
}

TEST_CASE("build result is invariant to configuration") {
  std::mt19937_64 rng(2718);
  const testutil::Family fam = testutil::random_family(rng);
  std::vector<MetadataRecord> records;
  std::uniform_int_distribution<std::size_t> pick_schema(0, fam.schemas.size() - 1);
  for (int r = 0; r < 120; ++r) {
    MetadataRecord rec;
    for (const DimensionName& d : fam.schemas[pick_schema(rng)]) {
      const auto& pool = fam.pools.at(d);
      std::uniform_int_distribution<std::size_t> idx(0, pool.size() - 1);
      rec.pairs.emplace_back(d, std::vector<CoordinateValue>{pool[idx(rng)]});
    }
    records.push_back(std::move(rec));
  }

  Qube reference;
  bool first = true;
  for (const std::size_t batch : {1ul, 7ul, 64ul, 1000ul}) {
    for (const bool comp : {true, false}) {
      for (const MergeStrategy strat :
           {MergeStrategy::Sequential, MergeStrategy::PairwiseTree}) {
        BuildConfig cfg;
        cfg.batch_size = batch;
        cfg.compress_each_batch = comp;
        cfg.merge_strategy = strat;
        const Qube q = build(records, cfg);
        if (first) {
          reference = q;
          first = false;
        } else {
          CHECK(structural_equal(q, reference));
        }
      }
    }
  }

  BuildConfig zero;
  zero.batch_size = 0;
  CHECK_THROWS_AS(build(records, zero), QubeError);
}

TEST_CASE("per-batch compression caps intermediate growth") {
  // Heavily overlapping records: compressed batches stay small.
  std::vector<MetadataRecord> records;
  for (int r = 0; r < 64; ++r) {
    MetadataRecord rec;
    rec.pairs.emplace_back(
        "day", std::vector<CoordinateValue>{CoordinateValue::of_int(r / 16)});
    std::vector<CoordinateValue> levels;
    for (int l = 0; l < 8; ++l) levels.push_back(CoordinateValue::of_int(l));
    rec.pairs.emplace_back("level", levels);
    rec.pairs.emplace_back(
        "param", std::vector<CoordinateValue>{CoordinateValue::of_str("t"),
                                              CoordinateValue::of_str("z")});
    records.push_back(std::move(rec));
  }
  for (const MergeStrategy strat :
       {MergeStrategy::Sequential, MergeStrategy::PairwiseTree}) {
    BuildConfig on, off;
    on.merge_strategy = off.merge_strategy = strat;
    on.batch_size = off.batch_size = 8;
    on.compress_each_batch = true;
    off.compress_each_batch = false;
    BuildStats s_on{}, s_off{};
    const Qube q_on = build(records, on, &s_on);
    const Qube q_off = build(records, off, &s_off);
    CHECK(structural_equal(q_on, q_off));
    CHECK(s_on.batches == 8);
    CHECK(s_off.batches == 8);
    CHECK(s_on.peak_intermediate_node_count <= s_off.peak_intermediate_node_count);
  }
}

TEST_CASE("single record builds its compressed dense block") {
  const auto records = parse_records("a=1/2,b=1/2/3\n");
  const Qube q = build(records);
  CHECK(count_leaves(q) == 6);
  CHECK(count_nodes(q) == 3);
}
