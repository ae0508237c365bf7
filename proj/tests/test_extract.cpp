#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "oracle.hpp"
#include "qube/extract.hpp"
#include "qube/ingest.hpp"

using namespace qube;
namespace fs = std::filesystem;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.nlat = 3;
  g.nlon = 4;
  g.lat0 = 90;
  g.lat1 = -90;
  g.lon0 = 0;
  g.lon1 = 3;
  return g;
}

fs::path temp_file(const std::string& stem) {
  return fs::temp_directory_path() / ("qube_extract_" + stem + ".bin");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void clobber(const fs::path& p, std::size_t at, char byte) {
  std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
  REQUIRE(f.good());
  f.seekp(static_cast<std::streamoff>(at));
  f.write(&byte, 1);
}

}  // namespace

TEST_CASE("grid geometry and validation") {
  const GridSpec g = small_grid();
  g.validate();
  CHECK(g.cell_count() == 12);
  CHECK(g.index(0, 0) == 0);
  CHECK(g.index(1, 0) == 4);  // row-major
  CHECK(g.index(2, 3) == 11);
  CHECK(g.row_lat(0) == 90.0);
  CHECK(g.row_lat(1) == 0.0);
  CHECK(g.row_lat(2) == -90.0);
  CHECK(g.col_lon(0) == 0.0);
  CHECK(g.col_lon(3) == 3.0);

  GridSpec single;
  single.nlat = 1;
  single.nlon = 1;
  single.lat0 = single.lat1 = 45;
  single.lon0 = single.lon1 = 7;
  single.validate();
  CHECK(single.row_lat(0) == 45.0);
  CHECK(single.col_lon(0) == 7.0);

  GridSpec bad = g;
  bad.nlat = 0;
  CHECK_THROWS_AS(bad.validate(), QubeError);
  bad = g;
  bad.lat1 = bad.lat0;  // rows must descend when nlat > 1
  CHECK_THROWS_AS(bad.validate(), QubeError);
  bad = g;
  bad.lon1 = bad.lon0;
  CHECK_THROWS_AS(bad.validate(), QubeError);
  bad = g;
  bad.lat0 = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.validate(), QubeError);
  bad = single;
  bad.lat1 = 44;  // single row must have lat0 == lat1
  CHECK_THROWS_AS(bad.validate(), QubeError);
}

TEST_CASE("point features snap to the nearest cell") {
  const GridSpec g = small_grid();

  auto cell = [&](double lat, double lon) {
    const auto runs = feature_to_indices(g, Feature::point(lat, lon));
    REQUIRE(runs.size() == 1);
    REQUIRE(runs[0].count == 1);
    return runs[0].start;
  };

  CHECK(cell(90, 0) == 0);
  CHECK(cell(-90, 3) == 11);
  CHECK(cell(10, 1.2) == g.index(1, 1));   // nearest row 1 (lat 0), col 1
  CHECK(cell(-50, 2.6) == g.index(2, 3));  // nearest row 2 (lat -90), col 3

  // Midpoint ties break toward the lower index on both axes.
  CHECK(cell(45, 0) == g.index(0, 0));   // between rows 0 and 1
  CHECK(cell(90, 0.5) == g.index(0, 0)); // between cols 0 and 1
  CHECK(cell(45, 0.5) == g.index(0, 0));

  // Boundary tolerance admits points a hair outside.
  CHECK(cell(90.0 + 5e-10, 0) == 0);
  CHECK(cell(90, -5e-10) == 0);

  CHECK_THROWS_AS(feature_to_indices(g, Feature::point(91, 0)), OutOfBoundsError);
  CHECK_THROWS_AS(feature_to_indices(g, Feature::point(0, -1)), OutOfBoundsError);
  CHECK_THROWS_AS(feature_to_indices(g, Feature::point(0, 3.5)), OutOfBoundsError);
  CHECK_THROWS_AS(Feature::point(std::nan(""), 0), QubeError);
}

TEST_CASE("box features produce one run per intersected row") {
  const GridSpec g = small_grid();

  const auto all = feature_to_indices(g, Feature::all_cells());
  REQUIRE(all.size() == 1);
  CHECK(all[0] == CellRun{0, 12});

  const auto whole = feature_to_indices(g, Feature::box(-90, 90, 0, 3));
  REQUIRE(whole.size() == 3);
  CHECK(whole[0] == CellRun{0, 4});
  CHECK(whole[1] == CellRun{4, 4});
  CHECK(whole[2] == CellRun{8, 4});

  // Rows 1..2, columns 1..2.
  const auto part = feature_to_indices(g, Feature::box(-90, 0, 1, 2));
  REQUIRE(part.size() == 2);
  CHECK(part[0] == CellRun{g.index(1, 1), 2});
  CHECK(part[1] == CellRun{g.index(2, 1), 2});

  // Boxes that straddle no lattice line select nothing but are in bounds.
  CHECK(feature_to_indices(g, Feature::box(10, 80, 0, 3)).empty());
  CHECK(feature_to_indices(g, Feature::box(-90, 90, 1.2, 1.8)).empty());

  // Degenerate box on a lattice point is that point.
  const auto pt = feature_to_indices(g, Feature::box(0, 0, 2, 2));
  REQUIRE(pt.size() == 1);
  CHECK(pt[0] == CellRun{g.index(1, 2), 1});

  CHECK_THROWS_AS(feature_to_indices(g, Feature::box(91, 95, 0, 3)),
                  OutOfBoundsError);
  CHECK_THROWS_AS(feature_to_indices(g, Feature::box(0, 0, 4, 5)),
                  OutOfBoundsError);
  CHECK_THROWS_AS(Feature::box(1, 0, 0, 0), QubeError);
}

TEST_CASE("coalesce fuses touching ranges and preserves coverage") {
  const std::vector<ByteRange> fused = coalesce({{0, 16, 8},
                                                 {0, 0, 8},
                                                 {0, 8, 8},
                                                 {1, 0, 8},
                                                 {0, 40, 0},
                                                 {0, 4, 8}});
  REQUIRE(fused.size() == 2);
  CHECK(fused[0] == ByteRange{0, 0, 24});  // 0-8, 4-12, 8-16, 16-24 fuse
  CHECK(fused[1] == ByteRange{1, 0, 8});

  CHECK(coalesce({}).empty());
  CHECK(coalesce({{2, 8, 0}}).empty());

  std::mt19937_64 rng(977);
  for (int iter = 0; iter < 60; ++iter) {
    std::vector<ByteRange> ranges;
    std::uniform_int_distribution<std::uint32_t> field(0, 2);
    std::uniform_int_distribution<std::uint64_t> offset(0, 80);
    std::uniform_int_distribution<std::uint64_t> length(0, 24);
    const int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i)
      ranges.push_back(ByteRange{field(rng), offset(rng), length(rng)});

    std::set<std::pair<std::uint32_t, std::uint64_t>> want;
    for (const ByteRange& r : ranges)
      for (std::uint64_t b = r.offset; b < r.offset + r.length; ++b)
        want.emplace(r.field_index, b);

    const auto out = coalesce(ranges);
    std::set<std::pair<std::uint32_t, std::uint64_t>> got;
    for (const ByteRange& r : out) {
      CHECK(r.length > 0);
      for (std::uint64_t b = r.offset; b < r.offset + r.length; ++b)
        CHECK(got.emplace(r.field_index, b).second);  // disjoint
    }
    CHECK(got == want);
    for (std::size_t i = 1; i < out.size(); ++i) {
      const ByteRange &a = out[i - 1], &b = out[i];
      const bool ordered = a.field_index < b.field_index ||
                           (a.field_index == b.field_index &&
                            a.offset + a.length < b.offset);  // gap, not touch
      CHECK(ordered);
    }
  }
}

TEST_CASE("tuple keys use the shared token escaping") {
  const Tuple t = {{"param", CoordinateValue::of_str("t")},
                   {"level", CoordinateValue::of_int(500)}};
  CHECK(tuple_key(t) == "param=t,level=500");

  const Tuple hostile = {{"s", CoordinateValue::of_str("x,y")},
                         {"d", CoordinateValue::of_str("20240101")}};
  CHECK(tuple_key(hostile) == "s=x%2Cy,d=20240101~s");
}

TEST_CASE("manifest json round trip and validation") {
  const Qube q = build(parse_records("param=t/z,level=1/2\n"));
  FieldStoreManifest m = manifest_for(q, small_grid(), "fields.bin");
  REQUIRE(m.fields.size() == 4);
  CHECK(m.fields.at("param=t,level=1") == 0);
  CHECK(m.fields.at("param=t,level=2") == 1);
  CHECK(m.fields.at("param=z,level=1") == 2);
  CHECK(m.fields.at("param=z,level=2") == 3);

  const nlohmann::json j = manifest_to_json(m);
  const FieldStoreManifest back = manifest_from_json(j);
  CHECK(back.fields == m.fields);
  CHECK(back.data_path == "fields.bin");
  CHECK(back.grid.nlat == m.grid.nlat);
  CHECK(back.grid.nlon == m.grid.nlon);
  CHECK(back.grid.lat0 == m.grid.lat0);
  CHECK(back.grid.lat1 == m.grid.lat1);
  CHECK(back.grid.lon0 == m.grid.lon0);
  CHECK(back.grid.lon1 == m.grid.lon1);

  // Field indices must be dense from zero.
  FieldStoreManifest sparse = m;
  sparse.fields.erase("param=t,level=2");
  CHECK_THROWS_AS(sparse.validate(), QubeError);
  FieldStoreManifest reused = m;
  reused.fields["param=z,level=2"] = 0;
  CHECK_THROWS_AS(reused.validate(), QubeError);

  auto expect_schema_error = [](nlohmann::json doc, std::string_view where) {
    try {
      manifest_from_json(doc);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.path().find(where) != std::string::npos);
    }
  };
  nlohmann::json bad = j;
  bad.erase("grid");
  expect_schema_error(bad, "/");
  bad = j;
  bad["surprise"] = 1;
  expect_schema_error(bad, "/");
  bad = j;
  bad["grid"]["nlat"] = -3;
  expect_schema_error(bad, "/grid/nlat");
  bad = j;
  bad["grid"]["lat0"] = "north";
  expect_schema_error(bad, "/grid/lat0");
  bad = j;
  bad["fields"]["param=t,level=1"] = "zero";
  expect_schema_error(bad, "/fields/param=t,level=1");
  bad = j;
  bad["data_path"] = 7;
  expect_schema_error(bad, "/data_path");
  bad = j;
  bad["fields"].erase("param=t,level=2");  // density check runs on load
  expect_schema_error(bad, "/");
}

TEST_CASE("mock store files follow the documented layout") {
  GridSpec g;
  g.nlat = 1;
  g.nlon = 4;
  g.lat0 = g.lat1 = 45;
  g.lon0 = 0;
  g.lon1 = 3;
  const Qube q = build(parse_records("param=t/z\n"));
  const FieldStoreManifest m = manifest_for(q, g, "fields.bin");
  const fs::path file = temp_file("layout");
  write_mock_store(m, file);

  const std::string bytes = slurp(file);
  REQUIRE(bytes.size() == 2 * (16 + 4 * 8));

  auto u32_at = [&](std::size_t at) {
    return detail::get_u32_le(reinterpret_cast<const unsigned char*>(bytes.data()) + at);
  };
  auto u64_at = [&](std::size_t at) {
    return detail::get_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + at);
  };
  auto f64_at = [&](std::size_t at) {
    return detail::get_f64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + at);
  };

  for (std::uint32_t fi = 0; fi < 2; ++fi) {
    const std::size_t base = fi * 48;
    CHECK(bytes.compare(base, 4, "QFLD") == 0);
    CHECK(u32_at(base + 4) == fi);
    CHECK(u64_at(base + 8) == 4);
    for (std::uint64_t ci = 0; ci < 4; ++ci)
      CHECK(f64_at(base + 16 + ci * 8) == mock_value(fi, ci));
  }
  CHECK(mock_value(3, 7) == 3000007.0);
  fs::remove(file);
}

TEST_CASE("plans touch exactly the selected fields and feature cells") {
  const GridSpec g = small_grid();
  const Qube q = build(parse_records("param=t/z,level=1/2\n"));
  const FieldStoreManifest m = manifest_for(q, g, "fields.bin");

  const AccessPlan point =
      plan(q, parse_constraint("param=t"), Feature::point(0, 2), m);
  REQUIRE(point.ranges.size() == 2);  // fields 0 and 1, one cell each
  const std::uint64_t cell = g.index(1, 2);
  CHECK(point.ranges[0] == ByteRange{0, cell * 8, 8});
  CHECK(point.ranges[1] == ByteRange{1, cell * 8, 8});
  CHECK(point.total_bytes == 16);
  CHECK(point.fields_touched == 2);

  // Full-grid box: per field the row runs fuse into one full-payload range.
  const AccessPlan box = plan(q, Constraint{}, Feature::box(-90, 90, 0, 3), m);
  REQUIRE(box.ranges.size() == 4);
  for (std::uint32_t fi = 0; fi < 4; ++fi)
    CHECK(box.ranges[fi] == ByteRange{fi, 0, 12 * 8});
  CHECK(box.total_bytes == 8 * 12 * 4);
  CHECK(box.fields_touched == 4);

  // Partial box: rows 1..2 x cols 1..2 gives two runs per field.
  const AccessPlan part =
      plan(q, parse_constraint("param=z,level=2"), Feature::box(-90, 0, 1, 2), m);
  REQUIRE(part.ranges.size() == 2);
  CHECK(part.ranges[0] == ByteRange{3, g.index(1, 1) * 8, 16});
  CHECK(part.ranges[1] == ByteRange{3, g.index(2, 1) * 8, 16});
  CHECK(part.total_bytes == 8 * 2 * 2);
  CHECK(part.fields_touched == 1);

  // Empty selection plans nothing.
  const AccessPlan none = plan(q, parse_constraint("param=q"), Feature::all_cells(), m);
  CHECK(none.ranges.empty());
  CHECK(none.total_bytes == 0);
  CHECK(none.fields_touched == 0);

  // A leaf outside the manifest is an error, not a silent skip.
  const Qube wider = build(parse_records("param=t/z/q,level=1/2\n"));
  CHECK_THROWS_AS(plan(wider, parse_constraint("param=q"), Feature::all_cells(), m),
                  UnknownFieldError);
}

TEST_CASE("execute_plan reads planned bytes and nothing else") {
  const GridSpec g = small_grid();
  const Qube q = build(parse_records("param=t/z,level=1/2\n"));
  const FieldStoreManifest m = manifest_for(q, g, "fields.bin");
  const fs::path file = temp_file("exec");
  write_mock_store(m, file);

  const AccessPlan pl = plan(q, parse_constraint("param=t"), Feature::point(0, 2), m);
  const ExecuteResult res = execute_plan(pl, file);
  const std::uint64_t cell = g.index(1, 2);
  REQUIRE(res.values.size() == 2);
  CHECK(res.values.at({0, cell}) == mock_value(0, cell));
  CHECK(res.values.at({1, cell}) == mock_value(1, cell));
  CHECK(res.payload_bytes_read == 16);
  CHECK(res.header_bytes_read == 32);  // anchor field 0 plus field 1

  const AccessPlan box = plan(q, Constraint{}, Feature::box(-90, 0, 1, 2), m);
  const ExecuteResult rbox = execute_plan(box, file);
  CHECK(rbox.payload_bytes_read == box.total_bytes);
  CHECK(rbox.values.size() == 4 * 4);  // 4 cells x 4 fields
  for (const auto& [key, value] : rbox.values)
    CHECK(value == mock_value(key.first, key.second));

  const ExecuteResult empty = execute_plan(AccessPlan{}, "/nonexistent/store");
  CHECK(empty.values.empty());
  CHECK(empty.payload_bytes_read == 0);
  fs::remove(file);
}

TEST_CASE("execute_plan rejects corrupt or truncated stores") {
  const GridSpec g = small_grid();
  const Qube q = build(parse_records("param=t/z\n"));
  const FieldStoreManifest m = manifest_for(q, g, "fields.bin");
  const AccessPlan pl = plan(q, Constraint{}, Feature::point(90, 0), m);
  const std::uint64_t stride = 16 + g.cell_count() * 8;

  const fs::path magic = temp_file("magic");
  write_mock_store(m, magic);
  clobber(magic, 0, 'X');
  CHECK_THROWS_AS(execute_plan(pl, magic), CorruptFieldError);
  fs::remove(magic);

  const fs::path index = temp_file("index");
  write_mock_store(m, index);
  clobber(index, 4, 9);  // field 0 header claims index 9
  CHECK_THROWS_AS(execute_plan(pl, index), CorruptFieldError);
  fs::remove(index);

  const fs::path count = temp_file("count");
  write_mock_store(m, count);
  clobber(count, static_cast<std::size_t>(stride) + 8, 1);  // field 1 cell count
  CHECK_THROWS_AS(execute_plan(pl, count), CorruptFieldError);
  fs::remove(count);

  const fs::path good = temp_file("good");
  write_mock_store(m, good);
  AccessPlan unaligned;
  unaligned.ranges = {ByteRange{0, 4, 8}};
  CHECK_THROWS_AS(execute_plan(unaligned, good), CorruptFieldError);
  AccessPlan overlong;
  overlong.ranges = {ByteRange{0, 0, (g.cell_count() + 1) * 8}};
  CHECK_THROWS_AS(execute_plan(overlong, good), CorruptFieldError);
  fs::remove(good);

  const fs::path shorty = temp_file("short");
  write_mock_store(m, shorty);
  fs::resize_file(shorty, 20);  // header intact, payload cut
  AccessPlan tail;
  tail.ranges = {ByteRange{0, 0, 16}};
  CHECK_THROWS_AS(execute_plan(tail, shorty), ShortReadError);
  fs::resize_file(shorty, 8);  // inside the header itself
  CHECK_THROWS_AS(execute_plan(tail, shorty), ShortReadError);
  fs::remove(shorty);
}
