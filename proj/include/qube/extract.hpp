#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qube/error.hpp"
#include "qube/qube.hpp"
#include "qube/select.hpp"
#include "qube/serialize.hpp"

namespace qube {

/// Regular point lattice. Row 0 is the northernmost latitude (lat0), rows
/// descend to lat1; column 0 is the westernmost longitude (lon0), columns
/// ascend to lon1. Cell index = row * nlon + col (row-major).
struct GridSpec {
  std::uint32_t nlat = 0;
  std::uint32_t nlon = 0;
  double lat0 = 90.0, lat1 = -90.0;  // first/last row latitude, north to south
  double lon0 = 0.0, lon1 = 0.0;     // first/last column longitude, west to east

  std::uint64_t cell_count() const {
    return static_cast<std::uint64_t>(nlat) * nlon;
  }

  std::uint64_t index(std::uint32_t row, std::uint32_t col) const {
    return static_cast<std::uint64_t>(row) * nlon + col;
  }

  double row_lat(std::uint32_t row) const {
    return nlat == 1 ? lat0 : lat0 - row * (lat0 - lat1) / (nlat - 1);
  }

  double col_lon(std::uint32_t col) const {
    return nlon == 1 ? lon0 : lon0 + col * (lon1 - lon0) / (nlon - 1);
  }

  void validate() const {
    if (nlat == 0 || nlon == 0) throw QubeError("grid must have nlat, nlon >= 1");
    if (!std::isfinite(lat0) || !std::isfinite(lat1) || !std::isfinite(lon0) ||
        !std::isfinite(lon1))
      throw QubeError("grid bounds must be finite");
    if (nlat > 1 ? lat0 <= lat1 : lat0 != lat1)
      throw QubeError("grid rows must run north to south (lat0 > lat1)");
    if (nlon > 1 ? lon0 >= lon1 : lon0 != lon1)
      throw QubeError("grid columns must run west to east (lon0 < lon1)");
  }
};

/// Spatial query shape against a grid.
struct Feature {
  enum class Kind { Point, Box, AllCells };

  Kind kind = Kind::AllCells;
  double lat = 0, lon = 0;                              // Point
  double lat_min = 0, lat_max = 0, lon_min = 0, lon_max = 0;  // Box

  static Feature point(double lat, double lon) {
    if (!std::isfinite(lat) || !std::isfinite(lon))
      throw QubeError("point coordinates must be finite");
    Feature f;
    f.kind = Kind::Point;
    f.lat = lat;
    f.lon = lon;
    return f;
  }

  static Feature box(double lat_min, double lat_max, double lon_min,
                     double lon_max) {
    if (!std::isfinite(lat_min) || !std::isfinite(lat_max) ||
        !std::isfinite(lon_min) || !std::isfinite(lon_max))
      throw QubeError("box bounds must be finite");
    if (lat_min > lat_max || lon_min > lon_max)
      throw QubeError("box bounds must be ordered (min <= max)");
    Feature f;
    f.kind = Kind::Box;
    f.lat_min = lat_min;
    f.lat_max = lat_max;
    f.lon_min = lon_min;
    f.lon_max = lon_max;
    return f;
  }

  static Feature all_cells() { return {}; }
};

/// A run of consecutive cell indices.
struct CellRun {
  std::uint64_t start = 0;
  std::uint64_t count = 0;

  friend bool operator==(const CellRun&, const CellRun&) = default;
};

namespace detail {

// Tolerance for lattice boundary comparisons, in degrees. Grid coordinates
// are O(1e2) and double rounding error is O(1e-13), so 1e-9 is wide enough
// for arithmetic noise and far too narrow to capture a neighboring cell.
inline constexpr double kGridEps = 1e-9;

/// Nearest lattice ordinate to `x` along an axis that starts at `origin` and
/// advances by `step` (> 0) per index; ties break toward the lower index.
inline std::uint32_t nearest_ordinate(double x, double origin, double step,
                                      std::uint32_t n) {
  if (n == 1) return 0;
  const double f = (x - origin) / step;
  const double lo = std::floor(f);
  const std::int64_t i =
      (f - lo <= 0.5) ? static_cast<std::int64_t>(lo)
                      : static_cast<std::int64_t>(lo) + 1;
  return static_cast<std::uint32_t>(std::clamp<std::int64_t>(i, 0, n - 1));
}

/// Lattice index interval covered by [xmin, xmax] along the same kind of
/// axis. Empty intervals (box between two ordinates) are legal.
inline std::pair<std::int64_t, std::int64_t> ordinate_band(double xmin, double xmax,
                                                           double origin, double step,
                                                           std::uint32_t n) {
  if (n == 1) {
    const bool hit = xmin <= origin + kGridEps && xmax >= origin - kGridEps;
    return hit ? std::pair<std::int64_t, std::int64_t>{0, 0}
               : std::pair<std::int64_t, std::int64_t>{0, -1};
  }
  auto lo = static_cast<std::int64_t>(std::ceil((xmin - origin) / step - kGridEps));
  auto hi = static_cast<std::int64_t>(std::floor((xmax - origin) / step + kGridEps));
  lo = std::max<std::int64_t>(lo, 0);
  hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(n) - 1);
  return {lo, hi};
}

}  // namespace detail

/// Cells a feature resolves to, as ascending disjoint runs. Point: the
/// nearest lattice point (per-axis nearest, ties toward the lower index),
/// one single-cell run. Box: one run per intersected row. AllCells: one run
/// covering the grid. A point or box entirely outside the grid's bounds
/// raises OutOfBoundsError; a box inside the bounds that straddles no
/// lattice row or column yields no runs.
inline std::vector<CellRun> feature_to_indices(const GridSpec& g, const Feature& f) {
  g.validate();
  switch (f.kind) {
    case Feature::Kind::AllCells:
      return {CellRun{0, g.cell_count()}};

    case Feature::Kind::Point: {
      const bool inside = f.lat <= g.lat0 + detail::kGridEps &&
                          f.lat >= g.lat1 - detail::kGridEps &&
                          f.lon >= g.lon0 - detail::kGridEps &&
                          f.lon <= g.lon1 + detail::kGridEps;
      if (!inside) throw OutOfBoundsError("point lies outside the grid");
      // Rows advance southward: reuse the ascending-axis helper on -lat.
      const double lat_step = g.nlat == 1 ? 1.0 : (g.lat0 - g.lat1) / (g.nlat - 1);
      const double lon_step = g.nlon == 1 ? 1.0 : (g.lon1 - g.lon0) / (g.nlon - 1);
      const std::uint32_t row =
          detail::nearest_ordinate(-f.lat, -g.lat0, lat_step, g.nlat);
      const std::uint32_t col =
          detail::nearest_ordinate(f.lon, g.lon0, lon_step, g.nlon);
      return {CellRun{g.index(row, col), 1}};
    }

    case Feature::Kind::Box: {
      const bool overlaps = f.lat_min <= g.lat0 + detail::kGridEps &&
                            f.lat_max >= g.lat1 - detail::kGridEps &&
                            f.lon_max >= g.lon0 - detail::kGridEps &&
                            f.lon_min <= g.lon1 + detail::kGridEps;
      if (!overlaps) throw OutOfBoundsError("box lies entirely outside the grid");
      const double lat_step = g.nlat == 1 ? 1.0 : (g.lat0 - g.lat1) / (g.nlat - 1);
      const double lon_step = g.nlon == 1 ? 1.0 : (g.lon1 - g.lon0) / (g.nlon - 1);
      const auto [row_lo, row_hi] = detail::ordinate_band(
          -f.lat_max, -f.lat_min, -g.lat0, lat_step, g.nlat);
      const auto [col_lo, col_hi] =
          detail::ordinate_band(f.lon_min, f.lon_max, g.lon0, lon_step, g.nlon);
      std::vector<CellRun> runs;
      if (col_hi < col_lo) return runs;
      for (std::int64_t r = row_lo; r <= row_hi; ++r)
        runs.push_back(CellRun{g.index(static_cast<std::uint32_t>(r),
                                       static_cast<std::uint32_t>(col_lo)),
                               static_cast<std::uint64_t>(col_hi - col_lo + 1)});
      return runs;
    }
  }
  throw QubeError("unreachable feature kind");
}

// ---------------------------------------------------------------------------
// Byte ranges and plans
// ---------------------------------------------------------------------------

/// One contiguous read inside one field's payload. Offsets are relative to
/// the field's first value byte, not to the file.
struct ByteRange {
  std::uint32_t field_index = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

struct AccessPlan {
  std::vector<ByteRange> ranges;  // sorted by (field_index, offset), disjoint
  std::uint64_t total_bytes = 0;
  std::uint32_t fields_touched = 0;
};

/// Sorts by (field, offset) and fuses ranges that touch or overlap within a
/// field. Zero-length input ranges are dropped (they cover no bytes). The
/// byte set covered is exactly preserved.
inline std::vector<ByteRange> coalesce(std::vector<ByteRange> ranges) {
  ranges.erase(std::remove_if(ranges.begin(), ranges.end(),
                              [](const ByteRange& r) { return r.length == 0; }),
               ranges.end());
  std::sort(ranges.begin(), ranges.end(), [](const ByteRange& a, const ByteRange& b) {
    if (a.field_index != b.field_index) return a.field_index < b.field_index;
    if (a.offset != b.offset) return a.offset < b.offset;
    return a.length < b.length;
  });
  std::vector<ByteRange> out;
  for (const ByteRange& r : ranges) {
    if (!out.empty() && out.back().field_index == r.field_index &&
        out.back().offset + out.back().length >= r.offset) {
      const std::uint64_t end = std::max(out.back().offset + out.back().length,
                                         r.offset + r.length);
      out.back().length = end - out.back().offset;
    } else {
      out.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field store
// ---------------------------------------------------------------------------

/// Canonical field key of a leaf tuple: comma-joined dim=value in tree
/// order, with the same token escaping as every other text surface.
inline std::string tuple_key(const Tuple& t) {
  std::string s;
  for (const auto& [dim, value] : t) {
    if (!s.empty()) s += ',';
    s += dim;
    s += '=';
    s += encode_token(value);
  }
  return s;
}

/// Maps leaf tuples to field indices in a mock binary store laid out on a
/// grid. Field indices must be dense 0..N-1; fields are stored in index
/// order.
struct FieldStoreManifest {
  GridSpec grid;
  std::map<std::string, std::uint32_t> fields;  // tuple_key -> field index
  std::string data_path;  // store file, relative to the manifest's location

  void validate() const {
    grid.validate();
    std::set<std::uint32_t> seen;
    for (const auto& [key, idx] : fields) {
      if (!seen.insert(idx).second)
        throw QubeError("manifest reuses field index " + std::to_string(idx));
    }
    if (!fields.empty() && (*seen.begin() != 0 || *seen.rbegin() != fields.size() - 1))
      throw QubeError("manifest field indices must be dense 0..N-1");
  }
};

inline nlohmann::json manifest_to_json(const FieldStoreManifest& m) {
  m.validate();
  nlohmann::json fields = nlohmann::json::object();
  for (const auto& [key, idx] : m.fields) fields[key] = idx;
  return {{"grid",
           {{"nlat", m.grid.nlat},
            {"nlon", m.grid.nlon},
            {"lat0", m.grid.lat0},
            {"lat1", m.grid.lat1},
            {"lon0", m.grid.lon0},
            {"lon1", m.grid.lon1}}},
          {"fields", std::move(fields)},
          {"data_path", m.data_path}};
}

inline FieldStoreManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) detail::schema_fail("/", "manifest must be an object");
  detail::require_keys(j, "/", {"grid", "fields", "data_path"}, {});
  const nlohmann::json& g = j["grid"];
  if (!g.is_object()) detail::schema_fail("/grid", "grid must be an object");
  detail::require_keys(g, "/grid", {"nlat", "nlon", "lat0", "lat1", "lon0", "lon1"}, {});
  FieldStoreManifest m;
  auto u32 = [&](const char* k) {
    if (!g[k].is_number_unsigned())
      detail::schema_fail(std::string("/grid/") + k, "must be a non-negative integer");
    return g[k].get<std::uint32_t>();
  };
  auto f64 = [&](const char* k) {
    if (!g[k].is_number())
      detail::schema_fail(std::string("/grid/") + k, "must be a number");
    return g[k].get<double>();
  };
  m.grid.nlat = u32("nlat");
  m.grid.nlon = u32("nlon");
  m.grid.lat0 = f64("lat0");
  m.grid.lat1 = f64("lat1");
  m.grid.lon0 = f64("lon0");
  m.grid.lon1 = f64("lon1");
  if (!j["fields"].is_object()) detail::schema_fail("/fields", "fields must be an object");
  for (const auto& [key, idx] : j["fields"].items()) {
    if (!idx.is_number_unsigned())
      detail::schema_fail("/fields/" + key, "field index must be a non-negative integer");
    m.fields.emplace(key, idx.get<std::uint32_t>());
  }
  if (!j["data_path"].is_string())
    detail::schema_fail("/data_path", "data_path must be a string");
  m.data_path = j["data_path"].get<std::string>();
  try {
    m.validate();
  } catch (const QubeError& e) {
    detail::schema_fail("/", e.what());
  }
  return m;
}

// Store layout constants. Per field: 4-byte magic, u32 LE field index,
// u64 LE cell count, then cellCount f64 LE values; fields concatenated in
// field-index order.
inline constexpr char kFieldMagic[4] = {'Q', 'F', 'L', 'D'};
inline constexpr std::uint64_t kFieldHeaderBytes = 16;

/// Deterministic synthetic cell value: field index * 1e6 + cell index.
inline double mock_value(std::uint32_t field_index, std::uint64_t cell_index) {
  return static_cast<double>(field_index) * 1e6 + static_cast<double>(cell_index);
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline void put_f64_le(std::string& out, double d) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline double get_f64_le(const unsigned char* p) {
  return std::bit_cast<double>(get_u64_le(p));
}

}  // namespace detail

/// Writes the binary store the manifest describes, bit-exact and
/// deterministic: every field in index order, every cell filled with
/// mock_value(field, cell).
inline void write_mock_store(const FieldStoreManifest& m,
                             const std::filesystem::path& file) {
  m.validate();
  const std::uint64_t cells = m.grid.cell_count();
  std::string buf;
  buf.reserve(m.fields.size() * (kFieldHeaderBytes + cells * 8));

  std::vector<std::uint32_t> order;
  order.reserve(m.fields.size());
  for (const auto& [key, idx] : m.fields) order.push_back(idx);
  std::sort(order.begin(), order.end());

  for (std::uint32_t fi : order) {
    buf.append(kFieldMagic, 4);
    detail::put_u32_le(buf, fi);
    detail::put_u64_le(buf, cells);
    for (std::uint64_t ci = 0; ci < cells; ++ci)
      detail::put_f64_le(buf, mock_value(fi, ci));
  }

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw QubeError("cannot open store file '" + file.string() + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw QubeError("failed writing store file '" + file.string() + "'");
}

/// Builds the minimal read set for "these tuples, this feature": selects the
/// qube, maps each surviving leaf tuple to its field, multiplies by the
/// feature's cell runs, and coalesces. Deterministic for equal inputs.
inline AccessPlan plan(const Qube& q, const Constraint& c, const Feature& f,
                       const FieldStoreManifest& m) {
  m.validate();
  const std::vector<CellRun> runs = feature_to_indices(m.grid, f);
  const Qube sel = select(q, c);

  std::vector<ByteRange> ranges;
  std::set<std::uint32_t> fields;
  for_each_leaf(sel, [&](const Tuple& t, const PayloadRef&) {
    const std::string key = tuple_key(t);
    const auto it = m.fields.find(key);
    if (it == m.fields.end())
      throw UnknownFieldError("tuple '" + key + "' not in store manifest");
    fields.insert(it->second);
    for (const CellRun& r : runs)
      ranges.push_back(ByteRange{it->second, r.start * 8, r.count * 8});
  });

  AccessPlan p;
  p.ranges = coalesce(std::move(ranges));
  for (const ByteRange& r : p.ranges) p.total_bytes += r.length;
  p.fields_touched = static_cast<std::uint32_t>(fields.size());
  return p;
}

struct ExecuteResult {
  // (field index, cell index) -> value, for every cell the plan covers.
  std::map<std::pair<std::uint32_t, std::uint64_t>, double> values;
  std::uint64_t payload_bytes_read = 0;
  std::uint64_t header_bytes_read = 0;
};

/// Reads exactly the planned ranges from a store file. Geometry comes from
/// the file itself: the field-0 header fixes the cell count and therefore
/// the field stride; every touched field's header is then validated (magic,
/// index, cell count). payload_bytes_read counts range bytes only; headers
/// are tallied separately, once per distinct field probed.
inline ExecuteResult execute_plan(const AccessPlan& plan,
                                  const std::filesystem::path& store_file) {
  ExecuteResult res;
  if (plan.ranges.empty()) return res;

  std::ifstream in(store_file, std::ios::binary);
  if (!in) throw QubeError("cannot open store file '" + store_file.string() + "'");

  unsigned char header[kFieldHeaderBytes];
  auto read_header = [&](std::uint64_t at, std::uint32_t expect_index) -> std::uint64_t {
    in.seekg(static_cast<std::streamoff>(at));
    in.read(reinterpret_cast<char*>(header), sizeof header);
    if (in.gcount() != static_cast<std::streamsize>(sizeof header))
      throw ShortReadError("store file ends inside a field header");
    in.clear();
    if (std::memcmp(header, kFieldMagic, 4) != 0)
      throw CorruptFieldError("bad field magic at byte " + std::to_string(at));
    const std::uint32_t idx = detail::get_u32_le(header + 4);
    if (idx != expect_index)
      throw CorruptFieldError("field header index " + std::to_string(idx) +
                              " where " + std::to_string(expect_index) +
                              " was expected");
    res.header_bytes_read += kFieldHeaderBytes;
    return detail::get_u64_le(header + 8);
  };

  // Field 0 anchors the stride; a store serving a non-empty plan always
  // contains field 0 (manifest indices are dense).
  const std::uint64_t cells = read_header(0, 0);
  const std::uint64_t stride = kFieldHeaderBytes + cells * 8;

  std::set<std::uint32_t> validated{0};
  std::string buf;
  for (const ByteRange& r : plan.ranges) {
    if (validated.insert(r.field_index).second) {
      const std::uint64_t c =
          read_header(static_cast<std::uint64_t>(r.field_index) * stride,
                      r.field_index);
      if (c != cells)
        throw CorruptFieldError("field " + std::to_string(r.field_index) +
                                " cell count differs from field 0");
    }
    if (r.offset % 8 || r.length % 8)
      throw CorruptFieldError("range is not value-aligned");
    if (r.offset + r.length > cells * 8)
      throw CorruptFieldError("range exceeds field payload");

    const std::uint64_t base =
        static_cast<std::uint64_t>(r.field_index) * stride + kFieldHeaderBytes;
    buf.resize(r.length);
    in.seekg(static_cast<std::streamoff>(base + r.offset));
    in.read(buf.data(), static_cast<std::streamsize>(r.length));
    if (in.gcount() != static_cast<std::streamsize>(r.length))
      throw ShortReadError("store file ends inside a planned range");
    in.clear();
    res.payload_bytes_read += r.length;

    const std::uint64_t first_cell = r.offset / 8;
    for (std::uint64_t k = 0; k < r.length / 8; ++k)
      res.values[{r.field_index, first_cell + k}] = detail::get_f64_le(
          reinterpret_cast<const unsigned char*>(buf.data()) + k * 8);
  }
  return res;
}

/// Manifest for every leaf tuple of a qube, fields indexed in canonical
/// tuple order.
inline FieldStoreManifest manifest_for(const Qube& q, const GridSpec& grid,
                                       std::string data_path) {
  grid.validate();
  FieldStoreManifest m;
  m.grid = grid;
  m.data_path = std::move(data_path);
  std::uint32_t next = 0;
  for_each_leaf(compress(q), [&](const Tuple& t, const PayloadRef&) {
    const std::string key = tuple_key(t);
    if (!m.fields.emplace(key, next).second)
      throw QubeError("duplicate field key '" + key + "'");
    ++next;
  });
  return m;
}

}  // namespace qube
