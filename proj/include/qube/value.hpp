#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "qube/error.hpp"

namespace qube {

using DimensionName = std::string;

/// Coordinate value tags, in comparison-rank order: values of different tags
/// compare by tag rank first, then naturally within a tag. This makes the
/// value order total across mixed-type axes.
enum class ValueTag : std::uint8_t { Int = 0, Str = 1, Date = 2, Timestamp = 3 };

inline const char* tag_name(ValueTag t) {
  switch (t) {
    case ValueTag::Int: return "int";
    case ValueTag::Str: return "str";
    case ValueTag::Date: return "date";
    case ValueTag::Timestamp: return "timestamp";
  }
  return "?";
}

inline std::optional<ValueTag> tag_from_name(std::string_view name) {
  if (name == "int") return ValueTag::Int;
  if (name == "str") return ValueTag::Str;
  if (name == "date") return ValueTag::Date;
  if (name == "timestamp") return ValueTag::Timestamp;
  return std::nullopt;
}

/// Calendar day packed as yyyymmdd; packed order equals calendar order.
struct Date {
  std::uint32_t ymd = 10101;  // 0001-01-01

  friend constexpr auto operator<=>(const Date&, const Date&) = default;
};

/// Second-precision instant packed as yyyymmddHHMMSS.
struct Timestamp {
  std::uint64_t ymdhms = 10101000000ULL;  // 0001-01-01T00:00:00

  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

namespace detail {

inline bool leap_year(unsigned y) {
  return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0);
}

inline unsigned days_in_month(unsigned y, unsigned m) {
  static constexpr unsigned kDays[12] = {31, 28, 31, 30, 31, 30,
                                         31, 31, 30, 31, 30, 31};
  if (m == 2 && leap_year(y)) return 29;
  return m >= 1 && m <= 12 ? kDays[m - 1] : 0;
}

}  // namespace detail

inline bool valid_date(std::uint32_t ymd) {
  const unsigned y = ymd / 10000;
  const unsigned m = (ymd / 100) % 100;
  const unsigned d = ymd % 100;
  return y <= 9999 && m >= 1 && m <= 12 && d >= 1 &&
         d <= detail::days_in_month(y, m);
}

inline bool valid_timestamp(std::uint64_t ymdhms) {
  const std::uint64_t hms = ymdhms % 1000000ULL;
  const std::uint64_t ymd = ymdhms / 1000000ULL;
  const unsigned hh = static_cast<unsigned>(hms / 10000);
  const unsigned mm = static_cast<unsigned>((hms / 100) % 100);
  const unsigned ss = static_cast<unsigned>(hms % 100);
  return ymd <= 99991231ULL && valid_date(static_cast<std::uint32_t>(ymd)) &&
         hh < 24 && mm < 60 && ss < 60;
}

/// One coordinate on one axis. Immutable value type with a total order:
/// tag rank (Int < Str < Date < Timestamp) first, natural order within a tag.
/// Str compares bytewise.
class CoordinateValue {
 public:
  CoordinateValue() = default;  // Int 0

  static CoordinateValue of_int(std::int64_t v) {
    return CoordinateValue(Repr(std::in_place_index<0>, v));
  }
  static CoordinateValue of_str(std::string s) {
    return CoordinateValue(Repr(std::in_place_index<1>, std::move(s)));
  }
  static CoordinateValue of_date(std::uint32_t ymd) {
    if (!valid_date(ymd))
      throw QubeError("invalid date " + std::to_string(ymd));
    return CoordinateValue(Repr(std::in_place_index<2>, Date{ymd}));
  }
  static CoordinateValue of_timestamp(std::uint64_t ymdhms) {
    if (!valid_timestamp(ymdhms))
      throw QubeError("invalid timestamp " + std::to_string(ymdhms));
    return CoordinateValue(Repr(std::in_place_index<3>, Timestamp{ymdhms}));
  }

  ValueTag tag() const { return static_cast<ValueTag>(v_.index()); }

  std::int64_t as_int() const { return std::get<0>(v_); }
  const std::string& as_str() const { return std::get<1>(v_); }
  Date as_date() const { return std::get<2>(v_); }
  Timestamp as_timestamp() const { return std::get<3>(v_); }

  friend bool operator==(const CoordinateValue&,
                         const CoordinateValue&) = default;
  // variant's <=> compares alternative index first, which is exactly the
  // tag-rank rule.
  friend std::strong_ordering operator<=>(const CoordinateValue&,
                                          const CoordinateValue&) = default;

 private:
  using Repr = std::variant<std::int64_t, std::string, Date, Timestamp>;
  explicit CoordinateValue(Repr r) : v_(std::move(r)) {}
  Repr v_;
};

inline std::size_t hash_code(const CoordinateValue& v) {
  std::size_t h = 0;
  switch (v.tag()) {
    case ValueTag::Int:
      h = std::hash<std::int64_t>{}(v.as_int());
      break;
    case ValueTag::Str:
      h = std::hash<std::string>{}(v.as_str());
      break;
    case ValueTag::Date:
      h = std::hash<std::uint32_t>{}(v.as_date().ymd);
      break;
    case ValueTag::Timestamp:
      h = std::hash<std::uint64_t>{}(v.as_timestamp().ymdhms);
      break;
  }
  // Mix the tag so equal payload bits under different tags do not collide.
  return h ^ (static_cast<std::size_t>(v.tag()) * 0x9e3779b97f4a7c15ULL);
}

// ---------------------------------------------------------------------------
// Dimension names
// ---------------------------------------------------------------------------

/// Reserved dimension of the synthetic root node. Never legal in tuples,
/// records, or serialized child nodes.
inline constexpr std::string_view kRootDimension = "root";

/// Dimension names are bytewise-compared tokens: non-empty, free of the
/// structural characters , = / and newline, and free of whitespace/control
/// bytes (a dim is the first thing on a line in both text grammars).
inline bool dimension_name_ok(std::string_view dim) {
  if (dim.empty()) return false;
  for (unsigned char c : dim) {
    if (c == ',' || c == '=' || c == '/' || c == '\n') return false;
    if (c < 0x21 || c == 0x7f) return false;  // space, controls, DEL
  }
  return true;
}

inline void validate_dimension_name(std::string_view dim) {
  if (dim.empty()) throw EmptyDimensionNameError();
  if (!dimension_name_ok(dim))
    throw QubeError("invalid dimension name '" + std::string(dim) + "'");
}

// ---------------------------------------------------------------------------
// Token rendering, sniffing, percent-escaping
// ---------------------------------------------------------------------------

namespace detail {

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

inline std::optional<std::uint64_t> parse_digits_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline std::optional<std::uint32_t> parse_date_token(std::string_view s) {
  if (s.size() != 8 || !detail::all_digits(s)) return std::nullopt;
  auto v = detail::parse_digits_u64(s);
  if (!v || !valid_date(static_cast<std::uint32_t>(*v))) return std::nullopt;
  return static_cast<std::uint32_t>(*v);
}

inline std::optional<std::uint64_t> parse_timestamp_token(std::string_view s) {
  if (s.size() != 15 || s[8] != 'T') return std::nullopt;
  std::string_view d = s.substr(0, 8), t = s.substr(9);
  if (!detail::all_digits(d) || !detail::all_digits(t)) return std::nullopt;
  const std::uint64_t packed =
      *detail::parse_digits_u64(d) * 1000000ULL + *detail::parse_digits_u64(t);
  if (!valid_timestamp(packed)) return std::nullopt;
  return packed;
}

inline std::optional<std::int64_t> parse_int_token(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Deterministic type detection, most specific form first:
/// valid YYYYMMDDTHHMMSS -> Timestamp, valid YYYYMMDD -> Date,
/// optional-sign digit run fitting int64 -> Int, anything else -> Str.
inline CoordinateValue sniff_value(std::string_view raw) {
  if (auto ts = parse_timestamp_token(raw)) return CoordinateValue::of_timestamp(*ts);
  if (auto d = parse_date_token(raw)) return CoordinateValue::of_date(*d);
  if (auto i = parse_int_token(raw)) return CoordinateValue::of_int(*i);
  return CoordinateValue::of_str(std::string(raw));
}

/// Canonical text of a value, without escaping or type markers.
inline std::string render_value(const CoordinateValue& v) {
  char buf[32];
  switch (v.tag()) {
    case ValueTag::Int:
      return std::to_string(v.as_int());
    case ValueTag::Str:
      return v.as_str();
    case ValueTag::Date:
      std::snprintf(buf, sizeof buf, "%08u", v.as_date().ymd);
      return buf;
    case ValueTag::Timestamp: {
      const std::uint64_t p = v.as_timestamp().ymdhms;
      std::snprintf(buf, sizeof buf, "%08lluT%06llu",
                    static_cast<unsigned long long>(p / 1000000ULL),
                    static_cast<unsigned long long>(p % 1000000ULL));
      return buf;
    }
  }
  return {};
}

inline bool reserved_token_char(char c) {
  return c == ',' || c == '=' || c == '/' || c == '%' || c == '\n';
}

/// Percent-encodes exactly the reserved set , = / % newline (uppercase hex).
inline std::string percent_encode(std::string_view raw) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (reserved_token_char(c)) {
      out += '%';
      out += kHex[static_cast<unsigned char>(c) >> 4];
      out += kHex[static_cast<unsigned char>(c) & 0xf];
    } else {
      out += c;
    }
  }
  return out;
}

/// Decodes any %XX pair (either hex case); throws QubeError on a malformed
/// escape. Permissive decode lets %2E protect a literal ".." from range
/// syntax even though '.' is not in the reserved set.
inline std::string percent_decode(std::string_view tok) {
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(tok.size());
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (tok[i] != '%') {
      out += tok[i];
      continue;
    }
    const int h1 = i + 1 < tok.size() ? hex(tok[i + 1]) : -1;
    const int h2 = i + 2 < tok.size() ? hex(tok[i + 2]) : -1;
    if (h1 < 0 || h2 < 0)
      throw QubeError("malformed percent escape in token '" +
                      std::string(tok) + "'");
    out += static_cast<char>((h1 << 4) | h2);
    i += 2;
  }
  return out;
}

/// Escaped token text for any text surface (records, constraints, text
/// serialization). Appends ~s / ~i type markers exactly when re-sniffing the
/// raw rendering would yield a different value.
inline std::string encode_token(const CoordinateValue& v) {
  const std::string raw = render_value(v);
  std::string out = percent_encode(raw);
  switch (v.tag()) {
    case ValueTag::Str: {
      const bool marker_lookalike =
          raw.size() >= 2 && raw[raw.size() - 2] == '~' &&
          (raw.back() == 's' || raw.back() == 'i');
      if (raw.empty() || marker_lookalike || sniff_value(raw) != v) out += "~s";
      break;
    }
    case ValueTag::Int:
      // Ints whose decimal form is a valid calendar date (e.g. 20200101)
      // would re-sniff as Date.
      if (sniff_value(raw) != v) out += "~i";
      break;
    case ValueTag::Date:
    case ValueTag::Timestamp:
      break;  // canonical renderings always re-sniff to themselves
  }
  return out;
}

/// Parses one escaped token. A trailing ~s / ~i marker wins over `force`;
/// otherwise `force` selects the type; otherwise the value is sniffed.
inline CoordinateValue decode_token(std::string_view tok,
                                    std::optional<ValueTag> force = {}) {
  std::optional<ValueTag> marker;
  if (tok.size() >= 2 && tok[tok.size() - 2] == '~') {
    if (tok.back() == 's') marker = ValueTag::Str;
    if (tok.back() == 'i') marker = ValueTag::Int;
    if (marker) tok.remove_suffix(2);
  }
  const std::string raw = percent_decode(tok);
  const std::optional<ValueTag> want = marker ? marker : force;
  if (!want) return sniff_value(raw);
  switch (*want) {
    case ValueTag::Str:
      return CoordinateValue::of_str(raw);
    case ValueTag::Int: {
      auto i = parse_int_token(raw);
      if (!i) throw QubeError("cannot parse '" + raw + "' as int");
      return CoordinateValue::of_int(*i);
    }
    case ValueTag::Date: {
      auto d = parse_date_token(raw);
      if (!d) throw QubeError("cannot parse '" + raw + "' as date");
      return CoordinateValue::of_date(*d);
    }
    case ValueTag::Timestamp: {
      auto t = parse_timestamp_token(raw);
      if (!t) throw QubeError("cannot parse '" + raw + "' as timestamp");
      return CoordinateValue::of_timestamp(*t);
    }
  }
  throw QubeError("unreachable tag");
}

}  // namespace qube

template <>
struct std::hash<qube::CoordinateValue> {
  std::size_t operator()(const qube::CoordinateValue& v) const {
    return qube::hash_code(v);
  }
};
