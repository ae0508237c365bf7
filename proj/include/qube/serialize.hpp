#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qube/error.hpp"
#include "qube/qube.hpp"

namespace qube {

inline constexpr std::string_view kInterchangeVersion = "qube/1";

namespace detail {

inline std::string to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out += kHex[c >> 4];
    out += kHex[c & 0xf];
  }
  return out;
}

inline std::optional<std::string> from_hex(std::string_view hex) {
  if (hex.size() % 2) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out += static_cast<char>((hi << 4) | lo);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Canonical indented text: one node per line as `dim=v1/v2`, two spaces per
/// depth, payload appended as ` @key=<hex>`, first line exactly `root`.
/// Canonical input order is preserved, so the output of to_text on equal
/// qubes is byte-identical.
inline std::string to_text(const Qube& q) {
  std::string out = "root\n";
  auto walk = [&](auto&& self, const QubeNode& n, int depth) -> void {
    out.append(static_cast<std::size_t>(2 * depth), ' ');
    out += n.dim();
    out += '=';
    bool first = true;
    for (const CoordinateValue& v : n.values()) {
      if (!first) out += '/';
      out += encode_token(v);
      first = false;
    }
    if (n.payload().has_value()) {
      out += " @key=";
      out += detail::to_hex(n.payload().key);
    }
    out += '\n';
    for (const NodePtr& c : n.children()) self(self, *c, depth + 1);
  };
  for (const NodePtr& c : q.root().children()) walk(walk, *c, 1);
  return out;
}

namespace detail {

struct TextDraft {
  std::string dim;
  std::vector<CoordinateValue> values;
  PayloadRef payload;
  std::vector<NodePtr> kids;
  std::size_t line = 0;
};

}  // namespace detail

/// Parses the text format. Strict: spaces-only indentation in steps of two,
/// each line at most one level deeper than its parent, no interior blank
/// lines, payload only on leaf lines. Children may arrive unsorted and are
/// canonicalized into (dim, first value) order; sibling value overlaps and
/// repeated dimensions along a path are rejected with the offending line.
inline Qube from_text(std::string_view doc) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    for (std::size_t i = 0; i <= doc.size(); ++i) {
      if (i == doc.size() || doc[i] == '\n') {
        lines.push_back(doc.substr(start, i - start));
        start = i + 1;
      }
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
  }

  if (lines.empty() || lines[0] != "root")
    throw SyntaxError(1, "first line must be exactly 'root'");

  std::vector<detail::TextDraft> stack;
  stack.push_back({});  // synthetic root draft at depth 0
  stack.back().line = 1;

  auto close_top = [&stack] {
    detail::TextDraft draft = std::move(stack.back());
    stack.pop_back();
    NodePtr node;
    try {
      node = make_node(draft.dim, std::move(draft.values),
                       std::move(draft.kids), std::move(draft.payload));
    } catch (const QubeError& e) {
      throw SyntaxError(draft.line, e.what());
    }
    stack.back().kids.push_back(std::move(node));
  };

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    std::string_view line = lines[li];
    if (line.empty()) throw SyntaxError(line_no, "blank line");

    std::size_t indent = 0;
    while (indent < line.size() && line[indent] == ' ') ++indent;
    if (indent < line.size() && line[indent] == '\t')
      throw IndentError(line_no, "tab in indentation");
    if (indent % 2) throw IndentError(line_no, "odd indentation width");
    const std::size_t depth = indent / 2;
    if (depth == 0)
      throw SyntaxError(line_no, "second 'root'-level line");
    if (depth > stack.size())
      throw IndentError(line_no, "indentation jumps more than one level");
    while (stack.size() > depth) close_top();

    std::string_view content = line.substr(indent);
    PayloadRef payload = PayloadRef::none();
    if (const std::size_t at = content.find(" @key="); at != std::string_view::npos) {
      auto bytes = detail::from_hex(content.substr(at + 6));
      if (!bytes)
        throw SyntaxError(line_no, "malformed payload hex");
      payload = PayloadRef::storage_key(std::move(*bytes));
      content = content.substr(0, at);
    }

    const std::size_t eq = content.find('=');
    if (eq == std::string_view::npos)
      throw SyntaxError(line_no, "missing '=' between dimension and values");
    const std::string dim(content.substr(0, eq));
    try {
      validate_dimension_name(dim);
    } catch (const QubeError& e) {
      throw SyntaxError(line_no, e.what());
    }
    if (dim == kRootDimension)
      throw SyntaxError(line_no, "dimension name 'root' is reserved");
    for (std::size_t d = 1; d < stack.size(); ++d)
      if (stack[d].dim == dim)
        throw SyntaxError(line_no, "dimension '" + dim + "' repeats along path");

    detail::TextDraft draft;
    draft.dim = dim;
    draft.payload = std::move(payload);
    draft.line = line_no;
    const std::string_view rhs = content.substr(eq + 1);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= rhs.size(); ++i) {
      if (i == rhs.size() || rhs[i] == '/') {
        const std::string_view tok = rhs.substr(start, i - start);
        if (tok.empty()) throw SyntaxError(line_no, "empty value token");
        try {
          draft.values.push_back(decode_token(tok));
        } catch (const QubeError& e) {
          throw SyntaxError(line_no, e.what());
        }
        start = i + 1;
      }
    }
    stack.push_back(std::move(draft));
  }

  while (stack.size() > 1) close_top();

  NodePtr root;
  try {
    root = detail::make_root(std::move(stack.back().kids));
  } catch (const QubeError& e) {
    throw SyntaxError(1, e.what());
  }
  HashMemo memo;
  const bool canonical = detail::is_canonical_tree(*root, memo);
  return Qube::from_root(std::move(root), canonical);
}

// ---------------------------------------------------------------------------
// Interchange JSON
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json value_to_json(const CoordinateValue& v) {
  switch (v.tag()) {
    case ValueTag::Int:
      return {{"tag", "int"}, {"value", v.as_int()}};
    case ValueTag::Str:
      return {{"tag", "str"}, {"value", v.as_str()}};
    case ValueTag::Date:
    case ValueTag::Timestamp:
      // Strings, so no 53-bit float hazard and no sniffing on the way back.
      return {{"tag", tag_name(v.tag())}, {"value", render_value(v)}};
  }
  return {};
}

inline nlohmann::json node_to_json(const QubeNode& n) {
  nlohmann::json values = nlohmann::json::array();
  for (const CoordinateValue& v : n.values()) values.push_back(value_to_json(v));
  nlohmann::json children = nlohmann::json::array();
  for (const NodePtr& c : n.children()) children.push_back(node_to_json(*c));
  nlohmann::json j{{"dim", n.dim()},
                   {"values", std::move(values)},
                   {"children", std::move(children)}};
  if (n.payload().has_value())
    j["payload"] = {{"key", to_hex(n.payload().key)}};
  return j;
}

[[noreturn]] inline void schema_fail(const std::string& path, const std::string& msg) {
  throw SchemaError(path, msg);
}

inline void require_keys(const nlohmann::json& j, const std::string& path,
                         std::initializer_list<std::string_view> required,
                         std::initializer_list<std::string_view> optional) {
  for (std::string_view k : required)
    if (!j.contains(k)) schema_fail(path, "missing key '" + std::string(k) + "'");
  for (const auto& [key, unused] : j.items()) {
    bool known = false;
    for (std::string_view k : required) known |= (key == k);
    for (std::string_view k : optional) known |= (key == k);
    if (!known) schema_fail(path, "unknown key '" + key + "'");
  }
}

inline CoordinateValue value_from_json(const nlohmann::json& j,
                                       const std::string& path) {
  if (!j.is_object()) schema_fail(path, "value must be an object");
  require_keys(j, path, {"tag", "value"}, {});
  if (!j["tag"].is_string()) schema_fail(path + "/tag", "tag must be a string");
  const auto tag = tag_from_name(j["tag"].get<std::string>());
  if (!tag) schema_fail(path + "/tag", "unknown tag '" + j["tag"].get<std::string>() + "'");
  const nlohmann::json& v = j["value"];
  const std::string vpath = path + "/value";
  try {
    switch (*tag) {
      case ValueTag::Int: {
        if (!v.is_number_integer()) schema_fail(vpath, "int value must be a JSON integer");
        if (v.is_number_unsigned() &&
            v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
          schema_fail(vpath, "int value exceeds int64");
        return CoordinateValue::of_int(v.get<std::int64_t>());
      }
      case ValueTag::Str: {
        if (!v.is_string()) schema_fail(vpath, "str value must be a JSON string");
        return CoordinateValue::of_str(v.get<std::string>());
      }
      case ValueTag::Date: {
        if (!v.is_string()) schema_fail(vpath, "date value must be a string");
        auto d = parse_date_token(v.get<std::string>());
        if (!d) schema_fail(vpath, "malformed date '" + v.get<std::string>() + "'");
        return CoordinateValue::of_date(*d);
      }
      case ValueTag::Timestamp: {
        if (!v.is_string()) schema_fail(vpath, "timestamp value must be a string");
        auto t = parse_timestamp_token(v.get<std::string>());
        if (!t) schema_fail(vpath, "malformed timestamp '" + v.get<std::string>() + "'");
        return CoordinateValue::of_timestamp(*t);
      }
    }
  } catch (const SchemaError&) {
    throw;
  } catch (const QubeError& e) {
    schema_fail(vpath, e.what());
  }
  schema_fail(path, "unreachable");
}

inline NodePtr node_from_json(const nlohmann::json& j, const std::string& path,
                              std::vector<std::string>& ancestors) {
  if (!j.is_object()) schema_fail(path, "node must be an object");
  require_keys(j, path, {"dim", "values", "children"}, {"payload"});

  if (!j["dim"].is_string()) schema_fail(path + "/dim", "dim must be a string");
  const std::string dim = j["dim"].get<std::string>();
  try {
    validate_dimension_name(dim);
  } catch (const QubeError& e) {
    schema_fail(path + "/dim", e.what());
  }
  if (dim == kRootDimension)
    schema_fail(path + "/dim", "dimension name 'root' is reserved");
  for (const std::string& a : ancestors)
    if (a == dim)
      schema_fail(path + "/dim", "dimension '" + dim + "' repeats along path");

  if (!j["values"].is_array() || j["values"].empty())
    schema_fail(path + "/values", "values must be a non-empty array");
  std::vector<CoordinateValue> values;
  values.reserve(j["values"].size());
  for (std::size_t i = 0; i < j["values"].size(); ++i)
    values.push_back(value_from_json(j["values"][i],
                                     path + "/values/" + std::to_string(i)));

  PayloadRef payload = PayloadRef::none();
  if (j.contains("payload")) {
    const nlohmann::json& p = j["payload"];
    const std::string ppath = path + "/payload";
    if (!p.is_object()) schema_fail(ppath, "payload must be an object");
    require_keys(p, ppath, {"key"}, {});
    if (!p["key"].is_string()) schema_fail(ppath + "/key", "key must be a hex string");
    auto bytes = from_hex(p["key"].get<std::string>());
    if (!bytes) schema_fail(ppath + "/key", "malformed hex");
    payload = PayloadRef::storage_key(std::move(*bytes));
  }

  if (!j["children"].is_array())
    schema_fail(path + "/children", "children must be an array");
  ancestors.push_back(dim);
  std::vector<NodePtr> kids;
  kids.reserve(j["children"].size());
  for (std::size_t i = 0; i < j["children"].size(); ++i)
    kids.push_back(node_from_json(j["children"][i],
                                  path + "/children/" + std::to_string(i),
                                  ancestors));
  ancestors.pop_back();

  try {
    return make_node(dim, std::move(values), std::move(kids), std::move(payload));
  } catch (const QubeError& e) {
    schema_fail(path, e.what());
  }
}

}  // namespace detail

/// Versioned JSON document: {"version":"qube/1","root":{"children":[...]}}.
/// Object keys serialize alphabetically, so equal qubes dump to identical
/// text.
inline nlohmann::json to_interchange(const Qube& q) {
  nlohmann::json children = nlohmann::json::array();
  for (const NodePtr& c : q.root().children())
    children.push_back(detail::node_to_json(*c));
  return {{"version", std::string(kInterchangeVersion)},
          {"root", {{"children", std::move(children)}}}};
}

inline Qube from_interchange(const nlohmann::json& j) {
  if (!j.is_object()) detail::schema_fail("/", "document must be an object");
  detail::require_keys(j, "/", {"version", "root"}, {});
  if (!j["version"].is_string() ||
      j["version"].get<std::string>() != kInterchangeVersion)
    detail::schema_fail("/version", "unsupported version (expected 'qube/1')");
  const nlohmann::json& root = j["root"];
  if (!root.is_object()) detail::schema_fail("/root", "root must be an object");
  detail::require_keys(root, "/root", {"children"}, {});
  if (!root["children"].is_array())
    detail::schema_fail("/root/children", "children must be an array");

  std::vector<std::string> ancestors;
  std::vector<NodePtr> kids;
  kids.reserve(root["children"].size());
  for (std::size_t i = 0; i < root["children"].size(); ++i)
    kids.push_back(detail::node_from_json(
        root["children"][i], "/root/children/" + std::to_string(i), ancestors));

  NodePtr r;
  try {
    r = detail::make_root(std::move(kids));
  } catch (const QubeError& e) {
    detail::schema_fail("/root", e.what());
  }
  HashMemo memo;
  const bool canonical = detail::is_canonical_tree(*r, memo);
  return Qube::from_root(std::move(r), canonical);
}

inline std::string to_interchange_text(const Qube& q) {
  return to_interchange(q).dump(2) + "\n";
}

inline Qube from_interchange_text(std::string_view doc) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("/", std::string("invalid JSON: ") + e.what());
  }
  return from_interchange(j);
}

}  // namespace qube
