#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qube/error.hpp"
#include "qube/qube.hpp"
#include "qube/setops.hpp"

namespace qube {

/// One flat metadata line: ordered (dimension, value list) pairs. A record
/// denotes the Cartesian product of its value lists. Value lists keep caller
/// order (and duplicates); rendering preserves them.
struct MetadataRecord {
  std::vector<std::pair<DimensionName, std::vector<CoordinateValue>>> pairs;

  std::uint64_t cartesian_size() const {
    std::uint64_t n = 1;
    for (const auto& [dim, values] : pairs) n *= values.size();
    return pairs.empty() ? 0 : n;
  }

  friend bool operator==(const MetadataRecord&, const MetadataRecord&) = default;
};

/// Parses the record grammar: one record per non-empty, non-comment line,
/// `dim1=v1[/v2...],dim2=...`; `#` as the first character starts a comment
/// line; values are typed by sniffing unless a trailing ~s/~i marker or a
/// per-dimension override says otherwise. Whitespace-only lines are skipped.
inline std::vector<MetadataRecord> parse_records(
    std::string_view text,
    const std::map<DimensionName, ValueTag>& type_overrides = {}) {
  std::vector<MetadataRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    pos = eol + 1;
    if (eol == text.size() && line.empty()) break;

    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    if (line.front() == '#') continue;

    MetadataRecord rec;
    std::size_t field_start = 0;
    while (field_start <= line.size()) {
      std::size_t field_end = line.find(',', field_start);
      if (field_end == std::string_view::npos) field_end = line.size();
      const std::string_view field = line.substr(field_start, field_end - field_start);
      const std::size_t col0 = field_start + 1;  // 1-based column of the field

      const std::size_t eq = field.find('=');
      if (eq == std::string_view::npos)
        throw SyntaxError(line_no, col0, "expected 'dim=values'");
      const std::string dim(field.substr(0, eq));
      try {
        validate_dimension_name(dim);
      } catch (const QubeError& e) {
        throw SyntaxError(line_no, col0, e.what());
      }
      if (dim == kRootDimension)
        throw SyntaxError(line_no, col0, "dimension name 'root' is reserved");
      for (const auto& [existing, values] : rec.pairs)
        if (existing == dim) throw DuplicateDimensionError(dim, line_no);

      std::optional<ValueTag> force;
      if (auto it = type_overrides.find(dim); it != type_overrides.end())
        force = it->second;

      std::vector<CoordinateValue> values;
      const std::string_view rhs = field.substr(eq + 1);
      std::size_t tok_start = 0;
      for (std::size_t i = 0; i <= rhs.size(); ++i) {
        if (i == rhs.size() || rhs[i] == '/') {
          const std::string_view tok = rhs.substr(tok_start, i - tok_start);
          const std::size_t tok_col = col0 + eq + 1 + tok_start;
          if (tok.empty())
            throw SyntaxError(line_no, tok_col, "empty value");
          try {
            values.push_back(decode_token(tok, force));
          } catch (const QubeError& e) {
            throw SyntaxError(line_no, tok_col, e.what());
          }
          tok_start = i + 1;
        }
      }
      rec.pairs.emplace_back(dim, std::move(values));
      field_start = field_end + 1;
      if (field_end == line.size()) break;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// Inverse of parse_records for the defined grammar: one line per record,
/// tokens escaped and marker-suffixed so every value re-parses to itself.
inline std::string render_records(std::span<const MetadataRecord> records) {
  std::string out;
  for (const MetadataRecord& rec : records) {
    bool first_pair = true;
    for (const auto& [dim, values] : rec.pairs) {
      if (!first_pair) out += ',';
      out += dim;
      out += '=';
      bool first_value = true;
      for (const CoordinateValue& v : values) {
        if (!first_value) out += '/';
        out += encode_token(v);
        first_value = false;
      }
      first_pair = false;
    }
    out += '\n';
  }
  return out;
}

/// Cartesian expansion, odometer order with the rightmost dimension fastest.
inline std::vector<Tuple> expand_record(const MetadataRecord& rec) {
  for (std::size_t i = 0; i < rec.pairs.size(); ++i) {
    if (rec.pairs[i].second.empty())
      throw QubeError("record value list for '" + rec.pairs[i].first + "' is empty");
    for (std::size_t j = 0; j < i; ++j)
      if (rec.pairs[j].first == rec.pairs[i].first)
        throw DuplicateDimensionError(rec.pairs[i].first);
  }
  std::vector<Tuple> out;
  if (rec.pairs.empty()) return out;
  out.reserve(rec.cartesian_size());
  Tuple cur(rec.pairs.size());
  auto walk = [&](auto&& self, std::size_t d) -> void {
    if (d == rec.pairs.size()) {
      out.push_back(cur);
      return;
    }
    for (const CoordinateValue& v : rec.pairs[d].second) {
      cur[d] = {rec.pairs[d].first, v};
      self(self, d + 1);
    }
  };
  walk(walk, 0);
  return out;
}

enum class MergeStrategy {
  Sequential,    // fold batches left to right
  PairwiseTree,  // merge adjacent pairs, then pairs of results, ...
};

struct BuildConfig {
  std::size_t batch_size = 64;
  bool compress_each_batch = true;
  MergeStrategy merge_strategy = MergeStrategy::Sequential;
  /// Optional reorder of the built batch qubes before merging. Reordering
  /// never changes the result (union is order-independent up to canonical
  /// form), only the intermediate sizes.
  std::function<void(std::vector<Qube>&)> batch_order_hook;
};

struct BuildStats {
  std::uint64_t batches = 0;
  /// Largest nodeCount observed among batch qubes entering the merge and
  /// merge intermediates (final result included).
  std::uint64_t peak_intermediate_node_count = 0;
};

/// Batched construction: expand each batch of records to tuples, build,
/// optionally compress, then merge all batch qubes under the chosen
/// strategy. The result is canonical and independent of batch size,
/// strategy, and per-batch compression; those knobs only shape intermediate
/// sizes, which BuildStats reports.
inline Qube build(std::span<const MetadataRecord> records,
                  const BuildConfig& cfg = {}, BuildStats* stats = nullptr) {
  if (cfg.batch_size == 0) throw QubeError("batch_size must be >= 1");

  auto note = [&](const Qube& q) {
    if (stats)
      stats->peak_intermediate_node_count =
          std::max(stats->peak_intermediate_node_count, count_nodes(q));
  };

  std::vector<Qube> batches;
  std::vector<Tuple> tuples;
  for (std::size_t at = 0; at < records.size(); at += cfg.batch_size) {
    const std::size_t end = std::min(at + cfg.batch_size, records.size());
    tuples.clear();
    for (std::size_t i = at; i < end; ++i) {
      std::vector<Tuple> expanded = expand_record(records[i]);
      tuples.insert(tuples.end(), std::make_move_iterator(expanded.begin()),
                    std::make_move_iterator(expanded.end()));
    }
    Qube q = from_tuples(tuples);
    if (cfg.compress_each_batch) q = compress(q);
    note(q);
    batches.push_back(std::move(q));
  }
  if (stats) stats->batches = batches.size();
  if (batches.empty()) return Qube::empty();
  if (cfg.batch_order_hook) cfg.batch_order_hook(batches);

  switch (cfg.merge_strategy) {
    case MergeStrategy::Sequential: {
      Qube acc = batches.front();
      for (std::size_t i = 1; i < batches.size(); ++i) {
        acc = union_of(acc, batches[i]);
        note(acc);
      }
      acc = compress(acc);  // no-op unless the single batch skipped compression
      note(acc);
      return acc;
    }
    case MergeStrategy::PairwiseTree: {
      std::vector<Qube> round = std::move(batches);
      while (round.size() > 1) {
        std::vector<Qube> next;
        next.reserve((round.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < round.size(); i += 2) {
          next.push_back(union_of(round[i], round[i + 1]));
          note(next.back());
        }
        if (round.size() % 2) next.push_back(std::move(round.back()));
        round = std::move(next);
      }
      Qube acc = compress(std::move(round.front()));
      note(acc);
      return acc;
    }
  }
  throw QubeError("unreachable merge strategy");
}

inline Qube build(const std::vector<MetadataRecord>& records,
                  const BuildConfig& cfg = {}, BuildStats* stats = nullptr) {
  return build(std::span<const MetadataRecord>(records), cfg, stats);
}

}  // namespace qube
