#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qube/error.hpp"
#include "qube/qube.hpp"

namespace qube {

/// Per-dimension filter. Range endpoints must share a tag and satisfy
/// lo <= hi; matching a Range against a value of a different tag is a hard
/// error (silent emptiness would hide type mistakes in constraints).
class Predicate {
 public:
  enum class Kind { ValueSet, Range, Any };

  static Predicate any() { return Predicate(Kind::Any); }

  static Predicate value_set(std::vector<CoordinateValue> values) {
    if (values.empty()) throw QubeError("empty value set predicate");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    Predicate p(Kind::ValueSet);
    p.values_ = std::move(values);
    return p;
  }

  static Predicate range(CoordinateValue lo, CoordinateValue hi) {
    if (lo.tag() != hi.tag())
      throw MixedTagRangeError("range endpoints have different tags: " +
                               std::string(tag_name(lo.tag())) + " vs " +
                               std::string(tag_name(hi.tag())));
    if (hi < lo) throw QubeError("range lower bound exceeds upper bound");
    Predicate p(Kind::Range);
    p.lo_ = std::move(lo);
    p.hi_ = std::move(hi);
    return p;
  }

  Kind kind() const { return kind_; }
  const std::vector<CoordinateValue>& values() const { return values_; }
  const CoordinateValue& lo() const { return lo_; }
  const CoordinateValue& hi() const { return hi_; }

  bool matches(const CoordinateValue& v) const {
    switch (kind_) {
      case Kind::Any:
        return true;
      case Kind::ValueSet:
        return std::binary_search(values_.begin(), values_.end(), v);
      case Kind::Range:
        if (v.tag() != lo_.tag())
          throw MixedTagRangeError(
              "range over " + std::string(tag_name(lo_.tag())) +
              " values met a " + std::string(tag_name(v.tag())) + " value");
        return lo_ <= v && v <= hi_;
    }
    return false;
  }

 private:
  explicit Predicate(Kind k) : kind_(k) {}
  Kind kind_;
  std::vector<CoordinateValue> values_;
  CoordinateValue lo_, hi_;
};

/// What happens to branches that lack a constrained dimension entirely:
/// KeepBranch admits them (the constraint is vacuous there), DropBranch
/// requires every constrained dimension to appear on the path.
enum class MissingPolicy { KeepBranch, DropBranch };

struct Constraint {
  std::map<DimensionName, Predicate> by_dim;
  MissingPolicy missing = MissingPolicy::KeepBranch;
};

/// Selection instrumentation: counts nodes entered by the recursive walk.
/// Pruned branches are never entered, which is the point of counting.
struct SelectStats {
  std::uint64_t nodes_visited = 0;
};

namespace detail {

inline NodePtr select_node(const NodePtr& n, const Constraint& c,
                           std::size_t matched_dims, OpContext& ctx,
                           SelectStats* st) {
  if (st) ++st->nodes_visited;

  const Predicate* pred = nullptr;
  if (auto it = c.by_dim.find(n->dim()); it != c.by_dim.end()) {
    pred = &it->second;
    ++matched_dims;
  }

  std::vector<CoordinateValue> values;
  if (pred) {
    for (const CoordinateValue& v : n->values())
      if (pred->matches(v)) values.push_back(v);
    if (values.empty()) return nullptr;  // prune: children never visited
  } else {
    values = n->values();
  }

  if (n->is_leaf()) {
    if (c.missing == MissingPolicy::DropBranch && matched_dims < c.by_dim.size())
      return nullptr;
    return values.size() == n->values().size()
               ? n
               : ctx.interner.intern(
                     make_node(n->dim(), std::move(values), {}, n->payload()));
  }

  std::vector<NodePtr> kids;
  kids.reserve(n->children().size());
  bool changed = values.size() != n->values().size();
  for (const NodePtr& child : n->children()) {
    NodePtr k = select_node(child, c, matched_dims, ctx, st);
    if (!k) {
      changed = true;
      continue;
    }
    changed |= (k != child);
    kids.push_back(std::move(k));
  }
  if (kids.empty()) return nullptr;  // interior with no surviving children
  if (!changed) return n;

  // Filtering can make previously distinct siblings mergeable (their
  // differing children may have been pruned to equal lists), so the result
  // goes through the same canonicalization step compression uses.
  auto [kids2, merged] = canonicalize_children(std::move(kids), ctx);
  (void)merged;
  return ctx.interner.intern(
      make_node(n->dim(), std::move(values), std::move(kids2), n->payload()));
}

}  // namespace detail

/// Constrained subset: keeps exactly the tuples whose values satisfy every
/// predicate, subject to the missing-dimension policy. Branches whose value
/// sets miss a predicate entirely are pruned without visiting their
/// subtrees. Returns a canonical qube.
inline Qube select(const Qube& q, const Constraint& c,
                   SelectStats* st = nullptr) {
  const Qube cq = compress(q);
  detail::OpContext ctx;
  std::vector<NodePtr> kids;
  if (st) ++st->nodes_visited;  // the root itself
  for (const NodePtr& child : cq.root().children()) {
    NodePtr k = detail::select_node(child, c, 0, ctx, st);
    if (k) kids.push_back(std::move(k));
  }
  auto [kids2, merged] = detail::canonicalize_children(std::move(kids), ctx);
  (void)merged;
  return Qube::from_root(detail::make_root(std::move(kids2)), true);
}

/// Every dimension in the qube with its full sorted value universe.
/// The synthetic root is excluded.
inline std::map<DimensionName, std::vector<CoordinateValue>> axes(const Qube& q) {
  std::map<DimensionName, std::set<CoordinateValue>> acc;
  std::unordered_set<const QubeNode*> visited;
  auto walk = [&](auto&& self, const QubeNode& n) -> void {
    if (!visited.insert(&n).second) return;
    acc[n.dim()].insert(n.values().begin(), n.values().end());
    for (const NodePtr& c : n.children()) self(self, *c);
  };
  for (const NodePtr& c : q.root().children()) walk(walk, *c);

  std::map<DimensionName, std::vector<CoordinateValue>> out;
  for (auto& [dim, values] : acc)
    out.emplace(dim, std::vector<CoordinateValue>(values.begin(), values.end()));
  return out;
}

// ---------------------------------------------------------------------------
// Constraint grammar
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

}  // namespace detail

/// Parses `dim=v1/v2`, `dim=lo..hi`, `dim=*`, comma-separated. Range and
/// value-set syntax is recognized before percent-decoding, so %2F, %3D, %2E
/// protect literal / = . inside tokens. The expression "" (or all-blank)
/// yields the empty constraint, which matches everything.
inline Constraint parse_constraint(std::string_view expr,
                                   MissingPolicy missing = MissingPolicy::KeepBranch) {
  Constraint c;
  c.missing = missing;
  if (expr.empty()) return c;

  for (std::string_view clause : detail::split_on(expr, ',')) {
    if (clause.empty())
      throw SyntaxError(1, "empty constraint clause");
    const std::size_t eq = clause.find('=');
    if (eq == std::string_view::npos)
      throw SyntaxError(1, "constraint clause '" + std::string(clause) +
                               "' lacks '='");
    const std::string dim(clause.substr(0, eq));
    const std::string_view rhs = clause.substr(eq + 1);
    try {
      validate_dimension_name(dim);
    } catch (const QubeError& e) {
      throw SyntaxError(1, e.what());
    }
    if (c.by_dim.count(dim)) throw DuplicateDimensionError(dim);

    try {
      if (rhs == "*") {
        c.by_dim.emplace(dim, Predicate::any());
      } else if (const std::size_t dots = rhs.find(".."); dots != std::string_view::npos) {
        c.by_dim.emplace(dim, Predicate::range(decode_token(rhs.substr(0, dots)),
                                               decode_token(rhs.substr(dots + 2))));
      } else {
        std::vector<CoordinateValue> vals;
        for (std::string_view tok : detail::split_on(rhs, '/')) {
          if (tok.empty())
            throw SyntaxError(1, "empty value in constraint for '" + dim + "'");
          vals.push_back(decode_token(tok));
        }
        c.by_dim.emplace(dim, Predicate::value_set(std::move(vals)));
      }
    } catch (const SyntaxError&) {
      throw;
    } catch (const MixedTagRangeError&) {
      throw;
    } catch (const QubeError& e) {
      throw SyntaxError(1, "in constraint for '" + dim + "': " + e.what());
    }
  }
  return c;
}

}  // namespace qube
