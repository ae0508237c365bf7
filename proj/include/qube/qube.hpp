#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qube/error.hpp"
#include "qube/node.hpp"

namespace qube {

/// One coordinate tuple: ordered (dimension, value) pairs along a
/// root-to-leaf path. Order matters; the same data keyed in a different
/// dimension order is a different tuple.
using Tuple = std::vector<std::pair<DimensionName, CoordinateValue>>;

struct QubeStats {
  std::uint64_t leaf_count = 0;
  std::uint64_t node_count = 0;
  std::uint64_t distinct_structural_nodes = 0;
  std::uint64_t max_depth = 0;

  friend bool operator==(const QubeStats&, const QubeStats&) = default;
};

namespace detail {

inline const CoordinateValue& root_sentinel_value() {
  static const CoordinateValue v = CoordinateValue::of_str("");
  return v;
}

inline NodePtr make_root(std::vector<NodePtr> children) {
  return make_node(std::string(kRootDimension), {root_sentinel_value()},
                   std::move(children), PayloadRef::none());
}

struct StatsCache {
  std::once_flag once;
  QubeStats stats;
};

}  // namespace detail

/// A qube: a rooted tree whose root-to-leaf paths Cartesian-expand to a set
/// of coordinate tuples. Value semantics, cheap to copy (shared immutable
/// nodes). The canonical flag records that the tree is known to be in
/// compressed canonical form; it is an optimization hint, never load-bearing
/// for correctness.
class Qube {
 public:
  Qube() : Qube(detail::make_root({}), true) {}

  static Qube empty() { return Qube(); }

  /// Wraps an existing root. The root must be the synthetic root node:
  /// dimension "root", the single sentinel value, no payload. Pass
  /// canonical=true only for trees known to be in canonical form.
  static Qube from_root(NodePtr root, bool canonical = false) {
    if (!root) throw QubeError("null root");
    if (root->dim() != kRootDimension ||
        root->values() != std::vector<CoordinateValue>{detail::root_sentinel_value()} ||
        root->payload().has_value())
      throw QubeError("root node must be the sentinel 'root' node");
    return Qube(std::move(root), canonical);
  }

  const QubeNode& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  bool canonical_hint() const { return canonical_; }

  /// Cached stats; computed once per underlying tree, thread-safe.
  const QubeStats& cached_stats() const;

 private:
  Qube(NodePtr root, bool canonical)
      : root_(std::move(root)),
        canonical_(canonical),
        cache_(std::make_shared<detail::StatsCache>()) {}

  NodePtr root_;
  bool canonical_;
  std::shared_ptr<detail::StatsCache> cache_;
};

// ---------------------------------------------------------------------------
// Construction from tuples
// ---------------------------------------------------------------------------

namespace detail {

struct TrieNode {
  DimensionName dim;
  CoordinateValue value;
  PayloadRef payload;
  bool completed = false;  // some tuple ends exactly here
  std::vector<std::unique_ptr<TrieNode>> kids;  // sorted by (dim, value)

  TrieNode* find_or_insert(const DimensionName& d, const CoordinateValue& v) {
    auto less = [](const std::unique_ptr<TrieNode>& n,
                   const std::pair<const DimensionName&, const CoordinateValue&>& key) {
      if (int c = n->dim.compare(key.first); c != 0) return c < 0;
      return n->value < key.second;
    };
    auto it = std::lower_bound(kids.begin(), kids.end(),
                               std::pair<const DimensionName&, const CoordinateValue&>(d, v),
                               less);
    if (it != kids.end() && (*it)->dim == d && (*it)->value == v) return it->get();
    auto node = std::make_unique<TrieNode>();
    node->dim = d;
    node->value = v;
    return trie_insert(it, std::move(node));
  }

 private:
  TrieNode* trie_insert(std::vector<std::unique_ptr<TrieNode>>::iterator it,
                        std::unique_ptr<TrieNode> node) {
    return kids.insert(it, std::move(node))->get();
  }
};

inline NodePtr freeze_trie(TrieNode& t) {
  std::vector<NodePtr> kids;
  kids.reserve(t.kids.size());
  for (auto& k : t.kids) kids.push_back(freeze_trie(*k));
  return make_node(t.dim, {t.value}, std::move(kids), t.payload);
}

inline std::string tuple_prefix_text(const Tuple& t, std::size_t upto) {
  std::string s;
  for (std::size_t i = 0; i < upto && i < t.size(); ++i) {
    if (i) s += ',';
    s += t[i].first;
    s += '=';
    s += encode_token(t[i].second);
  }
  return s;
}

}  // namespace detail

/// Builds the uncompressed tree for a set of tuples, optionally with
/// payloads. Duplicate tuples collapse (equal payloads required); a tuple
/// that is a strict path prefix of another cannot be represented and raises
/// IncompatiblePathError. Cost is linear in total tuple length, plus a
/// logarithmic factor for ordered sibling insertion.
inline Qube from_tuples(std::span<const std::pair<Tuple, PayloadRef>> tuples) {
  detail::TrieNode root;
  for (const auto& [tuple, payload] : tuples) {
    if (tuple.empty()) throw QubeError("empty tuple");
    detail::TrieNode* cur = &root;
    for (std::size_t i = 0; i < tuple.size(); ++i) {
      const auto& [dim, value] = tuple[i];
      validate_dimension_name(dim);
      if (dim == kRootDimension)
        throw QubeError("dimension name 'root' is reserved");
      for (std::size_t j = 0; j < i; ++j)
        if (tuple[j].first == dim) throw DuplicateDimensionError(dim);
      if (cur->completed)
        throw IncompatiblePathError(
            "tuple continues past an existing leaf at '" +
            detail::tuple_prefix_text(tuple, i) + "'");
      cur = cur->find_or_insert(dim, value);
    }
    if (!cur->kids.empty())
      throw IncompatiblePathError("tuple is a strict prefix of an existing tuple: '" +
                                  detail::tuple_prefix_text(tuple, tuple.size()) + "'");
    if (cur->completed && cur->payload != payload)
      throw IncompatiblePathError("duplicate tuple with conflicting payloads: '" +
                                  detail::tuple_prefix_text(tuple, tuple.size()) + "'");
    cur->completed = true;
    cur->payload = payload;
  }

  std::vector<NodePtr> kids;
  kids.reserve(root.kids.size());
  for (auto& k : root.kids) kids.push_back(detail::freeze_trie(*k));
  return Qube::from_root(detail::make_root(std::move(kids)), false);
}

inline Qube from_tuples(std::span<const Tuple> tuples) {
  std::vector<std::pair<Tuple, PayloadRef>> with;
  with.reserve(tuples.size());
  for (const Tuple& t : tuples) with.emplace_back(t, PayloadRef::none());
  return from_tuples(std::span<const std::pair<Tuple, PayloadRef>>(with));
}

inline Qube from_tuples(const std::vector<Tuple>& tuples) {
  return from_tuples(std::span<const Tuple>(tuples));
}

inline Qube from_tuples(const std::vector<std::pair<Tuple, PayloadRef>>& tuples) {
  return from_tuples(std::span<const std::pair<Tuple, PayloadRef>>(tuples));
}

// ---------------------------------------------------------------------------
// Compression
// ---------------------------------------------------------------------------

namespace detail {

/// Per-operation hash-consing: structurally equal nodes become one shared
/// node. Purely a memory/speed optimization; every reuse is confirmed by
/// full structural comparison, so digest collisions cannot merge distinct
/// structures.
class Interner {
 public:
  explicit Interner(HashMemo& memo) : memo_(&memo) {}

  NodePtr intern(NodePtr n) {
    const HashDigest d = memo_->digest(n);
    auto& bucket = table_[d];
    for (const NodePtr& existing : bucket)
      if (structural_equal(*existing, *n)) return existing;
    bucket.push_back(n);
    return n;
  }

 private:
  HashMemo* memo_;
  std::unordered_map<HashDigest, std::vector<NodePtr>, HashDigestHasher> table_;
};

struct OpContext {
  HashMemo memo;
  Interner interner{memo};
};

/// The single canonicalization step shared by compression, the set
/// operations, and selection: group siblings by merge key (dimension,
/// payload, child structure), confirm each group structurally, merge value
/// sets, and sort the survivors into canonical child order. Returns the new
/// list and whether anything changed.
inline std::pair<std::vector<NodePtr>, bool> canonicalize_children(
    std::vector<NodePtr> kids, OpContext& ctx) {
  if (kids.size() <= 1) {
    return {std::move(kids), false};
  }

  struct Group {
    std::vector<std::size_t> members;  // indices into kids
  };
  std::vector<Group> groups;
  std::unordered_map<HashDigest, std::vector<std::size_t>, HashDigestHasher>
      by_key;  // merge-key digest -> group indices (collision-safe)

  for (std::size_t i = 0; i < kids.size(); ++i) {
    const HashDigest key = merge_key_digest(*kids[i], ctx.memo);
    auto& cand = by_key[key];
    bool placed = false;
    for (std::size_t gi : cand) {
      // Digest match is only a hint; confirm against the group representative.
      if (same_merge_key(*kids[groups[gi].members.front()], *kids[i])) {
        groups[gi].members.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) {
      cand.push_back(groups.size());
      groups.push_back(Group{{i}});
    }
  }

  bool merged = false;
  std::vector<NodePtr> out;
  out.reserve(groups.size());
  for (const Group& g : groups) {
    if (g.members.size() == 1) {
      out.push_back(kids[g.members.front()]);
      continue;
    }
    merged = true;
    const QubeNode& rep = *kids[g.members.front()];
    std::vector<CoordinateValue> values;
    for (std::size_t i : g.members)
      values.insert(values.end(), kids[i]->values().begin(),
                    kids[i]->values().end());
    out.push_back(ctx.interner.intern(make_node(
        rep.dim(), std::move(values),
        std::vector<NodePtr>(rep.children()), rep.payload())));
  }

  bool reordered = !std::is_sorted(out.begin(), out.end(), child_order_less);
  if (reordered) sort_children(out);
  return {std::move(out), merged || reordered};
}

inline NodePtr compress_node(const NodePtr& n, OpContext& ctx) {
  if (n->children().empty()) return ctx.interner.intern(n);

  std::vector<NodePtr> kids;
  kids.reserve(n->children().size());
  bool changed = false;
  for (const NodePtr& c : n->children()) {
    NodePtr c2 = compress_node(c, ctx);
    changed |= (c2 != c);
    kids.push_back(std::move(c2));
  }
  auto [kids2, changed2] = canonicalize_children(std::move(kids), ctx);
  if (!changed && !changed2) return ctx.interner.intern(n);
  return ctx.interner.intern(
      make_node(n->dim(), n->values(), std::move(kids2), n->payload()));
}

/// True when no two siblings anywhere in the subtree share a merge key,
/// i.e. the tree is already in canonical compressed form.
inline bool is_canonical_tree(const QubeNode& n, HashMemo& memo) {
  std::unordered_map<HashDigest, std::vector<const QubeNode*>, HashDigestHasher>
      seen;
  for (const NodePtr& c : n.children()) {
    auto& bucket = seen[merge_key_digest(*c, memo)];
    for (const QubeNode* other : bucket)
      if (same_merge_key(*other, *c)) return false;
    bucket.push_back(c.get());
    if (!is_canonical_tree(*c, memo)) return false;
  }
  return true;
}

}  // namespace detail

/// Canonical compressed form: repeatedly merges same-dimension siblings with
/// equal payloads and structurally identical child sequences, bottom-up.
/// One bottom-up pass reaches the fixpoint because merging only changes
/// value sets, which merge keys ignore. Linear in node count.
inline Qube compress(const Qube& q) {
  if (q.canonical_hint()) return q;
  detail::OpContext ctx;
  std::vector<NodePtr> kids;
  kids.reserve(q.root().children().size());
  for (const NodePtr& c : q.root().children())
    kids.push_back(detail::compress_node(c, ctx));
  auto [kids2, changed] = detail::canonicalize_children(std::move(kids), ctx);
  (void)changed;
  return Qube::from_root(detail::make_root(std::move(kids2)), true);
}

// ---------------------------------------------------------------------------
// Traversal and statistics
// ---------------------------------------------------------------------------

/// Visits every tuple in canonical order: within a node, values iterate in
/// ascending order before descending into children, so a two-level tree
/// a{1,2} -> b{1,2} yields (a1,b1),(a1,b2),(a2,b1),(a2,b2).
template <typename Fn>
void for_each_leaf(const Qube& q, Fn&& fn) {
  Tuple path;
  auto walk = [&](auto&& self, const QubeNode& n) -> void {
    path.emplace_back(n.dim(), CoordinateValue());
    for (const CoordinateValue& v : n.values()) {
      path.back().second = v;
      if (n.is_leaf()) {
        fn(static_cast<const Tuple&>(path), n.payload());
      } else {
        for (const NodePtr& c : n.children()) self(self, *c);
      }
    }
    path.pop_back();
  };
  for (const NodePtr& c : q.root().children()) walk(walk, *c);
}

/// Materializes the tuple set. Exponential output for dense qubes by design;
/// prefer for_each_leaf or count_leaves when the expansion is not needed.
inline std::vector<Tuple> leaves(const Qube& q) {
  std::vector<Tuple> out;
  for_each_leaf(q, [&](const Tuple& t, const PayloadRef&) { out.push_back(t); });
  return out;
}

namespace detail {

inline std::uint64_t leaf_count_below(
    const QubeNode& n, std::unordered_map<const QubeNode*, std::uint64_t>& memo) {
  if (auto it = memo.find(&n); it != memo.end()) return it->second;
  std::uint64_t sum = 0;
  if (n.is_leaf()) {
    sum = 1;
  } else {
    for (const NodePtr& c : n.children()) sum += leaf_count_below(*c, memo);
  }
  const std::uint64_t total = n.values().size() * sum;
  memo.emplace(&n, total);
  return total;
}

}  // namespace detail

/// Number of tuples, computed from value-set sizes in time proportional to
/// node count (never by enumeration).
inline std::uint64_t count_leaves(const Qube& q) {
  std::unordered_map<const QubeNode*, std::uint64_t> memo;
  std::uint64_t sum = 0;
  for (const NodePtr& c : q.root().children())
    sum += detail::leaf_count_below(*c, memo);
  return sum;
}

namespace detail {

inline std::uint64_t node_count_below(
    const QubeNode& n, std::unordered_map<const QubeNode*, std::uint64_t>& memo) {
  if (auto it = memo.find(&n); it != memo.end()) return it->second;
  std::uint64_t total = 1;
  for (const NodePtr& c : n.children()) total += node_count_below(*c, memo);
  memo.emplace(&n, total);
  return total;
}

inline std::uint64_t depth_below(
    const QubeNode& n, std::unordered_map<const QubeNode*, std::uint64_t>& memo) {
  if (auto it = memo.find(&n); it != memo.end()) return it->second;
  std::uint64_t d = 0;
  for (const NodePtr& c : n.children())
    d = std::max(d, 1 + depth_below(*c, memo));
  memo.emplace(&n, d);
  return d;
}

}  // namespace detail

/// Tree node count including the root. Shared subtrees count once per
/// occurrence (logical tree size, independent of interning).
inline std::uint64_t count_nodes(const Qube& q) {
  std::unordered_map<const QubeNode*, std::uint64_t> memo;
  return detail::node_count_below(q.root(), memo);
}

inline std::uint64_t max_depth(const Qube& q) {
  std::unordered_map<const QubeNode*, std::uint64_t> memo;
  return detail::depth_below(q.root(), memo);
}

/// (leafCount, nodeCount, distinctStructuralNodes, maxDepth). Distinct
/// structural nodes are equality classes under structural_equal across the
/// whole tree, root included; the empty qube reports (0, 1, 1, 0).
inline QubeStats stats(const Qube& q) {
  QubeStats s;
  s.leaf_count = count_leaves(q);
  s.node_count = count_nodes(q);
  s.max_depth = max_depth(q);

  HashMemo memo;
  std::unordered_map<HashDigest, std::vector<const QubeNode*>, HashDigestHasher>
      classes;
  std::unordered_set<const QubeNode*> visited;
  auto walk = [&](auto&& self, const NodePtr& n) -> void {
    if (!visited.insert(n.get()).second) return;
    auto& bucket = classes[memo.digest(n)];
    bool found = false;
    for (const QubeNode* rep : bucket)
      if (structural_equal(*rep, *n)) {
        found = true;
        break;
      }
    if (!found) bucket.push_back(n.get());
    for (const NodePtr& c : n->children()) self(self, c);
  };
  walk(walk, q.root_ptr());
  std::uint64_t distinct = 0;
  for (const auto& [d, reps] : classes) distinct += reps.size();
  s.distinct_structural_nodes = distinct;
  return s;
}

inline const QubeStats& Qube::cached_stats() const {
  std::call_once(cache_->once, [&] { cache_->stats = stats(*this); });
  return cache_->stats;
}

/// Exact structural equality of two qubes (same tree, same order).
inline bool structural_equal(const Qube& a, const Qube& b) {
  return structural_equal(a.root(), b.root());
}

/// Same tuple sets with same payloads: compress both, compare structurally.
/// Canonical form makes this sound; qubes keyed in different per-path
/// dimension orders encode different tuple sets and compare unequal.
inline bool semantic_equals(const Qube& a, const Qube& b) {
  return structural_equal(compress(a).root(), compress(b).root());
}

}  // namespace qube
