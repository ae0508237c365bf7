#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qube/error.hpp"
#include "qube/hash.hpp"
#include "qube/value.hpp"

namespace qube {

/// Reference into an external data store, or nothing. Opaque bytes; the
/// engine only ever compares payloads for equality.
struct PayloadRef {
  enum class Kind : std::uint8_t { None = 0, StorageKey = 1 };

  Kind kind = Kind::None;
  std::string key;  // meaningful only when kind == StorageKey

  static PayloadRef none() { return {}; }
  static PayloadRef storage_key(std::string k) {
    return PayloadRef{Kind::StorageKey, std::move(k)};
  }

  bool has_value() const { return kind == Kind::StorageKey; }

  friend bool operator==(const PayloadRef&, const PayloadRef&) = default;
};

class QubeNode;
using NodePtr = std::shared_ptr<const QubeNode>;

/// One tree node: a dimension, the ordered value set on that dimension, the
/// ordered child list, and an optional payload. Nodes are immutable after
/// construction; operations build new nodes and share unchanged subtrees.
///
/// Invariants (enforced by make_node):
///  - values non-empty, strictly ascending;
///  - children non-null, strictly ascending by (dim, first value);
///  - children sharing a dimension have pairwise disjoint value sets.
class QubeNode {
 public:
  QubeNode(std::string dim, std::vector<CoordinateValue> values,
           std::vector<NodePtr> children, PayloadRef payload)
      : dim_(std::move(dim)),
        values_(std::move(values)),
        children_(std::move(children)),
        payload_(std::move(payload)) {}

  const std::string& dim() const { return dim_; }
  const std::vector<CoordinateValue>& values() const { return values_; }
  const std::vector<NodePtr>& children() const { return children_; }
  const PayloadRef& payload() const { return payload_; }

  bool is_leaf() const { return children_.empty(); }
  const CoordinateValue& first_value() const { return values_.front(); }

 private:
  std::string dim_;
  std::vector<CoordinateValue> values_;
  std::vector<NodePtr> children_;
  PayloadRef payload_;
};

namespace detail {

inline bool child_order_less(const NodePtr& a, const NodePtr& b) {
  if (int c = a->dim().compare(b->dim()); c != 0) return c < 0;
  return a->first_value() < b->first_value();
}

inline void sort_children(std::vector<NodePtr>& kids) {
  std::sort(kids.begin(), kids.end(), child_order_less);
}

}  // namespace detail

/// Canonical node factory. Sorts and dedups values, sorts children into
/// (dim, first value) order, and verifies the sibling invariants. Throws
/// QubeError when two same-dimension siblings share a value.
inline NodePtr make_node(std::string dim, std::vector<CoordinateValue> values,
                         std::vector<NodePtr> children, PayloadRef payload) {
  validate_dimension_name(dim);
  if (values.empty())
    throw QubeError("node '" + dim + "' has an empty value set");
  // Payloads address leaf data; an interior payload has no tuple to belong to.
  if (payload.has_value() && !children.empty())
    throw QubeError("payload on interior node '" + dim + "'");
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  for (const NodePtr& c : children)
    if (!c) throw QubeError("node '" + dim + "' has a null child");
  detail::sort_children(children);

  // Same-dimension siblings must partition their values: collect each dim
  // group (contiguous after the sort) and look for duplicates.
  std::size_t i = 0;
  while (i < children.size()) {
    std::size_t j = i + 1;
    while (j < children.size() && children[j]->dim() == children[i]->dim()) ++j;
    if (j - i > 1) {
      std::vector<CoordinateValue> all;
      for (std::size_t k = i; k < j; ++k)
        all.insert(all.end(), children[k]->values().begin(),
                   children[k]->values().end());
      std::sort(all.begin(), all.end());
      if (std::adjacent_find(all.begin(), all.end()) != all.end())
        throw QubeError("sibling '" + children[i]->dim() +
                        "' nodes have overlapping value sets under '" + dim +
                        "'");
    }
    i = j;
  }

  return std::make_shared<const QubeNode>(std::move(dim), std::move(values),
                                          std::move(children),
                                          std::move(payload));
}

/// Exact recursive equality of two subtrees: dimension, value set, payload,
/// and child sequences all match. Shared pointers short-circuit.
inline bool structural_equal(const QubeNode& a, const QubeNode& b) {
  if (&a == &b) return true;
  if (a.dim() != b.dim() || a.payload() != b.payload()) return false;
  if (a.values() != b.values()) return false;
  if (a.children().size() != b.children().size()) return false;
  for (std::size_t i = 0; i < a.children().size(); ++i)
    if (!structural_equal(*a.children()[i], *b.children()[i])) return false;
  return true;
}

namespace detail {

// Digest stream layouts. A format version byte guards against silently
// comparing digests produced by incompatible layouts.
inline constexpr std::uint8_t kNodeDigestVersion = 1;

inline void write_value(HashWriter& w, const CoordinateValue& v) {
  w.u8(static_cast<std::uint8_t>(v.tag()));
  switch (v.tag()) {
    case ValueTag::Int: w.i64(v.as_int()); break;
    case ValueTag::Str: w.str(v.as_str()); break;
    case ValueTag::Date: w.u32(v.as_date().ymd); break;
    case ValueTag::Timestamp: w.u64(v.as_timestamp().ymdhms); break;
  }
}

inline void write_payload(HashWriter& w, const PayloadRef& p) {
  w.u8(static_cast<std::uint8_t>(p.kind));
  if (p.has_value()) w.str(p.key);
}

/// Digest over (dim, values, payload, child digests): full structural
/// identity, Merkle-style.
inline HashDigest node_digest(const QubeNode& n,
                              const std::vector<HashDigest>& child_digests) {
  HashWriter w;
  w.u8(kNodeDigestVersion);
  w.str(n.dim());
  w.u64(n.values().size());
  for (const auto& v : n.values()) write_value(w, v);
  write_payload(w, n.payload());
  w.u64(child_digests.size());
  for (const auto& d : child_digests) w.digest(d);
  return w.finish();
}

}  // namespace detail

/// Memoizes structural digests by node address and pins each memoized node:
/// transient nodes die mid-operation, and a recycled address must not
/// inherit the old occupant's digest. Scope a memo to one operation.
class HashMemo {
 public:
  HashDigest digest(const NodePtr& n) {
    if (auto it = memo_.find(n.get()); it != memo_.end()) return it->second.second;
    std::vector<HashDigest> kids;
    kids.reserve(n->children().size());
    for (const NodePtr& c : n->children()) kids.push_back(digest(c));
    HashDigest d = detail::node_digest(*n, kids);
    memo_.emplace(n.get(), std::make_pair(n, d));
    return d;
  }

 private:
  std::unordered_map<const QubeNode*, std::pair<NodePtr, HashDigest>> memo_;
};

/// Structural digest of a subtree. Equal structure yields equal digests on
/// every platform and run; unequal digests prove unequal structure. Equal
/// digests are treated as a hint only and confirmed structurally wherever a
/// merge depends on them.
inline HashDigest structural_hash(const QubeNode& n) {
  HashMemo memo;
  std::vector<HashDigest> kids;
  kids.reserve(n.children().size());
  for (const NodePtr& c : n.children()) kids.push_back(memo.digest(c));
  return detail::node_digest(n, kids);
}

namespace detail {

/// Digest over (dim, payload, child digests) but not values: nodes with
/// equal merge keys are exactly the sibling pairs compression may merge.
inline HashDigest merge_key_digest(const QubeNode& n, HashMemo& memo) {
  HashWriter w;
  w.u8(kNodeDigestVersion);
  w.str(n.dim());
  write_payload(w, n.payload());
  w.u64(n.children().size());
  for (const NodePtr& c : n.children()) w.digest(memo.digest(c));
  return w.finish(0x6d657267656b6579ULL);  // distinct seed from node_digest
}

/// True when two nodes may merge into one: same dimension, same payload,
/// structurally identical child sequences. Value sets are irrelevant.
inline bool same_merge_key(const QubeNode& a, const QubeNode& b) {
  if (a.dim() != b.dim() || a.payload() != b.payload()) return false;
  if (a.children().size() != b.children().size()) return false;
  for (std::size_t i = 0; i < a.children().size(); ++i)
    if (!structural_equal(*a.children()[i], *b.children()[i])) return false;
  return true;
}

}  // namespace detail

}  // namespace qube
