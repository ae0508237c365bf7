#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qube/error.hpp"
#include "qube/qube.hpp"

namespace qube {

namespace detail {

// Breadcrumbs for error messages; rendered only when an op actually throws.
struct SetOpPath {
  std::vector<std::pair<const std::string*, const CoordinateValue*>> segs;

  std::string render() const {
    std::string s;
    for (const auto& [dim, value] : segs) {
      if (!s.empty()) s += ',';
      s += *dim;
      s += '=';
      s += encode_token(*value);
    }
    return s.empty() ? std::string("<root>") : s;
  }
};

/// (value, left subtree?, right subtree?) decomposition of two sibling lists
/// restricted to one dimension: each side's nodes flatten to sorted
/// (value, node) streams (sibling value sets are disjoint, so the streams
/// are strictly increasing), then a two-pointer sweep aligns them.
struct ValueSlot {
  const CoordinateValue* value;
  NodePtr a;  // null when the value is absent on that side
  NodePtr b;
};

inline void flatten_dim_group(const std::vector<NodePtr>& kids,
                              std::size_t begin, std::size_t end,
                              std::vector<std::pair<const CoordinateValue*, NodePtr>>& out) {
  out.clear();
  for (std::size_t i = begin; i < end; ++i)
    for (const CoordinateValue& v : kids[i]->values()) out.emplace_back(&v, kids[i]);
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return *x.first < *y.first; });
}

inline std::vector<ValueSlot> align_dim_group(
    const std::vector<std::pair<const CoordinateValue*, NodePtr>>& fa,
    const std::vector<std::pair<const CoordinateValue*, NodePtr>>& fb) {
  std::vector<ValueSlot> slots;
  slots.reserve(fa.size() + fb.size());
  std::size_t i = 0, j = 0;
  while (i < fa.size() || j < fb.size()) {
    if (j >= fb.size() || (i < fa.size() && *fa[i].first < *fb[j].first)) {
      slots.push_back({fa[i].first, fa[i].second, nullptr});
      ++i;
    } else if (i >= fa.size() || *fb[j].first < *fa[i].first) {
      slots.push_back({fb[j].first, nullptr, fb[j].second});
      ++j;
    } else {
      slots.push_back({fa[i].first, fa[i].second, fb[j].second});
      ++i, ++j;
    }
  }
  return slots;
}

/// Values are partitioned by their (left subtree, right subtree) pair;
/// each pair is processed once, no matter how many values share it.
struct PairGroup {
  NodePtr a;
  NodePtr b;
  std::vector<CoordinateValue> values;  // ascending (slots arrive in order)
};

inline std::vector<PairGroup> group_by_pair(const std::vector<ValueSlot>& slots) {
  struct PtrPairHash {
    std::size_t operator()(const std::pair<const QubeNode*, const QubeNode*>& p) const {
      auto h = std::hash<const void*>{};
      return h(p.first) * 0x9e3779b97f4a7c15ULL ^ h(p.second);
    }
  };
  std::vector<PairGroup> groups;
  std::unordered_map<std::pair<const QubeNode*, const QubeNode*>, std::size_t,
                     PtrPairHash>
      index;
  for (const ValueSlot& s : slots) {
    const auto key = std::make_pair(s.a.get(), s.b.get());
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) groups.push_back(PairGroup{s.a, s.b, {}});
    groups[it->second].values.push_back(*s.value);
  }
  return groups;
}

/// Iterates both child lists one dimension group at a time (children are
/// sorted by dimension first). `only`, taking (side kids, begin, end, from_a),
/// handles groups present on one side; `both` handles shared dimensions.
template <typename OnlyFn, typename BothFn>
void per_dimension(const std::vector<NodePtr>& a, const std::vector<NodePtr>& b,
                   OnlyFn&& only, BothFn&& both) {
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    std::size_t i2 = i, j2 = j;
    const int cmp = i >= a.size()   ? 1
                    : j >= b.size() ? -1
                                    : a[i]->dim().compare(b[j]->dim());
    if (cmp < 0) {
      while (i2 < a.size() && a[i2]->dim() == a[i]->dim()) ++i2;
      only(a, i, i2, true);
      i = i2;
    } else if (cmp > 0) {
      while (j2 < b.size() && b[j2]->dim() == b[j]->dim()) ++j2;
      only(b, j, j2, false);
      j = j2;
    } else {
      while (i2 < a.size() && a[i2]->dim() == a[i]->dim()) ++i2;
      while (j2 < b.size() && b[j2]->dim() == b[j]->dim()) ++j2;
      both(i, i2, j, j2);
      i = i2;
      j = j2;
    }
  }
}

/// Rebuilds a node around a value subset, reusing the original when the
/// subset is full (sorted + disjoint inputs make the size check sufficient).
inline NodePtr with_values(const NodePtr& n, std::vector<CoordinateValue> values,
                           OpContext& ctx) {
  if (values.size() == n->values().size()) return n;
  return ctx.interner.intern(make_node(
      n->dim(), std::move(values), std::vector<NodePtr>(n->children()), n->payload()));
}

inline std::vector<NodePtr> union_children(const std::vector<NodePtr>& a,
                                           const std::vector<NodePtr>& b,
                                           OpContext& ctx, SetOpPath& path);

inline NodePtr union_pair(const PairGroup& g, const std::string& dim,
                          OpContext& ctx, SetOpPath& path) {
  path.segs.emplace_back(&dim, &g.values.front());
  if (g.a->is_leaf() != g.b->is_leaf())
    throw IncompatiblePathError(
        "one side ends at '" + path.render() + "' where the other continues");
  if (g.a->payload() != g.b->payload())
    throw IncompatiblePathError("payload mismatch at '" + path.render() + "'");
  NodePtr out;
  if (g.a->is_leaf()) {
    out = ctx.interner.intern(
        make_node(dim, g.values, {}, g.a->payload()));
  } else {
    std::vector<NodePtr> kids =
        union_children(g.a->children(), g.b->children(), ctx, path);
    out = ctx.interner.intern(
        make_node(dim, g.values, std::move(kids), g.a->payload()));
  }
  path.segs.pop_back();
  return out;
}

inline std::vector<NodePtr> union_children(const std::vector<NodePtr>& a,
                                           const std::vector<NodePtr>& b,
                                           OpContext& ctx, SetOpPath& path) {
  std::vector<NodePtr> out;
  std::vector<std::pair<const CoordinateValue*, NodePtr>> fa, fb;
  per_dimension(
      a, b,
      [&](const std::vector<NodePtr>& side, std::size_t begin, std::size_t end,
          bool) {
        for (std::size_t k = begin; k < end; ++k) out.push_back(side[k]);
      },
      [&](std::size_t ai, std::size_t ae, std::size_t bi, std::size_t be) {
        flatten_dim_group(a, ai, ae, fa);
        flatten_dim_group(b, bi, be, fb);
        const std::string& dim = a[ai]->dim();
        for (PairGroup& g : group_by_pair(align_dim_group(fa, fb))) {
          if (!g.a) {
            out.push_back(with_values(g.b, std::move(g.values), ctx));
          } else if (!g.b) {
            out.push_back(with_values(g.a, std::move(g.values), ctx));
          } else {
            out.push_back(union_pair(g, dim, ctx, path));
          }
        }
      });
  return canonicalize_children(std::move(out), ctx).first;
}

}  // namespace detail

/// Tuple-set union. Inputs are compressed first (a no-op on canonical
/// inputs); on compressed inputs the work is proportional to the sum of the
/// two structural sizes. Throws IncompatiblePathError when the inputs
/// disagree about a shared path: a leaf against an interior continuation, or
/// merged leaves with different payloads.
inline Qube union_of(const Qube& qa, const Qube& qb) {
  const Qube ca = compress(qa);
  const Qube cb = compress(qb);
  detail::OpContext ctx;
  detail::SetOpPath path;
  std::vector<NodePtr> kids = detail::union_children(
      ca.root().children(), cb.root().children(), ctx, path);
  return Qube::from_root(detail::make_root(std::move(kids)), true);
}

namespace detail {

inline std::vector<NodePtr> intersect_children(const std::vector<NodePtr>& a,
                                               const std::vector<NodePtr>& b,
                                               OpContext& ctx);

inline NodePtr intersect_pair(const PairGroup& g, const std::string& dim,
                              OpContext& ctx) {
  // Leaf identity includes the payload: equal-coordinate leaves with
  // different payloads are different tuples and do not intersect.
  if (g.a->is_leaf() != g.b->is_leaf()) return nullptr;
  if (g.a->payload() != g.b->payload()) return nullptr;
  if (g.a->is_leaf())
    return ctx.interner.intern(make_node(dim, g.values, {}, g.a->payload()));
  std::vector<NodePtr> kids = intersect_children(g.a->children(), g.b->children(), ctx);
  if (kids.empty()) return nullptr;
  return ctx.interner.intern(
      make_node(dim, g.values, std::move(kids), g.a->payload()));
}

inline std::vector<NodePtr> intersect_children(const std::vector<NodePtr>& a,
                                               const std::vector<NodePtr>& b,
                                               OpContext& ctx) {
  std::vector<NodePtr> out;
  std::vector<std::pair<const CoordinateValue*, NodePtr>> fa, fb;
  per_dimension(
      a, b,
      [](const std::vector<NodePtr>&, std::size_t, std::size_t, bool) {
        // A dimension present on one side only contributes nothing.
      },
      [&](std::size_t ai, std::size_t ae, std::size_t bi, std::size_t be) {
        flatten_dim_group(a, ai, ae, fa);
        flatten_dim_group(b, bi, be, fb);
        const std::string& dim = a[ai]->dim();
        for (PairGroup& g : group_by_pair(align_dim_group(fa, fb))) {
          if (!g.a || !g.b) continue;
          if (NodePtr n = intersect_pair(g, dim, ctx)) out.push_back(std::move(n));
        }
      });
  return canonicalize_children(std::move(out), ctx).first;
}

}  // namespace detail

/// Tuple-set intersection. Total: never raises on mismatched structure;
/// non-overlapping paths simply contribute nothing.
inline Qube intersect(const Qube& qa, const Qube& qb) {
  const Qube ca = compress(qa);
  const Qube cb = compress(qb);
  detail::OpContext ctx;
  std::vector<NodePtr> kids =
      detail::intersect_children(ca.root().children(), cb.root().children(), ctx);
  return Qube::from_root(detail::make_root(std::move(kids)), true);
}

namespace detail {

inline std::vector<NodePtr> difference_children(const std::vector<NodePtr>& a,
                                                const std::vector<NodePtr>& b,
                                                OpContext& ctx);

/// Keep-groups accumulate minuend values that survive with their original
/// subtree; recurse-groups carry a rebuilt subtree.
inline std::vector<NodePtr> difference_children(const std::vector<NodePtr>& a,
                                                const std::vector<NodePtr>& b,
                                                OpContext& ctx) {
  std::vector<NodePtr> out;
  std::vector<std::pair<const CoordinateValue*, NodePtr>> fa, fb;
  per_dimension(
      a, b,
      [&](const std::vector<NodePtr>& side, std::size_t begin, std::size_t end,
          bool from_a) {
        if (!from_a) return;  // subtrahend-only dimensions remove nothing
        for (std::size_t k = begin; k < end; ++k) out.push_back(side[k]);
      },
      [&](std::size_t ai, std::size_t ae, std::size_t bi, std::size_t be) {
        flatten_dim_group(a, ai, ae, fa);
        flatten_dim_group(b, bi, be, fb);
        const std::string& dim = a[ai]->dim();

        struct KeepGroup {
          NodePtr a;
          std::vector<CoordinateValue> values;
        };
        std::vector<KeepGroup> keeps;
        std::unordered_map<const QubeNode*, std::size_t> keep_index;
        auto keep = [&](const NodePtr& n, const CoordinateValue& v) {
          auto [it, inserted] = keep_index.emplace(n.get(), keeps.size());
          if (inserted) keeps.push_back(KeepGroup{n, {}});
          keeps[it->second].values.push_back(v);
        };

        for (PairGroup& g : group_by_pair(align_dim_group(fa, fb))) {
          if (!g.a) continue;
          if (!g.b) {
            for (const CoordinateValue& v : g.values) keep(g.a, v);
            continue;
          }
          const bool both_leaves = g.a->is_leaf() && g.b->is_leaf();
          if (both_leaves) {
            // Exact tuple match requires equal payloads; otherwise the
            // minuend tuple is not in the subtrahend and survives.
            if (g.a->payload() != g.b->payload())
              for (const CoordinateValue& v : g.values) keep(g.a, v);
            continue;
          }
          if (g.a->is_leaf() != g.b->is_leaf()) {
            // Prefix-mismatched paths denote disjoint tuple sets.
            for (const CoordinateValue& v : g.values) keep(g.a, v);
            continue;
          }
          std::vector<NodePtr> kids =
              difference_children(g.a->children(), g.b->children(), ctx);
          if (kids.empty()) continue;
          out.push_back(ctx.interner.intern(
              make_node(dim, std::move(g.values), std::move(kids), g.a->payload())));
        }
        for (KeepGroup& k : keeps)
          out.push_back(with_values(k.a, std::move(k.values), ctx));
      });
  return canonicalize_children(std::move(out), ctx).first;
}

}  // namespace detail

/// Tuple-set difference (minuend minus subtrahend). Total; a tuple is
/// removed only on an exact coordinates-plus-payload match.
inline Qube difference(const Qube& qa, const Qube& qb) {
  const Qube ca = compress(qa);
  const Qube cb = compress(qb);
  detail::OpContext ctx;
  std::vector<NodePtr> kids = detail::difference_children(
      ca.root().children(), cb.root().children(), ctx);
  return Qube::from_root(detail::make_root(std::move(kids)), true);
}

}  // namespace qube
