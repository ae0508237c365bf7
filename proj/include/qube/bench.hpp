#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "qube/error.hpp"
#include "qube/ingest.hpp"
#include "qube/qube.hpp"
#include "qube/setops.hpp"

namespace qube {

// ---------------------------------------------------------------------------
// Shape generators with closed-form expected sizes
// ---------------------------------------------------------------------------

/// n leaves under one dimension: uncompressed tree has n + 1 nodes.
inline std::vector<MetadataRecord> gen_flat(std::uint64_t n) {
  std::vector<MetadataRecord> records;
  records.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    MetadataRecord r;
    r.pairs.emplace_back(
        "x", std::vector<CoordinateValue>{
                 CoordinateValue::of_int(static_cast<std::int64_t>(i))});
    records.push_back(std::move(r));
  }
  return records;
}

inline std::uint64_t flat_node_count(std::uint64_t n) { return n + 1; }

/// One record over total_depth chained dimensions, branching into `width`
/// values at dimension index `depth` (0-based) and staying single-valued
/// elsewhere. The uncompressed tree forks into `width` identical chains at
/// that level; forking earlier means more duplicated chain below.
inline std::vector<MetadataRecord> gen_branch_at_depth(std::uint32_t depth,
                                                       std::uint32_t total_depth,
                                                       std::uint32_t width) {
  if (total_depth == 0 || depth >= total_depth)
    throw QubeError("branch depth must satisfy depth < total_depth");
  if (width == 0) throw QubeError("branch width must be >= 1");
  MetadataRecord r;
  for (std::uint32_t d = 0; d < total_depth; ++d) {
    std::vector<CoordinateValue> values;
    const std::uint32_t n = (d == depth) ? width : 1;
    for (std::uint32_t v = 0; v < n; ++v)
      values.push_back(CoordinateValue::of_int(v));
    r.pairs.emplace_back("d" + std::to_string(d), std::move(values));
  }
  return {std::move(r)};
}

inline std::uint64_t branch_node_count(std::uint32_t depth, std::uint32_t total_depth,
                                       std::uint32_t width) {
  return 1ull + depth + static_cast<std::uint64_t>(width) * (total_depth - depth);
}

/// One dense record: `depth` dimensions of `branching` values each, i.e. a
/// balanced tree with branching^depth leaves. Throws CapExceededError when
/// the leaf count would exceed leaf_cap.
inline std::vector<MetadataRecord> gen_wide(std::uint32_t depth, std::uint32_t branching,
                                            std::uint64_t leaf_cap = 1000000) {
  if (depth == 0 || branching == 0)
    throw QubeError("wide shape needs depth >= 1 and branching >= 1");
  std::uint64_t leaves = 1;
  for (std::uint32_t d = 0; d < depth; ++d) {
    leaves *= branching;
    if (leaves > leaf_cap)
      throw CapExceededError("wide shape would expand to more than " +
                             std::to_string(leaf_cap) + " leaves");
  }
  MetadataRecord r;
  for (std::uint32_t d = 0; d < depth; ++d) {
    std::vector<CoordinateValue> values;
    for (std::uint32_t v = 0; v < branching; ++v)
      values.push_back(CoordinateValue::of_int(v));
    r.pairs.emplace_back("d" + std::to_string(d), std::move(values));
  }
  return {std::move(r)};
}

inline std::uint64_t wide_node_count(std::uint32_t depth, std::uint32_t branching) {
  std::uint64_t total = 1, level = 1;
  for (std::uint32_t d = 0; d < depth; ++d) {
    level *= branching;
    total += level;
  }
  return total;
}

/// `n` distinct full-length tuples over `dims` dimensions of `per_dim`
/// integer values each, uniformly drawn with a fixed seed.
inline std::vector<Tuple> gen_random_tuples(std::size_t n, std::uint32_t dims,
                                            std::uint32_t per_dim, std::uint64_t seed) {
  double domain = 1;
  for (std::uint32_t d = 0; d < dims; ++d) domain *= per_dim;
  if (domain < static_cast<double>(n))
    throw QubeError("domain too small for the requested distinct tuple count");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, per_dim - 1);
  std::set<std::vector<std::uint32_t>> seen;
  std::vector<Tuple> out;
  out.reserve(n);
  std::vector<std::uint32_t> draw(dims);
  while (out.size() < n) {
    for (auto& v : draw) v = pick(rng);
    if (!seen.insert(draw).second) continue;
    Tuple t;
    t.reserve(dims);
    for (std::uint32_t d = 0; d < dims; ++d)
      t.emplace_back("d" + std::to_string(d), CoordinateValue::of_int(draw[d]));
    out.push_back(std::move(t));
  }
  return out;
}

/// Seed for randomized benchmarks: the QUBE_SEED environment variable when
/// set to a valid u64, else 42.
inline std::uint64_t bench_seed() {
  if (const char* env = std::getenv("QUBE_SEED")) {
    std::uint64_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [p, ec] = std::from_chars(env, end, v);
    if (ec == std::errc() && p == end) return v;
  }
  return 42;
}

// ---------------------------------------------------------------------------
// Timing and fitting
// ---------------------------------------------------------------------------

/// Median wall time of one op invocation, in nanoseconds, on the monotonic
/// clock. One warm-up call is discarded; each of `reps` samples repeats the
/// op enough times to span roughly 200 microseconds, so microsecond-scale
/// ops are not measured at clock-jitter resolution.
inline double measure_median_ns(const std::function<void()>& op, int reps) {
  if (reps < 1) throw QubeError("reps must be >= 1");
  using clock = std::chrono::steady_clock;
  auto ns_between = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::nano>(b - a).count();
  };

  op();  // warm-up, discarded
  const auto e0 = clock::now();
  op();
  const double estimate = std::max(ns_between(e0, clock::now()), 50.0);
  const int inner =
      estimate >= 200000.0
          ? 1
          : static_cast<int>(std::min(10000.0, std::ceil(200000.0 / estimate)));

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    for (int i = 0; i < inner; ++i) op();
    samples.push_back(ns_between(t0, clock::now()) / inner);
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2,
                   samples.end());
  const double upper = samples[samples.size() / 2];
  if (samples.size() % 2) return upper;
  const double lower =
      *std::max_element(samples.begin(), samples.begin() + samples.size() / 2);
  return (lower + upper) / 2.0;
}

struct LinearFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
};

/// Ordinary least squares y = slope x + intercept with the coefficient of
/// determination. Undefined (valid == false) under two points or a
/// degenerate x spread; a perfectly flat y fits with r2 == 1.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
  }
  f.r2 = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  f.valid = true;
  return f;
}

struct BenchResult {
  std::string label;
  std::vector<double> sizes;     // x axis (leaves, depth, or node count)
  std::vector<double> times_ns;  // median per-op wall time
  LinearFit fit;
};

namespace detail {

inline std::vector<Tuple> expand_records(const std::vector<MetadataRecord>& records) {
  std::vector<Tuple> tuples;
  for (const MetadataRecord& r : records) {
    std::vector<Tuple> e = expand_record(r);
    tuples.insert(tuples.end(), std::make_move_iterator(e.begin()),
                  std::make_move_iterator(e.end()));
  }
  return tuples;
}

inline void require_shape(const Qube& q, std::uint64_t nodes, std::uint64_t leaves,
                          const char* what) {
  if (count_nodes(q) != nodes || count_leaves(q) != leaves)
    throw QubeError(std::string("generated ") + what +
                    " shape does not match its closed form");
}

inline BenchResult finish(std::string label, std::vector<double> sizes,
                          std::vector<double> times) {
  BenchResult r;
  r.label = std::move(label);
  r.fit = linear_fit(sizes, times);
  r.sizes = std::move(sizes);
  r.times_ns = std::move(times);
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Benchmarks. Every generated input is checked against its closed-form node
// and leaf counts before any timing is trusted.
// ---------------------------------------------------------------------------

inline BenchResult bench_construction_flat(const std::vector<std::uint64_t>& sizes,
                                           int reps) {
  std::vector<double> xs, ts;
  for (std::uint64_t n : sizes) {
    const std::vector<Tuple> tuples = detail::expand_records(gen_flat(n));
    detail::require_shape(from_tuples(tuples), flat_node_count(n), n, "flat");
    ts.push_back(measure_median_ns([&] { from_tuples(tuples); }, reps));
    xs.push_back(static_cast<double>(n));
  }
  return detail::finish("construction/flat", std::move(xs), std::move(ts));
}

/// Depth sweep at fixed total depth and width; x is the branch depth. Node
/// count falls as the fork moves deeper, and construction time follows it.
inline BenchResult bench_construction_branch_depth(
    std::uint32_t total_depth, std::uint32_t width,
    const std::vector<std::uint32_t>& depths, int reps) {
  std::vector<double> xs, ts;
  for (std::uint32_t d : depths) {
    const std::vector<Tuple> tuples =
        detail::expand_records(gen_branch_at_depth(d, total_depth, width));
    detail::require_shape(from_tuples(tuples),
                          branch_node_count(d, total_depth, width), width,
                          "branch-at-depth");
    ts.push_back(measure_median_ns([&] { from_tuples(tuples); }, reps));
    xs.push_back(static_cast<double>(d));
  }
  return detail::finish("construction/branch-depth", std::move(xs), std::move(ts));
}

/// Balanced depth-3 trees sized to the targets by choosing the branching
/// factor; x is the exact total node count.
inline BenchResult bench_construction_wide(const std::vector<std::uint64_t>& target_leaves,
                                           int reps) {
  std::vector<double> xs, ts;
  for (std::uint64_t target : target_leaves) {
    const auto b = static_cast<std::uint32_t>(
        std::max<long long>(2, std::llround(std::cbrt(static_cast<double>(target)))));
    const std::uint64_t leaves = static_cast<std::uint64_t>(b) * b * b;
    const std::vector<Tuple> tuples =
        detail::expand_records(gen_wide(3, b, leaves));
    detail::require_shape(from_tuples(tuples), wide_node_count(3, b), leaves, "wide");
    ts.push_back(measure_median_ns([&] { from_tuples(tuples); }, reps));
    xs.push_back(static_cast<double>(wide_node_count(3, b)));
  }
  return detail::finish("construction/wide", std::move(xs), std::move(ts));
}

inline BenchResult bench_compression_flat(const std::vector<std::uint64_t>& sizes,
                                          int reps) {
  std::vector<double> xs, ts;
  for (std::uint64_t n : sizes) {
    const Qube trie = from_tuples(detail::expand_records(gen_flat(n)));
    detail::require_shape(trie, flat_node_count(n), n, "flat");
    const Qube canon = compress(trie);
    detail::require_shape(canon, 2, n, "compressed flat");
    ts.push_back(measure_median_ns([&] { compress(trie); }, reps));
    xs.push_back(static_cast<double>(n));
  }
  return detail::finish("compression/flat", std::move(xs), std::move(ts));
}

inline BenchResult bench_compression_branch_depth(
    std::uint32_t total_depth, std::uint32_t width,
    const std::vector<std::uint32_t>& depths, int reps) {
  std::vector<double> xs, ts;
  for (std::uint32_t d : depths) {
    const Qube trie =
        from_tuples(detail::expand_records(gen_branch_at_depth(d, total_depth, width)));
    detail::require_shape(trie, branch_node_count(d, total_depth, width), width,
                          "branch-at-depth");
    detail::require_shape(compress(trie), 1ull + total_depth, width,
                          "compressed branch-at-depth");
    ts.push_back(measure_median_ns([&] { compress(trie); }, reps));
    xs.push_back(static_cast<double>(d));
  }
  return detail::finish("compression/branch-depth", std::move(xs), std::move(ts));
}

inline BenchResult bench_compression_wide(const std::vector<std::uint64_t>& target_leaves,
                                          int reps) {
  std::vector<double> xs, ts;
  for (std::uint64_t target : target_leaves) {
    const auto b = static_cast<std::uint32_t>(
        std::max<long long>(2, std::llround(std::cbrt(static_cast<double>(target)))));
    const std::uint64_t leaves = static_cast<std::uint64_t>(b) * b * b;
    const Qube trie = from_tuples(detail::expand_records(gen_wide(3, b, leaves)));
    detail::require_shape(trie, wide_node_count(3, b), leaves, "wide");
    detail::require_shape(compress(trie), 4, leaves, "compressed wide");
    ts.push_back(measure_median_ns([&] { compress(trie); }, reps));
    xs.push_back(static_cast<double>(wide_node_count(3, b)));
  }
  return detail::finish("compression/wide", std::move(xs), std::move(ts));
}

/// compress() on the same logical qube, once from the uncompressed tree and
/// once from its canonical form with the canonical flag deliberately
/// stripped (so the full hash-group-confirm pass runs with zero merges).
/// Returns (uncompressed ns, canonical-form ns).
inline std::pair<double, double> bench_recompression(std::uint64_t target_leaves,
                                                     int reps) {
  const auto b = static_cast<std::uint32_t>(
      std::max<long long>(2, std::llround(std::cbrt(static_cast<double>(target_leaves)))));
  const std::uint64_t leaves = static_cast<std::uint64_t>(b) * b * b;
  const Qube trie = from_tuples(detail::expand_records(gen_wide(3, b, leaves)));
  detail::require_shape(trie, wide_node_count(3, b), leaves, "wide");
  const Qube dense = Qube::from_root(compress(trie).root_ptr(), false);
  const double t_uncompressed = measure_median_ns([&] { compress(trie); }, reps);
  const double t_dense = measure_median_ns([&] { compress(dense); }, reps);
  return {t_uncompressed, t_dense};
}

/// Union of two equal-size random qubes per size; the domain scales with the
/// input so density stays comparable across sizes.
inline BenchResult bench_union_pairwise(const std::vector<std::uint64_t>& sizes,
                                        int reps, std::uint64_t seed) {
  std::vector<double> xs, ts;
  for (std::uint64_t n : sizes) {
    const auto per_dim = static_cast<std::uint32_t>(
        std::ceil(std::pow(10.0 * static_cast<double>(n), 0.25)));
    const Qube a = compress(from_tuples(gen_random_tuples(n, 4, per_dim, seed)));
    const Qube b =
        compress(from_tuples(gen_random_tuples(n, 4, per_dim, seed ^ 0x5851f42d4c957f2dULL)));
    if (count_leaves(a) != n || count_leaves(b) != n)
      throw QubeError("random union input lost tuples");
    ts.push_back(measure_median_ns([&] { union_of(a, b); }, reps));
    xs.push_back(static_cast<double>(n));
  }
  return detail::finish("union/pairwise", std::move(xs), std::move(ts));
}

/// Folds k equal-size random qubes from one shared domain; x is k and the
/// time is the whole fold, so linear growth means union cost is not
/// degrading as the accumulator absorbs more inputs.
inline BenchResult bench_union_progressive(const std::vector<std::uint32_t>& counts,
                                           std::uint32_t tuples_per_qube, int reps,
                                           std::uint64_t seed) {
  const std::uint32_t k_max =
      counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  std::vector<Qube> inputs;
  inputs.reserve(k_max);
  for (std::uint32_t i = 0; i < k_max; ++i)
    inputs.push_back(
        compress(from_tuples(gen_random_tuples(tuples_per_qube, 4, 10, seed + i))));

  std::vector<double> xs, ts;
  for (std::uint32_t k : counts) {
    if (k < 2) throw QubeError("progressive union needs k >= 2");
    ts.push_back(measure_median_ns(
        [&] {
          Qube acc = inputs[0];
          for (std::uint32_t i = 1; i < k; ++i) acc = union_of(acc, inputs[i]);
        },
        reps));
    xs.push_back(static_cast<double>(k));
  }
  return detail::finish("union/progressive", std::move(xs), std::move(ts));
}

// ---------------------------------------------------------------------------
// Shape-vector wrappers and CSV
// ---------------------------------------------------------------------------

enum class BenchShape { Flat, BranchAtDepth, Wide };

inline constexpr std::uint32_t kBranchSweepDepth = 16;
inline constexpr std::uint32_t kBranchSweepWidth = 64;
inline const std::vector<std::uint32_t> kBranchSweepDepths = {1, 3, 5, 7,
                                                              9, 11, 13, 15};

/// Runs the construction benchmark for each requested shape. `sizes` feeds
/// the flat and wide shapes; the branch-at-depth shape is a fixed depth
/// sweep (its x axis is depth, not size).
inline std::vector<BenchResult> bench_construction(const std::vector<BenchShape>& shapes,
                                                   const std::vector<std::uint64_t>& sizes,
                                                   int reps) {
  std::vector<BenchResult> out;
  for (BenchShape s : shapes) {
    switch (s) {
      case BenchShape::Flat:
        out.push_back(bench_construction_flat(sizes, reps));
        break;
      case BenchShape::BranchAtDepth:
        out.push_back(bench_construction_branch_depth(
            kBranchSweepDepth, kBranchSweepWidth, kBranchSweepDepths, reps));
        break;
      case BenchShape::Wide:
        out.push_back(bench_construction_wide(sizes, reps));
        break;
    }
  }
  return out;
}

inline std::vector<BenchResult> bench_compression(const std::vector<BenchShape>& shapes,
                                                  const std::vector<std::uint64_t>& sizes,
                                                  int reps) {
  std::vector<BenchResult> out;
  for (BenchShape s : shapes) {
    switch (s) {
      case BenchShape::Flat:
        out.push_back(bench_compression_flat(sizes, reps));
        break;
      case BenchShape::BranchAtDepth:
        out.push_back(bench_compression_branch_depth(
            kBranchSweepDepth, kBranchSweepWidth, kBranchSweepDepths, reps));
        break;
      case BenchShape::Wide:
        out.push_back(bench_compression_wide(sizes, reps));
        break;
    }
  }
  return out;
}

inline std::vector<BenchResult> bench_union(const std::vector<std::uint64_t>& sizes,
                                            int reps, std::uint64_t seed) {
  return {bench_union_pairwise(sizes, reps, seed),
          bench_union_progressive({8, 16, 32, 64}, 2000, reps, seed + 1000)};
}

/// CSV rows `label,size,median_ns,slope,intercept,r2`, one per measured
/// size, fit columns repeated per row. Invalid fits print literal nan.
/// Formatting is fixed, so equal results serialize identically.
inline std::string emit_csv(const std::vector<BenchResult>& results) {
  std::string out = "label,size,median_ns,slope,intercept,r2\n";
  char buf[160];
  for (const BenchResult& r : results) {
    for (std::size_t i = 0; i < r.sizes.size(); ++i) {
      if (r.fit.valid) {
        std::snprintf(buf, sizeof buf, "%s,%.0f,%.1f,%.6g,%.6g,%.6g\n",
                      r.label.c_str(), r.sizes[i], r.times_ns[i], r.fit.slope,
                      r.fit.intercept, r.fit.r2);
      } else {
        std::snprintf(buf, sizeof buf, "%s,%.0f,%.1f,nan,nan,nan\n",
                      r.label.c_str(), r.sizes[i], r.times_ns[i]);
      }
      out += buf;
    }
  }
  return out;
}

inline void emit_csv(const std::vector<BenchResult>& results,
                     const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw QubeError("cannot open csv file '" + file.string() + "'");
  out << emit_csv(results);
  if (!out) throw QubeError("failed writing csv file '" + file.string() + "'");
}

}  // namespace qube
