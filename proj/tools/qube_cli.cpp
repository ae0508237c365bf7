// Command line front end. Qube files on disk are the JSON interchange form;
// exit codes are 0 (ok), 1 (usage), 2 (data or I/O error).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qube/bench.hpp"
#include "qube/extract.hpp"
#include "qube/ingest.hpp"
#include "qube/select.hpp"
#include "qube/serialize.hpp"
#include "qube/setops.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw qube::QubeError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw qube::QubeError("failed reading '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw qube::QubeError("cannot open '" + path + "' for writing");
  out << data;
  if (!out) throw qube::QubeError("failed writing '" + path + "'");
}

qube::Qube load_qube(const std::string& path) {
  return qube::from_interchange_text(read_file(path));
}

void save_qube(const qube::Qube& q, const std::string& path) {
  write_file(path, qube::to_interchange_text(q));
}

std::vector<double> parse_doubles(const std::string& text, std::size_t expect,
                                  const std::string& what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string part =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw qube::QubeError("bad " + what + " value '" + part + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.size() != expect)
    throw qube::QubeError(what + " needs exactly " + std::to_string(expect) +
                          " comma separated values");
  return out;
}

qube::GridSpec parse_grid(const std::string& grid, const std::string& bounds) {
  const std::size_t x = grid.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == grid.size())
    throw qube::QubeError("grid must look like NLATxNLON, e.g. 32x32");
  qube::GridSpec g;
  try {
    g.nlat = static_cast<std::uint32_t>(std::stoul(grid.substr(0, x)));
    g.nlon = static_cast<std::uint32_t>(std::stoul(grid.substr(x + 1)));
  } catch (const std::exception&) {
    throw qube::QubeError("grid must look like NLATxNLON, e.g. 32x32");
  }
  if (bounds.empty()) {
    // Global default: rows from the north pole down, columns from the
    // prime meridian east, last column one step short of wrapping.
    g.lat0 = 90.0;
    g.lat1 = g.nlat > 1 ? -90.0 : 90.0;
    g.lon0 = 0.0;
    g.lon1 = g.nlon > 1 ? 360.0 * (g.nlon - 1) / g.nlon : 0.0;
  } else {
    const std::vector<double> b = parse_doubles(bounds, 4, "bounds");
    g.lat0 = b[0];
    g.lat1 = b[1];
    g.lon0 = b[2];
    g.lon1 = b[3];
  }
  g.validate();
  return g;
}

qube::Feature parse_feature(const std::string& text) {
  if (text == "all") return qube::Feature::all_cells();
  const std::size_t colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "point") {
    const std::vector<double> v = parse_doubles(args, 2, "point");
    return qube::Feature::point(v[0], v[1]);
  }
  if (kind == "box") {
    const std::vector<double> v = parse_doubles(args, 4, "box");
    return qube::Feature::box(v[0], v[1], v[2], v[3]);
  }
  throw qube::QubeError(
      "feature must be 'all', 'point:LAT,LON' or 'box:LAT,LAT,LON,LON'");
}

std::vector<std::uint64_t> parse_sizes(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string part =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      out.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw qube::QubeError("bad size '" + part + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw qube::QubeError("at least one size is required");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qube: compressed metadata tree toolkit"};
  app.require_subcommand(1);

  // --- build ---------------------------------------------------------------
  auto* cmd_build = app.add_subcommand("build", "Build a qube from a record file");
  std::string build_records, build_out, build_strategy = "sequential";
  std::size_t build_batch = 64;
  bool build_no_compress = false, build_show_stats = false;
  cmd_build->add_option("--records", build_records, "Record file, one record per line")
      ->required();
  cmd_build->add_option("-o,--output", build_out, "Output qube (JSON)")->required();
  cmd_build->add_option("--batch-size", build_batch, "Records per batch");
  cmd_build->add_option("--strategy", build_strategy,
                        "Merge strategy: sequential or pairwise");
  cmd_build->add_flag("--no-compress-batches", build_no_compress,
                      "Skip per-batch compression");
  cmd_build->add_flag("--stats", build_show_stats, "Print build statistics");

  // --- unary and binary qube ops --------------------------------------------
  auto* cmd_compress = app.add_subcommand("compress", "Compress a qube");
  std::string compress_in, compress_out;
  cmd_compress->add_option("input", compress_in, "Input qube")->required();
  cmd_compress->add_option("-o,--output", compress_out, "Output qube")->required();

  std::string binop_a, binop_b, binop_out;
  auto add_binop = [&](const char* name, const char* help) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("a", binop_a, "Left qube")->required();
    c->add_option("b", binop_b, "Right qube")->required();
    c->add_option("-o,--output", binop_out, "Output qube")->required();
    return c;
  };
  auto* cmd_union = add_binop("union", "Union of two qubes");
  auto* cmd_intersect = add_binop("intersect", "Intersection of two qubes");
  auto* cmd_diff = add_binop("diff", "Difference of two qubes (a minus b)");

  auto* cmd_select = app.add_subcommand("select", "Filter a qube by constraint");
  std::string select_in, select_out, select_expr;
  bool select_drop_missing = false;
  cmd_select->add_option("input", select_in, "Input qube")->required();
  cmd_select->add_option("-c,--constraint", select_expr,
                         "Constraint, e.g. 'level=1/3,date=20240101..20240131'");
  cmd_select->add_flag("--drop-missing", select_drop_missing,
                       "Drop branches that lack a constrained dimension");
  cmd_select->add_option("-o,--output", select_out, "Output qube")->required();

  // --- inspection ------------------------------------------------------------
  std::string inspect_in;
  auto* cmd_count = app.add_subcommand("count", "Print the leaf count");
  cmd_count->add_option("input", inspect_in, "Input qube")->required();
  auto* cmd_stats = app.add_subcommand("stats", "Print size statistics");
  cmd_stats->add_option("input", inspect_in, "Input qube")->required();
  auto* cmd_axes = app.add_subcommand("axes", "Print every dimension's value set");
  cmd_axes->add_option("input", inspect_in, "Input qube")->required();
  auto* cmd_ls = app.add_subcommand("ls", "Print the indented text form");
  cmd_ls->add_option("input", inspect_in, "Input qube")->required();

  // --- field store -----------------------------------------------------------
  auto* cmd_mockstore =
      app.add_subcommand("mockstore", "Write a synthetic field store for a qube");
  std::string ms_from, ms_grid = "32x32", ms_bounds, ms_out;
  cmd_mockstore->add_option("--from", ms_from, "Qube whose leaves become fields")
      ->required();
  cmd_mockstore->add_option("--grid", ms_grid, "Grid as NLATxNLON");
  cmd_mockstore->add_option("--bounds", ms_bounds,
                            "lat0,lat1,lon0,lon1 (default global)");
  cmd_mockstore->add_option("-o,--output", ms_out, "Store directory")->required();

  auto* cmd_plan =
      app.add_subcommand("plan", "Plan (and optionally run) a byte-range extraction");
  std::string plan_in, plan_expr, plan_feature = "all", plan_store;
  bool plan_execute = false;
  cmd_plan->add_option("input", plan_in, "Input qube")->required();
  cmd_plan->add_option("-c,--constraint", plan_expr, "Constraint expression");
  cmd_plan->add_option("--feature", plan_feature,
                       "all, point:LAT,LON or box:LAT,LAT,LON,LON");
  cmd_plan->add_option("--store", plan_store, "Store directory")->required();
  cmd_plan->add_flag("--execute", plan_execute, "Read the planned ranges");

  // --- bench -------------------------------------------------------------------
  auto* cmd_bench = app.add_subcommand("bench", "Scaling benchmarks");
  std::string bench_kind, bench_sizes = "1000,10000,100000", bench_out;
  int bench_reps = 5;
  cmd_bench->add_option("kind", bench_kind, "construction, compression or union")
      ->required();
  cmd_bench->add_option("--sizes", bench_sizes, "Comma separated sizes");
  cmd_bench->add_option("--reps", bench_reps, "Samples per point");
  cmd_bench->add_option("-o,--output", bench_out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cmd_build) {
      std::vector<qube::MetadataRecord> records = qube::parse_records(read_file(build_records));
      qube::BuildConfig cfg;
      cfg.batch_size = build_batch;
      cfg.compress_each_batch = !build_no_compress;
      if (build_strategy == "sequential")
        cfg.merge_strategy = qube::MergeStrategy::Sequential;
      else if (build_strategy == "pairwise")
        cfg.merge_strategy = qube::MergeStrategy::PairwiseTree;
      else
        throw qube::QubeError("strategy must be 'sequential' or 'pairwise'");
      qube::BuildStats bs{};
      qube::Qube q = qube::build(records, cfg, &bs);
      save_qube(q, build_out);
      if (build_show_stats)
        std::cout << "records=" << records.size() << " leaves=" << qube::count_leaves(q)
                  << " batches=" << bs.batches
                  << " peak_nodes=" << bs.peak_intermediate_node_count << "\n";
    } else if (*cmd_compress) {
      save_qube(qube::compress(load_qube(compress_in)), compress_out);
    } else if (*cmd_union) {
      save_qube(qube::union_of(load_qube(binop_a), load_qube(binop_b)), binop_out);
    } else if (*cmd_intersect) {
      save_qube(qube::intersect(load_qube(binop_a), load_qube(binop_b)), binop_out);
    } else if (*cmd_diff) {
      save_qube(qube::difference(load_qube(binop_a), load_qube(binop_b)), binop_out);
    } else if (*cmd_select) {
      const qube::MissingPolicy policy = select_drop_missing
                                             ? qube::MissingPolicy::DropBranch
                                             : qube::MissingPolicy::KeepBranch;
      const qube::Constraint c = qube::parse_constraint(select_expr, policy);
      save_qube(qube::select(load_qube(select_in), c), select_out);
    } else if (*cmd_count) {
      std::cout << qube::count_leaves(load_qube(inspect_in)) << "\n";
    } else if (*cmd_stats) {
      const qube::QubeStats st = qube::stats(load_qube(inspect_in));
      std::cout << "leaves=" << st.leaf_count << " nodes=" << st.node_count
                << " distinct=" << st.distinct_structural_nodes
                << " depth=" << st.max_depth << "\n";
    } else if (*cmd_axes) {
      for (const auto& [dim, values] : qube::axes(load_qube(inspect_in))) {
        std::cout << dim << "=";
        for (std::size_t i = 0; i < values.size(); ++i) {
          if (i) std::cout << "/";
          std::cout << qube::encode_token(values[i]);
        }
        std::cout << "\n";
      }
    } else if (*cmd_ls) {
      std::cout << qube::to_text(load_qube(inspect_in));
    } else if (*cmd_mockstore) {
      const qube::Qube q = load_qube(ms_from);
      const qube::GridSpec grid = parse_grid(ms_grid, ms_bounds);
      const qube::FieldStoreManifest manifest = qube::manifest_for(q, grid, "fields.bin");
      std::filesystem::create_directories(ms_out);
      write_file((std::filesystem::path(ms_out) / "manifest.json").string(),
                 qube::manifest_to_json(manifest).dump(2) + "\n");
      qube::write_mock_store(manifest, std::filesystem::path(ms_out) / "fields.bin");
      std::cout << "fields=" << manifest.fields.size()
                << " cells=" << grid.cell_count() << "\n";
    } else if (*cmd_plan) {
      const qube::Qube q = load_qube(plan_in);
      const qube::Constraint c = qube::parse_constraint(plan_expr);
      const qube::Feature f = parse_feature(plan_feature);
      const std::filesystem::path dir(plan_store);
      const qube::FieldStoreManifest manifest = qube::manifest_from_json(
          nlohmann::json::parse(read_file((dir / "manifest.json").string())));
      const qube::AccessPlan p = qube::plan(q, c, f, manifest);
      std::cout << "ranges=" << p.ranges.size() << " bytes=" << p.total_bytes
                << " fields=" << p.fields_touched << "\n";
      if (plan_execute) {
        const qube::ExecuteResult r =
            qube::execute_plan(p, dir / manifest.data_path);
        std::cout << "read_payload=" << r.payload_bytes_read
                  << " values=" << r.values.size() << "\n";
      }
    } else if (*cmd_bench) {
      const std::vector<std::uint64_t> sizes = parse_sizes(bench_sizes);
      const std::vector<qube::BenchShape> shapes = {qube::BenchShape::Flat,
                                                    qube::BenchShape::BranchAtDepth,
                                                    qube::BenchShape::Wide};
      std::vector<qube::BenchResult> results;
      if (bench_kind == "construction")
        results = qube::bench_construction(shapes, sizes, bench_reps);
      else if (bench_kind == "compression")
        results = qube::bench_compression(shapes, sizes, bench_reps);
      else if (bench_kind == "union")
        results = qube::bench_union(sizes, bench_reps, qube::bench_seed());
      else
        throw qube::QubeError("bench kind must be construction, compression or union");
      if (bench_out.empty())
        std::cout << qube::emit_csv(results);
      else
        qube::emit_csv(results, bench_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
