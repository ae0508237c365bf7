// Walkthrough: plan a point timeseries against a mock gridded field store.
// The qube names which fields exist; the planner turns a constraint plus a
// spatial feature into the minimal byte ranges, so a one-point timeseries
// reads a few hundred bytes instead of every full field.

#include <filesystem>
#include <iostream>

#include "qube/extract.hpp"
#include "qube/ingest.hpp"

int main() {
  using namespace qube;
  namespace fs = std::filesystem;

  // Four days, four parameters, six levels: 96 fields on a 32x32 grid.
  const Qube catalogue = build(parse_records(
      "class=od,date=20240101/20240102/20240103/20240104,"
      "param=t/z/q/r,level=1/2/3/5/7/9\n"));

  GridSpec grid;
  grid.nlat = 32;
  grid.nlon = 32;
  grid.lat0 = 90;
  grid.lat1 = -90;
  grid.lon0 = 0;
  grid.lon1 = 360.0 * 31 / 32;

  const FieldStoreManifest manifest = manifest_for(catalogue, grid, "fields.bin");
  const fs::path dir = fs::temp_directory_path() / "qube_demo_store";
  fs::create_directories(dir);
  write_mock_store(manifest, dir / "fields.bin");
  std::cout << "store: " << manifest.fields.size() << " fields x "
            << grid.cell_count() << " cells\n";

  // A timeseries of temperature at one location, all dates and levels: the
  // constraint picks the fields, the feature picks one cell in each.
  const Constraint c = parse_constraint("param=t");
  const AccessPlan pt = plan(catalogue, c, Feature::point(51.0, 0.0), manifest);
  std::cout << "point plan: ranges=" << pt.ranges.size()
            << " bytes=" << pt.total_bytes << " fields=" << pt.fields_touched
            << "\n";

  const ExecuteResult got = execute_plan(pt, dir / "fields.bin");
  std::cout << "executed: payload=" << got.payload_bytes_read
            << "B headers=" << got.header_bytes_read << "B values="
            << got.values.size() << "\n";

  // Reading whole fields for the same request would cost the full payload.
  const std::uint64_t full = static_cast<std::uint64_t>(pt.fields_touched) *
                             grid.cell_count() * 8;
  std::cout << "full-field cost would be " << full << "B, planned read is "
            << got.payload_bytes_read << "B (1/"
            << full / got.payload_bytes_read << ")\n";

  // A box over Europe: one run per grid row per field, coalesced.
  const AccessPlan box =
      plan(catalogue, c, Feature::box(35.0, 72.0, 0.0, 40.0), manifest);
  std::uint64_t cells = 0;
  for (const CellRun& r : feature_to_indices(grid, Feature::box(35, 72, 0, 40)))
    cells += r.count;
  std::cout << "box plan: ranges=" << box.ranges.size() << " bytes="
            << box.total_bytes << " (= 8 x " << cells << " cells x "
            << box.fields_touched << " fields)\n";

  fs::remove_all(dir);
  return 0;
}
