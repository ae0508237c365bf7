// Walkthrough: maintain an availability index for a small archive. Each
// ingestion batch arrives as flat metadata records; the index is the union of
// everything seen so far, always kept in canonical compressed form.

#include <iostream>

#include "qube/ingest.hpp"
#include "qube/select.hpp"
#include "qube/serialize.hpp"
#include "qube/setops.hpp"

int main() {
  using namespace qube;

  // Day one: temperature and geopotential on three pressure levels.
  const Qube day1 = build(parse_records(
      "class=od,date=20240101,param=t/z,level=500/850/1000\n"));

  // Day two adds a day and a new surface parameter without levels. The two
  // shapes coexist: 'level' is a conditional dimension, present only where
  // it applies.
  const Qube day2 = build(parse_records(
      "class=od,date=20240102,param=t/z,level=500/850/1000\n"
      "class=od,date=20240102,param=2t\n"));

  const Qube index = union_of(day1, day2);
  std::cout << "--- full index (" << count_leaves(index) << " combinations, "
            << count_nodes(index) << " nodes) ---\n"
            << to_text(index);

  // The two upper-air days collapsed into one branch: the date node now
  // carries both values because everything below it is structurally equal.
  const QubeStats st = stats(index);
  std::cout << "nodes=" << st.node_count << " distinct=" << st.distinct_structural_nodes
            << " depth=" << st.max_depth << "\n\n";

  // What is available for param=t at or below 850 hPa?
  const Constraint c = parse_constraint("param=t,level=850..1000");
  const Qube slice = select(index, c);
  std::cout << "--- param=t, level in [850, 1000] ---\n" << to_text(slice);

  // Availability questions are set algebra. Which combinations appeared on
  // day two only?
  const Qube fresh = difference(index, day1);
  std::cout << "--- new on day two ---\n" << to_text(fresh);

  // Everything round-trips through the interchange form unchanged.
  const Qube back = from_interchange_text(to_interchange_text(index));
  std::cout << "interchange round trip equal: "
            << (structural_equal(back, index) ? "yes" : "no") << "\n";
  return 0;
}
