#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracle.hpp"
#include "qube/serialize.hpp"
#include "qube/setops.hpp"

using namespace qube;

namespace {

Tuple tpl(std::initializer_list<std::pair<const char*, std::int64_t>> parts) {
  Tuple t;
  for (const auto& [d, v] : parts) t.emplace_back(d, CoordinateValue::of_int(v));
  return t;
}

}  // namespace

TEST_CASE("text form of a small qube") {
  // Payload keys are raw bytes and always render as hex.
  std::vector<std::pair<Tuple, PayloadRef>> tuples = {
      {tpl({{"a", 1}, {"b", 1}}), PayloadRef::none()},
      {tpl({{"a", 1}, {"b", 2}}), PayloadRef::none()},
      {tpl({{"a", 2}, {"b", 1}}), PayloadRef::storage_key(std::string("\x4b\x31", 2))},
  };
  const Qube q = compress(from_tuples(tuples));
  const std::string text = to_text(q);
  CHECK(text ==
        "root\n"
        "  a=1\n"
        "    b=1/2\n"
        "  a=2\n"
        "    b=1 @key=4b31\n");
}

TEST_CASE("empty qube text form") {
  CHECK(to_text(Qube::empty()) == "root\n");
  CHECK(count_leaves(from_text("root\n")) == 0);
  CHECK(from_text("root").canonical_hint());  // trailing newline optional
}

TEST_CASE("dense two-level text form") {
  std::vector<Tuple> tuples = {tpl({{"a", 1}, {"b", 1}}), tpl({{"a", 1}, {"b", 2}}),
                               tpl({{"a", 2}, {"b", 1}}), tpl({{"a", 2}, {"b", 2}})};
  CHECK(to_text(compress(from_tuples(tuples))) ==
        "root\n"
        "  a=1/2\n"
        "    b=1/2\n");
}

TEST_CASE("text round trip preserves structure and canonical flag") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 60; ++iter) {
    const testutil::Family fam = testutil::random_family(rng);
    const testutil::Instance inst =
        testutil::random_instance(fam, rng, 50, iter % 2 ? 9 : 0);
    const Qube q = compress(inst.qube);
    const Qube back = from_text(to_text(q));
    CHECK(structural_equal(q, back));
    CHECK(back.canonical_hint());  // loader detects canonical trees
    CHECK(to_text(back) == to_text(q));

    // Uncompressed trees round trip too, without gaining the flag
    // (unless the tree happens to be canonical already).
    const Qube raw_back = from_text(to_text(inst.qube));
    CHECK(structural_equal(inst.qube, raw_back));
  }
}

TEST_CASE("text loader accepts non-canonical input and flags it") {
  // Two mergeable siblings: legal tree, not canonical.
  const std::string text =
      "root\n"
      "  a=1\n"
      "    b=1\n"
      "  a=2\n"
      "    b=1\n";
  const Qube q = from_text(text);
  CHECK_FALSE(q.canonical_hint());
  CHECK(count_nodes(q) == 5);
  CHECK(count_nodes(compress(q)) == 3);
}

TEST_CASE("text loader errors carry positions") {
  // Line 1 must be the root marker.
  CHECK_THROWS_AS(from_text("a=1\n"), SyntaxError);
  try {
    from_text("nope\n");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
  }

  // Tabs are not indentation.
  CHECK_THROWS_AS(from_text("root\n\ta=1\n"), IndentError);
  // Odd indent width.
  CHECK_THROWS_AS(from_text("root\n   a=1\n"), IndentError);
  // Jumping two levels deeper.
  CHECK_THROWS_AS(from_text("root\n    a=1\n"), IndentError);
  try {
    from_text("root\n  a=1\n      b=1\n");
    FAIL("expected IndentError");
  } catch (const IndentError& e) {
    CHECK(e.line() == 3);
  }

  // Missing '=', bad dimension, reserved root, empty token.
  CHECK_THROWS_AS(from_text("root\n  a\n"), SyntaxError);
  CHECK_THROWS_AS(from_text("root\n  =1\n"), SyntaxError);
  CHECK_THROWS_AS(from_text("root\n  root=1\n"), SyntaxError);
  CHECK_THROWS_AS(from_text("root\n  a=\n"), SyntaxError);
  CHECK_THROWS_AS(from_text("root\n  a=1/\n"), SyntaxError);

  // A second top-level root line.
  CHECK_THROWS_AS(from_text("root\nroot\n"), SyntaxError);

  // Repeated dimension along one path.
  CHECK_THROWS_AS(from_text("root\n  a=1\n    a=2\n"), SyntaxError);

  // Interior payloads are invalid.
  CHECK_THROWS_AS(from_text("root\n  a=1 @key=ab\n    b=1\n"), SyntaxError);

  // Same-dimension siblings with overlapping values.
  CHECK_THROWS_AS(from_text("root\n  a=1/2\n  a=2/3\n"), SyntaxError);

  // Bad payload hex.
  CHECK_THROWS_AS(from_text("root\n  a=1 @key=xyz\n"), SyntaxError);

  // Blank interior lines are not allowed.
  CHECK_THROWS_AS(from_text("root\n\n  a=1\n"), SyntaxError);
}

TEST_CASE("text escaping round trips hostile values") {
  std::vector<Tuple> tuples(3);
  tuples[0].emplace_back("d", CoordinateValue::of_str("a/b"));
  tuples[1].emplace_back("d", CoordinateValue::of_str("x\ny"));
  tuples[2].emplace_back("d", CoordinateValue::of_str(""));
  const Qube q = compress(from_tuples(tuples));
  const Qube back = from_text(to_text(q));
  CHECK(structural_equal(q, back));
  CHECK(testutil::expand(back) == testutil::expand(q));
}

TEST_CASE("interchange structure") {
  std::vector<std::pair<Tuple, PayloadRef>> tuples = {
      {tpl({{"a", 1}, {"b", 1}}), PayloadRef::storage_key(std::string("\x0a\x1b", 2))}};
  const Qube q = compress(from_tuples(tuples));
  const nlohmann::json j = to_interchange(q);
  CHECK(j.at("version") == kInterchangeVersion);
  const auto& root = j.at("root");
  REQUIRE(root.at("children").size() == 1);
  const auto& a = root.at("children").at(0);
  CHECK(a.at("dim") == "a");
  // Values are tagged objects; integers carry native JSON numbers.
  CHECK(a.at("values").at(0) == nlohmann::json({{"tag", "int"}, {"value", 1}}));
  const auto& b = a.at("children").at(0);
  CHECK(b.at("payload").at("key") == "0a1b");

  // Dates and timestamps carry their canonical strings.
  std::vector<Tuple> dt(1);
  dt[0].emplace_back("when", CoordinateValue::of_date(20240131));
  const nlohmann::json jd = to_interchange(from_tuples(dt));
  CHECK(jd.at("root").at("children").at(0).at("values").at(0) ==
        nlohmann::json({{"tag", "date"}, {"value", "20240131"}}));
}

TEST_CASE("interchange round trip") {
  std::mt19937_64 rng(123);
  for (int iter = 0; iter < 60; ++iter) {
    const testutil::Family fam = testutil::random_family(rng);
    const testutil::Instance inst =
        testutil::random_instance(fam, rng, 50, iter % 2 ? 21 : 0);
    const Qube q = compress(inst.qube);
    const Qube back = from_interchange_text(to_interchange_text(q));
    CHECK(structural_equal(q, back));
    CHECK(back.canonical_hint());
    CHECK(to_interchange_text(back) == to_interchange_text(q));
  }
}

TEST_CASE("interchange rejects malformed documents") {
  auto reject = [](const char* doc) {
    CHECK_THROWS_AS(from_interchange_text(doc), SchemaError);
  };
  reject("not json at all");
  reject("{}");                                     // missing keys
  reject(R"({"version":"qube/0","root":{"children":[]}})");  // wrong version
  reject(R"({"version":"qube/1"})");
  reject(R"({"version":"qube/1","root":{"children":[]},"extra":1})");
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a"}]}})");
  // Empty value list.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[],"children":[]}]}})");
  // Bare numbers are not value objects.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[1],"children":[]}]}})");
  // Int values must be JSON integers.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[{"tag":"int","value":1.5}],"children":[]}]}})");
  // Unknown tag.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[{"tag":"float","value":1}],"children":[]}]}})");
  // Bad payload hex.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[{"tag":"int","value":1}],"children":[],"payload":{"key":"zz"}}]}})");
  // Reserved dimension name.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"root","values":[{"tag":"int","value":1}],"children":[]}]}})");
  // Invalid date content.
  reject(R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[{"tag":"date","value":"20231301"}],"children":[]}]}})");

  // Error path points into the document.
  try {
    from_interchange_text(
        R"({"version":"qube/1","root":{"children":[{"dim":"a","values":[{"tag":"int","value":true}],"children":[]}]}})");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.path()).find("/root/children/0") != std::string::npos);
  }
}

TEST_CASE("canonical text is byte identical across independent builds") {
  // Build the same tuple set three ways; compressed text must match bytes.
  std::vector<Tuple> tuples;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 3; ++b) tuples.push_back(tpl({{"x", a}, {"y", b}}));
  std::mt19937_64 rng(7);
  const Qube q1 = compress(from_tuples(tuples));
  std::shuffle(tuples.begin(), tuples.end(), rng);
  const Qube q2 = compress(from_tuples(tuples));
  std::shuffle(tuples.begin(), tuples.end(), rng);
  Qube acc = Qube::empty();
  for (const Tuple& t : tuples)
    acc = union_of(acc, from_tuples(std::vector<Tuple>{t}));
  CHECK(to_text(q1) == to_text(q2));
  CHECK(to_text(q1) == to_text(acc));
  CHECK(to_interchange_text(q1) == to_interchange_text(acc));
}
