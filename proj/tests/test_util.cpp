#include <filesystem>

#include "doctest.h"
#include "taskmode/util.hpp"

using namespace taskmode;

TEST_CASE("sha256 matches published test vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // Multi-block input (> 64 bytes).
  CHECK(sha256_hex(std::string(1000, 'a')) ==
        "41edece42d63e8d9bf515a9ba6932e1c20cbc9f5a5d134645adb5db1b9737ea3");
}

TEST_CASE("rng is deterministic per seed and distinct across seeds") {
  Rng a(123), b(123), c(124);
  bool same = true, differ = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t xa = a.next_u64(), xb = b.next_u64(), xc = c.next_u64();
    same = same && (xa == xb);
    differ = differ || (xa != xc);
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("rng bounded draws stay in range") {
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(r.below(10) < 10);
    int64_t v = r.range(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK_THROWS_AS(r.below(0), Error);
}

TEST_CASE("rng normal has sane moments") {
  Rng r(99);
  double sum = 0, sumsq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("jsonl round-trips and reports parse errors with line numbers") {
  auto dir = std::filesystem::temp_directory_path() / "taskmode_util_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "rows.jsonl").string();

  std::vector<json> rows = {json{{"a", 1}}, json{{"b", "x"}}};
  write_jsonl(path, rows);
  auto back = read_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0]["a"] == 1);
  CHECK(back[1]["b"] == "x");

  write_file(path, "{\"ok\": 1}\nnot json\n");
  try {
    read_jsonl(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("string helpers") {
  CHECK(lower("AbC") == "abc");
  CHECK(trim("  x y\n") == "x y");
  CHECK(contains_ci("The Answer Is", "answer is"));
  CHECK_FALSE(contains_ci("abc", "xyz"));
  CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
  CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
}
