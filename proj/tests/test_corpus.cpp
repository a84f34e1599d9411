#include <filesystem>
#include <set>

#include "doctest.h"
#include "taskmode/corpus.hpp"

using namespace taskmode;
using namespace taskmode::corpus;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "taskmode_corpus_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string dump_all(const Corpus& c) {
  std::string out;
  for (const auto& q : c.questions) out += question_to_json(q).dump() + "\n";
  return out;
}

}  // namespace

TEST_CASE("generate zero questions yields empty corpus and manifest") {
  Corpus c = generate(0, 0, mix_preset("uniform"), 7);
  CHECK(c.questions.empty());
  CHECK(c.manifest.total() == 0);
}

TEST_CASE("uniform mix of 8 faulty questions gives exactly 2 per error type") {
  Corpus c = generate(8, 0, mix_preset("uniform"), 42);
  REQUIRE(c.size() == 8);
  std::array<int, kNumErrorTypes> by_type{};
  for (const auto& q : c.questions) {
    REQUIRE(q.fault.has_value());
    by_type[int(q.fault->error_type)] += 1;
  }
  for (int n : by_type) CHECK(n == 2);
}

TEST_CASE("named mix presets") {
  auto paper = mix_preset("paper");
  CHECK(paper[0] == doctest::Approx(0.3589).epsilon(1e-12));
  CHECK(paper[1] == doctest::Approx(0.2751).epsilon(1e-12));
  CHECK(paper[2] == doctest::Approx(0.2505).epsilon(1e-12));
  CHECK(paper[3] == doctest::Approx(0.1155).epsilon(1e-12));
  double sum = paper[0] + paper[1] + paper[2] + paper[3];
  CHECK(std::abs(sum - 1.0) <= 1e-9);
  CHECK_THROWS_AS(mix_preset("nope"), UsageError);
}

TEST_CASE("mix must sum to one") {
  CHECK_THROWS_AS(generate(4, 0, {0.5, 0.5, 0.5, 0.5}, 1), UsageError);
  CHECK_THROWS_AS(generate(4, 0, {-0.5, 0.5, 0.5, 0.5}, 1), UsageError);
}

TEST_CASE("largest-remainder apportionment") {
  CHECK(apportion(8, {1, 1, 1, 1}) == std::vector<size_t>{2, 2, 2, 2});
  // Remainders 0.589/0.751/0.505/0.155: the two spare seats go to the two
  // largest remainders.
  CHECK(apportion(10, {0.3589, 0.2751, 0.2505, 0.1155}) ==
        std::vector<size_t>{4, 3, 2, 1});
  // All remainders tie; earlier indices win.
  CHECK(apportion(2, {1, 1, 1, 1}) == std::vector<size_t>{1, 1, 0, 0});
  CHECK(apportion(0, {1, 1, 1, 1}) == std::vector<size_t>{0, 0, 0, 0});
}

TEST_CASE("generation is byte-identical for the same seed") {
  Corpus a = generate(100, 100, mix_preset("paper"), 7);
  Corpus b = generate(100, 100, mix_preset("paper"), 7);
  CHECK(a.questions == b.questions);
  CHECK(dump_all(a) == dump_all(b));

  Corpus c = generate(100, 100, mix_preset("paper"), 8);
  CHECK(dump_all(a) != dump_all(c));
}

TEST_CASE("every reason tag occurs verbatim in the question text") {
  Corpus c = generate(400, 100, mix_preset("paper"), 3);
  int checked = 0;
  for (const auto& q : c.questions) {
    if (!q.fault) continue;
    REQUIRE_FALSE(q.fault->gold_reason_tags.empty());
    for (const auto& tag : q.fault->gold_reason_tags) {
      CHECK(q.text.find(tag) != std::string::npos);
      ++checked;
    }
  }
  CHECK(checked > 400);
}

TEST_CASE("fault and gold_answer are mutually exclusive and exhaustive") {
  Corpus c = generate(50, 50, mix_preset("uniform"), 11);
  for (const auto& q : c.questions) {
    CHECK(q.fault.has_value() != q.gold_answer.has_value());
    if (q.gold_answer) CHECK_FALSE(q.gold_answer->empty());
  }
  std::set<std::string> ids;
  for (const auto& q : c.questions) CHECK(ids.insert(q.id).second);
}

TEST_CASE("all eight named disciplines have full_false coverage") {
  Corpus c = generate(2000, 0, mix_preset("paper"), 9);
  std::array<int, kNumDisciplines> full_false{};
  for (const auto& q : c.questions)
    if (q.fault && q.fault->severity == Severity::full_false)
      full_false[int(q.discipline)] += 1;
  for (int d = 0; d < kNumDisciplines; ++d) {
    if (Discipline(d) == Discipline::other)
      CHECK(full_false[d] == 0);
    else
      CHECK(full_false[d] > 0);
  }
}

TEST_CASE("semi_false items appear in generation and carry tags") {
  Corpus c = generate(2000, 0, mix_preset("paper"), 13);
  int semi = 0;
  for (const auto& q : c.questions)
    if (q.fault && q.fault->severity == Severity::semi_false) {
      ++semi;
      for (const auto& tag : q.fault->gold_reason_tags)
        CHECK(q.text.find(tag) != std::string::npos);
    }
  CHECK(semi > 0);
  CHECK(semi < 1000);
}

TEST_CASE("save/load round-trip preserves the corpus") {
  Corpus c = generate(60, 40, mix_preset("uniform"), 21);
  auto path = temp_path("roundtrip.jsonl");
  save(c, path);
  Corpus back = load(path);
  CHECK(back.questions == c.questions);
  CHECK(back.manifest.to_json() == c.manifest.to_json());
}

TEST_CASE("empty file loads as empty corpus") {
  auto path = temp_path("empty.jsonl");
  write_file(path, "");
  std::filesystem::remove(path + ".manifest.json");
  Corpus c = load(path);
  CHECK(c.questions.empty());
}

TEST_CASE("loading a missing file names the producing command") {
  try {
    load(temp_path("does_not_exist.jsonl"));
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(std::string(e.what()).find("corpus gen") != std::string::npos);
  }
}

TEST_CASE("record violating exclusivity is rejected with its index") {
  auto path = temp_path("badrec.jsonl");
  json ok1 = question_to_json(generate(1, 0, mix_preset("uniform"), 1).questions[0]);
  json bad = {{"id", "qx"}, {"text", "what?"}, {"discipline", "mathematics"},
              {"qtype", "open_ended"}, {"split", "train"}};
  json ok2 = question_to_json(generate(0, 1, mix_preset("uniform"), 1).questions[0]);
  ok2["id"] = "qz";
  write_file(path, ok1.dump() + "\n" + bad.dump() + "\n" + ok2.dump() + "\n");
  std::filesystem::remove(path + ".manifest.json");
  try {
    load(path);
    FAIL("expected exclusivity error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("record 2") != std::string::npos);
    CHECK(msg.find("exclusive") != std::string::npos);
  }
}

TEST_CASE("display-style error_type strings normalize to canonical form") {
  auto path = temp_path("displaynames.jsonl");
  json j = {{"id", "q1"},
            {"text", "A deck of cards contains 543 club cards. A player is "
                     "currently holding 561 of the club cards. How many club "
                     "cards are not being held?"},
            {"discipline", "Mathematics"},
            {"qtype", "open_ended"},
            {"split", "train"},
            {"fault",
             {{"error_type", "Consistency Error"},
              {"gold_reason_tags", {"561", "543"}},
              {"severity", "Full-false"}}}};
  write_file(path, j.dump() + "\n");
  std::filesystem::remove(path + ".manifest.json");
  Corpus c = load(path);
  REQUIRE(c.size() == 1);
  CHECK(c.questions[0].fault->error_type == ErrorType::consistency_error);
  CHECK(c.questions[0].fault->severity == Severity::full_false);
  CHECK(c.questions[0].discipline == Discipline::mathematics);
}

TEST_CASE("unknown discipline: rejected in strict mode, other otherwise") {
  auto path = temp_path("unknowndisc.jsonl");
  json j = {{"id", "q1"}, {"text", "hm?"}, {"discipline", "alchemy"},
            {"qtype", "open_ended"}, {"split", "train"},
            {"gold_answer", "42"}};
  write_file(path, j.dump() + "\n");
  std::filesystem::remove(path + ".manifest.json");
  CHECK_THROWS_AS(load(path, /*strict=*/true), Error);
  Corpus c = load(path, /*strict=*/false);
  REQUIRE(c.size() == 1);
  CHECK(c.questions[0].discipline == Discipline::other);
}

TEST_CASE("duplicate ids are rejected") {
  auto path = temp_path("dupid.jsonl");
  json j = question_to_json(generate(0, 1, mix_preset("uniform"), 1).questions[0]);
  write_file(path, j.dump() + "\n" + j.dump() + "\n");
  std::filesystem::remove(path + ".manifest.json");
  try {
    load(path);
    FAIL("expected duplicate id error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("duplicate id") != std::string::npos);
  }
}

TEST_CASE("split draws test and dev only from full_false faulty questions") {
  Corpus c = generate(16000, 2000, mix_preset("uniform"), 31);
  SplitReport rep = assign_splits(c, 125, 50, 5);
  CHECK(rep.warnings.empty());
  CHECK(rep.n_test == 1000);  // 8 populated disciplines x 125
  CHECK(rep.n_dev == 400);
  CHECK(rep.n_test + rep.n_dev + rep.n_train == c.size());
  std::array<std::array<int, 3>, kNumDisciplines> by_disc{};
  for (const auto& q : c.questions) {
    if (q.split != Split::train) {
      REQUIRE(q.fault.has_value());
      CHECK(q.fault->severity == Severity::full_false);
    }
    if (!q.fault) CHECK(q.split == Split::train);
    by_disc[int(q.discipline)][int(q.split)] += 1;
  }
  for (int d = 0; d < kNumDisciplines; ++d) {
    if (Discipline(d) == Discipline::other) continue;
    CHECK(by_disc[d][int(Split::test)] == 125);
    CHECK(by_disc[d][int(Split::dev)] == 50);
  }
}

TEST_CASE("zero split request leaves everything in train") {
  Corpus c = generate(200, 50, mix_preset("uniform"), 31);
  SplitReport rep = assign_splits(c, 0, 0, 5);
  CHECK(rep.n_test == 0);
  CHECK(rep.n_dev == 0);
  CHECK(rep.n_train == c.size());
}

TEST_CASE("split seed changes membership but not counts") {
  Corpus a = generate(16000, 0, mix_preset("uniform"), 31);
  Corpus b = a;
  SplitReport ra = assign_splits(a, 125, 50, 1);
  SplitReport rb = assign_splits(b, 125, 50, 2);
  CHECK(ra.n_test == rb.n_test);
  CHECK(ra.n_dev == rb.n_dev);
  std::set<std::string> ta, tb;
  for (const auto& q : a.questions)
    if (q.split == Split::test) ta.insert(q.id);
  for (const auto& q : b.questions)
    if (q.split == Split::test) tb.insert(q.id);
  CHECK(ta != tb);
}

TEST_CASE("split shortfall takes everything available and warns") {
  Corpus c = generate(40, 0, mix_preset("uniform"), 5);
  SplitReport rep = assign_splits(c, 125, 50, 5);
  CHECK_FALSE(rep.warnings.empty());
  CHECK(rep.warnings[0].find("taking all") != std::string::npos);
  // Everything full_false went to test (shortfall), semi_false stayed train.
  for (const auto& q : c.questions)
    if (q.split == Split::test)
      CHECK(q.fault->severity == Severity::full_false);
}

TEST_CASE("by_id finds questions and rejects unknown ids") {
  Corpus c = generate(4, 4, mix_preset("uniform"), 17);
  CHECK(c.by_id(c.questions[3].id).id == c.questions[3].id);
  CHECK_THROWS_AS(c.by_id("q999999"), Error);
}
