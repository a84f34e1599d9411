#include <filesystem>

#include "doctest.h"
#include "taskmode/corpus.hpp"
#include "taskmode/textcodec.hpp"
#include "taskmode/util.hpp"

using namespace taskmode;
using namespace taskmode::textcodec;

namespace {

corpus::Corpus tiny_corpus(const std::string& text) {
  corpus::Corpus c;
  corpus::Question q;
  q.id = "q000000";
  q.text = text;
  q.discipline = corpus::Discipline::other;
  q.qtype = corpus::QType::open_ended;
  q.gold_answer = "x";
  c.questions.push_back(q);
  return c;
}

}  // namespace

TEST_CASE("surface split is lossless by concatenation") {
  for (const std::string s :
       {"a b a", "Hello, world!", "-2 moles of NaCl.", "A: 2 B: 4",
        "double  space", "tabs\tand\nnewlines", "{\"validity\": false}",
        "trailing space ", " leading", ""}) {
    auto toks = split_tokens(s);
    std::string back;
    for (const auto& t : toks) back += t;
    CHECK(back == s);
  }
}

TEST_CASE("vocab from a one-question corpus contains its words plus reserved") {
  Vocab v = build_vocab(tiny_corpus("a b a"), 32);
  CHECK(v.index.count("a") == 1);
  CHECK(v.index.count("b") == 1);
  CHECK(v.index.count(" ") == 1);
  CHECK(v.tokens[Vocab::PAD] == "<pad>");
  CHECK(v.tokens[Vocab::CTRL_G] == "[G]");
  CHECK(v.tokens[Vocab::CTRL_D] == "[D]");
  for (const auto& [tok, id] : v.index) CHECK(id >= Vocab::kNumReserved);
}

TEST_CASE("empty corpus and undersized cap are rejected") {
  CHECK_THROWS_AS(build_vocab(corpus::Corpus{}, 32), Error);
  CHECK_THROWS_AS(build_vocab(tiny_corpus("a"), Vocab::kNumReserved), Error);
}

TEST_CASE("encoding the empty string gives no tokens") {
  Vocab v = build_vocab(tiny_corpus("a b a"), 32);
  CHECK(encode("", v).empty());
  CHECK(decode({}, v).empty());
}

TEST_CASE("round-trip holds for every generated question text") {
  corpus::Corpus c = corpus::generate(300, 300, corpus::mix_preset("paper"), 5);
  Vocab v = build_vocab(c, 4096);
  for (const auto& q : c.questions) {
    auto ids = encode(q.text, v);  // strict: every word must be known
    CHECK(decode(ids, v) == q.text);
  }
}

TEST_CASE("gold answers and prompt scaffolding encode strictly") {
  corpus::Corpus c = corpus::generate(200, 200, corpus::mix_preset("paper"), 6);
  Vocab v = build_vocab(c, 4096);
  std::string some_gold;
  for (const auto& q : c.questions)
    if (q.gold_answer) {
      CHECK_NOTHROW(encode(*q.gold_answer, v));
      some_gold = *q.gold_answer;
    }
  REQUIRE_FALSE(some_gold.empty());
  CHECK_NOTHROW(encode("Please answer the following question: ", v));
  CHECK_NOTHROW(encode("Answer: " + some_gold, v));
  CHECK_NOTHROW(encode("{\"validity\": false, \"reason\": \"\"}", v));
}

TEST_CASE("strict encode names the unknown word") {
  Vocab v = build_vocab(tiny_corpus("a b a"), 64);
  try {
    encode("a zebra", v);
    FAIL("expected unknown-word error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("zebra") != std::string::npos);
  }
  auto ids = encode("a zebra", v, /*strict=*/false);
  REQUIRE(ids.size() == 3);
  CHECK(ids[2] == Vocab::UNK);
}

TEST_CASE("plain encode can never produce a control id") {
  corpus::Corpus c = corpus::generate(50, 50, corpus::mix_preset("uniform"), 8);
  Vocab v = build_vocab(c, 4096);
  // Deliberately adversarial shapes, then fuzzed bracket soup.
  std::vector<std::string> probes = {"[G]", "[D]", "[ G ]", "[[D]]",
                                     "x [D] y", "[G][D]", "]G[", "[\"D\"]"};
  Rng rng(99);
  const std::string alphabet = "[]GDgd {}\"\\:,aq1";
  for (int i = 0; i < 500; ++i) {
    std::string s;
    size_t len = rng.below(12);
    for (size_t k = 0; k < len; ++k)
      s += alphabet[rng.below(alphabet.size())];
    probes.push_back(s);
  }
  for (const auto& s : probes) {
    auto ids = encode(s, v, /*strict=*/false);
    for (int id : ids) {
      CHECK(id != Vocab::CTRL_G);
      CHECK(id != Vocab::CTRL_D);
    }
  }
  // The literal substring "[D]" in text is ordinary tokens.
  auto ids = encode("see [D] here", v, /*strict=*/false);
  CHECK(std::count(ids.begin(), ids.end(), Vocab::CTRL_D) == 0);
}

TEST_CASE("assemble_target is the only path to control ids") {
  Vocab v = build_vocab(tiny_corpus("a b a"), 64);
  auto ids = assemble_target(Vocab::CTRL_D, "a b", v);
  REQUIRE(ids.size() == 5);  // ctrl, a, space, b, eos
  CHECK(ids[0] == Vocab::CTRL_D);
  CHECK(ids.back() == Vocab::EOS);
  CHECK(decode(ids, v) == "[D]a b");

  auto g = assemble_target(Vocab::CTRL_G, "", v, true, /*add_eos=*/false);
  CHECK(g == std::vector<int>{Vocab::CTRL_G});
  CHECK_THROWS_AS(assemble_target(Vocab::UNK, "a", v), Error);
}

TEST_CASE("encode is prefix-stable under word append") {
  corpus::Corpus c = corpus::generate(20, 20, corpus::mix_preset("uniform"), 4);
  Vocab v = build_vocab(c, 4096);
  const std::string a = "A deck of cards contains 503 club cards";
  const std::string b = "How many club cards are not being held?";
  auto ea = encode(a, v);
  auto eab = encode(a + " " + b, v);
  REQUIRE(ea.size() < eab.size());
  CHECK(std::equal(ea.begin(), ea.end(), eab.begin()));
}

TEST_CASE("vocab serialization round-trips") {
  corpus::Corpus c = corpus::generate(30, 30, corpus::mix_preset("uniform"), 3);
  Vocab v = build_vocab(c, 4096);
  auto dir = std::filesystem::temp_directory_path() / "taskmode_codec_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "vocab.json").string();
  v.save(path);
  Vocab w = Vocab::load_file(path);
  CHECK(w.tokens == v.tokens);
  const std::string s = c.questions[0].text;
  CHECK(encode(s, w) == encode(s, v));
  std::filesystem::remove_all(dir);
}
