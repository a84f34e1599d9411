#include <filesystem>
#include <map>
#include <mutex>

#include "doctest.h"
#include "mock_endpoint.hpp"
#include "taskmode/teachers.hpp"
#include "taskmode/textcodec.hpp"

using namespace taskmode;
using namespace taskmode::teachers;
using taskmode::testsupport::completion_body;
using taskmode::testsupport::is_discriminative;
using taskmode::testsupport::MockEndpoint;
using taskmode::testsupport::request_content;

namespace {

corpus::Corpus small_corpus(size_t faulty = 60, size_t valid = 60) {
  return corpus::generate(faulty, valid, corpus::mix_preset("uniform"), 41);
}

std::string temp_store(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "taskmode_teach_test";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::filesystem::remove(path);
  return path.string();
}

}  // namespace

TEST_CASE("default prompt templates render around the question") {
  CHECK(default_templates().size() == 3);
  std::string p = render_prompt(PromptStyle::gen_no_hint, "2+3?");
  CHECK(p == "Please answer the following question: 2+3?");
  std::string h = render_prompt(PromptStyle::gen_with_hint, "2+3?");
  CHECK(h.find("2+3?") != std::string::npos);
  CHECK(h.find("explicitly state what prevents a valid answer") !=
        std::string::npos);
  std::string d = render_prompt(PromptStyle::discriminative, "2+3?");
  CHECK(d.rfind("Please analyze the following question: ", 0) == 0);
  CHECK(d.find("an issue (Yes or No)") != std::string::npos);
}

TEST_CASE("diagnosis objects round-trip through their serialization") {
  DiagnosisObject d{false, "contradictory totals"};
  CHECK(d.serialize() ==
        "{\"validity\": false, \"reason\": \"contradictory totals\"}");
  auto back = parse_diagnosis(d.serialize());
  REQUIRE(back.has_value());
  CHECK(*back == d);

  DiagnosisObject t{true, "the question is well-posed and answerable"};
  CHECK(parse_diagnosis(t.serialize()) == t);
  // surrounding prose is tolerated; the object is extracted
  CHECK(parse_diagnosis("noise " + d.serialize() + " trailing") == d);
}

TEST_CASE("parse_diagnosis rejects near-misses") {
  CHECK_FALSE(parse_diagnosis("no braces at all"));
  CHECK_FALSE(parse_diagnosis("{\"validity\": false}"));
  CHECK_FALSE(parse_diagnosis("{\"reason\": \"x\"}"));
  CHECK_FALSE(parse_diagnosis("{\"validity\": \"false\", \"reason\": \"x\"}"));
  CHECK_FALSE(parse_diagnosis("{\"validity\": false, \"reason\": 3}"));
  CHECK_FALSE(
      parse_diagnosis("{\"validity\": false, \"reason\": \"x\", \"z\": 1}"));
  CHECK_FALSE(parse_diagnosis("{\"validity\": false, \"reason\": "));
}

TEST_CASE("oracle answers a valid question with its gold answer") {
  auto c = small_corpus();
  for (const auto& q : c.questions) {
    if (!q.gold_answer) continue;
    auto [g, d] = oracle_teach(q);
    CHECK(g.mode == Mode::G);
    CHECK(g.text == "Answer: " + *q.gold_answer);
    REQUIRE(d.parsed.has_value());
    CHECK(d.parsed->validity == true);
    CHECK(d.text == d.parsed->serialize());
    break;
  }
}

TEST_CASE("oracle diagnosis references the gold reason tags") {
  auto c = small_corpus(200, 10);
  size_t faulty = 0;
  for (const auto& q : c.questions) {
    if (!q.fault) continue;
    ++faulty;
    auto [g, d] = oracle_teach(q);
    REQUIRE(d.parsed.has_value());
    CHECK(d.parsed->validity == false);
    bool referenced = false;
    for (const auto& tag : q.fault->gold_reason_tags)
      if (d.parsed->reason.find(tag) != std::string::npos) referenced = true;
    CHECK(referenced);
    CHECK(g.text.rfind("This question cannot be answered: ", 0) == 0);
    CHECK(g.text.find(d.parsed->reason) != std::string::npos);
    // determinism
    auto again = oracle_teach(q);
    CHECK(again.first == g);
    CHECK(again.second == d);
  }
  CHECK(faulty == 200);
}

TEST_CASE("oracle refuses a question without ground truth") {
  corpus::Question q;
  q.id = "q999999";
  q.text = "mystery";
  try {
    oracle_teach(q);
    FAIL("expected error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("external") != std::string::npos);
    CHECK(msg.find("self") != std::string::npos);
  }
}

TEST_CASE("every oracle target encodes strictly under the built vocabulary") {
  auto c = small_corpus(210, 210);
  auto vocab = textcodec::build_vocab(c, 4000);
  for (const auto& q : c.questions) {
    auto [g, d] = oracle_teach(q);
    CHECK_NOTHROW(textcodec::encode(g.text, vocab));
    CHECK_NOTHROW(textcodec::encode(d.text, vocab));
  }
}

TEST_CASE("teacher responses round-trip through json") {
  TeacherResponse r;
  r.question_id = "q000001";
  r.mode = Mode::D;
  r.text = "{\"validity\": false, \"reason\": \"x\"}";
  r.parsed = DiagnosisObject{false, "x"};
  r.source = TeacherSource::external;
  r.flag = "unparsed_d";
  r.attempts = 3;
  CHECK(TeacherResponse::from_json(r.to_json()) == r);
  TeacherResponse plain;
  plain.question_id = "q000002";
  CHECK(TeacherResponse::from_json(plain.to_json()) == plain);
}

TEST_CASE("store append and load round-trip; missing store names teach") {
  std::string path = temp_store("store_roundtrip.jsonl");
  auto c = small_corpus(4, 4);
  auto pair0 = oracle_teach(c.questions[0]);
  auto pair1 = oracle_teach(c.questions[1]);
  append_pair(path, pair0);
  append_pair(path, pair1);
  auto loaded = load_store(path);
  REQUIRE(loaded.size() == 4);
  CHECK(loaded[0] == pair0.first);
  CHECK(loaded[1] == pair0.second);
  CHECK(loaded[3] == pair1.second);

  try {
    load_store(temp_store("never_written.jsonl"));
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(std::string(e.what()).find("teach") != std::string::npos);
  }
  CHECK(load_store(temp_store("never_written.jsonl"), false).empty());
}

TEST_CASE("teach_pass resumes without duplicating records") {
  std::string path = temp_store("resume.jsonl");
  auto c = small_corpus(6, 0);
  auto teach = [](const corpus::Question& q) {
    return std::optional<ResponsePair>(oracle_teach(q));
  };
  auto first = teach_pass(c.questions, path, TeacherSource::oracle, teach);
  CHECK(first.taught == 6);
  CHECK(first.resumed == 0);
  std::string after_first = read_file(path);

  auto second = teach_pass(c.questions, path, TeacherSource::oracle, teach);
  CHECK(second.taught == 0);
  CHECK(second.resumed == 6);
  CHECK(read_file(path) == after_first);  // byte-identical, no duplicates

  // simulated interruption: keep only the first two questions' records
  auto lines = read_jsonl(path);
  std::string partial;
  for (size_t i = 0; i < 4; ++i) partial += lines[i].dump() + "\n";
  write_file(path, partial);
  auto resumed = teach_pass(c.questions, path, TeacherSource::oracle, teach);
  CHECK(resumed.resumed == 2);
  CHECK(resumed.taught == 4);
  CHECK(read_file(path) == after_first);
}

TEST_CASE("skip markers keep both modes with the skipped flag") {
  auto [g, d] = skip_markers("q000042", TeacherSource::external, 4);
  CHECK(g.flag == "skipped");
  CHECK(d.flag == "skipped");
  CHECK(g.mode == Mode::G);
  CHECK(d.mode == Mode::D);
  CHECK(g.attempts == 4);
}

TEST_CASE("external teacher collects both modes from a mock endpoint") {
  MockEndpoint ep([](const httplib::Request& req, httplib::Response& res) {
    bool d = is_discriminative(request_content(req));
    res.set_content(completion_body(
                        d ? "{\"validity\": false, \"reason\": \"mock\"}"
                          : "Answer: mock"),
                    "application/json");
  });
  EndpointConfig cfg;
  cfg.base_url = ep.base_url();
  cfg.backoff_ms = 1;
  auto c = small_corpus(2, 2);
  auto pair = external_teach(c.questions[0], cfg);
  REQUIRE(pair.has_value());
  CHECK(pair->first.text == "Answer: mock");
  CHECK(pair->first.source == TeacherSource::external);
  CHECK(pair->first.attempts == 1);
  REQUIRE(pair->second.parsed.has_value());
  CHECK(pair->second.parsed->reason == "mock");
  CHECK(pair->second.flag.empty());
}

TEST_CASE("rate-limited call retries and records the attempt count") {
  std::mutex mu;
  std::map<std::string, int> calls;
  MockEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mu);
    int n = ++calls[request_content(req)];
    if (n == 1) {
      res.status = 429;
      return;
    }
    res.set_content(completion_body(
                        is_discriminative(request_content(req))
                            ? "{\"validity\": true, \"reason\": \"ok\"}"
                            : "Answer: ok"),
                    "application/json");
  });
  EndpointConfig cfg;
  cfg.base_url = ep.base_url();
  cfg.backoff_ms = 1;
  auto c = small_corpus(1, 1);
  auto pair = external_teach(c.questions[0], cfg);
  REQUIRE(pair.has_value());
  CHECK(pair->first.attempts == 2);
  CHECK(pair->second.attempts == 2);
}

TEST_CASE("malformed diagnosis text is stored unparsed and flagged") {
  MockEndpoint ep([](const httplib::Request& req, httplib::Response& res) {
    bool d = is_discriminative(request_content(req));
    res.set_content(
        completion_body(d ? "the question looks fine to me" : "Answer: 7"),
        "application/json");
  });
  EndpointConfig cfg;
  cfg.base_url = ep.base_url();
  cfg.backoff_ms = 1;
  auto c = small_corpus(1, 1);
  auto pair = external_teach(c.questions[0], cfg);
  REQUIRE(pair.has_value());
  CHECK_FALSE(pair->second.parsed.has_value());
  CHECK(pair->second.flag == "unparsed_d");
}

TEST_CASE("exhausted retries skip the question and audit every exchange") {
  std::string audit = temp_store("audit.jsonl");
  MockEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  EndpointConfig cfg;
  cfg.base_url = ep.base_url();
  cfg.backoff_ms = 1;
  cfg.max_attempts = 3;
  cfg.audit_path = audit;
  auto c = small_corpus(1, 1);
  CHECK_FALSE(external_teach(c.questions[0], cfg).has_value());
  auto exchanges = read_jsonl(audit);
  CHECK(exchanges.size() == 3);  // G-mode call exhausted before D started
  for (const auto& e : exchanges) CHECK(e.at("status").get<int>() == 500);
}

TEST_CASE("self teacher is deterministic and schema-flags gibberish") {
  auto c = small_corpus(8, 8);
  auto vocab = textcodec::build_vocab(c, 2000);
  seqmodel::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.d_model = 16;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.max_seq_len = 160;
  mc.seed = 3;
  seqmodel::NetF net(mc);

  auto a = self_teach(c.questions[0], net, vocab, 24);
  auto b = self_teach(c.questions[0], net, vocab, 24);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first.source == TeacherSource::self);
  // an untrained model almost surely fails the D schema; both records persist
  CHECK(a.second.flag == (a.second.parsed ? "" : "unparsed_d"));
}
