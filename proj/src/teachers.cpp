#include "taskmode/teachers.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "taskmode/decoder.hpp"

namespace taskmode::teachers {

std::string mode_name(Mode m) { return m == Mode::G ? "G" : "D"; }

Mode mode_from(const std::string& s) {
  if (s == "G") return Mode::G;
  if (s == "D") return Mode::D;
  throw Error("unknown mode: " + s);
}

std::string prompt_style_name(PromptStyle s) {
  switch (s) {
    case PromptStyle::gen_no_hint: return "gen_no_hint";
    case PromptStyle::gen_with_hint: return "gen_with_hint";
    case PromptStyle::discriminative: return "discriminative";
  }
  throw Error("bad prompt style");
}

PromptStyle prompt_style_from(const std::string& s) {
  for (PromptStyle p : {PromptStyle::gen_no_hint, PromptStyle::gen_with_hint,
                        PromptStyle::discriminative})
    if (prompt_style_name(p) == s) return p;
  throw Error("unknown prompt style: " + s);
}

const std::vector<PromptTemplate>& default_templates() {
  static const std::vector<PromptTemplate> t = {
      {PromptStyle::gen_no_hint,
       "Please answer the following question: [QUESTION]"},
      {PromptStyle::gen_with_hint,
       "Please answer the following question: [QUESTION]. If you cannot "
       "answer due to issues in the question, explicitly state what prevents "
       "a valid answer in your response"},
      {PromptStyle::discriminative,
       "Please analyze the following question: [QUESTION]. Tell us if it has "
       "an issue (Yes or No) that prevents a valid answer and explain why."},
  };
  return t;
}

std::string render_prompt(PromptStyle style,
                          const std::string& question_text) {
  for (const auto& t : default_templates()) {
    if (t.style != style) continue;
    std::string out = t.text;
    size_t slot = out.find("[QUESTION]");
    out.replace(slot, 10, question_text);
    return out;
  }
  throw Error("bad prompt style");
}

std::string DiagnosisObject::serialize() const {
  return std::string("{\"validity\": ") + (validity ? "true" : "false") +
         ", \"reason\": " + json(reason).dump() + "}";
}

std::optional<DiagnosisObject> parse_diagnosis(const std::string& text) {
  size_t open = text.find('{');
  size_t close = text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open)
    return std::nullopt;
  json j;
  try {
    j = json::parse(text.substr(open, close - open + 1));
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
  if (!j.is_object() || j.size() != 2 || !j.contains("validity") ||
      !j.contains("reason") || !j["validity"].is_boolean() ||
      !j["reason"].is_string())
    return std::nullopt;
  return DiagnosisObject{j["validity"].get<bool>(),
                         j["reason"].get<std::string>()};
}

std::string teacher_source_name(TeacherSource s) {
  switch (s) {
    case TeacherSource::oracle: return "oracle";
    case TeacherSource::external: return "external";
    case TeacherSource::self: return "self";
  }
  throw Error("bad teacher source");
}

TeacherSource teacher_source_from(const std::string& s) {
  for (TeacherSource t : {TeacherSource::oracle, TeacherSource::external,
                          TeacherSource::self})
    if (teacher_source_name(t) == s) return t;
  throw Error("unknown teacher source: " + s);
}

json TeacherResponse::to_json() const {
  json j;
  j["question_id"] = question_id;
  j["mode"] = mode_name(mode);
  j["text"] = text;
  j["parsed"] = parsed ? json{{"validity", parsed->validity},
                              {"reason", parsed->reason}}
                       : json(nullptr);
  j["source"] = teacher_source_name(source);
  j["flag"] = flag;
  j["attempts"] = attempts;
  return j;
}

TeacherResponse TeacherResponse::from_json(const json& j) {
  TeacherResponse r;
  r.question_id = j.at("question_id").get<std::string>();
  r.mode = mode_from(j.at("mode").get<std::string>());
  r.text = j.at("text").get<std::string>();
  if (j.contains("parsed") && !j.at("parsed").is_null())
    r.parsed = DiagnosisObject{j.at("parsed").at("validity").get<bool>(),
                               j.at("parsed").at("reason").get<std::string>()};
  r.source = teacher_source_from(j.at("source").get<std::string>());
  r.flag = j.value("flag", std::string());
  r.attempts = j.value("attempts", 1);
  return r;
}

std::string oracle_reason(const corpus::Question& q) {
  if (!q.fault) throw Error("oracle_reason requires a faulty question");
  const auto& tags = q.fault->gold_reason_tags;
  switch (q.fault->error_type) {
    case corpus::ErrorType::consistency_error:
      return "the stated values of " + tags.front() + " and " + tags.back() +
             " are mutually contradictory";
    case corpus::ErrorType::nonsensical_content:
      return "the value " + tags.front() + " is physically impossible here";
    case corpus::ErrorType::missing_information:
      return "the question mentions " + tags.front() +
             " but never gives its quantity";
    case corpus::ErrorType::incorrect_information:
      if (q.qtype == corpus::QType::multiple_choice)
        return "none of the options " + join(tags, ", ") + " is correct";
      return "the stated premise " + tags.front() + " is incorrect";
  }
  throw Error("bad error type");
}

ResponsePair oracle_teach(const corpus::Question& q) {
  TeacherResponse g, d;
  g.question_id = d.question_id = q.id;
  g.mode = Mode::G;
  d.mode = Mode::D;
  g.source = d.source = TeacherSource::oracle;
  if (q.fault) {
    std::string reason = oracle_reason(q);
    g.text = "This question cannot be answered: " + reason;
    d.parsed = DiagnosisObject{false, reason};
    d.text = d.parsed->serialize();
  } else if (q.gold_answer) {
    g.text = "Answer: " + *q.gold_answer;
    d.parsed = DiagnosisObject{true, "the question is well-posed and answerable"};
    d.text = d.parsed->serialize();
  } else {
    throw Error("question " + q.id +
                " carries no ground truth; teach it with --source external "
                "or --source self");
  }
  return {g, d};
}

std::optional<std::string> endpoint_complete(const EndpointConfig& cfg,
                                             const std::string& question_id,
                                             PromptStyle style,
                                             const std::string& prompt,
                                             int& attempts_used) {
  httplib::Client cli(cfg.base_url);
  cli.set_connection_timeout(cfg.timeout_sec, 0);
  cli.set_read_timeout(cfg.timeout_sec, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg.auth_env.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);

  json request;
  request["model"] = cfg.model;
  request["messages"] =
      json::array({json{{"role", "user"}, {"content", prompt}}});
  const std::string body = request.dump();

  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    attempts_used = attempt;
    auto res = cli.Post(cfg.path, headers, body, "application/json");
    int status = res ? res->status : 0;
    std::string reply = res ? res->body : std::string();
    std::optional<std::string> text;
    if (status == 200) {
      try {
        json j = json::parse(reply);
        text = j.at("choices").at(0).at("message").at("content")
                   .get<std::string>();
      } catch (const json::exception&) {
        // fall through: a 200 with an alien payload counts as a failure
      }
    }
    if (!cfg.audit_path.empty()) {
      json audit;
      audit["question_id"] = question_id;
      audit["style"] = prompt_style_name(style);
      audit["attempt"] = attempt;
      audit["status"] = status;
      audit["body"] = reply;
      audit["ok"] = text.has_value();
      append_jsonl(cfg.audit_path, audit);
    }
    if (text) return text;
    if (attempt < cfg.max_attempts)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg.backoff_ms << (attempt - 1)));
  }
  return std::nullopt;
}

std::optional<ResponsePair> external_teach(const corpus::Question& q,
                                           const EndpointConfig& cfg) {
  int g_attempts = 0, d_attempts = 0;
  auto g_text = endpoint_complete(cfg, q.id, PromptStyle::gen_no_hint,
                              render_prompt(PromptStyle::gen_no_hint, q.text),
                              g_attempts);
  if (!g_text) return std::nullopt;
  auto d_text =
      endpoint_complete(cfg, q.id, PromptStyle::discriminative,
                    render_prompt(PromptStyle::discriminative, q.text),
                    d_attempts);
  if (!d_text) return std::nullopt;

  TeacherResponse g, d;
  g.question_id = d.question_id = q.id;
  g.mode = Mode::G;
  d.mode = Mode::D;
  g.source = d.source = TeacherSource::external;
  g.text = *g_text;
  g.attempts = g_attempts;
  d.text = *d_text;
  d.attempts = d_attempts;
  d.parsed = parse_diagnosis(d.text);
  if (!d.parsed) d.flag = "unparsed_d";
  return ResponsePair{g, d};
}

ResponsePair self_teach(const corpus::Question& q, const seqmodel::NetF& net,
                        const textcodec::Vocab& vocab, int max_new_tokens) {
  auto run = [&](PromptStyle style, Mode mode) {
    std::vector<int> prompt =
        textcodec::encode(render_prompt(style, q.text), vocab);
    return decoder::generate_forced(net, vocab, prompt, mode, max_new_tokens);
  };
  TeacherResponse g, d;
  g.question_id = d.question_id = q.id;
  g.mode = Mode::G;
  d.mode = Mode::D;
  g.source = d.source = TeacherSource::self;
  g.text = run(PromptStyle::gen_no_hint, Mode::G).text;
  d.text = run(PromptStyle::discriminative, Mode::D).text;
  d.parsed = parse_diagnosis(d.text);
  if (!d.parsed) d.flag = "unparsed_d";
  return {g, d};
}

std::vector<TeacherResponse> load_store(const std::string& path,
                                        bool must_exist) {
  if (!file_exists(path)) {
    if (!must_exist) return {};
    throw MissingArtifact(path, "taskmode teach --source oracle --corpus "
                                "<corpus.jsonl> --out " + path);
  }
  std::vector<TeacherResponse> out;
  for (const auto& j : read_jsonl(path)) out.push_back(TeacherResponse::from_json(j));
  return out;
}

void append_pair(const std::string& path, const ResponsePair& pair) {
  // Both records land in one buffered write so a completed question is
  // either fully present or fully absent after a crash.
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot open for append: " + path);
  f << pair.first.to_json().dump() << "\n"
    << pair.second.to_json().dump() << "\n";
  f.flush();
  if (!f) throw Error("write failed: " + path);
}

ResponsePair skip_markers(const std::string& question_id, TeacherSource src,
                          int attempts) {
  TeacherResponse g, d;
  g.question_id = d.question_id = question_id;
  g.mode = Mode::G;
  d.mode = Mode::D;
  g.source = d.source = src;
  g.flag = d.flag = "skipped";
  g.attempts = d.attempts = attempts;
  return {g, d};
}

}  // namespace taskmode::teachers
