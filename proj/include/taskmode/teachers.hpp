#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "taskmode/corpus.hpp"
#include "taskmode/seqmodel.hpp"
#include "taskmode/textcodec.hpp"
#include "taskmode/util.hpp"

namespace taskmode::teachers {

// The two task modes a response can train: answer the question (G) or
// diagnose its validity (D).
enum class Mode { G, D };

std::string mode_name(Mode m);
Mode mode_from(const std::string& s);

enum class PromptStyle { gen_no_hint, gen_with_hint, discriminative };

std::string prompt_style_name(PromptStyle s);
PromptStyle prompt_style_from(const std::string& s);

struct PromptTemplate {
  PromptStyle style;
  std::string text;  // contains one [QUESTION] slot
};

// The three default prompt templates, verbatim.
const std::vector<PromptTemplate>& default_templates();

std::string render_prompt(PromptStyle style, const std::string& question_text);

// The diagnosis payload a D-mode response carries.
struct DiagnosisObject {
  bool validity = false;
  std::string reason;

  // Two-field JSON object, keys "validity" then "reason".
  std::string serialize() const;
  bool operator==(const DiagnosisObject&) const = default;
};

// Accepts text whose first '{'..last '}' span parses as exactly the
// two-field diagnosis object; anything else yields nullopt.
std::optional<DiagnosisObject> parse_diagnosis(const std::string& text);

enum class TeacherSource { oracle, external, self };

std::string teacher_source_name(TeacherSource s);
TeacherSource teacher_source_from(const std::string& s);

struct TeacherResponse {
  std::string question_id;
  Mode mode = Mode::G;
  std::string text;
  std::optional<DiagnosisObject> parsed;  // D-mode only, iff text parses
  TeacherSource source = TeacherSource::oracle;
  std::string flag;   // "", "unparsed_d", or "skipped"
  int attempts = 1;

  json to_json() const;
  static TeacherResponse from_json(const json& j);
  bool operator==(const TeacherResponse&) const = default;
};

using ResponsePair = std::pair<TeacherResponse, TeacherResponse>;  // G, D

// Deterministic scripted teacher driven by the corpus ground truth.
// Throws if the question carries neither a fault nor a gold answer.
ResponsePair oracle_teach(const corpus::Question& q);

// The reason string the oracle writes for a faulty question; exposed so the
// judge's self-consistency can be tested directly.
std::string oracle_reason(const corpus::Question& q);

struct EndpointConfig {
  std::string base_url;                    // e.g. http://127.0.0.1:8089
  std::string path = "/v1/chat/completions";
  std::string auth_env = "TEACHER_API_TOKEN";
  std::string model = "teacher";
  int timeout_sec = 30;
  int max_attempts = 4;
  int backoff_ms = 250;   // doubled per retry
  int parallelism = 4;    // interface knob; requests are issued sequentially
  std::string audit_path; // optional JSONL of every raw exchange
};

// One chat-completion call with bounded exponential-backoff retries and
// optional audit persistence. Returns the completion text, or nullopt once
// attempts are exhausted.
std::optional<std::string> endpoint_complete(const EndpointConfig& cfg,
                                             const std::string& question_id,
                                             PromptStyle style,
                                             const std::string& prompt,
                                             int& attempts_used);

// Queries a chat-completion endpoint under both prompt styles. Retries with
// exponential backoff; nullopt means retries were exhausted for either mode
// and the question should be marked skipped.
std::optional<ResponsePair> external_teach(const corpus::Question& q,
                                           const EndpointConfig& cfg);

// Samples the current student under both prompt styles (greedy), forcing the
// control token that matches each style.
ResponsePair self_teach(const corpus::Question& q,
                        const seqmodel::NetF& net,
                        const textcodec::Vocab& vocab,
                        int max_new_tokens = 96);

// --- teacher store: append-only JSONL, persisted before training reads it.

std::vector<TeacherResponse> load_store(const std::string& path,
                                        bool must_exist = true);

void append_pair(const std::string& path, const ResponsePair& pair);

// Skip markers keep the two-records-per-question invariant for questions
// whose teacher calls were exhausted.
ResponsePair skip_markers(const std::string& question_id, TeacherSource src,
                          int attempts);

struct TeachSummary {
  size_t taught = 0;
  size_t skipped = 0;
  size_t resumed = 0;     // already complete in the store
  size_t duplicates = 0;  // defensive count from loading
};

// Runs one teaching pass over the questions, resuming from whatever the
// store already holds. `teach_one` returns nullopt to mark a skip.
template <typename TeachFn>
TeachSummary teach_pass(const std::vector<corpus::Question>& questions,
                        const std::string& store_path, TeacherSource source,
                        TeachFn&& teach_one) {
  TeachSummary summary;
  std::vector<TeacherResponse> existing = load_store(store_path, false);
  std::set<std::pair<std::string, Mode>> seen;
  std::set<std::string> complete;
  std::map<std::string, int> modes_per_id;
  for (const auto& r : existing) {
    if (!seen.insert({r.question_id, r.mode}).second) {
      ++summary.duplicates;
      continue;
    }
    if (++modes_per_id[r.question_id] == 2) complete.insert(r.question_id);
  }
  for (const auto& q : questions) {
    if (complete.count(q.id)) {
      ++summary.resumed;
      continue;
    }
    std::optional<ResponsePair> pair = teach_one(q);
    if (!pair) pair = skip_markers(q.id, source, 0);
    append_pair(store_path, *pair);
    if (pair->first.flag == "skipped")
      ++summary.skipped;
    else
      ++summary.taught;
  }
  return summary;
}

}  // namespace taskmode::teachers
