#pragma once

#include <optional>
#include <string>
#include <vector>

#include "taskmode/corpus.hpp"
#include "taskmode/decoder.hpp"
#include "taskmode/seqmodel.hpp"
#include "taskmode/teachers.hpp"
#include "taskmode/textcodec.hpp"

namespace taskmode::evaluator {

using decoder::ParsedKind;
using decoder::ParsedResponse;
using teachers::Mode;
using teachers::PromptStyle;

enum class FailurePattern {
  arithmetic_over_world_knowledge,
  partial_task_satisfaction,
  helpfulness_over_noncommitment,
  mcq_option_forcing,
  silent_typo_repair,
  assumption_injection,
  other,
};

std::string failure_pattern_name(FailurePattern p);
FailurePattern failure_pattern_from(const std::string& s);

struct EvalRecord {
  std::string question_id;
  PromptStyle prompt_style = PromptStyle::gen_no_hint;
  std::optional<Mode> chosen_mode;  // absent for plain-text endpoint targets
  std::optional<double> p_d;
  ParsedKind parsed_kind = ParsedKind::unparseable;
  std::string raw_text;
  std::string dataset;     // grouping label: "faulty" or "valid"
  std::string discipline;  // from the question, for the per-discipline table
  bool aligned = false;
  bool recognized_fault = false;
  bool answered_despite_error = false;
  bool correct_answer = false;
  std::optional<FailurePattern> failure_pattern;
  bool judge_skipped = false;

  json to_json() const;
  static EvalRecord from_json(const json& j);
};

// Normalized answer comparison: case/whitespace-insensitive, numeric values
// within 1e-6 relative tolerance, and option answers accepted as the full
// "C: 8" form, the bare label, or the bare value.
bool answers_match(const std::string& answer, const std::string& gold,
                   corpus::QType qtype);

// Fills the outcome fields of rec from ground truth. For faulty questions a
// fault is recognized only when the diagnosis references a gold reason tag;
// for valid questions the parsed answer must match the gold answer.
void judge(const corpus::Question& q, const ParsedResponse& parsed,
           EvalRecord& rec);

struct ProtocolOptions {
  std::vector<PromptStyle> styles = {PromptStyle::gen_no_hint};
  int max_new_tokens = 96;
  bool constrain = true;
  // When nonempty, records append here as they are produced and an
  // interrupted run resumes from the persisted prefix.
  std::string partial_path;
};

// One record per (question, style): two-stage decode, parse, judge.
std::vector<EvalRecord> run_protocol(const seqmodel::NetF& net,
                                     const textcodec::Vocab& vocab,
                                     const std::vector<corpus::Question>& questions,
                                     const ProtocolOptions& opt);

// Same protocol against a chat-completion endpoint (no control tokens, so
// chosen_mode stays absent). Exhausted retries leave skipped records out and
// count them in *skipped.
std::vector<EvalRecord> run_protocol_endpoint(
    const teachers::EndpointConfig& cfg,
    const std::vector<corpus::Question>& questions,
    const ProtocolOptions& opt, size_t* skipped = nullptr);

// Accuracy of one record under the judge: fault recognition on faulty
// questions, answer correctness on valid ones.
bool record_accurate(const EvalRecord& r);

struct Aggregate {
  size_t n = 0, n_faulty = 0, n_valid = 0, n_moded = 0, n_unparseable = 0;
  double d_rate_faulty = 0;      // chose D among faulty
  double g_rate_valid = 0;       // chose G among valid
  double recognition_faulty = 0; // recognized_fault among faulty
  double valid_accuracy = 0;     // correct_answer among valid
  double alignment = 0;          // aligned among records carrying a mode
  double accuracy = 0;           // judge accuracy over all records
};

Aggregate aggregate(const std::vector<EvalRecord>& records,
                    PromptStyle style);

// Renders report.md plus table2/table4/fig4/table5 CSVs into out_dir.
// `label` names the evaluated model row.
void write_report(const std::vector<EvalRecord>& records,
                  const std::string& out_dir,
                  const std::string& label = "student");

// Ablation comparison: one row per labeled record set (Fig. 5 shape).
void write_ablation(
    const std::vector<std::pair<std::string, std::vector<EvalRecord>>>& runs,
    const std::string& out_dir);

// The four mode-response cells in percent, order: G+response_G,
// G+response_D, D+response_G, D+response_D. Denominator: records with a
// chosen mode and a parseable response.
std::array<double, 4> alignment_cells(const std::vector<EvalRecord>& records);

}  // namespace taskmode::evaluator
