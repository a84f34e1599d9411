#include "taskmode/evaluator.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>

namespace taskmode::evaluator {

using corpus::Question;
using textcodec::Vocab;

std::string failure_pattern_name(FailurePattern p) {
  switch (p) {
    case FailurePattern::arithmetic_over_world_knowledge:
      return "arithmetic_over_world_knowledge";
    case FailurePattern::partial_task_satisfaction:
      return "partial_task_satisfaction";
    case FailurePattern::helpfulness_over_noncommitment:
      return "helpfulness_over_noncommitment";
    case FailurePattern::mcq_option_forcing: return "mcq_option_forcing";
    case FailurePattern::silent_typo_repair: return "silent_typo_repair";
    case FailurePattern::assumption_injection: return "assumption_injection";
    case FailurePattern::other: return "other";
  }
  throw Error("bad failure pattern");
}

FailurePattern failure_pattern_from(const std::string& s) {
  for (FailurePattern p :
       {FailurePattern::arithmetic_over_world_knowledge,
        FailurePattern::partial_task_satisfaction,
        FailurePattern::helpfulness_over_noncommitment,
        FailurePattern::mcq_option_forcing, FailurePattern::silent_typo_repair,
        FailurePattern::assumption_injection, FailurePattern::other})
    if (failure_pattern_name(p) == s) return p;
  throw Error("unknown failure pattern: " + s);
}

json EvalRecord::to_json() const {
  json j;
  j["question_id"] = question_id;
  j["prompt_style"] = teachers::prompt_style_name(prompt_style);
  j["chosen_mode"] =
      chosen_mode ? json(teachers::mode_name(*chosen_mode)) : json(nullptr);
  j["p_d"] = p_d ? json(*p_d) : json(nullptr);
  j["parsed_kind"] = decoder::parsed_kind_name(parsed_kind);
  j["raw_text"] = raw_text;
  j["dataset"] = dataset;
  j["discipline"] = discipline;
  j["aligned"] = aligned;
  j["recognized_fault"] = recognized_fault;
  j["answered_despite_error"] = answered_despite_error;
  j["correct_answer"] = correct_answer;
  j["failure_pattern"] =
      failure_pattern ? json(failure_pattern_name(*failure_pattern))
                      : json(nullptr);
  j["judge_skipped"] = judge_skipped;
  return j;
}

EvalRecord EvalRecord::from_json(const json& j) {
  EvalRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.prompt_style =
      teachers::prompt_style_from(j.at("prompt_style").get<std::string>());
  if (!j.at("chosen_mode").is_null())
    r.chosen_mode = teachers::mode_from(j.at("chosen_mode").get<std::string>());
  if (!j.at("p_d").is_null()) r.p_d = j.at("p_d").get<double>();
  std::string kind = j.at("parsed_kind").get<std::string>();
  for (ParsedKind k : {ParsedKind::response_G, ParsedKind::response_D,
                       ParsedKind::unparseable})
    if (decoder::parsed_kind_name(k) == kind) r.parsed_kind = k;
  r.raw_text = j.at("raw_text").get<std::string>();
  r.dataset = j.value("dataset", std::string());
  r.discipline = j.value("discipline", std::string());
  r.aligned = j.at("aligned").get<bool>();
  r.recognized_fault = j.at("recognized_fault").get<bool>();
  r.answered_despite_error = j.at("answered_despite_error").get<bool>();
  r.correct_answer = j.at("correct_answer").get<bool>();
  if (!j.at("failure_pattern").is_null())
    r.failure_pattern =
        failure_pattern_from(j.at("failure_pattern").get<std::string>());
  r.judge_skipped = j.value("judge_skipped", false);
  return r;
}

namespace {

std::string normalize(const std::string& s) {
  std::string out;
  bool in_space = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool numeric_match(const std::string& a, const std::string& b) {
  double x, y;
  if (!parse_number(a, x) || !parse_number(b, y)) return false;
  return std::abs(x - y) <= 1e-6 * std::max(1.0, std::abs(y));
}

FailurePattern classify_failure(const Question& q) {
  if (q.fault->severity == corpus::Severity::semi_false)
    return FailurePattern::partial_task_satisfaction;
  switch (q.fault->error_type) {
    case corpus::ErrorType::consistency_error:
      return FailurePattern::arithmetic_over_world_knowledge;
    case corpus::ErrorType::nonsensical_content:
      return FailurePattern::silent_typo_repair;
    case corpus::ErrorType::missing_information:
      return FailurePattern::assumption_injection;
    case corpus::ErrorType::incorrect_information:
      return q.qtype == corpus::QType::multiple_choice
                 ? FailurePattern::mcq_option_forcing
                 : FailurePattern::helpfulness_over_noncommitment;
  }
  return FailurePattern::other;
}

}  // namespace

bool answers_match(const std::string& answer, const std::string& gold,
                   corpus::QType qtype) {
  std::string a = normalize(answer), g = normalize(gold);
  if (a == g || numeric_match(a, g)) return true;
  if (qtype == corpus::QType::multiple_choice) {
    size_t colon = g.find(':');
    if (colon != std::string::npos) {
      std::string label = trim(g.substr(0, colon));
      std::string value = trim(g.substr(colon + 1));
      if (a == label || a == value || numeric_match(a, value)) return true;
    }
  }
  return false;
}

void judge(const Question& q, const ParsedResponse& parsed, EvalRecord& rec) {
  if (q.fault) {
    rec.dataset = "faulty";
    if (parsed.kind == ParsedKind::response_D && parsed.diagnosis) {
      for (const auto& tag : q.fault->gold_reason_tags)
        if (contains_ci(parsed.diagnosis->reason, tag)) {
          rec.recognized_fault = true;
          break;
        }
    }
    rec.answered_despite_error = parsed.kind == ParsedKind::response_G;
    if (rec.answered_despite_error) rec.failure_pattern = classify_failure(q);
  } else if (q.gold_answer) {
    rec.dataset = "valid";
    rec.correct_answer = parsed.kind == ParsedKind::response_G &&
                         parsed.answer_text &&
                         answers_match(*parsed.answer_text, *q.gold_answer,
                                       q.qtype);
  } else {
    rec.judge_skipped = true;
  }
}

namespace {

std::string record_key(const std::string& qid, PromptStyle style) {
  return qid + "\x1f" + teachers::prompt_style_name(style);
}

std::map<std::string, EvalRecord> load_partial(const std::string& path) {
  std::map<std::string, EvalRecord> out;
  if (path.empty() || !file_exists(path)) return out;
  for (const auto& j : read_jsonl(path)) {
    EvalRecord r = EvalRecord::from_json(j);
    out.emplace(record_key(r.question_id, r.prompt_style), r);
  }
  return out;
}

void finish_record(const Question& q, const ParsedResponse& parsed,
                   EvalRecord& rec) {
  rec.parsed_kind = parsed.kind;
  rec.discipline = corpus::to_string(q.discipline);
  judge(q, parsed, rec);
  rec.aligned =
      rec.chosen_mode &&
      ((*rec.chosen_mode == Mode::D && parsed.kind == ParsedKind::response_D) ||
       (*rec.chosen_mode == Mode::G && parsed.kind == ParsedKind::response_G));
}

}  // namespace

std::vector<EvalRecord> run_protocol(const seqmodel::NetF& net,
                                     const Vocab& vocab,
                                     const std::vector<Question>& questions,
                                     const ProtocolOptions& opt) {
  auto done = load_partial(opt.partial_path);
  std::vector<EvalRecord> records;
  for (PromptStyle style : opt.styles) {
    for (const auto& q : questions) {
      auto it = done.find(record_key(q.id, style));
      if (it != done.end()) {
        records.push_back(it->second);
        continue;
      }
      // Non-strict encoding: an out-of-vocabulary word in an evaluation
      // prompt degrades that item rather than aborting the run.
      std::vector<int> prompt = textcodec::encode(
          teachers::render_prompt(style, q.text), vocab, false);
      auto decision = decoder::select_mode(net, prompt, opt.constrain);
      auto gen =
          decoder::generate(net, vocab, prompt, decision, opt.max_new_tokens);
      auto parsed = decoder::parse_response(gen.text);

      EvalRecord rec;
      rec.question_id = q.id;
      rec.prompt_style = style;
      rec.chosen_mode = decision.chosen;
      rec.p_d = decision.p_d;
      rec.raw_text = gen.text;
      finish_record(q, parsed, rec);
      if (!opt.partial_path.empty())
        append_jsonl(opt.partial_path, rec.to_json());
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<EvalRecord> run_protocol_endpoint(
    const teachers::EndpointConfig& cfg, const std::vector<Question>& questions,
    const ProtocolOptions& opt, size_t* skipped) {
  auto done = load_partial(opt.partial_path);
  std::vector<EvalRecord> records;
  size_t skip_count = 0;
  for (PromptStyle style : opt.styles) {
    for (const auto& q : questions) {
      auto it = done.find(record_key(q.id, style));
      if (it != done.end()) {
        records.push_back(it->second);
        continue;
      }
      int attempts = 0;
      auto text = teachers::endpoint_complete(
          cfg, q.id, style, teachers::render_prompt(style, q.text), attempts);
      if (!text) {
        ++skip_count;
        continue;
      }
      EvalRecord rec;
      rec.question_id = q.id;
      rec.prompt_style = style;
      rec.raw_text = *text;
      finish_record(q, decoder::parse_response(*text), rec);
      if (!opt.partial_path.empty())
        append_jsonl(opt.partial_path, rec.to_json());
      records.push_back(std::move(rec));
    }
  }
  if (skipped) *skipped = skip_count;
  return records;
}

bool record_accurate(const EvalRecord& r) {
  return r.dataset == "faulty" ? r.recognized_fault : r.correct_answer;
}

Aggregate aggregate(const std::vector<EvalRecord>& records,
                    PromptStyle style) {
  Aggregate a;
  size_t d_faulty = 0, g_valid = 0, rec_faulty = 0, correct = 0, aligned = 0,
         accurate = 0;
  for (const auto& r : records) {
    if (r.prompt_style != style || r.judge_skipped) continue;
    ++a.n;
    if (r.parsed_kind == ParsedKind::unparseable) ++a.n_unparseable;
    if (r.chosen_mode) {
      ++a.n_moded;
      if (r.aligned) ++aligned;
    }
    if (record_accurate(r)) ++accurate;
    if (r.dataset == "faulty") {
      ++a.n_faulty;
      if (r.chosen_mode && *r.chosen_mode == Mode::D) ++d_faulty;
      if (r.recognized_fault) ++rec_faulty;
    } else if (r.dataset == "valid") {
      ++a.n_valid;
      if (r.chosen_mode && *r.chosen_mode == Mode::G) ++g_valid;
      if (r.correct_answer) ++correct;
    }
  }
  auto pct = [](size_t num, size_t den) {
    return den ? 100.0 * double(num) / double(den) : 0.0;
  };
  a.d_rate_faulty = pct(d_faulty, a.n_faulty);
  a.g_rate_valid = pct(g_valid, a.n_valid);
  a.recognition_faulty = pct(rec_faulty, a.n_faulty);
  a.valid_accuracy = pct(correct, a.n_valid);
  a.alignment = pct(aligned, a.n_moded);
  a.accuracy = pct(accurate, a.n);
  return a;
}

std::array<double, 4> alignment_cells(const std::vector<EvalRecord>& records) {
  std::array<size_t, 4> counts{0, 0, 0, 0};
  size_t total = 0;
  for (const auto& r : records) {
    if (!r.chosen_mode || r.parsed_kind == ParsedKind::unparseable) continue;
    ++total;
    bool g_mode = *r.chosen_mode == Mode::G;
    bool g_resp = r.parsed_kind == ParsedKind::response_G;
    counts[(g_mode ? 0 : 2) + (g_resp ? 0 : 1)] += 1;
  }
  std::array<double, 4> cells{0, 0, 0, 0};
  if (total)
    for (size_t i = 0; i < 4; ++i)
      cells[i] = 100.0 * double(counts[i]) / double(total);
  return cells;
}

namespace {

std::string fmt(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

const std::vector<PromptStyle>& all_styles() {
  static const std::vector<PromptStyle> s = {PromptStyle::gen_no_hint,
                                             PromptStyle::gen_with_hint,
                                             PromptStyle::discriminative};
  return s;
}

}  // namespace

void write_report(const std::vector<EvalRecord>& records,
                  const std::string& out_dir, const std::string& label) {
  if (records.empty()) throw Error("report requires a non-empty record set");
  ensure_dir(out_dir);

  // Per-style accuracy (fault recognition / answer correctness).
  std::string t2_csv = "model";
  std::string t2_md = "| model |";
  for (PromptStyle s : all_styles()) {
    t2_csv += "," + teachers::prompt_style_name(s);
    t2_md += " " + teachers::prompt_style_name(s) + " |";
  }
  t2_csv += "\n" + label;
  t2_md += "\n|---|---|---|---|\n| " + label + " |";
  for (PromptStyle s : all_styles()) {
    Aggregate a = aggregate(records, s);
    std::string cell = a.n ? fmt(a.accuracy, 1) : "-";
    t2_csv += "," + cell;
    t2_md += " " + cell + " |";
  }
  t2_csv += "\n";
  t2_md += "\n";
  write_file(out_dir + "/table2.csv", t2_csv);

  // Per-discipline accuracy (Table 4 shape).
  std::set<std::string> disciplines;
  for (const auto& r : records)
    if (!r.discipline.empty()) disciplines.insert(r.discipline);
  std::string t4_csv = "discipline";
  std::string t4_md = "| discipline |";
  for (PromptStyle s : all_styles()) {
    t4_csv += "," + teachers::prompt_style_name(s);
    t4_md += " " + teachers::prompt_style_name(s) + " |";
  }
  t4_csv += "\n";
  t4_md += "\n|---|---|---|---|\n";
  for (const auto& d : disciplines) {
    t4_csv += d;
    t4_md += "| " + d + " |";
    for (PromptStyle s : all_styles()) {
      size_t n = 0, ok = 0;
      for (const auto& r : records) {
        if (r.discipline != d || r.prompt_style != s || r.judge_skipped)
          continue;
        ++n;
        if (record_accurate(r)) ++ok;
      }
      std::string cell = n ? fmt(100.0 * double(ok) / double(n), 1) : "-";
      t4_csv += "," + cell;
      t4_md += " " + cell + " |";
    }
    t4_csv += "\n";
    t4_md += "\n";
  }
  write_file(out_dir + "/table4.csv", t4_csv);

  // D-trigger rate per dataset (Fig. 4 shape).
  std::string f4_csv = "dataset";
  std::string f4_md = "| dataset |";
  for (PromptStyle s : all_styles()) {
    f4_csv += "," + teachers::prompt_style_name(s);
    f4_md += " " + teachers::prompt_style_name(s) + " |";
  }
  f4_md += "\n|---|---|---|---|\n";
  f4_csv += "\n";
  std::set<std::string> datasets;
  for (const auto& r : records)
    if (!r.dataset.empty()) datasets.insert(r.dataset);
  for (const auto& ds : datasets) {
    f4_csv += ds;
    f4_md += "| " + ds + " |";
    for (PromptStyle s : all_styles()) {
      size_t n = 0, d = 0;
      for (const auto& r : records) {
        if (r.dataset != ds || r.prompt_style != s || !r.chosen_mode) continue;
        ++n;
        if (*r.chosen_mode == Mode::D) ++d;
      }
      std::string cell = n ? fmt(100.0 * double(d) / double(n), 1) : "-";
      f4_csv += "," + cell;
      f4_md += " " + cell + " |";
    }
    f4_csv += "\n";
    f4_md += "\n";
  }
  write_file(out_dir + "/fig4.csv", f4_csv);

  // Mode-response alignment cells (Table 5 shape).
  auto cells = alignment_cells(records);
  const char* cell_names[4] = {"[G] + response_G", "[G] + response_D",
                               "[D] + response_G", "[D] + response_D"};
  std::string t5_csv = "cell,percent\n";
  std::string t5_md = "| mode + response | share |\n|---|---|\n";
  double sum = 0;
  for (size_t i = 0; i < 4; ++i) {
    sum += cells[i];
    t5_csv += std::string(cell_names[i]) + "," + fmt(cells[i], 2) + "\n";
    t5_md +=
        "| " + std::string(cell_names[i]) + " | " + fmt(cells[i], 2) + " |\n";
  }
  t5_csv += "total," + fmt(sum, 2) + "\n";
  t5_md += "| total | " + fmt(sum, 2) + " |\n";
  write_file(out_dir + "/table5.csv", t5_csv);

  // Failure-pattern counts.
  std::map<std::string, size_t> patterns;
  size_t skipped = 0, unparseable = 0;
  for (const auto& r : records) {
    if (r.failure_pattern)
      ++patterns[failure_pattern_name(*r.failure_pattern)];
    if (r.judge_skipped) ++skipped;
    if (r.parsed_kind == ParsedKind::unparseable) ++unparseable;
  }

  std::string md = "# Evaluation report\n\n";
  md += "Records: " + std::to_string(records.size()) + " (judge-skipped " +
        std::to_string(skipped) + ", unparseable " +
        std::to_string(unparseable) + ")\n\n";
  md += "## Accuracy by prompt style\n\n" + t2_md + "\n";
  md += "## Accuracy by discipline\n\n" + t4_md + "\n";
  md += "## D-trigger rate by dataset\n\n" + f4_md + "\n";
  md += "## Mode-response alignment\n\n" + t5_md + "\n";
  if (!patterns.empty()) {
    md += "## Failure patterns (answered despite error)\n\n";
    md += "| pattern | count |\n|---|---|\n";
    for (const auto& [name, count] : patterns)
      md += "| " + name + " | " + std::to_string(count) + " |\n";
    md += "\n";
  }
  write_file(out_dir + "/report.md", md);
}

void write_ablation(
    const std::vector<std::pair<std::string, std::vector<EvalRecord>>>& runs,
    const std::string& out_dir) {
  ensure_dir(out_dir);
  std::string csv = "run,d_rate_faulty,recognition_faulty,alignment\n";
  std::string md =
      "| run | faulty D-rate | faulty recognition | alignment |\n"
      "|---|---|---|---|\n";
  for (const auto& [name, records] : runs) {
    Aggregate a = aggregate(records, PromptStyle::gen_no_hint);
    csv += name + "," + fmt(a.d_rate_faulty, 1) + "," +
           fmt(a.recognition_faulty, 1) + "," + fmt(a.alignment, 1) + "\n";
    md += "| " + name + " | " + fmt(a.d_rate_faulty, 1) + " | " +
          fmt(a.recognition_faulty, 1) + " | " + fmt(a.alignment, 1) + " |\n";
  }
  write_file(out_dir + "/fig5.csv", csv);
  write_file(out_dir + "/fig5.md", md);
}

}  // namespace taskmode::evaluator
