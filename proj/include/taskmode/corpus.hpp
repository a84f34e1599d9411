#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "taskmode/util.hpp"

namespace taskmode::corpus {

// ---------------------------------------------------------------------------
// Enums.
// ---------------------------------------------------------------------------

enum class Discipline {
  physical_science,
  biological_science,
  earth_science,
  mathematics,
  social_science,
  engineering,
  chemical_science,
  computer_science,
  other,
};
constexpr int kNumDisciplines = 9;

enum class QType {
  open_ended,
  multiple_choice,
  fill_in_blank,
  true_false,
  yes_no,
};

enum class ErrorType {
  consistency_error,
  nonsensical_content,
  missing_information,
  incorrect_information,
};
constexpr int kNumErrorTypes = 4;

enum class Severity { full_false, semi_false };

enum class Split { train, dev, test };

std::string to_string(Discipline d);
std::string to_string(QType q);
std::string to_string(ErrorType e);
std::string to_string(Severity s);
std::string to_string(Split s);

Discipline discipline_from_string(const std::string& s, bool strict);
QType qtype_from_string(const std::string& s);
// Accepts both canonical snake_case and display spellings such as
// "Consistency Error".
ErrorType error_type_from_string(const std::string& s);
Severity severity_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Records.
// ---------------------------------------------------------------------------

struct FaultSpec {
  ErrorType error_type = ErrorType::consistency_error;
  // Markers that must each occur verbatim in the question text and that a
  // correct diagnosis must reference. Never empty.
  std::vector<std::string> gold_reason_tags;
  Severity severity = Severity::full_false;

  bool operator==(const FaultSpec&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  Discipline discipline = Discipline::other;
  QType qtype = QType::open_ended;
  std::optional<FaultSpec> fault;        // absent => valid question
  std::optional<std::string> gold_answer;  // present iff fault absent
  Split split = Split::train;

  bool is_faulty() const { return fault.has_value(); }
  bool operator==(const Question&) const = default;
};

struct CorpusManifest {
  uint64_t seed = 0;
  std::string version;
  size_t n_faulty_requested = 0;
  size_t n_valid_requested = 0;
  std::array<double, kNumErrorTypes> mix{};
  // counts[discipline][error_type_or_valid][split]; the error axis uses
  // indices 0..3 for the four fault categories and 4 for valid questions.
  std::array<std::array<std::array<size_t, 3>, kNumErrorTypes + 1>,
             kNumDisciplines>
      counts{};

  size_t total() const;
  json to_json() const;
  static CorpusManifest from_json(const json& j);
};

struct Corpus {
  std::vector<Question> questions;
  CorpusManifest manifest;

  size_t size() const { return questions.size(); }
  const Question& by_id(const std::string& id) const;
};

// ---------------------------------------------------------------------------
// Operations.
// ---------------------------------------------------------------------------

// Named mix presets over (consistency, nonsensical, missing, incorrect).
// "uniform" = (0.25, 0.25, 0.25, 0.25); "paper" mirrors the source
// benchmark's published category shares.
std::array<double, kNumErrorTypes> mix_preset(const std::string& name);

// Deterministic synthesis. Faulty counts per error type come from the mix by
// largest-remainder apportionment (ties broken by enum order). Every faulty
// question's gold_reason_tags occur verbatim in its text; every valid
// question's gold_answer is computed by the template's own solver.
Corpus generate(size_t n_faulty, size_t n_valid,
                const std::array<double, kNumErrorTypes>& mix, uint64_t seed);

// JSONL persistence; one Question per line, manifest as sidecar JSON at
// path + ".manifest.json" (written by save, optional for load).
void save(const Corpus& corpus, const std::string& path);
Corpus load(const std::string& path, bool strict = true);

// Assigns dev/test labels. Only full_false faulty questions are eligible;
// everything else (valid questions and semi_false items included) stays in
// train. Disciplines short of the requested counts contribute everything
// they have; a warning is recorded per shortfall.
struct SplitReport {
  size_t n_test = 0;
  size_t n_dev = 0;
  size_t n_train = 0;
  std::vector<std::string> warnings;
};
SplitReport assign_splits(Corpus& corpus, size_t per_discipline_test,
                          size_t per_discipline_dev, uint64_t seed);

json question_to_json(const Question& q);
Question question_from_json(const json& j, bool strict, size_t record_index);

// Largest-remainder apportionment of `total` into integer counts
// proportional to `weights`; ties broken by index order. Exposed for tests.
std::vector<size_t> apportion(size_t total, const std::vector<double>& weights);

}  // namespace taskmode::corpus
