#include "taskmode/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace taskmode::corpus {

// ---------------------------------------------------------------------------
// Enum <-> string.
// ---------------------------------------------------------------------------

namespace {

const char* kDisciplineNames[] = {
    "physical_science", "biological_science", "earth_science", "mathematics",
    "social_science",   "engineering",        "chemical_science",
    "computer_science", "other"};
const char* kQTypeNames[] = {"open_ended", "multiple_choice", "fill_in_blank",
                             "true_false", "yes_no"};
const char* kErrorTypeNames[] = {"consistency_error", "nonsensical_content",
                                 "missing_information",
                                 "incorrect_information"};
const char* kSeverityNames[] = {"full_false", "semi_false"};
const char* kSplitNames[] = {"train", "dev", "test"};

// "Consistency Error" / "consistency-error" -> "consistency_error".
std::string canon(const std::string& s) {
  std::string out = lower(trim(s));
  for (char& c : out)
    if (c == ' ' || c == '-') c = '_';
  return out;
}

template <size_t N>
int find_name(const char* const (&names)[N], const std::string& s) {
  std::string c = canon(s);
  for (size_t i = 0; i < N; ++i)
    if (c == names[i]) return int(i);
  return -1;
}

}  // namespace

std::string to_string(Discipline d) { return kDisciplineNames[int(d)]; }
std::string to_string(QType q) { return kQTypeNames[int(q)]; }
std::string to_string(ErrorType e) { return kErrorTypeNames[int(e)]; }
std::string to_string(Severity s) { return kSeverityNames[int(s)]; }
std::string to_string(Split s) { return kSplitNames[int(s)]; }

Discipline discipline_from_string(const std::string& s, bool strict) {
  int i = find_name(kDisciplineNames, s);
  if (i >= 0) return Discipline(i);
  if (strict) throw Error("unknown discipline: \"" + s + "\"");
  return Discipline::other;
}

QType qtype_from_string(const std::string& s) {
  int i = find_name(kQTypeNames, s);
  if (i < 0) throw Error("unknown qtype: \"" + s + "\"");
  return QType(i);
}

ErrorType error_type_from_string(const std::string& s) {
  int i = find_name(kErrorTypeNames, s);
  if (i < 0) throw Error("unknown error_type: \"" + s + "\"");
  return ErrorType(i);
}

Severity severity_from_string(const std::string& s) {
  int i = find_name(kSeverityNames, s);
  if (i < 0) throw Error("unknown severity: \"" + s + "\"");
  return Severity(i);
}

Split split_from_string(const std::string& s) {
  int i = find_name(kSplitNames, s);
  if (i < 0) throw Error("unknown split: \"" + s + "\"");
  return Split(i);
}

// ---------------------------------------------------------------------------
// Manifest.
// ---------------------------------------------------------------------------

size_t CorpusManifest::total() const {
  size_t n = 0;
  for (const auto& d : counts)
    for (const auto& e : d)
      for (size_t c : e) n += c;
  return n;
}

json CorpusManifest::to_json() const {
  json j;
  j["seed"] = seed;
  j["version"] = version;
  j["n_faulty_requested"] = n_faulty_requested;
  j["n_valid_requested"] = n_valid_requested;
  j["mix"] = mix;
  json jc = json::object();
  for (int d = 0; d < kNumDisciplines; ++d) {
    json jd = json::object();
    for (int e = 0; e <= kNumErrorTypes; ++e) {
      std::string cat =
          e < kNumErrorTypes ? to_string(ErrorType(e)) : std::string("valid");
      json je = json::object();
      for (int s = 0; s < 3; ++s)
        if (counts[d][e][s] > 0) je[to_string(Split(s))] = counts[d][e][s];
      if (!je.empty()) jd[cat] = je;
    }
    if (!jd.empty()) jc[to_string(Discipline(d))] = jd;
  }
  j["counts"] = jc;
  return j;
}

CorpusManifest CorpusManifest::from_json(const json& j) {
  CorpusManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.version = j.at("version").get<std::string>();
  m.n_faulty_requested = j.at("n_faulty_requested").get<size_t>();
  m.n_valid_requested = j.at("n_valid_requested").get<size_t>();
  auto mix = j.at("mix");
  for (int i = 0; i < kNumErrorTypes; ++i) m.mix[i] = mix.at(i).get<double>();
  for (auto& [dname, jd] : j.at("counts").items()) {
    int d = int(discipline_from_string(dname, /*strict=*/true));
    for (auto& [cat, je] : jd.items()) {
      int e = cat == "valid" ? kNumErrorTypes : int(error_type_from_string(cat));
      for (auto& [sname, count] : je.items())
        m.counts[d][e][int(split_from_string(sname))] = count.get<size_t>();
    }
  }
  return m;
}

const Question& Corpus::by_id(const std::string& id) const {
  for (const auto& q : questions)
    if (q.id == id) return q;
  throw Error("no question with id " + id);
}

// ---------------------------------------------------------------------------
// Template families.
//
// Each family is a small set of concrete question variants sharing one
// surface form. Faulty families carry machine-checkable reason tags that
// appear verbatim in the text; valid families carry solver-computed answers.
// Number pools are kept small and disjoint between the faulty and valid
// twins of a surface form, so corpora stay within a compact vocabulary.
// ---------------------------------------------------------------------------

namespace {

struct Variant {
  std::string text;
  std::vector<std::string> tags;  // faulty: reason tags, verbatim in text
  std::string gold;               // valid: gold answer
};

struct FaultyFamily {
  std::string name;
  Discipline disc;
  QType qtype;
  ErrorType etype;
  std::vector<Variant> full_variants;
  std::vector<Variant> semi_variants;  // borderline faults; may be empty
};

struct ValidFamily {
  std::string name;
  Discipline disc;
  QType qtype;
  std::vector<Variant> variants;
};

std::string num(long v) { return std::to_string(v); }

// --- surface forms shared by a faulty family and its valid twin ---

std::string deck_text(long total, long held) {
  return "A deck of cards contains " + num(total) +
         " club cards. A player is currently holding " + num(held) +
         " of the club cards. How many club cards are not being held?";
}

std::string files_text(long total, long removed) {
  return "A folder holds " + num(total) + " files. A cleanup script deleted " +
         num(removed) +
         " of the files from that folder. How many files are left?";
}

std::string budget_text(long total, long edu) {
  return "A city budget allocates " + num(total) +
         " million dollars in total. The education department alone receives " +
         num(edu) +
         " million dollars of that budget. How many million dollars remain "
         "for all other departments?";
}

std::string reservoir_text(long held, long lost) {
  return "A reservoir held " + num(held) +
         " cubic meters of water. During the drought it lost " + num(lost) +
         " cubic meters. How many cubic meters of water remain?";
}

std::string moles_text(const std::string& moles, long liters) {
  return "A solution contains " + moles +
         " moles of sodium chloride dissolved in " + num(liters) +
         " liters of water. What is the molar concentration of the solution "
         "in moles per liter?";
}

std::string speed_text(const std::string& seconds, long meters) {
  return "A runner completes a sprint of " + num(meters) + " meters in " +
         seconds +
         " seconds. What was the runner's average speed in meters per second?";
}

std::string gears_text(const std::string& driver, long follower) {
  return "A gearbox uses a driver gear with " + driver +
         " teeth meshed with a follower gear that has " + num(follower) +
         " teeth. What is the gear ratio of driver to follower?";
}

std::string colonies_text(const std::string& from, const std::string& to,
                          bool grew) {
  if (grew)
    return "A petri dish culture grew from " + from + " bacterial colonies to " +
           to + " colonies overnight. How many new colonies appeared during "
                "the night?";
  return "A petri dish culture shrank from " + from +
         " bacterial colonies to " + to +
         " colonies overnight. How many colonies were lost during the night?";
}

std::string mcq_text(const std::string& stem, const std::vector<long>& opts) {
  static const char* letters[] = {"A", "B", "C", "D"};
  std::string out = stem;
  for (size_t i = 0; i < opts.size(); ++i)
    out += " " + std::string(letters[i]) + ": " + num(opts[i]);
  return out;
}

std::vector<std::string> mcq_tags(const std::vector<long>& opts) {
  static const char* letters[] = {"A", "B", "C", "D"};
  std::vector<std::string> tags;
  for (size_t i = 0; i < opts.size(); ++i)
    tags.push_back(std::string(letters[i]) + ": " + num(opts[i]));
  return tags;
}

const std::string kShellStem =
    "How many electrons can the second electron shell of an atom hold?";
const std::string kHexStem =
    "How many bits are needed to represent one hexadecimal digit?";
const std::string kAnglesStem =
    "What is the sum of the interior angles of a triangle in degrees?";

std::vector<FaultyFamily> build_faulty_families() {
  std::vector<FaultyFamily> fams;

  // -- consistency_error: a stated part exceeds its stated whole --
  {
    FaultyFamily f{"f_deck", Discipline::mathematics, QType::open_ended,
                   ErrorType::consistency_error, {}, {}};
    for (long t : {503L, 517L, 529L, 543L}) {
      for (long d : {18L, 27L, 34L})
        f.full_variants.push_back({deck_text(t, t + d),
                                   {num(t + d), num(t)}, ""});
      f.semi_variants.push_back({deck_text(t, t + 1), {num(t + 1), num(t)}, ""});
    }
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_files", Discipline::computer_science, QType::open_ended,
                   ErrorType::consistency_error, {}, {}};
    for (long t : {240L, 260L, 280L}) {
      for (long d : {15L, 22L})
        f.full_variants.push_back({files_text(t, t + d),
                                   {num(t + d), num(t)}, ""});
      f.semi_variants.push_back({files_text(t, t + 1), {num(t + 1), num(t)}, ""});
    }
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_budget", Discipline::social_science, QType::open_ended,
                   ErrorType::consistency_error, {}, {}};
    for (long t : {420L, 450L, 480L}) {
      for (long d : {30L, 45L})
        f.full_variants.push_back({budget_text(t, t + d),
                                   {num(t + d), num(t)}, ""});
      f.semi_variants.push_back({budget_text(t, t + 1), {num(t + 1), num(t)}, ""});
    }
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_reservoir", Discipline::earth_science, QType::open_ended,
                   ErrorType::consistency_error, {}, {}};
    for (long t : {5000L, 5500L, 6000L})
      for (long d : {400L, 700L})
        f.full_variants.push_back({reservoir_text(t, t + d),
                                   {num(t + d), num(t)}, ""});
    fams.push_back(std::move(f));
  }

  // -- nonsensical_content: physically impossible magnitudes --
  {
    FaultyFamily f{"f_moles", Discipline::chemical_science, QType::open_ended,
                   ErrorType::nonsensical_content, {}, {}};
    for (long v : {2L, 4L, 5L, 8L}) {
      f.full_variants.push_back({moles_text("-2", v), {"-2"}, ""});
      f.semi_variants.push_back({moles_text("0", v), {"0"}, ""});
    }
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_seconds", Discipline::physical_science, QType::open_ended,
                   ErrorType::nonsensical_content, {}, {}};
    for (long m : {60L, 100L, 200L}) {
      f.full_variants.push_back({speed_text("-6", m), {"-6"}, ""});
      f.semi_variants.push_back({speed_text("0", m), {"0"}, ""});
    }
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_gears", Discipline::engineering, QType::open_ended,
                   ErrorType::nonsensical_content, {}, {}};
    for (long n : {30L, 45L, 60L})
      f.full_variants.push_back({gears_text("-15", n), {"-15"}, ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_colonies", Discipline::biological_science,
                   QType::open_ended, ErrorType::nonsensical_content, {}, {}};
    for (const char* start : {"500", "650", "800"})
      f.full_variants.push_back(
          {colonies_text(start, "-40", /*grew=*/false), {"-40"}, ""});
    fams.push_back(std::move(f));
  }

  // -- missing_information: a needed quantity is named but never given --
  {
    FaultyFamily f{"f_pool", Discipline::engineering, QType::open_ended,
                   ErrorType::missing_information, {}, {}};
    for (long c : {3L, 6L, 9L})
      f.full_variants.push_back(
          {"Each swimming pool in a town needs " + num(c) +
               " liters of chlorine solution per week. How many liters does "
               "the town need each week to treat all of its swimming pools?",
           {"swimming pools"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_rooms", Discipline::social_science, QType::open_ended,
                   ErrorType::missing_information, {}, {}};
    for (long c : {2L, 4L, 7L})
      f.full_variants.push_back(
          {"A community center wants to repaint all of its meeting rooms. "
           "Each room requires " +
               num(c) +
               " cans of paint. How many cans of paint must the center buy in "
               "total?",
           {"meeting rooms"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_stock", Discipline::chemical_science, QType::open_ended,
                   ErrorType::missing_information, {}, {}};
    for (long v : {10L, 20L, 40L})
      f.full_variants.push_back(
          {"A chemist dilutes a stock solution to prepare " + num(v) +
               " liters of a working solution. How many liters of the stock "
               "solution does she need?",
           {"stock solution"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_trip", Discipline::earth_science, QType::open_ended,
                   ErrorType::missing_information, {}, {}};
    for (long s : {40L, 55L, 70L})
      f.full_variants.push_back(
          {"A field team drove to a glacier site at an average speed of " +
               num(s) +
               " kilometers per hour, and the drive took several hours. How "
               "many kilometers did the team travel to reach the site?",
           {"several hours"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_crate", Discipline::physical_science, QType::open_ended,
                   ErrorType::missing_information, {}, {}};
    for (long h : {5L, 12L, 15L})
      f.full_variants.push_back(
          {"A rope over a frictionless pulley lifts a heavy crate " + num(h) +
               " meters straight up. How many joules of work are done on the "
               "heavy crate?",
           {"heavy crate"},
           ""});
    fams.push_back(std::move(f));
  }

  // -- incorrect_information: false premises and option sets with no
  //    correct choice --
  {
    FaultyFamily f{"f_heart", Discipline::biological_science, QType::yes_no,
                   ErrorType::incorrect_information, {}, {}};
    for (const char* part : {"left ventricle", "right atrium"})
      f.full_variants.push_back(
          {"The human heart has five chambers that pump blood. Is the " +
               std::string(part) + " the largest of these five chambers?",
           {"five chambers"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_water", Discipline::chemical_science, QType::open_ended,
                   ErrorType::incorrect_information, {}, {}};
    for (long n : {3L, 5L, 7L, 9L})
      f.full_variants.push_back(
          {"Each water molecule contains two oxygen atoms and one hydrogen "
           "atom. How many oxygen atoms are in " +
               num(n) + " water molecules?",
           {"two oxygen atoms"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_sunorbit", Discipline::earth_science, QType::true_false,
                   ErrorType::incorrect_information, {}, {}};
    for (const char* effect : {"the seasons", "the tides"})
      f.full_variants.push_back(
          {"Because the Sun completes one orbit around the Earth every 24 "
           "hours, day and night alternate. True or false: this daily orbit "
           "causes " +
               std::string(effect) + ".",
           {"orbit around the Earth"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_quench", Discipline::physical_science,
                   QType::fill_in_blank, ErrorType::incorrect_information,
                   {}, {}};
    for (const char* prop : {"hardness", "ductility"})
      f.full_variants.push_back(
          {"Since quenching is the same process as tempering, rapidly cooling "
           "steel in water will ____ its " +
               std::string(prop) + " compared to slow cooling.",
           {"same process as tempering"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    FaultyFamily f{"f_binary", Discipline::computer_science, QType::open_ended,
                   ErrorType::incorrect_information, {}, {}};
    for (long k : {4L, 8L})
      f.full_variants.push_back(
          {"Binary notation uses the ten digits 0 through 9. How many "
           "distinct values can a " +
               num(k) +
               "-bit binary register represent using these ten digits?",
           {"0 through 9"},
           ""});
    fams.push_back(std::move(f));
  }
  {
    // Option sets that omit the true answer (8).
    FaultyFamily f{"f_mcq_shell", Discipline::physical_science,
                   QType::multiple_choice, ErrorType::incorrect_information,
                   {}, {}};
    for (const auto& opts : std::vector<std::vector<long>>{
             {2, 4, 6, 12}, {1, 3, 5, 9}, {2, 6, 10, 14}})
      f.full_variants.push_back(
          {mcq_text(kShellStem, opts), mcq_tags(opts), ""});
    fams.push_back(std::move(f));
  }
  {
    // True answer 4 omitted.
    FaultyFamily f{"f_mcq_hex", Discipline::computer_science,
                   QType::multiple_choice, ErrorType::incorrect_information,
                   {}, {}};
    for (const auto& opts : std::vector<std::vector<long>>{
             {2, 3, 5, 6}, {1, 2, 6, 8}, {3, 5, 7, 8}})
      f.full_variants.push_back(
          {mcq_text(kHexStem, opts), mcq_tags(opts), ""});
    fams.push_back(std::move(f));
  }
  {
    // True answer 180 omitted.
    FaultyFamily f{"f_mcq_angles", Discipline::mathematics,
                   QType::multiple_choice, ErrorType::incorrect_information,
                   {}, {}};
    for (const auto& opts : std::vector<std::vector<long>>{
             {90, 120, 270, 360}, {45, 90, 200, 240}, {100, 160, 300, 359}})
      f.full_variants.push_back(
          {mcq_text(kAnglesStem, opts), mcq_tags(opts), ""});
    fams.push_back(std::move(f));
  }

  return fams;
}

std::vector<ValidFamily> build_valid_families() {
  std::vector<ValidFamily> fams;

  {
    ValidFamily f{"v_deck", Discipline::mathematics, QType::open_ended, {}};
    for (long t : {40L, 52L, 60L})
      for (long h : {12L, 19L, 25L})
        f.variants.push_back({deck_text(t, h), {}, num(t - h)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_files", Discipline::computer_science, QType::open_ended,
                  {}};
    for (long t : {150L, 200L})
      for (long h : {40L, 75L, 110L})
        f.variants.push_back({files_text(t, h), {}, num(t - h)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_budget", Discipline::social_science, QType::open_ended,
                  {}};
    for (long t : {300L, 360L})
      for (long h : {120L, 150L, 210L})
        f.variants.push_back({budget_text(t, h), {}, num(t - h)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_reservoir", Discipline::earth_science, QType::open_ended,
                  {}};
    for (long t : {9000L, 9600L})
      for (long d : {1200L, 2400L, 3600L})
        f.variants.push_back({reservoir_text(t, d), {}, num(t - d)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_moles", Discipline::chemical_science, QType::open_ended,
                  {}};
    for (auto [m, v] : std::vector<std::pair<long, long>>{
             {2, 2}, {6, 2}, {12, 4}, {8, 2}, {12, 2}, {10, 2}})
      f.variants.push_back({moles_text(num(m), v), {}, num(m / v)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_gears", Discipline::engineering, QType::open_ended, {}};
    for (auto [a, b] : std::vector<std::pair<long, long>>{
             {30, 15}, {60, 15}, {60, 20}, {45, 15}, {40, 20}, {80, 20}})
      f.variants.push_back({gears_text(num(a), b), {}, num(a / b)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_speed", Discipline::physical_science, QType::open_ended,
                  {}};
    for (auto [d, s] : std::vector<std::pair<long, long>>{
             {100, 20}, {60, 12}, {200, 25}, {90, 15}, {120, 15}, {200, 40}})
      f.variants.push_back({speed_text(num(s), d), {}, num(d / s)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_colonies", Discipline::biological_science,
                  QType::open_ended, {}};
    for (auto [a, b] : std::vector<std::pair<long, long>>{
             {300, 450}, {500, 720}, {650, 800}, {400, 640}})
      f.variants.push_back(
          {colonies_text(num(a), num(b), /*grew=*/true), {}, num(b - a)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_vote", Discipline::social_science, QType::open_ended, {}};
    for (auto [a, b] : std::vector<std::pair<long, long>>{
             {45, 30}, {60, 25}, {52, 40}, {75, 50}})
      f.variants.push_back(
          {"In a town council vote, " + num(a) +
               " members voted in favor and " + num(b) +
               " voted against. By how many votes did the motion pass?",
           {},
           num(a - b)});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_volt", Discipline::engineering, QType::open_ended, {}};
    for (auto [i, v] : std::vector<std::pair<long, long>>{
             {2, 12}, {3, 12}, {2, 24}, {5, 10}})
      f.variants.push_back(
          {"A circuit draws " + num(i) + " amperes from a " + num(v) +
               "-volt battery. How many watts of power does the circuit use?",
           {},
           num(i * v)});
    fams.push_back(std::move(f));
  }

  auto fact = [&](const std::string& name, Discipline d, QType qt,
                  const std::string& text, const std::string& gold) {
    fams.push_back(ValidFamily{name, d, qt, {Variant{text, {}, gold}}});
  };

  fact("v_boil", Discipline::physical_science, QType::open_ended,
       "At standard atmospheric pressure, at what temperature in degrees "
       "Celsius does water boil?",
       "100");
  fact("v_hexbits", Discipline::computer_science, QType::open_ended, kHexStem,
       "4");
  fact("v_triangle", Discipline::mathematics, QType::open_ended, kAnglesStem,
       "180");
  fact("v_heart", Discipline::biological_science, QType::open_ended,
       "How many chambers does the human heart have?", "4");
  fact("v_insect", Discipline::biological_science, QType::open_ended,
       "How many legs does an adult insect have?", "6");
  fact("v_co2", Discipline::biological_science, QType::open_ended,
       "Which gas do plants absorb from the air during photosynthesis?",
       "carbon dioxide");
  fact("v_capital", Discipline::social_science, QType::open_ended,
       "What is the capital city of France?", "Paris");
  fact("v_gold", Discipline::chemical_science, QType::fill_in_blank,
       "The chemical symbol for gold is ____.", "Au");
  fact("v_oxygen", Discipline::chemical_science, QType::fill_in_blank,
       "The chemical symbol for oxygen is ____.", "O");
  fact("v_mantle", Discipline::earth_science, QType::fill_in_blank,
       "The layer of the Earth between the crust and the core is called the "
       "____.",
       "mantle");
  fact("v_tf_rotation", Discipline::earth_science, QType::true_false,
       "True or false: the Earth completes one rotation on its axis roughly "
       "every 24 hours.",
       "True");
  fact("v_tf_sound", Discipline::physical_science, QType::true_false,
       "True or false: sound travels faster in air than in water.", "False");
  fact("v_yn_prime", Discipline::mathematics, QType::yes_no,
       "Is 11 a prime number?", "Yes");
  fact("v_yn_water", Discipline::chemical_science, QType::yes_no,
       "Does a water molecule contain more hydrogen atoms than oxygen atoms?",
       "Yes");
  fact("v_yn_penguin", Discipline::biological_science, QType::yes_no,
       "Can penguins fly?", "No");
  fact("v_yn_bridge", Discipline::engineering, QType::yes_no,
       "Is steel commonly used to build suspension bridges?", "Yes");

  {
    ValidFamily f{"v_mcq_shell", Discipline::physical_science,
                  QType::multiple_choice, {}};
    f.variants.push_back({mcq_text(kShellStem, {2, 6, 8, 10}), {}, "C: 8"});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_mcq_hex", Discipline::computer_science,
                  QType::multiple_choice, {}};
    f.variants.push_back({mcq_text(kHexStem, {2, 4, 6, 8}), {}, "B: 4"});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_mcq_angles", Discipline::mathematics,
                  QType::multiple_choice, {}};
    f.variants.push_back({mcq_text(kAnglesStem, {90, 180, 270, 360}), {},
                          "B: 180"});
    fams.push_back(std::move(f));
  }
  {
    ValidFamily f{"v_mcq_planet", Discipline::earth_science,
                  QType::multiple_choice, {}};
    f.variants.push_back(
        {"Which planet is known as the Red Planet? A: Venus B: Jupiter C: "
         "Mars D: Mercury",
         {},
         "C: Mars"});
    fams.push_back(std::move(f));
  }

  return fams;
}

const std::vector<FaultyFamily>& faulty_families() {
  static const std::vector<FaultyFamily> fams = build_faulty_families();
  return fams;
}

const std::vector<ValidFamily>& valid_families() {
  static const std::vector<ValidFamily> fams = build_valid_families();
  return fams;
}

}  // namespace

// ---------------------------------------------------------------------------
// Apportionment & generation.
// ---------------------------------------------------------------------------

std::vector<size_t> apportion(size_t total,
                              const std::vector<double>& weights) {
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<size_t> counts(weights.size(), 0);
  if (total == 0 || wsum <= 0) return counts;
  std::vector<double> remainders(weights.size());
  size_t assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    double exact = double(total) * weights[i] / wsum;
    counts[i] = size_t(std::floor(exact));
    remainders[i] = exact - double(counts[i]);
    assigned += counts[i];
  }
  std::vector<size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  // Largest remainder first; ties broken by lower index.
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return remainders[a] > remainders[b];
  });
  for (size_t k = 0; assigned < total; ++k, ++assigned)
    counts[order[k % order.size()]] += 1;
  return counts;
}

std::array<double, kNumErrorTypes> mix_preset(const std::string& name) {
  if (name == "uniform") return {0.25, 0.25, 0.25, 0.25};
  if (name == "paper") return {0.3589, 0.2751, 0.2505, 0.1155};
  throw UsageError("unknown mix preset: \"" + name + "\"");
}

namespace {

constexpr const char* kGeneratorVersion = "corpusgen-1";

std::string make_id(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "q%06zu", index);
  return buf;
}

}  // namespace

Corpus generate(size_t n_faulty, size_t n_valid,
                const std::array<double, kNumErrorTypes>& mix, uint64_t seed) {
  double msum = 0.0;
  for (double m : mix) {
    if (m < 0.0) throw UsageError("mix entries must be nonnegative");
    msum += m;
  }
  if (std::abs(msum - 1.0) > 1e-9)
    throw UsageError("mix must sum to 1 (got " + std::to_string(msum) + ")");

  Corpus corpus;
  corpus.manifest.seed = seed;
  corpus.manifest.version = kGeneratorVersion;
  corpus.manifest.n_faulty_requested = n_faulty;
  corpus.manifest.n_valid_requested = n_valid;
  corpus.manifest.mix = mix;

  Rng rng(seed);
  size_t next_id = 0;

  auto per_type =
      apportion(n_faulty, std::vector<double>(mix.begin(), mix.end()));

  for (int e = 0; e < kNumErrorTypes; ++e) {
    std::vector<const FaultyFamily*> fams;
    for (const auto& f : faulty_families())
      if (f.etype == ErrorType(e)) fams.push_back(&f);
    for (size_t i = 0; i < per_type[e]; ++i) {
      const FaultyFamily& fam = *fams[i % fams.size()];
      // Every seventh pass over a family that has borderline variants emits
      // one; they are train-only by the split policy.
      bool semi = !fam.semi_variants.empty() &&
                  (i / fams.size()) % 7 == 6;
      const auto& pool = semi ? fam.semi_variants : fam.full_variants;
      const Variant& v = pool[rng.below(pool.size())];
      Question q;
      q.id = make_id(next_id++);
      q.text = v.text;
      q.discipline = fam.disc;
      q.qtype = fam.qtype;
      q.fault = FaultSpec{ErrorType(e), v.tags,
                          semi ? Severity::semi_false : Severity::full_false};
      q.split = Split::train;
      corpus.manifest.counts[int(fam.disc)][e][int(Split::train)] += 1;
      corpus.questions.push_back(std::move(q));
    }
  }

  const auto& vfams = valid_families();
  for (size_t i = 0; i < n_valid; ++i) {
    const ValidFamily& fam = vfams[i % vfams.size()];
    const Variant& v = fam.variants[rng.below(fam.variants.size())];
    Question q;
    q.id = make_id(next_id++);
    q.text = v.text;
    q.discipline = fam.disc;
    q.qtype = fam.qtype;
    q.gold_answer = v.gold;
    q.split = Split::train;
    corpus.manifest.counts[int(fam.disc)][kNumErrorTypes][int(Split::train)] +=
        1;
    corpus.questions.push_back(std::move(q));
  }

  return corpus;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

json question_to_json(const Question& q) {
  json j;
  j["id"] = q.id;
  j["text"] = q.text;
  j["discipline"] = to_string(q.discipline);
  j["qtype"] = to_string(q.qtype);
  j["split"] = to_string(q.split);
  if (q.fault) {
    json jf;
    jf["error_type"] = to_string(q.fault->error_type);
    jf["gold_reason_tags"] = q.fault->gold_reason_tags;
    jf["severity"] = to_string(q.fault->severity);
    j["fault"] = jf;
  }
  if (q.gold_answer) j["gold_answer"] = *q.gold_answer;
  return j;
}

Question question_from_json(const json& j, bool strict, size_t record_index) {
  auto fail = [&](const std::string& why) -> Error {
    return Error("record " + std::to_string(record_index) + ": " + why);
  };
  Question q;
  try {
    q.id = j.at("id").get<std::string>();
    q.text = j.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw fail(std::string("missing/invalid id or text: ") + e.what());
  }
  if (q.id.empty()) throw fail("id must be non-empty");
  if (q.text.empty()) throw fail("text must be non-empty");

  if (!j.contains("discipline")) throw fail("missing discipline");
  try {
    q.discipline =
        discipline_from_string(j.at("discipline").get<std::string>(), strict);
  } catch (const Error& e) {
    throw fail(e.what());
  }

  if (!j.contains("qtype")) throw fail("missing qtype");
  try {
    q.qtype = qtype_from_string(j.at("qtype").get<std::string>());
  } catch (const Error& e) {
    if (strict) throw fail(e.what());
    q.qtype = QType::open_ended;
  }

  if (j.contains("split")) {
    q.split = split_from_string(j.at("split").get<std::string>());
  } else if (strict) {
    throw fail("missing split");
  }

  bool has_fault = j.contains("fault") && !j.at("fault").is_null();
  bool has_gold = j.contains("gold_answer") && !j.at("gold_answer").is_null();
  if (has_fault == has_gold)
    throw fail(
        "exactly one of fault and gold_answer must be present (mutually "
        "exclusive, collectively exhaustive)");

  if (has_fault) {
    const json& jf = j.at("fault");
    FaultSpec fs;
    if (!jf.contains("error_type")) throw fail("fault missing error_type");
    try {
      fs.error_type =
          error_type_from_string(jf.at("error_type").get<std::string>());
    } catch (const Error& e) {
      throw fail(e.what());
    }
    if (!jf.contains("gold_reason_tags"))
      throw fail("fault missing gold_reason_tags");
    for (const auto& t : jf.at("gold_reason_tags"))
      fs.gold_reason_tags.push_back(t.get<std::string>());
    if (fs.gold_reason_tags.empty())
      throw fail("gold_reason_tags must be non-empty");
    if (jf.contains("severity")) {
      try {
        fs.severity = severity_from_string(jf.at("severity").get<std::string>());
      } catch (const Error& e) {
        throw fail(e.what());
      }
    } else if (strict) {
      throw fail("fault missing severity");
    }
    q.fault = std::move(fs);
  } else {
    q.gold_answer = j.at("gold_answer").get<std::string>();
  }
  return q;
}

void save(const Corpus& corpus, const std::string& path) {
  std::string out;
  for (const auto& q : corpus.questions) {
    out += question_to_json(q).dump();
    out += '\n';
  }
  write_file(path, out);
  write_file(path + ".manifest.json", corpus.manifest.to_json().dump(2) + "\n");
}

Corpus load(const std::string& path, bool strict) {
  if (!file_exists(path))
    throw MissingArtifact(path, "taskmode corpus gen --out " + path);
  Corpus corpus;
  std::set<std::string> seen_ids;

  std::string data = read_file(path);
  size_t lineno = 0;
  size_t start = 0;
  while (start <= data.size()) {
    size_t end = data.find('\n', start);
    std::string line = data.substr(
        start, end == std::string::npos ? std::string::npos : end - start);
    start = end == std::string::npos ? data.size() + 1 : end + 1;
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(path + ":" + std::to_string(lineno) +
                  ": invalid JSON: " + e.what());
    }
    Question q;
    try {
      q = question_from_json(j, strict, lineno);
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen_ids.insert(q.id).second)
      throw Error(path + ":" + std::to_string(lineno) + ": duplicate id " +
                  q.id + " violates id uniqueness");
    corpus.questions.push_back(std::move(q));
  }

  std::string manifest_path = path + ".manifest.json";
  if (file_exists(manifest_path)) {
    corpus.manifest = CorpusManifest::from_json(json::parse(read_file(manifest_path)));
  } else {
    for (const auto& q : corpus.questions) {
      int cat = q.fault ? int(q.fault->error_type) : kNumErrorTypes;
      corpus.manifest.counts[int(q.discipline)][cat][int(q.split)] += 1;
    }
    corpus.manifest.version = "loaded";
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Split assignment.
// ---------------------------------------------------------------------------

SplitReport assign_splits(Corpus& corpus, size_t per_discipline_test,
                          size_t per_discipline_dev, uint64_t seed) {
  SplitReport report;
  Rng rng(seed);

  // Everything starts in train; only full_false faulty questions are
  // eligible for dev/test.
  for (auto& q : corpus.questions) q.split = Split::train;

  std::array<std::vector<size_t>, kNumDisciplines> eligible;
  for (size_t i = 0; i < corpus.questions.size(); ++i) {
    const Question& q = corpus.questions[i];
    if (q.fault && q.fault->severity == Severity::full_false)
      eligible[int(q.discipline)].push_back(i);
  }

  for (int d = 0; d < kNumDisciplines; ++d) {
    auto& idx = eligible[d];
    if (idx.empty()) continue;
    rng.shuffle(idx);
    size_t want = per_discipline_test + per_discipline_dev;
    if (idx.size() < want)
      report.warnings.push_back(
          "discipline " + to_string(Discipline(d)) + " has only " +
          std::to_string(idx.size()) + " full_false questions of " +
          std::to_string(want) + " requested; taking all");
    size_t n_test = std::min(per_discipline_test, idx.size());
    size_t n_dev = std::min(per_discipline_dev, idx.size() - n_test);
    for (size_t k = 0; k < n_test; ++k)
      corpus.questions[idx[k]].split = Split::test;
    for (size_t k = n_test; k < n_test + n_dev; ++k)
      corpus.questions[idx[k]].split = Split::dev;
  }

  // Refresh manifest split counts.
  for (auto& d : corpus.manifest.counts)
    for (auto& e : d) e = {0, 0, 0};
  for (const auto& q : corpus.questions) {
    int cat = q.fault ? int(q.fault->error_type) : kNumErrorTypes;
    corpus.manifest.counts[int(q.discipline)][cat][int(q.split)] += 1;
    switch (q.split) {
      case Split::test: report.n_test += 1; break;
      case Split::dev: report.n_dev += 1; break;
      case Split::train: report.n_train += 1; break;
    }
  }
  return report;
}

}  // namespace taskmode::corpus
