#include "taskmode/textcodec.hpp"

#include <algorithm>
#include <cctype>

namespace taskmode::textcodec {

namespace {

const char* kReservedForms[Vocab::kNumReserved] = {"<pad>", "<bos>", "<eos>",
                                                   "<unk>", "[G]",   "[D]"};

constexpr const char* kVocabVersion = "vocab-1";

inline bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_';
}

// Fixed scaffolding whose words every vocabulary must carry: the three
// prompt styles plus the phrases teacher targets and diagnosis objects are
// built from. Question-specific words (tags, answers, numbers) come from the
// corpus pass instead.
const std::vector<std::string>& protocol_lexicon() {
  static const std::vector<std::string> lex = {
      // prompt scaffolding
      "Please answer the following question: ",
      ". If you cannot answer due to issues in the question, explicitly "
      "state what prevents a valid answer in your response",
      "Please analyze the following question: ",
      ". Tell us if it has an issue (Yes or No) that prevents a valid answer "
      "and explain why.",
      // response scaffolding
      "Answer: ",
      "This question cannot be answered: ",
      "{\"validity\": false, \"reason\": \"\"}",
      "{\"validity\": true, \"reason\": \"\"}",
      "the question is well-posed and answerable",
      "the stated values of and are mutually contradictory",
      "the value is physically impossible here",
      "the question mentions but never gives its quantity",
      "the stated premise is incorrect",
      "none of the options is correct",
      "it is not possible to answer",
  };
  return lex;
}

}  // namespace

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    if (is_word_char(c)) {
      size_t j = i;
      while (j < s.size() && is_word_char(static_cast<unsigned char>(s[j])))
        ++j;
      out.emplace_back(s.substr(i, j - i));
      i = j;
    } else {
      // Spaces and every other character are single-character tokens, so
      // concatenation restores the input exactly.
      out.emplace_back(1, s[i]);
      ++i;
    }
  }
  return out;
}

Vocab build_vocab(const corpus::Corpus& corpus, size_t max_size) {
  if (corpus.questions.empty())
    throw Error("build_vocab requires a non-empty corpus");
  if (max_size < Vocab::kNumReserved + 1)
    throw Error("max_size must be at least " +
                std::to_string(Vocab::kNumReserved + 1) + " (got " +
                std::to_string(max_size) + ")");

  Vocab v;
  for (const char* form : kReservedForms) v.tokens.emplace_back(form);

  auto add = [&](const std::string& tok) {
    if (v.tokens.size() >= max_size) return;
    if (v.index.count(tok)) return;
    v.index.emplace(tok, int(v.tokens.size()));
    v.tokens.push_back(tok);
  };

  // Corpus pass: frequency-ranked, first occurrence breaking ties.
  std::unordered_map<std::string, size_t> freq;
  std::unordered_map<std::string, size_t> first_seen;
  std::vector<std::string> order;
  auto count = [&](const std::string& text) {
    for (const auto& tok : split_tokens(text)) {
      auto [it, fresh] = freq.try_emplace(tok, 0);
      it->second += 1;
      if (fresh) {
        first_seen.emplace(tok, order.size());
        order.push_back(tok);
      }
    }
  };
  for (const auto& q : corpus.questions) {
    count(q.text);
    if (q.gold_answer) count(*q.gold_answer);
    if (q.fault)
      for (const auto& tag : q.fault->gold_reason_tags) count(tag);
  }
  std::sort(order.begin(), order.end(),
            [&](const std::string& a, const std::string& b) {
              if (freq[a] != freq[b]) return freq[a] > freq[b];
              return first_seen[a] < first_seen[b];
            });
  for (const auto& tok : order) add(tok);

  // Protocol lexicon after corpus words: under a tight cap the corpus itself
  // wins; at normal sizes both always fit.
  for (const auto& text : protocol_lexicon())
    for (const auto& tok : split_tokens(text)) add(tok);
  return v;
}

std::vector<int> encode(const std::string& s, const Vocab& vocab,
                        bool strict) {
  std::vector<int> ids;
  for (const auto& tok : split_tokens(s)) {
    auto it = vocab.index.find(tok);
    if (it != vocab.index.end()) {
      ids.push_back(it->second);
    } else if (strict) {
      throw Error("unknown word: \"" + tok + "\"");
    } else {
      ids.push_back(Vocab::UNK);
    }
  }
  return ids;
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.size())
      throw Error("token id out of range: " + std::to_string(id));
    switch (id) {
      case Vocab::PAD:
      case Vocab::BOS:
      case Vocab::EOS:
        break;  // structural; render as nothing
      default:
        out += vocab.tokens[id];
    }
  }
  return out;
}

std::vector<int> assemble_target(int ctrl_id, const std::string& content,
                                 const Vocab& vocab, bool strict,
                                 bool add_eos) {
  if (ctrl_id != Vocab::CTRL_G && ctrl_id != Vocab::CTRL_D)
    throw Error("assemble_target requires a control id, got " +
                std::to_string(ctrl_id));
  std::vector<int> ids{ctrl_id};
  auto content_ids = encode(content, vocab, strict);
  ids.insert(ids.end(), content_ids.begin(), content_ids.end());
  if (add_eos) ids.push_back(Vocab::EOS);
  return ids;
}

json Vocab::to_json() const {
  json j;
  j["version"] = kVocabVersion;
  j["reserved"] = json::object();
  j["reserved"]["PAD"] = PAD;
  j["reserved"]["BOS"] = BOS;
  j["reserved"]["EOS"] = EOS;
  j["reserved"]["UNK"] = UNK;
  j["reserved"]["CTRL_G"] = CTRL_G;
  j["reserved"]["CTRL_D"] = CTRL_D;
  j["tokens"] = tokens;
  return j;
}

Vocab Vocab::from_json(const json& j) {
  if (j.at("version").get<std::string>() != kVocabVersion)
    throw Error("unsupported vocab version: " +
                j.at("version").get<std::string>());
  Vocab v;
  v.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (v.tokens.size() < kNumReserved)
    throw Error("vocab file too small to hold reserved tokens");
  for (int i = 0; i < kNumReserved; ++i)
    if (v.tokens[i] != kReservedForms[i])
      throw Error("vocab reserved slot " + std::to_string(i) +
                  " corrupted: " + v.tokens[i]);
  for (size_t i = kNumReserved; i < v.tokens.size(); ++i)
    v.index.emplace(v.tokens[i], int(i));
  return v;
}

void Vocab::save(const std::string& path) const {
  write_file(path, to_json().dump(2) + "\n");
}

Vocab Vocab::load_file(const std::string& path) {
  if (!file_exists(path))
    throw MissingArtifact(path, "taskmode train (writes the vocab beside the "
                                "checkpoint)");
  return from_json(json::parse(read_file(path)));
}

}  // namespace taskmode::textcodec
