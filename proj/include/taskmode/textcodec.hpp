#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "taskmode/corpus.hpp"
#include "taskmode/util.hpp"

namespace taskmode::textcodec {

// Word-level lossless codec. Text splits into word runs ([A-Za-z0-9_]+),
// single punctuation characters, and explicit single-space tokens, so
// decoding is plain concatenation and every string round-trips exactly.
//
// The two mode-control ids can never be produced by encoding ordinary text:
// a literal "[G]" tokenizes as "[", "G", "]". They enter sequences only
// through assemble_target.

struct Vocab {
  static constexpr int PAD = 0;
  static constexpr int BOS = 1;
  static constexpr int EOS = 2;
  static constexpr int UNK = 3;
  static constexpr int CTRL_G = 4;
  static constexpr int CTRL_D = 5;
  static constexpr int kNumReserved = 6;

  // index == id; the first kNumReserved entries are display forms.
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;  // text tokens only

  int size() const { return int(tokens.size()); }
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }

  json to_json() const;
  static Vocab from_json(const json& j);
  void save(const std::string& path) const;
  static Vocab load_file(const std::string& path);
};

// Lossless surface split; concatenating the pieces restores the input.
std::vector<std::string> split_tokens(const std::string& s);

// Frequency pass over question texts, gold answers, and reason tags, seeded
// with the fixed protocol lexicon (prompt/response scaffolding words), capped
// at max_size. Deterministic given corpus order.
Vocab build_vocab(const corpus::Corpus& corpus, size_t max_size);

// strict: unknown word -> error naming the word. Non-strict: UNK (which
// breaks round-trip; documented exemption).
std::vector<int> encode(const std::string& s, const Vocab& vocab,
                        bool strict = true);
std::string decode(const std::vector<int>& ids, const Vocab& vocab);

// The only way to put a control id into a sequence: [ctrl] + content
// (+ EOS). ctrl must be CTRL_G or CTRL_D.
std::vector<int> assemble_target(int ctrl_id, const std::string& content,
                                 const Vocab& vocab, bool strict = true,
                                 bool add_eos = true);

}  // namespace taskmode::textcodec
