#pragma once

#include <optional>
#include <string>
#include <vector>

#include "taskmode/seqmodel.hpp"
#include "taskmode/teachers.hpp"
#include "taskmode/textcodec.hpp"

namespace taskmode::decoder {

using teachers::DiagnosisObject;
using teachers::Mode;

// Version tag of the response-classification rule set; frozen per report.
inline constexpr const char* kParseRules = "pv1";

struct ModeDecision {
  Mode chosen = Mode::D;
  double p_g = 0.0, p_d = 0.0;  // renormalized over the two control tokens
  float logit_g = 0.0f, logit_d = 0.0f;
  // Argmax over the full vocabulary, recorded when constrain is off.
  std::optional<int> free_top_token;
};

// Decides between the two control tokens from a pair of raw logits.
// Ties break toward D (validate before answering).
ModeDecision decide_from_logits(float logit_g, float logit_d);

// Runs the prompt through the model (BOS-prefixed) and decides the mode from
// the final logit row. With constrain=true only the two control-token logits
// compete; with constrain=false the full-vocabulary argmax is also recorded.
ModeDecision select_mode(const seqmodel::NetF& net,
                         const std::vector<int>& prompt_tokens,
                         bool constrain = true);

struct GenStrategy {
  bool greedy = true;
  uint64_t seed = 0;
  double temperature = 1.0;
};

struct Generation {
  std::string text;
  std::vector<int> tokens;  // content tokens, EOS excluded
  bool truncated = false;   // max_len reached before EOS
};

// Generates content after appending the decided control token to the
// context. Structural tokens (pad/bos/unk and both control tokens) are
// masked out, so only content or EOS can be emitted.
Generation generate(const seqmodel::NetF& net, const textcodec::Vocab& vocab,
                    const std::vector<int>& prompt_tokens,
                    const ModeDecision& decision, int max_len,
                    const GenStrategy& strategy = {});

// Same loop with the control token forced by the caller (self-teaching).
Generation generate_forced(const seqmodel::NetF& net,
                           const textcodec::Vocab& vocab,
                           const std::vector<int>& prompt_tokens, Mode mode,
                           int max_len, const GenStrategy& strategy = {});

enum class ParsedKind { response_G, response_D, unparseable };

std::string parsed_kind_name(ParsedKind k);

struct ParsedResponse {
  ParsedKind kind = ParsedKind::unparseable;
  std::optional<std::string> answer_text;      // present iff response_G
  std::optional<DiagnosisObject> diagnosis;    // present iff response_D
};

// Total, deterministic classification of raw response text (rule set pv1):
// diagnosis JSON or refusal-marked text -> response_D; "Answer:" form or
// substantive prose -> response_G; empty -> unparseable.
ParsedResponse parse_response(const std::string& text);

}  // namespace taskmode::decoder
