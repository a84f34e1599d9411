#include "taskmode/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace taskmode::decoder {

using textcodec::Vocab;

ModeDecision decide_from_logits(float logit_g, float logit_d) {
  ModeDecision d;
  d.logit_g = logit_g;
  d.logit_d = logit_d;
  double m = std::max(logit_g, logit_d);
  double eg = std::exp(double(logit_g) - m);
  double ed = std::exp(double(logit_d) - m);
  d.p_g = eg / (eg + ed);
  d.p_d = 1.0 - d.p_g;  // the pair sums to one by construction
  d.chosen = d.p_d >= d.p_g ? Mode::D : Mode::G;  // tie breaks toward D
  return d;
}

ModeDecision select_mode(const seqmodel::NetF& net,
                         const std::vector<int>& prompt_tokens,
                         bool constrain) {
  std::vector<int> seq;
  seq.reserve(prompt_tokens.size() + 1);
  seq.push_back(Vocab::BOS);
  seq.insert(seq.end(), prompt_tokens.begin(), prompt_tokens.end());
  auto logits = net.forward(seq);
  const float* row = logits.data() + (seq.size() - 1) * size_t(net.config().vocab_size);
  ModeDecision d = decide_from_logits(row[Vocab::CTRL_G], row[Vocab::CTRL_D]);
  if (!constrain) {
    const float* top = std::max_element(row, row + net.config().vocab_size);
    d.free_top_token = int(top - row);
  }
  return d;
}

namespace {

bool emittable(int id, int vocab_size) {
  return id < vocab_size && id != Vocab::PAD && id != Vocab::BOS &&
         id != Vocab::UNK && id != Vocab::CTRL_G && id != Vocab::CTRL_D;
}

Generation run_generation(const seqmodel::NetF& net, const Vocab& vocab,
                          const std::vector<int>& prompt_tokens, int ctrl_id,
                          int max_len, const GenStrategy& strategy) {
  if (!strategy.greedy && strategy.temperature <= 0.0)
    throw UsageError("sampling temperature must be positive");
  const int V = net.config().vocab_size;
  const int cap = net.config().max_seq_len;
  Generation out;
  Rng rng(strategy.seed);

  auto session = net.session();
  session.feed(Vocab::BOS);
  for (int t : prompt_tokens) session.feed(t);
  const std::vector<float>* row = &session.feed(ctrl_id);

  for (int i = 0; i < max_len; ++i) {
    int next;
    if (strategy.greedy) {
      next = -1;
      float best = -std::numeric_limits<float>::infinity();
      for (int v = 0; v < V; ++v)
        if (emittable(v, V) && (*row)[v] > best) {
          best = (*row)[v];
          next = v;
        }
    } else {
      // Softmax over the emittable ids at the requested temperature.
      double mx = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < V; ++v)
        if (emittable(v, V)) mx = std::max(mx, double((*row)[v]));
      std::vector<double> p(V, 0.0);
      double z = 0.0;
      for (int v = 0; v < V; ++v)
        if (emittable(v, V)) {
          p[v] = std::exp((double((*row)[v]) - mx) / strategy.temperature);
          z += p[v];
        }
      double u = rng.uniform() * z, acc = 0.0;
      next = Vocab::EOS;
      for (int v = 0; v < V; ++v) {
        if (!emittable(v, V)) continue;
        acc += p[v];
        if (u < acc) {
          next = v;
          break;
        }
      }
    }
    if (next == Vocab::EOS) {
      out.text = textcodec::decode(out.tokens, vocab);
      return out;
    }
    out.tokens.push_back(next);
    if (int(session.length()) >= cap) break;  // context exhausted
    row = &session.feed(next);
  }
  out.truncated = true;
  out.text = textcodec::decode(out.tokens, vocab);
  return out;
}

}  // namespace

Generation generate(const seqmodel::NetF& net, const Vocab& vocab,
                    const std::vector<int>& prompt_tokens,
                    const ModeDecision& decision, int max_len,
                    const GenStrategy& strategy) {
  int ctrl = decision.chosen == Mode::G ? Vocab::CTRL_G : Vocab::CTRL_D;
  return run_generation(net, vocab, prompt_tokens, ctrl, max_len, strategy);
}

Generation generate_forced(const seqmodel::NetF& net, const Vocab& vocab,
                           const std::vector<int>& prompt_tokens, Mode mode,
                           int max_len, const GenStrategy& strategy) {
  int ctrl = mode == Mode::G ? Vocab::CTRL_G : Vocab::CTRL_D;
  return run_generation(net, vocab, prompt_tokens, ctrl, max_len, strategy);
}

std::string parsed_kind_name(ParsedKind k) {
  switch (k) {
    case ParsedKind::response_G: return "response_G";
    case ParsedKind::response_D: return "response_D";
    case ParsedKind::unparseable: return "unparseable";
  }
  throw Error("bad parsed kind");
}

ParsedResponse parse_response(const std::string& text) {
  ParsedResponse out;
  std::string trimmed = trim(text);
  if (trimmed.empty()) return out;  // unparseable

  if (auto diag = teachers::parse_diagnosis(trimmed)) {
    out.kind = ParsedKind::response_D;
    out.diagnosis = std::move(diag);
    return out;
  }

  static const char* kRefusalMarkers[] = {
      "cannot be answered",   "cannot answer",
      "not possible to answer", "prevents a valid answer",
      "mutually contradictory", "physically impossible",
      "never gives",           "is incorrect",
      "none of the options",   "\"validity\": false",
  };
  for (const char* marker : kRefusalMarkers)
    if (contains_ci(trimmed, marker)) {
      out.kind = ParsedKind::response_D;
      out.diagnosis = DiagnosisObject{false, trimmed};
      return out;
    }

  out.kind = ParsedKind::response_G;
  std::string low = lower(trimmed);
  if (low.rfind("answer:", 0) == 0)
    out.answer_text = trim(trimmed.substr(7));
  else
    out.answer_text = trimmed;
  return out;
}

}  // namespace taskmode::decoder
