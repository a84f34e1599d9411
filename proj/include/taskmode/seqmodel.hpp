#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taskmode/util.hpp"

namespace taskmode::seqmodel {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int max_seq_len = 256;
  uint64_t seed = 0;

  void validate() const;
  json to_json() const;
  static ModelConfig from_json(const json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  size_t offset = 0;
  std::vector<int> shape;
  size_t count = 0;
};

struct PositionLoss {
  int pos = 0;       // index into the token sequence
  double loss = 0.0; // cross-entropy of predicting tokens[pos]
};

// Causal decoder-only transformer: learned token + position embeddings,
// pre-norm residual blocks (attention, then a GELU feed-forward of width
// 4*d_model), final layer norm, linear head. Parameters live in one flat
// vector described by tensor_specs(), so gradient checks can address single
// coordinates and checkpoints can dump tensors directly.
//
// The scalar type is a template parameter: the product path runs float;
// numerical tests can instantiate double where finite differences need the
// headroom.
template <typename S>
class Net {
 public:
  explicit Net(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<S>& params() { return params_; }
  const std::vector<S>& params() const { return params_; }
  const std::vector<TensorSpec>& tensor_specs() const { return specs_; }
  size_t num_params() const { return params_.size(); }

  // Full-sequence logits, row-major [len(tokens) x vocab_size].
  std::vector<S> forward(const std::vector<int>& tokens) const;

  // Per-position cross-entropy of predicting tokens[p] from tokens[0..p-1]
  // for every masked position p, in position order. No aggregation.
  std::vector<PositionLoss> token_losses(
      const std::vector<int>& tokens,
      const std::vector<uint8_t>& target_mask) const;

  // Same losses; additionally accumulates
  //   d( sum_p pos_weight[p] * CE_p ) / d(params)
  // into grad, which must have num_params() entries. pos_weight is read only
  // at masked positions.
  std::vector<PositionLoss> forward_backward(
      const std::vector<int>& tokens, const std::vector<uint8_t>& target_mask,
      const std::vector<S>& pos_weight, std::vector<S>& grad) const;

  // Incremental decoding with cached attention state. feed returns the
  // logits row for the token just fed; its argmax/sample is the candidate
  // next token.
  class Session {
   public:
    const std::vector<S>& feed(int token);
    int length() const { return pos_; }

   private:
    friend class Net;
    explicit Session(const Net& net);
    const Net* net_;
    int pos_ = 0;
    std::vector<S> k_cache_, v_cache_;  // [n_layers * max_seq_len * d_model]
    std::vector<S> x_, logits_;
    // scratch reused across feeds
    std::vector<S> a_, qrow_, ctx_, attn_, b_, h1_, g_, ff_, y_, probs_;
  };
  Session session() const { return Session(*this); }

 private:
  struct LayerOffsets {
    size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    size_t ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct Cache;

  void run_forward(const std::vector<int>& tokens, Cache& c) const;
  void attend_row(int layer, int t, const S* k_all, const S* v_all,
                  const S* q_row, S* probs_row, S* ctx_row) const;

  ModelConfig cfg_;
  int ffn_dim_ = 0;
  std::vector<S> params_;
  std::vector<TensorSpec> specs_;
  size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, head_w_ = 0,
         head_b_ = 0;
  std::vector<LayerOffsets> layers_;
};

using NetF = Net<float>;
using NetD = Net<double>;

// sum_p weight[p] * CE_p over masked positions; the scalar objective the
// trainer optimizes and finite-difference checks probe.
template <typename S>
double weighted_loss(const Net<S>& net, const std::vector<int>& tokens,
                     const std::vector<uint8_t>& target_mask,
                     const std::vector<S>& pos_weight);

// Versioned binary checkpoint: config JSON + shape manifest + raw
// little-endian scalar data. Round-trips bit-exactly.
void save_checkpoint(const NetF& net, const std::string& path);
NetF load_checkpoint(const std::string& path);

}  // namespace taskmode::seqmodel
