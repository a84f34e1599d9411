#pragma once

#include <optional>
#include <string>
#include <vector>

#include "taskmode/corpus.hpp"
#include "taskmode/seqmodel.hpp"
#include "taskmode/teachers.hpp"
#include "taskmode/textcodec.hpp"

namespace taskmode::trainer {

using teachers::Mode;

struct DistillInstance {
  std::string question_id;
  Mode mode = Mode::G;
  std::vector<int> prompt_tokens;  // bare natural-prompt rendering, no BOS
  std::vector<int> target_tokens;  // control token, content..., EOS
};

// The two instances distilled from one question, kept together so the
// per-question loss can weight them jointly. A missing side happens only
// when lone instances are kept (teacher failure on one mode).
struct InstancePair {
  std::string question_id;
  std::optional<DistillInstance> g, d;
  bool valid_question = false;
};

struct BuildResult {
  std::vector<InstancePair> pairs;
  size_t skipped_questions = 0;
  size_t lone_instances = 0;
  std::vector<std::string> skip_log;
};

// Builds exactly two instances per question from its teacher responses.
// Questions missing a usable mode are skipped and logged, unless
// keep_lone_instances retains the single side. max_total_len, when nonzero,
// drops questions whose assembled sequence would not fit the model context.
BuildResult build_instances(
    const std::vector<corpus::Question>& questions,
    const std::vector<teachers::TeacherResponse>& responses,
    const textcodec::Vocab& vocab, bool keep_lone_instances = false,
    size_t max_total_len = 0);

struct LossBreakdown {
  double l_ctrl = 0.0;
  double l_content_mean = 0.0;
  size_t n_content = 0;
  Mode mode = Mode::G;
  double total() const { return l_ctrl + l_content_mean; }
};

// First supervised token is the control decision; the content tokens share
// one averaged term. per_token must hold the control loss first.
LossBreakdown loss_mode(const std::vector<double>& per_token, Mode mode);

// Per-question loss: the diagnostic side at full weight plus the generative
// side decayed by alpha.
double loss_question(const LossBreakdown& l_d, const LossBreakdown& l_g,
                     double alpha);

enum class LossVariant { mode_structured, standard_sequence };

std::string loss_variant_name(LossVariant v);
LossVariant loss_variant_from(const std::string& s);

enum class InstanceFilter { both, g_only, d_only };

struct TrainConfig {
  double alpha = 0.6;
  LossVariant variant = LossVariant::mode_structured;
  double lr = 0.05;
  int steps = 600;
  int batch_questions = 8;
  uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 keeps only the final checkpoint
  double momentum = 0.9;
  double grad_clip = 1.0;
  InstanceFilter filter = InstanceFilter::both;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);
};

// Per-step aggregates for the metrics log, separated by mode.
struct StepStats {
  double ctrl_sum_d = 0, ctrl_sum_g = 0;
  double content_sum_d = 0, content_sum_g = 0;
  size_t n_d = 0, n_g = 0;
  double total = 0;  // the optimized batch objective
};

// Accumulates one batch's gradient into grad (which must be zeroed by the
// caller) and returns the batch objective. Exposed for gradient-level
// equivalence checks.
double batch_gradient(const seqmodel::NetF& net, const TrainConfig& cfg,
                      const std::vector<const InstancePair*>& batch,
                      std::vector<float>& grad, StepStats* stats = nullptr);

struct TrainResult {
  std::string checkpoint_path;
  std::string vocab_path;
  std::string metrics_path;
  int steps_run = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Runs the optimization loop and writes checkpoint, vocabulary, and metrics
// CSV into out_dir. Deterministic given the seeds in cfg and mcfg.
TrainResult train(const TrainConfig& cfg, const seqmodel::ModelConfig& mcfg,
                  const std::vector<InstancePair>& pairs,
                  const textcodec::Vocab& vocab, const std::string& out_dir);

}  // namespace taskmode::trainer
