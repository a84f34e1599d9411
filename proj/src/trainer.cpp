#include "taskmode/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace taskmode::trainer {

using textcodec::Vocab;

BuildResult build_instances(const std::vector<corpus::Question>& questions,
                            const std::vector<teachers::TeacherResponse>& responses,
                            const Vocab& vocab, bool keep_lone_instances,
                            size_t max_total_len) {
  std::map<std::string, std::map<Mode, const teachers::TeacherResponse*>> by_id;
  for (const auto& r : responses) by_id[r.question_id][r.mode] = &r;

  BuildResult out;
  for (const auto& q : questions) {
    auto it = by_id.find(q.id);
    auto usable = [&](Mode m) -> const teachers::TeacherResponse* {
      if (it == by_id.end()) return nullptr;
      auto mit = it->second.find(m);
      if (mit == it->second.end()) return nullptr;
      const auto* r = mit->second;
      if (r->flag == "skipped" || trim(r->text).empty()) return nullptr;
      return r;
    };
    const auto* rg = usable(Mode::G);
    const auto* rd = usable(Mode::D);

    std::string prompt_text =
        teachers::render_prompt(teachers::PromptStyle::gen_no_hint, q.text);
    InstancePair pair;
    pair.question_id = q.id;
    pair.valid_question = !q.fault.has_value();

    auto assemble = [&](const teachers::TeacherResponse& r,
                        Mode m) -> std::optional<DistillInstance> {
      DistillInstance inst;
      inst.question_id = q.id;
      inst.mode = m;
      try {
        inst.prompt_tokens = textcodec::encode(prompt_text, vocab);
        int ctrl = m == Mode::G ? Vocab::CTRL_G : Vocab::CTRL_D;
        inst.target_tokens = textcodec::assemble_target(ctrl, r.text, vocab);
      } catch (const Error& e) {
        out.skip_log.push_back(q.id + ": " + e.what());
        return std::nullopt;
      }
      if (max_total_len &&
          1 + inst.prompt_tokens.size() + inst.target_tokens.size() >
              max_total_len) {
        out.skip_log.push_back(q.id + ": assembled sequence exceeds " +
                               std::to_string(max_total_len) + " tokens");
        return std::nullopt;
      }
      return inst;
    };
    if (rg) pair.g = assemble(*rg, Mode::G);
    if (rd) pair.d = assemble(*rd, Mode::D);

    if (pair.g && pair.d) {
      out.pairs.push_back(std::move(pair));
    } else if ((pair.g || pair.d) && keep_lone_instances) {
      ++out.lone_instances;
      out.pairs.push_back(std::move(pair));
    } else {
      ++out.skipped_questions;
      if (!rg && !rd)
        out.skip_log.push_back(q.id + ": no usable teacher response");
      else if (!pair.g && !pair.d)
        out.skip_log.push_back(q.id + ": neither instance assembled");
      else
        out.skip_log.push_back(q.id + ": missing " +
                               std::string(pair.g ? "D" : "G") +
                               "-mode response");
    }
  }
  return out;
}

LossBreakdown loss_mode(const std::vector<double>& per_token, Mode mode) {
  if (per_token.size() < 2)
    throw Error("a target must have content: need the control-token loss "
                "plus at least one content loss, got " +
                std::to_string(per_token.size()) + " values");
  LossBreakdown b;
  b.mode = mode;
  b.l_ctrl = per_token.front();
  b.n_content = per_token.size() - 1;
  double sum = 0.0;
  for (size_t i = 1; i < per_token.size(); ++i) sum += per_token[i];
  b.l_content_mean = sum / double(b.n_content);
  return b;
}

double loss_question(const LossBreakdown& l_d, const LossBreakdown& l_g,
                     double alpha) {
  if (l_d.mode != Mode::D || l_g.mode != Mode::G)
    throw Error("loss_question expects a D breakdown then a G breakdown");
  if (alpha < 0.0 || alpha > 1.0)
    throw Error("alpha must lie in [0, 1], got " + std::to_string(alpha));
  return l_d.total() + alpha * l_g.total();
}

std::string loss_variant_name(LossVariant v) {
  return v == LossVariant::mode_structured ? "mode_structured"
                                           : "standard_sequence";
}

LossVariant loss_variant_from(const std::string& s) {
  if (s == "mode_structured") return LossVariant::mode_structured;
  if (s == "standard_sequence") return LossVariant::standard_sequence;
  throw Error("unknown loss variant: " + s);
}

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    throw UsageError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (lr <= 0.0) throw UsageError("learning rate must be positive");
  if (steps < 0) throw UsageError("steps must be nonnegative");
  if (batch_questions < 1) throw UsageError("batch size must be at least 1");
  if (momentum < 0.0 || momentum >= 1.0)
    throw UsageError("momentum must lie in [0, 1)");
  if (grad_clip <= 0.0) throw UsageError("gradient clip must be positive");
}

json TrainConfig::to_json() const {
  json j;
  j["alpha"] = alpha;
  j["variant"] = loss_variant_name(variant);
  j["lr"] = lr;
  j["steps"] = steps;
  j["batch_questions"] = batch_questions;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["momentum"] = momentum;
  j["grad_clip"] = grad_clip;
  j["filter"] = filter == InstanceFilter::both
                    ? "both"
                    : (filter == InstanceFilter::g_only ? "g_only" : "d_only");
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("variant"))
    c.variant = loss_variant_from(j["variant"].get<std::string>());
  c.lr = j.value("lr", c.lr);
  c.steps = j.value("steps", c.steps);
  c.batch_questions = j.value("batch_questions", c.batch_questions);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.momentum = j.value("momentum", c.momentum);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("filter")) {
    std::string f = j["filter"].get<std::string>();
    c.filter = f == "both" ? InstanceFilter::both
                           : (f == "g_only" ? InstanceFilter::g_only
                                            : InstanceFilter::d_only);
  }
  return c;
}

namespace {

// Adds one instance's weighted loss terms to the gradient and returns its
// decomposition. q_weight scales every supervised position; under the
// standard-sequence variant all target positions share one mean instead of
// the control/content split.
LossBreakdown instance_gradient(const seqmodel::NetF& net,
                                const DistillInstance& inst,
                                LossVariant variant, double q_weight,
                                std::vector<float>& grad) {
  const size_t P = inst.prompt_tokens.size();
  const size_t T = inst.target_tokens.size();
  std::vector<int> tokens;
  tokens.reserve(1 + P + T);
  tokens.push_back(Vocab::BOS);
  tokens.insert(tokens.end(), inst.prompt_tokens.begin(),
                inst.prompt_tokens.end());
  tokens.insert(tokens.end(), inst.target_tokens.begin(),
                inst.target_tokens.end());

  std::vector<uint8_t> mask(tokens.size(), 0);
  std::vector<float> weights(tokens.size(), 0.0f);
  const size_t first = 1 + P;  // index of the control token
  const size_t n_content = T - 1;
  for (size_t i = 0; i < T; ++i) {
    mask[first + i] = 1;
    double w;
    if (variant == LossVariant::standard_sequence)
      w = q_weight / double(T);
    else
      w = i == 0 ? q_weight : q_weight / double(n_content);
    weights[first + i] = float(w);
  }

  auto losses = net.forward_backward(tokens, mask, weights, grad);
  std::vector<double> per_token(losses.size());
  for (size_t i = 0; i < losses.size(); ++i) per_token[i] = losses[i].loss;
  return loss_mode(per_token, inst.mode);
}

double record_stats(const LossBreakdown& b, LossVariant variant,
                    StepStats* stats) {
  if (stats) {
    if (b.mode == Mode::D) {
      stats->ctrl_sum_d += b.l_ctrl;
      stats->content_sum_d += b.l_content_mean;
      ++stats->n_d;
    } else {
      stats->ctrl_sum_g += b.l_ctrl;
      stats->content_sum_g += b.l_content_mean;
      ++stats->n_g;
    }
  }
  if (variant == LossVariant::standard_sequence) {
    // Objective actually optimized: one mean over all target tokens.
    double n = double(b.n_content) + 1.0;
    return (b.l_ctrl + b.l_content_mean * double(b.n_content)) / n;
  }
  return b.total();
}

}  // namespace

double batch_gradient(const seqmodel::NetF& net, const TrainConfig& cfg,
                      const std::vector<const InstancePair*>& batch,
                      std::vector<float>& grad, StepStats* stats) {
  if (batch.empty()) throw Error("empty batch");
  double objective = 0.0;
  const double inv_b = 1.0 / double(batch.size());

  for (const InstancePair* pair : batch) {
    std::optional<DistillInstance> g = pair->g, d = pair->d;
    if (cfg.filter == InstanceFilter::g_only) d.reset();
    if (cfg.filter == InstanceFilter::d_only) g.reset();
    if (!g && !d) continue;

    double w_g = 1.0, w_d = 1.0;
    if (cfg.variant == LossVariant::mode_structured) {
      // The mode matching the question's ground truth anchors the pair at
      // full weight; the opposite mode is decayed by alpha. On an all-faulty
      // corpus this is exactly the diagnostic-anchored per-question loss.
      w_g = pair->valid_question ? 1.0 : cfg.alpha;
      w_d = pair->valid_question ? cfg.alpha : 1.0;
    }
    if (g && !d) w_g = 1.0;  // lone instance trains at full weight
    if (d && !g) w_d = 1.0;

    if (g) {
      auto b = instance_gradient(net, *g, cfg.variant, w_g * inv_b, grad);
      objective += w_g * inv_b * record_stats(b, cfg.variant, stats);
    }
    if (d) {
      auto b = instance_gradient(net, *d, cfg.variant, w_d * inv_b, grad);
      objective += w_d * inv_b * record_stats(b, cfg.variant, stats);
    }
  }
  if (stats) stats->total = objective;
  return objective;
}

TrainResult train(const TrainConfig& cfg, const seqmodel::ModelConfig& mcfg,
                  const std::vector<InstancePair>& pairs, const Vocab& vocab,
                  const std::string& out_dir) {
  cfg.validate();
  mcfg.validate();
  if (pairs.empty()) throw Error("train requires a non-empty instance set");
  ensure_dir(out_dir);

  seqmodel::NetF net(mcfg);
  TrainResult result;
  result.vocab_path = out_dir + "/vocab.json";
  vocab.save(result.vocab_path);
  result.checkpoint_path = out_dir + "/model.ckpt";
  result.metrics_path = out_dir + "/metrics.csv";

  std::ofstream metrics(result.metrics_path);
  metrics << "step,l_ctrl_d,l_ctrl_g,l_content_d,l_content_g,total\n";

  if (cfg.steps == 0) {
    seqmodel::save_checkpoint(net, result.checkpoint_path);
    return result;
  }

  Rng rng(cfg.seed);
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t cursor = 0;

  std::vector<float> grad(net.num_params(), 0.0f);
  std::vector<float> velocity(net.num_params(), 0.0f);
  double initial = 0.0;
  int high_loss_streak = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<const InstancePair*> batch;
    for (int b = 0; b < cfg.batch_questions; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&pairs[order[cursor++]]);
    }

    std::fill(grad.begin(), grad.end(), 0.0f);
    StepStats stats;
    double objective = batch_gradient(net, cfg, batch, grad, &stats);
    if (step == 1) initial = objective;

    // Divergence guard: sustained blow-up aborts with diagnostics.
    if (objective > 10.0 * initial && initial > 0.0) {
      if (++high_loss_streak >= 100)
        throw Error("training diverged: loss " + std::to_string(objective) +
                    " exceeded 10x the initial loss " +
                    std::to_string(initial) + " for 100 consecutive steps " +
                    "(step " + std::to_string(step) + ")");
    } else {
      high_loss_streak = 0;
    }

    // Global-norm clip, then momentum update.
    double norm_sq = 0.0;
    for (float gv : grad) norm_sq += double(gv) * double(gv);
    double norm = std::sqrt(norm_sq);
    float scale = norm > cfg.grad_clip ? float(cfg.grad_clip / norm) : 1.0f;
    float* g = grad.data();
    float* v = velocity.data();
    float* p = net.params().data();
    const float mom = float(cfg.momentum), lr = float(cfg.lr);
    for (size_t i = 0; i < grad.size(); ++i) {
      v[i] = mom * v[i] + scale * g[i];
      p[i] -= lr * v[i];
    }

    auto col = [](double sum, size_t n) {
      return n ? std::to_string(sum / double(n)) : std::string();
    };
    metrics << step << ',' << col(stats.ctrl_sum_d, stats.n_d) << ','
            << col(stats.ctrl_sum_g, stats.n_g) << ','
            << col(stats.content_sum_d, stats.n_d) << ','
            << col(stats.content_sum_g, stats.n_g) << ',' << objective
            << '\n';

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "/model-step-%06d.ckpt", step);
      seqmodel::save_checkpoint(net, out_dir + name);
    }
    result.steps_run = step;
    result.final_loss = objective;
  }
  result.initial_loss = initial;
  metrics.flush();
  seqmodel::save_checkpoint(net, result.checkpoint_path);
  return result;
}

}  // namespace taskmode::trainer
