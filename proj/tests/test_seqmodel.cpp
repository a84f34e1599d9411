#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "taskmode/seqmodel.hpp"

using namespace taskmode;
using namespace taskmode::seqmodel;

namespace {

ModelConfig tiny_config(int vocab = 20, uint64_t seed = 7) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.max_seq_len = 32;
  cfg.seed = seed;
  return cfg;
}

std::vector<int> random_tokens(Rng& rng, int len, int vocab) {
  std::vector<int> t(len);
  for (int& x : t) x = int(rng.below(vocab));
  return t;
}

template <typename S>
void zero_tensor(Net<S>& net, const std::string& name) {
  for (const auto& spec : net.tensor_specs())
    if (spec.name == name)
      std::fill_n(net.params().begin() + spec.offset, spec.count, S(0));
}

template <typename S>
double fd_gradient(Net<S>& net, const std::vector<int>& tokens,
                   const std::vector<uint8_t>& mask,
                   const std::vector<S>& weights, size_t idx, double h) {
  S saved = net.params()[idx];
  net.params()[idx] = saved + S(h);
  double lp = weighted_loss(net, tokens, mask, weights);
  net.params()[idx] = saved - S(h);
  double lm = weighted_loss(net, tokens, mask, weights);
  net.params()[idx] = saved;
  return (lp - lm) / (2.0 * h);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(ModelConfig::from_json(tiny_config().to_json()) == tiny_config());
}

TEST_CASE("single token yields one logit row of vocab width") {
  NetF net(tiny_config(12));
  auto logits = net.forward({1});
  CHECK(logits.size() == 12);
}

TEST_CASE("softmax of every logit row sums to one") {
  NetF net(tiny_config(24));
  Rng rng(3);
  auto tokens = random_tokens(rng, 16, 24);
  auto logits = net.forward(tokens);
  for (int t = 0; t < 16; ++t) {
    const float* row = logits.data() + size_t(t) * 24;
    float mx = *std::max_element(row, row + 24);
    double sum = 0;
    for (int v = 0; v < 24; ++v) sum += std::exp(double(row[v] - mx));
    double total = 0;
    for (int v = 0; v < 24; ++v)
      total += std::exp(double(row[v] - mx)) / sum;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("forward rejects bad inputs with informative lengths") {
  NetF net(tiny_config(10));
  CHECK_THROWS_AS(net.forward({}), Error);
  CHECK_THROWS_AS(net.forward({11}), Error);
  std::vector<int> too_long(33, 1);
  try {
    net.forward(too_long);
    FAIL("expected overlong rejection");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("33") != std::string::npos);
    CHECK(msg.find("32") != std::string::npos);
  }
}

TEST_CASE("causality: later tokens never affect earlier logits") {
  NetF net(tiny_config(30, 11));
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto tokens = random_tokens(rng, 14, 30);
    auto base = net.forward(tokens);
    for (size_t j = 1; j < tokens.size(); ++j) {
      auto perturbed = tokens;
      perturbed[j] = (perturbed[j] + 1 + int(rng.below(28))) % 30;
      auto got = net.forward(perturbed);
      // rows 0..j-1 must be bit-identical
      CHECK(std::memcmp(base.data(), got.data(),
                        sizeof(float) * j * 30) == 0);
    }
  }
}

TEST_CASE("uniform logits give per-token loss ln(vocab)") {
  NetF net(tiny_config(24));
  zero_tensor(net, "head.w");
  zero_tensor(net, "head.b");
  Rng rng(9);
  auto tokens = random_tokens(rng, 10, 24);
  std::vector<uint8_t> mask(10, 0);
  mask[3] = mask[7] = 1;
  auto losses = net.token_losses(tokens, mask);
  REQUIRE(losses.size() == 2);
  for (const auto& pl : losses)
    CHECK(pl.loss == doctest::Approx(std::log(24.0)).epsilon(1e-6));
}

TEST_CASE("a model that can only emit its single token has zero loss") {
  ModelConfig cfg = tiny_config(1);
  NetF net(cfg);
  std::vector<int> tokens(6, 0);
  std::vector<uint8_t> mask(6, 1);
  mask[0] = 0;
  for (const auto& pl : net.token_losses(tokens, mask)) CHECK(pl.loss == 0.0);
}

TEST_CASE("extending the mask to prompt positions leaves response losses") {
  NetF net(tiny_config(24, 3));
  Rng rng(13);
  auto tokens = random_tokens(rng, 12, 24);
  std::vector<uint8_t> response_only(12, 0);
  for (int p = 6; p < 12; ++p) response_only[p] = 1;
  std::vector<uint8_t> everything(12, 1);
  everything[0] = 0;
  auto a = net.token_losses(tokens, response_only);
  auto b = net.token_losses(tokens, everything);
  REQUIRE(a.size() == 6);
  REQUIRE(b.size() == 11);
  for (const auto& pa : a) {
    bool found = false;
    for (const auto& pb : b)
      if (pb.pos == pa.pos) {
        CHECK(pb.loss == pa.loss);  // identical, not merely close
        found = true;
      }
    CHECK(found);
  }
}

TEST_CASE("mask validation") {
  NetF net(tiny_config(10));
  std::vector<int> tokens{1, 2, 3};
  CHECK_THROWS_AS(net.token_losses(tokens, {0, 0, 0}), Error);
  CHECK_THROWS_AS(net.token_losses(tokens, {1, 0, 0}), Error);
  CHECK_THROWS_AS(net.token_losses(tokens, {0, 1}), Error);
}

TEST_CASE("zero position weights give exactly zero gradients") {
  NetF net(tiny_config(16, 21));
  Rng rng(2);
  auto tokens = random_tokens(rng, 10, 16);
  std::vector<uint8_t> mask(10, 0);
  for (int p = 4; p < 10; ++p) mask[p] = 1;
  std::vector<float> weights(10, 0.0f);
  std::vector<float> grad(net.num_params(), 0.0f);
  auto losses = net.forward_backward(tokens, mask, weights, grad);
  CHECK(losses.size() == 6);
  for (float g : grad) CHECK(g == 0.0f);
}

TEST_CASE("analytic gradients match central finite differences") {
  NetD net(tiny_config(20, 17));
  Rng rng(31);
  auto tokens = random_tokens(rng, 12, 20);
  std::vector<uint8_t> mask(12, 0);
  std::vector<double> weights(12, 0.0);
  for (int p = 5; p < 12; ++p) {
    mask[p] = 1;
    weights[p] = (p % 2 == 0) ? 1.0 : 0.5;
  }
  std::vector<double> grad(net.num_params(), 0.0);
  net.forward_backward(tokens, mask, weights, grad);

  const double h = 1e-4;
  for (int k = 0; k < 20; ++k) {
    size_t idx = rng.below(net.num_params());
    double fd = fd_gradient(net, tokens, mask, weights, idx, h);
    double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-8});
    CHECK(std::abs(fd - grad[idx]) / denom < 1e-4);
  }
}

TEST_CASE("initialization is deterministic per seed") {
  NetF a(tiny_config(20, 5)), b(tiny_config(20, 5)), c(tiny_config(20, 6));
  CHECK(a.params() == b.params());
  CHECK(a.params() != c.params());
}

TEST_CASE("incremental decode matches full forward") {
  NetF net(tiny_config(28, 41));
  Rng rng(8);
  auto tokens = random_tokens(rng, 18, 28);
  auto full = net.forward(tokens);
  auto session = net.session();
  for (size_t t = 0; t < tokens.size(); ++t) {
    const auto& row = session.feed(tokens[t]);
    REQUIRE(row.size() == 28);
    for (int v = 0; v < 28; ++v)
      CHECK(row[v] == full[t * 28 + v]);  // same kernels, same bits
  }
  CHECK(session.length() == 18);
}

TEST_CASE("decode session rejects feeding past max_seq_len") {
  ModelConfig cfg = tiny_config(8);
  cfg.max_seq_len = 4;
  NetF net(cfg);
  auto s = net.session();
  for (int i = 0; i < 4; ++i) s.feed(1);
  CHECK_THROWS_AS(s.feed(1), Error);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  auto dir = std::filesystem::temp_directory_path() / "taskmode_seq_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "model.ckpt").string();

  NetF net(tiny_config(26, 99));
  // Nudge params so we are not round-tripping a fresh init.
  net.params()[0] = 0.123456f;
  save_checkpoint(net, path);
  NetF back = load_checkpoint(path);
  CHECK(back.config() == net.config());
  REQUIRE(back.num_params() == net.num_params());
  CHECK(std::memcmp(back.params().data(), net.params().data(),
                    net.num_params() * sizeof(float)) == 0);

  Rng rng(1);
  auto tokens = random_tokens(rng, 9, 26);
  auto a = net.forward(tokens);
  auto b = back.forward(tokens);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);

  // Corruption is detected.
  std::string raw = read_file(path);
  raw[0] = 'X';
  write_file(path, raw);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  write_file(path, read_file(path).substr(0, 40));
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing checkpoint names the producing command") {
  try {
    load_checkpoint("/nonexistent/model.ckpt");
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(std::string(e.what()).find("train") != std::string::npos);
  }
}
