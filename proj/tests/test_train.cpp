#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "synres/errors.hpp"
#include "synres/train.hpp"

using namespace synres;
using synres::testing::random_tensor;

namespace {

ModelConfig tiny_model(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 16;
  c.max_seq_len = 16;
  c.sigma_init = 0.3;
  return c;
}

TaskSpec tiny_copy() {
  TaskSpec s;
  s.kind = TaskKind::copy;
  s.seq_len = 10;
  s.samples = 48;
  s.val_samples = 16;
  s.vocab_size = 16;
  s.value_tokens = 4;
  return s;
}

template <class T>
double synaptic_sum(const Params<T>& p) {
  double s = 0;
  for (const auto& l : p.layers) {
    for (T v : l.ws.values()) s += double(v) * double(v);
  }
  return s;
}

template <class T>
std::vector<Tensor2<T>> flatten(const Params<T>& p) {
  std::vector<Tensor2<T>> out;
  p.for_each([&](const std::string&, const Tensor2<T>& t) { out.push_back(t); });
  return out;
}

template <class T>
bool params_bitwise_equal(const Params<T>& a, const Params<T>& b) {
  const auto fa = flatten(a), fb = flatten(b);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (!bitwise_equal(fa[i], fb[i])) return false;
  }
  return fa.size() == fb.size();
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.lr_decay = 1.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr = 1e-7;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_EQ(TrainConfig{}.threshold_for(64), 96.0);
}

TEST(Loss, Examples) {
  Graph<double> g;
  auto logits = g.constant(random_tensor<double>(3, 5, 1));
  std::vector<std::int32_t> targets{1, 4, 0};
  std::vector<std::uint8_t> mask{1, 1, 1};
  std::vector<Var<double>> ws{g.constant(Tensor2<double>::identity(2)), g.constant(Tensor2<double>::identity(2))};

  auto l0 = loss<double>(logits, targets, mask, ws, 0.0);
  EXPECT_EQ(l0.total.value()(0, 0), l0.ce.value()(0, 0));
  auto l1 = loss<double>(logits, targets, mask, ws, 0.1);
  EXPECT_NEAR(l1.reg.value()(0, 0), 0.4, 1e-15);

  std::vector<Var<double>> rnd{g.constant(random_tensor<double>(4, 4, 2)), g.constant(random_tensor<double>(4, 4, 3))};
  double frob = 0;
  for (auto& w : rnd) {
    for (double v : w.value().values()) frob += v * v;
  }
  auto a = loss<double>(logits, targets, mask, rnd, 1e-3);
  auto b = loss<double>(logits, targets, mask, rnd, 0.0);
  EXPECT_NEAR(a.total.value()(0, 0) - b.total.value()(0, 0), 1e-3 * frob, 1e-6);
}

TEST(SgdStep, Examples) {
  ModelConfig c = tiny_model(16);
  auto p = init_params<double>(c, Rng(1));
  const auto before = p;

  auto grads = zero_params<double>(c);
  sgd_step(p, grads, 0.1, std::nullopt);
  EXPECT_TRUE(params_bitwise_equal(p, before));

  grads.for_each([](const std::string&, Tensor2<double>& t) { t.fill(1.0); });
  sgd_step(p, grads, 0.0, std::nullopt);
  EXPECT_TRUE(params_bitwise_equal(p, before));

  auto q = zero_params<double>(c);
  auto gq = zero_params<double>(c);
  q.layers[0].ws(0, 0) = 1.0;
  gq.layers[0].ws(0, 0) = 2.0;
  sgd_step(q, gq, 0.1, std::nullopt);
  EXPECT_DOUBLE_EQ(q.layers[0].ws(0, 0), 0.8);
}

TEST(SgdStep, ClipAndNonFinite) {
  ModelConfig c = tiny_model(16);
  auto p = zero_params<double>(c);
  auto g = zero_params<double>(c);
  g.tok_emb(0, 0) = 3.0;
  g.unembed(0, 0) = 4.0;  // global norm 5
  sgd_step(p, g, 1.0, 1.0);
  EXPECT_NEAR(p.tok_emb(0, 0), -0.6, 1e-15);
  EXPECT_NEAR(p.unembed(0, 0), -0.8, 1e-15);

  g.layers[1].w2(0, 0) = std::nan("");
  try {
    sgd_step(p, g, 1.0, std::nullopt);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer1.w2"), std::string::npos) << e.what();
  }
}

TEST(SgdStep, PureRegularizerContraction) {
  // With only the lambda term, W <- W - eta * 2 lambda W scales W by (1 - 2 eta lambda).
  ModelConfig c = tiny_model(16);
  auto p = init_params<double>(c, Rng(3));
  const double eta = 0.05, lambda = 0.5;
  for (int step = 0; step < 5; ++step) {
    const double before = std::sqrt(synaptic_sum(p));
    Graph<double> g;
    auto vars = bind(g, p, true);
    Var<double> reg = frobenius_sq(vars.layers[0].ws);
    for (std::size_t l = 1; l < vars.layers.size(); ++l) reg = add(reg, frobenius_sq(vars.layers[l].ws));
    g.backward(scale(reg, lambda));
    auto grads = zero_params<double>(c);
    for (std::size_t l = 0; l < vars.layers.size(); ++l) grads.layers[l].ws = g.grad(vars.layers[l].ws);
    sgd_step(p, grads, eta, std::nullopt);
    EXPECT_NEAR(std::sqrt(synaptic_sum(p)) / before, 1.0 - 2.0 * eta * lambda, 1e-12);
  }
}

TEST(LrDecay, Rule) {
  TrainConfig t;
  t.ppl_threshold = 40.0;
  t.lr_decay = 0.5;
  auto d = lr_decay_check(50.0, 1e-3, t, 64);
  EXPECT_TRUE(d.triggered);
  EXPECT_EQ(d.lr, 5e-4);

  d = lr_decay_check(30.0, 1e-3, t, 64);
  EXPECT_FALSE(d.triggered);
  EXPECT_EQ(d.lr, 1e-3);

  d = lr_decay_check(40.0, 1e-3, t, 64);  // equal is not above
  EXPECT_FALSE(d.triggered);

  double lr = 1e-3;
  for (int i = 0; i < 3; ++i) lr = lr_decay_check(50.0, lr, t, 64).lr;
  EXPECT_EQ(lr, 1.25e-4);

  t.min_lr = 2e-4;
  lr = 1e-3;
  for (int i = 0; i < 10; ++i) {
    lr = lr_decay_check(50.0, lr, t, 64).lr;
    EXPECT_GE(lr, 2e-4);
  }
  EXPECT_EQ(lr, 2e-4);

  TrainConfig auto_tau;  // 1.5 x V
  EXPECT_TRUE(lr_decay_check(97.0, 1e-3, auto_tau, 64).triggered);
  EXPECT_FALSE(lr_decay_check(96.0, 1e-3, auto_tau, 64).triggered);
}

TEST(TrainEpoch, ZeroLearningRateLeavesParams) {
  const auto spec = tiny_copy();
  const auto c = tiny_model(spec.vocab_size);
  const auto data = make_datasets(spec);
  auto p = init_params<float>(c, Rng(1));
  const auto before = p;
  Rng r(2);
  const auto stream = batches(data.train.data, 8, r, true);
  TrainConfig t;
  const auto rep = train_epoch(c, p, std::span<const Batch>(stream), t, 0.0, GateMode::learned, 0);
  EXPECT_TRUE(params_bitwise_equal(p, before));
  EXPECT_EQ(rep.steps, stream.size());
}

TEST(TrainEpoch, ReplayIsBitwiseDeterministic) {
  const auto spec = tiny_copy();
  const auto c = tiny_model(spec.vocab_size);
  const auto data = make_datasets(spec);
  Rng r(2);
  const auto stream = batches(data.train.data, 48, r, false);
  TrainConfig t;
  auto run = [&] {
    auto p = init_params<float>(c, Rng(1));
    std::vector<double> losses;
    for (std::size_t e = 0; e < 2; ++e) {
      losses.push_back(train_epoch(c, p, std::span<const Batch>(stream), t, 0.5, GateMode::learned, e).train_loss);
    }
    return std::make_pair(losses, p);
  };
  auto [la, pa] = run();
  auto [lb, pb] = run();
  EXPECT_EQ(la, lb);
  EXPECT_NE(la[0], la[1]);
  EXPECT_TRUE(params_bitwise_equal(pa, pb));
}

TEST(TrainStep, DecompositionAgainstIndependentRegularizer) {
  const auto spec = tiny_copy();
  const auto c = tiny_model(spec.vocab_size);
  const auto data = make_datasets(spec);
  TrainConfig t;
  t.reg_weight = 1e-2;
  auto p = init_params<double>(c, Rng(4));
  Rng r(5);
  for (const auto& b : batches(data.train.data, 8, r, true)) {
    const double expected_reg = t.reg_weight * synaptic_sum(p);
    const auto rec = train_step(c, p, b, t, 0.3, GateMode::learned);
    EXPECT_NEAR(rec.reg, expected_reg, 1e-12 * std::max(1.0, expected_reg));
    EXPECT_NEAR(rec.total, rec.ce + rec.reg, 1e-12 * rec.total);
  }
}

TEST(TrainEpoch, NumericErrorNamesBatch) {
  const auto spec = tiny_copy();
  const auto c = tiny_model(spec.vocab_size);
  const auto data = make_datasets(spec);
  auto p = init_params<float>(c, Rng(1));
  p.unembed(0, 0) = std::numeric_limits<float>::infinity();
  Rng r(2);
  const auto stream = batches(data.train.data, 8, r, false);
  try {
    train_epoch(c, p, std::span<const Batch>(stream), TrainConfig{}, 0.1, GateMode::learned, 3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 3, batch 0"), std::string::npos) << e.what();
  }
}

TEST(RunTraining, HistoryAndMonotoneLr) {
  const auto spec = tiny_copy();
  const auto c = tiny_model(spec.vocab_size);
  const auto data = make_datasets(spec);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 8;
  t.lr = 0.2;
  t.ppl_threshold = 1.0;  // always triggers
  std::size_t epoch_calls = 0;
  TrainingSinks<float> sinks;
  sinks.on_epoch = [&](const EpochReport&, const Params<float>&) { ++epoch_calls; };
  const auto res = run_training<float>(c, t, data.train, data.validation, sinks);
  ASSERT_EQ(res.history.size(), 3u);
  EXPECT_EQ(epoch_calls, 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(res.history[e].epoch, e);
    EXPECT_TRUE(res.history[e].decay_triggered);
    EXPECT_NEAR(res.history[e].train_loss, res.history[e].ce + res.history[e].reg, 1e-5);
    if (e) EXPECT_LT(res.history[e].lr, res.history[e - 1].lr);
  }
  EXPECT_DOUBLE_EQ(res.history[2].lr, 0.05);
}

TEST(RunTraining, DisabledGateFreezesSynapticWeights) {
  const auto spec = tiny_copy();
  auto c = tiny_model(spec.vocab_size);
  c.gate_mode = GateMode::disabled;
  const auto data = make_datasets(spec);
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.lr = 0.5;
  t.reg_weight = 0.1;
  const auto init = init_params<float>(c, Rng(t.seed).split(0));
  const auto res = run_training<float>(c, t, data.train, data.validation);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    EXPECT_TRUE(bitwise_equal(res.params.layers[l].ws, init.layers[l].ws));
  }
  EXPECT_FALSE(bitwise_equal(res.params.layers[0].wq, init.layers[0].wq));
  const double frozen_reg = t.reg_weight * synaptic_sum(init);
  for (const auto& rep : res.history) EXPECT_NEAR(rep.reg, frozen_reg, 1e-6 * frozen_reg);
}

TEST(RunTraining, CopyTaskBeatsUniformAfterOneEpoch) {
  TaskSpec spec;
  spec.kind = TaskKind::copy;
  spec.seq_len = 32;
  spec.samples = 1024;
  spec.val_samples = 64;
  ModelConfig c;
  c.d_model = 64;
  c.n_heads = 4;
  c.n_layers = 2;
  c.d_ff = 256;
  c.max_seq_len = 32;
  TrainConfig t;
  t.lr = 1.0;
  t.grad_clip = 1.0;
  t.batch_size = 32;
  const auto data = make_datasets(spec);
  const auto res = run_training<float>(c, t, data.train, data.validation);
  EXPECT_LT(res.history[0].ce, std::log(64.0));
}
