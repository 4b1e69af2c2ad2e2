#include <cmath>

#include <gtest/gtest.h>

#include "hlogformer/training.hpp"
#include "test_support.hpp"

using namespace hlog;

namespace {

// Logits [a, 0] with target 1 give NLL log(1 + e^a).
RecordOutputs<double> with_nll(double nll) {
  RecordOutputs<double> o;
  o.logits = Matrix<double>(1, 2, {std::log(std::exp(nll) - 1.0), 0.0});
  o.targets = {1};
  return o;
}

Matrix<double> random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<double> m(n, d);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = standard_normal(rng);
  return m;
}

struct ToyData {
  std::vector<PreparedRecord> train, val;
  EncoderConfig cfg;
};

ToyData toy(std::size_t n = 20) {
  auto corpus = fixtures::corpus_from(fixtures::small_log_lines(n, 1));
  ToyData t;
  t.cfg = fixtures::tiny_config(corpus.vocab.size(), 3);
  const auto split = split_dataset(n, 3);
  for (auto i : split.train) t.train.push_back(prepare_record(corpus.trees[i], corpus.vocab, t.cfg));
  for (auto i : split.val) t.val.push_back(prepare_record(corpus.trees[i], corpus.vocab, t.cfg));
  return t;
}

}  // namespace

TEST(Losses, MlmIsMeanNll) {
  const std::vector<RecordOutputs<double>> outs{with_nll(1.0), with_nll(3.0)};
  EXPECT_NEAR(mlm_loss<double>(outs), 2.0, 1e-12);
  Matrix<double> near_one_hot(1, 4, 0.0);
  near_one_hot(0, 1) = 40;
  RecordOutputs<double> o;
  o.logits = near_one_hot;
  o.targets = {1};
  EXPECT_NEAR(mlm_loss<double>(std::vector{o}), 0.0, 1e-12);
  o.logits = Matrix<double>(1, 8, 0.0);
  EXPECT_NEAR(mlm_loss<double>(std::vector{o}), std::log(8.0), 1e-12);
}

TEST(Losses, VhmExamples) {
  Matrix<double> same(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) same(i, j) = 0.1 * static_cast<double>(j) + 1.0 / 3.0;
  EXPECT_EQ(vhm_loss(BatchSummaries<double>(same)), 0.0);

  Matrix<double> pm(2, 2, {3.0, 4.0, -3.0, -4.0});
  BatchSummaries<double> b(pm);
  EXPECT_NEAR(b.c[0], 0.0, 1e-15);
  EXPECT_NEAR(vhm_loss(b), 5.0, 1e-12);

  EXPECT_EQ(vhm_loss(BatchSummaries<double>(Matrix<double>(1, 3, {1, 2, 3}))), 0.0);
}

TEST(Losses, VhmInvariances) {
  const auto s = random_rows(16, 4, 1);
  const double base = vhm_loss(BatchSummaries<double>(s));
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> shifted = s;
    std::vector<double> t(4);
    for (double& v : t) v = 10 * standard_normal(rng);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 4; ++j) shifted(i, j) += t[j];
    EXPECT_NEAR(vhm_loss(BatchSummaries<double>(shifted)), base, 1e-9);

    // Random orthogonal matrix from Gram-Schmidt.
    auto q = random_rows(4, 4, 100 + trial);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t p = 0; p < r; ++p) {
        double dot = 0;
        for (std::size_t j = 0; j < 4; ++j) dot += q(r, j) * q(p, j);
        for (std::size_t j = 0; j < 4; ++j) q(r, j) -= dot * q(p, j);
      }
      double norm = 0;
      for (std::size_t j = 0; j < 4; ++j) norm += q(r, j) * q(r, j);
      for (std::size_t j = 0; j < 4; ++j) q(r, j) /= std::sqrt(norm);
    }
    EXPECT_NEAR(vhm_loss(BatchSummaries<double>(kernels::matmul(s, q))), base, 1e-9);
  }
}

TEST(Losses, Total) {
  EXPECT_DOUBLE_EQ(total_loss(2.0, 1.0, 0.1), 2.1);
  EXPECT_EQ(total_loss(2.0, 5.0, 0.0), 2.0);
  EXPECT_EQ(total_loss(0.0, 0.0, 0.3), 0.0);
}

TEST(Split, Ratios) {
  auto sizes = [](std::size_t n) {
    const auto s = split_dataset(n, 1);
    return std::vector<std::size_t>{s.train.size(), s.val.size(), s.test.size()};
  };
  EXPECT_EQ(sizes(70), (std::vector<std::size_t>{50, 10, 10}));
  EXPECT_EQ(sizes(7), (std::vector<std::size_t>{5, 1, 1}));
  EXPECT_EQ(sizes(10), (std::vector<std::size_t>{8, 1, 1}));
  EXPECT_THROW(split_dataset(6, 1), Error);

  const auto s = split_dataset(100, 9);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_dataset(100, 9).train, s.train);
}

TEST(Training, ClipGradients) {
  TensorList<double> g{Matrix<double>(1, 2, {3.0, 0.0}), Matrix<double>(1, 1, {4.0})};
  EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
  TensorList<double> h{Matrix<double>(1, 1, {0.5})};
  clip_gradients(h, 1.0);
  EXPECT_EQ(h[0][0], 0.5);
  clip_gradients(g, 0.0);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
}

TEST(Training, HistoryAndDeterminism) {
  const auto d = toy();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.adam.lr = 0.01;
  tc.seed = 5;
  const auto a = train<float>(d.cfg, tc, d.train, d.val);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.history[0].split, "train");
  EXPECT_EQ(a.history[1].split, "val");
  EXPECT_EQ(a.history[3].epoch, 2u);
  EXPECT_FALSE(a.history[0].wallclock.has_value());
  EXPECT_EQ(a.center.cols(), d.cfg.d_model);
  const auto b = train<float>(d.cfg, tc, d.train, d.val);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].mlm, b.history[i].mlm);
    EXPECT_EQ(a.history[i].vhm, b.history[i].vhm);
  }
  EXPECT_EQ(a.stack.tensors, b.stack.tensors);
  EXPECT_GE(a.best_epoch, 1u);
}

TEST(Training, LossDecreasesOnToyCorpus) {
  const auto d = toy(40);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 8;
  tc.adam.lr = 0.02;
  tc.seed = 1;
  const auto r = train<float>(d.cfg, tc, d.train, d.val);
  EXPECT_LT(r.history.back().mlm, r.history[1].mlm);
}

TEST(Training, FlatBaselineUsesSameMaskedTokens) {
  const auto d = toy();
  const auto& rec = d.train[0];
  const auto m = mask_for(rec, 0.3, 2, "train", 0);
  auto stack = init_stack<double>(d.cfg);
  const auto h = run_record(stack, rec, m, RunOptions{Mode::Bidirectional});
  const auto f = run_record(stack, rec, m, RunOptions{Mode::Flat});
  EXPECT_EQ(h.targets, f.targets);
  for (const auto& e : m.entries) {
    std::size_t found = 0;
    for (std::size_t i = 0; i < rec.linear.origins.size(); ++i)
      if (rec.linear.origins[i] == e.origin) {
        ++found;
        EXPECT_EQ(rec.linear.token_ids[i], e.target);
      }
    EXPECT_EQ(found, 1u);
  }
  TrainConfig tc;
  tc.epochs = 1;
  const auto base = train_flat_baseline<float>(d.cfg, tc, 2, d.train, d.val);
  EXPECT_EQ(base.stack.config.blocks, 2u);
}

TEST(Training, ConfigValidation) {
  TrainConfig tc;
  tc.mask_rate = 1.0;
  EXPECT_THROW(tc.validate(), Error);
  tc = TrainConfig{};
  tc.clip_norm = -1;
  EXPECT_THROW(tc.validate(), Error);
  tc = TrainConfig{};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), Error);
}
