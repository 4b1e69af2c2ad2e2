#include <gtest/gtest.h>

#include "hlogformer/training.hpp"
#include "test_support.hpp"

using namespace hlog;

namespace {

struct Fixture {
  LogTree tree;
  Vocab vocab;
  EncoderConfig cfg;
  PreparedRecord rec;
  EncoderStack<double> stack;
};

Fixture make(const std::string& json, std::size_t k = 3) {
  Fixture f;
  f.tree = parse_record(json, "r");
  f.vocab = build_vocab(std::vector<std::string>{record_text(f.tree)}, 1);
  f.cfg = fixtures::tiny_config(f.vocab.size(), 7);
  f.cfg.summary_slots = k;
  f.cfg.window = 2 * k + 16;
  f.rec = prepare_record(f.tree, f.vocab, f.cfg);
  f.stack = init_stack<double>(f.cfg);
  // Larger weights than the default init so the tests see real mixing.
  Rng rng(3);
  for (auto& t : f.stack.tensors)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += 0.2 * standard_normal(rng);
  return f;
}

const char* kTwoLevel = R"({"a":1,"b":{"c":2,"d":3}})";

}  // namespace

TEST(Hierarchy, StepShapes) {
  EncoderConfig c = fixtures::tiny_config(20);
  c.summary_slots = 10;
  c.window = 32;
  const auto s = init_stack<double>(c);
  const std::vector<int> seg{4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(detail::window_input(s, &s.global(kSigmaInit), seg).rows(), 27u);
  const auto out = step(s, init_summary(s), seg);
  EXPECT_EQ(out.z.rows(), 7u);
  EXPECT_EQ(out.z.cols(), 8u);
  EXPECT_EQ(out.sigma_next.slots.rows(), 10u);
  EXPECT_EQ(init_summary(s).slots, s.global(kSigmaInit));
}

TEST(Hierarchy, ForwardPassChainsSummaries) {
  const auto f = make(kTwoLevel);
  ASSERT_EQ(f.rec.plan.steps.size(), 2u);
  const auto pass = forward_pass(f.stack, f.rec.plan);
  const auto s0 = step(f.stack, init_summary(f.stack), f.rec.plan.steps[0].token_ids);
  const auto s1 = step(f.stack, s0.sigma_next, f.rec.plan.steps[1].token_ids);
  EXPECT_EQ(pass.z[0], s0.z);
  EXPECT_EQ(pass.z[1], s1.z);
  EXPECT_EQ(pass.final_state.slots, s1.sigma_next.slots);

  // Without the summary every step starts from sigma_init.
  const auto reset = forward_pass(f.stack, f.rec.plan, true);
  const auto alone = step(f.stack, init_summary(f.stack), f.rec.plan.steps[1].token_ids);
  EXPECT_EQ(reset.z[1], alone.z);
  EXPECT_NE(reset.z[1], pass.z[1]);
}

TEST(Hierarchy, OneStepBidirectionalIsTwoChainedSteps) {
  const auto f = make(R"({"a":"x y","b":2})");
  ASSERT_EQ(f.rec.plan.steps.size(), 1u);
  const auto& ids = f.rec.plan.steps[0].token_ids;
  const auto fwd = forward_pass(f.stack, f.rec.plan);
  const auto s0 = step(f.stack, init_summary(f.stack), ids);
  EXPECT_EQ(fwd.final_state.slots, s0.sigma_next.slots);
  const auto rev = reverse_pass(f.stack, f.rec.plan, fwd.final_state);
  const auto s1 = step(f.stack, s0.sigma_next, ids);
  EXPECT_EQ(rev.z[0], s1.z);
  EXPECT_EQ(rev.final_state.slots, s1.sigma_next.slots);

  // run_record with no masks follows the same computation.
  const auto out = run_record(f.stack, f.rec, MaskPlan{}, RunOptions{});
  EXPECT_EQ(out.z[0], s1.z);
  EXPECT_EQ(out.logits.rows(), 0u);
  Matrix<double> mean(1, f.cfg.d_model);
  for (std::size_t r = 0; r < f.cfg.summary_slots; ++r)
    for (std::size_t j = 0; j < f.cfg.d_model; ++j)
      mean[j] += s1.sigma_next.slots(r, j) / static_cast<double>(f.cfg.summary_slots);
  for (std::size_t j = 0; j < f.cfg.d_model; ++j) EXPECT_NEAR(out.record_summary[j], mean[j], 1e-12);
}

TEST(Hierarchy, ReverseTokensComeFromReversePass) {
  const auto f = make(kTwoLevel);
  const auto fwd = forward_pass(f.stack, f.rec.plan);
  const auto rev = reverse_pass(f.stack, f.rec.plan, fwd.final_state);
  const auto bi = run_record(f.stack, f.rec, MaskPlan{}, RunOptions{});
  EXPECT_EQ(bi.z, rev.z);
  EXPECT_EQ(bi.forward_final->slots, fwd.final_state.slots);
  EXPECT_EQ(bi.reverse_final->slots, rev.final_state.slots);
  const auto fo = run_record(f.stack, f.rec, MaskPlan{}, RunOptions{Mode::ForwardOnly});
  EXPECT_EQ(fo.z, fwd.z);
  EXPECT_FALSE(fo.reverse_final.has_value());
  const auto tf = run_record(f.stack, f.rec, MaskPlan{}, RunOptions{Mode::Bidirectional, true});
  EXPECT_EQ(tf.z, fwd.z);
  EXPECT_EQ(tf.record_summary, bi.record_summary);
}

TEST(Hierarchy, MaskEveryValueToken) {
  const auto f = make(R"({"a":"p","b":"q","c":"r"})");
  MaskPlan m;
  const auto& seg = f.rec.plan.steps[0];
  for (std::size_t o = 0; o < seg.token_ids.size(); ++o)
    if (seg.origins[o].role == TokenRole::Value) m.entries.push_back({0, o, seg.origins[o], seg.token_ids[o]});
  for (Mode mode : {Mode::Bidirectional, Mode::ForwardOnly, Mode::NoSummary, Mode::Flat}) {
    const auto out = run_record(f.stack, f.rec, m, RunOptions{mode});
    EXPECT_EQ(out.logits.rows(), 3u);
    EXPECT_EQ(out.logits.cols(), f.vocab.size());
    EXPECT_EQ(out.targets, (std::vector<int>{f.vocab.id("p"), f.vocab.id("q"), f.vocab.id("r")}));
  }
}

// Masked inputs must not leak the original token.
TEST(Hierarchy, MaskedTokenIsHidden) {
  const auto f = make(kTwoLevel);
  const auto m = mask_for(f.rec, 0.3, 1, "t", 0);
  for (Mode mode : {Mode::Bidirectional, Mode::Flat}) {
    PreparedRecord altered = f.rec;
    for (const auto& e : m.entries) {
      altered.plan.steps[e.step].token_ids[e.offset] = kUnk;
      for (std::size_t i = 0; i < altered.linear.origins.size(); ++i)
        if (altered.linear.origins[i] == e.origin) altered.linear.token_ids[i] = kUnk;
    }
    const auto a = run_record(f.stack, f.rec, m, RunOptions{mode});
    const auto b = run_record(f.stack, altered, m, RunOptions{mode});
    EXPECT_EQ(a.logits, b.logits);
  }
}

TEST(Hierarchy, FlatWindowsAndPooling) {
  const auto f = make(R"({"a":"p q r s t u v w","b":{"c":"x y z","d":1},"e":2})");
  auto cfg = f.cfg;
  cfg.window = 8;
  cfg.summary_slots = 1;
  auto stack = f.stack;
  stack.config = cfg;
  stack.tensors[kPosEmb] = slice_rows(stack.tensors[kPosEmb], 0, 8);
  const std::size_t L = f.rec.linear.token_ids.size();
  ASSERT_GT(L, 16u);
  const auto out = run_record(stack, f.rec, MaskPlan{}, RunOptions{Mode::Flat});
  EXPECT_EQ(out.z.size(), (L + 7) / 8);
  Matrix<double> mean(1, cfg.d_model);
  for (const auto& z : out.z)
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t j = 0; j < cfg.d_model; ++j) mean[j] += z(r, j) / static_cast<double>(L);
  for (std::size_t j = 0; j < cfg.d_model; ++j) EXPECT_NEAR(out.record_summary[j], mean[j], 1e-12);
}

TEST(Hierarchy, Deterministic) {
  const auto f = make(kTwoLevel);
  const auto m = mask_for(f.rec, 0.3, 1, "t", 0);
  const auto a = run_record(f.stack, f.rec, m, RunOptions{});
  const auto b = run_record(f.stack, f.rec, m, RunOptions{});
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.record_summary, b.record_summary);
}

class ModeGradient : public ::testing::TestWithParam<Mode> {};

// Full batch objective (MLM + VHM) against finite differences in every mode,
// with probes covering every parameter group including sigma_init.
TEST_P(ModeGradient, MatchesFiniteDifferences) {
  const auto lines = fixtures::small_log_lines(3, 4);
  auto corpus = fixtures::corpus_from(lines);
  auto cfg = fixtures::tiny_config(corpus.vocab.size(), 2);
  cfg.blocks = 2;
  cfg.window = 14;  // several steps and several flat windows
  cfg.summary_slots = 2;
  std::vector<PreparedRecord> recs;
  for (const auto& t : corpus.trees) recs.push_back(prepare_record(t, corpus.vocab, cfg));
  auto stack = init_stack<double>(cfg);
  Rng rng(6);
  for (auto& t : stack.tensors)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += 0.1 * standard_normal(rng);
  TrainConfig tc;
  tc.mode = GetParam();
  tc.mask_rate = 0.3;
  tc.lambda_vhm = 0.5;
  const auto r = model_grad_check(stack, recs, tc, 80, 1e-5, 11);
  EXPECT_LT(r.max_rel_error, 1e-4);
  std::set<std::size_t> groups;
  for (const auto& p : r.probes) groups.insert(p.tensor);
  EXPECT_EQ(groups.size(), stack.tensors.size());
}

INSTANTIATE_TEST_SUITE_P(AllModes, ModeGradient,
                         ::testing::Values(Mode::Bidirectional, Mode::ForwardOnly, Mode::NoSummary,
                                           Mode::Flat),
                         [](const auto& info) {
                           std::string n = mode_name(info.param);
                           std::erase(n, '-');
                           return n;
                         });
