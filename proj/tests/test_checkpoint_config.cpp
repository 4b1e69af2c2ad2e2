#include <filesystem>

#include <gtest/gtest.h>

#include "hlogformer/pipeline.hpp"
#include "test_support.hpp"

using namespace hlog;

namespace {

Checkpoint<float> sample_checkpoint() {
  Checkpoint<float> ck;
  ck.vocab = build_vocab(std::vector<std::string>{"a : 1 b { c : 2 }"}, 1);
  auto cfg = fixtures::tiny_config(ck.vocab.size(), 9);
  cfg.blocks = 2;
  ck.stack = init_stack<float>(cfg);
  ck.options = RunOptions{Mode::ForwardOnly, false};
  ck.center = Matrix<float>(1, cfg.d_model, 0.125f);
  ck.center[3] = -1.5e-7f;
  return ck;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto ck = sample_checkpoint();
  const std::string text = serialize_checkpoint(ck);
  const auto back = deserialize_checkpoint<float>(text);
  EXPECT_EQ(back.stack.config, ck.stack.config);
  EXPECT_EQ(back.stack.names, ck.stack.names);
  EXPECT_EQ(back.stack.tensors, ck.stack.tensors);
  EXPECT_EQ(back.vocab, ck.vocab);
  EXPECT_EQ(back.options.mode, Mode::ForwardOnly);
  EXPECT_EQ(back.center, ck.center);
  EXPECT_EQ(serialize_checkpoint(back), text);
}

TEST(Checkpoint, RejectsCorruption) {
  const std::string text = serialize_checkpoint(sample_checkpoint());
  std::string flipped = text;
  flipped[text.find("tensor ") + 20] ^= 1;
  EXPECT_THROW(deserialize_checkpoint<float>(flipped), Error);
  EXPECT_THROW(deserialize_checkpoint<float>(text.substr(0, text.size() / 2)), Error);
  EXPECT_THROW(deserialize_checkpoint<float>(""), Error);
}

TEST(Checkpoint, FileRoundTripWithoutCenter) {
  auto ck = sample_checkpoint();
  ck.center = Matrix<float>{};
  const auto path = (std::filesystem::temp_directory_path() / "hlog_ck_test.txt").string();
  save_checkpoint(ck, path);
  const auto back = load_checkpoint<float>(path);
  EXPECT_TRUE(back.center.empty());
  EXPECT_EQ(back.stack.tensors, ck.stack.tensors);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint<float>(path), Error);
}

TEST(Config, ParseAndRoundTrip) {
  const auto c = RunConfig::parse(
      "# comment\n"
      "seed = 12\n"
      "d_model = 16   # trailing comment\n"
      "heads=2\n"
      "mode = forward-only\n"
      "lr = 0.005\n"
      "candidate_sizes = 1,10\n"
      "\n");
  EXPECT_EQ(*c.seed, 12u);
  EXPECT_EQ(c.model.d_model, 16u);
  EXPECT_EQ(c.train.mode, Mode::ForwardOnly);
  EXPECT_EQ(c.train.adam.lr, 0.005);
  EXPECT_EQ(c.detection.candidate_sizes, (std::vector<std::size_t>{1, 10}));
  const auto again = RunConfig::parse(c.to_text());
  EXPECT_EQ(again.to_text(), c.to_text());
  EXPECT_EQ(again.train.adam.lr, 0.005);
}

TEST(Config, Errors) {
  EXPECT_THROW(RunConfig::parse("nonsense = 1\n"), Error);
  EXPECT_THROW(RunConfig::parse("seed = 1\nseed = 2\n"), Error);
  EXPECT_THROW(RunConfig::parse("seed\n"), Error);
  EXPECT_THROW(RunConfig::parse("d_model = abc\n"), Error);
  EXPECT_THROW(RunConfig::parse("mode = sideways\n"), Error);
  RunConfig c;
  EXPECT_THROW(c.validate(false), Error);  // seed missing
  c.set("seed", "1");
  EXPECT_NO_THROW(c.validate(false));
  EXPECT_THROW(c.validate(true), Error);  // data missing
  c.apply_override("heads=3");
  EXPECT_THROW(c.validate(false), Error);
  EXPECT_THROW(c.apply_override("heads"), Error);
  try {
    RunConfig::parse("bogus = 1\n");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Config, EncoderForMode) {
  RunConfig c;
  c.set("seed", "4");
  c.set("mode", "flat");
  c.set("flat_blocks", "3");
  const auto e = c.encoder_for(99);
  EXPECT_EQ(e.vocab_size, 99u);
  EXPECT_EQ(e.blocks, 3u);
  EXPECT_EQ(e.seed, 4u);
  c.set("mode", "hlog");
  EXPECT_EQ(c.encoder_for(99).blocks, c.model.blocks);
}

TEST(Pipeline, ReadJsonlAndOutputDir) {
  const auto dir = std::filesystem::temp_directory_path() / "hlog_pipeline_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "d.jsonl");
    f << "{\"a\":1}\n\n# note\n{\"b\":{\"c\":2}}\n";
  }
  const auto trees = read_jsonl((dir / "d.jsonl").string());
  ASSERT_EQ(trees.size(), 2u);
  EXPECT_EQ(trees[0].record_id, "1");
  EXPECT_EQ(trees[1].record_id, "4");
  {
    std::ofstream f(dir / "bad.jsonl");
    f << "{\"a\":1}\n{oops\n";
  }
  try {
    read_jsonl((dir / "bad.jsonl").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  OutputDir out((dir / "out").string(), false);
  out.write("x.txt", "1");
  EXPECT_THROW(out.write("x.txt", "2"), Error);
  OutputDir forced((dir / "out").string(), true);
  EXPECT_NO_THROW(forced.write("x.txt", "2"));
  EXPECT_EQ(read_file((dir / "out" / "x.txt").string()), "2");
  std::filesystem::remove_all(dir);
}
