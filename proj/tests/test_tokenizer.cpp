#include <filesystem>

#include <gtest/gtest.h>

#include "hlogformer/tokenizer.hpp"

using namespace hlog;

TEST(Tokenizer, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("Foo:bar  BAZ"), (std::vector<std::string>{"foo", ":", "bar", "baz"}));
  EXPECT_EQ(tokenize("arn:aws:iam::1"),
            (std::vector<std::string>{"arn", ":", "aws", ":", "iam", ":", ":", "1"}));
  EXPECT_TRUE(tokenize("  \t").empty());
  EXPECT_EQ(normalize("A  b:c"), "a b : c");
}

TEST(Tokenizer, VocabOrdering) {
  const std::vector<std::string> corpus{"a : 1", "a : 2"};
  const Vocab v = build_vocab(corpus, 1);
  ASSERT_EQ(v.size(), 8u);
  EXPECT_EQ(v.id(":"), 4);
  EXPECT_EQ(v.id("a"), 5);
  EXPECT_EQ(v.id("1"), 6);
  EXPECT_EQ(v.id("2"), 7);
  EXPECT_EQ(v.encode("a : 1"), (std::vector<int>{5, 4, 6}));
  EXPECT_EQ(v.encode("zzz"), (std::vector<int>{kUnk}));
  EXPECT_EQ(v.decode(std::vector<int>{kMask}), "⟨MASK⟩");
  EXPECT_EQ(build_vocab(corpus, 1), v);
}

TEST(Tokenizer, MinFrequencyCutoff) {
  const Vocab v = build_vocab(std::vector<std::string>{"x"}, 2);
  EXPECT_EQ(v.size(), static_cast<std::size_t>(kNumSpecials));
  EXPECT_EQ(v.encode("x"), (std::vector<int>{kUnk}));
  EXPECT_THROW(build_vocab(std::vector<std::string>{}, 1), EmptyCorpus);
}

TEST(Tokenizer, SpecialFormsNeverCollide) {
  const Vocab v = build_vocab(std::vector<std::string>{"⟨MASK⟩ ⟨SUM⟩"}, 1);
  for (int id : v.encode("⟨MASK⟩ ⟨SUM⟩")) EXPECT_GE(id, kNumSpecials);
}

TEST(Tokenizer, SaveLoadRoundTrip) {
  const Vocab v = build_vocab(std::vector<std::string>{"b b a c : {"}, 1);
  const auto path = (std::filesystem::temp_directory_path() / "hlog_vocab_test.txt").string();
  v.save(path);
  EXPECT_EQ(Vocab::load(path), v);
  std::filesystem::remove(path);
  EXPECT_THROW(Vocab::from_lines({"⟨PAD⟩", "⟨UNK⟩"}), Error);
  EXPECT_THROW(Vocab::from_lines({"⟨PAD⟩", "⟨UNK⟩", "⟨MASK⟩", "⟨SUM⟩", "a", "a"}), Error);
  EXPECT_THROW(v.token(1000), Error);
}
