// Walks one nested record through parsing, segmentation and a short
// training run on a small synthetic corpus.

#include <cstdio>

#include "hlogformer/pipeline.hpp"
#include "hlogformer/synthetic.hpp"

using namespace hlog;

int main() {
  const std::string line =
      R"({"eventName":"ConsoleLogin","userIdentity":{"type":"Root","arn":"arn:aws:iam::1"},"responseElements":{"ConsoleLogin":"Success"}})";
  const LogTree tree = parse_record(line, "demo");
  const Vocab vocab = build_vocab(std::vector<std::string>{record_text(tree)}, 1);

  const SegmentPlan plan = build_segments(tree, vocab, 64);
  std::printf("%zu segments, children before parents:\n", plan.steps.size());
  for (const auto& s : plan.steps)
    std::printf("  [%s] %s\n", tree.node(s.owner_node).key_text.c_str(), vocab.decode(s.token_ids).c_str());
  std::printf("flat form: %s\n\n", vocab.decode(linearize(tree, vocab).token_ids).c_str());

  // A small model trained for a few epochs on generated records.
  std::vector<LogTree> trees;
  std::vector<std::string> texts;
  for (const auto& r : synth::log_corpus(70, 1)) {
    trees.push_back(parse_record(r.json));
    texts.push_back(record_text(trees.back()));
  }
  const Vocab v = build_vocab(texts, 1);
  EncoderConfig enc;
  enc.vocab_size = v.size();
  enc.d_model = 16;
  enc.heads = 2;
  enc.ffn = 32;
  TrainConfig tc;
  tc.epochs = 3;
  tc.adam.lr = 0.01;
  const auto all = prepare_all(trees, v, enc);
  const auto split = split_dataset(all.size(), 1);
  std::printf("%zu parameters\n", count_params(enc));
  train<float>(enc, tc, pick(all, split.train), pick(all, split.val), [](const EpochMetrics& m) {
    std::printf("epoch %zu %-5s mlm %.3f vhm %.4f\n", m.epoch, m.split.c_str(), m.mlm, m.vhm);
  });
}
