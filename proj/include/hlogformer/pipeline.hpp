#pragma once

// File-level pipeline steps shared by the command-line tool and the
// acceptance suite. Every artifact lands under an output directory; an
// existing artifact is only replaced when `force` is set.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlogformer/checkpoint.hpp"
#include "hlogformer/config.hpp"
#include "hlogformer/detection.hpp"
#include "hlogformer/log_tree.hpp"
#include "hlogformer/memory.hpp"
#include "hlogformer/training.hpp"

namespace hlog {

using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Records of a JSONL file; ids are 1-based line numbers. Blank lines and
/// lines starting with '#' are skipped.
inline std::vector<LogTree> read_jsonl(const std::string& path, std::size_t max_depth = 32) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot read " + path);
  std::vector<LogTree> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      out.push_back(parse_record(line, std::to_string(lineno), max_depth));
    } catch (const Error& e) {
      throw Error(e.kind(), e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

class OutputDir {
 public:
  OutputDir(std::string dir, bool force) : dir_(std::move(dir)), force_(force) {
    if (dir_.empty()) throw config_error("output directory is not set");
    std::filesystem::create_directories(dir_);
  }

  /// Path for `name`, refusing to reuse an existing file without force.
  std::string path(const std::string& name) const {
    const auto p = (std::filesystem::path(dir_) / name).string();
    if (std::filesystem::exists(p) && !force_)
      throw config_error("refusing to overwrite " + p + " (pass --force)");
    return p;
  }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw data_error("cannot write " + name + " in " + dir_);
    f << content;
  }

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  bool force_;
};

inline std::vector<PreparedRecord> prepare_all(const std::vector<LogTree>& trees, const Vocab& vocab,
                                               const EncoderConfig& cfg) {
  std::vector<PreparedRecord> out;
  out.reserve(trees.size());
  for (const auto& t : trees) out.push_back(prepare_record(t, vocab, cfg));
  return out;
}

template <class V>
std::vector<V> pick(const std::vector<V>& all, const std::vector<std::size_t>& idx) {
  std::vector<V> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

inline ordered_json to_json(const EpochMetrics& m) {
  ordered_json j{{"epoch", m.epoch}, {"split", m.split}, {"mlm", m.mlm}, {"vhm", m.vhm}, {"total", m.total}};
  if (m.wallclock) j["wallclock"] = *m.wallclock;
  return j;
}

struct TrainRun {
  Checkpoint<float> checkpoint;
  TrainResult<float> result;
  LossBreakdown test;
  ordered_json metrics;
};

/// Split, vocabulary from the training split (unless one is configured),
/// training in the configured mode, and test-split evaluation of the
/// best-validation parameters. No files are written.
inline TrainRun train_run(const RunConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.validate(true);
  const auto trees = read_jsonl(cfg.data, cfg.max_depth);
  const auto split = split_dataset(trees.size(), *cfg.seed);
  Vocab vocab;
  if (!cfg.vocab.empty()) {
    vocab = Vocab::load(cfg.vocab);
  } else {
    std::vector<std::string> texts;
    for (auto i : split.train) texts.push_back(record_text(trees[i]));
    vocab = build_vocab(texts, cfg.min_freq);
  }
  const EncoderConfig enc = cfg.encoder_for(vocab.size());
  TrainConfig tc = cfg.train;
  tc.seed = *cfg.seed;
  const auto all = prepare_all(trees, vocab, enc);
  const auto tr = pick(all, split.train), va = pick(all, split.val), te = pick(all, split.test);

  TrainRun run;
  run.result = train<float>(enc, tc, tr, va, on_epoch);
  const RunOptions opts{tc.mode, tc.tokens_from_forward_pass};
  run.test = evaluate_set<float>(run.result.stack, te, opts, tc.mask_rate, tc.seed, "test", tc.lambda_vhm);
  run.checkpoint = Checkpoint<float>{run.result.stack, vocab, opts, run.result.center};

  ordered_json hist = ordered_json::array();
  for (const auto& m : run.result.history) hist.push_back(to_json(m));
  run.metrics = {{"mode", mode_name(tc.mode)},
                 {"seed", *cfg.seed},
                 {"records", {{"train", tr.size()}, {"val", va.size()}, {"test", te.size()}}},
                 {"vocab_size", vocab.size()},
                 {"parameters", count_params(enc)},
                 {"history", hist},
                 {"best_epoch", run.result.best_epoch},
                 {"diverged", run.result.diverged},
                 {"test", {{"mlm", run.test.mlm}, {"vhm", run.test.vhm}, {"total", run.test.total}}}};
  return run;
}

/// train_run plus artifacts: checkpoint.txt, metrics.json,
/// effective_config.txt and split.json.
inline TrainRun train_to_dir(const RunConfig& cfg, const OutputDir& out,
                             const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  // Claim every path before the expensive work so a refusal is immediate.
  for (const char* name : {"checkpoint.txt", "metrics.json", "effective_config.txt", "split.json"})
    (void)out.path(name);
  TrainRun run = train_run(cfg, on_epoch);
  out.write("effective_config.txt", cfg.to_text());
  const auto split = split_dataset(read_jsonl(cfg.data, cfg.max_depth).size(), *cfg.seed);
  out.write("split.json", ordered_json{{"train", split.train}, {"val", split.val}, {"test", split.test}}.dump(2) + '\n');
  save_checkpoint(run.checkpoint, out.path("checkpoint.txt"));
  out.write("metrics.json", run.metrics.dump(2) + '\n');
  if (run.result.diverged) throw numeric_error("training diverged; last good checkpoint written");
  return run;
}

/// Detection report for real and fake JSONL files under a checkpoint.
inline DetectionReport detect_files(const Checkpoint<float>& ck, const std::string& real_path,
                                    const std::string& fake_path, const DetectionConfig& dc,
                                    std::size_t max_depth = 32) {
  const auto real = prepare_all(read_jsonl(real_path, max_depth), ck.vocab, ck.stack.config);
  const auto fake = prepare_all(read_jsonl(fake_path, max_depth), ck.vocab, ck.stack.config);
  return detect<float>(ck.stack, ck.center, real, fake, ck.options, dc);
}

inline std::string fake_jsonl(const std::vector<LogTree>& trees, double p, std::uint64_t seed) {
  std::string out;
  for (const auto& f : gen_fake(trees, FakeGenConfig{p, seed})) out += to_json_text(f.tree) + '\n';
  return out;
}

}  // namespace hlog
