// hlogformer: command-line front end for the whole pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure. Failures print one JSON object on stderr.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlogformer/pipeline.hpp"
#include "hlogformer/synthetic.hpp"

namespace {

using namespace hlog;
using nlohmann::ordered_json;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
  }
  return 1;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

int report_error(const char* kind, const std::string& code, const std::string& message, int exit) {
  ordered_json j{{"error", {{"kind", kind}, {"code", code}, {"message", message}}}, {"exit_code", exit}};
  std::cerr << j.dump() << '\n';
  return exit;
}

void emit(const ordered_json& j, const OutputDir* out, const std::string& name) {
  const std::string text = j.dump(2) + '\n';
  if (out) out->write(name, text);
  std::cout << text;
}

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Run configuration file (key = value lines)");
    app->add_option("--set", overrides, "Override one config key, as key=value (repeatable)");
  }

  RunConfig load() const {
    RunConfig c = file.empty() ? RunConfig() : RunConfig::load(file);
    for (const auto& kv : overrides) c.apply_override(kv);
    return c;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string stem_of(const std::string& path) {
  std::string name = std::filesystem::path(path).filename().string();
  for (const char* ext : {".jsonl", ".json"}) {
    const std::string e = ext;
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      name.resize(name.size() - e.size());
      break;
    }
  }
  return name;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot read " + path);
  return read_embeddings_csv(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical transformer for structured logs: training, detection and evaluation"};
  app.name("hlogformer");
  app.require_subcommand(1);

  // synth ----------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic corpus");
  std::string synth_kind = "logs";
  std::size_t synth_records = 500, synth_items = 240, synth_users = 60, synth_history = 30;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  bool synth_force = false;
  synth->add_option("--kind", synth_kind, "Corpus kind")->check(CLI::IsMember({"logs", "copurchase"}))->capture_default_str();
  synth->add_option("--records", synth_records, "Log records to generate")->capture_default_str();
  synth->add_option("--items", synth_items, "Co-purchase items")->capture_default_str();
  synth->add_option("--users", synth_users, "Co-purchase users")->capture_default_str();
  synth->add_option("--history", synth_history, "Purchases per user")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--force", synth_force, "Overwrite existing artifacts");

  // build-vocab ------------------------------------------------------------
  auto* bv = app.add_subcommand("build-vocab", "Build a vocabulary from a JSONL corpus");
  std::string bv_corpus, bv_out;
  std::size_t bv_min_freq = 1, bv_max_depth = 32;
  bool bv_force = false;
  bv->add_option("corpus", bv_corpus, "JSONL corpus")->required();
  bv->add_option("--min-freq", bv_min_freq, "Minimum token frequency")->capture_default_str();
  bv->add_option("--max-depth", bv_max_depth, "Maximum nesting depth")->capture_default_str();
  bv->add_option("--out", bv_out, "Output directory")->required();
  bv->add_flag("--force", bv_force, "Overwrite existing artifacts");

  // train --------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint and metrics");
  ConfigArgs tr_cfg;
  tr_cfg.attach(tr);
  std::string tr_mode, tr_out;
  bool tr_force = false;
  tr->add_option("--mode", tr_mode, "Model variant")->check(CLI::IsMember({"hlog", "flat", "forward-only", "no-summary"}));
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_flag("--force", tr_force, "Overwrite existing artifacts");

  // eval-mlm -----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval-mlm", "Masked-token loss of a checkpoint on a corpus");
  std::string ev_ckpt, ev_data, ev_out;
  double ev_rate = 0.2;
  std::uint64_t ev_seed = 0;
  bool ev_force = false;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "JSONL corpus")->required();
  ev->add_option("--mask-rate", ev_rate, "Masking rate")->capture_default_str();
  ev->add_option("--mask-seed", ev_seed, "Mask seed")->capture_default_str();
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->add_flag("--force", ev_force, "Overwrite existing artifacts");

  // gen-fake -----------------------------------------------------------------
  auto* gf = app.add_subcommand("gen-fake", "Write value-swapped fake records");
  std::string gf_data, gf_out;
  double gf_p = 0.2;
  std::uint64_t gf_seed = 0;
  bool gf_force = false;
  gf->add_option("--data", gf_data, "JSONL corpus of real records")->required();
  gf->add_option("--p", gf_p, "Per-leaf swap probability")->capture_default_str();
  gf->add_option("--seed", gf_seed, "Fake seed")->required();
  gf->add_option("--out", gf_out, "Output directory")->required();
  gf->add_flag("--force", gf_force, "Overwrite existing artifacts");

  // detect -------------------------------------------------------------------
  auto* dt = app.add_subcommand("detect", "Score real and fake records and sweep thresholds");
  std::string dt_ckpt, dt_real, dt_fake, dt_T = "1,5,10,20,50", dt_alpha, dt_out;
  std::size_t dt_report_T = 10;
  double dt_rate = 0.2;
  std::uint64_t dt_seed = 0;
  bool dt_force = false;
  dt->add_option("--ckpt", dt_ckpt, "Checkpoint file")->required();
  dt->add_option("--real", dt_real, "JSONL of real records")->required();
  dt->add_option("--fake", dt_fake, "JSONL of fake records")->required();
  dt->add_option("--T", dt_T, "Candidate-set sizes, comma-separated")->capture_default_str();
  dt->add_option("--alpha-grid", dt_alpha, "Thresholds, comma-separated (default 0,0.025,...,0.5)");
  dt->add_option("--report-T", dt_report_T, "Candidate size used for the threshold sweep")->capture_default_str();
  dt->add_option("--mask-rate", dt_rate, "Masking rate")->capture_default_str();
  dt->add_option("--mask-seed", dt_seed, "Mask seed")->capture_default_str();
  dt->add_option("--out", dt_out, "Output directory")->required();
  dt->add_flag("--force", dt_force, "Overwrite existing artifacts");

  // export-embeddings --------------------------------------------------------
  auto* ee = app.add_subcommand("export-embeddings", "Write record summaries as CSV");
  std::string ee_ckpt, ee_real, ee_fake, ee_out;
  bool ee_force = false;
  ee->add_option("--ckpt", ee_ckpt, "Checkpoint file")->required();
  ee->add_option("--real", ee_real, "JSONL of real records")->required();
  ee->add_option("--fake", ee_fake, "JSONL of fake records");
  ee->add_option("--out", ee_out, "Output directory")->required();
  ee->add_flag("--force", ee_force, "Overwrite existing artifacts");

  // pca ----------------------------------------------------------------------
  auto* pc = app.add_subcommand("pca", "Project embeddings onto principal components");
  std::string pc_in, pc_out;
  std::size_t pc_dims = 2;
  bool pc_force = false;
  pc->add_option("--embeddings", pc_in, "Embeddings CSV")->required();
  pc->add_option("--dims", pc_dims, "Output dimensions")->capture_default_str();
  pc->add_option("--out", pc_out, "Output directory")->required();
  pc->add_flag("--force", pc_force, "Overwrite existing artifacts");

  // classify -----------------------------------------------------------------
  auto* cl = app.add_subcommand("classify", "Train a linear head on frozen embeddings");
  std::string cl_in, cl_labels, cl_out;
  std::size_t cl_epochs = 200;
  double cl_lr = 0.05;
  std::uint64_t cl_seed = 0;
  bool cl_force = false;
  cl->add_option("--embeddings", cl_in, "Embeddings CSV")->required();
  cl->add_option("--labels", cl_labels, "CSV with header record_id,label")->required();
  cl->add_option("--epochs", cl_epochs, "Training epochs")->capture_default_str();
  cl->add_option("--lr", cl_lr, "Learning rate")->capture_default_str();
  cl->add_option("--seed", cl_seed, "Split and initialization seed")->required();
  cl->add_option("--out", cl_out, "Output directory")->required();
  cl->add_flag("--force", cl_force, "Overwrite existing artifacts");

  // recommend ----------------------------------------------------------------
  auto* rc = app.add_subcommand("recommend", "Precision@K from item embeddings and user histories");
  std::string rc_in, rc_hist, rc_k = "1,3,5,8,10", rc_out;
  std::size_t rc_held = 10, rc_neg = 10;
  std::uint64_t rc_seed = 0;
  bool rc_force = false;
  rc->add_option("--embeddings", rc_in, "Item embeddings CSV, row i is item i")->required();
  rc->add_option("--histories", rc_hist, "One user per line: item ids in purchase order")->required();
  rc->add_option("--k-list", rc_k, "K values, comma-separated")->capture_default_str();
  rc->add_option("--held-out", rc_held, "Last purchases used as positives")->capture_default_str();
  rc->add_option("--negatives", rc_neg, "Sampled negatives per user")->capture_default_str();
  rc->add_option("--seed", rc_seed, "Negative sampling seed")->required();
  rc->add_option("--out", rc_out, "Output directory")->required();
  rc->add_flag("--force", rc_force, "Overwrite existing artifacts");

  // param-count --------------------------------------------------------------
  auto* pcnt = app.add_subcommand("param-count", "Closed-form parameter counts");
  ConfigArgs pcnt_cfg;
  pcnt_cfg.attach(pcnt);
  std::size_t pcnt_vocab = 0;
  pcnt->add_option("--vocab-size", pcnt_vocab, "Vocabulary size (default: from the config's vocab file)");

  // mem-report ---------------------------------------------------------------
  auto* mr = app.add_subcommand("mem-report", "Attention-cost accounting, hierarchical vs flat");
  ConfigArgs mr_cfg;
  mr_cfg.attach(mr);
  std::string mr_data, mr_equal, mr_out;
  bool mr_force = false;
  mr->add_option("--data", mr_data, "JSONL corpus (overrides the config's data)");
  mr->add_option("--equal-segments", mr_equal, "L,M: one record of L tokens in M equal segments");
  mr->add_option("--out", mr_out, "Output directory (optional)");
  mr->add_flag("--force", mr_force, "Overwrite existing artifacts");

  // gradcheck ----------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the training objective");
  ConfigArgs gc_cfg;
  gc_cfg.attach(gc);
  std::size_t gc_probes = 50, gc_records = 2;
  double gc_eps = 1e-5, gc_tol = 1e-4, gc_jitter = 0.1;
  gc->add_option("--probes", gc_probes, "Number of probed parameters")->capture_default_str();
  gc->add_option("--records", gc_records, "Records in the checked batch")->capture_default_str();
  gc->add_option("--eps", gc_eps, "Finite-difference step")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "Maximum accepted relative error")->capture_default_str();
  gc->add_option("--jitter", gc_jitter, "Std of the noise added to the initial parameters")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("config", "UsageError", e.what(), 2);
  }

  try {
    if (*synth) {
      OutputDir out(synth_out, synth_force);
      if (synth_kind == "logs") {
        const auto corpus = synth::log_corpus(synth_records, synth_seed);
        std::string jsonl, labels = "record_id,label\n";
        for (std::size_t i = 0; i < corpus.size(); ++i) {
          jsonl += corpus[i].json + '\n';
          labels += std::to_string(i + 1) + ",action" + std::to_string(corpus[i].action) + '\n';
        }
        out.write("logs.jsonl", jsonl);
        out.write("labels.csv", labels);
      } else {
        const auto c = synth::copurchase_corpus(synth_items, synth_users, synth_history, synth_seed);
        std::string jsonl, labels = "record_id,label\n", hist;
        for (std::size_t i = 0; i < c.items.size(); ++i) {
          jsonl += c.items[i] + '\n';
          labels += std::to_string(i + 1) + ",category" + std::to_string(c.item_category[i]) + '\n';
        }
        for (const auto& h : c.histories) {
          for (std::size_t i = 0; i < h.size(); ++i) hist += (i ? " " : "") + std::to_string(h[i]);
          hist += '\n';
        }
        out.write("items.jsonl", jsonl);
        out.write("item_labels.csv", labels);
        out.write("histories.txt", hist);
      }
    } else if (*bv) {
      OutputDir out(bv_out, bv_force);
      std::vector<std::string> texts;
      for (const auto& t : read_jsonl(bv_corpus, bv_max_depth)) texts.push_back(record_text(t));
      const Vocab v = build_vocab(texts, bv_min_freq);
      v.save(out.path("vocab.txt"));
      log_info("vocabulary of " + std::to_string(v.size()) + " tokens");
    } else if (*tr) {
      RunConfig cfg = tr_cfg.load();
      if (!tr_mode.empty()) cfg.train.mode = parse_mode(tr_mode);
      cfg.validate(true);
      OutputDir out(tr_out, tr_force);
      auto run = train_to_dir(cfg, out, [](const EpochMetrics& m) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %zu %s mlm %.4f vhm %.4f total %.4f", m.epoch, m.split.c_str(),
                      m.mlm, m.vhm, m.total);
        log_info(buf);
      });
      std::cout << ordered_json{{"best_epoch", run.result.best_epoch}, {"test", run.metrics["test"]}}.dump(2) << '\n';
    } else if (*ev) {
      OutputDir out(ev_out, ev_force);
      const auto ck = load_checkpoint<float>(ev_ckpt);
      const auto recs = prepare_all(read_jsonl(ev_data), ck.vocab, ck.stack.config);
      if (recs.empty()) throw EmptyCorpus();
      const auto lb = evaluate_set<float>(ck.stack, recs, ck.options, ev_rate, ev_seed, "eval", 0.0, &ck.center);
      emit({{"records", recs.size()}, {"masked_tokens", lb.masked_tokens}, {"mlm", lb.mlm}}, &out, "eval_mlm.json");
    } else if (*gf) {
      OutputDir out(gf_out, gf_force);
      out.write(stem_of(gf_data) + ".fake.jsonl", fake_jsonl(read_jsonl(gf_data), gf_p, gf_seed));
    } else if (*dt) {
      OutputDir out(dt_out, dt_force);
      DetectionConfig dc;
      dc.candidate_sizes.clear();
      for (const auto& s : split_list(dt_T)) dc.candidate_sizes.push_back(std::stoul(s));
      dc.alpha_grid = DetectionConfig::default_alpha_grid();
      if (!dt_alpha.empty()) {
        dc.alpha_grid.clear();
        for (const auto& s : split_list(dt_alpha)) dc.alpha_grid.push_back(std::stod(s));
      }
      dc.report_T = dt_report_T;
      dc.mask_rate = dt_rate;
      dc.mask_seed = dt_seed;
      const auto ck = load_checkpoint<float>(dt_ckpt);
      const auto rep = detect_files(ck, dt_real, dt_fake, dc);
      out.write("detection_report.json", to_json(rep, dc.report_T).dump(2) + '\n');
      double best = 0, best_alpha = 0;
      for (const auto& t : rep.thresholds)
        if (t.balanced_accuracy > best) best = t.balanced_accuracy, best_alpha = t.alpha;
      std::cout << ordered_json{{"real_mean_mlm", rep.real_mean_mlm},
                                {"fake_mean_mlm", rep.fake_mean_mlm},
                                {"best_alpha", best_alpha},
                                {"best_balanced_accuracy", best}}
                       .dump(2)
                << '\n';
    } else if (*ee) {
      OutputDir out(ee_out, ee_force);
      const auto ck = load_checkpoint<float>(ee_ckpt);
      EmbeddingTable t;
      std::vector<PreparedRecord> recs;
      auto add = [&](const std::string& path, const char* label) {
        for (auto& r : prepare_all(read_jsonl(path), ck.vocab, ck.stack.config)) {
          t.record_ids.push_back(r.tree.record_id);
          t.labels.push_back(label);
          recs.push_back(std::move(r));
        }
      };
      add(ee_real, "real");
      if (!ee_fake.empty()) add(ee_fake, "fake");
      t.vectors = record_embeddings<float>(ck.stack, recs, ck.options);
      std::ofstream f(out.path("embeddings.csv"));
      write_embeddings_csv(t, f);
    } else if (*pc) {
      OutputDir out(pc_out, pc_force);
      const auto t = load_embeddings(pc_in);
      const auto r = pca_project(t.vectors, pc_dims);
      std::ostringstream csv;
      csv.precision(17);
      csv << "record_id,label";
      for (std::size_t j = 0; j < pc_dims; ++j) csv << ",pc_" << j;
      csv << '\n';
      for (std::size_t i = 0; i < t.record_ids.size(); ++i) {
        csv << t.record_ids[i] << ',' << t.labels[i];
        for (std::size_t j = 0; j < pc_dims; ++j) csv << ',' << r.coordinates(i, j);
        csv << '\n';
      }
      out.write("pca.csv", csv.str());
      emit({{"explained_variance_ratio", r.explained_variance_ratio}}, &out, "pca.json");
    } else if (*cl) {
      OutputDir out(cl_out, cl_force);
      const auto t = load_embeddings(cl_in);
      std::ifstream lf(cl_labels);
      if (!lf) throw data_error("cannot read " + cl_labels);
      std::map<std::string, std::string> by_id;
      std::string line;
      std::getline(lf, line);
      while (std::getline(lf, line)) {
        const auto cells = split_csv_line(line);
        if (cells.size() != 2) throw data_error("labels CSV rows must be record_id,label");
        by_id[cells[0]] = cells[1];
      }
      std::set<std::string> names;
      for (const auto& id : t.record_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw data_error("no label for record " + id);
        names.insert(it->second);
      }
      const std::vector<std::string> classes(names.begin(), names.end());
      std::vector<int> labels;
      for (const auto& id : t.record_ids)
        labels.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), by_id[id]) - classes.begin()));
      const auto split = split_dataset(t.record_ids.size(), cl_seed);
      std::vector<std::size_t> train_rows = split.train;
      train_rows.insert(train_rows.end(), split.val.begin(), split.val.end());
      const auto r = classify_supervised(t.vectors, labels, train_rows, split.test, {cl_epochs, cl_lr, cl_seed});
      emit({{"classes", classes}, {"train_accuracy", r.train_accuracy}, {"test_accuracy", r.test_accuracy}},
           &out, "classify.json");
    } else if (*rc) {
      OutputDir out(rc_out, rc_force);
      const auto t = load_embeddings(rc_in);
      std::ifstream hf(rc_hist);
      if (!hf) throw data_error("cannot read " + rc_hist);
      std::vector<std::vector<std::size_t>> hist;
      std::string line;
      while (std::getline(hf, line)) {
        std::istringstream ls(line);
        std::vector<std::size_t> h;
        std::size_t id;
        while (ls >> id) h.push_back(id);
        if (!h.empty()) hist.push_back(std::move(h));
      }
      RecommendConfig cfg;
      cfg.held_out = rc_held;
      cfg.negatives = rc_neg;
      cfg.seed = rc_seed;
      cfg.k_values.clear();
      for (const auto& s : split_list(rc_k)) cfg.k_values.push_back(std::stoul(s));
      const auto r = recommend_eval(t.vectors, hist, cfg);
      ordered_json p;
      for (auto [k, v] : r.precision) p[std::to_string(k)] = v;
      emit({{"users", r.users}, {"precision_at_k", p}}, &out, "recommend.json");
    } else if (*pcnt) {
      const RunConfig cfg = pcnt_cfg.load();
      std::size_t v = pcnt_vocab;
      if (v == 0 && !cfg.vocab.empty()) v = Vocab::load(cfg.vocab).size();
      if (v == 0) throw config_error("param-count needs --vocab-size or a vocab file in the config");
      EncoderConfig h = cfg.model, f = cfg.model;
      h.vocab_size = f.vocab_size = v;
      f.blocks = cfg.flat_blocks;
      const std::size_t hb = h.blocks * block_param_count(h.d_model, h.ffn);
      const std::size_t fb = f.blocks * block_param_count(f.d_model, f.ffn);
      emit({{"hlog", {{"total", count_params(h)}, {"encoder_blocks", hb}}},
            {"flat", {{"total", count_params(f)}, {"encoder_blocks", fb}}},
            {"encoder_block_ratio", static_cast<double>(hb) / static_cast<double>(fb)}},
           nullptr, "");
    } else if (*mr) {
      const RunConfig cfg = mr_cfg.load();
      std::unique_ptr<OutputDir> out;
      if (!mr_out.empty()) out = std::make_unique<OutputDir>(mr_out, mr_force);
      AttentionCost total;
      ordered_json rows = ordered_json::array();
      auto row = [](const std::string& id, const AttentionCost& c) {
        return ordered_json{{"record_id", id},          {"tokens", c.tokens},
                            {"steps", c.steps},         {"hierarchical", c.hierarchical},
                            {"passes", c.passes},       {"hierarchical_all_passes", c.hierarchical_total},
                            {"max_window", c.max_window}, {"flat", c.flat},
                            {"flat_windows", c.flat_windows}, {"ratio", c.ratio()}};
      };
      if (!mr_equal.empty()) {
        const auto lm = split_list(mr_equal);
        if (lm.size() != 2) throw config_error("--equal-segments expects L,M");
        const std::size_t L = std::stoul(lm[0]), M = std::stoul(lm[1]);
        if (M == 0 || L % M != 0) throw config_error("--equal-segments needs M dividing L");
        const std::vector<std::size_t> lens(M, L / M);
        total = attention_cost(lens, cfg.model.summary_slots, L, std::max(cfg.model.window, L), 1);
        rows.push_back(row("equal", total));
      } else {
        const std::string data = mr_data.empty() ? cfg.data : mr_data;
        if (data.empty()) throw config_error("mem-report needs --data, a config data path or --equal-segments");
        const auto trees = read_jsonl(data, cfg.max_depth);
        std::vector<std::string> texts;
        for (const auto& t : trees) texts.push_back(record_text(t));
        const Vocab vocab = cfg.vocab.empty() ? build_vocab(texts, cfg.min_freq) : Vocab::load(cfg.vocab);
        EncoderConfig enc = cfg.model;
        enc.vocab_size = vocab.size();
        for (const auto& t : trees) {
          const auto c = attention_cost(prepare_record(t, vocab, enc), enc, cfg.train.mode);
          rows.push_back(row(t.record_id, c));
          total += c;
        }
        total.passes = passes_for(cfg.train.mode);
      }
      emit({{"summary_slots", cfg.model.summary_slots},
            {"window", cfg.model.window},
            {"total", row("all", total)},
            {"records", rows}},
           out.get(), "mem_report.json");
    } else if (*gc) {
      RunConfig cfg = gc_cfg.load();
      if (!cfg.seed) cfg.seed = 0;
      std::vector<LogTree> trees;
      if (!cfg.data.empty()) {
        trees = read_jsonl(cfg.data, cfg.max_depth);
      } else {
        for (const auto& r : synth::log_corpus(gc_records, *cfg.seed)) trees.push_back(parse_record(r.json));
      }
      if (trees.size() < gc_records) throw data_error("gradcheck: corpus has fewer records than --records");
      trees.resize(gc_records);
      std::vector<std::string> texts;
      for (const auto& t : trees) texts.push_back(record_text(t));
      const Vocab vocab = build_vocab(texts, 1);
      const EncoderConfig enc = cfg.encoder_for(vocab.size());
      const auto recs = prepare_all(trees, vocab, enc);
      const auto r = model_grad_check(jittered(init_stack<double>(enc), gc_jitter, *cfg.seed), recs, cfg.train, gc_probes, gc_eps, *cfg.seed);
      std::set<std::size_t> groups;
      for (const auto& p : r.probes) groups.insert(p.tensor);
      emit({{"mode", mode_name(cfg.train.mode)},
            {"probes", r.probes.size()},
            {"tensors_probed", groups.size()},
            {"tensors_total", init_stack<double>(enc).tensors.size()},
            {"max_rel_error", r.max_rel_error},
            {"tolerance", gc_tol},
            {"pass", r.max_rel_error < gc_tol}},
           nullptr, "");
      if (!(r.max_rel_error < gc_tol)) throw numeric_error("gradient check above tolerance");
    }
  } catch (const Error& e) {
    return report_error(kind_name(e.kind()), e.code(), e.what(), exit_code(e.kind()));
  } catch (const std::invalid_argument& e) {
    return report_error("config", "InvalidArgument", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("data", "IOError", e.what(), 3);
  }
  return 0;
}
