#pragma once

// Synthetic-anomaly pipeline and downstream evaluators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlogformer/hlogformer.hpp"
#include "hlogformer/log.hpp"
#include "hlogformer/optimizer.hpp"
#include "hlogformer/training.hpp"

namespace hlog {

// ---------------------------------------------------------------------------
// Fake records

struct FakeGenConfig {
  double p = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw config_error("swap probability must be in (0, 1)");
  }
};

struct FakeRecord {
  LogTree tree;
  std::size_t source = 0;              // index of the real record
  std::vector<NodeId> marked;          // leaves whose values were changed
};

/// Leaves with their (value, kind) pairs, for the cross-record fallback pool.
struct ValuePoolEntry {
  std::size_t record = 0;
  std::string value;
  NodeKind kind = NodeKind::String;
};

/// Marks each leaf independently with probability p. Two or more marked
/// leaves have their values rotated cyclically (the first marked leaf takes
/// the last one's value). A single marked leaf gets a value drawn from the
/// leaves of other records; with none marked, one leaf is forced and treated
/// the same way. Records with fewer than two leaves are skipped.
inline std::vector<FakeRecord> gen_fake(const std::vector<LogTree>& records, const FakeGenConfig& cfg) {
  cfg.validate();
  std::vector<ValuePoolEntry> pool;
  for (std::size_t r = 0; r < records.size(); ++r)
    for (NodeId id : leaves_in_order(records[r]))
      pool.push_back({r, *records[r].node(id).value_text, records[r].node(id).kind});

  std::vector<FakeRecord> out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto leaves = leaves_in_order(records[r]);
    if (leaves.size() < 2) {
      log_warning("gen_fake: record " + records[r].record_id + " has fewer than 2 leaves, skipped");
      continue;
    }
    Rng rng(derive_seed(cfg.seed, "fake", r));
    FakeRecord f{records[r], r, {}};
    for (NodeId id : leaves)
      if (uniform_real(rng) < cfg.p) f.marked.push_back(id);
    if (f.marked.empty()) f.marked.push_back(leaves[uniform_index(rng, leaves.size())]);
    auto& nodes = f.tree.nodes;
    if (f.marked.size() >= 2) {
      const LogNode last = nodes[f.marked.back()];
      for (std::size_t i = f.marked.size() - 1; i > 0; --i) {
        nodes[f.marked[i]].value_text = nodes[f.marked[i - 1]].value_text;
        nodes[f.marked[i]].kind = nodes[f.marked[i - 1]].kind;
      }
      nodes[f.marked[0]].value_text = last.value_text;
      nodes[f.marked[0]].kind = last.kind;
    } else {
      LogNode& leaf = nodes[f.marked[0]];
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].record != r && pool[i].value != *leaf.value_text) candidates.push_back(i);
      if (candidates.empty()) {
        for (std::size_t i = 0; i < pool.size(); ++i)
          if (pool[i].value != *leaf.value_text) candidates.push_back(i);
      }
      if (!candidates.empty()) {
        const auto& pick = pool[candidates[uniform_index(rng, candidates.size())]];
        leaf.value_text = pick.value;
        leaf.kind = pick.kind;
      } else {
        log_warning("gen_fake: no replacement value available for record " + records[r].record_id);
      }
    }
    f.tree.record_id = records[r].record_id.empty() ? std::to_string(r) + "-fake"
                                                    : records[r].record_id + "-fake";
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection by loss and by fake rate

struct DetectionConfig {
  std::vector<std::size_t> candidate_sizes{1, 5, 10, 20, 50};  // T values
  std::vector<double> alpha_grid;
  std::size_t report_T = 10;  // T used for the threshold sweep
  double mask_rate = 0.2;
  std::uint64_t mask_seed = 0;

  static std::vector<double> default_alpha_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 20; ++i) g.push_back(i * 0.025);
    return g;
  }
};

struct RecordScore {
  std::string record_id;
  double mlm = 0;
  double vhm_distance = 0;
  std::map<std::size_t, double> fake_rate;  // by T
};

struct ThresholdResult {
  double alpha = 0;
  double real_accuracy = 0;
  double fake_accuracy = 0;
  double balanced_accuracy = 0;
};

struct DetectionReport {
  std::vector<RecordScore> real, fake;
  double real_mean_mlm = 0, fake_mean_mlm = 0;
  double real_mean_vhm = 0, fake_mean_vhm = 0;
  std::map<std::size_t, double> real_mean_rate, fake_mean_rate;
  std::vector<ThresholdResult> thresholds;
};

/// Position of `target` in the candidate ranking (descending logit, ties to
/// the lower id). The target is a top-T candidate iff the rank is < T.
template <class T>
std::size_t candidate_rank(std::span<const T> logits, std::size_t target) {
  const T t = logits[target];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (logits[j] > t || (logits[j] == t && j < target)) ++rank;
  return rank;
}

template <class T>
double fake_rate_from_logits(const Matrix<T>& logits, std::span<const int> targets, std::size_t T_) {
  if (logits.rows() == 0) return 0.0;
  std::size_t fake = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i)
    if (candidate_rank<T>(logits.row(i), static_cast<std::size_t>(targets[i])) >= T_) ++fake;
  return static_cast<double>(fake) / static_cast<double>(logits.rows());
}

/// Masks `rec` with the detection protocol (mask seed stream "detect").
template <class T>
RecordOutputs<T> detection_run(const EncoderStack<T>& stack, const PreparedRecord& rec,
                               const RunOptions& opts, double mask_rate, std::uint64_t mask_seed,
                               std::size_t index) {
  return run_record(stack, rec, mask_for(rec, mask_rate, mask_seed, "detect", index), opts);
}

/// Fraction of masked tokens whose true id falls outside the top-T candidates.
template <class T>
double fake_rate(const EncoderStack<T>& stack, const PreparedRecord& rec, const RunOptions& opts,
                 std::size_t T_, double mask_rate, std::uint64_t mask_seed, std::size_t index) {
  if (T_ < 1 || T_ > stack.config.vocab_size) throw config_error("candidate size T must be in [1, V]");
  auto out = detection_run(stack, rec, opts, mask_rate, mask_seed, index);
  return fake_rate_from_logits(out.logits, out.targets, T_);
}

inline ThresholdResult classify_by_rate(std::span<const double> real, std::span<const double> fake,
                                        double alpha) {
  if (real.empty() || fake.empty()) throw data_error("classify_by_rate: both classes need records");
  ThresholdResult r;
  r.alpha = alpha;
  std::size_t ok = 0;
  for (double x : real) ok += x > alpha ? 0 : 1;
  r.real_accuracy = static_cast<double>(ok) / static_cast<double>(real.size());
  ok = 0;
  for (double x : fake) ok += x > alpha ? 1 : 0;
  r.fake_accuracy = static_cast<double>(ok) / static_cast<double>(fake.size());
  r.balanced_accuracy = (r.real_accuracy + r.fake_accuracy) / 2;
  return r;
}

template <class T>
std::vector<RecordScore> score_records(const EncoderStack<T>& stack, const Matrix<T>& center,
                                       std::span<const PreparedRecord> records,
                                       const RunOptions& opts, const DetectionConfig& cfg) {
  std::vector<RecordScore> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto o = detection_run(stack, records[i], opts, cfg.mask_rate, cfg.mask_seed, i);
    RecordScore s;
    s.record_id = records[i].tree.record_id;
    double nll = 0;
    for (std::size_t r = 0; r < o.logits.rows(); ++r)
      nll += kernels::row_nll<T>(o.logits.row(r), static_cast<std::size_t>(o.targets[r]));
    s.mlm = o.logits.rows() ? nll / static_cast<double>(o.logits.rows()) : 0.0;
    s.vhm_distance = distance_to<T>(o.record_summary.row(0), center.row(0));
    for (std::size_t t : cfg.candidate_sizes) {
      if (t < 1 || t > stack.config.vocab_size) throw config_error("candidate size T must be in [1, V]");
      s.fake_rate[t] = fake_rate_from_logits(o.logits, o.targets, t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Per-record MLM loss and distance to the persisted training center, plus
/// fake rates for every configured T and the threshold sweep at report_T.
template <class T>
DetectionReport detect(const EncoderStack<T>& stack, const Matrix<T>& center,
                       std::span<const PreparedRecord> real, std::span<const PreparedRecord> fake,
                       const RunOptions& opts, const DetectionConfig& cfg) {
  if (center.empty()) throw data_error("detect: checkpoint has no training center");
  if (real.empty() || fake.empty()) throw data_error("detect: real and fake sets must be nonempty");
  DetectionReport rep;
  rep.real = score_records(stack, center, real, opts, cfg);
  rep.fake = score_records(stack, center, fake, opts, cfg);
  auto mean = [](const std::vector<RecordScore>& v, auto f) {
    double s = 0;
    for (const auto& x : v) s += f(x);
    return s / static_cast<double>(v.size());
  };
  rep.real_mean_mlm = mean(rep.real, [](const RecordScore& s) { return s.mlm; });
  rep.fake_mean_mlm = mean(rep.fake, [](const RecordScore& s) { return s.mlm; });
  rep.real_mean_vhm = mean(rep.real, [](const RecordScore& s) { return s.vhm_distance; });
  rep.fake_mean_vhm = mean(rep.fake, [](const RecordScore& s) { return s.vhm_distance; });
  for (std::size_t t : cfg.candidate_sizes) {
    rep.real_mean_rate[t] = mean(rep.real, [t](const RecordScore& s) { return s.fake_rate.at(t); });
    rep.fake_mean_rate[t] = mean(rep.fake, [t](const RecordScore& s) { return s.fake_rate.at(t); });
  }
  if (std::find(cfg.candidate_sizes.begin(), cfg.candidate_sizes.end(), cfg.report_T) !=
      cfg.candidate_sizes.end()) {
    std::vector<double> rr, fr;
    for (const auto& s : rep.real) rr.push_back(s.fake_rate.at(cfg.report_T));
    for (const auto& s : rep.fake) fr.push_back(s.fake_rate.at(cfg.report_T));
    for (double a : cfg.alpha_grid) rep.thresholds.push_back(classify_by_rate(rr, fr, a));
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const DetectionReport& r, std::size_t report_T) {
  using nlohmann::ordered_json;
  auto scores = [](const std::vector<RecordScore>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& s : v) {
      ordered_json rates;
      for (auto [t, x] : s.fake_rate) rates[std::to_string(t)] = x;
      a.push_back({{"record_id", s.record_id}, {"mlm", s.mlm}, {"vhm_distance", s.vhm_distance},
                   {"fake_rate", rates}});
    }
    return a;
  };
  ordered_json j;
  j["real_mean_mlm"] = r.real_mean_mlm;
  j["fake_mean_mlm"] = r.fake_mean_mlm;
  j["real_mean_vhm_distance"] = r.real_mean_vhm;
  j["fake_mean_vhm_distance"] = r.fake_mean_vhm;
  ordered_json rates;
  for (auto [t, x] : r.real_mean_rate)
    rates[std::to_string(t)] = {{"real", x}, {"fake", r.fake_mean_rate.at(t)}};
  j["mean_fake_rate"] = rates;
  j["threshold_T"] = report_T;
  ordered_json th = ordered_json::array();
  for (const auto& t : r.thresholds)
    th.push_back({{"alpha", t.alpha}, {"real_accuracy", t.real_accuracy},
                  {"fake_accuracy", t.fake_accuracy}, {"balanced_accuracy", t.balanced_accuracy}});
  j["thresholds"] = th;
  j["real"] = scores(r.real);
  j["fake"] = scores(r.fake);
  return j;
}

// ---------------------------------------------------------------------------
// Embedding export and PCA

/// Unmasked record summaries, one row per record.
template <class T>
Matrix<double> record_embeddings(const EncoderStack<T>& stack, std::span<const PreparedRecord> records,
                                 const RunOptions& opts) {
  Matrix<double> out(records.size(), stack.config.d_model);
  const MaskPlan none;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto o = run_record(stack, records[i], none, opts);
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = static_cast<double>(o.record_summary[j]);
  }
  return out;
}

struct EmbeddingTable {
  std::vector<std::string> record_ids;
  std::vector<std::string> labels;
  Matrix<double> vectors;
};

inline void write_embeddings_csv(const EmbeddingTable& t, std::ostream& os) {
  os << "record_id,label";
  for (std::size_t j = 0; j < t.vectors.cols(); ++j) os << ",dim_" << j;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < t.vectors.rows(); ++i) {
    os << t.record_ids[i] << ',' << t.labels[i];
    for (std::size_t j = 0; j < t.vectors.cols(); ++j) os << ',' << t.vectors(i, j);
    os << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

inline EmbeddingTable read_embeddings_csv(std::istream& is) {
  EmbeddingTable t;
  std::string line;
  if (!std::getline(is, line)) throw data_error("embeddings CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "record_id" || header[1] != "label")
    throw data_error("embeddings CSV header must start with record_id,label");
  const std::size_t d = header.size() - 2;
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 2) throw data_error("embeddings CSV row has wrong column count");
    t.record_ids.push_back(cells[0]);
    t.labels.push_back(cells[1]);
    for (std::size_t j = 0; j < d; ++j) values.push_back(std::stod(cells[j + 2]));
  }
  t.vectors = Matrix<double>(t.record_ids.size(), d);
  std::copy(values.begin(), values.end(), t.vectors.data());
  return t;
}

struct PcaResult {
  Matrix<double> coordinates;            // n x out_dims
  Matrix<double> components;             // out_dims x d, unit rows
  std::vector<double> explained_variance_ratio;
};

/// Projects centered rows onto the top covariance eigenvectors. Each
/// component's sign is fixed so its first nonzero entry is positive.
/// Directions beyond the data's rank produce zero coordinates.
inline PcaResult pca_project(const Matrix<double>& x, std::size_t out_dims = 2) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < out_dims + 1) throw data_error("pca_project: need at least out_dims + 1 vectors");
  if (out_dims > d) throw config_error("pca_project: out_dims exceeds input dimension");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> data(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Mat centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd values = eig.eigenvalues();  // ascending
  const Eigen::MatrixXd vectors = eig.eigenvectors();
  const double total = std::max(values.sum(), 0.0);
  const double tol = 1e-12 * std::max(1.0, values.cwiseAbs().maxCoeff());

  PcaResult r;
  r.coordinates = Matrix<double>(n, out_dims);
  r.components = Matrix<double>(out_dims, d);
  std::size_t deficient = 0;
  for (std::size_t c = 0; c < out_dims; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
    const double lambda = values(col);
    if (lambda <= tol) {
      ++deficient;
      r.explained_variance_ratio.push_back(0.0);
      continue;
    }
    Eigen::VectorXd v = vectors.col(col);
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    }
    for (std::size_t j = 0; j < d; ++j) r.components(c, j) = v(static_cast<Eigen::Index>(j));
    const Eigen::VectorXd proj = centered * v;
    for (std::size_t i = 0; i < n; ++i) r.coordinates(i, c) = proj(static_cast<Eigen::Index>(i));
    r.explained_variance_ratio.push_back(total > 0 ? lambda / total : 0.0);
  }
  if (deficient)
    log_warning("pca_project: data rank below " + std::to_string(out_dims) + ", " +
                std::to_string(deficient) + " coordinate(s) set to zero");
  return r;
}

// ---------------------------------------------------------------------------
// Supervised classification on frozen embeddings

struct ClassifyConfig {
  std::size_t epochs = 200;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

struct ClassifyResult {
  std::size_t classes = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
};

/// Softmax-regression head trained with Adam on `train` rows and scored on
/// `test` rows. Features are standardized with training-set statistics.
inline ClassifyResult classify_supervised(const Matrix<double>& x, std::span<const int> labels,
                                          std::span<const std::size_t> train,
                                          std::span<const std::size_t> test,
                                          const ClassifyConfig& cfg = {}) {
  if (labels.size() != x.rows()) throw data_error("classify: labels and embeddings differ in length");
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw data_error("classify: labels must be nonnegative class indices");
    max_label = std::max(max_label, l);
  }
  const std::size_t classes = static_cast<std::size_t>(max_label + 1);
  std::vector<char> seen(classes, 0);
  for (std::size_t i : train) seen[static_cast<std::size_t>(labels[i])] = 1;
  std::size_t distinct = 0;
  for (char s : seen) distinct += s;
  if (distinct < 2) throw data_error("classify: training split contains a single class");
  if (test.empty()) throw data_error("classify: empty test split");

  const std::size_t d = x.cols();
  std::vector<double> mu(d, 0), sd(d, 0);
  for (std::size_t i : train)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j);
  for (double& m : mu) m /= static_cast<double>(train.size());
  for (std::size_t i : train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x(i, j) - mu[j]) * (x(i, j) - mu[j]);
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-8;
  auto features = [&](std::span<const std::size_t> rows) {
    Matrix<double> f(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) f(r, j) = (x(rows[r], j) - mu[j]) / sd[j];
    return f;
  };
  const Matrix<double> xtr = features(train), xte = features(test);
  std::vector<int> ytr;
  for (std::size_t i : train) ytr.push_back(labels[i]);

  std::vector<Matrix<double>> params{Matrix<double>(d, classes), Matrix<double>(1, classes)};
  Rng rng(derive_seed(cfg.seed, "classify"));
  for (std::size_t i = 0; i < params[0].size(); ++i) params[0][i] = 0.01 * standard_normal(rng);
  AdamW<double> opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0}, params);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    Matrix<double> logits = kernels::matmul(xtr, params[0]);
    kernels::add_row_vector(logits, params[1]);
    Matrix<double> dlogits;
    kernels::cross_entropy(logits, ytr, &dlogits);
    std::vector<Matrix<double>> grads{Matrix<double>(d, classes), Matrix<double>(1, classes)};
    kernels::matmul_tn_acc(xtr, dlogits, grads[0]);
    kernels::add_column_sums(dlogits, grads[1]);
    opt.step(params, grads);
  }
  auto accuracy = [&](const Matrix<double>& f, std::span<const std::size_t> rows) {
    Matrix<double> logits = kernels::matmul(f, params[0]);
    kernels::add_row_vector(logits, params[1]);
    std::size_t ok = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto row = logits.row(r);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      ok += best == labels[rows[r]] ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(rows.size());
  };
  return {classes, accuracy(xtr, train), accuracy(xte, test)};
}

// ---------------------------------------------------------------------------
// Recommendation

struct RecommendConfig {
  std::size_t held_out = 10;   // last purchases treated as positives
  std::size_t negatives = 10;
  std::vector<std::size_t> k_values{1, 3, 5, 8, 10};
  std::uint64_t seed = 0;
};

struct RecommendResult {
  std::map<std::size_t, double> precision;  // by K, averaged over users
  std::size_t users = 0;
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    ab += a[j] * b[j];
    aa += a[j] * a[j];
    bb += b[j] * b[j];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

/// Precision@K per user from cosine scores of held-out positives and
/// sampled negatives against the mean embedding of the remaining history.
/// Equal scores rank the lower item id first. `negative_override`, when
/// non-empty, supplies each user's negatives instead of sampling.
inline RecommendResult recommend_eval(const Matrix<double>& items,
                                      const std::vector<std::vector<std::size_t>>& histories,
                                      const RecommendConfig& cfg,
                                      const std::vector<std::vector<std::size_t>>& negative_override = {}) {
  RecommendResult res;
  const std::size_t d = items.cols();
  for (std::size_t k : cfg.k_values)
    if (k == 0 || k > cfg.held_out + cfg.negatives) throw config_error("recommend: K out of range");
  for (std::size_t u = 0; u < histories.size(); ++u) {
    const auto& h = histories[u];
    if (h.size() <= cfg.held_out)
      throw data_error("recommend: user " + std::to_string(u) + " has insufficient history");
    for (std::size_t it : h)
      if (it >= items.rows()) throw data_error("recommend: item id out of range");
    const std::size_t split = h.size() - cfg.held_out;
    std::vector<double> user(d, 0.0);
    for (std::size_t i = 0; i < split; ++i)
      for (std::size_t j = 0; j < d; ++j) user[j] += items(h[i], j);
    for (double& x : user) x /= static_cast<double>(split);

    std::vector<std::size_t> negs;
    if (!negative_override.empty()) {
      negs = negative_override.at(u);
    } else {
      std::vector<std::size_t> avail;
      for (std::size_t it = 0; it < items.rows(); ++it)
        if (std::find(h.begin(), h.end(), it) == h.end()) avail.push_back(it);
      if (avail.size() < cfg.negatives)
        throw data_error("recommend: fewer than " + std::to_string(cfg.negatives) + " negatives available");
      Rng rng(derive_seed(cfg.seed, "negatives", u));
      for (std::size_t i : sample_without_replacement(avail.size(), cfg.negatives, rng))
        negs.push_back(avail[i]);
    }
    struct Scored {
      double score;
      std::size_t item;
      bool positive;
    };
    std::vector<Scored> scored;
    for (std::size_t i = split; i < h.size(); ++i) scored.push_back({cosine(items.row(h[i]), user), h[i], true});
    for (std::size_t it : negs) scored.push_back({cosine(items.row(it), user), it, false});
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      return a.score != b.score ? a.score > b.score : a.item < b.item;
    });
    for (std::size_t k : cfg.k_values) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < k; ++i) hits += scored[i].positive ? 1 : 0;
      res.precision[k] += static_cast<double>(hits) / static_cast<double>(k);
    }
    ++res.users;
  }
  for (auto& [k, p] : res.precision) p /= static_cast<double>(std::max<std::size_t>(res.users, 1));
  return res;
}

}  // namespace hlog
