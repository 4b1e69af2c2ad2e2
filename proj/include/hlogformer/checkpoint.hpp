#pragma once

// Versioned text checkpoint. Layout is documented in docs/checkpoint_format.md.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hlogformer/encoder.hpp"
#include "hlogformer/hlogformer.hpp"
#include "hlogformer/tokenizer.hpp"

namespace hlog {

inline constexpr const char* kCheckpointMagic = "hlogformer-checkpoint";
inline constexpr int kCheckpointVersion = 1;

template <class T>
struct Checkpoint {
  EncoderStack<T> stack;
  Vocab vocab;
  RunOptions options;
  Matrix<T> center;  // 1 x d training-set summary center; empty if never computed
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline double parse_double(const std::string& s) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw data_error("checkpoint: bad number '" + s + "'");
  return x;
}

template <class T>
void write_matrix(std::ostream& os, const std::string& name, const Matrix<T>& m) {
  os << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(static_cast<double>(m(i, j)));
    }
    os << '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::string next() {
    std::string line;
    if (!std::getline(in_, line)) throw data_error("checkpoint: unexpected end of file");
    return line;
  }

  std::vector<std::string> fields(std::size_t expected, const std::string& tag) {
    std::istringstream ls(next());
    std::vector<std::string> f;
    std::string w;
    while (ls >> w) f.push_back(w);
    if (f.size() != expected || f[0] != tag) throw data_error("checkpoint: expected '" + tag + "' line");
    return f;
  }

 private:
  std::istringstream in_;
};

template <class T>
Matrix<T> read_matrix(LineReader& r, const std::string& name, std::size_t rows, std::size_t cols) {
  auto f = r.fields(4, "tensor");
  if (f[1] != name || std::stoul(f[2]) != rows || std::stoul(f[3]) != cols)
    throw data_error("checkpoint: tensor '" + f[1] + "' does not match expected " + name + " " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  Matrix<T> m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::istringstream ls(r.next());
    std::string w;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!(ls >> w)) throw data_error("checkpoint: short row in tensor " + name);
      m(i, j) = static_cast<T>(parse_double(w));
    }
  }
  return m;
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const Checkpoint<T>& ck) {
  const auto& c = ck.stack.config;
  std::ostringstream os;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "config " << c.vocab_size << ' ' << c.d_model << ' ' << c.heads << ' ' << c.ffn << ' '
     << c.blocks << ' ' << c.window << ' ' << c.summary_slots << ' ' << c.seed << '\n';
  os << "mode " << mode_name(ck.options.mode) << ' ' << (ck.options.tokens_from_forward_pass ? 1 : 0) << '\n';
  os << "vocab " << ck.vocab.size() << '\n';
  for (const auto& t : ck.vocab.tokens()) os << t << '\n';
  os << "tensors " << ck.stack.tensors.size() << '\n';
  for (std::size_t i = 0; i < ck.stack.tensors.size(); ++i)
    detail::write_matrix(os, ck.stack.names[i], ck.stack.tensors[i]);
  os << "center " << (ck.center.empty() ? 0 : 1) << '\n';
  if (!ck.center.empty()) detail::write_matrix(os, "center", ck.center);
  std::string body = os.str();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
  return body + "checksum " + hex + '\n';
}

template <class T>
Checkpoint<T> deserialize_checkpoint(const std::string& text) {
  const auto pos = text.rfind("checksum ");
  if (pos == std::string::npos) throw data_error("checkpoint: missing checksum");
  const std::string body = text.substr(0, pos);
  std::string stored = text.substr(pos + 9);
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
  if (stored != hex) throw data_error("checkpoint: checksum mismatch");

  detail::LineReader r(body);
  auto head = r.fields(2, kCheckpointMagic);
  if (std::stoi(head[1]) != kCheckpointVersion)
    throw data_error("checkpoint: unsupported version " + head[1]);
  auto cf = r.fields(9, "config");
  EncoderConfig c;
  c.vocab_size = std::stoul(cf[1]);
  c.d_model = std::stoul(cf[2]);
  c.heads = std::stoul(cf[3]);
  c.ffn = std::stoul(cf[4]);
  c.blocks = std::stoul(cf[5]);
  c.window = std::stoul(cf[6]);
  c.summary_slots = std::stoul(cf[7]);
  c.seed = std::stoull(cf[8]);
  auto mf = r.fields(3, "mode");
  Checkpoint<T> ck;
  ck.options.mode = parse_mode(mf[1]);
  ck.options.tokens_from_forward_pass = mf[2] == "1";
  auto vf = r.fields(2, "vocab");
  std::vector<std::string> lines(std::stoul(vf[1]));
  for (auto& l : lines) l = r.next();
  ck.vocab = Vocab::from_lines(lines);
  if (ck.vocab.size() != c.vocab_size) throw data_error("checkpoint: vocabulary size mismatch");

  ck.stack = make_zero_stack<T>(c);
  auto tf = r.fields(2, "tensors");
  if (std::stoul(tf[1]) != ck.stack.tensors.size()) throw data_error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < ck.stack.tensors.size(); ++i) {
    auto& t = ck.stack.tensors[i];
    t = detail::read_matrix<T>(r, ck.stack.names[i], t.rows(), t.cols());
  }
  auto cen = r.fields(2, "center");
  if (cen[1] == "1") ck.center = detail::read_matrix<T>(r, "center", 1, c.d_model);
  return ck;
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot write checkpoint " + path);
  f << serialize_checkpoint(ck);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint<T>(ss.str());
}

}  // namespace hlog
