#pragma once

// Hierarchy trees for dictionary-like log records.
//
// A record is one JSON value. Objects and arrays become internal nodes,
// scalars become leaves. Mapping keys name their child; array elements are
// keyed by decimal index. Duplicate keys are kept as separate siblings, so
// parsing goes through the SAX interface rather than a json DOM.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlogformer/errors.hpp"

namespace hlog {

using NodeId = std::size_t;

enum class NodeKind { Object, Array, String, Number, Boolean, Null };

struct LogNode {
  NodeId id = 0;
  std::string key_text;                   // empty for the root
  std::optional<std::string> value_text;  // present iff leaf
  std::vector<NodeId> children;           // document order
  NodeKind kind = NodeKind::Object;
  std::optional<NodeId> parent;

  bool is_leaf() const noexcept { return value_text.has_value(); }
};

struct LogTree {
  std::vector<LogNode> nodes;
  NodeId root_id = 0;
  std::string record_id;
  bool wrapped_scalar = false;  // record was a bare scalar under a synthetic root

  const LogNode& node(NodeId id) const { return nodes.at(id); }
  const LogNode& root() const { return nodes.at(root_id); }

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& v : nodes) n += v.is_leaf() ? 1 : 0;
    return n;
  }
};

inline constexpr std::size_t kDefaultMaxDepth = 32;

namespace detail {

class TreeBuilder : public nlohmann::json_sax<nlohmann::json> {
 public:
  explicit TreeBuilder(std::size_t max_depth) : max_depth_(max_depth) {}

  bool null() override { return leaf("null", NodeKind::Null); }
  bool boolean(bool v) override { return leaf(v ? "true" : "false", NodeKind::Boolean); }
  bool number_integer(number_integer_t v) override {
    return leaf(std::to_string(v), NodeKind::Number);
  }
  bool number_unsigned(number_unsigned_t v) override {
    return leaf(std::to_string(v), NodeKind::Number);
  }
  bool number_float(number_float_t, const string_t& s) override {
    return leaf(s, NodeKind::Number);
  }
  bool string(string_t& s) override { return leaf(s, NodeKind::String); }
  bool binary(binary_t&) override { return fail_reason("binary values are not supported"); }

  bool start_object(std::size_t) override { return open(NodeKind::Object); }
  bool end_object() override { return close(); }
  bool start_array(std::size_t) override { return open(NodeKind::Array); }
  bool end_array() override { return close(); }

  bool key(string_t& k) override {
    pending_key_ = k;
    return true;
  }

  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    error_position_ = position;
    error_reason_ = ex.what();
    return false;
  }

  LogTree finish(std::string record_id) {
    LogTree tree;
    tree.nodes = std::move(nodes_);
    tree.root_id = 0;
    tree.record_id = std::move(record_id);
    tree.wrapped_scalar = wrapped_scalar_;
    return tree;
  }

  bool depth_exceeded = false;
  std::optional<std::size_t> error_position_;
  std::string error_reason_;

 private:
  bool fail_reason(std::string reason) {
    error_position_ = 0;
    error_reason_ = std::move(reason);
    return false;
  }

  NodeId add_node(NodeKind kind) {
    LogNode n;
    n.id = nodes_.size();
    n.kind = kind;
    if (!stack_.empty()) {
      LogNode& parent = nodes_[stack_.back()];
      n.parent = parent.id;
      n.key_text = parent.kind == NodeKind::Array ? std::to_string(parent.children.size())
                                                  : pending_key_;
      parent.children.push_back(n.id);
    }
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  bool leaf(std::string text, NodeKind kind) {
    if (stack_.empty()) {
      // Top-level scalar: wrap under a synthetic root.
      add_node(NodeKind::Object);
      wrapped_scalar_ = true;
      stack_.push_back(0);
      pending_key_ = "value";
      const NodeId id = add_node(kind);
      nodes_[id].value_text = std::move(text);
      stack_.pop_back();
      return true;
    }
    const NodeId id = add_node(kind);
    nodes_[id].value_text = std::move(text);
    return true;
  }

  bool open(NodeKind kind) {
    if (stack_.size() + 1 > max_depth_) {
      depth_exceeded = true;
      return false;
    }
    stack_.push_back(add_node(kind));
    return true;
  }

  bool close() {
    const NodeId id = stack_.back();
    stack_.pop_back();
    LogNode& n = nodes_[id];
    // An empty nested container carries no children; keep it as a leaf
    // whose value is its literal text. An empty top-level record stays an
    // empty root and is rejected later as EmptyTree.
    if (n.children.empty() && n.parent) {
      n.value_text = n.kind == NodeKind::Object ? "{}" : "[]";
    }
    return true;
  }

  std::size_t max_depth_;
  std::vector<LogNode> nodes_;
  std::vector<NodeId> stack_;
  std::string pending_key_;
  bool wrapped_scalar_ = false;
};

}  // namespace detail

/// Parses one JSON record into a LogTree.
inline LogTree parse_record(const std::string& line, std::string record_id = {},
                            std::size_t max_depth = kDefaultMaxDepth) {
  detail::TreeBuilder builder(max_depth);
  const bool ok = nlohmann::json::sax_parse(line, &builder, nlohmann::json::input_format_t::json,
                                            /*strict=*/true);
  if (builder.depth_exceeded) throw DepthExceeded(max_depth);
  if (!ok) {
    throw MalformedRecord(builder.error_position_.value_or(0),
                          builder.error_reason_.empty() ? "parse failed" : builder.error_reason_);
  }
  return builder.finish(std::move(record_id));
}

/// Pre-order traversal: node before its children, children in document order.
inline std::vector<NodeId> dfs_order(const LogTree& tree) {
  std::vector<NodeId> order;
  order.reserve(tree.nodes.size());
  std::vector<NodeId> stack{tree.root_id};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    order.push_back(id);
    const auto& ch = tree.node(id).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

inline std::vector<NodeId> leaves_in_order(const LogTree& tree) {
  std::vector<NodeId> out;
  for (NodeId id : dfs_order(tree))
    if (tree.node(id).is_leaf()) out.push_back(id);
  return out;
}

namespace detail {

inline void write_json(const LogTree& tree, NodeId id, std::string& out) {
  const LogNode& n = tree.node(id);
  if (n.is_leaf()) {
    switch (n.kind) {
      case NodeKind::String:
        out += nlohmann::json(*n.value_text).dump();
        break;
      default:
        out += *n.value_text;  // numbers, literals, and empty containers
    }
    return;
  }
  const bool array = n.kind == NodeKind::Array;
  out += array ? '[' : '{';
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (i) out += ',';
    const LogNode& c = tree.node(n.children[i]);
    if (!array) {
      out += nlohmann::json(c.key_text).dump();
      out += ':';
    }
    write_json(tree, c.id, out);
  }
  out += array ? ']' : '}';
}

}  // namespace detail

/// Compact JSON re-serialization preserving key order and duplicates.
inline std::string to_json_text(const LogTree& tree) {
  std::string out;
  if (tree.wrapped_scalar) {
    detail::write_json(tree, tree.root().children.front(), out);
    return out;
  }
  detail::write_json(tree, tree.root_id, out);
  return out;
}

}  // namespace hlog
