#pragma once

// Segment schedule for the hierarchical encoder and the flat linearization
// used by the baseline.
//
// Each internal node i owns the segment S_i: the concatenation over its
// children j (document order) of "key_j : value_j" for a leaf child and
// "key_j :" for an internal child. Steps run in reverse pre-order of the
// internal nodes, so every node comes after all of its internal
// descendants. Segments longer than the step budget are split into
// consecutive chunks.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "hlogformer/errors.hpp"
#include "hlogformer/log_tree.hpp"
#include "hlogformer/tokenizer.hpp"

namespace hlog {

enum class TokenRole { Key, Separator, Value, Open, Close };

/// Where a token came from: the node whose key or value produced it and its
/// offset inside that key/value text. Key and value tokens of a record have
/// the same origin in the segment plan and in the linearization.
struct TokenOrigin {
  NodeId node = 0;
  TokenRole role = TokenRole::Separator;
  std::size_t offset = 0;

  bool operator==(const TokenOrigin&) const = default;
  auto operator<=>(const TokenOrigin&) const = default;
};

struct Segment {
  NodeId owner_node = 0;
  std::vector<int> token_ids;
  std::vector<TokenOrigin> origins;
  std::size_t chunk_index = 0;
};

struct SegmentPlan {
  std::vector<Segment> steps;       // forward processing order
  std::size_t total_tokens = 0;     // sum of step lengths
  std::size_t num_segments = 0;     // internal nodes, before chunking
};

struct LinearRecord {
  std::vector<int> token_ids;
  std::vector<TokenOrigin> origins;
};

inline bool is_maskable(const TokenOrigin& o, int id) {
  return (o.role == TokenRole::Key || o.role == TokenRole::Value) && id >= kNumSpecials;
}

namespace detail {

inline void append_text(const Vocab& vocab, const std::string& text, NodeId node, TokenRole role,
                        std::vector<int>& ids, std::vector<TokenOrigin>& origins) {
  std::size_t offset = 0;
  for (const auto& t : tokenize(text)) {
    ids.push_back(vocab.id(t));
    origins.push_back({node, role, offset++});
  }
}

inline void append_symbol(const Vocab& vocab, const char* sym, NodeId node, TokenRole role,
                          std::vector<int>& ids, std::vector<TokenOrigin>& origins) {
  ids.push_back(vocab.id(sym));
  origins.push_back({node, role, 0});
}

}  // namespace detail

/// Internal nodes in pre-order.
inline std::vector<NodeId> internal_nodes_preorder(const LogTree& tree) {
  std::vector<NodeId> out;
  for (NodeId id : dfs_order(tree))
    if (!tree.node(id).is_leaf()) out.push_back(id);
  return out;
}

inline SegmentPlan build_segments(const LogTree& tree, const Vocab& vocab,
                                  std::size_t max_segment_len) {
  if (max_segment_len < 4) throw config_error("max_segment_len must be >= 4");
  if (tree.leaf_count() == 0) throw EmptyTree();
  SegmentPlan plan;
  auto internal = internal_nodes_preorder(tree);
  plan.num_segments = internal.size();
  for (auto it = internal.rbegin(); it != internal.rend(); ++it) {
    const LogNode& owner = tree.node(*it);
    std::vector<int> ids;
    std::vector<TokenOrigin> origins;
    for (NodeId cid : owner.children) {
      const LogNode& child = tree.node(cid);
      detail::append_text(vocab, child.key_text, cid, TokenRole::Key, ids, origins);
      detail::append_symbol(vocab, ":", cid, TokenRole::Separator, ids, origins);
      if (child.is_leaf())
        detail::append_text(vocab, *child.value_text, cid, TokenRole::Value, ids, origins);
    }
    plan.total_tokens += ids.size();
    for (std::size_t start = 0, chunk = 0; start < ids.size(); start += max_segment_len, ++chunk) {
      const std::size_t end = std::min(ids.size(), start + max_segment_len);
      Segment s;
      s.owner_node = owner.id;
      s.chunk_index = chunk;
      s.token_ids.assign(ids.begin() + start, ids.begin() + end);
      s.origins.assign(origins.begin() + start, origins.begin() + end);
      plan.steps.push_back(std::move(s));
    }
  }
  return plan;
}

namespace detail {

inline void linearize_node(const LogTree& tree, NodeId id, const Vocab& vocab, LinearRecord& out) {
  for (NodeId cid : tree.node(id).children) {
    const LogNode& c = tree.node(cid);
    append_text(vocab, c.key_text, cid, TokenRole::Key, out.token_ids, out.origins);
    if (c.is_leaf()) {
      append_symbol(vocab, ":", cid, TokenRole::Separator, out.token_ids, out.origins);
      append_text(vocab, *c.value_text, cid, TokenRole::Value, out.token_ids, out.origins);
    } else {
      append_symbol(vocab, "{", cid, TokenRole::Open, out.token_ids, out.origins);
      linearize_node(tree, cid, vocab, out);
      append_symbol(vocab, "}", cid, TokenRole::Close, out.token_ids, out.origins);
    }
  }
}

}  // namespace detail

/// Depth-first "key : value" / "key { ... }" serialization in document order.
inline LinearRecord linearize(const LogTree& tree, const Vocab& vocab) {
  if (tree.leaf_count() == 0) throw EmptyTree();
  LinearRecord out;
  detail::linearize_node(tree, tree.root_id, vocab, out);
  return out;
}

/// The linearized record as plain text; this is what vocabularies are built from.
inline std::string record_text(const LogTree& tree) {
  std::string out;
  auto add = [&](const std::string& s) {
    if (s.empty()) return;
    if (!out.empty()) out += ' ';
    out += s;
  };
  auto walk = [&](auto&& self, NodeId id) -> void {
    for (NodeId cid : tree.node(id).children) {
      const LogNode& c = tree.node(cid);
      add(c.key_text);
      if (c.is_leaf()) {
        add(":");
        add(*c.value_text);
      } else {
        add("{");
        self(self, cid);
        add("}");
      }
    }
  };
  walk(walk, tree.root_id);
  return out;
}

}  // namespace hlog
