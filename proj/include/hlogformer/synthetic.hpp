#pragma once

// Seeded generators for the desk-scale corpora.
//
// Log corpus: CloudTrail-like records, 3-4 levels deep. Six hidden record
// variables each surface in two leaves placed far apart in document order
// (one early, one late), so the linearized record is longer than a flat
// window while the pair stays reachable through the summary chain. Every
// key draws its value words from its own small pool.
//
// Co-purchase corpus: product records whose category shapes most fields,
// plus users whose histories concentrate on one or two categories.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlogformer/rng.hpp"

namespace hlog::synth {

using ordered_json = nlohmann::ordered_json;

namespace detail {

/// Pool of `n` pseudo-words for a key: "<stem><letters>".
inline std::string pool_word(const std::string& stem, std::size_t i) {
  static const char* syll[] = {"ka", "lo", "mi", "nu", "pe", "ri", "so", "tu",
                               "va", "we", "xi", "yo", "za", "be", "co", "du"};
  return stem + syll[i % 16] + (i >= 16 ? syll[(i / 16) % 16] : "");
}

/// Value `i` of a key: `words` consecutive pool words starting at i.
inline std::string pool_value(const std::string& stem, std::size_t pool, std::size_t i,
                              std::size_t words) {
  std::string out;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) out += ' ';
    out += pool_word(stem, (i + w * 3) % pool);
  }
  return out;
}

}  // namespace detail

struct LogRecord {
  std::string json;
  std::size_t action = 0;  // supervised label source (8 classes)
};

inline constexpr std::size_t kLatentValues = 8;

inline LogRecord make_log_record(Rng& rng) {
  using detail::pool_value;
  const std::size_t tenant = uniform_index(rng, kLatentValues);
  const std::size_t action = uniform_index(rng, kLatentValues);
  const std::size_t user = uniform_index(rng, kLatentValues);
  const std::size_t region = uniform_index(rng, kLatentValues);
  const std::size_t project = uniform_index(rng, kLatentValues);
  const std::size_t device = uniform_index(rng, kLatentValues);
  auto carrier = [&](const std::string& stem, std::size_t latent) {
    return pool_value(stem, kLatentValues, latent, 1);
  };
  auto noise = [&](const std::string& stem) {
    return pool_value(stem, 4, uniform_index(rng, 4), 2);
  };

  ordered_json r;
  r["tenant"] = carrier("tn", tenant);
  r["event"]["name"] = carrier("ev", action);
  r["event"]["context"]["project"] = carrier("pj", project);
  r["event"]["context"]["stage"] = noise("sg");
  r["event"]["time"]["zone"] = noise("zn");
  r["event"]["time"]["shift"] = noise("sh");
  r["actor"]["identity"]["user"] = carrier("us", user);
  r["actor"]["identity"]["role"] = pool_value("rl", 4, user % 4, 2);
  r["actor"]["session"]["mfa"] = noise("mf");
  r["actor"]["session"]["device"]["model"] = carrier("dv", device);
  r["actor"]["session"]["device"]["os"] = pool_value("os", 4, device % 4, 2);
  r["request"]["params"]["region"] = carrier("rg", region);
  r["request"]["params"]["object"] = noise("ob");
  r["request"]["options"]["mode"] = noise("md");
  r["request"]["options"]["retries"] = static_cast<int>(uniform_index(rng, 4));
  const std::size_t n_res = 1 + uniform_index(rng, 3);
  ordered_json res = ordered_json::array();
  for (std::size_t i = 0; i < n_res; ++i) {
    ordered_json e;
    e["kind"] = noise("kd");
    e["scope"] = pool_value("sc", 4, project % 4, 2);
    res.push_back(e);
  }
  r["resources"] = res;
  r["client"]["agent"]["build"] = carrier("bd", device);
  r["client"]["agent"]["channel"] = noise("ch");
  r["client"]["geo"]["datacenter"] = carrier("dc", region);
  r["audit"]["owner"]["org"] = carrier("og", tenant);
  r["audit"]["owner"]["ledger"] = carrier("lg", project);
  r["audit"]["reviewer"]["approved_for"] = carrier("ap", user);
  r["audit"]["reviewer"]["note"] = noise("nt");
  r["response"]["status"] = noise("st");
  r["response"]["detail"]["operation"] = carrier("op", action);
  r["response"]["detail"]["code"] = noise("cd");
  return {r.dump(), action};
}

/// `n` records from `seed`, one JSON document each.
inline std::vector<LogRecord> log_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "log-corpus"));
  std::vector<LogRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_log_record(rng));
  return out;
}

struct CoPurchaseCorpus {
  std::vector<std::string> items;                 // JSON record per item
  std::vector<std::size_t> item_category;
  std::vector<std::vector<std::size_t>> histories;  // per user, purchase order
};

inline constexpr std::size_t kCategories = 8;

inline CoPurchaseCorpus copurchase_corpus(std::size_t n_items, std::size_t n_users,
                                          std::size_t history_len, std::uint64_t seed) {
  using detail::pool_value;
  Rng rng(derive_seed(seed, "copurchase"));
  CoPurchaseCorpus c;
  std::vector<std::vector<std::size_t>> by_cat(kCategories);
  for (std::size_t i = 0; i < n_items; ++i) {
    const std::size_t cat = i % kCategories;
    const std::size_t brand = uniform_index(rng, 4);
    auto noise = [&](const std::string& stem) { return pool_value(stem, 4, uniform_index(rng, 4), 2); };
    ordered_json r;
    r["item"]["title"] = pool_value("ti", kCategories, cat, 3);
    r["item"]["brand"] = pool_value("br" + std::to_string(cat), 4, brand, 1);
    r["item"]["color"] = noise("cl");
    r["listing"]["price"]["band"] = pool_value("pb", 4, cat % 4, 2);
    r["listing"]["price"]["currency"] = noise("cu");
    r["listing"]["seller"]["tier"] = noise("tr");
    r["specs"]["material"] = pool_value("mt", kCategories, cat, 2);
    r["specs"]["size"] = noise("sz");
    r["reviews"]["summary"] = pool_value("rv", kCategories, cat, 3);
    r["reviews"]["stars"] = static_cast<int>(1 + uniform_index(rng, 5));
    r["meta"]["department"] = pool_value("dp", kCategories, cat, 3);
    c.items.push_back(r.dump());
    c.item_category.push_back(cat);
    by_cat[cat].push_back(i);
  }
  for (std::size_t u = 0; u < n_users; ++u) {
    const std::size_t a = uniform_index(rng, kCategories);
    const std::size_t b = uniform_index(rng, kCategories);
    std::vector<std::size_t> h;
    while (h.size() < history_len) {
      const double x = uniform_real(rng);
      const std::size_t cat = x < 0.6 ? a : (x < 0.9 ? b : uniform_index(rng, kCategories));
      const auto& pool = by_cat[cat];
      const std::size_t item = pool[uniform_index(rng, pool.size())];
      bool dup = false;
      for (std::size_t v : h) dup = dup || v == item;
      if (!dup) h.push_back(item);
    }
    c.histories.push_back(std::move(h));
  }
  return c;
}

}  // namespace hlog::synth
