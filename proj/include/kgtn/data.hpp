/**
 * Copyright 2026 The kgtn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace kgtn {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Id = std::uint32_t;

struct Interaction {
  Id user = 0;
  Id item = 0;
  int label = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct Triple {
  Id head = 0;
  Id relation = 0;
  Id tail = 0;
  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Parsed ratings file with users and items densely renumbered.
struct RawInteractions {
  std::vector<Interaction> rows;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<std::uint64_t> raw_user_ids;  // dense id -> id in the file
  std::vector<std::uint64_t> raw_item_ids;

  std::size_t positives() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.label == 1; }));
  }
  std::size_t negatives() const { return rows.size() - positives(); }
};

namespace detail {

inline std::vector<std::uint64_t> parse_fields(const std::string& line, std::size_t lineno,
                                               const std::string& source) {
  std::vector<std::uint64_t> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    std::uint64_t v = 0;
    std::size_t used = 0;
    try {
      if (tok.empty() || tok[0] == '-' || tok[0] == '+') throw std::invalid_argument(tok);
      v = std::stoull(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size())
      throw ParseError(source + ":" + std::to_string(lineno) + ": '" + tok +
                       "' is not a non-negative integer");
    out.push_back(v);
  }
  if (out.size() != 3)
    throw ParseError(source + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                     std::to_string(out.size()));
  return out;
}

template <class F>
void for_each_record(std::istream& in, const std::string& source, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto v = parse_fields(line, lineno, source);
    f(v[0], v[1], v[2], lineno);
  }
}

inline Id checked_id(std::size_t v, const char* what) {
  if (v >= std::numeric_limits<Id>::max())
    throw ConsistencyError(std::string(what) + " id space overflows 32 bits");
  return static_cast<Id>(v);
}

inline std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline RawInteractions parse_interactions(std::istream& in, const std::string& source = "<input>") {
  std::vector<std::array<std::uint64_t, 3>> raw;
  detail::for_each_record(in, source, [&](auto u, auto i, auto label, std::size_t lineno) {
    if (label > 1)
      throw FormatError(source + ":" + std::to_string(lineno) + ": label " + std::to_string(label) +
                        " is not 0 or 1");
    raw.push_back({u, i, label});
  });
  if (raw.empty()) throw EmptyDatasetError(source + ": no interactions");

  RawInteractions out;
  std::set<std::uint64_t> users, items;
  for (const auto& r : raw) {
    users.insert(r[0]);
    items.insert(r[1]);
  }
  out.raw_user_ids.assign(users.begin(), users.end());
  out.raw_item_ids.assign(items.begin(), items.end());
  out.n_users = users.size();
  out.n_items = items.size();
  auto dense = [](const std::vector<std::uint64_t>& ids, std::uint64_t raw_id) {
    return static_cast<Id>(std::lower_bound(ids.begin(), ids.end(), raw_id) - ids.begin());
  };
  std::set<Interaction> seen;
  for (const auto& r : raw) {
    Interaction x{dense(out.raw_user_ids, r[0]), dense(out.raw_item_ids, r[1]),
                  static_cast<int>(r[2])};
    if (seen.insert(x).second) out.rows.push_back(x);
  }
  return out;
}

inline RawInteractions load_interactions(const std::filesystem::path& path) {
  auto in = detail::open_or_throw(path);
  return parse_interactions(in, path.string());
}

/// Bidirectional CSR adjacency over observed (user, item) pairs.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  static InteractionGraph build(std::size_t n_users, std::size_t n_items,
                                std::vector<std::pair<Id, Id>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    InteractionGraph g;
    g.n_users_ = n_users;
    g.n_items_ = n_items;
    g.user_offsets_.assign(n_users + 1, 0);
    g.item_offsets_.assign(n_items + 1, 0);
    for (auto [u, i] : pairs) {
      if (u >= n_users || i >= n_items)
        throw ConsistencyError("interaction (" + std::to_string(u) + "," + std::to_string(i) +
                               ") out of range");
      ++g.user_offsets_[u + 1];
      ++g.item_offsets_[i + 1];
      g.pairs_.insert(key(u, i));
    }
    for (std::size_t u = 0; u < n_users; ++u) g.user_offsets_[u + 1] += g.user_offsets_[u];
    for (std::size_t i = 0; i < n_items; ++i) g.item_offsets_[i + 1] += g.item_offsets_[i];
    g.user_items_.resize(pairs.size());
    g.item_users_.resize(pairs.size());
    std::vector<Id> ucur(g.user_offsets_.begin(), g.user_offsets_.end() - 1);
    std::vector<Id> icur(g.item_offsets_.begin(), g.item_offsets_.end() - 1);
    for (auto [u, i] : pairs) {
      g.user_items_[ucur[u]++] = i;
      g.item_users_[icur[i]++] = u;
    }
    return g;
  }

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t n_edges() const { return user_items_.size(); }

  bool contains(Id u, Id i) const { return pairs_.count(key(u, i)) != 0; }
  std::span<const Id> items_of(Id u) const {
    return std::span<const Id>(user_items_).subspan(user_offsets_[u],
                                                     user_offsets_[u + 1] - user_offsets_[u]);
  }
  std::span<const Id> users_of(Id i) const {
    return std::span<const Id>(item_users_).subspan(item_offsets_[i],
                                                     item_offsets_[i + 1] - item_offsets_[i]);
  }

  const std::vector<Id>& user_offsets() const { return user_offsets_; }
  const std::vector<Id>& user_items() const { return user_items_; }
  const std::vector<Id>& item_offsets() const { return item_offsets_; }
  const std::vector<Id>& item_users() const { return item_users_; }

  std::vector<std::pair<Id, Id>> pairs() const {
    std::vector<std::pair<Id, Id>> out;
    out.reserve(n_edges());
    for (Id u = 0; u < n_users_; ++u)
      for (Id i : items_of(u)) out.emplace_back(u, i);
    return out;
  }

 private:
  static std::uint64_t key(Id u, Id i) { return (std::uint64_t{u} << 32) | i; }

  std::size_t n_users_ = 0, n_items_ = 0;
  std::vector<Id> user_offsets_{0}, user_items_, item_offsets_{0}, item_users_;
  std::unordered_set<std::uint64_t> pairs_;
};

/// Triple store with per-head CSR adjacency and a mutable active-slot mask.
/// Items occupy the entity id prefix [0, n_items).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph build(std::size_t n_entities, std::size_t n_relations,
                              std::vector<Triple> triples) {
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
    KnowledgeGraph kg;
    kg.n_entities_ = n_entities;
    kg.n_relations_ = n_relations;
    kg.offsets_.assign(n_entities + 1, 0);
    for (const auto& t : triples) {
      if (t.head >= n_entities || t.tail >= n_entities || t.relation >= n_relations)
        throw ConsistencyError("triple (" + std::to_string(t.head) + "," +
                               std::to_string(t.relation) + "," + std::to_string(t.tail) +
                               ") out of range");
      ++kg.offsets_[t.head + 1];
    }
    for (std::size_t e = 0; e < n_entities; ++e) kg.offsets_[e + 1] += kg.offsets_[e];
    // triples are sorted by head, so slot order equals triple order
    kg.slot_relation_.reserve(triples.size());
    kg.slot_tail_.reserve(triples.size());
    for (const auto& t : triples) {
      kg.slot_relation_.push_back(t.relation);
      kg.slot_tail_.push_back(t.tail);
    }
    kg.triples_ = std::move(triples);
    kg.active_.assign(kg.triples_.size(), 1);
    return kg;
  }

  std::size_t n_entities() const { return n_entities_; }
  std::size_t n_relations() const { return n_relations_; }
  std::size_t n_slots() const { return triples_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<Id>& offsets() const { return offsets_; }
  Id slot_relation(std::size_t s) const { return slot_relation_[s]; }
  Id slot_tail(std::size_t s) const { return slot_tail_[s]; }
  Id slot_head(std::size_t s) const { return triples_[s].head; }
  std::size_t degree(Id head) const { return offsets_[head + 1] - offsets_[head]; }

  bool active(std::size_t slot) const { return active_[slot] != 0; }
  const std::vector<std::uint8_t>& active_mask() const { return active_; }
  std::size_t active_count() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
  }
  void set_active_mask(std::vector<std::uint8_t> mask) {
    if (mask.size() != active_.size()) throw ConsistencyError("active mask size mismatch");
    active_ = std::move(mask);
  }
  void reset_active() { std::fill(active_.begin(), active_.end(), 1); }

 private:
  std::size_t n_entities_ = 0, n_relations_ = 0;
  std::vector<Triple> triples_;
  std::vector<Id> offsets_{0}, slot_relation_, slot_tail_;
  std::vector<std::uint8_t> active_;
};

/// Parses a triple file. When `item_raw_ids` is given, those raw entity ids
/// are pinned to the prefix [0, n_items) in order; remaining entities follow
/// in ascending raw id order.
inline KnowledgeGraph parse_kg(std::istream& in, const std::string& source = "<input>",
                               const std::vector<std::uint64_t>* item_raw_ids = nullptr) {
  std::vector<std::array<std::uint64_t, 3>> raw;
  detail::for_each_record(in, source, [&](auto h, auto r, auto t, std::size_t) {
    raw.push_back({h, r, t});
  });
  std::map<std::uint64_t, Id> entity_map, relation_map;
  if (item_raw_ids)
    for (auto id : *item_raw_ids)
      entity_map.emplace(id, detail::checked_id(entity_map.size(), "entity"));
  std::set<std::uint64_t> others, relations;
  for (const auto& r : raw) {
    for (auto e : {r[0], r[2]})
      if (!entity_map.count(e)) others.insert(e);
    relations.insert(r[1]);
  }
  for (auto e : others) entity_map.emplace(e, detail::checked_id(entity_map.size(), "entity"));
  for (auto r : relations) relation_map.emplace(r, detail::checked_id(relation_map.size(), "relation"));
  std::vector<Triple> triples;
  triples.reserve(raw.size());
  for (const auto& r : raw)
    triples.push_back({entity_map.at(r[0]), relation_map.at(r[1]), entity_map.at(r[2])});
  return KnowledgeGraph::build(entity_map.size(), relation_map.size(), std::move(triples));
}

inline KnowledgeGraph load_kg(const std::filesystem::path& path,
                              const std::vector<std::uint64_t>* item_raw_ids = nullptr) {
  auto in = detail::open_or_throw(path);
  return parse_kg(in, path.string(), item_raw_ids);
}

inline void write_interactions(const std::filesystem::path& path,
                               const std::vector<Interaction>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) out << r.user << '\t' << r.item << '\t' << r.label << '\n';
}

inline void write_kg(const std::filesystem::path& path, const std::vector<Triple>& triples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

struct NegativeDraw {
  std::vector<Id> items;
  bool truncated = false;
};

/// Uniform draw without replacement from the items user `u` has not
/// interacted with in `graph`.
template <class Rng>
NegativeDraw negative_sample(const InteractionGraph& graph, Id u, std::size_t count, Rng& rng) {
  NegativeDraw out;
  if (count == 0) return out;
  std::vector<Id> pool;
  pool.reserve(graph.n_items());
  for (Id i = 0; i < graph.n_items(); ++i)
    if (!graph.contains(u, i)) pool.push_back(i);
  if (pool.empty()) throw ConsistencyError("user " + std::to_string(u) + " has no negatives");
  if (count > pool.size()) {
    out.truncated = true;
    count = pool.size();
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  out.items.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

inline NegativeDraw negative_sample(const InteractionGraph& graph, Id u, std::size_t count,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return negative_sample(graph, u, count, rng);
}

struct LabeledPair {
  Id user = 0;
  Id item = 0;
  int label = 0;
  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
  friend auto operator<=>(const LabeledPair&, const LabeledPair&) = default;
};

struct SplitRatios {
  double train = 0.6;
  double eval = 0.2;
  double test = 0.2;

  void validate() const {
    if (train < 0 || eval < 0 || test < 0) throw ConfigError("split ratios must be non-negative");
    if (std::abs(train + eval + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  }
};

/// Training positives plus label-balanced eval/test lists.
struct Split {
  std::vector<LabeledPair> train;  // positives only; negatives are drawn per epoch
  std::vector<LabeledPair> eval;
  std::vector<LabeledPair> test;
};

/// Per-user stratified split of the positive pairs. Users with fewer than
/// three positives keep all of them in train. Eval/test get as many sampled
/// negatives as positives, drawn from items the user never interacted with.
inline Split split(const InteractionGraph& observed, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  std::mt19937_64 rng(seed);
  Split out;
  for (Id u = 0; u < observed.n_users(); ++u) {
    std::vector<Id> items(observed.items_of(u).begin(), observed.items_of(u).end());
    std::shuffle(items.begin(), items.end(), rng);
    std::size_t n_eval = 0, n_test = 0;
    if (items.size() >= 3) {
      n_eval = static_cast<std::size_t>(std::floor(ratios.eval * items.size() + 1e-9));
      n_test = static_cast<std::size_t>(std::floor(ratios.test * items.size() + 1e-9));
    }
    // held-out positives need as many negatives; shrink when the pool is short
    const std::size_t pool = observed.n_items() - items.size();
    while (n_eval + n_test > pool) (n_test >= n_eval ? n_test : n_eval)--;
    const std::size_t n_train = items.size() - n_eval - n_test;
    for (std::size_t k = 0; k < items.size(); ++k) {
      auto& dst = k < n_train ? out.train : (k < n_train + n_eval ? out.eval : out.test);
      dst.push_back({u, items[k], 1});
    }
    if (n_eval + n_test == 0) continue;
    auto neg = negative_sample(observed, u, n_eval + n_test, rng);
    for (std::size_t k = 0; k < neg.items.size(); ++k)
      (k < n_eval ? out.eval : out.test).push_back({u, neg.items[k], 0});
  }
  return out;
}

/// Adds floor(ratio * |train|) fake positives drawn uniformly from pairs that
/// are neither observed nor present in eval/test. Eval and test are untouched.
inline Split inject_noise(const Split& base, const InteractionGraph& observed, double ratio,
                          std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 0.5))
    throw ConfigError("noise ratio " + std::to_string(ratio) + " outside [0, 0.5]");
  Split out = base;
  const auto n_fake = static_cast<std::size_t>(std::floor(ratio * base.train.size() + 1e-9));
  if (n_fake == 0) return out;
  auto key = [](Id u, Id i) { return (std::uint64_t{u} << 32) | i; };
  std::unordered_set<std::uint64_t> taken;
  for (const auto* part : {&base.train, &base.eval, &base.test})
    for (const auto& p : *part) taken.insert(key(p.user, p.item));
  const std::size_t space = observed.n_users() * observed.n_items();
  std::size_t blocked = taken.size();
  for (Id u = 0; u < observed.n_users(); ++u)
    for (Id i : observed.items_of(u))
      if (!taken.count(key(u, i))) ++blocked;
  if (space < blocked + n_fake) throw ConfigError("not enough unobserved pairs for noise ratio");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Id> pick_u(0, static_cast<Id>(observed.n_users() - 1));
  std::uniform_int_distribution<Id> pick_i(0, static_cast<Id>(observed.n_items() - 1));
  std::size_t added = 0;
  while (added < n_fake) {
    const Id u = pick_u(rng), i = pick_i(rng);
    if (observed.contains(u, i) || !taken.insert(key(u, i)).second) continue;
    out.train.push_back({u, i, 1});
    ++added;
  }
  return out;
}

/// FNV-1a over a labeled pair list; used to show eval/test stay fixed.
inline std::uint64_t hash_pairs(const std::vector<LabeledPair>& pairs) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : pairs) {
    mix(p.user);
    mix(p.item);
    mix(static_cast<std::uint32_t>(p.label));
  }
  return h;
}

/// Everything a training run consumes.
struct Dataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  KnowledgeGraph kg;
  InteractionGraph observed;  // every positive in the source
  InteractionGraph train;     // training positives (after any noise)
  Split split;
};

inline InteractionGraph positives_graph(std::size_t n_users, std::size_t n_items,
                                        const std::vector<LabeledPair>& pairs) {
  std::vector<std::pair<Id, Id>> p;
  p.reserve(pairs.size());
  for (const auto& x : pairs)
    if (x.label == 1) p.emplace_back(x.user, x.item);
  return InteractionGraph::build(n_users, n_items, std::move(p));
}

inline Dataset assemble(const RawInteractions& raw, KnowledgeGraph kg, const SplitRatios& ratios,
                        std::uint64_t seed) {
  if (raw.n_items > kg.n_entities())
    throw ConsistencyError("items (" + std::to_string(raw.n_items) +
                           ") exceed entity id space (" + std::to_string(kg.n_entities()) + ")");
  Dataset ds;
  ds.n_users = raw.n_users;
  ds.n_items = raw.n_items;
  ds.kg = std::move(kg);
  std::vector<std::pair<Id, Id>> pos;
  for (const auto& r : raw.rows)
    if (r.label == 1) pos.emplace_back(r.user, r.item);
  if (pos.empty()) throw EmptyDatasetError("no positive interactions");
  ds.observed = InteractionGraph::build(ds.n_users, ds.n_items, std::move(pos));
  ds.split = split(ds.observed, ratios, seed);
  ds.train = positives_graph(ds.n_users, ds.n_items, ds.split.train);
  return ds;
}

/// Same dataset with training positives contaminated by `ratio` fake pairs.
inline Dataset with_noise(const Dataset& base, double ratio, std::uint64_t seed) {
  Dataset ds = base;
  ds.split = inject_noise(base.split, base.observed, ratio, seed);
  ds.train = positives_graph(ds.n_users, ds.n_items, ds.split.train);
  return ds;
}

/// Loads `ratings_final.txt` and `kg_final.txt` from a directory.
inline Dataset load_dataset(const std::filesystem::path& dir, const SplitRatios& ratios,
                            std::uint64_t seed, const std::string& ratings_file = "ratings_final.txt",
                            const std::string& kg_file = "kg_final.txt") {
  auto raw = load_interactions(dir / ratings_file);
  auto kg = load_kg(dir / kg_file, &raw.raw_item_ids);
  return assemble(raw, std::move(kg), ratios, seed);
}

/// Planted-preference fixture. Entities past the item prefix act as group
/// tags: item i is tagged with group entity n_items + (i mod G), and user u
/// belongs to group u mod G. In-group pairs are positive with probability
/// min(1, 1.8 * density), out-of-group pairs with max(0, 1.8 * density - 0.8),
/// so density 0.5 gives 0.9 / 0.1 and density 1 gives the complete graph.
struct SyntheticDataset {
  RawInteractions ratings;
  std::vector<Triple> triples;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  std::vector<Id> user_group;
  std::vector<Id> item_group;
  double p_in = 0.0;
  double p_out = 0.0;
};

inline SyntheticDataset generate_synthetic(std::size_t n_users, std::size_t n_items,
                                           std::size_t n_entities, std::size_t n_relations,
                                           double density, std::uint64_t seed) {
  if (n_users == 0 || n_items == 0) throw ConfigError("synthetic dataset needs users and items");
  if (n_items > n_entities) throw ConfigError("n_items must not exceed n_entities");
  if (n_relations == 0) throw ConfigError("synthetic dataset needs at least one relation");
  if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must lie in (0, 1]");

  SyntheticDataset out;
  out.n_entities = n_entities;
  out.n_relations = n_relations;
  out.p_in = std::min(1.0, 1.8 * density);
  out.p_out = std::max(0.0, 1.8 * density - 0.8);
  const std::size_t n_groups = std::max<std::size_t>(1, n_entities - n_items);
  // without attribute entities the items tag themselves
  const bool has_attributes = n_entities > n_items;
  auto group_entity = [&](Id g) {
    return static_cast<Id>(has_attributes ? n_items + g : g % n_items);
  };

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin_in(out.p_in), coin_out(out.p_out);
  for (Id i = 0; i < n_items; ++i) out.item_group.push_back(static_cast<Id>(i % n_groups));
  std::vector<Interaction> rows;
  for (Id u = 0; u < n_users; ++u) {
    const Id g = static_cast<Id>(u % n_groups);
    out.user_group.push_back(g);
    std::vector<Id> liked;
    while (liked.empty()) {
      for (Id i = 0; i < n_items; ++i) {
        const bool in_group = out.item_group[i] == g;
        if (in_group ? coin_in(rng) : coin_out(rng)) liked.push_back(i);
      }
    }
    std::vector<Id> others;
    for (Id i = 0, k = 0; i < n_items; ++i) {
      if (k < liked.size() && liked[k] == i) {
        ++k;
        continue;
      }
      others.push_back(i);
    }
    std::shuffle(others.begin(), others.end(), rng);
    for (Id i : liked) rows.push_back({u, i, 1});
    for (std::size_t k = 0; k < std::min(liked.size(), others.size()); ++k)
      rows.push_back({u, others[k], 0});
  }
  out.ratings.rows = std::move(rows);
  out.ratings.n_users = n_users;
  out.ratings.n_items = n_items;
  for (std::uint64_t u = 0; u < n_users; ++u) out.ratings.raw_user_ids.push_back(u);
  for (std::uint64_t i = 0; i < n_items; ++i) out.ratings.raw_item_ids.push_back(i);

  // relation 0: planted group tag; 1: random item -> entity links;
  // 2+: links between group entities
  std::uniform_int_distribution<Id> any_entity(0, static_cast<Id>(n_entities - 1));
  std::bernoulli_distribution half(0.5);
  for (Id i = 0; i < n_items; ++i) {
    out.triples.push_back({i, 0, group_entity(out.item_group[i])});
    if (n_relations >= 2 && (i == 0 || half(rng))) out.triples.push_back({i, 1, any_entity(rng)});
  }
  if (n_relations >= 3) {
    const std::size_t chain = std::max(n_groups, n_relations - 2);
    for (std::size_t k = 0; k < chain; ++k) {
      const auto g = static_cast<Id>(k % n_groups);
      const auto rel = static_cast<Id>(2 + k % (n_relations - 2));
      out.triples.push_back({group_entity(g), rel, group_entity(static_cast<Id>((g + 1) % n_groups))});
    }
  }
  std::sort(out.triples.begin(), out.triples.end());
  out.triples.erase(std::unique(out.triples.begin(), out.triples.end()), out.triples.end());
  return out;
}

inline Dataset assemble(const SyntheticDataset& syn, const SplitRatios& ratios, std::uint64_t seed) {
  return assemble(syn.ratings, KnowledgeGraph::build(syn.n_entities, syn.n_relations, syn.triples),
                  ratios, seed);
}

inline void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& syn) {
  std::filesystem::create_directories(dir);
  write_interactions(dir / "ratings_final.txt", syn.ratings.rows);
  write_kg(dir / "kg_final.txt", syn.triples);
}

}  // namespace kgtn
