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

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kgtn/tensor.hpp"

namespace kgtn {

/// Per-head query/key/value projections stacked into d x d matrices: rows
/// [h*d/H, (h+1)*d/H) hold head h's (d/H) x d projection.
struct TransformerWeights {
  Tensor query;
  Tensor key;
  Tensor value;
};

struct ModelShape {
  std::size_t n_users = 0;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  std::size_t dim = 64;
  std::size_t intents = 32;
  std::size_t heads = 4;
  std::size_t depth = 1;
  bool share_transformer_weights = false;
};

/// The learnable parameter set.
struct ModelParameters {
  Tensor user_emb;      // M x d
  Tensor entity_emb;    // E x d, items occupy rows [0, N)
  Tensor relation_emb;  // R x d
  Tensor intent_user;   // K x d
  Tensor intent_item;   // K x d
  std::vector<TransformerWeights> transformer;  // one per layer, or one shared

  const TransformerWeights& layer_weights(std::size_t l) const {
    return transformer.size() == 1 ? transformer[0] : transformer.at(l);
  }

  /// Visits every parameter exactly once in a fixed order.
  template <class F>
  void for_each(F&& f) {
    f("user_emb", user_emb);
    f("entity_emb", entity_emb);
    f("relation_emb", relation_emb);
    f("intent_user", intent_user);
    f("intent_item", intent_item);
    for (std::size_t l = 0; l < transformer.size(); ++l) {
      const auto p = "transformer." + std::to_string(l);
      f(p + ".query", transformer[l].query);
      f(p + ".key", transformer[l].key);
      f(p + ".value", transformer[l].value);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParameters*>(this)->for_each(
        [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor& t) { n += t.numel(); });
    return n;
  }

  /// Deep copy: fresh storage for every tensor.
  ModelParameters clone() const {
    ModelParameters out = *this;
    out.for_each([](const std::string&, Tensor& t) {
      auto fresh = Tensor::parameter(t.shape(), {t.values().begin(), t.values().end()});
      t = fresh;
    });
    return out;
  }

  void zero_grad() {
    for_each([](const std::string&, Tensor& t) { t.zero_grad(); });
  }
};

/// Xavier-uniform matrix, bound sqrt(6 / (fan_in + fan_out)).
template <class Rng>
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng, std::size_t fan_in = 0,
                      std::size_t fan_out = 0) {
  if (fan_in == 0) fan_in = rows;
  if (fan_out == 0) fan_out = cols;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::parameter({rows, cols}, std::move(v));
}

template <class Rng>
ModelParameters init_parameters(const ModelShape& s, Rng& rng) {
  if (s.heads == 0 || s.dim % s.heads != 0)
    throw DimensionError("heads (" + std::to_string(s.heads) + ") must divide dim (" +
                         std::to_string(s.dim) + ")");
  if (s.intents == 0) throw DimensionError("intent count must be at least 1");
  ModelParameters p;
  p.user_emb = xavier_uniform(s.n_users, s.dim, rng);
  p.entity_emb = xavier_uniform(s.n_entities, s.dim, rng);
  p.relation_emb = xavier_uniform(s.n_relations, s.dim, rng);
  p.intent_user = xavier_uniform(s.intents, s.dim, rng);
  p.intent_item = xavier_uniform(s.intents, s.dim, rng);
  const std::size_t n_layers = s.share_transformer_weights ? 1 : std::max<std::size_t>(1, s.depth);
  const std::size_t head_dim = s.dim / s.heads;
  for (std::size_t l = 0; l < n_layers; ++l)
    p.transformer.push_back({xavier_uniform(s.dim, s.dim, rng, s.dim, head_dim),
                             xavier_uniform(s.dim, s.dim, rng, s.dim, head_dim),
                             xavier_uniform(s.dim, s.dim, rng, s.dim, head_dim)});
  return p;
}

}  // namespace kgtn
