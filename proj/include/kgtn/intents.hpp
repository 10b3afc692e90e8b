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
#include <utility>
#include <vector>

#include "kgtn/data.hpp"
#include "kgtn/model.hpp"
#include "kgtn/ops.hpp"

namespace kgtn {

/// Snapshot of the active KG slots, grouped by head entity, in the form the
/// differentiable aggregation consumes.
struct ActiveKnowledge {
  std::size_t n_entities = 0;
  ops::Index head, relation, tail;       // one entry per active slot
  std::vector<std::uint32_t> offsets;    // n_entities + 1 segment bounds
  Tensor inv_degree;                     // [n_active] 1 / |N_h|
  Tensor passthrough;                    // [n_entities] 1 for heads with no active slot

  static ActiveKnowledge from(const KnowledgeGraph& kg) {
    ActiveKnowledge ak;
    ak.n_entities = kg.n_entities();
    ak.offsets.assign(kg.n_entities() + 1, 0);
    std::vector<double> inv, pass(kg.n_entities(), 0.0);
    for (Id e = 0; e < kg.n_entities(); ++e) {
      std::size_t deg = 0;
      for (std::size_t s = kg.offsets()[e]; s < kg.offsets()[e + 1]; ++s) {
        if (!kg.active(s)) continue;
        ak.head.push_back(e);
        ak.relation.push_back(kg.slot_relation(s));
        ak.tail.push_back(kg.slot_tail(s));
        ++deg;
      }
      ak.offsets[e + 1] = ak.offsets[e] + static_cast<std::uint32_t>(deg);
      if (deg == 0) pass[e] = 1.0;
      inv.insert(inv.end(), deg, deg ? 1.0 / static_cast<double>(deg) : 0.0);
    }
    ak.inv_degree = Tensor::from(Shape{inv.size()}, inv);
    ak.passthrough = Tensor::from(Shape{pass.size()}, pass);
    return ak;
  }

  std::size_t n_active() const { return head.size(); }
};

/// Edge lists of the interaction graph in user-major and item-major order,
/// plus pass-through masks for isolated nodes.
struct InteractionIndex {
  std::size_t n_users = 0, n_items = 0;
  ops::Index by_user_user, by_user_item;  // user-major edges
  ops::Index by_item_item, by_item_user;  // item-major edges
  std::vector<std::uint32_t> user_offsets, item_offsets;
  Tensor user_inv_degree;  // per user-major edge: 1 / |N_u|
  Tensor user_passthrough, item_passthrough;

  static InteractionIndex from(const InteractionGraph& g) {
    InteractionIndex x;
    x.n_users = g.n_users();
    x.n_items = g.n_items();
    x.user_offsets.assign(g.user_offsets().begin(), g.user_offsets().end());
    x.item_offsets.assign(g.item_offsets().begin(), g.item_offsets().end());
    std::vector<double> inv, upass(g.n_users(), 0.0), ipass(g.n_items(), 0.0);
    for (Id u = 0; u < g.n_users(); ++u) {
      auto items = g.items_of(u);
      if (items.empty()) upass[u] = 1.0;
      for (Id i : items) {
        x.by_user_user.push_back(u);
        x.by_user_item.push_back(i);
        inv.push_back(1.0 / static_cast<double>(items.size()));
      }
    }
    for (Id i = 0; i < g.n_items(); ++i) {
      auto users = g.users_of(i);
      if (users.empty()) ipass[i] = 1.0;
      for (Id u : users) {
        x.by_item_item.push_back(i);
        x.by_item_user.push_back(u);
      }
    }
    x.user_inv_degree = Tensor::from(Shape{inv.size()}, inv);
    x.user_passthrough = Tensor::from(Shape{upass.size()}, upass);
    x.item_passthrough = Tensor::from(Shape{ipass.size()}, ipass);
    return x;
  }
};

/// P(c^k | e) for every row of `embeddings`: softmax over e . c^k -> [n x K].
inline Tensor intent_assignment(Tape& tape, const Tensor& embeddings, const Tensor& prototypes) {
  if (embeddings.cols() != prototypes.cols())
    throw DimensionError("intent_assignment: embedding " + shape_str(embeddings.shape()) +
                         " vs prototypes " + shape_str(prototypes.shape()));
  return ops::softmax_rows(tape, ops::matmul(tape, embeddings, ops::transpose(tape, prototypes)));
}

/// Attentive sum of the prototypes, weighted by intent_assignment.
inline Tensor intent_mix(Tape& tape, const Tensor& embeddings, const Tensor& prototypes) {
  return ops::matmul(tape, intent_assignment(tape, embeddings, prototypes), prototypes);
}

/// Intent-aware representation: the structural embedding plus its intent mixture.
inline Tensor intent_aware(Tape& tape, const Tensor& embeddings, const Tensor& prototypes) {
  return ops::add(tape, embeddings, intent_mix(tape, embeddings, prototypes));
}

/// Attention over each head's active neighbours with logit
/// (e_h || e_r) . (e_t || e_r) = e_h . e_t + |e_r|^2 -> [n_active].
inline Tensor kg_attention(Tape& tape, const Tensor& entities, const Tensor& relations,
                           const ActiveKnowledge& ak) {
  auto rel = ops::gather_rows(tape, relations, ak.relation);
  auto logits = ops::add(tape,
                         ops::row_dot(tape, ops::gather_rows(tape, entities, ak.head),
                                      ops::gather_rows(tape, entities, ak.tail)),
                         ops::row_dot(tape, rel, rel));
  return ops::segment_softmax(tape, logits, ak.offsets);
}

/// Relation-aware aggregation: e_h' = 1/|N_h| sum beta(h,r,t) e_r (.) e_t.
/// Heads without active slots keep their embedding.
inline Tensor kg_aggregate(Tape& tape, const Tensor& entities, const Tensor& relations,
                           const ActiveKnowledge& ak) {
  auto kept = ops::row_scale(tape, entities, ak.passthrough);
  if (ak.n_active() == 0) return kept;
  auto beta = kg_attention(tape, entities, relations, ak);
  auto msg = ops::hadamard(tape, ops::gather_rows(tape, relations, ak.relation),
                           ops::gather_rows(tape, entities, ak.tail));
  msg = ops::row_scale(tape, msg, ops::hadamard(tape, beta, ak.inv_degree));
  return ops::add(tape, ops::scatter_add_rows(tape, msg, ak.head, ak.n_entities), kept);
}

namespace detail {
// One side of the masked attention: every query row attends over its
// neighbours in `src` (segments given by offsets).
inline Tensor masked_attention(Tape& tape, const Tensor& dst, const Tensor& src,
                               const TransformerWeights& w, const ops::Index& dst_idx,
                               const ops::Index& src_idx, const std::vector<std::uint32_t>& offsets,
                               const Tensor& passthrough, std::size_t heads) {
  const std::size_t d = dst.cols();
  auto q = ops::matmul(tape, dst, ops::transpose(tape, w.query));
  auto k = ops::matmul(tape, src, ops::transpose(tape, w.key));
  auto v = ops::matmul(tape, src, ops::transpose(tape, w.value));
  auto scores = ops::block_dot(tape, ops::gather_rows(tape, q, dst_idx),
                               ops::gather_rows(tape, k, src_idx), heads);
  scores = ops::scale(tape, scores, 1.0 / std::sqrt(static_cast<double>(d) / heads));
  auto att = ops::segment_softmax(tape, scores, offsets);
  auto msg = ops::block_scale(tape, ops::gather_rows(tape, v, src_idx), att);
  return ops::add(tape, ops::scatter_add_rows(tape, msg, dst_idx, dst.rows()),
                  ops::row_scale(tape, dst, passthrough));
}
}  // namespace detail

/// Multi-head scaled dot-product attention restricted to observed pairs.
/// Users attend over their items and items over their users with the same
/// projections; nodes with no interactions pass through unchanged.
inline std::pair<Tensor, Tensor> transformer_layer(Tape& tape, const Tensor& users,
                                                   const Tensor& items, const TransformerWeights& w,
                                                   const InteractionIndex& idx, std::size_t heads) {
  if (heads == 0 || users.cols() % heads != 0)
    throw DimensionError("transformer_layer: heads must divide the embedding size");
  auto new_users = detail::masked_attention(tape, users, items, w, idx.by_user_user, idx.by_user_item,
                                            idx.user_offsets, idx.user_passthrough, heads);
  auto new_items = detail::masked_attention(tape, items, users, w, idx.by_item_item, idx.by_item_user,
                                            idx.item_offsets, idx.item_passthrough, heads);
  return {new_users, new_items};
}

/// Per-layer global representations. users[l] / items[l] are intent-aware;
/// `entities` is the final entity table with its item prefix replaced by
/// items.back().
struct GlobalState {
  std::vector<Tensor> users;
  std::vector<Tensor> items;
  Tensor entities;

  const Tensor& final_users() const { return users.back(); }
  const Tensor& final_items() const { return items.back(); }
};

/// Layer loop: KG aggregation into items, masked transformer over the
/// interaction graph, then intent mixing of both sides.
inline GlobalState forward_global(Tape& tape, const ModelParameters& params, const ActiveKnowledge& ak,
                                  const InteractionIndex& idx, std::size_t depth, std::size_t heads) {
  const std::size_t n_items = idx.n_items;
  GlobalState st;
  auto splice = [&](const Tensor& items, const Tensor& ents) {
    if (ents.rows() == n_items) return items;
    return ops::concat_rows(tape, items, ops::slice_rows(tape, ents, n_items, ents.rows()));
  };
  st.users.push_back(intent_aware(tape, params.user_emb, params.intent_user));
  st.items.push_back(intent_aware(tape, ops::slice_rows(tape, params.entity_emb, 0, n_items),
                                  params.intent_item));
  Tensor ents = splice(st.items.back(), params.entity_emb);
  for (std::size_t l = 0; l < depth; ++l) {
    ents = kg_aggregate(tape, ents, params.relation_emb, ak);
    auto [u, i] = transformer_layer(tape, st.users.back(), ops::slice_rows(tape, ents, 0, n_items),
                                    params.layer_weights(l), idx, heads);
    st.users.push_back(intent_aware(tape, u, params.intent_user));
    st.items.push_back(intent_aware(tape, i, params.intent_item));
    ents = splice(st.items.back(), ents);
  }
  st.entities = ents;
  return st;
}

}  // namespace kgtn
