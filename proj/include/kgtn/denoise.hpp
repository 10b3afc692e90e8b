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
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "kgtn/intents.hpp"

namespace kgtn {

/// score - log(-log(eps)). eps must lie strictly inside (0, 1).
inline double gumbel_perturb(double score, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("gumbel_perturb: eps outside (0, 1)");
  return score - std::log(-std::log(eps));
}

/// Standard Gumbel draw; endpoint uniforms are redrawn.
template <class Rng>
double gumbel_noise(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double eps = 0.0;
  do eps = unif(rng);
  while (!(eps > 0.0 && eps < 1.0));
  return -std::log(-std::log(eps));
}

/// Per-slot keep decision over a KnowledgeGraph plus the retained clean
/// attention weight (zero for dropped slots).
struct SampledGraphView {
  std::vector<std::uint8_t> kept;
  std::vector<double> beta_hat;
  std::size_t k_top = 0;

  std::size_t kept_count() const {
    return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), 1));
  }
  void apply(KnowledgeGraph& kg) const { kg.set_active_mask(kept); }
};

/// Attention weight of every slot (all slots, ignoring the active mask),
/// normalized per head entity.
inline std::vector<double> slot_attention(const KnowledgeGraph& kg, const Tensor& entities,
                                          const Tensor& relations) {
  std::vector<double> logits(kg.n_slots()), beta(kg.n_slots());
  const std::size_t d = entities.cols();
  for (std::size_t s = 0; s < kg.n_slots(); ++s) {
    auto h = entities.row(kg.slot_head(s));
    auto t = entities.row(kg.slot_tail(s));
    auto r = relations.row(kg.slot_relation(s));
    double v = 0.0;
    for (std::size_t c = 0; c < d; ++c) v += h[c] * t[c] + r[c] * r[c];
    logits[s] = v;
  }
  for (Id e = 0; e < kg.n_entities(); ++e) {
    const std::size_t b = kg.offsets()[e], end = kg.offsets()[e + 1];
    if (b == end) continue;
    const double mx = *std::max_element(logits.begin() + b, logits.begin() + end);
    double z = 0.0;
    for (std::size_t s = b; s < end; ++s) z += (beta[s] = std::exp(logits[s] - mx));
    for (std::size_t s = b; s < end; ++s) beta[s] /= z;
  }
  return beta;
}

/// Keeps, per head, the k_top slots with the largest perturbed score
/// log(beta) + Gumbel noise (all slots when the head has at most k_top).
/// With `noisy` false the selection is the plain top-k of beta. Exact ties
/// go to the lower slot index.
template <class Rng>
SampledGraphView sample_topk(const KnowledgeGraph& kg, const Tensor& entities, const Tensor& relations,
                             std::size_t k_top, Rng& rng, bool noisy = true) {
  if (k_top == 0) throw ConfigError("k_top must be at least 1");
  SampledGraphView view;
  view.k_top = k_top;
  view.beta_hat = slot_attention(kg, entities, relations);
  view.kept.assign(kg.n_slots(), 0);
  std::vector<double> key;
  std::vector<std::size_t> order;
  for (Id e = 0; e < kg.n_entities(); ++e) {
    const std::size_t b = kg.offsets()[e], end = kg.offsets()[e + 1], n = end - b;
    if (n == 0) continue;
    if (n <= k_top) {
      std::fill(view.kept.begin() + b, view.kept.begin() + end, 1);
      continue;
    }
    key.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double beta = view.beta_hat[b + j];
      const double base = beta > 0.0 ? std::log(beta) : -std::numeric_limits<double>::max();
      key[j] = noisy ? base + gumbel_noise(rng) : base;
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return key[x] > key[y]; });
    for (std::size_t j = 0; j < k_top; ++j) view.kept[b + order[j]] = 1;
  }
  for (std::size_t s = 0; s < kg.n_slots(); ++s)
    if (!view.kept[s]) view.beta_hat[s] = 0.0;
  return view;
}

/// One propagation track: z^(0..L) for users and for the whole entity table
/// (items are its prefix).
struct Track {
  std::vector<Tensor> users;
  std::vector<Tensor> entities;

  std::size_t layers() const { return users.size(); }
};

/// Parameter-free propagation over the active KG and the interaction graph:
///   z_h' = 1/|N_h| sum e_r (.) z_t      (active slots of head h)
///   z_u' = 1/|N_u| sum z_i              (items of user u)
/// Nodes with no neighbours pass through.
inline Track light_aggregate(Tape& tape, const ActiveKnowledge& ak, const InteractionIndex& idx,
                             const Tensor& seed_users, const Tensor& seed_entities,
                             const Tensor& relations, std::size_t layers) {
  Track tr;
  tr.users.push_back(seed_users);
  tr.entities.push_back(seed_entities);
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& z_ent = tr.entities.back();
    const Tensor& z_usr = tr.users.back();
    auto ent = ops::row_scale(tape, z_ent, ak.passthrough);
    if (ak.n_active() > 0) {
      auto msg = ops::hadamard(tape, ops::gather_rows(tape, relations, ak.relation),
                               ops::gather_rows(tape, z_ent, ak.tail));
      msg = ops::row_scale(tape, msg, ak.inv_degree);
      ent = ops::add(tape, ops::scatter_add_rows(tape, msg, ak.head, ak.n_entities), ent);
    }
    auto usr = ops::row_scale(tape, z_usr, idx.user_passthrough);
    if (!idx.by_user_item.empty()) {
      auto msg = ops::row_scale(tape, ops::gather_rows(tape, z_ent, idx.by_user_item),
                                idx.user_inv_degree);
      usr = ops::add(tape, ops::scatter_add_rows(tape, msg, idx.by_user_user, idx.n_users), usr);
    }
    tr.users.push_back(usr);
    tr.entities.push_back(ent);
  }
  return tr;
}

/// Mean over anchors u of
///   -log( exp(s(a_u, p_u)/tau) / (sum_{k!=u} exp(s(a_u, a_k)/tau) + sum_{k!=u} exp(s(a_u, p_k)/tau)) )
/// with s the cosine similarity. `standard` also puts the positive pair in
/// the denominator.
inline Tensor info_nce(Tape& tape, const Tensor& anchors, const Tensor& positives, double tau,
                       bool standard = false) {
  if (!(tau > 0.0)) throw ContractError("temperature must be positive");
  const std::size_t b = anchors.rows();
  if (b < 2) throw ContractError("contrastive batch needs at least 2 nodes, got " + std::to_string(b));
  if (anchors.shape() != positives.shape())
    throw DimensionError("info_nce: " + shape_str(anchors.shape()) + " vs " +
                         shape_str(positives.shape()));
  tape.count("info_nce");
  auto a = ops::normalize_rows(tape, anchors);
  auto p = ops::normalize_rows(tape, positives);
  std::vector<double> off(b * b, 1.0);
  for (std::size_t i = 0; i < b; ++i) off[i * b + i] = 0.0;
  auto off_diag = Tensor::from({b, b}, std::move(off));
  auto sim_aa = ops::scale(tape, ops::matmul(tape, a, ops::transpose(tape, a)), 1.0 / tau);
  auto sim_ap = ops::scale(tape, ops::matmul(tape, a, ops::transpose(tape, p)), 1.0 / tau);
  auto den_aa = ops::row_sum(tape, ops::hadamard(tape, ops::exp(tape, sim_aa), off_diag));
  auto exp_ap = ops::exp(tape, sim_ap);
  auto den_ap = ops::row_sum(tape, standard ? exp_ap : ops::hadamard(tape, exp_ap, off_diag));
  auto pos = ops::scale(tape, ops::row_dot(tape, a, p), 1.0 / tau);
  auto per_node = ops::sub(tape, ops::log(tape, ops::add(tape, den_aa, den_ap)), pos);
  return ops::mean(tape, per_node);
}

/// Layer-wise local/global contrast for the given users and items, averaged
/// over layers and summed over the two sides. A side with fewer than two
/// nodes is skipped.
inline Tensor contrastive_loss(Tape& tape, const Track& global, const Track& local,
                               const ops::Index& users, const ops::Index& items, double tau,
                               bool standard = false) {
  if (global.layers() != local.layers() || global.layers() == 0)
    throw ContractError("contrastive_loss: tracks must have the same nonzero layer count");
  if (users.size() < 2 && items.size() < 2)
    throw ContractError("contrastive batch needs at least 2 users or 2 items");
  Tensor total;
  const double inv_layers = 1.0 / static_cast<double>(global.layers());
  auto accumulate = [&](const Tensor& t) { total = total.defined() ? ops::add(tape, total, t) : t; };
  for (std::size_t l = 0; l < global.layers(); ++l) {
    if (users.size() >= 2)
      accumulate(info_nce(tape, ops::gather_rows(tape, global.users[l], users),
                          ops::gather_rows(tape, local.users[l], users), tau, standard));
    if (items.size() >= 2)
      accumulate(info_nce(tape, ops::gather_rows(tape, global.entities[l], items),
                          ops::gather_rows(tape, local.entities[l], items), tau, standard));
  }
  return ops::scale(tape, total, inv_layers);
}

}  // namespace kgtn
