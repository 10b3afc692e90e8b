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
#include <chrono>
#include <cmath>
#include <functional>
#include <string>

#include "kgtn/training.hpp"

namespace kgtn {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// entries whose true gradient is (near) zero from dividing by noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double seconds = 0.0;
};

using LossFn = std::function<Tensor(Tape&, const ModelParameters&)>;

/// Compares reverse-mode gradients of `loss` against central differences
/// over every entry of every parameter.
inline GradCheckResult check_gradients(const LossFn& loss, ModelParameters& params, double eps = 1e-5) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckResult r;
  params.zero_grad();
  {
    Tape tape;
    auto l = loss(tape, params);
    tape.backward(l);
  }
  params.for_each([&](const std::string& name, Tensor& t) {
    const auto analytic = t.grad_copy();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      Tape tape(false);
      w[i] = orig + eps;
      const double up = loss(tape, params).item();
      w[i] = orig - eps;
      const double down = loss(tape, params).item();
      w[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double e = relative_error(analytic[i], numeric);
      ++r.entries;
      if (e > r.max_rel_error || r.worst_param.empty()) {
        r.max_rel_error = std::max(r.max_rel_error, e);
        r.worst_param = name;
        r.worst_index = i;
        r.worst_analytic = analytic[i];
        r.worst_numeric = numeric;
      }
    }
  });
  params.zero_grad();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Tiny end-to-end instance: 3 users, 4 items, 5 entities, 3 relations,
/// d=8, K=2, H=2, L=1, with the sampled KG view frozen so the loss is a
/// smooth function of the parameters.
struct ToyProblem {
  Dataset ds;
  ExperimentConfig cfg;
  ModelParameters params;
  KnowledgeGraph frozen_kg;
  InteractionIndex idx;
  Batch batch;

  Tensor loss(Tape& tape, const ModelParameters& p) const {
    return batch_loss(tape, p, ActiveKnowledge::from(frozen_kg), idx, cfg, batch).total;
  }
};

inline ToyProblem make_toy_problem(std::uint64_t seed = 7) {
  ToyProblem t;
  RawInteractions raw;
  raw.n_users = 3;
  raw.n_items = 4;
  raw.rows = {{0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 2, 1}, {1, 3, 1}, {2, 0, 1}, {2, 3, 1}};
  // entity 4 is the only non-item entity; items 0-2 have two slots each
  auto kg = KnowledgeGraph::build(5, 3,
                                  {{0, 0, 4}, {0, 1, 2}, {1, 0, 4}, {1, 2, 3}, {2, 1, 4},
                                   {2, 0, 0}, {3, 2, 4}, {4, 2, 1}});
  t.ds = assemble(raw, std::move(kg), SplitRatios{1.0, 0.0, 0.0}, seed);
  t.cfg.dim = 8;
  t.cfg.intents = 2;
  t.cfg.heads = 2;
  t.cfg.depth = 1;
  t.cfg.agg_depth = 2;
  t.cfg.k_top = 1;
  t.cfg.alpha = 0.1;
  t.cfg.l2 = 1e-2;
  t.cfg.tau = 0.2;
  t.cfg.seed = seed;
  std::mt19937_64 rng(seed);
  t.params = init_parameters(model_shape(t.cfg, t.ds), rng);
  t.idx = InteractionIndex::from(t.ds.train);
  t.frozen_kg = t.ds.kg;
  {
    Tape probe(false);
    auto gs = forward_global(probe, t.params, ActiveKnowledge::from(t.frozen_kg), t.idx, t.cfg.depth,
                             t.cfg.heads);
    sample_topk(t.frozen_kg, gs.entities, t.params.relation_emb, t.cfg.k_top, rng).apply(t.frozen_kg);
  }
  for (const auto& p : t.ds.split.train) {
    t.batch.users.push_back(p.user);
    t.batch.pos.push_back(p.item);
    t.batch.neg.push_back(draw_negative(t.ds.train, p.user, rng));
  }
  return t;
}

}  // namespace kgtn
