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
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

#include "kgtn/data.hpp"

namespace kgtn {

struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

inline bool has_both_classes(const std::vector<int>& labels) {
  bool pos = false, neg = false;
  for (int l : labels) (l ? pos : neg) = true;
  return pos && neg;
}

/// P(score of a random positive > score of a random negative), ties 1/2,
/// via the rank-sum statistic with averaged tie ranks.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  if (!has_both_classes(labels)) throw UndefinedMetricError("auc needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(scores.size() - n_pos);
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

inline std::vector<double> sigmoid_scores(const std::vector<double>& scores) {
  std::vector<double> p(scores.size());
  std::transform(scores.begin(), scores.end(), p.begin(), [](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return p;
}

/// F1 with prob >= threshold predicted positive. 0 when nothing is
/// predicted positive (or no positives exist).
inline double f1(const std::vector<double>& probs, const std::vector<int>& labels,
                 double threshold = 0.5, bool* degenerate = nullptr) {
  if (probs.size() != labels.size()) throw std::invalid_argument("f1: size mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    if (pred && labels[i]) ++tp;
    else if (pred) ++fp;
    else if (labels[i]) ++fn;
  }
  if (degenerate) *degenerate = (tp + fp == 0);
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2 * p * r / (p + r);
}

/// Recall@K for each K in `ks`. For every user with at least one test
/// positive, all items outside the user's training positives are ranked by
/// score (ties to the lower item id); recall is the fraction of test
/// positives in the top K, averaged over users.
template <class Scorer>
std::map<std::size_t, double> recall_at_k(const Scorer& score, const InteractionGraph& train,
                                          const std::vector<LabeledPair>& test, std::vector<std::size_t> ks,
                                          std::size_t threads = 1) {
  std::map<std::size_t, double> out;
  if (ks.empty()) return out;
  for (auto k : ks)
    if (k == 0) throw std::invalid_argument("recall_at_k: K must be at least 1");
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  std::vector<std::vector<Id>> truth(train.n_users());
  for (const auto& p : test)
    if (p.label == 1) truth[p.user].push_back(p.item);
  std::vector<Id> users;
  for (Id u = 0; u < truth.size(); ++u)
    if (!truth[u].empty()) users.push_back(u);
  for (auto k : ks) out[k] = 0.0;
  if (users.empty()) return out;

  std::vector<std::vector<double>> per_user(users.size(), std::vector<double>(ks.size(), 0.0));
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, Id>> cand;
    for (std::size_t n = begin; n < end; ++n) {
      const Id u = users[n];
      cand.clear();
      for (Id i = 0; i < train.n_items(); ++i)
        if (!train.contains(u, i)) cand.emplace_back(-score(u, i), i);
      const std::size_t top = std::min(max_k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(top), cand.end());
      auto& t = truth[u];
      std::sort(t.begin(), t.end());
      for (std::size_t q = 0; q < ks.size(); ++q) {
        std::size_t hits = 0;
        for (std::size_t r = 0; r < std::min(ks[q], top); ++r)
          if (std::binary_search(t.begin(), t.end(), cand[r].second)) ++hits;
        per_user[n][q] = static_cast<double>(hits) / static_cast<double>(t.size());
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, users.size()));
  if (threads == 1) {
    work(0, users.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (users.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(users.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  for (std::size_t q = 0; q < ks.size(); ++q) {
    double s = 0.0;
    for (const auto& r : per_user) s += r[q];
    out[ks[q]] = s / static_cast<double>(users.size());
  }
  return out;
}

}  // namespace kgtn
