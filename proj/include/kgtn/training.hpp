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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kgtn/config.hpp"
#include "kgtn/data.hpp"
#include "kgtn/denoise.hpp"
#include "kgtn/intents.hpp"
#include "kgtn/metrics.hpp"
#include "kgtn/model.hpp"

namespace kgtn {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline ModelShape model_shape(const ExperimentConfig& cfg, const Dataset& ds) {
  ModelShape s;
  s.n_users = ds.n_users;
  s.n_entities = ds.kg.n_entities();
  s.n_relations = std::max<std::size_t>(1, ds.kg.n_relations());
  s.dim = cfg.dim;
  s.intents = cfg.intents;
  s.heads = cfg.heads;
  s.depth = cfg.depth;
  s.share_transformer_weights = cfg.share_transformer_weights;
  return s;
}

inline Tensor layer_sum(Tape& tape, const std::vector<Tensor>& layers) {
  Tensor acc = layers.at(0);
  for (std::size_t l = 1; l < layers.size(); ++l) acc = ops::add(tape, acc, layers[l]);
  return acc;
}

/// Everything one forward pass produces.
struct Forward {
  Track global;
  std::optional<Track> local;
  Tensor user_repr;    // sum of global user layers, M x d
  Tensor entity_repr;  // sum of global entity layers, E x d (items first)
};

/// Full-graph forward. KGTN: global intents -> light aggregation of the
/// global track (and the local track when `with_local`). BPRMF: raw
/// embeddings as a single layer.
inline Forward forward(Tape& tape, const ModelParameters& params, const ActiveKnowledge& ak,
                       const InteractionIndex& idx, const ExperimentConfig& cfg, bool with_local) {
  Forward f;
  if (cfg.model == "bprmf") {
    f.global.users.push_back(params.user_emb);
    f.global.entities.push_back(params.entity_emb);
  } else {
    auto gs = forward_global(tape, params, ak, idx, cfg.depth, cfg.heads);
    f.global = light_aggregate(tape, ak, idx, gs.final_users(), gs.entities, params.relation_emb,
                               cfg.agg_depth);
    if (with_local)
      f.local = light_aggregate(tape, ak, idx, params.user_emb, params.entity_emb,
                                params.relation_emb, cfg.agg_depth);
  }
  f.user_repr = layer_sum(tape, f.global.users);
  f.entity_repr = layer_sum(tape, f.global.entities);
  return f;
}

/// Inner product of layer-summed user and item vectors.
inline double predict(Id u, Id i, const Track& track) {
  double s = 0.0;
  const std::size_t d = track.users.at(0).cols();
  for (std::size_t c = 0; c < d; ++c) {
    double zu = 0.0, zi = 0.0;
    for (const auto& t : track.users) zu += t.at(u, c);
    for (const auto& t : track.entities) zi += t.at(i, c);
    s += zu * zi;
  }
  return s;
}

/// mean(-ln sigmoid(pos - neg)), computed as softplus(neg - pos).
inline Tensor bpr_loss(Tape& tape, const Tensor& pos_scores, const Tensor& neg_scores) {
  return ops::mean(tape, ops::softplus(tape, ops::sub(tape, neg_scores, pos_scores)));
}

/// Sum of squared entries over every parameter.
inline Tensor l2_penalty(Tape& tape, const ModelParameters& params) {
  Tensor acc;
  params.for_each([&](const std::string&, const Tensor& t) {
    auto sq = ops::sum(tape, ops::hadamard(tape, t, t));
    acc = acc.defined() ? ops::add(tape, acc, sq) : sq;
  });
  return acc;
}

inline double l2_value(const ModelParameters& params) {
  double s = 0.0;
  params.for_each([&](const std::string&, const Tensor& t) {
    for (double x : t.values()) s += x * x;
  });
  return s;
}

/// bpr + alpha * contrastive + lambda * |Theta|^2. Terms with a zero weight
/// (or an undefined contrastive tensor) are not built.
inline Tensor total_loss(Tape& tape, const Tensor& bpr, const Tensor& contrastive,
                         const ModelParameters& params, double alpha, double lambda) {
  if (alpha < 0 || lambda < 0) throw ConfigError("loss weights must be non-negative");
  Tensor total = bpr;
  if (alpha > 0 && contrastive.defined())
    total = ops::add(tape, total, ops::scale(tape, contrastive, alpha));
  if (lambda > 0) total = ops::add(tape, total, ops::scale(tape, l2_penalty(tape, params), lambda));
  return total;
}

/// One (user, positive, negative) minibatch.
struct Batch {
  ops::Index users, pos, neg;
};

struct LossParts {
  Tensor total;
  double bpr = 0.0;
  double contrastive = 0.0;
  double reg = 0.0;
};

inline ops::Index unique_sorted(ops::Index v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

/// Builds the full multi-task loss for one batch on `tape`.
inline LossParts batch_loss(Tape& tape, const ModelParameters& params, const ActiveKnowledge& ak,
                            const InteractionIndex& idx, const ExperimentConfig& cfg, const Batch& b) {
  const bool contrast = cfg.contrast_enabled();
  auto f = forward(tape, params, ak, idx, cfg, contrast);
  auto users = ops::gather_rows(tape, f.user_repr, b.users);
  auto pos = ops::row_dot(tape, users, ops::gather_rows(tape, f.entity_repr, b.pos));
  auto neg = ops::row_dot(tape, users, ops::gather_rows(tape, f.entity_repr, b.neg));
  LossParts out;
  auto bpr = bpr_loss(tape, pos, neg);
  out.bpr = bpr.item();
  Tensor cl;
  if (contrast) {
    auto u = unique_sorted(b.users);
    auto i = unique_sorted(b.pos);
    if (u.size() >= 2 || i.size() >= 2) {
      cl = contrastive_loss(tape, f.global, *f.local, u, i, cfg.tau, cfg.infonce_standard);
      out.contrastive = cl.item();
    }
  }
  out.reg = l2_value(params);
  out.total = total_loss(tape, bpr, cl, params, cfg.model == "kgtn" ? cfg.alpha : 0.0, cfg.l2);
  return out;
}

/// Bias-corrected Adam.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  std::uint64_t steps() const { return step_; }
  double lr() const { return lr_; }

  /// Applies one update from the parameters' grad buffers. A non-finite
  /// gradient aborts the step before anything is modified.
  void step(ModelParameters& params) {
    params.for_each([&](const std::string& name, Tensor& t) {
      for (double g : t.grad_copy())
        if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + name);
    });
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    params.for_each([&](const std::string& name, Tensor& t) {
      auto& st = moments_[name];
      if (st.m.size() != t.numel()) {
        st.m.assign(t.numel(), 0.0);
        st.v.assign(t.numel(), 0.0);
      }
      auto w = t.mutable_values();
      const auto g = t.grad_copy();
      for (std::size_t i = 0; i < w.size(); ++i) {
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = st.m[i] / c1, vhat = st.v[i] / c2;
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    });
  }

  const std::vector<double>& first_moment(const std::string& name) const { return moments_.at(name).m; }
  const std::vector<double>& second_moment(const std::string& name) const { return moments_.at(name).v; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Final user / item vectors for scoring.
struct Embeddings {
  Tensor users;  // M x d
  Tensor items;  // N x d

  double score(Id u, Id i) const {
    auto a = users.row(u);
    auto b = items.row(i);
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
    return s;
  }
};

/// Noise-free top-k view of the KG for inference (or the full graph when
/// sampling is disabled).
inline KnowledgeGraph inference_graph(const ModelParameters& params, const Dataset& ds,
                                      const ExperimentConfig& cfg) {
  KnowledgeGraph kg = ds.kg;
  kg.reset_active();
  if (cfg.model != "kgtn" || !cfg.sampling_enabled()) return kg;
  Tape tape(false);
  auto gs = forward_global(tape, params, ActiveKnowledge::from(kg), InteractionIndex::from(ds.train),
                           cfg.depth, cfg.heads);
  std::mt19937_64 unused(0);
  sample_topk(kg, gs.entities, params.relation_emb, cfg.k_top, unused, false).apply(kg);
  return kg;
}

inline Embeddings infer(const ModelParameters& params, const Dataset& ds, const ExperimentConfig& cfg) {
  auto kg = inference_graph(params, ds, cfg);
  Tape tape(false);
  auto f = forward(tape, params, ActiveKnowledge::from(kg), InteractionIndex::from(ds.train), cfg, false);
  return {f.user_repr, ops::slice_rows(tape, f.entity_repr, 0, ds.n_items)};
}

inline std::vector<double> score_pairs(const Embeddings& emb, const std::vector<LabeledPair>& pairs) {
  std::vector<double> s;
  s.reserve(pairs.size());
  for (const auto& p : pairs) s.push_back(emb.score(p.user, p.item));
  return s;
}

inline std::vector<int> labels_of(const std::vector<LabeledPair>& pairs) {
  std::vector<int> l;
  l.reserve(pairs.size());
  for (const auto& p : pairs) l.push_back(p.label);
  return l;
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss_bpr = 0.0;
  double loss_cl = 0.0;
  double loss_reg = 0.0;
  double eval_auc = std::nan("");
  double eval_f1 = std::nan("");
};

inline std::string metric_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epoch,loss_bpr,loss_cl,loss_reg,eval_auc,eval_f1\n";
  for (const auto& e : log)
    os << e.epoch << ',' << e.loss_bpr << ',' << e.loss_cl << ',' << e.loss_reg << ',' << e.eval_auc
       << ',' << e.eval_f1 << '\n';
  return os.str();
}

/// Name of the first parameter holding a NaN or infinity, or "".
inline std::string first_non_finite(const ModelParameters& params) {
  std::string bad;
  params.for_each([&](const std::string& name, const Tensor& t) {
    if (!bad.empty()) return;
    for (double x : t.values())
      if (!std::isfinite(x)) {
        bad = name;
        return;
      }
  });
  return bad;
}

enum class FitStatus { Completed, EarlyStopped, Diverged };

struct FitResult {
  ModelParameters params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  FitStatus status = FitStatus::Completed;
  std::string message;
};

/// Draws one training negative per positive, uniformly among items the user
/// has no training interaction with.
template <class Rng>
Id draw_negative(const InteractionGraph& train, Id u, Rng& rng) {
  if (train.items_of(u).size() >= train.n_items())
    throw ConsistencyError("user " + std::to_string(u) + " has no negative items");
  std::uniform_int_distribution<Id> pick(0, static_cast<Id>(train.n_items() - 1));
  for (;;) {
    const Id j = pick(rng);
    if (!train.contains(u, j)) return j;
  }
}

/// CTR metrics on a labeled pair list.
inline std::pair<double, double> ctr_metrics(const Embeddings& emb, const std::vector<LabeledPair>& pairs,
                                             double threshold) {
  auto scores = score_pairs(emb, pairs);
  auto labels = labels_of(pairs);
  if (!has_both_classes(labels)) return {std::nan(""), std::nan("")};
  return {auc(scores, labels), f1(sigmoid_scores(scores), labels, threshold)};
}

/// AUC of training positives against an equal number of seeded negatives
/// per user (the eval protocol applied to the training set).
inline double train_auc(const Embeddings& emb, const Dataset& ds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> scores;
  std::vector<int> labels;
  for (Id u = 0; u < ds.n_users; ++u) {
    auto items = ds.train.items_of(u);
    if (items.empty()) continue;
    auto neg = negative_sample(ds.observed, u, items.size(), rng);
    for (Id i : items) {
      scores.push_back(emb.score(u, i));
      labels.push_back(1);
    }
    for (Id j : neg.items) {
      scores.push_back(emb.score(u, j));
      labels.push_back(0);
    }
  }
  return auc(scores, labels);
}

/// Per-epoch hook; return false to stop training after this epoch.
using EpochCallback = std::function<bool(const EpochLog&, const ModelParameters&)>;

/// Training loop: per epoch resample the KG view from intent-aware
/// embeddings, then run shuffled minibatches of (u, i, j) through the
/// multi-task loss and Adam. Early-stops on eval AUC; returns the best
/// parameters seen (or the last ones when there is no eval split).
inline FitResult fit(const ExperimentConfig& cfg, const Dataset& ds, EpochCallback on_epoch = nullptr) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  FitResult res;
  res.params = init_parameters(model_shape(cfg, ds), rng);
  if (cfg.epochs == 0) return res;

  KnowledgeGraph kg = ds.kg;
  const auto idx = InteractionIndex::from(ds.train);
  Adam opt(cfg.lr);
  std::vector<LabeledPair> positives = ds.split.train;
  const bool have_eval = has_both_classes(labels_of(ds.split.eval));
  double best_auc = -1.0;
  std::size_t bad_epochs = 0;
  std::optional<ModelParameters> best;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ModelParameters last_good = res.params.clone();
    kg.reset_active();
    if (cfg.model == "kgtn" && cfg.sampling_enabled()) {
      Tape probe(false);
      auto gs = forward_global(probe, res.params, ActiveKnowledge::from(kg), idx, cfg.depth, cfg.heads);
      sample_topk(kg, gs.entities, res.params.relation_emb, cfg.k_top, rng).apply(kg);
    }
    const auto ak = ActiveKnowledge::from(kg);

    std::shuffle(positives.begin(), positives.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    std::size_t n_batches = 0;
    bool diverged = false;
    for (std::size_t start = 0; start < positives.size(); start += cfg.batch) {
      const std::size_t end = std::min(positives.size(), start + cfg.batch);
      Batch b;
      for (std::size_t k = start; k < end; ++k) {
        b.users.push_back(positives[k].user);
        b.pos.push_back(positives[k].item);
        b.neg.push_back(draw_negative(ds.train, positives[k].user, rng));
      }
      Tape tape;
      res.params.zero_grad();
      LossParts parts;
      try {
        parts = batch_loss(tape, res.params, ak, idx, cfg, b);
      } catch (const DomainError& e) {
        // overflow from exploding parameters counts as divergence; anything else is a bug
        const bool overflow = std::string(e.what()).find("not finite") != std::string::npos ||
                              !std::isfinite(l2_value(res.params));
        if (!overflow) throw;
        diverged = true;
        res.message = e.what();
        break;
      }
      if (!std::isfinite(parts.total.item())) {
        diverged = true;
        break;
      }
      tape.backward(parts.total);
      try {
        opt.step(res.params);
      } catch (const TrainingError& e) {
        diverged = true;
        res.message = e.what();
        break;
      }
      if (const auto bad = first_non_finite(res.params); !bad.empty()) {
        diverged = true;
        res.message = "parameter " + bad + " became non-finite in epoch " + std::to_string(epoch);
        break;
      }
      log.loss_bpr += parts.bpr;
      log.loss_cl += parts.contrastive;
      log.loss_reg += parts.reg;
      ++n_batches;
    }
    if (diverged) {
      res.params = std::move(last_good);
      res.status = FitStatus::Diverged;
      if (res.message.empty()) res.message = "loss became non-finite in epoch " + std::to_string(epoch);
      break;
    }
    if (n_batches) {
      log.loss_bpr /= n_batches;
      log.loss_cl /= n_batches;
      log.loss_reg /= n_batches;
    }
    if (have_eval) {
      auto emb = infer(res.params, ds, cfg);
      std::tie(log.eval_auc, log.eval_f1) = ctr_metrics(emb, ds.split.eval, cfg.f1_threshold);
    }
    res.log.push_back(log);
    const bool keep_going = !on_epoch || on_epoch(log, res.params);

    if (have_eval) {
      if (log.eval_auc > best_auc) {
        best_auc = log.eval_auc;
        res.best_epoch = epoch;
        best = res.params.clone();
        bad_epochs = 0;
      } else if (++bad_epochs >= cfg.patience && cfg.patience > 0) {
        res.status = FitStatus::EarlyStopped;
        break;
      }
    } else {
      res.best_epoch = epoch;
    }
    if (!keep_going) break;
  }
  if (best && res.status != FitStatus::Diverged) res.params = std::move(*best);
  return res;
}

// Checkpoint layout (little-endian):
//   "KGTNCKPT" | u32 version | u32 count |
//   count x { u32 name_len | name | u32 ndim | u64 dims[ndim] | f64 values[] }
inline constexpr char kCheckpointMagic[8] = {'K', 'G', 'T', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts need byte swapping");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("checkpoint truncated");
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, const Tensor&) { ++count; });
  detail::put_le<std::uint32_t>(os, count);
  params.for_each([&](const std::string& name, const Tensor& t) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) detail::put_le<std::uint64_t>(os, d);
    for (double v : t.values()) detail::put_le<double>(os, v);
  });
}

/// Reads tensors into a parameter set whose structure (names and shapes)
/// must match `like`.
inline ModelParameters load_checkpoint(const std::filesystem::path& path, const ModelParameters& like) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError(path.string() + ": bad magic, not a checkpoint");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::get_le<std::uint32_t>(is);
  std::map<std::string, Tensor> blobs;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get_le<std::uint32_t>(is);
    if (len > 4096) throw CheckpointError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("checkpoint truncated");
    const auto ndim = detail::get_le<std::uint32_t>(is);
    if (ndim > 8) throw CheckpointError("checkpoint: implausible rank");
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(detail::get_le<std::uint64_t>(is));
      if (shape.back() > (std::uint64_t{1} << 31)) throw CheckpointError("checkpoint: implausible extent");
    }
    if (shape_numel(shape) > (std::size_t{1} << 31)) throw CheckpointError("checkpoint: implausible size");
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = detail::get_le<double>(is);
    blobs.emplace(name, Tensor::parameter(shape, std::move(values)));
  }
  ModelParameters out = like;
  out.for_each([&](const std::string& name, Tensor& t) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw CheckpointError("checkpoint: missing parameter " + name);
    if (it->second.shape() != t.shape())
      throw CheckpointError("checkpoint: parameter " + name + " has shape " +
                            shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
    t = it->second;
  });
  if (blobs.size() != count || count != static_cast<std::uint32_t>(blobs.size()))
    throw CheckpointError("checkpoint: duplicate parameter names");
  return out;
}

}  // namespace kgtn
