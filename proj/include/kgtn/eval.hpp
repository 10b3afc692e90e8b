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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kgtn/metrics.hpp"
#include "kgtn/training.hpp"

namespace kgtn {

struct VariantMetrics {
  std::string label;
  double auc = std::nan("");
  double f1 = std::nan("");
  double train_auc = std::nan("");
  std::map<std::size_t, double> recall;
  std::size_t epochs_run = 0;
};

struct NoiseRow {
  double ratio = 0.0;
  double auc = 0.0;
  double f1 = 0.0;
  double drop_auc = 0.0;  // percent, relative to ratio 0
  double drop_f1 = 0.0;
  std::size_t train_positives = 0;
  std::uint64_t eval_hash = 0;
  std::uint64_t test_hash = 0;
};

struct MetricReport {
  std::vector<VariantMetrics> variants;
  std::vector<NoiseRow> noise;
};

/// Test-split CTR metrics, Recall@K and training AUC for trained parameters.
inline VariantMetrics evaluate_model(const ModelParameters& params, const Dataset& ds,
                                     const ExperimentConfig& cfg, std::string label = "model") {
  VariantMetrics m;
  m.label = std::move(label);
  const auto emb = infer(params, ds, cfg);
  std::tie(m.auc, m.f1) = ctr_metrics(emb, ds.split.test, cfg.f1_threshold);
  m.train_auc = train_auc(emb, ds, cfg.seed ^ 0x5eedull);
  m.recall = recall_at_k([&](Id u, Id i) { return emb.score(u, i); }, ds.train, ds.split.test,
                         cfg.recall_k, cfg.threads);
  return m;
}

enum class Ablation { Full, WithoutSampling, WithoutContrast, WithoutIntents };

inline const char* ablation_label(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::WithoutSampling: return "w/o S";
    case Ablation::WithoutContrast: return "w/o C";
    case Ablation::WithoutIntents: return "w/o I";
  }
  return "?";
}

/// w/o S keeps the whole KG, w/o C drops the contrastive term, w/o I uses a
/// single intent with neither sampling nor contrast.
inline ExperimentConfig ablation_config(ExperimentConfig cfg, Ablation a) {
  switch (a) {
    case Ablation::Full: break;
    case Ablation::WithoutSampling: cfg.k_top = kKeepAll; break;
    case Ablation::WithoutContrast: cfg.alpha = 0.0; break;
    case Ablation::WithoutIntents:
      cfg.intents = 1;
      cfg.k_top = kKeepAll;
      cfg.alpha = 0.0;
      break;
  }
  return cfg;
}

inline VariantMetrics train_and_evaluate(const ExperimentConfig& cfg, const Dataset& ds, std::string label) {
  auto res = fit(cfg, ds);
  if (res.status == FitStatus::Diverged) throw TrainingError(label + ": " + res.message);
  auto m = evaluate_model(res.params, ds, cfg, std::move(label));
  m.epochs_run = res.log.size();
  return m;
}

/// Trains the four variants on the same split with the same seed.
inline MetricReport run_ablation(const ExperimentConfig& cfg, const Dataset& ds) {
  MetricReport r;
  for (auto a : {Ablation::Full, Ablation::WithoutSampling, Ablation::WithoutContrast,
                 Ablation::WithoutIntents})
    r.variants.push_back(train_and_evaluate(ablation_config(cfg, a), ds, ablation_label(a)));
  return r;
}

/// Retrains at each noise ratio (eval/test untouched) and reports the drop
/// relative to the clean run: (m0 - m_r) / m0 * 100.
inline MetricReport noise_robustness(const ExperimentConfig& cfg, const Dataset& ds,
                                     std::vector<double> ratios) {
  if (std::find(ratios.begin(), ratios.end(), 0.0) == ratios.end()) ratios.insert(ratios.begin(), 0.0);
  std::sort(ratios.begin(), ratios.end());
  MetricReport r;
  for (double ratio : ratios) {
    auto noisy = with_noise(ds, ratio, cfg.seed + 17);
    std::ostringstream label;
    label << "noise " << ratio;
    auto m = train_and_evaluate(cfg, noisy, label.str());
    NoiseRow row;
    row.ratio = ratio;
    row.auc = m.auc;
    row.f1 = m.f1;
    row.train_positives = noisy.split.train.size();
    row.eval_hash = hash_pairs(noisy.split.eval);
    row.test_hash = hash_pairs(noisy.split.test);
    r.variants.push_back(std::move(m));
    r.noise.push_back(row);
  }
  const auto& base = r.noise.front();
  for (auto& row : r.noise) {
    row.drop_auc = base.auc != 0 ? (base.auc - row.auc) / base.auc * 100.0 : 0.0;
    row.drop_f1 = base.f1 != 0 ? (base.f1 - row.f1) / base.f1 * 100.0 : 0.0;
  }
  return r;
}

struct SweepPoint {
  double x = 0.0;
  double auc = 0.0;
  double f1 = 0.0;
};

inline std::vector<SweepPoint> sweep_intents(const ExperimentConfig& cfg, const Dataset& ds) {
  std::vector<SweepPoint> out;
  for (auto k : cfg.intent_grid) {
    auto c = cfg;
    c.intents = k;
    auto m = train_and_evaluate(c, ds, "K=" + std::to_string(k));
    out.push_back({static_cast<double>(k), m.auc, m.f1});
  }
  return out;
}

inline std::vector<SweepPoint> sweep_alpha(const ExperimentConfig& cfg, const Dataset& ds) {
  std::vector<SweepPoint> out;
  for (double a : cfg.alpha_grid) {
    auto c = cfg;
    c.alpha = a;
    auto m = train_and_evaluate(c, ds, "alpha");
    out.push_back({a, m.auc, m.f1});
  }
  return out;
}

inline void write_series_csv(const std::filesystem::path& path, const std::string& x_name,
                             const std::vector<SweepPoint>& pts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(17) << x_name << ",auc,f1\n";
  for (const auto& p : pts) os << p.x << ',' << p.auc << ',' << p.f1 << '\n';
}

inline void write_noise_series_csv(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(17) << "noise_ratio,drop_auc_pct,drop_f1_pct\n";
  for (const auto& n : r.noise) os << n.ratio << ',' << n.drop_auc << ',' << n.drop_f1 << '\n';
}

inline std::string report_csv(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  std::vector<std::size_t> ks;
  if (!r.variants.empty())
    for (const auto& [k, v] : r.variants.front().recall) ks.push_back(k);
  os << "variant,auc,f1,train_auc";
  for (auto k : ks) os << ",recall@" << k;
  os << '\n';
  for (const auto& v : r.variants) {
    os << v.label << ',' << v.auc << ',' << v.f1 << ',' << v.train_auc;
    for (auto k : ks) os << ',' << (v.recall.count(k) ? v.recall.at(k) : std::nan(""));
    os << '\n';
  }
  if (!r.noise.empty()) {
    os << "\nnoise_ratio,auc,f1,drop_auc_pct,drop_f1_pct,train_positives,eval_hash,test_hash\n";
    for (const auto& n : r.noise)
      os << n.ratio << ',' << n.auc << ',' << n.f1 << ',' << n.drop_auc << ',' << n.drop_f1 << ','
         << n.train_positives << ',' << n.eval_hash << ',' << n.test_hash << '\n';
  }
  return os.str();
}

inline std::string report_table(const MetricReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  std::vector<std::size_t> ks;
  if (!r.variants.empty()) {
    for (const auto& [k, v] : r.variants.front().recall) ks.push_back(k);
    os << std::left << std::setw(12) << "variant" << std::right << std::setw(9) << "AUC" << std::setw(9)
       << "F1" << std::setw(11) << "train-AUC";
    for (auto k : ks) os << std::setw(10) << ("R@" + std::to_string(k));
    os << '\n';
  }
  for (const auto& v : r.variants) {
    os << std::left << std::setw(12) << v.label << std::right << std::setw(9) << v.auc << std::setw(9)
       << v.f1 << std::setw(11) << v.train_auc;
    for (auto k : ks) os << std::setw(10) << v.recall.at(k);
    os << '\n';
  }
  if (!r.noise.empty()) {
    if (!r.variants.empty()) os << '\n';
    os << std::setw(8) << "noise" << std::setw(9) << "AUC" << std::setw(10) << "%drop" << std::setw(9)
       << "F1" << std::setw(10) << "%drop" << '\n';
    for (const auto& n : r.noise)
      os << std::setw(7) << std::setprecision(0) << n.ratio * 100 << '%' << std::setprecision(4) << std::setw(9) << n.auc << std::setw(10) << n.drop_auc
         << std::setw(9) << n.f1 << std::setw(10) << n.drop_f1 << '\n';
  }
  return os.str();
}

}  // namespace kgtn
