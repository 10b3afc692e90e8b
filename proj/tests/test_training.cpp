#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "kgtn/gradcheck.hpp"
#include "kgtn/training.hpp"
#include "test_util.hpp"

using namespace kgtn;
using kgtn::testing::constant;

namespace {

// Small, fast configuration on the planted fixture.
ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.dim = 16;
  cfg.intents = 4;
  cfg.heads = 2;
  cfg.batch = 64;
  cfg.lr = 0.01;
  cfg.epochs = 5;
  cfg.patience = 0;
  cfg.seed = 11;
  return cfg;
}

const Dataset& fixture() {
  static const Dataset ds = assemble(generate_synthetic(40, 30, 50, 3, 0.5, 7), {}, 7);
  return ds;
}

std::vector<double> flat(const ModelParameters& p) {
  std::vector<double> out;
  p.for_each([&](const std::string&, const Tensor& t) { out.insert(out.end(), t.values().begin(), t.values().end()); });
  return out;
}

ModelParameters single_parameter(std::vector<double> v) {
  ModelParameters p;
  const std::size_t n = v.size();
  p.user_emb = Tensor::parameter({1, n}, std::move(v));
  p.entity_emb = Tensor::parameter({0, n}, {});
  p.relation_emb = Tensor::parameter({0, n}, {});
  p.intent_user = Tensor::parameter({0, n}, {});
  p.intent_item = Tensor::parameter({0, n}, {});
  return p;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kgtn_training_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Predict, InnerProductOfLayerSums) {
  Track orth{{constant({1, 2}, {1, 0})}, {constant({1, 2}, {0, 1})}};
  EXPECT_EQ(predict(0, 0, orth), 0.0);
  Track self{{constant({1, 2}, {1, 1})}, {constant({1, 2}, {1, 1})}};
  EXPECT_EQ(predict(0, 0, self), 2.0);
  Track one{{constant({1, 2}, {1, 2})}, {constant({1, 2}, {3, 4})}};
  EXPECT_EQ(predict(0, 0, one), 11.0);
  Track two{{constant({1, 2}, {1, 0}), constant({1, 2}, {0, 2})}, {constant({1, 2}, {3, 0}), constant({1, 2}, {0, 4})}};
  EXPECT_EQ(predict(0, 0, two), 11.0);
}

TEST(BprLoss, ClosedForms) {
  Tape tape;
  auto at = [&](double diff) {
    return bpr_loss(tape, constant({1}, {diff}), constant({1}, {0.0})).item();
  };
  EXPECT_NEAR(at(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(at(0.0), 0.69315, 1e-5);
  EXPECT_NEAR(at(1.0), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(at(1.0), 0.31326, 1e-5);
}

TEST(BprLoss, DecreasesMonotonicallyToZero) {
  Tape tape;
  double prev = INFINITY;
  for (double diff = -5; diff <= 60; diff += 0.5) {
    const double l = bpr_loss(tape, constant({1}, {diff}), constant({1}, {0.0})).item();
    EXPECT_LT(l, prev);
    EXPECT_GE(l, 0.0);
    prev = l;
  }
  EXPECT_LT(prev, 1e-25);
  // stable far into the tails
  EXPECT_TRUE(std::isfinite(bpr_loss(tape, constant({1}, {-1000}), constant({1}, {0.0})).item()));
}

TEST(BprLoss, MeanOverBatch) {
  Tape tape;
  auto l = bpr_loss(tape, constant({2}, {0, 1}), constant({2}, {0, 0}));
  EXPECT_NEAR(l.item(), (std::log(2.0) + std::log1p(std::exp(-1.0))) / 2, 1e-15);
}

TEST(TotalLoss, NoWeightsEqualsBpr) {
  Tape tape;
  auto p = single_parameter({3, 4});
  auto bpr = constant({}, {0.4});
  auto cl = constant({}, {9.0});
  EXPECT_EQ(total_loss(tape, bpr, cl, p, 0.0, 0.0).item(), 0.4);
}

TEST(TotalLoss, SquaredNormArithmetic) {
  Tape tape;
  auto p = single_parameter({3, 4});
  EXPECT_DOUBLE_EQ(total_loss(tape, constant({}, {0.0}), constant({}, {0.0}), p, 0.1, 1.0).item(), 25.0);
  EXPECT_DOUBLE_EQ(total_loss(tape, constant({}, {1.0}), constant({}, {2.0}), p, 0.5, 0.0).item(), 2.0);
  EXPECT_THROW(total_loss(tape, constant({}, {0.0}), Tensor(), p, -1.0, 0.0), ConfigError);
}

TEST(TotalLoss, DefaultContrastWeight) { EXPECT_DOUBLE_EQ(ExperimentConfig{}.alpha, 0.1); }

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  auto p = single_parameter({0.5, -1.5});
  Adam opt(0.1);
  p.user_emb.grad();  // materialized zeros
  opt.step(p);
  EXPECT_EQ(p.user_emb.at(0), 0.5);
  EXPECT_EQ(p.user_emb.at(1), -1.5);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, FirstStepClosedForm) {
  for (double g : {3.0, -0.02, 1e-6}) {
    auto p = single_parameter({1.0});
    p.user_emb.grad()[0] = g;
    Adam opt(0.01);
    opt.step(p);
    EXPECT_NEAR(p.user_emb.at(0), 1.0 - 0.01 * g / (std::sqrt(g * g) + 1e-8), 1e-15);
    EXPECT_EQ(opt.first_moment("user_emb").size(), 1u);
    EXPECT_EQ(opt.second_moment("user_emb").size(), 1u);
  }
}

TEST(Adam, NonFiniteGradientAbortsAndNamesParameter) {
  auto p = single_parameter({1.0, 2.0});
  p.user_emb.grad()[1] = std::nan("");
  Adam opt(0.1);
  try {
    opt.step(p);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("user_emb"), std::string::npos);
  }
  EXPECT_EQ(p.user_emb.at(0), 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Adam, FiveStepsAreBitwiseReproducible) {
  auto run = [] {
    auto toy = make_toy_problem(3);
    Adam opt(0.01);
    const auto ak = ActiveKnowledge::from(toy.frozen_kg);
    for (int k = 0; k < 5; ++k) {
      toy.params.zero_grad();
      Tape tape;
      auto l = batch_loss(tape, toy.params, ak, toy.idx, toy.cfg, toy.batch).total;
      tape.backward(l);
      opt.step(toy.params);
    }
    return flat(toy.params);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, MomentShapesMatchParameters) {
  auto toy = make_toy_problem();
  Adam opt(0.01);
  Tape tape;
  auto l = toy.loss(tape, toy.params);
  tape.backward(l);
  opt.step(toy.params);
  toy.params.for_each([&](const std::string& name, const Tensor& t) {
    EXPECT_EQ(opt.first_moment(name).size(), t.numel()) << name;
    EXPECT_EQ(opt.second_moment(name).size(), t.numel()) << name;
  });
}

TEST(Parameters, EveryTensorRegisteredOnceAndCoveredByL2) {
  auto toy = make_toy_problem();
  std::set<std::string> names;
  std::size_t total = 0;
  toy.params.for_each([&](const std::string& n, const Tensor& t) {
    EXPECT_TRUE(names.insert(n).second) << n;
    total += t.numel();
  });
  EXPECT_EQ(total, toy.params.numel());
  Tape tape;
  EXPECT_NEAR(l2_penalty(tape, toy.params).item(), l2_value(toy.params), 1e-12);
}

TEST(Parameters, SharedTransformerWeightsUseOneLayer) {
  ModelShape s;
  s.n_users = 2;
  s.n_entities = 3;
  s.n_relations = 1;
  s.dim = 4;
  s.intents = 2;
  s.heads = 2;
  s.depth = 3;
  std::mt19937_64 rng(1);
  EXPECT_EQ(init_parameters(s, rng).transformer.size(), 3u);
  s.share_transformer_weights = true;
  auto p = init_parameters(s, rng);
  EXPECT_EQ(p.transformer.size(), 1u);
  EXPECT_TRUE(p.layer_weights(2).query.same_storage(p.layer_weights(0).query));
  s.heads = 3;
  EXPECT_THROW(init_parameters(s, rng), DimensionError);
}

TEST(EndToEnd, CompositeLossGradientCheck) {
  auto toy = make_toy_problem();
  EXPECT_GT(toy.frozen_kg.active_count(), 0u);
  EXPECT_LT(toy.frozen_kg.active_count(), toy.frozen_kg.n_slots());
  auto r = check_gradients([&](Tape& t, const ModelParameters& p) { return toy.loss(t, p); }, toy.params);
  EXPECT_EQ(r.entries, toy.params.numel());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
                                   << " numeric " << r.worst_numeric;
}

TEST(OpCounts, ZeroAlphaBuildsNoContrastiveTrack) {
  auto toy = make_toy_problem();
  const auto ak = ActiveKnowledge::from(toy.frozen_kg);
  auto cfg = toy.cfg;
  {
    Tape tape;
    batch_loss(tape, toy.params, ak, toy.idx, cfg, toy.batch);
    EXPECT_GT(tape.op_count("info_nce"), 0u);
  }
  cfg.alpha = 0.0;
  Tape tape;
  auto parts = batch_loss(tape, toy.params, ak, toy.idx, cfg, toy.batch);
  EXPECT_EQ(tape.op_count("info_nce"), 0u);
  EXPECT_EQ(tape.op_count("normalize_rows"), 0u);
  EXPECT_EQ(parts.contrastive, 0.0);
}

TEST(Fit, ZeroEpochsReturnsInitialization) {
  auto cfg = small_config();
  cfg.epochs = 0;
  auto res = fit(cfg, fixture());
  EXPECT_TRUE(res.log.empty());
  std::mt19937_64 rng(cfg.seed);
  EXPECT_EQ(flat(res.params), flat(init_parameters(model_shape(cfg, fixture()), rng)));
}

TEST(Fit, TotalLossDecreasesOverFirstFiveEpochs) {
  ExperimentConfig cfg;  // defaults: one full batch per epoch on this fixture
  cfg.epochs = 5;
  cfg.patience = 0;
  cfg.seed = 7;
  auto res = fit(cfg, fixture());
  ASSERT_EQ(res.log.size(), 5u);
  auto total = [&](const EpochLog& e) { return e.loss_bpr + cfg.alpha * e.loss_cl + cfg.l2 * e.loss_reg; };
  for (std::size_t k = 1; k < res.log.size(); ++k)
    EXPECT_LT(total(res.log[k]), total(res.log[k - 1])) << "epoch " << res.log[k].epoch;
}

TEST(Fit, MetricLogIsReproducible) {
  auto cfg = small_config();
  auto a = fit(cfg, fixture());
  auto b = fit(cfg, fixture());
  EXPECT_EQ(metric_log_csv(a.log), metric_log_csv(b.log));
  EXPECT_EQ(flat(a.params), flat(b.params));
  cfg.seed += 1;
  EXPECT_NE(metric_log_csv(fit(cfg, fixture()).log), metric_log_csv(a.log));
}

TEST(Fit, MetricLogHeader) {
  auto cfg = small_config();
  cfg.epochs = 1;
  auto csv = metric_log_csv(fit(cfg, fixture()).log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss_bpr,loss_cl,loss_reg,eval_auc,eval_f1");
}

TEST(Fit, FullModelOverfitsPlantedFixture) {
  ExperimentConfig cfg;
  cfg.epochs = 200;
  cfg.patience = 0;
  cfg.seed = 7;
  double reached = 0.0;
  fit(cfg, fixture(), [&](const EpochLog&, const ModelParameters& p) {
    reached = train_auc(infer(p, fixture(), cfg), fixture(), 1);
    return reached < 0.95;
  });
  EXPECT_GE(reached, 0.95);
}

TEST(Fit, EarlyStoppingKeepsBestEpoch) {
  auto cfg = small_config();
  cfg.epochs = 60;
  cfg.patience = 3;
  auto res = fit(cfg, fixture());
  if (res.status == FitStatus::EarlyStopped) {
    EXPECT_EQ(res.log.size(), res.best_epoch + cfg.patience);
  }
  double best = -1;
  for (const auto& e : res.log) best = std::max(best, e.eval_auc);
  EXPECT_EQ(res.log.at(res.best_epoch - 1).eval_auc, best);
}

TEST(Fit, DivergenceRestoresLastGoodParameters) {
  auto cfg = small_config();
  cfg.lr = 1e250;
  cfg.epochs = 10;
  auto res = fit(cfg, fixture());
  EXPECT_EQ(res.status, FitStatus::Diverged);
  EXPECT_FALSE(res.message.empty());
  for (double x : flat(res.params)) ASSERT_TRUE(std::isfinite(x));
}

TEST(Fit, KeepAllLeavesKnowledgeGraphIntact) {
  auto cfg = small_config();
  cfg.k_top = kKeepAll;
  EXPECT_FALSE(cfg.sampling_enabled());
  auto res = fit(cfg, fixture());
  EXPECT_EQ(inference_graph(res.params, fixture(), cfg).active_count(), fixture().kg.n_slots());
  cfg.k_top = 1;
  EXPECT_LT(inference_graph(res.params, fixture(), cfg).active_count(), fixture().kg.n_slots());
}

TEST(Fit, LargerL2NeverGrowsParameterNorm) {
  auto cfg = small_config();
  cfg.epochs = 40;
  cfg.l2 = 1e-5;
  const double loose = l2_value(fit(cfg, fixture()).params);
  cfg.l2 = 1e-3;
  const double tight = l2_value(fit(cfg, fixture()).params);
  EXPECT_LE(tight, loose);
}

TEST(Fit, AssignmentsNonUniformAfterOneStep) {
  auto cfg = small_config();
  cfg.epochs = 1;
  auto res = fit(cfg, fixture());
  Tape tape;
  auto p = intent_assignment(tape, res.params.user_emb, res.params.intent_user);
  double spread = 0.0;
  for (double x : p.values()) spread = std::max(spread, std::abs(x - 1.0 / cfg.intents));
  EXPECT_GT(spread, 1e-3);
}

TEST(Fit, BprmfBaselineTrains) {
  auto cfg = small_config();
  cfg.model = "bprmf";
  cfg.epochs = 30;
  auto res = fit(cfg, fixture());
  EXPECT_EQ(res.status, FitStatus::Completed);
  EXPECT_GT(train_auc(infer(res.params, fixture(), cfg), fixture(), 1), 0.9);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto toy = make_toy_problem();
  auto path = scratch("roundtrip.ckpt");
  save_checkpoint(path, toy.params);
  auto back = load_checkpoint(path, toy.params);
  EXPECT_EQ(flat(back), flat(toy.params));
  EXPECT_FALSE(back.user_emb.same_storage(toy.params.user_emb));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  auto toy = make_toy_problem();
  auto good = scratch("good.ckpt");
  save_checkpoint(good, toy.params);
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    auto p = scratch(name);
    std::ofstream(p, std::ios::binary) << content;
    return p;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.ckpt", bad_magic), toy.params), CheckpointError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(load_checkpoint(write("version.ckpt", bad_version), toy.params), CheckpointError);
  EXPECT_THROW(load_checkpoint(write("trunc.ckpt", bytes.substr(0, bytes.size() / 2)), toy.params), CheckpointError);
  EXPECT_THROW(load_checkpoint(scratch("missing.ckpt"), toy.params), CheckpointError);
  auto other = toy.cfg;
  other.dim = 4;
  std::mt19937_64 rng(1);
  auto mismatched = init_parameters(model_shape(other, toy.ds), rng);
  EXPECT_THROW(load_checkpoint(good, mismatched), CheckpointError);
}
