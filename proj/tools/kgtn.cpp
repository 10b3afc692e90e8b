// Command-line driver: train, evaluate, ablate, noise-test, gen-synth and
// grad-check workflows over a config file plus flag overrides.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "kgtn/kgtn.hpp"

namespace fs = std::filesystem;
using namespace kgtn;

namespace {

struct Options {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::string checkpoint;
  // gen-synth sizes
  std::size_t users = 40, items = 30, entities = 50, relations = 3;
  double density = 0.5;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

ExperimentConfig resolve(const Options& o, bool needs_data) {
  auto cfg = parse_config(o.config_path, o.overrides);
  if (cfg.data_dir.empty())
    if (const char* env = std::getenv("KGTN_DATA_DIR")) cfg.data_dir = env;
  if (needs_data && cfg.data_dir.empty())
    throw std::runtime_error("no data directory: pass --data-dir, set data_dir, or export KGTN_DATA_DIR");
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "resolved_config.ini", serialize_config(cfg));
  return cfg;
}

Dataset dataset_for(const ExperimentConfig& cfg) {
  auto ds = load_dataset(cfg.data_dir, cfg.split, cfg.seed, cfg.ratings_file, cfg.kg_file);
  if (cfg.noise_ratio > 0) ds = with_noise(ds, cfg.noise_ratio, cfg.seed + 17);
  std::cerr << "data: " << ds.n_users << " users, " << ds.n_items << " items, " << ds.kg.n_entities()
            << " entities, " << ds.kg.n_slots() << " KG slots, " << ds.split.train.size()
            << " train positives\n";
  return ds;
}

int cmd_train(const Options& o) {
  const auto cfg = resolve(o, true);
  const auto ds = dataset_for(cfg);
  auto res = fit(cfg, ds, [](const EpochLog& e, const ModelParameters&) {
    std::cerr << std::fixed << std::setprecision(5) << "epoch " << e.epoch << " bpr " << e.loss_bpr << " cl "
              << e.loss_cl << " eval_auc " << e.eval_auc << " eval_f1 " << e.eval_f1 << '\n';
    return true;
  });
  const fs::path out(cfg.out_dir);
  write_text(out / "metrics.csv", metric_log_csv(res.log));
  if (res.status == FitStatus::Diverged) {
    std::cerr << "error: training diverged: " << res.message << '\n';
    return 1;
  }
  save_checkpoint(out / "checkpoint.kgtn", res.params);
  std::cout << "trained " << res.log.size() << " epochs (best " << res.best_epoch << "); wrote "
            << (out / "checkpoint.kgtn").string() << '\n';
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto cfg = resolve(o, true);
  const auto ds = dataset_for(cfg);
  const fs::path ckpt = o.checkpoint.empty() ? fs::path(cfg.out_dir) / "checkpoint.kgtn" : fs::path(o.checkpoint);
  std::mt19937_64 rng(cfg.seed);
  const auto like = init_parameters(model_shape(cfg, ds), rng);
  const auto params = load_checkpoint(ckpt, like);
  MetricReport report;
  report.variants.push_back(evaluate_model(params, ds, cfg, cfg.model));
  write_text(fs::path(cfg.out_dir) / "report.csv", report_csv(report));
  std::cout << report_table(report);
  return 0;
}

int cmd_ablate(const Options& o) {
  const auto cfg = resolve(o, true);
  const auto ds = dataset_for(cfg);
  const auto report = run_ablation(cfg, ds);
  const fs::path out(cfg.out_dir);
  write_text(out / "report.csv", report_csv(report));
  if (cfg.emit_plot_data) {
    write_series_csv(out / "intents_sweep.csv", "intents", sweep_intents(cfg, ds));
    write_series_csv(out / "alpha_sweep.csv", "alpha", sweep_alpha(cfg, ds));
  }
  std::cout << report_table(report);
  return 0;
}

int cmd_noise(const Options& o) {
  const auto cfg = resolve(o, true);
  auto base_cfg = cfg;
  base_cfg.noise_ratio = 0.0;
  const auto ds = dataset_for(base_cfg);
  const auto report = noise_robustness(cfg, ds, cfg.noise_ratios);
  const fs::path out(cfg.out_dir);
  write_text(out / "report.csv", report_csv(report));
  if (cfg.emit_plot_data) write_noise_series_csv(out / "noise_drop.csv", report);
  std::cout << report_table(report);
  return 0;
}

int cmd_gen_synth(const Options& o) {
  const auto cfg = resolve(o, false);
  const auto syn = generate_synthetic(o.users, o.items, o.entities, o.relations, o.density, cfg.seed);
  write_synthetic(cfg.out_dir, syn);
  std::cout << "wrote " << syn.ratings.rows.size() << " interactions and " << syn.triples.size()
            << " triples to " << cfg.out_dir << '\n';
  return 0;
}

int cmd_grad_check(const Options& o) {
  const auto cfg = resolve(o, false);
  auto toy = make_toy_problem(cfg.seed);
  const auto r = check_gradients([&](Tape& t, const ModelParameters& p) { return toy.loss(t, p); }, toy.params);
  const bool ok = r.max_rel_error < 1e-4;
  std::cout << std::scientific << std::setprecision(3) << "grad-check: " << r.entries
            << " entries, max relative error " << r.max_rel_error << " at " << r.worst_param << "["
            << r.worst_index << "], " << std::fixed << r.seconds << " s: " << (ok ? "ok" : "FAILED") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph transformer recommender"};
  app.require_subcommand(1);
  Options o;

  auto value = [&](const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
           flag, [&o, key](const std::string& v) { o.overrides[key] = v; }, help)
        ->type_name("VALUE");
  };
  app.add_option("--config", o.config_path, "config file (key = value with [sections])")->check(CLI::ExistingFile);
  value("--data-dir", "data_dir", "directory holding ratings_final.txt and kg_final.txt");
  value("--out", "out_dir", "output directory");
  value("--seed", "seed", "random seed");
  value("--alpha", "alpha", "contrastive weight");
  value("--tau", "tau", "contrastive temperature");
  value("--k-top", "k_top", "KG neighbours kept per head (or inf)");
  value("--intents", "intents", "number of intents K");
  value("--depth", "depth", "transformer layers L");
  value("--heads", "heads", "attention heads H");
  value("--lr", "lr", "learning rate");
  value("--l2", "l2", "L2 weight");
  value("--epochs", "epochs", "training epochs");
  value("--batch", "batch", "batch size");
  value("--threads", "threads", "worker threads for ranking");
  value("--noise-ratio", "noise_ratio", "fraction of fake training positives");
  value("--model", "model", "kgtn or bprmf");
  app.add_flag_callback("--emit-plot-data", [&] { o.overrides["emit_plot_data"] = "true"; },
                        "write x/y CSV series for sweeps and noise drop");
  app.add_flag_callback("--share-transformer-weights",
                        [&] { o.overrides["share_transformer_weights"] = "true"; },
                        "one set of attention weights for all layers");
  app.add_flag_callback("--infonce-standard", [&] { o.overrides["infonce_standard"] = "true"; },
                        "include the positive pair in the contrastive denominator");

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint and metric log");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/checkpoint.kgtn)");
  auto* ablate = app.add_subcommand("ablate", "train and compare the four ablation variants");
  auto* noise = app.add_subcommand("noise-test", "retrain under injected training noise");
  auto* synth = app.add_subcommand("gen-synth", "write a planted synthetic dataset to <out>");
  synth->add_option("--users", o.users)->check(CLI::PositiveNumber);
  synth->add_option("--items", o.items)->check(CLI::PositiveNumber);
  synth->add_option("--entities", o.entities, "total entities, items included");
  synth->add_option("--relations", o.relations)->check(CLI::PositiveNumber);
  synth->add_option("--density", o.density)->check(CLI::Range(0.0, 1.0));
  auto* grad = app.add_subcommand("grad-check", "finite-difference check on the toy instance");
  for (auto* sub : {train, evaluate, ablate, noise, synth, grad}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*train) return cmd_train(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*ablate) return cmd_ablate(o);
    if (*noise) return cmd_noise(o);
    if (*synth) return cmd_gen_synth(o);
    if (*grad) return cmd_grad_check(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
