// Command-line harness: synthetic data generation, pretraining, reward-model
// training, filtering, preference optimization, evaluation and plot-data
// export. All randomness flows from master_seed through fixed stream labels,
// so a rerun with the same config reproduces metrics and checkpoints exactly.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lpref/lpref.hpp"

namespace fs = std::filesystem;
using namespace lpref;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (key=value lines)");
  cmd->add_option("--seed", args.seed, "override master_seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--set", args.sets, "override a config key (key=value, repeatable)");
}

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config file: " + args.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  }
  for (const std::string& kv : args.sets) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got: " + kv);
    apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_set) cfg.master_seed = args.seed;
  cfg.validate();
  return cfg;
}

// Every run leaves a canonical echo sufficient to reproduce it.
std::string write_config_echo(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::string echo = serialize_config(cfg);
  std::ofstream out(fs::path(out_dir) / "config_echo.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write config echo in " + out_dir);
  out << echo;
  return echo;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  return (fs::path(args.out_dir) / name).string();
}

MetricsWriter make_metrics(const CommonArgs& args, const std::string& run_id) {
  return MetricsWriter(out_path(args, "metrics.jsonl"), run_id);
}

void write_trainer_metrics(MetricsWriter& metrics, const std::string& phase,
                           const TrainerMetrics& tm) {
  for (std::size_t e = 0; e < tm.epochs.size(); ++e) {
    const EpochStats& st = tm.epochs[e];
    metrics.write(phase, static_cast<int>(e),
                  {{"n_samples", static_cast<double>(st.n_samples)},
                   {"mean_loss", st.mean_loss},
                   {"mean_reward", st.mean_reward}});
    std::map<std::string, double> sites;
    for (auto& [t, count] : st.samples_per_site) {
      sites["t" + std::to_string(t)] = static_cast<double>(count);
    }
    if (!sites.empty()) metrics.write(phase + "-sites", static_cast<int>(e), sites);
  }
}

int cmd_gen_data(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  std::string echo = write_config_echo(cfg, args.out_dir);
  CorpusSpec spec = cfg.make_corpus_spec();
  RngStream root(cfg.master_seed);
  auto latents = make_latent_corpus(spec, cfg.latent_channels, cfg.latent_height, cfg.latent_width,
                                    root.derive("data").derive("latents"));
  auto pairs = make_pair_corpus(spec, cfg.latent_channels, cfg.latent_height, cfg.latent_width,
                                root.derive("data").derive("pairs"));
  save_latents(out_path(args, "latents.lpds"), latents);
  save_pairs(out_path(args, "pairs.lpds"), pairs);
  MetricsWriter metrics = make_metrics(args, "gen-data");
  metrics.write("gen-data", 0,
                {{"n_latents", static_cast<double>(latents.size())},
                 {"n_pairs", static_cast<double>(pairs.size())}});
  std::cout << "wrote " << latents.size() << " latents and " << pairs.size() << " pairs to "
            << args.out_dir << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args, const std::string& latents_path) {
  RunConfig cfg = load_run_config(args);
  std::string echo = write_config_echo(cfg, args.out_dir);
  NoiseSchedule sched = cfg.make_schedule();
  Encoder enc = cfg.make_encoder();
  std::vector<LatentItem> data = load_latents(latents_path);
  for (LatentItem& item : data) item.x0 = enc.encode(item.x0);
  RngStream root(cfg.master_seed);
  Denoiser net(cfg.make_denoiser_config(), root.derive("dmo_init"));
  TrainCurve curve = pretrain_denoiser(data, net, sched, cfg.pretrain_steps, cfg.pretrain_lr,
                                       cfg.pretrain_batch, cfg.pretrain_cond_dropout,
                                       root.derive("pretrain"));
  MetricsWriter metrics = make_metrics(args, "pretrain");
  for (std::size_t i = 0; i < curve.loss.size(); ++i) {
    metrics.write("pretrain", static_cast<int>(i), {{"loss", curve.loss[i]}});
  }
  save_checkpoint(out_path(args, "denoiser.ckpt"), checkpoint_of(net, echo));
  std::cout << "pretrained " << cfg.pretrain_steps << " steps";
  if (!curve.loss.empty()) {
    std::cout << ", loss " << curve.loss.front() << " -> " << smoothed_tail(curve.loss, 50);
  }
  std::cout << "\n";
  return 0;
}

int cmd_train_lrm(const CommonArgs& args, const std::string& pairs_path, const std::string& init_path) {
  RunConfig cfg = load_run_config(args);
  NoiseSchedule sched = cfg.make_schedule();
  Encoder enc = cfg.make_encoder();
  RngStream root(cfg.master_seed);

  Denoiser backbone(cfg.make_lrm_backbone_config(), root.derive("lrm_backbone_init"));
  if (!init_path.empty()) {
    Checkpoint init = load_checkpoint_as(init_path, Checkpoint::Kind::denoiser);
    RunConfig init_cfg = parse_config(init.config_echo);
    // the backbone architecture follows the initializing checkpoint
    cfg.lrm_backbone_depth = init_cfg.denoiser_depth;
    cfg.lrm_backbone_width = init_cfg.denoiser_width;
    cfg.lrm_backbone_n_p = init_cfg.denoiser_n_p;
    cfg.lrm_backbone_vocab = init_cfg.denoiser_vocab;
    cfg.lrm_backbone_time_embed_dim = init_cfg.denoiser_time_embed_dim;
    backbone = denoiser_from_checkpoint(init);
  }
  std::string echo = write_config_echo(cfg, args.out_dir);

  std::vector<ScoredPair> records = load_pairs(pairs_path);
  detail::seeded_shuffle(records, root.derive("holdout"));
  std::size_t holdout_n = std::min(records.size() / 4, static_cast<std::size_t>(cfg.lrm_holdout));
  std::vector<ScoredPair> holdout(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(holdout_n));
  std::vector<ScoredPair> train_records(records.begin() + static_cast<std::ptrdiff_t>(holdout_n),
                                        records.end());

  std::vector<ScoredPair> kept = train_records;
  if (cfg.lrm_filter_strategy >= 1) {
    kept = filter_winlose(train_records, FilterStrategy::winlose(cfg.lrm_filter_strategy));
  }
  std::vector<PreferencePair> tie_pairs;
  if (cfg.lrm_include_ties) tie_pairs = to_preference_pairs(filter_ties(train_records));

  Lrm model(std::move(backbone), enc, cfg.make_lrm_config(), root.derive("lrm_head_init"));
  TrainCurve curve = train_lrm(to_preference_pairs(kept), model, sched, cfg.lrm_steps, cfg.lrm_lr,
                               cfg.lrm_batch, root.derive("lrm_train"), tie_pairs, cfg.lrm_warmup);

  MetricsWriter metrics = make_metrics(args, "train-lrm");
  for (std::size_t i = 0; i < curve.loss.size(); ++i) {
    metrics.write("train-lrm", static_cast<int>(i), {{"loss", curve.loss[i]}});
  }
  std::map<std::string, double> summary{{"kept_pairs", static_cast<double>(kept.size())},
                                        {"tie_pairs", static_cast<double>(tie_pairs.size())}};
  if (!holdout.empty()) {
    double acc = pairwise_accuracy(to_preference_pairs(holdout), 0, model, sched, root.derive("lrm_eval"));
    CorrMetrics corr = corr_metrics(model, holdout, cfg.corr_timestep, sched);
    summary["accuracy_t0"] = acc;
    summary["aes_corr"] = corr.aes_corr;
    summary["clip_corr"] = corr.clip_corr;
    summary["vqa_corr"] = corr.vqa_corr;
    std::cout << "holdout accuracy(t=0) " << acc << ", aes-corr " << corr.aes_corr << ", clip-corr "
              << corr.clip_corr << ", vqa-corr " << corr.vqa_corr << "\n";
  }
  metrics.write("train-lrm-eval", 0, summary);
  save_checkpoint(out_path(args, "lrm.ckpt"), checkpoint_of(model, echo));
  return 0;
}

int cmd_filter(const CommonArgs& args, const std::string& pairs_path) {
  RunConfig cfg = load_run_config(args);
  write_config_echo(cfg, args.out_dir);
  if (cfg.lrm_filter_strategy < 1) {
    throw InvalidArgument("filter: lrm.filter_strategy must be 1..3");
  }
  std::vector<ScoredPair> records = load_pairs(pairs_path);
  std::vector<ScoredPair> kept = filter_winlose(records, FilterStrategy::winlose(cfg.lrm_filter_strategy));
  std::vector<ScoredPair> ties = filter_ties(records);
  if (!kept.empty()) save_pairs(out_path(args, "filtered.lpds"), kept);
  if (!ties.empty()) save_pairs(out_path(args, "ties.lpds"), ties);
  MetricsWriter metrics = make_metrics(args, "filter");
  metrics.write("filter", 0,
                {{"total", static_cast<double>(records.size())},
                 {"kept", static_cast<double>(kept.size())},
                 {"ties", static_cast<double>(ties.size())}});
  std::cout << "strategy " << cfg.lrm_filter_strategy << ": kept " << kept.size() << " of "
            << records.size() << ", ties " << ties.size() << "\n";
  return 0;
}

int cmd_corr(const CommonArgs& args, const std::string& pairs_path, const std::string& lrm_path) {
  RunConfig cfg = load_run_config(args);
  write_config_echo(cfg, args.out_dir);
  NoiseSchedule sched = cfg.make_schedule();
  Lrm model = load_lrm(lrm_path);
  std::vector<ScoredPair> records = load_pairs(pairs_path);
  CorrMetrics corr = corr_metrics(model, records, cfg.corr_timestep, sched);
  MetricsWriter metrics = make_metrics(args, "corr");
  metrics.write("corr", cfg.corr_timestep,
                {{"aes_corr", corr.aes_corr}, {"clip_corr", corr.clip_corr}, {"vqa_corr", corr.vqa_corr}});
  std::cout << "t=" << cfg.corr_timestep << " aes-corr " << corr.aes_corr << " clip-corr "
            << corr.clip_corr << " vqa-corr " << corr.vqa_corr << "\n";
  return 0;
}

int cmd_lpo(const CommonArgs& args, const std::string& dmo_path, const std::string& lrm_path,
            bool grpo) {
  RunConfig cfg = load_run_config(args);
  std::string echo = write_config_echo(cfg, args.out_dir);
  NoiseSchedule sched = cfg.make_schedule();
  Encoder enc = cfg.make_encoder();
  Denoiser dmo = load_denoiser(dmo_path);
  Lrm lrm = load_lrm(lrm_path);
  RngStream root(cfg.master_seed);
  MetricsWriter metrics = make_metrics(args, grpo ? "grpo" : "lpo");
  if (grpo) {
    LpoConfig lcfg = cfg.make_lpo_config();
    lcfg.lr = cfg.grpo_lr;
    TrainerMetrics tm = run_grpo(lcfg, cfg.make_grpo_config(), dmo, lrm, enc, cfg.condition_ids(),
                                 sched, root.derive("grpo"));
    write_trainer_metrics(metrics, "grpo", tm);
    save_checkpoint(out_path(args, "grpo.ckpt"), checkpoint_of(dmo, echo));
    std::cout << "grpo finished: " << tm.total_samples() << " group rollouts\n";
  } else {
    TrainerMetrics tm = run_lpo(cfg.make_lpo_config(), dmo, lrm, enc, cfg.condition_ids(), sched,
                                root.derive("lpo"));
    write_trainer_metrics(metrics, "lpo", tm);
    save_checkpoint(out_path(args, "lpo.ckpt"), checkpoint_of(dmo, echo));
    std::cout << "lpo finished: " << tm.total_samples() << " qualified samples\n";
  }
  return 0;
}

int cmd_dpo(const CommonArgs& args, const std::string& dmo_path, const std::string& pairs_path) {
  RunConfig cfg = load_run_config(args);
  std::string echo = write_config_echo(cfg, args.out_dir);
  NoiseSchedule sched = cfg.make_schedule();
  Encoder enc = cfg.make_encoder();
  Denoiser dmo = load_denoiser(dmo_path);
  std::vector<PreferencePair> pairs = to_preference_pairs(load_pairs(pairs_path));
  RngStream root(cfg.master_seed);
  TrainerMetrics tm = run_dpo(cfg.make_dpo_config(), dmo, enc, pairs, sched, root.derive("dpo"));
  MetricsWriter metrics = make_metrics(args, "dpo");
  write_trainer_metrics(metrics, "dpo", tm);
  save_checkpoint(out_path(args, "dpo.ckpt"), checkpoint_of(dmo, echo));
  std::cout << "dpo finished: mean loss " << tm.epochs.front().mean_loss << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& dmo_path) {
  RunConfig cfg = load_run_config(args);
  write_config_echo(cfg, args.out_dir);
  NoiseSchedule sched = cfg.make_schedule();
  Denoiser net = load_denoiser(dmo_path);
  RngStream root(cfg.master_seed);
  EvalResult result = eval_reward(net, cfg.make_encoder(), cfg.make_sampler_config(),
                                  cfg.eval_n_samples, cfg.condition_ids(), sched, root.derive("eval"));
  MetricsWriter metrics = make_metrics(args, "eval");
  std::map<std::string, double> rec{{"overall_mean", result.overall_mean}};
  for (const CondReward& cr : result.per_cond) {
    rec["cond_" + std::to_string(cr.cond_id) + "_mean"] = cr.mean;
    rec["cond_" + std::to_string(cr.cond_id) + "_ci"] = cr.ci_halfwidth;
    std::cout << "cond " << cr.cond_id << ": " << cr.mean << " +- " << cr.ci_halfwidth << "\n";
  }
  std::cout << "overall: " << result.overall_mean << "\n";
  metrics.write("eval", 0, rec);
  return 0;
}

int cmd_plot_data(const std::string& metrics_path, const std::string& pairs_path,
                  const std::string& kind, const std::string& phase, const std::string& dim,
                  const std::string& edges_csv) {
  if (kind == "loss" || kind == "sites") {
    if (metrics_path.empty()) throw InvalidArgument("plot-data: --metrics required for kind " + kind);
    std::vector<MetricsRecord> records = read_metrics(metrics_path);
    if (kind == "loss") {
      std::cout << "step\tloss\n";
      for (const MetricsRecord& r : records) {
        if (r.phase != phase) continue;
        auto it = r.metrics.find("loss");
        if (it == r.metrics.end()) it = r.metrics.find("mean_loss");
        if (it != r.metrics.end()) std::cout << r.step << "\t" << it->second << "\n";
      }
    } else {
      std::cout << "epoch\ttimestep\tcount\n";
      for (const MetricsRecord& r : records) {
        if (r.phase != phase) continue;
        for (auto& [key, value] : r.metrics) {
          if (key.size() > 1 && key[0] == 't') {
            std::cout << r.step << "\t" << key.substr(1) << "\t" << value << "\n";
          }
        }
      }
    }
    return 0;
  }
  if (kind == "gap-hist") {
    if (pairs_path.empty()) throw InvalidArgument("plot-data: --pairs required for kind gap-hist");
    GapDim gd = dim == "A" ? GapDim::A : dim == "C" ? GapDim::C : GapDim::V;
    if (dim != "A" && dim != "C" && dim != "V") {
      throw InvalidArgument("plot-data: --dim must be A, C or V");
    }
    std::vector<double> edges;
    std::stringstream ss(edges_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) edges.push_back(std::stod(tok));
    GapHistogram h = gap_histogram(load_pairs(pairs_path), gd, edges);
    std::cout << "bin_lo\tbin_hi\tcount\n";
    std::cout << "-inf\t" << h.edges.front() << "\t" << h.counts.front() << "\n";
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
      std::cout << h.edges[i] << "\t" << h.edges[i + 1] << "\t" << h.counts[i + 1] << "\n";
    }
    std::cout << h.edges.back() << "\t+inf\t" << h.counts.back() << "\n";
    std::cout << "# fraction_below_zero\t" << h.fraction_below_zero << "\n";
    return 0;
  }
  throw InvalidArgument("plot-data: unknown kind " + kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent preference optimization toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string latents_path, pairs_path, init_path, dmo_path, lrm_path, metrics_path;
  std::string kind = "loss", phase = "pretrain", dim = "A", edges = "-2,-1,-0.5,0,0.5,1,2";

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, common);

  CLI::App* pre = app.add_subcommand("pretrain", "pretrain the denoiser on the latent corpus");
  add_common(pre, common);
  pre->add_option("--latents", latents_path, "latents.lpds file")->required();

  CLI::App* tlrm = app.add_subcommand("train-lrm", "train the latent reward model");
  add_common(tlrm, common);
  tlrm->add_option("--pairs", pairs_path, "pairs.lpds file")->required();
  tlrm->add_option("--init", init_path, "denoiser checkpoint to initialize the backbone");

  CLI::App* filt = app.add_subcommand("filter", "apply the multi-preference consistency filter");
  add_common(filt, common);
  filt->add_option("--pairs", pairs_path, "pairs.lpds file")->required();

  CLI::App* corr = app.add_subcommand("corr", "reward/oracle correlation metrics");
  add_common(corr, common);
  corr->add_option("--pairs", pairs_path, "pairs.lpds file")->required();
  corr->add_option("--lrm", lrm_path, "lrm checkpoint")->required();

  CLI::App* lpo = app.add_subcommand("lpo", "latent preference optimization");
  add_common(lpo, common);
  lpo->add_option("--dmo", dmo_path, "denoiser checkpoint to optimize")->required();
  lpo->add_option("--lrm", lrm_path, "lrm checkpoint")->required();

  CLI::App* grpo = app.add_subcommand("grpo", "step-wise group-relative policy optimization");
  add_common(grpo, common);
  grpo->add_option("--dmo", dmo_path, "denoiser checkpoint to optimize")->required();
  grpo->add_option("--lrm", lrm_path, "lrm checkpoint")->required();

  CLI::App* dpo = app.add_subcommand("dpo", "offline diffusion-DPO baseline");
  add_common(dpo, common);
  dpo->add_option("--dmo", dmo_path, "denoiser checkpoint to optimize")->required();
  dpo->add_option("--pairs", pairs_path, "pairs.lpds file")->required();

  CLI::App* ev = app.add_subcommand("eval", "oracle reward of deterministic generations");
  add_common(ev, common);
  ev->add_option("--dmo", dmo_path, "denoiser checkpoint")->required();

  CLI::App* plot = app.add_subcommand("plot-data", "emit tabular series for plotting");
  add_common(plot, common);
  plot->add_option("--metrics", metrics_path, "metrics.jsonl file");
  plot->add_option("--pairs", pairs_path, "pairs.lpds file");
  plot->add_option("--kind", kind, "loss | sites | gap-hist")->capture_default_str();
  plot->add_option("--phase", phase, "metrics phase to extract")->capture_default_str();
  plot->add_option("--dim", dim, "gap dimension A | C | V")->capture_default_str();
  plot->add_option("--edges", edges, "comma-separated histogram edges")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (pre->parsed()) return cmd_pretrain(common, latents_path);
    if (tlrm->parsed()) return cmd_train_lrm(common, pairs_path, init_path);
    if (filt->parsed()) return cmd_filter(common, pairs_path);
    if (corr->parsed()) return cmd_corr(common, pairs_path, lrm_path);
    if (lpo->parsed()) return cmd_lpo(common, dmo_path, lrm_path, false);
    if (grpo->parsed()) return cmd_lpo(common, dmo_path, lrm_path, true);
    if (dpo->parsed()) return cmd_dpo(common, dmo_path, pairs_path);
    if (ev->parsed()) return cmd_eval(common, dmo_path);
    if (plot->parsed()) return cmd_plot_data(metrics_path, pairs_path, kind, phase, dim, edges);
  } catch (const NumericFault& e) {
    std::cerr << "error: numeric fault: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
