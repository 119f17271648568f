#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lpref/diffusion/sampler.hpp"
#include "lpref/harness/synthetic.hpp"
#include "lpref/lpo/trainers.hpp"
#include "lpref/nn/denoiser.hpp"
#include "lpref/nn/encoder.hpp"
#include "lpref/reward/lrm.hpp"

namespace lpref {

// Flat key=value run configuration with section prefixes (lpo.beta=500).
// '#' starts a comment; blank lines are skipped; unknown keys are rejected.
// Serialization is canonical: every key, sorted, one per line.
struct RunConfig {
  std::uint64_t master_seed = 1;

  int schedule_T = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  std::size_t latent_channels = 4;
  std::size_t latent_height = 8;
  std::size_t latent_width = 8;

  std::string encoder_kind = "identity";  // identity | scale
  double encoder_scale = 1.0;

  std::size_t denoiser_depth = 2;
  std::size_t denoiser_width = 16;
  std::size_t denoiser_n_p = 8;
  std::size_t denoiser_vocab = 8;
  std::size_t denoiser_time_embed_dim = 16;

  int data_n_conditions = 4;
  int data_n_latents = 1024;
  int data_n_pairs = 4096;
  double data_jitter = 0.3;
  double data_align_lo = 0.05;
  double data_align_hi = 0.95;
  double data_rough_lo = 0.0;
  double data_rough_hi = 1.0;
  double data_label_flip = 0.1;
  double data_margin = 0.0;
  double data_tension = 0.15;

  int pretrain_steps = 1500;
  double pretrain_lr = 0.02;
  int pretrain_batch = 16;
  double pretrain_cond_dropout = 0.1;

  std::size_t lrm_n_d = 32;
  double lrm_gs = 7.5;
  double lrm_log_tau_init = 2.6592;
  int lrm_steps = 400;
  double lrm_lr = 0.006;
  int lrm_batch = 64;
  int lrm_warmup = 50;
  int lrm_filter_strategy = 2;  // 0 = unfiltered
  bool lrm_include_ties = false;
  int lrm_holdout = 256;
  std::size_t lrm_backbone_depth = 2;
  std::size_t lrm_backbone_width = 16;
  std::size_t lrm_backbone_n_p = 8;
  std::size_t lrm_backbone_vocab = 8;
  std::size_t lrm_backbone_time_embed_dim = 16;

  int sampler_steps = 20;
  double sampler_eta = 1.0;
  double sampler_guidance = 1.0;

  int lpo_K = 4;
  double lpo_beta = 500.0;
  int lpo_timestep_lo = 0;
  int lpo_timestep_hi = 950;
  int lpo_epochs = 5;
  double lpo_eta = 1.0;
  int lpo_prompts_per_epoch = 16;
  double lpo_lr = 3e-8;
  int lpo_batch = 8;
  bool lpo_softmax_all_k = false;
  std::string lpo_threshold_kind = "stddev";  // stddev | variance | timestep | constant
  double lpo_threshold_min = 0.35;
  double lpo_threshold_max = 0.5;
  double lpo_threshold_value = 0.5;

  double grpo_clip_eps = 0.1;
  double grpo_kl_beta = 0.1;
  int grpo_inner_iters = 2;
  double grpo_lr = 1e-6;

  double dpo_beta = 500.0;
  int dpo_steps = 300;
  double dpo_lr = 3e-8;
  int dpo_batch = 8;

  int eval_n_samples = 256;
  int corr_timestep = 0;

  // ---- derived objects ----

  NoiseSchedule make_schedule() const { return build_linear_schedule(schedule_T, beta_start, beta_end); }

  Encoder make_encoder() const {
    Encoder e;
    if (encoder_kind == "identity") {
      e.kind = Encoder::Kind::identity;
    } else if (encoder_kind == "scale") {
      e.kind = Encoder::Kind::scale;
      e.factor = encoder_scale;
    } else {
      throw InvalidArgument("config: encoder.kind must be identity or scale");
    }
    e.validate();
    return e;
  }

  DenoiserConfig make_denoiser_config() const {
    DenoiserConfig c;
    c.channels = latent_channels;
    c.height = latent_height;
    c.width_sp = latent_width;
    c.depth = denoiser_depth;
    c.width = denoiser_width;
    c.n_p = denoiser_n_p;
    c.vocab = denoiser_vocab;
    c.time_embed_dim = denoiser_time_embed_dim;
    c.validate();
    return c;
  }

  DenoiserConfig make_lrm_backbone_config() const {
    DenoiserConfig c;
    c.channels = latent_channels;
    c.height = latent_height;
    c.width_sp = latent_width;
    c.depth = lrm_backbone_depth;
    c.width = lrm_backbone_width;
    c.n_p = lrm_backbone_n_p;
    c.vocab = lrm_backbone_vocab;
    c.time_embed_dim = lrm_backbone_time_embed_dim;
    c.validate();
    return c;
  }

  LrmConfig make_lrm_config() const {
    LrmConfig c;
    c.n_d = lrm_n_d;
    c.gs = lrm_gs;
    c.log_tau_init = lrm_log_tau_init;
    c.validate();
    return c;
  }

  CorpusSpec make_corpus_spec() const {
    CorpusSpec s;
    s.n_conditions = data_n_conditions;
    s.n_latents = data_n_latents;
    s.n_pairs = data_n_pairs;
    s.jitter = data_jitter;
    s.align_lo = data_align_lo;
    s.align_hi = data_align_hi;
    s.rough_lo = data_rough_lo;
    s.rough_hi = data_rough_hi;
    s.label_flip = data_label_flip;
    s.margin = data_margin;
    s.tension = data_tension;
    s.validate(denoiser_vocab);
    return s;
  }

  SamplerConfig make_sampler_config() const {
    SamplerConfig c;
    c.eta = sampler_eta;
    c.guidance_scale_sampling = sampler_guidance;
    c.inference_timesteps = default_inference_timesteps(schedule_T, sampler_steps);
    c.validate(schedule_T);
    return c;
  }

  ThresholdPolicy make_threshold_policy() const {
    ThresholdPolicy p;
    if (lpo_threshold_kind == "stddev") p.kind = ThresholdPolicy::Kind::stddev;
    else if (lpo_threshold_kind == "variance") p.kind = ThresholdPolicy::Kind::variance;
    else if (lpo_threshold_kind == "timestep") p.kind = ThresholdPolicy::Kind::timestep;
    else if (lpo_threshold_kind == "constant") p.kind = ThresholdPolicy::Kind::constant;
    else throw InvalidArgument("config: unknown threshold kind " + lpo_threshold_kind);
    p.th_min = lpo_threshold_min;
    p.th_max = lpo_threshold_max;
    p.value = lpo_threshold_value;
    p.validate();
    return p;
  }

  LpoConfig make_lpo_config() const {
    LpoConfig c;
    c.K = lpo_K;
    c.beta = lpo_beta;
    c.timestep_lo = lpo_timestep_lo;
    c.timestep_hi = lpo_timestep_hi;
    c.epochs = lpo_epochs;
    c.eta = lpo_eta;
    c.threshold = make_threshold_policy();
    c.prompts_per_epoch = lpo_prompts_per_epoch;
    c.lr = lpo_lr;
    c.batch = lpo_batch;
    c.softmax_all_k = lpo_softmax_all_k;
    c.sampler = make_sampler_config();
    c.validate(schedule_T);
    return c;
  }

  GrpoConfig make_grpo_config() const {
    GrpoConfig c;
    c.clip_eps = grpo_clip_eps;
    c.kl_beta = grpo_kl_beta;
    c.inner_iters = grpo_inner_iters;
    c.validate();
    return c;
  }

  DpoConfig make_dpo_config() const {
    DpoConfig c;
    c.beta = dpo_beta;
    c.steps = dpo_steps;
    c.lr = dpo_lr;
    c.batch = dpo_batch;
    c.eta = lpo_eta;
    c.sampler = make_sampler_config();
    c.validate(schedule_T);
    return c;
  }

  std::vector<int> condition_ids() const {
    std::vector<int> ids;
    for (int c = 1; c <= data_n_conditions; ++c) ids.push_back(c);
    return ids;
  }

  // Cross-module sanity; every derived object also validates itself.
  void validate() const {
    make_schedule();
    make_encoder();
    make_denoiser_config();
    make_lrm_backbone_config();
    make_lrm_config();
    make_corpus_spec();
    make_lpo_config();
    make_grpo_config();
    make_dpo_config();
    if (lrm_filter_strategy < 0 || lrm_filter_strategy > 3) {
      throw InvalidArgument("config: lrm.filter_strategy must be 0..3");
    }
    if (lrm_holdout < 0) throw InvalidArgument("config: lrm.holdout must not be negative");
    if (lrm_warmup < 0) throw InvalidArgument("config: lrm.warmup must not be negative");
    if (eval_n_samples < 2) throw InvalidArgument("config: eval.n_samples must be at least 2");
    if (corr_timestep < 0 || corr_timestep >= schedule_T) {
      throw InvalidArgument("config: corr.timestep out of range");
    }
    if (pretrain_steps < 0 || lrm_steps < 0) throw InvalidArgument("config: negative step counts");
    if (pretrain_cond_dropout < 0.0 || pretrain_cond_dropout > 1.0) {
      throw InvalidArgument("config: pretrain.cond_dropout out of [0,1]");
    }
  }
};

namespace detail {

struct ConfigField {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& raw);

template <>
inline double parse_number<double>(const std::string& key, const std::string& raw) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(raw, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad number for " + key + ": " + raw);
  }
  if (pos != raw.size()) throw InvalidArgument("config: trailing junk for " + key + ": " + raw);
  return v;
}

template <>
inline std::uint64_t parse_number<std::uint64_t>(const std::string& key, const std::string& raw) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(raw, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad integer for " + key + ": " + raw);
  }
  if (pos != raw.size()) throw InvalidArgument("config: trailing junk for " + key + ": " + raw);
  return v;
}

template <>
inline int parse_number<int>(const std::string& key, const std::string& raw) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(raw, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad integer for " + key + ": " + raw);
  }
  if (pos != raw.size()) throw InvalidArgument("config: trailing junk for " + key + ": " + raw);
  return static_cast<int>(v);
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw InvalidArgument("config: bad boolean for " + key + ": " + raw);
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> m;
    auto num = [&m](const std::string& key, auto RunConfig::* member) {
      using T = std::remove_reference_t<decltype(std::declval<RunConfig>().*member)>;
      m[key] = ConfigField{
          [key, member](RunConfig& c, const std::string& raw) { c.*member = parse_number<T>(key, raw); },
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, double>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
    };
    auto boolean = [&m](const std::string& key, bool RunConfig::* member) {
      m[key] = ConfigField{
          [key, member](RunConfig& c, const std::string& raw) { c.*member = parse_bool(key, raw); },
          [member](const RunConfig& c) { return c.*member ? std::string("true") : std::string("false"); }};
    };
    auto str = [&m](const std::string& key, std::string RunConfig::* member) {
      m[key] = ConfigField{[member](RunConfig& c, const std::string& raw) { c.*member = raw; },
                           [member](const RunConfig& c) { return c.*member; }};
    };

    num("master_seed", &RunConfig::master_seed);
    num("schedule.T", &RunConfig::schedule_T);
    num("schedule.beta_start", &RunConfig::beta_start);
    num("schedule.beta_end", &RunConfig::beta_end);
    num("latent.channels", &RunConfig::latent_channels);
    num("latent.height", &RunConfig::latent_height);
    num("latent.width", &RunConfig::latent_width);
    str("encoder.kind", &RunConfig::encoder_kind);
    num("encoder.scale", &RunConfig::encoder_scale);
    num("denoiser.depth", &RunConfig::denoiser_depth);
    num("denoiser.width", &RunConfig::denoiser_width);
    num("denoiser.n_p", &RunConfig::denoiser_n_p);
    num("denoiser.vocab", &RunConfig::denoiser_vocab);
    num("denoiser.time_embed_dim", &RunConfig::denoiser_time_embed_dim);
    num("data.n_conditions", &RunConfig::data_n_conditions);
    num("data.n_latents", &RunConfig::data_n_latents);
    num("data.n_pairs", &RunConfig::data_n_pairs);
    num("data.jitter", &RunConfig::data_jitter);
    num("data.align_lo", &RunConfig::data_align_lo);
    num("data.align_hi", &RunConfig::data_align_hi);
    num("data.rough_lo", &RunConfig::data_rough_lo);
    num("data.rough_hi", &RunConfig::data_rough_hi);
    num("data.label_flip", &RunConfig::data_label_flip);
    num("data.margin", &RunConfig::data_margin);
    num("data.tension", &RunConfig::data_tension);
    num("pretrain.steps", &RunConfig::pretrain_steps);
    num("pretrain.lr", &RunConfig::pretrain_lr);
    num("pretrain.batch", &RunConfig::pretrain_batch);
    num("pretrain.cond_dropout", &RunConfig::pretrain_cond_dropout);
    num("lrm.n_d", &RunConfig::lrm_n_d);
    num("lrm.gs", &RunConfig::lrm_gs);
    num("lrm.log_tau_init", &RunConfig::lrm_log_tau_init);
    num("lrm.steps", &RunConfig::lrm_steps);
    num("lrm.lr", &RunConfig::lrm_lr);
    num("lrm.batch", &RunConfig::lrm_batch);
    num("lrm.warmup", &RunConfig::lrm_warmup);
    num("lrm.filter_strategy", &RunConfig::lrm_filter_strategy);
    boolean("lrm.include_ties", &RunConfig::lrm_include_ties);
    num("lrm.holdout", &RunConfig::lrm_holdout);
    num("lrm.backbone_depth", &RunConfig::lrm_backbone_depth);
    num("lrm.backbone_width", &RunConfig::lrm_backbone_width);
    num("lrm.backbone_n_p", &RunConfig::lrm_backbone_n_p);
    num("lrm.backbone_vocab", &RunConfig::lrm_backbone_vocab);
    num("lrm.backbone_time_embed_dim", &RunConfig::lrm_backbone_time_embed_dim);
    num("sampler.steps", &RunConfig::sampler_steps);
    num("sampler.eta", &RunConfig::sampler_eta);
    num("sampler.guidance", &RunConfig::sampler_guidance);
    num("lpo.K", &RunConfig::lpo_K);
    num("lpo.beta", &RunConfig::lpo_beta);
    num("lpo.timestep_lo", &RunConfig::lpo_timestep_lo);
    num("lpo.timestep_hi", &RunConfig::lpo_timestep_hi);
    num("lpo.epochs", &RunConfig::lpo_epochs);
    num("lpo.eta", &RunConfig::lpo_eta);
    num("lpo.prompts_per_epoch", &RunConfig::lpo_prompts_per_epoch);
    num("lpo.lr", &RunConfig::lpo_lr);
    num("lpo.batch", &RunConfig::lpo_batch);
    boolean("lpo.softmax_all_k", &RunConfig::lpo_softmax_all_k);
    str("lpo.threshold_kind", &RunConfig::lpo_threshold_kind);
    num("lpo.threshold_min", &RunConfig::lpo_threshold_min);
    num("lpo.threshold_max", &RunConfig::lpo_threshold_max);
    num("lpo.threshold_value", &RunConfig::lpo_threshold_value);
    num("grpo.clip_eps", &RunConfig::grpo_clip_eps);
    num("grpo.kl_beta", &RunConfig::grpo_kl_beta);
    num("grpo.inner_iters", &RunConfig::grpo_inner_iters);
    num("grpo.lr", &RunConfig::grpo_lr);
    num("dpo.beta", &RunConfig::dpo_beta);
    num("dpo.steps", &RunConfig::dpo_steps);
    num("dpo.lr", &RunConfig::dpo_lr);
    num("dpo.batch", &RunConfig::dpo_batch);
    num("eval.n_samples", &RunConfig::eval_n_samples);
    num("corr.timestep", &RunConfig::corr_timestep);
    return m;
  }();
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw InvalidArgument("config: unknown key " + key);
  it->second.set(cfg, value);
}

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = line.substr(0, line.find('#'));
    body = detail::trim(body);
    if (body.empty()) continue;
    std::size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config: line " + std::to_string(lineno) + " is not key=value");
    }
    apply_config_line(cfg, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
  }
  return cfg;
}

// Canonical serialization: all keys in sorted order, suitable as a config
// echo that reproduces the run exactly.
inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : detail::config_fields()) {
    out << key << "=" << field.get(cfg) << "\n";
  }
  return out.str();
}

}  // namespace lpref
