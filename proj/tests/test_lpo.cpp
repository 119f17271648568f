#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "lpref/core/finite_diff.hpp"
#include "lpref/harness/eval.hpp"
#include "lpref/harness/synthetic.hpp"
#include "lpref/lpo/trainers.hpp"

using namespace lpref;

namespace {

NoiseSchedule toy_schedule() { return build_linear_schedule(1000, 1e-4, 2e-2); }

// eps prediction is a constant tensor (no parameters)
struct FixedEps {
  Tensor eps;
  Var predict_eps_var(const Tensor&, int, const Condition&) const { return Var::constant(eps); }
};

// eps = a * x + b, two scalar parameters
struct AffineEps {
  Parameter a, b;
  AffineEps(double av, double bv) : a(Tensor::scalar(av)), b(Tensor::scalar(bv)) {}
  Var predict_eps_var(const Tensor& x, int, const Condition&) const {
    return scalar_add(scalar_mul(Var::constant(x), a.var()), b.var());
  }
};

DenoiserConfig tiny_cfg() {
  DenoiserConfig cfg;
  cfg.channels = 2;
  cfg.height = 4;
  cfg.width_sp = 4;
  cfg.depth = 1;
  cfg.width = 4;
  cfg.n_p = 4;
  cfg.vocab = 4;
  cfg.time_embed_dim = 8;
  return cfg;
}

LpoConfig tiny_lpo(int T = 1000) {
  LpoConfig cfg;
  cfg.K = 4;
  cfg.beta = 50.0;
  cfg.epochs = 1;
  cfg.prompts_per_epoch = 2;
  cfg.lr = 1e-4;
  cfg.batch = 4;
  cfg.sampler.eta = 1.0;
  cfg.sampler.inference_timesteps = default_inference_timesteps(T, 10);
  cfg.timestep_lo = 0;
  cfg.timestep_hi = cfg.sampler.inference_timesteps.front();
  return cfg;
}

StepSample make_sample(RngStream rng, int t = 500, int t_prev = 450) {
  StepSample s;
  s.x_parent = rng.derive("p").gaussian_tensor({3});
  s.x_win = rng.derive("w").gaussian_tensor({3});
  s.x_lose = rng.derive("l").gaussian_tensor({3});
  s.t = t;
  s.t_prev = t_prev;
  s.cond = Condition{1, Tensor()};
  return s;
}

}  // namespace

TEST_CASE("dynamic threshold") {
  NoiseSchedule s = toy_schedule();
  ThresholdPolicy pol;  // stddev, [0.35, 0.5]

  SECTION("range endpoints hit th_min and th_max") {
    REQUIRE(dynamic_threshold(0, pol, s, 0, 950) == Catch::Approx(0.35).margin(1e-12));
    REQUIRE(dynamic_threshold(950, pol, s, 0, 950) == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("interpolation follows the normalized sigma") {
    double lo = schedule_sigma(0, s), hi = schedule_sigma(950, s);
    for (int t : {50, 300, 475, 800}) {
      double x = (schedule_sigma(t, s) - lo) / (hi - lo);
      REQUIRE(dynamic_threshold(t, pol, s, 0, 950) == Catch::Approx(0.35 + x * 0.15).margin(1e-12));
    }
  }
  SECTION("timestep kind midpoint gives 0.425") {
    ThresholdPolicy tp = pol;
    tp.kind = ThresholdPolicy::Kind::timestep;
    REQUIRE(dynamic_threshold(475, tp, s, 0, 950) == Catch::Approx(0.425).margin(1e-12));
    REQUIRE(dynamic_threshold(0, tp, s, 0, 950) == Catch::Approx(0.35).margin(1e-12));
    REQUIRE(dynamic_threshold(950, tp, s, 0, 950) == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("variance kind") {
    ThresholdPolicy vp = pol;
    vp.kind = ThresholdPolicy::Kind::variance;
    double lo = schedule_sigma(0, s), hi = schedule_sigma(950, s);
    for (int t : {100, 500, 900}) {
      double sg = schedule_sigma(t, s);
      double x = (sg * sg - lo * lo) / (hi * hi - lo * lo);
      REQUIRE(dynamic_threshold(t, vp, s, 0, 950) == Catch::Approx(0.35 + x * 0.15).margin(1e-12));
    }
    // variance strategy sets lower thresholds at mid timesteps than stddev
    REQUIRE(dynamic_threshold(475, vp, s, 0, 950) < dynamic_threshold(475, pol, s, 0, 950));
  }
  SECTION("stddev threshold is monotone nondecreasing in t") {
    double prev = 0.0;
    for (int t = 0; t <= 950; t += 50) {
      double th = dynamic_threshold(t, pol, s, 0, 950);
      REQUIRE(th >= prev - 1e-15);
      prev = th;
    }
  }
  SECTION("constant kind returns the value") {
    ThresholdPolicy cp;
    cp.kind = ThresholdPolicy::Kind::constant;
    cp.value = 0.5;
    REQUIRE(dynamic_threshold(123, cp, s, 0, 950) == 0.5);
  }
  SECTION("degenerate range rejected") {
    REQUIRE_THROWS_AS(dynamic_threshold(100, pol, s, 100, 100), DegenerateInput);
  }
}

TEST_CASE("select_pair") {
  SECTION("hand case: scores [2,1,0,-1], th 0.5") {
    auto sel = select_pair({2.0, 1.0, 0.0, -1.0}, 0.5);
    REQUIRE(sel.has_value());
    REQUIRE(sel->win == 0);
    REQUIRE(sel->lose == 3);
    REQUIRE(sel->gap == Catch::Approx(std::tanh(1.5)).margin(1e-12));
    REQUIRE(sel->gap == Catch::Approx(0.90515).margin(1e-5));
  }
  SECTION("all-equal scores never qualify") {
    REQUIRE_FALSE(select_pair({0.7, 0.7, 0.7}, 0.0).has_value());
    REQUIRE_FALSE(select_pair({0.7, 0.7, 0.7}, 0.5).has_value());
  }
  SECTION("gap is shift invariant and equals tanh of the half-gap") {
    std::mt19937 gen(2);
    std::uniform_real_distribution<double> sc(-5.0, 5.0), sh(-40.0, 40.0);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> scores(2 + gen() % 6);
      for (auto& v : scores) v = sc(gen);
      auto a = select_pair(scores, 0.0);
      double shift = sh(gen);
      std::vector<double> shifted = scores;
      for (auto& v : shifted) v += shift;
      auto b = select_pair(shifted, 0.0);
      REQUIRE(a.has_value() == b.has_value());
      if (a) {
        REQUIRE(a->gap == Catch::Approx(b->gap).margin(1e-12));
        double mx = *std::max_element(scores.begin(), scores.end());
        double mn = *std::min_element(scores.begin(), scores.end());
        REQUIRE(a->gap == Catch::Approx(std::tanh((mx - mn) / 2.0)).margin(1e-12));
      }
    }
  }
  SECTION("ties break to the lowest index") {
    auto sel = select_pair({3.0, 3.0, 1.0, 1.0}, 0.1);
    REQUIRE(sel.has_value());
    REQUIRE(sel->win == 0);
    REQUIRE(sel->lose == 2);
  }
  SECTION("all-scores softmax mode") {
    auto sel = select_pair({2.0, 1.0, 0.0, -1.0}, 0.1, GapMode::all_scores);
    REQUIRE(sel.has_value());
    Tensor p = softmax(Tensor({4}, {2.0, 1.0, 0.0, -1.0}));
    REQUIRE(sel->gap == Catch::Approx(p[0] - p[3]).margin(1e-12));
  }
  SECTION("needs two scores") {
    REQUIRE_THROWS_AS(select_pair({1.0}, 0.5), InvalidArgument);
  }
}

TEST_CASE("step_logprob") {
  RngStream rng(3);
  Tensor mean = rng.gaussian_tensor({5});
  SECTION("peak at the mean") {
    double peak = step_logprob(mean, mean, 0.7);
    Tensor off = mean;
    off[0] += 0.5;
    REQUIRE(step_logprob(off, mean, 0.7) < peak);
  }
  SECTION("matches an independent closed form to 1e-10") {
    Tensor x = rng.gaussian_tensor({5});
    double sigma = 0.37;
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double d = x[i] - mean[i];
      want += -d * d / (2.0 * sigma * sigma) - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    REQUIRE(step_logprob(x, mean, sigma) == Catch::Approx(want).margin(1e-10));
  }
  SECTION("sigma must be positive") {
    REQUIRE_THROWS_AS(step_logprob(mean, mean, 0.0), InvalidArgument);
  }
}

TEST_CASE("spo loss") {
  NoiseSchedule sched = toy_schedule();
  StepSample s = make_sample(RngStream(7));

  SECTION("identical model and reference give ln 2") {
    AffineEps m(0.3, -0.1), r(0.3, -0.1);
    REQUIRE(spo_loss_var(s, m, r, 500.0, 1.0, sched).item() ==
            Catch::Approx(std::log(2.0)).margin(1e-12));
  }
  SECTION("loss is monotone decreasing in the preference margin") {
    // with mean_model - mean_ref = b c_eps 1, the inner margin is
    // beta b c_eps sum(x_win - x_lose) / sigma^2: pick the sign of b that
    // makes it grow and check the logistic monotonicity
    AffineEps ref(0.0, 0.0);
    DdimCoeffs c = ddim_mean_coeffs(s.t, s.t_prev, 1.0, sched);
    double dir = c.coef_eps * (sum(s.x_win) - sum(s.x_lose)) > 0.0 ? 1.0 : -1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (double shift : {0.0, 0.1, 0.2, 0.4}) {
      AffineEps model(0.0, dir * shift);
      double loss = spo_loss_var(s, model, ref, 5.0, 1.0, sched).item();
      if (shift == 0.0) {
        REQUIRE(loss == Catch::Approx(std::log(2.0)).margin(1e-12));
      } else {
        REQUIRE(loss < prev);
      }
      prev = loss;
    }
  }
  SECTION("gradients match finite differences on a two-parameter probe") {
    AffineEps model(0.25, -0.4);
    AffineEps ref(0.1, 0.05);
    auto loss = [&]() -> Var { return spo_loss_var(s, model, ref, 8.0, 1.0, sched); };
    model.a.zero_grad();
    model.b.zero_grad();
    backward(loss());
    auto fd = finite_diff_grad(
        [&] {
          NoGradGuard ng;
          return loss().item();
        },
        {model.a, model.b}, 1e-5);
    REQUIRE(max_grad_rel_error({model.a.grad(), model.b.grad()}, fd) < 1e-4);
  }
  SECTION("eta 0 rejected") {
    AffineEps m(0.1, 0.0), r(0.1, 0.0);
    REQUIRE_THROWS_AS(spo_loss_var(s, m, r, 500.0, 0.0, sched), InvalidArgument);
  }
}

TEST_CASE("dpo loss") {
  NoiseSchedule sched = toy_schedule();
  RngStream rng(11);
  StepSample s = make_sample(rng);

  SECTION("identical model and reference give ln 2") {
    StepTransition win{s.x_parent, s.x_win, s.t, s.t_prev, s.cond};
    StepTransition lose{rng.derive("p2").gaussian_tensor({3}), s.x_lose, s.t, s.t_prev, s.cond};
    AffineEps m(0.3, -0.1), r(0.3, -0.1);
    REQUIRE(dpo_loss_var(win, lose, m, r, 500.0, 1.0, sched).item() ==
            Catch::Approx(std::log(2.0)).margin(1e-12));
  }
  SECTION("equals spo loss when both chains share the parent") {
    StepTransition win{s.x_parent, s.x_win, s.t, s.t_prev, s.cond};
    StepTransition lose{s.x_parent, s.x_lose, s.t, s.t_prev, s.cond};
    AffineEps m(0.21, 0.4), r(-0.05, 0.12);
    double dpo = dpo_loss_var(win, lose, m, r, 7.0, 1.0, sched).item();
    double spo = spo_loss_var(s, m, r, 7.0, 1.0, sched).item();
    REQUIRE(dpo == Catch::Approx(spo).margin(1e-12));
  }
  SECTION("gradient check") {
    StepTransition win{s.x_parent, s.x_win, s.t, s.t_prev, s.cond};
    StepTransition lose{rng.derive("p3").gaussian_tensor({3}), s.x_lose, 600, 550, s.cond};
    AffineEps model(0.15, -0.2);
    AffineEps ref(0.0, 0.0);
    auto loss = [&]() -> Var { return dpo_loss_var(win, lose, model, ref, 6.0, 1.0, sched); };
    model.a.zero_grad();
    model.b.zero_grad();
    backward(loss());
    auto fd = finite_diff_grad(
        [&] {
          NoGradGuard ng;
          return loss().item();
        },
        {model.a, model.b}, 1e-5);
    REQUIRE(max_grad_rel_error({model.a.grad(), model.b.grad()}, fd) < 1e-4);
  }
}

TEST_CASE("grpo advantages") {
  SECTION("hand case [1,2,3,4]") {
    auto adv = grpo_advantages({1.0, 2.0, 3.0, 4.0});
    REQUIRE(adv[0] == Catch::Approx(-1.34164).margin(1e-5));
    REQUIRE(adv[1] == Catch::Approx(-0.44721).margin(1e-5));
    REQUIRE(adv[2] == Catch::Approx(0.44721).margin(1e-5));
    REQUIRE(adv[3] == Catch::Approx(1.34164).margin(1e-5));
  }
  SECTION("all-equal rewards give zeros") {
    auto adv = grpo_advantages({2.5, 2.5, 2.5});
    for (double a : adv) REQUIRE(a == 0.0);
  }
  SECTION("normalization and invariances over random groups") {
    std::mt19937 gen(4);
    std::normal_distribution<double> nd(0.0, 3.0);
    std::uniform_real_distribution<double> pos(0.1, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::size_t k = 2 + gen() % 7;
      std::vector<double> r(k);
      for (auto& v : r) v = nd(gen);
      auto adv = grpo_advantages(r);
      double m = 0.0, v2 = 0.0;
      for (double a : adv) m += a;
      for (double a : adv) v2 += a * a;
      m /= static_cast<double>(k);
      v2 /= static_cast<double>(k);
      REQUIRE(std::abs(m) <= 1e-12);
      REQUIRE(std::sqrt(v2) == Catch::Approx(1.0).margin(1e-10));
      // shift invariance
      std::vector<double> shifted = r;
      for (auto& v : shifted) v += 17.0;
      auto adv2 = grpo_advantages(shifted);
      // positive scaling invariance
      double c = pos(gen);
      std::vector<double> scaled = r;
      for (auto& v : scaled) v *= c;
      auto adv3 = grpo_advantages(scaled);
      for (std::size_t i = 0; i < k; ++i) {
        REQUIRE(adv2[i] == Catch::Approx(adv[i]).margin(1e-9));
        REQUIRE(adv3[i] == Catch::Approx(adv[i]).margin(1e-9));
      }
    }
  }
}

TEST_CASE("grpo loss") {
  NoiseSchedule sched = toy_schedule();
  RngStream rng(13);

  GroupRollout roll;
  roll.x_parent = rng.derive("p").gaussian_tensor({2});
  roll.t = 500;
  roll.t_prev = 450;
  roll.cond = Condition{1, Tensor()};
  for (int k = 0; k < 4; ++k) roll.candidates.push_back(rng.derive(k).gaussian_tensor({2}));
  roll.rewards = {1.0, 2.0, 3.0, 4.0};
  roll.advantages = grpo_advantages(roll.rewards);

  SECTION("model == old == ref gives zero loss") {
    AffineEps m(0.2, 0.1), o(0.2, 0.1), r(0.2, 0.1);
    REQUIRE(std::abs(grpo_loss_var(roll, m, o, r, 0.1, 0.1, 1.0, sched).item()) < 1e-12);
  }
  SECTION("clipped contribution for ratio 2, eps 0.1, advantage 1") {
    // one-dimensional engineered case evaluated against hand arithmetic
    GroupRollout r1;
    r1.x_parent = Tensor({1}, {0.0});
    r1.t = 500;
    r1.t_prev = 450;
    r1.cond = Condition{1, Tensor()};
    DdimCoeffs c = ddim_mean_coeffs(500, 450, 1.0, sched);
    // place candidates and means so that p_model/p_old = 2 for the first
    // candidate: exp(((x-mo)^2 - (x-mm)^2) / (2 s^2)) = 2 with
    // (x-mm)^2 = s^2/4 and (x-mo)^2 = s^2 (1/4 + 2 ln 2)
    double x0 = 0.3, x1 = -0.6;
    double mm = x0 - 0.5 * c.sigma;
    double mo = x0 - c.sigma * std::sqrt(0.25 + 2.0 * std::log(2.0));
    r1.candidates = {Tensor({1}, {x0}), Tensor({1}, {x1})};
    r1.rewards = {1.0, 0.0};
    r1.advantages = {1.0, -1.0};
    FixedEps model{Tensor({1}, {(mm - c.coef_x * 0.0) / c.coef_eps})};
    FixedEps old{Tensor({1}, {(mo - c.coef_x * 0.0) / c.coef_eps})};
    FixedEps ref = old;
    double loss = grpo_loss_var(r1, model, old, ref, 0.1, 0.0, 1.0, sched).item();
    double ratio0 = std::exp(step_logprob(r1.candidates[0], Tensor({1}, {mm}), c.sigma) -
                             step_logprob(r1.candidates[0], Tensor({1}, {mo}), c.sigma));
    REQUIRE(ratio0 == Catch::Approx(2.0).margin(1e-9));
    double ratio1 = std::exp(step_logprob(r1.candidates[1], Tensor({1}, {mm}), c.sigma) -
                             step_logprob(r1.candidates[1], Tensor({1}, {mo}), c.sigma));
    double term0 = std::min(ratio0 * 1.0, 1.1 * 1.0);  // clipped to 1.1
    double term1 = std::min(ratio1 * -1.0, 0.9 * -1.0);
    REQUIRE(term0 == Catch::Approx(1.1).margin(1e-9));
    REQUIRE(loss == Catch::Approx(-(term0 + term1) / 2.0).margin(1e-9));
  }
  SECTION("gradient check on a two-parameter probe") {
    AffineEps model(0.3, -0.2);
    AffineEps old(0.25, -0.15);
    AffineEps ref(0.0, 0.0);
    auto loss = [&]() -> Var { return grpo_loss_var(roll, model, old, ref, 0.2, 0.5, 1.0, sched); };
    model.a.zero_grad();
    model.b.zero_grad();
    backward(loss());
    auto fd = finite_diff_grad(
        [&] {
          NoGradGuard ng;
          return loss().item();
        },
        {model.a, model.b}, 1e-5);
    REQUIRE(max_grad_rel_error({model.a.grad(), model.b.grad()}, fd) < 1e-4);
  }
  SECTION("parameter validation") {
    AffineEps m(0.1, 0.0), o(0.1, 0.0), r(0.1, 0.0);
    REQUIRE_THROWS_AS(grpo_loss_var(roll, m, o, r, 1.5, 0.1, 1.0, sched), InvalidArgument);
    REQUIRE_THROWS_AS(grpo_loss_var(roll, m, o, r, 0.1, -0.1, 1.0, sched), InvalidArgument);
  }
}

TEST_CASE("run_lpo mechanics") {
  NoiseSchedule sched = toy_schedule();
  DenoiserConfig dc = tiny_cfg();
  Denoiser dmo(dc, RngStream(21, 0));
  LrmConfig lc;
  lc.n_d = 4;
  lc.gs = 1.0;
  Lrm lrm(Denoiser(dc, RngStream(22, 0)), Encoder{}, lc, RngStream(23, 0));
  std::vector<int> prompts{1, 2};

  SECTION("threshold 1.0 blocks every pair and leaves the model unchanged") {
    LpoConfig cfg = tiny_lpo();
    cfg.threshold.kind = ThresholdPolicy::Kind::constant;
    cfg.threshold.value = 1.0;
    Denoiser m = dmo.clone();
    std::vector<Tensor> before;
    for (auto& p : m.parameters()) before.push_back(p.value());
    TrainerMetrics metrics = run_lpo(cfg, m, lrm, Encoder{}, prompts, sched, RngStream(31, 0));
    REQUIRE(metrics.total_samples() == 0);
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      REQUIRE(max_abs_diff(params[i].value(), before[i]) == 0.0);
    }
  }
  SECTION("deterministic given the seed and qualified counts shrink with the threshold") {
    LpoConfig lo_cfg = tiny_lpo();
    lo_cfg.threshold.kind = ThresholdPolicy::Kind::constant;
    lo_cfg.threshold.value = 0.05;
    LpoConfig hi_cfg = lo_cfg;
    hi_cfg.threshold.value = 0.6;

    Denoiser m1 = dmo.clone();
    Denoiser m2 = dmo.clone();
    Denoiser m3 = dmo.clone();
    TrainerMetrics a = run_lpo(lo_cfg, m1, lrm, Encoder{}, prompts, sched, RngStream(33, 0));
    TrainerMetrics b = run_lpo(lo_cfg, m2, lrm, Encoder{}, prompts, sched, RngStream(33, 0));
    TrainerMetrics c = run_lpo(hi_cfg, m3, lrm, Encoder{}, prompts, sched, RngStream(33, 0));
    REQUIRE(a.total_samples() == b.total_samples());
    auto p1 = m1.parameters(), p2 = m2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) {
      REQUIRE(max_abs_diff(p1[i].value(), p2[i].value()) == 0.0);
    }
    // same rollouts (same seed, same pre-update weights in epoch one), higher bar
    REQUIRE(c.epochs[0].n_samples <= a.epochs[0].n_samples);
    for (auto& [site, count] : c.epochs[0].samples_per_site) {
      REQUIRE(count <= a.epochs[0].samples_per_site.at(site));
    }
  }
  SECTION("timestep range restricts the sites") {
    LpoConfig cfg = tiny_lpo();
    cfg.threshold.kind = ThresholdPolicy::Kind::constant;
    cfg.threshold.value = 0.05;
    cfg.timestep_lo = 0;
    cfg.timestep_hi = 200;
    Denoiser m = dmo.clone();
    TrainerMetrics metrics = run_lpo(cfg, m, lrm, Encoder{}, prompts, sched, RngStream(34, 0));
    for (auto& [site, count] : metrics.epochs[0].samples_per_site) {
      REQUIRE(site <= 200);
    }
  }
  SECTION("encoder mismatch rejected") {
    LpoConfig cfg = tiny_lpo();
    Encoder other{Encoder::Kind::scale, 2.0};
    Denoiser m = dmo.clone();
    REQUIRE_THROWS_AS(run_lpo(cfg, m, lrm, other, prompts, sched, RngStream(35, 0)), InvalidArgument);
  }
}

TEST_CASE("run_grpo mechanics") {
  NoiseSchedule sched = toy_schedule();
  DenoiserConfig dc = tiny_cfg();
  Denoiser dmo(dc, RngStream(41, 0));
  LrmConfig lc;
  lc.n_d = 4;
  lc.gs = 1.0;
  Lrm lrm(Denoiser(dc, RngStream(42, 0)), Encoder{}, lc, RngStream(43, 0));
  std::vector<int> prompts{1, 2};

  SECTION("deterministic given the seed") {
    LpoConfig cfg = tiny_lpo();
    GrpoConfig g;
    Denoiser m1 = dmo.clone(), m2 = dmo.clone();
    run_grpo(cfg, g, m1, lrm, Encoder{}, prompts, sched, RngStream(44, 0));
    run_grpo(cfg, g, m2, lrm, Encoder{}, prompts, sched, RngStream(44, 0));
    auto p1 = m1.parameters(), p2 = m2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) {
      REQUIRE(max_abs_diff(p1[i].value(), p2[i].value()) == 0.0);
    }
  }
  SECTION("stronger KL regularization shrinks the update") {
    LpoConfig cfg = tiny_lpo();
    // lr small enough that even the strongest KL stays inside the SGD
    // stability bound (curvature grows with kl_beta / sigma^2)
    cfg.lr = 1e-7;
    cfg.timestep_lo = 200;
    cfg.timestep_hi = 900;
    GrpoConfig weak;
    weak.kl_beta = 0.1;
    weak.inner_iters = 3;
    GrpoConfig strong = weak;
    strong.kl_beta = 1.0;
    GrpoConfig stronger = weak;
    stronger.kl_beta = 10.0;
    auto update_norm = [&](const GrpoConfig& g) {
      Denoiser m = dmo.clone();
      run_grpo(cfg, g, m, lrm, Encoder{}, prompts, sched, RngStream(45, 0));
      double acc = 0.0;
      auto pa = m.parameters();
      auto pb = dmo.parameters();
      for (std::size_t i = 0; i < pa.size(); ++i) {
        Tensor d = pa[i].value() - pb[i].value();
        acc += dot_flat(d, d);
      }
      return std::sqrt(acc);
    };
    double n_weak = update_norm(weak);
    double n_strong = update_norm(strong);
    double n_stronger = update_norm(stronger);
    REQUIRE(n_strong < n_weak);
    REQUIRE(n_stronger < n_strong);
  }
}

TEST_CASE("run_dpo mechanics") {
  NoiseSchedule sched = toy_schedule();
  DenoiserConfig dc = tiny_cfg();
  Denoiser dmo(dc, RngStream(51, 0));
  CorpusSpec spec;
  spec.n_conditions = 3;
  spec.n_pairs = 8;
  std::vector<PreferencePair> pairs = to_preference_pairs(make_pair_corpus(spec, dc.channels, dc.height,
                                                                           dc.width_sp, RngStream(52, 0)));
  DpoConfig cfg;
  cfg.steps = 3;
  cfg.batch = 2;
  cfg.lr = 1e-5;
  cfg.beta = 10.0;
  cfg.sampler.inference_timesteps = default_inference_timesteps(1000, 10);

  SECTION("first step loss is ln 2 and runs are deterministic") {
    Denoiser m1 = dmo.clone(), m2 = dmo.clone();
    TrainerMetrics a = run_dpo(cfg, m1, Encoder{}, pairs, sched, RngStream(53, 0));
    TrainerMetrics b = run_dpo(cfg, m2, Encoder{}, pairs, sched, RngStream(53, 0));
    auto p1 = m1.parameters(), p2 = m2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) {
      REQUIRE(max_abs_diff(p1[i].value(), p2[i].value()) == 0.0);
    }
    DpoConfig zero = cfg;
    zero.steps = 1;
    zero.lr = 0.0;  // no update: model stays equal to ref, loss exactly ln 2
    Denoiser m3 = dmo.clone();
    TrainerMetrics z = run_dpo(zero, m3, Encoder{}, pairs, sched, RngStream(53, 0));
    REQUIRE(z.epochs[0].mean_loss == Catch::Approx(std::log(2.0)).margin(1e-12));
  }
}
