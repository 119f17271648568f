#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lpref/harness/checkpoint.hpp"
#include "lpref/harness/config.hpp"
#include "lpref/harness/dataset.hpp"
#include "lpref/harness/eval.hpp"
#include "lpref/harness/metrics.hpp"
#include "lpref/harness/model_io.hpp"

using namespace lpref;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lpref_test_" + std::to_string(std::rand()) +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.schedule_T = 100;
  cfg.sampler_steps = 10;
  cfg.latent_channels = 2;
  cfg.latent_height = 4;
  cfg.latent_width = 4;
  cfg.denoiser_depth = 1;
  cfg.denoiser_width = 4;
  cfg.denoiser_n_p = 4;
  cfg.denoiser_vocab = 4;
  cfg.denoiser_time_embed_dim = 8;
  cfg.lrm_backbone_depth = 1;
  cfg.lrm_backbone_width = 4;
  cfg.lrm_backbone_n_p = 4;
  cfg.lrm_backbone_vocab = 4;
  cfg.lrm_backbone_time_embed_dim = 8;
  cfg.lrm_n_d = 8;
  cfg.lpo_timestep_hi = 90;
  cfg.data_n_conditions = 3;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  SECTION("round trip through the canonical serialization") {
    RunConfig cfg = tiny_run_config();
    cfg.lpo_beta = 123.5;
    cfg.lrm_include_ties = true;
    RunConfig back = parse_config(serialize_config(cfg));
    REQUIRE(serialize_config(back) == serialize_config(cfg));
    REQUIRE(back.lpo_beta == 123.5);
    REQUIRE(back.lrm_include_ties);
  }
  SECTION("comments, blanks and whitespace") {
    RunConfig cfg = parse_config("# comment\n\n  lpo.beta = 250  # inline\nmaster_seed=9\n");
    REQUIRE(cfg.lpo_beta == 250.0);
    REQUIRE(cfg.master_seed == 9);
  }
  SECTION("unknown keys rejected") {
    REQUIRE_THROWS_AS(parse_config("lpo.bheta=1\n"), InvalidArgument);
    REQUIRE_THROWS_AS(parse_config("unknown=1\n"), InvalidArgument);
  }
  SECTION("malformed values rejected") {
    REQUIRE_THROWS_AS(parse_config("lpo.beta=abc\n"), InvalidArgument);
    REQUIRE_THROWS_AS(parse_config("lpo.beta\n"), InvalidArgument);
    REQUIRE_THROWS_AS(parse_config("lrm.include_ties=maybe\n"), InvalidArgument);
  }
  SECTION("validation catches cross-field problems") {
    RunConfig cfg = tiny_run_config();
    cfg.lpo_timestep_hi = 5000;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidArgument);
    RunConfig cfg2 = tiny_run_config();
    cfg2.latent_height = 7;  // not divisible by 2^depth
    REQUIRE_THROWS_AS(cfg2.validate(), InvalidArgument);
  }
}

TEST_CASE("checkpoint round trip and corruption detection") {
  TempDir dir;
  Checkpoint ckpt;
  ckpt.kind = Checkpoint::Kind::lrm;
  ckpt.config_echo = "master_seed=5\n";
  RngStream rng(12);
  ckpt.tensors.emplace_back("a.w", rng.gaussian_tensor({3, 4}));
  ckpt.tensors.emplace_back("b", rng.gaussian_tensor({7}));
  std::string path = dir.file("m.ckpt");
  save_checkpoint(path, ckpt);

  SECTION("bitwise round trip") {
    Checkpoint back = load_checkpoint(path);
    REQUIRE(back.kind == Checkpoint::Kind::lrm);
    REQUIRE(back.config_echo == ckpt.config_echo);
    REQUIRE(back.tensors.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      REQUIRE(back.tensors[i].first == ckpt.tensors[i].first);
      REQUIRE(max_abs_diff(back.tensors[i].second, ckpt.tensors[i].second) == 0.0);
    }
    save_checkpoint(dir.file("m2.ckpt"), back);
    REQUIRE(binio::read_file(path) == binio::read_file(dir.file("m2.ckpt")));
  }
  SECTION("every corrupted byte is detected") {
    std::vector<unsigned char> buf = binio::read_file(path);
    for (std::size_t pos : {std::size_t{0}, std::size_t{5}, buf.size() / 2, buf.size() - 1}) {
      std::vector<unsigned char> bad = buf;
      bad[pos] ^= 0x40;
      binio::write_file(dir.file("bad.ckpt"), bad);
      REQUIRE_THROWS_AS(load_checkpoint(dir.file("bad.ckpt")), IoError);
    }
  }
  SECTION("version mismatch rejected with message") {
    std::vector<unsigned char> buf = binio::read_file(path);
    buf[4] = 99;  // version lives after the 4 magic bytes
    std::vector<unsigned char> head(buf.begin(), buf.end() - 4);
    binio::put_u32(head, binio::crc32(head.data(), head.size()));
    binio::write_file(dir.file("v.ckpt"), head);
    try {
      load_checkpoint(dir.file("v.ckpt"));
      FAIL("expected version error");
    } catch (const IoError& e) {
      REQUIRE(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SECTION("kind tag mismatch rejected") {
    REQUIRE_THROWS_AS(load_checkpoint_as(path, Checkpoint::Kind::denoiser), IoError);
  }
}

TEST_CASE("model checkpoints restore bitwise") {
  TempDir dir;
  RunConfig cfg = tiny_run_config();
  std::string echo = serialize_config(cfg);

  SECTION("denoiser") {
    Denoiser net(cfg.make_denoiser_config(), RngStream(3, 0));
    save_checkpoint(dir.file("d.ckpt"), checkpoint_of(net, echo));
    Denoiser back = load_denoiser(dir.file("d.ckpt"));
    auto pa = net.named_parameters();
    auto pb = back.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      REQUIRE(pa[i].first == pb[i].first);
      REQUIRE(max_abs_diff(pa[i].second.value(), pb[i].second.value()) == 0.0);
    }
  }
  SECTION("lrm with a distinct backbone architecture") {
    cfg.lrm_backbone_width = 8;  // heterogeneous: wider than the optimized model
    echo = serialize_config(cfg);
    Lrm model(Denoiser(cfg.make_lrm_backbone_config(), RngStream(5, 0)), cfg.make_encoder(),
              cfg.make_lrm_config(), RngStream(5, 1));
    save_checkpoint(dir.file("l.ckpt"), checkpoint_of(model, echo));
    Lrm back = load_lrm(dir.file("l.ckpt"));
    REQUIRE(back.backbone().config().width == 8);
    Tensor x = RngStream(6, 0).gaussian_tensor({2, 4, 4});
    Condition c = model.make_condition(1);
    REQUIRE(model.score(x, 10, c) == back.score(x, 10, c));
  }
}

TEST_CASE("dataset files") {
  TempDir dir;
  CorpusSpec spec;
  spec.n_conditions = 3;
  spec.n_latents = 20;
  spec.n_pairs = 30;

  SECTION("latents round trip and byte-identical regeneration") {
    auto items = make_latent_corpus(spec, 2, 4, 4, RngStream(7, 0));
    save_latents(dir.file("l.lpds"), items);
    auto back = load_latents(dir.file("l.lpds"));
    REQUIRE(back.size() == items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      REQUIRE(back[i].cond_id == items[i].cond_id);
      REQUIRE(max_abs_diff(back[i].x0, items[i].x0) == 0.0);
    }
    auto items2 = make_latent_corpus(spec, 2, 4, 4, RngStream(7, 0));
    save_latents(dir.file("l2.lpds"), items2);
    REQUIRE(binio::read_file(dir.file("l.lpds")) == binio::read_file(dir.file("l2.lpds")));
    REQUIRE(binio::file_exists(dir.file("l.lpds.schema.txt")));
  }
  SECTION("pairs round trip") {
    auto records = make_pair_corpus(spec, 2, 4, 4, RngStream(8, 0));
    save_pairs(dir.file("p.lpds"), records);
    auto back = load_pairs(dir.file("p.lpds"));
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      REQUIRE(back[i].pair.cond.id == records[i].pair.cond.id);
      REQUIRE(max_abs_diff(back[i].pair.x0_win, records[i].pair.x0_win) == 0.0);
      REQUIRE(max_abs_diff(back[i].pair.x0_lose, records[i].pair.x0_lose) == 0.0);
      REQUIRE(back[i].aes_win == records[i].aes_win);
      REQUIRE(back[i].vqa_lose == records[i].vqa_lose);
    }
  }
  SECTION("path collisions rejected") {
    auto items = make_latent_corpus(spec, 2, 4, 4, RngStream(7, 0));
    save_latents(dir.file("c.lpds"), items);
    REQUIRE_THROWS_AS(save_latents(dir.file("c.lpds"), items), IoError);
  }
  SECTION("wrong dataset kind rejected") {
    auto items = make_latent_corpus(spec, 2, 4, 4, RngStream(7, 0));
    save_latents(dir.file("k.lpds"), items);
    REQUIRE_THROWS_AS(load_pairs(dir.file("k.lpds")), IoError);
  }
}

TEST_CASE("metrics log") {
  TempDir dir;
  std::string path = dir.file("m.jsonl");

  SECTION("write, read, monotone step enforcement") {
    MetricsWriter w(path, "run1");
    w.write("train", 0, {{"loss", 1.5}});
    w.write("train", 1, {{"loss", 1.25}});
    w.write("eval", 0, {{"acc", 0.5}});
    REQUIRE_THROWS_AS(w.write("train", 0, {{"loss", 9.0}}), InvalidArgument);
    auto records = read_metrics(path);
    REQUIRE(records.size() == 3);
    REQUIRE(records[0].phase == "train");
    REQUIRE(records[1].metrics.at("loss") == 1.25);
    REQUIRE_FALSE(records[2].time.empty());
  }
  SECTION("append-only across writers") {
    {
      MetricsWriter w(path, "run1");
      w.write("a", 0, {{"x", 1.0}});
    }
    {
      MetricsWriter w(path, "run1");
      w.write("b", 0, {{"x", 2.0}});
    }
    REQUIRE(read_metrics(path).size() == 2);
  }
  SECTION("a truncated final line never corrupts earlier records") {
    {
      MetricsWriter w(path, "run1");
      w.write("a", 0, {{"x", 1.0}});
      w.write("a", 1, {{"x", 2.0}});
    }
    std::ofstream out(path, std::ios::app);
    out << "{\"run\":\"run1\",\"phase\":\"a\",\"st";  // interrupted writer
    out.close();
    auto records = read_metrics(path);
    REQUIRE(records.size() == 2);
    REQUIRE(records[1].metrics.at("x") == 2.0);
  }
  SECTION("equality comparator ignores wall-clock") {
    {
      MetricsWriter w(path, "run1");
      w.write("a", 0, {{"x", 1.0}});
    }
    std::string path2 = dir.file("m2.jsonl");
    {
      MetricsWriter w(path2, "run1");
      w.write("a", 0, {{"x", 1.0}});
    }
    REQUIRE(metrics_equal_ignoring_time(read_metrics(path), read_metrics(path2)));
    std::string path3 = dir.file("m3.jsonl");
    {
      MetricsWriter w(path3, "run1");
      w.write("a", 0, {{"x", 1.5}});
    }
    REQUIRE_FALSE(metrics_equal_ignoring_time(read_metrics(path), read_metrics(path3)));
  }
}

TEST_CASE("eval_reward") {
  RunConfig cfg = tiny_run_config();
  NoiseSchedule sched = cfg.make_schedule();
  Denoiser net(cfg.make_denoiser_config(), RngStream(9, 0));
  SamplerConfig sampler = cfg.make_sampler_config();

  SECTION("deterministic given the seed") {
    EvalResult a = eval_reward(net, Encoder{}, sampler, 4, {1, 2}, sched, RngStream(10, 0));
    EvalResult b = eval_reward(net, Encoder{}, sampler, 4, {1, 2}, sched, RngStream(10, 0));
    REQUIRE(a.overall_mean == b.overall_mean);
    for (std::size_t i = 0; i < a.per_cond.size(); ++i) {
      REQUIRE(a.per_cond[i].mean == b.per_cond[i].mean);
      REQUIRE(a.per_cond[i].ci_halfwidth == b.per_cond[i].ci_halfwidth);
    }
  }
  SECTION("a model evaluated against itself shows no gap") {
    EvalResult a = eval_reward(net, Encoder{}, sampler, 6, {1}, sched, RngStream(11, 0));
    Denoiser copy = net.clone();
    EvalResult b = eval_reward(copy, Encoder{}, sampler, 6, {1}, sched, RngStream(11, 0));
    REQUIRE(a.overall_mean == b.overall_mean);
  }
  SECTION("single-sample evaluation rejected") {
    REQUIRE_THROWS_AS(eval_reward(net, Encoder{}, sampler, 1, {1}, sched, RngStream(12, 0)),
                      InvalidArgument);
  }
}
