#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <fstream>

#include "hep/archive.hpp"
#include "hep/error.hpp"
#include "hep/image_io.hpp"
#include "hep/synthetic.hpp"
#include "hep/train.hpp"

using namespace hep;
using namespace hep::train;

namespace {

struct TempDir {
  Path path;
  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() / ("hep_train_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::shared_ptr<const Backbone> stand_in() {
  static std::shared_ptr<const Backbone> b = Vgg19::random(5);
  return b;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.seed = 3;
  c.workers = 1;
  c.lum.net.width = 8;
  c.lum.batch = 4;
  c.lum.patch = 16;
  c.lum.epochs = 2;
  c.ndm.net = ndm::NdmConfig{4, 2, 1, 1};
  c.ndm.batch = 2;
  c.ndm.patch = 16;
  c.ndm.iterations = 6;
  c.ndm.checkpoint_every = 3;
  return c;
}

std::vector<Image> lows(int n, int size = 40) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(synthetic::low_light_pair(size, size + 8, 50 + i).low);
  return out;
}

std::vector<Image> highs(int n, int size = 40) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(synthetic::dead_leaves(size, size + 8, 90 + i));
  return out;
}

bool same(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

void write_lol(const Path& root, int train, int test) {
  for (const char* sub : {"our485/low", "our485/high", "eval15/low", "eval15/high"}) {
    std::filesystem::create_directories(root / sub);
  }
  for (int i = 0; i < train + test; ++i) {
    const auto pair = synthetic::low_light_pair(32, 40, 300 + i);
    const std::string sub = i < train ? "our485" : "eval15";
    const std::string name = std::to_string(i) + ".png";
    save_image(pair.low, root / sub / "low" / name);
    save_image(pair.high, root / sub / "high" / name);
  }
}

}  // namespace

TEST_CASE("learning-rate schedules at the boundaries") {
  const LumStage s;
  CHECK(lum_learning_rate(s, 1) == 1e-4);
  CHECK(lum_learning_rate(s, 20) == 1e-4);
  CHECK(lum_learning_rate(s, 21) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lum_learning_rate(s, 25) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lum_learning_rate(s, 40) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lum_learning_rate(s, 41) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lum_learning_rate(s, 45) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK_THROWS_AS(lum_learning_rate(s, 0), InvalidArgument);

  const NdmStage n;
  CHECK(ndm_learning_rate(n, 0) == 1e-4);
  CHECK(ndm_learning_rate(n, 5000) == doctest::Approx(1e-4 / std::sqrt(10.0)).epsilon(1e-12));
  CHECK(ndm_learning_rate(n, 10000) == doctest::Approx(1e-5).epsilon(1e-12));
  double prev = 1;
  for (long long t = 0; t <= 10000; t += 500) {
    const double lr = ndm_learning_rate(n, t);
    CHECK(lr < prev);
    CHECK(lr > 0);
    prev = lr;
  }
}

TEST_CASE("config: defaults, json round trip, rejection of bad input") {
  const TrainConfig d;
  CHECK(d.lum.batch == 16);
  CHECK(d.lum.patch == 48);
  CHECK(d.ndm.patch == 64);
  CHECK(d.ndm.momentum == 0.9);
  CHECK(d.lum.weight_decay == 1e-4);
  CHECK(d.ndm.weight_decay == 1e-4);
  d.validate();

  TrainConfig c = tiny_config();
  c.lum.loss.prior = lum::PriorKind::Ssim;
  c.ndm.loss.clean_noise = ndm::NoiseSource::Encoder;
  c.ndm.loss.use_bc = false;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  const TrainConfig partial = train_config_from_json(Json{{"lum", {{"epochs", 3}}}});
  CHECK(partial.lum.epochs == 3);
  CHECK(partial.lum.patch == 48);

  CHECK_THROWS_AS(train_config_from_json(Json{{"lum", {{"epoch", 3}}}}), InvalidArgument);
  CHECK_THROWS_AS(train_config_from_json(Json{{"lum", {{"lr", "fast"}}}}), InvalidArgument);
  CHECK_THROWS_AS(train_config_from_json(Json{{"stage", "both"}}), InvalidArgument);
  CHECK_THROWS_AS(train_config_from_json(Json{{"lum", {{"loss", {{"prior", "tv"}}}}}}), InvalidArgument);
  TrainConfig bad;
  bad.lum.lr = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = TrainConfig{};
  bad.ndm.patch = 40;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = TrainConfig{};
  bad.lum.decay_after = {40, 20};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("manifest: LOL layout, save/load, split hygiene") {
  TempDir tmp("manifest");
  write_lol(tmp.path / "lol", 5, 2);
  const DatasetManifest m = DatasetManifest::from_lol(tmp.path / "lol", 3);
  CHECK(m.split("train_low").size() == 5);
  CHECK(m.split("test_high").size() == 2);
  CHECK(m.split("unpaired_noisy").size() == 3);
  CHECK(m.pairs.at("train_low") == "train_high");
  CHECK(m.test_files().size() == 4);
  m.validate();
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(m.split("train_low")[i].filename() == m.split("train_high")[i].filename());
  }

  m.save(tmp.path / "m.json");
  const DatasetManifest r = DatasetManifest::load(tmp.path / "m.json");
  CHECK(r.splits == m.splits);
  CHECK(r.pairs == m.pairs);
  CHECK(r.test_splits == m.test_splits);

  // Relative entries resolve against the manifest file.
  {
    std::ofstream out(tmp.path / "rel.json");
    out << R"({"splits": {"a": ["lol/our485/low/0.png"]}})";
  }
  const DatasetManifest rel = DatasetManifest::load(tmp.path / "rel.json");
  CHECK(rel.split("a")[0] == tmp.path / "lol/our485/low/0.png");
  rel.validate();

  DatasetManifest leak = m;
  leak.splits["train_low"].push_back(m.split("test_low")[0]);
  leak.splits["train_high"].push_back(m.split("test_high")[0]);
  CHECK_THROWS_AS(leak.validate(), InvalidArgument);
  DatasetManifest missing = m;
  missing.splits["extra"] = {tmp.path / "nope.png"};
  CHECK_THROWS_AS(missing.validate(), InvalidArgument);
  missing.validate(false);
  DatasetManifest uneven = m;
  uneven.splits["train_high"].pop_back();
  CHECK_THROWS_AS(uneven.validate(), InvalidArgument);
  CHECK_THROWS_AS(m.split("nope"), InvalidArgument);
  CHECK_THROWS_AS(DatasetManifest::from_lol(tmp.path / "missing"), InvalidArgument);
}

TEST_CASE("patch sampler: shapes, determinism, paired crops, errors") {
  const std::vector<Image> a = highs(5, 60);
  std::vector<Image> inv;
  for (const auto& img : a) {
    Image t = img;
    for (double& v : t.pixels()) v = 1.0 - v;
    inv.push_back(t);
  }
  const PatchSampler lum_like(ImageList(a), ImageList(), Pairing::Single, SamplerSpec{48, 16, true, 7});
  const Batch b = lum_like.sample(0);
  CHECK(b.first.shape() == Shape{16, 3, 48, 48});
  CHECK(b.second.empty());
  CHECK(same(lum_like.sample(4).first, lum_like.sample(4).first));
  CHECK_FALSE(same(lum_like.sample(4).first, lum_like.sample(5).first));
  const PatchSampler other_seed(ImageList(a), ImageList(), Pairing::Single, SamplerSpec{48, 16, true, 8});
  CHECK_FALSE(same(lum_like.sample(4).first, other_seed.sample(4).first));

  const PatchSampler paired(ImageList(a), ImageList(inv), Pairing::Paired, SamplerSpec{24, 8, true, 1});
  for (long long s = 0; s < 5; ++s) {
    const Batch p = paired.sample(s);
    REQUIRE(p.second.shape() == p.first.shape());
    for (std::size_t i = 0; i < p.first.size(); ++i) REQUIRE(p.second[i] == 1.0 - p.first[i]);
  }

  const PatchSampler unpaired(ImageList(a), ImageList(lows(3, 50)), Pairing::Unpaired, SamplerSpec{32, 3, true, 1});
  const Batch u = unpaired.sample(2);
  CHECK(u.first.shape() == Shape{3, 3, 32, 32});
  CHECK(u.second.shape() == Shape{3, 3, 32, 32});

  const PatchSampler too_big(ImageList(a), ImageList(), Pairing::Single, SamplerSpec{64, 2, true, 1});
  CHECK_THROWS_AS(too_big.sample(0), InvalidArgument);
  std::vector<Image> odd = inv;
  odd[2] = Image(61, 60, 3, 0.5);
  const PatchSampler mismatched(ImageList(a), ImageList(odd), Pairing::Paired, SamplerSpec{16, 32, false, 1});
  CHECK_THROWS_AS(mismatched.sample(0), ShapeMismatch);
  CHECK_THROWS_AS(PatchSampler(ImageList(), ImageList(), Pairing::Single, SamplerSpec{}), InvalidArgument);

  TempDir tmp("sample");
  write_lol(tmp.path, 3, 1);
  const DatasetManifest m = DatasetManifest::from_lol(tmp.path);
  const Batch mb = sample_patches(m, "train_low", 16, 4, 9);
  CHECK(mb.first.shape() == Shape{4, 3, 16, 16});
  CHECK(mb.second.shape() == Shape{4, 3, 16, 16});
  CHECK(same(mb.first, sample_patches(m, "train_low", 16, 4, 9).first));
}

TEST_CASE("loader order does not depend on the worker count") {
  const PatchSampler s(ImageList(highs(4)), ImageList(), Pairing::Single, SamplerSpec{16, 4, true, 2});
  BatchLoader one(s, 3, 1, 4);
  BatchLoader many(s, 3, 4, 3);
  for (int i = 0; i < 20; ++i) {
    const Batch a = one.next(), b = many.next();
    CHECK(a.step == 3 + i);
    CHECK(b.step == 3 + i);
    CHECK(same(a.first, b.first));
  }
  const PatchSampler bad(ImageList(highs(2)), ImageList(), Pairing::Single, SamplerSpec{100, 1, true, 2});
  BatchLoader failing(bad, 0, 2, 2);
  CHECK_THROWS_AS(failing.next(), InvalidArgument);
}

TEST_CASE("LUM: one-epoch smoke run writes a loadable checkpoint and curves") {
  TempDir tmp("lum_smoke");
  TrainConfig c = tiny_config();
  c.lum.epochs = 1;
  c.lum.batch = 4;
  RunOptions opt;
  opt.out_dir = tmp.path;
  const RunResult r = train_lum(c, ImageList(lows(8)), opt, stand_in());
  CHECK(r.steps == 2);
  CHECK(r.epoch_means.size() == 1);
  CHECK(std::filesystem::exists(tmp.path / "lum_loss.csv"));
  CHECK(std::filesystem::exists(tmp.path / "lum_epochs.csv"));
  CHECK(std::filesystem::exists(tmp.path / "run.json"));
  const auto net = load_lum_network(r.checkpoint);
  LumSession again(c, 2, stand_in());
  CHECK(net->parameters().checksum() != again.network().parameters().checksum());
  const CheckpointInfo info = CheckpointInfo::read(r.checkpoint, "lum");
  CHECK(info.step == 2);
  CHECK(info.epoch == 1);
  CHECK(info.seed == 3);

  std::ifstream csv(tmp.path / "lum_loss.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 3);
}

TEST_CASE("LUM: determinism and bitwise resume") {
  TrainConfig c = tiny_config();
  c.lum.epochs = 10;
  const ImageList data(lows(8));
  RunOptions opt;
  opt.max_steps = 15;
  const RunResult a = train_lum(c, data, opt, stand_in());
  const RunResult b = train_lum(c, data, opt, stand_in());
  REQUIRE(a.step_totals.size() == 15);
  CHECK(a.step_totals == b.step_totals);

  TempDir tmp("lum_resume");
  RunOptions first;
  first.out_dir = tmp.path / "a";
  first.max_steps = 5;
  train_lum(c, data, first, stand_in());
  RunOptions second;
  second.out_dir = tmp.path / "b";
  second.resume_from = tmp.path / "a" / "checkpoint";
  second.max_steps = 15;
  const RunResult resumed = train_lum(c, data, second, stand_in());
  REQUIRE(resumed.step_totals.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(resumed.step_totals[i] == a.step_totals[5 + i]);

  // Checkpoint round trip is bitwise.
  LumSession s(c, 2, stand_in());
  s.resume(tmp.path / "b" / "checkpoint");
  const auto net = load_lum_network(tmp.path / "b" / "checkpoint");
  CHECK(s.network().parameters().checksum() == net->parameters().checksum());
  CHECK(s.steps_done() == 15);
  const auto stored = load_archive(tmp.path / "b" / "checkpoint" / "lum.params");
  for (const auto& [name, var] : net->parameters().entries()) {
    for (const auto& [n, t] : stored) {
      if (n == name) CHECK(same(t, var.value()));
    }
  }

  TrainConfig wider = c;
  wider.lum.net.width = 12;
  LumSession mismatch(wider, 2, stand_in());
  CHECK_THROWS_AS(mismatch.resume(tmp.path / "b" / "checkpoint"), CheckpointMismatchError);
  CHECK_THROWS_AS(mismatch.resume(tmp.path / "nowhere"), UnreadableFileError);
}

TEST_CASE("LUM: epoch-mean loss falls over the first epochs (3 seeds)") {
  TrainConfig c = tiny_config();
  c.lum.epochs = 5;
  c.lum.lr = 1e-3;
  c.lum.steps_per_epoch = 4;
  double first = 0, fifth = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    c.seed = seed;
    c.lum.net.seed = seed;
    const RunResult r = train_lum(c, ImageList(lows(8)), RunOptions{}, stand_in());
    REQUIRE(r.epoch_means.size() == 5);
    first += r.epoch_means.front();
    fifth += r.epoch_means.back();
  }
  CHECK(fifth < first);
}

TEST_CASE("guards: divergence, test-split audit, missing backbone") {
  TrainConfig c = tiny_config();
  c.divergence_factor = 0.5;  // any step above half the first loss trips it
  c.lum.lr = 0.5;
  RunOptions opt;
  opt.max_steps = 6;
  CHECK_THROWS_AS(train_lum(c, ImageList(lows(4)), opt, stand_in()), DivergenceError);

  TempDir tmp("audit");
  write_lol(tmp.path / "lol", 4, 2);
  DatasetManifest m = DatasetManifest::from_lol(tmp.path / "lol");
  TrainConfig ok = tiny_config();
  ok.allow_random_backbone = true;
  ok.backbone_weights = tmp.path / "absent.params";
  ok.lum.epochs = 1;
  RunOptions clean;
  clean.out_dir = tmp.path / "run";
  CHECK_NOTHROW(train_lum(ok, m, clean));

  // Reading a test file while the audit is active aborts the run.
  RunOptions leaky;
  leaky.forbidden = m.test_files();
  CHECK_THROWS_AS(train_lum(ok, ImageList(m.split("test_low")), leaky, stand_in()), Error);

  TrainConfig strict = ok;
  strict.allow_random_backbone = false;
  CHECK_THROWS_AS(resolve_backbone(strict), MissingWeightsError);
}

TEST_CASE("NDM: smoke run, checkpoints for every network, resume") {
  TempDir tmp("ndm");
  const TrainConfig c = tiny_config();
  const ImageList noisy(lows(4)), clean(highs(4));
  RunOptions opt;
  opt.out_dir = tmp.path / "full";
  const RunResult full = train_ndm(c, noisy, clean, opt, stand_in());
  REQUIRE(full.step_totals.size() == 6);
  for (const char* set : {"content_encoder", "noise_encoder", "generator_x", "generator_y", "discriminator_x",
                          "discriminator_y"}) {
    CHECK(std::filesystem::exists(full.checkpoint / ("ndm_" + std::string(set) + ".params")));
  }
  const auto nets = load_ndm_networks(full.checkpoint);
  CHECK(nets->config().noise_dim == 2);
  const Json side = Json::parse(std::ifstream(full.checkpoint / "ndm.json"));
  CHECK(side.at("noise_dim") == 2);
  CHECK(side.at("update_ratio") == "1:1");
  CHECK(side.at("label_real") == 1.0);

  RunOptions part;
  part.out_dir = tmp.path / "part";
  part.max_steps = 3;
  train_ndm(c, noisy, clean, part, stand_in());
  RunOptions rest;
  rest.resume_from = tmp.path / "part" / "checkpoint";
  const RunResult resumed = train_ndm(c, noisy, clean, rest, stand_in());
  REQUIRE(resumed.step_totals.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(resumed.step_totals[i] == full.step_totals[3 + i]);

  TrainConfig other = c;
  other.ndm.net.noise_dim = 3;
  NdmSession s(other, stand_in());
  CHECK_THROWS_AS(s.resume(full.checkpoint), CheckpointMismatchError);
}

TEST_CASE("NDM: manifest entry point precomputes reflectances") {
  TempDir tmp("ndm_manifest");
  write_lol(tmp.path / "lol", 4, 1);
  const DatasetManifest m = DatasetManifest::from_lol(tmp.path / "lol", 3);
  TrainConfig c = tiny_config();
  c.allow_random_backbone = true;
  c.backbone_weights = tmp.path / "absent.params";
  c.lum.epochs = 1;
  RunOptions lum_opt;
  lum_opt.out_dir = tmp.path / "lum";
  const RunResult l = train_lum(c, m, lum_opt);
  RunOptions ndm_opt;
  ndm_opt.out_dir = tmp.path / "ndm";
  ndm_opt.max_steps = 2;
  const RunResult n = train_ndm(c, m, l.checkpoint, ndm_opt);
  CHECK(n.steps == 2);
  int maps = 0;
  for (const auto& e : std::filesystem::directory_iterator(tmp.path / "ndm" / "reflectance")) maps += e.is_regular_file();
  CHECK(maps == 3);
}
