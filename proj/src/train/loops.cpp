#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "hep/archive.hpp"
#include "hep/error.hpp"
#include "hep/image_io.hpp"
#include "hep/train.hpp"

namespace hep::train {
namespace {

bool lum_needs_backbone(const TrainConfig& c) {
  return c.lum.loss.use_prior && c.lum.loss.prior == lum::PriorKind::Hep;
}

bool ndm_needs_backbone(const TrainConfig& c) { return c.ndm.loss.use_per; }

std::mt19937_64 step_rng(std::uint64_t seed, long long step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), 0x6e646dU};
  return std::mt19937_64(seq);
}

// Any read of a listed file throws; installed for the length of a run.
class ReadAudit {
 public:
  explicit ReadAudit(const std::vector<Path>& forbidden) {
    for (const auto& p : forbidden) banned_.insert(canon(p));
    if (!banned_.empty()) {
      observer_ = std::make_unique<ScopedReadObserver>([this](const Path& p) {
        if (banned_.count(canon(p))) throw Error("training attempted to read a test-split file: " + p.string());
      });
    }
  }

 private:
  static Path canon(const Path& p) {
    std::error_code ec;
    Path c = std::filesystem::weakly_canonical(p, ec);
    return ec ? p : c;
  }
  std::set<Path> banned_;
  std::unique_ptr<ScopedReadObserver> observer_;
};

class Csv {
 public:
  Csv(const Path& dir, const std::string& name, const std::string& header, bool append) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    const Path file = dir / name;
    const bool fresh = !append || !std::filesystem::exists(file);
    out_.open(file, fresh ? std::ios::trunc : std::ios::app);
    if (!out_) throw Error("cannot write " + file.string());
    if (fresh) out_ << header << '\n';
  }
  template <class... T>
  void row(const T&... v) {
    if (!out_.is_open()) return;
    bool first = true;
    ((out_ << (first ? "" : ",") << v, first = false), ...);
    out_ << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void guard(double total, double initial, double factor, long long step) {
  if (!std::isfinite(total) || (initial > 0 && total > factor * initial)) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "loss diverged at step %lld: %.6g vs initial %.6g", step, total, initial);
    throw DivergenceError(buf);
  }
}

void write_run_json(const Path& dir, const TrainConfig& cfg, const RunResult& r, const Backbone* backbone) {
  if (dir.empty()) return;
  Json j = {{"stage", cfg.stage == Stage::Lum ? "lum" : "ndm"},
            {"config", to_json(cfg)},
            {"steps", r.steps},
            {"checkpoint", r.checkpoint.string()},
            {"discriminator_collapsed", r.discriminator_collapsed}};
  if (!r.step_totals.empty()) j["last_loss"] = r.step_totals.back();
  if (backbone) {
    j["backbone"] = {{"name", backbone->name()},
                     {"pretrained", backbone->pretrained()},
                     {"checksum", hash_hex(backbone->checksum())}};
  }
  std::ofstream out(dir / "run.json");
  out << j.dump(2) << '\n';
}

}  // namespace

std::shared_ptr<Backbone> resolve_backbone(const TrainConfig& cfg) {
  const Path weights = cfg.backbone_weights.empty() ? default_backbone_weights() : cfg.backbone_weights;
  if (!weights.empty() && std::filesystem::exists(weights)) return Vgg19::load(weights);
  if (!cfg.allow_random_backbone) {
    throw MissingWeightsError("pretrained backbone weights not found at '" + weights.string() +
                              "'; set HEP_BACKBONE_DIR (see tools/export_vgg19.py) or allow a random stand-in");
  }
  std::cerr << "warning: using a randomly initialized backbone; feature losses carry no ImageNet knowledge\n";
  return Vgg19::random(cfg.seed);
}

LumSession::LumSession(const TrainConfig& cfg, int steps_per_epoch, std::shared_ptr<const Backbone> backbone)
    : cfg_(cfg), steps_per_epoch_(steps_per_epoch), backbone_(std::move(backbone)) {
  cfg_.validate();
  if (steps_per_epoch_ < 1) throw InvalidArgument("steps per epoch must be >= 1");
  if (lum_needs_backbone(cfg_) && !backbone_) throw MissingWeightsError("the HEP prior needs a backbone");
  net_ = std::make_unique<lum::LumNetwork>(cfg_.lum.net);
  adam_ = std::make_unique<nn::Adam>(net_->parameters(),
                                     nn::AdamConfig{cfg_.lum.lr, 0.9, 0.999, 1e-8, cfg_.lum.weight_decay});
}

void LumSession::resume(const Path& dir) {
  const CheckpointInfo info = CheckpointInfo::read(dir, "lum");
  if (info.architecture_hash != net_->architecture_hash()) {
    throw CheckpointMismatchError("checkpoint architecture " + hash_hex(info.architecture_hash) +
                                  " does not match this configuration (" + hash_hex(net_->architecture_hash()) + ")");
  }
  const NamedTensors state = load_archive(dir / "lum.params");
  net_->parameters().restore(state);
  adam_->load_state(state, info.step);
  step_ = info.step;
  initial_loss_ = info.initial_loss;
}

LumRecord LumSession::step(const Batch& batch) {
  const int epoch = epoch_of(step_);
  const double lr = lum_learning_rate(cfg_.lum, epoch);
  net_->parameters().zero_grad();
  const lum::Decomposition d = net_->forward_rgb(Var::constant(batch.first));
  const lum::LumLossTerms t = lum::lum_losses(d, batch.first, cfg_.lum.loss, backbone_.get());
  t.total.backward();
  adam_->set_lr(lr);
  adam_->step();
  LumRecord r{step_, epoch, t.recon.item(), t.prior.item(), t.smooth.item(), t.total.item(), lr};
  if (step_ == 0) initial_loss_ = r.total;
  ++step_;
  return r;
}

void LumSession::save(const Path& dir) const {
  CheckpointInfo info;
  info.kind = "lum";
  info.architecture_hash = net_->architecture_hash();
  info.seed = cfg_.seed;
  info.step = step_;
  info.epoch = static_cast<int>(step_ / steps_per_epoch_);
  info.lr = adam_->lr();
  info.initial_loss = initial_loss_;
  info.config = to_json(cfg_);
  save_lum_checkpoint(dir, *net_, adam_.get(), info);
}

NdmSession::NdmSession(const TrainConfig& cfg, std::shared_ptr<const Backbone> backbone)
    : cfg_(cfg), backbone_(std::move(backbone)) {
  cfg_.validate();
  if (ndm_needs_backbone(cfg_) && !backbone_) throw MissingWeightsError("the perceptual loss needs a backbone");
  nets_ = std::make_unique<ndm::NdmNetworks>(cfg_.ndm.net);
  trainer_ = std::make_unique<ndm::NdmTrainer>(
      *nets_, nn::AdamConfig{cfg_.ndm.lr, cfg_.ndm.momentum, 0.999, 1e-8, cfg_.ndm.weight_decay}, cfg_.ndm.loss,
      backbone_.get());
}

void NdmSession::resume(const Path& dir) {
  const CheckpointInfo info = CheckpointInfo::read(dir, "ndm");
  if (info.architecture_hash != nets_->architecture_hash()) {
    throw CheckpointMismatchError("checkpoint architecture " + hash_hex(info.architecture_hash) +
                                  " does not match this configuration (" + hash_hex(nets_->architecture_hash()) + ")");
  }
  auto sets = nets_->parameter_sets();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const NamedTensors state = load_archive(dir / ("ndm_" + sets[i].first + ".params"));
    sets[i].second->restore(state);
    trainer_->optimizers()[i].load_state(state, info.step);
  }
  step_ = info.step;
  initial_loss_ = info.initial_loss;
}

NdmRecord NdmSession::step(const Batch& batch) {
  const double lr = ndm_learning_rate(cfg_.ndm, step_);
  trainer_->set_lr(lr);
  std::mt19937_64 rng = step_rng(cfg_.seed, step_);
  NdmRecord r{step_, trainer_->step(batch.first, batch.second, rng), lr};
  if (step_ == 0) initial_loss_ = r.stats.total;
  ++step_;
  return r;
}

void NdmSession::save(const Path& dir) const {
  CheckpointInfo info;
  info.kind = "ndm";
  info.architecture_hash = nets_->architecture_hash();
  info.seed = cfg_.seed;
  info.step = step_;
  info.lr = trainer_->lr();
  info.initial_loss = initial_loss_;
  info.config = to_json(cfg_);
  save_ndm_checkpoint(dir, *nets_, &trainer_->optimizers(), info);
}

RunResult train_lum(const TrainConfig& cfg_in, const ImageList& train, const RunOptions& opt,
                    std::shared_ptr<const Backbone> backbone) {
  TrainConfig cfg = cfg_in;
  cfg.stage = Stage::Lum;
  cfg.validate();
  if (train.empty()) throw InvalidArgument("no training images");
  const int batch = cfg.lum.batch;
  const int spe = cfg.lum.steps_per_epoch > 0 ? cfg.lum.steps_per_epoch
                                              : static_cast<int>((train.size() + batch - 1) / batch);
  ReadAudit audit(opt.forbidden);
  LumSession session(cfg, spe, backbone);
  if (!opt.resume_from.empty()) session.resume(opt.resume_from);

  const long long total = static_cast<long long>(cfg.lum.epochs) * spe;
  const long long end = opt.max_steps >= 0 ? std::min(total, opt.max_steps) : total;
  const PatchSampler sampler(train, ImageList(), Pairing::Single,
                             SamplerSpec{cfg.lum.patch, batch, cfg.hflip, cfg.seed});
  BatchLoader loader(sampler, session.steps_done(), cfg.workers, cfg.queue_depth);
  const bool append = !opt.resume_from.empty();
  Csv steps(opt.out_dir, "lum_loss.csv", "step,epoch,recon,prior,smooth,total,lr", append);
  Csv epochs(opt.out_dir, "lum_epochs.csv", "epoch,recon,prior,smooth,total,lr", append);
  const Path ckpt = opt.out_dir.empty() ? Path() : opt.out_dir / "checkpoint";

  RunResult result;
  double sums[4] = {0, 0, 0, 0};
  int count = 0;
  while (session.steps_done() < end) {
    const LumRecord r = session.step(loader.next());
    guard(r.total, session.initial_loss(), cfg.divergence_factor, r.step);
    result.step_totals.push_back(r.total);
    steps.row(r.step, r.epoch, r.recon, r.prior, r.smooth, r.total, r.lr);
    if (opt.on_step) opt.on_step(r.step, r.total);
    sums[0] += r.recon;
    sums[1] += r.prior;
    sums[2] += r.smooth;
    sums[3] += r.total;
    ++count;
    if (opt.log_every > 0 && (r.step + 1) % opt.log_every == 0) {
      std::fprintf(stderr, "[lum] epoch %d step %lld total %.5f (recon %.5f prior %.5f smooth %.5f) lr %.1e\n",
                   r.epoch, r.step + 1, r.total, r.recon, r.prior, r.smooth, r.lr);
    }
    if (session.steps_done() % spe == 0) {
      result.epoch_means.push_back(sums[3] / count);
      epochs.row(r.epoch, sums[0] / count, sums[1] / count, sums[2] / count, sums[3] / count, r.lr);
      if (!ckpt.empty()) session.save(ckpt);
      std::fill(std::begin(sums), std::end(sums), 0.0);
      count = 0;
    }
  }
  if (!ckpt.empty() && count > 0) session.save(ckpt);
  if (!ckpt.empty() && session.steps_done() == 0) session.save(ckpt);
  result.steps = session.steps_done();
  result.checkpoint = ckpt;
  write_run_json(opt.out_dir, cfg, result, backbone.get());
  return result;
}

RunResult train_lum(const TrainConfig& cfg, const DatasetManifest& m, const RunOptions& opt) {
  m.validate();
  RunOptions o = opt;
  const auto test = m.test_files();
  o.forbidden.insert(o.forbidden.end(), test.begin(), test.end());
  std::shared_ptr<const Backbone> backbone;
  if (lum_needs_backbone(cfg)) backbone = resolve_backbone(cfg);
  return train_lum(cfg, ImageList(m.split("train_low")), o, backbone);
}

RunResult train_ndm(const TrainConfig& cfg_in, const ImageList& noisy, const ImageList& clean,
                    const RunOptions& opt, std::shared_ptr<const Backbone> backbone) {
  TrainConfig cfg = cfg_in;
  cfg.stage = Stage::Ndm;
  cfg.validate();
  if (noisy.empty() || clean.empty()) throw InvalidArgument("NDM needs noisy and clean images");
  ReadAudit audit(opt.forbidden);
  NdmSession session(cfg, backbone);
  if (!opt.resume_from.empty()) session.resume(opt.resume_from);

  const long long total = cfg.ndm.iterations;
  const long long end = opt.max_steps >= 0 ? std::min(total, opt.max_steps) : total;
  const PatchSampler sampler(noisy, clean, Pairing::Unpaired,
                             SamplerSpec{cfg.ndm.patch, cfg.ndm.batch, cfg.hflip, cfg.seed});
  BatchLoader loader(sampler, session.steps_done(), cfg.workers, cfg.queue_depth);
  Csv steps(opt.out_dir, "ndm_loss.csv", "step,adv,kl,cc,col,per,bc,rec,total,disc,lr", !opt.resume_from.empty());
  const Path ckpt = opt.out_dir.empty() ? Path() : opt.out_dir / "checkpoint";

  RunResult result;
  int low_disc = 0;
  bool warned = false;
  while (session.steps_done() < end) {
    const NdmRecord r = session.step(loader.next());
    const auto& s = r.stats;
    guard(s.total, session.initial_loss(), cfg.divergence_factor, r.step);
    result.step_totals.push_back(s.total);
    result.cycle.push_back(s.cc);
    steps.row(r.step, s.adv, s.kl, s.cc, s.col, s.per, s.bc, s.rec, s.total, s.disc, r.lr);
    if (opt.on_step) opt.on_step(r.step, s.total);
    low_disc = (cfg.ndm.loss.use_adv && s.disc < cfg.collapse_threshold) ? low_disc + 1 : 0;
    if (low_disc >= cfg.collapse_window && !warned) {
      std::fprintf(stderr, "warning: discriminator loss below %.0e for %d consecutive steps (step %lld)\n",
                   cfg.collapse_threshold, cfg.collapse_window, r.step + 1);
      warned = true;
      result.discriminator_collapsed = true;
    }
    if (opt.log_every > 0 && (r.step + 1) % opt.log_every == 0) {
      std::fprintf(stderr, "[ndm] step %lld total %.5f (adv %.4f kl %.4f cc %.4f rec %.4f) disc %.4f lr %.2e\n",
                   r.step + 1, s.total, s.adv, s.kl, s.cc, s.rec, s.disc, r.lr);
    }
    if (!ckpt.empty() && session.steps_done() % cfg.ndm.checkpoint_every == 0) session.save(ckpt);
  }
  if (!ckpt.empty()) session.save(ckpt);
  result.steps = session.steps_done();
  result.checkpoint = ckpt;
  write_run_json(opt.out_dir, cfg, result, backbone.get());
  return result;
}

std::vector<Path> precompute_reflectances(const lum::LumNetwork& net, const std::vector<Path>& inputs,
                                          const Path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<Path> out;
  for (const auto& p : inputs) {
    const Path dst = out_dir / p.filename().replace_extension(".png");
    save_image(lum::decompose(net, load_image(p)).reflectance, dst, 16);
    out.push_back(dst);
  }
  return out;
}

RunResult train_ndm(const TrainConfig& cfg, const DatasetManifest& m, const Path& lum_checkpoint,
                    const RunOptions& opt) {
  m.validate();
  if (opt.out_dir.empty()) throw InvalidArgument("train_ndm needs an output directory for reflectance maps");
  RunOptions o = opt;
  const auto test = m.test_files();
  o.forbidden.insert(o.forbidden.end(), test.begin(), test.end());
  std::vector<Path> noisy;
  {
    ReadAudit audit(o.forbidden);
    const auto lum_net = load_lum_network(lum_checkpoint);
    noisy = precompute_reflectances(*lum_net, m.split("unpaired_noisy"), opt.out_dir / "reflectance");
  }
  std::shared_ptr<const Backbone> backbone;
  if (ndm_needs_backbone(cfg)) backbone = resolve_backbone(cfg);
  return train_ndm(cfg, ImageList(noisy), ImageList(m.split("unpaired_clean")), o, backbone);
}

}  // namespace hep::train
