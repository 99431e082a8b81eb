#pragma once

// Training harness: dataset manifests, seeded patch sampling with a
// multi-worker loader, learning-rate schedules, checkpoints with JSON
// sidecars, and the LUM and NDM training loops.

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "hep/backbone.hpp"
#include "hep/imaging.hpp"
#include "hep/lum.hpp"
#include "hep/ndm.hpp"
#include "hep/nn.hpp"
#include "json.hpp"

namespace hep::train {

using Path = std::filesystem::path;
using Json = nlohmann::json;

enum class Stage { Lum, Ndm };

struct LumStage {
  double lr = 1e-4;
  std::vector<int> decay_after{20, 40};  // rate drops by decay_factor after each
  double decay_factor = 0.1;
  double weight_decay = 1e-4;
  int batch = 16;
  int patch = 48;
  int epochs = 60;
  int steps_per_epoch = 0;  // 0: ceil(images / batch)
  lum::LumConfig net;
  lum::LumLossConfig loss;
};

struct NdmStage {
  double lr = 1e-4;
  double momentum = 0.9;  // first-moment coefficient of Adam
  double weight_decay = 1e-4;
  double decay_iterations = 10000;  // lr(t) = lr * 10^(-t / decay_iterations)
  int batch = 16;
  int patch = 64;
  int iterations = 10000;
  int checkpoint_every = 1000;
  ndm::NdmConfig net;
  ndm::NdmLossConfig loss;
};

struct TrainConfig {
  Stage stage = Stage::Lum;
  LumStage lum;
  NdmStage ndm;
  std::uint64_t seed = 1;
  int workers = 4;
  int queue_depth = 8;
  bool hflip = true;
  double divergence_factor = 10.0;
  int collapse_window = 500;
  double collapse_threshold = 1e-3;
  Path backbone_weights;  // empty: default_backbone_weights()
  bool allow_random_backbone = false;

  // Throws InvalidArgument on non-positive rates, sizes or counts.
  void validate() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json to_json(const TrainConfig& c);

// Epochs are 1-based: epochs 1..20 run at lr, 21..40 at lr/10, then lr/100.
double lum_learning_rate(const LumStage& s, int epoch);
double ndm_learning_rate(const NdmStage& s, long long iteration);

// Named file lists. Conventional split names: train_low, train_high,
// test_low, test_high, unpaired_noisy, unpaired_clean.
struct DatasetManifest {
  std::map<std::string, std::vector<Path>> splits;
  std::map<std::string, std::string> pairs;  // split -> partner, matched by position
  std::set<std::string> test_splits;

  // Relative paths resolve against the manifest's directory.
  static DatasetManifest load(const Path& file);
  void save(const Path& file) const;
  // LOL layout: our485/{low,high} for training, eval15/{low,high} for test,
  // and the first `unpaired` training images of each kind for the NDM mix.
  static DatasetManifest from_lol(const Path& root, int unpaired = 481);

  // Pair sizes agree, no file is in both a test and a non-test split, and
  // (optionally) every path exists. Throws InvalidArgument.
  void validate(bool check_files = true) const;
  const std::vector<Path>& split(const std::string& name) const;
  bool has_split(const std::string& name) const { return splits.count(name) > 0; }
  std::vector<Path> test_files() const;
};

// Images by index: decoded on demand from files, or held in memory.
class ImageList {
 public:
  ImageList() = default;
  explicit ImageList(std::vector<Path> paths, bool cache = false);
  explicit ImageList(std::vector<Image> images);

  std::size_t size() const { return paths_.empty() ? images_->size() : paths_.size(); }
  bool empty() const { return size() == 0; }
  std::shared_ptr<const Image> get(std::size_t i) const;
  std::string name(std::size_t i) const;
  const std::vector<Path>& paths() const { return paths_; }

 private:
  std::vector<Path> paths_;
  std::shared_ptr<std::vector<std::shared_ptr<const Image>>> images_ =
      std::make_shared<std::vector<std::shared_ptr<const Image>>>();
  bool cache_ = false;
  std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
  std::shared_ptr<std::map<std::size_t, std::shared_ptr<const Image>>> cached_ =
      std::make_shared<std::map<std::size_t, std::shared_ptr<const Image>>>();
};

enum class Pairing {
  Single,    // one domain
  Paired,    // same index, crop and flip in both lists
  Unpaired,  // independent draws from each list
};

struct SamplerSpec {
  int patch = 48;
  int batch = 16;
  bool hflip = true;
  std::uint64_t seed = 1;
};

struct Batch {
  long long step = 0;
  Tensor first;   // (N, 3, P, P)
  Tensor second;  // empty for Pairing::Single
};

class PatchSampler {
 public:
  PatchSampler(ImageList first, ImageList second, Pairing pairing, SamplerSpec spec);

  // Pure function of (seed, step). Throws InvalidArgument when the patch
  // does not fit an image, ShapeMismatch when a pair differs in size.
  Batch sample(long long step) const;
  const SamplerSpec& spec() const { return spec_; }
  std::size_t size() const { return first_.size(); }

 private:
  Tensor draw(const Image& img, const std::string& name, int top, int left, bool flip) const;

  ImageList first_, second_;
  Pairing pairing_;
  SamplerSpec spec_;
};

// One batch from a manifest split; a split with a partner samples pairs.
Batch sample_patches(const DatasetManifest& m, const std::string& split, int patch, int batch,
                     std::uint64_t seed);

// Workers fill a bounded window of upcoming steps; next() hands batches out
// in step order, so the stream does not depend on the worker count.
class BatchLoader {
 public:
  BatchLoader(const PatchSampler& sampler, long long first_step, int workers, int depth);
  ~BatchLoader();
  BatchLoader(const BatchLoader&) = delete;
  BatchLoader& operator=(const BatchLoader&) = delete;

  Batch next();

 private:
  void work();

  const PatchSampler& sampler_;
  long long next_out_;
  long long next_claim_;
  int depth_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable ready_, room_;
  std::map<long long, Batch> done_;
  std::exception_ptr error_;
  bool stop_ = false;
};

// Checkpoint sidecar, written next to the parameter archives.
struct CheckpointInfo {
  std::string kind;  // "lum" or "ndm"
  std::uint64_t architecture_hash = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  long long step = 0;  // completed optimizer steps
  double lr = 0.0;
  double initial_loss = 0.0;
  Json config;  // TrainConfig as JSON

  Json to_json() const;
  static CheckpointInfo from_json(const Json& j);
  static CheckpointInfo read(const Path& dir, const std::string& kind);
};

std::string hash_hex(std::uint64_t h);

// dir/lum.params (+ optimizer moments) and dir/lum.json.
void save_lum_checkpoint(const Path& dir, const lum::LumNetwork& net, const nn::Adam* adam,
                         const CheckpointInfo& info);
// Rebuilds the network from the sidecar config and checks the hash.
// Throws UnreadableFileError, CheckpointMismatchError.
std::unique_ptr<lum::LumNetwork> load_lum_network(const Path& dir);

// dir/ndm_<set>.params for every parameter set and dir/ndm.json.
void save_ndm_checkpoint(const Path& dir, const ndm::NdmNetworks& nets,
                         const std::vector<nn::Adam>* opts, const CheckpointInfo& info);
std::unique_ptr<ndm::NdmNetworks> load_ndm_networks(const Path& dir);

// Resolves the feature backbone for a run: the configured or default weights
// when present, else a seeded random stand-in if allowed.
std::shared_ptr<Backbone> resolve_backbone(const TrainConfig& cfg);

struct LumRecord {
  long long step = 0;
  int epoch = 0;
  double recon = 0, prior = 0, smooth = 0, total = 0, lr = 0;
};

struct NdmRecord {
  long long step = 0;
  ndm::NdmStepStats stats;
  double lr = 0;
};

// Network, optimizer and schedule position of a LUM run.
class LumSession {
 public:
  LumSession(const TrainConfig& cfg, int steps_per_epoch, std::shared_ptr<const Backbone> backbone);

  // Throws CheckpointMismatchError when the sidecar hash or kind differs.
  void resume(const Path& dir);
  LumRecord step(const Batch& batch);
  void save(const Path& dir) const;

  long long steps_done() const { return step_; }
  int epoch_of(long long step) const { return static_cast<int>(step / steps_per_epoch_) + 1; }
  double initial_loss() const { return initial_loss_; }
  lum::LumNetwork& network() { return *net_; }
  const nn::Adam& optimizer() const { return *adam_; }

 private:
  TrainConfig cfg_;
  int steps_per_epoch_;
  std::shared_ptr<const Backbone> backbone_;
  std::unique_ptr<lum::LumNetwork> net_;
  std::unique_ptr<nn::Adam> adam_;
  long long step_ = 0;
  double initial_loss_ = 0.0;
};

class NdmSession {
 public:
  NdmSession(const TrainConfig& cfg, std::shared_ptr<const Backbone> backbone);

  void resume(const Path& dir);
  NdmRecord step(const Batch& batch);
  void save(const Path& dir) const;

  long long steps_done() const { return step_; }
  double initial_loss() const { return initial_loss_; }
  ndm::NdmNetworks& networks() { return *nets_; }

 private:
  TrainConfig cfg_;
  std::shared_ptr<const Backbone> backbone_;
  std::unique_ptr<ndm::NdmNetworks> nets_;
  std::unique_ptr<ndm::NdmTrainer> trainer_;
  long long step_ = 0;
  double initial_loss_ = 0.0;
};

struct RunOptions {
  Path out_dir;          // checkpoint/, loss CSVs, run.json
  Path resume_from;      // checkpoint directory; empty for a fresh start
  long long max_steps = -1;  // stop early; -1 runs the whole schedule
  int log_every = 0;     // progress lines on stderr; 0 disables
  std::vector<Path> forbidden;  // reading any of these aborts the run
  std::function<void(long long step, double total)> on_step;
};

struct RunResult {
  Path checkpoint;
  long long steps = 0;
  std::vector<double> step_totals;   // this run's steps only
  std::vector<double> epoch_means;   // LUM: mean total per completed epoch
  std::vector<double> cycle;         // NDM: cycle loss per step
  bool discriminator_collapsed = false;
};

// Eq.-6 objective over random patches of the low-light images.
RunResult train_lum(const TrainConfig& cfg, const ImageList& train, const RunOptions& opt,
                    std::shared_ptr<const Backbone> backbone);
// Uses the manifest's train_low split and forbids its test files.
RunResult train_lum(const TrainConfig& cfg, const DatasetManifest& m, const RunOptions& opt);

RunResult train_ndm(const TrainConfig& cfg, const ImageList& noisy, const ImageList& clean,
                    const RunOptions& opt, std::shared_ptr<const Backbone> backbone);
// Writes LUM reflectances of unpaired_noisy to out_dir/reflectance as 16-bit
// PNGs, then trains against unpaired_clean.
RunResult train_ndm(const TrainConfig& cfg, const DatasetManifest& m, const Path& lum_checkpoint,
                    const RunOptions& opt);

std::vector<Path> precompute_reflectances(const lum::LumNetwork& net, const std::vector<Path>& inputs,
                                          const Path& out_dir);

}  // namespace hep::train
