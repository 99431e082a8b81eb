#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>

#include "CLI11.hpp"
#include "hep/app.hpp"
#include "hep/error.hpp"
#include "hep/image_io.hpp"
#include "hep/similarity.hpp"
#include "hep/synthetic.hpp"

namespace hep::app {
namespace {

using train::Json;
using train::Path;

// Everything one config file can hold: the training tree plus per-command
// sections. Flags given on the command line win over file values.
struct AppConfig {
  train::TrainConfig train;
  std::string manifest;
  std::string lol_root;
  std::string niqe_model;
  std::string layer = "conv4_1";
  std::string mode = "flatten";
  double threshold = 0.8;
  int bins = 20;
  long long ablate_lum_steps = -1;
  long long ablate_ndm_steps = -1;
  int threads = 1;
};

template <class T>
void take(Json& section, const char* key, T& out, const std::string& where) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument("config: bad value for " + where + "." + key);
  }
  section.erase(key);
}

void no_leftovers(const Json& section, const std::string& where) {
  for (auto it = section.begin(); it != section.end(); ++it) {
    throw InvalidArgument("config: unknown key " + where + "." + it.key());
  }
}

AppConfig load_config(const std::string& path) {
  AppConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw UnreadableFileError("cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path + " is not valid JSON: " + e.what());
  }
  const Path base = Path(path).parent_path();
  auto relative = [&](std::string& p) {
    if (!p.empty() && Path(p).is_relative()) p = (base / p).string();
  };
  if (j.contains("data")) {
    Json d = j["data"];
    take(d, "manifest", c.manifest, "data");
    take(d, "lol_root", c.lol_root, "data");
    no_leftovers(d, "data");
    relative(c.manifest);
    relative(c.lol_root);
    j.erase("data");
  }
  if (j.contains("eval")) {
    Json d = j["eval"];
    take(d, "niqe_model", c.niqe_model, "eval");
    take(d, "threads", c.threads, "eval");
    no_leftovers(d, "eval");
    relative(c.niqe_model);
    j.erase("eval");
  }
  if (j.contains("validate")) {
    Json d = j["validate"];
    take(d, "layer", c.layer, "validate");
    take(d, "mode", c.mode, "validate");
    take(d, "threshold", c.threshold, "validate");
    take(d, "bins", c.bins, "validate");
    no_leftovers(d, "validate");
    j.erase("validate");
  }
  if (j.contains("ablate")) {
    Json d = j["ablate"];
    take(d, "lum_steps", c.ablate_lum_steps, "ablate");
    take(d, "ndm_steps", c.ablate_ndm_steps, "ablate");
    no_leftovers(d, "ablate");
    j.erase("ablate");
  }
  c.train = train::train_config_from_json(j);
  if (!c.train.backbone_weights.empty()) {
    std::string w = c.train.backbone_weights.string();
    relative(w);
    c.train.backbone_weights = w;
  }
  return c;
}

train::DatasetManifest resolve_manifest(const std::string& manifest, const std::string& lol_root) {
  if (!manifest.empty()) return train::DatasetManifest::load(manifest);
  if (!lol_root.empty()) return train::DatasetManifest::from_lol(lol_root);
  throw InvalidArgument("no dataset: pass --manifest or --lol-root (or set data.manifest in the config)");
}

std::vector<Path> collect_inputs(const Path& input) {
  if (std::filesystem::is_regular_file(input)) return {input};
  if (!std::filesystem::is_directory(input)) throw UnreadableFileError("no such input: " + input.string());
  std::vector<Path> out;
  for (const auto& e : std::filesystem::directory_iterator(input)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw InvalidArgument("no images in " + input.string());
  return out;
}

metrics::NiqeModel niqe_model(const std::string& path) {
  return metrics::NiqeModel::load(path.empty() ? metrics::default_niqe_model_path() : Path(path));
}

std::string ms(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f ms", seconds * 1e3);
  return buf;
}

// Options shared by the two training commands.
struct TrainFlags {
  std::string manifest, lol_root, out, resume, backbone;
  long long max_steps = -1;
  int log_every = 10;
  std::uint64_t seed = 0;
  int workers = 0;
  bool allow_random = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--manifest", f.manifest, "dataset manifest (JSON)");
  cmd->add_option("--lol-root", f.lol_root, "LOL directory with our485/ and eval15/");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--resume", f.resume, "checkpoint directory to continue from");
  cmd->add_option("--max-steps", f.max_steps, "stop after this many optimizer steps in total");
  cmd->add_option("--log-every", f.log_every, "progress line interval (0: quiet)");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--workers", f.workers, "loader threads");
  cmd->add_option("--backbone", f.backbone, "converted VGG-19 weights");
  cmd->add_flag("--allow-random-backbone", f.allow_random, "use a seeded random backbone when weights are absent");
}

void apply_train_flags(const CLI::App* cmd, const TrainFlags& f, AppConfig& c) {
  if (cmd->count("--seed")) c.train.seed = f.seed;
  if (cmd->count("--workers")) c.train.workers = f.workers;
  if (cmd->count("--backbone")) c.train.backbone_weights = f.backbone;
  if (f.allow_random) c.train.allow_random_backbone = true;
  if (cmd->count("--manifest")) c.manifest = f.manifest;
  if (cmd->count("--lol-root")) c.lol_root = f.lol_root;
}

train::RunOptions run_options(const TrainFlags& f) {
  train::RunOptions o;
  o.out_dir = f.out;
  o.resume_from = f.resume;
  o.max_steps = f.max_steps;
  o.log_every = f.log_every;
  return o;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hep: two-stage low-light enhancement (light-up + denoise), training and evaluation", "hep"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config; flags override its values");

  std::function<void()> action;

  // train-lum
  TrainFlags lum_flags;
  int lum_epochs = 0;
  std::string lum_prior;
  auto* train_lum = app.add_subcommand("train-lum", "train the light-up decomposition network");
  add_train_flags(train_lum, lum_flags);
  train_lum->add_option("--epochs", lum_epochs, "number of epochs");
  train_lum->add_option("--prior", lum_prior, "reflectance prior: hep, l1, mse, ssim, maxent");
  train_lum->callback([&] {
    action = [&] {
      AppConfig c = load_config(config_path);
      apply_train_flags(train_lum, lum_flags, c);
      if (train_lum->count("--epochs")) c.train.lum.epochs = lum_epochs;
      if (!lum_prior.empty()) c.train.lum.loss.prior = lum::parse_prior_kind(lum_prior);
      const auto m = resolve_manifest(c.manifest, c.lol_root);
      const auto r = train::train_lum(c.train, m, run_options(lum_flags));
      out << "trained " << r.steps << " steps; checkpoint " << r.checkpoint.string() << "\n";
    };
  });

  // train-ndm
  TrainFlags ndm_flags;
  std::string ndm_lum;
  int ndm_iterations = 0;
  std::string noise_source;
  auto* train_ndm = app.add_subcommand("train-ndm", "train the noise disentanglement networks");
  add_train_flags(train_ndm, ndm_flags);
  train_ndm->add_option("--lum", ndm_lum, "trained LUM checkpoint directory")->required();
  train_ndm->add_option("--iterations", ndm_iterations, "number of iterations");
  train_ndm->add_option("--noise-source", noise_source, "noise code for clean->noisy translation: prior, encoder");
  train_ndm->callback([&] {
    action = [&] {
      AppConfig c = load_config(config_path);
      apply_train_flags(train_ndm, ndm_flags, c);
      if (train_ndm->count("--iterations")) c.train.ndm.iterations = ndm_iterations;
      if (!noise_source.empty()) {
        if (noise_source != "prior" && noise_source != "encoder") throw InvalidArgument("--noise-source is prior or encoder");
        c.train.ndm.loss.clean_noise = noise_source == "prior" ? ndm::NoiseSource::Prior : ndm::NoiseSource::Encoder;
      }
      const auto m = resolve_manifest(c.manifest, c.lol_root);
      const auto r = train::train_ndm(c.train, m, ndm_lum, run_options(ndm_flags));
      out << "trained " << r.steps << " iterations; checkpoint " << r.checkpoint.string() << "\n";
      if (r.discriminator_collapsed) out << "note: discriminator collapse was detected during the run\n";
    };
  });

  // enhance
  std::string in_path, enh_lum, enh_ndm, enh_out;
  bool skip_ndm = false;
  int enh_threads = 1;
  auto* enhance = app.add_subcommand("enhance", "enhance low-light images");
  enhance->add_option("--input", in_path, "image file or directory")->required();
  enhance->add_option("--lum", enh_lum, "LUM checkpoint directory")->required();
  enhance->add_option("--ndm", enh_ndm, "NDM checkpoint directory");
  enhance->add_flag("--skip-ndm", skip_ndm, "write the LUM reflectance without denoising");
  enhance->add_option("--out", enh_out, "output directory")->required();
  enhance->add_option("--threads", enh_threads, "images processed in parallel");
  enhance->callback([&] {
    action = [&] {
      if (!skip_ndm && enh_ndm.empty()) throw InvalidArgument("--ndm is required unless --skip-ndm is given");
      const auto lum_net = train::load_lum_network(enh_lum);
      std::unique_ptr<ndm::NdmNetworks> ndm_net;
      if (!skip_ndm) ndm_net = train::load_ndm_networks(enh_ndm);
      const auto inputs = collect_inputs(in_path);
      std::filesystem::create_directories(enh_out);
      std::mutex print;
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      std::exception_ptr error;
      const int t = std::max(1, std::min<int>(enh_threads, static_cast<int>(inputs.size())));
      for (int k = 0; k < t; ++k) {
        pool.emplace_back([&] {
          for (std::size_t i; (i = next++) < inputs.size();) {
            try {
              const auto start = std::chrono::steady_clock::now();
              const Image result = enhance_image(*lum_net, ndm_net.get(), load_image(inputs[i]));
              const Path dst = Path(enh_out) / inputs[i].filename().replace_extension(".png");
              save_image(result, dst);
              const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
              std::lock_guard<std::mutex> lock(print);
              out << inputs[i].filename().string() << "  " << ms(took.count()) << "\n";
            } catch (...) {
              std::lock_guard<std::mutex> lock(print);
              if (!error) error = std::current_exception();
            }
          }
        });
      }
      for (auto& th : pool) th.join();
      if (error) std::rethrow_exception(error);
    };
  });

  // eval
  std::string pred_dir, gt_dir, eval_model, eval_csv;
  bool no_reference = false;
  int eval_threads = 0;
  auto* eval = app.add_subcommand("eval", "PSNR / SSIM / NIQE of a directory of results");
  eval->add_option("--pred", pred_dir, "directory of enhanced images")->required();
  auto* gt_opt = eval->add_option("--gt", gt_dir, "directory of references, matched by file stem");
  auto* nr_opt = eval->add_flag("--no-reference", no_reference, "NIQE only");
  gt_opt->excludes(nr_opt);
  eval->add_option("--niqe-model", eval_model, "pristine NIQE model");
  eval->add_option("--csv", eval_csv, "per-image CSV (default <pred>/metrics.csv)");
  eval->add_option("--threads", eval_threads, "images evaluated in parallel");
  eval->callback([&] {
    action = [&] {
      AppConfig c = load_config(config_path);
      if (gt_dir.empty() && !no_reference) throw InvalidArgument("pass --gt DIR or --no-reference");
      if (!eval_model.empty()) c.niqe_model = eval_model;
      if (eval->count("--threads")) c.threads = eval_threads;
      const auto model = niqe_model(c.niqe_model);
      const auto s = evaluate_dirs(pred_dir, no_reference ? Path() : Path(gt_dir), model, c.threads);
      const Path csv = eval_csv.empty() ? Path(pred_dir) / "metrics.csv" : Path(eval_csv);
      write_eval_csv(csv, s, !no_reference);
      char line[160];
      if (no_reference) {
        std::snprintf(line, sizeof(line), "images %zu  NIQE %.3f\n", s.rows.size(), s.mean.niqe);
      } else {
        std::snprintf(line, sizeof(line), "images %zu  PSNR %.2f  SSIM %.3f  NIQE %.3f\n", s.rows.size(), s.mean.psnr,
                      s.mean.ssim, s.mean.niqe);
      }
      out << line << "wrote " << csv.string() << "\n";
    };
  });

  // hep-validate
  std::string val_pairs, val_lol, val_layer, val_mode, val_out, val_backbone, val_split;
  double val_threshold = 0.8;
  int val_bins = 20;
  bool val_random = false;
  auto* validate = app.add_subcommand("hep-validate", "cosine similarity of equalized vs raw features to ground truth");
  validate->add_option("--pairs", val_pairs, "paired dataset manifest");
  validate->add_option("--lol-root", val_lol, "LOL directory (all 500 pairs)");
  validate->add_option("--split", val_split, "use only this paired split");
  validate->add_option("--layer", val_layer, "backbone layer (default conv4_1)");
  validate->add_option("--mode", val_mode, "flatten, channel-mean or gram");
  validate->add_option("--threshold", val_threshold, "report the fraction above this cosine");
  validate->add_option("--bins", val_bins, "histogram bins");
  validate->add_option("--out", val_out, "report path; writes <out>.json and <out>.png")->required();
  validate->add_option("--backbone", val_backbone, "converted VGG-19 weights");
  validate->add_flag("--allow-random-backbone", val_random, "use a seeded random backbone when weights are absent");
  validate->callback([&] {
    action = [&] {
      AppConfig c = load_config(config_path);
      if (!val_layer.empty()) c.layer = val_layer;
      if (!val_mode.empty()) c.mode = val_mode;
      if (validate->count("--threshold")) c.threshold = val_threshold;
      if (validate->count("--bins")) c.bins = val_bins;
      if (!val_backbone.empty()) c.train.backbone_weights = val_backbone;
      if (val_random) c.train.allow_random_backbone = true;
      const auto m = resolve_manifest(val_pairs.empty() ? c.manifest : val_pairs, val_lol.empty() ? c.lol_root : val_lol);
      std::vector<PairPaths> pairs;
      for (const auto& [low, high] : m.pairs) {
        if (!val_split.empty() && low != val_split) continue;
        const auto& l = m.split(low);
        const auto& h = m.split(high);
        if (l.size() != h.size()) throw InvalidArgument("pair " + low + "/" + high + " differs in length");
        for (std::size_t i = 0; i < l.size(); ++i) pairs.push_back({l[i].filename().string(), l[i], h[i]});
      }
      if (pairs.empty()) throw InvalidArgument("manifest has no paired splits; hep-validate needs low/ground-truth pairs");
      const auto backbone = train::resolve_backbone(c.train);
      const SimilarityMode mode = parse_similarity_mode(c.mode);
      const HepValidation v = hep_validate(pairs, *backbone, c.layer, mode);
      Path stem = val_out;
      if (stem.extension() == ".json" || stem.extension() == ".png") stem.replace_extension();
      if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
      {
        std::ofstream js(stem.string() + ".json");
        js << validation_json(v, c.layer, mode, c.threshold) << "\n";
        if (!js) throw Error("cannot write " + stem.string() + ".json");
      }
      save_image(render_similarity_histogram(v, c.bins), stem.string() + ".png");
      char line[200];
      std::snprintf(line, sizeof(line), "pairs %zu  mean cosine HE %.4f raw %.4f  fraction > %.2f: HE %.3f raw %.3f\n",
                    pairs.size(), v.equalized.mean(), v.raw.mean(), c.threshold, v.equalized.fraction_above(c.threshold),
                    v.raw.fraction_above(c.threshold));
      out << line;
      if (!backbone->pretrained()) out << "note: random backbone; similarities say nothing about the prior\n";
    };
  });

  // ablate
  std::string study, abl_manifest, abl_lol, abl_out, abl_lum;
  long long abl_steps = -2, abl_ndm_steps = -2;
  bool abl_random = false;
  int abl_threads = 0;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate an ablation grid");
  ablate->add_option("--study", study, "prior, lum-loss, ndm-loss or denoiser")->required();
  ablate->add_option("--manifest", abl_manifest, "dataset manifest");
  ablate->add_option("--lol-root", abl_lol, "LOL directory");
  ablate->add_option("--out", abl_out, "output directory")->required();
  ablate->add_option("--steps", abl_steps, "LUM training steps per variant (default: full schedule)");
  ablate->add_option("--ndm-steps", abl_ndm_steps, "NDM training steps per variant (default: full schedule)");
  ablate->add_option("--lum", abl_lum, "reuse this LUM checkpoint for the NDM studies");
  ablate->add_option("--threads", abl_threads, "evaluation threads");
  ablate->add_flag("--allow-random-backbone", abl_random, "use a seeded random backbone when weights are absent");
  ablate->callback([&] {
    action = [&] {
      const Study s = parse_study(study);
      AppConfig c = load_config(config_path);
      if (!abl_manifest.empty()) c.manifest = abl_manifest;
      if (!abl_lol.empty()) c.lol_root = abl_lol;
      if (abl_random) c.train.allow_random_backbone = true;
      AblationOptions o;
      o.out_dir = abl_out;
      o.lum_steps = abl_steps != -2 ? abl_steps : c.ablate_lum_steps;
      o.ndm_steps = abl_ndm_steps != -2 ? abl_ndm_steps : (abl_steps != -2 ? abl_steps : c.ablate_ndm_steps);
      o.lum_checkpoint = abl_lum;
      o.threads = ablate->count("--threads") ? abl_threads : c.threads;
      std::filesystem::create_directories(o.out_dir);
      const auto m = resolve_manifest(c.manifest, c.lol_root);
      const auto rows = run_ablation(s, c.train, m, o);
      const Path csv = o.out_dir / (std::string("ablation_") + study_name(s) + ".csv");
      write_ablation_csv(csv, rows);
      for (const auto& r : rows) {
        char line[200];
        std::snprintf(line, sizeof(line), "%-10s PSNR %6.2f  SSIM %.3f  NIQE %6.3f   (reported %.2f / %.3f / %.3f)\n",
                      r.variant.c_str(), r.measured.psnr, r.measured.ssim, r.measured.niqe, r.reported.psnr, r.reported.ssim,
                      r.reported.niqe);
        out << line;
      }
      out << "wrote " << csv.string() << "\n";
    };
  });

  // fit-niqe
  std::string fit_in, fit_out;
  int fit_patch = 96;
  double fit_sharp = 0.75;
  auto* fit = app.add_subcommand("fit-niqe", "fit a pristine NIQE model to a directory of clean images");
  fit->add_option("--input", fit_in, "directory of pristine images (at least 50)")->required();
  fit->add_option("--out", fit_out, "model file")->required();
  fit->add_option("--patch", fit_patch, "patch size");
  fit->add_option("--sharpness", fit_sharp, "keep patches above this fraction of the sharpest");
  fit->callback([&] {
    action = [&] {
      std::vector<Image> corpus;
      for (const auto& p : collect_inputs(fit_in)) corpus.push_back(load_image(p));
      metrics::NiqeFitOptions o;
      o.patch_size = fit_patch;
      o.sharpness_threshold = fit_sharp;
      const auto model = metrics::fit_niqe_model(corpus, o);
      model.save(fit_out);
      out << "fitted on " << corpus.size() << " images; corpus hash " << model.corpus_hash << "\n";
    };
  });

  // synth-lol
  std::string syn_out;
  int syn_train = 16, syn_test = 4, syn_h = 192, syn_w = 192;
  std::uint64_t syn_seed = 1;
  auto* synth = app.add_subcommand("synth-lol", "write a procedural low/normal-light dataset in LOL layout");
  synth->add_option("--out", syn_out, "dataset root")->required();
  synth->add_option("--train", syn_train, "training pairs");
  synth->add_option("--test", syn_test, "test pairs");
  synth->add_option("--height", syn_h, "image height");
  synth->add_option("--width", syn_w, "image width");
  synth->add_option("--seed", syn_seed, "generator seed");
  synth->callback([&] {
    action = [&] {
      for (int i = 0; i < syn_train + syn_test; ++i) {
        const auto pair = synthetic::low_light_pair(syn_h, syn_w, syn_seed * 100003 + i);
        const Path dir = Path(syn_out) / (i < syn_train ? "our485" : "eval15");
        std::filesystem::create_directories(dir / "low");
        std::filesystem::create_directories(dir / "high");
        const std::string name = std::to_string(i + 1) + ".png";
        save_image(pair.low, dir / "low" / name);
        save_image(pair.high, dir / "high" / name);
      }
      out << "wrote " << syn_train << " training and " << syn_test << " test pairs to " << syn_out << "\n";
    };
  });

  std::vector<std::string> argv_store{"hep"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (action) action();
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hep::app
