#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "hep/app.hpp"
#include "hep/error.hpp"
#include "hep/image_io.hpp"

namespace hep::app {
namespace {

template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int k = 0; k < t; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double finite_mean(const std::vector<EvalRow>& rows, double EvalRow::*field) {
  double s = 0;
  int n = 0;
  for (const auto& r : rows) {
    if (std::isfinite(r.*field)) {
      s += r.*field;
      ++n;
    }
  }
  return n ? s / n : kNaN;
}

std::map<std::string, train::Path> images_by_stem(const train::Path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("not a directory: " + dir.string());
  std::map<std::string, train::Path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out[e.path().stem().string()] = e.path();
  }
  return out;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

Image enhance_image(const lum::LumNetwork& lum, const ndm::NdmNetworks* ndm, const Image& low) {
  Image r = lum::decompose(lum, low).reflectance;
  if (ndm) r = ndm::denoise(*ndm, r);
  return r;
}

EvalSummary evaluate_images(const std::vector<std::string>& names, const std::vector<Image>& pred,
                            const std::vector<Image>* gt, const metrics::NiqeModel& model, int threads) {
  if (gt && gt->size() != pred.size()) throw InvalidArgument("prediction and reference counts differ");
  EvalSummary s;
  s.rows.resize(pred.size());
  parallel_for(pred.size(), threads, [&](std::size_t i) {
    EvalRow& r = s.rows[i];
    r.name = names[i];
    if (gt) {
      r.psnr = metrics::psnr(pred[i], (*gt)[i]);
      r.ssim = metrics::ssim(pred[i], (*gt)[i]);
    }
    try {
      r.niqe = metrics::niqe(pred[i], model);
    } catch (const InvalidArgument&) {
      r.niqe = kNaN;  // too small for two patches
    }
  });
  s.mean.name = "mean";
  s.mean.psnr = finite_mean(s.rows, &EvalRow::psnr);
  s.mean.ssim = finite_mean(s.rows, &EvalRow::ssim);
  s.mean.niqe = finite_mean(s.rows, &EvalRow::niqe);
  return s;
}

EvalSummary evaluate_dirs(const train::Path& pred_dir, const train::Path& gt_dir, const metrics::NiqeModel& model,
                          int threads) {
  const auto pred = images_by_stem(pred_dir);
  if (pred.empty()) throw InvalidArgument("no images in " + pred_dir.string());
  std::map<std::string, train::Path> gt;
  if (!gt_dir.empty()) {
    gt = images_by_stem(gt_dir);
    std::vector<std::string> missing;
    for (const auto& [stem, p] : pred) {
      if (!gt.count(stem)) missing.push_back("no reference for " + p.filename().string());
    }
    for (const auto& [stem, p] : gt) {
      if (!pred.count(stem)) missing.push_back("no prediction for " + p.filename().string());
    }
    if (!missing.empty()) {
      std::string msg = "filename mismatch between " + pred_dir.string() + " and " + gt_dir.string() + ":";
      for (const auto& m : missing) msg += "\n  " + m;
      throw InvalidArgument(msg);
    }
  }
  std::vector<std::string> names;
  std::vector<Image> p_img(pred.size()), g_img(gt.empty() ? 0 : pred.size());
  for (const auto& [stem, p] : pred) names.push_back(p.filename().string());
  std::vector<train::Path> ppaths, gpaths;
  for (const auto& [stem, p] : pred) {
    ppaths.push_back(p);
    if (!gt.empty()) gpaths.push_back(gt.at(stem));
  }
  parallel_for(ppaths.size(), threads, [&](std::size_t i) {
    p_img[i] = load_image(ppaths[i]);
    if (!gpaths.empty()) g_img[i] = load_image(gpaths[i]);
  });
  return evaluate_images(names, p_img, gt.empty() ? nullptr : &g_img, model, threads);
}

void write_eval_csv(const train::Path& file, const EvalSummary& s, bool with_reference) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << (with_reference ? "image,psnr,ssim,niqe\n" : "image,niqe\n");
  auto row = [&](const EvalRow& r) {
    if (with_reference) {
      out << r.name << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << ',' << fmt(r.niqe) << '\n';
    } else {
      out << r.name << ',' << fmt(r.niqe) << '\n';
    }
  };
  for (const auto& r : s.rows) row(r);
  row(s.mean);
  if (!out) throw Error("cannot write " + file.string());
}

Study parse_study(const std::string& s) {
  if (s == "prior") return Study::Prior;
  if (s == "lum-loss") return Study::LumLoss;
  if (s == "ndm-loss") return Study::NdmLoss;
  if (s == "denoiser") return Study::Denoiser;
  throw InvalidArgument("unknown study '" + s + "' (prior, lum-loss, ndm-loss, denoiser)");
}

const char* study_name(Study s) {
  switch (s) {
    case Study::Prior: return "prior";
    case Study::LumLoss: return "lum-loss";
    case Study::NdmLoss: return "ndm-loss";
    case Study::Denoiser: return "denoiser";
  }
  return "?";
}

std::vector<AblationVariant> ablation_variants(Study s, const train::TrainConfig& base) {
  std::vector<AblationVariant> v;
  auto lum_variant = [&](std::string name, ReportedRow reported, auto edit) {
    AblationVariant a{std::move(name), base, VariantRun::Lum, reported};
    a.config.stage = train::Stage::Lum;
    edit(a.config.lum.loss);
    v.push_back(std::move(a));
  };
  auto ndm_variant = [&](std::string name, ReportedRow reported, auto edit) {
    AblationVariant a{std::move(name), base, VariantRun::Ndm, reported};
    a.config.stage = train::Stage::Ndm;
    edit(a.config.ndm.loss);
    v.push_back(std::move(a));
  };
  using lum::PriorKind;
  switch (s) {
    case Study::Prior:
      for (auto [name, kind, reported] : {std::tuple{"L1", PriorKind::L1, ReportedRow{17.51, 0.687, 6.343}},
                                       std::tuple{"MSE", PriorKind::Mse, ReportedRow{17.84, 0.698, 6.649}},
                                       std::tuple{"SSIM", PriorKind::Ssim, ReportedRow{17.94, 0.654, 4.869}},
                                       std::tuple{"MAXENT", PriorKind::MaxEntropy, ReportedRow{18.29, 0.690, 7.294}},
                                       std::tuple{"HEP", PriorKind::Hep, ReportedRow{19.52, 0.701, 5.480}}}) {
        lum_variant(name, reported, [k = kind](lum::LumLossConfig& c) {
          c.prior = k;
          c.use_prior = true;
        });
      }
      break;
    case Study::LumLoss:
      lum_variant("w/o hep", {9.00, 0.540, 4.539}, [](lum::LumLossConfig& c) { c.use_prior = false; });
      lum_variant("w/o recon", {17.06, 0.675, 6.782}, [](lum::LumLossConfig& c) { c.use_recon = false; });
      lum_variant("w/o is", {17.93, 0.621, 6.350}, [](lum::LumLossConfig& c) { c.use_smooth = false; });
      lum_variant("full", {19.52, 0.701, 5.480}, [](lum::LumLossConfig&) {});
      break;
    case Study::NdmLoss:
      ndm_variant("w/o adv", {19.66, 0.705, 5.299}, [](ndm::NdmLossConfig& c) { c.use_adv = false; });
      ndm_variant("w/o kl", {19.68, 0.778, 4.394}, [](ndm::NdmLossConfig& c) { c.use_kl = false; });
      ndm_variant("w/o per", {19.83, 0.781, 4.389}, [](ndm::NdmLossConfig& c) { c.use_per = false; });
      ndm_variant("w/o cc", {19.91, 0.780, 3.752}, [](ndm::NdmLossConfig& c) { c.use_cc = false; });
      ndm_variant("w/o bc", {19.92, 0.785, 4.143}, [](ndm::NdmLossConfig& c) { c.use_bc = false; });
      ndm_variant("w/o recon", {19.96, 0.783, 4.234}, [](ndm::NdmLossConfig& c) { c.use_rec = false; });
      ndm_variant("full", {20.23, 0.790, 3.780}, [](ndm::NdmLossConfig&) {});
      break;
    case Study::Denoiser:
      v.push_back({"LUM", base, VariantRun::BaseLum, {19.52, 0.701, 5.480}});
      ndm_variant("LUM+NDM", {20.23, 0.790, 3.780}, [](ndm::NdmLossConfig&) {});
      break;
  }
  return v;
}

std::vector<AblationRow> run_ablation(Study s, const train::TrainConfig& base, const train::DatasetManifest& m,
                                      const AblationOptions& opt) {
  m.validate();
  if (opt.out_dir.empty()) throw InvalidArgument("ablation needs an output directory");
  const auto variants = ablation_variants(s, base);
  const train::ImageList test_low(m.split("test_low")), test_high(m.split("test_high"));
  const auto forbidden = m.test_files();

  bool lum_backbone = false, ndm_backbone = false;
  for (const auto& v : variants) {
    const auto& lc = v.config.lum.loss;
    lum_backbone |= v.run == VariantRun::Lum && lc.use_prior && lc.prior == lum::PriorKind::Hep;
    ndm_backbone |= v.run == VariantRun::Ndm && v.config.ndm.loss.use_per;
  }
  const bool needs_base = s == Study::NdmLoss || s == Study::Denoiser;
  if (needs_base && opt.lum_checkpoint.empty()) lum_backbone |= base.lum.loss.prior == lum::PriorKind::Hep;
  std::shared_ptr<const Backbone> backbone;
  if (lum_backbone || ndm_backbone) backbone = train::resolve_backbone(base);

  auto evaluate = [&](const lum::LumNetwork& lum_net, const ndm::NdmNetworks* ndm_net) {
    std::vector<std::string> names;
    std::vector<Image> pred, gt;
    for (std::size_t i = 0; i < test_low.size(); ++i) {
      names.push_back(test_low.name(i));
      pred.push_back(enhance_image(lum_net, ndm_net, *test_low.get(i)));
      gt.push_back(*test_high.get(i));
    }
    return evaluate_images(names, pred, &gt, metrics::default_niqe_model(), opt.threads).mean;
  };

  std::unique_ptr<lum::LumNetwork> base_lum;
  train::ImageList noisy;
  const train::ImageList train_low(m.split("train_low"));
  if (needs_base) {
    train::Path ckpt = opt.lum_checkpoint;
    if (ckpt.empty()) {
      train::RunOptions ro;
      ro.out_dir = opt.out_dir / "lum_base";
      ro.max_steps = opt.lum_steps;
      ro.forbidden = forbidden;
      ckpt = train::train_lum(base, train_low, ro, backbone).checkpoint;
    }
    base_lum = train::load_lum_network(ckpt);
    noisy = train::ImageList(
        train::precompute_reflectances(*base_lum, m.split("unpaired_noisy"), opt.out_dir / "reflectance"));
  }

  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row{v.name, {}, v.reported, 0};
    std::string dir = v.name;
    std::replace(dir.begin(), dir.end(), '/', '_');
    std::replace(dir.begin(), dir.end(), ' ', '_');
    train::RunOptions ro;
    ro.out_dir = opt.out_dir / dir;
    ro.forbidden = forbidden;
    switch (v.run) {
      case VariantRun::Lum: {
        ro.max_steps = opt.lum_steps;
        const auto r = train::train_lum(v.config, train_low, ro, backbone);
        row.steps = r.steps;
        row.measured = evaluate(*train::load_lum_network(r.checkpoint), nullptr);
        break;
      }
      case VariantRun::BaseLum:
        row.measured = evaluate(*base_lum, nullptr);
        break;
      case VariantRun::Ndm: {
        ro.max_steps = opt.ndm_steps;
        const auto r = train::train_ndm(v.config, noisy, train::ImageList(m.split("unpaired_clean")), ro, backbone);
        row.steps = r.steps;
        row.measured = evaluate(*base_lum, train::load_ndm_networks(r.checkpoint).get());
        break;
      }
    }
    row.measured.name = v.name;
    rows.push_back(row);
    write_ablation_csv(opt.out_dir / (std::string("ablation_") + study_name(s) + ".csv"), rows);
  }
  return rows;
}

void write_ablation_csv(const train::Path& file, const std::vector<AblationRow>& rows) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << "variant,psnr,ssim,niqe,reported_psnr,reported_ssim,reported_niqe,steps\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << fmt(r.measured.psnr) << ',' << fmt(r.measured.ssim) << ',' << fmt(r.measured.niqe)
        << ',' << fmt(r.reported.psnr) << ',' << fmt(r.reported.ssim) << ',' << fmt(r.reported.niqe) << ',' << r.steps
        << '\n';
  }
  if (!out) throw Error("cannot write " + file.string());
}

}  // namespace hep::app
