#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "hep/imaging.hpp"

namespace hep::metrics {

constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) on [0,1] images, capped at 100 dB.
double psnr(const Image& a, const Image& b);
// Mean local SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels.
double ssim(const Image& a, const Image& b);

constexpr int kNiqeFeatureDim = 36;
using NiqeFeatures = std::array<double, kNiqeFeatureDim>;

struct NiqeModel {
  int patch_size = 96;
  int feature_dim = kNiqeFeatureDim;
  std::string corpus_hash;
  std::vector<double> mu;   // feature_dim
  std::vector<double> cov;  // feature_dim^2, row major

  // One JSON header line, then float64 mu and cov. Throws CorruptFileError.
  static NiqeModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// Shipped pristine model: $HEP_NIQE_MODEL, else the build tree's data dir.
std::filesystem::path default_niqe_model_path();
const NiqeModel& default_niqe_model();

// Luma in [0,255], rounded: round(255 * (0.299 R + 0.587 G + 0.114 B)).
std::vector<double> niqe_gray(const Image& img);

// Per-patch features of a [0,255] gray image, two scales (18 + 18), one
// row per whole patch. Optional per-patch sharpness (mean local deviation
// at the first scale).
std::vector<NiqeFeatures> niqe_patch_features(const std::vector<double>& gray, int h, int w,
                                              int patch, std::vector<double>* sharpness = nullptr);

double niqe(const Image& img, const NiqeModel& model = default_niqe_model());
double niqe_from_gray(const std::vector<double>& gray, int h, int w, const NiqeModel& model);

struct NiqeFitOptions {
  int patch_size = 96;
  double sharpness_threshold = 0.75;  // fraction of the per-image peak
  double ridge = 1e-6;
  std::size_t min_images = 50;
};

NiqeModel fit_niqe_model(const std::vector<Image>& corpus, const NiqeFitOptions& opt = {});

// Bicubic resize by 1/2 with antialiasing and symmetric borders, matching
// the usual reference resampler. Exposed for tests.
std::vector<double> resize_half_bicubic(const std::vector<double>& img, int h, int w);

}  // namespace hep::metrics
