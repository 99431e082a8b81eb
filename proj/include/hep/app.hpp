#pragma once

// The `hep` command line and the pieces of it that tests drive directly:
// the enhancement pipeline, directory evaluation and the ablation runner.

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "hep/metrics.hpp"
#include "hep/train.hpp"

namespace hep::app {

// Parses and runs one subcommand; returns the process exit code
// (0 only when every requested artifact was written).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// LUM reflectance, then the NDM clean path when `ndm` is given.
Image enhance_image(const lum::LumNetwork& lum, const ndm::NdmNetworks* ndm, const Image& low);

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EvalRow {
  std::string name;
  double psnr = kNaN;
  double ssim = kNaN;
  double niqe = kNaN;  // NaN when the image has fewer than two NIQE patches
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  EvalRow mean;  // over finite entries
};

// Predictions are matched to references by file stem; any unmatched name
// raises InvalidArgument listing them. An empty gt_dir means no reference.
EvalSummary evaluate_dirs(const train::Path& pred_dir, const train::Path& gt_dir,
                          const metrics::NiqeModel& model, int threads = 1);
EvalSummary evaluate_images(const std::vector<std::string>& names, const std::vector<Image>& pred,
                            const std::vector<Image>* gt, const metrics::NiqeModel& model, int threads = 1);
void write_eval_csv(const train::Path& file, const EvalSummary& s, bool with_reference);

enum class Study { Prior, LumLoss, NdmLoss, Denoiser };
Study parse_study(const std::string& s);
const char* study_name(Study s);

struct ReportedRow {
  double psnr = kNaN, ssim = kNaN, niqe = kNaN;
};

enum class VariantRun {
  Lum,      // train LUM with this config, evaluate its reflectance
  BaseLum,  // evaluate the shared base LUM as is
  Ndm,      // train NDM on the base LUM's reflectances, evaluate LUM + NDM
};

struct AblationVariant {
  std::string name;
  train::TrainConfig config;
  VariantRun run = VariantRun::Lum;
  ReportedRow reported;
};

// Table-shaped variant grid derived from `base`.
std::vector<AblationVariant> ablation_variants(Study s, const train::TrainConfig& base);

struct AblationOptions {
  train::Path out_dir;
  long long lum_steps = -1;  // per-variant training length; -1: full schedule
  long long ndm_steps = -1;
  train::Path lum_checkpoint;  // reuse a trained LUM for the NDM studies
  int threads = 1;
};

struct AblationRow {
  std::string variant;
  EvalRow measured;
  ReportedRow reported;
  long long steps = 0;
};

// Trains each variant on the manifest's training splits and evaluates on
// test_low / test_high.
std::vector<AblationRow> run_ablation(Study s, const train::TrainConfig& base, const train::DatasetManifest& m,
                                      const AblationOptions& opt);
void write_ablation_csv(const train::Path& file, const std::vector<AblationRow>& rows);

}  // namespace hep::app
