#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hep/backbone.hpp"
#include "hep/imaging.hpp"

namespace hep {

enum class SimilarityMode {
  Flatten,      // whole map as one vector
  ChannelMean,  // per-channel spatial means
  Gram,         // C x C Gram matrix normalized by H*W
};

SimilarityMode parse_similarity_mode(const std::string& s);
const char* similarity_mode_name(SimilarityMode m);

// dot(a, b) / (|a| |b|) over the chosen descriptor; 0 when either norm is 0.
double cosine_similarity(const FeatureMap& a, const FeatureMap& b,
                         SimilarityMode mode = SimilarityMode::Flatten);

struct SimilarityReport {
  std::string label;
  std::vector<std::string> names;
  std::vector<double> per_image_cosine;

  double fraction_above(double threshold) const;
  double mean() const;
};

struct ImagePair {
  std::string name;
  Image low;
  Image ground_truth;
};

struct HepValidation {
  SimilarityReport equalized;  // cosine(F(HE(low)), F(gt))
  SimilarityReport raw;        // cosine(F(low), F(gt))
};

HepValidation hep_validate(const std::vector<ImagePair>& pairs, const Backbone& backbone,
                           const std::string& layer = "conv4_1",
                           SimilarityMode mode = SimilarityMode::Flatten);

// Lazily loaded variant for large sets: only one pair is resident at a time.
struct PairPaths {
  std::string name;
  std::filesystem::path low;
  std::filesystem::path ground_truth;
};
HepValidation hep_validate(const std::vector<PairPaths>& pairs, const Backbone& backbone,
                           const std::string& layer = "conv4_1",
                           SimilarityMode mode = SimilarityMode::Flatten);

// JSON with both series and summary statistics.
std::string validation_json(const HepValidation& v, const std::string& layer, SimilarityMode mode,
                            double threshold = 0.8);

// Overlaid two-series histogram of cosines over [0, 1] (values below 0 land
// in the first bin): raw in green, equalized in blue.
Image render_similarity_histogram(const HepValidation& v, int bins = 20, int width = 640,
                                  int height = 420);

}  // namespace hep
