#include "hep/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "hep/error.hpp"
#include "hep/image_io.hpp"

namespace hep {
namespace {

std::vector<double> descriptor(const FeatureMap& f, SimilarityMode mode) {
  const Shape s = f.data.shape();
  const std::span<const double> v = f.data.values();
  switch (mode) {
    case SimilarityMode::Flatten:
      return {v.begin(), v.end()};
    case SimilarityMode::ChannelMean: {
      std::vector<double> d(static_cast<std::size_t>(s.n) * s.c, 0.0);
      for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
          const double* p = f.data.plane(n, c);
          double acc = 0.0;
          for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
          d[static_cast<std::size_t>(n) * s.c + c] = acc / static_cast<double>(s.plane());
        }
      }
      return d;
    }
    case SimilarityMode::Gram: {
      std::vector<double> d(static_cast<std::size_t>(s.n) * s.c * s.c, 0.0);
      for (int n = 0; n < s.n; ++n) {
        for (int a = 0; a < s.c; ++a) {
          const double* pa = f.data.plane(n, a);
          for (int b = a; b < s.c; ++b) {
            const double* pb = f.data.plane(n, b);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) acc += pa[i] * pb[i];
            acc /= static_cast<double>(s.plane());
            const std::size_t base = static_cast<std::size_t>(n) * s.c * s.c;
            d[base + static_cast<std::size_t>(a) * s.c + b] = acc;
            d[base + static_cast<std::size_t>(b) * s.c + a] = acc;
          }
        }
      }
      return d;
    }
  }
  return {};
}

void push_pair(HepValidation& out, const std::string& name, const Image& low, const Image& gt,
               const Backbone& backbone, const std::string& layer, SimilarityMode mode) {
  if (low.height() != gt.height() || low.width() != gt.width() || low.channels() != gt.channels()) {
    throw ShapeMismatch("pair '" + name + "': low and ground truth differ in size");
  }
  const FeatureMap f_gt = backbone.extract(gt, layer);
  const FeatureMap f_low = backbone.extract(low, layer);
  const FeatureMap f_he = backbone.extract(hist_equalize(low), layer);
  out.equalized.names.push_back(name);
  out.equalized.per_image_cosine.push_back(cosine_similarity(f_he, f_gt, mode));
  out.raw.names.push_back(name);
  out.raw.per_image_cosine.push_back(cosine_similarity(f_low, f_gt, mode));
}

HepValidation empty_validation() {
  HepValidation v;
  v.equalized.label = "equalized_vs_gt";
  v.raw.label = "low_vs_gt";
  return v;
}

// 5x7 glyphs, one byte per row, low 5 bits used (MSB = leftmost column).
struct Glyph {
  char c;
  unsigned char rows[7];
};
constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
};

class Canvas {
 public:
  Canvas(int w, int h) : img_(h, w, 3, 1.0) {}

  void blend(int x, int y, const double rgb[3], double alpha) {
    if (x < 0 || y < 0 || x >= img_.width() || y >= img_.height()) return;
    for (int c = 0; c < 3; ++c) img_.at(y, x, c) = (1.0 - alpha) * img_.at(y, x, c) + alpha * rgb[c];
  }
  void rect(int x0, int y0, int x1, int y1, const double rgb[3], double alpha = 1.0) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) blend(x, y, rgb, alpha);
  }
  void text(int x, int y, const std::string& s, const double rgb[3]) {
    for (char ch : s) {
      for (const auto& g : kFont) {
        if (g.c != ch) continue;
        for (int r = 0; r < 7; ++r)
          for (int col = 0; col < 5; ++col)
            if (g.rows[r] & (0x10 >> col)) blend(x + col, y + r, rgb, 1.0);
      }
      x += 6;
    }
  }
  Image take() { return std::move(img_); }

 private:
  Image img_;
};

std::string tick_label(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

SimilarityMode parse_similarity_mode(const std::string& s) {
  if (s == "flatten") return SimilarityMode::Flatten;
  if (s == "channel-mean") return SimilarityMode::ChannelMean;
  if (s == "gram") return SimilarityMode::Gram;
  throw InvalidArgument("unknown similarity mode '" + s + "' (flatten, channel-mean, gram)");
}

const char* similarity_mode_name(SimilarityMode m) {
  switch (m) {
    case SimilarityMode::Flatten: return "flatten";
    case SimilarityMode::ChannelMean: return "channel-mean";
    case SimilarityMode::Gram: return "gram";
  }
  return "?";
}

double cosine_similarity(const FeatureMap& a, const FeatureMap& b, SimilarityMode mode) {
  if (!(a.data.shape() == b.data.shape())) {
    throw ShapeMismatch("cosine_similarity: " + a.data.shape().str() + " vs " + b.data.shape().str());
  }
  if (!a.layer.empty() && !b.layer.empty() && a.layer != b.layer) {
    throw ShapeMismatch("cosine_similarity: layers " + a.layer + " and " + b.layer + " differ");
  }
  const std::vector<double> da = descriptor(a, mode);
  const std::vector<double> db = descriptor(b, mode);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    dot += da[i] * db[i];
    na += da[i] * da[i];
    nb += db[i] * db[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double SimilarityReport::fraction_above(double threshold) const {
  if (per_image_cosine.empty()) return 0.0;
  const auto n = std::count_if(per_image_cosine.begin(), per_image_cosine.end(),
                               [&](double v) { return v > threshold; });
  return static_cast<double>(n) / static_cast<double>(per_image_cosine.size());
}

double SimilarityReport::mean() const {
  if (per_image_cosine.empty()) return 0.0;
  double s = 0.0;
  for (double v : per_image_cosine) s += v;
  return s / static_cast<double>(per_image_cosine.size());
}

HepValidation hep_validate(const std::vector<ImagePair>& pairs, const Backbone& backbone,
                           const std::string& layer, SimilarityMode mode) {
  if (pairs.empty()) throw InvalidArgument("hep_validate: empty dataset");
  HepValidation out = empty_validation();
  for (const auto& p : pairs) push_pair(out, p.name, p.low, p.ground_truth, backbone, layer, mode);
  return out;
}

HepValidation hep_validate(const std::vector<PairPaths>& pairs, const Backbone& backbone,
                           const std::string& layer, SimilarityMode mode) {
  if (pairs.empty()) throw InvalidArgument("hep_validate: empty dataset");
  HepValidation out = empty_validation();
  for (const auto& p : pairs) {
    push_pair(out, p.name, load_image(p.low), load_image(p.ground_truth), backbone, layer, mode);
  }
  return out;
}

std::string validation_json(const HepValidation& v, const std::string& layer, SimilarityMode mode,
                            double threshold) {
  nlohmann::json j;
  j["layer"] = layer;
  j["mode"] = similarity_mode_name(mode);
  j["threshold"] = threshold;
  for (const SimilarityReport* r : {&v.equalized, &v.raw}) {
    nlohmann::json s;
    s["mean"] = r->mean();
    s["fraction_above"] = r->fraction_above(threshold);
    s["count"] = r->per_image_cosine.size();
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < r->per_image_cosine.size(); ++i) {
      items.push_back({{"name", r->names[i]}, {"cosine", r->per_image_cosine[i]}});
    }
    s["per_image"] = std::move(items);
    j[r->label] = std::move(s);
  }
  return j.dump(2);
}

Image render_similarity_histogram(const HepValidation& v, int bins, int width, int height) {
  if (bins < 1 || width < 200 || height < 150) throw InvalidArgument("histogram plot too small");
  auto count = [&](const SimilarityReport& r) {
    std::vector<int> h(bins, 0);
    for (double c : r.per_image_cosine) {
      const int b = std::clamp(static_cast<int>(std::floor(c * bins)), 0, bins - 1);
      ++h[b];
    }
    return h;
  };
  const std::vector<int> raw = count(v.raw);
  const std::vector<int> he = count(v.equalized);
  int peak = 1;
  for (int b = 0; b < bins; ++b) peak = std::max({peak, raw[b], he[b]});

  const double black[3] = {0, 0, 0};
  const double green[3] = {0.17, 0.63, 0.17};
  const double blue[3] = {0.12, 0.47, 0.71};
  const double grid[3] = {0.85, 0.85, 0.85};

  Canvas cv(width, height);
  const int left = 50, right = width - 20, top = 30, bottom = height - 40;
  const double bin_w = static_cast<double>(right - left) / bins;
  for (int t = 1; t <= 4; ++t) {
    const int y = bottom - (bottom - top) * t / 4;
    cv.rect(left, y, right, y, grid);
    cv.text(left - 8 - 6 * static_cast<int>(std::to_string(peak * t / 4).size()), y - 3,
            std::to_string(peak * t / 4), black);
  }
  auto draw = [&](const std::vector<int>& h, const double rgb[3]) {
    for (int b = 0; b < bins; ++b) {
      if (h[b] == 0) continue;
      const int x0 = left + static_cast<int>(b * bin_w) + 1;
      const int x1 = left + static_cast<int>((b + 1) * bin_w) - 1;
      const int y = bottom - static_cast<int>(std::lround(static_cast<double>(h[b]) / peak * (bottom - top)));
      cv.rect(x0, y, x1, bottom - 1, rgb, 0.6);
    }
  };
  draw(raw, green);
  draw(he, blue);

  cv.rect(left, bottom, right, bottom, black);
  cv.rect(left, top, left, bottom, black);
  for (int t = 0; t <= 10; ++t) {
    const int x = left + (right - left) * t / 10;
    cv.rect(x, bottom, x, bottom + 4, black);
    if (t % 2 == 0) cv.text(x - 9, bottom + 8, tick_label(t / 10.0), black);
  }
  cv.rect(right - 110, top, right - 98, top + 8, green, 0.6);
  cv.text(right - 92, top + 1, "LOW", black);
  cv.rect(right - 50, top, right - 38, top + 8, blue, 0.6);
  cv.text(right - 32, top + 1, "HE", black);
  return cv.take();
}

}  // namespace hep
