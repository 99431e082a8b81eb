#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "hep/error.hpp"
#include "hep/metrics.hpp"
#include "json.hpp"

#ifndef HEP_DEFAULT_NIQE_MODEL
#define HEP_DEFAULT_NIQE_MODEL ""
#endif

namespace hep::metrics {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Aggd {
  double alpha;
  double beta_l;
  double beta_r;
};

// Shape grid 0.2:0.001:10 and the matching generalized-Gaussian ratio.
struct GammaTable {
  std::vector<double> shape;
  std::vector<double> ratio;
  GammaTable() {
    for (int i = 0; i <= 9800; ++i) {
      const double g = 0.2 + i * 0.001;
      shape.push_back(g);
      ratio.push_back(std::pow(std::tgamma(2.0 / g), 2) / (std::tgamma(1.0 / g) * std::tgamma(3.0 / g)));
    }
  }
};

const GammaTable& gamma_table() {
  static const GammaTable t;
  return t;
}

Aggd estimate_aggd(const std::vector<double>& v) {
  double sl = 0, sr = 0, sabs = 0, ssq = 0;
  std::size_t nl = 0, nr = 0;
  for (double x : v) {
    if (x < 0) {
      sl += x * x;
      ++nl;
    } else if (x > 0) {
      sr += x * x;
      ++nr;
    }
    sabs += std::abs(x);
    ssq += x * x;
  }
  const double n = static_cast<double>(v.size());
  const double left = nl ? std::sqrt(sl / nl) : kNaN;
  const double right = nr ? std::sqrt(sr / nr) : kNaN;
  const double gh = left / right;
  const double rhat = (sabs / n) * (sabs / n) / (ssq / n);
  const double rnorm = rhat * (gh * gh * gh + 1) * (gh + 1) / ((gh * gh + 1) * (gh * gh + 1));
  const GammaTable& t = gamma_table();
  std::size_t pos = 0;
  // An undefined ratio selects the first grid point, as argmin over NaNs does.
  if (!std::isnan(rnorm)) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.ratio.size(); ++i) {
      const double d = (t.ratio[i] - rnorm) * (t.ratio[i] - rnorm);
      if (d < best) {
        best = d;
        pos = i;
      }
    }
  }
  const double a = t.shape[pos];
  const double k = std::sqrt(std::tgamma(1.0 / a) / std::tgamma(3.0 / a));
  return {a, left * k, right * k};
}

void block_features(const std::vector<double>& block, int bh, int bw, double* out) {
  const Aggd base = estimate_aggd(block);
  out[0] = base.alpha;
  out[1] = (base.beta_l + base.beta_r) / 2;
  const int shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  std::vector<double> prod(block.size());
  for (int s = 0; s < 4; ++s) {
    const int dy = shifts[s][0], dx = shifts[s][1];
    // Circular shift: shifted(y, x) = block((y - dy) mod bh, (x - dx) mod bw).
    for (int y = 0; y < bh; ++y) {
      const int sy = ((y - dy) % bh + bh) % bh;
      for (int x = 0; x < bw; ++x) {
        const int sx = ((x - dx) % bw + bw) % bw;
        prod[y * bw + x] = block[y * bw + x] * block[sy * bw + sx];
      }
    }
    const Aggd p = estimate_aggd(prod);
    out[2 + 4 * s] = p.alpha;
    out[3 + 4 * s] = (p.beta_r - p.beta_l) * std::tgamma(2.0 / p.alpha) / std::tgamma(1.0 / p.alpha);
    out[4 + 4 * s] = p.beta_l;
    out[5 + 4 * s] = p.beta_r;
  }
}

// 7x7 Gaussian (sigma 7/6), edge-replicating borders.
void local_stats(const std::vector<double>& img, int h, int w, std::vector<double>& normalized,
                 std::vector<double>& sigma) {
  double taps[7];
  double total = 0;
  for (int i = 0; i < 7; ++i) {
    const double d = i - 3;
    taps[i] = std::exp(-d * d / (2.0 * (7.0 / 6.0) * (7.0 / 6.0)));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = -3; k <= 3; ++k) acc += taps[k + 3] * src[y * w + std::clamp(x + k, 0, w - 1)];
        tmp[y * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = -3; k <= 3; ++k) acc += taps[k + 3] * tmp[std::clamp(y + k, 0, h - 1) * w + x];
        out[y * w + x] = acc;
      }
    return out;
  };
  std::vector<double> sq(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) sq[i] = img[i] * img[i];
  const std::vector<double> mu = filter(img);
  const std::vector<double> mu2 = filter(sq);
  normalized.resize(img.size());
  sigma.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    sigma[i] = std::sqrt(std::abs(mu2[i] - mu[i] * mu[i]));
    normalized[i] = (img[i] - mu[i]) / (sigma[i] + 1.0);
  }
}

double cubic(double x) {
  const double a = std::abs(x), a2 = a * a, a3 = a2 * a;
  if (a <= 1) return 1.5 * a3 - 2.5 * a2 + 1;
  if (a <= 2) return -0.5 * a3 + 2.5 * a2 - 4 * a + 2;
  return 0.0;
}

struct Taps {
  std::vector<int> index;  // 0-based, already reflected
  std::vector<double> weight;
};

std::vector<Taps> half_taps(int in) {
  const int out = (in + 1) / 2;
  const double scale = 0.5, width = 4.0 / scale;
  const int p = static_cast<int>(std::ceil(width)) + 2;
  std::vector<Taps> taps(out);
  for (int i = 1; i <= out; ++i) {
    const double u = i / scale + 0.5 * (1 - 1 / scale);
    const int left = static_cast<int>(std::floor(u - width / 2));
    double total = 0;
    Taps& t = taps[i - 1];
    for (int k = 0; k < p; ++k) {
      const int j = left + k;  // 1-based input coordinate
      const double wgt = scale * cubic((u - j) * scale);
      int src = j;
      if (src < 1) src = 1 - src;
      if (src > in) src = 2 * in + 1 - src;
      src = std::clamp(src, 1, in);
      t.index.push_back(src - 1);
      t.weight.push_back(wgt);
      total += wgt;
    }
    for (double& v : t.weight) v /= total;
  }
  return taps;
}

std::uint64_t fnv(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

struct Gaussian {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
};

// Column NaN-mean over all rows; covariance (N - 1) over rows without NaN.
Gaussian fit_gaussian(const std::vector<NiqeFeatures>& rows) {
  const int d = kNiqeFeatureDim;
  Gaussian g{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (int k = 0; k < d; ++k) {
    double s = 0;
    int n = 0;
    for (const auto& r : rows) {
      if (!std::isnan(r[k])) {
        s += r[k];
        ++n;
      }
    }
    g.mu[k] = n ? s / n : kNaN;
  }
  std::vector<const NiqeFeatures*> clean;
  for (const auto& r : rows) {
    bool ok = true;
    for (double v : r) ok &= !std::isnan(v);
    if (ok) clean.push_back(&r);
  }
  if (clean.size() < 2) return g;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  for (const auto* r : clean)
    for (int k = 0; k < d; ++k) m[k] += (*r)[k];
  m /= static_cast<double>(clean.size());
  for (const auto* r : clean) {
    Eigen::VectorXd c(d);
    for (int k = 0; k < d; ++k) c[k] = (*r)[k] - m[k];
    g.cov += c * c.transpose();
  }
  g.cov /= static_cast<double>(clean.size() - 1);
  return g;
}

Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = 1e-15 * ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv(ev.size());
  for (int i = 0; i < ev.size(); ++i) inv[i] = std::abs(ev[i]) > cutoff ? 1.0 / ev[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<double> resize_half_bicubic(const std::vector<double>& img, int h, int w) {
  const std::vector<Taps> th = half_taps(h), tw = half_taps(w);
  const int oh = static_cast<int>(th.size()), ow = static_cast<int>(tw.size());
  std::vector<double> rows(static_cast<std::size_t>(oh) * w), out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < oh; ++i)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < th[i].index.size(); ++k) acc += th[i].weight[k] * img[th[i].index[k] * w + x];
      rows[i * w + x] = acc;
    }
  for (int y = 0; y < oh; ++y)
    for (int j = 0; j < ow; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < tw[j].index.size(); ++k) acc += tw[j].weight[k] * rows[y * w + tw[j].index[k]];
      out[y * ow + j] = acc;
    }
  return out;
}

std::vector<double> niqe_gray(const Image& img) {
  require_valid(img, "niqe");
  const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
  std::vector<double> g(n);
  if (img.channels() == 1) {
    for (std::size_t i = 0; i < n; ++i) g[i] = std::round(255.0 * img.channel(0)[i]);
  } else if (img.channels() == 3) {
    auto r = img.channel(0), gr = img.channel(1), b = img.channel(2);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::round(255.0 * (0.299 * r[i] + 0.587 * gr[i] + 0.114 * b[i]));
  } else {
    throw InvalidArgument("niqe expects 1 or 3 channels");
  }
  return g;
}

std::vector<NiqeFeatures> niqe_patch_features(const std::vector<double>& gray, int h, int w, int patch,
                                              std::vector<double>* sharpness) {
  if (patch < 2 || patch % 2 != 0) throw InvalidArgument("niqe patch size must be even");
  const int nbh = h / patch, nbw = w / patch;
  if (nbh == 0 || nbw == 0) return {};
  int ch = nbh * patch, cw = nbw * patch;
  std::vector<double> img(static_cast<std::size_t>(ch) * cw);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) img[y * cw + x] = gray[static_cast<std::size_t>(y) * w + x];

  std::vector<NiqeFeatures> feats(static_cast<std::size_t>(nbh) * nbw);
  if (sharpness) sharpness->assign(feats.size(), 0.0);
  std::vector<double> normalized, sigma;
  for (int scale = 1; scale <= 2; ++scale) {
    local_stats(img, ch, cw, normalized, sigma);
    const int bs = patch / scale;
    std::vector<double> block(static_cast<std::size_t>(bs) * bs);
    for (int bw = 0; bw < nbw; ++bw) {
      for (int bh = 0; bh < nbh; ++bh) {
        double sharp = 0;
        for (int y = 0; y < bs; ++y)
          for (int x = 0; x < bs; ++x) {
            const std::size_t src = static_cast<std::size_t>(bh * bs + y) * cw + bw * bs + x;
            block[y * bs + x] = normalized[src];
            sharp += sigma[src];
          }
        const std::size_t row = static_cast<std::size_t>(bw) * nbh + bh;
        block_features(block, bs, bs, feats[row].data() + (scale - 1) * 18);
        if (scale == 1 && sharpness) (*sharpness)[row] = sharp / (bs * bs);
      }
    }
    if (scale == 1) {
      for (double& v : img) v /= 255.0;
      img = resize_half_bicubic(img, ch, cw);
      for (double& v : img) v *= 255.0;
      ch /= 2;
      cw /= 2;
    }
  }
  return feats;
}

double niqe_from_gray(const std::vector<double>& gray, int h, int w, const NiqeModel& model) {
  if (static_cast<int>(model.mu.size()) != kNiqeFeatureDim) throw InvalidArgument("niqe model is empty");
  const std::vector<NiqeFeatures> rows = niqe_patch_features(gray, h, w, model.patch_size);
  if (rows.size() < 2) {
    throw InvalidArgument("niqe needs at least two " + std::to_string(model.patch_size) + "px patches");
  }
  const Gaussian dist = fit_gaussian(rows);
  const int d = kNiqeFeatureDim;
  const Eigen::Map<const Eigen::VectorXd> mu_p(model.mu.data(), d);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cov_p(
      model.cov.data(), d, d);
  const Eigen::VectorXd diff = mu_p - dist.mu;
  const Eigen::MatrixXd inv = pinv_symmetric((cov_p + dist.cov) / 2.0);
  return std::sqrt(diff.dot(inv * diff));
}

double niqe(const Image& img, const NiqeModel& model) {
  return niqe_from_gray(niqe_gray(img), img.height(), img.width(), model);
}

NiqeModel fit_niqe_model(const std::vector<Image>& corpus, const NiqeFitOptions& opt) {
  if (corpus.size() < opt.min_images) {
    throw InvalidArgument("pristine corpus has " + std::to_string(corpus.size()) + " images, need " +
                          std::to_string(opt.min_images));
  }
  std::vector<NiqeFeatures> selected;
  std::uint64_t hash = 1469598103934665603ULL;
  for (const Image& img : corpus) {
    const std::vector<double> gray = niqe_gray(img);
    hash = fnv(gray.data(), gray.size() * sizeof(double), hash);
    std::vector<double> sharp;
    const auto rows = niqe_patch_features(gray, img.height(), img.width(), opt.patch_size, &sharp);
    if (rows.empty()) continue;
    const double peak = *std::max_element(sharp.begin(), sharp.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (sharp[i] > opt.sharpness_threshold * peak) selected.push_back(rows[i]);
    }
  }
  if (selected.size() < 2) throw InvalidArgument("pristine corpus yields fewer than two sharp patches");
  const Gaussian g = fit_gaussian(selected);
  NiqeModel m;
  m.patch_size = opt.patch_size;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  m.corpus_hash = buf;
  const int d = kNiqeFeatureDim;
  m.mu.assign(g.mu.data(), g.mu.data() + d);
  m.cov.resize(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m.cov[i * d + j] = (g.cov(i, j) + g.cov(j, i)) / 2 + (i == j ? opt.ridge : 0.0);
  return m;
}

NiqeModel NiqeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFileError("cannot open NIQE model " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw CorruptFileError("NIQE model has no header: " + path.string());
  NiqeModel m;
  try {
    const auto j = nlohmann::json::parse(header);
    if (j.value("format", "") != "hep-niqe-1") throw CorruptFileError("unknown NIQE model format");
    m.patch_size = j.at("patch_size").get<int>();
    m.feature_dim = j.at("feature_dim").get<int>();
    m.corpus_hash = j.value("corpus_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("bad NIQE model header in " + path.string() + ": " + e.what());
  }
  if (m.feature_dim != kNiqeFeatureDim || m.patch_size < 2) {
    throw CorruptFileError("unsupported NIQE model dimensions in " + path.string());
  }
  const int d = m.feature_dim;
  m.mu.resize(d);
  m.cov.resize(static_cast<std::size_t>(d) * d);
  in.read(reinterpret_cast<char*>(m.mu.data()), static_cast<std::streamsize>(d * sizeof(double)));
  in.read(reinterpret_cast<char*>(m.cov.data()), static_cast<std::streamsize>(m.cov.size() * sizeof(double)));
  if (!in || in.peek() != std::char_traits<char>::eof()) {
    throw CorruptFileError("NIQE model body has the wrong size: " + path.string());
  }
  return m;
}

void NiqeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write NIQE model " + path.string());
  nlohmann::json j = {{"format", "hep-niqe-1"},
                      {"patch_size", patch_size},
                      {"feature_dim", feature_dim},
                      {"corpus_hash", corpus_hash}};
  out << j.dump() << '\n';
  out.write(reinterpret_cast<const char*>(mu.data()), static_cast<std::streamsize>(mu.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(cov.data()), static_cast<std::streamsize>(cov.size() * sizeof(double)));
}

std::filesystem::path default_niqe_model_path() {
  if (const char* p = std::getenv("HEP_NIQE_MODEL"); p != nullptr && *p != '\0') return p;
  return HEP_DEFAULT_NIQE_MODEL;
}

const NiqeModel& default_niqe_model() {
  static const NiqeModel m = NiqeModel::load(default_niqe_model_path());
  return m;
}

}  // namespace hep::metrics
