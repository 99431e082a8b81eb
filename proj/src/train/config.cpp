#include <cmath>

#include "hep/error.hpp"
#include "hep/train.hpp"

namespace hep::train {
namespace {

// Visits the keys of one config object, rejecting anything unclaimed.
class Section {
 public:
  Section(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidArgument("config: " + where_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidArgument("config: unknown key " + where_ + "." + it.key());
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument("config: bad value for " + where_ + "." + key);
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const Json& at(const char* key) const { return j_.at(key); }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_lum(const Json& j, LumStage& s) {
  Section r(j, "lum");
  r.get("lr", s.lr);
  r.get("decay_after", s.decay_after);
  r.get("decay_factor", s.decay_factor);
  r.get("weight_decay", s.weight_decay);
  r.get("batch", s.batch);
  r.get("patch", s.patch);
  r.get("epochs", s.epochs);
  r.get("steps_per_epoch", s.steps_per_epoch);
  r.get("width", s.net.width);
  r.get("init_seed", s.net.seed);
  if (r.has("loss")) {
    Section l(r.at("loss"), "lum.loss");
    auto& c = s.loss;
    l.get("lambda_hep", c.weights.lambda_hep);
    l.get("lambda_is", c.weights.lambda_is);
    l.get("epsilon", c.weights.epsilon);
    std::string prior = lum::prior_kind_name(c.prior);
    l.get("prior", prior);
    c.prior = lum::parse_prior_kind(prior);
    std::string ref = c.reference == lum::HepReference::Equalized ? "equalized" : "raw";
    l.get("reference", ref);
    if (ref != "equalized" && ref != "raw") throw InvalidArgument("config: lum.loss.reference is equalized or raw");
    c.reference = ref == "raw" ? lum::HepReference::Raw : lum::HepReference::Equalized;
    l.get("layer", c.layer);
    l.get("use_recon", c.use_recon);
    l.get("use_prior", c.use_prior);
    l.get("use_smooth", c.use_smooth);
  }
}

void read_ndm(const Json& j, NdmStage& s) {
  Section r(j, "ndm");
  r.get("lr", s.lr);
  r.get("momentum", s.momentum);
  r.get("weight_decay", s.weight_decay);
  r.get("decay_iterations", s.decay_iterations);
  r.get("batch", s.batch);
  r.get("patch", s.patch);
  r.get("iterations", s.iterations);
  r.get("checkpoint_every", s.checkpoint_every);
  r.get("width", s.net.width);
  r.get("noise_dim", s.net.noise_dim);
  r.get("res_blocks", s.net.res_blocks);
  r.get("init_seed", s.net.seed);
  if (r.has("loss")) {
    Section l(r.at("loss"), "ndm.loss");
    auto& c = s.loss;
    l.get("kl", c.weights.kl);
    l.get("per", c.weights.per);
    l.get("col", c.weights.col);
    l.get("bc", c.weights.bc);
    l.get("cc", c.weights.cc);
    l.get("rec", c.weights.rec);
    if (l.has("blur")) {
      std::vector<std::array<double, 2>> bank;
      l.get("blur", bank);
      c.bank.kernels.clear();
      for (const auto& k : bank) c.bank.kernels.push_back({k[0], k[1]});
    }
    l.get("layer", c.layer);
    std::string noise = c.clean_noise == ndm::NoiseSource::Prior ? "prior" : "encoder";
    l.get("clean_noise", noise);
    if (noise != "prior" && noise != "encoder") throw InvalidArgument("config: ndm.loss.clean_noise is prior or encoder");
    c.clean_noise = noise == "prior" ? ndm::NoiseSource::Prior : ndm::NoiseSource::Encoder;
    l.get("label_fake", c.label_fake);
    l.get("label_real", c.label_real);
    l.get("use_adv", c.use_adv);
    l.get("use_kl", c.use_kl);
    l.get("use_cc", c.use_cc);
    l.get("use_col", c.use_col);
    l.get("use_per", c.use_per);
    l.get("use_bc", c.use_bc);
    l.get("use_rec", c.use_rec);
  }
}

void positive(double v, const char* what) {
  if (!(v > 0) || !std::isfinite(v)) throw InvalidArgument(std::string("config: ") + what + " must be positive");
}

}  // namespace

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  Section r(j, "config");
  std::string stage = c.stage == Stage::Lum ? "lum" : "ndm";
  r.get("stage", stage);
  if (stage != "lum" && stage != "ndm") throw InvalidArgument("config: stage is lum or ndm");
  c.stage = stage == "lum" ? Stage::Lum : Stage::Ndm;
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.get("queue_depth", c.queue_depth);
  r.get("hflip", c.hflip);
  r.get("divergence_factor", c.divergence_factor);
  r.get("collapse_window", c.collapse_window);
  r.get("collapse_threshold", c.collapse_threshold);
  std::string weights = c.backbone_weights.string();
  r.get("backbone_weights", weights);
  c.backbone_weights = weights;
  r.get("allow_random_backbone", c.allow_random_backbone);
  if (r.has("lum")) read_lum(r.at("lum"), c.lum);
  if (r.has("ndm")) read_ndm(r.at("ndm"), c.ndm);
  return c;
}

Json to_json(const TrainConfig& c) {
  const auto& ll = c.lum.loss;
  const auto& nl = c.ndm.loss;
  Json blur = Json::array();
  for (const auto& k : nl.bank.kernels) blur.push_back({k.sigma, k.weight});
  return {
      {"stage", c.stage == Stage::Lum ? "lum" : "ndm"},
      {"seed", c.seed},
      {"workers", c.workers},
      {"queue_depth", c.queue_depth},
      {"hflip", c.hflip},
      {"divergence_factor", c.divergence_factor},
      {"collapse_window", c.collapse_window},
      {"collapse_threshold", c.collapse_threshold},
      {"backbone_weights", c.backbone_weights.string()},
      {"allow_random_backbone", c.allow_random_backbone},
      {"lum",
       {{"lr", c.lum.lr},
        {"decay_after", c.lum.decay_after},
        {"decay_factor", c.lum.decay_factor},
        {"weight_decay", c.lum.weight_decay},
        {"batch", c.lum.batch},
        {"patch", c.lum.patch},
        {"epochs", c.lum.epochs},
        {"steps_per_epoch", c.lum.steps_per_epoch},
        {"width", c.lum.net.width},
        {"init_seed", c.lum.net.seed},
        {"loss",
         {{"lambda_hep", ll.weights.lambda_hep},
          {"lambda_is", ll.weights.lambda_is},
          {"epsilon", ll.weights.epsilon},
          {"prior", lum::prior_kind_name(ll.prior)},
          {"reference", ll.reference == lum::HepReference::Equalized ? "equalized" : "raw"},
          {"layer", ll.layer},
          {"use_recon", ll.use_recon},
          {"use_prior", ll.use_prior},
          {"use_smooth", ll.use_smooth}}}}},
      {"ndm",
       {{"lr", c.ndm.lr},
        {"momentum", c.ndm.momentum},
        {"weight_decay", c.ndm.weight_decay},
        {"decay_iterations", c.ndm.decay_iterations},
        {"batch", c.ndm.batch},
        {"patch", c.ndm.patch},
        {"iterations", c.ndm.iterations},
        {"checkpoint_every", c.ndm.checkpoint_every},
        {"width", c.ndm.net.width},
        {"noise_dim", c.ndm.net.noise_dim},
        {"res_blocks", c.ndm.net.res_blocks},
        {"init_seed", c.ndm.net.seed},
        {"loss",
         {{"kl", nl.weights.kl},
          {"per", nl.weights.per},
          {"col", nl.weights.col},
          {"bc", nl.weights.bc},
          {"cc", nl.weights.cc},
          {"rec", nl.weights.rec},
          {"blur", blur},
          {"layer", nl.layer},
          {"clean_noise", nl.clean_noise == ndm::NoiseSource::Prior ? "prior" : "encoder"},
          {"label_fake", nl.label_fake},
          {"label_real", nl.label_real},
          {"use_adv", nl.use_adv},
          {"use_kl", nl.use_kl},
          {"use_cc", nl.use_cc},
          {"use_col", nl.use_col},
          {"use_per", nl.use_per},
          {"use_bc", nl.use_bc},
          {"use_rec", nl.use_rec}}}}},
  };
}

void TrainConfig::validate() const {
  positive(lum.lr, "lum.lr");
  positive(lum.decay_factor, "lum.decay_factor");
  positive(ndm.lr, "ndm.lr");
  positive(ndm.decay_iterations, "ndm.decay_iterations");
  positive(divergence_factor, "divergence_factor");
  if (lum.weight_decay < 0 || ndm.weight_decay < 0) throw InvalidArgument("config: weight decay must be >= 0");
  if (ndm.momentum < 0 || ndm.momentum >= 1) throw InvalidArgument("config: ndm.momentum must be in [0, 1)");
  for (int e : lum.decay_after) {
    if (e < 1) throw InvalidArgument("config: lum.decay_after epochs are 1-based");
  }
  if (!std::is_sorted(lum.decay_after.begin(), lum.decay_after.end())) {
    throw InvalidArgument("config: lum.decay_after must be ascending");
  }
  if (lum.batch < 1 || ndm.batch < 1) throw InvalidArgument("config: batch must be >= 1");
  if (lum.patch < 2 || lum.patch % 2) throw InvalidArgument("config: lum.patch must be even and >= 2");
  if (ndm.patch < 16 || ndm.patch % 16) throw InvalidArgument("config: ndm.patch must be a multiple of 16");
  if (lum.epochs < 1 || ndm.iterations < 1) throw InvalidArgument("config: run length must be >= 1");
  if (lum.steps_per_epoch < 0) throw InvalidArgument("config: lum.steps_per_epoch must be >= 0");
  if (ndm.checkpoint_every < 1) throw InvalidArgument("config: ndm.checkpoint_every must be >= 1");
  if (workers < 1 || queue_depth < 1) throw InvalidArgument("config: workers and queue_depth must be >= 1");
  if (lum.net.width < 1 || ndm.net.width < 2 || ndm.net.noise_dim < 0 || ndm.net.res_blocks < 0) {
    throw InvalidArgument("config: bad network size");
  }
  const auto& w = lum.loss.weights;
  positive(w.lambda_hep, "lum.loss.lambda_hep");
  positive(w.lambda_is, "lum.loss.lambda_is");
  positive(w.epsilon, "lum.loss.epsilon");
  const auto& n = ndm.loss.weights;
  for (double v : {n.kl, n.per, n.col, n.bc, n.cc, n.rec}) positive(v, "ndm.loss weights");
}

double lum_learning_rate(const LumStage& s, int epoch) {
  if (epoch < 1) throw InvalidArgument("epochs are 1-based");
  double lr = s.lr;
  for (int e : s.decay_after) {
    if (epoch > e) lr *= s.decay_factor;
  }
  return lr;
}

double ndm_learning_rate(const NdmStage& s, long long iteration) {
  if (iteration < 0) throw InvalidArgument("iteration must be >= 0");
  return s.lr * std::pow(10.0, -static_cast<double>(iteration) / s.decay_iterations);
}

}  // namespace hep::train
