#include <algorithm>
#include <fstream>
#include <random>

#include "hep/error.hpp"
#include "hep/image_io.hpp"
#include "hep/train.hpp"

namespace hep::train {
namespace {

std::vector<Path> list_images(const Path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("not a directory: " + dir.string());
  std::vector<Path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Path canonical_or_self(const Path& p) {
  std::error_code ec;
  Path c = std::filesystem::weakly_canonical(p, ec);
  return ec ? p : c;
}

}  // namespace

DatasetManifest DatasetManifest::load(const Path& file) {
  std::ifstream in(file);
  if (!in) throw UnreadableFileError("cannot open manifest " + file.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("manifest " + file.string() + " is not valid JSON: " + e.what());
  }
  const Path base = file.parent_path();
  DatasetManifest m;
  try {
    for (const auto& [name, list] : j.at("splits").items()) {
      auto& out = m.splits[name];
      for (const auto& p : list) {
        Path path = p.get<std::string>();
        out.push_back(path.is_absolute() ? path : base / path);
      }
    }
    if (j.contains("pairs")) {
      for (const auto& [a, b] : j.at("pairs").items()) m.pairs[a] = b.get<std::string>();
    }
    if (j.contains("test")) {
      for (const auto& s : j.at("test")) m.test_splits.insert(s.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("manifest " + file.string() + ": " + e.what());
  }
  return m;
}

void DatasetManifest::save(const Path& file) const {
  Json j;
  j["splits"] = Json::object();
  for (const auto& [name, list] : splits) {
    Json arr = Json::array();
    for (const auto& p : list) arr.push_back(p.string());
    j["splits"][name] = arr;
  }
  j["pairs"] = pairs;
  j["test"] = test_splits;
  std::ofstream out(file);
  if (!out) throw Error("cannot write manifest " + file.string());
  out << j.dump(2) << '\n';
}

DatasetManifest DatasetManifest::from_lol(const Path& root, int unpaired) {
  DatasetManifest m;
  auto paired = [&](const std::string& sub, const std::string& low, const std::string& high) {
    std::vector<Path> l = list_images(root / sub / "low");
    std::vector<Path> h;
    for (const auto& p : l) {
      const Path gt = root / sub / "high" / p.filename();
      if (!std::filesystem::exists(gt)) throw InvalidArgument("no ground truth for " + p.string());
      h.push_back(gt);
    }
    m.splits[low] = l;
    m.splits[high] = h;
    m.pairs[low] = high;
  };
  paired("our485", "train_low", "train_high");
  paired("eval15", "test_low", "test_high");
  m.test_splits = {"test_low", "test_high"};
  const auto& tl = m.splits["train_low"];
  const auto& th = m.splits["train_high"];
  const auto n = static_cast<std::size_t>(std::max(0, unpaired));
  m.splits["unpaired_noisy"].assign(tl.begin(), tl.begin() + std::min(n, tl.size()));
  m.splits["unpaired_clean"].assign(th.begin(), th.begin() + std::min(n, th.size()));
  return m;
}

void DatasetManifest::validate(bool check_files) const {
  for (const auto& [a, b] : pairs) {
    if (!splits.count(a) || !splits.count(b)) throw InvalidArgument("manifest pairs unknown split " + a + "/" + b);
    if (splits.at(a).size() != splits.at(b).size()) {
      throw InvalidArgument("manifest pair " + a + "/" + b + " differs in length");
    }
  }
  for (const auto& t : test_splits) {
    if (!splits.count(t)) throw InvalidArgument("manifest test split " + t + " does not exist");
  }
  std::set<Path> test;
  for (const auto& p : test_files()) test.insert(canonical_or_self(p));
  for (const auto& [name, list] : splits) {
    const bool is_test = test_splits.count(name) > 0;
    for (const auto& p : list) {
      if (check_files && !std::filesystem::exists(p)) throw InvalidArgument("manifest file missing: " + p.string());
      if (!is_test && test.count(canonical_or_self(p))) {
        throw InvalidArgument("file in both a training and a test split: " + p.string());
      }
    }
  }
}

const std::vector<Path>& DatasetManifest::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw InvalidArgument("manifest has no split '" + name + "'");
  return it->second;
}

std::vector<Path> DatasetManifest::test_files() const {
  std::vector<Path> out;
  for (const auto& t : test_splits) {
    auto it = splits.find(t);
    if (it != splits.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

ImageList::ImageList(std::vector<Path> paths, bool cache) : paths_(std::move(paths)), cache_(cache) {}

ImageList::ImageList(std::vector<Image> images) {
  for (auto& img : images) images_->push_back(std::make_shared<const Image>(std::move(img)));
}

std::shared_ptr<const Image> ImageList::get(std::size_t i) const {
  if (i >= size()) throw InvalidArgument("image index out of range");
  if (paths_.empty()) return (*images_)[i];
  if (cache_) {
    std::lock_guard<std::mutex> lock(*mutex_);
    auto it = cached_->find(i);
    if (it != cached_->end()) return it->second;
  }
  auto img = std::make_shared<const Image>(load_image(paths_[i]));
  if (cache_) {
    std::lock_guard<std::mutex> lock(*mutex_);
    cached_->emplace(i, img);
  }
  return img;
}

std::string ImageList::name(std::size_t i) const {
  if (!paths_.empty()) return paths_.at(i).filename().string();
  return "image" + std::to_string(i);
}

PatchSampler::PatchSampler(ImageList first, ImageList second, Pairing pairing, SamplerSpec spec)
    : first_(std::move(first)), second_(std::move(second)), pairing_(pairing), spec_(spec) {
  if (first_.empty()) throw InvalidArgument("sampler needs at least one image");
  if (pairing_ != Pairing::Single && second_.empty()) throw InvalidArgument("sampler needs a second image list");
  if (pairing_ == Pairing::Paired && first_.size() != second_.size()) {
    throw InvalidArgument("paired lists differ in length");
  }
  if (spec_.patch < 1 || spec_.batch < 1) throw InvalidArgument("sampler patch and batch must be >= 1");
}

Tensor PatchSampler::draw(const Image& img, const std::string& name, int top, int left, bool flip) const {
  if (img.channels() != 3) throw ShapeMismatch("training images must be RGB: " + name);
  Image patch = crop(img, top, left, spec_.patch, spec_.patch);
  if (flip) patch = flip_horizontal(patch);
  return patch.to_tensor();
}

Batch PatchSampler::sample(long long step) const {
  std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(spec_.seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32)};
  std::mt19937_64 rng(seq);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto place = [&](const ImageList& list, std::size_t i, int& top, int& left) {
    const auto img = list.get(i);
    if (img->height() < spec_.patch || img->width() < spec_.patch) {
      throw InvalidArgument("patch " + std::to_string(spec_.patch) + " larger than " + list.name(i) + " (" +
                            std::to_string(img->height()) + "x" + std::to_string(img->width()) + ")");
    }
    top = std::uniform_int_distribution<int>(0, img->height() - spec_.patch)(rng);
    left = std::uniform_int_distribution<int>(0, img->width() - spec_.patch)(rng);
    return img;
  };
  auto coin = [&] { return spec_.hflip && std::bernoulli_distribution(0.5)(rng); };

  std::vector<Tensor> a, b;
  for (int k = 0; k < spec_.batch; ++k) {
    const std::size_t i = pick(first_.size());
    int top = 0, left = 0;
    const auto img = place(first_, i, top, left);
    const bool flip = coin();
    a.push_back(draw(*img, first_.name(i), top, left, flip));
    if (pairing_ == Pairing::Paired) {
      const auto partner = second_.get(i);
      if (partner->height() != img->height() || partner->width() != img->width()) {
        throw ShapeMismatch("pair differs in size: " + first_.name(i) + " / " + second_.name(i));
      }
      b.push_back(draw(*partner, second_.name(i), top, left, flip));
    } else if (pairing_ == Pairing::Unpaired) {
      const std::size_t j = pick(second_.size());
      int t2 = 0, l2 = 0;
      const auto other = place(second_, j, t2, l2);
      b.push_back(draw(*other, second_.name(j), t2, l2, coin()));
    }
  }
  Batch out;
  out.step = step;
  out.first = stack(a);
  if (!b.empty()) out.second = stack(b);
  return out;
}

Batch sample_patches(const DatasetManifest& m, const std::string& split, int patch, int batch,
                     std::uint64_t seed) {
  ImageList first(m.split(split));
  ImageList second;
  Pairing pairing = Pairing::Single;
  if (auto it = m.pairs.find(split); it != m.pairs.end()) {
    second = ImageList(m.split(it->second));
    pairing = Pairing::Paired;
  }
  const PatchSampler s(std::move(first), std::move(second), pairing, SamplerSpec{patch, batch, true, seed});
  return s.sample(0);
}

BatchLoader::BatchLoader(const PatchSampler& sampler, long long first_step, int workers, int depth)
    : sampler_(sampler), next_out_(first_step), next_claim_(first_step), depth_(std::max(1, depth)) {
  if (workers > 1) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { work(); });
  }
}

BatchLoader::~BatchLoader() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  room_.notify_all();
  ready_.notify_all();
  for (auto& t : threads_) t.join();
}

void BatchLoader::work() {
  for (;;) {
    long long step;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      room_.wait(lock, [&] { return stop_ || next_claim_ < next_out_ + depth_; });
      if (stop_) return;
      step = next_claim_++;
    }
    try {
      Batch b = sampler_.sample(step);
      std::lock_guard<std::mutex> lock(mutex_);
      done_.emplace(step, std::move(b));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
    ready_.notify_all();
  }
}

Batch BatchLoader::next() {
  if (threads_.empty()) return sampler_.sample(next_out_++);
  std::unique_lock<std::mutex> lock(mutex_);
  ready_.wait(lock, [&] { return error_ || done_.count(next_out_) > 0; });
  if (error_) std::rethrow_exception(error_);
  auto node = done_.extract(next_out_);
  ++next_out_;
  lock.unlock();
  room_.notify_all();
  return std::move(node.mapped());
}

}  // namespace hep::train
