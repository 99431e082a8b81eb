#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>

#include "hep/imaging.hpp"

namespace hep {

// PNG (8/16-bit, gray/RGB, alpha dropped, palettes expanded) and baseline
// JPEG. Values are scaled to [0,1] on load. Errors: UnreadableFileError,
// UnsupportedFormatError, CorruptFileError.
Image load_image(const std::filesystem::path& path);

// PNG output, 8-bit by default. Values are clamped to [0,1] and rounded.
void save_image(const Image& img, const std::filesystem::path& path, int bit_depth = 8);

// Observers see every path passed to load_image, before it is opened. Used
// to audit which files a training run touches; an observer may throw to veto.
class ScopedReadObserver {
 public:
  explicit ScopedReadObserver(std::function<void(const std::filesystem::path&)> fn);
  ~ScopedReadObserver();
  ScopedReadObserver(const ScopedReadObserver&) = delete;
  ScopedReadObserver& operator=(const ScopedReadObserver&) = delete;

 private:
  std::size_t id_;
};

bool is_image_file(const std::filesystem::path& path);

}  // namespace hep
