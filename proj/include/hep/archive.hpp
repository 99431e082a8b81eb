#pragma once

// Binary parameter archive: "HEPARCH1", u32 count, then per entry
// u32 name length, name bytes, i32 n/c/h/w, float64 values (little endian).

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hep/tensor.hpp"

namespace hep {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_archive(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_archive(const std::filesystem::path& path);

}  // namespace hep
