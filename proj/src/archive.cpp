#include "hep/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "hep/error.hpp"

namespace hep {
namespace {

constexpr char kMagic[8] = {'H', 'E', 'P', 'A', 'R', 'C', 'H', '1'};

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CorruptFileError("truncated archive " + path.string());
  }
  return v;
}

}  // namespace

void save_archive(const std::filesystem::path& path, const NamedTensors& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write archive " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape s = t.shape();
    put<std::int32_t>(out, s.n);
    put<std::int32_t>(out, s.c);
    put<std::int32_t>(out, s.h);
    put<std::int32_t>(out, s.w);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing archive " + path.string());
}

NamedTensors load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFileError("cannot open archive " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw UnsupportedFormatError(path.string() + " is not a parameter archive");
  }
  const auto count = get<std::uint32_t>(in, path);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw CorruptFileError("implausible tensor name length in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CorruptFileError("truncated archive " + path.string());
    Shape s;
    s.n = get<std::int32_t>(in, path);
    s.c = get<std::int32_t>(in, path);
    s.h = get<std::int32_t>(in, path);
    s.w = get<std::int32_t>(in, path);
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (std::size_t{1} << 34)) {
      throw CorruptFileError("bad tensor shape in " + path.string());
    }
    std::vector<double> values(s.numel());
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw CorruptFileError("truncated archive " + path.string());
    }
    out.emplace_back(std::move(name), Tensor(s, std::move(values)));
  }
  return out;
}

}  // namespace hep
