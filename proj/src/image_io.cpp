#include "hep/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "hep/error.hpp"

namespace hep {
namespace {

std::mutex g_observer_mutex;
std::map<std::size_t, std::function<void(const std::filesystem::path&)>> g_observers;
std::size_t g_next_observer = 0;

void notify_observers(const std::filesystem::path& path) {
  std::vector<std::function<void(const std::filesystem::path&)>> copy;
  {
    std::lock_guard lock(g_observer_mutex);
    for (const auto& [id, fn] : g_observers) copy.push_back(fn);
  }
  for (const auto& fn : copy) fn(path);
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw UnreadableFileError("cannot read " + path.string() + ": not a readable file");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFileError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

// ---- PNG ----

struct PngReadState {
  const unsigned char* data;
  std::size_t size;
  std::size_t offset;
  char message[256];
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->offset + count > st->size) png_error(png, "unexpected end of file");
  std::memcpy(out, st->data + st->offset, count);
  st->offset += count;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st != nullptr) std::snprintf(st->message, sizeof(st->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

// Decodes into `out` (planar, [0,1]); returns false with st.message on error.
// Only trivially destructible locals live across the setjmp.
bool decode_png(PngReadState& st, int& height, int& width, int& channels,
                std::vector<double>& out, std::vector<unsigned char>& rows,
                std::vector<png_bytep>& row_ptrs) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, png_on_error, png_on_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &st, png_read_from_memory);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian uint16
  png_read_update_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int file_channels = png_get_channels(png, info);
  const int bytes_per_sample = png_get_bit_depth(png, info) == 16 ? 2 : 1;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  rows.resize(rowbytes * static_cast<std::size_t>(height));
  row_ptrs.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) row_ptrs[y] = rows.data() + rowbytes * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  channels = file_channels >= 3 ? 3 : 1;  // drop alpha
  const double scale = bytes_per_sample == 2 ? 65535.0 : 255.0;
  out.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = rows.data() + rowbytes * y;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t s = static_cast<std::size_t>(x) * file_channels + c;
        double v;
        if (bytes_per_sample == 2) {
          std::uint16_t u;
          std::memcpy(&u, row + 2 * s, 2);
          v = u;
        } else {
          v = row[s];
        }
        out[(static_cast<std::size_t>(c) * height + y) * width + x] = v / scale;
      }
    }
  }
  return true;
}

Image load_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  PngReadState st{bytes.data(), bytes.size(), 0, {0}};
  int h = 0, w = 0, c = 0;
  std::vector<double> px;
  std::vector<unsigned char> rows;
  std::vector<png_bytep> row_ptrs;
  if (!decode_png(st, h, w, c, px, rows, row_ptrs)) {
    throw CorruptFileError("corrupt PNG " + path.string() + ": " + st.message);
  }
  if (h < 1 || w < 1) throw CorruptFileError("PNG with empty dimensions: " + path.string());
  return Image(h, w, c, std::move(px));
}

// ---- JPEG ----

struct JpegErrorState {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
  bool warned;
};

void jpeg_on_error(j_common_ptr cinfo) {
  auto* st = reinterpret_cast<JpegErrorState*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, st->message);
  std::longjmp(st->jump, 1);
}

void jpeg_on_message(j_common_ptr cinfo, int level) {
  // Level -1 are corrupt-data warnings (e.g. premature end of data); treat
  // them as hard failures rather than silently padding the image.
  if (level < 0) {
    auto* st = reinterpret_cast<JpegErrorState*>(cinfo->err);
    if (!st->warned) (*cinfo->err->format_message)(cinfo, st->message);
    st->warned = true;
  }
}

bool decode_jpeg(const std::vector<unsigned char>& bytes, JpegErrorState& err, int& height,
                 int& width, int& channels, std::vector<unsigned char>& raw) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_on_error;
  err.mgr.emit_message = jpeg_on_message;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  raw.resize(static_cast<std::size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return !err.warned;
}

Image load_jpeg(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  JpegErrorState err{};
  int h = 0, w = 0, c = 0;
  std::vector<unsigned char> raw;
  if (!decode_jpeg(bytes, err, h, w, c, raw)) {
    throw CorruptFileError("corrupt JPEG " + path.string() + ": " + err.message);
  }
  if (c != 1 && c != 3) throw UnsupportedFormatError("JPEG with " + std::to_string(c) + " channels");
  std::vector<double> px(raw.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        px[(static_cast<std::size_t>(ch) * h + y) * w + x] =
            raw[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0;
      }
    }
  }
  return Image(h, w, c, std::move(px));
}

bool write_png(FILE* fp, const Image& img, int bit_depth) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  const int channels = img.channels();
  const int bytes = bit_depth == 16 ? 2 : 1;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<unsigned char> buffer(static_cast<std::size_t>(img.width()) * channels * bytes *
                                    img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * scale));
        const std::size_t s = (static_cast<std::size_t>(y) * img.width() + x) * channels + c;
        if (bytes == 2) {
          buffer[2 * s] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
          buffer[2 * s + 1] = static_cast<unsigned char>(q & 0xff);
        } else {
          buffer[s] = static_cast<unsigned char>(q);
        }
      }
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  const std::size_t rowbytes = static_cast<std::size_t>(img.width()) * channels * bytes;
  for (int y = 0; y < img.height(); ++y) rows[y] = buffer.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  notify_observers(path);
  const auto bytes = read_file(path);
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return load_png(bytes, path);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return load_jpeg(bytes, path);
  }
  throw UnsupportedFormatError("unsupported image format: " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (img.empty()) throw InvalidArgument("save_image: empty image");
  if (img.channels() != 1 && img.channels() != 3) {
    throw InvalidArgument("save_image: expects 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("save_image: bit depth 8 or 16");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) throw Error("cannot write " + path.string());
  const bool ok = write_png(fp, img, bit_depth);
  const bool closed = std::fclose(fp) == 0;
  if (!ok || !closed) throw Error("failed writing PNG " + path.string());
}

ScopedReadObserver::ScopedReadObserver(std::function<void(const std::filesystem::path&)> fn) {
  std::lock_guard lock(g_observer_mutex);
  id_ = g_next_observer++;
  g_observers.emplace(id_, std::move(fn));
}

ScopedReadObserver::~ScopedReadObserver() {
  std::lock_guard lock(g_observer_mutex);
  g_observers.erase(id_);
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace hep
