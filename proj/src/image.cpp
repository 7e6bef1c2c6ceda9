#include "melc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace melc {

namespace {

constexpr char kF32Magic[4] = {'F', '3', '2', 'I'};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

double mean_abs_diff(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mean_abs_diff: shape mismatch");
  if (a.values.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) total += std::fabs(a.values[i] - b.values[i]);
  return total / static_cast<double>(a.values.size());
}

void save_image_f32(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kF32Magic, 4);
  write_u32(out, static_cast<uint32_t>(image.height));
  write_u32(out, static_cast<uint32_t>(image.width));
  for (double v : image.values) {
    float f = static_cast<float>(v);
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

GrayImage load_image_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kF32Magic, 4) != 0)
    throw std::runtime_error("not an f32 image: " + path);
  const uint32_t h = read_u32(in);
  const uint32_t w = read_u32(in);
  if (!in || h == 0 || w == 0 || h > 1u << 16 || w > 1u << 16)
    throw std::runtime_error("bad f32 header: " + path);
  GrayImage img(static_cast<int>(h), static_cast<int>(w));
  for (auto& v : img.values) {
    float f = 0.f;
    in.read(reinterpret_cast<char*>(&f), 4);
    v = static_cast<double>(f);
  }
  if (!in) throw std::runtime_error("truncated f32 image: " + path);
  return img;
}

void save_image_png(const std::string& path, const GrayImage& image) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(image.width));
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double v = std::clamp(image.at(y, x), 0.0, 1.0);
      row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

GrayImage load_image_png(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open: " + path);

  unsigned char header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw std::runtime_error("not a png: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize every variant to 8-bit gray.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const png_uint_32 h = png_get_image_height(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  GrayImage img(static_cast<int>(h), static_cast<int>(w));
  std::vector<unsigned char> row(w);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      img.at(static_cast<int>(y), static_cast<int>(x)) = row[x] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

GrayImage load_image(const std::string& path) {
  if (ends_with(path, ".png")) return load_image_png(path);
  if (ends_with(path, ".f32")) return load_image_f32(path);
  throw std::runtime_error("unknown image extension (expected .png or .f32): " + path);
}

void save_image(const std::string& path, const GrayImage& image) {
  if (ends_with(path, ".png")) {
    save_image_png(path, image);
  } else if (ends_with(path, ".f32")) {
    save_image_f32(path, image);
  } else {
    throw std::runtime_error("unknown image extension (expected .png or .f32): " + path);
  }
}

}  // namespace melc
