#include "arc/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "arc/error.hpp"

namespace arc {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage read_png_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw io_error("cannot open image: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng read init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("libpng info init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<unsigned char> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * static_cast<std::size_t>(height));
  row_ptrs.resize(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) row_ptrs[static_cast<std::size_t>(r)] = data.data() + rowbytes * static_cast<std::size_t>(r);
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  GrayImage img;
  img.width = width;
  img.height = height;
  img.pix.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      img.pix[static_cast<std::size_t>(r * width + c)] =
          data[rowbytes * static_cast<std::size_t>(r) + static_cast<std::size_t>(c)] / 255.0;
  return img;
}

namespace {

void write_png_impl(const std::string& path, int width, int height, int color_type,
                    const unsigned char* pixels, std::size_t rowbytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw io_error("cannot open for write: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng write init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng info init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  // fixed settings keep output byte-identical across runs
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels + rowbytes * static_cast<std::size_t>(r)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const GrayImage& img) {
  std::vector<unsigned char> bytes(img.pix.size());
  for (std::size_t i = 0; i < img.pix.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, img.pix[i]));
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, bytes.data(),
                 static_cast<std::size_t>(img.width));
}

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw dim_error("write_png_rgb: buffer size does not match dimensions");
  }
  write_png_impl(path, width, height, PNG_COLOR_TYPE_RGB, rgb.data(),
                 static_cast<std::size_t>(width) * 3);
}

GrayImage resize_area(const GrayImage& src, int out_width, int out_height) {
  // 1-D overlap weights of output cell o against input cells
  auto weights_1d = [](int in, int out) {
    const double r = static_cast<double>(in) / out;
    std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      const double lo = o * r, hi = (o + 1) * r;
      for (int i = static_cast<int>(std::floor(lo)); i < in && i < hi; ++i) {
        const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (overlap > 0) w[static_cast<std::size_t>(o)].emplace_back(i, overlap / r);
      }
    }
    return w;
  };
  const auto wx = weights_1d(src.width, out_width);
  const auto wy = weights_1d(src.height, out_height);
  GrayImage out;
  out.width = out_width;
  out.height = out_height;
  out.pix.assign(static_cast<std::size_t>(out_width) * static_cast<std::size_t>(out_height), 0.0);
  // separable: rows first
  std::vector<double> tmp(static_cast<std::size_t>(src.height) * static_cast<std::size_t>(out_width), 0.0);
  for (int r = 0; r < src.height; ++r)
    for (int o = 0; o < out_width; ++o) {
      double acc = 0;
      for (auto [i, w] : wx[static_cast<std::size_t>(o)]) acc += w * src.at(r, i);
      tmp[static_cast<std::size_t>(r * out_width + o)] = acc;
    }
  for (int o = 0; o < out_height; ++o)
    for (int c = 0; c < out_width; ++c) {
      double acc = 0;
      for (auto [i, w] : wy[static_cast<std::size_t>(o)])
        acc += w * tmp[static_cast<std::size_t>(i * out_width + c)];
      out.pix[static_cast<std::size_t>(o * out_width + c)] = acc;
    }
  return out;
}

}  // namespace arc
