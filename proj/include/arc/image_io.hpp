#pragma once

#include <string>
#include <vector>

namespace arc {

// Row-major grayscale image with values in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pix;

  double at(int r, int c) const { return pix[static_cast<std::size_t>(r * width + c)]; }
};

// Decodes any PNG (palette, rgb, alpha, 1/2/4/16-bit) to 8-bit grayscale.
GrayImage read_png_gray(const std::string& path);

// 8-bit grayscale output with fixed encoder settings so identical pixels
// produce identical files.
void write_png_gray(const std::string& path, const GrayImage& img);

// Interleaved 8-bit RGB rows, same fixed encoder settings.
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb);

// Box-filter area averaging, exact for any size ratio.
GrayImage resize_area(const GrayImage& src, int out_width, int out_height);

}  // namespace arc
