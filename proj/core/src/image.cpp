/**
 * Copyright 2026 The ldcsf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ldcsf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "ldcsf/errors.hpp"

namespace ldcsf {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  *err = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

// Decodes to 8-bit RGB. libpng reports errors by longjmp, so no C++ objects
// with destructors may live across the setjmp frame besides the row buffer
// owned by the caller.
bool decode(std::FILE* file, RgbImage& image, std::string& error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    error = "out of memory";
    return false;
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  image = RgbImage(png_get_image_width(png, info), png_get_image_height(png, info));
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    rows[y] = image.pixels.data() + y * image.width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode(std::FILE* file, const std::uint8_t* data, std::size_t w, std::size_t h, int color_type, std::size_t channels,
            std::string& error) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    error = "out of memory";
    return false;
  }
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) {
    rows[y] = const_cast<png_bytep>(data + y * w * channels);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw DataError("cannot open " + path.string());
  }
  return f;
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  RgbImage image;
  std::string error;
  if (!decode(file.get(), image, error)) {
    throw DataError("png decode failed for " + path.string() + ": " + error);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
    throw DataError("write_png: malformed image");
  }
  auto file = open_file(path, "wb");
  std::string error;
  if (!encode(file.get(), image.pixels.data(), image.width, image.height, PNG_COLOR_TYPE_RGB, 3, error)) {
    throw DataError("png encode failed for " + path.string() + ": " + error);
  }
}

Mask read_mask_png(const std::filesystem::path& path) {
  const RgbImage rgb = read_png(path);
  Mask mask(rgb.width, rgb.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    mask.bits[i] = (rgb.pixels[3 * i] | rgb.pixels[3 * i + 1] | rgb.pixels[3 * i + 2]) != 0 ? 1 : 0;
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> gray(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), gray.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
  auto file = open_file(path, "wb");
  std::string error;
  if (!encode(file.get(), gray.data(), mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 1, error)) {
    throw DataError("png encode failed for " + path.string() + ": " + error);
  }
}

RgbImage crop(const RgbImage& image, std::size_t x, std::size_t y, std::size_t w, std::size_t h) {
  if (x + w > image.width || y + h > image.height) {
    throw DataError("crop: region exceeds image bounds");
  }
  RgbImage out(w, h);
  for (std::size_t row = 0; row < h; ++row) {
    const auto* src = image.pixels.data() + ((y + row) * image.width + x) * 3;
    std::copy(src, src + w * 3, out.pixels.data() + row * w * 3);
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& image, std::size_t w, std::size_t h) {
  if (w == image.width && h == image.height) {
    return image;
  }
  RgbImage out(w, h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(w);
  const double sy = static_cast<double>(image.height) / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0, c) * (1 - tx) + image.at(x1, y0, c) * tx;
        const double bottom = image.at(x0, y1, c) * (1 - tx) + image.at(x1, y1, c) * tx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bottom * ty));
      }
    }
  }
  return out;
}

template <class T>
void to_planar(const RgbImage& image, T* out) {
  const std::size_t plane = image.width * image.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[c * plane + i] = static_cast<T>(image.pixels[3 * i + c]) / T(255);
    }
  }
}

template void to_planar(const RgbImage&, float*);
template void to_planar(const RgbImage&, double*);

}  // namespace ldcsf
