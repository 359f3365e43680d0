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

#ifndef LDCSF_IMAGE_HPP
#define LDCSF_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ldcsf/tensor.hpp"

namespace ldcsf {

/// 8-bit RGB raster, row-major, channels interleaved.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary region mask, one byte (0/1) per pixel.
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), bits(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

// PNG I/O. Any bit depth / color type is accepted on read and converted to
// 8-bit RGB; alpha is dropped. Throws DataError.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
// A mask pixel is set when any color channel is nonzero.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

RgbImage crop(const RgbImage& image, std::size_t x, std::size_t y, std::size_t w, std::size_t h);
// Bilinear resampling with half-pixel centers.
RgbImage resize_bilinear(const RgbImage& image, std::size_t w, std::size_t h);

// Writes the image into out[3,H,W] (channel planes, values / 255).
template <class T>
void to_planar(const RgbImage& image, T* out);

}  // namespace ldcsf

#endif  // LDCSF_IMAGE_HPP
