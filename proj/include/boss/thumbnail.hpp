#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "boss/dataset.hpp"
#include "boss/error.hpp"

namespace boss::service {

/// Interleaved 8-bit pixels of one sample: value v in [0,1] maps to round(255·v).
inline std::vector<unsigned char> sample_pixels(const data::Dataset& dataset, std::size_t index) {
  const auto img = dataset.image(index);
  const std::size_t c = dataset.channels(), plane = dataset.height() * dataset.width();
  std::vector<unsigned char> out(c * plane);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < plane; ++k)
      out[k * c + ch] = static_cast<unsigned char>(std::lround(std::clamp(img[ch * plane + k], 0.0, 1.0) * 255.0));
  return out;
}

/// PNG bytes of one sample, grayscale for one channel and RGB for three.
inline std::string encode_png(const data::Dataset& dataset, std::size_t index) {
  const std::size_t c = dataset.channels();
  if (c != 1 && c != 3) throw DataError("thumbnails need 1 or 3 channels, dataset has " + std::to_string(c));
  const auto pixels = sample_pixels(dataset, index);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(dataset.width());
  image.height = static_cast<png_uint_32>(dataset.height());
  image.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw DataError(std::string("png encoding failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw DataError(std::string("png encoding failed: ") + image.message);
  out.resize(size);
  return out;
}

}  // namespace boss::service
