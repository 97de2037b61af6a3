#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "studa/core/errors.hpp"

namespace studa::png {

struct Image8 {
  int height = 0, width = 0, channels = 0;  // channels: 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> data;           // row-major, interleaved
};

inline void write(const std::filesystem::path& path, const Image8& img) {
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width);
  im.height = static_cast<png_uint_32>(img.height);
  im.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&im, path.c_str(), 0, img.data.data(), 0, nullptr))
    throw Error("png write failed for " + path.string() + ": " + im.message);
}

// Throws DatasetIntegrityError naming the file on any decode failure.
inline Image8 read(const std::filesystem::path& path, int want_channels) {
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    throw DatasetIntegrityError("cannot decode " + path.string() + ": " + im.message);
  im.format = want_channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.height = static_cast<int>(im.height);
  out.width = static_cast<int>(im.width);
  out.channels = want_channels;
  out.data.resize(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&im);
    throw DatasetIntegrityError("cannot decode " + path.string() + ": " + im.message);
  }
  return out;
}

}  // namespace studa::png
