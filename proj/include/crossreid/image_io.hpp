#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crossreid {

/// 8-bit RGB image, row-major interleaved.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  std::uint8_t at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

/// Decodes any PNG to 8-bit RGB (palette expanded, alpha stripped, gray
/// promoted). Throws IoError naming the path on failure.
ImageU8 read_png(const std::string& path);

/// Encodes 8-bit RGB. Throws IoError naming the path on failure.
void write_png(const std::string& path, const ImageU8& image);

}  // namespace crossreid
