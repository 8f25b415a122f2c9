#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "screenmark/image.hpp"

namespace screenmark {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ImageFormat { png, jpeg, unknown };

/// Identifies PNG and JPEG by their signatures.
ImageFormat sniff_format(std::string_view bytes);

/// Decodes PNG or JPEG bytes to 8-bit RGB (gray and alpha are converted).
RgbImage decode_image(std::string_view bytes);
RgbImage read_image(const std::filesystem::path& path);

std::string encode_png(const RgbImage& img);
/// Gray values in [0,1] are scaled to 0..255 with rounding and clamping.
std::string encode_png(const GrayImage& img);
/// Signed data is mapped linearly from [min, max] to 0..255 for viewing.
std::string encode_png_normalized(const GrayImage& img);

std::string encode_jpeg(const RgbImage& img, int quality);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and a rename.
void write_file(const std::filesystem::path& path, std::string_view bytes);

void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);

}  // namespace screenmark
