#pragma once

// Binary netpbm I/O: PGM (P5, 8- or 16-bit, big-endian samples) and PPM (P6, 8-bit).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace triseg {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint16_t maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major

  std::uint16_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  const std::uint8_t* pixel(std::size_t y, std::size_t x) const { return &rgb[(y * width + x) * 3]; }
  std::uint8_t* pixel(std::size_t y, std::size_t x) { return &rgb[(y * width + x) * 3]; }
};

/// Throws DataError with a description of what is malformed.
GrayImage parse_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

RgbImage parse_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace triseg
