#include "triseg/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

#include "triseg/error.hpp"

namespace triseg {

namespace {

struct HeaderReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw DataError(std::string("malformed netpbm header: expected ") + what);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000) throw DataError(std::string("malformed netpbm header: ") + what + " too large");
      ++pos;
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  void end_of_header() {
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
      throw DataError("malformed netpbm header: missing separator before raster");
    ++pos;
  }
};

void expect_magic(const std::vector<std::uint8_t>& bytes, char kind) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind)
    throw DataError(std::string("malformed netpbm header: expected magic P") + kind);
}

std::string header(char kind, std::size_t w, std::size_t h, unsigned maxval) {
  return std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
         std::to_string(maxval) + "\n";
}

}  // namespace

GrayImage parse_pgm(const std::vector<std::uint8_t>& bytes) {
  expect_magic(bytes, '5');
  HeaderReader r{bytes, 2};
  GrayImage img;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  r.end_of_header();
  if (img.width == 0 || img.height == 0) throw DataError("malformed PGM: zero dimension");
  if (maxval == 0 || maxval > 65535) throw DataError("malformed PGM: maxval out of range");
  img.maxval = static_cast<std::uint16_t>(maxval);
  const std::size_t bps = maxval > 255 ? 2 : 1;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - r.pos < n * bps)
    throw DataError("malformed PGM: raster truncated (" + std::to_string(bytes.size() - r.pos) +
                    " of " + std::to_string(n * bps) + " bytes)");
  img.pixels.resize(n);
  const std::uint8_t* p = bytes.data() + r.pos;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t v = bps == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
    if (v > maxval) throw DataError("malformed PGM: sample exceeds maxval");
    img.pixels[i] = v;
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height || img.width == 0 || img.height == 0)
    throw DataError("encode_pgm: inconsistent image");
  const std::string h = header('5', img.width, img.height, img.maxval);
  std::vector<std::uint8_t> out(h.begin(), h.end());
  const bool wide = img.maxval > 255;
  out.reserve(out.size() + img.pixels.size() * (wide ? 2 : 1));
  for (auto v : img.pixels) {
    if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

RgbImage parse_ppm(const std::vector<std::uint8_t>& bytes) {
  expect_magic(bytes, '6');
  HeaderReader r{bytes, 2};
  RgbImage img;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  r.end_of_header();
  if (maxval != 255) throw DataError("malformed PPM: only maxval 255 is supported");
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() - r.pos < n) throw DataError("malformed PPM: raster truncated");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                 bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + n));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  if (img.rgb.size() != img.width * img.height * 3) throw DataError("encode_ppm: inconsistent image");
  const std::string h = header('6', img.width, img.height, 255);
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  try {
    return parse_pgm(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  write_file(path, encode_pgm(img));
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  write_file(path, encode_ppm(img));
}

}  // namespace triseg
