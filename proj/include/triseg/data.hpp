#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "triseg/pnm.hpp"
#include "triseg/tensor.hpp"

namespace triseg {

struct RoiOrigin {
  std::size_t y = 0;
  std::size_t x = 0;
  friend bool operator==(const RoiOrigin&, const RoiOrigin&) = default;
};

/// Full-size source pair: image scaled to [0, 1], mask binary.
struct RawPair {
  Tensor image;
  Tensor mask;
  std::string id;
};

/// Network-ready 100x100x1 pair.
struct Sample {
  Tensor image;
  Tensor mask;
  std::string id;
  RoiOrigin roi_origin{};
};

struct SplitDataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
  double ratio = 0.8;
};

/// Reads `root/images/<id>.pgm` with matching `root/masks/<id>.pgm`, in
/// lexicographic id order. Masks are binarised at >= half their maxval.
std::vector<RawPair> load_dataset(const std::filesystem::path& root);

/// Writes `root/images/<id>.pgm` (8-bit) and `root/masks/<id>.pgm` (0/255).
void write_pair(const std::filesystem::path& root, const RawPair& pair);

Tensor gray_to_tensor(const GrayImage& img);
/// Rounds [0,1] values to the given maxval.
GrayImage tensor_to_gray(const Tensor& t, std::uint16_t maxval = 255);
Tensor binarize(const Tensor& t, float threshold = 0.5f);
bool is_binary(const Tensor& t);

/// Auto origin: centre the window on the mask bounding-box centre, clamped
/// to the image. Throws DataError on an empty mask (auto) or a window that
/// leaves the image (manual). A window other than 100 is resampled to
/// 100x100 after cropping.
Sample crop_roi(const Tensor& image, const Tensor& mask, std::optional<RoiOrigin> origin,
                std::size_t window = 100, std::string id = {});

/// Copies the window x window block at `origin`; throws DataError if it leaves the source.
Tensor crop_window(const Tensor& t, RoiOrigin origin, std::size_t window);

/// Centre of the mask's bounding box; nullopt for an empty mask.
std::optional<RoiOrigin> mask_bbox_center(const Tensor& mask);
/// Window origin centred on `center` and clamped to the image.
RoiOrigin centered_origin(RoiOrigin center, std::size_t height, std::size_t width, std::size_t window);

/// Nearest-neighbour resampling; output stays binary.
Tensor resize_mask(const Tensor& mask, std::size_t target_h, std::size_t target_w);
/// Bilinear resampling (pixel-centre aligned).
Tensor resize_image(const Tensor& image, std::size_t target_h, std::size_t target_w);

/// Seeded shuffle then partition; train gets round(ratio * n), clamped so
/// both sides are non-empty.
SplitDataset split(std::vector<Sample> samples, double ratio, std::uint64_t seed);

/// `id y x` per line; '#' starts a comment.
std::map<std::string, RoiOrigin> read_roi_manifest(const std::filesystem::path& path);

/// Crops each raw pair: manifest origin when given, auto otherwise.
std::vector<Sample> preprocess(const std::vector<RawPair>& raw,
                               const std::map<std::string, RoiOrigin>* manifest = nullptr,
                               std::size_t window = 100);

// --- synthetic phantoms ----------------------------------------------------

struct PhantomSpec {
  std::size_t image_size = 512;
  double axis_min = 10.0;  // semi-axis range, pixels
  double axis_max = 30.0;
  double background = 0.2;
  double contrast = 0.45;   // tumour intensity step above background
  double noise = 0.08;      // uniform noise amplitude
  double texture = 0.08;    // low-frequency texture amplitude
  double texture_scale = 48.0;  // texture wavelength, pixels
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument for an infeasible spec.
  void validate() const;
  /// Applies `key=value` lines (unknown keys rejected).
  static PhantomSpec parse(const std::string& text, PhantomSpec base);
  static PhantomSpec parse(const std::string& text);
  std::string str() const;
};

struct Ellipse {
  double cy = 0, cx = 0;  // centre, pixel coordinates (pixel centres at i + 0.5)
  double a = 1, b = 1;    // semi-axes along the rotated x and y directions
  double theta = 0;       // rotation, radians
  /// Pixel (y, x) is inside when its centre satisfies the ellipse inequality.
  bool contains(std::size_t y, std::size_t x) const;
};

struct Phantom {
  RawPair pair;
  Ellipse tumor;
};

/// Phantom `index` of the family defined by `spec` (full image_size).
Phantom render_phantom(const PhantomSpec& spec, std::size_t index);
std::string phantom_id(std::size_t index);

/// `n` phantoms cropped to 100x100 around the tumour.
std::vector<Sample> generate_phantoms(const PhantomSpec& spec, std::size_t n);

}  // namespace triseg
