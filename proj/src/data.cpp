#include "triseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "triseg/error.hpp"
#include "triseg/model.hpp"
#include "triseg/rng.hpp"

namespace fs = std::filesystem;

namespace triseg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<std::string> pgm_stems(const fs::path& dir) {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

// --- conversions ------------------------------------------------------------

Tensor gray_to_tensor(const GrayImage& img) {
  Tensor t(Shape{img.height, img.width, 1});
  const float scale = 1.0f / static_cast<float>(img.maxval);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t.data()[i] = static_cast<float>(img.pixels[i]) * scale;
  return t;
}

GrayImage tensor_to_gray(const Tensor& t, std::uint16_t maxval) {
  if (t.channels() != 1) throw ShapeError("tensor_to_gray: expected one channel, got " + t.shape().str());
  GrayImage img{t.height(), t.width(), maxval, std::vector<std::uint16_t>(t.size())};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(static_cast<double>(t.data()[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(v * maxval));
  }
  return img;
}

Tensor binarize(const Tensor& t, float threshold) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = t.data()[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

bool is_binary(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

// --- dataset ----------------------------------------------------------------

std::vector<RawPair> load_dataset(const fs::path& root) {
  const fs::path images = root / "images";
  const fs::path masks = root / "masks";
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  if (!fs::exists(images) && !fs::exists(masks)) return {};
  if (!fs::is_directory(images)) throw DataError("dataset " + root.string() + " has no images/ directory");
  if (!fs::is_directory(masks)) throw DataError("dataset " + root.string() + " has no masks/ directory");

  std::vector<RawPair> out;
  for (const auto& id : pgm_stems(images)) {
    const fs::path mask_path = masks / (id + ".pgm");
    if (!fs::exists(mask_path)) throw DataError("sample '" + id + "': missing mask " + mask_path.string());
    GrayImage img, msk;
    try {
      img = read_pgm(images / (id + ".pgm"));
      msk = read_pgm(mask_path);
    } catch (const DataError& e) {
      throw DataError("sample '" + id + "': " + e.what());
    }
    if (img.height != msk.height || img.width != msk.width)
      throw DataError("sample '" + id + "': image is " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " but mask is " + std::to_string(msk.height) + "x" +
                      std::to_string(msk.width));
    RawPair pair{gray_to_tensor(img), Tensor(Shape{msk.height, msk.width, 1}), id};
    const double half = msk.maxval / 2.0;
    for (std::size_t i = 0; i < msk.pixels.size(); ++i) pair.mask.data()[i] = msk.pixels[i] >= half ? 1.0f : 0.0f;
    out.push_back(std::move(pair));
  }
  return out;
}

void write_pair(const fs::path& root, const RawPair& pair) {
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (ec) throw DataError("cannot create dataset directories under " + root.string() + ": " + ec.message());
  write_pgm(root / "images" / (pair.id + ".pgm"), tensor_to_gray(pair.image));
  write_pgm(root / "masks" / (pair.id + ".pgm"), tensor_to_gray(pair.mask));
}

// --- ROI ----------------------------------------------------------------------

Tensor crop_window(const Tensor& t, RoiOrigin o, std::size_t window) {
  if (window == 0 || o.y + window > t.height() || o.x + window > t.width())
    throw DataError("window " + std::to_string(window) + " at (" + std::to_string(o.y) + "," + std::to_string(o.x) +
                    ") exceeds source " + t.shape().str());
  Tensor out(Shape{window, window, t.channels()});
  for (std::size_t y = 0; y < window; ++y)
    std::copy_n(&t.data()[t.offset(o.y + y, o.x, 0)], window * t.channels(), &out.data()[out.offset(y, 0, 0)]);
  return out;
}

std::optional<RoiOrigin> mask_bbox_center(const Tensor& mask) {
  std::size_t ymin = mask.height(), ymax = 0, xmin = mask.width(), xmax = 0;
  bool any = false;
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x)
      if (mask(y, x, 0) >= 0.5f) {
        any = true;
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
      }
  if (!any) return std::nullopt;
  return RoiOrigin{(ymin + ymax) / 2, (xmin + xmax) / 2};
}

RoiOrigin centered_origin(RoiOrigin center, std::size_t height, std::size_t width, std::size_t window) {
  auto place = [window](std::size_t c, std::size_t extent) -> std::size_t {
    const std::ptrdiff_t o = static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(window / 2);
    const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(extent) - static_cast<std::ptrdiff_t>(window);
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(o, 0, std::max<std::ptrdiff_t>(hi, 0)));
  };
  return RoiOrigin{place(center.y, height), place(center.x, width)};
}

Sample crop_roi(const Tensor& image, const Tensor& mask, std::optional<RoiOrigin> origin,
                std::size_t window, std::string id) {
  if (image.channels() != 1 || mask.shape() != image.shape())
    throw DataError("sample '" + id + "': image " + image.shape().str() + " and mask " + mask.shape().str() +
                    " must be equal single-channel shapes");
  if (window == 0 || window > image.height() || window > image.width())
    throw DataError("sample '" + id + "': window " + std::to_string(window) + " exceeds source " +
                    image.shape().str());
  RoiOrigin o;
  if (origin) {
    o = *origin;
    if (o.y + window > image.height() || o.x + window > image.width())
      throw DataError("sample '" + id + "': window at (" + std::to_string(o.y) + "," + std::to_string(o.x) +
                      ") exceeds source " + image.shape().str());
  } else {
    const auto c = mask_bbox_center(mask);
    if (!c) throw DataError("sample '" + id + "': empty mask, cannot place ROI automatically");
    o = centered_origin(*c, image.height(), image.width(), window);
  }
  Sample s{crop_window(image, o, window), binarize(crop_window(mask, o, window)), std::move(id), o};
  if (window != kInputSize) {
    s.image = resize_image(s.image, kInputSize, kInputSize);
    s.mask = resize_mask(s.mask, kInputSize, kInputSize);
  }
  return s;
}

Tensor resize_mask(const Tensor& mask, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw ShapeError("resize_mask: zero target");
  Tensor out(Shape{target_h, target_w, mask.channels()});
  for (std::size_t y = 0; y < target_h; ++y) {
    const std::size_t sy = std::min(mask.height() - 1, (2 * y + 1) * mask.height() / (2 * target_h));
    for (std::size_t x = 0; x < target_w; ++x) {
      const std::size_t sx = std::min(mask.width() - 1, (2 * x + 1) * mask.width() / (2 * target_w));
      for (std::size_t c = 0; c < mask.channels(); ++c) out(y, x, c) = mask(sy, sx, c) >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Tensor resize_image(const Tensor& image, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw ShapeError("resize_image: zero target");
  Tensor out(Shape{target_h, target_w, image.channels()});
  const double sy = static_cast<double>(image.height()) / target_h;
  const double sx = static_cast<double>(image.width()) / target_w;
  for (std::size_t y = 0; y < target_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height() - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < target_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width() - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      for (std::size_t c = 0; c < image.channels(); ++c) {
        const double top = image(y0, x0, c) * (1 - wx) + image(y0, x1, c) * wx;
        const double bot = image(y1, x0, c) * (1 - wx) + image(y1, x1, c) * wx;
        out(y, x, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

// --- split --------------------------------------------------------------------

SplitDataset split(std::vector<Sample> samples, double ratio, std::uint64_t seed) {
  if (samples.size() < 2) throw DataError("split: need at least 2 samples, got " + std::to_string(samples.size()));
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split: ratio must be in (0, 1)");
  Rng rng(seed);
  for (std::size_t i = samples.size() - 1; i > 0; --i) std::swap(samples[i], samples[rng.index(i + 1)]);
  const std::size_t n = samples.size();
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))), 1, n - 1);
  SplitDataset out;
  out.seed = seed;
  out.ratio = ratio;
  out.train.assign(std::make_move_iterator(samples.begin()),
                   std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)));
  out.test.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)),
                  std::make_move_iterator(samples.end()));
  return out;
}

// --- manifest / preprocessing -------------------------------------------------------

std::map<std::string, RoiOrigin> read_roi_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ROI manifest " + path.string());
  std::map<std::string, RoiOrigin> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id)) continue;
    long long y = -1, x = -1;
    std::string extra;
    if (!(ls >> y >> x) || y < 0 || x < 0 || (ls >> extra))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'id y x'");
    out[id] = RoiOrigin{static_cast<std::size_t>(y), static_cast<std::size_t>(x)};
  }
  return out;
}

std::vector<Sample> preprocess(const std::vector<RawPair>& raw, const std::map<std::string, RoiOrigin>* manifest,
                               std::size_t window) {
  std::vector<Sample> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    std::optional<RoiOrigin> origin;
    if (manifest) {
      auto it = manifest->find(r.id);
      if (it == manifest->end()) throw DataError("sample '" + r.id + "': not listed in ROI manifest");
      origin = it->second;
    }
    out.push_back(crop_roi(r.image, r.mask, origin, window, r.id));
  }
  return out;
}

// --- phantoms -------------------------------------------------------------------

void PhantomSpec::validate() const {
  if (image_size < kInputSize)
    throw std::invalid_argument("phantom image_size must be >= " + std::to_string(kInputSize));
  if (!(axis_min > 0.0) || !(axis_max >= axis_min))
    throw std::invalid_argument("phantom axes must satisfy 0 < axis_min <= axis_max");
  if (2.0 * axis_max + 4.0 > static_cast<double>(image_size))
    throw std::invalid_argument("phantom ellipse axes exceed the image");
  if (!(contrast > noise)) throw std::invalid_argument("phantom contrast must exceed noise amplitude");
  if (noise < 0.0 || texture < 0.0 || !(texture_scale > 0.0) || background < 0.0 || background > 1.0)
    throw std::invalid_argument("phantom intensity parameters out of range");
}

PhantomSpec PhantomSpec::parse(const std::string& text, PhantomSpec s) {
  // Entries are key=value tokens separated by whitespace or newlines, so the
  // one-line form printed by str() reads back. Spaces around '=' are allowed.
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    static const std::regex around_eq(R"(\s*=\s*)");
    std::istringstream tokens(std::regex_replace(line, around_eq, "="));
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
        throw std::invalid_argument("phantom spec: expected key=value, got '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      auto number = [&](auto parse) {
        std::size_t used = 0;
        try {
          const auto v = parse(val, &used);
          if (used == val.size()) return v;
        } catch (const std::logic_error&) {
        }
        throw std::invalid_argument("phantom spec: bad value for " + key + ": '" + val + "'");
      };
      auto real = [&] { return number([](const std::string& v, std::size_t* n) { return std::stod(v, n); }); };
      auto whole = [&] {
        if (val.front() == '-') throw std::invalid_argument("phantom spec: " + key + " must be non-negative");
        return number([](const std::string& v, std::size_t* n) { return std::stoull(v, n); });
      };
      if (key == "image_size") s.image_size = whole();
      else if (key == "axis_min") s.axis_min = real();
      else if (key == "axis_max") s.axis_max = real();
      else if (key == "background") s.background = real();
      else if (key == "contrast") s.contrast = real();
      else if (key == "noise") s.noise = real();
      else if (key == "texture") s.texture = real();
      else if (key == "texture_scale") s.texture_scale = real();
      else if (key == "seed") s.seed = whole();
      else throw std::invalid_argument("phantom spec: unknown key '" + key + "'");
    }
  }
  return s;
}

PhantomSpec PhantomSpec::parse(const std::string& text) { return parse(text, PhantomSpec{}); }

std::string PhantomSpec::str() const {
  std::ostringstream os;
  os << "image_size=" << image_size << " axis_min=" << axis_min << " axis_max=" << axis_max
     << " background=" << background << " contrast=" << contrast << " noise=" << noise << " texture=" << texture
     << " texture_scale=" << texture_scale << " seed=" << seed;
  return os.str();
}

bool Ellipse::contains(std::size_t y, std::size_t x) const {
  const double dy = (static_cast<double>(y) + 0.5) - cy;
  const double dx = (static_cast<double>(x) + 0.5) - cx;
  const double u = dx * std::cos(theta) + dy * std::sin(theta);
  const double v = -dx * std::sin(theta) + dy * std::cos(theta);
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

std::string phantom_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom_%04zu", index);
  return buf;
}

Phantom render_phantom(const PhantomSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng(splitmix64(spec.seed ^ splitmix64(index)));
  const double n = static_cast<double>(spec.image_size);

  Ellipse e;
  e.a = rng.uniform(spec.axis_min, spec.axis_max);
  e.b = rng.uniform(spec.axis_min, spec.axis_max);
  e.theta = rng.uniform(0.0, std::numbers::pi);
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double ext_x = std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s);
  const double ext_y = std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c);
  e.cx = rng.uniform(ext_x + 1.0, n - ext_x - 1.0);
  e.cy = rng.uniform(ext_y + 1.0, n - ext_y - 1.0);

  // Three oriented sinusoids form a smooth background texture in [-1, 1].
  struct Wave {
    double ky, kx, phase;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = spec.texture_scale * rng.uniform(0.75, 1.5);
    w = {std::sin(dir) * 2.0 * std::numbers::pi / len, std::cos(dir) * 2.0 * std::numbers::pi / len,
         rng.uniform(0.0, 2.0 * std::numbers::pi)};
  }

  const Shape shape{spec.image_size, spec.image_size, 1};
  Phantom p{RawPair{Tensor(shape), Tensor(shape), phantom_id(index)}, e};
  for (std::size_t y = 0; y < spec.image_size; ++y)
    for (std::size_t x = 0; x < spec.image_size; ++x) {
      double tex = 0.0;
      for (const auto& w : waves) tex += std::sin(w.ky * y + w.kx * x + w.phase);
      double v = spec.background + spec.texture * tex / 3.0;
      const bool inside = e.contains(y, x);
      if (inside) v += spec.contrast;
      if (spec.noise > 0.0) v += rng.uniform(-spec.noise, spec.noise);
      p.pair.image(y, x, 0) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      p.pair.mask(y, x, 0) = inside ? 1.0f : 0.0f;
    }
  return p;
}

std::vector<Sample> generate_phantoms(const PhantomSpec& spec, std::size_t n) {
  if (n == 0) throw std::invalid_argument("generate_phantoms: n must be >= 1");
  spec.validate();
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ph = render_phantom(spec, i);
    out.push_back(crop_roi(ph.pair.image, ph.pair.mask, std::nullopt, kInputSize, ph.pair.id));
  }
  return out;
}

}  // namespace triseg
