#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "suites.hpp"
#include "triseg/data.hpp"

using namespace triseg;
namespace fs = std::filesystem;

namespace {

// Quadratic-form point-in-ellipse test: d^T M d <= 1 with
// M = R diag(1/a^2, 1/b^2) R^T, expanded into A dx^2 + B dx dy + C dy^2.
bool inside_quadratic(const Ellipse& e, double py, double px) {
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double ia = 1.0 / (e.a * e.a), ib = 1.0 / (e.b * e.b);
  const double A = c * c * ia + s * s * ib;
  const double B = 2.0 * c * s * (ia - ib);
  const double C = s * s * ia + c * c * ib;
  const double dx = px - e.cx, dy = py - e.cy;
  return A * dx * dx + B * dx * dy + C * dy * dy <= 1.0 + 1e-12;
}

std::size_t count_ones(const Tensor& t) {
  std::size_t n = 0;
  for (float v : t.values()) n += v == 1.0f;
  return n;
}

Tensor disk_mask(std::size_t size, double cy, double cx, double r) {
  Tensor m(Shape{size, size, 1});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      m(y, x, 0) = dy * dy + dx * dx <= r * r ? 1.0f : 0.0f;
    }
  return m;
}

std::vector<Sample> numbered_samples(std::size_t n) {
  std::vector<Sample> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i].id = std::to_string(i);
  return v;
}

}  // namespace

TEST_CASE("load_dataset") {
  testing::TempDir dir("data");
  SUBCASE("empty directory gives an empty list") {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    CHECK(load_dataset(dir.path()).empty());
  }
  SUBCASE("512x512 pairs load in lexicographic order") {
    PhantomSpec spec;
    for (std::size_t i : {2u, 0u, 1u}) write_pair(dir.path(), render_phantom(spec, i).pair);
    const auto raw = load_dataset(dir.path());
    REQUIRE(raw.size() == 3);
    CHECK(raw[0].id == "phantom_0000");
    CHECK(raw[2].id == "phantom_0002");
    CHECK(raw[0].image.shape() == Shape{512, 512, 1});
    for (float v : raw[0].image.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    CHECK(is_binary(raw[0].mask));
    CHECK(raw[1].mask == render_phantom(spec, 1).pair.mask);
  }
  SUBCASE("image without mask names the id") {
    write_pair(dir.path(), RawPair{Tensor(Shape{4, 4, 1}), Tensor(Shape{4, 4, 1}), "ok"});
    write_pgm(dir / "images/lonely.pgm", GrayImage{4, 4, 255, std::vector<std::uint16_t>(16, 0)});
    try {
      load_dataset(dir.path());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("lonely") != std::string::npos);
    }
  }
  SUBCASE("dimension mismatch names the id") {
    fs::create_directories(dir / "images");
    write_pgm(dir / "images/odd.pgm", GrayImage{4, 4, 255, std::vector<std::uint16_t>(16, 0)});
    fs::create_directories(dir / "masks");
    write_pgm(dir / "masks/odd.pgm", GrayImage{4, 5, 255, std::vector<std::uint16_t>(20, 0)});
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("odd"), DataError);
  }
  SUBCASE("malformed header names the id") {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    write_file(dir / "images/bad.pgm", {'P', '5', '\n', 'x'});
    write_pgm(dir / "masks/bad.pgm", GrayImage{1, 1, 255, {0}});
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("bad"), DataError);
  }
  SUBCASE("missing masks directory") {
    fs::create_directories(dir / "images");
    CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
  }
  SUBCASE("16-bit masks binarise at half maxval") {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    write_pgm(dir / "images/m.pgm", GrayImage{1, 3, 1000, {0, 500, 1000}});
    write_pgm(dir / "masks/m.pgm", GrayImage{1, 3, 1000, {499, 500, 1000}});
    const auto raw = load_dataset(dir.path());
    CHECK(raw[0].image.get(0, 1, 0) == doctest::Approx(0.5));
    CHECK(raw[0].mask == Tensor::from_data(Shape{1, 3, 1}, {0, 1, 1}));
  }
}

TEST_CASE("crop_roi centring and clamping") {
  const Tensor image(Shape{512, 512, 1}, 0.3f);
  // Bounding box 246..266 on both axes -> centre 256.
  const auto centred = crop_roi(image, disk_mask(512, 256.5, 256.5, 10.0), std::nullopt, 100, "c");
  CHECK(centred.roi_origin == RoiOrigin{206, 206});
  const auto corner = crop_roi(image, disk_mask(512, 10.5, 10.5, 4.0), std::nullopt, 100, "k");
  CHECK(corner.roi_origin == RoiOrigin{0, 0});
  const auto far = crop_roi(image, disk_mask(512, 505.5, 500.5, 4.0), std::nullopt, 100, "f");
  CHECK(far.roi_origin == RoiOrigin{412, 412});
  CHECK(centered_origin(RoiOrigin{256, 256}, 512, 512, 100) == RoiOrigin{206, 206});
  CHECK(centered_origin(RoiOrigin{10, 10}, 512, 512, 100) == RoiOrigin{0, 0});
}

TEST_CASE("crop_roi errors") {
  const Tensor image(Shape{200, 200, 1});
  CHECK_THROWS_AS(crop_roi(image, Tensor(Shape{200, 200, 1}), std::nullopt, 100, "empty"), DataError);
  CHECK_THROWS_AS(crop_roi(image, Tensor(Shape{200, 200, 1}), RoiOrigin{150, 0}, 100, "out"), DataError);
  CHECK_THROWS_AS(crop_roi(image, Tensor(Shape{200, 201, 1}), RoiOrigin{0, 0}, 100, "shape"), DataError);
  CHECK_THROWS_AS(crop_roi(Tensor(Shape{80, 80, 1}), Tensor(Shape{80, 80, 1}), RoiOrigin{0, 0}, 100, "small"),
                  DataError);
  CHECK_NOTHROW(crop_roi(image, Tensor(Shape{200, 200, 1}), RoiOrigin{100, 100}, 100, "edge"));
}

TEST_CASE("crop_roi is pure windowing and preserves tumour pixel counts") {
  Rng rng(40);
  for (int i = 0; i < 300; ++i) {
    const std::size_t size = testing::rand_between(rng, 100, 180);
    const double r = rng.uniform(1.0, 30.0);
    const double cy = rng.uniform(r, size - r), cx = rng.uniform(r, size - r);
    const auto mask = disk_mask(size, cy, cx, r);
    if (count_ones(mask) == 0) continue;
    const auto image = testing::random_tensor<float>(rng, Shape{size, size, 1}, 0.0, 1.0);
    const auto s = crop_roi(image, mask, std::nullopt, 100, "r");
    CHECK(count_ones(s.mask) == count_ones(mask));
    CHECK(is_binary(s.mask));
    for (std::size_t y = 0; y < 100; y += 7)
      for (std::size_t x = 0; x < 100; x += 7)
        CHECK(s.image(y, x, 0) == image(s.roi_origin.y + y, s.roi_origin.x + x, 0));
  }
}

TEST_CASE("crop_roi with a non-100 window resamples to 100x100") {
  Rng rng(41);
  const auto image = testing::random_tensor<float>(rng, Shape{300, 300, 1}, 0.0, 1.0);
  const auto s = crop_roi(image, disk_mask(300, 150, 150, 40), std::nullopt, 200, "w");
  CHECK(s.image.shape() == Shape{100, 100, 1});
  CHECK(is_binary(s.mask));
  CHECK(s.roi_origin == RoiOrigin{49, 49});
}

TEST_CASE("resize_mask") {
  Rng rng(42);
  Tensor m(Shape{100, 100, 1});
  for (auto& v : m.values()) v = rng.index(2) ? 1.0f : 0.0f;
  CHECK(resize_mask(m, 100, 100) == m);
  CHECK(resize_mask(Tensor(Shape{200, 200, 1}, 1.0f), 100, 100) == Tensor(Shape{100, 100, 1}, 1.0f));
  Tensor checker(Shape{200, 200, 1});
  for (std::size_t y = 0; y < 200; ++y)
    for (std::size_t x = 0; x < 200; ++x) checker(y, x, 0) = ((y / 2 + x / 2) % 2) ? 1.0f : 0.0f;
  CHECK(is_binary(resize_mask(checker, 100, 100)));
  CHECK(is_binary(resize_mask(checker, 37, 61)));
}

TEST_CASE("split") {
  SUBCASE("1440 samples split 1152/288") {
    const auto s = split(numbered_samples(1440), 0.8, 1);
    CHECK(s.train.size() == 1152);
    CHECK(s.test.size() == 288);
  }
  SUBCASE("10 samples split 8/2") {
    const auto s = split(numbered_samples(10), 0.8, 3);
    CHECK(s.train.size() == 8);
    CHECK(s.test.size() == 2);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(split(numbered_samples(1), 0.8, 1), DataError);
    CHECK_THROWS_AS(split(numbered_samples(5), 1.0, 1), std::invalid_argument);
  }
  SUBCASE("determinism and disjointness over 1000 seeds") {
    std::size_t distinct_orders = 0;
    std::vector<std::string> first_order;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const std::size_t n = 2 + seed % 40;
      const auto a = split(numbered_samples(n), 0.8, seed);
      const auto b = split(numbered_samples(n), 0.8, seed);
      std::set<std::string> train, test;
      for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].id == b.train[i].id);
        train.insert(a.train[i].id);
      }
      for (std::size_t i = 0; i < a.test.size(); ++i) {
        CHECK(a.test[i].id == b.test[i].id);
        test.insert(a.test[i].id);
      }
      CHECK(train.size() + test.size() == n);
      for (const auto& id : test) CHECK(train.count(id) == 0);
      CHECK(std::abs(static_cast<double>(a.train.size()) - 0.8 * n) <= 1.0);
      if (n == 40) {
        std::vector<std::string> order;
        for (const auto& s : a.train) order.push_back(s.id);
        if (order != first_order) ++distinct_orders;
        first_order = order;
      }
    }
    CHECK(distinct_orders > 1);
    const auto x = split(numbered_samples(30), 0.8, 1), y = split(numbered_samples(30), 0.8, 2);
    bool differ = false;
    for (std::size_t i = 0; i < x.train.size(); ++i) differ |= x.train[i].id != y.train[i].id;
    CHECK(differ);
  }
}

TEST_CASE("ROI manifest") {
  testing::TempDir dir("manifest");
  {
    std::ofstream f(dir / "roi.txt");
    f << "# id y x\nphantom_0000 10 20\n\nphantom_0001 0 0  # trailing comment\n";
  }
  const auto m = read_roi_manifest(dir / "roi.txt");
  CHECK(m.size() == 2);
  CHECK(m.at("phantom_0000") == RoiOrigin{10, 20});
  {
    std::ofstream f(dir / "bad.txt");
    f << "a 1\n";
  }
  CHECK_THROWS_AS(read_roi_manifest(dir / "bad.txt"), DataError);
  CHECK_THROWS_AS(read_roi_manifest(dir / "none.txt"), DataError);

  PhantomSpec spec;
  spec.image_size = 128;
  const std::vector<RawPair> raw{render_phantom(spec, 0).pair, render_phantom(spec, 1).pair};
  const auto samples = preprocess(raw, &m);
  CHECK(samples[0].roi_origin == RoiOrigin{10, 20});
  const std::map<std::string, RoiOrigin> partial{{"phantom_0000", {0, 0}}};
  CHECK_THROWS_WITH_AS(preprocess(raw, &partial), doctest::Contains("phantom_0001"), DataError);
}

TEST_CASE("phantom masks equal an independent ellipse rasterisation") {
  PhantomSpec spec;
  spec.image_size = 160;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto ph = render_phantom(spec, i);
    std::size_t oracle = 0, mismatched = 0;
    for (std::size_t y = 0; y < spec.image_size; ++y)
      for (std::size_t x = 0; x < spec.image_size; ++x) {
        const bool in = inside_quadratic(ph.tumor, y + 0.5, x + 0.5);
        oracle += in;
        mismatched += in != (ph.pair.mask(y, x, 0) == 1.0f);
      }
    CHECK(count_ones(ph.pair.mask) == oracle);
    CHECK(mismatched == 0);
    CHECK(oracle > 0);
  }
  const auto samples = generate_phantoms(spec, 5);
  CHECK(samples.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(count_ones(samples[i].mask) == count_ones(render_phantom(spec, i).pair.mask));
    CHECK(samples[i].image.shape() == Shape{100, 100, 1});
    CHECK(is_binary(samples[i].mask));
  }
}

TEST_CASE("phantom construction") {
  PhantomSpec spec;
  spec.image_size = 128;
  spec.noise = 0.0;
  spec.contrast = 1.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto ph = render_phantom(spec, i);
    float min_tumour = 2.0f, max_background = -1.0f;
    for (std::size_t k = 0; k < ph.pair.image.size(); ++k) {
      const float v = ph.pair.image.data()[k];
      if (ph.pair.mask.data()[k] == 1.0f) min_tumour = std::min(min_tumour, v);
      else max_background = std::max(max_background, v);
    }
    CHECK(min_tumour > max_background);
  }

  PhantomSpec def;
  def.image_size = 128;
  const auto a = generate_phantoms(def, 3), b = generate_phantoms(def, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].id == phantom_id(i));
  }
  def.seed = 2;
  CHECK_FALSE(generate_phantoms(def, 1)[0].image == a[0].image);
}

TEST_CASE("phantom spec validation and parsing") {
  PhantomSpec s;
  CHECK_NOTHROW(s.validate());
  s.axis_max = 400;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.noise = 0.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_phantoms(PhantomSpec{}, 0), std::invalid_argument);

  const auto p = PhantomSpec::parse("# comment\nimage_size=256\ncontrast = 0.6\nseed=9\n");
  CHECK(p.image_size == 256);
  CHECK(p.contrast == 0.6);
  CHECK(p.seed == 9);
  CHECK(p.noise == PhantomSpec{}.noise);
  CHECK(PhantomSpec::parse(p.str()).str() == p.str());
  CHECK_THROWS_AS(PhantomSpec::parse("bogus=1"), std::invalid_argument);
  CHECK_THROWS_AS(PhantomSpec::parse("image_size"), std::invalid_argument);
  CHECK_THROWS_AS(PhantomSpec::parse("noise=0.1x"), std::invalid_argument);
  CHECK_THROWS_AS(PhantomSpec::parse("seed=-3"), std::invalid_argument);
  CHECK(PhantomSpec::parse("noise=0.01 seed=4").seed == 4);
}

TEST_CASE("samples leaving the module satisfy the sample invariants") {
  Rng rng(43);
  for (int i = 0; i < 40; ++i) {
    PhantomSpec spec;
    spec.image_size = testing::rand_between(rng, 100, 200);
    spec.axis_min = rng.uniform(3.0, 10.0);
    spec.axis_max = spec.axis_min + rng.uniform(0.0, 20.0);
    spec.noise = rng.uniform(0.0, 0.2);
    spec.contrast = spec.noise + rng.uniform(0.05, 0.5);
    spec.seed = rng.next();
    for (const auto& s : generate_phantoms(spec, 2)) {
      CHECK(s.image.shape() == Shape{100, 100, 1});
      CHECK(s.mask.shape() == Shape{100, 100, 1});
      CHECK(is_binary(s.mask));
      for (float v : s.image.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_CASE("tensor and gray conversions") {
  const auto t = Tensor::from_data(Shape{1, 3, 1}, {0.0f, 0.5f, 1.0f});
  const auto g = tensor_to_gray(t);
  CHECK(g.pixels == std::vector<std::uint16_t>{0, 128, 255});
  CHECK(gray_to_tensor(g).get(0, 2, 0) == 1.0f);
  CHECK(tensor_to_gray(t, 65535).pixels[2] == 65535);
  CHECK(binarize(t) == Tensor::from_data(Shape{1, 3, 1}, {0, 1, 1}));
  CHECK_FALSE(is_binary(t));
}
