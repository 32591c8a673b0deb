#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "pag/data/adapt.hpp"
#include "pag/data/loaders.hpp"
#include "pag/data/synth.hpp"

using namespace pag;
using namespace pag::data;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("pag_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::vector<uint8_t>& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

std::vector<uint8_t> gzip_bytes(const std::vector<uint8_t>& raw) {
  z_stream s{};
  REQUIRE(deflateInit2(&s, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) ==
          Z_OK);
  std::vector<uint8_t> out(deflateBound(&s, static_cast<uLong>(raw.size())));
  s.next_in = const_cast<Bytef*>(raw.data());
  s.avail_in = static_cast<uInt>(raw.size());
  s.next_out = out.data();
  s.avail_out = static_cast<uInt>(out.size());
  REQUIRE(deflate(&s, Z_FINISH) == Z_STREAM_END);
  out.resize(out.size() - s.avail_out);
  deflateEnd(&s);
  return out;
}

void push_u32be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

std::vector<uint8_t> idx_images(const std::vector<uint8_t>& pixels, int n, int rows, int cols) {
  std::vector<uint8_t> b;
  push_u32be(b, 2051);
  push_u32be(b, static_cast<uint32_t>(n));
  push_u32be(b, static_cast<uint32_t>(rows));
  push_u32be(b, static_cast<uint32_t>(cols));
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<uint8_t> idx_labels(const std::vector<uint8_t>& labels) {
  std::vector<uint8_t> b;
  push_u32be(b, 2049);
  push_u32be(b, static_cast<uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

// --- minimal MAT5 writer for loader fixtures ---

void push_u32le(std::vector<uint8_t>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>(x >> (8 * i)));
}

void pad8(std::vector<uint8_t>& v, size_t start) {
  while ((v.size() - start) % 8 != 0) v.push_back(0);
}

void push_element(std::vector<uint8_t>& v, uint32_t type, const std::vector<uint8_t>& payload,
                  bool small_form) {
  if (small_form && payload.size() <= 4) {
    push_u32le(v, type | (static_cast<uint32_t>(payload.size()) << 16));
    size_t start = v.size();
    v.insert(v.end(), payload.begin(), payload.end());
    while (v.size() - start < 4) v.push_back(0);
    return;
  }
  push_u32le(v, type);
  push_u32le(v, static_cast<uint32_t>(payload.size()));
  size_t start = v.size();
  v.insert(v.end(), payload.begin(), payload.end());
  pad8(v, start);
}

std::vector<uint8_t> mat_matrix(const std::string& name, const std::vector<int32_t>& dims,
                                uint32_t mat_class, uint32_t mi_type,
                                const std::vector<uint8_t>& data, bool small_name) {
  std::vector<uint8_t> body;
  std::vector<uint8_t> flags;
  push_u32le(flags, mat_class);
  push_u32le(flags, 0);
  push_element(body, 6, flags, false);
  std::vector<uint8_t> dimbytes;
  for (int32_t d : dims) push_u32le(dimbytes, static_cast<uint32_t>(d));
  push_element(body, 5, dimbytes, false);
  push_element(body, 1, std::vector<uint8_t>(name.begin(), name.end()), small_name);
  push_element(body, mi_type, data, false);

  std::vector<uint8_t> elem;
  push_element(elem, 14, body, false);
  return elem;
}

std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> out(bound);
  REQUIRE(compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK);
  out.resize(bound);
  return out;
}

std::vector<uint8_t> mat5_file(const std::vector<std::vector<uint8_t>>& matrices,
                               bool compressed) {
  std::vector<uint8_t> b(128, 0);
  const char* desc = "MATLAB 5.0 MAT-file, synthetic fixture";
  std::memcpy(b.data(), desc, std::strlen(desc));
  b[124] = 0x00;
  b[125] = 0x01;
  b[126] = 'I';
  b[127] = 'M';
  for (const auto& m : matrices) {
    if (compressed) {
      push_element(b, 15, zlib_compress(m), false);
    } else {
      b.insert(b.end(), m.begin(), m.end());
    }
  }
  return b;
}

}  // namespace

TEST_CASE("mnist idx loading, gzip fallback, and corruption errors") {
  auto root = make_temp_dir("mnist");
  const int n = 4;
  std::vector<uint8_t> pixels(static_cast<size_t>(n) * 28 * 28);
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint8_t>(i % 251);
  std::vector<uint8_t> labels{3, 1, 4, 1};

  write_file(root / "mnist/train-images-idx3-ubyte", idx_images(pixels, n, 28, 28));
  write_file(root / "mnist/train-labels-idx1-ubyte", idx_labels(labels));
  // validation split stored gzipped, exercising the .gz fallback
  write_file(root / "mnist/t10k-images-idx3-ubyte.gz", gzip_bytes(idx_images(pixels, n, 28, 28)));
  write_file(root / "mnist/t10k-labels-idx1-ubyte.gz", gzip_bytes(idx_labels(labels)));

  auto train = load_dataset(mnist_spec(), Split::train, root.string());
  CHECK(train.size() == 4);
  CHECK(train.labels == std::vector<int32_t>{3, 1, 4, 1});
  CHECK(train.images.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(train.images.at(0, 0, 0, 5) == doctest::Approx(5.0 / 255.0));

  auto val = load_dataset(mnist_spec(), Split::validation, root.string());
  CHECK(val.images == train.images);

  auto empty = make_temp_dir("mnist_empty");
  CHECK_THROWS_WITH_AS(load_dataset(mnist_spec(), Split::train, empty.string()),
                       doctest::Contains("train-images-idx3-ubyte"), DataError);

  auto bad = idx_images(pixels, 100, 28, 28);  // claims more images than present
  write_file(root / "mnist/train-images-idx3-ubyte", bad);
  CHECK_THROWS_AS(load_dataset(mnist_spec(), Split::train, root.string()), CorruptDataError);
}

TEST_CASE("usps libsvm text loading") {
  auto root = make_temp_dir("usps");
  std::string text;
  // digit 0 is stored as label 1; absent features mean background (-1)
  text += "1";
  for (int i = 1; i <= 256; ++i) text += " " + std::to_string(i) + ":" + (i == 1 ? "1.0" : "-1.0");
  text += "\n10 1:0.0 256:1.0\n";
  write_text(root / "usps/usps", text);
  write_text(root / "usps/usps.t", "2 1:-1.0\n");

  auto train = load_dataset(usps_spec(), Split::train, root.string());
  REQUIRE(train.size() == 2);
  CHECK(train.labels == std::vector<int32_t>{0, 9});
  CHECK(train.images.at(0, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(train.images.at(0, 0, 0, 1) == doctest::Approx(0.0));
  CHECK(train.images.at(1, 0, 0, 0) == doctest::Approx(0.5));
  CHECK(train.images.at(1, 0, 15, 15) == doctest::Approx(1.0));
  CHECK(train.images.at(1, 0, 8, 8) == doctest::Approx(0.0));

  auto val = load_dataset(usps_spec(), Split::validation, root.string());
  CHECK(val.labels == std::vector<int32_t>{1});

  write_text(root / "usps/usps", "11 1:0.5\n");
  CHECK_THROWS_AS(load_dataset(usps_spec(), Split::train, root.string()), CorruptDataError);
}

TEST_CASE("cifar10 binary batch loading") {
  auto root = make_temp_dir("cifar");
  auto record = [](uint8_t label, uint8_t base) {
    std::vector<uint8_t> r{label};
    for (int i = 0; i < 3072; ++i) r.push_back(static_cast<uint8_t>((base + i) % 256));
    return r;
  };
  for (int b = 1; b <= 5; ++b)
    write_file(root / ("cifar10/data_batch_" + std::to_string(b) + ".bin"),
               record(static_cast<uint8_t>(b % 10), static_cast<uint8_t>(b)));
  write_file(root / "cifar10/test_batch.bin", record(7, 0));

  auto train = load_dataset(cifar10_spec(), Split::train, root.string());
  REQUIRE(train.size() == 5);
  CHECK(train.labels == std::vector<int32_t>{1, 2, 3, 4, 5});
  // channel-major record layout: red plane first
  CHECK(train.images.at(0, 0, 0, 0) == doctest::Approx(1.0 / 255.0));
  CHECK(train.images.at(0, 1, 0, 0) == doctest::Approx(((1 + 1024) % 256) / 255.0));
  CHECK(train.images.at(0, 2, 0, 0) == doctest::Approx(((1 + 2048) % 256) / 255.0));

  auto val = load_dataset(cifar10_spec(), Split::validation, root.string());
  CHECK(val.labels == std::vector<int32_t>{7});

  write_file(root / "cifar10/test_batch.bin", {1, 2, 3});
  CHECK_THROWS_AS(load_dataset(cifar10_spec(), Split::validation, root.string()),
                  CorruptDataError);
}

TEST_CASE("svhn mat file loading") {
  auto root = make_temp_dir("svhn");
  const int n = 3, H = 32, W = 32, C = 3;
  // column-major uint8 X with dims (32, 32, 3, N)
  std::vector<uint8_t> x(static_cast<size_t>(H) * W * C * n);
  auto src_index = [&](int h, int w, int c, int i) {
    return static_cast<size_t>(h) + static_cast<size_t>(H) * w + static_cast<size_t>(H) * W * c +
           static_cast<size_t>(H) * W * C * i;
  };
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          x[src_index(h, w, c, i)] = static_cast<uint8_t>((i * 37 + c * 11 + h * 3 + w) % 256);
  // labels as doubles with the "10 means 0" convention
  std::vector<uint8_t> y(8 * n);
  const double yv[n] = {10.0, 1.0, 7.0};
  std::memcpy(y.data(), yv, sizeof(yv));

  auto Xm = mat_matrix("X", {H, W, C, n}, 9, 2, x, true);
  auto Ym = mat_matrix("y", {n, 1}, 6, 9, y, true);
  write_file(root / "svhn/train_32x32.mat", mat5_file({Xm, Ym}, true));
  write_file(root / "svhn/test_32x32.mat", mat5_file({Xm, Ym}, false));

  for (Split split : {Split::train, Split::validation}) {
    auto ds = load_dataset(svhn_spec(), split, root.string());
    REQUIRE(ds.size() == 3);
    CHECK(ds.labels == std::vector<int32_t>{0, 1, 7});
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; h += 7)
          for (int w = 0; w < W; w += 5)
            CHECK(ds.images.at(i, c, h, w) ==
                  doctest::Approx(x[src_index(h, w, c, i)] / 255.0));
  }

  auto truncated = mat5_file({Xm, Ym}, true);
  truncated.resize(truncated.size() / 3);
  write_file(root / "svhn/train_32x32.mat", truncated);
  CHECK_THROWS_AS(load_dataset(svhn_spec(), Split::train, root.string()), CorruptDataError);
}

TEST_CASE("cub annotation parsing") {
  auto root = make_temp_dir("cub");
  write_text(root / "images.txt", "1 001.Bird/a.jpg\n2 001.Bird/b.jpg\n3 002.Crow/c.jpg\n");
  write_text(root / "image_class_labels.txt", "1 1\n2 1\n3 2\n");
  write_text(root / "bounding_boxes.txt",
             "1 60.0 27.0 325.0 304.0\n2 10.5 20.5 30.0 40.0\n3 0.0 0.0 5.0 5.0\n");

  auto anns = load_cub_annotations(root.string());
  REQUIRE(anns.size() == 3);
  CHECK(anns[0].image_path == "001.Bird/a.jpg");
  CHECK(anns[0].class_label == 0);
  CHECK(anns[0].gt_box == wsol::BoundingBox{60.0, 27.0, 385.0, 331.0});
  CHECK(anns[1].gt_box == wsol::BoundingBox{10.5, 20.5, 40.5, 60.5});
  CHECK(anns[2].class_label == 1);
  for (const auto& a : anns) CHECK(a.gt_box.valid());

  write_text(root / "image_class_labels.txt", "1 1\n2 1\n");
  CHECK_THROWS_WITH_AS(load_cub_annotations(root.string()), doctest::Contains("inconsistent"),
                       DataError);

  auto root2 = make_temp_dir("cub2");
  write_text(root2 / "images.txt", "1 a.jpg\n");
  write_text(root2 / "image_class_labels.txt", "1 1\n");
  CHECK_THROWS_WITH_AS(load_cub_annotations(root2.string()),
                       doctest::Contains("bounding_boxes.txt"), DataError);
}

TEST_CASE("dataset cache round trip") {
  auto dir = make_temp_dir("cache");
  SynthOptions opt;
  opt.count = 24;
  auto fx = synth_fixture(FixtureKind::classification, 5, opt);
  const std::string path = (dir / "synth_train.cache").string();
  save_cache(path, fx.dataset);
  auto back = load_cache(path, fx.dataset.spec, Split::train);
  REQUIRE(back.size() == fx.dataset.size());
  CHECK(back.labels == fx.dataset.labels);
  for (size_t i = 0; i < back.images.numel(); ++i)
    CHECK(std::abs(back.images[i] - fx.dataset.images[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("adapt_domain identity, channel rules, and resize") {
  SynthOptions opt;
  opt.count = 6;
  auto fx = synth_fixture(FixtureKind::classification, 9, opt);
  const auto& spec = fx.dataset.spec;

  auto same = adapt_domain(fx.dataset.images, spec, spec);
  CHECK(same == fx.dataset.images);

  DatasetSpec rgb = spec;
  rgb.channels = 3;
  auto tripled = adapt_domain(fx.dataset.images, spec, rgb);
  REQUIRE(tripled.dim(1) == 3);
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 28; h += 5)
        for (int w = 0; w < 28; w += 5)
          CHECK(tripled.at(i, c, h, w) == fx.dataset.images.at(i, 0, h, w));

  // replication then luminance collapse returns the original exactly
  auto collapsed = adapt_domain(tripled, rgb, spec);
  CHECK(collapsed == fx.dataset.images);

  DatasetSpec big = rgb;
  big.height = 32;
  big.width = 32;
  auto resized = adapt_domain(tripled, rgb, big);
  CHECK(resized.shape() == std::vector<int>{6, 3, 32, 32});
  CHECK(resized.min_value() >= 0.0f);
  CHECK(resized.max_value() <= 1.0f);

  DatasetSpec two = spec;
  two.channels = 2;
  CHECK_THROWS_AS(adapt_domain(fx.dataset.images, spec, two), UnsupportedError);
  CHECK_THROWS_AS(adapt_domain(fx.dataset.images, rgb, spec), ShapeError);
}

TEST_CASE("bilinear resize matches separable reference") {
  nn::Rng rng(31);
  auto img = testutil::random_tensor<float>({1, 1, 2, 2}, rng, 0.0, 1.0);
  DatasetSpec small{"s", 1, 1, 2, 2}, large{"l", 1, 1, 4, 4};
  auto up = adapt_domain(img, small, large);

  // reference axis weights for 2 -> 4 with half-pixel centers
  const double w0[4] = {1.0, 0.75, 0.25, 0.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double ry = w0[y] * img.at(0, 0, 0, 0) + (1 - w0[y]) * img.at(0, 0, 1, 0);
      const double ry2 = w0[y] * img.at(0, 0, 0, 1) + (1 - w0[y]) * img.at(0, 0, 1, 1);
      const double want = w0[x] * ry + (1 - w0[x]) * ry2;
      CHECK(up.at(0, 0, y, x) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("synthetic classification fixture determinism and balance") {
  SynthOptions opt;
  opt.num_classes = 2;
  opt.count = 64;
  auto a = synth_fixture(FixtureKind::classification, 123, opt);
  auto b = synth_fixture(FixtureKind::classification, 123, opt);
  CHECK(a.dataset.images == b.dataset.images);
  CHECK(a.dataset.labels == b.dataset.labels);

  int zeros = 0;
  for (int32_t l : a.dataset.labels) zeros += (l == 0);
  CHECK(zeros == 32);

  auto c = synth_fixture(FixtureKind::classification, 124, opt);
  CHECK_FALSE(c.dataset.images == a.dataset.images);
}

TEST_CASE("synthetic localization fixture boxes match planted patches") {
  SynthOptions opt;
  opt.num_classes = 4;
  opt.count = 40;
  opt.height = 32;
  opt.width = 32;
  auto fx = synth_fixture(FixtureKind::localization, 77, opt);
  REQUIRE(fx.annotations.size() == 40);
  for (int i = 0; i < 40; ++i) {
    const auto& a = fx.annotations[i];
    CHECK(a.class_label == fx.dataset.labels[i]);
    CHECK(a.gt_box.valid());
    CHECK(a.gt_box.xmin >= 0);
    CHECK(a.gt_box.ymin >= 0);
    CHECK(a.gt_box.xmax <= 32);
    CHECK(a.gt_box.ymax <= 32);
    // patch pixels are brighter on average than the noise background
    double inside = 0, outside = 0;
    int nin = 0, nout = 0;
    for (int h = 0; h < 32; ++h)
      for (int w = 0; w < 32; ++w) {
        const bool in = w >= a.gt_box.xmin && w < a.gt_box.xmax && h >= a.gt_box.ymin &&
                        h < a.gt_box.ymax;
        (in ? inside : outside) += fx.dataset.images.at(i, 0, h, w);
        (in ? nin : nout) += 1;
      }
    CHECK(inside / nin > outside / nout + 0.2);
  }
}

TEST_CASE("transfer pair fixture shapes and pattern") {
  auto pair = synth_transfer_pair(42, 100, 50);
  CHECK(pair.source_train.size() == 100);
  CHECK(pair.source_val.size() == 50);
  CHECK(pair.target_val.size() == 50);
  CHECK(pair.source_train.spec.image_shape() == std::vector<int>{1, 28, 28});
  CHECK(pair.target_val.spec.image_shape() == std::vector<int>{1, 16, 16});
  CHECK(pair.source_train.split == Split::train);
  CHECK(pair.target_val.split == Split::validation);

  // deterministic
  auto again = synth_transfer_pair(42, 100, 50);
  CHECK(again.source_train.images == pair.source_train.images);
  CHECK(again.target_val.images == pair.target_val.images);

  // the class-keyed pattern makes same-class borders more alike than cross-class
  const auto& ds = pair.source_train;
  auto border_dist = [&](int i, int j) {
    double d = 0;
    for (int h = 0; h < 28; ++h)
      for (int w = 0; w < 28; ++w)
        if (h < 3 || h >= 25 || w < 3 || w >= 25)
          d += std::abs(ds.images.at(i, 0, h, w) - ds.images.at(j, 0, h, w));
    return d;
  };
  // items 0 and 10 share a class (labels are round-robin); 0 and 1 do not
  CHECK(ds.labels[0] == ds.labels[10]);
  CHECK(ds.labels[0] != ds.labels[1]);
  CHECK(border_dist(0, 10) < border_dist(0, 1));
}
