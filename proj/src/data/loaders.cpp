#include "pag/data/loaders.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pag/nn/io.hpp"

namespace pag::data {
namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<uint8_t> inflate_bytes(const uint8_t* p, size_t n) {
  z_stream strm{};
  if (inflateInit2(&strm, 15 + 32) != Z_OK) throw Error("zlib init failed");
  std::vector<uint8_t> out;
  std::vector<uint8_t> chunk(1 << 20);
  strm.next_in = const_cast<Bytef*>(p);
  strm.avail_in = static_cast<uInt>(n);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    strm.next_out = chunk.data();
    strm.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw CorruptDataError("corrupt compressed stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - strm.avail_out));
    if (rc == Z_OK && strm.avail_in == 0 && strm.avail_out != 0) {
      inflateEnd(&strm);
      throw CorruptDataError("truncated compressed stream");
    }
  }
  inflateEnd(&strm);
  return out;
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

uint32_t le32(const uint8_t* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  auto bytes = read_file_bytes(path);
  std::vector<std::string> lines;
  std::string cur;
  for (uint8_t b : bytes) {
    if (b == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (b != '\r') {
      cur.push_back(static_cast<char>(b));
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

// ---------------------------------------------------------------------------
// MNIST idx files

nn::Tensor<float> parse_idx_images(const std::vector<uint8_t>& b, const std::string& path) {
  if (b.size() < 16 || be32(b.data()) != 2051)
    throw CorruptDataError("bad idx image header in " + path);
  const int n = static_cast<int>(be32(b.data() + 4));
  const int rows = static_cast<int>(be32(b.data() + 8));
  const int cols = static_cast<int>(be32(b.data() + 12));
  const size_t need = 16 + static_cast<size_t>(n) * rows * cols;
  if (b.size() < need) throw CorruptDataError("truncated idx image file " + path);
  nn::Tensor<float> t({n, 1, rows, cols});
  for (size_t i = 0; i < t.numel(); ++i) t[i] = b[16 + i] / 255.0f;
  return t;
}

std::vector<int32_t> parse_idx_labels(const std::vector<uint8_t>& b, const std::string& path) {
  if (b.size() < 8 || be32(b.data()) != 2049)
    throw CorruptDataError("bad idx label header in " + path);
  const size_t n = be32(b.data() + 4);
  if (b.size() < 8 + n) throw CorruptDataError("truncated idx label file " + path);
  std::vector<int32_t> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = b[8 + i];
  return labels;
}

LabeledDataset load_mnist(const DatasetSpec& spec, Split split, const std::string& dir) {
  const std::string stem = split == Split::train ? "train" : "t10k";
  const std::string ipath = dir + "/" + stem + "-images-idx3-ubyte";
  const std::string lpath = dir + "/" + stem + "-labels-idx1-ubyte";
  LabeledDataset ds{spec, split, parse_idx_images(read_file_auto(ipath), ipath),
                    parse_idx_labels(read_file_auto(lpath), lpath)};
  return ds;
}

// ---------------------------------------------------------------------------
// USPS in libsvm text form: 1-based labels, features 1..256 in [-1,1],
// absent features meaning background (-1).

LabeledDataset load_usps(const DatasetSpec& spec, Split split, const std::string& dir) {
  const std::string path = dir + (split == Split::train ? "/usps" : "/usps.t");
  auto bytes = read_file_auto(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);

  std::vector<float> pixels;
  std::vector<int32_t> labels;
  const int d = spec.height * spec.width;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int raw_label = 0;
    if (!(ls >> raw_label)) throw CorruptDataError("bad record in " + path);
    if (raw_label < 1 || raw_label > spec.num_classes)
      throw CorruptDataError("label " + std::to_string(raw_label) + " out of range in " + path);
    labels.push_back(raw_label - 1);
    std::vector<double> feat(d, -1.0);
    std::string tok;
    while (ls >> tok) {
      const size_t colon = tok.find(':');
      if (colon == std::string::npos) throw CorruptDataError("bad feature token in " + path);
      const int idx = std::stoi(tok.substr(0, colon));
      const double val = std::stod(tok.substr(colon + 1));
      if (idx < 1 || idx > d) throw CorruptDataError("feature index out of range in " + path);
      feat[idx - 1] = val;
    }
    for (double v : feat) pixels.push_back(static_cast<float>((v + 1.0) / 2.0));
  }
  if (labels.empty()) throw CorruptDataError("no records in " + path);

  const int n = static_cast<int>(labels.size());
  nn::Tensor<float> images({n, 1, spec.height, spec.width}, pixels);
  return LabeledDataset{spec, split, std::move(images), std::move(labels)};
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches: records of 1 label byte + 3072 channel-major pixels.

void append_cifar_batch(const std::string& path, std::vector<float>& pixels,
                        std::vector<int32_t>& labels) {
  auto b = read_file_auto(path);
  constexpr size_t kRecord = 3073;
  if (b.empty() || b.size() % kRecord != 0)
    throw CorruptDataError("bad cifar batch size in " + path);
  for (size_t off = 0; off < b.size(); off += kRecord) {
    labels.push_back(b[off]);
    for (size_t i = 0; i < 3072; ++i) pixels.push_back(b[off + 1 + i] / 255.0f);
  }
}

LabeledDataset load_cifar10(const DatasetSpec& spec, Split split, const std::string& dir) {
  std::string base = dir;
  if (std::filesystem::exists(dir + "/cifar-10-batches-bin"))
    base = dir + "/cifar-10-batches-bin";
  std::vector<float> pixels;
  std::vector<int32_t> labels;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i)
      append_cifar_batch(base + "/data_batch_" + std::to_string(i) + ".bin", pixels, labels);
  } else {
    append_cifar_batch(base + "/test_batch.bin", pixels, labels);
  }
  const int n = static_cast<int>(labels.size());
  nn::Tensor<float> images({n, 3, spec.height, spec.width}, pixels);
  return LabeledDataset{spec, split, std::move(images), std::move(labels)};
}

// ---------------------------------------------------------------------------
// SVHN in MATLAB level-5 .mat files: X uint8 (32,32,3,N) column-major, y (N,1)
// with "10 means 0" labels. Only the numeric-array subset of the format is read.

constexpr uint32_t kMiInt8 = 1, kMiUint8 = 2, kMiInt16 = 3, kMiUint16 = 4, kMiInt32 = 5,
                   kMiUint32 = 6, kMiSingle = 7, kMiDouble = 9, kMiInt64 = 12, kMiUint64 = 13,
                   kMiMatrix = 14, kMiCompressed = 15;

size_t mi_size(uint32_t t) {
  switch (t) {
    case kMiInt8:
    case kMiUint8:
      return 1;
    case kMiInt16:
    case kMiUint16:
      return 2;
    case kMiInt32:
    case kMiUint32:
    case kMiSingle:
      return 4;
    case kMiDouble:
    case kMiInt64:
    case kMiUint64:
      return 8;
    default:
      throw UnsupportedError("unsupported MAT element type " + std::to_string(t));
  }
}

struct MatArray {
  std::vector<int> dims;
  uint32_t mi_type = 0;
  std::vector<uint8_t> bytes;

  size_t count() const { return bytes.empty() ? 0 : bytes.size() / mi_size(mi_type); }

  double value_at(size_t i) const {
    const uint8_t* p = bytes.data() + i * mi_size(mi_type);
    switch (mi_type) {
      case kMiInt8:
        return static_cast<int8_t>(*p);
      case kMiUint8:
        return *p;
      case kMiInt16: {
        int16_t v;
        std::memcpy(&v, p, 2);
        return v;
      }
      case kMiUint16: {
        uint16_t v;
        std::memcpy(&v, p, 2);
        return v;
      }
      case kMiInt32: {
        int32_t v;
        std::memcpy(&v, p, 4);
        return v;
      }
      case kMiUint32: {
        uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
      }
      case kMiSingle: {
        float v;
        std::memcpy(&v, p, 4);
        return v;
      }
      case kMiDouble: {
        double v;
        std::memcpy(&v, p, 8);
        return v;
      }
      default:
        throw UnsupportedError("unsupported MAT element type " + std::to_string(mi_type));
    }
  }
};

struct MatElement {
  uint32_t type = 0;
  const uint8_t* data = nullptr;
  size_t size = 0;
  size_t advance = 0;
};

MatElement next_mat_element(const uint8_t* p, size_t n, size_t pos) {
  if (pos + 8 > n) throw CorruptDataError("truncated MAT element");
  const uint32_t tag = le32(p + pos);
  MatElement e;
  if (tag >> 16) {
    e.type = tag & 0xFFFF;
    e.size = tag >> 16;
    if (e.size > 4) throw CorruptDataError("bad small MAT element");
    e.data = p + pos + 4;
    e.advance = 8;
  } else {
    e.type = tag;
    e.size = le32(p + pos + 4);
    e.data = p + pos + 8;
    e.advance = 8 + ((e.size + 7) & ~size_t{7});
    if (pos + 8 + e.size > n) throw CorruptDataError("truncated MAT element");
  }
  return e;
}

std::pair<std::string, MatArray> parse_mat_matrix(const uint8_t* p, size_t n) {
  size_t pos = 0;
  auto flags = next_mat_element(p, n, pos);
  if (flags.type != kMiUint32 || flags.size != 8) throw CorruptDataError("bad MAT array flags");
  pos += flags.advance;
  auto dims_el = next_mat_element(p, n, pos);
  if (dims_el.type != kMiInt32) throw CorruptDataError("bad MAT dimensions");
  pos += dims_el.advance;
  auto name_el = next_mat_element(p, n, pos);
  if (name_el.type != kMiInt8) throw CorruptDataError("bad MAT array name");
  pos += name_el.advance;
  auto data_el = next_mat_element(p, n, pos);

  MatArray arr;
  for (size_t i = 0; i + 4 <= dims_el.size; i += 4)
    arr.dims.push_back(static_cast<int32_t>(le32(dims_el.data + i)));
  arr.mi_type = data_el.type;
  mi_size(arr.mi_type);
  arr.bytes.assign(data_el.data, data_el.data + data_el.size);
  std::string name(reinterpret_cast<const char*>(name_el.data), name_el.size);
  return {name, std::move(arr)};
}

std::map<std::string, MatArray> parse_mat5(const std::vector<uint8_t>& b, const std::string& path) {
  if (b.size() < 128) throw CorruptDataError("truncated MAT header in " + path);
  if (!(b[126] == 'I' && b[127] == 'M')) {
    if (b[126] == 'M' && b[127] == 'I')
      throw UnsupportedError("big-endian MAT file not supported: " + path);
    throw CorruptDataError("bad MAT endian marker in " + path);
  }
  std::map<std::string, MatArray> out;
  size_t pos = 128;
  while (pos + 8 <= b.size()) {
    auto e = next_mat_element(b.data(), b.size(), pos);
    if (e.type == kMiCompressed) {
      auto raw = inflate_bytes(e.data, e.size);
      auto inner = next_mat_element(raw.data(), raw.size(), 0);
      if (inner.type == kMiMatrix) out.insert(parse_mat_matrix(inner.data, inner.size));
    } else if (e.type == kMiMatrix) {
      out.insert(parse_mat_matrix(e.data, e.size));
    }
    pos += e.advance;
  }
  return out;
}

LabeledDataset load_svhn(const DatasetSpec& spec, Split split, const std::string& dir) {
  const std::string path = dir + (split == Split::train ? "/train_32x32.mat" : "/test_32x32.mat");
  auto vars = parse_mat5(read_file_bytes(path), path);
  auto xi = vars.find("X");
  auto yi = vars.find("y");
  if (xi == vars.end() || yi == vars.end())
    throw CorruptDataError("MAT file missing X or y: " + path);
  const MatArray& X = xi->second;
  const MatArray& y = yi->second;
  if (X.dims.size() != 4 || X.dims[0] != spec.height || X.dims[1] != spec.width ||
      X.dims[2] != spec.channels)
    throw CorruptDataError("unexpected X dimensions in " + path);
  const int n = X.dims[3];
  if (static_cast<int>(y.count()) != n)
    throw CorruptDataError("X/y count mismatch in " + path);

  const int H = spec.height, W = spec.width, C = spec.channels;
  nn::Tensor<float> images({n, C, H, W});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const size_t src = static_cast<size_t>(h) + static_cast<size_t>(H) * w +
                             static_cast<size_t>(H) * W * c + static_cast<size_t>(H) * W * C * i;
          images.at(i, c, h, w) = static_cast<float>(X.value_at(src) / 255.0);
        }
  std::vector<int32_t> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = static_cast<int32_t>(y.value_at(i)) % 10;
  return LabeledDataset{spec, split, std::move(images), std::move(labels)};
}

}  // namespace

std::vector<uint8_t> read_file_auto(const std::string& path) {
  std::string actual = path;
  if (!std::filesystem::exists(actual)) {
    if (std::filesystem::exists(path + ".gz"))
      actual = path + ".gz";
    else
      throw DataError("missing file: " + path);
  }
  auto bytes = read_file_bytes(actual);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b)
    return inflate_bytes(bytes.data(), bytes.size());
  return bytes;
}

LabeledDataset load_dataset(const DatasetSpec& spec, Split split, const std::string& root) {
  const std::string dir = root + "/" + spec.name;
  LabeledDataset ds;
  if (spec.name == "mnist")
    ds = load_mnist(spec, split, dir);
  else if (spec.name == "usps")
    ds = load_usps(spec, split, dir);
  else if (spec.name == "cifar10")
    ds = load_cifar10(spec, split, dir);
  else if (spec.name == "svhn")
    ds = load_svhn(spec, split, dir);
  else if (spec.name == "restricted_imagenet")
    throw UnsupportedError(
        "restricted_imagenet loading is not implemented; expected layout is "
        "<root>/restricted_imagenet/{train,val}/<wnid>/*.JPEG with the class grouping "
        "documented in the README");
  else
    throw UnsupportedError("unknown dataset: " + spec.name);
  ds.validate();
  return ds;
}

std::vector<CubAnnotation> load_cub_annotations(const std::string& root) {
  auto image_lines = read_lines(root + "/images.txt");
  auto class_lines = read_lines(root + "/image_class_labels.txt");
  auto box_lines = read_lines(root + "/bounding_boxes.txt");
  if (image_lines.size() != class_lines.size() || image_lines.size() != box_lines.size())
    throw DataError("inconsistent record counts across annotation files in " + root);

  std::map<int, std::string> paths;
  for (const auto& line : image_lines) {
    std::istringstream ls(line);
    int id;
    std::string path;
    if (!(ls >> id >> path)) throw DataError("bad record in images.txt: " + line);
    paths[id] = path;
  }
  std::map<int, int> classes;
  for (const auto& line : class_lines) {
    std::istringstream ls(line);
    int id, cls;
    if (!(ls >> id >> cls)) throw DataError("bad record in image_class_labels.txt: " + line);
    classes[id] = cls - 1;
  }
  std::vector<CubAnnotation> out;
  for (const auto& line : box_lines) {
    std::istringstream ls(line);
    int id;
    double x, y, w, h;
    if (!(ls >> id >> x >> y >> w >> h)) throw DataError("bad record in bounding_boxes.txt: " + line);
    auto pi = paths.find(id);
    auto ci = classes.find(id);
    if (pi == paths.end() || ci == classes.end())
      throw DataError("annotation id " + std::to_string(id) + " missing from a sibling file");
    if (w <= 0 || h <= 0) throw DataError("degenerate box for image " + std::to_string(id));
    out.push_back(CubAnnotation{id, pi->second, ci->second, {x, y, x + w, y + h}});
  }
  return out;
}

void save_cache(const std::string& path, const LabeledDataset& dataset) {
  nn::Tensor<uint8_t> q(dataset.images.shape());
  for (size_t i = 0; i < q.numel(); ++i)
    q[i] = static_cast<uint8_t>(std::lround(dataset.images[i] * 255.0f));
  nn::Tensor<int32_t> labels({dataset.size()}, dataset.labels);
  auto out = nn::open_output(path);
  nn::write_tensor(out, q);
  nn::write_tensor(out, labels);
}

LabeledDataset load_cache(const std::string& path, const DatasetSpec& spec, Split split) {
  auto in = nn::open_input(path);
  auto q = nn::read_tensor<uint8_t>(in);
  auto label_tensor = nn::read_tensor<int32_t>(in);
  nn::Tensor<float> images(q.shape());
  for (size_t i = 0; i < q.numel(); ++i) images[i] = q[i] / 255.0f;
  LabeledDataset ds{spec, split, std::move(images),
                    std::vector<int32_t>(label_tensor.values().begin(), label_tensor.values().end())};
  ds.validate();
  return ds;
}

}  // namespace pag::data
