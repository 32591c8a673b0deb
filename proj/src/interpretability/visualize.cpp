#include "pag/interpretability/visualize.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>

#include "json.hpp"
#include "pag/errors.hpp"
#include "pag/nn/io.hpp"

namespace pag::interpretability {

namespace {

using json = nlohmann::json;

int argmax_row(const nn::Tensor<float>& logits, int row) {
  const int k = logits.shape()[1];
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return best;
}

std::vector<int> predictions(const models::Classifier& model, const nn::Tensor<float>& batch) {
  const auto logits = model.net().forward(batch, nn::Mode::eval);
  std::vector<int> out(batch.dim(0));
  for (int i = 0; i < batch.dim(0); ++i) out[i] = argmax_row(logits, i);
  return out;
}

nn::Tensor<float> cell_of(const nn::Tensor<float>& batch, int i) {
  const auto& s = batch.shape();
  return batch.slice(i, i + 1).reshaped({s[1], s[2], s[3]});
}

void check_gallery_inputs(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const nn::Tensor<float>& batch, const std::vector<int32_t>& labels) {
  if (models.empty()) throw ConfigError("gallery: at least one model is required");
  if (batch.rank() != 4 || batch.dim(0) < 1) throw ShapeError("gallery: batch must be {N,C,H,W}");
  if (labels.size() != static_cast<size_t>(batch.dim(0)))
    throw ShapeError("gallery: label count does not match batch");
  for (const auto& [id, model] : models) {
    if (model == nullptr) throw ConfigError("gallery: null model " + id);
    if (!models.front().second->input_spec().same_shape(model->input_spec()))
      throw ConfigError("gallery: models do not share an input spec");
    model->check_batch(batch);
  }
}

}  // namespace

nn::Tensor<float> normalize_signal(const nn::Tensor<float>& raw) {
  if (raw.rank() != 4) throw ShapeError("normalize_signal: expected {N,C,H,W}");
  const int n = raw.dim(0), c = raw.dim(1);
  const int hw = raw.dim(2) * raw.dim(3);
  nn::Tensor<float> out(raw.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float* src = raw.data() + (static_cast<size_t>(i) * c + ch) * hw;
      float* dst = out.data() + (static_cast<size_t>(i) * c + ch) * hw;
      double sum = 0.0, sum2 = 0.0;
      for (int j = 0; j < hw; ++j) {
        sum += src[j];
        sum2 += static_cast<double>(src[j]) * src[j];
      }
      const double mean = sum / hw;
      const double var = std::max(0.0, sum2 / hw - mean * mean);
      const double sd = std::sqrt(var);
      const float lo = static_cast<float>(mean - 3.0 * sd);
      const float hi = static_cast<float>(mean + 3.0 * sd);
      float mn = std::numeric_limits<float>::max();
      float mx = std::numeric_limits<float>::lowest();
      for (int j = 0; j < hw; ++j) {
        const float v = std::min(hi, std::max(lo, src[j]));
        dst[j] = v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      if (mx > mn) {
        const float scale = 1.0f / (mx - mn);
        for (int j = 0; j < hw; ++j) dst[j] = (dst[j] - mn) * scale;
      } else {
        for (int j = 0; j < hw; ++j) dst[j] = 0.5f;
      }
    }
  }
  return out;
}

ImageGrid gradient_visualization(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const nn::Tensor<float>& batch, const std::vector<int32_t>& labels) {
  check_gallery_inputs(models, batch, labels);
  const int n = batch.dim(0);

  ImageGrid grid;
  grid.cells.assign(n, {});
  for (int i = 0; i < n; ++i) grid.cells[i].push_back(cell_of(batch, i));

  json cells_meta = json::array();
  for (const auto& [id, model] : models) {
    grid.model_ids.push_back(id);
    const auto grad = model->loss_and_input_gradient(batch, labels);
    const auto normalized = normalize_signal(grad.gradient);
    const auto preds = predictions(*model, batch);
    const auto alignment = gradient_alignment(*model, batch, labels);
    for (int i = 0; i < n; ++i) {
      grid.cells[i].push_back(cell_of(normalized, i));
      cells_meta.push_back({{"row", i},
                            {"model", id},
                            {"label", labels[i]},
                            {"predicted", preds[i]},
                            {"alignment", alignment[i]}});
    }
  }

  json sidecar;
  sidecar["kind"] = "gradient_visualization";
  sidecar["models"] = grid.model_ids;
  sidecar["cells"] = cells_meta;
  grid.sidecar = sidecar.dump(2);
  return grid;
}

ImageGrid attack_gallery(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const nn::Tensor<float>& batch, const std::vector<int32_t>& labels, attacks::Norm norm) {
  check_gallery_inputs(models, batch, labels);
  const int n = batch.dim(0);

  ImageGrid grid;
  grid.cells.assign(n, {});
  for (int i = 0; i < n; ++i) grid.cells[i].push_back(cell_of(batch, i));

  json cells_meta = json::array();
  attacks::AttackConfig echo;
  for (const auto& [id, model] : models) {
    grid.model_ids.push_back(id);
    const auto result = attacks::large_eps_untargeted(*model, batch, labels, norm);
    echo = result.config;
    const auto before = predictions(*model, batch);
    const auto after = predictions(*model, result.images);
    for (int i = 0; i < n; ++i) {
      grid.cells[i].push_back(cell_of(result.images, i));
      cells_meta.push_back({{"row", i},
                            {"model", id},
                            {"label", labels[i]},
                            {"before", before[i]},
                            {"after", after[i]}});
    }
  }

  json sidecar;
  sidecar["kind"] = "attack_gallery";
  sidecar["models"] = grid.model_ids;
  sidecar["attack"] = {{"norm", attacks::norm_name(echo.norm)},
                       {"epsilon", echo.epsilon},
                       {"step_size", echo.step_size},
                       {"num_steps", echo.num_steps},
                       {"random_start", echo.random_start}};
  sidecar["cells"] = cells_meta;
  grid.sidecar = sidecar.dump(2);
  return grid;
}

nn::Tensor<float> assemble_grid(const std::vector<std::vector<nn::Tensor<float>>>& cells) {
  if (cells.empty() || cells.front().empty()) throw ConfigError("assemble_grid: empty grid");
  const size_t cols = cells.front().size();
  const auto& first = cells.front().front();
  if (first.rank() != 3) throw ShapeError("assemble_grid: cells must be {C,H,W}");
  const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
  for (const auto& row : cells) {
    if (row.size() != cols) throw ShapeError("assemble_grid: ragged rows");
    for (const auto& cell : row)
      if (!cell.same_shape(first)) throw ShapeError("assemble_grid: cell shapes differ");
  }

  constexpr int kSep = 2;
  const int rows = static_cast<int>(cells.size());
  const int out_h = rows * h + kSep * (rows - 1);
  const int out_w = static_cast<int>(cols) * w + kSep * (static_cast<int>(cols) - 1);
  auto canvas = nn::Tensor<float>::full({c, out_h, out_w}, 1.0f);
  for (int r = 0; r < rows; ++r) {
    for (size_t col = 0; col < cols; ++col) {
      const int y0 = r * (h + kSep);
      const int x0 = static_cast<int>(col) * (w + kSep);
      const auto& cell = cells[r][col];
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          std::memcpy(canvas.data() + (static_cast<size_t>(ch) * out_h + y0 + y) * out_w + x0,
                      cell.data() + (static_cast<size_t>(ch) * h + y) * w,
                      sizeof(float) * w);
    }
  }
  return canvas;
}

namespace {

void push_be32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v >> 24));
  s.push_back(static_cast<char>(v >> 16));
  s.push_back(static_cast<char>(v >> 8));
  s.push_back(static_cast<char>(v));
}

void write_chunk(std::ofstream& out, const char* type, const std::string& data) {
  std::string head;
  push_be32(head, static_cast<uint32_t>(data.size()));
  head.append(type, 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size()));
  std::string tail;
  push_be32(tail, static_cast<uint32_t>(crc));
  out.write(tail.data(), 4);
}

}  // namespace

void write_png(const std::string& path, const nn::Tensor<float>& image) {
  if (image.rank() != 3) throw ShapeError("write_png: expected {C,H,W}");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c != 1 && c != 3)
    throw UnsupportedError("write_png: only 1- or 3-channel images are supported");

  std::string raw;
  raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * c));
  for (int y = 0; y < h; ++y) {
    raw.push_back('\0');  // per-row filter: none
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        const float v = image.data()[(static_cast<size_t>(ch) * h + y) * w + x];
        const float clamped = std::min(1.0f, std::max(0.0f, v));
        raw.push_back(static_cast<char>(std::lround(clamped * 255.0f)));
      }
    }
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw Error("write_png: compression failed");
  compressed.resize(bound);

  auto out = nn::open_output(path);
  static const unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(kSignature), 8);

  std::string ihdr;
  push_be32(ihdr, static_cast<uint32_t>(w));
  push_be32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);                            // bit depth
  ihdr.push_back(c == 1 ? '\0' : char(2));      // gray or truecolor
  ihdr.push_back('\0');                         // compression
  ihdr.push_back('\0');                         // filter
  ihdr.push_back('\0');                         // interlace
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", compressed);
  write_chunk(out, "IEND", "");
  if (!out) throw DataError("write_png: short write to " + path);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("pearson: size mismatch");
  if (a.empty()) throw ConfigError("pearson: empty input");
  const double n = static_cast<double>(a.size());
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double va = saa / n - (sa / n) * (sa / n);
  const double vb = sbb / n - (sb / n) * (sb / n);
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::vector<double> gradient_alignment(const models::Classifier& model,
                                       const nn::Tensor<float>& batch,
                                       const std::vector<int32_t>& labels) {
  const auto grad = model.loss_and_input_gradient(batch, labels);
  const int n = batch.dim(0), c = batch.dim(1);
  const int hw = batch.dim(2) * batch.dim(3);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> g(hw, 0.0), img(hw, 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = (static_cast<size_t>(i) * c + ch) * hw;
      for (int j = 0; j < hw; ++j) {
        g[j] += std::abs(static_cast<double>(grad.gradient.data()[base + j])) / c;
        img[j] += static_cast<double>(batch.data()[base + j]) / c;
      }
    }
    out[i] = pearson(g, img);
  }
  return out;
}

}  // namespace pag::interpretability
