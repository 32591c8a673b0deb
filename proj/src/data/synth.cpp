#include "pag/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "pag/nn/rng.hpp"

namespace pag::data {
namespace {

struct Seg {
  double x0, y0, x1, y1;
};

// Seven-segment layout on the unit square (x right, y down): A top, B upper
// right, C lower right, D bottom, E lower left, F upper left, G middle.
const Seg kSegments[7] = {
    {0.22, 0.16, 0.78, 0.16}, {0.78, 0.16, 0.78, 0.50}, {0.78, 0.50, 0.78, 0.84},
    {0.22, 0.84, 0.78, 0.84}, {0.22, 0.50, 0.22, 0.84}, {0.22, 0.16, 0.22, 0.50},
    {0.22, 0.50, 0.78, 0.50},
};

// Active-segment bitmask per digit, bit i = segment i above.
const uint8_t kDigitSegments[10] = {0x3F, 0x06, 0x5B, 0x4F, 0x66,
                                    0x6D, 0x7D, 0x07, 0x7F, 0x6F};

double segment_distance(double px, double py, const Seg& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double wx = px - s.x0, wy = py - s.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct GlyphParams {
  double dx = 0, dy = 0, scale = 1, rot = 0, thickness = 0.07, intensity = 1;
};

GlyphParams draw_params(nn::Rng& rng, const SynthOptions& o) {
  GlyphParams g;
  g.dx = rng.uniform(-o.max_translate, o.max_translate);
  g.dy = rng.uniform(-o.max_translate, o.max_translate);
  g.scale = rng.uniform(o.min_scale, o.max_scale);
  g.rot = rng.uniform(-o.max_rotate, o.max_rotate);
  g.thickness = rng.uniform(o.min_thickness, o.max_thickness);
  g.intensity = rng.uniform(o.min_intensity, o.max_intensity);
  return g;
}

void render_glyph(int digit, int h, int w, const GlyphParams& g, float* plane) {
  const uint8_t mask = kDigitSegments[digit % 10];
  const double edge = 0.025;
  const double cr = std::cos(g.rot), sr = std::sin(g.rot);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double px = (c + 0.5) / w - 0.5 - g.dx;
      const double py = (r + 0.5) / h - 0.5 - g.dy;
      const double qx = (cr * px + sr * py) / g.scale + 0.5;
      const double qy = (-sr * px + cr * py) / g.scale + 0.5;
      double d = 1e9;
      for (int s = 0; s < 7; ++s)
        if (mask & (1 << s)) d = std::min(d, segment_distance(qx, qy, kSegments[s]));
      const double v = g.intensity * std::clamp((g.thickness - d) / edge + 0.5, 0.0, 1.0);
      plane[r * w + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

LabeledDataset glyph_dataset(const SynthOptions& opt, nn::Rng& rng, const std::string& name) {
  LabeledDataset ds;
  ds.spec = DatasetSpec{name, opt.num_classes, opt.channels, opt.height, opt.width};
  ds.split = opt.split;
  ds.images = nn::Tensor<float>({opt.count, opt.channels, opt.height, opt.width});
  ds.labels.resize(opt.count);
  const size_t plane = static_cast<size_t>(opt.height) * opt.width;
  for (int i = 0; i < opt.count; ++i) {
    const int label = i % opt.num_classes;
    ds.labels[i] = label;
    const GlyphParams g = draw_params(rng, opt);
    float* first = ds.images.data() + static_cast<size_t>(i) * opt.channels * plane;
    render_glyph(label, opt.height, opt.width, g, first);
    for (int c = 1; c < opt.channels; ++c) std::copy_n(first, plane, first + c * plane);
  }
  return ds;
}

SynthFixture make_localization(const SynthOptions& opt, uint64_t seed) {
  const int classes = std::min(opt.num_classes, 4);
  const int h = opt.height, w = opt.width;
  SynthFixture fx;
  fx.dataset.spec = DatasetSpec{"synth_loc", classes, opt.channels, h, w};
  fx.dataset.split = opt.split;
  fx.dataset.images = nn::Tensor<float>({opt.count, opt.channels, h, w});
  fx.dataset.labels.resize(opt.count);

  nn::Rng rng =
      nn::Rng(seed).fork(std::string("synth/localization/") + split_name(opt.split));
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < opt.count; ++i) {
    const int label = i % classes;
    fx.dataset.labels[i] = label;
    float* first = fx.dataset.images.data() + static_cast<size_t>(i) * opt.channels * plane;
    for (size_t p = 0; p < plane; ++p)
      first[p] = static_cast<float>(rng.uniform(0.05, 0.25));

    const int sh = std::max(4, static_cast<int>(std::lround(h * rng.uniform(0.35, 0.55))));
    const int sw = std::max(4, static_cast<int>(std::lround(w * rng.uniform(0.35, 0.55))));
    const int y0 = static_cast<int>(rng.uniform_int(h - sh + 1));
    const int x0 = static_cast<int>(rng.uniform_int(w - sw + 1));
    for (int r = 0; r < sh; ++r)
      for (int c = 0; c < sw; ++c) {
        double v = 0.9;
        switch (label) {
          case 0:
            break;
          case 1:
            v = ((r / 2) % 2) ? 0.9 : 0.45;
            break;
          case 2:
            v = ((c / 2) % 2) ? 0.9 : 0.45;
            break;
          default:
            v = ((r / 2 + c / 2) % 2) ? 0.9 : 0.45;
            break;
        }
        first[(y0 + r) * w + (x0 + c)] = static_cast<float>(v);
      }
    for (int c = 1; c < opt.channels; ++c) std::copy_n(first, plane, first + c * plane);
    fx.annotations.push_back(CubAnnotation{
        i, "synth://loc/" + std::to_string(i), label,
        {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + sw),
         static_cast<double>(y0 + sh)}});
  }
  return fx;
}

// Shortcut pattern: pixels added to source-domain images, keyed by class.
constexpr double kPatternStrength = 0.08;
constexpr int kPatternPixels = 12;
constexpr int kPatternRing = 3;

std::vector<std::vector<int>> pattern_masks(uint64_t seed, int num_classes, int h, int w) {
  std::vector<int> ring;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (r < kPatternRing || r >= h - kPatternRing || c < kPatternRing || c >= w - kPatternRing)
        ring.push_back(r * w + c);
  nn::Rng rng = nn::Rng(seed).fork("transfer/pattern");
  rng.shuffle(ring.begin(), ring.end());
  std::vector<std::vector<int>> masks(num_classes);
  size_t next = 0;
  for (int c = 0; c < num_classes; ++c)
    for (int p = 0; p < kPatternPixels; ++p) masks[c].push_back(ring[next++ % ring.size()]);
  return masks;
}

void apply_pattern(LabeledDataset& ds, const std::vector<std::vector<int>>& masks) {
  const size_t plane = static_cast<size_t>(ds.spec.height) * ds.spec.width;
  for (int i = 0; i < ds.size(); ++i) {
    float* first = ds.images.data() + static_cast<size_t>(i) * ds.spec.channels * plane;
    for (int p : masks[ds.labels[i]])
      for (int c = 0; c < ds.spec.channels; ++c)
        first[c * plane + p] =
            std::min(1.0f, first[c * plane + p] + static_cast<float>(kPatternStrength));
  }
}

}  // namespace

SynthFixture synth_fixture(FixtureKind kind, uint64_t seed, const SynthOptions& opt) {
  if (kind == FixtureKind::localization) {
    auto fx = make_localization(opt, seed);
    fx.dataset.validate();
    return fx;
  }
  nn::Rng rng =
      nn::Rng(seed).fork(std::string("synth/classification/") + split_name(opt.split));
  SynthFixture fx;
  fx.dataset = glyph_dataset(opt, rng, "synth");
  fx.dataset.validate();
  return fx;
}

TransferPair synth_transfer_pair(uint64_t seed, int train_count, int val_count) {
  SynthOptions src;
  src.count = train_count;
  src.max_translate = 0.08;
  src.min_scale = 0.7;
  src.max_scale = 1.15;
  src.max_rotate = 0.3;
  src.min_thickness = 0.05;
  src.max_thickness = 0.1;
  src.min_intensity = 0.6;

  SynthOptions tgt;
  tgt.count = val_count;
  tgt.height = 16;
  tgt.width = 16;
  tgt.split = Split::validation;
  tgt.max_translate = 0.05;
  tgt.min_scale = 0.75;
  tgt.max_scale = 1.0;
  tgt.max_rotate = 0.12;
  tgt.min_thickness = 0.05;
  tgt.max_thickness = 0.07;
  tgt.min_intensity = 0.8;

  const auto masks = pattern_masks(seed, src.num_classes, src.height, src.width);

  TransferPair pair;
  {
    nn::Rng rng = nn::Rng(seed).fork("transfer/source/train");
    pair.source_train = glyph_dataset(src, rng, "synth_src");
    apply_pattern(pair.source_train, masks);
  }
  {
    SynthOptions v = src;
    v.count = val_count;
    v.split = Split::validation;
    nn::Rng rng = nn::Rng(seed).fork("transfer/source/val");
    pair.source_val = glyph_dataset(v, rng, "synth_src");
    pair.source_val.split = Split::validation;
    apply_pattern(pair.source_val, masks);
  }
  {
    nn::Rng rng = nn::Rng(seed).fork("transfer/target/val");
    pair.target_val = glyph_dataset(tgt, rng, "synth_tgt");
    pair.target_val.split = Split::validation;
  }
  pair.source_train.validate();
  pair.source_val.validate();
  pair.target_val.validate();
  return pair;
}

}  // namespace pag::data
