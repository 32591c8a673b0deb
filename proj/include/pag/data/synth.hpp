#pragma once

#include <cstdint>
#include <vector>

#include "pag/data/dataset.hpp"

namespace pag::data {

enum class FixtureKind { classification, localization };

struct SynthOptions {
  int num_classes = 10;
  int count = 256;
  int channels = 1;
  int height = 28;
  int width = 28;
  Split split = Split::train;
  // Glyph jitter ranges (classification kind).
  double max_translate = 0.06;
  double min_scale = 0.8;
  double max_scale = 1.1;
  double max_rotate = 0.18;
  double min_thickness = 0.055;
  double max_thickness = 0.09;
  double min_intensity = 0.75;
  double max_intensity = 1.0;
};

struct SynthFixture {
  LabeledDataset dataset;
  std::vector<CubAnnotation> annotations;  // localization kind only
};

// Deterministic synthetic data keyed by seed. The classification kind renders
// jittered seven-segment digit glyphs with labels balanced round-robin. The
// localization kind plants one textured patch per image on a noise background;
// the patch texture (at most 4 kinds) is the class and the patch rectangle is
// the ground-truth box.
SynthFixture synth_fixture(FixtureKind kind, uint64_t seed, const SynthOptions& opt = {});

// Source/target pair for zero-shot transfer experiments. The source domain is
// 28x28 glyphs carrying a class-keyed low-amplitude pixel pattern on the border
// (a shortcut feature); the target domain is 16x16 glyphs with different
// stroke statistics and no pattern.
struct TransferPair {
  LabeledDataset source_train;
  LabeledDataset source_val;
  LabeledDataset target_val;
};
TransferPair synth_transfer_pair(uint64_t seed, int train_count, int val_count);

}  // namespace pag::data
