#include <chrono>
#include <cstdio>

#include "pag/data/synth.hpp"
#include "pag/training/train.hpp"

using namespace pag;

static void bench(const char* tag, const models::ArchitectureSpec& arch,
                  const data::LabeledDataset& train, training::TrainConfig cfg) {
  models::Classifier model(arch, 1);
  const auto t0 = std::chrono::steady_clock::now();
  training::train(model, train, cfg);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%-28s %5d steps  %6.2fs  %6.1f ms/step\n", tag, cfg.total_steps, sec,
              1000.0 * sec / cfg.total_steps);
}

int main() {
  data::SynthOptions glyph;
  glyph.num_classes = 10;
  glyph.count = 1024;
  glyph.height = 28;
  glyph.width = 28;
  const auto g28 = data::synth_fixture(data::FixtureKind::classification, 1, glyph).dataset;

  data::SynthOptions loc;
  loc.num_classes = 4;
  loc.count = 512;
  loc.height = 16;
  loc.width = 16;
  const auto l16 = data::synth_fixture(data::FixtureKind::localization, 1, loc).dataset;

  training::TrainConfig nat;
  nat.total_steps = 60;
  nat.batch_size = 128;

  training::TrainConfig at = nat;
  at.mode = training::TrainMode::adversarial;
  at.epsilon = 0.3;

  bench("small_cnn28 b12 natural", {"small_cnn", g28.spec, 0}, g28, nat);
  bench("small_cnn28 b12 AT-7", {"small_cnn", g28.spec, 0}, g28, at);
  bench("small_cnn28 b8 AT-7", {"small_cnn", g28.spec, 8}, g28, at);

  training::TrainConfig camn = nat;
  camn.batch_size = 64;
  bench("cam_backbone16 b8 natural", {"cam_backbone", l16.spec, 0}, l16, camn);
  return 0;
}
