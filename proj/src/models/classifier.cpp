#include "pag/models/classifier.hpp"

#include "pag/nn/io.hpp"

namespace pag::models {

Classifier::Classifier(ArchitectureSpec spec, uint64_t seed) : spec_(std::move(spec)) {
  net_ = build_network<float>(spec_);
  nn::Rng rng = nn::Rng(seed).fork("init");
  net_.init(rng);
}

void Classifier::check_batch(const nn::Tensor<float>& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != spec_.input.channels ||
      batch.dim(2) != spec_.input.height || batch.dim(3) != spec_.input.width)
    throw ShapeError("batch shape " + batch.shape_str() + " does not match model input " +
                     std::to_string(spec_.input.channels) + "x" +
                     std::to_string(spec_.input.height) + "x" +
                     std::to_string(spec_.input.width));
}

nn::Tensor<float> Classifier::forward(const nn::Tensor<float>& batch) const {
  check_batch(batch);
  return net_.forward(batch, mode_);
}

InputGradient Classifier::loss_and_input_gradient(const nn::Tensor<float>& batch,
                                                  const std::vector<int32_t>& labels) const {
  check_batch(batch);
  if (static_cast<int>(labels.size()) != batch.dim(0))
    throw ShapeError("label count does not match batch size");
  nn::NetCache<float> cache;
  auto logits = net_.forward(batch, nn::Mode::eval, &cache);
  auto ce = nn::cross_entropy(logits, labels, 1.0 / batch.dim(0));
  InputGradient out;
  out.loss = ce.loss;
  out.gradient = net_.backward(ce.d_logits, cache, nullptr);
  return out;
}

CamPieces Classifier::feature_maps_and_head(const nn::Tensor<float>& batch) const {
  check_batch(batch);
  const int tap = net_.feature_tap();
  const auto* head =
      net_.num_layers() > 0
          ? dynamic_cast<const nn::Dense<float>*>(&net_.layer(static_cast<int>(net_.num_layers()) - 1))
          : nullptr;
  if (tap < 0 || head == nullptr)
    throw UnsupportedError("architecture " + spec_.id +
                           " lacks the global-average-pool + linear head needed here");
  CamPieces pieces;
  net_.forward(batch, nn::Mode::eval, nullptr, &pieces.features);
  pieces.head_weight = head->weight();
  pieces.head_bias = head->bias();
  return pieces;
}

namespace {

constexpr uint16_t kCheckpointVersion = 1;

void write_spec(std::ostream& out, const ArchitectureSpec& spec) {
  nn::write_string(out, spec.id);
  nn::write_string(out, spec.input.name);
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(spec.input.num_classes));
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(spec.input.channels));
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(spec.input.height));
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(spec.input.width));
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(spec.base_width));
}

ArchitectureSpec read_spec(std::istream& in) {
  ArchitectureSpec spec;
  spec.id = nn::read_string(in, "architecture id");
  spec.input.name = nn::read_string(in, "dataset name");
  spec.input.num_classes = static_cast<int>(nn::read_le<uint32_t>(in, "checkpoint field"));
  spec.input.channels = static_cast<int>(nn::read_le<uint32_t>(in, "checkpoint field"));
  spec.input.height = static_cast<int>(nn::read_le<uint32_t>(in, "checkpoint field"));
  spec.input.width = static_cast<int>(nn::read_le<uint32_t>(in, "checkpoint field"));
  spec.base_width = static_cast<int>(nn::read_le<uint32_t>(in, "checkpoint field"));
  return spec;
}

std::vector<nn::NamedParam<float>> all_tensors(const Classifier& model) {
  auto& net = const_cast<nn::Network<float>&>(model.net());
  auto tensors = net.parameters();
  auto state = net.state();
  tensors.insert(tensors.end(), state.begin(), state.end());
  return tensors;
}

}  // namespace

void save_checkpoint(const std::string& path, const Classifier& model) {
  auto out = nn::open_output(path);
  nn::write_bytes(out, "PGCK", 4);
  nn::write_le<uint16_t>(out, kCheckpointVersion);
  write_spec(out, model.arch());
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(model.metadata().size()));
  for (const auto& [key, value] : model.metadata()) {
    nn::write_string(out, key);
    nn::write_string(out, value);
  }
  auto tensors = all_tensors(model);
  nn::write_le<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    nn::write_string(out, name);
    nn::write_tensor(out, *tensor);
  }
}

Classifier load_checkpoint(const std::string& path) {
  auto in = nn::open_input(path);
  char magic[4];
  nn::read_bytes(in, magic, 4, "checkpoint magic");
  if (std::string(magic, 4) != "PGCK") throw CorruptDataError("bad checkpoint magic in " + path);
  if (nn::read_le<uint16_t>(in, "checkpoint version") != kCheckpointVersion)
    throw CorruptDataError("unsupported checkpoint version in " + path);

  Classifier model(read_spec(in), 0);
  const uint32_t meta_count = nn::read_le<uint32_t>(in, "checkpoint field");
  for (uint32_t i = 0; i < meta_count; ++i) {
    std::string key = nn::read_string(in, "metadata key");
    model.metadata()[key] = nn::read_string(in, "metadata value");
  }

  auto tensors = all_tensors(model);
  const uint32_t tensor_count = nn::read_le<uint32_t>(in, "checkpoint field");
  if (tensor_count != tensors.size())
    throw CorruptDataError("checkpoint tensor count mismatch in " + path);
  size_t cursor = 0;
  for (uint32_t i = 0; i < tensor_count; ++i) {
    const std::string name = nn::read_string(in, "tensor name");
    if (name != tensors[cursor].first)
      throw CorruptDataError("unexpected checkpoint tensor " + name + " in " + path);
    auto value = nn::read_tensor<float>(in);
    if (value.shape() != tensors[cursor].second->shape())
      throw CorruptDataError("checkpoint tensor shape mismatch for " + name + " in " + path);
    *tensors[cursor].second = std::move(value);
    ++cursor;
  }
  return model;
}

}  // namespace pag::models
