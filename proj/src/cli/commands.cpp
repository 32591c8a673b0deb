#include "pag/cli/commands.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pag/attacks/attacks.hpp"
#include "pag/data/loaders.hpp"
#include "pag/data/synth.hpp"
#include "pag/errors.hpp"
#include "pag/evaluation/evaluation.hpp"
#include "pag/interpretability/visualize.hpp"
#include "pag/models/classifier.hpp"
#include "pag/nn/io.hpp"
#include "pag/training/train.hpp"
#include "pag/wsol/wsol.hpp"

namespace pag::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string> kExperimentKeys = {"name", "seed"};
const std::set<std::string> kOutputKeys = {"dir"};
const std::set<std::string> kDataKeys = {"dataset", "root",       "cache",  "classes", "train_count",
                                         "val_count", "height",   "width",  "channels"};
const std::set<std::string> kModelKeys = {"architecture", "base_width"};
const std::set<std::string> kModelsKeys = {"dir", "files"};

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

struct Context {
  ConfigFile config;
  std::string digest;
  uint64_t seed = 1;
  bool deterministic = false;
  std::string out_dir;
  std::string experiment;
  std::string stamp;

  fs::path dir(const char* sub) const {
    const fs::path p = fs::path(out_dir) / sub;
    fs::create_directories(p);
    return p;
  }
};

Context make_context(const CliOptions& opt,
                     const std::map<std::string, std::set<std::string>>& schema) {
  Context ctx;
  ctx.config = load_config(opt.config_path);
  validate_schema(ctx.config, schema);
  ctx.experiment = ctx.config.get("experiment", "name");
  if (ctx.experiment.empty() ||
      ctx.experiment.find_first_not_of(
          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_") != std::string::npos)
    throw ConfigError("experiment.name must be non-empty and use [A-Za-z0-9_-] only, got '" +
                      ctx.experiment + "'");
  const long long cfg_seed = ctx.config.get_int("experiment", "seed", 1);
  if (cfg_seed < 0) throw ConfigError("experiment.seed must be non-negative");
  ctx.seed = opt.has_seed ? opt.seed : static_cast<uint64_t>(cfg_seed);
  // The effective seed joins the digested view so (config, seed) names the run.
  ctx.config.sections["experiment"]["seed"] = std::to_string(ctx.seed);
  ctx.deterministic = opt.deterministic;
  ctx.out_dir = !opt.out_override.empty() ? opt.out_override
                                          : ctx.config.get_or("output", "dir", "out");
  ctx.digest = config_digest(ctx.config);
  ctx.stamp = ctx.deterministic ? ctx.digest : utc_stamp();
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = nn::open_output(path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("short write: " + path.string());
}

std::string provenance_notes_csv(const Context& ctx) {
  return "# config_digest=" + ctx.digest + "\n# seed=" + std::to_string(ctx.seed) + "\n";
}

void emit_table(const Context& ctx, evaluation::Table table, const std::string& dataset_tag) {
  table.notes.push_back("config_digest=" + ctx.digest);
  table.notes.push_back("seed=" + std::to_string(ctx.seed));
  const std::string base = ctx.experiment + "_" + dataset_tag + "_" + ctx.stamp;
  write_text(ctx.dir("tables") / (base + ".csv"),
             evaluation::render_table(table, evaluation::TableFormat::csv));
  write_text(ctx.dir("tables") / (base + ".md"),
             evaluation::render_table(table, evaluation::TableFormat::markdown));
  std::cout << "wrote " << (ctx.dir("tables") / (base + ".csv")).string() << " and .md\n";
}

// Inserts a tEXt comment chunk right after IHDR so the provenance rides in
// the PNG bytes themselves.
void embed_png_comment(const fs::path& path, const std::string& text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot reopen png: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  // 8-byte signature + IHDR (4 length + 4 type + 13 data + 4 crc).
  const size_t insert_at = 8 + 4 + 4 + 13 + 4;
  if (bytes.size() < insert_at || bytes.compare(12, 4, "IHDR") != 0)
    throw DataError("unexpected png layout: " + path.string());
  std::string data = "Comment";
  data += '\0';
  data += text;
  std::string chunk;
  const uint32_t len = static_cast<uint32_t>(data.size());
  for (int shift = 24; shift >= 0; shift -= 8)
    chunk += static_cast<char>((len >> shift) & 0xff);
  chunk += "tEXt";
  chunk += data;
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(chunk.data() + 4), 4 + len);
  for (int shift = 24; shift >= 0; shift -= 8)
    chunk += static_cast<char>((crc >> shift) & 0xff);
  bytes.insert(insert_at, chunk);
  write_text(path, bytes);
}

std::string provenance_text(const Context& ctx) {
  return "config_digest=" + ctx.digest + " seed=" + std::to_string(ctx.seed);
}

struct ResolvedData {
  data::LabeledDataset train, val, target_val;
  std::vector<data::CubAnnotation> annotations;  // aligned with val rows
  bool has_target = false;
};

enum class DataNeed { train_and_val, val_only, transfer, localization };

std::string data_root(const Context& ctx) {
  std::string root = ctx.config.get_or("data", "root", "");
  if (root.empty()) {
    const char* env = std::getenv("PAG_DATA_ROOT");
    if (env) root = env;
  }
  if (root.empty())
    throw ConfigError("set data.root or the PAG_DATA_ROOT environment variable");
  return root;
}

data::DatasetSpec spec_by_name(const std::string& name) {
  if (name == "mnist") return data::mnist_spec();
  if (name == "usps") return data::usps_spec();
  if (name == "svhn") return data::svhn_spec();
  if (name == "cifar10") return data::cifar10_spec();
  throw ConfigError("unknown dataset '" + name + "'");
}

bool is_real_dataset(const std::string& name) {
  return name == "mnist" || name == "usps" || name == "svhn" || name == "cifar10";
}

data::SynthOptions synth_options(const Context& ctx, int default_classes, int count,
                                 data::Split split) {
  data::SynthOptions opt;
  opt.num_classes = static_cast<int>(ctx.config.get_int("data", "classes", default_classes));
  opt.count = count;
  opt.channels = static_cast<int>(ctx.config.get_int("data", "channels", 1));
  opt.height = static_cast<int>(ctx.config.get_int("data", "height", 16));
  opt.width = static_cast<int>(ctx.config.get_int("data", "width", 16));
  opt.split = split;
  if (opt.num_classes < 2 || opt.count < 1 || opt.channels < 1 || opt.height < 8 ||
      opt.width < 8)
    throw ConfigError("data: synthetic fixture needs classes >= 2, counts >= 1, size >= 8x8");
  return opt;
}

ResolvedData resolve_data(const Context& ctx, DataNeed need) {
  ResolvedData out;
  const std::string name = ctx.config.get("data", "dataset");
  const int train_count = static_cast<int>(ctx.config.get_int("data", "train_count", 512));
  const int val_count = static_cast<int>(ctx.config.get_int("data", "val_count", 256));

  if (name == "synth_class" || name == "synth_loc") {
    const auto kind = name == "synth_loc" ? data::FixtureKind::localization
                                          : data::FixtureKind::classification;
    const int classes = name == "synth_loc" ? 4 : 10;
    if (need == DataNeed::train_and_val)
      out.train = data::synth_fixture(
                      kind, ctx.seed, synth_options(ctx, classes, train_count, data::Split::train))
                      .dataset;
    auto val_fx = data::synth_fixture(kind, ctx.seed,
                                      synth_options(ctx, classes, val_count, data::Split::validation));
    out.val = std::move(val_fx.dataset);
    out.annotations = std::move(val_fx.annotations);
    if (need == DataNeed::localization && name != "synth_loc")
      throw ConfigError("localization needs data.dataset = synth_loc or cub, got " + name);
    return out;
  }

  if (name == "synth_transfer") {
    auto pair = data::synth_transfer_pair(ctx.seed, train_count, val_count);
    out.train = std::move(pair.source_train);
    out.val = std::move(pair.source_val);
    out.target_val = std::move(pair.target_val);
    out.has_target = true;
    if (need == DataNeed::localization)
      throw ConfigError("localization needs data.dataset = synth_loc or cub");
    return out;
  }

  if (is_real_dataset(name)) {
    if (need == DataNeed::localization)
      throw ConfigError("localization needs data.dataset = synth_loc or cub, got " + name);
    const std::string root = data_root(ctx);
    const auto spec = spec_by_name(name);
    if (need == DataNeed::train_and_val)
      out.train = data::load_dataset(spec, data::Split::train, root);
    out.val = data::load_dataset(spec, data::Split::validation, root);
    return out;
  }

  if (name == "cub") {
    if (need == DataNeed::train_and_val)
      throw ConfigError("training on cub is not supported here; evaluate a checkpoint instead");
    const std::string cache = ctx.config.get("data", "cache");
    data::DatasetSpec spec;
    spec.name = "cub";
    spec.num_classes = static_cast<int>(ctx.config.get_int("data", "classes", 200));
    spec.channels = static_cast<int>(ctx.config.get_int("data", "channels", 3));
    spec.height = static_cast<int>(ctx.config.get_int("data", "height", 224));
    spec.width = static_cast<int>(ctx.config.get_int("data", "width", 224));
    out.val = data::load_cache(cache, spec, data::Split::validation);
    if (need == DataNeed::localization) {
      out.annotations = data::load_cub_annotations(data_root(ctx));
      if (out.annotations.size() != static_cast<size_t>(out.val.size()))
        throw DataError("cub cache rows (" + std::to_string(out.val.size()) +
                        ") do not match annotations (" + std::to_string(out.annotations.size()) +
                        "); the cache must follow annotation order");
    }
    return out;
  }

  throw ConfigError("unknown data.dataset '" + name + "'");
}

// Target of a zero-shot run: an explicit real dataset, or the source itself
// when no target is configured (the identity sanity check).
data::LabeledDataset resolve_target(const Context& ctx, const ResolvedData& source) {
  if (source.has_target) return source.target_val;
  const std::string target = ctx.config.get_or("transfer", "target", "");
  if (target.empty()) return source.val;
  if (!is_real_dataset(target))
    throw ConfigError("transfer.target must name a real dataset, got '" + target + "'");
  return data::load_dataset(spec_by_name(target), data::Split::validation, data_root(ctx));
}

struct LoadedModel {
  std::string id;
  models::Classifier model;
  double epsilon = 0.0;
  bool natural = false;
};

std::vector<LoadedModel> load_models(const Context& ctx) {
  std::vector<std::string> paths;
  if (ctx.config.has("models", "files")) {
    std::istringstream in(ctx.config.get("models", "files"));
    std::string item;
    while (std::getline(in, item, ',')) {
      const size_t b = item.find_first_not_of(" \t");
      const size_t e = item.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      paths.push_back(item.substr(b, e - b + 1));
    }
  } else {
    const std::string dir =
        ctx.config.get_or("models", "dir", (fs::path(ctx.out_dir) / "checkpoints").string());
    if (!fs::is_directory(dir)) throw ConfigError("models.dir is not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".ckpt")
        paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw ConfigError("no model checkpoints configured or found");

  std::vector<LoadedModel> out;
  for (const auto& path : paths) {
    LoadedModel lm;
    lm.model = models::load_checkpoint(path);
    const auto& meta = lm.model.metadata();
    const auto id_it = meta.find("model_id");
    lm.id = id_it != meta.end() ? id_it->second : fs::path(path).stem().string();
    const auto eps_it = meta.find("epsilon");
    if (eps_it != meta.end()) lm.epsilon = std::strtod(eps_it->second.c_str(), nullptr);
    const auto mode_it = meta.find("train_mode");
    lm.natural = mode_it != meta.end() ? mode_it->second == "standard" : lm.epsilon == 0.0;
    out.push_back(std::move(lm));
  }
  std::sort(out.begin(), out.end(), [](const LoadedModel& a, const LoadedModel& b) {
    if (a.natural != b.natural) return a.natural;
    if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
    return a.id < b.id;
  });
  return out;
}

std::vector<std::pair<std::string, const models::Classifier*>> model_view(
    const std::vector<LoadedModel>& models) {
  std::vector<std::pair<std::string, const models::Classifier*>> view;
  view.reserve(models.size());
  for (const auto& lm : models) view.emplace_back(lm.id, &lm.model);
  return view;
}

models::ArchitectureSpec arch_from_config(const Context& ctx, const data::DatasetSpec& input) {
  models::ArchitectureSpec arch;
  arch.id = ctx.config.get("model", "architecture");
  arch.input = input;
  arch.base_width = static_cast<int>(ctx.config.get_int("model", "base_width", 0));
  return arch;
}

std::vector<std::string> comma_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const size_t b = item.find_first_not_of(" \t");
    const size_t e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// Deterministic sample of distinct dataset rows for the figure commands.
std::vector<int32_t> sample_rows(const data::LabeledDataset& dataset, int count, uint64_t seed) {
  std::vector<int32_t> idx(dataset.size());
  for (int i = 0; i < dataset.size(); ++i) idx[i] = i;
  nn::Rng rng = nn::Rng(seed).fork("cli/figures");
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(count);
  return idx;
}

}  // namespace

int cmd_train(const CliOptions& options) {
  const std::map<std::string, std::set<std::string>> schema = {
      {"experiment", kExperimentKeys},
      {"output", kOutputKeys},
      {"data", kDataKeys},
      {"model", kModelKeys},
      {"train",
       {"mode", "epsilons", "steps", "batch_size", "learning_rate", "momentum", "weight_decay",
        "log_every", "attack_norm", "attack_steps", "attack_step_size", "attack_random_start",
        "use_fgsm"}}};
  Context ctx = make_context(options, schema);

  training::TrainConfig base;
  base.mode = training::parse_mode(ctx.config.get_or("train", "mode", "standard"));
  base.attack_norm = attacks::parse_norm(ctx.config.get_or("train", "attack_norm", "linf"));
  base.attack_steps = static_cast<int>(ctx.config.get_int("train", "attack_steps", 7));
  base.attack_step_size = ctx.config.get_double("train", "attack_step_size", 0.0);
  base.attack_random_start = ctx.config.get_bool("train", "attack_random_start", true);
  base.use_fgsm = ctx.config.get_bool("train", "use_fgsm", false);
  base.batch_size = static_cast<int>(ctx.config.get_int("train", "batch_size", 128));
  base.total_steps = static_cast<int>(ctx.config.get_int("train", "steps", 1000));
  base.optimizer.learning_rate = ctx.config.get_double("train", "learning_rate", 0.1);
  base.optimizer.momentum = ctx.config.get_double("train", "momentum", 0.9);
  base.optimizer.weight_decay = ctx.config.get_double("train", "weight_decay", 5e-4);
  base.log_every = static_cast<int>(ctx.config.get_int("train", "log_every", 50));
  base.seed = ctx.seed;

  const std::vector<double> epsilons = ctx.config.get_double_list("train", "epsilons");
  // Fail before any data or model work.
  for (double eps : epsilons)
    if (!(eps >= 0.0)) throw ConfigError("train.epsilons must be non-negative");
  if (base.total_steps < 1 || base.batch_size < 1)
    throw ConfigError("train.steps and train.batch_size must be positive");
  if (!(base.optimizer.learning_rate > 0.0))
    throw ConfigError("train.learning_rate must be positive");

  const auto resolved = resolve_data(ctx, DataNeed::train_and_val);
  const auto arch = arch_from_config(ctx, resolved.val.spec);

  auto family = training::train_family(arch, resolved.train, epsilons, base, &resolved.val, "");

  const fs::path ckpt_dir = ctx.dir("checkpoints");
  const fs::path log_dir = ctx.dir("logs");
  int trained = 0, failed = 0;
  for (auto& member : family) {
    if (!member.error.empty()) {
      ++failed;
      std::cout << "member " << member.id << " failed: " << member.error << "\n";
      continue;
    }
    ++trained;
    member.model->metadata()["config_digest"] = ctx.digest;
    member.model->metadata()["seed"] = std::to_string(ctx.seed);
    const fs::path ckpt = ckpt_dir / (member.id + ".ckpt");
    models::save_checkpoint(ckpt.string(), *member.model);

    std::string log = provenance_notes_csv(ctx);
    log += "# model_id=" + member.id + "\n";
    char acc[64];
    std::snprintf(acc, sizeof(acc), "%.4f", member.report.validation_accuracy);
    log += "# validation_accuracy=" + std::string(acc) + "\n";
    log += training::train_log_csv(member.report);
    write_text(log_dir / (ctx.experiment + "_" + member.id + "_train_" + ctx.stamp + ".csv"), log);

    std::cout << "trained " << member.id << ": validation " << acc << "%, saved "
              << ckpt.string() << "\n";
  }
  if (trained == 0) {
    std::cout << "all family members failed\n";
    return kExitRuntimeError;
  }
  return failed > 0 ? kExitPartial : kExitOk;
}

int cmd_eval_robustness(const CliOptions& options) {
  const std::map<std::string, std::set<std::string>> schema = {
      {"experiment", kExperimentKeys},
      {"output", kOutputKeys},
      {"data", kDataKeys},
      {"models", kModelsKeys},
      {"sweep", {"epsilons", "norm", "steps"}}};
  Context ctx = make_context(options, schema);

  const std::vector<double> epsilons = ctx.config.get_double_list("sweep", "epsilons");
  if (epsilons.empty()) throw ConfigError("sweep.epsilons must list at least one budget");
  for (double eps : epsilons)
    if (!(eps >= 0.0)) throw ConfigError("sweep.epsilons must be non-negative");
  const auto norm = attacks::parse_norm(ctx.config.get_or("sweep", "norm", "linf"));
  const int steps = static_cast<int>(ctx.config.get_int("sweep", "steps", 10));
  if (steps < 1) throw ConfigError("sweep.steps must be positive");

  const auto resolved = resolve_data(ctx, DataNeed::val_only);
  const auto models = load_models(ctx);

  const auto report = evaluation::robustness_sweep(model_view(models), epsilons, resolved.val,
                                                   norm, steps, ctx.seed);
  emit_table(ctx, evaluation::to_table(report), resolved.val.spec.name);

  bool partial = false;
  for (const auto& row : report.cells)
    for (const auto& cell : row) partial = partial || cell.failed();
  return partial ? kExitPartial : kExitOk;
}

int cmd_zero_shot(const CliOptions& options) {
  const std::map<std::string, std::set<std::string>> schema = {
      {"experiment", kExperimentKeys},
      {"output", kOutputKeys},
      {"data", kDataKeys},
      {"models", kModelsKeys},
      {"transfer", {"target"}}};
  Context ctx = make_context(options, schema);

  const auto resolved = resolve_data(ctx, DataNeed::transfer);
  const auto target = resolve_target(ctx, resolved);
  const auto models = load_models(ctx);

  std::vector<evaluation::ZeroShotResult> results;
  int failed = 0;
  for (const auto& lm : models) {
    try {
      results.push_back(evaluation::zero_shot(lm.model, resolved.val, target, lm.id));
    } catch (const std::exception& e) {
      ++failed;
      std::cout << "model " << lm.id << " failed: " << e.what() << "\n";
    }
  }
  if (results.empty()) {
    std::cout << "all models failed\n";
    return kExitRuntimeError;
  }
  emit_table(ctx, evaluation::to_table(results),
             resolved.val.spec.name + "-to-" + target.spec.name);
  return failed > 0 ? kExitPartial : kExitOk;
}

int cmd_visualize(const CliOptions& options) {
  const std::map<std::string, std::set<std::string>> schema = {
      {"experiment", kExperimentKeys},
      {"output", kOutputKeys},
      {"data", kDataKeys},
      {"models", kModelsKeys},
      {"figures", {"count", "kinds", "norms"}}};
  Context ctx = make_context(options, schema);

  const int count = static_cast<int>(ctx.config.get_int("figures", "count", 8));
  if (count < 1) throw ConfigError("figures.count must be positive");
  const auto kinds = comma_list(ctx.config.get_or("figures", "kinds", "gradients,attacks"));
  for (const auto& kind : kinds)
    if (kind != "gradients" && kind != "attacks")
      throw ConfigError("figures.kinds entries must be gradients or attacks, got '" + kind + "'");
  const auto norm_names = comma_list(ctx.config.get_or("figures", "norms", "linf"));
  std::vector<attacks::Norm> norms;
  for (const auto& n : norm_names) norms.push_back(attacks::parse_norm(n));

  const auto resolved = resolve_data(ctx, DataNeed::val_only);
  if (resolved.val.size() < count)
    throw ConfigError("figures.count exceeds the validation split size");
  const auto models = load_models(ctx);
  const auto view = model_view(models);

  const auto rows = sample_rows(resolved.val, count, ctx.seed);
  const auto batch = resolved.val.gather_images(rows);
  const auto labels = resolved.val.gather_labels(rows);

  auto emit_figure = [&](const interpretability::ImageGrid& grid, const std::string& tag,
                         const json& extra) {
    const std::string base = ctx.experiment + "_" + tag + "_" + ctx.stamp;
    const fs::path png = ctx.dir("figures") / (base + ".png");
    interpretability::write_png(png.string(), interpretability::assemble_grid(grid.cells));
    embed_png_comment(png, provenance_text(ctx));
    json j = json::parse(grid.sidecar);
    j["config_digest"] = ctx.digest;
    j["seed"] = ctx.seed;
    for (const auto& [key, value] : extra.items()) j[key] = value;
    write_text(ctx.dir("figures") / (base + ".json"), j.dump(2) + "\n");
    std::cout << "wrote " << png.string() << " and .json\n";
  };

  for (const auto& kind : kinds) {
    if (kind == "gradients") {
      const auto grid = interpretability::gradient_visualization(view, batch, labels);
      // Mean gradient-to-image alignment per model, straight off the sidecar.
      const json sidecar = json::parse(grid.sidecar);
      std::map<std::string, std::pair<double, int>> acc;
      for (const auto& cell : sidecar["cells"])
        if (cell.contains("alignment")) {
          auto& [sum, n] = acc[cell["model"].get<std::string>()];
          sum += cell["alignment"].get<double>();
          ++n;
        }
      json extra;
      for (const auto& [id, pair] : acc)
        extra["mean_alignment"][id] = pair.second ? pair.first / pair.second : 0.0;
      emit_figure(grid, "gradients", extra);
      continue;
    }
    for (const auto norm : norms) {
      const auto grid = interpretability::attack_gallery(view, batch, labels, norm);
      const json sidecar = json::parse(grid.sidecar);
      const double epsilon = sidecar["attack"]["epsilon"].get<double>();
      std::map<std::string, int> flips;
      for (const auto& cell : sidecar["cells"])
        if (cell["before"].get<int>() != cell["after"].get<int>())
          ++flips[cell["model"].get<std::string>()];
      // Perturbation sizes straight from the grid: column 0 holds originals.
      int violations = 0;
      json max_norms;
      for (size_t m = 0; m < view.size(); ++m) {
        double worst = 0.0;
        for (size_t r = 0; r < grid.cells.size(); ++r) {
          const auto& before = grid.cells[r][0];
          const auto& after = grid.cells[r][m + 1];
          double v = 0.0;
          if (norm == attacks::Norm::linf) {
            for (size_t i = 0; i < before.numel(); ++i)
              v = std::max(v, std::abs(static_cast<double>(after.data()[i]) - before.data()[i]));
          } else {
            for (size_t i = 0; i < before.numel(); ++i) {
              const double d = static_cast<double>(after.data()[i]) - before.data()[i];
              v += d * d;
            }
            v = std::sqrt(v);
          }
          worst = std::max(worst, v);
          if (v > epsilon + 1e-6) ++violations;
        }
        max_norms[view[m].first] = worst;
      }
      json extra;
      extra["flip_counts"] = json::object();
      for (const auto& lm : models)
        extra["flip_counts"][lm.id] = flips.count(lm.id) ? flips[lm.id] : 0;
      extra["rows"] = static_cast<int>(grid.cells.size());
      extra["ball_violations"] = violations;
      extra["max_perturbation"] = max_norms;
      emit_figure(grid, std::string("attack-") + attacks::norm_name(norm), extra);
    }
  }
  return kExitOk;
}

namespace {

// RGB rendering of one localization result: image in all channels, heatmap
// added in red, annotated box outlines (ground truth green, predicted white).
void draw_box(nn::Tensor<float>& canvas, const wsol::BoundingBox& box, float r, float g, float b) {
  const int h = canvas.dim(1), w = canvas.dim(2);
  const int x0 = std::clamp(static_cast<int>(std::floor(box.xmin)), 0, w - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(box.xmax)) - 1, 0, w - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(box.ymin)), 0, h - 1);
  const int y1 = std::clamp(static_cast<int>(std::ceil(box.ymax)) - 1, 0, h - 1);
  auto put = [&](int y, int x) {
    const size_t plane = static_cast<size_t>(h) * w;
    canvas.data()[static_cast<size_t>(y) * w + x] = r;
    canvas.data()[plane + static_cast<size_t>(y) * w + x] = g;
    canvas.data()[2 * plane + static_cast<size_t>(y) * w + x] = b;
  };
  for (int x = x0; x <= x1; ++x) {
    put(y0, x);
    put(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    put(y, x0);
    put(y, x1);
  }
}

nn::Tensor<float> annotate_localization(const data::LabeledDataset& dataset, int row,
                                        const nn::Tensor<float>& heat,
                                        const wsol::BoundingBox& predicted,
                                        const wsol::BoundingBox& ground_truth) {
  const int h = dataset.spec.height, w = dataset.spec.width;
  const size_t plane = static_cast<size_t>(h) * w;
  nn::Tensor<float> canvas({3, h, w});
  const float* gray = dataset.image_ptr(row);  // channel 0 carries the structure
  for (size_t i = 0; i < plane; ++i) {
    const float base = 0.55f * gray[i];
    canvas.data()[i] = std::min(1.0f, base + 0.45f * heat.data()[i]);
    canvas.data()[plane + i] = base;
    canvas.data()[2 * plane + i] = base;
  }
  draw_box(canvas, ground_truth, 0.0f, 1.0f, 0.0f);
  draw_box(canvas, predicted, 1.0f, 1.0f, 1.0f);
  return canvas;
}

}  // namespace

int cmd_wsol(const CliOptions& options) {
  const std::map<std::string, std::set<std::string>> schema = {
      {"experiment", kExperimentKeys},
      {"output", kOutputKeys},
      {"data", kDataKeys},
      {"models", kModelsKeys},
      {"wsol", {"thresholds", "annotate_count"}}};
  Context ctx = make_context(options, schema);

  std::vector<double> thresholds = ctx.config.get_double_list("wsol", "thresholds");
  if (thresholds.empty()) thresholds.push_back(0.2);
  for (double t : thresholds)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("wsol.thresholds must lie in (0,1)");
  const int annotate_count = static_cast<int>(ctx.config.get_int("wsol", "annotate_count", 4));
  if (annotate_count < 0) throw ConfigError("wsol.annotate_count must be non-negative");

  const auto resolved = resolve_data(ctx, DataNeed::localization);
  const auto models = load_models(ctx);

  int failed = 0, succeeded = 0;
  for (double thr : thresholds) {
    evaluation::Table table;
    table.corner = "model";
    table.columns = {"gt_known_loc", "top1_loc", "top1_acc"};
    for (const auto& lm : models) {
      table.rows.push_back(lm.id);
      try {
        const auto preds =
            wsol::predict_boxes(lm.model, resolved.val, resolved.annotations, thr);
        const auto report = wsol::localization_metrics(preds, resolved.annotations);
        table.values.push_back({report.gt_known_loc, report.top1_loc, report.top1_acc});
        ++succeeded;

        std::string csv = provenance_notes_csv(ctx);
        csv += wsol::predictions_to_csv(preds);
        write_text(ctx.dir("tables") / (ctx.experiment + "_" + lm.id + "_thr" +
                                        evaluation::format_epsilon(thr) + "_predictions_" +
                                        ctx.stamp + ".csv"),
                   csv);
      } catch (const std::exception& e) {
        ++failed;
        const double nan = std::nan("");
        table.values.push_back({nan, nan, nan});
        table.notes.push_back(lm.id + ": " + e.what());
      }
    }
    emit_table(ctx, table,
               resolved.val.spec.name + "_thr" + evaluation::format_epsilon(thr));
  }
  if (succeeded == 0) {
    std::cout << "all models failed\n";
    return kExitRuntimeError;
  }

  // Annotated overlays for the first model and threshold.
  const int n = std::min(annotate_count, resolved.val.size());
  for (int i = 0; i < n; ++i) {
    try {
      nn::Tensor<float> image(
          {1, resolved.val.spec.channels, resolved.val.spec.height, resolved.val.spec.width});
      std::copy_n(resolved.val.image_ptr(i), resolved.val.item_numel(), image.data());
      const auto heat = wsol::cam(models[0].model, image, resolved.annotations[i].class_label);
      const auto box = wsol::heatmap_to_bbox(heat, thresholds[0]);
      const auto canvas =
          annotate_localization(resolved.val, i, heat, box, resolved.annotations[i].gt_box);
      const fs::path png = ctx.dir("figures") / (ctx.experiment + "_wsol_" + std::to_string(i) +
                                                 "_" + ctx.stamp + ".png");
      interpretability::write_png(png.string(), canvas);
      embed_png_comment(png, provenance_text(ctx));
    } catch (const std::exception& e) {
      std::cout << "annotation " << i << " failed: " << e.what() << "\n";
      break;
    }
  }
  return failed > 0 ? kExitPartial : kExitOk;
}

int run_command(const std::string& command, const CliOptions& options) {
  try {
    if (command == "train") return cmd_train(options);
    if (command == "eval-robustness") return cmd_eval_robustness(options);
    if (command == "zero-shot") return cmd_zero_shot(options);
    if (command == "visualize") return cmd_visualize(options);
    if (command == "wsol") return cmd_wsol(options);
    std::cerr << "unknown command: " << command << "\n";
    return kExitConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
}

}  // namespace pag::cli
