#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "pag/cli/commands.hpp"
#include "pag/cli/config.hpp"
#include "pag/data/synth.hpp"
#include "pag/errors.hpp"
#include "pag/evaluation/evaluation.hpp"
#include "pag/models/classifier.hpp"
#include "pag/wsol/wsol.hpp"

using namespace pag;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "pag_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.ini";
  std::ofstream out(p);
  out << text;
  return p.string();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

cli::CliOptions opts(const std::string& config, const fs::path& out) {
  cli::CliOptions o;
  o.config_path = config;
  o.out_override = out.string();
  o.deterministic = true;
  return o;
}

const std::string kFamilyConfig = R"(
[experiment]
name = fam
seed = 7
[data]
dataset = synth_class
classes = 4
height = 16
width = 16
train_count = 96
val_count = 64
[model]
architecture = small_cnn
base_width = 4
[train]
epsilons = 0.05, 0.1
steps = 40
batch_size = 32
log_every = 20
)";

// Trained once, reused by the table/figure command tests.
const fs::path& family_out() {
  static const fs::path out = [] {
    const fs::path dir = fresh_dir("family");
    const auto config = write_config(dir, kFamilyConfig);
    REQUIRE(cli::run_command("train", opts(config, dir / "out")) == cli::kExitOk);
    return dir / "out";
  }();
  return out;
}

data::LabeledDataset family_val() {
  data::SynthOptions o;
  o.num_classes = 4;
  o.height = 16;
  o.width = 16;
  o.count = 64;
  o.split = data::Split::validation;
  return data::synth_fixture(data::FixtureKind::classification, 7, o).dataset;
}

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Walks PNG chunks, checking every CRC against zlib's crc32.
void check_png_chunks(const std::string& bytes, bool expect_text) {
  REQUIRE(bytes.size() > 8);
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  for (int i = 0; i < 8; ++i) REQUIRE(static_cast<unsigned char>(bytes[i]) == sig[i]);
  size_t pos = 8;
  bool saw_text = false;
  std::string last_type;
  while (pos + 12 <= bytes.size()) {
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | static_cast<unsigned char>(bytes[pos + i]);
    const std::string type = bytes.substr(pos + 4, 4);
    REQUIRE(pos + 12 + len <= bytes.size());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos + 4), 4 + len);
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
      stored = (stored << 8) | static_cast<unsigned char>(bytes[pos + 8 + len + i]);
    CHECK(static_cast<uint32_t>(crc) == stored);
    if (type == "tEXt") {
      saw_text = true;
      CHECK(bytes.substr(pos + 8, len).find("config_digest=") != std::string::npos);
    }
    last_type = type;
    pos += 12 + len;
  }
  CHECK(pos == bytes.size());
  CHECK(last_type == "IEND");
  CHECK(saw_text == expect_text);
}

}  // namespace

TEST_CASE("config files parse into sections with strict errors") {
  const auto cfg = cli::parse_config(
      "# comment\n[alpha]\nkey = value with spaces \nnum=42\n\n[beta]\nflag = true ; trailing\n");
  CHECK(cfg.get("alpha", "key") == "value with spaces");
  CHECK(cfg.get_int("alpha", "num", 0) == 42);
  CHECK(cfg.get_bool("beta", "flag", false));
  CHECK(cfg.get_or("beta", "absent", "d") == "d");
  CHECK(cfg.get_int("beta", "absent", 9) == 9);
  CHECK_FALSE(cfg.has("gamma", "x"));
  CHECK_THROWS_AS(cfg.get("alpha", "absent"), ConfigError);

  CHECK_THROWS_AS(cli::parse_config("key = 1\n"), ConfigError);            // before any section
  CHECK_THROWS_AS(cli::parse_config("[a]\nnovalue\n"), ConfigError);       // missing '='
  CHECK_THROWS_AS(cli::parse_config("[a\nk = 1\n"), ConfigError);          // bad header
  CHECK_THROWS_AS(cli::parse_config("[a]\nk = 1\nk = 2\n"), ConfigError);  // duplicate
  CHECK_THROWS_AS(cli::parse_config("[a]\n= 1\n"), ConfigError);           // empty key

  const auto typed = cli::parse_config("[t]\ni = 1x\nd = 2..5\nb = maybe\nl = 1,,2\n");
  CHECK_THROWS_AS(typed.get_int("t", "i", 0), ConfigError);
  CHECK_THROWS_AS(typed.get_double("t", "d", 0), ConfigError);
  CHECK_THROWS_AS(typed.get_bool("t", "b", false), ConfigError);
  CHECK_THROWS_AS(typed.get_double_list("t", "l"), ConfigError);

  const auto list = cli::parse_config("[t]\nl = 0.05, 0.1 ,0.3\n");
  CHECK(list.get_double_list("t", "l") == std::vector<double>{0.05, 0.1, 0.3});
}

TEST_CASE("config digests ignore ordering and the output section") {
  const auto a = cli::parse_config("[x]\nk1 = 1\nk2 = 2\n[y]\nk = v\n");
  const auto b = cli::parse_config("[y]\nk = v\n[x]\nk2 = 2\nk1 = 1\n");
  CHECK(cli::config_digest(a) == cli::config_digest(b));
  CHECK(cli::config_digest(a).size() == 16);

  const auto changed = cli::parse_config("[x]\nk1 = 1\nk2 = 3\n[y]\nk = v\n");
  CHECK(cli::config_digest(changed) != cli::config_digest(a));

  const auto with_out = cli::parse_config("[x]\nk1 = 1\nk2 = 2\n[y]\nk = v\n[output]\ndir = z\n");
  CHECK(cli::config_digest(with_out) == cli::config_digest(a));

  CHECK(cli::fnv1a64("") == 14695981039346656037ull);
  CHECK(cli::fnv1a64("a") == 12638187200555641996ull);

  cli::validate_schema(a, {{"x", {"k1", "k2"}}, {"y", {"k"}}});
  CHECK_THROWS_AS(cli::validate_schema(a, {{"x", {"k1", "k2"}}}), ConfigError);
  CHECK_THROWS_AS(cli::validate_schema(a, {{"x", {"k1"}}, {"y", {"k"}}}), ConfigError);
}

TEST_CASE("training command writes a checkpoint family with provenance") {
  const fs::path out = family_out();
  const auto ckpts = list_files(out / "checkpoints", ".ckpt");
  REQUIRE(ckpts.size() == 3);
  CHECK(ckpts[0].filename() == "AT-0.05.ckpt");
  CHECK(ckpts[1].filename() == "AT-0.1.ckpt");
  CHECK(ckpts[2].filename() == "Natural.ckpt");

  const auto logs = list_files(out / "logs", ".csv");
  REQUIRE(logs.size() == 3);
  const auto log = read_bytes(logs[0]);
  CHECK(log.find("# config_digest=") != std::string::npos);
  CHECK(log.find("# seed=7") != std::string::npos);
  CHECK(log.find("step,loss,lr") != std::string::npos);

  const auto natural = models::load_checkpoint(ckpts[2].string());
  CHECK(natural.metadata().at("model_id") == "Natural");
  CHECK(natural.metadata().at("config_digest").size() == 16);
  CHECK(natural.metadata().at("seed") == "7");

  SUBCASE("rerunning the same config reproduces every artifact byte for byte") {
    const fs::path dir2 = fresh_dir("family_rerun");
    const auto config = write_config(dir2, kFamilyConfig);
    REQUIRE(cli::run_command("train", opts(config, dir2 / "out")) == cli::kExitOk);
    for (const auto& ckpt : ckpts)
      CHECK(read_bytes(dir2 / "out" / "checkpoints" / ckpt.filename()) == read_bytes(ckpt));
    for (const auto& log_path : list_files(out / "logs", ".csv"))
      CHECK(read_bytes(dir2 / "out" / "logs" / log_path.filename()) == read_bytes(log_path));
  }

  SUBCASE("negative budgets fail before any work") {
    const fs::path dir2 = fresh_dir("family_bad");
    const auto config = write_config(
        dir2, "[experiment]\nname = bad\n[data]\ndataset = synth_class\n[model]\n"
              "architecture = small_cnn\n[train]\nepsilons = 0.1, -0.2\n");
    CHECK(cli::run_command("train", opts(config, dir2 / "out")) == cli::kExitConfigError);
    CHECK_FALSE(fs::exists(dir2 / "out" / "checkpoints"));
  }

  SUBCASE("unknown keys are rejected") {
    const fs::path dir2 = fresh_dir("family_unknown");
    const auto config = write_config(dir2, kFamilyConfig + "typo = 1\n");
    CHECK(cli::run_command("train", opts(config, dir2 / "out")) == cli::kExitConfigError);
    const auto config2 = write_config(dir2, kFamilyConfig + "[mystery]\nk = 1\n");
    CHECK(cli::run_command("train", opts(config2, dir2 / "out")) == cli::kExitConfigError);
  }
}

TEST_CASE("robustness command sweeps saved models into tables") {
  const fs::path out = family_out();
  const fs::path dir = fresh_dir("sweep");
  const std::string config_text = "[experiment]\nname = sweep\nseed = 7\n"
                                  "[data]\ndataset = synth_class\nclasses = 4\nheight = 16\n"
                                  "width = 16\nval_count = 64\n"
                                  "[models]\ndir = " +
                                  (out / "checkpoints").string() +
                                  "\n[sweep]\nepsilons = 0, 0.05, 0.1\n";
  const auto config = write_config(dir, config_text);
  REQUIRE(cli::run_command("eval-robustness", opts(config, dir / "out")) == cli::kExitOk);

  const auto csvs = list_files(dir / "out" / "tables", ".csv");
  const auto mds = list_files(dir / "out" / "tables", ".md");
  REQUIRE(csvs.size() == 1);
  REQUIRE(mds.size() == 1);
  CHECK(csvs[0].filename().string().rfind("sweep_synth_", 0) == 0);

  const auto text = read_bytes(csvs[0]);
  CHECK(text.find("# config_digest=") != std::string::npos);
  CHECK(text.find("# seed=7") != std::string::npos);

  const auto table = evaluation::parse_csv_table(text);
  REQUIRE(table.rows == std::vector<std::string>{"Natural", "AT-0.05", "AT-0.1"});
  REQUIRE(table.columns == std::vector<std::string>{"eps=0", "eps=0.05", "eps=0.1"});

  // The zero-budget column is the clean accuracy.
  const auto natural = models::load_checkpoint((out / "checkpoints" / "Natural.ckpt").string());
  const double clean = evaluation::accuracy(natural, family_val());
  CHECK(two_decimals(table.values[0][0]) == two_decimals(clean));
  for (const auto& row : table.values)
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }

  SUBCASE("a shape-mismatched model fails its cells but not the run") {
    models::Classifier odd({"small_cnn", {"odd", 4, 1, 8, 8}, 4}, 1);
    odd.metadata()["model_id"] = "Odd";
    const fs::path odd_path = dir / "Odd.ckpt";
    models::save_checkpoint(odd_path.string(), odd);

    const fs::path dir2 = fresh_dir("sweep_partial");
    const auto config2 = write_config(
        dir2, "[experiment]\nname = sweep2\nseed = 7\n"
              "[data]\ndataset = synth_class\nclasses = 4\nheight = 16\nwidth = 16\n"
              "val_count = 64\n[models]\nfiles = " +
                  (out / "checkpoints" / "Natural.ckpt").string() + ", " + odd_path.string() +
                  "\n[sweep]\nepsilons = 0.05\n");
    CHECK(cli::run_command("eval-robustness", opts(config2, dir2 / "out")) == cli::kExitPartial);
    const auto partial = read_bytes(list_files(dir2 / "out" / "tables", ".csv")[0]);
    CHECK(partial.find("failed") != std::string::npos);
  }
}

TEST_CASE("zero-shot command covers every checkpoint and the identity sanity check") {
  const fs::path out = family_out();
  const fs::path dir = fresh_dir("zshot");
  const auto config = write_config(
      dir, "[experiment]\nname = zs\nseed = 7\n"
           "[data]\ndataset = synth_class\nclasses = 4\nheight = 16\nwidth = 16\n"
           "val_count = 64\n[models]\ndir = " +
               (out / "checkpoints").string() + "\n[transfer]\n");
  REQUIRE(cli::run_command("zero-shot", opts(config, dir / "out")) == cli::kExitOk);

  const auto csvs = list_files(dir / "out" / "tables", ".csv");
  REQUIRE(csvs.size() == 1);
  CHECK(csvs[0].filename().string().rfind("zs_synth-to-synth_", 0) == 0);
  const auto table = evaluation::parse_csv_table(read_bytes(csvs[0]));
  REQUIRE(table.rows.size() == 3);  // one row per checkpoint in the directory
  REQUIRE(table.columns == std::vector<std::string>{"source_acc", "target_acc"});
  for (const auto& row : table.values) CHECK(row[0] == row[1]);  // identity transfer
}

TEST_CASE("zero-shot command adapts a different target domain") {
  const fs::path dir = fresh_dir("transfer");
  const auto train_config = write_config(
      dir, "[experiment]\nname = tr\nseed = 3\n[data]\ndataset = synth_transfer\n"
           "train_count = 64\nval_count = 48\n[model]\narchitecture = small_cnn\n"
           "base_width = 4\n[train]\nsteps = 30\nbatch_size = 32\n");
  REQUIRE(cli::run_command("train", opts(train_config, dir / "out")) == cli::kExitOk);

  const fs::path dir2 = fresh_dir("transfer_eval");
  const auto config = write_config(
      dir2, "[experiment]\nname = tr\nseed = 3\n[data]\ndataset = synth_transfer\n"
            "train_count = 64\nval_count = 48\n[models]\ndir = " +
                (dir / "out" / "checkpoints").string() + "\n");
  REQUIRE(cli::run_command("zero-shot", opts(config, dir2 / "out")) == cli::kExitOk);

  const auto csvs = list_files(dir2 / "out" / "tables", ".csv");
  REQUIRE(csvs.size() == 1);
  CHECK(csvs[0].filename().string().rfind("tr_synth_src-to-synth_tgt_", 0) == 0);
  const auto text = read_bytes(csvs[0]);
  CHECK(text.find("bilinear") != std::string::npos);  // adapter description in the notes
  const auto table = evaluation::parse_csv_table(text);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.values[0][0] >= 0.0);
}

TEST_CASE("visualize command emits deterministic figures with flip counts") {
  const fs::path out = family_out();
  const auto config_text = "[experiment]\nname = fig\nseed = 7\n"
                           "[data]\ndataset = synth_class\nclasses = 4\nheight = 16\n"
                           "width = 16\nval_count = 64\n[models]\ndir = " +
                           (out / "checkpoints").string() +
                           "\n[figures]\ncount = 3\nnorms = linf\n";
  const fs::path dir = fresh_dir("figs");
  const auto config = write_config(dir, config_text);
  REQUIRE(cli::run_command("visualize", opts(config, dir / "out")) == cli::kExitOk);

  const auto pngs = list_files(dir / "out" / "figures", ".png");
  const auto jsons = list_files(dir / "out" / "figures", ".json");
  REQUIRE(pngs.size() == 2);  // gradients + attack-linf
  REQUIRE(jsons.size() == 2);
  CHECK(pngs[0].filename().string().rfind("fig_attack-linf_", 0) == 0);
  CHECK(pngs[1].filename().string().rfind("fig_gradients_", 0) == 0);

  for (const auto& png : pngs) check_png_chunks(read_bytes(png), true);

  const auto attack = nlohmann::json::parse(read_bytes(jsons[0]));
  CHECK(attack["config_digest"].is_string());
  CHECK(attack["seed"] == 7);
  CHECK(attack["ball_violations"] == 0);
  CHECK(attack["rows"] == 3);
  REQUIRE(attack["flip_counts"].size() == 3);
  for (const auto& [id, count] : attack["flip_counts"].items()) {
    CHECK(count.get<int>() >= 0);
    CHECK(count.get<int>() <= 3);
  }
  const double eps = attack["attack"]["epsilon"].get<double>();
  for (const auto& [id, worst] : attack["max_perturbation"].items())
    CHECK(worst.get<double>() <= eps + 1e-6);

  const auto grads = nlohmann::json::parse(read_bytes(jsons[1]));
  REQUIRE(grads["mean_alignment"].size() == 3);
  for (const auto& [id, v] : grads["mean_alignment"].items()) {
    CHECK(v.get<double>() >= -1.0);
    CHECK(v.get<double>() <= 1.0);
  }

  SUBCASE("rerun reproduces the figure bytes") {
    const fs::path dir2 = fresh_dir("figs_rerun");
    const auto config2 = write_config(dir2, config_text);
    REQUIRE(cli::run_command("visualize", opts(config2, dir2 / "out")) == cli::kExitOk);
    for (const auto& png : pngs)
      CHECK(read_bytes(dir2 / "out" / "figures" / png.filename()) == read_bytes(png));
    for (const auto& js : jsons)
      CHECK(read_bytes(dir2 / "out" / "figures" / js.filename()) == read_bytes(js));
  }
}

TEST_CASE("wsol command sweeps thresholds over localization fixtures") {
  const fs::path dir = fresh_dir("wsol_train");
  const auto train_config = write_config(
      dir, "[experiment]\nname = loc\nseed = 5\n[data]\ndataset = synth_loc\n"
           "height = 16\nwidth = 16\ntrain_count = 96\nval_count = 24\n"
           "[model]\narchitecture = cam_backbone\nbase_width = 4\n"
           "[train]\nsteps = 40\nbatch_size = 16\n");
  REQUIRE(cli::run_command("train", opts(train_config, dir / "out")) == cli::kExitOk);

  const fs::path dir2 = fresh_dir("wsol_eval");
  const auto config = write_config(
      dir2, "[experiment]\nname = loc\nseed = 5\n[data]\ndataset = synth_loc\n"
            "height = 16\nwidth = 16\nval_count = 24\n[models]\ndir = " +
                (dir / "out" / "checkpoints").string() +
                "\n[wsol]\nthresholds = 0.2, 0.4\nannotate_count = 2\n");
  REQUIRE(cli::run_command("wsol", opts(config, dir2 / "out")) == cli::kExitOk);

  const auto csvs = list_files(dir2 / "out" / "tables", ".csv");
  REQUIRE(csvs.size() == 4);  // two threshold reports and two prediction dumps

  int reports = 0, dumps = 0;
  for (const auto& path : csvs) {
    const auto name = path.filename().string();
    if (name.find("_predictions_") != std::string::npos) {
      ++dumps;
      const auto preds = wsol::predictions_from_csv(read_bytes(path));
      CHECK(preds.size() == 24);
    } else {
      ++reports;
      const auto table = evaluation::parse_csv_table(read_bytes(path));
      REQUIRE(table.columns ==
              std::vector<std::string>{"gt_known_loc", "top1_loc", "top1_acc"});
      REQUIRE(table.rows == std::vector<std::string>{"Natural"});
      CHECK(table.values[0][0] >= table.values[0][1]);  // joint <= box marginal
      CHECK(table.values[0][2] >= table.values[0][1]);  // joint <= class marginal
    }
  }
  CHECK(reports == 2);
  CHECK(dumps == 2);

  const auto pngs = list_files(dir2 / "out" / "figures", ".png");
  REQUIRE(pngs.size() == 2);
  for (const auto& png : pngs) check_png_chunks(read_bytes(png), true);
}

TEST_CASE("command launcher maps failures to exit codes") {
  const fs::path dir = fresh_dir("codes");
  CHECK(cli::run_command("nonsense", opts("missing.ini", dir)) == cli::kExitConfigError);
  CHECK(cli::run_command("train", opts((dir / "absent.ini").string(), dir)) ==
        cli::kExitConfigError);

  // Valid config, but the checkpoint directory does not exist: runtime-level
  // failures surface as a config error here because they are caught upfront.
  const auto config = write_config(
      dir, "[experiment]\nname = x\n[data]\ndataset = synth_class\n[models]\n"
           "dir = /nonexistent_dir\n[sweep]\nepsilons = 0.1\n");
  CHECK(cli::run_command("eval-robustness", opts(config, dir / "out")) == cli::kExitConfigError);
}
