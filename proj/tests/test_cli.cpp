#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pno/config.hpp"
#include "pno/metrics.hpp"

using namespace pno;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path base =
      fs::temp_directory_path() / ("pno_cli_io_" + std::to_string(counter++));
  const fs::path out_file = base.string() + ".out";
  const fs::path err_file = base.string() + ".err";
  const std::string cmd = std::string("\"") + PNO_CLI_PATH + "\" " + args +
                          " > " + out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  fs::remove(out_file);
  fs::remove(err_file);
  return r;
}

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() / ("pno_cli_test_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const json& j) {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("pno_cli_cfg_" + std::to_string(counter++) + ".json");
  std::ofstream out(p);
  out << j.dump(2) << "\n";
  return p;
}

json bench_data_config() {
  return json{{"id", "cli-bench"}, {"generator", "gaussian"}, {"seed", 11},
              {"n_train", 12},     {"n_val", 4},              {"n_test", 4},
              {"grid_points", 32}, {"k_smooth", 8},           {"sigma_eta", 0.3}};
}

json bench_train_config() {
  return json{{"method", "pno_r"}, {"seed", 3},  {"m_train", 3},
              {"learning_rate", 2e-3}, {"batch_size", 8}, {"max_epochs", 3},
              {"patience", 3},     {"modes", 8}, {"width", 8},
              {"depth", 2},        {"projection_width", 16}};
}

bool files_equal(const fs::path& a, const fs::path& b) {
  return slurp(a) == slurp(b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

// Generates the small benchmark dataset once and hands out its directory.
const fs::path& bench_dataset_dir() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir();
    const RunResult r = run_cli("generate-data --config " +
                                write_config(bench_data_config()).string() +
                                " --out " + d.string());
    REQUIRE(r.exit_code == 0);
    return d;
  }();
  return dir;
}

// Trains the benchmark model once; several cases evaluate the checkpoint.
const fs::path& bench_train_dir() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir();
    const RunResult r = run_cli("train --config " +
                                write_config(bench_train_config()).string() +
                                " --dataset " + bench_dataset_dir().string() +
                                " --out " + d.string());
    REQUIRE(r.exit_code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("help, usage errors, and config errors use distinct exit codes") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("--help").out.find("generate-data") != std::string::npos);

  // No subcommand, unknown subcommand, missing required option: usage errors.
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("generate-data --config x.json").exit_code == 2);

  const fs::path out = temp_dir();
  RunResult r = run_cli("generate-data --config /no/such/file.json --out " +
                        out.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("cannot open config file") != std::string::npos);

  const fs::path broken = write_config(json::object());
  {
    std::ofstream f(broken);
    f << "{ this is not json";
  }
  r = run_cli("generate-data --config " + broken.string() + " --out " +
              out.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("unparseable JSON") != std::string::npos);

  json bad_gen = bench_data_config();
  bad_gen["generator"] = "navier";
  r = run_cli("generate-data --config " + write_config(bad_gen).string() +
              " --out " + out.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("unknown generator 'navier' (valid: ks, gaussian, heat)") !=
        std::string::npos);

  json typo = bench_data_config();
  typo["n_trian"] = 7;
  r = run_cli("generate-data --config " + write_config(typo).string() +
              " --out " + out.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("unknown key 'n_trian'") != std::string::npos);
}

TEST_CASE("check-propriety and grad-check report success") {
  RunResult r = run_cli("check-propriety --trials 300 --atoms 4 --dims 3 --seed 17");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("propriety check passed") != std::string::npos);

  r = run_cli("check-propriety --atoms 9");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("atoms must lie in [1, 5]") != std::string::npos);

  r = run_cli("grad-check --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("gradient check passed") != std::string::npos);
}

TEST_CASE("generate-data is deterministic and refuses to clobber") {
  const fs::path cfg = write_config(bench_data_config());
  const fs::path a = temp_dir();
  const fs::path b = temp_dir();

  RunResult r = run_cli("generate-data --config " + cfg.string() + " --out " +
                        a.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("12 train / 4 val / 4 test") != std::string::npos);
  CHECK(run_cli("generate-data --config " + cfg.string() + " --out " +
                b.string())
            .exit_code == 0);

  const char* names[] = {"train_inputs.pnot", "train_targets.pnot",
                         "val_inputs.pnot",   "val_targets.pnot",
                         "test_inputs.pnot",  "test_targets.pnot",
                         "manifest.json"};
  for (const char* name : names) {
    CAPTURE(name);
    CHECK(files_equal(a / name, b / name));
  }

  r = run_cli("generate-data --config " + cfg.string() + " --out " + a.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("is not empty; pass --force to overwrite") !=
        std::string::npos);

  r = run_cli("generate-data --config " + cfg.string() + " --out " + a.string() +
              " --force");
  CHECK(r.exit_code == 0);
  for (const char* name : names) CHECK(files_equal(a / name, b / name));
}

TEST_CASE("train writes checkpoint, history, and the resolved config") {
  const fs::path& dir = bench_train_dir();
  CHECK(fs::exists(dir / "checkpoint.pnoc"));
  CHECK(fs::exists(dir / "history.csv"));
  CHECK(fs::exists(dir / "resolved_config.json"));

  const auto history = lines_of(slurp(dir / "history.csv"));
  REQUIRE(history.size() == 4);  // header + one row per epoch
  CHECK(history[0] ==
        "epoch,train_loss,val_loss,seconds,max_grad_norm,learning_rate");
  CHECK(split_csv_line(history[1])[0] == "0");
  CHECK(split_csv_line(history[3])[0] == "2");

  // The resolved config parses back into a valid TrainConfig that matches
  // what was requested.
  const json resolved = json::parse(slurp(dir / "resolved_config.json"));
  const TrainConfig tc = train_config_from_json(resolved);
  CHECK(tc.method == "pno_r");
  CHECK(tc.seed == 3);
  CHECK(tc.max_epochs == 3);
  CHECK(tc.modes == 8);

  // A second identical run reproduces the checkpoint byte for byte.
  const fs::path rerun = temp_dir();
  const RunResult r = run_cli("train --config " +
                              write_config(bench_train_config()).string() +
                              " --dataset " + bench_dataset_dir().string() +
                              " --out " + rerun.string());
  CHECK(r.exit_code == 0);
  CHECK(files_equal(dir / "checkpoint.pnoc", rerun / "checkpoint.pnoc"));
  CHECK(files_equal(dir / "resolved_config.json",
                    rerun / "resolved_config.json"));

  // Asking for more modes than the dataset grid can represent is refused.
  json wide = bench_train_config();
  wide["modes"] = 32;
  const RunResult bad = run_cli("train --config " +
                                write_config(wide).string() + " --dataset " +
                                bench_dataset_dir().string() + " --out " +
                                temp_dir().string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("modes exceeds the dataset's representable spectrum") !=
        std::string::npos);

  // Failures past configuration (here: an unwritable output path) exit 1.
  const RunResult unwritable =
      run_cli("train --config " + write_config(bench_train_config()).string() +
              " --dataset " + bench_dataset_dir().string() +
              " --out /dev/null/sub");
  CHECK(unwritable.exit_code == 1);
  CHECK(unwritable.err.find("error:") != std::string::npos);
}

TEST_CASE("evaluate writes metrics tables and respects the sampling seed") {
  const fs::path ckpt = bench_train_dir() / "checkpoint.pnoc";
  const fs::path out = temp_dir();
  RunResult r = run_cli("evaluate --checkpoint " + ckpt.string() +
                        " --dataset " + bench_dataset_dir().string() +
                        " --out " + out.string() + " --m-eval 20");
  CHECK(r.exit_code == 0);

  const auto aggregates = read_metrics_csv(out / "metrics.csv");
  REQUIRE(aggregates.size() == 1);
  CHECK(aggregates[0].method == "pno_r");
  CHECK(aggregates[0].dataset_id == "cli-bench");
  CHECK(aggregates[0].item == "mean");
  CHECK(aggregates[0].seed == 3);
  CHECK(aggregates[0].epochs == 3);

  const auto per_item = read_metrics_csv(out / "per_item.csv");
  REQUIRE(per_item.size() == 4);
  for (std::size_t i = 0; i < per_item.size(); ++i)
    CHECK(per_item[i].item == std::to_string(i));

  const json summary = json::parse(slurp(out / "metrics.json"));
  CHECK(summary.at("aggregate").size() == 1);
  CHECK(summary.at("per_item").size() == 4);
  CHECK(summary.at("by_method").at("pno_r").at("runs").get<int>() == 1);

  // Defaulted sampling seed is the checkpoint's train seed: passing it
  // explicitly reproduces the tables byte for byte, a different seed does not.
  const fs::path same = temp_dir();
  const fs::path other = temp_dir();
  CHECK(run_cli("evaluate --checkpoint " + ckpt.string() + " --dataset " +
                bench_dataset_dir().string() + " --out " + same.string() +
                " --m-eval 20 --eval-seed 3")
            .exit_code == 0);
  CHECK(files_equal(out / "metrics.csv", same / "metrics.csv"));
  CHECK(files_equal(out / "per_item.csv", same / "per_item.csv"));
  CHECK(run_cli("evaluate --checkpoint " + ckpt.string() + " --dataset " +
                bench_dataset_dir().string() + " --out " + other.string() +
                " --m-eval 20 --eval-seed 999")
            .exit_code == 0);
  const auto reseeded = read_metrics_csv(other / "metrics.csv");
  REQUIRE(reseeded.size() == 1);
  CHECK(reseeded[0].es != aggregates[0].es);

  // Two --checkpoint flags produce one aggregate row each plus seed stats.
  const fs::path both = temp_dir();
  CHECK(run_cli("evaluate --checkpoint " + ckpt.string() + " --checkpoint " +
                ckpt.string() + " --dataset " + bench_dataset_dir().string() +
                " --out " + both.string() + " --m-eval 10")
            .exit_code == 0);
  CHECK(read_metrics_csv(both / "metrics.csv").size() == 2);
  const json two = json::parse(slurp(both / "metrics.json"));
  CHECK(two.at("by_method").at("pno_r").at("runs").get<int>() == 2);
  CHECK(two.at("by_method").at("pno_r").at("es").contains("std"));

  // A checkpoint cannot be scored against a dataset on a different grid.
  json other_grid = bench_data_config();
  other_grid["grid_points"] = 64;
  other_grid["n_train"] = 4;
  other_grid["n_val"] = 2;
  other_grid["n_test"] = 2;
  const fs::path mism = temp_dir();
  CHECK(run_cli("generate-data --config " +
                write_config(other_grid).string() + " --out " + mism.string())
            .exit_code == 0);
  const RunResult bad = run_cli("evaluate --checkpoint " + ckpt.string() +
                                " --dataset " + mism.string() + " --out " +
                                temp_dir().string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("grid points") != std::string::npos);
}

TEST_CASE("sweep over sample counts writes one row per cell") {
  json base = bench_train_config();
  base["max_epochs"] = 2;
  base["patience"] = 2;
  const fs::path out = temp_dir();
  RunResult r = run_cli("sweep --kind samples --config " +
                        write_config(base).string() + " --dataset " +
                        bench_dataset_dir().string() + " --out " + out.string() +
                        " --m-eval 10");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("5 cells, 0 failed") != std::string::npos);

  const auto rows = lines_of(slurp(out / "sweep.csv"));
  REQUIRE(rows.size() == 6);
  const char* sizes[] = {"3", "5", "10", "20", "50"};
  for (int i = 0; i < 5; ++i) {
    const auto fields = split_csv_line(rows[static_cast<std::size_t>(i) + 1]);
    REQUIRE(fields.size() == 18);
    CHECK(fields[5] == sizes[i]);
    CHECK(fields[17] == "ok");
  }

  r = run_cli("sweep --kind typo --config " + write_config(base).string() +
              " --dataset " + bench_dataset_dir().string() + " --out " +
              out.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("unknown sweep kind 'typo' (valid: dropout, samples)") !=
        std::string::npos);
}
