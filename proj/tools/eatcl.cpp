#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "eatcl.hpp"

namespace fs = std::filesystem;
using namespace eatcl;

namespace {

std::pair<double, double> parse_range(const std::string& s, const char* what) {
  const auto f = detail::split_fields(s);
  double lo = 0, hi = 0;
  if (f.size() != 2 || !detail::parse_double(f[0], lo) || !detail::parse_double(f[1], hi) || !(lo < hi))
    throw ArgumentError(std::string(what) + ": expected 'lo,hi' with lo < hi");
  return {lo, hi};
}

fs::path output_root(const ExperimentConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.output.empty()) return cfg.output;
  if (const char* env = std::getenv("EATCL_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning with adversarial training on small MLPs"};
  app.footer("Config keys (key = default):\n" + config_help());
  app.require_subcommand(1);

  std::string config_path, out_flag, model_path, grid_out, x_range = "-0.35,0.45",
              y_range = "-0.35,0.45", report_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
  std::size_t res = 101;

  auto* run = app.add_subcommand("run", "train every strategy x seed of a config and write outputs");
  run->add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "run this single seed instead of the config's list");
  run->add_option("--out", out_flag, "output root (default: config 'output', $EATCL_OUTPUT_ROOT, ./runs)");
  run->add_flag("--quiet", quiet, "no per-run progress lines");

  auto* val = app.add_subcommand("validate", "parse and check a config, print the resolved keys");
  val->add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);

  auto* grid = app.add_subcommand("grid", "predicted class over a 2-D lattice for a saved model");
  grid->add_option("model", model_path, "model file written by 'run'")->required()->check(CLI::ExistingFile);
  grid->add_option("--res", res, "points per axis")->capture_default_str();
  grid->add_option("--x-range", x_range, "x bounds 'lo,hi'")->capture_default_str();
  grid->add_option("--y-range", y_range, "y bounds 'lo,hi'")->capture_default_str();
  grid->add_option("--out", grid_out, "output csv (default stdout)");

  auto* rep = app.add_subcommand("report", "summarise the metrics of an experiment directory");
  rep->add_option("dir", report_dir, "experiment output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig cfg = load_config(config_path);
      if (*seed_opt) cfg.seeds = {seed};
      RunOptions opt;
      if (!quiet) opt.progress = &std::cerr;
      const auto outcome = run_experiment(cfg, output_root(cfg, out_flag), fs::path(config_path).parent_path(), opt);
      if (!quiet) std::cout << report_text(outcome.summary) << "written to " << outcome.dir.string() << '\n';
    } else if (*val) {
      const ExperimentConfig cfg = load_config(config_path);
      std::cout << emit_config(cfg);
    } else if (*grid) {
      const MLPModel m = load_model(fs::path(model_path));
      const auto g = boundary_grid(m, parse_range(x_range, "--x-range"), parse_range(y_range, "--y-range"), res);
      if (grid_out.empty()) {
        write_grid_csv(std::cout, g);
      } else {
        std::ofstream out(grid_out);
        if (!out) throw ArgumentError("cannot write '" + grid_out + "'");
        write_grid_csv(out, g);
      }
    } else if (*rep) {
      std::cout << report_text(report(report_dir));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
