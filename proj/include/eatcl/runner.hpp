#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eatcl/config.hpp"
#include "eatcl/data.hpp"
#include "eatcl/errors.hpp"
#include "eatcl/eval.hpp"
#include "eatcl/mlp.hpp"
#include "eatcl/strategies.hpp"

namespace eatcl {

inline constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Model artifact
//
//   #eatcl-model layers=2,3,2
//   one line per weight row (sizes[l] rows of sizes[l+1] values), then the bias line,
//   layer by layer

inline void save_model(std::ostream& out, const MLPModel& m) {
  out << "#eatcl-model layers=";
  for (std::size_t i = 0; i < m.layer_sizes.size(); ++i) out << (i ? "," : "") << m.layer_sizes[i];
  out << '\n';
  auto line = [&](std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << detail::format_double(v[i]);
    out << '\n';
  };
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (std::size_t r = 0; r < m.weights[l].rows(); ++r) line(m.weights[l].row(r));
    line(m.biases[l]);
  }
}

inline void save_model(const std::filesystem::path& path, const MLPModel& m) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write model '" + path.string() + "'");
  save_model(out, m);
}

inline MLPModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#eatcl-model layers=", 0) != 0)
    throw ParseError("missing #eatcl-model header", 1);
  std::vector<std::size_t> sizes;
  for (const auto& f : detail::split_fields(line.substr(20))) {
    double v = 0.0;
    if (!detail::parse_double(f, v) || v < 1 || v != std::floor(v))
      throw ParseError("bad layer size '" + f + "'", 1);
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (sizes.size() < 2) throw ParseError("need at least two layer sizes", 1);
  MLPModel m;
  m.layer_sizes = sizes;
  std::size_t lineno = 1;
  auto read_row = [&](std::size_t n) {
    std::vector<double> row(n);
    do {
      if (!std::getline(in, line)) throw ParseError("unexpected end of model file", lineno + 1);
      ++lineno;
    } while (detail::trim(line).empty());
    const auto f = detail::split_fields(detail::trim(line));
    if (f.size() != n) throw ParseError("expected " + std::to_string(n) + " values", lineno);
    for (std::size_t i = 0; i < n; ++i)
      if (!detail::parse_double(f[i], row[i])) throw ParseError("non-numeric value", lineno);
    return row;
  };
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Matrix w(sizes[l], sizes[l + 1]);
    for (std::size_t r = 0; r < sizes[l]; ++r) {
      const auto row = read_row(sizes[l + 1]);
      std::copy(row.begin(), row.end(), w.row(r).begin());
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(read_row(sizes[l + 1]));
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) throw ParseError("trailing data after last layer", lineno);
  }
  return m;
}

inline MLPModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read model '" + path.string() + "'");
  return load_model(in);
}

// ---------------------------------------------------------------------------
// Streams for one seed

struct RunStreams {
  TaskStream train;
  TaskStream test;
};

namespace detail {

inline std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace detail

/// Training and test streams for `seed`. Class imbalance touches the training
/// data only; the test data stays balanced.
inline RunStreams build_streams(const ExperimentConfig& c, std::uint64_t seed,
                                const std::filesystem::path& base_dir = {}) {
  const auto& d = c.dataset;
  Dataset train, test;
  switch (d.kind) {
    case DatasetKind::crescent:
      train = gen_crescent(d.n_per_class, d.noise, derive_seed(seed, "train-data"), d.geometry);
      test = gen_crescent(d.n_test_per_class, d.noise, derive_seed(seed, "test-data"), d.geometry);
      break;
    case DatasetKind::blobs: {
      BlobSpec spec;
      spec.num_tasks = d.num_tasks;
      spec.classes_per_task = c.classes_per_task;
      spec.dim = d.dim;
      spec.n_per_class = d.n_per_class;
      spec.separation = d.separation;
      spec.noise = d.noise;
      spec.center_lo = d.center_lo;
      spec.center_hi = d.center_hi;
      StreamPair sp = gen_blob_streams(spec, d.n_test_per_class, derive_seed(seed, "data"));
      if (d.keep_fractions.empty()) return {std::move(sp.train), std::move(sp.test)};
      train = sp.train.joined();
      test = sp.test.joined();
      break;
    }
    case DatasetKind::csv:
      train = load_csv(detail::resolve(d.path, base_dir).string());
      test = d.test_path.empty() ? train : load_csv(detail::resolve(d.test_path, base_dir).string());
      if (test.dim() != train.dim())
        throw ConfigError("dataset.test_path: feature width differs from the training file");
      break;
  }
  if (!d.keep_fractions.empty())
    train = imbalance_subsample(train, d.keep_fractions, derive_seed(seed, "imb"));
  return {split_by_classes(train, c.classes_per_task), split_by_classes(test, c.classes_per_task)};
}

inline TrainConfig train_config_for(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig t = c.train;
  t.seed = seed;
  return t;
}

inline std::string run_id(StrategyKind k, std::uint64_t seed) {
  return std::string(to_string(k)) + "-s" + std::to_string(seed);
}

struct SingleRun {
  RunStreams streams;
  TrainResult result;
};

/// Builds the streams and trains one strategy for one seed, in memory.
inline SingleRun run_single(const ExperimentConfig& c, StrategyKind k, std::uint64_t seed,
                            const std::filesystem::path& base_dir = {}) {
  SingleRun out{build_streams(c, seed, base_dir), {}};
  const EvalPlan plan{&out.streams.test, c.eval_attack};
  out.result = train_stream(out.streams.train, k, train_config_for(c, seed), &plan);
  return out;
}

// ---------------------------------------------------------------------------
// Per-run outputs

inline void write_metrics_csv(std::ostream& out, const std::string& id,
                              const std::vector<MetricsRecord>& records) {
  out << "run_id,step,task,accuracy,robustness\n";
  for (const auto& r : records)
    for (std::size_t t = 0; t < r.per_task_accuracy.size(); ++t)
      out << id << ',' << r.step << ',' << t + 1 << ',' << detail::format_double(r.per_task_accuracy[t])
          << ',' << detail::format_double(r.per_task_robustness[t]) << '\n';
}

inline nlohmann::json run_json(const std::string& id, StrategyKind k, std::uint64_t seed,
                               const RunLog& log) {
  nlohmann::json j;
  j["run_id"] = id;
  j["strategy"] = std::string(to_string(k));
  j["seed"] = seed;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : log.records) {
    nlohmann::json rj;
    rj["step"] = r.step;
    rj["accuracy"] = r.per_task_accuracy;
    rj["robustness"] = r.per_task_robustness;
    rj["mean_accuracy"] = r.mean_accuracy;
    rj["mean_robustness"] = r.mean_robustness;
    rj["prev_task_rate"] = r.prev_task_rate ? nlohmann::json(*r.prev_task_rate) : nlohmann::json();
    recs.push_back(std::move(rj));
  }
  auto& rates = j["attack_rates"] = nlohmann::json::array();
  for (const auto& s : log.attack_rates)
    rates.push_back({{"step", s.step}, {"epoch", s.epoch}, {"rate", s.rate}});
  j["epoch_losses"] = log.epoch_losses;
  return j;
}

// ---------------------------------------------------------------------------
// Report

struct StrategySummary {
  std::string strategy;
  std::size_t runs = 0;
  std::size_t final_step = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double robustness_mean = 0.0;
  double robustness_std = 0.0;
};

struct Report {
  std::vector<StrategySummary> strategies;  // in order of first appearance
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

struct FinalRow {
  std::size_t step = 0;
  double acc_sum = 0.0, rob_sum = 0.0;
  std::size_t n = 0;
};

/// Final-step mean accuracy and robustness of one metrics file.
inline FinalRow read_final(const std::filesystem::path& p, std::string& id) {
  std::ifstream in(p);
  if (!in) throw ArgumentError("cannot read '" + p.string() + "'");
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || trim(line) != "run_id,step,task,accuracy,robustness")
    throw ParseError(p.filename().string() + ": unexpected metrics header", 1);
  FinalRow best;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(trim(line));
    double step = 0, task = 0, acc = 0, rob = 0;
    if (f.size() != 5 || !parse_double(f[1], step) || !parse_double(f[2], task) ||
        !parse_double(f[3], acc) || !parse_double(f[4], rob))
      throw ParseError(p.filename().string() + ": malformed metrics row", lineno);
    id = f[0];
    const auto s = static_cast<std::size_t>(step);
    if (s > best.step) best = {s, 0.0, 0.0, 0};
    if (s == best.step) {
      best.acc_sum += acc;
      best.rob_sum += rob;
      ++best.n;
    }
  }
  if (best.n == 0) throw ParseError(p.filename().string() + ": no metrics rows", lineno);
  return best;
}

}  // namespace detail

/// Summarises every metrics/<run_id>.csv under `dir`: per strategy, mean and
/// sample standard deviation over seeds of the final-step mean accuracy and
/// robustness. Reads only.
inline Report report(const std::filesystem::path& dir) {
  const auto mdir = dir / "metrics";
  if (!std::filesystem::is_directory(mdir))
    throw ArgumentError("no metrics directory under '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(mdir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> accs, robs;
  std::map<std::string, std::size_t> steps;
  for (const auto& f : files) {
    std::string id;
    const auto row = detail::read_final(f, id);
    const auto dash = id.rfind("-s");
    const std::string strat = dash == std::string::npos ? id : id.substr(0, dash);
    if (!accs.contains(strat)) order.push_back(strat);
    accs[strat].push_back(row.acc_sum / static_cast<double>(row.n));
    robs[strat].push_back(row.rob_sum / static_cast<double>(row.n));
    steps[strat] = row.step;
  }
  // Order by the canonical strategy list where names are known.
  auto rank = [](const std::string& s) {
    for (std::size_t i = 0; i < kStrategyNames.size(); ++i)
      if (kStrategyNames[i].second == s) return i;
    return kStrategyNames.size();
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
  Report r;
  for (const auto& s : order) {
    const auto [am, as] = detail::mean_std(accs[s]);
    const auto [rm, rs] = detail::mean_std(robs[s]);
    r.strategies.push_back({s, accs[s].size(), steps[s], am, as, rm, rs});
  }
  return r;
}

inline nlohmann::json report_json(const Report& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : r.strategies)
    j.push_back({{"strategy", s.strategy},
                 {"runs", s.runs},
                 {"final_step", s.final_step},
                 {"accuracy_mean", s.accuracy_mean},
                 {"accuracy_std", s.accuracy_std},
                 {"robustness_mean", s.robustness_mean},
                 {"robustness_std", s.robustness_std}});
  return {{"strategies", j}};
}

inline std::string report_text(const Report& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %4s %5s %17s %17s\n", "strategy", "runs", "step",
                "accuracy", "robustness");
  out << buf;
  for (const auto& s : r.strategies) {
    std::snprintf(buf, sizeof buf, "%-12s %4zu %5zu %8.2f +- %5.2f %8.2f +- %5.2f\n",
                  s.strategy.c_str(), s.runs, s.final_step, s.accuracy_mean, s.accuracy_std,
                  s.robustness_mean, s.robustness_std);
    out << buf;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Experiment driver

struct RunOptions {
  std::ostream* progress = nullptr;  // one line per finished run
};

struct ExperimentOutcome {
  std::filesystem::path dir;
  Report summary;
  double wall_seconds = 0.0;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ArgumentError("cannot write '" + p.string() + "'");
  out << s;
}

}  // namespace detail

/// Runs every strategy x seed of the config and writes the outputs under
/// `<out_root>/<name>/`. The manifest is written first with status "partial"
/// and rewritten as "complete" at the end.
inline ExperimentOutcome run_experiment(const ExperimentConfig& c,
                                        const std::filesystem::path& out_root,
                                        const std::filesystem::path& base_dir = {},
                                        const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  validate_config(c, base_dir);
  const auto dir = out_root / c.name;
  for (const char* sub : {"metrics", "runs", "models", "grids"}) fs::create_directories(dir / sub);
  detail::write_text(dir / "config.resolved.cfg", emit_config(c));

  nlohmann::json manifest;
  manifest["version"] = std::string(kVersion);
  manifest["name"] = c.name;
  manifest["status"] = "partial";
  {
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& k : config_keys()) cfg[k.name] = k.get(c);
    manifest["config"] = cfg;
  }
  manifest["seeds"] = c.seeds;
  manifest["runs"] = nlohmann::json::array();
  auto flush_manifest = [&] { detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n"); };
  flush_manifest();

  const auto t_start = std::chrono::steady_clock::now();
  for (StrategyKind k : c.strategies)
    for (std::uint64_t seed : c.seeds) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::string id = run_id(k, seed);
      SingleRun run = run_single(c, k, seed, base_dir);
      std::vector<std::string> files;
      {
        std::ostringstream m;
        write_metrics_csv(m, id, run.result.log.records);
        detail::write_text(dir / "metrics" / (id + ".csv"), m.str());
        files.push_back("metrics/" + id + ".csv");
      }
      detail::write_text(dir / "runs" / (id + ".json"), run_json(id, k, seed, run.result.log).dump(2) + "\n");
      files.push_back("runs/" + id + ".json");
      save_model(dir / "models" / (id + ".model"), run.result.model);
      files.push_back("models/" + id + ".model");
      if (run.streams.train.dim() == 2) {
        std::ostringstream g;
        write_grid_csv(g, boundary_grid(run.result.model, c.grid.x_range, c.grid.y_range,
                                        c.grid.resolution));
        detail::write_text(dir / "grids" / (id + ".csv"), g.str());
        files.push_back("grids/" + id + ".csv");
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto& last = run.result.log.records.back();
      manifest["runs"].push_back({{"run_id", id}, {"wall_seconds", secs}, {"files", files}});
      flush_manifest();
      if (opt.progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-16s acc %6.2f  rob %6.2f  (%.1fs)\n", id.c_str(),
                      last.mean_accuracy, last.mean_robustness, secs);
        *opt.progress << buf << std::flush;
      }
    }

  ExperimentOutcome out;
  out.dir = dir;
  out.summary = report(dir);
  detail::write_text(dir / "summary.json", report_json(out.summary).dump(2) + "\n");
  detail::write_text(dir / "summary.txt", report_text(out.summary));
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  manifest["wall_seconds"] = out.wall_seconds;
  manifest["summary_files"] = {"summary.json", "summary.txt", "config.resolved.cfg"};
  manifest["status"] = "complete";
  flush_manifest();
  return out;
}

}  // namespace eatcl
