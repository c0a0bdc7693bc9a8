#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eatcl/attacks.hpp"
#include "eatcl/data.hpp"
#include "eatcl/errors.hpp"
#include "eatcl/strategies.hpp"

namespace eatcl {

enum class DatasetKind { crescent, blobs, csv };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::crescent: return "crescent";
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::csv: return "csv";
  }
  return "?";
}

// Small, diagonal moons: at eps = 0.1 a clean-trained net is only partly
// robust, and the diagonal boundary leaves room for an L-infinity attack.
inline constexpr double kCrescentNoise = 0.00725;
inline constexpr CrescentGeometry kCrescentGeometry{0.145, 0.145, 0.0, 45.0};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::crescent;
  std::string path;       // csv: training file
  std::string test_path;  // csv: test file; empty evaluates on the training file
  std::size_t n_per_class = 1000;
  std::size_t n_test_per_class = 500;
  double noise = kCrescentNoise;
  CrescentGeometry geometry = kCrescentGeometry;
  std::size_t num_tasks = 5;
  std::size_t dim = 16;
  double separation = 0.5;
  double center_lo = 0.2;
  double center_hi = 0.8;
  std::map<int, double> keep_fractions;  // training-set class imbalance

  friend bool operator==(const DatasetSpec& a, const DatasetSpec& b) {
    return a.kind == b.kind && a.path == b.path && a.test_path == b.test_path &&
           a.n_per_class == b.n_per_class && a.n_test_per_class == b.n_test_per_class &&
           a.noise == b.noise && a.geometry == b.geometry && a.num_tasks == b.num_tasks &&
           a.dim == b.dim && a.separation == b.separation && a.center_lo == b.center_lo &&
           a.center_hi == b.center_hi && a.keep_fractions == b.keep_fractions;
  }
};

struct GridSpec {
  std::size_t resolution = 101;
  std::pair<double, double> x_range{-0.35, 0.45};
  std::pair<double, double> y_range{-0.35, 0.45};
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string output;  // empty: CLI flag, then environment, then "runs"
  DatasetSpec dataset;
  std::size_t classes_per_task = 2;
  std::vector<StrategyKind> strategies;
  TrainConfig train;
  AttackConfig eval_attack;
  std::vector<std::uint64_t> seeds{1};
  GridSpec grid;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    const auto& ta = a.train;
    const auto& tb = b.train;
    return a.name == b.name && a.output == b.output && a.dataset == b.dataset &&
           a.classes_per_task == b.classes_per_task && a.strategies == b.strategies &&
           ta.hidden == tb.hidden && ta.epochs_per_task == tb.epochs_per_task &&
           ta.joint_epochs == tb.joint_epochs && ta.batch_size == tb.batch_size &&
           ta.replay_batch_size == tb.replay_batch_size &&
           ta.sgd.learning_rate == tb.sgd.learning_rate &&
           ta.buffer_capacity == tb.buffer_capacity && ta.attack == tb.attack &&
           ta.eat_external_epochs == tb.eat_external_epochs && ta.eat_refresh == tb.eat_refresh &&
           ta.at_mix == tb.at_mix && ta.der_alpha == tb.der_alpha &&
           ta.derpp_beta == tb.derpp_beta && a.eval_attack == b.eval_attack &&
           a.seeds == b.seeds && a.grid == b.grid;
  }
};

// ---------------------------------------------------------------------------
// Value codecs

namespace cfgio {

struct BadValue {
  std::string expected;
};

inline std::string fmt(double v) { return detail::format_double(v); }

inline double to_real(const std::string& s) {
  double v = 0.0;
  if (!detail::parse_double(s, v)) throw BadValue{"a real number"};
  return v;
}

inline std::size_t to_count(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw BadValue{"a non-negative integer"};
  return static_cast<std::size_t>(std::stoull(s));
}

inline bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw BadValue{"true|false"};
}

inline std::vector<std::string> to_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& f : detail::split_fields(s))
    if (!f.empty()) out.push_back(f);
  return out;
}

inline std::pair<double, double> to_range(const std::string& s) {
  const auto f = to_list(s);
  if (f.size() != 2) throw BadValue{"two comma-separated reals 'lo, hi'"};
  return {to_real(f[0]), to_real(f[1])};
}

inline std::optional<ClipRange> to_clip(const std::string& s) {
  if (s == "none") return std::nullopt;
  const auto r = to_range(s);
  return ClipRange{r.first, r.second};
}

inline std::string from_clip(const std::optional<ClipRange>& c) {
  return c ? fmt(c->lo) + ", " + fmt(c->hi) : "none";
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
  return out;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace cfgio

/// A config key: how to parse it, print it, and its documentation.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace cfgio;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto add = [&](std::string name, std::string help, auto set, auto get) {
      k.push_back({std::move(name), std::move(help), set, get});
    };
    using C = ExperimentConfig;
    using S = const std::string&;
    add("name", "experiment name; names the output subdirectory",
        [](C& c, S v) { c.name = v; }, [](const C& c) { return c.name; });
    add("output", "output root directory (overridden by --out; else $EATCL_OUTPUT_ROOT, else ./runs)",
        [](C& c, S v) { c.output = v; }, [](const C& c) { return c.output; });
    add("seeds", "comma-separated run seeds", [](C& c, S v) {
          c.seeds.clear();
          for (auto& s : to_list(v)) c.seeds.push_back(to_count(s));
        },
        [](const C& c) { return join(c.seeds, [](auto s) { return std::to_string(s); }); });
    add("strategies", "REQUIRED. comma-separated: Joint JointAT ER ER_AT ER_CAT ER_EAT DER DER_AT DER_EAT DERpp DERpp_AT DERpp_EAT",
        [](C& c, S v) {
          c.strategies.clear();
          for (auto& s : to_list(v)) {
            try {
              c.strategies.push_back(parse_strategy(s));
            } catch (const ArgumentError&) {
              throw BadValue{"a strategy name (got '" + s + "')"};
            }
          }
        },
        [](const C& c) {
          return join(c.strategies, [](auto s) { return std::string(to_string(s)); });
        });

    add("dataset.kind", "REQUIRED. crescent | blobs | csv", [](C& c, S v) {
          if (v == "crescent") c.dataset.kind = DatasetKind::crescent;
          else if (v == "blobs") {
            c.dataset.kind = DatasetKind::blobs;
          } else if (v == "csv") c.dataset.kind = DatasetKind::csv;
          else throw BadValue{"crescent|blobs|csv"};
        },
        [](const C& c) { return std::string(to_string(c.dataset.kind)); });
    add("dataset.path", "csv: training file (f1,...,fd,label per line)",
        [](C& c, S v) { c.dataset.path = v; }, [](const C& c) { return c.dataset.path; });
    add("dataset.test_path", "csv: test file; empty evaluates on the training file",
        [](C& c, S v) { c.dataset.test_path = v; }, [](const C& c) { return c.dataset.test_path; });
    add("dataset.n_per_class", "training samples per class (crescent default 1000, blobs 500)",
        [](C& c, S v) { c.dataset.n_per_class = to_count(v); },
        [](const C& c) { return std::to_string(c.dataset.n_per_class); });
    add("dataset.n_test_per_class", "test samples per class (default 500; blobs 200)",
        [](C& c, S v) { c.dataset.n_test_per_class = to_count(v); },
        [](const C& c) { return std::to_string(c.dataset.n_test_per_class); });
    add("dataset.noise", "Gaussian jitter std (crescent default 0.00725, blobs 0.1)",
        [](C& c, S v) { c.dataset.noise = to_real(v); },
        [](const C& c) { return fmt(c.dataset.noise); });
    add("dataset.radius", "crescent arc radius",
        [](C& c, S v) { c.dataset.geometry.radius = to_real(v); },
        [](const C& c) { return fmt(c.dataset.geometry.radius); });
    add("dataset.x_offset", "crescent: x shift of the class-1 arc centre",
        [](C& c, S v) { c.dataset.geometry.x_offset = to_real(v); },
        [](const C& c) { return fmt(c.dataset.geometry.x_offset); });
    add("dataset.y_offset", "crescent: y shift of the class-1 arc centre",
        [](C& c, S v) { c.dataset.geometry.y_offset = to_real(v); },
        [](const C& c) { return fmt(c.dataset.geometry.y_offset); });
    add("dataset.rotation", "crescent: rotation about the origin in degrees",
        [](C& c, S v) { c.dataset.geometry.rotation_deg = to_real(v); },
        [](const C& c) { return fmt(c.dataset.geometry.rotation_deg); });
    add("dataset.num_tasks", "blobs: number of tasks (default 5)",
        [](C& c, S v) { c.dataset.num_tasks = to_count(v); },
        [](const C& c) { return std::to_string(c.dataset.num_tasks); });
    add("dataset.dim", "blobs: feature dimension (default 16)",
        [](C& c, S v) { c.dataset.dim = to_count(v); },
        [](const C& c) { return std::to_string(c.dataset.dim); });
    add("dataset.separation", "blobs: minimum pairwise centre distance",
        [](C& c, S v) { c.dataset.separation = to_real(v); },
        [](const C& c) { return fmt(c.dataset.separation); });
    add("dataset.center_lo", "blobs: lower bound of centre coordinates",
        [](C& c, S v) { c.dataset.center_lo = to_real(v); },
        [](const C& c) { return fmt(c.dataset.center_lo); });
    add("dataset.center_hi", "blobs: upper bound of centre coordinates",
        [](C& c, S v) { c.dataset.center_hi = to_real(v); },
        [](const C& c) { return fmt(c.dataset.center_hi); });
    add("dataset.keep_fractions",
        "training imbalance as 'class:fraction, ...' (e.g. '1:0.1111' for 9:1); empty keeps all",
        [](C& c, S v) {
          c.dataset.keep_fractions.clear();
          for (auto& item : to_list(v)) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw BadValue{"'class:fraction' pairs"};
            const std::size_t cls = to_count(detail::trim(item.substr(0, colon)));
            c.dataset.keep_fractions[static_cast<int>(cls)] =
                to_real(detail::trim(item.substr(colon + 1)));
          }
        },
        [](const C& c) {
          std::string out;
          for (const auto& [cls, f] : c.dataset.keep_fractions)
            out += (out.empty() ? "" : ", ") + std::to_string(cls) + ":" + fmt(f);
          return out;
        });
    add("stream.classes_per_task", "classes per task, assigned in ascending label order",
        [](C& c, S v) { c.classes_per_task = to_count(v); },
        [](const C& c) { return std::to_string(c.classes_per_task); });

    add("train.hidden", "hidden layer widths, comma-separated",
        [](C& c, S v) {
          c.train.hidden.clear();
          for (auto& s : to_list(v)) c.train.hidden.push_back(to_count(s));
        },
        [](const C& c) { return join(c.train.hidden, [](auto h) { return std::to_string(h); }); });
    add("train.epochs_per_task", "epochs per task",
        [](C& c, S v) { c.train.epochs_per_task = to_count(v); },
        [](const C& c) { return std::to_string(c.train.epochs_per_task); });
    add("train.joint_epochs", "epochs for Joint/JointAT over the whole stream (0: epochs_per_task)",
        [](C& c, S v) { c.train.joint_epochs = to_count(v); },
        [](const C& c) { return std::to_string(c.train.joint_epochs); });
    add("train.batch_size", "current-task minibatch size",
        [](C& c, S v) { c.train.batch_size = to_count(v); },
        [](const C& c) { return std::to_string(c.train.batch_size); });
    add("train.replay_batch_size", "rows drawn from memory per step",
        [](C& c, S v) { c.train.replay_batch_size = to_count(v); },
        [](const C& c) { return std::to_string(c.train.replay_batch_size); });
    add("train.lr", "SGD learning rate", [](C& c, S v) { c.train.sgd.learning_rate = to_real(v); },
        [](const C& c) { return fmt(c.train.sgd.learning_rate); });
    add("train.buffer_capacity", "replay memory capacity (0 disables replay)",
        [](C& c, S v) { c.train.buffer_capacity = to_count(v); },
        [](const C& c) { return std::to_string(c.train.buffer_capacity); });
    add("train.eat_external_epochs", "adversarial epochs for the external model",
        [](C& c, S v) { c.train.eat_external_epochs = to_count(v); },
        [](const C& c) { return std::to_string(c.train.eat_external_epochs); });
    add("train.eat_refresh", "regenerate external adversarial examples every epoch",
        [](C& c, S v) { c.train.eat_refresh = to_bool(v); },
        [](const C& c) { return std::string(c.train.eat_refresh ? "true" : "false"); });
    add("train.at_mix", "replace | average: how adversarial rows enter the AT loss",
        [](C& c, S v) {
          try {
            c.train.at_mix = parse_at_mix(v);
          } catch (const ArgumentError&) {
            throw BadValue{"replace|average"};
          }
        },
        [](const C& c) { return std::string(to_string(c.train.at_mix)); });
    add("train.der_alpha", "DER logit-matching weight",
        [](C& c, S v) { c.train.der_alpha = to_real(v); },
        [](const C& c) { return fmt(c.train.der_alpha); });
    add("train.derpp_beta", "DERpp replay cross-entropy weight",
        [](C& c, S v) { c.train.derpp_beta = to_real(v); },
        [](const C& c) { return fmt(c.train.derpp_beta); });

    for (const std::string prefix : {"attack", "eval"}) {
      const bool is_eval = prefix == "eval";
      auto pick = [is_eval](C& c) -> AttackConfig& { return is_eval ? c.eval_attack : c.train.attack; };
      auto cpick = [is_eval](const C& c) -> const AttackConfig& {
        return is_eval ? c.eval_attack : c.train.attack;
      };
      const std::string who = is_eval ? "robustness-test attack" : "training attack";
      add(prefix + ".kind", who + ": fgsm | pgd",
          [pick](C& c, S v) {
            try {
              pick(c).kind = parse_attack_kind(v);
            } catch (const ArgumentError&) {
              throw BadValue{"fgsm|pgd"};
            }
          },
          [cpick](const C& c) { return std::string(to_string(cpick(c).kind)); });
      add(prefix + ".eps", who + ": L-infinity radius", [pick](C& c, S v) { pick(c).eps = to_real(v); },
          [cpick](const C& c) { return fmt(cpick(c).eps); });
      add(prefix + ".alpha", who + ": PGD step size",
          [pick](C& c, S v) { pick(c).alpha = to_real(v); },
          [cpick](const C& c) { return fmt(cpick(c).alpha); });
      add(prefix + ".iters", who + ": PGD iterations",
          [pick](C& c, S v) { pick(c).iters = static_cast<int>(to_count(v)); },
          [cpick](const C& c) { return std::to_string(cpick(c).iters); });
      add(prefix + ".random_start", who + ": uniform start inside the ball",
          [pick](C& c, S v) { pick(c).random_start = to_bool(v); },
          [cpick](const C& c) { return std::string(cpick(c).random_start ? "true" : "false"); });
      add(prefix + ".clip", who + ": 'lo, hi' input range or none",
          [pick](C& c, S v) { pick(c).clip = to_clip(v); },
          [cpick](const C& c) { return from_clip(cpick(c).clip); });
    }

    add("grid.resolution", "decision-boundary grid points per axis (2-D data only)",
        [](C& c, S v) { c.grid.resolution = to_count(v); },
        [](const C& c) { return std::to_string(c.grid.resolution); });
    add("grid.x_range", "grid x bounds 'lo, hi'", [](C& c, S v) { c.grid.x_range = to_range(v); },
        [](const C& c) { return fmt(c.grid.x_range.first) + ", " + fmt(c.grid.x_range.second); });
    add("grid.y_range", "grid y bounds 'lo, hi'", [](C& c, S v) { c.grid.y_range = to_range(v); },
        [](const C& c) { return fmt(c.grid.y_range.first) + ", " + fmt(c.grid.y_range.second); });
    return k;
  }();
  return keys;
}

/// Defaults that depend on the dataset kind, applied before explicit keys.
inline void apply_kind_defaults(ExperimentConfig& c) {
  if (c.dataset.kind == DatasetKind::blobs) {
    c.dataset.n_per_class = 500;
    c.dataset.n_test_per_class = 200;
    c.dataset.noise = 0.1;
  }
}

/// Semantic checks on a fully parsed config. File references are checked
/// relative to `base_dir`.
inline void validate_config(const ExperimentConfig& c, const std::filesystem::path& base_dir = {}) {
  if (c.strategies.empty()) throw ConfigError("strategies: at least one strategy is required");
  if (c.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
    throw ConfigError("name: must be a non-empty plain file name");
  if (c.classes_per_task == 0) throw ConfigError("stream.classes_per_task: must be >= 1");
  const auto& d = c.dataset;
  if (d.n_per_class == 0) throw ConfigError("dataset.n_per_class: must be >= 1");
  if (d.n_test_per_class == 0) throw ConfigError("dataset.n_test_per_class: must be >= 1");
  if (!(d.noise >= 0.0)) throw ConfigError("dataset.noise: must be >= 0");
  for (const auto& [cls, f] : d.keep_fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("dataset.keep_fractions: fraction for class " + std::to_string(cls) +
                        " must be in (0, 1]");
  if (d.kind == DatasetKind::crescent && c.classes_per_task != 1 && c.classes_per_task != 2)
    throw ConfigError("stream.classes_per_task: crescent data has 2 classes");
  if (d.kind == DatasetKind::blobs) {
    if (d.num_tasks == 0 || d.dim == 0) throw ConfigError("dataset.num_tasks/dim: must be >= 1");
    if (!(d.center_lo < d.center_hi)) throw ConfigError("dataset.center_lo must be < center_hi");
  }
  if (d.kind == DatasetKind::csv) {
    if (d.path.empty()) throw ConfigError("dataset.path: required for csv datasets");
    for (const auto& p : {d.path, d.test_path}) {
      if (p.empty()) continue;
      const auto full = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_dir / p;
      if (!std::filesystem::exists(full)) throw ConfigError("dataset file not found: " + full.string());
    }
  }
  if (c.grid.resolution < 2) throw ConfigError("grid.resolution: must be >= 2");
  c.train.validate();
  try {
    c.eval_attack.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("eval.") + e.what());
  }
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, bad values
/// and missing required keys raise ConfigError naming the key and line.
inline ExperimentConfig parse_config(std::istream& in,
                                     const std::filesystem::path& base_dir = {}) {
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> entries;
  std::vector<std::string> order;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& keys = config_keys();
    if (std::none_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; }))
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (entries.contains(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    entries[key] = {value, lineno};
    order.push_back(key);
  }
  for (const char* required : {"dataset.kind", "strategies"})
    if (!entries.contains(required))
      throw ConfigError(std::string("missing required key '") + required + "'");

  ExperimentConfig cfg;
  auto apply = [&](const std::string& key) {
    const Entry& e = entries.at(key);
    for (const auto& k : config_keys()) {
      if (k.name != key) continue;
      try {
        k.set(cfg, e.value);
      } catch (const cfgio::BadValue& bad) {
        throw ConfigError("line " + std::to_string(e.line) + ": key '" + key + "' expects " +
                          bad.expected + ", got '" + e.value + "'");
      }
    }
  };
  apply("dataset.kind");
  apply_kind_defaults(cfg);
  for (const auto& key : order)
    if (key != "dataset.kind") apply(key);

  try {
    validate_config(cfg, base_dir);
  } catch (const ConfigError& e) {
    // Attach the line of the offending key when the message starts with it.
    const std::string msg = e.what();
    for (const auto& [key, entry] : entries)
      if (msg.rfind(key + ":", 0) == 0)
        throw ConfigError("line " + std::to_string(entry.line) + ": " + msg);
    throw;
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

/// Every key with its resolved value, in canonical order.
inline std::string emit_config(const ExperimentConfig& c) {
  std::ostringstream out;
  for (const auto& k : config_keys()) out << k.name << " = " << k.get(c) << '\n';
  return out.str();
}

/// Key reference for --help: name, default (as resolved for an empty
/// crescent config), description.
inline std::string config_help() {
  ExperimentConfig d;
  std::ostringstream out;
  for (const auto& k : config_keys()) {
    out << "  " << k.name << " = " << k.get(d) << "\n      " << k.help << '\n';
  }
  return out.str();
}

}  // namespace eatcl
