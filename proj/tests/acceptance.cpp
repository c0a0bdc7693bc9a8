// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eatcl.hpp"
#include "oracles.hpp"

using namespace eatcl;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kToyCtAccMin = 98.0;
constexpr double kToyCtRobTarget = 43.6;
constexpr double kToyAtRobTarget = 69.6;
constexpr double kToyRobBand = 10.0;
constexpr double kToyAtGainMin = 10.0;
constexpr double kToyImbAtAccMax = 97.0;
constexpr double kToyImbAccGapMin = 3.0;
constexpr int kToyOrderSeedsMin = 4;
constexpr double kToyBudget = 120.0;

constexpr int kFdNets = 50;
constexpr double kFdRelTol = 1e-4;
constexpr double kFdBudget = 10.0;

constexpr int kAttackCalls = 1000;
constexpr double kAttackSlack = 1e-12;
constexpr double kAttackBudget = 10.0;

constexpr std::size_t kResCapacity = 50;
constexpr std::size_t kResStream = 1000;
constexpr int kResTrials = 10000;
constexpr double kResExpected = 0.05;
constexpr double kResBand = 0.01;
constexpr double kResBudget = 30.0;

constexpr double kBlobBudget = 300.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path config_path(const std::string& name) {
  return fs::path(EATCL_SOURCE_DIR) / "configs" / (name + ".cfg");
}

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Final {
  double acc = 0, rob = 0;
  std::optional<double> rate1, rate2;  // prev-task rate at steps 1 and 2
  double secs = 0;
};

// Mean over the config's seeds of the final-step metrics of one strategy.
std::vector<Final> run_seeds(const ExperimentConfig& c, StrategyKind k) {
  std::vector<Final> out;
  for (auto seed : c.seeds) {
    const auto t0 = Clock::now();
    const SingleRun r = run_single(c, k, seed);
    Final f;
    f.secs = since(t0);
    f.acc = r.result.log.records.back().mean_accuracy;
    f.rob = r.result.log.records.back().mean_robustness;
    f.rate1 = r.result.log.records[0].prev_task_rate;
    if (r.result.log.records.size() > 1) f.rate2 = r.result.log.records[1].prev_task_rate;
    out.push_back(f);
  }
  return out;
}

double mean_of(const std::vector<Final>& v, double Final::*m) {
  double s = 0;
  for (const auto& f : v) s += f.*m;
  return s / static_cast<double>(v.size());
}

double total_secs(const std::vector<Final>& v) { return mean_of(v, &Final::secs) * static_cast<double>(v.size()); }

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = Clock::now();
  const ExperimentConfig bal = load_config(config_path("toy_balanced"));
  const ExperimentConfig imb = load_config(config_path("toy_imbalanced"));
  const auto bct = run_seeds(bal, StrategyKind::Joint);
  const auto bat = run_seeds(bal, StrategyKind::JointAT);
  const auto iat = run_seeds(imb, StrategyKind::JointAT);
  const double secs = since(t0);

  const double bct_acc = mean_of(bct, &Final::acc), bct_rob = mean_of(bct, &Final::rob);
  const double bat_acc = mean_of(bat, &Final::acc), bat_rob = mean_of(bat, &Final::rob);
  const double iat_acc = mean_of(iat, &Final::acc), iat_rob = mean_of(iat, &Final::rob);
  int ordered = 0;
  for (std::size_t s = 0; s < bct.size(); ++s) ordered += bat[s].rob > iat[s].rob && iat[s].rob > bct[s].rob;

  const bool a = bct_acc >= kToyCtAccMin && std::abs(bct_rob - kToyCtRobTarget) <= kToyRobBand;
  const bool b = std::abs(bat_rob - kToyAtRobTarget) <= kToyRobBand && bat_rob - bct_rob >= kToyAtGainMin;
  const bool c = iat_acc <= kToyImbAtAccMax && bat_acc - iat_acc >= kToyImbAccGapMin;
  const bool d = ordered >= kToyOrderSeedsMin;
  const bool t = secs <= kToyBudget;
  verdict(1, a && b && c && d && t,
          fmt("toy crescents, %zu seeds: BalCT %.1f/%.1f%s  BalAT %.1f/%.1f%s  ImbAT %.1f/%.1f%s  "
              "ordering %d/%zu%s  %.1fs%s",
              bct.size(), bct_acc, bct_rob, a ? "" : " (a!)", bat_acc, bat_rob, b ? "" : " (b!)", iat_acc,
              iat_rob, c ? "" : " (c!)", ordered, bct.size(), d ? "" : " (d!)", secs, t ? "" : " (time!)"));
}

void criterion2() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  for (int n = 0; n < kFdNets; ++n) {
    std::vector<std::size_t> sizes{1 + rng.below(5)};
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t l = 0; l < depth; ++l) sizes.push_back(1 + rng.below(6));
    sizes.push_back(2 + rng.below(4));
    MLPModel m = init_model(sizes, 100 + n);
    for (auto& b : m.biases)
      for (double& v : b) v = rng.uniform(-0.5, 0.5);
    const std::size_t rows = 1 + rng.below(4);
    Matrix x(rows, sizes.front());
    for (double& v : x.values()) v = rng.uniform(-1, 1);
    std::vector<int> y(rows);
    for (int& v : y) v = static_cast<int>(rng.below(sizes.back()));
    const LossGrads lg = ce_loss_grads(m, x, y);
    const auto r = oracle::check_gradients(m, x, y, lg.grads);
    worst = std::max(worst, r.worst);
    checked += r.checked;
    skipped += r.skipped;
  }
  const double secs = since(t0);
  verdict(2, worst <= kFdRelTol && secs <= kFdBudget && checked > 0,
          fmt("%d random nets, %zu gradient entries, worst relative error %.2e (tol %.0e), %zu probes "
              "skipped at rectifier kinks, %.2fs",
              kFdNets, checked, worst, kFdRelTol, skipped, secs));
}

void criterion3() {
  const auto t0 = Clock::now();
  Rng rng(77);
  double ball = 0, clip_out = 0, equiv = 0;
  for (int n = 0; n < kAttackCalls; ++n) {
    const std::size_t d = 1 + rng.below(6), k = 2 + rng.below(3), rows = 1 + rng.below(8);
    const MLPModel m = init_model(std::vector<std::size_t>{d, 1 + rng.below(8), k}, 500 + n);
    AttackConfig cfg;
    cfg.kind = rng.below(2) ? AttackKind::pgd : AttackKind::fgsm;
    cfg.eps = rng.uniform(0, 0.3);
    cfg.alpha = rng.uniform(0.001, 0.2);
    cfg.iters = 1 + static_cast<int>(rng.below(10));
    cfg.random_start = rng.below(2);
    if (rng.below(2)) cfg.clip = ClipRange{0.0, 1.0};
    Matrix x(rows, d);
    for (double& v : x.values()) v = cfg.clip ? rng.uniform01() : rng.uniform(-2, 2);
    std::vector<int> y(rows);
    for (int& v : y) v = static_cast<int>(rng.below(k));
    const Matrix adv = attack(m, x, y, cfg, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      ball = std::max(ball, std::abs(adv.values()[i] - x.values()[i]) - cfg.eps);
      if (cfg.clip)
        clip_out = std::max({clip_out, cfg.clip->lo - adv.values()[i], adv.values()[i] - cfg.clip->hi});
    }
    AttackConfig f = cfg, p = cfg;
    f.kind = AttackKind::fgsm;
    p.kind = AttackKind::pgd;
    p.iters = 1;
    p.random_start = false;
    p.alpha = cfg.eps > 0 ? cfg.eps : 1.0;
    const Matrix a = fgsm(m, x, y, f);
    const Matrix b = cfg.eps > 0 ? pgd(m, x, y, p, rng) : x;
    for (std::size_t i = 0; i < a.size(); ++i) equiv = std::max(equiv, std::abs(a.values()[i] - b.values()[i]));
  }
  const double secs = since(t0);
  verdict(3, ball <= kAttackSlack && clip_out <= kAttackSlack && equiv <= kAttackSlack && secs <= kAttackBudget,
          fmt("%d random attacks: max ball excess %.1e, max clip excess %.1e, max |FGSM - PGD-1| %.1e "
              "(slack %.0e), %.2fs",
              kAttackCalls, std::max(ball, 0.0), std::max(clip_out, 0.0), equiv, kAttackSlack, secs));
}

void criterion4() {
  const auto t0 = Clock::now();
  std::vector<std::size_t> kept(kResStream, 0);
  Rng rng(4);
  for (int t = 0; t < kResTrials; ++t) {
    ReplayBuffer buf(kResCapacity);
    for (std::size_t i = 0; i < kResStream; ++i) buf.reservoir_insert({{}, static_cast<int>(i), std::nullopt}, rng);
    for (const auto& e : buf.entries()) ++kept[static_cast<std::size_t>(e.y)];
  }
  double lo = 1, hi = 0;
  for (auto c : kept) {
    const double f = static_cast<double>(c) / kResTrials;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  const double secs = since(t0);
  verdict(4, lo >= kResExpected - kResBand && hi <= kResExpected + kResBand && secs <= kResBudget,
          fmt("reservoir %zu of %zu over %d trials: retention in [%.4f, %.4f] (want %.2f +- %.2f), %.1fs",
              kResCapacity, kResStream, kResTrials, lo, hi, kResExpected, kResBand, secs));
}

struct BlobRuns {
  std::vector<Final> er, at, eat, at_f, eat_f;
  double secs_pgd = 0, secs_fgsm = 0;
};

BlobRuns blob_runs() {
  BlobRuns b;
  const ExperimentConfig pgd_cfg = load_config(config_path("blobs_pgd"));
  const ExperimentConfig fgsm_cfg = load_config(config_path("blobs_fgsm"));
  auto t0 = Clock::now();
  b.er = run_seeds(pgd_cfg, StrategyKind::ER);
  b.at = run_seeds(pgd_cfg, StrategyKind::ER_AT);
  b.eat = run_seeds(pgd_cfg, StrategyKind::ER_EAT);
  b.secs_pgd = since(t0);
  t0 = Clock::now();
  b.at_f = run_seeds(fgsm_cfg, StrategyKind::ER_AT);
  b.eat_f = run_seeds(fgsm_cfg, StrategyKind::ER_EAT);
  b.secs_fgsm = since(t0);
  return b;
}

void criterion5(const BlobRuns& b) {
  const double er_a = mean_of(b.er, &Final::acc), er_r = mean_of(b.er, &Final::rob);
  const double at_a = mean_of(b.at, &Final::acc), at_r = mean_of(b.at, &Final::rob);
  const double eat_a = mean_of(b.eat, &Final::acc), eat_r = mean_of(b.eat, &Final::rob);
  const bool ok = eat_r > at_r && eat_a > at_a && at_r > er_r && b.secs_pgd <= kBlobBudget;
  verdict(5, ok,
          fmt("blob stream, %zu seeds (acc/rob): ER %.2f/%.2f  ER_AT %.2f/%.2f  ER_EAT %.2f/%.2f; "
              "need EAT rob > AT rob > ER rob and EAT acc > AT acc; %.1fs",
              b.er.size(), er_a, er_r, at_a, at_r, eat_a, eat_r, b.secs_pgd));
}

void criterion6(const BlobRuns& b) {
  const double er_a = mean_of(b.er, &Final::acc);
  const double at_r = mean_of(b.at_f, &Final::rob);
  const double eat_a = mean_of(b.eat_f, &Final::acc), eat_r = mean_of(b.eat_f, &Final::rob);
  const double t_pgd = total_secs(b.at), t_fgsm = total_secs(b.at_f);
  const bool ok = eat_a >= er_a && eat_r > at_r && t_fgsm < t_pgd && b.secs_fgsm <= kBlobBudget;
  verdict(6, ok,
          fmt("FGSM training: ER_EAT acc %.2f vs ER %.2f, ER_EAT rob %.2f vs ER_AT rob %.2f; "
              "ER_AT wall-clock FGSM %.1fs vs PGD-4 %.1fs; %.1fs",
              eat_a, er_a, eat_r, at_r, t_fgsm, t_pgd, b.secs_fgsm));
}

void criterion7(const BlobRuns& b) {
  // task 1: no previous classes
  Task t1{0, make_dataset(Matrix{{1, 0}, {0, 1}}, {0, 1}), {0, 1}};
  MLPModel id = init_model(std::vector<std::size_t>{2, 2}, 1);
  id.weights[0] = Matrix{{1, 0}, {0, 1}};
  id.biases[0] = {0, 0};
  const std::vector<std::vector<int>> only1{{0, 1}};
  const double r1 = prev_task_rate(id, t1, t1.data, only1);

  // hand-built: four classes, identity logits force predictions 0, 2, 3, 3, 1
  MLPModel id4 = init_model(std::vector<std::size_t>{4, 4}, 1);
  id4.weights[0] = Matrix{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  id4.biases[0] = {0, 0, 0, 0};
  Task t2{1, make_dataset(Matrix{{0, 0, 1, 0}}, {2}), {2, 3}};
  const Dataset ae = make_dataset(
      Matrix{{1, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0, 0, 0, 1}, {0, 1, 0, 0}}, {2, 2, 3, 3, 2});
  const std::vector<std::vector<int>> both{{0, 1}, {2, 3}};
  const double r2 = prev_task_rate(id4, t2, ae, both);  // 2 of 5 land in {0, 1}

  bool step1_zero = true, have = true;
  double at = 0, eat = 0;
  for (const auto& f : b.at) {
    have = have && f.rate2.has_value();
    at += f.rate2.value_or(0);
  }
  for (const auto& f : b.eat) {
    have = have && f.rate2.has_value();
    eat += f.rate2.value_or(0);
  }
  at /= static_cast<double>(b.at.size());
  eat /= static_cast<double>(b.eat.size());
  for (const auto* v : {&b.at, &b.eat})
    for (const auto& f : *v) step1_zero = step1_zero && f.rate1 == 0.0;
  const bool ok = r1 == 0.0 && r2 == 40.0 && step1_zero && have && eat < at;
  verdict(7, ok,
          fmt("prev-task rate: task-1 %.1f (stream runs %s), hand-built %.1f (want 40.0); "
              "task-2 mean over %zu seeds ER_EAT %.2f vs ER_AT %.2f",
              r1, step1_zero ? "0" : "nonzero", r2, b.at.size(), eat, at));
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = s.str();
  }
  return out;
}

void criterion8() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "eatcl-acceptance-determinism";
  fs::remove_all(root);
  bool ok = true;
  std::size_t compared = 0;
  std::string detail;
  for (const char* name : {"toy_balanced", "blobs_der"}) {
    ExperimentConfig c = load_config(config_path(name));
    if (c.seeds.size() > 2) c.seeds.resize(2);
    const auto a = run_experiment(c, root / "a");
    const auto b = run_experiment(c, root / "b");
    const auto fa = csv_files(a.dir), fb = csv_files(b.dir);
    ok = ok && !fa.empty() && fa == fb;
    compared += fa.size();
    detail += std::string(name) + (fa == fb ? " identical, " : " DIFFERS, ");
  }
  fs::remove_all(root);
  verdict(8, ok, fmt("two runs each: %s%zu CSV files compared, %.1fs", detail.c_str(), compared, since(t0)));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  auto guard = [](int id, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      verdict(id, false, std::string("threw: ") + e.what());
    }
  };
  guard(1, criterion1);
  guard(2, criterion2);
  guard(3, criterion3);
  guard(4, criterion4);
  BlobRuns blobs;
  bool have_blobs = true;
  try {
    blobs = blob_runs();
  } catch (const std::exception& e) {
    have_blobs = false;
    for (int id : {5, 6, 7}) verdict(id, false, std::string("threw: ") + e.what());
  }
  if (have_blobs) {
    guard(5, [&] { criterion5(blobs); });
    guard(6, [&] { criterion6(blobs); });
    guard(7, [&] { criterion7(blobs); });
  }
  guard(8, criterion8);
  std::printf("%d of 8 criteria failed, %.1fs total\n", failures, since(t0));
  return failures == 0 ? 0 : 1;
}
