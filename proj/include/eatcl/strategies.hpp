#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eatcl/attacks.hpp"
#include "eatcl/data.hpp"
#include "eatcl/errors.hpp"
#include "eatcl/eval.hpp"
#include "eatcl/memory.hpp"
#include "eatcl/mlp.hpp"
#include "eatcl/rng.hpp"

namespace eatcl {

enum class StrategyKind {
  Joint,
  JointAT,
  ER,
  ER_AT,
  ER_CAT,
  ER_EAT,
  DER,
  DER_AT,
  DER_EAT,
  DERpp,
  DERpp_AT,
  DERpp_EAT,
};

inline constexpr std::array<std::pair<StrategyKind, std::string_view>, 12> kStrategyNames{{
    {StrategyKind::Joint, "Joint"},
    {StrategyKind::JointAT, "JointAT"},
    {StrategyKind::ER, "ER"},
    {StrategyKind::ER_AT, "ER_AT"},
    {StrategyKind::ER_CAT, "ER_CAT"},
    {StrategyKind::ER_EAT, "ER_EAT"},
    {StrategyKind::DER, "DER"},
    {StrategyKind::DER_AT, "DER_AT"},
    {StrategyKind::DER_EAT, "DER_EAT"},
    {StrategyKind::DERpp, "DERpp"},
    {StrategyKind::DERpp_AT, "DERpp_AT"},
    {StrategyKind::DERpp_EAT, "DERpp_EAT"},
}};

inline std::string_view to_string(StrategyKind k) {
  for (const auto& [kind, name] : kStrategyNames)
    if (kind == k) return name;
  return "?";
}

inline StrategyKind parse_strategy(std::string_view s) {
  for (const auto& [kind, name] : kStrategyNames)
    if (name == s) return kind;
  throw ArgumentError("unknown strategy '" + std::string(s) + "'");
}

/// Which rows an online attack perturbs.
enum class AttackScope { none, all, current, external };
enum class ReplayLoss { none, ce, der, derpp };

struct StrategyTraits {
  bool joint = false;
  ReplayLoss replay = ReplayLoss::none;
  AttackScope scope = AttackScope::none;
};

inline StrategyTraits traits_of(StrategyKind k) {
  using K = StrategyKind;
  switch (k) {
    case K::Joint: return {true, ReplayLoss::none, AttackScope::none};
    case K::JointAT: return {true, ReplayLoss::none, AttackScope::all};
    case K::ER: return {false, ReplayLoss::ce, AttackScope::none};
    case K::ER_AT: return {false, ReplayLoss::ce, AttackScope::all};
    case K::ER_CAT: return {false, ReplayLoss::ce, AttackScope::current};
    case K::ER_EAT: return {false, ReplayLoss::ce, AttackScope::external};
    case K::DER: return {false, ReplayLoss::der, AttackScope::none};
    case K::DER_AT: return {false, ReplayLoss::der, AttackScope::all};
    case K::DER_EAT: return {false, ReplayLoss::der, AttackScope::external};
    case K::DERpp: return {false, ReplayLoss::derpp, AttackScope::none};
    case K::DERpp_AT: return {false, ReplayLoss::derpp, AttackScope::all};
    case K::DERpp_EAT: return {false, ReplayLoss::derpp, AttackScope::external};
  }
  return {};
}

/// How adversarial rows enter an AT loss: `replace` trains on the perturbed
/// batch only, `average` takes the mean of the clean and perturbed losses.
enum class AtMix { replace, average };

inline std::string_view to_string(AtMix m) { return m == AtMix::replace ? "replace" : "average"; }
inline AtMix parse_at_mix(std::string_view s) {
  if (s == "replace") return AtMix::replace;
  if (s == "average") return AtMix::average;
  throw ArgumentError("unknown at_mix '" + std::string(s) + "' (expected replace|average)");
}

struct TrainConfig {
  std::vector<std::size_t> hidden{64};
  std::size_t epochs_per_task = 50;
  std::size_t joint_epochs = 0;  // 0: use epochs_per_task
  std::size_t batch_size = 32;
  std::size_t replay_batch_size = 32;
  SGDConfig sgd;
  std::size_t buffer_capacity = 200;
  AttackConfig attack;
  std::size_t eat_external_epochs = 10;
  bool eat_refresh = false;  // regenerate AE_i every epoch from the same external model
  AtMix at_mix = AtMix::replace;
  double der_alpha = 0.5;
  double derpp_beta = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs_per_task < 1) throw ConfigError("train.epochs_per_task: must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (replay_batch_size < 1) throw ConfigError("train.replay_batch_size: must be >= 1");
    if (eat_external_epochs < 1) throw ConfigError("train.eat_external_epochs: must be >= 1");
    if (!(sgd.learning_rate > 0.0)) throw ConfigError("train.lr: must be > 0");
    if (!(der_alpha >= 0.0) || !(derpp_beta >= 0.0))
      throw ConfigError("train.der_alpha: der_alpha and derpp_beta must be >= 0");
    for (auto h : hidden)
      if (h == 0) throw ConfigError("train.hidden: sizes must be positive");
    try {
      attack.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("attack.") + e.what());
    }
  }

  std::vector<std::size_t> layer_sizes(std::size_t input_dim, std::size_t classes) const {
    std::vector<std::size_t> s{input_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(classes);
    return s;
  }
};

/// Test data and attack used for the per-step snapshots.
struct EvalPlan {
  const TaskStream* test = nullptr;
  AttackConfig attack;
};

struct AttackRateSample {
  std::size_t step = 0;   // 1-based
  std::size_t epoch = 0;  // 0-based
  double rate = 0.0;      // % of current-task AEs predicted as a previous-task class
};

/// Where training touched data and which rows were attacked, per step.
struct TrainAudit {
  std::vector<std::set<std::size_t>> direct_task_access;
  std::vector<std::size_t> attacked_current;
  std::vector<std::size_t> attacked_memory;
  std::vector<std::size_t> external_aes;
  std::vector<std::size_t> replay_rows;

  void open_step() {
    direct_task_access.emplace_back();
    attacked_current.push_back(0);
    attacked_memory.push_back(0);
    external_aes.push_back(0);
    replay_rows.push_back(0);
  }
};

struct RunLog {
  std::vector<MetricsRecord> records;
  std::vector<AttackRateSample> attack_rates;
  std::vector<std::vector<double>> epoch_losses;  // [step][epoch], mean batch loss
};

struct TrainResult {
  MLPModel model;
  RunLog log;
};

// ---------------------------------------------------------------------------
// Loss pieces

/// Auxiliary replay loss and its parameter gradients.
struct AuxTerm {
  double loss = 0.0;
  GradBundle grads;
};

/// alpha · mean((model(x) - stored)²) over all logit entries.
inline AuxTerm der_terms(const MLPModel& model, const Matrix& buf_x, const Matrix& stored_logits,
                         double alpha) {
  if (stored_logits.rows() != buf_x.rows())
    throw ConfigError("der_terms: replay entries carry no stored logits");
  ForwardTape tape = forward_tape(model, buf_x);
  require_same_shape(tape.logits(), stored_logits, "der_terms");
  Matrix d(stored_logits.rows(), stored_logits.cols());
  const double n = static_cast<double>(d.size());
  AuxTerm out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double diff = tape.logits().values()[i] - stored_logits.values()[i];
    out.loss += alpha * diff * diff / n;
    d.values()[i] = alpha * 2.0 * diff / n;
  }
  out.grads = backward(model, tape, d);
  return out;
}

/// DER term on the first batch plus beta · cross-entropy on a second batch.
inline AuxTerm derpp_terms(const MLPModel& model, const Matrix& buf_x, const Matrix& stored_logits,
                           const Matrix& buf2_x, std::span<const int> buf2_y, double alpha,
                           double beta) {
  AuxTerm out = der_terms(model, buf_x, stored_logits, alpha);
  LossGrads ce = ce_loss_grads(model, buf2_x, buf2_y);
  out.loss += beta * ce.loss;
  out.grads.add_params(ce.grads, beta);
  return out;
}

inline std::vector<int> concat_labels(std::span<const int> a, std::span<const int> b) {
  std::vector<int> y(a.begin(), a.end());
  y.insert(y.end(), b.begin(), b.end());
  return y;
}

/// Plain experience-replay step: one SGD step on mean CE over current ∪ memory.
inline double er_minibatch_step(MLPModel& model, const Matrix& x_cur, std::span<const int> y_cur,
                                const Matrix& x_mem, std::span<const int> y_mem,
                                const SGDConfig& sgd) {
  const auto y = concat_labels(y_cur, y_mem);
  LossGrads lg = ce_loss_grads(model, vstack(x_cur, x_mem), y);
  sgd_step(model, lg.grads, sgd);
  return lg.loss;
}

namespace detail {

inline double mixed_step(MLPModel& model, const Matrix& clean, const Matrix& adv,
                         std::span<const int> y, const SGDConfig& sgd, AtMix mix) {
  if (mix == AtMix::replace) {
    LossGrads lg = ce_loss_grads(model, adv, y);
    sgd_step(model, lg.grads, sgd);
    return lg.loss;
  }
  LossGrads a = ce_loss_grads(model, clean, y);
  LossGrads b = ce_loss_grads(model, adv, y);
  GradBundle g = GradBundle::zeros_like(model);
  g.add_params(a.grads, 0.5);
  g.add_params(b.grads, 0.5);
  sgd_step(model, g, sgd);
  return 0.5 * (a.loss + b.loss);
}

}  // namespace detail

/// ER+AT step: attack current ∪ memory against the target model, then train.
inline double at_minibatch_step(MLPModel& model, const Matrix& x_cur, std::span<const int> y_cur,
                                const Matrix& x_mem, std::span<const int> y_mem,
                                const AttackConfig& attack_cfg, const SGDConfig& sgd, Rng& rng,
                                AtMix mix = AtMix::replace) {
  const Matrix clean = vstack(x_cur, x_mem);
  const auto y = concat_labels(y_cur, y_mem);
  const Matrix adv = attack(model, clean, y, attack_cfg, rng);
  return detail::mixed_step(model, clean, adv, y, sgd, mix);
}

/// ER+CAT step: only current-task rows are attacked; memory rows stay clean.
inline double cat_minibatch_step(MLPModel& model, const Matrix& x_cur, std::span<const int> y_cur,
                                 const Matrix& x_mem, std::span<const int> y_mem,
                                 const AttackConfig& attack_cfg, const SGDConfig& sgd, Rng& rng,
                                 AtMix mix = AtMix::replace) {
  const Matrix clean = vstack(x_cur, x_mem);
  const auto y = concat_labels(y_cur, y_mem);
  const Matrix adv = vstack(attack(model, x_cur, y_cur, attack_cfg, rng), x_mem);
  return detail::mixed_step(model, clean, adv, y, sgd, mix);
}

// ---------------------------------------------------------------------------
// External adversarial training

namespace detail {

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

/// Adversarial training of `model` on `data` alone.
inline void adversarial_fit(MLPModel& model, const Dataset& data, const TrainConfig& cfg,
                            std::size_t epochs, Rng& rng) {
  auto order = iota_indices(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b,
                                             std::min(cfg.batch_size, order.size() - b));
      const Matrix xb = gather_rows(data.x, idx);
      std::vector<int> yb;
      for (auto i : idx) yb.push_back(data.y[i]);
      const Matrix adv = attack(model, xb, yb, cfg.attack, rng);
      mixed_step(model, xb, adv, yb, cfg.sgd, cfg.at_mix);
    }
  }
}

inline Dataset attack_dataset(const MLPModel& model, const Dataset& data,
                              const AttackConfig& attack_cfg, Rng& rng) {
  Dataset ae;
  ae.x = attack(model, data.x, data.y, attack_cfg, rng);
  ae.y = data.y;
  ae.classes = data.classes;
  return ae;
}

}  // namespace detail

/// Trains a fresh external model of the target's architecture on the task
/// alone (adversarially, cfg.eat_external_epochs epochs) and returns
/// adversarial versions of every task example generated against it. The
/// external model does not outlive the call.
inline Dataset eat_generate(const Task& task, std::span<const std::size_t> layer_sizes,
                            const TrainConfig& cfg, std::uint64_t external_seed, Rng& rng) {
  if (task.data.empty()) throw ArgumentError("eat_generate: empty task");
  MLPModel external = init_model(layer_sizes, external_seed);
  detail::adversarial_fit(external, task.data, cfg, cfg.eat_external_epochs, rng);
  return detail::attack_dataset(external, task.data, cfg.attack, rng);
}

// ---------------------------------------------------------------------------
// Task-level training

namespace detail {

struct StepContext {
  std::size_t step = 0;  // 0-based task index
  std::vector<std::vector<int>> seen_class_sets;
  TrainAudit* audit = nullptr;
};

inline std::set<int> previous_classes(const StepContext& ctx) {
  std::set<int> prev;
  for (std::size_t i = 0; i + 1 < ctx.seen_class_sets.size(); ++i)
    prev.insert(ctx.seen_class_sets[i].begin(), ctx.seen_class_sets[i].end());
  return prev;
}

inline std::size_t count_in(const std::vector<int>& pred, const std::set<int>& cls) {
  std::size_t n = 0;
  for (int p : pred) n += cls.contains(p);
  return n;
}

}  // namespace detail

/// One task of replay-based training. `ae` holds externally generated
/// adversarial examples (EAT) that are unioned with the task rows; pass an
/// empty dataset otherwise. Online attacks follow `scope`. Returns the mean
/// batch loss for each epoch.
inline std::vector<double> train_replay_task(MLPModel& model, const Task& task, Dataset ae,
                                             ReplayBuffer& buffer, StrategyTraits traits,
                                             const TrainConfig& cfg, Rng& rng,
                                             detail::StepContext& ctx, RunLog* log,
                                             const MLPModel* refresh_source = nullptr) {
  const Dataset& data = task.data;
  const std::size_t n_clean = data.size();
  const bool replay_on = ctx.step > 0;
  const bool online_attack = traits.scope == AttackScope::all || traits.scope == AttackScope::current;
  const std::set<int> prev = detail::previous_classes(ctx);
  const bool store_logits = traits.replay == ReplayLoss::der || traits.replay == ReplayLoss::derpp;
  std::vector<double> epoch_losses;

  for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    if (refresh_source != nullptr && epoch > 0)
      ae = detail::attack_dataset(*refresh_source, data, cfg.attack, rng);
    // Rows [0, n_clean) index the task; rows beyond index AE_i.
    auto order = detail::iota_indices(n_clean + ae.size());
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t ae_seen = 0, ae_prev = 0;

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, order.size() - b);
      Matrix x_cur(nb, data.dim());
      std::vector<int> y_cur(nb);
      std::vector<std::size_t> clean_rows;
      std::vector<std::size_t> ae_rows;  // batch positions holding AE_i rows
      for (std::size_t k = 0; k < nb; ++k) {
        const std::size_t r = order[b + k];
        if (r < n_clean) {
          std::copy_n(data.x.row(r).data(), data.dim(), x_cur.row(k).data());
          y_cur[k] = data.y[r];
          clean_rows.push_back(k);
        } else {
          std::copy_n(ae.x.row(r - n_clean).data(), data.dim(), x_cur.row(k).data());
          y_cur[k] = ae.y[r - n_clean];
          ae_rows.push_back(k);
        }
      }
      if (ctx.audit) ctx.audit->direct_task_access.back().insert(task.index);

      // Replay draws.
      ReplayBatch mem, mem2;
      if (replay_on && !buffer.empty()) {
        mem = to_batch(buffer.sample(cfg.replay_batch_size, rng));
        if (traits.replay == ReplayLoss::derpp)
          mem2 = to_batch(buffer.sample(cfg.replay_batch_size, rng));
        if (ctx.audit) ctx.audit->replay_rows.back() += mem.size() + mem2.size();
      }

      // Clean logits for DER storage, taken before the update.
      Matrix clean_logits;
      if (store_logits) clean_logits = forward(model, x_cur);

      // Online attacks against the target model.
      Matrix x_cur_used = x_cur;
      Matrix x_mem_used = mem.x;
      Matrix x_mem2_used = mem2.x;
      if (online_attack) {
        x_cur_used = attack(model, x_cur, y_cur, cfg.attack, rng);
        if (ctx.audit) ctx.audit->attacked_current.back() += nb;
        if (traits.scope == AttackScope::all && mem.size() > 0) {
          x_mem_used = attack(model, mem.x, mem.y, cfg.attack, rng);
          if (ctx.audit) ctx.audit->attacked_memory.back() += mem.size();
          if (mem2.size() > 0) {
            x_mem2_used = attack(model, mem2.x, mem2.y, cfg.attack, rng);
            if (ctx.audit) ctx.audit->attacked_memory.back() += mem2.size();
          }
        }
        ae_seen += nb;
        ae_prev += detail::count_in(predict(model, x_cur_used), prev);
      } else if (!ae_rows.empty()) {
        if (ctx.audit) ctx.audit->external_aes.back() += ae_rows.size();
        ae_seen += ae_rows.size();
        ae_prev += detail::count_in(predict(model, gather_rows(x_cur, ae_rows)), prev);
      }

      // Loss and update.
      double loss = 0.0;
      const bool average = online_attack && cfg.at_mix == AtMix::average;
      if (traits.replay == ReplayLoss::ce) {
        const auto y = concat_labels(y_cur, mem.y);
        LossGrads lg = ce_loss_grads(model, vstack(x_cur_used, x_mem_used), y);
        if (average) {
          LossGrads clean = ce_loss_grads(model, vstack(x_cur, mem.x), y);
          GradBundle g = GradBundle::zeros_like(model);
          g.add_params(lg.grads, 0.5);
          g.add_params(clean.grads, 0.5);
          sgd_step(model, g, cfg.sgd);
          loss = 0.5 * (lg.loss + clean.loss);
        } else {
          sgd_step(model, lg.grads, cfg.sgd);
          loss = lg.loss;
        }
      } else {
        LossGrads lg = ce_loss_grads(model, x_cur_used, y_cur);
        GradBundle g = GradBundle::zeros_like(model);
        double w = 1.0;
        if (average) {
          LossGrads clean = ce_loss_grads(model, x_cur, y_cur);
          g.add_params(clean.grads, 0.5);
          loss += 0.5 * clean.loss;
          w = 0.5;
        }
        g.add_params(lg.grads, w);
        loss += w * lg.loss;
        if (mem.size() > 0) {
          AuxTerm aux = traits.replay == ReplayLoss::derpp
                            ? derpp_terms(model, x_mem_used, mem.logits, x_mem2_used, mem2.y,
                                          cfg.der_alpha, cfg.derpp_beta)
                            : der_terms(model, x_mem_used, mem.logits, cfg.der_alpha);
          g.add_params(aux.grads);
          loss += aux.loss;
        }
        sgd_step(model, g, cfg.sgd);
      }
      loss_sum += loss;
      ++batches;

      // Reservoir update with the clean current-task rows of this batch.
      for (std::size_t k : clean_rows) {
        BufferEntry e;
        e.x.assign(x_cur.row(k).begin(), x_cur.row(k).end());
        e.y = y_cur[k];
        if (store_logits) e.logits.emplace(clean_logits.row(k).begin(), clean_logits.row(k).end());
        buffer.reservoir_insert(std::move(e), rng);
      }
    }
    epoch_losses.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);
    if (log && ae_seen > 0)
      log->attack_rates.push_back(
          {ctx.step + 1, epoch,
           100.0 * static_cast<double>(ae_prev) / static_cast<double>(ae_seen)});
  }
  return epoch_losses;
}

/// Target-model training for one EAT step: no online attacks; batches drawn
/// from task ∪ AE_i plus replay once past the first task.
inline std::vector<double> eat_train_task(MLPModel& model, const Task& task, const Dataset& ae,
                                          ReplayBuffer& buffer, const TrainConfig& cfg, Rng& rng,
                                          std::span<const std::vector<int>> seen_class_sets = {},
                                          RunLog* log = nullptr) {
  detail::StepContext ctx;
  ctx.step = seen_class_sets.empty() ? task.index : seen_class_sets.size() - 1;
  ctx.seen_class_sets.assign(seen_class_sets.begin(), seen_class_sets.end());
  if (ctx.seen_class_sets.empty())
    ctx.seen_class_sets.push_back(task.class_set);
  return train_replay_task(model, task, ae, buffer,
                           {false, ReplayLoss::ce, AttackScope::external}, cfg, rng, ctx, log);
}

// ---------------------------------------------------------------------------
// Stream driver

namespace detail {

inline MetricsRecord snapshot(const MLPModel& model, const EvalPlan& plan, std::size_t tasks_seen,
                              std::uint64_t seed) {
  MetricsRecord rec;
  rec.step = tasks_seen;
  Rng eval_rng(derive_seed(seed, "eval", tasks_seen));
  for (std::size_t t = 0; t < tasks_seen; ++t) {
    const Dataset& d = plan.test->tasks[t].data;
    rec.per_task_accuracy.push_back(clean_accuracy(model, d));
    rec.per_task_robustness.push_back(robustness(model, d, plan.attack, eval_rng));
  }
  const double n = static_cast<double>(tasks_seen);
  rec.mean_accuracy =
      std::accumulate(rec.per_task_accuracy.begin(), rec.per_task_accuracy.end(), 0.0) / n;
  rec.mean_robustness =
      std::accumulate(rec.per_task_robustness.begin(), rec.per_task_robustness.end(), 0.0) / n;
  return rec;
}

inline void validate_run(const TaskStream& stream, const TrainConfig& cfg, const EvalPlan* plan) {
  cfg.validate();
  if (stream.size() == 0) throw ConfigError("train_stream: empty task stream");
  stream.validate();
  for (const auto& t : stream.tasks)
    if (t.data.empty()) throw ConfigError("train_stream: task " + std::to_string(t.index) + " is empty");
  if (plan) {
    if (plan->test == nullptr) throw ConfigError("eval plan without test stream");
    if (plan->test->size() != stream.size())
      throw ConfigError("test stream has " + std::to_string(plan->test->size()) +
                        " tasks, training stream " + std::to_string(stream.size()));
    if (plan->test->dim() != stream.dim())
      throw ConfigError("test stream feature dimension differs from training stream");
    if (plan->test->num_classes() > stream.num_classes())
      throw ConfigError("test stream holds classes absent from training");
    try {
      plan->attack.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("eval.") + e.what());
    }
  }
}

}  // namespace detail

/// Trains one model over the stream with the given strategy. A single head
/// covers every class of the stream. When `plan` is given, a metrics snapshot
/// over the test tasks seen so far is taken after each task.
inline TrainResult train_stream(const TaskStream& stream, StrategyKind kind, const TrainConfig& cfg,
                                const EvalPlan* plan = nullptr, TrainAudit* audit = nullptr) {
  detail::validate_run(stream, cfg, plan);
  const StrategyTraits traits = traits_of(kind);
  const auto sizes = cfg.layer_sizes(stream.dim(), stream.num_classes());
  TrainResult result{init_model(sizes, derive_seed(cfg.seed, "init")), {}};
  Rng rng(derive_seed(cfg.seed, "train"));

  if (traits.joint) {
    if (audit) {
      audit->open_step();
      for (const auto& t : stream.tasks) audit->direct_task_access.back().insert(t.index);
    }
    const Dataset all = stream.joined();
    const std::size_t epochs = cfg.joint_epochs ? cfg.joint_epochs : cfg.epochs_per_task;
    std::vector<double> losses;
    for (std::size_t e = 0; e < epochs; ++e) {
      auto order = detail::iota_indices(all.size());
      rng.shuffle(order);
      double sum = 0.0;
      std::size_t nb = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        const std::span<const std::size_t> idx(order.data() + b,
                                               std::min(cfg.batch_size, order.size() - b));
        const Matrix xb = gather_rows(all.x, idx);
        std::vector<int> yb;
        for (auto i : idx) yb.push_back(all.y[i]);
        if (traits.scope == AttackScope::all) {
          const Matrix adv = attack(result.model, xb, yb, cfg.attack, rng);
          if (audit) audit->attacked_current.back() += idx.size();
          sum += detail::mixed_step(result.model, xb, adv, yb, cfg.sgd, cfg.at_mix);
        } else {
          LossGrads lg = ce_loss_grads(result.model, xb, yb);
          sgd_step(result.model, lg.grads, cfg.sgd);
          sum += lg.loss;
        }
        ++nb;
      }
      losses.push_back(sum / static_cast<double>(nb));
    }
    result.log.epoch_losses.push_back(std::move(losses));
    if (plan) result.log.records.push_back(detail::snapshot(result.model, *plan, stream.size(), cfg.seed));
    return result;
  }

  ReplayBuffer buffer(cfg.buffer_capacity);
  detail::StepContext ctx;
  ctx.audit = audit;
  for (const Task& task : stream.tasks) {
    ctx.step = task.index;
    ctx.seen_class_sets.push_back(task.class_set);
    if (audit) audit->open_step();

    Dataset ae;
    std::optional<MLPModel> refresh_model;
    if (traits.scope == AttackScope::external) {
      const std::uint64_t ext_seed = derive_seed(cfg.seed, "external", task.index);
      if (cfg.eat_refresh) {
        refresh_model = init_model(sizes, ext_seed);
        detail::adversarial_fit(*refresh_model, task.data, cfg, cfg.eat_external_epochs, rng);
        ae = detail::attack_dataset(*refresh_model, task.data, cfg.attack, rng);
      } else {
        ae = eat_generate(task, sizes, cfg, ext_seed, rng);
      }
    }
    const std::size_t rates_before = result.log.attack_rates.size();
    result.log.epoch_losses.push_back(train_replay_task(
        result.model, task, std::move(ae), buffer, traits, cfg, rng, ctx, &result.log,
        refresh_model ? &*refresh_model : nullptr));

    if (plan) {
      MetricsRecord rec = detail::snapshot(result.model, *plan, task.index + 1, cfg.seed);
      if (result.log.attack_rates.size() > rates_before) {
        double s = 0.0;
        for (std::size_t i = rates_before; i < result.log.attack_rates.size(); ++i)
          s += result.log.attack_rates[i].rate;
        rec.prev_task_rate = s / static_cast<double>(result.log.attack_rates.size() - rates_before);
      }
      result.log.records.push_back(std::move(rec));
    }
  }
  return result;
}

}  // namespace eatcl
