#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "eatcl/errors.hpp"
#include "eatcl/matrix.hpp"
#include "eatcl/mlp.hpp"
#include "eatcl/rng.hpp"

namespace eatcl {

enum class AttackKind { fgsm, pgd };

inline std::string_view to_string(AttackKind k) { return k == AttackKind::fgsm ? "fgsm" : "pgd"; }

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd") return AttackKind::pgd;
  throw ArgumentError("unknown attack kind '" + std::string(s) + "' (expected fgsm|pgd)");
}

struct ClipRange {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const ClipRange&, const ClipRange&) = default;
};

/// L∞ attack settings. `eps` is the ball radius, `alpha` the per-step size.
struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double eps = 0.0314;
  double alpha = 0.0078;
  int iters = 4;
  bool random_start = true;
  std::optional<ClipRange> clip;

  void validate() const {
    if (!(eps >= 0.0)) throw ArgumentError("eps: must be >= 0");
    if (!(alpha > 0.0)) throw ArgumentError("alpha: must be > 0");
    if (iters < 1) throw ArgumentError("iters: must be >= 1");
    if (clip && !(clip->lo < clip->hi)) throw ArgumentError("clip: requires lo < hi");
  }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// ∇ₓ of mean cross-entropy at x.
inline Matrix input_gradient(const MLPModel& model, const Matrix& x, std::span<const int> y) {
  return ce_loss_grads(model, x, y, GradTargets::inputs_only).grads.input_grads;
}

/// Elementwise clamp of x_adv into [x - eps, x + eps].
inline Matrix project_linf(const Matrix& x_adv, const Matrix& x, double eps) {
  require_same_shape(x_adv, x, "project_linf");
  Matrix out = x_adv;
  auto o = out.values();
  auto c = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(o[i], c[i] - eps, c[i] + eps);
  return out;
}

inline void clip_inplace(Matrix& m, const std::optional<ClipRange>& clip) {
  if (!clip) return;
  for (double& v : m.values()) v = std::clamp(v, clip->lo, clip->hi);
}

/// x' = clip(x + eps·sign(∇ₓL)).
inline Matrix fgsm(const MLPModel& model, const Matrix& x, std::span<const int> y,
                   const AttackConfig& cfg) {
  cfg.validate();
  Matrix adv = x;
  if (cfg.eps == 0.0) return adv;
  const Matrix g = input_gradient(model, x, y);
  auto a = adv.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += cfg.eps * sign(gv[i]);
  clip_inplace(adv, cfg.clip);
  return adv;
}

/// K signed-gradient steps of size alpha, each projected onto the eps-ball
/// around x and then clipped.
inline Matrix pgd(const MLPModel& model, const Matrix& x, std::span<const int> y,
                  const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  Matrix adv = x;
  if (cfg.random_start) {
    for (double& v : adv.values()) v += rng.uniform(-cfg.eps, cfg.eps);
    clip_inplace(adv, cfg.clip);
  }
  for (int k = 0; k < cfg.iters; ++k) {
    const Matrix g = input_gradient(model, adv, y);
    auto a = adv.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += cfg.alpha * sign(gv[i]);
    adv = project_linf(adv, x, cfg.eps);
    clip_inplace(adv, cfg.clip);
  }
  return adv;
}

/// Dispatches on cfg.kind.
inline Matrix attack(const MLPModel& model, const Matrix& x, std::span<const int> y,
                     const AttackConfig& cfg, Rng& rng) {
  if (cfg.kind == AttackKind::fgsm) return fgsm(model, x, y, cfg);
  return pgd(model, x, y, cfg, rng);
}

}  // namespace eatcl
