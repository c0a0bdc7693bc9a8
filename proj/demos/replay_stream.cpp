// ER, ER with online AT and ER with external AT on a small blob stream;
// prints the per-step mean accuracy and robustness of each.

#include <cstdio>

#include "eatcl.hpp"

using namespace eatcl;

int main() {
  BlobSpec spec;
  spec.center_lo = 0.4;
  spec.center_hi = 0.6;
  spec.separation = 0.05;
  spec.noise = 0.05;
  const StreamPair sp = gen_blob_streams(spec, 200, derive_seed(1, "data"));

  TrainConfig cfg;
  cfg.hidden = {64};
  cfg.epochs_per_task = 15;
  cfg.sgd.learning_rate = 0.05;
  cfg.at_mix = AtMix::average;
  cfg.attack.clip = ClipRange{0.0, 1.0};
  cfg.seed = 1;
  const EvalPlan plan{&sp.test, cfg.attack};

  for (StrategyKind k : {StrategyKind::ER, StrategyKind::ER_AT, StrategyKind::ER_EAT}) {
    const TrainResult r = train_stream(sp.train, k, cfg, &plan);
    std::printf("%s\n", std::string(to_string(k)).c_str());
    for (const auto& rec : r.log.records) {
      std::printf("  after task %zu: acc %6.2f  rob %6.2f", rec.step, rec.mean_accuracy, rec.mean_robustness);
      if (rec.prev_task_rate) std::printf("  prev-task rate %5.1f", *rec.prev_task_rate);
      std::printf("\n");
    }
  }
}
