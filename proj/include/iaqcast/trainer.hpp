#pragma once

#include <array>
#include <functional>
#include <vector>

#include "iaqcast/dataset.hpp"
#include "iaqcast/model.hpp"
#include "iaqcast/objective.hpp"

namespace iaq {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_epochs = 10;  // MSE-only phase
  std::uint64_t seed = 42;
  double clip_norm = 5.0;  // 0 disables clipping
  int eval_every = 1;
  int patience = 8;

  void validate() const;
};

// Adam with bias correction and optional global-norm gradient clipping.
// State is aligned with the parameter order of the ModelParams it was
// created for.
class Adam {
 public:
  Adam(const ModelParams& params, const TrainConfig& cfg);

  // grad_of(name) must return the gradient buffer for that leaf.
  void step(ModelParams& params,
            const std::function<std::span<const double>(const std::string&)>& grad_of);

  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, clip_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Pooled batch objective: runs the model forward per window inside one graph,
// concatenates predictions (and fusion sequences) across windows, and applies
// the composite objective once.
struct BatchObjective {
  Tensor total;
  Tensor mu;  // pooled (B*P) x 2 normalized predictions, window order
  LossReport report;
};

BatchObjective build_batch_objective(Graph& g, const ModelConfig& mcfg,
                                     const ModelParams& params, const LossConfig& lcfg,
                                     std::span<const Window* const> windows);

struct TrainLogRecord {
  int epoch = 0;
  std::string split;
  LossReport loss;
  std::array<double, 2> rmse{}, mae{}, r2{};  // physical units, per pollutant
};

struct StepRecord {
  int step = 0;
  LossReport loss;
};

struct EvalOutcome {
  LossReport loss;                            // window-weighted batch average
  std::array<double, 2> rmse{}, mae{}, r2{};  // physical units
  double rmse_norm_pooled = 0;                // both channels, normalized space
};

EvalOutcome evaluate_split(const ModelConfig& mcfg, const ModelParams& params,
                           const LossConfig& lcfg, const std::vector<Window>& windows,
                           int batch_size, const Normalizer& norm);

struct TrainResult {
  ModelParams params;  // best-validation snapshot
  std::vector<TrainLogRecord> log;
  std::vector<StepRecord> steps;
  int best_epoch = -1;
  double best_val_total = 0;
  bool early_stopped = false;
  bool diverged = false;
  int epochs_run = 0;
};

TrainResult train(const ModelConfig& mcfg, const LossConfig& lcfg, const TrainConfig& tcfg,
                  const WindowSet& data);

}  // namespace iaq
