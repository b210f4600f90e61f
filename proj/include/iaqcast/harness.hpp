#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "iaqcast/dataset.hpp"
#include "iaqcast/model.hpp"
#include "iaqcast/trainer.hpp"

namespace iaq {

struct ChannelMetrics {
  double mse = 0;
  double rmse = 0;
  double mae = 0;
  double r2 = 0;
};

struct EvalReport {
  std::array<ChannelMetrics, kNumTargets> channel;  // co2, pm25
  std::size_t n_samples = 0;
  std::string config_echo;
};

// y_true/y_pred are N x 2 row-major, physical units. Throws when a channel of
// y_true is constant (R^2 undefined) or N < 2.
EvalReport metrics(std::span<const double> y_true, std::span<const double> y_pred);

// --- ablations ---------------------------------------------------------------

enum class AblationAxis { kStreams, kFeedbackR, kTimescale, kLoss, kRegularizers };

AblationAxis ablation_axis_from_string(const std::string& s);
std::string ablation_axis_to_string(AblationAxis a);

struct AblationCell {
  std::string row_label;
  EvalReport report;          // test-split metrics of the best checkpoint
  LossReport test_loss;
  std::string config_echo;    // JSON: variant/loss/seed/budget for fairness checks
};

struct AblationMatrix {
  AblationAxis axis;
  std::vector<AblationCell> cells;
};

// Base settings for a matrix run; every row shares seed, data, and budget.
struct AblationSettings {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
};

AblationMatrix ablation_run(const WindowSet& data, AblationAxis axis,
                            const AblationSettings& base);

// --- horizon sweep -------------------------------------------------------------

struct SweepRow {
  std::size_t lookback = 0, horizon = 0;
  EvalReport report;
  bool skipped = false;
  std::string note;
};

std::vector<SweepRow> horizon_sweep(const RawSeries& series,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& configs,
                                    const AblationSettings& base,
                                    const EmbeddingProvider& embedding,
                                    const WindowConfig& window_base);

// Default sweep grid, including the recommended joint setting (48, 15).
std::vector<std::pair<std::size_t, std::size_t>> default_sweep_configs();

// --- open-loop rollout ----------------------------------------------------------

// Feeds the model its own CO2/PM2.5 predictions; temp/rh and action embeddings
// hold their last observed rows. Returns steps x 2 normalized predictions.
// Never reads anything beyond the seed window.
std::vector<double> rollout(const ModelConfig& cfg, const ModelParams& params,
                            const Window& seed_window, std::size_t steps);

struct RolloutComparison {
  double rollout_rmse = 0;  // median over windows, chunks after the first
  double direct_rmse = 0;
  std::size_t windows_used = 0;
};

// Rollout vs teacher-forced direct forecasts of the same chunks, matched
// horizons; the first chunk is identical by construction and excluded.
RolloutComparison compare_rollout_direct(const ModelConfig& cfg, const ModelParams& params,
                                         const WindowSet& data, int chunks,
                                         std::size_t max_windows);

// --- exports ---------------------------------------------------------------------

// Writes `timestamp,y_true_co2,y_pred_co2,y_sigma_co2,y_true_pm25,y_pred_pm25,
// y_sigma_pm25` rows over non-overlapping test windows.
void write_prediction_csv(const std::string& path, const ModelConfig& cfg,
                          const ModelParams& params, const WindowSet& data,
                          const std::string& config_echo);

double median(std::vector<double> v);

}  // namespace iaq
