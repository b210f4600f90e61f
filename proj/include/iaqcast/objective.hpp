#pragma once

#include <optional>
#include <string>

#include "iaqcast/tensor.hpp"

namespace iaq {

enum class LossMode { kMseOnly, kMseNllHomo, kMseNllHetero };

LossMode loss_mode_from_string(const std::string& s);
std::string loss_mode_to_string(LossMode m);

struct LossConfig {
  LossMode mode = LossMode::kMseOnly;
  double lambda_align = 0.1;
  double lambda_ind = 0.01;
  double lambda_div = 0.1;
  double spike_alpha = 0.0;  // 0 disables spike weighting
  double spike_tau = 1.0;    // threshold in normalized target units

  void validate() const;
};

// Scalar terms of one objective evaluation. total reconstructs exactly from
// the parts under the configured mode and weights.
struct LossReport {
  double total = 0;
  double mse = 0;
  double nll = 0;
  double r_align = 0;
  double r_ind = 0;
  double r_div = 0;
  double mse_co2 = 0;
  double mse_pm25 = 0;

  double reconstruct(const LossConfig& cfg, bool has_fusion) const;
};

// --- graph-level loss terms -------------------------------------------------

// Mean of (optionally weighted) squared errors.
Tensor mse_loss(const Tensor& mu, const Tensor& y,
                const std::optional<Tensor>& weights = std::nullopt);

// Mean Gaussian negative log-likelihood with per-element log sigma.
Tensor nll_gaussian(const Tensor& mu, const Tensor& log_sigma, const Tensor& y);

// Homoscedastic variant: one trainable log sigma per channel, broadcast over
// all timesteps.
Tensor homo_nll(Graph& g, const Tensor& mu, const Tensor& theta, const Tensor& y);

// Mean over rows of 1 - cos(S_e, S_a).
Tensor r_align(const Tensor& s_e, const Tensor& s_a);

// Squared Frobenius norms of the cross-covariances Cov(F, P_e) and Cov(F, P_a),
// samples along rows, divisor n-1.
Tensor r_ind(const Tensor& f, const Tensor& p_e, const Tensor& p_a);

// Mean over rows of squared cosine similarity.
Tensor r_div(const Tensor& p_e, const Tensor& p_a);

// --- composition --------------------------------------------------------------

// Forward artifacts pooled over a batch: predictions over B*P rows, fusion
// sequences over B*L rows.
struct BatchArtifacts {
  Tensor mu;
  Tensor log_sigma;
  Tensor y;
  std::optional<Tensor> weights;
  bool has_fusion = false;
  Tensor S_e, S_a, F, P_e, P_a;
};

struct ObjectiveResult {
  Tensor total;
  LossReport report;
};

ObjectiveResult total_objective(Graph& g, const BatchArtifacts& art, const LossConfig& cfg);

// Spike weights for one window's targets: w = 1 + alpha when the step-to-step
// jump exceeds tau. prev holds the targets at the last lookback step.
std::vector<double> spike_weights(std::span<const double> y, std::span<const double> prev,
                                  std::size_t horizon, std::size_t targets, double alpha,
                                  double tau);

}  // namespace iaq
