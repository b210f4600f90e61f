#pragma once

#include <span>
#include <string>

#include "iaqcast/dataset.hpp"
#include "iaqcast/encoder.hpp"
#include "iaqcast/fusion.hpp"
#include "iaqcast/params.hpp"

namespace iaq {

enum class Variant {
  kFull,
  kEnvOnly,
  kDirectConcat,
  kTwoStreamConcat,
  kNoFeedback,
  kShortOnly,
  kLongOnly,
};

enum class UncertaintyMode { kHomo, kHetero };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);
UncertaintyMode uncertainty_from_string(const std::string& s);
std::string uncertainty_to_string(UncertaintyMode m);

struct ModelConfig {
  std::size_t lookback = 48;
  std::size_t horizon = 15;
  std::size_t env_dim = kNumEnvChannels;
  std::size_t act_dim = 32;
  std::size_t hidden = 64;
  std::size_t ste_depth = 2;
  int feedback_rounds = 3;
  std::size_t gru_long = 64;
  std::size_t gru_short = 64;
  UncertaintyMode uncertainty = UncertaintyMode::kHomo;
  Variant variant = Variant::kFull;

  void validate() const;
  bool uses_fusion() const;
  std::size_t head_width() const;  // d_z feeding the readout

  bool operator==(const ModelConfig&) const = default;
};

ModelParams init_model_params(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardArtifacts {
  Tensor mu;         // P x 2, normalized space
  Tensor log_sigma;  // P x 2, normalized space
  Tensor y_full;     // L x 2 head output before horizon slicing
  bool has_fusion = false;
  Tensor S_e, S_a, F, P_e, P_a;
  std::vector<Tensor> gates;
};

ForwardArtifacts model_forward(Graph& g, const ModelConfig& cfg, const ModelParams& mp,
                               std::span<const double> x_env,
                               std::span<const double> x_act);

// Standard gated recurrent unit unrolled over the rows of x; h0 = 0.
Tensor gru_forward(Graph& g, const ModelParams& mp, const std::string& prefix,
                   const Tensor& x);

void init_gru_params(ModelParams& mp, const std::string& prefix, std::size_t in_dim,
                     std::size_t h, Rng& rng);

struct Forecast {
  std::vector<double> mu;         // P x 2, physical units
  std::vector<double> sigma;      // P x 2, physical units
  std::vector<double> mu_norm;    // P x 2
  std::vector<double> log_sigma;  // P x 2, normalized space
};

Forecast make_forecast(const ForwardArtifacts& art, const Normalizer& norm);

// --- checkpoint -------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  Normalizer norm;
  std::string run_config_echo;  // verbatim run configuration JSON
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams& params, const Normalizer& norm,
                     const std::string& run_config_echo);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace iaq
