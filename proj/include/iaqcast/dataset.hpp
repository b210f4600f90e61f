#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iaqcast/errors.hpp"

namespace iaq {

// Channel order everywhere: temp, rh, co2, pm25. Targets are co2 and pm25.
inline constexpr std::size_t kNumEnvChannels = 4;
inline constexpr std::size_t kNumTargets = 2;
inline constexpr std::size_t kTargetChannel[kNumTargets] = {2, 3};
inline constexpr const char* kChannelNames[kNumEnvChannels] = {"temp_c", "rh_pct",
                                                               "co2_ppm", "pm25_ugm3"};

struct RawSeries {
  std::vector<std::int64_t> timestamps;
  std::array<std::vector<double>, kNumEnvChannels> channels;
  std::vector<std::string> activity;
  std::vector<char> valid;  // usable after the gap policy

  std::size_t size() const { return timestamps.size(); }
};

// Parses the trace CSV schema. Interior gaps of at most `max_interp_gap`
// steps are linearly interpolated; longer runs stay marked invalid and the
// windows covering them are rejected downstream.
RawSeries ingest_csv(const std::string& path, std::size_t max_interp_gap = 5);

class EmbeddingProvider {
 public:
  enum class Mode { kHash, kTable };

  static EmbeddingProvider hash_mode(std::size_t dim = 32);
  static EmbeddingProvider table_mode(const std::string& json_path);

  Mode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }

  // Row written for one label; empty labels map to the zero vector.
  void embed(const std::string& label, double* out) const;

 private:
  EmbeddingProvider() = default;
  Mode mode_ = Mode::kHash;
  std::size_t dim_ = 32;
  std::map<std::string, std::vector<double>> table_;
};

// L x d_a row-major matrix of per-step label embeddings.
std::vector<double> embed_activities(const std::vector<std::string>& labels,
                                     const EmbeddingProvider& provider);

struct Normalizer {
  std::array<double, kNumEnvChannels> mean{};
  std::array<double, kNumEnvChannels> sd{};

  double transform(std::size_t ch, double v) const { return (v - mean[ch]) / sd[ch]; }
  double inverse(std::size_t ch, double v) const { return v * sd[ch] + mean[ch]; }
  double target_sd(std::size_t k) const { return sd[kTargetChannel[k]]; }
  double target_mean(std::size_t k) const { return mean[kTargetChannel[k]]; }
};

struct Window {
  std::size_t start = 0;            // raw index of the first input row
  std::vector<double> x_env;        // L x 4, normalized
  std::vector<double> x_act;        // L x d_a
  std::vector<double> y;            // P x 2, normalized
  std::vector<double> y_phys;       // P x 2, physical units
  std::array<double, kNumTargets> prev_y{};  // normalized targets at the last input step
};

struct WindowConfig {
  std::size_t lookback = 48;
  std::size_t horizon = 15;
  std::size_t stride = 1;
  std::array<double, 3> split = {0.7, 0.15, 0.15};

  void validate() const;
};

struct WindowSet {
  std::size_t lookback = 0, horizon = 0, act_dim = 0;
  Normalizer norm;
  std::vector<Window> train, val, test;
  std::vector<std::int64_t> timestamps;  // copy of the raw axis, for exports
  std::array<std::size_t, 2> split_bounds{};  // raw indices: end of train, end of val
};

// Chronological split happens before windowing; the normalizer is fit on the
// training split only and reused verbatim for val/test.
WindowSet make_windows(const RawSeries& series, const WindowConfig& cfg,
                       const EmbeddingProvider& embedding);

// Same windowing under externally fixed normalization statistics (the
// checkpoint's, at evaluation time).
WindowSet make_windows_with(const RawSeries& series, const WindowConfig& cfg,
                            const EmbeddingProvider& embedding, const Normalizer& fixed);

}  // namespace iaq
