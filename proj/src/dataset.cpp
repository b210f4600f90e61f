#include "iaqcast/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "iaqcast/rng.hpp"

namespace iaq {

namespace {

constexpr const char* kHeader = "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_value(const std::string& field) {
  if (field.empty()) return std::nan("");
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str()) return std::nan("");
  return v;
}

}  // namespace

RawSeries ingest_csv(const std::string& path, std::size_t max_interp_gap) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw Error::data("'" + path + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    throw Error::data("'" + path + "': header mismatch, expected '" +
                      std::string(kHeader) + "'");

  RawSeries s;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 6)
      throw Error::data("'" + path + "' line " + std::to_string(line_no) +
                        ": expected 6 fields, got " + std::to_string(fields.size()));
    const double ts = parse_value(fields[0]);
    if (!std::isfinite(ts))
      throw Error::data("'" + path + "' line " + std::to_string(line_no) +
                        ": bad timestamp");
    s.timestamps.push_back(static_cast<std::int64_t>(ts));
    for (std::size_t c = 0; c < kNumEnvChannels; ++c)
      s.channels[c].push_back(parse_value(fields[1 + c]));
    s.activity.push_back(fields[5]);
  }
  if (s.size() == 0) throw Error::data("'" + path + "': no data rows");

  for (std::size_t i = 1; i < s.size(); ++i)
    if (s.timestamps[i] <= s.timestamps[i - 1])
      throw Error::data("'" + path + "': non-monotone timestamps at row " +
                        std::to_string(i + 1));

  // Gap policy: reject channels with too much missing data, interpolate short
  // interior runs, leave long runs invalid.
  const std::size_t n = s.size();
  s.valid.assign(n, 1);
  for (std::size_t c = 0; c < kNumEnvChannels; ++c) {
    auto& col = s.channels[c];
    std::size_t missing = 0;
    for (double v : col)
      if (!std::isfinite(v)) ++missing;
    if (missing * 5 > n)  // > 20%
      throw Error::data("'" + path + "': channel " + kChannelNames[c] +
                        " has more than 20% missing values");
    std::size_t i = 0;
    while (i < n) {
      if (std::isfinite(col[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && !std::isfinite(col[j])) ++j;
      const bool interior = i > 0 && j < n;
      if (interior && j - i <= max_interp_gap) {
        const double a = col[i - 1], b = col[j];
        const auto len = static_cast<double>(j - i + 1);
        for (std::size_t k = i; k < j; ++k)
          col[k] = a + (b - a) * static_cast<double>(k - i + 1) / len;
      } else {
        for (std::size_t k = i; k < j; ++k) s.valid[k] = 0;
      }
      i = j;
    }
  }
  return s;
}

// --- embeddings -----------------------------------------------------------

EmbeddingProvider EmbeddingProvider::hash_mode(std::size_t dim) {
  if (dim == 0) throw Error::config("embedding dim must be positive");
  EmbeddingProvider p;
  p.mode_ = Mode::kHash;
  p.dim_ = dim;
  return p;
}

EmbeddingProvider EmbeddingProvider::table_mode(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error::io("cannot open embedding table '" + json_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error::data("embedding table '" + json_path + "': " + e.what());
  }
  if (!j.is_object() || j.empty())
    throw Error::data("embedding table '" + json_path + "' must be a non-empty object");
  EmbeddingProvider p;
  p.mode_ = Mode::kTable;
  p.dim_ = 0;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_array())
      throw Error::data("embedding table: value for '" + it.key() + "' is not an array");
    std::vector<double> v = it.value().get<std::vector<double>>();
    if (p.dim_ == 0) p.dim_ = v.size();
    if (v.size() != p.dim_ || v.empty())
      throw Error::data("embedding table: vector length mismatch for '" + it.key() + "'");
    p.table_.emplace(it.key(), std::move(v));
  }
  return p;
}

namespace {

// Deterministic sign for (token, component), stable across platforms.
double hash_sign(std::uint64_t token_hash, std::size_t d) {
  const std::uint64_t x =
      splitmix64(token_hash ^ (0x9E3779B97F4A7C15ull * (d + 1)));
  return (x >> 63) ? 1.0 : -1.0;
}

}  // namespace

void EmbeddingProvider::embed(const std::string& label, double* out) const {
  for (std::size_t d = 0; d < dim_; ++d) out[d] = 0.0;
  if (label.empty()) return;

  if (mode_ == Mode::kTable) {
    auto it = table_.find(label);
    if (it == table_.end())
      throw Error::data("embedding table has no entry for label '" + label + "'");
    for (std::size_t d = 0; d < dim_; ++d) out[d] = it->second[d];
    return;
  }

  // token-hash onto signed components, then unit-normalize
  std::istringstream ss(label);
  std::string token;
  while (ss >> token) {
    const std::uint64_t th = fnv1a64(token);
    for (std::size_t d = 0; d < dim_; ++d) out[d] += hash_sign(th, d);
  }
  double norm2 = 0.0;
  for (std::size_t d = 0; d < dim_; ++d) norm2 += out[d] * out[d];
  if (norm2 <= 0.0) {  // tokens cancelled; fall back to the whole label
    const std::uint64_t lh = fnv1a64(label);
    for (std::size_t d = 0; d < dim_; ++d) out[d] = hash_sign(lh, d);
    norm2 = static_cast<double>(dim_);
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t d = 0; d < dim_; ++d) out[d] *= inv;
}

std::vector<double> embed_activities(const std::vector<std::string>& labels,
                                     const EmbeddingProvider& provider) {
  std::vector<double> m(labels.size() * provider.dim(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    provider.embed(labels[i], m.data() + i * provider.dim());
  return m;
}

// --- windowing ------------------------------------------------------------

void WindowConfig::validate() const {
  if (lookback == 0 || horizon == 0) throw Error::config("lookback and horizon must be positive");
  if (stride == 0) throw Error::config("stride must be >= 1");
  double sum = 0;
  for (double f : split) {
    if (f < 0) throw Error::config("split fractions must be non-negative");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error::config("split fractions must sum to 1");
}

namespace {

WindowSet make_windows_impl(const RawSeries& series, const WindowConfig& cfg,
                            const EmbeddingProvider& embedding, const Normalizer* fixed) {
  cfg.validate();
  const std::size_t n = series.size();
  const std::size_t L = cfg.lookback, P = cfg.horizon;
  if (n < L + P)
    throw Error::data("series too short: " + std::to_string(n) + " rows < lookback+horizon " +
                      std::to_string(L + P));

  const auto n1 = static_cast<std::size_t>(std::floor(cfg.split[0] * static_cast<double>(n)));
  const auto n2 = static_cast<std::size_t>(
      std::floor((cfg.split[0] + cfg.split[1]) * static_cast<double>(n)));

  WindowSet ws;
  ws.lookback = L;
  ws.horizon = P;
  ws.act_dim = embedding.dim();
  ws.timestamps = series.timestamps;
  ws.split_bounds = {n1, n2};

  if (fixed) {
    for (std::size_t c = 0; c < kNumEnvChannels; ++c) {
      if (!(fixed->sd[c] > 0))
        throw Error::data("fixed normalizer has a non-positive sd");
    }
    ws.norm = *fixed;
  } else {
    // Normalizer from valid training rows only.
    if (n1 < L + P) throw Error::data("training split too short for the window config");
    for (std::size_t c = 0; c < kNumEnvChannels; ++c) {
      double sum = 0, count = 0;
      for (std::size_t i = 0; i < n1; ++i) {
        if (!series.valid[i]) continue;
        sum += series.channels[c][i];
        count += 1;
      }
      if (count < 2) throw Error::data("not enough valid training rows");
      const double mean = sum / count;
      double ss = 0;
      for (std::size_t i = 0; i < n1; ++i) {
        if (!series.valid[i]) continue;
        ss += (series.channels[c][i] - mean) * (series.channels[c][i] - mean);
      }
      const double sd = std::sqrt(ss / count);
      if (!(sd > 1e-12))
        throw Error::data(std::string("degenerate channel ") + kChannelNames[c] +
                          ": zero variance on the training split");
      ws.norm.mean[c] = mean;
      ws.norm.sd[c] = sd;
    }
  }

  auto emit = [&](std::size_t lo, std::size_t hi, std::vector<Window>& out) {
    if (hi < lo) return;
    for (std::size_t s = lo; s + L + P <= hi; s += cfg.stride) {
      bool ok = true;
      for (std::size_t i = s; i < s + L + P && ok; ++i) ok = series.valid[i] != 0;
      if (!ok) continue;
      Window w;
      w.start = s;
      w.x_env.resize(L * kNumEnvChannels);
      w.x_act.resize(L * embedding.dim());
      w.y.resize(P * kNumTargets);
      w.y_phys.resize(P * kNumTargets);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t c = 0; c < kNumEnvChannels; ++c)
          w.x_env[i * kNumEnvChannels + c] =
              ws.norm.transform(c, series.channels[c][s + i]);
      for (std::size_t i = 0; i < L; ++i)
        embedding.embed(series.activity[s + i], w.x_act.data() + i * embedding.dim());
      for (std::size_t j = 0; j < P; ++j) {
        for (std::size_t k = 0; k < kNumTargets; ++k) {
          const std::size_t ch = kTargetChannel[k];
          const double raw = series.channels[ch][s + L + j];
          w.y_phys[j * kNumTargets + k] = raw;
          w.y[j * kNumTargets + k] = ws.norm.transform(ch, raw);
        }
      }
      for (std::size_t k = 0; k < kNumTargets; ++k) {
        const std::size_t ch = kTargetChannel[k];
        w.prev_y[k] = ws.norm.transform(ch, series.channels[ch][s + L - 1]);
      }
      out.push_back(std::move(w));
    }
  };

  emit(0, n1, ws.train);
  emit(n1, n2, ws.val);
  emit(n2, n, ws.test);
  if (!fixed && ws.train.empty())
    throw Error::data("window config produced no training windows");
  return ws;
}

}  // namespace

WindowSet make_windows(const RawSeries& series, const WindowConfig& cfg,
                       const EmbeddingProvider& embedding) {
  return make_windows_impl(series, cfg, embedding, nullptr);
}

WindowSet make_windows_with(const RawSeries& series, const WindowConfig& cfg,
                            const EmbeddingProvider& embedding, const Normalizer& fixed) {
  return make_windows_impl(series, cfg, embedding, &fixed);
}

}  // namespace iaq
