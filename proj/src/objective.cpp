#include "iaqcast/objective.hpp"

#include <cmath>

namespace iaq {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "mse_only") return LossMode::kMseOnly;
  if (s == "mse_nll_homo") return LossMode::kMseNllHomo;
  if (s == "mse_nll_hetero") return LossMode::kMseNllHetero;
  throw Error::config("unknown loss mode '" + s + "'");
}

std::string loss_mode_to_string(LossMode m) {
  switch (m) {
    case LossMode::kMseOnly: return "mse_only";
    case LossMode::kMseNllHomo: return "mse_nll_homo";
    case LossMode::kMseNllHetero: return "mse_nll_hetero";
  }
  return "?";
}

void LossConfig::validate() const {
  for (double l : {lambda_align, lambda_ind, lambda_div}) {
    if (!(l >= 0) || !std::isfinite(l))
      throw Error::config("loss: lambda weights must be finite and non-negative");
  }
  if (!(spike_alpha >= 0)) throw Error::config("loss: spike_alpha must be >= 0");
  if (!(spike_tau > 0)) throw Error::config("loss: spike_tau must be > 0");
}

double LossReport::reconstruct(const LossConfig& cfg, bool has_fusion) const {
  double t = mse;
  if (cfg.mode != LossMode::kMseOnly) t += nll;
  if (has_fusion) {
    t += cfg.lambda_align * r_align;
    t += cfg.lambda_ind * r_ind;
    t += cfg.lambda_div * r_div;
  }
  return t;
}

Tensor mse_loss(const Tensor& mu, const Tensor& y, const std::optional<Tensor>& weights) {
  if (mu.shape() != y.shape())
    throw Error::internal("mse_loss: shape mismatch: " + shape_str(mu.shape()) + " vs " +
                          shape_str(y.shape()));
  Tensor sq = square(sub(mu, y));
  if (weights) sq = mul(sq, *weights);
  return reduce_mean(sq);
}

Tensor nll_gaussian(const Tensor& mu, const Tensor& log_sigma, const Tensor& y) {
  if (mu.shape() != y.shape() || mu.shape() != log_sigma.shape())
    throw Error::internal("nll_gaussian: shape mismatch");
  Tensor sq = square(sub(y, mu));
  Tensor inv_var = exp(scale(log_sigma, -2.0));        // 1 / sigma^2
  Tensor quad = scale(mul(sq, inv_var), 0.5);          // (y-mu)^2 / (2 sigma^2)
  Tensor term = add(quad, affine(log_sigma, 1.0, kHalfLog2Pi));
  return reduce_mean(term);
}

Tensor homo_nll(Graph& g, const Tensor& mu, const Tensor& theta, const Tensor& y) {
  Tensor zeros = g.constant(mu.shape(), 0.0);
  Tensor log_sigma = add(zeros, theta);  // broadcast theta over all rows
  return nll_gaussian(mu, log_sigma, y);
}

Tensor r_align(const Tensor& s_e, const Tensor& s_a) {
  return affine(reduce_mean(cos_rows(s_e, s_a)), -1.0, 1.0);
}

Tensor r_ind(const Tensor& f, const Tensor& p_e, const Tensor& p_a) {
  const std::size_t n = f.shape()[0];
  if (n < 2) throw Error::internal("r_ind: needs at least 2 samples");
  if (p_e.shape()[0] != n || p_a.shape()[0] != n)
    throw Error::internal("r_ind: sample counts differ");
  const double inv = 1.0 / static_cast<double>(n - 1);
  Tensor fc = sub(f, reduce_mean(f, 0));
  auto cov_term = [&](const Tensor& p) {
    Tensor pc = sub(p, reduce_mean(p, 0));
    Tensor cov = scale(matmul(transpose(fc), pc), inv);
    return reduce_sum(square(cov));
  };
  return add(cov_term(p_e), cov_term(p_a));
}

Tensor r_div(const Tensor& p_e, const Tensor& p_a) {
  return reduce_mean(square(cos_rows(p_e, p_a)));
}

ObjectiveResult total_objective(Graph&, const BatchArtifacts& art, const LossConfig& cfg) {
  cfg.validate();
  ObjectiveResult out;

  Tensor mse = mse_loss(art.mu, art.y, art.weights);
  Tensor total = mse;
  out.report.mse = mse.value();

  if (cfg.mode != LossMode::kMseOnly) {
    Tensor nll = nll_gaussian(art.mu, art.log_sigma, art.y);
    out.report.nll = nll.value();
    total = add(total, nll);
  }

  // disabled terms (lambda 0) are not built; they would add exactly 0
  if (art.has_fusion && cfg.lambda_align > 0) {
    Tensor ra = r_align(art.S_e, art.S_a);
    out.report.r_align = ra.value();
    total = add(total, scale(ra, cfg.lambda_align));
  }
  if (art.has_fusion && cfg.lambda_ind > 0) {
    Tensor ri = r_ind(art.F, art.P_e, art.P_a);
    out.report.r_ind = ri.value();
    total = add(total, scale(ri, cfg.lambda_ind));
  }
  if (art.has_fusion && cfg.lambda_div > 0) {
    Tensor rd = r_div(art.P_e, art.P_a);
    out.report.r_div = rd.value();
    total = add(total, scale(rd, cfg.lambda_div));
  }

  out.total = total;
  out.report.total = total.value();

  // per-pollutant breakdown, outside the graph
  const auto& mu = art.mu.values();
  const auto& y = art.y.values();
  const std::size_t rows = art.mu.shape()[0];
  double s0 = 0, s1 = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double d0 = mu[2 * i] - y[2 * i];
    const double d1 = mu[2 * i + 1] - y[2 * i + 1];
    s0 += d0 * d0;
    s1 += d1 * d1;
  }
  out.report.mse_co2 = s0 / static_cast<double>(rows);
  out.report.mse_pm25 = s1 / static_cast<double>(rows);
  return out;
}

std::vector<double> spike_weights(std::span<const double> y, std::span<const double> prev,
                                  std::size_t horizon, std::size_t targets, double alpha,
                                  double tau) {
  std::vector<double> w(horizon * targets, 1.0);
  if (alpha <= 0) return w;
  for (std::size_t j = 0; j < horizon; ++j) {
    for (std::size_t k = 0; k < targets; ++k) {
      const double cur = y[j * targets + k];
      const double before = j == 0 ? prev[k] : y[(j - 1) * targets + k];
      if (std::fabs(cur - before) > tau) w[j * targets + k] += alpha;
    }
  }
  return w;
}

}  // namespace iaq
