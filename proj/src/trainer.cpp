#include "iaqcast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iaqcast/harness.hpp"

namespace iaq {

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0) throw Error::config("train: epochs/batch_size must be positive");
  if (!(learning_rate > 0)) throw Error::config("train: learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw Error::config("train: adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw Error::config("train: adam eps must be > 0");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw Error::config("train: warmup_epochs must lie in [0, epochs]");
  if (clip_norm < 0) throw Error::config("train: clip_norm must be >= 0");
  if (eval_every <= 0) throw Error::config("train: eval_every must be positive");
  if (patience <= 0) throw Error::config("train: patience must be positive");
}

Adam::Adam(const ModelParams& params, const TrainConfig& cfg)
    : lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.eps),
      clip_(cfg.clip_norm) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.data.size(), 0.0);
    v_.emplace_back(p.data.size(), 0.0);
  }
}

void Adam::step(ModelParams& params,
                const std::function<std::span<const double>(const std::string&)>& grad_of) {
  auto& ps = params.all();
  if (ps.size() != m_.size()) throw Error::internal("adam state misaligned");

  std::vector<std::span<const double>> grads(ps.size());
  double norm2 = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    grads[i] = grad_of(ps[i].name);
    if (grads[i].size() != ps[i].data.size())
      throw Error::internal("gradient size mismatch for '" + ps[i].name + "'");
    for (double g : grads[i]) {
      if (!std::isfinite(g))
        throw Error::numeric("non-finite gradient in leaf '" + ps[i].name + "'");
      norm2 += g * g;
    }
  }
  double scale = 1.0;
  if (clip_ > 0) {
    const double norm = std::sqrt(norm2);
    if (norm > clip_) scale = clip_ / norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& w = ps[i].data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j] * scale;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

BatchObjective build_batch_objective(Graph& g, const ModelConfig& mcfg,
                                     const ModelParams& params, const LossConfig& lcfg,
                                     std::span<const Window* const> windows) {
  if (windows.empty()) throw Error::internal("empty batch");
  const std::size_t B = windows.size();

  std::vector<Tensor> mus, sigmas, ses, sas, fs, pes, pas;
  mus.reserve(B);
  sigmas.reserve(B);
  std::vector<double> ys;
  ys.reserve(B * mcfg.horizon * kNumTargets);
  std::vector<double> ws;
  const bool weighted = lcfg.spike_alpha > 0;

  bool has_fusion = false;
  for (const Window* w : windows) {
    ForwardArtifacts art = model_forward(g, mcfg, params, w->x_env, w->x_act);
    mus.push_back(art.mu);
    sigmas.push_back(art.log_sigma);
    if (art.has_fusion) {
      has_fusion = true;
      ses.push_back(art.S_e);
      sas.push_back(art.S_a);
      fs.push_back(art.F);
      pes.push_back(art.P_e);
      pas.push_back(art.P_a);
    }
    ys.insert(ys.end(), w->y.begin(), w->y.end());
    if (weighted) {
      auto sw = spike_weights(w->y, std::span<const double>(w->prev_y.data(), kNumTargets),
                              mcfg.horizon, kNumTargets, lcfg.spike_alpha, lcfg.spike_tau);
      ws.insert(ws.end(), sw.begin(), sw.end());
    }
  }

  auto pool = [&](std::vector<Tensor>& ts) {
    return ts.size() == 1 ? ts[0] : concat(ts, 0);
  };

  BatchArtifacts batch;
  batch.mu = pool(mus);
  batch.log_sigma = pool(sigmas);
  batch.y = g.constant({B * mcfg.horizon, kNumTargets}, ys);
  if (weighted) batch.weights = g.constant({B * mcfg.horizon, kNumTargets}, ws);
  batch.has_fusion = has_fusion;
  if (has_fusion) {
    batch.S_e = pool(ses);
    batch.S_a = pool(sas);
    batch.F = pool(fs);
    batch.P_e = pool(pes);
    batch.P_a = pool(pas);
  }
  ObjectiveResult res = total_objective(g, batch, lcfg);
  return {res.total, batch.mu, res.report};
}

EvalOutcome evaluate_split(const ModelConfig& mcfg, const ModelParams& params,
                           const LossConfig& lcfg, const std::vector<Window>& windows,
                           int batch_size, const Normalizer& norm) {
  if (windows.empty()) throw Error::internal("evaluate_split: no windows");
  EvalOutcome out;

  LossReport acc;
  double weight_sum = 0;
  std::vector<double> y_true, y_pred;
  y_true.reserve(windows.size() * mcfg.horizon * kNumTargets);
  y_pred.reserve(y_true.capacity());
  double norm_se = 0;
  std::size_t norm_n = 0;

  for (std::size_t at = 0; at < windows.size();) {
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size), windows.size() - at);
    std::vector<const Window*> batch(take);
    for (std::size_t i = 0; i < take; ++i) batch[i] = &windows[at + i];

    Graph g;
    BatchObjective res = build_batch_objective(g, mcfg, params, lcfg, batch);
    const double w = static_cast<double>(take);
    acc.total += res.report.total * w;
    acc.mse += res.report.mse * w;
    acc.nll += res.report.nll * w;
    acc.r_align += res.report.r_align * w;
    acc.r_ind += res.report.r_ind * w;
    acc.r_div += res.report.r_div * w;
    acc.mse_co2 += res.report.mse_co2 * w;
    acc.mse_pm25 += res.report.mse_pm25 * w;
    weight_sum += w;

    const auto mu = res.mu.values();
    std::size_t row = 0;
    for (std::size_t i = 0; i < take; ++i) {
      const Window& win = windows[at + i];
      for (std::size_t j = 0; j < mcfg.horizon; ++j, ++row) {
        for (std::size_t k = 0; k < kNumTargets; ++k) {
          const double mu_norm = mu[row * kNumTargets + k];
          const double truth_norm = win.y[j * kNumTargets + k];
          norm_se += (mu_norm - truth_norm) * (mu_norm - truth_norm);
          ++norm_n;
          y_pred.push_back(norm.inverse(kTargetChannel[k], mu_norm));
          y_true.push_back(win.y_phys[j * kNumTargets + k]);
        }
      }
    }
    at += take;
  }

  const double inv = 1.0 / weight_sum;
  acc.total *= inv;
  acc.mse *= inv;
  acc.nll *= inv;
  acc.r_align *= inv;
  acc.r_ind *= inv;
  acc.r_div *= inv;
  acc.mse_co2 *= inv;
  acc.mse_pm25 *= inv;
  out.loss = acc;
  out.rmse_norm_pooled = std::sqrt(norm_se / static_cast<double>(norm_n));

  EvalReport rep = metrics(y_true, y_pred);
  for (std::size_t k = 0; k < kNumTargets; ++k) {
    out.rmse[k] = rep.channel[k].rmse;
    out.mae[k] = rep.channel[k].mae;
    out.r2[k] = rep.channel[k].r2;
  }
  return out;
}

TrainResult train(const ModelConfig& mcfg, const LossConfig& lcfg, const TrainConfig& tcfg,
                  const WindowSet& data) {
  mcfg.validate();
  lcfg.validate();
  tcfg.validate();
  if (data.train.empty()) throw Error::data("train: no training windows");
  const bool have_val = !data.val.empty();

  ModelParams params = init_model_params(mcfg, tcfg.seed);
  Adam adam(params, tcfg);
  Rng shuffle_rng(splitmix64(tcfg.seed ^ 0x5A17B1Eull));

  TrainResult result;
  ModelParams best = params;
  double best_val = 0;
  bool have_best = false;
  LossMode best_mode = LossMode::kMseOnly;  // mode in which best_val was measured
  double best_rmse = std::numeric_limits<double>::infinity();
  int rmse_bad_evals = 0;
  bool stop = false;

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  int step = 0;
  for (int epoch = 0; epoch < tcfg.epochs && !stop; ++epoch) {
    result.epochs_run = epoch + 1;
    LossConfig active = lcfg;
    if (epoch < tcfg.warmup_epochs) active.mode = LossMode::kMseOnly;

    // Fisher-Yates with the run RNG
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    LossReport epoch_acc;
    double epoch_weight = 0;
    for (std::size_t at = 0; at < order.size(); at += tcfg.batch_size) {
      const std::size_t take =
          std::min<std::size_t>(tcfg.batch_size, order.size() - at);
      std::vector<const Window*> batch(take);
      for (std::size_t i = 0; i < take; ++i) batch[i] = &data.train[order[at + i]];

      Graph g;
      BatchObjective res = build_batch_objective(g, mcfg, params, active, batch);
      if (!std::isfinite(res.report.total)) {
        result.diverged = true;
        result.params = have_best ? best : params;
        return result;
      }
      g.backward(res.total);
      adam.step(params, [&g](const std::string& n) { return g.grad_by_name(n); });

      ++step;
      result.steps.push_back({step, res.report});
      const double w = static_cast<double>(take);
      epoch_acc.total += res.report.total * w;
      epoch_acc.mse += res.report.mse * w;
      epoch_acc.nll += res.report.nll * w;
      epoch_acc.r_align += res.report.r_align * w;
      epoch_acc.r_ind += res.report.r_ind * w;
      epoch_acc.r_div += res.report.r_div * w;
      epoch_acc.mse_co2 += res.report.mse_co2 * w;
      epoch_acc.mse_pm25 += res.report.mse_pm25 * w;
      epoch_weight += w;
    }

    const bool do_eval = (epoch + 1) % tcfg.eval_every == 0 || epoch + 1 == tcfg.epochs;
    if (!do_eval) continue;

    TrainLogRecord train_rec;
    train_rec.epoch = epoch;
    train_rec.split = "train";
    const double inv = 1.0 / epoch_weight;
    train_rec.loss = {epoch_acc.total * inv,   epoch_acc.mse * inv,
                      epoch_acc.nll * inv,     epoch_acc.r_align * inv,
                      epoch_acc.r_ind * inv,   epoch_acc.r_div * inv,
                      epoch_acc.mse_co2 * inv, epoch_acc.mse_pm25 * inv};
    result.log.push_back(train_rec);

    if (have_val) {
      EvalOutcome vo = evaluate_split(mcfg, params, active, data.val, tcfg.batch_size,
                                      data.norm);
      TrainLogRecord val_rec;
      val_rec.epoch = epoch;
      val_rec.split = "val";
      val_rec.loss = vo.loss;
      val_rec.rmse = vo.rmse;
      val_rec.mae = vo.mae;
      val_rec.r2 = vo.r2;
      result.log.push_back(val_rec);

      // best-model selection on validation total loss within the active mode;
      // the tracker resets when warmup hands over to the configured mode
      if (have_best && best_mode != active.mode) have_best = false;
      if (!have_best || vo.loss.total < best_val) {
        have_best = true;
        best_val = vo.loss.total;
        best_mode = active.mode;
        best = params;
        result.best_epoch = epoch;
        result.best_val_total = best_val;
      }

      // early stop watches pooled normalized validation RMSE
      if (vo.rmse_norm_pooled < best_rmse) {
        best_rmse = vo.rmse_norm_pooled;
        rmse_bad_evals = 0;
      } else {
        ++rmse_bad_evals;
        if (rmse_bad_evals >= tcfg.patience) {
          result.early_stopped = true;
          stop = true;
        }
      }
    }
  }

  result.params = have_best ? best : params;
  return result;
}

}  // namespace iaq
