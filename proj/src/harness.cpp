#include "iaqcast/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace iaq {

double median(std::vector<double> v) {
  if (v.empty()) throw Error::internal("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalReport metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size())
    throw Error::internal("metrics: length mismatch");
  if (y_true.size() % kNumTargets != 0)
    throw Error::internal("metrics: expected N x 2 rows");
  const std::size_t n = y_true.size() / kNumTargets;
  if (n < 2) throw Error::data("metrics: need at least 2 samples");

  EvalReport rep;
  rep.n_samples = n;
  for (std::size_t k = 0; k < kNumTargets; ++k) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += y_true[i * kNumTargets + k];
    mean /= static_cast<double>(n);

    double sse = 0, sae = 0, sst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = y_true[i * kNumTargets + k];
      const double p = y_pred[i * kNumTargets + k];
      sse += (t - p) * (t - p);
      sae += std::fabs(t - p);
      sst += (t - mean) * (t - mean);
    }
    if (!(sst > 0))
      throw Error::data("metrics: constant ground truth in channel " +
                        std::string(kChannelNames[kTargetChannel[k]]) +
                        ", R^2 undefined");
    ChannelMetrics& m = rep.channel[k];
    m.mse = sse / static_cast<double>(n);
    m.rmse = std::sqrt(m.mse);
    m.mae = sae / static_cast<double>(n);
    m.r2 = 1.0 - sse / sst;
  }
  return rep;
}

// --- ablations ---------------------------------------------------------------

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "streams") return AblationAxis::kStreams;
  if (s == "feedback_R") return AblationAxis::kFeedbackR;
  if (s == "timescale") return AblationAxis::kTimescale;
  if (s == "loss") return AblationAxis::kLoss;
  if (s == "regularizers") return AblationAxis::kRegularizers;
  throw Error::config("unknown ablation axis '" + s + "'");
}

std::string ablation_axis_to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::kStreams: return "streams";
    case AblationAxis::kFeedbackR: return "feedback_R";
    case AblationAxis::kTimescale: return "timescale";
    case AblationAxis::kLoss: return "loss";
    case AblationAxis::kRegularizers: return "regularizers";
  }
  return "?";
}

namespace {

struct RowSpec {
  std::string label;
  ModelConfig model;
  LossConfig loss;
};

std::vector<RowSpec> ablation_rows(AblationAxis axis, const AblationSettings& base) {
  std::vector<RowSpec> rows;
  // Architecture axes share one objective: plain MSE plus the configured
  // regularizer weights (structurally absent for rows without a fusion
  // module). Loss axes vary exactly the objective.
  LossConfig arch_loss = base.loss;
  arch_loss.mode = LossMode::kMseOnly;

  auto with_variant = [&](Variant v, int rounds) {
    ModelConfig m = base.model;
    m.variant = v;
    m.feedback_rounds = rounds;
    if (v != Variant::kFull && v != Variant::kNoFeedback && v != Variant::kShortOnly &&
        v != Variant::kLongOnly)
      m.uncertainty = UncertaintyMode::kHomo;
    return m;
  };

  switch (axis) {
    case AblationAxis::kStreams: {
      const int r = base.model.feedback_rounds;
      rows.push_back({"env_only", with_variant(Variant::kEnvOnly, r), arch_loss});
      rows.push_back({"direct_concat", with_variant(Variant::kDirectConcat, r), arch_loss});
      rows.push_back(
          {"two_stream_concat", with_variant(Variant::kTwoStreamConcat, r), arch_loss});
      rows.push_back({"no_feedback", with_variant(Variant::kNoFeedback, 0), arch_loss});
      rows.push_back({"full", with_variant(Variant::kFull, r), arch_loss});
      break;
    }
    case AblationAxis::kFeedbackR: {
      for (int r : {0, 1, 3, 5, 7}) {
        ModelConfig m = with_variant(r == 0 ? Variant::kNoFeedback : Variant::kFull, r);
        rows.push_back({"R=" + std::to_string(r), m, arch_loss});
      }
      break;
    }
    case AblationAxis::kTimescale: {
      const int r = base.model.feedback_rounds;
      rows.push_back({"short_only", with_variant(Variant::kShortOnly, r), arch_loss});
      rows.push_back({"long_only", with_variant(Variant::kLongOnly, r), arch_loss});
      rows.push_back({"dual", with_variant(Variant::kFull, r), arch_loss});
      break;
    }
    case AblationAxis::kLoss: {
      for (LossMode mode :
           {LossMode::kMseOnly, LossMode::kMseNllHomo, LossMode::kMseNllHetero}) {
        ModelConfig m = base.model;
        m.variant = Variant::kFull;
        m.uncertainty = mode == LossMode::kMseNllHetero ? UncertaintyMode::kHetero
                                                        : UncertaintyMode::kHomo;
        LossConfig l = base.loss;
        l.mode = mode;
        rows.push_back({loss_mode_to_string(mode), m, l});
      }
      break;
    }
    case AblationAxis::kRegularizers: {
      struct Stack {
        const char* label;
        bool align, ind, div;
      };
      for (const Stack& s : {Stack{"base", false, false, false},
                             Stack{"base+align", true, false, false},
                             Stack{"base+align+ind", true, true, false},
                             Stack{"base+align+ind+div", true, true, true}}) {
        ModelConfig m = base.model;
        m.variant = Variant::kFull;
        m.uncertainty = base.loss.mode == LossMode::kMseNllHetero
                            ? UncertaintyMode::kHetero
                            : UncertaintyMode::kHomo;
        LossConfig l = base.loss;
        l.lambda_align = s.align ? base.loss.lambda_align : 0;
        l.lambda_ind = s.ind ? base.loss.lambda_ind : 0;
        l.lambda_div = s.div ? base.loss.lambda_div : 0;
        rows.push_back({s.label, m, l});
      }
      break;
    }
  }
  return rows;
}

std::string cell_echo(AblationAxis axis, const RowSpec& row, const AblationSettings& base) {
  nlohmann::json j = {
      {"axis", ablation_axis_to_string(axis)},
      {"row", row.label},
      {"variant", variant_to_string(row.model.variant)},
      {"feedback_rounds", row.model.feedback_rounds},
      {"loss_mode", loss_mode_to_string(row.loss.mode)},
      {"lambda", {row.loss.lambda_align, row.loss.lambda_ind, row.loss.lambda_div}},
      {"seed", base.train.seed},
      {"epochs", base.train.epochs},
      {"batch_size", base.train.batch_size},
      {"learning_rate", base.train.learning_rate},
  };
  return j.dump();
}

}  // namespace

AblationMatrix ablation_run(const WindowSet& data, AblationAxis axis,
                            const AblationSettings& base) {
  AblationMatrix matrix;
  matrix.axis = axis;
  for (const RowSpec& row : ablation_rows(axis, base)) {
    TrainResult tr = train(row.model, row.loss, base.train, data);
    if (tr.diverged)
      throw Error::numeric("ablation row '" + row.label + "' diverged during training");
    EvalOutcome eo =
        evaluate_split(row.model, tr.params, row.loss, data.test, base.train.batch_size,
                       data.norm);
    AblationCell cell;
    cell.row_label = row.label;
    cell.test_loss = eo.loss;
    cell.config_echo = cell_echo(axis, row, base);
    cell.report.n_samples = data.test.size() * data.horizon;
    for (std::size_t k = 0; k < kNumTargets; ++k) {
      cell.report.channel[k].rmse = eo.rmse[k];
      cell.report.channel[k].mse = eo.rmse[k] * eo.rmse[k];
      cell.report.channel[k].mae = eo.mae[k];
      cell.report.channel[k].r2 = eo.r2[k];
    }
    cell.report.config_echo = cell.config_echo;
    matrix.cells.push_back(std::move(cell));
  }
  return matrix;
}

std::vector<std::pair<std::size_t, std::size_t>> default_sweep_configs() {
  return {{24, 5}, {36, 10}, {48, 15}, {60, 15}, {60, 30}, {90, 30}, {120, 30}, {120, 60}};
}

std::vector<SweepRow> horizon_sweep(
    const RawSeries& series, const std::vector<std::pair<std::size_t, std::size_t>>& configs,
    const AblationSettings& base, const EmbeddingProvider& embedding,
    const WindowConfig& window_base) {
  std::vector<SweepRow> rows;
  for (const auto& [L, P] : configs) {
    SweepRow row;
    row.lookback = L;
    row.horizon = P;
    try {
      if (P > L)
        throw Error::config("horizon exceeds lookback");
      WindowConfig wc = window_base;
      wc.lookback = L;
      wc.horizon = P;
      WindowSet ws = make_windows(series, wc, embedding);
      if (ws.val.empty() || ws.test.empty())
        throw Error::data("window config leaves an empty split");
      ModelConfig m = base.model;
      m.lookback = L;
      m.horizon = P;
      TrainResult tr = train(m, base.loss, base.train, ws);
      if (tr.diverged) throw Error::numeric("training diverged");
      EvalOutcome eo = evaluate_split(m, tr.params, base.loss, ws.test,
                                      base.train.batch_size, ws.norm);
      row.report.n_samples = ws.test.size() * P;
      for (std::size_t k = 0; k < kNumTargets; ++k) {
        row.report.channel[k].rmse = eo.rmse[k];
        row.report.channel[k].mse = eo.rmse[k] * eo.rmse[k];
        row.report.channel[k].mae = eo.mae[k];
        row.report.channel[k].r2 = eo.r2[k];
      }
    } catch (const Error& e) {
      row.skipped = true;
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- rollout ------------------------------------------------------------------

std::vector<double> rollout(const ModelConfig& cfg, const ModelParams& params,
                            const Window& seed_window, std::size_t steps) {
  if (steps == 0) throw Error::internal("rollout: steps must be >= 1");
  const std::size_t L = cfg.lookback, P = cfg.horizon;

  std::vector<double> x_env = seed_window.x_env;  // L x 4
  std::vector<double> x_act = seed_window.x_act;  // L x d_a
  const std::size_t de = kNumEnvChannels;
  const std::size_t da = cfg.act_dim;

  // exogenous rows held at the last observed values
  std::vector<double> held_env(de);
  std::memcpy(held_env.data(), x_env.data() + (L - 1) * de, de * sizeof(double));
  std::vector<double> held_act(da);
  std::memcpy(held_act.data(), x_act.data() + (L - 1) * da, da * sizeof(double));

  std::vector<double> out;
  out.reserve(((steps + P - 1) / P) * P * kNumTargets);
  while (out.size() < steps * kNumTargets) {
    Graph g;
    ForwardArtifacts art = model_forward(g, cfg, params, x_env, x_act);
    const auto mu = art.mu.values();
    out.insert(out.end(), mu.begin(), mu.end());

    // slide the window by P, appending predicted targets and held exogenous rows
    std::memmove(x_env.data(), x_env.data() + P * de, (L - P) * de * sizeof(double));
    std::memmove(x_act.data(), x_act.data() + P * da, (L - P) * da * sizeof(double));
    for (std::size_t j = 0; j < P; ++j) {
      double* row = x_env.data() + (L - P + j) * de;
      row[0] = held_env[0];
      row[1] = held_env[1];
      row[2] = mu[j * kNumTargets];
      row[3] = mu[j * kNumTargets + 1];
      std::memcpy(x_act.data() + (L - P + j) * da, held_act.data(), da * sizeof(double));
    }
  }
  out.resize(steps * kNumTargets);
  return out;
}

RolloutComparison compare_rollout_direct(const ModelConfig& cfg, const ModelParams& params,
                                         const WindowSet& data, int chunks,
                                         std::size_t max_windows) {
  if (chunks < 2) throw Error::internal("compare_rollout_direct: need >= 2 chunks");
  const std::size_t P = cfg.horizon;

  std::map<std::size_t, const Window*> by_start;
  for (const Window& w : data.test) by_start.emplace(w.start, &w);

  auto window_rmse = [&](std::span<const double> pred, std::span<const double> truth) {
    double se = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      se += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(se / static_cast<double>(pred.size()));
  };

  std::vector<double> roll_errs, direct_errs;
  for (const Window& w : data.test) {
    if (roll_errs.size() >= max_windows) break;
    std::vector<const Window*> successors;
    bool ok = true;
    for (int c = 1; c < chunks && ok; ++c) {
      auto it = by_start.find(w.start + static_cast<std::size_t>(c) * P);
      if (it == by_start.end())
        ok = false;
      else
        successors.push_back(it->second);
    }
    if (!ok) continue;

    const std::vector<double> traj =
        rollout(cfg, params, w, static_cast<std::size_t>(chunks) * P);

    std::vector<double> roll_pred, truth, direct_pred;
    for (int c = 1; c < chunks; ++c) {
      const Window& wc = *successors[static_cast<std::size_t>(c - 1)];
      const std::size_t off = static_cast<std::size_t>(c) * P * kNumTargets;
      roll_pred.insert(roll_pred.end(), traj.begin() + off,
                       traj.begin() + off + P * kNumTargets);
      truth.insert(truth.end(), wc.y.begin(), wc.y.end());
      Graph g;
      ForwardArtifacts art = model_forward(g, cfg, params, wc.x_env, wc.x_act);
      const auto mu = art.mu.values();
      direct_pred.insert(direct_pred.end(), mu.begin(), mu.end());
    }
    roll_errs.push_back(window_rmse(roll_pred, truth));
    direct_errs.push_back(window_rmse(direct_pred, truth));
  }
  if (roll_errs.empty())
    throw Error::data("compare_rollout_direct: no usable windows (need stride-1 test split)");

  RolloutComparison rc;
  rc.rollout_rmse = median(roll_errs);
  rc.direct_rmse = median(direct_errs);
  rc.windows_used = roll_errs.size();
  return rc;
}

void write_prediction_csv(const std::string& path, const ModelConfig& cfg,
                          const ModelParams& params, const WindowSet& data,
                          const std::string& config_echo) {
  if (data.test.empty()) throw Error::data("prediction export: empty test split");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("cannot open '" + path + "' for writing");

  out << "# config: " << config_echo << "\n";
  out << "timestamp,y_true_co2,y_pred_co2,y_sigma_co2,y_true_pm25,y_pred_pm25,y_sigma_pm25\n";

  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out << buf << sep;
  };

  const std::size_t L = cfg.lookback, P = cfg.horizon;
  std::size_t next_start = data.test.front().start;
  for (const Window& w : data.test) {
    if (w.start < next_start) continue;  // non-overlapping coverage
    next_start = w.start + P;
    Graph g;
    ForwardArtifacts art = model_forward(g, cfg, params, w.x_env, w.x_act);
    Forecast f = make_forecast(art, data.norm);
    for (std::size_t j = 0; j < P; ++j) {
      out << data.timestamps[w.start + L + j] << ',';
      put(w.y_phys[j * kNumTargets], ',');
      put(f.mu[j * kNumTargets], ',');
      put(f.sigma[j * kNumTargets], ',');
      put(w.y_phys[j * kNumTargets + 1], ',');
      put(f.mu[j * kNumTargets + 1], ',');
      std::snprintf(buf, sizeof buf, "%.12g", f.sigma[j * kNumTargets + 1]);
      out << buf << '\n';
    }
  }
  if (!out) throw Error::io("write failed for '" + path + "'");
}

}  // namespace iaq
