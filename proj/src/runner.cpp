#include "iaqcast/runner.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "iaqcast/datagen.hpp"
#include "iaqcast/harness.hpp"

namespace iaq::run {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error::io("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void put(std::ofstream& out, double v, char sep) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out << buf << sep;
}

struct LoadedData {
  WindowSet windows;
  EmbeddingProvider embedding;
  ModelConfig model;
};

LoadedData load_windows(const RunConfig& cfg) {
  RawSeries series = ingest_csv(cfg.data_path);
  EmbeddingProvider emb = cfg.make_embedding();
  WindowSet ws = make_windows(series, cfg.window, emb);
  ModelConfig m = cfg.resolved_model(emb.dim());
  return {std::move(ws), std::move(emb), m};
}

void write_train_logs(const RunConfig& cfg, const TrainResult& result) {
  ensure_dir(cfg.report_dir);
  {
    std::ofstream out(join(cfg.report_dir, "train_log.csv"), std::ios::binary);
    if (!out) throw Error::io("cannot write train_log.csv");
    out << "# config: " << cfg.echo << "\n";
    out << "epoch,split,total,mse,nll,r_align,r_ind,r_div,"
           "rmse_co2,mae_co2,r2_co2,rmse_pm25,mae_pm25,r2_pm25\n";
    for (const auto& r : result.log) {
      out << r.epoch << ',' << r.split << ',';
      put(out, r.loss.total, ',');
      put(out, r.loss.mse, ',');
      put(out, r.loss.nll, ',');
      put(out, r.loss.r_align, ',');
      put(out, r.loss.r_ind, ',');
      put(out, r.loss.r_div, ',');
      put(out, r.rmse[0], ',');
      put(out, r.mae[0], ',');
      put(out, r.r2[0], ',');
      put(out, r.rmse[1], ',');
      put(out, r.mae[1], ',');
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.12g", r.r2[1]);
      out << buf << '\n';
    }
  }
  {
    std::ofstream out(join(cfg.report_dir, "steps.csv"), std::ios::binary);
    if (!out) throw Error::io("cannot write steps.csv");
    out << "# config: " << cfg.echo << "\n";
    out << "step,total,mse,nll,r_align,r_ind,r_div\n";
    for (const auto& s : result.steps) {
      out << s.step << ',';
      put(out, s.loss.total, ',');
      put(out, s.loss.mse, ',');
      put(out, s.loss.nll, ',');
      put(out, s.loss.r_align, ',');
      put(out, s.loss.r_ind, ',');
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.12g", s.loss.r_div);
      out << buf << '\n';
    }
  }
}

Checkpoint load_and_check(const RunConfig& cfg, std::size_t act_dim) {
  Checkpoint ck = load_checkpoint(cfg.checkpoint_path);
  const ModelConfig want = cfg.resolved_model(act_dim);
  if (!(ck.config == want))
    throw Error::config("checkpoint '" + cfg.checkpoint_path +
                        "' was trained with a different model configuration");
  return ck;
}

}  // namespace

void simulate(const RunConfig& cfg, const std::string& out_csv) {
  cfg.validate();
  Scenario sc = default_scenario(cfg.seed, cfg.sim_days);
  sc.noise_sd = cfg.sim_noise;
  Trace tr = iaq::simulate(sc);
  const std::string path = out_csv.empty() ? cfg.data_path : out_csv;
  export_csv(tr, path);

  // scenario echo beside the trace for reproducibility
  std::ofstream meta(path + ".meta", std::ios::binary);
  meta << "# config: " << cfg.echo << "\n";
  meta << "rows," << tr.timestamps.size() << "\n";
  meta << "events," << sc.activity_events.size() << "\n";
  std::cerr << "simulate: wrote " << tr.timestamps.size() << " rows to " << path << "\n";
}

void train_run(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_windows(cfg);
  TrainResult result = train(data.model, cfg.loss, cfg.train, data.windows);
  write_train_logs(cfg, result);
  save_checkpoint(cfg.checkpoint_path, data.model, result.params, data.windows.norm,
                  cfg.echo);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "train: " << result.epochs_run << " epochs in " << secs << "s, best epoch "
            << result.best_epoch << (result.early_stopped ? " (early stop)" : "") << "\n";
  if (result.diverged)
    throw Error::numeric("training diverged; last good checkpoint written to '" +
                         cfg.checkpoint_path + "'");
}

void eval_run(const RunConfig& cfg) {
  cfg.validate();
  EmbeddingProvider emb = cfg.make_embedding();
  Checkpoint ck = load_and_check(cfg, emb.dim());
  RawSeries series = ingest_csv(cfg.data_path);
  WindowSet ws = make_windows_with(series, cfg.window, emb, ck.norm);
  if (ws.test.empty()) throw Error::data("eval: test split has no windows");

  EvalOutcome eo = evaluate_split(ck.config, ck.params, cfg.loss, ws.test,
                                  cfg.train.batch_size, ck.norm);
  ensure_dir(cfg.report_dir);
  std::ofstream out(join(cfg.report_dir, "eval.csv"), std::ios::binary);
  if (!out) throw Error::io("cannot write eval.csv");
  out << "# config: " << cfg.echo << "\n";
  out << "channel,rmse,mae,r2,mse\n";
  const char* names[2] = {"co2", "pm25"};
  for (int k = 0; k < 2; ++k) {
    out << names[k] << ',';
    put(out, eo.rmse[k], ',');
    put(out, eo.mae[k], ',');
    put(out, eo.r2[k], ',');
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", eo.rmse[k] * eo.rmse[k]);
    out << buf << '\n';
  }
  std::cerr << "eval: co2 rmse " << eo.rmse[0] << ", pm25 rmse " << eo.rmse[1] << "\n";
}

void forecast_run(const RunConfig& cfg) {
  cfg.validate();
  EmbeddingProvider emb = cfg.make_embedding();
  Checkpoint ck = load_and_check(cfg, emb.dim());
  RawSeries series = ingest_csv(cfg.data_path);
  WindowSet ws = make_windows_with(series, cfg.window, emb, ck.norm);
  ensure_dir(cfg.report_dir);
  write_prediction_csv(join(cfg.report_dir, "predictions.csv"), ck.config, ck.params, ws,
                       cfg.echo);
  std::cerr << "forecast: wrote predictions.csv\n";
}

void ablate_run(const RunConfig& cfg, const std::vector<std::string>& axes) {
  cfg.validate();
  LoadedData data = load_windows(cfg);
  AblationSettings base{data.model, cfg.loss, cfg.train};

  std::vector<AblationAxis> run_axes;
  if (axes.empty()) {
    run_axes = {AblationAxis::kStreams, AblationAxis::kFeedbackR, AblationAxis::kTimescale,
                AblationAxis::kLoss, AblationAxis::kRegularizers};
  } else {
    for (const auto& a : axes) run_axes.push_back(ablation_axis_from_string(a));
  }

  ensure_dir(cfg.report_dir);
  for (AblationAxis axis : run_axes) {
    AblationMatrix m = ablation_run(data.windows, axis, base);
    const std::string path =
        join(cfg.report_dir, "ablation_" + ablation_axis_to_string(axis) + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot write '" + path + "'");
    out << "# config: " << cfg.echo << "\n";
    out << "row,rmse_co2,mae_co2,r2_co2,rmse_pm25,mae_pm25,r2_pm25,cell_config\n";
    for (const auto& c : m.cells) {
      out << c.row_label << ',';
      put(out, c.report.channel[0].rmse, ',');
      put(out, c.report.channel[0].mae, ',');
      put(out, c.report.channel[0].r2, ',');
      put(out, c.report.channel[1].rmse, ',');
      put(out, c.report.channel[1].mae, ',');
      put(out, c.report.channel[1].r2, ',');
      out << '"' << c.config_echo << '"' << '\n';
    }
    std::cerr << "ablate: wrote " << path << "\n";
  }
}

void sweep_run(const RunConfig& cfg) {
  cfg.validate();
  RawSeries series = ingest_csv(cfg.data_path);
  EmbeddingProvider emb = cfg.make_embedding();
  AblationSettings base{cfg.resolved_model(emb.dim()), cfg.loss, cfg.train};

  auto rows = horizon_sweep(series, default_sweep_configs(), base, emb, cfg.window);

  ensure_dir(cfg.report_dir);
  const std::string path = join(cfg.report_dir, "horizon_sweep.csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("cannot write '" + path + "'");
  out << "# config: " << cfg.echo << "\n";
  out << "lookback,horizon,rmse_co2,mae_co2,r2_co2,rmse_pm25,mae_pm25,r2_pm25,note\n";
  for (const auto& r : rows) {
    out << r.lookback << ',' << r.horizon << ',';
    if (r.skipped) {
      out << ",,,,,," << '"' << r.note << '"' << '\n';
      std::cerr << "sweep: skipped (" << r.lookback << "," << r.horizon << "): " << r.note
                << "\n";
      continue;
    }
    put(out, r.report.channel[0].rmse, ',');
    put(out, r.report.channel[0].mae, ',');
    put(out, r.report.channel[0].r2, ',');
    put(out, r.report.channel[1].rmse, ',');
    put(out, r.report.channel[1].mae, ',');
    put(out, r.report.channel[1].r2, ',');
    out << '\n';
  }
  std::cerr << "sweep: wrote " << path << "\n";
}

}  // namespace iaq::run
