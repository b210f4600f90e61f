#include "iaqcast/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace iaq {

namespace {

using nlohmann::json;

json defaults_json() {
  return json{
      {"seed", 42},
      {"data",
       {{"path", "data.csv"},
        {"lookback", 48},
        {"horizon", 15},
        {"stride", 1},
        {"split", {0.7, 0.15, 0.15}},
        {"embedding", {{"mode", "hash"}, {"dim", 32}, {"table", ""}}}}},
      {"model",
       {{"hidden", 64},
        {"ste_depth", 2},
        {"feedback_rounds", 3},
        {"gru_long", 64},
        {"gru_short", 64},
        {"uncertainty", "hetero"},
        {"variant", "full"}}},
      {"loss",
       {{"mode", "mse_nll_hetero"},
        {"lambda_align", 0.1},
        {"lambda_ind", 0.01},
        {"lambda_div", 0.1},
        {"spike_alpha", 0.0},
        {"spike_tau", 1.0}}},
      {"train",
       {{"epochs", 50},
        {"batch_size", 32},
        {"learning_rate", 1e-3},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"eps", 1e-8},
        {"warmup_epochs", 10},
        {"clip_norm", 5.0},
        {"eval_every", 1},
        {"patience", 8}}},
      {"simulate",
       {{"days", 1},
        {"noise_temp", 0.05},
        {"noise_rh", 0.3},
        {"noise_co2", 4.0},
        {"noise_pm25", 0.3}}},
      {"paths", {{"checkpoint", "checkpoint.iaq"}, {"report_dir", "reports"}}},
  };
}

void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object())
    throw Error::config("config: expected an object at '" +
                        (prefix.empty() ? std::string("<root>") : prefix) + "'");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key()))
      throw Error::config("config: unknown key '" + path + "'");
    if (base[it.key()].is_object()) {
      merge_checked(base[it.key()], it.value(), path);
    } else {
      base[it.key()] = it.value();
    }
  }
}

RunConfig materialize(json j, bool check = true) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();

    const auto& d = j.at("data");
    c.data_path = d.at("path").get<std::string>();
    c.window.lookback = d.at("lookback").get<std::size_t>();
    c.window.horizon = d.at("horizon").get<std::size_t>();
    c.window.stride = d.at("stride").get<std::size_t>();
    const auto split = d.at("split").get<std::vector<double>>();
    if (split.size() != 3) throw Error::config("config: data.split needs 3 fractions");
    std::copy(split.begin(), split.end(), c.window.split.begin());
    c.embedding_mode = d.at("embedding").at("mode").get<std::string>();
    c.embedding_dim = d.at("embedding").at("dim").get<std::size_t>();
    c.embedding_table = d.at("embedding").at("table").get<std::string>();

    const auto& m = j.at("model");
    c.model.hidden = m.at("hidden").get<std::size_t>();
    c.model.ste_depth = m.at("ste_depth").get<std::size_t>();
    c.model.feedback_rounds = m.at("feedback_rounds").get<int>();
    c.model.gru_long = m.at("gru_long").get<std::size_t>();
    c.model.gru_short = m.at("gru_short").get<std::size_t>();
    c.model.uncertainty = uncertainty_from_string(m.at("uncertainty").get<std::string>());
    c.model.variant = variant_from_string(m.at("variant").get<std::string>());

    const auto& l = j.at("loss");
    c.loss.mode = loss_mode_from_string(l.at("mode").get<std::string>());
    c.loss.lambda_align = l.at("lambda_align").get<double>();
    c.loss.lambda_ind = l.at("lambda_ind").get<double>();
    c.loss.lambda_div = l.at("lambda_div").get<double>();
    c.loss.spike_alpha = l.at("spike_alpha").get<double>();
    c.loss.spike_tau = l.at("spike_tau").get<double>();

    const auto& t = j.at("train");
    c.train.epochs = t.at("epochs").get<int>();
    c.train.batch_size = t.at("batch_size").get<int>();
    c.train.learning_rate = t.at("learning_rate").get<double>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.beta2 = t.at("beta2").get<double>();
    c.train.eps = t.at("eps").get<double>();
    c.train.warmup_epochs = t.at("warmup_epochs").get<int>();
    c.train.clip_norm = t.at("clip_norm").get<double>();
    c.train.eval_every = t.at("eval_every").get<int>();
    c.train.patience = t.at("patience").get<int>();
    c.train.seed = c.seed;

    const auto& s = j.at("simulate");
    c.sim_days = s.at("days").get<int>();
    c.sim_noise.temp = s.at("noise_temp").get<double>();
    c.sim_noise.rh = s.at("noise_rh").get<double>();
    c.sim_noise.co2 = s.at("noise_co2").get<double>();
    c.sim_noise.pm25 = s.at("noise_pm25").get<double>();

    const auto& p = j.at("paths");
    c.checkpoint_path = p.at("checkpoint").get<std::string>();
    c.report_dir = p.at("report_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error::config(std::string("config: ") + e.what());
  }

  c.echo = j.dump();
  if (check) c.validate();
  return c;
}

}  // namespace

EmbeddingProvider RunConfig::make_embedding() const {
  if (embedding_mode == "hash") return EmbeddingProvider::hash_mode(embedding_dim);
  if (embedding_mode == "table") {
    if (embedding_table.empty())
      throw Error::config("config: embedding.table path required in table mode");
    return EmbeddingProvider::table_mode(embedding_table);
  }
  throw Error::config("config: embedding.mode must be 'hash' or 'table'");
}

ModelConfig RunConfig::resolved_model(std::size_t act_dim) const {
  ModelConfig m = model;
  m.lookback = window.lookback;
  m.horizon = window.horizon;
  m.act_dim = act_dim;
  m.validate();
  return m;
}

void RunConfig::validate() const {
  window.validate();
  loss.validate();
  train.validate();
  if (sim_days <= 0) throw Error::config("config: simulate.days must be >= 1");
  if (embedding_mode != "hash" && embedding_mode != "table")
    throw Error::config("config: embedding.mode must be 'hash' or 'table'");
  if (embedding_mode == "hash" && embedding_dim == 0)
    throw Error::config("config: embedding.dim must be positive");
  if (loss.mode == LossMode::kMseNllHetero && model.uncertainty != UncertaintyMode::kHetero)
    throw Error::config("config: loss.mode mse_nll_hetero requires model.uncertainty=hetero");
  if (loss.mode == LossMode::kMseNllHomo && model.uncertainty != UncertaintyMode::kHomo)
    throw Error::config("config: loss.mode mse_nll_homo requires model.uncertainty=homo");
  if (window.horizon > window.lookback)
    throw Error::config("config: data.horizon may not exceed data.lookback");
}

RunConfig default_run_config() { return materialize(defaults_json()); }

RunConfig parse_run_config(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error::config(std::string("config: invalid JSON: ") + e.what());
  }
  json merged = defaults_json();
  merge_checked(merged, user, "");
  return materialize(std::move(merged));
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error::config("override must look like section.key=value, got '" +
                        key_eq_value + "'");
  const std::string dotted = key_eq_value.substr(0, eq);
  const std::string raw = key_eq_value.substr(eq + 1);

  json doc = json::parse(cfg.echo);
  json* node = &doc;
  std::size_t begin = 0;
  std::vector<std::string> parts;
  while (begin <= dotted.size()) {
    const auto dot = dotted.find('.', begin);
    parts.push_back(dotted.substr(begin, dot == std::string::npos ? dot : dot - begin));
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      throw Error::config("config: unknown key '" + dotted + "'");
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf) || (*node)[leaf].is_object())
    throw Error::config("config: unknown key '" + dotted + "'");

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }
  if (value.is_object())
    throw Error::config("override value for '" + dotted + "' must be a scalar or array");
  (*node)[leaf] = value;
  // cross-field validation waits until every override has been applied
  cfg = materialize(std::move(doc), /*check=*/false);
}

}  // namespace iaq
