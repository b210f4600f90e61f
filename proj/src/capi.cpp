#include "iaqcast/iaqcast.h"

#include <cstring>
#include <string>

#include "json.hpp"

#include "iaqcast/config.hpp"
#include "iaqcast/runner.hpp"

using iaq::Error;
using iaq::ErrorCategory;

struct iaq_config {
  iaq::RunConfig cfg;
};

struct iaq_model {
  iaq::Checkpoint ck;
};

namespace {

thread_local std::string g_last_error = "ok";

iaq_status status_of(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return IAQ_ERR_CONFIG;
    case ErrorCategory::data: return IAQ_ERR_DATA;
    case ErrorCategory::numeric: return IAQ_ERR_NUMERIC;
    case ErrorCategory::io: return IAQ_ERR_IO;
    default: return IAQ_ERR_INTERNAL;
  }
}

template <class Fn>
iaq_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error = "ok";
    return IAQ_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.category());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return IAQ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return IAQ_ERR_INTERNAL;
  }
}

iaq_status fill_buffer(const std::string& s, char* buf, size_t buf_len, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || buf_len == 0) return IAQ_OK;
  const size_t n = s.size() + 1 <= buf_len ? s.size() : buf_len - 1;
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
  return IAQ_OK;
}

}  // namespace

extern "C" {

const char* iaq_version(void) { return "iaqcast 1.0.0"; }

const char* iaq_last_error(void) { return g_last_error.c_str(); }

iaq_status iaq_config_default(iaq_config** out) {
  if (!out) return IAQ_ERR_INTERNAL;
  return guarded([&] { *out = new iaq_config{iaq::default_run_config()}; });
}

iaq_status iaq_config_load(const char* path, iaq_config** out) {
  if (!out || !path) return IAQ_ERR_INTERNAL;
  return guarded([&] { *out = new iaq_config{iaq::load_run_config(path)}; });
}

iaq_status iaq_config_parse(const char* json_text, iaq_config** out) {
  if (!out || !json_text) return IAQ_ERR_INTERNAL;
  return guarded([&] { *out = new iaq_config{iaq::parse_run_config(json_text)}; });
}

iaq_status iaq_config_set(iaq_config* cfg, const char* key_eq_value) {
  if (!cfg || !key_eq_value) return IAQ_ERR_INTERNAL;
  return guarded([&] { iaq::apply_override(cfg->cfg, key_eq_value); });
}

iaq_status iaq_config_echo(const iaq_config* cfg, char* buf, size_t buf_len,
                           size_t* needed) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return fill_buffer(cfg->cfg.echo, buf, buf_len, needed);
}

void iaq_config_free(iaq_config* cfg) { delete cfg; }

iaq_status iaq_simulate(const iaq_config* cfg, const char* out_csv) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return guarded([&] { iaq::run::simulate(cfg->cfg, out_csv ? out_csv : ""); });
}

iaq_status iaq_train(const iaq_config* cfg) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return guarded([&] { iaq::run::train_run(cfg->cfg); });
}

iaq_status iaq_eval(const iaq_config* cfg) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return guarded([&] { iaq::run::eval_run(cfg->cfg); });
}

iaq_status iaq_forecast(const iaq_config* cfg) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return guarded([&] { iaq::run::forecast_run(cfg->cfg); });
}

iaq_status iaq_ablate(const iaq_config* cfg, const char* axes_csv) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return guarded([&] {
    std::vector<std::string> axes;
    if (axes_csv && *axes_csv) {
      std::string token;
      for (const char* p = axes_csv;; ++p) {
        if (*p == ',' || *p == '\0') {
          if (!token.empty()) axes.push_back(token);
          token.clear();
          if (*p == '\0') break;
        } else {
          token.push_back(*p);
        }
      }
    }
    iaq::run::ablate_run(cfg->cfg, axes);
  });
}

iaq_status iaq_sweep(const iaq_config* cfg) {
  if (!cfg) return IAQ_ERR_INTERNAL;
  return guarded([&] { iaq::run::sweep_run(cfg->cfg); });
}

iaq_status iaq_model_load(const char* checkpoint_path, iaq_model** out) {
  if (!out || !checkpoint_path) return IAQ_ERR_INTERNAL;
  return guarded([&] { *out = new iaq_model{iaq::load_checkpoint(checkpoint_path)}; });
}

iaq_status iaq_model_info(const iaq_model* m, char* buf, size_t buf_len, size_t* needed) {
  if (!m) return IAQ_ERR_INTERNAL;
  return guarded([&] {
    nlohmann::json j = {
        {"variant", iaq::variant_to_string(m->ck.config.variant)},
        {"uncertainty", iaq::uncertainty_to_string(m->ck.config.uncertainty)},
        {"hidden", m->ck.config.hidden},
        {"lookback", m->ck.config.lookback},
        {"horizon", m->ck.config.horizon},
        {"feedback_rounds", m->ck.config.feedback_rounds},
        {"parameters", m->ck.params.total_size()},
        {"run_config", m->ck.run_config_echo},
    };
    fill_buffer(j.dump(), buf, buf_len, needed);
  });
}

void iaq_model_free(iaq_model* m) { delete m; }

}  // extern "C"
