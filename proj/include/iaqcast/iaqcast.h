/* iaqcast C API: indoor CO2 / PM2.5 forecasting engine.
 *
 * All functions return iaq_status; IAQ_OK is 0. On failure a human-readable
 * message is available from iaq_last_error() until the next API call on the
 * same thread. Handles are opaque and single-owner; free them with the
 * matching *_free call.
 */

#ifndef IAQCAST_H_
#define IAQCAST_H_

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum iaq_status {
  IAQ_OK = 0,
  IAQ_ERR_INTERNAL = 1,
  IAQ_ERR_CONFIG = 2,
  IAQ_ERR_DATA = 3,
  IAQ_ERR_NUMERIC = 4,
  IAQ_ERR_IO = 5
} iaq_status;

typedef struct iaq_config iaq_config;
typedef struct iaq_model iaq_model;

const char* iaq_version(void);

/* Thread-local message for the most recent failure. Never NULL. */
const char* iaq_last_error(void);

/* --- configuration ------------------------------------------------------ */

iaq_status iaq_config_default(iaq_config** out);
iaq_status iaq_config_load(const char* path, iaq_config** out);
iaq_status iaq_config_parse(const char* json_text, iaq_config** out);

/* Dotted-path override, e.g. "train.epochs=5". Later calls win. */
iaq_status iaq_config_set(iaq_config* cfg, const char* key_eq_value);

/* Canonical JSON echo of the configuration. Writes up to buf_len bytes
 * (including the terminator) and reports the required size in *needed. */
iaq_status iaq_config_echo(const iaq_config* cfg, char* buf, size_t buf_len,
                           size_t* needed);

void iaq_config_free(iaq_config* cfg);

/* --- pipelines ----------------------------------------------------------- */

/* Writes a synthetic trace CSV. out_csv may be NULL to use data.path. */
iaq_status iaq_simulate(const iaq_config* cfg, const char* out_csv);

/* Trains on data.path; writes the checkpoint and training logs. */
iaq_status iaq_train(const iaq_config* cfg);

/* Evaluates the checkpoint on the test split; writes eval.csv. */
iaq_status iaq_eval(const iaq_config* cfg);

/* Writes the prediction export CSV for the test split. */
iaq_status iaq_forecast(const iaq_config* cfg);

/* axes_csv: comma-separated subset of
 * streams,feedback_R,timescale,loss,regularizers; NULL means all. */
iaq_status iaq_ablate(const iaq_config* cfg, const char* axes_csv);

/* Lookback/horizon sweep; writes horizon_sweep.csv. */
iaq_status iaq_sweep(const iaq_config* cfg);

/* --- checkpoints ---------------------------------------------------------- */

iaq_status iaq_model_load(const char* checkpoint_path, iaq_model** out);

/* JSON description: model configuration, parameter count, run-config echo. */
iaq_status iaq_model_info(const iaq_model* m, char* buf, size_t buf_len, size_t* needed);

void iaq_model_free(iaq_model* m);

#ifdef __cplusplus
}
#endif

#endif /* IAQCAST_H_ */
