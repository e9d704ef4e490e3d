/* softteleop: estimation, control and teleoperation service for stacked
 * soft parallel modules.
 *
 * All functions return an st_status. On failure a human-readable message is
 * available from st_last_error() on the calling thread until the next call.
 * Objects are opaque and released with the matching *_free function; passing
 * NULL to a *_free function is allowed. Units are millimetres and degrees.
 */
#ifndef SOFTTELEOP_H
#define SOFTTELEOP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define ST_API __attribute__((visibility("default")))
#else
#define ST_API
#endif

typedef enum st_status {
  ST_OK = 0,
  ST_INVALID_ARGUMENT = 1,
  ST_PARSE_ERROR = 2,
  ST_COUNT_MISMATCH = 3,
  ST_NO_ESTIMATE = 4,
  ST_BAD_MESSAGE = 5,
  ST_IO_ERROR = 6,
  ST_INTERNAL = 99
} st_status;

ST_API const char* st_last_error(void);
ST_API const char* st_version(void);
/* 0 trace, 1 debug, 2 info, 3 warn, 4 error, 5 critical, 6 off. */
ST_API void st_set_log_level(int level);
ST_API void st_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

typedef struct st_config st_config;

ST_API st_status st_config_default(st_config** out);
ST_API st_status st_config_load(const char* path, st_config** out);
ST_API st_status st_config_from_json(const char* json, st_config** out);
/* Caller frees *out_json with st_string_free. */
ST_API st_status st_config_to_json(const st_config* cfg, char** out_json);
ST_API st_status st_config_set_seed(st_config* cfg, uint64_t seed);
/* "chord" or "cc". */
ST_API st_status st_config_set_plant_mode(st_config* cfg, const char* mode);
ST_API st_status st_config_set_period_ms(st_config* cfg, double period_ms);
ST_API size_t st_config_module_count(const st_config* cfg);
ST_API void st_config_free(st_config* cfg);

/* ---- kinematics and filtering ----------------------------------------- */

typedef struct st_reading {
  double h_mm;
  double phi_deg;
  double theta_deg;
} st_reading;

/* End effector of the configured chain for `count` module readings. */
ST_API st_status st_forward_chain(const st_config* cfg, const st_reading* readings, size_t count,
                                  double ee_mm[3]);

/* Runs the scalar filter over z[0..n) from (x0, p0); writes n estimates and
 * n covariances. Either output may be NULL. */
ST_API st_status st_kalman_filter(double q, double r, double x0, double p0, const double* z, size_t n,
                                  double* x_out, double* p_out);

/* ---- observer ----------------------------------------------------------- */

typedef struct st_observer st_observer;

ST_API st_status st_observer_new(const st_config* cfg, st_observer** out);
/* Ingests one "S,<t_ms>,h,phi,theta,..." line and writes the new end-effector
 * estimate. */
ST_API st_status st_observer_ingest_line(st_observer* obs, const char* line, double ee_mm[3]);
ST_API void st_observer_free(st_observer* obs);

/* ---- services ----------------------------------------------------------- */

typedef struct st_server st_server;

/* plant: "sim" or "tcp:<host>:<port>". tcp_listen / ws_listen: "host:port"
 * or "port" (0 picks a free port). ws_listen may be NULL to disable the
 * WebSocket listener. Fails with ST_IO_ERROR if a port cannot be bound. */
ST_API st_status st_server_new(const st_config* cfg, const char* plant, const char* tcp_listen,
                               const char* ws_listen, st_server** out);
ST_API int st_server_tcp_port(const st_server* srv);
ST_API int st_server_ws_port(const st_server* srv);
/* Blocks until st_server_request_stop(). */
ST_API st_status st_server_run(st_server* srv);
/* Async-signal-safe; may be called from any thread. */
ST_API void st_server_request_stop(st_server* srv);
ST_API void st_server_free(st_server* srv);

typedef struct st_plant_server st_plant_server;

ST_API st_status st_plant_server_new(const st_config* cfg, const char* listen, st_plant_server** out);
ST_API int st_plant_server_port(const st_plant_server* srv);
ST_API st_status st_plant_server_run(st_plant_server* srv);
ST_API void st_plant_server_request_stop(st_plant_server* srv);
ST_API void st_plant_server_free(st_plant_server* srv);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct st_eval st_eval;

typedef enum st_axis { ST_AXIS_X = 0, ST_AXIS_Y = 1, ST_AXIS_GLOBAL = 2, ST_AXIS_Z = 3 } st_axis;

typedef struct st_error_row {
  double mae;
  double rmse;
  double std;
  double max_mae;
  double q1;
  double q3;
} st_error_row;

/* trajectory: "builtin:circle", "builtin:lemniscate" or a JSON file path.
 * duration_s / period_ms <= 0 keep the trajectory's own values. */
ST_API st_status st_eval_run(const st_config* cfg, const char* trajectory, double duration_s, double period_ms,
                             st_eval** out);
ST_API size_t st_eval_sample_count(const st_eval* ev);
ST_API st_status st_eval_row(const st_eval* ev, st_axis axis, st_error_row* out);
/* Spearman correlation between total true tilt and planar error. */
ST_API st_status st_eval_tilt_correlation(const st_eval* ev, double* out);
/* Format follows the extension: ".json" writes JSON, anything else CSV. */
ST_API st_status st_eval_write_report(const st_eval* ev, const char* path);
ST_API st_status st_eval_write_samples(const st_eval* ev, const char* path);
ST_API void st_eval_free(st_eval* ev);

#ifdef __cplusplus
}
#endif

#endif /* SOFTTELEOP_H */
