#include "softteleop/softteleop.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include <spdlog/spdlog.h>

#include "config.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "filtering.hpp"
#include "geometry.hpp"
#include "netio.hpp"
#include "observer.hpp"
#include "server.hpp"

using namespace softteleop;

struct st_config {
  config::AppConfig cfg;
};
struct st_observer {
  observer::Observer obs;
};
struct st_server {
  std::unique_ptr<server::Server> srv;
};
struct st_plant_server {
  std::unique_ptr<server::PlantServer> srv;
};
struct st_eval {
  std::vector<eval::Sample> samples;
  eval::ErrorReport report;
};

namespace {

thread_local std::string g_last_error;

st_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return ST_INVALID_ARGUMENT;
    case ErrorCode::parse_error: return ST_PARSE_ERROR;
    case ErrorCode::count_mismatch: return ST_COUNT_MISMATCH;
    case ErrorCode::no_estimate: return ST_NO_ESTIMATE;
    case ErrorCode::bad_message: return ST_BAD_MESSAGE;
    case ErrorCode::io_error: return ST_IO_ERROR;
  }
  return ST_INTERNAL;
}

template <typename F>
st_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return ST_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return ST_PARSE_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ST_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ST_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

extern "C" {

const char* st_last_error(void) { return g_last_error.c_str(); }

const char* st_version(void) { return "0.1.0"; }

void st_set_log_level(int level) {
  if (level < 0) level = 0;
  if (level > 6) level = 6;
  spdlog::set_level(static_cast<spdlog::level::level_enum>(level));
}

void st_string_free(char* s) { std::free(s); }

st_status st_config_default(st_config** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new st_config{config::default_config()};
  });
}

st_status st_config_load(const char* path, st_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "path and out are required");
    *out = new st_config{config::load_config_file(path)};
  });
}

st_status st_config_from_json(const char* json, st_config** out) {
  return guarded([&] {
    require(json != nullptr && out != nullptr, "json and out are required");
    auto cfg = config::config_from_json(nlohmann::json::parse(json));
    *out = new st_config{std::move(cfg)};
  });
}

st_status st_config_to_json(const st_config* cfg, char** out_json) {
  return guarded([&] {
    require(cfg != nullptr && out_json != nullptr, "cfg and out_json are required");
    *out_json = dup_string(config::config_to_json(cfg->cfg).dump(2));
  });
}

st_status st_config_set_seed(st_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    cfg->cfg.noise.seed = seed;
  });
}

st_status st_config_set_plant_mode(st_config* cfg, const char* mode) {
  return guarded([&] {
    require(cfg != nullptr && mode != nullptr, "cfg and mode are required");
    cfg->cfg.plant_mode = config::parse_plant_mode(mode);
  });
}

st_status st_config_set_period_ms(st_config* cfg, double period_ms) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    require(std::isfinite(period_ms) && period_ms >= 1.0, "period_ms must be at least 1");
    cfg->cfg.control.period_ms = period_ms;
  });
}

size_t st_config_module_count(const st_config* cfg) { return cfg ? cfg->cfg.modules.size() : 0; }

void st_config_free(st_config* cfg) { delete cfg; }

st_status st_forward_chain(const st_config* cfg, const st_reading* readings, size_t count, double ee_mm[3]) {
  return guarded([&] {
    require(cfg != nullptr && ee_mm != nullptr && (readings != nullptr || count == 0), "null argument");
    std::vector<geometry::ModuleReading> rs;
    for (size_t i = 0; i < count; ++i)
      rs.push_back({readings[i].h_mm, geometry::deg_to_rad(readings[i].phi_deg),
                    geometry::deg_to_rad(readings[i].theta_deg)});
    const geometry::RobotPose pose = geometry::forward_chain(cfg->cfg.modules, rs);
    ee_mm[0] = pose.end_effector.x;
    ee_mm[1] = pose.end_effector.y;
    ee_mm[2] = pose.end_effector.z;
  });
}

st_status st_kalman_filter(double q, double r, double x0, double p0, const double* z, size_t n, double* x_out,
                           double* p_out) {
  return guarded([&] {
    require(z != nullptr || n == 0, "z is null");
    const filtering::KalmanParams params{q, r, x0, p0};
    params.validate();
    filtering::KalmanState st{x0, p0};
    for (size_t i = 0; i < n; ++i) {
      st = filtering::kalman_step(st, params, z[i]);
      if (x_out) x_out[i] = st.x;
      if (p_out) p_out[i] = st.p;
    }
  });
}

st_status st_observer_new(const st_config* cfg, st_observer** out) {
  return guarded([&] {
    require(cfg != nullptr && out != nullptr, "cfg and out are required");
    *out = new st_observer{observer::Observer(cfg->cfg.modules, cfg->cfg.kalman)};
  });
}

st_status st_observer_ingest_line(st_observer* obs, const char* line, double ee_mm[3]) {
  return guarded([&] {
    require(obs != nullptr && line != nullptr, "obs and line are required");
    obs->obs.ingest(observer::parse_sensor_line(line));
    const geometry::RobotPose& pose = obs->obs.estimate();
    if (ee_mm) {
      ee_mm[0] = pose.end_effector.x;
      ee_mm[1] = pose.end_effector.y;
      ee_mm[2] = pose.end_effector.z;
    }
  });
}

void st_observer_free(st_observer* obs) { delete obs; }

st_status st_server_new(const st_config* cfg, const char* plant, const char* tcp_listen, const char* ws_listen,
                        st_server** out) {
  return guarded([&] {
    require(cfg != nullptr && plant != nullptr && tcp_listen != nullptr && out != nullptr, "null argument");
    server::ServerOptions opts;
    opts.tcp = net::parse_endpoint(tcp_listen);
    if (ws_listen)
      opts.websocket = net::parse_endpoint(ws_listen);
    else
      opts.websocket.reset();
    auto srv = std::make_unique<server::Server>(cfg->cfg, server::make_link(plant, cfg->cfg), opts);
    *out = new st_server{std::move(srv)};
  });
}

int st_server_tcp_port(const st_server* srv) { return srv ? srv->srv->tcp_port() : -1; }

int st_server_ws_port(const st_server* srv) { return srv ? srv->srv->websocket_port() : -1; }

st_status st_server_run(st_server* srv) {
  return guarded([&] {
    require(srv != nullptr, "srv is null");
    srv->srv->run();
  });
}

void st_server_request_stop(st_server* srv) {
  if (srv) srv->srv->request_stop();
}

void st_server_free(st_server* srv) { delete srv; }

st_status st_plant_server_new(const st_config* cfg, const char* listen, st_plant_server** out) {
  return guarded([&] {
    require(cfg != nullptr && listen != nullptr && out != nullptr, "null argument");
    *out = new st_plant_server{std::make_unique<server::PlantServer>(cfg->cfg, net::parse_endpoint(listen))};
  });
}

int st_plant_server_port(const st_plant_server* srv) { return srv ? srv->srv->port() : -1; }

st_status st_plant_server_run(st_plant_server* srv) {
  return guarded([&] {
    require(srv != nullptr, "srv is null");
    srv->srv->run();
  });
}

void st_plant_server_request_stop(st_plant_server* srv) {
  if (srv) srv->srv->request_stop();
}

void st_plant_server_free(st_plant_server* srv) { delete srv; }

st_status st_eval_run(const st_config* cfg, const char* trajectory, double duration_s, double period_ms,
                      st_eval** out) {
  return guarded([&] {
    require(cfg != nullptr && trajectory != nullptr && out != nullptr, "null argument");
    eval::TrajectorySpec traj = eval::load_trajectory(trajectory);
    if (duration_s > 0.0) traj.duration_s = duration_s;
    if (period_ms > 0.0) traj.sample_period_ms = period_ms;
    traj.validate();
    auto ev = std::make_unique<st_eval>();
    ev->samples = eval::run_eval(cfg->cfg, traj);
    ev->report = eval::build_report(ev->samples);
    *out = ev.release();
  });
}

size_t st_eval_sample_count(const st_eval* ev) { return ev ? ev->samples.size() : 0; }

st_status st_eval_row(const st_eval* ev, st_axis axis, st_error_row* out) {
  return guarded([&] {
    require(ev != nullptr && out != nullptr, "ev and out are required");
    const eval::ErrorRow* row = nullptr;
    switch (axis) {
      case ST_AXIS_X: row = &ev->report.x; break;
      case ST_AXIS_Y: row = &ev->report.y; break;
      case ST_AXIS_GLOBAL: row = &ev->report.global; break;
      case ST_AXIS_Z: row = &ev->report.z; break;
    }
    require(row != nullptr, "unknown axis");
    *out = {row->mae, row->rmse, row->std, row->max_mae, row->q1, row->q3};
  });
}

st_status st_eval_tilt_correlation(const st_eval* ev, double* out) {
  return guarded([&] {
    require(ev != nullptr && out != nullptr, "ev and out are required");
    std::vector<double> tilt, err;
    for (const auto& s : ev->samples) {
      tilt.push_back(s.tilt_rad);
      err.push_back(std::hypot(s.estimate.x - s.truth.x, s.estimate.y - s.truth.y));
    }
    *out = eval::rank_correlation(tilt, err);
  });
}

st_status st_eval_write_report(const st_eval* ev, const char* path) {
  return guarded([&] {
    require(ev != nullptr && path != nullptr, "ev and path are required");
    const std::string p(path);
    eval::emit_report(ev->report, ends_with(p, ".json") ? eval::ReportFormat::json : eval::ReportFormat::csv, p);
  });
}

st_status st_eval_write_samples(const st_eval* ev, const char* path) {
  return guarded([&] {
    require(ev != nullptr && path != nullptr, "ev and path are required");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::io_error, std::string("cannot open ") + path);
    f << eval::samples_csv(ev->samples);
    if (!f) throw Error(ErrorCode::io_error, std::string("write failed: ") + path);
  });
}

void st_eval_free(st_eval* ev) { delete ev; }

}  // extern "C"
