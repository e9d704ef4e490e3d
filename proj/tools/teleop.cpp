// Command-line front end: `serve`, `sim` and `eval`. Every option can also be
// set through a TELEOP_* environment variable.

#include <csignal>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "softteleop/softteleop.h"

namespace {

volatile std::sig_atomic_t g_signals = 0;
st_server* g_server = nullptr;
st_plant_server* g_plant = nullptr;

extern "C" void on_signal(int) {
  g_signals = 1;
  if (g_server) st_server_request_stop(g_server);
  if (g_plant) st_plant_server_request_stop(g_plant);
}

void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  std::signal(SIGPIPE, SIG_IGN);
}

int fail(const char* what) {
  std::fprintf(stderr, "teleop: %s: %s\n", what, st_last_error());
  return 1;
}

// Owns a config handle for the duration of a command.
struct ConfigHandle {
  st_config* cfg = nullptr;
  ~ConfigHandle() { st_config_free(cfg); }
};

bool load_config(const std::string& path, ConfigHandle& out) {
  const st_status rc = path.empty() ? st_config_default(&out.cfg) : st_config_load(path.c_str(), &out.cfg);
  return rc == ST_OK;
}

int log_level_from_name(const std::string& name) {
  static const char* names[] = {"trace", "debug", "info", "warn", "error", "critical", "off"};
  for (int i = 0; i < 7; ++i)
    if (name == names[i]) return i;
  return 2;
}

void print_row(const char* name, const st_error_row& r) {
  std::printf("%-7s %8.3f %8.3f %8.3f %8.3f %8.3f %8.3f\n", name, r.mae, r.rmse, r.std, r.max_mae, r.q1, r.q3);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft parallel robot teleoperation: service, simulated plant and evaluation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->envname("TELEOP_LOG_LEVEL")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  // serve
  auto* serve = app.add_subcommand("serve", "Run the teleoperation service");
  std::string serve_config;
  int port = 9000;
  int ws_port = 9001;
  bool no_ws = false;
  std::string bind = "0.0.0.0";
  std::string plant = "sim";
  serve->add_option("--config", serve_config, "Robot/service config (JSON); defaults built in")
      ->envname("TELEOP_CONFIG");
  serve->add_option("--port", port, "TCP port for newline-delimited JSON clients")
      ->envname("TELEOP_PORT")
      ->check(CLI::Range(0, 65535));
  serve->add_option("--ws-port", ws_port, "WebSocket port carrying the same messages")
      ->envname("TELEOP_WS_PORT")
      ->check(CLI::Range(0, 65535));
  serve->add_flag("--no-ws", no_ws, "Disable the WebSocket listener")->envname("TELEOP_NO_WS");
  serve->add_option("--bind", bind, "Listen address")->envname("TELEOP_BIND");
  serve->add_option("--plant", plant, "sim | tcp:<host>:<port>")->envname("TELEOP_PLANT");

  // sim
  auto* sim = app.add_subcommand("sim", "Run a simulated robot that a `serve --plant tcp:` can drive");
  std::string sim_config;
  std::string listen = "127.0.0.1:9100";
  std::optional<std::uint64_t> sim_seed;
  sim->add_option("--config", sim_config, "Robot config (JSON)")->envname("TELEOP_CONFIG");
  sim->add_option("--listen", listen, "host:port to accept controller connections on")->envname("TELEOP_LISTEN");
  sim->add_option("--seed", sim_seed, "Sensor noise seed")->envname("TELEOP_SEED");

  // eval
  auto* ev = app.add_subcommand("eval", "Compare observer estimates with simulated ground truth");
  std::string eval_config;
  std::string traj = "builtin:circle";
  double duration_s = 60.0;
  double period_ms = 100.0;
  std::uint64_t seed = 1;
  std::string mode = "chord";
  std::string out;
  std::string dump;
  ev->add_option("--config", eval_config, "Robot config (JSON)")->envname("TELEOP_CONFIG");
  ev->add_option("--traj", traj, "builtin:circle | builtin:lemniscate | trajectory JSON file")
      ->envname("TELEOP_TRAJ");
  ev->add_option("--duration-s", duration_s, "Run length in seconds")
      ->envname("TELEOP_DURATION_S")
      ->check(CLI::PositiveNumber);
  ev->add_option("--period-ms", period_ms, "Sampling period")->envname("TELEOP_PERIOD_MS")->check(CLI::Range(1.0, 1e6));
  ev->add_option("--seed", seed, "Sensor noise seed")->envname("TELEOP_SEED");
  ev->add_option("--mode", mode, "Plant model")->envname("TELEOP_MODE")->check(CLI::IsMember({"chord", "cc"}));
  ev->add_option("--out", out, "Report path (.csv or .json)")->envname("TELEOP_OUT")->required();
  ev->add_option("--dump", dump, "Per-sample CSV")->envname("TELEOP_DUMP");

  CLI11_PARSE(app, argc, argv);
  st_set_log_level(log_level_from_name(log_level));
  install_signal_handlers();

  if (serve->parsed()) {
    ConfigHandle cfg;
    if (!load_config(serve_config, cfg)) return fail("config");
    const std::string tcp_ep = bind + ":" + std::to_string(port);
    const std::string ws_ep = bind + ":" + std::to_string(ws_port);
    if (st_server_new(cfg.cfg, plant.c_str(), tcp_ep.c_str(), no_ws ? nullptr : ws_ep.c_str(), &g_server) != ST_OK)
      return fail("serve");
    if (g_signals) st_server_request_stop(g_server);
    const st_status rc = st_server_run(g_server);
    st_server* srv = g_server;
    g_server = nullptr;
    st_server_free(srv);
    return rc == ST_OK ? 0 : fail("serve");
  }

  if (sim->parsed()) {
    ConfigHandle cfg;
    if (!load_config(sim_config, cfg)) return fail("config");
    if (sim_seed && st_config_set_seed(cfg.cfg, *sim_seed) != ST_OK) return fail("seed");
    if (st_plant_server_new(cfg.cfg, listen.c_str(), &g_plant) != ST_OK) return fail("sim");
    if (g_signals) st_plant_server_request_stop(g_plant);
    const st_status rc = st_plant_server_run(g_plant);
    st_plant_server* srv = g_plant;
    g_plant = nullptr;
    st_plant_server_free(srv);
    return rc == ST_OK ? 0 : fail("sim");
  }

  ConfigHandle cfg;
  if (!load_config(eval_config, cfg)) return fail("config");
  if (st_config_set_seed(cfg.cfg, seed) != ST_OK || st_config_set_plant_mode(cfg.cfg, mode.c_str()) != ST_OK ||
      st_config_set_period_ms(cfg.cfg, period_ms) != ST_OK)
    return fail("eval options");
  st_eval* result = nullptr;
  if (st_eval_run(cfg.cfg, traj.c_str(), duration_s, period_ms, &result) != ST_OK) return fail("eval");
  int code = 0;
  if (st_eval_write_report(result, out.c_str()) != ST_OK) code = fail("report");
  if (code == 0 && !dump.empty() && st_eval_write_samples(result, dump.c_str()) != ST_OK) code = fail("dump");
  if (code == 0) {
    std::printf("%zu samples, mode %s, seed %llu\n", st_eval_sample_count(result), mode.c_str(),
                static_cast<unsigned long long>(seed));
    std::printf("%-7s %8s %8s %8s %8s %8s %8s\n", "metric", "mae", "rmse", "std", "max", "q1", "q3");
    const struct {
      st_axis axis;
      const char* name;
    } rows[] = {{ST_AXIS_X, "x"}, {ST_AXIS_Y, "y"}, {ST_AXIS_GLOBAL, "global"}, {ST_AXIS_Z, "z"}};
    for (const auto& r : rows) {
      st_error_row row{};
      if (st_eval_row(result, r.axis, &row) == ST_OK) print_row(r.name, row);
    }
  }
  st_eval_free(result);
  return code;
}
