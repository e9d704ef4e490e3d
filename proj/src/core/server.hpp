#pragma once

// Teleoperation service. One event loop owns the core (plant link, observer,
// controller); connection sessions only exchange messages and effects with
// it. Clients speak newline-delimited JSON over raw TCP or over WebSocket
// text frames.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "controller.hpp"
#include "netio.hpp"
#include "observer.hpp"
#include "plant.hpp"
#include "protocol.hpp"

namespace softteleop::server {

using geometry::ModuleSpec;

/// Transport to the robot (simulated in-process or remote over TCP).
class PlantLink {
 public:
  virtual ~PlantLink() = default;
  /// Start of a sampling period.
  virtual void tick(double period_ms, std::int64_t now_ms) = 0;
  virtual void send(const std::string& command_line) = 0;
  /// Sensor lines received since the previous call.
  virtual std::vector<std::string> drain() = 0;
  /// The robot was reconfigured by a client.
  virtual void reconfigure(const std::vector<ModuleSpec>& robot) = 0;
  /// Actuators per module the link can carry; empty = any layout.
  virtual std::vector<int> fixed_layout() const { return {}; }
  /// Descriptor to watch for reads, or -1.
  virtual int poll_fd() const { return -1; }
  virtual bool wants_write() const { return false; }
  virtual void on_ready() {}
  virtual std::string describe() const = 0;
};

/// In-process plant stepped by the server clock.
class SimLink final : public PlantLink {
 public:
  explicit SimLink(const config::AppConfig& cfg);
  void tick(double period_ms, std::int64_t now_ms) override;
  void send(const std::string& command_line) override;
  std::vector<std::string> drain() override;
  void reconfigure(const std::vector<ModuleSpec>& robot) override;
  std::string describe() const override { return "sim"; }
  const plant::Plant& plant() const { return *plant_; }

 private:
  config::AppConfig cfg_;
  std::unique_ptr<plant::Plant> plant_;
  std::vector<std::string> pending_;
};

/// Remote plant speaking the S/C line protocol. Reconnects once a second
/// while the connection is down.
class TcpLink final : public PlantLink {
 public:
  TcpLink(net::Endpoint endpoint, std::vector<int> layout);
  void tick(double period_ms, std::int64_t now_ms) override;
  void send(const std::string& command_line) override;
  std::vector<std::string> drain() override;
  void reconfigure(const std::vector<ModuleSpec>&) override {}
  std::vector<int> fixed_layout() const override { return layout_; }
  int poll_fd() const override { return fd_.get(); }
  bool wants_write() const override { return !out_.empty(); }
  void on_ready() override;
  std::string describe() const override;
  bool connected() const { return fd_.valid(); }

 private:
  void try_connect(std::int64_t now_ms);
  void drop();

  net::Endpoint endpoint_;
  std::vector<int> layout_;
  net::Fd fd_;
  std::string in_;
  std::string out_;
  std::vector<std::string> lines_;
  std::int64_t next_attempt_ms_ = 0;
};

/// "sim" or "tcp:<host>:<port>".
std::unique_ptr<PlantLink> make_link(const std::string& plant_arg, const config::AppConfig& cfg);

/// Shared part of a state broadcast; per-connection seq and fsm are added by
/// the sender.
struct Snapshot {
  std::int64_t t_ms = 0;
  std::vector<protocol::ModuleState> modules;
  std::array<double, 3> ee_mm{};
  bool stale = true;
};

struct MotionEnd {
  std::uint64_t session = 0;
  controller::Outcome outcome = controller::Outcome::stopped;
  bool unreachable = false;
};

class TeleopCore {
 public:
  TeleopCore(config::AppConfig cfg, std::unique_ptr<PlantLink> link);

  const std::vector<ModuleSpec>& robot() const { return cfg_.modules; }
  const config::AppConfig& config() const { return cfg_; }
  PlantLink& link() { return *link_; }

  protocol::SessionContext context_for(std::uint64_t session) const;
  void apply(std::uint64_t session, const protocol::Effect& effect);

  /// One sampling period: pull sensor data, update the estimate, run the
  /// controller. Returns the end of a motion when it happens this period.
  std::optional<MotionEnd> tick(std::int64_t now_ms);

  Snapshot snapshot(std::int64_t now_ms) const;

  std::optional<std::uint64_t> authority() const { return authority_; }
  bool moving() const { return controller_ && controller_->active(); }
  std::uint64_t rejected_lines() const { return rejected_lines_; }

 private:
  void ingest(const std::string& line, std::int64_t now_ms);

  config::AppConfig cfg_;
  std::unique_ptr<PlantLink> link_;
  observer::Observer observer_;
  std::unique_ptr<controller::MotionController> controller_;
  std::optional<std::uint64_t> authority_;
  std::uint64_t motion_owner_ = 0;
  std::optional<std::int64_t> last_arrival_ms_;
  std::uint64_t rejected_lines_ = 0;
};

/// Builds the per-connection state message.
protocol::State make_state(const Snapshot& snap, std::uint64_t seq, int fsm);

struct ServerOptions {
  net::Endpoint tcp{"0.0.0.0", 9000};
  std::optional<net::Endpoint> websocket = net::Endpoint{"0.0.0.0", 9001};
};

class Server {
 public:
  /// Binds both listeners; throws Error(io_error) if either port is taken.
  Server(config::AppConfig cfg, std::unique_ptr<PlantLink> link, ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int tcp_port() const { return tcp_port_; }
  int websocket_port() const { return ws_port_; }

  /// Serves until request_stop(); flushes a final state message to every
  /// client before returning.
  void run();

  /// Async-signal-safe.
  void request_stop();

 private:
  struct Client;

  void accept_clients(int listen_fd, bool websocket);
  void service_client(Client& c, bool readable, bool writable);
  void process_line(Client& c, std::string_view line);
  void send(Client& c, const protocol::Message& msg);
  void broadcast(const Snapshot& snap);
  void flush_all(int budget_ms);
  void drop_closed();

  TeleopCore core_;
  net::Fd tcp_listener_;
  net::Fd ws_listener_;
  int tcp_port_ = 0;
  int ws_port_ = 0;
  int wake_pipe_[2] = {-1, -1};
  std::atomic<bool> stop_{false};
  std::vector<std::unique_ptr<Client>> clients_;
  std::uint64_t next_client_id_ = 1;
  std::int64_t start_ms_ = 0;
};

/// Stand-alone simulated robot for `--plant tcp:`: streams S lines every
/// period to every connected client and applies C lines it receives.
class PlantServer {
 public:
  PlantServer(config::AppConfig cfg, net::Endpoint listen);
  ~PlantServer();
  PlantServer(const PlantServer&) = delete;
  PlantServer& operator=(const PlantServer&) = delete;

  int port() const { return port_; }
  void run();
  void request_stop();

 private:
  config::AppConfig cfg_;
  plant::Plant plant_;
  net::Fd listener_;
  int port_ = 0;
  int wake_pipe_[2] = {-1, -1};
  std::atomic<bool> stop_{false};
};

}  // namespace softteleop::server
