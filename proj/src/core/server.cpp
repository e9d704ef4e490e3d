#include "server.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>

#include <spdlog/spdlog.h>

#include "error.hpp"
#include "websocket.hpp"

namespace softteleop::server {

namespace {

constexpr std::size_t kMaxClientBacklog = 4 * 1024 * 1024;
constexpr std::int64_t kReconnectMs = 1000;
constexpr int kStaleFactor = 5;

std::int64_t steady_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

void make_wake_pipe(int fds[2]) {
  if (::pipe2(fds, O_CLOEXEC | O_NONBLOCK) < 0) throw Error(ErrorCode::io_error, "pipe2 failed");
}

void drain_pipe(int fd) {
  char buf[64];
  while (::read(fd, buf, sizeof buf) > 0) {
  }
}

void close_pipe(int fds[2]) {
  for (int i = 0; i < 2; ++i)
    if (fds[i] >= 0) ::close(fds[i]);
}

void notify(int fd) {
  const char c = 'x';
  [[maybe_unused]] const ssize_t n = ::write(fd, &c, 1);
}

// Moves complete lines out of `buf`; returns false if an unterminated line
// grew past the protocol limit.
bool split_lines(std::string& buf, std::vector<std::string>& lines) {
  std::size_t start = 0;
  for (std::size_t nl; (nl = buf.find('\n', start)) != std::string::npos; start = nl + 1) {
    std::string line = buf.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  buf.erase(0, start);
  return buf.size() <= protocol::kMaxLineBytes;
}

}  // namespace

// ---------------------------------------------------------------- links ----

SimLink::SimLink(const config::AppConfig& cfg) : cfg_(cfg) { reconfigure(cfg.modules); }

void SimLink::reconfigure(const std::vector<ModuleSpec>& robot) {
  cfg_.modules = robot;
  plant_ = std::make_unique<plant::Plant>(robot, cfg_.noise, cfg_.plant_mode, cfg_.initial_h_mm, cfg_.tau_ms);
  pending_.clear();
}

void SimLink::tick(double period_ms, std::int64_t) {
  plant_->advance(period_ms);
  pending_.push_back(plant_->sensor_line());
}

void SimLink::send(const std::string& command_line) { plant_->handle_command_line(command_line); }

std::vector<std::string> SimLink::drain() { return std::exchange(pending_, {}); }

TcpLink::TcpLink(net::Endpoint endpoint, std::vector<int> layout)
    : endpoint_(std::move(endpoint)), layout_(std::move(layout)) {
  try_connect(steady_ms());
}

std::string TcpLink::describe() const { return "tcp:" + endpoint_.host + ":" + std::to_string(endpoint_.port); }

void TcpLink::try_connect(std::int64_t now_ms) {
  next_attempt_ms_ = now_ms + kReconnectMs;
  try {
    fd_ = net::connect_tcp(endpoint_);
    spdlog::info("plant link connected to {}", describe());
  } catch (const Error& e) {
    spdlog::warn("plant link: {}", e.what());
  }
}

void TcpLink::drop() {
  if (fd_.valid()) spdlog::warn("plant link to {} lost", describe());
  fd_.reset();
  in_.clear();
  out_.clear();
}

void TcpLink::tick(double, std::int64_t now_ms) {
  if (!fd_.valid() && now_ms >= next_attempt_ms_) try_connect(now_ms);
}

void TcpLink::send(const std::string& command_line) {
  if (!fd_.valid()) return;
  out_ += command_line;
  if (command_line.empty() || command_line.back() != '\n') out_ += '\n';
  on_ready();
}

void TcpLink::on_ready() {
  if (!fd_.valid()) return;
  if (!net::read_available(fd_.get(), in_)) {
    drop();
    return;
  }
  if (!split_lines(in_, lines_)) {
    spdlog::warn("plant link: oversize line, reconnecting");
    drop();
    return;
  }
  const long n = net::write_some(fd_.get(), out_);
  if (n < 0) {
    drop();
    return;
  }
  out_.erase(0, static_cast<std::size_t>(n));
}

std::vector<std::string> TcpLink::drain() { return std::exchange(lines_, {}); }

std::unique_ptr<PlantLink> make_link(const std::string& plant_arg, const config::AppConfig& cfg) {
  if (plant_arg == "sim") return std::make_unique<SimLink>(cfg);
  if (plant_arg.rfind("tcp:", 0) == 0) {
    std::vector<int> layout;
    for (const auto& m : cfg.modules) layout.push_back(m.actuator_count);
    return std::make_unique<TcpLink>(net::parse_endpoint(plant_arg.substr(4), "127.0.0.1"), std::move(layout));
  }
  throw Error(ErrorCode::invalid_argument, "plant must be 'sim' or 'tcp:<host>:<port>', got '" + plant_arg + "'");
}

// ----------------------------------------------------------------- core ----

TeleopCore::TeleopCore(config::AppConfig cfg, std::unique_ptr<PlantLink> link)
    : cfg_(std::move(cfg)), link_(std::move(link)), observer_(cfg_.modules, cfg_.kalman) {
  cfg_.validate();
}

protocol::SessionContext TeleopCore::context_for(std::uint64_t session) const {
  return {cfg_.modules, !authority_ || *authority_ == session, link_->fixed_layout()};
}

void TeleopCore::apply(std::uint64_t session, const protocol::Effect& effect) {
  using protocol::EffectKind;
  switch (effect.kind) {
    case EffectKind::apply_config:
      cfg_.modules = effect.robot;
      observer_ = observer::Observer(cfg_.modules, cfg_.kalman);
      controller_.reset();
      last_arrival_ms_.reset();
      link_->reconfigure(cfg_.modules);
      spdlog::info("session {} configured a {}-module robot", session, cfg_.modules.size());
      break;
    case EffectKind::acquire_authority:
      authority_ = session;
      break;
    case EffectKind::release_authority:
      if (authority_ == session) authority_.reset();
      break;
    case EffectKind::start_move:
      controller_ = std::make_unique<controller::MotionController>(cfg_.modules, cfg_.control.gains,
                                                                   cfg_.control.settings());
      controller_->start(effect.target);
      motion_owner_ = session;
      break;
    case EffectKind::stop_move:
      if (controller_ && motion_owner_ == session) controller_->stop();
      break;
  }
}

void TeleopCore::ingest(const std::string& line, std::int64_t now_ms) {
  observer::SensorFrame frame;
  try {
    frame = observer::parse_sensor_line(line);
  } catch (const Error&) {
    ++rejected_lines_;
    return;
  }
  if (frame.readings.size() != cfg_.modules.size()) {
    ++rejected_lines_;
    return;
  }
  try {
    observer_.ingest(frame);
  } catch (const Error&) {
    // Timestamps went backwards: the plant restarted.
    observer_ = observer::Observer(cfg_.modules, cfg_.kalman);
    observer_.ingest(frame);
  }
  try {
    observer_.estimate();
  } catch (const Error&) {
    ++rejected_lines_;
    return;
  }
  last_arrival_ms_ = now_ms;
}

std::optional<MotionEnd> TeleopCore::tick(std::int64_t now_ms) {
  const double period = cfg_.control.period_ms;
  link_->tick(period, now_ms);
  for (const std::string& line : link_->drain()) ingest(line, now_ms);

  if (!moving()) return std::nullopt;
  const bool stale = !last_arrival_ms_ || now_ms - *last_arrival_ms_ > kStaleFactor * period;
  const geometry::RobotPose* estimate = stale ? nullptr : &*observer_.last_pose();
  const controller::ControlUpdate upd = controller_->update(estimate, observer_.filtered());
  if (upd.command_mm) link_->send(observer::format_command_line(*upd.command_mm));
  if (upd.outcome == controller::Outcome::running) return std::nullopt;
  controller_->stop();
  return MotionEnd{motion_owner_, upd.outcome, upd.unreachable};
}

Snapshot TeleopCore::snapshot(std::int64_t now_ms) const {
  Snapshot s;
  s.t_ms = now_ms;
  s.stale = !last_arrival_ms_ || now_ms - *last_arrival_ms_ > kStaleFactor * cfg_.control.period_ms;
  const auto& pose = observer_.last_pose();
  const auto& filtered = observer_.filtered();
  if (pose && pose->modules.size() == cfg_.modules.size() && filtered.size() == cfg_.modules.size()) {
    for (std::size_t i = 0; i < filtered.size(); ++i)
      s.modules.push_back({geometry::rad_to_deg(filtered[i].phi_rad), geometry::rad_to_deg(filtered[i].theta_rad),
                           filtered[i].h_mm, pose->modules[i].actuator_lengths_mm});
    s.ee_mm = {pose->end_effector.x, pose->end_effector.y, pose->end_effector.z};
  } else {
    for (const auto& m : cfg_.modules)
      s.modules.push_back({0.0, 0.0, 0.0, std::vector<double>(static_cast<std::size_t>(m.actuator_count), 0.0)});
  }
  return s;
}

protocol::State make_state(const Snapshot& snap, std::uint64_t seq, int fsm) {
  return {seq, snap.t_ms, fsm, snap.modules, snap.ee_mm, snap.stale};
}

// --------------------------------------------------------------- server ----

struct Server::Client {
  std::uint64_t id = 0;
  net::Fd fd;
  bool websocket = false;
  bool upgraded = false;
  ws::Connection ws;
  std::string raw;  // websocket bytes before the handshake completes
  std::string in;
  std::string out;
  protocol::SessionState session;
  std::uint64_t seq = 0;
  bool discarding = false;  // inside an oversize line
  bool closing = false;     // close once `out` drains
  bool dead = false;

  bool ready() const { return !dead && !closing && (!websocket || upgraded); }
};

Server::Server(config::AppConfig cfg, std::unique_ptr<PlantLink> link, ServerOptions options)
    : core_(std::move(cfg), std::move(link)) {
  tcp_listener_ = net::listen_tcp(options.tcp);
  tcp_port_ = net::bound_port(tcp_listener_);
  if (options.websocket) {
    ws_listener_ = net::listen_tcp(*options.websocket);
    ws_port_ = net::bound_port(ws_listener_);
  }
  make_wake_pipe(wake_pipe_);
}

Server::~Server() { close_pipe(wake_pipe_); }

void Server::request_stop() {
  stop_.store(true);
  notify(wake_pipe_[1]);
}

void Server::accept_clients(int listen_fd, bool websocket) {
  while (true) {
    const int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
    if (fd < 0) return;
    auto c = std::make_unique<Client>();
    c->id = next_client_id_++;
    c->fd.reset(fd);
    c->websocket = websocket;
    spdlog::info("session {} connected ({})", c->id, websocket ? "websocket" : "tcp");
    clients_.push_back(std::move(c));
  }
}

void Server::send(Client& c, const protocol::Message& msg) {
  if (!c.ready()) return;
  std::string line = protocol::encode(msg);
  line += '\n';
  if (c.websocket)
    c.out += ws::encode_frame(ws::Opcode::text, line);
  else
    c.out += line;
  if (c.out.size() > kMaxClientBacklog) {
    spdlog::warn("session {} is not reading; dropping it", c.id);
    c.dead = true;
  }
}

void Server::process_line(Client& c, std::string_view line) {
  protocol::HandleResult res = protocol::handle_line(c.session, line, core_.context_for(c.id));
  c.session = res.session;
  for (const protocol::Effect& e : res.effects) {
    try {
      core_.apply(c.id, e);
    } catch (const Error& err) {
      spdlog::error("session {}: {}", c.id, err.what());
    }
  }
  for (const protocol::Message& m : res.replies) send(c, m);
}

void Server::service_client(Client& c, bool readable, bool writable) {
  if (readable && !c.closing) {
    std::string bytes;
    const bool open = net::read_available(c.fd.get(), bytes);
    if (c.websocket) {
      std::string data = std::move(bytes);
      if (!c.upgraded) {
        c.raw += data;
        data.clear();
        const ws::Handshake hs = ws::parse_handshake(c.raw);
        if (hs.status == ws::Handshake::Status::rejected) {
          c.out += hs.response;
          c.closing = true;
        } else if (hs.status == ws::Handshake::Status::ok) {
          c.out += hs.response;
          c.upgraded = true;
          data = c.raw.substr(hs.consumed);
          c.raw.clear();
        }
      }
      if (c.upgraded && !data.empty()) {
        std::string reply;
        if (!c.ws.feed(data, c.in, reply)) c.closing = true;
        c.out += reply;
      }
    } else {
      c.in += bytes;
    }

    std::size_t start = 0;
    for (std::size_t nl; (nl = c.in.find('\n', start)) != std::string::npos; start = nl + 1) {
      if (c.discarding) {
        c.discarding = false;
        continue;
      }
      std::string_view line(c.in.data() + start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) process_line(c, line);
    }
    c.in.erase(0, start);
    if (c.in.size() > protocol::kMaxLineBytes) {
      if (!c.discarding) send(c, protocol::ErrorMsg{"bad_message", "line exceeds 64 KiB"});
      c.discarding = true;
      c.in.clear();
    }
    if (!open) c.dead = true;
  }
  if ((writable || !c.out.empty()) && !c.dead) {
    const long n = net::write_some(c.fd.get(), c.out);
    if (n < 0)
      c.dead = true;
    else
      c.out.erase(0, static_cast<std::size_t>(n));
  }
  if (c.closing && c.out.empty()) c.dead = true;
}

void Server::broadcast(const Snapshot& snap) {
  for (auto& c : clients_) {
    if (!c->ready()) continue;
    send(*c, make_state(snap, c->seq++, c->session.fsm));
    service_client(*c, false, true);
  }
}

void Server::drop_closed() {
  for (auto it = clients_.begin(); it != clients_.end();) {
    Client& c = **it;
    if (!c.dead) {
      ++it;
      continue;
    }
    for (const protocol::Effect& e : protocol::disconnect_effects(c.session)) core_.apply(c.id, e);
    spdlog::info("session {} disconnected", c.id);
    it = clients_.erase(it);
  }
}

void Server::flush_all(int budget_ms) {
  const std::int64_t deadline = steady_ms() + budget_ms;
  while (steady_ms() < deadline) {
    std::vector<pollfd> fds;
    std::vector<Client*> owners;
    for (auto& c : clients_) {
      if (c->dead || c->out.empty()) continue;
      fds.push_back({c->fd.get(), POLLOUT, 0});
      owners.push_back(c.get());
    }
    if (fds.empty()) return;
    ::poll(fds.data(), fds.size(), static_cast<int>(std::max<std::int64_t>(1, deadline - steady_ms())));
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].revents & (POLLERR | POLLHUP | POLLNVAL)) owners[i]->dead = true;
      if (fds[i].revents & POLLOUT) service_client(*owners[i], false, true);
    }
  }
}

void Server::run() {
  const auto period = static_cast<std::int64_t>(core_.config().control.period_ms);
  start_ms_ = steady_ms();
  std::int64_t next_tick = start_ms_;
  spdlog::info("serving on tcp {} and websocket {} (plant {})", tcp_port_, ws_port_, core_.link().describe());

  while (!stop_.load()) {
    std::vector<pollfd> fds;
    fds.push_back({wake_pipe_[0], POLLIN, 0});
    fds.push_back({tcp_listener_.get(), POLLIN, 0});
    fds.push_back({ws_listener_.valid() ? ws_listener_.get() : -1, POLLIN, 0});
    const int link_fd = core_.link().poll_fd();
    fds.push_back({link_fd, static_cast<short>(POLLIN | (core_.link().wants_write() ? POLLOUT : 0)), 0});
    const std::size_t first_client = fds.size();
    for (auto& c : clients_)
      fds.push_back({c->fd.get(), static_cast<short>(POLLIN | (c->out.empty() ? 0 : POLLOUT)), 0});

    const std::int64_t wait = std::clamp<std::int64_t>(next_tick - steady_ms(), 0, period);
    if (::poll(fds.data(), fds.size(), static_cast<int>(wait)) < 0 && errno != EINTR)
      throw Error(ErrorCode::io_error, "poll failed");

    if (fds[0].revents & POLLIN) drain_pipe(wake_pipe_[0]);
    if (stop_.load()) break;
    if (fds[1].revents & POLLIN) accept_clients(tcp_listener_.get(), false);
    if (fds[2].revents & POLLIN) accept_clients(ws_listener_.get(), true);
    if (link_fd >= 0 && fds[3].revents) core_.link().on_ready();
    for (std::size_t i = first_client; i < fds.size(); ++i) {
      Client& c = *clients_[i - first_client];
      const short ev = fds[i].revents;
      if (ev & POLLNVAL) {
        c.dead = true;
        continue;
      }
      if (ev) service_client(c, ev & (POLLIN | POLLHUP | POLLERR), ev & POLLOUT);
    }

    const std::int64_t now = steady_ms();
    if (now >= next_tick) {
      const std::int64_t t = now - start_ms_;
      if (const auto end = core_.tick(t)) {
        for (auto& c : clients_) {
          if (c->id != end->session) continue;
          protocol::HandleResult res = protocol::finish_motion(c->session, end->outcome, end->unreachable);
          c->session = res.session;
          for (const auto& m : res.replies) send(*c, m);
        }
      }
      broadcast(core_.snapshot(t));
      next_tick += period;
      if (next_tick <= now) next_tick = now + period;
    }
    drop_closed();
  }

  for (auto& c : clients_) {
    for (const protocol::Effect& e : protocol::disconnect_effects(c->session)) core_.apply(c->id, e);
  }
  broadcast(core_.snapshot(steady_ms() - start_ms_));
  flush_all(500);
  clients_.clear();
  spdlog::info("server stopped");
}

// --------------------------------------------------------- plant server ----

PlantServer::PlantServer(config::AppConfig cfg, net::Endpoint listen)
    : cfg_(std::move(cfg)),
      plant_(cfg_.modules, cfg_.noise, cfg_.plant_mode, cfg_.initial_h_mm, cfg_.tau_ms) {
  cfg_.validate();
  listener_ = net::listen_tcp(listen);
  port_ = net::bound_port(listener_);
  make_wake_pipe(wake_pipe_);
}

PlantServer::~PlantServer() { close_pipe(wake_pipe_); }

void PlantServer::request_stop() {
  stop_.store(true);
  notify(wake_pipe_[1]);
}

void PlantServer::run() {
  struct Peer {
    net::Fd fd;
    std::string in;
    std::string out;
    bool dead = false;
  };
  std::vector<Peer> peers;
  const auto period = static_cast<std::int64_t>(cfg_.control.period_ms);
  std::int64_t next_tick = steady_ms() + period;
  spdlog::info("simulated plant listening on {} ({} modules, {})", port_, cfg_.modules.size(),
               config::plant_mode_name(cfg_.plant_mode));

  while (!stop_.load()) {
    std::vector<pollfd> fds{{wake_pipe_[0], POLLIN, 0}, {listener_.get(), POLLIN, 0}};
    for (auto& p : peers) fds.push_back({p.fd.get(), static_cast<short>(POLLIN | (p.out.empty() ? 0 : POLLOUT)), 0});
    const std::int64_t wait = std::clamp<std::int64_t>(next_tick - steady_ms(), 0, period);
    if (::poll(fds.data(), fds.size(), static_cast<int>(wait)) < 0 && errno != EINTR)
      throw Error(ErrorCode::io_error, "poll failed");
    if (fds[0].revents & POLLIN) drain_pipe(wake_pipe_[0]);
    if (stop_.load()) break;
    if (fds[1].revents & POLLIN) {
      for (int fd; (fd = ::accept4(listener_.get(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC)) >= 0;) {
        peers.push_back({net::Fd(fd), {}, {}, false});
        spdlog::info("controller connected");
      }
    }
    for (std::size_t i = 2; i < fds.size(); ++i) {
      Peer& p = peers[i - 2];
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      if (!net::read_available(p.fd.get(), p.in)) p.dead = true;
      std::vector<std::string> lines;
      if (!split_lines(p.in, lines)) p.dead = true;
      for (const auto& line : lines) {
        try {
          plant_.handle_command_line(line);
        } catch (const Error& e) {
          spdlog::warn("ignored command '{}': {}", line.substr(0, 80), e.what());
        }
      }
    }

    const std::int64_t now = steady_ms();
    if (now >= next_tick) {
      plant_.advance(static_cast<double>(period));
      std::string line = plant_.sensor_line();
      if (line.empty() || line.back() != '\n') line += '\n';
      for (auto& p : peers) p.out += line;
      next_tick += period;
      if (next_tick <= now) next_tick = now + period;
    }
    for (auto& p : peers) {
      if (p.dead || p.out.empty()) continue;
      const long n = net::write_some(p.fd.get(), p.out);
      if (n < 0 || p.out.size() > kMaxClientBacklog)
        p.dead = true;
      else
        p.out.erase(0, static_cast<std::size_t>(n));
    }
    std::erase_if(peers, [](const Peer& p) { return p.dead; });
  }
  spdlog::info("simulated plant stopped");
}

}  // namespace softteleop::server
