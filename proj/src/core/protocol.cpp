#include "protocol.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "observer.hpp"

namespace softteleop::protocol {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::bad_message, what); }

double wire(double v) { return observer::quantize(v); }

json spec_json(const std::vector<ModuleSpec>& robot) {
  json modules = json::array();
  for (const ModuleSpec& m : robot)
    modules.push_back({{"actuators", m.actuator_count},
                       {"radius_mm", wire(m.radius_mm)},
                       {"plate_offset_mm", wire(m.plate_offset_mm)},
                       {"min_len_mm", wire(m.min_len_mm)},
                       {"max_len_mm", wire(m.max_len_mm)},
                       {"tilt_limit_deg", wire(m.tilt_limit_deg)}});
  return {{"modules", modules}};
}

json vec3_json(const std::array<double, 3>& v) { return json::array({wire(v[0]), wire(v[1]), wire(v[2])}); }

const json& field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_number()) bad(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

template <typename Int>
Int integer(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_number_integer()) bad(std::string("field '") + key + "' must be an integer");
  if constexpr (std::is_unsigned_v<Int>) {
    if (v.is_number_unsigned()) return v.get<Int>();
    if (v.get<std::int64_t>() < 0) bad(std::string("field '") + key + "' must be non-negative");
  }
  return v.get<Int>();
}

std::string text(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_string()) bad(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::array<double, 3> vec3(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_array() || v.size() != 3) bad(std::string("field '") + key + "' must be an array of 3 numbers");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) bad(std::string("field '") + key + "' must be an array of 3 numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

std::vector<ModuleSpec> robot_spec(const json& obj) {
  const json& spec = field(obj, "robot_spec");
  if (!spec.is_object()) bad("robot_spec must be an object");
  const json& modules = field(spec, "modules");
  if (!modules.is_array()) bad("robot_spec.modules must be an array");
  std::vector<ModuleSpec> out;
  for (const json& m : modules) {
    if (!m.is_object()) bad("robot_spec.modules entries must be objects");
    ModuleSpec s;
    s.actuator_count = integer<int>(m, "actuators");
    s.radius_mm = number(m, "radius_mm");
    s.plate_offset_mm = number(m, "plate_offset_mm");
    s.min_len_mm = number(m, "min_len_mm");
    s.max_len_mm = number(m, "max_len_mm");
    s.tilt_limit_deg = number(m, "tilt_limit_deg");
    out.push_back(s);
  }
  return out;
}

struct Encoder {
  json operator()(const Hello& m) const { return {{"type", "hello"}, {"version", m.version}}; }
  json operator()(const Welcome& m) const { return {{"type", "welcome"}, {"robot_spec", spec_json(m.robot_spec)}}; }
  json operator()(const Config& m) const { return {{"type", "config"}, {"robot_spec", spec_json(m.robot_spec)}}; }
  json operator()(const Lock&) const { return {{"type", "lock"}}; }
  json operator()(const Unlock&) const { return {{"type", "unlock"}}; }
  json operator()(const Target& m) const {
    return {{"type", "target"}, {"module", m.module}, {"pos_mm", vec3_json(m.pos_mm)}};
  }
  json operator()(const Move&) const { return {{"type", "move"}}; }
  json operator()(const Stop&) const { return {{"type", "stop"}}; }
  json operator()(const State& m) const {
    json modules = json::array();
    for (const ModuleState& s : m.modules) {
      json lengths = json::array();
      for (double l : s.lengths_mm) lengths.push_back(wire(l));
      modules.push_back({{"phi_deg", wire(s.phi_deg)},
                         {"theta_deg", wire(s.theta_deg)},
                         {"h_mm", wire(s.h_mm)},
                         {"lengths_mm", lengths}});
    }
    return {{"type", "state"}, {"seq", m.seq},         {"t_ms", m.t_ms},   {"fsm", m.fsm},
            {"modules", modules}, {"ee_mm", vec3_json(m.ee_mm)}, {"stale", m.stale}};
  }
  json operator()(const Ack& m) const { return {{"type", "ack"}, {"ref", m.ref}}; }
  json operator()(const ErrorMsg& m) const { return {{"type", "error"}, {"code", m.code}, {"detail", m.detail}}; }
};

ErrorMsg error_reply(std::string code, std::string detail) { return {std::move(code), std::move(detail)}; }

}  // namespace

std::string encode(const Message& msg) { return std::visit(Encoder{}, msg).dump(); }

std::string_view type_name(const Message& msg) {
  static constexpr std::string_view kNames[] = {"hello", "welcome", "config", "lock",  "unlock", "target",
                                                "move",  "stop",    "state",  "ack",   "error"};
  return kNames[msg.index()];
}

Message decode(std::string_view line) {
  if (line.size() > kMaxLineBytes) bad("message exceeds 64 KiB");
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) bad("invalid JSON");
  if (!j.is_object()) bad("message must be a JSON object");
  const std::string type = text(j, "type");

  if (type == "hello") return Hello{integer<int>(j, "version")};
  if (type == "welcome") return Welcome{robot_spec(j)};
  if (type == "config") return Config{robot_spec(j)};
  if (type == "lock") return Lock{};
  if (type == "unlock") return Unlock{};
  if (type == "target") return Target{integer<int>(j, "module"), vec3(j, "pos_mm")};
  if (type == "move") return Move{};
  if (type == "stop") return Stop{};
  if (type == "ack") return Ack{text(j, "ref")};
  if (type == "error") return ErrorMsg{text(j, "code"), text(j, "detail")};
  if (type == "state") {
    State s;
    s.seq = integer<std::uint64_t>(j, "seq");
    s.t_ms = integer<std::int64_t>(j, "t_ms");
    s.fsm = integer<int>(j, "fsm");
    const json& modules = field(j, "modules");
    if (!modules.is_array()) bad("field 'modules' must be an array");
    for (const json& m : modules) {
      if (!m.is_object()) bad("state module entries must be objects");
      ModuleState ms{number(m, "phi_deg"), number(m, "theta_deg"), number(m, "h_mm"), {}};
      const json& lengths = field(m, "lengths_mm");
      if (!lengths.is_array()) bad("field 'lengths_mm' must be an array");
      for (const json& l : lengths) {
        if (!l.is_number()) bad("field 'lengths_mm' must hold numbers");
        ms.lengths_mm.push_back(l.get<double>());
      }
      s.modules.push_back(std::move(ms));
    }
    s.ee_mm = vec3(j, "ee_mm");
    const json& stale = field(j, "stale");
    if (!stale.is_boolean()) bad("field 'stale' must be a boolean");
    s.stale = stale.get<bool>();
    return s;
  }
  bad("unknown message type '" + type + "'");
}

HandleResult handle_message(const SessionState& session, const Message& msg, const SessionContext& ctx) {
  HandleResult out{session, {}, {}};
  SessionState& s = out.session;
  auto reject = [&](const char* code, std::string detail) {
    out.session = session;
    out.effects.clear();
    out.replies = {error_reply(code, std::move(detail))};
    return out;
  };
  auto wrong_state = [&](std::string_view what) {
    return reject("bad_state", std::string(what) + " not allowed in state " + std::to_string(session.fsm));
  };

  if (std::holds_alternative<Hello>(msg)) {
    out.replies.push_back(Welcome{ctx.robot});
    return out;
  }
  if (const auto* cfg = std::get_if<Config>(&msg)) {
    if (s.fsm > 1) return wrong_state("config");
    if (!ctx.authority_free) return reject("busy", "another operator controls the robot");
    if (cfg->robot_spec.empty()) return reject("bad_spec", "robot needs at least one module");
    for (std::size_t i = 0; i < cfg->robot_spec.size(); ++i) {
      try {
        cfg->robot_spec[i].validate();
      } catch (const Error& e) {
        return reject("bad_spec", "module " + std::to_string(i) + ": " + e.what());
      }
    }
    if (!ctx.fixed_layout.empty()) {
      bool same = ctx.fixed_layout.size() == cfg->robot_spec.size();
      for (std::size_t i = 0; same && i < cfg->robot_spec.size(); ++i)
        same = cfg->robot_spec[i].actuator_count == ctx.fixed_layout[i];
      if (!same) return reject("bad_spec", "the connected plant has a different module/actuator layout");
    }
    s.fsm = 1;
    s.configured = true;
    out.effects.push_back({EffectKind::apply_config, cfg->robot_spec, {}});
    out.replies.push_back(Ack{"config"});
    return out;
  }
  if (std::holds_alternative<Lock>(msg)) {
    if (s.fsm != 1) return wrong_state("lock");
    if (!ctx.authority_free) return reject("not_authorized", "another operator holds control authority");
    s.fsm = 2;
    s.has_authority = true;
    out.effects.push_back({EffectKind::acquire_authority, {}, {}});
    out.replies.push_back(Ack{"lock"});
    return out;
  }
  if (std::holds_alternative<Unlock>(msg)) {
    if (s.fsm != 2) return wrong_state("unlock");
    s.fsm = 1;
    s.has_authority = false;
    s.pending_target.reset();
    out.effects.push_back({EffectKind::release_authority, {}, {}});
    out.replies.push_back(Ack{"unlock"});
    return out;
  }
  if (const auto* t = std::get_if<Target>(&msg)) {
    if (s.fsm != 2) return wrong_state("target");
    const controller::TargetCommand cmd{t->module, {t->pos_mm[0], t->pos_mm[1], t->pos_mm[2]}};
    try {
      controller::validate_target(ctx.robot, cmd);
    } catch (const Error& e) {
      return reject("bad_target", e.what());
    }
    s.pending_target = cmd;
    out.replies.push_back(Ack{"target"});
    return out;
  }
  if (std::holds_alternative<Move>(msg)) {
    if (s.fsm != 2) return wrong_state("move");
    if (!s.pending_target) return reject("no_target", "set a target before move");
    s.fsm = 3;
    out.effects.push_back({EffectKind::start_move, {}, *s.pending_target});
    out.replies.push_back(Ack{"move"});
    return out;
  }
  if (std::holds_alternative<Stop>(msg)) {
    if (s.fsm != 3) return wrong_state("stop");
    s.fsm = 2;
    out.effects.push_back({EffectKind::stop_move, {}, {}});
    out.replies.push_back(Ack{"stop"});
    return out;
  }
  return reject("bad_message", "'" + std::string(type_name(msg)) + "' is a server-to-client message");
}

HandleResult handle_line(const SessionState& session, std::string_view line, const SessionContext& ctx) {
  Message msg;
  try {
    msg = decode(line);
  } catch (const Error& e) {
    return {session, {error_reply("bad_message", e.what())}, {}};
  }
  return handle_message(session, msg, ctx);
}

HandleResult finish_motion(const SessionState& session, controller::Outcome outcome, bool unreachable) {
  HandleResult out{session, {}, {}};
  if (session.fsm != 3) return out;
  out.session.fsm = 2;
  switch (outcome) {
    case controller::Outcome::converged:
      out.replies.push_back(Ack{"converged"});
      break;
    case controller::Outcome::timeout:
      out.replies.push_back(ErrorMsg{unreachable ? "unreachable" : "timeout",
                                     unreachable ? "target unreachable; controller timed out"
                                                 : "controller timed out before reaching tolerance"});
      break;
    default:
      out.replies.push_back(ErrorMsg{"aborted", "motion aborted"});
      break;
  }
  return out;
}

std::vector<Effect> disconnect_effects(const SessionState& session) {
  std::vector<Effect> out;
  if (session.fsm == 3) out.push_back({EffectKind::stop_move, {}, {}});
  if (session.has_authority) out.push_back({EffectKind::release_authority, {}, {}});
  return out;
}

}  // namespace softteleop::protocol
