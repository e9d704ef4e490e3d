#pragma once

// Cockpit <-> server messages: one JSON object per line, tagged by "type".
// Millimetres and degrees on the wire; reals carry at most four fractional
// digits.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "controller.hpp"
#include "geometry.hpp"

namespace softteleop::protocol {

using geometry::ModuleSpec;

inline constexpr std::size_t kMaxLineBytes = 64 * 1024;
inline constexpr int kProtocolVersion = 1;

struct Hello {
  int version = kProtocolVersion;
  friend bool operator==(const Hello&, const Hello&) = default;
};
struct Welcome {
  std::vector<ModuleSpec> robot_spec;
  friend bool operator==(const Welcome&, const Welcome&) = default;
};
struct Config {
  std::vector<ModuleSpec> robot_spec;
  friend bool operator==(const Config&, const Config&) = default;
};
struct Lock {
  friend bool operator==(const Lock&, const Lock&) = default;
};
struct Unlock {
  friend bool operator==(const Unlock&, const Unlock&) = default;
};
struct Target {
  int module = 0;
  std::array<double, 3> pos_mm{};
  friend bool operator==(const Target&, const Target&) = default;
};
struct Move {
  friend bool operator==(const Move&, const Move&) = default;
};
struct Stop {
  friend bool operator==(const Stop&, const Stop&) = default;
};
struct ModuleState {
  double phi_deg = 0.0;
  double theta_deg = 0.0;
  double h_mm = 0.0;
  std::vector<double> lengths_mm;
  friend bool operator==(const ModuleState&, const ModuleState&) = default;
};
struct State {
  std::uint64_t seq = 0;
  std::int64_t t_ms = 0;
  int fsm = 0;
  std::vector<ModuleState> modules;
  std::array<double, 3> ee_mm{};
  bool stale = true;
  friend bool operator==(const State&, const State&) = default;
};
struct Ack {
  std::string ref;
  friend bool operator==(const Ack&, const Ack&) = default;
};
struct ErrorMsg {
  std::string code;
  std::string detail;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using Message = std::variant<Hello, Welcome, Config, Lock, Unlock, Target, Move, Stop, State, Ack, ErrorMsg>;

/// JSON text without the trailing newline.
std::string encode(const Message& msg);

/// Throws Error(bad_message) for oversize input, invalid JSON, unknown tags,
/// missing fields, wrong types or wrong arity.
Message decode(std::string_view line);

std::string_view type_name(const Message& msg);

// Session state machine.
//   0  connected / configuring
//   1  robot configured (hologram placement is cockpit-local)
//   2  locked: targets may be set
//   3  moving under the controller

struct SessionState {
  int fsm = 0;
  bool configured = false;
  bool has_authority = false;
  std::optional<controller::TargetCommand> pending_target;
};

/// What the session handler needs to know about the rest of the server.
struct SessionContext {
  std::vector<ModuleSpec> robot;  // currently configured robot
  bool authority_free = true;     // no other session holds control authority
  std::vector<int> fixed_layout;  // actuators per module a remote plant requires; empty = any
};

enum class EffectKind { apply_config, acquire_authority, release_authority, start_move, stop_move };

struct Effect {
  EffectKind kind;
  std::vector<ModuleSpec> robot;     // apply_config
  controller::TargetCommand target;  // start_move
};

struct HandleResult {
  SessionState session;
  std::vector<Message> replies;
  std::vector<Effect> effects;
};

/// Pure transition function. Illegal or malformed input yields an error reply
/// and leaves the session unchanged.
HandleResult handle_message(const SessionState& session, const Message& msg, const SessionContext& ctx);

/// decode() + handle_message(); decode failures become error{bad_message}.
HandleResult handle_line(const SessionState& session, std::string_view line, const SessionContext& ctx);

/// Motion finished inside the core (converged, timed out or aborted):
/// fsm 3 -> 2 with an ack{"converged"} or an error reply.
HandleResult finish_motion(const SessionState& session, controller::Outcome outcome, bool unreachable);

/// Connection dropped: releases authority and stops a running move.
std::vector<Effect> disconnect_effects(const SessionState& session);

}  // namespace softteleop::protocol
