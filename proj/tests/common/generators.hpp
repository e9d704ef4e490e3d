#pragma once

// Random inputs for property tests.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "protocol.hpp"

namespace gen {

using namespace softteleop;

/// Reals on the four-decimal wire grid.
inline double grid_real(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_int_distribution<long long> d(static_cast<long long>(lo * 1e4), static_cast<long long>(hi * 1e4));
  return static_cast<double>(d(rng)) / 1e4;
}

inline geometry::ModuleSpec module_spec(std::mt19937_64& rng) {
  geometry::ModuleSpec s;
  s.actuator_count = std::uniform_int_distribution<int>(3, 6)(rng);
  s.radius_mm = grid_real(rng, 5, 30);
  s.plate_offset_mm = grid_real(rng, 0, 10);
  s.min_len_mm = grid_real(rng, 10, 40);
  s.max_len_mm = std::round((s.min_len_mm + grid_real(rng, 1, 40)) * 1e4) / 1e4;
  s.tilt_limit_deg = grid_real(rng, 1, 30);
  return s;
}

inline std::vector<geometry::ModuleSpec> robot(std::mt19937_64& rng) {
  std::vector<geometry::ModuleSpec> out(std::uniform_int_distribution<std::size_t>(1, 5)(rng));
  for (auto& m : out) m = module_spec(rng);
  return out;
}

inline std::string word(std::mt19937_64& rng) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz_ \"\\/{}[]:,0123456789\xc3\xa9";
  std::string s;
  const int n = std::uniform_int_distribution<int>(0, 24)(rng);
  for (int i = 0; i < n; ++i) s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 3)(rng)];
  if (n % 5 == 4) s += "\xc3\xa9";
  return s;
}

inline protocol::Message message(std::mt19937_64& rng) {
  using namespace protocol;
  switch (std::uniform_int_distribution<int>(0, 10)(rng)) {
    case 0: return Hello{std::uniform_int_distribution<int>(0, 100)(rng)};
    case 1: return Welcome{robot(rng)};
    case 2: return Config{robot(rng)};
    case 3: return Lock{};
    case 4: return Unlock{};
    case 5:
      return Target{std::uniform_int_distribution<int>(0, 8)(rng),
                    {grid_real(rng, -200, 200), grid_real(rng, -200, 200), grid_real(rng, -200, 200)}};
    case 6: return Move{};
    case 7: return Stop{};
    case 8: {
      State s;
      s.seq = std::uniform_int_distribution<std::uint64_t>(0, 1ull << 40)(rng);
      s.t_ms = std::uniform_int_distribution<std::int64_t>(0, 1ll << 40)(rng);
      s.fsm = std::uniform_int_distribution<int>(0, 3)(rng);
      s.modules.resize(std::uniform_int_distribution<std::size_t>(0, 4)(rng));
      for (auto& m : s.modules) {
        m.phi_deg = grid_real(rng, -90, 90);
        m.theta_deg = grid_real(rng, -90, 90);
        m.h_mm = grid_real(rng, 0, 100);
        m.lengths_mm.resize(std::uniform_int_distribution<std::size_t>(3, 6)(rng));
        for (double& l : m.lengths_mm) l = grid_real(rng, 0, 100);
      }
      s.ee_mm = {grid_real(rng, -100, 100), grid_real(rng, -100, 100), grid_real(rng, 0, 200)};
      s.stale = rng() & 1;
      return s;
    }
    case 9: return Ack{word(rng)};
    default: return ErrorMsg{word(rng), word(rng)};
  }
}

/// A mix of valid client messages, mutated JSON and raw garbage.
inline std::string fuzz_line(std::mt19937_64& rng) {
  const int kind = std::uniform_int_distribution<int>(0, 9)(rng);
  std::string line = protocol::encode(message(rng));
  if (kind <= 3) return line;
  if (kind <= 6) {
    const int edits = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int e = 0; e < edits && !line.empty(); ++e) {
      const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, line.size() - 1)(rng);
      switch (rng() % 3) {
        case 0: line.erase(pos, 1); break;
        case 1: line.insert(pos, 1, static_cast<char>(std::uniform_int_distribution<int>(1, 255)(rng))); break;
        default: line[pos] = static_cast<char>(std::uniform_int_distribution<int>(1, 255)(rng)); break;
      }
    }
    return line;
  }
  if (kind == 7) {
    static const char* snippets[] = {"{}", "[]", "null", "{\"type\":5}", "{\"type\":\"target\",\"module\":\"x\"}",
                                     "{\"type\":\"target\",\"module\":0,\"pos_mm\":[1,2]}",
                                     "{\"type\":\"config\",\"robot_spec\":{\"modules\":[]}}",
                                     "{\"type\":\"warp\"}", "{\"type\":\"lock\",\"extra\":1}"};
    return snippets[rng() % (sizeof snippets / sizeof *snippets)];
  }
  std::string junk(std::uniform_int_distribution<std::size_t>(0, 200)(rng), '\0');
  for (char& c : junk) c = static_cast<char>(std::uniform_int_distribution<int>(1, 255)(rng));
  std::erase(junk, '\n');
  return junk;
}

}  // namespace gen
