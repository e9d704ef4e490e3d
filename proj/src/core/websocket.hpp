#pragma once

// Minimal RFC 6455 server side: opening handshake and frame codec. Each text
// or binary message carries one or more newline-terminated protocol lines.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace softteleop::ws {

inline constexpr std::size_t kMaxMessageBytes = 64 * 1024 + 2;

/// Sec-WebSocket-Accept value for a client key.
std::string accept_key(std::string_view client_key);

struct Handshake {
  enum class Status { incomplete, ok, rejected };
  Status status = Status::incomplete;
  std::size_t consumed = 0;  // bytes of the HTTP request
  std::string response;      // 101 on ok, 400 on rejected
};

/// Inspects the start of `buf` for a complete HTTP upgrade request.
Handshake parse_handshake(std::string_view buf);

enum class Opcode : std::uint8_t { continuation = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

struct Frame {
  bool fin = true;
  Opcode opcode = Opcode::text;
  std::string payload;
};

/// Server-to-client frame (never masked).
std::string encode_frame(Opcode opcode, std::string_view payload, bool fin = true);

/// Client-to-server frame decoder. Client frames must be masked.
struct DecodeResult {
  enum class Status { incomplete, frame, error };
  Status status = Status::incomplete;
  std::size_t consumed = 0;
  Frame frame;
  std::string error;
};

DecodeResult decode_frame(std::string_view buf, bool require_mask = true);

/// Reassembles fragmented messages and answers control frames.
class Connection {
 public:
  /// Feeds raw bytes. Each complete data message is appended to
  /// `messages_out` as newline-terminated text; frames that must be written back (pong, close)
  /// are appended to `reply_out`. Returns false once the connection should
  /// be closed.
  bool feed(std::string_view bytes, std::string& messages_out, std::string& reply_out);

  bool closing() const { return closing_; }

 private:
  std::string buf_;
  std::string partial_;
  bool in_fragment_ = false;
  bool closing_ = false;
};

}  // namespace softteleop::ws
