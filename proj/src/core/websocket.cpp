#include "websocket.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <vector>

namespace softteleop::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxRequestBytes = 8192;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool has_token(std::string_view header_value, std::string_view token) {
  const std::string v = lower(header_value);
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const std::size_t comma = std::min(v.find(',', pos), v.size());
    if (trim(std::string_view(v).substr(pos, comma - pos)) == token) return true;
    pos = comma + 1;
  }
  return false;
}

std::string bad_request(std::string_view why) {
  return "HTTP/1.1 400 Bad Request\r\nContent-Type: text/plain\r\nConnection: close\r\nContent-Length: " +
         std::to_string(why.size()) + "\r\n\r\n" + std::string(why);
}

// One data message is one protocol line; the terminator is optional.
void append_message(std::string& out, std::string_view payload) {
  out += payload;
  if (payload.empty() || payload.back() != '\n') out.push_back('\n');
}

}  // namespace

std::string accept_key(std::string_view client_key) {
  const std::string joined = std::string(client_key) + std::string(kGuid);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(out), static_cast<std::size_t>(n));
}

Handshake parse_handshake(std::string_view buf) {
  Handshake hs;
  const std::size_t end = buf.find("\r\n\r\n");
  if (end == std::string_view::npos) {
    if (buf.size() > kMaxRequestBytes) {
      hs.status = Handshake::Status::rejected;
      hs.consumed = buf.size();
      hs.response = bad_request("request too large");
    }
    return hs;
  }
  hs.consumed = end + 4;
  const std::string_view head = buf.substr(0, end);

  std::size_t line_end = head.find("\r\n");
  const std::string_view request_line = head.substr(0, line_end);
  std::string key;
  bool upgrade = false;
  bool connection_upgrade = false;
  std::string version;
  while (line_end != std::string_view::npos) {
    const std::size_t start = line_end + 2;
    line_end = head.find("\r\n", start);
    const std::string_view line = head.substr(start, line_end == std::string_view::npos ? head.size() - start
                                                                                        : line_end - start);
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string name = lower(trim(line.substr(0, colon)));
    const std::string_view value = trim(line.substr(colon + 1));
    if (name == "sec-websocket-key") key = std::string(value);
    else if (name == "upgrade") upgrade = has_token(value, "websocket");
    else if (name == "connection") connection_upgrade = has_token(value, "upgrade");
    else if (name == "sec-websocket-version") version = std::string(value);
  }

  if (request_line.substr(0, 4) != "GET " || !upgrade || !connection_upgrade || key.empty()) {
    hs.status = Handshake::Status::rejected;
    hs.response = bad_request("websocket upgrade required");
    return hs;
  }
  if (version != "13") {
    hs.status = Handshake::Status::rejected;
    hs.response = "HTTP/1.1 426 Upgrade Required\r\nSec-WebSocket-Version: 13\r\nContent-Length: 0\r\n\r\n";
    return hs;
  }
  hs.status = Handshake::Status::ok;
  hs.response =
      "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
      accept_key(key) + "\r\n\r\n";
  return hs;
}

std::string encode_frame(Opcode opcode, std::string_view payload, bool fin) {
  std::string out;
  out.reserve(payload.size() + 10);
  out.push_back(static_cast<char>((fin ? 0x80 : 0x00) | static_cast<std::uint8_t>(opcode)));
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> shift) & 0xFF));
  }
  out.append(payload);
  return out;
}

DecodeResult decode_frame(std::string_view buf, bool require_mask) {
  DecodeResult r;
  if (buf.size() < 2) return r;
  const auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(buf[i]); };
  const bool fin = byte(0) & 0x80;
  if (byte(0) & 0x70) {
    r.status = DecodeResult::Status::error;
    r.error = "reserved bits set";
    return r;
  }
  const auto op = static_cast<std::uint8_t>(byte(0) & 0x0F);
  const bool masked = byte(1) & 0x80;
  std::uint64_t len = byte(1) & 0x7F;
  std::size_t pos = 2;
  if (len == 126) {
    if (buf.size() < 4) return r;
    len = (std::uint64_t{byte(2)} << 8) | byte(3);
    pos = 4;
  } else if (len == 127) {
    if (buf.size() < 10) return r;
    len = 0;
    for (std::size_t i = 2; i < 10; ++i) len = (len << 8) | byte(i);
    pos = 10;
  }

  const bool control = op & 0x08;
  const bool known = op <= 0x2 || (op >= 0x8 && op <= 0xA);
  if (!known) {
    r.status = DecodeResult::Status::error;
    r.error = "unknown opcode";
    return r;
  }
  if (control && (!fin || len > 125)) {
    r.status = DecodeResult::Status::error;
    r.error = "bad control frame";
    return r;
  }
  if (require_mask && !masked) {
    r.status = DecodeResult::Status::error;
    r.error = "client frame not masked";
    return r;
  }
  if (len > kMaxMessageBytes) {
    r.status = DecodeResult::Status::error;
    r.error = "frame too large";
    return r;
  }

  std::uint8_t mask[4] = {0, 0, 0, 0};
  if (masked) {
    if (buf.size() < pos + 4) return r;
    for (int i = 0; i < 4; ++i) mask[i] = byte(pos + i);
    pos += 4;
  }
  if (buf.size() < pos + len) return r;

  r.status = DecodeResult::Status::frame;
  r.consumed = pos + static_cast<std::size_t>(len);
  r.frame.fin = fin;
  r.frame.opcode = static_cast<Opcode>(op);
  r.frame.payload.assign(buf.substr(pos, static_cast<std::size_t>(len)));
  if (masked)
    for (std::size_t i = 0; i < r.frame.payload.size(); ++i) r.frame.payload[i] ^= static_cast<char>(mask[i % 4]);
  return r;
}

bool Connection::feed(std::string_view bytes, std::string& messages_out, std::string& reply_out) {
  if (closing_) return false;
  buf_.append(bytes);
  std::size_t offset = 0;
  bool alive = true;
  while (alive) {
    DecodeResult r = decode_frame(std::string_view(buf_).substr(offset));
    if (r.status == DecodeResult::Status::incomplete) break;
    if (r.status == DecodeResult::Status::error) {
      reply_out += encode_frame(Opcode::close, "\x03\xEA");  // 1002 protocol error
      alive = false;
      break;
    }
    offset += r.consumed;
    Frame& f = r.frame;
    switch (f.opcode) {
      case Opcode::ping:
        reply_out += encode_frame(Opcode::pong, f.payload);
        break;
      case Opcode::pong:
        break;
      case Opcode::close:
        reply_out += encode_frame(Opcode::close, f.payload.substr(0, std::min<std::size_t>(f.payload.size(), 2)));
        alive = false;
        break;
      case Opcode::text:
      case Opcode::binary:
        if (in_fragment_) {
          reply_out += encode_frame(Opcode::close, "\x03\xEA");
          alive = false;
          break;
        }
        if (f.fin) {
          append_message(messages_out, f.payload);
        } else {
          in_fragment_ = true;
          partial_ = std::move(f.payload);
        }
        break;
      case Opcode::continuation:
        if (!in_fragment_ || partial_.size() + f.payload.size() > kMaxMessageBytes) {
          reply_out += encode_frame(Opcode::close, "\x03\xEA");
          alive = false;
          break;
        }
        partial_ += f.payload;
        if (f.fin) {
          append_message(messages_out, partial_);
          partial_.clear();
          in_fragment_ = false;
        }
        break;
    }
  }
  buf_.erase(0, offset);
  if (!alive) closing_ = true;
  return alive;
}

}  // namespace softteleop::ws
