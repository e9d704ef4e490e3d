#include <gtest/gtest.h>

#include <random>

#include "clients.hpp"
#include "websocket.hpp"

using namespace softteleop::ws;

namespace {

const char* kRequest =
    "GET /chat HTTP/1.1\r\nHost: server.example.com\r\nUpgrade: websocket\r\nConnection: keep-alive, Upgrade\r\n"
    "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nOrigin: http://example.com\r\nSec-WebSocket-Version: 13\r\n\r\n";

}  // namespace

TEST(Handshake, AcceptKeyFromRfcExample) {
  EXPECT_EQ(accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(Handshake, CompleteRequest) {
  const std::string req = std::string(kRequest) + "trailing";
  const Handshake hs = parse_handshake(req);
  ASSERT_EQ(hs.status, Handshake::Status::ok);
  EXPECT_EQ(hs.consumed, std::string(kRequest).size());
  EXPECT_EQ(hs.response.rfind("HTTP/1.1 101", 0), 0u);
  EXPECT_NE(hs.response.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=\r\n"), std::string::npos);
}

TEST(Handshake, PartialRequestWaits) {
  const std::string req(kRequest);
  for (std::size_t cut : {0ul, 10ul, req.size() - 1}) {
    EXPECT_EQ(parse_handshake(std::string_view(req).substr(0, cut)).status, Handshake::Status::incomplete);
  }
}

TEST(Handshake, Rejections) {
  const Handshake plain = parse_handshake("GET / HTTP/1.1\r\nHost: x\r\n\r\n");
  EXPECT_EQ(plain.status, Handshake::Status::rejected);
  EXPECT_EQ(plain.response.rfind("HTTP/1.1 400", 0), 0u);

  std::string old(kRequest);
  old.replace(old.find("Version: 13"), 11, "Version: 8");
  const Handshake v8 = parse_handshake(old);
  EXPECT_EQ(v8.status, Handshake::Status::rejected);
  EXPECT_EQ(v8.response.rfind("HTTP/1.1 426", 0), 0u);

  EXPECT_EQ(parse_handshake(std::string(9000, 'a')).status, Handshake::Status::rejected);
}

TEST(Frames, EncodeLengthForms) {
  for (std::size_t n : {0ul, 125ul, 126ul, 65535ul, 65536ul}) {
    const std::string payload(n, 'q');
    const std::string f = encode_frame(Opcode::text, payload);
    const auto parsed = client::parse_server_frame(f);
    ASSERT_TRUE(parsed.has_value()) << n;
    EXPECT_EQ(parsed->size, f.size());
    EXPECT_EQ(parsed->payload, payload);
    EXPECT_EQ(parsed->opcode, 0x1);
    EXPECT_TRUE(parsed->fin);
  }
}

TEST(Frames, DecodeMaskedRoundTrip) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {0ul, 1ul, 125ul, 126ul, 300ul, 65535ul, 65536ul}) {
    std::string payload(n, '\0');
    for (char& c : payload) c = static_cast<char>(rng());
    const std::string wire = client::masked_frame(0x2, payload, true, static_cast<std::uint32_t>(rng()));
    const DecodeResult r = decode_frame(wire);
    ASSERT_EQ(r.status, DecodeResult::Status::frame) << n;
    EXPECT_EQ(r.consumed, wire.size());
    EXPECT_EQ(r.frame.payload, payload);
    for (std::size_t cut = 0; cut < std::min<std::size_t>(wire.size(), 16); ++cut)
      ASSERT_EQ(decode_frame(std::string_view(wire).substr(0, cut)).status, DecodeResult::Status::incomplete);
  }
}

TEST(Frames, DecodeErrors) {
  EXPECT_EQ(decode_frame(encode_frame(Opcode::text, "x")).status, DecodeResult::Status::error);
  EXPECT_EQ(decode_frame(encode_frame(Opcode::text, "x"), false).status, DecodeResult::Status::frame);
  std::string rsv = client::masked_frame(0x1, "x");
  rsv[0] = static_cast<char>(rsv[0] | 0x40);
  EXPECT_EQ(decode_frame(rsv).status, DecodeResult::Status::error);
  EXPECT_EQ(decode_frame(client::masked_frame(0x3, "x")).status, DecodeResult::Status::error);
  EXPECT_EQ(decode_frame(client::masked_frame(0x9, "x", false)).status, DecodeResult::Status::error);
  EXPECT_EQ(decode_frame(client::masked_frame(0x9, std::string(126, 'p'))).status, DecodeResult::Status::error);
  EXPECT_EQ(decode_frame(client::masked_frame(0x1, std::string(kMaxMessageBytes + 1, 'p'))).status,
            DecodeResult::Status::error);
}

TEST(Connection, TextMessagesBecomeLines) {
  Connection c;
  std::string msgs, reply;
  const std::string wire = client::masked_frame(0x1, "{\"type\":\"hello\"}") + client::masked_frame(0x1, "b\n");
  ASSERT_TRUE(c.feed(wire.substr(0, 5), msgs, reply));
  EXPECT_TRUE(msgs.empty());
  ASSERT_TRUE(c.feed(wire.substr(5), msgs, reply));
  EXPECT_EQ(msgs, "{\"type\":\"hello\"}\nb\n");
  EXPECT_TRUE(reply.empty());
}

TEST(Connection, FragmentsReassemble) {
  Connection c;
  std::string msgs, reply;
  const std::string wire = client::masked_frame(0x1, "{\"type\":", false) + client::masked_frame(0x9, "hb") +
                           client::masked_frame(0x0, "\"lock\"}", true);
  ASSERT_TRUE(c.feed(wire, msgs, reply));
  EXPECT_EQ(msgs, "{\"type\":\"lock\"}\n");
  const auto pong = client::parse_server_frame(reply);
  ASSERT_TRUE(pong.has_value());
  EXPECT_EQ(pong->opcode, 0xA);
  EXPECT_EQ(pong->payload, "hb");
}

TEST(Connection, CloseIsEchoed) {
  Connection c;
  std::string msgs, reply;
  EXPECT_FALSE(c.feed(client::masked_frame(0x8, std::string("\x03\xe8", 2)), msgs, reply));
  const auto f = client::parse_server_frame(reply);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->opcode, 0x8);
  EXPECT_EQ(f->payload, std::string("\x03\xe8", 2));
  EXPECT_TRUE(c.closing());
  EXPECT_FALSE(c.feed(client::masked_frame(0x1, "late"), msgs, reply));
}

TEST(Connection, ProtocolErrorsClose1002) {
  for (const std::string& wire : {client::masked_frame(0x0, "orphan"),
                                  client::masked_frame(0x1, "a", false) + client::masked_frame(0x1, "b"),
                                  encode_frame(Opcode::text, "unmasked")}) {
    Connection c;
    std::string msgs, reply;
    EXPECT_FALSE(c.feed(wire, msgs, reply));
    const auto f = client::parse_server_frame(reply);
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(f->opcode, 0x8);
    EXPECT_EQ(f->payload, std::string("\x03\xea", 2));
  }
}

TEST(Connection, OversizeFragmentedMessageCloses) {
  Connection c;
  std::string msgs, reply;
  const std::string chunk(40000, 'a');
  ASSERT_TRUE(c.feed(client::masked_frame(0x1, chunk, false), msgs, reply));
  EXPECT_FALSE(c.feed(client::masked_frame(0x0, chunk, true), msgs, reply));
  EXPECT_TRUE(msgs.empty());
}
