#pragma once

// Thin POSIX socket helpers. All sockets returned here are non-blocking
// unless stated otherwise.

#include <string>
#include <string_view>

namespace softteleop::net {

/// Owns a file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    const int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1);

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host;
  int port = 0;
};

/// "host:port" or ":port" / "port" (host defaults to 0.0.0.0).
Endpoint parse_endpoint(std::string_view text, std::string_view default_host = "0.0.0.0");

/// Throws Error(io_error) if the address cannot be bound.
Fd listen_tcp(const Endpoint& ep, int backlog = 16);
int bound_port(const Fd& fd);

/// Blocking connect, then switched to non-blocking.
Fd connect_tcp(const Endpoint& ep);

void set_nonblocking(int fd);

/// Writes what the socket accepts now; returns bytes written, or -1 when the
/// peer is gone.
long write_some(int fd, std::string_view data);

/// Appends what is available to `buf`; returns false on EOF or error.
bool read_available(int fd, std::string& buf);

}  // namespace softteleop::net
