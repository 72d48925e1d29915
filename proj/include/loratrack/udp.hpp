#pragma once

// POSIX UDP plumbing for running the gateway and server over real sockets.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <utility>

#include "loratrack/common.hpp"
#include "loratrack/gateway.hpp"
#include "loratrack/server.hpp"

namespace loratrack::udp {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }

  static Endpoint parse(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("endpoint: expected host:port");
    return {s.substr(0, colon), static_cast<std::uint16_t>(std::stoi(s.substr(colon + 1)))};
  }

  sockaddr_in sockaddr() const {
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) throw std::invalid_argument("endpoint: bad IPv4 host " + host);
    return a;
  }

  static Endpoint from(const sockaddr_in& a) {
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &a.sin_addr, buf, sizeof buf);
    return {buf, ntohs(a.sin_port)};
  }
};

class UdpSocket {
 public:
  // Binds to host:port; port 0 picks an ephemeral port.
  explicit UdpSocket(const Endpoint& bind_to = {}) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::system_error(errno, std::generic_category(), "socket");
    const auto addr = bind_to.sockaddr();
    if (::bind(fd_, reinterpret_cast<const ::sockaddr*>(&addr), sizeof addr) < 0) {
      const int err = errno;
      ::close(fd_);
      throw std::system_error(err, std::generic_category(), "bind " + bind_to.str());
    }
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;
  UdpSocket(UdpSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }

  Endpoint local() const {
    sockaddr_in a{};
    socklen_t len = sizeof a;
    ::getsockname(fd_, reinterpret_cast<::sockaddr*>(&a), &len);
    return Endpoint::from(a);
  }

  void send_to(ByteView data, const Endpoint& dest) {
    const auto addr = dest.sockaddr();
    if (::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<const ::sockaddr*>(&addr), sizeof addr) < 0)
      throw std::system_error(errno, std::generic_category(), "sendto");
  }

  std::optional<std::pair<Bytes, Endpoint>> recv_from(std::chrono::milliseconds timeout) {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r <= 0) return std::nullopt;
    Bytes buf(65536);
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<::sockaddr*>(&from), &len);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    return std::make_pair(std::move(buf), Endpoint::from(from));
  }

 private:
  int fd_ = -1;
};

// Gateway-side transport: one socket talking to a fixed server endpoint.
class UdpTransport : public gw::Transport {
 public:
  explicit UdpTransport(Endpoint server) : server_(std::move(server)) {}
  void send(ByteView datagram) override { sock_.send_to(datagram, server_); }
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override {
    if (auto r = sock_.recv_from(timeout)) return std::move(r->first);
    return std::nullopt;
  }

 private:
  Endpoint server_;
  UdpSocket sock_{};
};

// Serves the forwarder protocol on a socket from a background thread.
class UdpServerRunner {
 public:
  UdpServerRunner(server::NetworkServer& srv, const Endpoint& bind_to) : srv_(srv), sock_(bind_to) {}
  ~UdpServerRunner() { stop(); }

  Endpoint endpoint() const { return sock_.local(); }

  void start() {
    running_ = true;
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
  }

 private:
  void loop() {
    while (running_) {
      auto r = sock_.recv_from(std::chrono::milliseconds(50));
      if (!r) continue;
      for (const auto& out : srv_.handle_datagram(r->first, r->second.str())) {
        try {
          sock_.send_to(out.bytes, Endpoint::parse(out.dest));
        } catch (const std::exception&) {
          // Peer went away; the forwarder protocol tolerates loss.
        }
      }
    }
  }

  server::NetworkServer& srv_;
  UdpSocket sock_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

}  // namespace loratrack::udp
