#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "kmstn/bytes.hpp"

// Minimal blocking TCP sockets for the KEM channel.
namespace kmstn::net {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    /// "host:port"; throws Error(Errc::config).
    static Endpoint parse(std::string_view text);

    bool operator==(const Endpoint&) const = default;
};

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket();
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    bool valid() const noexcept { return fd_ >= 0; }
    int fd() const noexcept { return fd_; }

    void write_all(ByteView data);
    /// Returns false on clean EOF before the first byte; throws Errc::io on
    /// timeout, reset or EOF mid-buffer.
    bool read_exact(std::span<std::uint8_t> out);
    void set_timeout(std::chrono::milliseconds timeout);
    void shutdown() noexcept;
    void close() noexcept;

private:
    int fd_ = -1;
};

/// Throws Error(Errc::connect) when the peer cannot be reached.
Socket connect_tcp(const Endpoint& peer, std::chrono::milliseconds timeout = std::chrono::seconds(5));

class Listener {
public:
    /// Port 0 picks an ephemeral port. Throws Error(Errc::bind).
    explicit Listener(const Endpoint& at);

    std::uint16_t port() const noexcept { return port_; }
    /// Waits up to `wait` for a connection.
    std::optional<Socket> accept(std::chrono::milliseconds wait);
    void close() noexcept { sock_.close(); }

private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

}  // namespace kmstn::net
