#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kmstn/bytes.hpp"
#include "kmstn/clock.hpp"
#include "kmstn/mlkem.hpp"
#include "kmstn/net.hpp"

// ML-KEM secret exchange between KMSTN peers over plain TCP.
//
// Frame layout (all integers big-endian):
//   u32 length         number of bytes that follow
//   u8  kind           1 public_key_request, 2 public_key_reply,
//                      3 ciphertext, 4 done, 0xFF error
//   u16 session_len    then session_len bytes of session id (UTF-8)
//   ... payload        the remaining length - 3 - session_len bytes
//
// Exchange: request(payload "REQUEST_PUBLIC_KEY") -> reply(encapsulation key)
// -> ciphertext -> done (empty payload). Error payloads are ASCII messages.
namespace kmstn::kem {

using SharedSecret = std::array<std::uint8_t, 32>;

enum class FrameKind : std::uint8_t {
    public_key_request = 0x01,
    public_key_reply = 0x02,
    ciphertext = 0x03,
    done = 0x04,
    error = 0xFF,
};

struct Frame {
    FrameKind kind = FrameKind::error;
    std::string session_id;
    Bytes payload;

    bool operator==(const Frame&) const = default;
};

inline constexpr std::string_view request_public_key = "REQUEST_PUBLIC_KEY";
inline constexpr std::size_t max_frame_size = 1 << 20;

/// Full frame including the length prefix.
Bytes encode_frame(const Frame& frame);
/// `body` excludes the length prefix. Throws Error(Errc::protocol).
Frame decode_frame(ByteView body);

/// Returns nullopt on clean EOF.
std::optional<Frame> read_frame(net::Socket& sock);
void write_frame(net::Socket& sock, const Frame& frame);

enum class Role { initiator, responder };

/// Consume-once store of exchanged secrets. Unconsumed sessions expire
/// after `ttl`; secrets are zeroized on consumption and on expiry.
class SessionRegistry {
public:
    explicit SessionRegistry(std::shared_ptr<const Clock> clock = system_clock(),
                             Nanos ttl = std::chrono::seconds(300));
    ~SessionRegistry();
    SessionRegistry(const SessionRegistry&) = delete;
    SessionRegistry& operator=(const SessionRegistry&) = delete;

    /// Throws Error(Errc::protocol) if the session id was ever stored.
    void store(const std::string& session_id, const SharedSecret& secret, Role role);

    /// Throws Error(Errc::not_found) or Error(Errc::already_consumed).
    SharedSecret lookup_secret(const std::string& session_id);

    void evict_expired();
    std::size_t pending() const;
    std::size_t stored_total() const;
    std::size_t consumed_total() const;

private:
    struct Entry {
        SharedSecret secret{};
        Role role = Role::responder;
        Nanos created_at{};
        bool consumed = false;
    };
    void evict_locked(Nanos now);

    std::shared_ptr<const Clock> clock_;
    Nanos ttl_;
    mutable std::mutex mu_;
    std::map<std::string, Entry> sessions_;
    std::size_t stored_total_ = 0;
    std::size_t consumed_total_ = 0;
};

/// Responder side. Each accepted connection is served on its own thread.
class KemServer {
public:
    /// Binds immediately; throws Error(Errc::bind).
    KemServer(const net::Endpoint& listen, std::shared_ptr<SessionRegistry> registry,
              mlkem::ParameterSet set = mlkem::ParameterSet::ml_kem_768,
              std::shared_ptr<const Clock> clock = system_clock());
    ~KemServer();
    KemServer(const KemServer&) = delete;
    KemServer& operator=(const KemServer&) = delete;

    std::uint16_t port() const noexcept { return listener_.port(); }
    void stop();
    /// SHA-256 of every encapsulation key handed out (first 100000).
    std::vector<Bytes> issued_key_digests() const;

private:
    struct Pending {
        Bytes decapsulation_key;
        Nanos created_at{};
    };
    void accept_loop();
    void serve(net::Socket sock);
    /// False when the connection should be closed.
    bool handle_frame(net::Socket& sock, const Frame& frame);
    static constexpr std::size_t max_tracked_keys = 100000;

    net::Listener listener_;
    std::shared_ptr<SessionRegistry> registry_;
    mlkem::ParameterSet set_;
    std::shared_ptr<const Clock> clock_;
    std::atomic<bool> running_{true};
    mutable std::mutex mu_;
    std::map<std::string, Pending> pending_;
    std::vector<Bytes> issued_;
    struct Worker {
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> done;
        int fd = -1;
    };
    std::list<Worker> workers_;
    std::thread acceptor_;
};

/// Initiator side: runs one exchange and stores the secret locally as an
/// initiator session. Throws Error(Errc::connect) when the peer is down and
/// Error(Errc::protocol) on error frames or unexpected frame order.
SharedSecret initiate_kem(const net::Endpoint& peer, const std::string& session_id,
                          SessionRegistry& local,
                          mlkem::ParameterSet set = mlkem::ParameterSet::ml_kem_768,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10));

}  // namespace kmstn::kem
