#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "kmstn/clock.hpp"
#include "kmstn/config.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/http.hpp"
#include "kmstn/link_profile.hpp"
#include "kmstn/model.hpp"

// Simulated QKD link: one shared key buffer fed by bursty generation, with
// both KMEs of the pair serving the 014-style API over it.
namespace kmstn::sim {

/// The synchronized key material of one QKD pair. Generation is evaluated
/// lazily against the clock, so with a manual clock the whole pair is a
/// deterministic function of (seed, clock readings, request sequence).
class QkdPair {
public:
    QkdPair(LinkProfile profile, std::uint64_t seed, std::shared_ptr<Clock> clock = system_clock());

    /// Pops `number` keys, truncated to `size_bits`, all or nothing. Throws
    /// Error(Errc::depleted) when fewer are buffered and
    /// Error(Errc::bad_request) for sizes above the block size or not a
    /// multiple of 8.
    KeyContainer enc_keys(int number, int size_bits);

    /// Keys previously handed out by enc_keys on either side. Throws
    /// Error(Errc::key_not_present) naming every unknown id.
    KeyContainer dec_keys(const std::vector<std::string>& key_ids) const;

    std::int64_t stored() const;
    std::int64_t capacity() const noexcept { return profile_.buffer_capacity_keys; }
    const LinkProfile& profile() const noexcept { return profile_; }
    /// Bits produced by bursts since construction (the initial fill excluded).
    std::uint64_t generated_bits() const;
    std::uint64_t delivered_keys() const;

    /// While paused, bursts are skipped.
    void pause_generation(bool paused);
    bool paused() const;
    /// Tops the buffer up to capacity immediately.
    void fill_to_capacity();
    /// Discards every buffered key.
    void drain();

    /// Service latency for one request, in milliseconds.
    double sample_latency_ms();

    /// Fault injection: dec_keys returns material with one bit flipped.
    void corrupt_dec_keys(bool on);

private:
    void catch_up() const;
    void append_blocks(std::int64_t count) const;

    LinkProfile profile_;
    std::uint64_t seed_;
    std::shared_ptr<Clock> clock_;

    mutable std::mutex mu_;
    mutable std::deque<KeyBlock> buffer_;
    mutable std::map<std::string, Bytes> issued_;
    mutable std::deque<std::string> issued_order_;
    mutable std::uint64_t next_block_ = 0;
    mutable std::uint64_t generated_bits_ = 0;
    mutable Nanos next_burst_{0};
    mutable std::mt19937_64 burst_rng_;
    std::mt19937_64 latency_rng_;
    std::uint64_t delivered_ = 0;
    bool paused_ = false;
    bool corrupt_ = false;
};

enum class LatencyMode {
    /// Sleep for the sampled latency (wall-clock runs).
    sleep,
    /// Return immediately and report the latency in X-Sim-Latency-Ms.
    report,
};

struct RequestLogEntry {
    std::string method;
    std::string path;
    std::string body;
    std::string caller;
};

/// One KME of a pair behind an HTTP(S) server.
class QkdNodeServer {
public:
    QkdNodeServer(config::QkdNodeConfig config, std::shared_ptr<QkdPair> pair, bool insecure,
                  LatencyMode mode = LatencyMode::sleep);
    ~QkdNodeServer();

    std::uint16_t bind();
    void start();
    void stop();
    std::uint16_t port() const noexcept { return server_.port(); }

    const config::QkdNodeConfig& config() const noexcept { return config_; }
    QkdPair& pair() noexcept { return *pair_; }
    etsi014::Status status() const;
    std::vector<RequestLogEntry> request_log() const;

private:
    http::Response with_latency(http::Response r);
    void check_sae(const std::string& path_sae) const;
    void record(const http::Request& r);

    config::QkdNodeConfig config_;
    std::shared_ptr<QkdPair> pair_;
    LatencyMode mode_;
    http::Server server_;
    mutable std::mutex log_mu_;
    std::vector<RequestLogEntry> log_;
};

/// Both sides of a pair sharing one buffer.
struct RunningPair {
    std::shared_ptr<QkdPair> pair;
    std::unique_ptr<QkdNodeServer> alice;
    std::unique_ptr<QkdNodeServer> bob;

    void stop();
};

/// Binds and starts both KMEs. The profile and seed come from `alice`.
/// Throws Error(Errc::bind).
RunningPair run_pair(const config::QkdNodeConfig& alice, const config::QkdNodeConfig& bob, bool insecure,
                     std::shared_ptr<Clock> clock = system_clock(), LatencyMode mode = LatencyMode::sleep);

inline constexpr int max_keys_per_request = 128;

}  // namespace kmstn::sim
