#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "kmstn/clock.hpp"
#include "kmstn/config.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/http.hpp"
#include "kmstn/kem_channel.hpp"
#include "kmstn/keystore.hpp"
#include "kmstn/model.hpp"
#include "kmstn/routing.hpp"

// The trusted-node server: 014-style key delivery for its SAEs, southbound
// key consumption from attached QKD nodes, and hop-by-hop encrypted relay to
// peer trusted nodes.
namespace kmstn::service {

enum class HopMode { qkd_hybrid, pqc_only };

/// Keys on their way to one remote target SAE.
struct RelayJob {
    ExtKeyContainer container;
    std::string destination;
    std::string next_hop;
    HopMode hop_mode = HopMode::pqc_only;
    int attempts = 0;
};

struct ServiceOptions {
    std::shared_ptr<Clock> clock = system_clock();
    keystore::SealOptions seal;
    keystore::KeystoreOptions store;
    /// Extension names this node understands when they arrive as mandatory.
    std::set<std::string> supported_extensions;
    /// Delivery attempts for one ACK message before it is dropped.
    int ack_attempts = 4;
    std::chrono::milliseconds ack_backoff{100};
    std::chrono::milliseconds peer_timeout{10000};
    /// Time after which an unacknowledged relay counts as failed.
    Nanos ack_deadline = std::chrono::seconds(60);
    int http_threads = 16;
};

struct ServiceStats {
    std::uint64_t keys_served = 0;
    std::uint64_t relays_sent = 0;
    std::uint64_t relays_failed = 0;
    std::uint64_t keys_stored = 0;
    std::uint64_t acks_sent = 0;
    std::uint64_t acks_dropped = 0;
    std::uint64_t acks_received = 0;
    std::uint64_t envelopes_rejected = 0;
};

/// Every envelope this node puts on the wire, before it is sent.
using EnvelopeObserver = std::function<void(const std::string& path, const EncryptedEnvelope&)>;
/// Every ACK message, right before each delivery attempt.
using AckObserver = std::function<void(const std::vector<AckContainer>&)>;

class KmstnService {
public:
    /// Opens the sealed keystore and binds the service and KEM listeners
    /// (port 0 picks a free port). Throws Error(Errc::config),
    /// Error(Errc::bind) or the seal errors.
    KmstnService(const config::Bundle& bundle, std::string kmstn_id, ServiceOptions options = {});
    ~KmstnService();
    KmstnService(const KmstnService&) = delete;
    KmstnService& operator=(const KmstnService&) = delete;

    std::uint16_t port() const noexcept { return server_.port(); }
    std::uint16_t pqc_port() const noexcept { return kem_server_->port(); }
    const std::string& id() const noexcept { return id_; }

    /// Starts serving. `resolved` replaces the topology given at construction
    /// (same nodes, concrete ports) when peers were bound to ephemeral ports.
    void start(const std::optional<config::Bundle>& resolved = std::nullopt);
    void stop();

    // Operations behind the HTTP routes, callable directly.
    KeyContainer get_key(const SaeId& caller, const SaeId& slave, const etsi014::KeyRequest& request,
                         double* southbound_latency_ms = nullptr);
    KeyContainer get_key_with_ids(const SaeId& caller, const SaeId& origin, const std::vector<std::string>& key_ids);
    etsi014::Status status(const SaeId& caller, const SaeId& slave);
    void handle_ext_keys(const std::string& caller, const EncryptedEnvelope& envelope);
    void handle_ack_containers(const std::string& caller, const EncryptedEnvelope& envelope);
    void handle_void_keys(const std::string& caller, const EncryptedEnvelope& envelope);

    /// Asks the node holding relayed keys to void them; its answer arrives
    /// as an ACK with status voided or key_not_present.
    void request_void(const std::string& destination, const std::vector<std::string>& key_ids, const SaeId& initiator);

    /// Blocks until the relay queues and the ACK queue are empty. False on
    /// timeout.
    bool wait_idle(std::chrono::milliseconds timeout) const;

    /// Latest ACK status seen for a relayed key id; `failed` once the ACK
    /// deadline has passed without one.
    std::optional<AckStatus> ack_status(const std::string& key_id) const;

    ServiceStats stats() const;
    const routing::KmsGraph& graph() const noexcept { return graph_; }
    keystore::Keystore& store() noexcept { return *keystore_; }
    kem::SessionRegistry& sessions() noexcept { return *registry_; }

    void set_envelope_observer(EnvelopeObserver observer);
    void set_ack_observer(AckObserver observer);

private:
    struct AckTask {
        std::string callback_kmstn;
        std::string path;
        std::string plaintext;
        std::vector<AckContainer> acks;
        int attempts = 0;
    };
    struct PendingAck {
        Nanos deadline{};
        std::optional<AckStatus> status;
    };
    struct RelayLane {
        std::deque<RelayJob> jobs;
        bool busy = false;
        std::thread worker;
    };

    void install_routes();
    http::Client southbound(const routing::AttachedKme& kme) const;
    http::Client peer(const std::string& kmstn_id) const;
    const routing::AttachedKme* local_link_to(const SaeId& master, const SaeId& slave) const;
    const routing::AttachedKme* kme_towards(const std::string& neighbour) const;
    const routing::AttachedKme* kme_for_sender(const SaeId& sender_master) const;
    std::string callback_url() const;
    std::string kmstn_for_url(const std::string& url) const;
    bool is_peer(const std::string& caller) const;

    KeyContainer enc_keys_southbound(const routing::AttachedKme& kme, int number, int size, double* latency_ms) const;
    KeyContainer dec_keys_southbound(const routing::AttachedKme& kme, const std::vector<std::string>& ids) const;

    /// KEM exchange plus envelope sealing towards a directly addressed node.
    EncryptedEnvelope seal_for(const std::string& peer_id, const std::string& plaintext, bool allow_hybrid);
    std::string open_from(const EncryptedEnvelope& envelope);
    void post_sealed(const std::string& peer_id, const std::string& path, const EncryptedEnvelope& env);

    void enqueue_relay(RelayJob job);
    void relay_loop(std::string next_hop);
    void forward_key(RelayJob& job);
    void accept_container(ExtKeyContainer container);
    void enqueue_ack(const std::string& callback_url, std::vector<AckContainer> acks);
    void ack_loop();

    std::string id_;
    config::Bundle bundle_;
    ServiceOptions options_;
    bool insecure_;
    routing::KmsGraph graph_;
    const routing::KmsNode* self_ = nullptr;
    std::optional<config::TlsFiles> tls_;

    keystore::DeviceSeal seal_;
    std::unique_ptr<keystore::Keystore> keystore_;
    std::shared_ptr<kem::SessionRegistry> registry_;
    std::unique_ptr<kem::KemServer> kem_server_;
    http::Server server_;

    mutable std::mutex mu_;
    mutable std::condition_variable idle_cv_;
    std::condition_variable relay_cv_;
    std::map<std::string, RelayLane> lanes_;
    std::deque<AckTask> ack_queue_;
    bool ack_busy_ = false;
    std::condition_variable ack_cv_;
    std::thread ack_worker_;
    bool stopping_ = false;
    bool started_ = false;
    std::map<std::string, PendingAck> pending_acks_;
    ServiceStats stats_;
    EnvelopeObserver envelope_observer_;
    AckObserver ack_observer_;
};

}  // namespace kmstn::service
