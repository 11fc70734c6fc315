#include "kmstn/kmstn_service.hpp"

#include <algorithm>

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/log.hpp"
#include "kmstn/secure_envelope.hpp"

namespace kmstn::service {

namespace {

constexpr const char* ext_keys_path = "/api/v1/ext_keys";
constexpr const char* ack_path = "/api/v1/ack_containers";
constexpr const char* void_path = "/api/v1/void_keys";
constexpr int transport_key_bits = 256;

const config::KmstnConfig& own_config(const config::Bundle& bundle, const std::string& id) {
    const auto* cfg = bundle.find_kmstn(id);
    if (!cfg) fail(Errc::config, "kmstn " + id + " is not in the deployment");
    return *cfg;
}

SaeId caller_sae(const std::string& caller) {
    if (caller.empty()) fail(Errc::unauthorized, "caller not authenticated");
    try {
        return SaeId(caller);
    } catch (const Error&) {
        fail(Errc::unauthorized, "caller identity is not a valid SAE id");
    }
}

std::string accepted() { return R"({"status":"accepted"})"; }

}  // namespace

KmstnService::KmstnService(const config::Bundle& bundle, std::string kmstn_id, ServiceOptions options)
    : id_(std::move(kmstn_id)),
      bundle_(bundle),
      options_(std::move(options)),
      insecure_(bundle.deployment.insecure_sim),
      graph_(routing::load_topology(bundle_)),
      self_(&graph_.node(id_)),
      tls_(own_config(bundle_, id_).tls),
      seal_(keystore::DeviceSeal::init(own_config(bundle_, id_).state_dir, options_.seal)),
      keystore_(std::make_unique<keystore::Keystore>(seal_, options_.store)),
      registry_(std::make_shared<kem::SessionRegistry>(options_.clock)),
      kem_server_(std::make_unique<kem::KemServer>(own_config(bundle_, id_).pqc_endpoint, registry_,
                                                   own_config(bundle_, id_).kem, options_.clock)),
      server_(insecure_ ? std::nullopt : tls_, options_.http_threads) {
    if (!insecure_ && !tls_) fail(Errc::config, "kmstn " + id_ + " needs TLS files outside insecure_sim mode");
    server_.bind(own_config(bundle_, id_).endpoint);
    install_routes();
}

KmstnService::~KmstnService() { stop(); }

void KmstnService::start(const std::optional<config::Bundle>& resolved) {
    if (resolved) {
        resolved->validate();
        bundle_ = *resolved;
        graph_ = routing::load_topology(bundle_);
        self_ = &graph_.node(id_);
    }
    {
        std::lock_guard lock(mu_);
        if (started_) return;
        started_ = true;
        stopping_ = false;
    }
    ack_worker_ = std::thread([this] { ack_loop(); });
    server_.start();
    log::info("kmstn", id_ + " serving on port " + std::to_string(port()) + ", KEM on " + std::to_string(pqc_port()));
}

void KmstnService::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    relay_cv_.notify_all();
    ack_cv_.notify_all();
    idle_cv_.notify_all();
    server_.stop();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mu_);
        for (auto& [_, lane] : lanes_) {
            if (lane.worker.joinable()) workers.push_back(std::move(lane.worker));
        }
    }
    for (auto& t : workers) t.join();
    if (ack_worker_.joinable()) ack_worker_.join();
    if (kem_server_) kem_server_->stop();
    idle_cv_.notify_all();
}

void KmstnService::install_routes() {
    const std::string keys = R"(/api/v1/keys/([^/]+))";
    server_.route("GET", keys + "/status", [this](const http::Request& r) {
        return http::Response{200, etsi014::encode(status(caller_sae(r.caller), SaeId(r.params.at(0))))};
    });
    server_.route("POST", keys + "/enc_keys", [this](const http::Request& r) {
        double latency = -1;
        const auto request = etsi014::decode_key_request(r.body);
        http::Response resp{200, encode_key_container(get_key(caller_sae(r.caller), SaeId(r.params.at(0)), request, &latency))};
        if (latency >= 0) resp.headers[http::sim_latency_header] = std::to_string(latency);
        return resp;
    });
    server_.route("POST", keys + "/dec_keys", [this](const http::Request& r) {
        const auto request = etsi014::decode_key_ids_request(r.body);
        return http::Response{
            200, encode_key_container(get_key_with_ids(caller_sae(r.caller), SaeId(r.params.at(0)), request.key_ids))};
    });
    server_.route("POST", ext_keys_path, [this](const http::Request& r) {
        handle_ext_keys(r.caller, decode_envelope(r.body));
        return http::Response{200, accepted()};
    });
    server_.route("POST", ack_path, [this](const http::Request& r) {
        handle_ack_containers(r.caller, decode_envelope(r.body));
        return http::Response{200, accepted()};
    });
    server_.route("POST", void_path, [this](const http::Request& r) {
        handle_void_keys(r.caller, decode_envelope(r.body));
        return http::Response{200, accepted()};
    });
    server_.route("GET", R"(/api/v1/kmstn/stats)", [this](const http::Request&) {
        const auto s = stats();
        nlohmann::json doc{{"kmstn_id", id_},
                           {"keys_served", s.keys_served},
                           {"relays_sent", s.relays_sent},
                           {"relays_failed", s.relays_failed},
                           {"keys_stored", s.keys_stored},
                           {"acks_sent", s.acks_sent},
                           {"acks_dropped", s.acks_dropped},
                           {"acks_received", s.acks_received},
                           {"envelopes_rejected", s.envelopes_rejected}};
        return http::Response{200, doc.dump()};
    });
}

http::Client KmstnService::southbound(const routing::AttachedKme& kme) const {
    return http::Client(kme.endpoint, {.tls = insecure_ ? std::nullopt : tls_,
                                       .identity = id_,
                                       .connect_timeout = std::chrono::milliseconds(2000),
                                       .read_timeout = options_.peer_timeout});
}

http::Client KmstnService::peer(const std::string& kmstn_id) const {
    return http::Client(graph_.node(kmstn_id).service_endpoint, {.tls = insecure_ ? std::nullopt : tls_,
                                                                 .identity = id_,
                                                                 .connect_timeout = std::chrono::milliseconds(2000),
                                                                 .read_timeout = options_.peer_timeout});
}

const routing::AttachedKme* KmstnService::local_link_to(const SaeId& master, const SaeId& slave) const {
    for (const auto& k : self_->attached_kmes) {
        if (k.master_sae_id == master && k.slave_sae_id == slave) return &k;
    }
    return nullptr;
}

const routing::AttachedKme* KmstnService::kme_towards(const std::string& neighbour) const {
    const auto& far = graph_.node(neighbour);
    for (const auto& k : self_->attached_kmes) {
        for (const auto& f : far.attached_kmes) {
            if (f.kme_id == k.peer_kme_id) return &k;
        }
    }
    return nullptr;
}

const routing::AttachedKme* KmstnService::kme_for_sender(const SaeId& sender_master) const {
    for (const auto& k : self_->attached_kmes) {
        if (k.slave_sae_id == sender_master) return &k;
    }
    return nullptr;
}

std::string KmstnService::callback_url() const {
    return std::string(insecure_ ? "http://" : "https://") + self_->service_endpoint.str() + ack_path;
}

std::string KmstnService::kmstn_for_url(const std::string& url) const {
    const auto parsed = http::parse_url(url);
    if (parsed.tls == insecure_) fail(Errc::bad_request, "callback scheme does not match the deployment: " + url);
    for (const auto& [id, node] : graph_.nodes()) {
        if (node.service_endpoint == parsed.endpoint) return id;
    }
    fail(Errc::bad_request, "callback " + url + " is not a known kmstn endpoint");
}

bool KmstnService::is_peer(const std::string& caller) const { return graph_.has_node(caller); }

KeyContainer KmstnService::enc_keys_southbound(const routing::AttachedKme& kme, int number, int size,
                                               double* latency_ms) const {
    etsi014::KeyRequest req;
    req.number = number;
    req.size = size;
    const auto resp = southbound(kme).post("/api/v1/keys/" + kme.slave_sae_id.str() + "/enc_keys", etsi014::encode(req));
    http::throw_if_error(resp);
    if (latency_ms) {
        const auto header = resp.header(http::sim_latency_header);
        if (!header.empty()) *latency_ms = std::stod(header);
    }
    return decode_key_container(resp.body);
}

KeyContainer KmstnService::dec_keys_southbound(const routing::AttachedKme& kme, const std::vector<std::string>& ids) const {
    const auto resp = southbound(kme).post("/api/v1/keys/" + kme.slave_sae_id.str() + "/dec_keys",
                                           etsi014::encode(etsi014::KeyIdsRequest{ids}));
    http::throw_if_error(resp);
    return decode_key_container(resp.body);
}

KeyContainer KmstnService::get_key(const SaeId& caller, const SaeId& slave, const etsi014::KeyRequest& request,
                                   double* southbound_latency_ms) {
    const auto& bound = self_->bound_master_saes;
    if (std::find(bound.begin(), bound.end(), caller) == bound.end()) {
        fail(Errc::unauthorized, "SAE " + caller.str() + " is not bound at " + id_);
    }
    ExtKeyContainer probe;
    probe.extension_mandatory = request.extension_mandatory;
    validate_extensions(probe, options_.supported_extensions);

    const auto* kme = local_link_to(caller, slave);
    std::vector<SaeId> relay_targets;
    if (!kme) {
        routing::resolve_destination(graph_, slave);
        relay_targets.push_back(slave);
        for (const auto& k : self_->attached_kmes) {
            if (k.master_sae_id == caller) {
                kme = &k;
                break;
            }
        }
        if (!kme) fail(Errc::unknown_sae, "no local QKD link for SAE " + caller.str());
    }
    for (const auto& extra : request.additional_slave_sae_ids) {
        if (extra == kme->slave_sae_id) continue;
        if (std::find(relay_targets.begin(), relay_targets.end(), extra) == relay_targets.end()) {
            relay_targets.push_back(extra);
        }
    }
    for (const auto& target : relay_targets) {
        const auto dst = routing::resolve_destination(graph_, target);
        if (dst != id_ && !graph_.next_hop(id_, dst)) fail(Errc::unreachable, "no route from " + id_ + " to " + dst);
    }

    auto container = enc_keys_southbound(*kme, request.number, request.size, southbound_latency_ms);
    {
        std::lock_guard lock(mu_);
        stats_.keys_served += container.keys.size();
    }
    if (!relay_targets.empty()) {
        ExtKeyContainer ext;
        ext.keys = container.keys;
        ext.owner_master_sae_id = caller;
        ext.target_sae_ids = relay_targets;
        ext.ack_callback_url = callback_url();
        ext.extension_mandatory = request.extension_mandatory;
        ext.extension_optional = request.extension_optional;
        {
            std::lock_guard lock(mu_);
            const auto deadline = options_.clock->now() + options_.ack_deadline;
            for (const auto& k : ext.keys) pending_acks_[k.key_id] = PendingAck{deadline, std::nullopt};
        }
        accept_container(std::move(ext));
    }
    return container;
}

KeyContainer KmstnService::get_key_with_ids(const SaeId& caller, const SaeId& origin, const std::vector<std::string>& key_ids) {
    const auto& bound = self_->bound_master_saes;
    if (std::find(bound.begin(), bound.end(), caller) == bound.end()) {
        fail(Errc::unauthorized, "SAE " + caller.str() + " is not bound at " + id_);
    }
    if (key_ids.empty()) fail(Errc::bad_request, "no key ids given");
    if (const auto* kme = local_link_to(caller, origin)) {
        try {
            return dec_keys_southbound(*kme, key_ids);
        } catch (const Error& e) {
            if (e.code() != Errc::key_not_present) throw;
        }
    }
    KeyContainer out;
    for (const auto& id : key_ids) out.keys.push_back(keystore_->get_key(id, caller));
    return out;
}

etsi014::Status KmstnService::status(const SaeId& caller, const SaeId& slave) {
    const auto& bound = self_->bound_master_saes;
    if (std::find(bound.begin(), bound.end(), caller) == bound.end()) {
        fail(Errc::unauthorized, "SAE " + caller.str() + " is not bound at " + id_);
    }
    if (const auto* kme = local_link_to(caller, slave)) {
        const auto resp = southbound(*kme).get("/api/v1/keys/" + kme->slave_sae_id.str() + "/status");
        http::throw_if_error(resp);
        auto s = etsi014::decode_status(resp.body);
        s.reachable = true;
        s.kmstn_id = routing::resolve_destination(graph_, slave);
        return s;
    }
    const auto dst = routing::resolve_destination(graph_, slave);
    etsi014::Status s;
    s.source_kme_id = id_;
    s.target_kme_id = dst;
    s.master_sae_id = caller.str();
    s.slave_sae_id = slave.str();
    s.key_size = transport_key_bits;
    s.reachable = dst == id_ || graph_.next_hop(id_, dst).has_value();
    s.kmstn_id = dst;
    return s;
}

EncryptedEnvelope KmstnService::seal_for(const std::string& peer_id, const std::string& plaintext, bool allow_hybrid) {
    const auto* edge = graph_.edge(id_, peer_id);
    const auto* kme = allow_hybrid && edge && edge->qkd_link ? kme_towards(peer_id) : nullptr;

    secure_envelope::MessageKeyMode mode;
    std::string session;
    std::optional<SaeId> sae;
    if (kme) {
        KeyContainer qkd;
        try {
            qkd = enc_keys_southbound(*kme, 1, transport_key_bits, nullptr);
        } catch (const Error& e) {
            if (e.code() == Errc::depleted) fail(Errc::hop_depleted, "QKD link towards " + peer_id + " is depleted");
            throw;
        }
        mode.mode = secure_envelope::KeyMode::hybrid;
        mode.qkd_key = qkd.keys.at(0);
        session = qkd.keys.at(0).key_id;
        sae = kme->master_sae_id;
    } else {
        session = crypto::uuid_v4();
    }

    const auto& peer_cfg = own_config(bundle_, peer_id);
    try {
        kem::initiate_kem(graph_.node(peer_id).pqc_endpoint, session, *registry_, peer_cfg.kem,
                          std::chrono::duration_cast<std::chrono::milliseconds>(options_.peer_timeout));
    } catch (const Error& e) {
        if (e.code() == Errc::connect) fail(Errc::peer_unreachable, e.what());
        throw;
    }
    const auto secret = registry_->lookup_secret(session);
    std::copy(secret.begin(), secret.end(), mode.kem_secret.begin());
    auto key = secure_envelope::derive_message_key(mode);
    auto env = secure_envelope::seal(to_bytes(plaintext), key, session, sae);
    secure_zero(key);
    secure_zero(mode.kem_secret);
    return env;
}

std::string KmstnService::open_from(const EncryptedEnvelope& envelope) {
    secure_envelope::MessageKeyMode mode;
    if (envelope.sae) {
        const auto* kme = kme_for_sender(*envelope.sae);
        if (!kme) fail(Errc::bad_request, "no QKD link with SAE " + envelope.sae->str());
        mode.mode = secure_envelope::KeyMode::hybrid;
        mode.qkd_key = dec_keys_southbound(*kme, {envelope.session}).keys.at(0);
    }
    const auto secret = registry_->lookup_secret(envelope.session);
    std::copy(secret.begin(), secret.end(), mode.kem_secret.begin());
    auto key = secure_envelope::derive_message_key(mode);
    Bytes plain;
    try {
        plain = secure_envelope::open(envelope, key);
    } catch (const Error&) {
        secure_zero(key);
        std::lock_guard lock(mu_);
        ++stats_.envelopes_rejected;
        throw;
    }
    secure_zero(key);
    return to_string(plain);
}

void KmstnService::post_sealed(const std::string& peer_id, const std::string& path, const EncryptedEnvelope& env) {
    EnvelopeObserver observer;
    {
        std::lock_guard lock(mu_);
        observer = envelope_observer_;
    }
    if (observer) observer(path, env);
    http::throw_if_error(peer(peer_id).post(path, encode_envelope(env)));
}

void KmstnService::handle_ext_keys(const std::string& caller, const EncryptedEnvelope& envelope) {
    if (!is_peer(caller)) fail(Errc::unauthorized, "caller " + caller + " is not a kmstn");
    accept_container(decode_ext_key_container(open_from(envelope)));
}

void KmstnService::accept_container(ExtKeyContainer container) {
    validate_extensions(container, options_.supported_extensions);
    const auto callback = kmstn_for_url(container.ack_callback_url);

    std::vector<SaeId> local;
    std::vector<std::pair<SaeId, std::string>> remote;
    for (const auto& target : container.target_sae_ids) {
        const auto dst = routing::resolve_destination(graph_, target);
        if (dst == id_) {
            local.push_back(target);
        } else {
            if (!graph_.next_hop(id_, dst)) fail(Errc::unreachable, "no route from " + id_ + " to " + dst);
            remote.emplace_back(target, dst);
        }
    }

    if (!local.empty()) {
        AckContainer ack;
        ack.ack_status = AckStatus::relayed;
        ack.initiator_sae_id = container.owner_master_sae_id;
        for (const auto& key : container.keys) {
            keystore_->put_key(key, container.owner_master_sae_id, local);
            ack.key_ids.push_back(key.key_id);
        }
        {
            std::lock_guard lock(mu_);
            stats_.keys_stored += container.keys.size();
        }
        if (callback == id_) {
            std::lock_guard lock(mu_);
            for (const auto& id : ack.key_ids) pending_acks_[id].status = AckStatus::relayed;
        } else {
            enqueue_ack(container.ack_callback_url, {ack});
        }
    }
    for (const auto& [target, dst] : remote) {
        RelayJob job;
        job.container = container;
        job.container.target_sae_ids = {target};
        job.destination = dst;
        job.next_hop = *graph_.next_hop(id_, dst);
        const auto* edge = graph_.edge(id_, job.next_hop);
        job.hop_mode = edge->qkd_link ? HopMode::qkd_hybrid : HopMode::pqc_only;
        enqueue_relay(std::move(job));
    }
}

void KmstnService::enqueue_relay(RelayJob job) {
    std::lock_guard lock(mu_);
    if (stopping_) fail(Errc::peer_unreachable, id_ + " is shutting down");
    auto& lane = lanes_[job.next_hop];
    const auto hop = job.next_hop;
    lane.jobs.push_back(std::move(job));
    if (!lane.worker.joinable()) lane.worker = std::thread([this, hop] { relay_loop(hop); });
    relay_cv_.notify_all();
}

void KmstnService::relay_loop(std::string next_hop) {
    std::unique_lock lock(mu_);
    for (;;) {
        auto& lane = lanes_[next_hop];
        relay_cv_.wait(lock, [&] { return stopping_ || !lane.jobs.empty(); });
        if (lane.jobs.empty()) return;
        RelayJob job = std::move(lane.jobs.front());
        lane.jobs.pop_front();
        lane.busy = true;
        lock.unlock();
        bool ok = true;
        try {
            ++job.attempts;
            forward_key(job);
        } catch (const std::exception& e) {
            ok = false;
            log::warn("kmstn", id_ + ": relay of " + std::to_string(job.container.keys.size()) + " key(s) towards " +
                                   job.destination + " via " + job.next_hop + " failed: " + e.what());
        }
        lock.lock();
        ok ? ++stats_.relays_sent : ++stats_.relays_failed;
        lanes_[next_hop].busy = false;
        idle_cv_.notify_all();
    }
}

void KmstnService::forward_key(RelayJob& job) {
    const auto env = seal_for(job.next_hop, encode_ext_key_container(job.container), job.hop_mode == HopMode::qkd_hybrid);
    post_sealed(job.next_hop, ext_keys_path, env);
}

void KmstnService::enqueue_ack(const std::string& url, std::vector<AckContainer> acks) {
    const auto target = kmstn_for_url(url);
    AckTask task{target, http::parse_url(url).path, encode_ack_containers(acks), std::move(acks), 0};
    std::lock_guard lock(mu_);
    ack_queue_.push_back(std::move(task));
    ack_cv_.notify_all();
}

void KmstnService::ack_loop() {
    std::unique_lock lock(mu_);
    for (;;) {
        ack_cv_.wait(lock, [&] { return stopping_ || !ack_queue_.empty(); });
        if (ack_queue_.empty()) return;
        AckTask task = std::move(ack_queue_.front());
        ack_queue_.pop_front();
        ack_busy_ = true;
        auto observer = ack_observer_;
        lock.unlock();
        bool sent = false;
        while (!sent && task.attempts < options_.ack_attempts) {
            ++task.attempts;
            try {
                if (observer) observer(task.acks);
                post_sealed(task.callback_kmstn, task.path, seal_for(task.callback_kmstn, task.plaintext, true));
                sent = true;
            } catch (const std::exception& e) {
                log::warn("kmstn", id_ + ": ACK to " + task.callback_kmstn + " attempt " + std::to_string(task.attempts) +
                                       " failed: " + e.what());
                if (task.attempts < options_.ack_attempts) {
                    std::unique_lock wait_lock(mu_);
                    if (stopping_) break;
                    idle_cv_.wait_for(wait_lock, options_.ack_backoff * task.attempts, [&] { return stopping_; });
                }
            }
        }
        if (!sent) log::warn("kmstn", id_ + ": dropping ACK for " + task.callback_kmstn + "; keys are not retransmitted");
        lock.lock();
        sent ? ++stats_.acks_sent : ++stats_.acks_dropped;
        ack_busy_ = false;
        idle_cv_.notify_all();
    }
}

void KmstnService::handle_ack_containers(const std::string& caller, const EncryptedEnvelope& envelope) {
    if (!is_peer(caller)) fail(Errc::unauthorized, "caller " + caller + " is not a kmstn");
    const auto acks = decode_ack_containers(open_from(envelope));
    std::lock_guard lock(mu_);
    for (const auto& ack : acks) {
        ++stats_.acks_received;
        for (const auto& id : ack.key_ids) pending_acks_[id].status = ack.ack_status;
    }
}

void KmstnService::handle_void_keys(const std::string& caller, const EncryptedEnvelope& envelope) {
    if (!is_peer(caller)) fail(Errc::unauthorized, "caller " + caller + " is not a kmstn");
    const auto request = decode_void_request(open_from(envelope));
    kmstn_for_url(request.ack_callback_url);
    AckContainer voided{{}, AckStatus::voided, request.initiator_sae_id, std::nullopt};
    AckContainer missing{{}, AckStatus::key_not_present, request.initiator_sae_id, std::nullopt};
    for (const auto& id : request.key_ids) {
        try {
            keystore_->void_key(id);
            voided.key_ids.push_back(id);
        } catch (const Error& e) {
            if (e.code() != Errc::key_not_present) throw;
            missing.key_ids.push_back(id);
        }
    }
    std::vector<AckContainer> acks;
    if (!voided.key_ids.empty()) acks.push_back(voided);
    if (!missing.key_ids.empty()) acks.push_back(missing);
    if (!acks.empty()) enqueue_ack(request.ack_callback_url, std::move(acks));
}

void KmstnService::request_void(const std::string& destination, const std::vector<std::string>& key_ids,
                                const SaeId& initiator) {
    if (!graph_.has_node(destination)) fail(Errc::unreachable, "unknown kmstn " + destination);
    if (key_ids.empty()) fail(Errc::bad_request, "no key ids given");
    const auto body = encode_void_request(VoidRequest{key_ids, initiator, callback_url()});
    post_sealed(destination, void_path, seal_for(destination, body, true));
}

bool KmstnService::wait_idle(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return idle_cv_.wait_for(lock, timeout, [&] {
        if (!ack_queue_.empty() || ack_busy_) return false;
        for (const auto& [_, lane] : lanes_) {
            if (!lane.jobs.empty() || lane.busy) return false;
        }
        return true;
    });
}

std::optional<AckStatus> KmstnService::ack_status(const std::string& key_id) const {
    std::lock_guard lock(mu_);
    auto it = pending_acks_.find(key_id);
    if (it == pending_acks_.end()) return std::nullopt;
    if (it->second.status) return it->second.status;
    if (options_.clock->now() > it->second.deadline) return AckStatus::failed;
    return std::nullopt;
}

ServiceStats KmstnService::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

void KmstnService::set_envelope_observer(EnvelopeObserver observer) {
    std::lock_guard lock(mu_);
    envelope_observer_ = std::move(observer);
}

void KmstnService::set_ack_observer(AckObserver observer) {
    std::lock_guard lock(mu_);
    ack_observer_ = std::move(observer);
}

}  // namespace kmstn::service
