#include "kmstn/qkd_sim.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/log.hpp"

namespace kmstn::sim {

namespace {

constexpr std::size_t issued_limit = 100000;

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

}  // namespace

QkdPair::QkdPair(LinkProfile profile, std::uint64_t seed, std::shared_ptr<Clock> clock)
    : profile_(profile), seed_(seed), clock_(std::move(clock)), burst_rng_(seed), latency_rng_(seed ^ 0x9E3779B97F4A7C15ULL) {
    profile_.validate();
    const auto initial = profile_.initial_keys < 0 ? profile_.buffer_capacity_keys : profile_.initial_keys;
    append_blocks(initial);
    std::exponential_distribution<double> gap(1.0 / profile_.mean_burst_interval_s());
    next_burst_ = clock_->now() + from_seconds(gap(burst_rng_));
}

void QkdPair::append_blocks(std::int64_t count) const {
    const std::size_t block_bytes = static_cast<std::size_t>(profile_.block_size_bits) / 8;
    for (std::int64_t i = 0; i < count; ++i) {
        Bytes input = to_bytes("kmstn-sim-block");
        for (int b = 0; b < 8; ++b) input.push_back(static_cast<std::uint8_t>(seed_ >> (8 * b)));
        for (int b = 0; b < 8; ++b) input.push_back(static_cast<std::uint8_t>(next_block_ >> (8 * b)));
        ++next_block_;
        Bytes out = crypto::shake256(input, 16 + block_bytes);
        std::array<std::uint8_t, 16> raw{};
        std::copy_n(out.begin(), 16, raw.begin());
        buffer_.push_back(KeyBlock{crypto::uuid_v4_from(raw), Bytes(out.begin() + 16, out.end())});
    }
}

void QkdPair::catch_up() const {
    const auto now = clock_->now();
    std::exponential_distribution<double> gap(1.0 / profile_.mean_burst_interval_s());
    while (next_burst_ <= now) {
        const auto room = profile_.buffer_capacity_keys - static_cast<std::int64_t>(buffer_.size());
        if (!paused_ && room > 0) {
            const auto added = std::min<std::int64_t>(room, profile_.blocks_per_burst);
            append_blocks(added);
            generated_bits_ += static_cast<std::uint64_t>(added) * static_cast<std::uint64_t>(profile_.block_size_bits);
        }
        next_burst_ += from_seconds(gap(burst_rng_));
    }
}

KeyContainer QkdPair::enc_keys(int number, int size_bits) {
    if (number < 1 || number > max_keys_per_request) {
        fail(Errc::bad_request, "number must be in [1, " + std::to_string(max_keys_per_request) + "]");
    }
    if (size_bits <= 0 || size_bits % 8 != 0 || size_bits > profile_.block_size_bits) {
        fail(Errc::bad_request, "size must be a positive multiple of 8 up to " + std::to_string(profile_.block_size_bits));
    }
    std::lock_guard lock(mu_);
    catch_up();
    if (buffer_.size() < static_cast<std::size_t>(number)) {
        fail(Errc::depleted, "key buffer holds " + std::to_string(buffer_.size()) + " keys, " +
                                 std::to_string(number) + " requested");
    }
    KeyContainer out;
    for (int i = 0; i < number; ++i) {
        KeyBlock k = std::move(buffer_.front());
        buffer_.pop_front();
        k.key_material.resize(static_cast<std::size_t>(size_bits) / 8);
        issued_.emplace(k.key_id, k.key_material);
        issued_order_.push_back(k.key_id);
        if (issued_order_.size() > issued_limit) {
            issued_.erase(issued_order_.front());
            issued_order_.pop_front();
        }
        out.keys.push_back(std::move(k));
    }
    delivered_ += static_cast<std::uint64_t>(number);
    return out;
}

KeyContainer QkdPair::dec_keys(const std::vector<std::string>& key_ids) const {
    if (key_ids.empty()) fail(Errc::bad_request, "no key ids given");
    std::lock_guard lock(mu_);
    KeyContainer out;
    std::vector<std::string> missing;
    for (const auto& id : key_ids) {
        auto it = issued_.find(id);
        if (it == issued_.end()) {
            missing.push_back(id);
            continue;
        }
        KeyBlock k{id, it->second};
        if (corrupt_) k.key_material[k.key_material.size() / 2] ^= 0x01;
        out.keys.push_back(std::move(k));
    }
    if (!missing.empty()) fail(Errc::key_not_present, "unknown key ids: " + join(missing));
    return out;
}

std::int64_t QkdPair::stored() const {
    std::lock_guard lock(mu_);
    catch_up();
    return static_cast<std::int64_t>(buffer_.size());
}

std::uint64_t QkdPair::generated_bits() const {
    std::lock_guard lock(mu_);
    catch_up();
    return generated_bits_;
}

std::uint64_t QkdPair::delivered_keys() const {
    std::lock_guard lock(mu_);
    return delivered_;
}

void QkdPair::pause_generation(bool paused) {
    std::lock_guard lock(mu_);
    catch_up();
    paused_ = paused;
}

bool QkdPair::paused() const {
    std::lock_guard lock(mu_);
    return paused_;
}

void QkdPair::fill_to_capacity() {
    std::lock_guard lock(mu_);
    catch_up();
    append_blocks(profile_.buffer_capacity_keys - static_cast<std::int64_t>(buffer_.size()));
}

void QkdPair::drain() {
    std::lock_guard lock(mu_);
    catch_up();
    buffer_.clear();
}

double QkdPair::sample_latency_ms() {
    std::lock_guard lock(mu_);
    if (profile_.latency_median_ms <= 0) return 0.0;
    std::lognormal_distribution<double> dist(std::log(profile_.latency_median_ms), profile_.latency_sigma);
    return dist(latency_rng_);
}

void QkdPair::corrupt_dec_keys(bool on) {
    std::lock_guard lock(mu_);
    corrupt_ = on;
}

QkdNodeServer::QkdNodeServer(config::QkdNodeConfig config, std::shared_ptr<QkdPair> pair, bool insecure,
                             LatencyMode mode)
    : config_(std::move(config)),
      pair_(std::move(pair)),
      mode_(mode),
      server_(insecure ? std::nullopt : config_.tls) {
    if (!insecure && !config_.tls) fail(Errc::config, "kme " + config_.kme_id.str() + " needs TLS files");
    const std::string keys = R"(/api/v1/keys/([^/]+))";
    server_.route("GET", keys + "/status", [this](const http::Request& r) {
        record(r);
        check_sae(r.params.at(0));
        return http::Response{200, etsi014::encode(status())};
    });
    server_.route("POST", keys + "/enc_keys", [this](const http::Request& r) {
        record(r);
        check_sae(r.params.at(0));
        const auto req = etsi014::decode_key_request(r.body);
        if (!req.additional_slave_sae_ids.empty()) {
            std::vector<std::string> names;
            for (const auto& s : req.additional_slave_sae_ids) names.push_back(s.str());
            fail(Errc::bad_request, "unknown additional slave SAEs: " + join(names));
        }
        const double latency = pair_->sample_latency_ms();
        auto container = pair_->enc_keys(req.number, req.size);
        if (mode_ == LatencyMode::sleep) std::this_thread::sleep_for(from_millis(latency));
        http::Response resp{200, encode_key_container(container)};
        if (mode_ == LatencyMode::report) resp.headers[http::sim_latency_header] = std::to_string(latency);
        return resp;
    });
    server_.route("POST", keys + "/dec_keys", [this](const http::Request& r) {
        record(r);
        check_sae(r.params.at(0));
        const auto req = etsi014::decode_key_ids_request(r.body);
        return http::Response{200, encode_key_container(pair_->dec_keys(req.key_ids))};
    });
    server_.route("POST", R"(/sim/v1/control)", [this](const http::Request& r) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(r.body);
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::parse, e.what());
        }
        if (!doc.is_object()) fail(Errc::bad_request, "control body must be an object");
        if (doc.contains("paused")) pair_->pause_generation(doc.at("paused").get<bool>());
        if (doc.value("drain", false)) pair_->drain();
        if (doc.value("fill", false)) pair_->fill_to_capacity();
        if (doc.contains("corrupt_dec_keys")) pair_->corrupt_dec_keys(doc.at("corrupt_dec_keys").get<bool>());
        nlohmann::json out{{"stored_key_count", pair_->stored()},
                           {"generated_bits", pair_->generated_bits()},
                           {"delivered_keys", pair_->delivered_keys()},
                           {"paused", pair_->paused()}};
        return http::Response{200, out.dump()};
    });
}

QkdNodeServer::~QkdNodeServer() { stop(); }

std::uint16_t QkdNodeServer::bind() { return server_.bind(config_.endpoint); }
void QkdNodeServer::start() { server_.start(); }
void QkdNodeServer::stop() { server_.stop(); }

void QkdNodeServer::check_sae(const std::string& path_sae) const {
    if (path_sae != config_.slave_sae_id.str()) {
        fail(Errc::unknown_sae, "kme " + config_.kme_id.str() + " has no link to SAE " + path_sae);
    }
}

void QkdNodeServer::record(const http::Request& r) {
    std::lock_guard lock(log_mu_);
    log_.push_back({r.method, r.path, r.body, r.caller});
}

etsi014::Status QkdNodeServer::status() const {
    etsi014::Status s;
    s.source_kme_id = config_.kme_id.str();
    s.target_kme_id = config_.peer_kme_id.str();
    s.master_sae_id = config_.master_sae_id.str();
    s.slave_sae_id = config_.slave_sae_id.str();
    s.key_size = pair_->profile().block_size_bits;
    s.stored_key_count = pair_->stored();
    s.max_key_count = pair_->capacity();
    s.max_key_per_request = max_keys_per_request;
    s.max_key_size = pair_->profile().block_size_bits;
    s.min_key_size = 8;
    s.max_sae_id_count = 0;
    return s;
}

std::vector<RequestLogEntry> QkdNodeServer::request_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
}

void RunningPair::stop() {
    if (alice) alice->stop();
    if (bob) bob->stop();
}

RunningPair run_pair(const config::QkdNodeConfig& alice, const config::QkdNodeConfig& bob, bool insecure,
                     std::shared_ptr<Clock> clock, LatencyMode mode) {
    if (alice.peer_kme_id != bob.kme_id || bob.peer_kme_id != alice.kme_id) {
        fail(Errc::config, "kmes " + alice.kme_id.str() + " and " + bob.kme_id.str() + " are not peers");
    }
    RunningPair running;
    running.pair = std::make_shared<QkdPair>(alice.link, alice.seed, std::move(clock));
    running.alice = std::make_unique<QkdNodeServer>(alice, running.pair, insecure, mode);
    running.bob = std::make_unique<QkdNodeServer>(bob, running.pair, insecure, mode);
    running.alice->bind();
    running.bob->bind();
    running.alice->start();
    running.bob->start();
    log::info("qkd-sim", "pair " + alice.kme_id.str() + "/" + bob.kme_id.str() + " serving on ports " +
                             std::to_string(running.alice->port()) + " and " + std::to_string(running.bob->port()));
    return running;
}

}  // namespace kmstn::sim
