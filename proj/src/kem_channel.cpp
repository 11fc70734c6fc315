#include "kmstn/kem_channel.hpp"

#include <sys/socket.h>

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/log.hpp"

namespace kmstn::kem {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

bool valid_kind(std::uint8_t k) {
    return (k >= 0x01 && k <= 0x04) || k == 0xFF;
}

Frame error_frame(const std::string& session, std::string_view message) {
    return Frame{FrameKind::error, session, to_bytes(message)};
}

}  // namespace

Bytes encode_frame(const Frame& frame) {
    if (frame.session_id.size() > 0xFFFF) fail(Errc::protocol, "session id too long");
    const std::size_t length = 1 + 2 + frame.session_id.size() + frame.payload.size();
    if (length > max_frame_size) fail(Errc::protocol, "frame too large");
    Bytes out;
    out.reserve(4 + length);
    put_u32(out, static_cast<std::uint32_t>(length));
    out.push_back(static_cast<std::uint8_t>(frame.kind));
    out.push_back(static_cast<std::uint8_t>(frame.session_id.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(frame.session_id.size()));
    out.insert(out.end(), frame.session_id.begin(), frame.session_id.end());
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

Frame decode_frame(ByteView body) {
    if (body.size() < 3) fail(Errc::protocol, "truncated frame");
    if (!valid_kind(body[0])) fail(Errc::protocol, "unknown frame kind");
    const std::size_t sid_len = (std::size_t{body[1]} << 8) | body[2];
    if (body.size() < 3 + sid_len) fail(Errc::protocol, "truncated session id");
    Frame f;
    f.kind = static_cast<FrameKind>(body[0]);
    f.session_id.assign(body.begin() + 3, body.begin() + 3 + static_cast<std::ptrdiff_t>(sid_len));
    f.payload.assign(body.begin() + 3 + static_cast<std::ptrdiff_t>(sid_len), body.end());
    return f;
}

std::optional<Frame> read_frame(net::Socket& sock) {
    std::array<std::uint8_t, 4> len_buf{};
    if (!sock.read_exact(len_buf)) return std::nullopt;
    const std::uint32_t length = (std::uint32_t{len_buf[0]} << 24) | (std::uint32_t{len_buf[1]} << 16) |
                                 (std::uint32_t{len_buf[2]} << 8) | len_buf[3];
    if (length > max_frame_size) fail(Errc::protocol, "frame too large");
    Bytes body(length);
    if (length > 0 && !sock.read_exact(body)) fail(Errc::protocol, "connection closed mid-frame");
    return decode_frame(body);
}

void write_frame(net::Socket& sock, const Frame& frame) { sock.write_all(encode_frame(frame)); }

SessionRegistry::SessionRegistry(std::shared_ptr<const Clock> clock, Nanos ttl)
    : clock_(std::move(clock)), ttl_(ttl) {}

SessionRegistry::~SessionRegistry() {
    for (auto& [_, e] : sessions_) secure_zero(e.secret);
}

void SessionRegistry::store(const std::string& session_id, const SharedSecret& secret, Role role) {
    std::lock_guard lock(mu_);
    const auto now = clock_->now();
    evict_locked(now);
    if (sessions_.contains(session_id)) fail(Errc::protocol, "duplicate KEM session " + session_id);
    sessions_.emplace(session_id, Entry{secret, role, now, false});
    ++stored_total_;
}

SharedSecret SessionRegistry::lookup_secret(const std::string& session_id) {
    std::lock_guard lock(mu_);
    evict_locked(clock_->now());
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(Errc::not_found, "unknown KEM session " + session_id);
    if (it->second.consumed) fail(Errc::already_consumed, "KEM session already consumed: " + session_id);
    SharedSecret out = it->second.secret;
    secure_zero(it->second.secret);
    it->second.consumed = true;
    ++consumed_total_;
    return out;
}

void SessionRegistry::evict_expired() {
    std::lock_guard lock(mu_);
    evict_locked(clock_->now());
}

void SessionRegistry::evict_locked(Nanos now) {
    // Consumed entries stay as tombstones for one TTL so a replay still
    // reports AlreadyConsumed.
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now - it->second.created_at >= ttl_) {
            secure_zero(it->second.secret);
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
}

std::size_t SessionRegistry::pending() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [_, e] : sessions_) n += e.consumed ? 0 : 1;
    return n;
}

std::size_t SessionRegistry::stored_total() const {
    std::lock_guard lock(mu_);
    return stored_total_;
}

std::size_t SessionRegistry::consumed_total() const {
    std::lock_guard lock(mu_);
    return consumed_total_;
}

KemServer::KemServer(const net::Endpoint& listen, std::shared_ptr<SessionRegistry> registry,
                     mlkem::ParameterSet set, std::shared_ptr<const Clock> clock)
    : listener_(listen), registry_(std::move(registry)), set_(set), clock_(std::move(clock)) {
    acceptor_ = std::thread([this] { accept_loop(); });
}

KemServer::~KemServer() { stop(); }

void KemServer::stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.close();
    std::list<Worker> workers;
    {
        std::lock_guard lock(mu_);
        for (auto& w : workers_) {
            if (!w.done->load()) ::shutdown(w.fd, SHUT_RDWR);
        }
        workers.swap(workers_);
    }
    for (auto& w : workers) w.thread.join();
    std::lock_guard lock(mu_);
    for (auto& [_, p] : pending_) secure_zero(p.decapsulation_key);
    pending_.clear();
}

std::vector<Bytes> KemServer::issued_key_digests() const {
    std::lock_guard lock(mu_);
    return issued_;
}

void KemServer::accept_loop() {
    while (running_.load()) {
        auto sock = listener_.accept(std::chrono::milliseconds(100));
        std::lock_guard lock(mu_);
        for (auto it = workers_.begin(); it != workers_.end();) {
            if (it->done->load()) {
                it->thread.join();
                it = workers_.erase(it);
            } else {
                ++it;
            }
        }
        if (!sock) continue;
        auto done = std::make_shared<std::atomic<bool>>(false);
        const int fd = sock->fd();
        workers_.push_back(Worker{std::thread([this, s = std::move(*sock), done]() mutable {
                                      serve(std::move(s));
                                      done->store(true);
                                  }),
                                  done, fd});
    }
}

void KemServer::serve(net::Socket sock) {
    sock.set_timeout(std::chrono::seconds(30));
    try {
        while (running_.load()) {
            auto frame = read_frame(sock);
            if (!frame) return;
            if (!handle_frame(sock, *frame)) return;
        }
    } catch (const Error& e) {
        try {
            write_frame(sock, error_frame("", "bad request"));
        } catch (const Error&) {
        }
        log::debug("kem", std::string("connection dropped: ") + e.what());
    }
}

bool KemServer::handle_frame(net::Socket& sock, const Frame& frame) {
    switch (frame.kind) {
        case FrameKind::public_key_request: {
            if (to_string(frame.payload) != request_public_key || frame.session_id.empty()) {
                write_frame(sock, error_frame(frame.session_id, "bad request"));
                return false;
            }
            auto kp = mlkem::keygen(set_);
            {
                std::lock_guard lock(mu_);
                const auto now = clock_->now();
                for (auto it = pending_.begin(); it != pending_.end();) {
                    if (now - it->second.created_at >= std::chrono::seconds(300)) {
                        secure_zero(it->second.decapsulation_key);
                        it = pending_.erase(it);
                    } else {
                        ++it;
                    }
                }
                if (pending_.contains(frame.session_id)) {
                    secure_zero(kp.decapsulation_key);
                    write_frame(sock, error_frame(frame.session_id, "bad request"));
                    return false;
                }
                pending_[frame.session_id] = Pending{std::move(kp.decapsulation_key), now};
                if (issued_.size() < max_tracked_keys) {
                    const auto digest = crypto::sha256(kp.encapsulation_key);
                    issued_.emplace_back(digest.begin(), digest.end());
                }
            }
            write_frame(sock, Frame{FrameKind::public_key_reply, frame.session_id, kp.encapsulation_key});
            return true;
        }
        case FrameKind::ciphertext: {
            Pending p;
            {
                std::lock_guard lock(mu_);
                auto it = pending_.find(frame.session_id);
                if (it == pending_.end()) {
                    write_frame(sock, error_frame(frame.session_id, "unknown session"));
                    return false;
                }
                p = std::move(it->second);
                pending_.erase(it);
            }
            SharedSecret secret{};
            try {
                secret = mlkem::decapsulate(set_, p.decapsulation_key, frame.payload);
            } catch (const Error&) {
                secure_zero(p.decapsulation_key);
                write_frame(sock, error_frame(frame.session_id, "bad request"));
                return false;
            }
            secure_zero(p.decapsulation_key);
            try {
                registry_->store(frame.session_id, secret, Role::responder);
            } catch (const Error&) {
                secure_zero(secret);
                write_frame(sock, error_frame(frame.session_id, "bad request"));
                return false;
            }
            secure_zero(secret);
            write_frame(sock, Frame{FrameKind::done, frame.session_id, {}});
            return false;
        }
        default:
            write_frame(sock, error_frame(frame.session_id, "bad request"));
            return false;
    }
}

SharedSecret initiate_kem(const net::Endpoint& peer, const std::string& session_id, SessionRegistry& local,
                          mlkem::ParameterSet set, std::chrono::milliseconds timeout) {
    if (session_id.empty()) fail(Errc::protocol, "empty session id");
    auto sock = net::connect_tcp(peer, timeout);
    sock.set_timeout(timeout);

    auto expect = [&](FrameKind kind) {
        std::optional<Frame> f;
        try {
            f = read_frame(sock);
        } catch (const Error& e) {
            fail(Errc::protocol, std::string("KEM exchange aborted: ") + e.what());
        }
        if (!f) fail(Errc::protocol, "peer closed the KEM exchange");
        if (f->kind == FrameKind::error) fail(Errc::protocol, "peer error: " + to_string(f->payload));
        if (f->kind != kind || f->session_id != session_id) fail(Errc::protocol, "unexpected KEM frame");
        return std::move(*f);
    };

    try {
        write_frame(sock, Frame{FrameKind::public_key_request, session_id, to_bytes(request_public_key)});
    } catch (const Error& e) {
        fail(Errc::connect, std::string("cannot reach KEM peer: ") + e.what());
    }
    const auto reply = expect(FrameKind::public_key_reply);
    auto enc = mlkem::encapsulate(set, reply.payload);
    write_frame(sock, Frame{FrameKind::ciphertext, session_id, enc.ciphertext});
    expect(FrameKind::done);

    local.store(session_id, enc.shared_secret, Role::initiator);
    return enc.shared_secret;
}

}  // namespace kmstn::kem
