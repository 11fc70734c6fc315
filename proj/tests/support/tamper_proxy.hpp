#pragma once

#include <atomic>
#include <list>
#include <mutex>
#include <thread>

#include "kmstn/error.hpp"
#include "kmstn/kem_channel.hpp"
#include "kmstn/net.hpp"

namespace kmstn::fixtures {

// Frame-aware TCP relay in front of a KEM server. While armed, flips one bit
// in the payload of every ciphertext frame travelling to the server.
class TamperProxy {
public:
    explicit TamperProxy(net::Endpoint upstream)
        : upstream_(std::move(upstream)), listener_(net::Endpoint{"127.0.0.1", 0}) {
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ~TamperProxy() {
        running_ = false;
        acceptor_.join();
        std::lock_guard lock(mu_);
        for (auto& c : conns_) {
            c.client.shutdown();
            c.server.shutdown();
        }
        for (auto& c : conns_) {
            c.up.join();
            c.down.join();
        }
    }

    net::Endpoint endpoint() const { return {"127.0.0.1", listener_.port()}; }
    void arm(bool on) { armed_ = on; }
    int tampered() const { return tampered_; }

private:
    struct Conn {
        net::Socket client;
        net::Socket server;
        std::thread up;
        std::thread down;
    };

    void pump(net::Socket& from, net::Socket& to, bool tamper_direction) {
        try {
            while (auto frame = kem::read_frame(from)) {
                if (tamper_direction && armed_ && frame->kind == kem::FrameKind::ciphertext &&
                    !frame->payload.empty()) {
                    frame->payload[frame->payload.size() / 2] ^= 0x01;
                    ++tampered_;
                }
                kem::write_frame(to, *frame);
            }
        } catch (const Error&) {
        }
        to.shutdown();
    }

    void accept_loop() {
        while (running_) {
            auto client = listener_.accept(std::chrono::milliseconds(50));
            if (!client) continue;
            net::Socket server;
            try {
                server = net::connect_tcp(upstream_);
            } catch (const Error&) {
                continue;
            }
            std::lock_guard lock(mu_);
            auto& c = conns_.emplace_back();
            c.client = std::move(*client);
            c.server = std::move(server);
            c.up = std::thread([this, &c] { pump(c.client, c.server, true); });
            c.down = std::thread([this, &c] { pump(c.server, c.client, false); });
        }
    }

    net::Endpoint upstream_;
    net::Listener listener_;
    std::atomic<bool> running_{true};
    std::atomic<bool> armed_{false};
    std::atomic<int> tampered_{0};
    std::mutex mu_;
    std::list<Conn> conns_;
    std::thread acceptor_;
};

}  // namespace kmstn::fixtures
