#define CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_LISTEN_BACKLOG 512
#include "httplib.h"

#include "kmstn/http.hpp"

#include <openssl/x509.h>

#include <regex>
#include <thread>

#include "kmstn/error.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/log.hpp"

namespace kmstn::http {

namespace {

std::string lookup(const std::map<std::string, std::string>& headers, const std::string& name) {
    for (const auto& [k, v] : headers) {
        if (k.size() == name.size() && std::equal(k.begin(), k.end(), name.begin(), [](char a, char b) {
                return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
            })) {
            return v;
        }
    }
    return {};
}

std::string peer_common_name(const SSL* ssl) {
    if (!ssl) return {};
    X509* cert = SSL_get1_peer_certificate(ssl);
    if (!cert) return {};
    char buf[256] = {};
    const int n = X509_NAME_get_text_by_NID(X509_get_subject_name(cert), NID_commonName, buf, sizeof buf);
    X509_free(cert);
    return n > 0 ? std::string(buf, static_cast<std::size_t>(n)) : std::string();
}

Errc errc_for_status(int status) {
    switch (status) {
        case 400: return Errc::bad_request;
        case 401:
        case 403: return Errc::unauthorized;
        case 404: return Errc::key_not_present;
        case 410: return Errc::voided;
        case 502: return Errc::peer_unreachable;
        case 503: return Errc::depleted;
        default: return Errc::internal;
    }
}

}  // namespace

std::string Request::header(const std::string& name) const { return lookup(headers, name); }
std::string Response::header(const std::string& name) const { return lookup(headers, name); }

int status_for(Errc code) {
    switch (code) {
        case Errc::parse:
        case Errc::invariant:
        case Errc::mandatory_extension:
        case Errc::empty_input:
        case Errc::bad_request:
        case Errc::protocol: return 400;
        case Errc::unauthorized: return 401;
        case Errc::auth_failure: return 403;
        case Errc::not_found:
        case Errc::key_not_present:
        case Errc::unknown_sae: return 404;
        case Errc::ambiguous_binding:
        case Errc::duplicate_key_id:
        case Errc::already_consumed: return 409;
        case Errc::voided: return 410;
        case Errc::unreachable:
        case Errc::peer_unreachable:
        case Errc::connect: return 502;
        case Errc::depleted:
        case Errc::hop_depleted: return 503;
        default: return 500;
    }
}

Response error_response(int status, const std::string& message, std::vector<std::string> details) {
    Response r;
    r.status = status;
    r.body = etsi014::encode(etsi014::ErrorBody{message, std::move(details)});
    return r;
}

void throw_if_error(const Response& response) {
    if (response.status >= 200 && response.status < 300) return;
    const auto body = etsi014::decode_error(response.body);
    const auto code = parse_errc(response.header(error_code_header)).value_or(errc_for_status(response.status));
    if (code == Errc::mandatory_extension) throw MandatoryExtensionError(body.details);
    fail(code, body.message.empty() ? "HTTP " + std::to_string(response.status) : body.message);
}

struct Server::Impl {
    std::unique_ptr<httplib::Server> server;
    bool tls = false;
    std::thread thread;
};

Server::Server(const std::optional<config::TlsFiles>& tls, int threads) : impl_(std::make_unique<Impl>()) {
    if (tls) {
        auto s = std::make_unique<httplib::SSLServer>(tls->cert.c_str(), tls->key.c_str(), tls->ca.c_str());
        if (!s->is_valid()) fail(Errc::config, "cannot load TLS material " + tls->cert.string());
        impl_->server = std::move(s);
        impl_->tls = true;
    } else {
        impl_->server = std::make_unique<httplib::Server>();
    }
    impl_->server->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    impl_->server->set_keep_alive_max_count(1);
    impl_->server->set_socket_options([](int sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
}

Server::~Server() { stop(); }

void Server::route(const std::string& method, const std::string& pattern, Handler handler) {
    const bool tls = impl_->tls;
    auto adapter = [tls, method, handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
        Request r;
        r.method = method;
        r.path = req.path;
        for (std::size_t i = 1; i < req.matches.size(); ++i) r.params.push_back(req.matches[i].str());
        r.body = req.body;
        for (const auto& [k, v] : req.headers) r.headers.emplace(k, v);
        r.caller = tls ? peer_common_name(req.ssl) : req.get_header_value(client_id_header);

        Response out;
        try {
            out = handler(r);
        } catch (const MandatoryExtensionError& e) {
            out = error_response(status_for(e.code()), e.what(), e.unsupported());
            out.headers[error_code_header] = std::string(to_string(e.code()));
        } catch (const Error& e) {
            out = error_response(status_for(e.code()), e.what());
            out.headers[error_code_header] = std::string(to_string(e.code()));
        } catch (const std::exception& e) {
            log::error("http", std::string("handler failed: ") + e.what());
            out = error_response(500, "internal error");
        }
        res.status = out.status;
        for (const auto& [k, v] : out.headers) res.set_header(k, v);
        res.set_content(out.body, out.content_type);
    };
    if (method == "GET") {
        impl_->server->Get(pattern, adapter);
    } else if (method == "POST") {
        impl_->server->Post(pattern, adapter);
    } else {
        fail(Errc::internal, "unsupported method " + method);
    }
}

std::uint16_t Server::bind(const net::Endpoint& endpoint) {
    int port = endpoint.port;
    if (port == 0) {
        port = impl_->server->bind_to_any_port(endpoint.host);
        if (port <= 0) fail(Errc::bind, "cannot bind " + endpoint.host + ":0");
    } else if (!impl_->server->bind_to_port(endpoint.host, port)) {
        fail(Errc::bind, "cannot bind " + endpoint.str());
    }
    port_ = static_cast<std::uint16_t>(port);
    return port_;
}

void Server::start() {
    if (impl_->thread.joinable()) return;
    if (port_ == 0) fail(Errc::bind, "start() before bind()");
    impl_->thread = std::thread([this] { impl_->server->listen_after_bind(); });
    impl_->server->wait_until_ready();
}

void Server::stop() {
    if (!impl_ || !impl_->server) return;
    if (port_ != 0 && !impl_->thread.joinable()) {
        // Bound but never started: the listening socket is only released by
        // a running server.
        impl_->thread = std::thread([this] { impl_->server->listen_after_bind(); });
        impl_->server->wait_until_ready();
    }
    impl_->server->stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

Client::Client(net::Endpoint target, ClientOptions options) : target_(std::move(target)), options_(std::move(options)) {}

std::string Client::base_url() const { return std::string(tls() ? "https://" : "http://") + target_.str(); }

Response Client::get(const std::string& path, const std::map<std::string, std::string>& headers) const {
    return send("GET", path, nullptr, headers);
}

Response Client::post(const std::string& path, const std::string& body,
                      const std::map<std::string, std::string>& headers) const {
    return send("POST", path, &body, headers);
}

Response Client::send(const std::string& method, const std::string& path, const std::string* body,
                      const std::map<std::string, std::string>& headers) const {
    std::unique_ptr<httplib::ClientImpl> client;
    if (options_.tls) {
        auto c = std::make_unique<httplib::SSLClient>(target_.host, target_.port, options_.tls->cert.string(),
                                                      options_.tls->key.string());
        c->set_ca_cert_path(options_.tls->ca.string());
        c->enable_server_certificate_verification(true);
        // A rejected client certificate then fails the handshake itself
        // instead of surfacing later as a broken write.
        SSL_CTX_set_max_proto_version(c->ssl_context(), TLS1_2_VERSION);
        client = std::move(c);
    } else {
        client = std::make_unique<httplib::ClientImpl>(target_.host, target_.port);
    }
    const auto ct = options_.connect_timeout.count();
    const auto rt = options_.read_timeout.count();
    client->set_connection_timeout(ct / 1000, (ct % 1000) * 1000);
    client->set_read_timeout(rt / 1000, (rt % 1000) * 1000);
    client->set_write_timeout(rt / 1000, (rt % 1000) * 1000);

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    if (!options_.tls && !options_.identity.empty()) h.emplace(client_id_header, options_.identity);

    auto result = method == "GET" ? client->Get(path, h) : client->Post(path, h, *body, "application/json");
    if (!result) {
        const auto err = result.error();
        const auto what = httplib::to_string(err);
        if (err == httplib::Error::SSLConnection || err == httplib::Error::SSLServerVerification ||
            err == httplib::Error::SSLLoadingCerts) {
            fail(Errc::unauthorized, "TLS handshake with " + target_.str() + " failed: " + what);
        }
        fail(Errc::peer_unreachable, "no response from " + target_.str() + ": " + what);
    }
    Response r;
    r.status = result->status;
    r.body = result->body;
    for (const auto& [k, v] : result->headers) r.headers.emplace(k, v);
    return r;
}

ParsedUrl parse_url(const std::string& url) {
    static const std::regex re(R"(^(https?)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:.]+\]):([0-9]{1,5})(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) fail(Errc::bad_request, "malformed URL " + url);
    const int port = std::stoi(m[3].str());
    if (port <= 0 || port > 65535) fail(Errc::bad_request, "bad port in " + url);
    return ParsedUrl{m[1] == "https", {m[2].str(), static_cast<std::uint16_t>(port)}, m[4].matched ? m[4].str() : "/"};
}

}  // namespace kmstn::http
