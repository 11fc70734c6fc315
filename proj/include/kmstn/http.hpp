#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kmstn/config.hpp"
#include "kmstn/error.hpp"
#include "kmstn/net.hpp"

// Thin HTTP(S) layer over cpp-httplib. With TLS both sides present
// certificates from the deployment CA and the caller is identified by its
// certificate CN; in insecure simulation mode the caller names itself in the
// X-Client-Id header.
namespace kmstn::http {

inline constexpr const char* client_id_header = "X-Client-Id";
inline constexpr const char* sim_latency_header = "X-Sim-Latency-Ms";
inline constexpr const char* error_code_header = "X-Error-Code";

struct Request {
    std::string method;
    std::string path;
    /// Capture groups of the route pattern.
    std::vector<std::string> params;
    std::string body;
    std::map<std::string, std::string> headers;
    /// Authenticated caller; empty when none could be established.
    std::string caller;

    std::string header(const std::string& name) const;
};

struct Response {
    Response() = default;
    Response(int status_code, std::string body_text) : status(status_code), body(std::move(body_text)) {}

    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::map<std::string, std::string> headers;

    std::string header(const std::string& name) const;
};

using Handler = std::function<Response(const Request&)>;

/// Maps library errors onto the JSON error body and status codes shared by
/// every server.
Response error_response(int status, const std::string& message, std::vector<std::string> details = {});
int status_for(Errc code);
/// Throws the kmstn::Error carried by a non-2xx response. The code comes from
/// the error-code header, else from the status.
void throw_if_error(const Response& response);

class Server {
public:
    /// Without TLS files the server speaks plain HTTP and trusts X-Client-Id.
    explicit Server(const std::optional<config::TlsFiles>& tls, int threads = 16);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// `pattern` is an ECMAScript regex over the path. Handlers may throw
    /// kmstn::Error; it is turned into an error response.
    void route(const std::string& method, const std::string& pattern, Handler handler);

    /// Binds now so the port is known before start(). Port 0 picks a free
    /// one. Throws Error(Errc::bind).
    std::uint16_t bind(const net::Endpoint& endpoint);
    void start();
    void stop();
    std::uint16_t port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::uint16_t port_ = 0;
};

struct ClientOptions {
    std::optional<config::TlsFiles> tls;
    /// Sent as X-Client-Id; only meaningful in insecure mode.
    std::string identity;
    std::chrono::milliseconds connect_timeout{2000};
    std::chrono::milliseconds read_timeout{30000};
};

/// Stateless and safe for concurrent use; each call opens its own
/// connection.
class Client {
public:
    Client(net::Endpoint target, ClientOptions options);

    /// Throws Error(Errc::peer_unreachable) when no response arrives.
    Response get(const std::string& path, const std::map<std::string, std::string>& headers = {}) const;
    Response post(const std::string& path, const std::string& body,
                  const std::map<std::string, std::string>& headers = {}) const;

    const net::Endpoint& target() const noexcept { return target_; }
    bool tls() const noexcept { return options_.tls.has_value(); }
    /// "http(s)://host:port".
    std::string base_url() const;

private:
    Response send(const std::string& method, const std::string& path, const std::string* body,
                  const std::map<std::string, std::string>& headers) const;

    net::Endpoint target_;
    ClientOptions options_;
};

/// Splits "http(s)://host:port[/path]"; throws Error(Errc::bad_request).
struct ParsedUrl {
    bool tls = false;
    net::Endpoint endpoint;
    std::string path;
};
ParsedUrl parse_url(const std::string& url);

}  // namespace kmstn::http
