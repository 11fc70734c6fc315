#include <gtest/gtest.h>

#include "kmstn/devca.hpp"
#include "kmstn/error.hpp"
#include "kmstn/http.hpp"
#include "support/temp_dir.hpp"

using namespace kmstn;
using namespace kmstn::http;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::internal;
}

void install_routes(Server& s) {
    s.route("GET", R"(/whoami)", [](const Request& r) { return Response{200, r.caller}; });
    s.route("POST", R"(/echo/([a-z]+))", [](const Request& r) { return Response{200, r.params.at(0) + ":" + r.body}; });
    s.route("GET", R"(/fail/(.+))", [](const Request& r) -> Response {
        if (r.params.at(0) == "ext") throw MandatoryExtensionError({"x-one", "x-two"});
        fail(parse_errc(r.params.at(0)).value_or(Errc::internal), "asked to fail");
    });
}

}  // namespace

TEST(Http, PlainRoundTripAndHeaderIdentity) {
    Server s(std::nullopt);
    install_routes(s);
    const auto port = s.bind({"127.0.0.1", 0});
    s.start();
    Client c({"127.0.0.1", port}, {.identity = "sae1"});
    EXPECT_EQ(c.get("/whoami").body, "sae1");
    auto r = c.post("/echo/abc", "payload");
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, "abc:payload");
    EXPECT_EQ(c.get("/nope").status, 404);
}

TEST(Http, ErrorsRoundTripAsTypedCodes) {
    Server s(std::nullopt);
    install_routes(s);
    const auto port = s.bind({"127.0.0.1", 0});
    s.start();
    Client c({"127.0.0.1", port}, {});
    for (Errc code : {Errc::depleted, Errc::key_not_present, Errc::unauthorized, Errc::unknown_sae, Errc::voided,
                      Errc::auth_failure, Errc::hop_depleted, Errc::unreachable}) {
        auto r = c.get("/fail/" + std::string(to_string(code)));
        EXPECT_EQ(r.status, status_for(code));
        EXPECT_EQ(code_of([&] { throw_if_error(r); }), code) << to_string(code);
    }
    EXPECT_EQ(c.get("/fail/depleted").status, 503);
    try {
        throw_if_error(c.get("/fail/ext"));
        FAIL();
    } catch (const MandatoryExtensionError& e) {
        EXPECT_EQ(e.unsupported(), (std::vector<std::string>{"x-one", "x-two"}));
    }
    Response bare{503, "busy"};
    EXPECT_EQ(code_of([&] { throw_if_error(bare); }), Errc::depleted);
}

TEST(Http, UnreachablePeer) {
    net::Endpoint dead;
    {
        Server s(std::nullopt);
        dead = {"127.0.0.1", s.bind({"127.0.0.1", 0})};
    }
    Client c(dead, {.connect_timeout = std::chrono::milliseconds(300)});
    EXPECT_EQ(code_of([&] { c.get("/"); }), Errc::peer_unreachable);
}

TEST(Http, BindConflict) {
    Server a(std::nullopt);
    const auto port = a.bind({"127.0.0.1", 0});
    Server b(std::nullopt);
    EXPECT_EQ(code_of([&] { b.bind({"127.0.0.1", port}); }), Errc::bind);
}

TEST(Http, MutualTlsIdentifiesCallerByCertificate) {
    fixtures::TempDir tmp;
    devca::create_ca(tmp / "ca");
    auto server_tls = devca::issue(tmp / "ca", "kmstn1", tmp / "certs");
    auto client_tls = devca::issue(tmp / "ca", "sae1", tmp / "certs");
    devca::create_ca(tmp / "rogue", "rogue-ca");
    auto rogue_tls = devca::issue(tmp / "rogue", "sae1", tmp / "rogue-certs");

    Server s(server_tls);
    install_routes(s);
    const auto port = s.bind({"127.0.0.1", 0});
    s.start();

    Client good({"127.0.0.1", port}, {.tls = client_tls, .identity = "spoofed"});
    EXPECT_EQ(good.base_url().rfind("https://", 0), 0u);
    EXPECT_EQ(good.get("/whoami").body, "sae1");

    auto mixed = rogue_tls;
    mixed.ca = client_tls.ca;
    Client rogue({"127.0.0.1", port}, {.tls = mixed});
    EXPECT_EQ(code_of([&] { rogue.get("/whoami"); }), Errc::unauthorized);

    Client plain({"127.0.0.1", port}, {.identity = "sae1", .read_timeout = std::chrono::milliseconds(1000)});
    EXPECT_ANY_THROW(throw_if_error(plain.get("/whoami")));
}

TEST(Http, UrlParsing) {
    auto u = parse_url("https://127.0.0.1:8443/api/v1/ack_containers");
    EXPECT_TRUE(u.tls);
    EXPECT_EQ(u.endpoint, (net::Endpoint{"127.0.0.1", 8443}));
    EXPECT_EQ(u.path, "/api/v1/ack_containers");
    EXPECT_EQ(parse_url("http://kmstn8:9000").path, "/");
    for (const char* bad : {"ftp://x:1/", "http://x/", "http://x:0/", "http://x:99999/", "no url"}) {
        EXPECT_EQ(code_of([&] { parse_url(bad); }), Errc::bad_request) << bad;
    }
}
