#include <gtest/gtest.h>

#include "kmstn/error.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/model.hpp"
#include "support/generators.hpp"

using namespace kmstn;
using nlohmann::json;

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

EncryptedEnvelope sample_envelope() {
    EncryptedEnvelope e;
    e.iv = Bytes(12, 0);
    e.ciphertext = base64_decode("xyw=");
    e.session = "s1";
    return e;
}

}  // namespace

TEST(StrongId, RejectsEmptyAndOverlong) {
    EXPECT_EQ(code_of([] { SaeId{""}; }), Errc::invariant);
    EXPECT_EQ(code_of([] { SaeId{std::string(257, 'a')}; }), Errc::invariant);
    EXPECT_NO_THROW(SaeId{std::string(256, 'a')});
}

TEST(Envelope, FieldsWithoutSae) {
    const auto obj = json::parse(encode_envelope(sample_envelope()));
    ASSERT_EQ(obj.size(), 3u);
    EXPECT_TRUE(obj.contains("iv"));
    EXPECT_TRUE(obj.contains("ciphertext"));
    EXPECT_TRUE(obj.contains("session"));
    EXPECT_EQ(obj["iv"], "AAAAAAAAAAAAAAAA");
}

TEST(Envelope, SaeIsEmittedWhenPresent) {
    auto e = sample_envelope();
    e.sae = SaeId("SAE-A");
    const auto text = encode_envelope(e);
    EXPECT_NE(text.find(R"("sae":"SAE-A")"), std::string::npos);
}

TEST(Envelope, CanonicalEncodingIsByteExact) {
    auto e = sample_envelope();
    e.sae = SaeId("SAE-A");
    EXPECT_EQ(encode_envelope(e),
              R"({"ciphertext":"xyw=","iv":"AAAAAAAAAAAAAAAA","sae":"SAE-A","session":"s1"})");
}

TEST(Envelope, DecodeErrors) {
    EXPECT_EQ(code_of([] { decode_envelope(""); }), Errc::parse);
    EXPECT_EQ(code_of([] { decode_envelope("{not json"); }), Errc::parse);
    EXPECT_EQ(code_of([] { decode_envelope(R"({"iv":"AAAAAAAAAAAAAAAA","ciphertext":""})"); }),
              Errc::invariant);
    EXPECT_EQ(code_of([] {
                  decode_envelope(R"({"iv":"AAAAAAAAAAAAAAAA","ciphertext":"","session":"s","x":1})");
              }),
              Errc::invariant);
    // 9-byte IV
    EXPECT_EQ(code_of([] { decode_envelope(R"({"iv":"AAAAAAAAAAAA","ciphertext":"","session":"s"})"); }),
              Errc::invariant);
    EXPECT_EQ(code_of([] { decode_envelope(R"({"iv":"A*AA","ciphertext":"","session":"s"})"); }),
              Errc::parse);
}

TEST(Envelope, RoundTripProperty) {
    fixtures::Gen gen(1);
    for (int i = 0; i < 1000; ++i) {
        const auto e = gen.envelope();
        ASSERT_EQ(decode_envelope(encode_envelope(e)), e);
    }
}

TEST(KeyContainer, RoundTripAndSizeCheck) {
    fixtures::Gen gen(2);
    for (int i = 0; i < 1000; ++i) {
        const auto c = gen.key_container();
        ASSERT_EQ(decode_key_container(encode_key_container(c)), c);
    }
    KeyContainer c{{KeyBlock{gen.uuid(), Bytes(32, 1)}}};
    EXPECT_NO_THROW(decode_key_container(encode_key_container(c), 256));
    EXPECT_EQ(code_of([&] { decode_key_container(encode_key_container(c), 128); }), Errc::invariant);
}

TEST(KeyContainer, RejectsNonUuidKeyId) {
    EXPECT_EQ(code_of([] { decode_key_container(R"({"keys":[{"key_ID":"abc","key":"AA=="}]})"); }),
              Errc::invariant);
}

TEST(ExtKeyContainer, RoundTripProperty) {
    fixtures::Gen gen(3);
    for (int i = 0; i < 1000; ++i) {
        const auto c = gen.ext_key_container();
        ASSERT_EQ(decode_ext_key_container(encode_ext_key_container(c)), c);
    }
}

TEST(ExtKeyContainer, InvariantsEnforced) {
    fixtures::Gen gen(4);
    auto c = gen.ext_key_container();
    c.target_sae_ids.clear();
    EXPECT_EQ(code_of([&] { decode_ext_key_container(encode_ext_key_container(c)); }), Errc::invariant);
    c = gen.ext_key_container();
    c.ack_callback_url = "not a url";
    EXPECT_EQ(code_of([&] { decode_ext_key_container(encode_ext_key_container(c)); }), Errc::invariant);
    c = gen.ext_key_container();
    auto obj = json::parse(encode_ext_key_container(c));
    obj["version"] = "v2";
    EXPECT_EQ(code_of([&] { decode_ext_key_container(obj.dump()); }), Errc::invariant);
}

TEST(AckContainers, RoundTripProperty) {
    fixtures::Gen gen(5);
    for (int i = 0; i < 1000; ++i) {
        const auto acks = gen.ack_containers();
        ASSERT_EQ(decode_ack_containers(encode_ack_containers(acks)), acks);
    }
}

TEST(AckContainers, StatusStrings) {
    EXPECT_EQ(to_string(AckStatus::relayed), "relayed");
    EXPECT_EQ(to_string(AckStatus::voided), "voided");
    EXPECT_EQ(to_string(AckStatus::failed), "failed");
    EXPECT_EQ(to_string(AckStatus::key_not_present), "key_not_present");
    EXPECT_EQ(code_of([] { parse_ack_status("RELAYED"); }), Errc::parse);
    EXPECT_EQ(code_of([] { parse_ack_status("lost"); }), Errc::parse);

    fixtures::Gen gen(6);
    AckContainer a{{gen.uuid()}, AckStatus::relayed, SaeId("sae1"), std::nullopt};
    auto obj = json::parse(encode_ack_containers({a}));
    obj["ack_containers"][0]["ack_status"] = "delivered";
    EXPECT_EQ(code_of([&] { decode_ack_containers(obj.dump()); }), Errc::parse);
}

TEST(VoidRequest, RoundTripProperty) {
    fixtures::Gen gen(7);
    for (int i = 0; i < 1000; ++i) {
        const auto r = gen.void_request();
        ASSERT_EQ(decode_void_request(encode_void_request(r)), r);
    }
}

TEST(Extensions, EmptyIsOk) {
    ExtKeyContainer c;
    EXPECT_NO_THROW(validate_extensions(c, {}));
}

TEST(Extensions, UnsupportedMandatoryIsRejected) {
    ExtKeyContainer c;
    c.extension_mandatory = {Extension{"x", json::object()}};
    try {
        validate_extensions(c, {});
        FAIL() << "expected MandatoryExtensionError";
    } catch (const MandatoryExtensionError& e) {
        EXPECT_EQ(e.unsupported(), std::vector<std::string>{"x"});
        EXPECT_EQ(e.code(), Errc::mandatory_extension);
    }
    EXPECT_NO_THROW(validate_extensions(c, {"x"}));
}

TEST(Extensions, OptionalNeverFails) {
    ExtKeyContainer c;
    c.extension_optional = {Extension{"y", 1}};
    EXPECT_NO_THROW(validate_extensions(c, {}));
}

TEST(Extensions, ListsEveryUnsupportedName) {
    fixtures::Gen gen(8);
    for (int i = 0; i < 200; ++i) {
        auto c = gen.ext_key_container();
        std::set<std::string> supported;
        std::vector<std::string> expected;
        for (const auto& e : c.extension_mandatory) {
            if (gen.range(0, 1)) supported.insert(e.name);
        }
        for (const auto& e : c.extension_mandatory) {
            if (!supported.contains(e.name)) expected.push_back(e.name);
        }
        try {
            validate_extensions(c, supported);
            EXPECT_TRUE(expected.empty());
        } catch (const MandatoryExtensionError& e) {
            EXPECT_EQ(e.unsupported(), expected);
        }
    }
}

TEST(Url, Validation) {
    EXPECT_TRUE(is_valid_url("https://127.0.0.1:8443/api/v1/ack_containers"));
    EXPECT_TRUE(is_valid_url("http://localhost"));
    EXPECT_FALSE(is_valid_url("ftp://x"));
    EXPECT_FALSE(is_valid_url("https://"));
    EXPECT_FALSE(is_valid_url("https://a b"));
}

TEST(Etsi014, KeyRequestRoundTrip) {
    etsi014::KeyRequest r;
    r.number = 3;
    r.size = 128;
    r.additional_slave_sae_ids = {SaeId("sae8"), SaeId("sae5")};
    EXPECT_EQ(etsi014::decode_key_request(etsi014::encode(r)), r);
    EXPECT_EQ(etsi014::decode_key_request(""), etsi014::KeyRequest{});
    EXPECT_EQ(code_of([] { etsi014::decode_key_request(R"({"number":0})"); }), Errc::bad_request);
    EXPECT_EQ(code_of([] { etsi014::decode_key_request(R"({"size":12})"); }), Errc::bad_request);
}

TEST(Etsi014, KeyIdsRequest) {
    fixtures::Gen gen(9);
    etsi014::KeyIdsRequest r{{gen.uuid(), gen.uuid()}};
    EXPECT_EQ(etsi014::decode_key_ids_request(etsi014::encode(r)), r);
    EXPECT_EQ(code_of([] { etsi014::decode_key_ids_request(R"({"key_IDs":[]})"); }), Errc::bad_request);
}

TEST(Etsi014, StatusRoundTrip) {
    etsi014::Status s;
    s.source_kme_id = "kme1";
    s.target_kme_id = "kme2";
    s.master_sae_id = "sae1";
    s.slave_sae_id = "sae2";
    s.stored_key_count = 7;
    s.max_key_count = 50;
    s.reachable = true;
    EXPECT_EQ(etsi014::decode_status(etsi014::encode(s)), s);
}

TEST(Etsi014, ErrorBodyIsLenient) {
    etsi014::ErrorBody e{"key depleted", {"x"}};
    const auto back = etsi014::decode_error(etsi014::encode(e));
    EXPECT_EQ(back.message, "key depleted");
    EXPECT_EQ(back.details, std::vector<std::string>{"x"});
    EXPECT_EQ(etsi014::decode_error("oops").message, "oops");
}
