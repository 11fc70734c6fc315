#include "kmstn/model.hpp"

#include <algorithm>
#include <regex>

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"

namespace kmstn {

namespace detail {

template <class Tag>
StrongId<Tag>::StrongId(std::string value) : value_(std::move(value)) {
    if (value_.empty()) fail(Errc::invariant, "identifier must not be empty");
    if (value_.size() > max_id_length) fail(Errc::invariant, "identifier longer than 256 characters");
}

template class StrongId<SaeTag>;
template class StrongId<KmeTag>;

}  // namespace detail

namespace {

using nlohmann::json;

json parse_json(std::string_view bytes) {
    if (bytes.empty()) fail(Errc::parse, "empty input");
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        fail(Errc::parse, std::string("malformed JSON: ") + e.what());
    }
}

// Checks that `obj` is an object holding every required key and nothing
// outside required + optional.
void expect_fields(const json& obj, std::initializer_list<std::string_view> required,
                   std::initializer_list<std::string_view> optional, std::string_view what) {
    if (!obj.is_object()) fail(Errc::invariant, std::string(what) + " must be a JSON object");
    for (auto key : required) {
        if (!obj.contains(std::string(key))) {
            fail(Errc::invariant, std::string(what) + " lacks field '" + std::string(key) + "'");
        }
    }
    for (const auto& [key, _] : obj.items()) {
        const bool known =
            std::find(required.begin(), required.end(), key) != required.end() ||
            std::find(optional.begin(), optional.end(), key) != optional.end();
        if (!known) fail(Errc::invariant, std::string(what) + " has unexpected field '" + key + "'");
    }
}

const std::string& get_string(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_string()) fail(Errc::invariant, std::string("field '") + key + "' must be a string");
    return v.get_ref<const std::string&>();
}

const json& get_array(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_array()) fail(Errc::invariant, std::string("field '") + key + "' must be an array");
    return v;
}

void expect_version(const json& obj) {
    if (get_string(obj, "version") != wire_version) fail(Errc::invariant, "unsupported wire version");
}

json key_to_json(const KeyBlock& key) {
    return json{{"key_ID", key.key_id}, {"key", base64_encode(key.key_material)}};
}

KeyBlock key_from_json(const json& obj) {
    expect_fields(obj, {"key_ID", "key"}, {}, "key");
    KeyBlock key{get_string(obj, "key_ID"), base64_decode(get_string(obj, "key"))};
    key.validate();
    return key;
}

json extensions_to_json(const std::vector<Extension>& exts) {
    json out = json::array();
    for (const auto& e : exts) out.push_back(json{{e.name, e.value}});
    return out;
}

std::vector<Extension> extensions_from_json(const json& arr) {
    std::vector<Extension> out;
    for (const auto& rec : arr) {
        if (!rec.is_object() || rec.size() != 1) {
            fail(Errc::invariant, "extension records must be single-key objects");
        }
        out.push_back(Extension{rec.begin().key(), rec.begin().value()});
    }
    return out;
}

json sae_list_to_json(const std::vector<SaeId>& ids) {
    json out = json::array();
    for (const auto& id : ids) out.push_back(id.str());
    return out;
}

std::vector<SaeId> sae_list_from_json(const json& arr) {
    std::vector<SaeId> out;
    for (const auto& v : arr) {
        if (!v.is_string()) fail(Errc::invariant, "SAE ids must be strings");
        out.emplace_back(v.get<std::string>());
    }
    return out;
}

std::vector<std::string> key_ids_from_json(const json& arr) {
    std::vector<std::string> out;
    for (const auto& v : arr) {
        if (!v.is_string() || !crypto::is_uuid(v.get_ref<const std::string&>())) {
            fail(Errc::invariant, "key ids must be UUID strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

void KeyBlock::validate() const {
    if (!crypto::is_uuid(key_id)) fail(Errc::invariant, "key_ID is not a UUID: " + key_id);
    if (key_material.empty()) fail(Errc::invariant, "key material must not be empty");
}

std::string_view to_string(AckStatus status) noexcept {
    switch (status) {
        case AckStatus::relayed: return "relayed";
        case AckStatus::voided: return "voided";
        case AckStatus::failed: return "failed";
        case AckStatus::key_not_present: return "key_not_present";
    }
    return "failed";
}

AckStatus parse_ack_status(std::string_view text) {
    for (auto s : {AckStatus::relayed, AckStatus::voided, AckStatus::failed,
                   AckStatus::key_not_present}) {
        if (text == to_string(s)) return s;
    }
    fail(Errc::parse, "unknown ack_status '" + std::string(text) + "'");
}

std::string encode_envelope(const EncryptedEnvelope& envelope) {
    json obj{{"iv", base64_encode(envelope.iv)},
             {"ciphertext", base64_encode(envelope.ciphertext)},
             {"session", envelope.session}};
    if (envelope.sae) obj["sae"] = envelope.sae->str();
    return obj.dump();
}

EncryptedEnvelope decode_envelope(std::string_view bytes) {
    const json obj = parse_json(bytes);
    expect_fields(obj, {"iv", "ciphertext", "session"}, {"sae"}, "envelope");
    EncryptedEnvelope env;
    env.iv = base64_decode(get_string(obj, "iv"));
    env.ciphertext = base64_decode(get_string(obj, "ciphertext"));
    env.session = get_string(obj, "session");
    if (env.session.empty()) fail(Errc::invariant, "envelope session must not be empty");
    if (env.iv.size() != envelope_iv_size) fail(Errc::invariant, "envelope iv must be 12 bytes");
    if (obj.contains("sae")) env.sae = SaeId(get_string(obj, "sae"));
    return env;
}

std::string encode_key_container(const KeyContainer& container) {
    json keys = json::array();
    for (const auto& k : container.keys) keys.push_back(key_to_json(k));
    return json{{"keys", keys}}.dump();
}

KeyContainer decode_key_container(std::string_view bytes, std::optional<std::size_t> expected_size_bits) {
    const json obj = parse_json(bytes);
    expect_fields(obj, {"keys"}, {"key_container_extension"}, "key container");
    KeyContainer out;
    for (const auto& k : get_array(obj, "keys")) {
        out.keys.push_back(key_from_json(k));
        if (expected_size_bits && out.keys.back().size_bits() != *expected_size_bits) {
            fail(Errc::invariant, "key size does not match the requested size");
        }
    }
    return out;
}

std::string encode_ext_key_container(const ExtKeyContainer& c) {
    json keys = json::array();
    for (const auto& k : c.keys) keys.push_back(key_to_json(k));
    return json{{"version", wire_version},
                {"keys", keys},
                {"owner_master_sae_id", c.owner_master_sae_id.str()},
                {"target_sae_ids", sae_list_to_json(c.target_sae_ids)},
                {"ack_callback_url", c.ack_callback_url},
                {"extension_mandatory", extensions_to_json(c.extension_mandatory)},
                {"extension_optional", extensions_to_json(c.extension_optional)}}
        .dump();
}

ExtKeyContainer decode_ext_key_container(std::string_view bytes) {
    const json obj = parse_json(bytes);
    expect_fields(obj,
                  {"version", "keys", "owner_master_sae_id", "target_sae_ids", "ack_callback_url",
                   "extension_mandatory", "extension_optional"},
                  {}, "ext key container");
    expect_version(obj);
    ExtKeyContainer c;
    for (const auto& k : get_array(obj, "keys")) c.keys.push_back(key_from_json(k));
    if (c.keys.empty()) fail(Errc::invariant, "ext key container carries no keys");
    c.owner_master_sae_id = SaeId(get_string(obj, "owner_master_sae_id"));
    c.target_sae_ids = sae_list_from_json(get_array(obj, "target_sae_ids"));
    if (c.target_sae_ids.empty()) fail(Errc::invariant, "target_sae_ids must not be empty");
    c.ack_callback_url = get_string(obj, "ack_callback_url");
    if (!is_valid_url(c.ack_callback_url)) fail(Errc::invariant, "ack_callback_url is not a valid URL");
    c.extension_mandatory = extensions_from_json(get_array(obj, "extension_mandatory"));
    c.extension_optional = extensions_from_json(get_array(obj, "extension_optional"));
    return c;
}

std::string encode_ack_containers(const std::vector<AckContainer>& acks) {
    json list = json::array();
    for (const auto& a : acks) {
        json obj{{"key_ids", a.key_ids},
                 {"ack_status", to_string(a.ack_status)},
                 {"initiator_sae_id", a.initiator_sae_id.str()}};
        if (a.message) obj["message"] = *a.message;
        list.push_back(std::move(obj));
    }
    return json{{"version", wire_version}, {"ack_containers", list}}.dump();
}

std::vector<AckContainer> decode_ack_containers(std::string_view bytes) {
    const json obj = parse_json(bytes);
    expect_fields(obj, {"version", "ack_containers"}, {}, "ack message");
    expect_version(obj);
    std::vector<AckContainer> out;
    for (const auto& rec : get_array(obj, "ack_containers")) {
        expect_fields(rec, {"key_ids", "ack_status", "initiator_sae_id"}, {"message"}, "ack container");
        AckContainer a;
        a.key_ids = key_ids_from_json(get_array(rec, "key_ids"));
        if (a.key_ids.empty()) fail(Errc::invariant, "ack container key_ids must not be empty");
        a.ack_status = parse_ack_status(get_string(rec, "ack_status"));
        a.initiator_sae_id = SaeId(get_string(rec, "initiator_sae_id"));
        if (rec.contains("message")) {
            if (!rec.at("message").is_object()) fail(Errc::invariant, "ack message must be an object");
            a.message = rec.at("message");
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::string encode_void_request(const VoidRequest& r) {
    return json{{"version", wire_version},
                {"key_ids", r.key_ids},
                {"initiator_sae_id", r.initiator_sae_id.str()},
                {"ack_callback_url", r.ack_callback_url}}
        .dump();
}

VoidRequest decode_void_request(std::string_view bytes) {
    const json obj = parse_json(bytes);
    expect_fields(obj, {"version", "key_ids", "initiator_sae_id", "ack_callback_url"}, {},
                  "void request");
    expect_version(obj);
    VoidRequest r;
    r.key_ids = key_ids_from_json(get_array(obj, "key_ids"));
    if (r.key_ids.empty()) fail(Errc::invariant, "void request key_ids must not be empty");
    r.initiator_sae_id = SaeId(get_string(obj, "initiator_sae_id"));
    r.ack_callback_url = get_string(obj, "ack_callback_url");
    if (!is_valid_url(r.ack_callback_url)) fail(Errc::invariant, "ack_callback_url is not a valid URL");
    return r;
}

void validate_extensions(const ExtKeyContainer& container, const std::set<std::string>& supported) {
    std::vector<std::string> missing;
    for (const auto& ext : container.extension_mandatory) {
        if (!supported.contains(ext.name)) missing.push_back(ext.name);
    }
    if (!missing.empty()) throw MandatoryExtensionError(std::move(missing));
}

bool is_valid_url(std::string_view url) {
    static const std::regex pattern(R"(^https?://[A-Za-z0-9.\-]+(:[0-9]{1,5})?(/[^\s]*)?$)");
    return std::regex_match(url.begin(), url.end(), pattern);
}

}  // namespace kmstn
