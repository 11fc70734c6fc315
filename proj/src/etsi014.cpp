#include "kmstn/etsi014.hpp"

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"

namespace kmstn::etsi014 {

using nlohmann::json;

namespace {

json parse_object(std::string_view body, const char* what) {
    json obj;
    try {
        obj = json::parse(body.begin(), body.end());
    } catch (const json::parse_error&) {
        fail(Errc::bad_request, std::string("malformed JSON in ") + what);
    }
    if (!obj.is_object()) fail(Errc::bad_request, std::string(what) + " must be a JSON object");
    return obj;
}

std::vector<Extension> extensions(const json& obj, const char* key) {
    std::vector<Extension> out;
    if (!obj.contains(key)) return out;
    const auto& arr = obj.at(key);
    if (!arr.is_array()) fail(Errc::bad_request, std::string(key) + " must be an array");
    for (const auto& rec : arr) {
        if (!rec.is_object() || rec.size() != 1) fail(Errc::bad_request, "bad extension record");
        out.push_back(Extension{rec.begin().key(), rec.begin().value()});
    }
    return out;
}

json extensions_json(const std::vector<Extension>& exts) {
    json out = json::array();
    for (const auto& e : exts) out.push_back(json{{e.name, e.value}});
    return out;
}

}  // namespace

std::string encode(const KeyRequest& r) {
    json ids = json::array();
    for (const auto& id : r.additional_slave_sae_ids) ids.push_back(id.str());
    json obj{{"number", r.number}, {"size", r.size}};
    if (!ids.empty()) obj["additional_slave_SAE_IDs"] = ids;
    if (!r.extension_mandatory.empty()) obj["extension_mandatory"] = extensions_json(r.extension_mandatory);
    if (!r.extension_optional.empty()) obj["extension_optional"] = extensions_json(r.extension_optional);
    return obj.dump();
}

KeyRequest decode_key_request(std::string_view body) {
    KeyRequest r;
    if (body.empty()) return r;
    const json obj = parse_object(body, "key request");
    try {
        if (obj.contains("number")) r.number = obj.at("number").get<int>();
        if (obj.contains("size")) r.size = obj.at("size").get<int>();
        if (obj.contains("additional_slave_SAE_IDs")) {
            for (const auto& v : obj.at("additional_slave_SAE_IDs")) {
                r.additional_slave_sae_ids.emplace_back(v.get<std::string>());
            }
        }
    } catch (const json::exception&) {
        fail(Errc::bad_request, "ill-typed key request field");
    } catch (const Error&) {
        fail(Errc::bad_request, "invalid SAE id in key request");
    }
    r.extension_mandatory = extensions(obj, "extension_mandatory");
    r.extension_optional = extensions(obj, "extension_optional");
    if (r.number < 1) fail(Errc::bad_request, "number must be >= 1");
    if (r.size < 8 || r.size % 8 != 0) fail(Errc::bad_request, "size must be a positive multiple of 8");
    return r;
}

std::string encode(const KeyIdsRequest& r) {
    json ids = json::array();
    for (const auto& id : r.key_ids) ids.push_back(json{{"key_ID", id}});
    return json{{"key_IDs", ids}}.dump();
}

KeyIdsRequest decode_key_ids_request(std::string_view body) {
    const json obj = parse_object(body, "key ids request");
    KeyIdsRequest r;
    if (!obj.contains("key_IDs") || !obj.at("key_IDs").is_array()) {
        fail(Errc::bad_request, "key_IDs array missing");
    }
    for (const auto& rec : obj.at("key_IDs")) {
        if (!rec.is_object() || !rec.contains("key_ID") || !rec.at("key_ID").is_string()) {
            fail(Errc::bad_request, "bad key_ID record");
        }
        const auto& id = rec.at("key_ID").get_ref<const std::string&>();
        if (!crypto::is_uuid(id)) fail(Errc::bad_request, "key_ID is not a UUID");
        r.key_ids.push_back(id);
    }
    if (r.key_ids.empty()) fail(Errc::bad_request, "key_IDs must not be empty");
    return r;
}

std::string encode(const Status& s) {
    json obj{{"source_KME_ID", s.source_kme_id},
             {"target_KME_ID", s.target_kme_id},
             {"master_SAE_ID", s.master_sae_id},
             {"slave_SAE_ID", s.slave_sae_id},
             {"key_size", s.key_size},
             {"stored_key_count", s.stored_key_count},
             {"max_key_count", s.max_key_count},
             {"max_key_per_request", s.max_key_per_request},
             {"max_key_size", s.max_key_size},
             {"min_key_size", s.min_key_size},
             {"max_SAE_ID_count", s.max_sae_id_count}};
    if (s.reachable) obj["reachable"] = *s.reachable;
    if (s.kmstn_id) obj["kmstn_id"] = *s.kmstn_id;
    return obj.dump();
}

Status decode_status(std::string_view body) {
    const json obj = parse_object(body, "status");
    Status s;
    try {
        s.source_kme_id = obj.value("source_KME_ID", "");
        s.target_kme_id = obj.value("target_KME_ID", "");
        s.master_sae_id = obj.value("master_SAE_ID", "");
        s.slave_sae_id = obj.value("slave_SAE_ID", "");
        s.key_size = obj.value("key_size", 0);
        s.stored_key_count = obj.value("stored_key_count", 0L);
        s.max_key_count = obj.value("max_key_count", 0L);
        s.max_key_per_request = obj.value("max_key_per_request", 0);
        s.max_key_size = obj.value("max_key_size", 0);
        s.min_key_size = obj.value("min_key_size", 0);
        s.max_sae_id_count = obj.value("max_SAE_ID_count", 0);
        if (obj.contains("reachable")) s.reachable = obj.at("reachable").get<bool>();
        if (obj.contains("kmstn_id")) s.kmstn_id = obj.at("kmstn_id").get<std::string>();
    } catch (const json::exception&) {
        fail(Errc::parse, "ill-typed status field");
    }
    return s;
}

std::string encode(const ErrorBody& e) {
    json obj{{"message", e.message}};
    if (!e.details.empty()) {
        json details = json::array();
        for (const auto& d : e.details) details.push_back(json{{"detail", d}});
        obj["details"] = details;
    }
    return obj.dump();
}

ErrorBody decode_error(std::string_view body) {
    ErrorBody e;
    try {
        const json obj = json::parse(body.begin(), body.end());
        if (obj.is_object() && obj.contains("message") && obj.at("message").is_string()) {
            e.message = obj.at("message").get<std::string>();
            if (obj.contains("details") && obj.at("details").is_array()) {
                for (const auto& d : obj.at("details")) {
                    if (d.is_object() && d.contains("detail") && d.at("detail").is_string()) {
                        e.details.push_back(d.at("detail").get<std::string>());
                    }
                }
            }
            return e;
        }
    } catch (const json::exception&) {
    }
    e.message = std::string(body);
    return e;
}

}  // namespace kmstn::etsi014
