#include "kmstn/config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "kmstn/error.hpp"

namespace kmstn::config {

using nlohmann::json;

namespace {

const json& require(const json& doc, const char* field) {
    auto it = doc.find(field);
    if (it == doc.end()) fail(Errc::config, std::string("missing field \"") + field + "\"");
    return *it;
}

std::string require_string(const json& doc, const char* field) {
    const auto& v = require(doc, field);
    if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
        fail(Errc::config, std::string("field \"") + field + "\" must be a non-empty string");
    }
    return v.get<std::string>();
}

template <class Id>
Id require_id(const json& doc, const char* field) {
    try {
        return Id(require_string(doc, field));
    } catch (const Error& e) {
        if (e.code() == Errc::config) throw;
        fail(Errc::config, std::string("field \"") + field + "\": " + e.what());
    }
}

template <class Id>
std::vector<Id> id_list(const json& doc, const char* field) {
    std::vector<Id> out;
    auto it = doc.find(field);
    if (it == doc.end()) return out;
    if (!it->is_array()) fail(Errc::config, std::string("field \"") + field + "\" must be an array");
    for (const auto& v : *it) {
        if (!v.is_string()) fail(Errc::config, std::string("field \"") + field + "\" must hold strings");
        out.emplace_back(v.get<std::string>());
    }
    return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !base.empty()) return base / path;
    return path;
}

net::Endpoint endpoint_of(const json& doc, const char* host_field, const char* port_field) {
    net::Endpoint ep;
    if (doc.contains(host_field)) ep.host = require_string(doc, host_field);
    const auto& port = require(doc, port_field);
    if (!port.is_number_integer() || port.get<long long>() < 0 || port.get<long long>() > 65535) {
        fail(Errc::config, std::string("field \"") + port_field + "\" must be a port number");
    }
    ep.port = static_cast<std::uint16_t>(port.get<int>());
    return ep;
}

std::optional<TlsFiles> tls_of(const json& doc, const fs::path& base) {
    auto it = doc.find("tls");
    if (it == doc.end() || it->is_null()) return std::nullopt;
    if (!it->is_object()) fail(Errc::config, "\"tls\" must be an object");
    return TlsFiles{resolve(base, require_string(*it, "cert")), resolve(base, require_string(*it, "key")),
                    resolve(base, require_string(*it, "ca"))};
}

json tls_json(const std::optional<TlsFiles>& tls) {
    if (!tls) return nullptr;
    return {{"cert", tls->cert.string()}, {"key", tls->key.string()}, {"ca", tls->ca.string()}};
}

json strings(const auto& ids) {
    json out = json::array();
    for (const auto& id : ids) out.push_back(id.str());
    return out;
}

QkdNodeConfig qkd_node_from(const json& doc, const fs::path& base) {
    QkdNodeConfig c;
    c.kme_id = require_id<KmeId>(doc, "kme_id");
    c.endpoint = endpoint_of(doc, "host", "port");
    c.master_sae_id = require_id<SaeId>(doc, "master_sae_id");
    c.slave_sae_id = require_id<SaeId>(doc, "slave_sae_id");
    c.peer_kme_id = require_id<KmeId>(doc, "peer_kme_id");
    if (doc.contains("link")) c.link = link_profile_from_json(doc.at("link"));
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_unsigned()) fail(Errc::config, "\"seed\" must be a non-negative integer");
        c.seed = doc.at("seed").get<std::uint64_t>();
    }
    c.tls = tls_of(doc, base);
    return c;
}

KmstnConfig kmstn_from(const json& doc, const fs::path& base) {
    KmstnConfig c;
    c.kmstn_id = require_string(doc, "kmstn_id");
    c.endpoint = endpoint_of(doc, "host", "port");
    c.pqc_endpoint = endpoint_of(doc, "host", "pqc_port");
    c.attached_kmes = id_list<KmeId>(doc, "attached_kmes");
    c.bound_saes = id_list<SaeId>(doc, "bound_saes");
    c.state_dir = resolve(base, require_string(doc, "state_dir"));
    if (doc.contains("kem")) {
        auto set = mlkem::parse_parameter_set(require_string(doc, "kem"));
        if (!set) fail(Errc::config, "unknown KEM parameter set " + doc.at("kem").get<std::string>());
        c.kem = *set;
    }
    c.tls = tls_of(doc, base);
    return c;
}

SaeConfig sae_from(const json& doc, const fs::path& base) {
    SaeConfig c;
    c.sae_id = require_id<SaeId>(doc, "sae_id");
    c.kmstn_id = require_string(doc, "kmstn_id");
    c.tls = tls_of(doc, base);
    return c;
}

EdgeConfig edge_from(const json& doc) {
    EdgeConfig e;
    e.a = require_string(doc, "a");
    e.b = require_string(doc, "b");
    if (doc.contains("qkd_link")) {
        if (!doc.at("qkd_link").is_boolean()) fail(Errc::config, "\"qkd_link\" must be a boolean");
        e.qkd_link = doc.at("qkd_link").get<bool>();
    }
    if (doc.contains("weight")) {
        if (!doc.at("weight").is_number()) fail(Errc::config, "\"weight\" must be a number");
        e.weight = doc.at("weight").get<double>();
    }
    return e;
}

}  // namespace

const QkdNodeConfig* Bundle::find_qkd_node(const KmeId& id) const {
    auto it = std::find_if(qkd_nodes.begin(), qkd_nodes.end(), [&](const auto& n) { return n.kme_id == id; });
    return it == qkd_nodes.end() ? nullptr : &*it;
}

const KmstnConfig* Bundle::find_kmstn(const std::string& id) const {
    auto it = std::find_if(kmstns.begin(), kmstns.end(), [&](const auto& n) { return n.kmstn_id == id; });
    return it == kmstns.end() ? nullptr : &*it;
}

const SaeConfig* Bundle::find_sae(const SaeId& id) const {
    auto it = std::find_if(saes.begin(), saes.end(), [&](const auto& s) { return s.sae_id == id; });
    return it == saes.end() ? nullptr : &*it;
}

void Bundle::validate() const {
    std::set<std::string> kmstn_ids;
    for (const auto& k : kmstns) {
        if (!kmstn_ids.insert(k.kmstn_id).second) fail(Errc::config, "duplicate kmstn_id " + k.kmstn_id);
    }
    std::set<KmeId> kme_ids;
    for (const auto& q : qkd_nodes) {
        if (!kme_ids.insert(q.kme_id).second) fail(Errc::config, "duplicate kme_id " + q.kme_id.str());
        q.link.validate();
    }
    for (const auto& q : qkd_nodes) {
        const auto* peer = find_qkd_node(q.peer_kme_id);
        if (!peer) fail(Errc::config, "kme " + q.kme_id.str() + " names unknown peer " + q.peer_kme_id.str());
        if (peer->peer_kme_id != q.kme_id || peer->master_sae_id != q.slave_sae_id ||
            peer->slave_sae_id != q.master_sae_id) {
            fail(Errc::config, "kme " + q.kme_id.str() + " and " + peer->kme_id.str() + " do not mirror each other");
        }
        if (peer->link != q.link) fail(Errc::config, "kme pair " + q.kme_id.str() + " has two link profiles");
    }

    std::map<KmeId, std::string> kme_owner;
    std::map<SaeId, std::string> sae_binding;
    for (const auto& k : kmstns) {
        for (const auto& id : k.attached_kmes) {
            if (!find_qkd_node(id)) fail(Errc::config, "kmstn " + k.kmstn_id + " attaches unknown kme " + id.str());
            if (!kme_owner.emplace(id, k.kmstn_id).second) {
                fail(Errc::config, "kme " + id.str() + " attached to more than one kmstn");
            }
        }
        for (const auto& sae : k.bound_saes) sae_binding.emplace(sae, k.kmstn_id);
    }
    for (const auto& s : saes) {
        if (!kmstn_ids.count(s.kmstn_id)) fail(Errc::config, "sae " + s.sae_id.str() + " names unknown kmstn " + s.kmstn_id);
        auto it = sae_binding.find(s.sae_id);
        if (it == sae_binding.end()) fail(Errc::config, "sae " + s.sae_id.str() + " is bound to no kmstn");
        const auto* home = find_kmstn(s.kmstn_id);
        if (std::find(home->bound_saes.begin(), home->bound_saes.end(), s.sae_id) == home->bound_saes.end()) {
            fail(Errc::config, "sae " + s.sae_id.str() + " is not bound at its kmstn " + s.kmstn_id);
        }
    }

    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : edges) {
        if (!kmstn_ids.count(e.a)) fail(Errc::config, "edge names unknown kmstn " + e.a);
        if (!kmstn_ids.count(e.b)) fail(Errc::config, "edge names unknown kmstn " + e.b);
        if (e.a == e.b) fail(Errc::config, "self-loop edge at " + e.a);
        if (!(e.weight > 0) || e.weight == std::numeric_limits<double>::infinity()) {
            fail(Errc::config, "edge " + e.a + "-" + e.b + " needs a positive finite weight");
        }
        if (!pairs.insert(std::minmax(e.a, e.b)).second) fail(Errc::config, "duplicate edge " + e.a + "-" + e.b);
        if (!e.qkd_link) continue;
        bool spanned = false;
        for (const auto& id : find_kmstn(e.a)->attached_kmes) {
            auto owner = kme_owner.find(find_qkd_node(id)->peer_kme_id);
            if (owner != kme_owner.end() && owner->second == e.b) spanned = true;
        }
        if (!spanned) fail(Errc::config, "qkd edge " + e.a + "-" + e.b + " has no kme pair spanning it");
    }
}

void add_document(Bundle& bundle, const json& doc, const fs::path& base_dir) {
    if (doc.is_array()) {
        for (const auto& d : doc) add_document(bundle, d, base_dir);
        return;
    }
    if (!doc.is_object()) fail(Errc::config, "config document must be an object");
    const auto kind = require_string(doc, "kind");
    if (kind == "qkd_node") {
        bundle.qkd_nodes.push_back(qkd_node_from(doc, base_dir));
    } else if (kind == "kmstn") {
        bundle.kmstns.push_back(kmstn_from(doc, base_dir));
    } else if (kind == "sae") {
        bundle.saes.push_back(sae_from(doc, base_dir));
    } else if (kind == "edges") {
        const auto& list = require(doc, "edges");
        if (!list.is_array()) fail(Errc::config, "\"edges\" must be an array");
        for (const auto& e : list) bundle.edges.push_back(edge_from(e));
    } else if (kind == "deployment") {
        bundle.deployment.insecure_sim = doc.value("insecure_sim", false);
    } else {
        fail(Errc::config, "unknown document kind " + kind);
    }
}

Bundle parse_bundle(const std::vector<json>& docs, const fs::path& base_dir) {
    Bundle b;
    for (const auto& d : docs) add_document(b, d, base_dir);
    return b;
}

Bundle load_bundle(const fs::path& path) {
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path)) {
        files.push_back(path);
    } else {
        fail(Errc::config, "no config at " + path.string());
    }
    Bundle b;
    for (const auto& f : files) {
        std::ifstream in(f);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            fail(Errc::config, f.string() + ": " + e.what());
        }
        try {
            add_document(b, doc, f.parent_path());
        } catch (const Error& e) {
            fail(Errc::config, f.string() + ": " + e.what());
        }
    }
    b.validate();
    return b;
}

json to_json(const Bundle& bundle) {
    json out = json::array();
    out.push_back({{"kind", "deployment"}, {"insecure_sim", bundle.deployment.insecure_sim}});
    for (const auto& q : bundle.qkd_nodes) {
        out.push_back({{"kind", "qkd_node"},
                       {"kme_id", q.kme_id.str()},
                       {"host", q.endpoint.host},
                       {"port", q.endpoint.port},
                       {"master_sae_id", q.master_sae_id.str()},
                       {"slave_sae_id", q.slave_sae_id.str()},
                       {"peer_kme_id", q.peer_kme_id.str()},
                       {"link", to_json(q.link)},
                       {"seed", q.seed},
                       {"tls", tls_json(q.tls)}});
    }
    for (const auto& k : bundle.kmstns) {
        out.push_back({{"kind", "kmstn"},
                       {"kmstn_id", k.kmstn_id},
                       {"host", k.endpoint.host},
                       {"port", k.endpoint.port},
                       {"pqc_port", k.pqc_endpoint.port},
                       {"attached_kmes", strings(k.attached_kmes)},
                       {"bound_saes", strings(k.bound_saes)},
                       {"state_dir", k.state_dir.string()},
                       {"kem", std::string(mlkem::name(k.kem))},
                       {"tls", tls_json(k.tls)}});
    }
    for (const auto& s : bundle.saes) {
        out.push_back({{"kind", "sae"}, {"sae_id", s.sae_id.str()}, {"kmstn_id", s.kmstn_id}, {"tls", tls_json(s.tls)}});
    }
    json edges = json::array();
    for (const auto& e : bundle.edges) {
        edges.push_back({{"a", e.a}, {"b", e.b}, {"qkd_link", e.qkd_link}, {"weight", e.weight}});
    }
    out.push_back({{"kind", "edges"}, {"edges", edges}});
    return out;
}

void write_bundle(const Bundle& bundle, const fs::path& dir) {
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const json& doc) {
        std::ofstream out(dir / (name + ".json"), std::ios::trunc);
        out << doc.dump(2) << '\n';
        if (!out) fail(Errc::io, "cannot write " + (dir / name).string());
    };
    for (const auto& doc : to_json(bundle)) {
        const auto kind = doc.at("kind").get<std::string>();
        if (kind == "qkd_node") {
            write("qkd-" + doc.at("kme_id").get<std::string>(), doc);
        } else if (kind == "kmstn") {
            write("kmstn-" + doc.at("kmstn_id").get<std::string>(), doc);
        } else if (kind == "sae") {
            write("sae-" + doc.at("sae_id").get<std::string>(), doc);
        } else {
            write(kind, doc);
        }
    }
}

}  // namespace kmstn::config
