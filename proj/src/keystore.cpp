#include "kmstn/keystore.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdlib>
#include <cstring>

#include "json.hpp"

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/log.hpp"

namespace kmstn::keystore {

using nlohmann::json;

namespace {

constexpr const char* seal_file = "seal.blob";
constexpr const char* secrets_file = "secrets.dat";
constexpr const char* keystore_file = "keystore.db";
constexpr unsigned password_iterations = 200000;

fs::path default_device_secret_path() {
    if (const char* env = std::getenv("KMSTN_DEVICE_SECRET"); env && *env) return env;
    const char* home = std::getenv("HOME");
    return fs::path(home && *home ? home : ".") / ".kmstn" / "device.secret";
}

// Loads or creates the emulated device secret. Returns nullopt when the
// location is unusable.
std::optional<Bytes> device_secret(const fs::path& path, bool create) {
    std::error_code ec;
    if (fs::exists(path, ec)) {
        auto data = read_file(path);
        if (data.size() != 32) fail(Errc::seal_unavailable, "corrupt device secret at " + path.string());
        return data;
    }
    if (!create) return std::nullopt;
    try {
        fs::create_directories(path.parent_path(), ec);
        auto secret = crypto::random_bytes(32);
        atomic_write(path, secret);
        return secret;
    } catch (const Error&) {
        return std::nullopt;
    }
}

Bytes seal_kek(SealMode mode, ByteView material, ByteView salt) {
    if (mode == SealMode::password) {
        return crypto::pbkdf2_sha256(kmstn::to_string(material), salt, password_iterations, 32);
    }
    return crypto::hkdf_sha256(material, salt, to_bytes("kmstn/seal-kek"), 32);
}

std::string mode_name(SealMode m) {
    switch (m) {
        case SealMode::hardware: return "hardware";
        case SealMode::emulated: return "emulated";
        case SealMode::password: return "password";
    }
    return "emulated";
}

Bytes keystream_block(ByteView key, ByteView iv, const std::string& name, std::uint32_t counter) {
    Bytes input(iv.begin(), iv.end());
    input.insert(input.end(), name.begin(), name.end());
    for (int shift = 24; shift >= 0; shift -= 8) input.push_back(static_cast<std::uint8_t>(counter >> shift));
    const auto block = crypto::hmac_sha256(key, input);
    return Bytes(block.begin(), block.end());
}

// c_i = p_i ^ K_i ^ c_{i-1}; c_{-1} is derived from the entry IV.
Bytes chain_xor(ByteView key, ByteView iv, const std::string& name, ByteView in, bool encrypt) {
    Bytes prev = keystream_block(key, iv, name + "/chain", 0);
    Bytes out(in.size());
    for (std::size_t off = 0, blk = 0; off < in.size(); off += 32, ++blk) {
        const std::size_t n = std::min<std::size_t>(32, in.size() - off);
        const Bytes ks = keystream_block(key, iv, name, static_cast<std::uint32_t>(blk));
        for (std::size_t j = 0; j < n; ++j) out[off + j] = in[off + j] ^ ks[j] ^ prev[j];
        const ByteView cipher = encrypt ? ByteView(out) : in;
        std::fill(prev.begin(), prev.end(), 0);
        std::copy_n(cipher.begin() + static_cast<std::ptrdiff_t>(off), n, prev.begin());
    }
    return out;
}

json parse_file_json(ByteView data, const char* what) {
    try {
        return json::parse(data.begin(), data.end());
    } catch (const json::exception&) {
        fail(Errc::auth_failure, std::string(what) + " is corrupt");
    }
}

std::int64_t epoch_seconds(std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
}

}  // namespace

void atomic_write(const fs::path& path, ByteView data) {
    const fs::path tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) fail(Errc::io, "cannot write " + tmp.string() + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < data.size()) {
        const auto n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            fail(Errc::io, "write failed on " + tmp.string());
        }
        off += static_cast<std::size_t>(n);
    }
    ::fchmod(fd, 0600);
    ::fsync(fd);
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(Errc::io, "cannot replace " + path.string() + ": " + ec.message());
}

Bytes read_file(const fs::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) fail(Errc::io, "cannot read " + path.string());
    Bytes out;
    std::uint8_t buf[8192];
    for (;;) {
        const auto n = ::read(fd, buf, sizeof(buf));
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            fail(Errc::io, "read failed on " + path.string());
        }
        if (n == 0) break;
        out.insert(out.end(), buf, buf + n);
    }
    ::close(fd);
    return out;
}

bool DeviceSeal::hardware_present() {
    std::error_code ec;
    return fs::exists("/dev/tpmrm0", ec) || fs::exists("/dev/tpm0", ec);
}

DeviceSeal DeviceSeal::init(const fs::path& state_dir, const SealOptions& options) {
    std::error_code ec;
    fs::create_directories(state_dir, ec);
    if (ec) fail(Errc::io, "cannot create state dir " + state_dir.string());
    fs::permissions(state_dir, fs::perms::owner_all, fs::perm_options::replace, ec);

    DeviceSeal seal;
    seal.state_dir_ = state_dir;
    const fs::path blob_path = state_dir / seal_file;
    const fs::path secret_path = options.device_secret_path.value_or(default_device_secret_path());

    if (options.require_hardware) {
        // No TPM backend is compiled in; a visible device is not enough.
        fail(Errc::seal_unavailable, hardware_present()
                                         ? "hardware sealing module present but no backend is available"
                                         : "no hardware sealing module found (/dev/tpm0, /dev/tpmrm0)");
    }

    if (fs::exists(blob_path, ec)) {
        const json blob = parse_file_json(read_file(blob_path), "seal blob");
        SealMode mode;
        Bytes material;
        try {
            const auto name = blob.at("mode").get<std::string>();
            if (name == "emulated") {
                mode = SealMode::emulated;
                auto secret = device_secret(secret_path, false);
                if (!secret) fail(Errc::auth_failure, "device secret for this seal is missing");
                material = std::move(*secret);
            } else if (name == "password") {
                mode = SealMode::password;
                if (!options.password) fail(Errc::seal_unavailable, "store password required to unseal");
                material = to_bytes(*options.password);
            } else {
                fail(Errc::seal_unavailable, "unsupported seal mode " + name);
            }
            const Bytes salt = base64_decode(blob.at("salt").get<std::string>());
            const Bytes nonce = base64_decode(blob.at("nonce").get<std::string>());
            const Bytes wrapped = base64_decode(blob.at("wrapped").get<std::string>());
            Bytes kek = seal_kek(mode, material, salt);
            secure_zero(material);
            try {
                seal.master_ = crypto::aes256_gcm_decrypt(kek, nonce, wrapped, to_bytes("kmstn-seal/v1|" + name));
            } catch (const Error&) {
                secure_zero(kek);
                fail(Errc::auth_failure, "seal does not open under this device");
            }
            secure_zero(kek);
            seal.mode_ = mode;
        } catch (const json::exception&) {
            fail(Errc::auth_failure, "seal blob is corrupt");
        }
    } else {
        std::optional<Bytes> material;
        if (options.allow_emulation) {
            material = device_secret(secret_path, true);
            if (material) seal.mode_ = SealMode::emulated;
        }
        if (!material && options.password) {
            material = to_bytes(*options.password);
            seal.mode_ = SealMode::password;
        }
        if (!material) fail(Errc::seal_unavailable, "no sealing mechanism available and no store password configured");
        seal.master_ = crypto::random_bytes(32);
        const Bytes salt = crypto::random_bytes(16);
        const Bytes nonce = crypto::random_bytes(crypto::gcm_nonce_size);
        Bytes kek = seal_kek(seal.mode_, *material, salt);
        secure_zero(*material);
        const json blob{{"version", wire_version},
                        {"mode", mode_name(seal.mode_)},
                        {"salt", base64_encode(salt)},
                        {"nonce", base64_encode(nonce)},
                        {"wrapped", base64_encode(crypto::aes256_gcm_encrypt(
                                        kek, nonce, seal.master_,
                                        to_bytes("kmstn-seal/v1|" + mode_name(seal.mode_))))}};
        secure_zero(kek);
        atomic_write(blob_path, to_bytes(blob.dump()));
    }

    if (seal.mode_ == SealMode::emulated) {
        log::warn("seal", "no hardware sealing module; using a software-emulated device seal");
        log::warn("seal", "emulated device secret at " + secret_path.string() +
                              " is readable by anyone with access to this account");
        log::warn("seal", "stored keys are NOT protected against a compromised host");
    } else if (seal.mode_ == SealMode::password) {
        log::warn("seal", "no sealing mechanism available; keystore protected by the configured password only");
    }
    return seal;
}

DeviceSeal::~DeviceSeal() { secure_zero(master_); }

std::map<std::string, Bytes> DeviceSeal::load_secrets() const {
    std::map<std::string, Bytes> out;
    const fs::path path = state_dir_ / secrets_file;
    std::error_code ec;
    if (!fs::exists(path, ec)) return out;
    const json doc = parse_file_json(read_file(path), "secrets file");
    const Bytes enc_key = crypto::hkdf_sha256(master_, {}, to_bytes("kmstn/secrets-enc"), 32);
    const Bytes mac_key = crypto::hkdf_sha256(master_, {}, to_bytes("kmstn/secrets-mac"), 32);
    try {
        const json& entries = doc.at("entries");
        const auto mac = crypto::hmac_sha256(mac_key, to_bytes(entries.dump()));
        if (!ct_equal(mac, base64_decode(doc.at("mac").get<std::string>()))) {
            fail(Errc::auth_failure, "secrets file does not verify under this seal");
        }
        for (const auto& [name, e] : entries.items()) {
            const Bytes iv = base64_decode(e.at("iv").get<std::string>());
            const Bytes ct = base64_decode(e.at("ct").get<std::string>());
            out[name] = chain_xor(enc_key, iv, name, ct, false);
        }
    } catch (const json::exception&) {
        fail(Errc::auth_failure, "secrets file is corrupt");
    }
    return out;
}

void DeviceSeal::store_secrets(const std::map<std::string, Bytes>& entries) const {
    const Bytes enc_key = crypto::hkdf_sha256(master_, {}, to_bytes("kmstn/secrets-enc"), 32);
    const Bytes mac_key = crypto::hkdf_sha256(master_, {}, to_bytes("kmstn/secrets-mac"), 32);
    json list = json::object();
    for (const auto& [name, value] : entries) {
        const Bytes iv = crypto::random_bytes(16);
        list[name] = json{{"iv", base64_encode(iv)},
                          {"ct", base64_encode(chain_xor(enc_key, iv, name, value, true))}};
    }
    const auto mac = crypto::hmac_sha256(mac_key, to_bytes(list.dump()));
    const json doc{{"version", wire_version}, {"entries", list}, {"mac", base64_encode(mac)}};
    atomic_write(state_dir_ / secrets_file, to_bytes(doc.dump()));
}

void DeviceSeal::seal_secret(const std::string& name, ByteView value) {
    if (name.empty()) fail(Errc::invariant, "secret name must not be empty");
    std::lock_guard lock(*mu_);
    auto entries = load_secrets();
    entries[name] = Bytes(value.begin(), value.end());
    store_secrets(entries);
    for (auto& [_, v] : entries) secure_zero(v);
}

Bytes DeviceSeal::unseal_secret(const std::string& name) const {
    std::lock_guard lock(*mu_);
    auto entries = load_secrets();
    auto it = entries.find(name);
    if (it == entries.end()) fail(Errc::not_found, "no sealed secret named " + name);
    Bytes out = it->second;
    for (auto& [_, v] : entries) secure_zero(v);
    return out;
}

Bytes DeviceSeal::secret_or_create(const std::string& name, std::size_t size) {
    std::lock_guard lock(*mu_);
    auto entries = load_secrets();
    auto it = entries.find(name);
    Bytes out;
    if (it != entries.end()) {
        out = it->second;
    } else {
        out = crypto::random_bytes(size);
        entries[name] = out;
        store_secrets(entries);
    }
    for (auto& [_, v] : entries) secure_zero(v);
    return out;
}

std::string_view to_string(KeyState s) noexcept {
    switch (s) {
        case KeyState::available: return "available";
        case KeyState::delivered: return "delivered";
        case KeyState::voided: return "voided";
    }
    return "voided";
}

namespace {

KeyState parse_state(const std::string& s) {
    if (s == "available") return KeyState::available;
    if (s == "delivered") return KeyState::delivered;
    if (s == "voided") return KeyState::voided;
    fail(Errc::auth_failure, "keystore holds an unknown key state");
}

}  // namespace

Keystore::Keystore(DeviceSeal& seal, KeystoreOptions options) : seal_(seal), options_(std::move(options)) {
    store_key_ = seal_.secret_or_create("keystore.password", 32);
    field_secret_ = seal_.secret_or_create("keystore.field", 32);
    load();
}

Keystore::~Keystore() {
    secure_zero(store_key_);
    secure_zero(field_secret_);
    for (auto& [_, r] : records_) secure_zero(r.field_ciphertext);
}

fs::path Keystore::path() const { return seal_.state_dir() / keystore_file; }

Bytes Keystore::field_pad(const std::string& key_id, std::size_t size) const {
    return crypto::hkdf_sha256(field_secret_, to_bytes(key_id), to_bytes("kmstn/field"), size);
}

void Keystore::load() {
    std::error_code ec;
    if (!fs::exists(path(), ec)) return;
    const Bytes image = read_file(path());
    if (image.size() < crypto::gcm_nonce_size) fail(Errc::auth_failure, "keystore image truncated");
    const ByteView view(image);
    Bytes plain = crypto::aes256_gcm_decrypt(store_key_, view.first(crypto::gcm_nonce_size),
                                             view.subspan(crypto::gcm_nonce_size),
                                             to_bytes("kmstn-keystore/v1"));
    const json doc = parse_file_json(plain, "keystore");
    secure_zero(plain);
    try {
        for (const auto& [id, r] : doc.at("records").items()) {
            Record rec;
            rec.owner = SaeId(r.at("owner").get<std::string>());
            for (const auto& t : r.at("targets")) rec.targets.emplace_back(t.get<std::string>());
            rec.state = parse_state(r.at("state").get<std::string>());
            rec.field_ciphertext = base64_decode(r.at("field").get<std::string>());
            rec.stored_at = r.at("stored_at").get<std::int64_t>();
            rec.delivered_at = r.at("delivered_at").get<std::int64_t>();
            records_.emplace(id, std::move(rec));
        }
    } catch (const json::exception&) {
        fail(Errc::auth_failure, "keystore is corrupt");
    }
}

void Keystore::persist_locked() {
    json records = json::object();
    for (const auto& [id, r] : records_) {
        json targets = json::array();
        for (const auto& t : r.targets) targets.push_back(t.str());
        records[id] = json{{"owner", r.owner.str()},
                           {"targets", targets},
                           {"state", to_string(r.state)},
                           {"field", base64_encode(r.field_ciphertext)},
                           {"stored_at", r.stored_at},
                           {"delivered_at", r.delivered_at}};
    }
    std::string plain = json{{"version", wire_version}, {"records", records}}.dump();
    Bytes image = crypto::random_bytes(crypto::gcm_nonce_size);
    const Bytes sealed =
        crypto::aes256_gcm_encrypt(store_key_, image, to_bytes(plain), to_bytes("kmstn-keystore/v1"));
    secure_zero(plain.data(), plain.size());
    image.insert(image.end(), sealed.begin(), sealed.end());
    atomic_write(path(), image);
}

void Keystore::put_key(const KeyBlock& key, const SaeId& owner, const std::vector<SaeId>& targets) {
    key.validate();
    std::function<void(const std::string&)> observer;
    {
        std::lock_guard lock(mu_);
        if (records_.contains(key.key_id)) fail(Errc::duplicate_key_id, "key id already stored: " + key.key_id);
        Record rec;
        rec.owner = owner;
        rec.targets = targets;
        rec.field_ciphertext = field_pad(key.key_id, key.key_material.size());
        for (std::size_t i = 0; i < key.key_material.size(); ++i) rec.field_ciphertext[i] ^= key.key_material[i];
        rec.stored_at = epoch_seconds(options_.wall_clock());
        records_.emplace(key.key_id, std::move(rec));
        try {
            persist_locked();
        } catch (...) {
            records_.erase(key.key_id);
            throw;
        }
        observer = observer_;
    }
    if (observer) observer(key.key_id);
}

KeyBlock Keystore::get_key(const std::string& key_id, const SaeId& requester) {
    std::lock_guard lock(mu_);
    auto it = records_.find(key_id);
    if (it == records_.end()) fail(Errc::key_not_present, "key not present: " + key_id);
    Record& rec = it->second;
    if (rec.state == KeyState::voided) fail(Errc::voided, "key has been voided: " + key_id);
    if (std::find(rec.targets.begin(), rec.targets.end(), requester) == rec.targets.end()) {
        fail(Errc::unauthorized, requester.str() + " is not a target of key " + key_id);
    }
    KeyBlock out{key_id, field_pad(key_id, rec.field_ciphertext.size())};
    for (std::size_t i = 0; i < out.key_material.size(); ++i) out.key_material[i] ^= rec.field_ciphertext[i];
    if (rec.state == KeyState::available) {
        rec.state = KeyState::delivered;
        rec.delivered_at = epoch_seconds(options_.wall_clock());
        persist_locked();
    }
    return out;
}

void Keystore::void_key(const std::string& key_id) {
    std::lock_guard lock(mu_);
    auto it = records_.find(key_id);
    if (it == records_.end()) fail(Errc::key_not_present, "key not present: " + key_id);
    if (it->second.state == KeyState::voided) return;
    it->second.state = KeyState::voided;
    secure_zero(it->second.field_ciphertext);
    it->second.field_ciphertext.clear();
    persist_locked();
}

std::optional<StoredKeyInfo> Keystore::info(const std::string& key_id) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(key_id);
    if (it == records_.end()) return std::nullopt;
    return StoredKeyInfo{key_id, it->second.owner, it->second.targets, it->second.state};
}

std::size_t Keystore::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

std::size_t Keystore::purge_expired() {
    std::lock_guard lock(mu_);
    const auto now = epoch_seconds(options_.wall_clock());
    std::size_t n = 0;
    for (auto it = records_.begin(); it != records_.end();) {
        if (it->second.state == KeyState::delivered &&
            now - it->second.delivered_at >= options_.delivered_ttl.count()) {
            secure_zero(it->second.field_ciphertext);
            it = records_.erase(it);
            ++n;
        } else {
            ++it;
        }
    }
    if (n > 0) persist_locked();
    return n;
}

void Keystore::set_commit_observer(std::function<void(const std::string&)> observer) {
    std::lock_guard lock(mu_);
    observer_ = std::move(observer);
}

}  // namespace kmstn::keystore
