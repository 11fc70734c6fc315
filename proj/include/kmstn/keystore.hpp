#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kmstn/bytes.hpp"
#include "kmstn/model.hpp"

// Encrypted on-disk state of a KMSTN:
//   state_dir/seal.blob     master secret wrapped under the device secret
//   state_dir/secrets.dat   named secrets, per-entry IV + chained XOR, MAC'd
//   state_dir/keystore.db   AES-256-GCM image of the key records; each key's
//                           material is additionally XOR'd with a per-key pad
namespace kmstn::keystore {

namespace fs = std::filesystem;

struct SealOptions {
    /// Fail instead of emulating when no hardware module is present.
    bool require_hardware = false;
    /// Allow the software-emulated seal.
    bool allow_emulation = true;
    /// Emulated device secret; defaults to $KMSTN_DEVICE_SECRET, then
    /// ~/.kmstn/device.secret. Lives outside state_dir on purpose.
    std::optional<fs::path> device_secret_path;
    /// Last rung of the ladder: store password from configuration.
    std::optional<std::string> password;
};

enum class SealMode { hardware, emulated, password };

class DeviceSeal {
public:
    /// Creates or loads the sealed master secret. Throws
    /// Error(Errc::seal_unavailable) when no rung of the ladder applies and
    /// Error(Errc::auth_failure) when an existing seal does not open.
    static DeviceSeal init(const fs::path& state_dir, const SealOptions& options = {});

    bool emulated() const noexcept { return mode_ == SealMode::emulated; }
    SealMode mode() const noexcept { return mode_; }
    const fs::path& state_dir() const noexcept { return state_dir_; }

    void seal_secret(const std::string& name, ByteView value);
    /// Throws Error(Errc::not_found).
    Bytes unseal_secret(const std::string& name) const;
    /// Like unseal_secret but creates a random secret of `size` bytes first.
    Bytes secret_or_create(const std::string& name, std::size_t size);

    /// True if a hardware sealing module is visible on this host.
    static bool hardware_present();

    DeviceSeal(DeviceSeal&&) noexcept = default;
    DeviceSeal& operator=(DeviceSeal&&) noexcept = default;
    ~DeviceSeal();

private:
    DeviceSeal() = default;
    std::map<std::string, Bytes> load_secrets() const;
    void store_secrets(const std::map<std::string, Bytes>& entries) const;

    fs::path state_dir_;
    SealMode mode_ = SealMode::emulated;
    Bytes master_;
    std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

enum class KeyState { available, delivered, voided };
std::string_view to_string(KeyState s) noexcept;

struct StoredKeyInfo {
    std::string key_id;
    SaeId owner_master_sae_id;
    std::vector<SaeId> target_sae_ids;
    KeyState state = KeyState::available;
};

struct KeystoreOptions {
    /// Delivered keys are purged after this long.
    std::chrono::seconds delivered_ttl{24 * 3600};
    std::function<std::chrono::system_clock::time_point()> wall_clock = [] {
        return std::chrono::system_clock::now();
    };
};

class Keystore {
public:
    /// Opens state_dir/keystore.db (creating it if absent). Throws
    /// Error(Errc::auth_failure) when the file was written under another seal.
    explicit Keystore(DeviceSeal& seal, KeystoreOptions options = {});
    ~Keystore();
    Keystore(const Keystore&) = delete;
    Keystore& operator=(const Keystore&) = delete;

    /// Durable on return. Throws Error(Errc::duplicate_key_id).
    void put_key(const KeyBlock& key, const SaeId& owner, const std::vector<SaeId>& targets);

    /// Throws Error(Errc::key_not_present), Error(Errc::voided) or
    /// Error(Errc::unauthorized). Marks the key delivered; repeated reads
    /// return the same bytes until voided or purged.
    KeyBlock get_key(const std::string& key_id, const SaeId& requester);

    /// Idempotent for already-voided keys. Throws Error(Errc::key_not_present).
    void void_key(const std::string& key_id);

    std::optional<StoredKeyInfo> info(const std::string& key_id) const;
    std::size_t size() const;
    /// Drops delivered keys older than the TTL; returns how many.
    std::size_t purge_expired();

    /// Called with the key id after each put_key has been committed to disk.
    void set_commit_observer(std::function<void(const std::string&)> observer);

    fs::path path() const;

private:
    struct Record {
        SaeId owner;
        std::vector<SaeId> targets;
        KeyState state = KeyState::available;
        Bytes field_ciphertext;
        std::int64_t stored_at = 0;
        std::int64_t delivered_at = 0;
    };
    Bytes field_pad(const std::string& key_id, std::size_t size) const;
    void load();
    void persist_locked();

    DeviceSeal& seal_;
    KeystoreOptions options_;
    Bytes store_key_;
    Bytes field_secret_;
    mutable std::mutex mu_;
    std::map<std::string, Record> records_;
    std::function<void(const std::string&)> observer_;
};

/// Writes `data` to `path` via a 0600 temporary file and rename.
void atomic_write(const fs::path& path, ByteView data);
Bytes read_file(const fs::path& path);

}  // namespace kmstn::keystore
