#include <gtest/gtest.h>

#include <sys/stat.h>

#include <thread>

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/keystore.hpp"
#include "kmstn/log.hpp"
#include "support/temp_dir.hpp"

using namespace kmstn;
using namespace kmstn::keystore;

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

struct SealedStore : ::testing::Test {
    fixtures::TempDir tmp;
    fs::path state() const { return tmp / "state"; }
    SealOptions opts(const std::string& device = "device-a") const {
        SealOptions o;
        o.device_secret_path = tmp / device / "device.secret";
        return o;
    }
};

KeyBlock random_key(std::size_t bytes = 32) { return KeyBlock{crypto::uuid_v4(), crypto::random_bytes(bytes)}; }

Bytes all_persisted_bytes(const fs::path& dir) {
    Bytes out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto b = read_file(e.path());
        out.insert(out.end(), b.begin(), b.end());
        out.push_back(0);
    }
    return out;
}

}  // namespace

TEST_F(SealedStore, FreshSealIsEmulatedWithWarnings) {
    std::vector<std::string> warnings;
    auto prev = log::set_sink([&](log::Level lvl, std::string_view, std::string_view msg) {
        if (lvl == log::Level::warn) warnings.emplace_back(msg);
    });
    auto seal = DeviceSeal::init(state(), opts());
    log::set_sink(prev);
    EXPECT_TRUE(seal.emulated());
    EXPECT_GE(warnings.size(), 2u);
    EXPECT_TRUE(fs::exists(state() / "seal.blob"));
}

TEST_F(SealedStore, SecondInitUnsealsSameMaster) {
    {
        auto seal = DeviceSeal::init(state(), opts());
        seal.seal_secret("db", to_bytes("hunter2"));
    }
    auto seal = DeviceSeal::init(state(), opts());
    EXPECT_EQ(seal.unseal_secret("db"), to_bytes("hunter2"));
}

TEST_F(SealedStore, DifferentDeviceSecretCannotUnseal) {
    { DeviceSeal::init(state(), opts("device-a")).seal_secret("db", to_bytes("v")); }
    fs::create_directories(tmp / "device-b");
    keystore::atomic_write(tmp / "device-b" / "device.secret", crypto::random_bytes(32));
    EXPECT_EQ(code_of([&] { DeviceSeal::init(state(), opts("device-b")); }), Errc::auth_failure);
}

TEST_F(SealedStore, RequireHardwareWithoutModule) {
    if (DeviceSeal::hardware_present()) GTEST_SKIP() << "host exposes a TPM device";
    auto o = opts();
    o.require_hardware = true;
    EXPECT_EQ(code_of([&] { DeviceSeal::init(state(), o); }), Errc::seal_unavailable);
}

TEST_F(SealedStore, PasswordFallbackAndNothingAvailable) {
    SealOptions o;
    o.allow_emulation = false;
    EXPECT_EQ(code_of([&] { DeviceSeal::init(state(), o); }), Errc::seal_unavailable);
    o.password = "correct horse";
    {
        auto seal = DeviceSeal::init(state(), o);
        EXPECT_EQ(seal.mode(), SealMode::password);
        seal.seal_secret("x", to_bytes("y"));
    }
    EXPECT_EQ(DeviceSeal::init(state(), o).unseal_secret("x"), to_bytes("y"));
    o.password = "wrong";
    EXPECT_EQ(code_of([&] { DeviceSeal::init(state(), o); }), Errc::auth_failure);
}

TEST_F(SealedStore, SecretsRoundTripAndDistinctCiphertexts) {
    auto seal = DeviceSeal::init(state(), opts());
    const Bytes value(40, 0x5A);
    seal.seal_secret("one", value);
    seal.seal_secret("two", value);
    EXPECT_EQ(seal.unseal_secret("one"), value);
    EXPECT_EQ(seal.unseal_secret("two"), value);
    EXPECT_EQ(code_of([&] { seal.unseal_secret("missing"); }), Errc::not_found);

    const auto doc = nlohmann::json::parse(to_string(read_file(state() / "secrets.dat")));
    const auto& e = doc["entries"];
    EXPECT_NE(e["one"]["ct"], e["two"]["ct"]);
    EXPECT_NE(e["one"]["iv"], e["two"]["iv"]);
    EXPECT_FALSE(contains_subsequence(read_file(state() / "secrets.dat"), value));
}

TEST_F(SealedStore, FilesAreOwnerOnly) {
    auto seal = DeviceSeal::init(state(), opts());
    Keystore ks(seal);
    ks.put_key(random_key(), SaeId("o"), {SaeId("t")});
    for (const char* name : {"seal.blob", "secrets.dat", "keystore.db"}) {
        struct stat st{};
        ASSERT_EQ(::stat((state() / name).c_str(), &st), 0) << name;
        EXPECT_EQ(st.st_mode & 0777, 0600u) << name;
    }
}

TEST_F(SealedStore, PutGetRoundTripAndErrors) {
    auto seal = DeviceSeal::init(state(), opts());
    Keystore ks(seal);
    const auto k = random_key();
    ks.put_key(k, SaeId("sae1"), {SaeId("sae8")});
    EXPECT_EQ(code_of([&] { ks.put_key(k, SaeId("sae1"), {SaeId("sae8")}); }), Errc::duplicate_key_id);
    EXPECT_EQ(ks.get_key(k.key_id, SaeId("sae8")), k);
    EXPECT_EQ(ks.get_key(k.key_id, SaeId("sae8")), k);
    EXPECT_EQ(ks.info(k.key_id)->state, KeyState::delivered);
    EXPECT_EQ(code_of([&] { ks.get_key(k.key_id, SaeId("sae5")); }), Errc::unauthorized);
    EXPECT_EQ(code_of([&] { ks.get_key(crypto::uuid_v4(), SaeId("sae8")); }), Errc::key_not_present);
}

TEST_F(SealedStore, VoidStateMachine) {
    auto seal = DeviceSeal::init(state(), opts());
    Keystore ks(seal);
    const auto k = random_key();
    ks.put_key(k, SaeId("a"), {SaeId("b")});
    ks.void_key(k.key_id);
    EXPECT_EQ(code_of([&] { ks.get_key(k.key_id, SaeId("b")); }), Errc::voided);
    EXPECT_NO_THROW(ks.void_key(k.key_id));
    EXPECT_EQ(code_of([&] { ks.void_key(crypto::uuid_v4()); }), Errc::key_not_present);
    EXPECT_EQ(ks.info(k.key_id)->state, KeyState::voided);
}

TEST_F(SealedStore, DeliveredKeysExpireAfterTtl) {
    auto seal = DeviceSeal::init(state(), opts());
    auto now = std::chrono::system_clock::now();
    KeystoreOptions o;
    o.delivered_ttl = std::chrono::hours(24);
    o.wall_clock = [&] { return now; };
    Keystore ks(seal, o);
    const auto a = random_key();
    const auto b = random_key();
    ks.put_key(a, SaeId("o"), {SaeId("t")});
    ks.put_key(b, SaeId("o"), {SaeId("t")});
    ks.get_key(a.key_id, SaeId("t"));
    now += std::chrono::hours(23);
    EXPECT_EQ(ks.purge_expired(), 0u);
    now += std::chrono::hours(2);
    EXPECT_EQ(ks.purge_expired(), 1u);
    EXPECT_FALSE(ks.info(a.key_id));
    EXPECT_TRUE(ks.info(b.key_id));
}

TEST_F(SealedStore, DurableAcrossRestartAndNoPlaintextAtRest) {
    std::vector<KeyBlock> keys;
    std::vector<std::string> voided;
    {
        auto seal = DeviceSeal::init(state(), opts());
        Keystore ks(seal);
        for (int i = 0; i < 60; ++i) {
            keys.push_back(random_key(i % 2 ? 32 : 16));
            ks.put_key(keys.back(), SaeId("o"), {SaeId("t")});
            if (i % 5 == 0) ks.get_key(keys.back().key_id, SaeId("t"));
            if (i % 7 == 0) {
                ks.void_key(keys.back().key_id);
                voided.push_back(keys.back().key_id);
            }
            const auto image = all_persisted_bytes(state());
            for (const auto& k : keys) ASSERT_FALSE(contains_subsequence(image, k.key_material));
        }
    }
    auto seal = DeviceSeal::init(state(), opts());
    Keystore ks(seal);
    for (const auto& k : keys) {
        if (std::find(voided.begin(), voided.end(), k.key_id) != voided.end()) {
            EXPECT_EQ(code_of([&] { ks.get_key(k.key_id, SaeId("t")); }), Errc::voided);
        } else {
            EXPECT_EQ(ks.get_key(k.key_id, SaeId("t")), k);
        }
    }
}

TEST_F(SealedStore, CommitObserverFiresAfterDurableWrite) {
    auto seal = DeviceSeal::init(state(), opts());
    Keystore ks(seal);
    const auto k = random_key();
    bool durable = false;
    ks.set_commit_observer([&](const std::string& id) {
        EXPECT_EQ(id, k.key_id);
        auto again = DeviceSeal::init(state(), opts());
        Keystore reader(again);
        durable = reader.info(id).has_value();
    });
    ks.put_key(k, SaeId("o"), {SaeId("t")});
    EXPECT_TRUE(durable);
}

TEST_F(SealedStore, ConcurrentPutsAreSerialized) {
    auto seal = DeviceSeal::init(state(), opts());
    Keystore ks(seal);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 10; ++i) ks.put_key(random_key(), SaeId("o"), {SaeId("t")});
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(ks.size(), 40u);
    auto again = DeviceSeal::init(state(), opts());
    EXPECT_EQ(Keystore(again).size(), 40u);
}
