#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "kmstn/bytes.hpp"

namespace kmstn {

inline constexpr std::string_view wire_version = "v1";
inline constexpr std::size_t max_id_length = 256;

namespace detail {

template <class Tag>
class StrongId {
public:
    StrongId() = default;
    /// Throws Error(Errc::invariant) for empty or over-long values.
    explicit StrongId(std::string value);

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    auto operator<=>(const StrongId&) const = default;

private:
    std::string value_;
};

struct SaeTag {};
struct KmeTag {};

}  // namespace detail

using SaeId = detail::StrongId<detail::SaeTag>;
using KmeId = detail::StrongId<detail::KmeTag>;

/// One identified unit of secret key material.
struct KeyBlock {
    std::string key_id;
    Bytes key_material;

    std::size_t size_bits() const noexcept { return key_material.size() * 8; }
    /// key_id is a UUID and the material is non-empty.
    void validate() const;

    bool operator==(const KeyBlock&) const = default;
};

/// Opaque extension record; only the name is interpreted.
struct Extension {
    std::string name;
    nlohmann::json value;

    bool operator==(const Extension&) const = default;
};

/// ETSI 014 key container: {"keys":[{"key_ID":..., "key":base64}]}.
struct KeyContainer {
    std::vector<KeyBlock> keys;

    bool operator==(const KeyContainer&) const = default;
};

/// Relay payload (020-inspired ext_keys body).
struct ExtKeyContainer {
    std::vector<KeyBlock> keys;
    SaeId owner_master_sae_id;
    std::vector<SaeId> target_sae_ids;
    std::string ack_callback_url;
    std::vector<Extension> extension_mandatory;
    std::vector<Extension> extension_optional;

    bool operator==(const ExtKeyContainer&) const = default;
};

enum class AckStatus { relayed, voided, failed, key_not_present };

std::string_view to_string(AckStatus status) noexcept;
/// Throws Error(Errc::parse) for anything but the four status strings.
AckStatus parse_ack_status(std::string_view text);

struct AckContainer {
    std::vector<std::string> key_ids;
    AckStatus ack_status = AckStatus::relayed;
    SaeId initiator_sae_id;
    /// Always treated as optional, never enforced.
    std::optional<nlohmann::json> message;

    bool operator==(const AckContainer&) const = default;
};

/// Body of a void_keys message.
struct VoidRequest {
    std::vector<std::string> key_ids;
    SaeId initiator_sae_id;
    std::string ack_callback_url;

    bool operator==(const VoidRequest&) const = default;
};

/// The ciphered wrapper for every KMS-to-KMS message. `sae` names the owner
/// of the transport QKD key and is present only on hybrid hops.
struct EncryptedEnvelope {
    Bytes iv;
    Bytes ciphertext;
    std::string session;
    std::optional<SaeId> sae;

    bool operator==(const EncryptedEnvelope&) const = default;
};

inline constexpr std::size_t envelope_iv_size = 12;

// Wire codecs. Encoders emit canonical JSON (sorted keys, no whitespace).
// Decoders throw Error(Errc::parse) on malformed JSON/base64 and
// Error(Errc::invariant) on missing, extra or ill-typed fields.
std::string encode_envelope(const EncryptedEnvelope& envelope);
EncryptedEnvelope decode_envelope(std::string_view bytes);

std::string encode_key_container(const KeyContainer& container);
/// When expected_size_bits is given every key must decode to that size.
KeyContainer decode_key_container(std::string_view bytes,
                                  std::optional<std::size_t> expected_size_bits = std::nullopt);

std::string encode_ext_key_container(const ExtKeyContainer& container);
ExtKeyContainer decode_ext_key_container(std::string_view bytes);

std::string encode_ack_containers(const std::vector<AckContainer>& acks);
std::vector<AckContainer> decode_ack_containers(std::string_view bytes);

std::string encode_void_request(const VoidRequest& request);
VoidRequest decode_void_request(std::string_view bytes);

/// Throws MandatoryExtensionError naming every unsupported mandatory
/// extension; optional extensions are ignored.
void validate_extensions(const ExtKeyContainer& container, const std::set<std::string>& supported);

/// True for absolute http(s) URLs with a host and an optional port.
bool is_valid_url(std::string_view url);

}  // namespace kmstn
