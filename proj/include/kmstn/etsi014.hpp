#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kmstn/model.hpp"

// Request/response bodies of the 014-style key delivery API shared by the
// simulated QKD nodes, the KMSTN northbound API and the SAE client.
namespace kmstn::etsi014 {

struct KeyRequest {
    int number = 1;
    int size = 256;
    std::vector<SaeId> additional_slave_sae_ids;
    std::vector<Extension> extension_mandatory;
    std::vector<Extension> extension_optional;

    bool operator==(const KeyRequest&) const = default;
};

struct KeyIdsRequest {
    std::vector<std::string> key_ids;

    bool operator==(const KeyIdsRequest&) const = default;
};

struct Status {
    std::string source_kme_id;
    std::string target_kme_id;
    std::string master_sae_id;
    std::string slave_sae_id;
    int key_size = 256;
    long stored_key_count = 0;
    long max_key_count = 0;
    int max_key_per_request = 0;
    int max_key_size = 0;
    int min_key_size = 0;
    int max_sae_id_count = 0;
    /// Overlay extension: whether the slave's KMSTN is reachable.
    std::optional<bool> reachable;
    std::optional<std::string> kmstn_id;

    bool operator==(const Status&) const = default;
};

struct ErrorBody {
    std::string message;
    std::vector<std::string> details;
};

std::string encode(const KeyRequest& r);
KeyRequest decode_key_request(std::string_view body);

std::string encode(const KeyIdsRequest& r);
KeyIdsRequest decode_key_ids_request(std::string_view body);

std::string encode(const Status& s);
Status decode_status(std::string_view body);

std::string encode(const ErrorBody& e);
/// Lenient: returns the raw body as message when it is not an error object.
ErrorBody decode_error(std::string_view body);

}  // namespace kmstn::etsi014
