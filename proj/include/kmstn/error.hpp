#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kmstn {

enum class Errc {
    parse,
    invariant,
    mandatory_extension,
    empty_input,
    auth_failure,
    not_found,
    already_consumed,
    bind,
    connect,
    protocol,
    seal_unavailable,
    duplicate_key_id,
    key_not_present,
    voided,
    unauthorized,
    config,
    unreachable,
    unknown_sae,
    ambiguous_binding,
    depleted,
    hop_depleted,
    peer_unreachable,
    bad_request,
    insufficient_data,
    aborted_run,
    io,
    internal,
};

std::string_view to_string(Errc code) noexcept;
std::optional<Errc> parse_errc(std::string_view text) noexcept;

/// Base exception for everything the library throws. The code is the stable
/// part; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

class MandatoryExtensionError : public Error {
public:
    explicit MandatoryExtensionError(std::vector<std::string> names);

    const std::vector<std::string>& unsupported() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace kmstn
