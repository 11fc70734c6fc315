#include "kmstn/error.hpp"

namespace kmstn {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::parse: return "parse_error";
        case Errc::invariant: return "invariant_error";
        case Errc::mandatory_extension: return "mandatory_extension_error";
        case Errc::empty_input: return "empty_input";
        case Errc::auth_failure: return "auth_failure";
        case Errc::not_found: return "not_found";
        case Errc::already_consumed: return "already_consumed";
        case Errc::bind: return "bind_error";
        case Errc::connect: return "connect_error";
        case Errc::protocol: return "protocol_error";
        case Errc::seal_unavailable: return "seal_unavailable";
        case Errc::duplicate_key_id: return "duplicate_key_id";
        case Errc::key_not_present: return "key_not_present";
        case Errc::voided: return "voided";
        case Errc::unauthorized: return "unauthorized";
        case Errc::config: return "config_error";
        case Errc::unreachable: return "unreachable";
        case Errc::unknown_sae: return "unknown_sae";
        case Errc::ambiguous_binding: return "ambiguous_binding";
        case Errc::depleted: return "depleted";
        case Errc::hop_depleted: return "hop_depleted";
        case Errc::peer_unreachable: return "peer_unreachable";
        case Errc::bad_request: return "bad_request";
        case Errc::insufficient_data: return "insufficient_data";
        case Errc::aborted_run: return "aborted_run";
        case Errc::io: return "io_error";
        case Errc::internal: return "internal_error";
    }
    return "unknown";
}

std::optional<Errc> parse_errc(std::string_view text) noexcept {
    for (int i = 0; i <= static_cast<int>(Errc::internal); ++i) {
        if (to_string(static_cast<Errc>(i)) == text) return static_cast<Errc>(i);
    }
    return std::nullopt;
}

namespace {

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

}  // namespace

MandatoryExtensionError::MandatoryExtensionError(std::vector<std::string> names)
    : Error(Errc::mandatory_extension, "unsupported mandatory extensions: " + join_names(names)),
      names_(std::move(names)) {}

}  // namespace kmstn
