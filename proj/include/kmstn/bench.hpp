#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "kmstn/clock.hpp"
#include "kmstn/config.hpp"
#include "kmstn/sae_client.hpp"

// Measurement harness: sequential keyrate and delay runs, concurrency epochs,
// correlation across experiments, CSV/JSON export.
namespace kmstn::bench {

namespace fs = std::filesystem;

enum class Kind { keyrate, delay, concurrency };
std::string_view to_string(Kind k) noexcept;
/// Throws Error(Errc::bad_request).
Kind parse_kind(std::string_view text);

struct ExperimentSpec {
    Kind kind = Kind::keyrate;
    /// KMSTN ids; the first SAE bound at each end is used.
    std::string src;
    std::string dst;
    /// Sequential kinds: requests issued. Concurrency: requests per epoch
    /// times epochs, filled in by the harness.
    int n_requests = 100;
    int concurrency = 1;
    /// Concurrency kind only.
    int epochs = 1;
    int key_size_bits = 256;
    std::uint64_t seed = 1;

    /// Throws Error(Errc::bad_request).
    void validate() const;
    bool operator==(const ExperimentSpec&) const = default;
};

/// Outcome of one key request as seen by the SAE.
struct Attempt {
    bool ok = false;
    double latency_ms = 0.0;
    std::string error;
};

/// Issues one request of the given key size. Called concurrently by the
/// concurrency driver, so it must be thread-safe.
using KeySource = std::function<Attempt(int key_size_bits)>;

struct RequestRecord {
    int index = 0;
    int epoch = 0;
    int worker = 0;
    /// Harness clock at send time.
    double timestamp_ms = 0.0;
    double latency_ms = 0.0;
    bool success = false;
    std::string error;
    int bits = 0;

    bool operator==(const RequestRecord&) const = default;
};

struct Aggregates {
    int requests = 0;
    int successes = 0;
    double error_rate = 0.0;
    std::uint64_t delivered_bits = 0;
    double elapsed_s = 0.0;
    /// delivered_bits / elapsed_s.
    std::optional<double> throughput_bps;
    /// Over per-request rates bits / latency of successful requests.
    std::optional<double> mean_keyrate_bps;
    std::optional<double> std_keyrate_bps;
    std::optional<double> p95_keyrate_bps;
    std::optional<double> latency_median_ms;
    std::optional<double> latency_p95_ms;
    std::optional<double> jitter_median_ms;
    std::optional<double> jitter_p95_ms;
    std::optional<double> rolling_std_p95_ms;

    bool operator==(const Aggregates&) const = default;
};

inline constexpr std::size_t rolling_window = 4;

/// Recomputes every aggregate from raw records (ordered by index).
Aggregates aggregate(const std::vector<RequestRecord>& records);

struct MetricsRecord {
    std::string name;
    ExperimentSpec spec;
    std::vector<RequestRecord> records;
    Aggregates aggregates;
    /// Rolling mean of successful latencies, window 4.
    std::vector<double> rolling_mean_ms;
};

class Harness {
public:
    /// With a manual clock the harness owns simulated time: it advances the
    /// clock by each request's latency (sequential) or by the slowest
    /// request of each epoch (concurrency).
    explicit Harness(std::shared_ptr<Clock> clock = system_clock());

    /// Keyrate and delay throw Error(Errc::aborted_run) when every request
    /// failed; for concurrency failures are data.
    MetricsRecord run(const ExperimentSpec& spec, const KeySource& source);
    MetricsRecord run_keyrate(const ExperimentSpec& spec, const KeySource& source);
    MetricsRecord run_delay(const ExperimentSpec& spec, const KeySource& source);
    MetricsRecord run_concurrency(const ExperimentSpec& spec, const KeySource& source);

private:
    MetricsRecord run_sequential(const ExperimentSpec& spec, const KeySource& source);
    void advance(double ms);

    std::shared_ptr<Clock> clock_;
    ManualClock* manual_ = nullptr;
};

/// Source backed by an SAE client requesting keys for `slaves`.
KeySource sae_source(std::shared_ptr<const sae::SaeClient> client, std::vector<SaeId> slaves);
/// Stub that replays `latencies_ms` in order (cycling) and always succeeds.
KeySource trace_source(std::vector<double> latencies_ms);
/// Stub with no service time: each request costs only the harness loop,
/// measured on the steady clock.
KeySource null_source();

/// The SAE bound first at `src` and the one bound first at `dst`. Throws
/// Error(Errc::config).
std::pair<SaeId, SaeId> sae_pair(const config::Bundle& bundle, const std::string& src, const std::string& dst);

/// Source for spec.src -> spec.dst against a running deployment whose bundle
/// carries the real ports; latency is measured on `clock`.
KeySource deployment_source(const config::Bundle& bundle, const ExperimentSpec& spec,
                            std::shared_ptr<const Clock> clock = system_clock());

struct CorrelationMatrix {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> pearson;
    std::vector<std::vector<std::optional<double>>> spearman;
};

inline const std::vector<std::string> correlation_columns = {"error_rate", "mean_keyrate_bps", "p95_keyrate_bps",
                                                              "n_requests", "concurrency"};

/// Throws Error(Errc::insufficient_data) for fewer than three experiments.
/// Undefined entries (a constant column) are nullopt.
CorrelationMatrix correlate(const std::vector<MetricsRecord>& experiments);

// Export. CSV columns are listed in raw_csv_header and aggregate_csv_header.
extern const std::vector<std::string> raw_csv_header;
extern const std::vector<std::string> aggregate_csv_header;

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MetricsRecord& m);
MetricsRecord metrics_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CorrelationMatrix& c);

/// {"schema": "kmstn-bench/1", "experiments": [...], "correlation": ...}.
nlohmann::json results_document(const std::vector<MetricsRecord>& experiments);
std::vector<MetricsRecord> read_results(const fs::path& path);

void write_raw_csv(const std::vector<MetricsRecord>& experiments, const fs::path& path);
void write_aggregate_csv(const std::vector<MetricsRecord>& experiments, const fs::path& path);
std::vector<std::vector<std::string>> read_csv(const fs::path& path);

struct ExportOptions {
    bool csv = true;
    bool json = true;
    /// Runs this plotting script on the output directory when set.
    std::optional<fs::path> plot_script;
};

/// Writes into root/<UTC timestamp>/ and returns that directory. Throws
/// Error(Errc::io).
fs::path export_results(const std::vector<MetricsRecord>& experiments, const fs::path& root,
                        const ExportOptions& options = {});
/// Same, into an explicit directory.
void export_to(const std::vector<MetricsRecord>& experiments, const fs::path& dir, const ExportOptions& options = {});

}  // namespace kmstn::bench
