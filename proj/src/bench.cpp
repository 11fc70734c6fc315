#include "kmstn/bench.hpp"

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "kmstn/error.hpp"
#include "kmstn/log.hpp"
#include "kmstn/stats.hpp"

namespace kmstn::bench {

std::string_view to_string(Kind k) noexcept {
    switch (k) {
        case Kind::keyrate:
            return "keyrate";
        case Kind::delay:
            return "delay";
        case Kind::concurrency:
            return "concurrency";
    }
    return "keyrate";
}

Kind parse_kind(std::string_view text) {
    if (text == "keyrate") return Kind::keyrate;
    if (text == "delay") return Kind::delay;
    if (text == "concurrency") return Kind::concurrency;
    fail(Errc::bad_request, "unknown experiment kind '" + std::string(text) + "'");
}

void ExperimentSpec::validate() const {
    if (n_requests < 1) fail(Errc::bad_request, "n_requests must be at least 1");
    if (concurrency < 1) fail(Errc::bad_request, "concurrency must be at least 1");
    if (epochs < 1) fail(Errc::bad_request, "epochs must be at least 1");
    if (key_size_bits <= 0 || key_size_bits % 8 != 0) fail(Errc::bad_request, "key size must be a positive multiple of 8");
}

Aggregates aggregate(const std::vector<RequestRecord>& records) {
    Aggregates a;
    a.requests = static_cast<int>(records.size());
    std::vector<double> latencies;
    std::vector<double> rates;
    double start = 0.0;
    double end = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        start = i == 0 ? r.timestamp_ms : std::min(start, r.timestamp_ms);
        end = i == 0 ? r.timestamp_ms + r.latency_ms : std::max(end, r.timestamp_ms + r.latency_ms);
        if (!r.success) continue;
        ++a.successes;
        a.delivered_bits += static_cast<std::uint64_t>(r.bits);
        latencies.push_back(r.latency_ms);
        if (r.latency_ms > 0.0) rates.push_back(r.bits / (r.latency_ms / 1000.0));
    }
    if (a.requests > 0) a.error_rate = 1.0 - static_cast<double>(a.successes) / a.requests;
    a.elapsed_s = (end - start) / 1000.0;
    if (a.elapsed_s > 0.0) a.throughput_bps = static_cast<double>(a.delivered_bits) / a.elapsed_s;
    if (!rates.empty()) {
        a.mean_keyrate_bps = stats::mean(rates);
        a.std_keyrate_bps = stats::stddev(rates);
        a.p95_keyrate_bps = stats::percentile(rates, 95);
    }
    if (!latencies.empty()) {
        a.latency_median_ms = stats::median(latencies);
        a.latency_p95_ms = stats::percentile(latencies, 95);
    }
    const auto jit = stats::jitter(latencies);
    if (!jit.empty()) {
        a.jitter_median_ms = stats::median(jit);
        a.jitter_p95_ms = stats::percentile(jit, 95);
    }
    const auto rs = stats::rolling_std(latencies, rolling_window);
    if (!rs.empty()) a.rolling_std_p95_ms = stats::percentile(rs, 95);
    return a;
}

namespace {

std::vector<double> successful_latencies(const std::vector<RequestRecord>& records) {
    std::vector<double> out;
    for (const auto& r : records) {
        if (r.success) out.push_back(r.latency_ms);
    }
    return out;
}

std::string default_name(const ExperimentSpec& s) {
    std::string n = std::string(to_string(s.kind)) + "-" + s.src + "-" + s.dst;
    if (s.kind == Kind::concurrency) n += "-c" + std::to_string(s.concurrency);
    return n;
}

}  // namespace

Harness::Harness(std::shared_ptr<Clock> clock) : clock_(std::move(clock)), manual_(dynamic_cast<ManualClock*>(clock_.get())) {}

void Harness::advance(double ms) {
    if (manual_ && ms > 0.0) manual_->advance(from_millis(ms));
}

MetricsRecord Harness::run(const ExperimentSpec& spec, const KeySource& source) {
    switch (spec.kind) {
        case Kind::keyrate:
            return run_keyrate(spec, source);
        case Kind::delay:
            return run_delay(spec, source);
        case Kind::concurrency:
            return run_concurrency(spec, source);
    }
    fail(Errc::bad_request, "unknown experiment kind");
}

MetricsRecord Harness::run_sequential(const ExperimentSpec& spec, const KeySource& source) {
    spec.validate();
    MetricsRecord m;
    m.spec = spec;
    m.spec.concurrency = 1;
    m.spec.epochs = 1;
    m.name = default_name(m.spec);
    for (int i = 0; i < spec.n_requests; ++i) {
        RequestRecord r;
        r.index = i;
        r.timestamp_ms = to_millis(clock_->now());
        const auto attempt = source(spec.key_size_bits);
        r.latency_ms = std::max(0.0, attempt.latency_ms);
        r.success = attempt.ok;
        r.error = attempt.error;
        r.bits = attempt.ok ? spec.key_size_bits : 0;
        advance(r.latency_ms);
        m.records.push_back(std::move(r));
    }
    m.aggregates = aggregate(m.records);
    if (m.aggregates.successes == 0) {
        fail(Errc::aborted_run, m.name + ": all " + std::to_string(spec.n_requests) + " requests failed (" +
                                    m.records.front().error + ")");
    }
    m.rolling_mean_ms = stats::rolling_mean(successful_latencies(m.records), rolling_window);
    return m;
}

MetricsRecord Harness::run_keyrate(const ExperimentSpec& spec, const KeySource& source) {
    auto s = spec;
    s.kind = Kind::keyrate;
    return run_sequential(s, source);
}

MetricsRecord Harness::run_delay(const ExperimentSpec& spec, const KeySource& source) {
    auto s = spec;
    s.kind = Kind::delay;
    return run_sequential(s, source);
}

MetricsRecord Harness::run_concurrency(const ExperimentSpec& spec, const KeySource& source) {
    spec.validate();
    const int c = spec.concurrency;
    MetricsRecord m;
    m.spec = spec;
    m.spec.kind = Kind::concurrency;
    m.spec.n_requests = c * spec.epochs;
    m.name = default_name(m.spec);

    std::vector<std::vector<RequestRecord>> buffers(static_cast<std::size_t>(c));
    double epoch_start = 0.0;
    std::barrier sync(c + 1);
    std::vector<std::thread> workers;
    for (int w = 0; w < c; ++w) {
        workers.emplace_back([&, w] {
            for (int e = 0; e < spec.epochs; ++e) {
                sync.arrive_and_wait();
                RequestRecord r;
                r.index = e * c + w;
                r.epoch = e;
                r.worker = w;
                r.timestamp_ms = epoch_start;
                Attempt attempt;
                try {
                    attempt = source(spec.key_size_bits);
                } catch (const std::exception& ex) {
                    attempt.error = ex.what();
                }
                r.latency_ms = std::max(0.0, attempt.latency_ms);
                r.success = attempt.ok;
                r.error = attempt.error;
                r.bits = attempt.ok ? spec.key_size_bits : 0;
                buffers[static_cast<std::size_t>(w)].push_back(std::move(r));
                sync.arrive_and_wait();
            }
        });
    }
    for (int e = 0; e < spec.epochs; ++e) {
        epoch_start = to_millis(clock_->now());
        sync.arrive_and_wait();
        sync.arrive_and_wait();
        double slowest = 0.0;
        for (const auto& b : buffers) slowest = std::max(slowest, b.back().latency_ms);
        advance(slowest);
    }
    for (auto& t : workers) t.join();

    for (auto& b : buffers) m.records.insert(m.records.end(), b.begin(), b.end());
    std::sort(m.records.begin(), m.records.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    m.aggregates = aggregate(m.records);
    m.rolling_mean_ms = stats::rolling_mean(successful_latencies(m.records), rolling_window);
    return m;
}

KeySource sae_source(std::shared_ptr<const sae::SaeClient> client, std::vector<SaeId> slaves) {
    return [client = std::move(client), slaves = std::move(slaves)](int bits) {
        Attempt a;
        try {
            client->get_key(slaves, 1, bits, &a.latency_ms);
            a.ok = true;
        } catch (const Error& e) {
            a.error = std::string(kmstn::to_string(e.code()));
        }
        return a;
    };
}

KeySource trace_source(std::vector<double> latencies_ms) {
    if (latencies_ms.empty()) fail(Errc::bad_request, "trace is empty");
    auto next = std::make_shared<std::atomic<std::size_t>>(0);
    return [trace = std::move(latencies_ms), next](int) {
        return Attempt{true, trace[next->fetch_add(1) % trace.size()], {}};
    };
}

KeySource null_source() {
    return [](int) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto t1 = std::chrono::steady_clock::now();
        return Attempt{true, std::chrono::duration<double, std::milli>(t1 - t0).count(), {}};
    };
}

std::pair<SaeId, SaeId> sae_pair(const config::Bundle& bundle, const std::string& src, const std::string& dst) {
    auto first_sae = [&](const std::string& id) {
        const auto* k = bundle.find_kmstn(id);
        if (!k) fail(Errc::config, "unknown kmstn " + id);
        if (k->bound_saes.empty()) fail(Errc::config, "no SAE is bound at " + id);
        return k->bound_saes.front();
    };
    return {first_sae(src), first_sae(dst)};
}

KeySource deployment_source(const config::Bundle& bundle, const ExperimentSpec& spec, std::shared_ptr<const Clock> clock) {
    const auto [master, slave] = sae_pair(bundle, spec.src, spec.dst);
    auto client = std::make_shared<const sae::SaeClient>(sae::profile_for(bundle, master), std::move(clock));
    return sae_source(std::move(client), {slave});
}

CorrelationMatrix correlate(const std::vector<MetricsRecord>& experiments) {
    if (experiments.size() < 3) {
        fail(Errc::insufficient_data, "correlation needs at least 3 experiments, got " + std::to_string(experiments.size()));
    }
    std::vector<std::vector<double>> cols(correlation_columns.size());
    for (const auto& e : experiments) {
        const auto& a = e.aggregates;
        cols[0].push_back(a.error_rate);
        cols[1].push_back(a.mean_keyrate_bps.value_or(0.0));
        cols[2].push_back(a.p95_keyrate_bps.value_or(0.0));
        cols[3].push_back(e.spec.n_requests);
        cols[4].push_back(e.spec.concurrency);
    }
    CorrelationMatrix m;
    m.columns = correlation_columns;
    const auto n = cols.size();
    m.pearson.assign(n, std::vector<std::optional<double>>(n));
    m.spearman.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m.pearson[i][j] = stats::pearson(cols[i], cols[j]);
            m.spearman[i][j] = stats::spearman(cols[i], cols[j]);
        }
    }
    return m;
}

const std::vector<std::string> raw_csv_header = {"experiment", "kind",       "src",          "dst",
                                                 "concurrency", "epoch",     "worker",       "index",
                                                 "timestamp_ms", "latency_ms", "success",     "error",
                                                 "bits"};
const std::vector<std::string> aggregate_csv_header = {
    "experiment",        "kind",           "src",             "dst",               "n_requests",
    "concurrency",       "key_size_bits",  "seed",            "successes",         "error_rate",
    "delivered_bits",    "elapsed_s",      "throughput_bps",  "mean_keyrate_bps",  "std_keyrate_bps",
    "p95_keyrate_bps",   "latency_median_ms", "latency_p95_ms", "jitter_median_ms", "jitter_p95_ms",
    "rolling_std_p95_ms"};

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

std::string num(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_row(std::ostream& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
    out << "\n";
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    return out;
}

}  // namespace

nlohmann::json to_json(const ExperimentSpec& s) {
    return {{"kind", to_string(s.kind)}, {"src", s.src},           {"dst", s.dst},
            {"n_requests", s.n_requests}, {"concurrency", s.concurrency}, {"epochs", s.epochs},
            {"key_size_bits", s.key_size_bits}, {"seed", s.seed}};
}

ExperimentSpec spec_from_json(const nlohmann::json& doc) {
    try {
        ExperimentSpec s;
        s.kind = parse_kind(doc.at("kind").get<std::string>());
        s.src = doc.at("src").get<std::string>();
        s.dst = doc.at("dst").get<std::string>();
        s.n_requests = doc.value("n_requests", s.n_requests);
        s.concurrency = doc.value("concurrency", s.concurrency);
        s.epochs = doc.value("epochs", s.epochs);
        s.key_size_bits = doc.value("key_size_bits", s.key_size_bits);
        s.seed = doc.value("seed", s.seed);
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::bad_request, std::string("bad experiment spec: ") + e.what());
    }
}

nlohmann::json to_json(const MetricsRecord& m) {
    const auto& a = m.aggregates;
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : m.records) {
        records.push_back({{"index", r.index},
                           {"epoch", r.epoch},
                           {"worker", r.worker},
                           {"timestamp_ms", r.timestamp_ms},
                           {"latency_ms", r.latency_ms},
                           {"success", r.success},
                           {"error", r.error},
                           {"bits", r.bits}});
    }
    return {{"name", m.name},
            {"spec", to_json(m.spec)},
            {"aggregates",
             {{"requests", a.requests},
              {"successes", a.successes},
              {"error_rate", a.error_rate},
              {"delivered_bits", a.delivered_bits},
              {"elapsed_s", a.elapsed_s},
              {"throughput_bps", opt(a.throughput_bps)},
              {"mean_keyrate_bps", opt(a.mean_keyrate_bps)},
              {"std_keyrate_bps", opt(a.std_keyrate_bps)},
              {"p95_keyrate_bps", opt(a.p95_keyrate_bps)},
              {"latency_median_ms", opt(a.latency_median_ms)},
              {"latency_p95_ms", opt(a.latency_p95_ms)},
              {"jitter_median_ms", opt(a.jitter_median_ms)},
              {"jitter_p95_ms", opt(a.jitter_p95_ms)},
              {"rolling_std_p95_ms", opt(a.rolling_std_p95_ms)}}},
            {"rolling_mean_ms", m.rolling_mean_ms},
            {"records", records}};
}

MetricsRecord metrics_from_json(const nlohmann::json& doc) {
    try {
        MetricsRecord m;
        m.name = doc.at("name").get<std::string>();
        m.spec = spec_from_json(doc.at("spec"));
        for (const auto& r : doc.at("records")) {
            m.records.push_back({r.at("index").get<int>(), r.at("epoch").get<int>(), r.at("worker").get<int>(),
                                 r.at("timestamp_ms").get<double>(), r.at("latency_ms").get<double>(),
                                 r.at("success").get<bool>(), r.at("error").get<std::string>(), r.at("bits").get<int>()});
        }
        const auto& a = doc.at("aggregates");
        m.aggregates.requests = a.at("requests").get<int>();
        m.aggregates.successes = a.at("successes").get<int>();
        m.aggregates.error_rate = a.at("error_rate").get<double>();
        m.aggregates.delivered_bits = a.at("delivered_bits").get<std::uint64_t>();
        m.aggregates.elapsed_s = a.at("elapsed_s").get<double>();
        m.aggregates.throughput_bps = opt_from(a.at("throughput_bps"));
        m.aggregates.mean_keyrate_bps = opt_from(a.at("mean_keyrate_bps"));
        m.aggregates.std_keyrate_bps = opt_from(a.at("std_keyrate_bps"));
        m.aggregates.p95_keyrate_bps = opt_from(a.at("p95_keyrate_bps"));
        m.aggregates.latency_median_ms = opt_from(a.at("latency_median_ms"));
        m.aggregates.latency_p95_ms = opt_from(a.at("latency_p95_ms"));
        m.aggregates.jitter_median_ms = opt_from(a.at("jitter_median_ms"));
        m.aggregates.jitter_p95_ms = opt_from(a.at("jitter_p95_ms"));
        m.aggregates.rolling_std_p95_ms = opt_from(a.at("rolling_std_p95_ms"));
        m.rolling_mean_ms = doc.at("rolling_mean_ms").get<std::vector<double>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, std::string("bad results document: ") + e.what());
    }
}

nlohmann::json to_json(const CorrelationMatrix& c) {
    auto matrix = [](const std::vector<std::vector<std::optional<double>>>& m) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& row : m) {
            nlohmann::json r = nlohmann::json::array();
            for (const auto& v : row) r.push_back(opt(v));
            out.push_back(r);
        }
        return out;
    };
    return {{"columns", c.columns}, {"pearson", matrix(c.pearson)}, {"spearman", matrix(c.spearman)}};
}

nlohmann::json results_document(const std::vector<MetricsRecord>& experiments) {
    nlohmann::json doc{{"schema", "kmstn-bench/1"}, {"experiments", nlohmann::json::array()}, {"correlation", nullptr}};
    for (const auto& e : experiments) doc["experiments"].push_back(to_json(e));
    if (experiments.size() >= 3) doc["correlation"] = to_json(correlate(experiments));
    return doc;
}

std::vector<MetricsRecord> read_results(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot read " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, path.string() + ": " + e.what());
    }
    std::vector<MetricsRecord> out;
    for (const auto& e : doc.at("experiments")) out.push_back(metrics_from_json(e));
    return out;
}

void write_raw_csv(const std::vector<MetricsRecord>& experiments, const fs::path& path) {
    auto out = open_out(path);
    write_row(out, raw_csv_header);
    for (const auto& e : experiments) {
        for (const auto& r : e.records) {
            write_row(out, {e.name, std::string(to_string(e.spec.kind)), e.spec.src, e.spec.dst,
                            std::to_string(e.spec.concurrency), std::to_string(r.epoch), std::to_string(r.worker),
                            std::to_string(r.index), num(r.timestamp_ms), num(r.latency_ms), r.success ? "1" : "0",
                            r.error, std::to_string(r.bits)});
        }
    }
}

void write_aggregate_csv(const std::vector<MetricsRecord>& experiments, const fs::path& path) {
    auto out = open_out(path);
    write_row(out, aggregate_csv_header);
    for (const auto& e : experiments) {
        const auto& a = e.aggregates;
        write_row(out, {e.name, std::string(to_string(e.spec.kind)), e.spec.src, e.spec.dst,
                        std::to_string(e.spec.n_requests), std::to_string(e.spec.concurrency),
                        std::to_string(e.spec.key_size_bits), std::to_string(e.spec.seed), std::to_string(a.successes),
                        num(a.error_rate), std::to_string(a.delivered_bits), num(a.elapsed_s), num(a.throughput_bps),
                        num(a.mean_keyrate_bps), num(a.std_keyrate_bps), num(a.p95_keyrate_bps),
                        num(a.latency_median_ms), num(a.latency_p95_ms), num(a.jitter_median_ms), num(a.jitter_p95_ms),
                        num(a.rolling_std_p95_ms)});
    }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot read " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field += c;
        }
    }
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

void export_to(const std::vector<MetricsRecord>& experiments, const fs::path& dir, const ExportOptions& options) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
    if (options.csv) {
        write_raw_csv(experiments, dir / "requests.csv");
        write_aggregate_csv(experiments, dir / "aggregates.csv");
    }
    if (options.json) open_out(dir / "results.json") << results_document(experiments).dump(2) << "\n";
    if (options.plot_script) {
        const std::string cmd = "python3 '" + options.plot_script->string() + "' '" + dir.string() + "'";
        if (std::system(cmd.c_str()) != 0) log::warn("bench", "plot script failed; data files are complete");
    }
}

fs::path export_results(const std::vector<MetricsRecord>& experiments, const fs::path& root, const ExportOptions& options) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    ::gmtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    auto dir = root / stamp.str();
    for (int i = 1; fs::exists(dir); ++i) dir = root / (stamp.str() + "-" + std::to_string(i));
    export_to(experiments, dir, options);
    return dir;
}

}  // namespace kmstn::bench
