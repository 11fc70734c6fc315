#include "kmstn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kmstn/error.hpp"

namespace kmstn::stats {

namespace {

void require(std::span<const double> xs, std::size_t n, const char* what) {
    if (xs.size() < n) fail(Errc::insufficient_data, std::string(what) + " needs at least " + std::to_string(n) + " values");
}

std::vector<double> sorted(std::span<const double> xs) {
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

double mean(std::span<const double> xs) {
    require(xs, 1, "mean");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
    require(xs, 1, "stddev");
    if (xs.size() == 1) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double median(std::span<const double> xs) {
    require(xs, 1, "median");
    const auto v = sorted(xs);
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double percentile(std::span<const double> xs, double p) {
    require(xs, 1, "percentile");
    if (p < 0.0 || p > 100.0) fail(Errc::bad_request, "percentile must be in [0, 100]");
    const auto v = sorted(xs);
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<double> jitter(std::span<const double> xs) {
    std::vector<double> out;
    for (std::size_t i = 1; i < xs.size(); ++i) out.push_back(std::abs(xs[i] - xs[i - 1]));
    return out;
}

std::vector<double> rolling_mean(std::span<const double> xs, std::size_t window) {
    std::vector<double> out;
    if (window == 0) fail(Errc::bad_request, "window must be positive");
    for (std::size_t i = 0; i + window <= xs.size(); ++i) out.push_back(mean(xs.subspan(i, window)));
    return out;
}

std::vector<double> rolling_std(std::span<const double> xs, std::size_t window) {
    std::vector<double> out;
    if (window == 0) fail(Errc::bad_request, "window must be positive");
    for (std::size_t i = 0; i + window <= xs.size(); ++i) out.push_back(stddev(xs.subspan(i, window)));
    return out;
}

std::vector<double> ranks(std::span<const double> xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = r;
        i = j + 1;
    }
    return out;
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) fail(Errc::insufficient_data, "columns differ in length");
    require(xs, 2, "correlation");
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
    const auto rx = ranks(xs);
    const auto ry = ranks(ys);
    return pearson(rx, ry);
}

}  // namespace kmstn::stats
