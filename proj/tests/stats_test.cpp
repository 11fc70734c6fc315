#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "kmstn/error.hpp"
#include "kmstn/stats.hpp"

namespace kmstn {
namespace {

// Reference implementations written the long way round.
double oracle_percentile(std::vector<double> xs, double p) {
    // Smallest value whose share of values at or below it reaches p percent.
    std::sort(xs.begin(), xs.end());
    for (double x : xs) {
        const auto at_or_below = std::count_if(xs.begin(), xs.end(), [&](double y) { return y <= x; });
        if (100.0 * static_cast<double>(at_or_below) >= p * static_cast<double>(xs.size())) return x;
    }
    return xs.back();
}

double oracle_sample_std(const std::vector<double>& xs) {
    double sum = 0;
    for (double x : xs) sum += x;
    const double m = sum / xs.size();
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / (xs.size() - 1));
}

double oracle_median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const auto n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

TEST(Stats, HandTrace) {
    const std::vector<double> trace{100, 110, 90, 105, 100};
    EXPECT_DOUBLE_EQ(stats::median(trace), 100.0);
    const auto jit = stats::jitter(trace);
    EXPECT_EQ(jit, (std::vector<double>{10, 20, 15, 5}));
    EXPECT_DOUBLE_EQ(stats::median(jit), 12.5);
    // Nearest rank: ceil(0.95 * 4) = 4th smallest.
    EXPECT_DOUBLE_EQ(stats::percentile(jit, 95), 20.0);
    EXPECT_DOUBLE_EQ(stats::percentile(jit, 50), 10.0);
    EXPECT_DOUBLE_EQ(stats::percentile(jit, 0), 5.0);
    const auto rm = stats::rolling_mean(trace, 4);
    ASSERT_EQ(rm.size(), 2u);
    EXPECT_DOUBLE_EQ(rm[0], 101.25);
    EXPECT_DOUBLE_EQ(rm[1], 101.25);
    const auto rs = stats::rolling_std(trace, 4);
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_NEAR(rs[0], oracle_sample_std({100, 110, 90, 105}), 1e-12);
    EXPECT_NEAR(rs[1], oracle_sample_std({110, 90, 105, 100}), 1e-12);
}

TEST(Stats, ConstantTrace) {
    const std::vector<double> flat(10, 42.0);
    for (double j : stats::jitter(flat)) EXPECT_EQ(j, 0.0);
    for (double s : stats::rolling_std(flat, 4)) EXPECT_EQ(s, 0.0);
    EXPECT_EQ(stats::stddev(flat), 0.0);
}

TEST(Stats, MatchesOraclesOnRandomSamples) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> value(0, 1000);
    std::uniform_int_distribution<int> length(1, 60);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> xs(static_cast<std::size_t>(length(rng)));
        for (auto& x : xs) x = std::round(value(rng));  // rounding forces ties
        EXPECT_EQ(stats::median(xs), oracle_median(xs));
        for (double p : {0.0, 5.0, 25.0, 50.0, 90.0, 95.0, 99.0, 100.0}) {
            EXPECT_EQ(stats::percentile(xs, p), oracle_percentile(xs, p)) << p;
        }
        if (xs.size() >= 2) EXPECT_NEAR(stats::stddev(xs), oracle_sample_std(xs), 1e-9 * (1 + oracle_sample_std(xs)));
    }
}

TEST(Stats, EmptyAndShortInputs) {
    const std::vector<double> none;
    EXPECT_THROW(stats::median(none), Error);
    EXPECT_THROW(stats::percentile(none, 50), Error);
    EXPECT_TRUE(stats::jitter(std::vector<double>{1.0}).empty());
    EXPECT_TRUE(stats::rolling_std(std::vector<double>{1, 2, 3}, 4).empty());
    EXPECT_THROW(stats::percentile(std::vector<double>{1.0}, 101), Error);
}

TEST(Stats, Ranks) {
    EXPECT_EQ(stats::ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Stats, Correlations) {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> cube;
    for (int i = 0; i < 20; ++i) {
        x.push_back(i);
        y.push_back(3.0 * i - 7.0);
        cube.push_back(std::pow(i - 5.0, 3));
    }
    EXPECT_NEAR(*stats::pearson(x, y), 1.0, 1e-12);
    std::vector<double> neg(y.rbegin(), y.rend());
    EXPECT_NEAR(*stats::pearson(x, neg), -1.0, 1e-12);
    EXPECT_NEAR(*stats::spearman(x, cube), 1.0, 1e-12);
    EXPECT_LT(*stats::pearson(x, cube), 1.0);
    EXPECT_FALSE(stats::pearson(x, std::vector<double>(20, 3.0)).has_value());
    EXPECT_FALSE(stats::spearman(x, std::vector<double>(20, 3.0)).has_value());
    EXPECT_THROW(stats::pearson(x, std::vector<double>{1, 2}), Error);
}

TEST(Stats, IndependentColumnsAreWeaklyCorrelated) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> d;
    std::vector<double> a(100);
    std::vector<double> b(100);
    for (auto& v : a) v = d(rng);
    for (auto& v : b) v = d(rng);
    EXPECT_LT(std::abs(*stats::pearson(a, b)), 0.3);
    EXPECT_LT(std::abs(*stats::spearman(a, b)), 0.3);
}

}  // namespace
}  // namespace kmstn
