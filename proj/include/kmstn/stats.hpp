#pragma once

#include <optional>
#include <span>
#include <vector>

// Descriptive statistics used by the benchmark harness. Every function is a
// plain recomputation over its input; nothing is cached.
namespace kmstn::stats {

/// Throws Error(Errc::insufficient_data) on empty input.
double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 in the denominator); 0 for one value.
double stddev(std::span<const double> xs);
/// Middle value, or the mean of the two middle values for even sizes.
double median(std::span<const double> xs);
/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (rank 1 for
/// p = 0). p in [0, 100].
double percentile(std::span<const double> xs, double p);

/// |x[i+1] - x[i]| for consecutive samples; empty for fewer than two.
std::vector<double> jitter(std::span<const double> xs);
/// Mean over each full window of `window` consecutive samples.
std::vector<double> rolling_mean(std::span<const double> xs, std::size_t window = 4);
/// Sample standard deviation over each full window.
std::vector<double> rolling_std(std::span<const double> xs, std::size_t window = 4);

/// Average ranks (1-based), ties sharing the mean of their positions.
std::vector<double> ranks(std::span<const double> xs);
/// Nullopt when either column is constant. Throws
/// Error(Errc::insufficient_data) for mismatched or too short columns.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace kmstn::stats
