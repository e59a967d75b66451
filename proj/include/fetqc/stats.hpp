#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fetqc::stats {

double mean(std::span<const double> v);
/// Population variance (divides by n).
double variance(std::span<const double> v);
double stddev(std::span<const double> v);

/// Percentile in [0, 100] with linear interpolation between order statistics
/// (rank = p/100 * (n-1)). `sorted` must be ascending and nonempty.
double percentile_sorted(std::span<const double> sorted, double p);
double percentile(std::vector<double> v, double p);
double median(std::vector<double> v);

/// Pearson correlation; NaN when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> midranks(std::span<const double> v);

}  // namespace fetqc::stats
