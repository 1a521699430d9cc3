#pragma once

#include <span>
#include <vector>

namespace aepo::stats {

double mean(std::span<const double> xs);
// Sample (n - 1) standard deviation.
double stddev(std::span<const double> xs);
// Average ranks, ties share the mean rank (1-based).
std::vector<double> ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
// Spearman rank correlation of ys against 0, 1, 2, ...
double spearman_trend(std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);
// Trailing moving average; the first window - 1 points average what exists.
std::vector<double> moving_average(std::span<const double> xs, std::size_t window);
// Upper-tail p-value of Pearson's chi-square statistic.
double chi_square_pvalue(std::span<const double> observed, std::span<const double> expected);

}  // namespace aepo::stats
