#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace teamfuse {

enum class Tail { greater, two_sided };

std::string_view to_string(Tail tail);
Tail parse_tail(std::string_view text);

struct TTest {
    double t = 0.0;
    double df = 0.0;
    // One-sided P(T >= t) for Tail::greater, P(|T| >= |t|) for two_sided.
    double p = 0.0;
};

// Welch's unequal-variance t-test of mean(a) > mean(b). Throws InputError
// when a sample has fewer than 2 values or (numerically) zero variance.
TTest welch_t(std::span<const double> a, std::span<const double> b, Tail tail = Tail::greater);

// One-sample t-test of mean(diffs) > 0 with n - 1 degrees of freedom.
TTest paired_t(std::span<const double> diffs, Tail tail = Tail::greater);
TTest paired_t(std::span<const double> a, std::span<const double> b, Tail tail = Tail::greater);

// Student-t upper tail probability P(T >= t).
double student_t_upper(double t, double df);

// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman correlation: Pearson correlation of average ranks. Empty when
// either vector is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// sqrt(p (1 - p) / n).
double binomial_sem(double accuracy, std::size_t n);

// Least-squares slope of y on x; 0 when x is constant.
double ls_slope(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);
// Sample variance with n - 1 in the denominator.
double sample_variance(std::span<const double> values);

}  // namespace teamfuse
