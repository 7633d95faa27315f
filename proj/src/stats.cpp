#include "teamfuse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "teamfuse/errors.hpp"

namespace teamfuse {

namespace {

void check_spread(std::span<const double> values, const char* name) {
    if (values.size() < 2) throw InputError(std::string(name) + " needs at least 2 values");
    for (double v : values) {
        if (!std::isfinite(v)) throw InputError(std::string(name) + " contains a non-finite value");
    }
    double scale = 1.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    if (std::sqrt(sample_variance(values)) <= 1e-12 * scale) {
        throw InputError(std::string(name) + " has zero variance; the t statistic is undefined");
    }
}

double tail_probability(double t, double df, Tail tail) {
    return tail == Tail::greater ? student_t_upper(t, df) : 2.0 * student_t_upper(std::abs(t), df);
}

}  // namespace

std::string_view to_string(Tail tail) {
    return tail == Tail::greater ? "greater" : "two-sided";
}

Tail parse_tail(std::string_view text) {
    if (text == "greater" || text == "one-sided") return Tail::greater;
    if (text == "two-sided" || text == "two_sided") return Tail::two_sided;
    throw ConfigError("unknown tail '" + std::string(text) + "' (greater, two-sided)");
}

double mean(std::span<const double> values) {
    if (values.empty()) return std::nan("");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
    if (values.size() < 2) return std::nan("");
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return ss / static_cast<double>(values.size() - 1);
}

double student_t_upper(double t, double df) {
    if (std::isnan(t)) return std::nan("");
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const boost::math::students_t dist(df);
    return boost::math::cdf(boost::math::complement(dist, t));
}

TTest welch_t(std::span<const double> a, std::span<const double> b, Tail tail) {
    check_spread(a, "sample a");
    check_spread(b, "sample b");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = sample_variance(a) / na;
    const double vb = sample_variance(b) / nb;
    TTest r;
    r.t = (mean(a) - mean(b)) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = tail_probability(r.t, r.df, tail);
    return r;
}

TTest paired_t(std::span<const double> diffs, Tail tail) {
    check_spread(diffs, "differences");
    const double n = static_cast<double>(diffs.size());
    TTest r;
    r.t = mean(diffs) / std::sqrt(sample_variance(diffs) / n);
    r.df = n - 1.0;
    r.p = tail_probability(r.t, r.df, tail);
    return r;
}

TTest paired_t(std::span<const double> a, std::span<const double> b, Tail tail) {
    if (a.size() != b.size()) throw InputError("paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return paired_t(d, tail);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("correlated vectors differ in length");
    if (x.size() < 2) return std::nullopt;
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("correlated vectors differ in length");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

double binomial_sem(double accuracy, std::size_t n) {
    if (n == 0) return std::nan("");
    return std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(n));
}

double ls_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("regression vectors differ in length");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace teamfuse
