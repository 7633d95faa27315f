#include "teamfuse/bayes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "json.hpp"
#include "teamfuse/parallel.hpp"

namespace teamfuse {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Prior scales of the latent-score model.
constexpr double kPriorLocationSd = 10.0;
constexpr double kSigmaUpper = 15.0;
constexpr double kDeltaUpper = 100.0;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sigmoid(double z) {
    return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double log_normal(double x, double mean, double variance) {
    const double d = x - mean;
    return -0.5 * (kLogTwoPi + std::log(variance) + d * d / variance);
}

double log_rating(int rating, double eta, std::span<const double> cutpoints, double delta) {
    const std::size_t k = static_cast<std::size_t>(rating);
    const std::size_t last = cutpoints.size();
    double p;
    if (k == 0) {
        return log_sigmoid(delta * (cutpoints[0] - eta));
    } else if (k == last) {
        return log_sigmoid(-delta * (cutpoints[last - 1] - eta));
    } else {
        p = sigmoid(delta * (cutpoints[k] - eta)) - sigmoid(delta * (cutpoints[k - 1] - eta));
    }
    return std::log(std::max(p, 1e-300));
}

// PSD square root via eigen-decomposition; tolerates singular matrices (|rho| = 1).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw ConfigError(std::string(what) + " is not symmetric");
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-9) throw ConfigError(std::string(what) + " is not positive semidefinite");
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal();
}

template <class Rng>
double std_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

template <class Rng>
double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <class Rng>
int sample_categorical(std::span<const double> probs, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        acc += probs[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
}

std::vector<double> softmax(std::span<const double> x, double temperature) {
    const double top = *std::max_element(x.begin(), x.end());
    std::vector<double> out(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp((x[i] - top) / temperature);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

void check_cutpoints(std::span<const double> cutpoints) {
    if (cutpoints.empty()) throw ConfigError("need at least one cutpoint");
    for (std::size_t k = 0; k < cutpoints.size(); ++k) {
        if (!(cutpoints[k] > 0.0 && cutpoints[k] < 1.0)) throw ConfigError("cutpoints must lie in (0, 1)");
        if (k > 0 && !(cutpoints[k] > cutpoints[k - 1])) throw ConfigError("cutpoints must be strictly increasing");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters and the rating distribution
// ---------------------------------------------------------------------------

void BayesParams::validate() const {
    check_cutpoints(cutpoints);
    if (!(sigma_machine > 0.0) || !(sigma_human > 0.0)) throw ConfigError("sigma must be > 0");
    if (!(std::abs(rho) <= 1.0)) throw ConfigError("rho must lie in [-1, 1]");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
    if (!(dirichlet_alpha > 0.0)) throw ConfigError("dirichlet alpha must be > 0");
    for (double v : {a_machine, b_machine, a_human, b_human}) {
        if (!std::isfinite(v)) throw ConfigError("a and b must be finite");
    }
}

std::vector<double> ordered_logistic_pmf(double eta, std::span<const double> cutpoints, double delta) {
    if (cutpoints.empty()) throw ConfigError("need at least one cutpoint");
    for (std::size_t k = 1; k < cutpoints.size(); ++k) {
        if (!(cutpoints[k] > cutpoints[k - 1])) throw ConfigError("cutpoints must be strictly increasing");
    }
    if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
    std::vector<double> pmf(cutpoints.size() + 1);
    double below = 0.0;
    for (std::size_t k = 0; k < cutpoints.size(); ++k) {
        const double cdf = sigmoid(delta * (cutpoints[k] - eta));
        pmf[k] = cdf - below;
        below = cdf;
    }
    pmf.back() = sigmoid(-delta * (cutpoints.back() - eta));
    return pmf;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

void GeneratorSpec::validate() const {
    if (teammates.empty()) throw ConfigError("generator needs at least one teammate");
    check_cutpoints(cutpoints);
    if (!(tau > 0.0) || !(delta > 0.0) || !(dirichlet_alpha > 0.0)) {
        throw ConfigError("tau, delta and dirichlet alpha must be > 0");
    }
    for (const auto& t : teammates) {
        if (t.name.empty()) throw ConfigError("teammate names must be nonempty");
        if (!(t.sigma > 0.0)) throw ConfigError("sigma of '" + t.name + "' must be > 0");
        if (!std::isfinite(t.a) || !std::isfinite(t.b)) throw ConfigError("a and b of '" + t.name + "' must be finite");
        if (t.min_instances < 1 || t.max_instances < t.min_instances) {
            throw ConfigError("instance range of '" + t.name + "' must satisfy 1 <= min <= max");
        }
        if (t.kind == Kind::machine && t.max_instances != 1) {
            throw ConfigError("machine '" + t.name + "' must judge each case once");
        }
    }
    const auto n = static_cast<Eigen::Index>(teammates.size());
    if (correlation.size() != 0) {
        if (correlation.rows() != n || correlation.cols() != n) throw ConfigError("correlation matrix has the wrong shape");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(correlation(i, i) - 1.0) > 1e-12) throw ConfigError("correlation diagonal must be 1");
            for (Eigen::Index j = 0; j < n; ++j) {
                if (!(std::abs(correlation(i, j)) <= 1.0)) throw ConfigError("correlations must lie in [-1, 1]");
                if (correlation(i, j) != correlation(j, i)) throw ConfigError("correlation matrix must be symmetric");
            }
        }
        psd_sqrt(correlation, "correlation matrix");
    }
}

GeneratorSpec two_member_spec(const BayesParams& params, const std::string& human, const std::string& machine) {
    params.validate();
    GeneratorSpec spec;
    spec.teammates.push_back({human, Kind::human, params.a_human, params.b_human, params.sigma_human, 1, 1});
    spec.teammates.push_back({machine, Kind::machine, params.a_machine, params.b_machine, params.sigma_machine, 1, 1});
    spec.correlation = Eigen::MatrixXd::Identity(2, 2);
    spec.correlation(0, 1) = spec.correlation(1, 0) = params.rho;
    spec.tau = params.tau;
    spec.cutpoints = params.cutpoints;
    spec.delta = params.delta;
    spec.dirichlet_alpha = params.dirichlet_alpha;
    return spec;
}

GeneratedData generate_with_latents(const GeneratorSpec& spec, int n_cases, int num_classes, std::uint64_t seed) {
    spec.validate();
    if (n_cases < 1) throw ConfigError("n_cases must be >= 1");
    if (num_classes < 2) throw ConfigError("number of classes must be >= 2");

    const auto T = static_cast<Eigen::Index>(spec.teammates.size());
    Eigen::MatrixXd corr = spec.correlation.size() == 0 ? Eigen::MatrixXd::Identity(T, T) : spec.correlation;
    Eigen::VectorXd sd(T);
    for (Eigen::Index t = 0; t < T; ++t) sd(t) = spec.teammates[static_cast<std::size_t>(t)].sigma;
    const Eigen::MatrixXd cov = sd.asDiagonal() * corr * sd.asDiagonal();

    std::vector<Eigen::Index> machines;
    std::vector<Eigen::Index> humans;
    for (Eigen::Index t = 0; t < T; ++t) {
        (spec.teammates[static_cast<std::size_t>(t)].kind == Kind::machine ? machines : humans).push_back(t);
    }
    const auto nm = static_cast<Eigen::Index>(machines.size());
    const auto nh = static_cast<Eigen::Index>(humans.size());
    Eigen::MatrixXd cov_mm(nm, nm), cov_hm(nh, nm), cov_hh(nh, nh);
    for (Eigen::Index i = 0; i < nm; ++i)
        for (Eigen::Index j = 0; j < nm; ++j) cov_mm(i, j) = cov(machines[i], machines[j]);
    for (Eigen::Index i = 0; i < nh; ++i) {
        for (Eigen::Index j = 0; j < nm; ++j) cov_hm(i, j) = cov(humans[i], machines[j]);
        for (Eigen::Index j = 0; j < nh; ++j) cov_hh(i, j) = cov(humans[i], humans[j]);
    }
    const Eigen::MatrixXd root_mm = psd_sqrt(cov_mm, "machine covariance");
    Eigen::MatrixXd gain = Eigen::MatrixXd::Zero(nh, nm);
    if (nm > 0) gain = cov_hm * cov_mm.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::MatrixXd cond = cov_hh - gain * cov_hm.transpose();
    const Eigen::MatrixXd root_h = psd_sqrt(0.5 * (cond + cond.transpose()), "human conditional covariance");

    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(spec.dirichlet_alpha, 1.0);
    const int L = num_classes;
    const int width = static_cast<int>(std::to_string(n_cases).size());

    std::vector<std::pair<std::string, int>> truth;
    std::vector<Judgment> judgments;
    std::vector<std::vector<double>> latent;
    std::vector<std::string> order;
    for (const auto& t : spec.teammates) order.push_back(t.name);

    auto mean_of = [&](Eigen::Index t, int cls, int z) {
        const auto& tm = spec.teammates[static_cast<std::size_t>(t)];
        return cls == z ? tm.a : tm.b;
    };

    for (int i = 0; i < n_cases; ++i) {
        std::string name = std::to_string(i);
        name = "case_" + std::string(static_cast<std::size_t>(width) - name.size(), '0') + name;
        // p ~ Dirichlet(alpha), z = argmax p
        std::vector<double> p(static_cast<std::size_t>(L));
        for (double& v : p) v = gamma(rng);
        const int z = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        truth.emplace_back(name, z);

        // Machine latent scores, one column per class.
        Eigen::MatrixXd xm(nm, L);
        for (int j = 0; j < L; ++j) {
            Eigen::VectorXd eps(nm);
            for (Eigen::Index k = 0; k < nm; ++k) eps(k) = std_normal(rng);
            const Eigen::VectorXd noise = root_mm * eps;
            for (Eigen::Index k = 0; k < nm; ++k) xm(k, j) = mean_of(machines[k], j, z) + noise(k);
        }
        for (Eigen::Index k = 0; k < nm; ++k) {
            const auto& tm = spec.teammates[static_cast<std::size_t>(machines[k])];
            std::vector<double> scores(static_cast<std::size_t>(L));
            for (int j = 0; j < L; ++j) scores[static_cast<std::size_t>(j)] = xm(k, j);
            Judgment jd;
            jd.test_case = name;
            jd.teammate = tm.name;
            jd.kind = Kind::machine;
            jd.choice = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
            if (L == 2) {
                jd.confidence = std::abs(scores[0] - scores[1]);
            } else {
                jd.class_scores = softmax(scores, 1.0);
                jd.confidence = jd.class_scores[static_cast<std::size_t>(jd.choice)];
            }
            judgments.push_back(std::move(jd));
            latent.push_back(std::move(scores));
        }

        std::vector<int> reps(static_cast<std::size_t>(nh));
        int max_reps = 0;
        for (Eigen::Index k = 0; k < nh; ++k) {
            const auto& tm = spec.teammates[static_cast<std::size_t>(humans[k])];
            reps[static_cast<std::size_t>(k)] =
                std::uniform_int_distribution<int>(tm.min_instances, tm.max_instances)(rng);
            max_reps = std::max(max_reps, reps[static_cast<std::size_t>(k)]);
        }
        for (int r = 0; r < max_reps; ++r) {
            Eigen::MatrixXd xh(nh, L);
            for (int j = 0; j < L; ++j) {
                Eigen::VectorXd resid(nm);
                for (Eigen::Index k = 0; k < nm; ++k) resid(k) = xm(k, j) - mean_of(machines[k], j, z);
                Eigen::VectorXd eps(nh);
                for (Eigen::Index k = 0; k < nh; ++k) eps(k) = std_normal(rng);
                const Eigen::VectorXd draw = gain * resid + root_h * eps;
                for (Eigen::Index k = 0; k < nh; ++k) xh(k, j) = mean_of(humans[k], j, z) + draw(k);
            }
            for (Eigen::Index k = 0; k < nh; ++k) {
                if (r >= reps[static_cast<std::size_t>(k)]) continue;
                const auto& tm = spec.teammates[static_cast<std::size_t>(humans[k])];
                std::vector<double> scores(static_cast<std::size_t>(L));
                for (int j = 0; j < L; ++j) scores[static_cast<std::size_t>(j)] = xh(k, j);
                Judgment jd;
                jd.test_case = name;
                jd.teammate = tm.name;
                jd.kind = Kind::human;
                jd.choice = sample_categorical(softmax(scores, spec.tau), rng);
                const double eta = softmax(scores, 1.0)[static_cast<std::size_t>(jd.choice)];
                jd.confidence = sample_categorical(ordered_logistic_pmf(eta, spec.cutpoints, spec.delta), rng);
                judgments.push_back(std::move(jd));
                latent.push_back(std::move(scores));
            }
        }
    }
    return GeneratedData{Dataset(L, std::move(truth), std::move(judgments), std::move(order)), std::move(latent)};
}

Dataset generate(const GeneratorSpec& spec, int n_cases, int num_classes, std::uint64_t seed) {
    return generate_with_latents(spec, n_cases, num_classes, seed).dataset;
}

Dataset generate(const BayesParams& params, int n_cases, int num_classes, std::uint64_t seed) {
    return generate(two_member_spec(params), n_cases, num_classes, seed);
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

RatingScale parse_rating_scale(std::string_view text) {
    if (text == "automatic" || text == "auto") return RatingScale::automatic;
    if (text == "ordinal") return RatingScale::ordinal;
    if (text == "percent") return RatingScale::percent;
    throw ConfigError("unknown rating scale '" + std::string(text) + "' (automatic, ordinal, percent)");
}

void McmcSettings::validate() const {
    if (warmup < 0 || chains < 1 || samples < 1 || thin < 1) {
        throw ConfigError("MCMC settings need warmup >= 0, chains >= 1, samples >= 1, thin >= 1");
    }
    if (rating_levels < 2) throw ConfigError("rating_levels must be >= 2");
    if (rating_scale == RatingScale::percent && rating_levels != 3) {
        throw ConfigError("percent ratings discretize into exactly 3 levels");
    }
}

std::pair<std::size_t, std::size_t> bayes_members(const Dataset& dataset, const TeamSpec& team) {
    if (team.size() != 2) throw InputError("the Bayesian model combines exactly two teammates");
    const auto a = team.members[0];
    const auto b = team.members[1];
    if (dataset.kind(a) == Kind::human && dataset.kind(b) == Kind::machine) return {a, b};
    if (dataset.kind(b) == Kind::human && dataset.kind(a) == Kind::machine) return {b, a};
    throw InputError("the Bayesian model needs one human and one machine teammate");
}

double machine_margin(const Judgment& judgment) {
    if (judgment.class_scores.size() == 2) {
        const double s0 = std::max(judgment.class_scores[0], 1e-12);
        const double s1 = std::max(judgment.class_scores[1], 1e-12);
        return std::log(s0) - std::log(s1);
    }
    if (judgment.choice > 1) throw InputError("the Bayesian model handles binary tasks only");
    return judgment.choice == 0 ? judgment.confidence : -judgment.confidence;
}

int human_rating(const Judgment& judgment, RatingScale scale, int rating_levels) {
    switch (scale) {
        case RatingScale::percent:
            return discretize_confidence(judgment.confidence);
        case RatingScale::ordinal:
        case RatingScale::automatic: {
            const double c = judgment.confidence;
            if (c != std::floor(c) || c < 0.0 || c > rating_levels - 1) {
                throw InputError("human rating " + format_double(c) + " is not an ordinal level in [0, " +
                                 std::to_string(rating_levels - 1) + "]");
            }
            return static_cast<int>(c);
        }
    }
    return 0;
}

RatingScale resolve_rating_scale(const Dataset& dataset, std::size_t teammate, RatingScale scale, int rating_levels) {
    if (scale != RatingScale::automatic) return scale;
    for (const auto* j : dataset.judgments_of(teammate)) {
        const double c = j->confidence;
        if (c != std::floor(c) || c > rating_levels - 1) {
            if (rating_levels != 3) {
                throw ConfigError("human confidences look like percentages but rating_levels is " +
                                  std::to_string(rating_levels));
            }
            return RatingScale::percent;
        }
    }
    return RatingScale::ordinal;
}

BayesObservation observe_instance(const Dataset& dataset, const TeamSpec& team, std::size_t instance,
                                  RatingScale scale, int rating_levels) {
    const auto [h, m] = bayes_members(dataset, team);
    const Judgment* jh = dataset.lookup(instance, h);
    const Judgment* jm = dataset.lookup(instance, m);
    if (jh == nullptr || jm == nullptr) {
        throw InputError("instance " + dataset.instance_id(instance) + " lacks a judgment from " +
                         dataset.teammates()[jh == nullptr ? h : m]);
    }
    BayesObservation obs;
    obs.machine_margin = machine_margin(*jm);
    obs.humans.push_back({jh->choice, human_rating(*jh, scale, rating_levels)});
    return obs;
}

// ---------------------------------------------------------------------------
// Human latent quadrature
// ---------------------------------------------------------------------------

namespace {

constexpr double kGaussNodes[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                   -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                   0.7966664774136267,  0.9602898564975363};
constexpr double kGaussWeights[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                     0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};
constexpr int kMaxPanels = 400;

// log P(choice, rating | g), g being the latent margin toward the chosen option.
double log_human_factor(double g, int rating, double tau, std::span<const double> cutpoints, double delta) {
    return log_sigmoid(g / tau) + log_rating(rating, sigmoid(g), cutpoints, delta);
}

// Composite Gauss-Legendre rule on [lo, hi]. Panel edges are placed at the
// tempered choice step near 0 and around each rating transition logit(c_k).
void quadrature_rule(double lo, double hi, double max_width, double tau, std::span<const double> cutpoints,
                     double delta, std::vector<double>& nodes, std::vector<double>& weights) {
    std::vector<double> breaks{lo, hi};
    auto add = [&](double b) {
        if (b > lo && b < hi) breaks.push_back(b);
    };
    for (double b : {-1.0, -0.25, 0.0, 0.25, 1.0}) add(b);
    for (double k : {-2.0, 2.0}) add(k * 5.0 * tau);
    for (double c : cutpoints) {
        const double centre = std::log(c) - std::log1p(-c);
        const double width = 1.0 / (delta * c * (1.0 - c));
        for (double k : {-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0}) add(centre + k * width);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    max_width = std::max(max_width, (hi - lo) / kMaxPanels);
    nodes.clear();
    weights.clear();
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k];
        const double b = breaks[k + 1];
        const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
        const double w = (b - a) / pieces;
        for (int s = 0; s < pieces; ++s) {
            const double mid = a + (s + 0.5) * w;
            for (int q = 0; q < 8; ++q) {
                nodes.push_back(mid + 0.5 * w * kGaussNodes[q]);
                weights.push_back(0.5 * w * kGaussWeights[q]);
            }
        }
    }
}

// log of the integral over g ~ N(mean, var) of P(choice, rating | g), in
// log space on a rule fitted to this one integrand.
double log_marginal_human(double mean, double var, int rating, double tau, std::span<const double> cutpoints,
                          double delta) {
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) return log_human_factor(mean, rating, tau, cutpoints, delta);
    std::vector<double> nodes;
    std::vector<double> weights;
    quadrature_rule(std::min(mean - 10.0 * sd, -1.0), std::max(mean + 10.0 * sd, 1.0), 0.5 * sd, tau, cutpoints,
                    delta, nodes, weights);
    double top = kNegInf;
    std::vector<double> terms(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        terms[i] = std::log(weights[i]) + log_normal(nodes[i], mean, var) +
                   log_human_factor(nodes[i], rating, tau, cutpoints, delta);
        top = std::max(top, terms[i]);
    }
    if (!std::isfinite(top)) return kNegInf;
    double total = 0.0;
    for (double t : terms) total += std::exp(t - top);
    return top + std::log(total);
}

// Shared rule for many integrands with a common variance: the choice and
// rating factor is tabulated once per rating level on a common node set.
class HumanGrid {
public:
    HumanGrid(double lo, double hi, double var, double tau, std::span<const double> cutpoints, double delta,
              int rating_levels)
        : var_(var), sd_(std::sqrt(var)), tau_(tau), cutpoints_(cutpoints), delta_(delta) {
        quadrature_rule(lo, hi, 0.75 * sd_, tau, cutpoints, delta, nodes_, weights_);
        factor_.assign(static_cast<std::size_t>(rating_levels), std::vector<double>(nodes_.size()));
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const double choice = sigmoid(nodes_[i] / tau);
            const auto pmf = ordered_logistic_pmf(sigmoid(nodes_[i]), cutpoints, delta);
            for (std::size_t r = 0; r < factor_.size(); ++r) {
                factor_[r][i] = weights_[i] * choice * std::max(pmf[r], 0.0);
            }
        }
    }

    // log integral for g ~ N(mean, var).
    double log_marginal(double mean, int rating) const {
        const auto [first, last] = window(mean);
        const auto& f = factor_[static_cast<std::size_t>(rating)];
        const double scale = -0.5 / var_;
        double total = 0.0;
        for (std::size_t i = first; i < last; ++i) {
            const double d = nodes_[i] - mean;
            total += f[i] * std::exp(scale * d * d);
        }
        if (!(total > 0.0) || !std::isfinite(total)) {
            return log_marginal_human(mean, var_, rating, tau_, cutpoints_, delta_);
        }
        return std::log(total) - 0.5 * (kLogTwoPi + std::log(var_));
    }

    // Draw from the posterior of g given the observed choice and rating,
    // discretized on the node set and spread uniformly within each cell.
    template <class Rng>
    double sample(double mean, int rating, Rng& rng) const {
        const auto [first, last] = window(mean);
        const auto& f = factor_[static_cast<std::size_t>(rating)];
        std::vector<double> mass(last - first);
        double total = 0.0;
        for (std::size_t i = first; i < last; ++i) {
            const double d = nodes_[i] - mean;
            mass[i - first] = f[i] * std::exp(-0.5 * d * d / var_);
            total += mass[i - first];
        }
        if (!(total > 0.0)) return mean;
        double u = uniform01(rng) * total;
        std::size_t pick = first;
        for (std::size_t i = first; i < last; ++i) {
            pick = i;
            u -= mass[i - first];
            if (u <= 0.0) break;
        }
        const double left = pick == 0 ? nodes_[pick] : 0.5 * (nodes_[pick - 1] + nodes_[pick]);
        const double right = pick + 1 == nodes_.size() ? nodes_[pick] : 0.5 * (nodes_[pick] + nodes_[pick + 1]);
        return left + (right - left) * uniform01(rng);
    }

private:
    std::pair<std::size_t, std::size_t> window(double mean) const {
        const auto lo = std::lower_bound(nodes_.begin(), nodes_.end(), mean - 8.0 * sd_);
        const auto hi = std::upper_bound(lo, nodes_.end(), mean + 8.0 * sd_);
        return {static_cast<std::size_t>(lo - nodes_.begin()), static_cast<std::size_t>(hi - nodes_.begin())};
    }

    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<std::vector<double>> factor_;
    double var_;
    double sd_;
    double tau_;
    std::span<const double> cutpoints_;
    double delta_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

namespace {

constexpr double kTau = 0.05;

// Training data in truth-oriented coordinates: margins are measured toward
// the true label, kappa is +1 when the human chose the true label.
struct TrainingData {
    std::vector<double> machine;
    std::vector<std::size_t> human_case;
    std::vector<int> kappa;
    std::vector<int> rating;
    int rating_levels = 3;
};

// Unconstrained coordinates: [a_M - b_M, log sigma_M, a_H, atanh rho,
// stick-breaking logits of the cutpoints..., log delta].
struct Decoded {
    double gap_machine = 0.0;
    double sigma_machine = 1.0;
    double a_human = 0.0;
    double rho = 0.0;
    std::vector<double> cutpoints;
    double delta = 1.0;
    double log_prior = 0.0;  // prior density plus log-Jacobian
};

std::size_t n_params(int rating_levels) {
    return 4 + static_cast<std::size_t>(rating_levels - 1) + 1;
}

Decoded decode(const std::vector<double>& u, int rating_levels) {
    Decoded d;
    const std::size_t nc = static_cast<std::size_t>(rating_levels - 1);
    d.gap_machine = u[0];
    d.sigma_machine = std::exp(u[1]);
    d.a_human = u[2];
    d.rho = std::tanh(u[3]);
    d.delta = std::exp(u[4 + nc]);
    if (d.sigma_machine >= kSigmaUpper || d.delta >= kDeltaUpper || std::abs(d.rho) >= 1.0) {
        d.log_prior = kNegInf;
        return d;
    }
    // a_M - b_M with a_M, b_M iid N(0, 10^2)
    d.log_prior = log_normal(d.gap_machine, 0.0, 2.0 * kPriorLocationSd * kPriorLocationSd);
    d.log_prior += log_normal(d.a_human, 0.0, kPriorLocationSd * kPriorLocationSd);
    d.log_prior += u[1];                        // uniform sigma, log transform
    d.log_prior += std::log1p(-d.rho * d.rho);  // uniform rho, tanh transform
    d.log_prior += u[4 + nc];                   // uniform delta, log transform
    double prev = 0.0;
    d.cutpoints.resize(nc);
    for (std::size_t k = 0; k < nc; ++k) {
        const double c = prev + (1.0 - prev) * sigmoid(u[4 + k]);
        d.log_prior += std::log1p(-prev) + log_sigmoid(u[4 + k]) + log_sigmoid(-u[4 + k]);
        d.cutpoints[k] = c;
        prev = c;
    }
    if (!std::isfinite(d.log_prior)) d.log_prior = kNegInf;
    for (std::size_t k = 0; k < nc; ++k) {
        if (!(d.cutpoints[k] > 0.0 && d.cutpoints[k] < 1.0) || (k > 0 && !(d.cutpoints[k] > d.cutpoints[k - 1]))) {
            d.log_prior = kNegInf;
        }
    }
    return d;
}

std::vector<double> encode_cutpoints(const std::vector<double>& c) {
    std::vector<double> out;
    double prev = 0.0;
    for (double ck : c) {
        const double v = (ck - prev) / (1.0 - prev);
        out.push_back(std::log(v) - std::log1p(-v));
        prev = ck;
    }
    return out;
}

// Conditional mean and variance of the human's truth-oriented latent margin.
double human_mean(const Decoded& d, double machine) {
    return d.a_human + d.rho / d.sigma_machine * (machine - d.gap_machine);
}

double human_variance(const Decoded& d) {
    return 2.0 * (1.0 - d.rho * d.rho);
}

HumanGrid make_grid(const Decoded& d, const TrainingData& data, double var) {
    double lo = -1.0;
    double hi = 1.0;
    const double reach = 8.0 * std::sqrt(var);
    for (std::size_t h = 0; h < data.kappa.size(); ++h) {
        const double m = data.kappa[h] * human_mean(d, data.machine[data.human_case[h]]);
        lo = std::min(lo, m - reach);
        hi = std::max(hi, m + reach);
    }
    return HumanGrid(lo, hi, var, kTau, d.cutpoints, d.delta, data.rating_levels);
}

// Log posterior with every human latent integrated out.
double log_target(const Decoded& d, const TrainingData& data) {
    if (!std::isfinite(d.log_prior)) return kNegInf;
    const double vh = human_variance(d);
    if (!(vh > 0.0)) return kNegInf;
    double lp = d.log_prior;
    const double vm = 2.0 * d.sigma_machine * d.sigma_machine;
    for (double e : data.machine) lp += log_normal(e, d.gap_machine, vm);
    const HumanGrid grid = make_grid(d, data, vh);
    for (std::size_t h = 0; h < data.kappa.size(); ++h) {
        const double m = data.kappa[h] * human_mean(d, data.machine[data.human_case[h]]);
        lp += grid.log_marginal(m, data.rating[h]);
    }
    return std::isnan(lp) ? kNegInf : lp;
}

struct ChainResult {
    std::vector<BayesParams> draws;
    std::vector<std::vector<double>> latent;
    std::vector<std::vector<double>> trace;  // per draw: sampled scalars
    ChainDiagnostics diagnostics;
};

ChainResult run_chain(const TrainingData& data, const McmcSettings& settings, std::uint64_t seed, int chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x5eedu};
    std::mt19937_64 rng(seq);
    const int R = data.rating_levels;
    const std::size_t np = n_params(R);

    // Moment-based start, jittered per chain.
    const double n_cases = static_cast<double>(data.machine.size());
    const double mean_m = std::accumulate(data.machine.begin(), data.machine.end(), 0.0) / n_cases;
    double var_m = 0.0;
    for (double e : data.machine) var_m += (e - mean_m) * (e - mean_m);
    var_m /= std::max(1.0, n_cases - 1.0);
    const double sigma0 = std::clamp(std::sqrt(var_m / 2.0), 0.05, 10.0);
    const double acc = static_cast<double>(std::count(data.kappa.begin(), data.kappa.end(), 1)) /
                       static_cast<double>(data.kappa.size());
    const boost::math::normal std_norm;
    const double a0 = std::sqrt(2.0) * boost::math::quantile(std_norm, std::clamp(acc, 0.05, 0.99));

    std::vector<double> u(np);
    u[0] = mean_m + 0.1 * std_normal(rng);
    u[1] = std::log(sigma0) + 0.1 * std_normal(rng);
    u[2] = a0 + 0.2 * std_normal(rng);
    u[3] = 0.2 * std_normal(rng);
    std::vector<double> c0;
    for (int k = 1; k < R; ++k) c0.push_back(0.5 + 0.5 * k / R + 0.02 * (uniform01(rng) - 0.5));
    const auto sticks = encode_cutpoints(c0);
    for (std::size_t k = 0; k < sticks.size(); ++k) u[4 + k] = sticks[k];
    u[np - 1] = std::log(10.0) + 0.2 * std_normal(rng);

    Decoded cur = decode(u, R);
    double cur_lp = log_target(cur, data);

    std::vector<double> log_scale(np, std::log(0.2));
    std::vector<int> accepted(np, 0);
    long total_accepted = 0;
    long total_tried = 0;
    constexpr int kBatch = 50;
    int batch_index = 0;

    ChainResult out;
    const long total_sweeps = settings.warmup + static_cast<long>(settings.samples) * settings.thin;
    for (long sweep = 0; sweep < total_sweeps; ++sweep) {
        const bool warm = sweep < settings.warmup;
        for (std::size_t k = 0; k < np; ++k) {
            const double old = u[k];
            u[k] = old + std::exp(log_scale[k]) * std_normal(rng);
            Decoded prop = decode(u, R);
            const double prop_lp = log_target(prop, data);
            if (std::log(uniform01(rng)) < prop_lp - cur_lp) {
                cur = std::move(prop);
                cur_lp = prop_lp;
                ++accepted[k];
                if (!warm) ++total_accepted;
            } else {
                u[k] = old;
            }
            if (!warm) ++total_tried;
        }

        // Robbins-Monro adaptation of the log proposal scales toward 30% acceptance.
        if (warm && (sweep + 1) % kBatch == 0) {
            ++batch_index;
            const double gain = 3.0 / std::sqrt(static_cast<double>(batch_index));
            for (std::size_t k = 0; k < np; ++k) {
                const double rate = static_cast<double>(accepted[k]) / kBatch;
                log_scale[k] += gain * (rate - 0.3);
                accepted[k] = 0;
            }
        }
        if (sweep + 1 == settings.warmup) std::fill(accepted.begin(), accepted.end(), 0);

        if (!warm && (sweep - settings.warmup + 1) % settings.thin == 0) {
            BayesParams p;
            // Binary margins identify only a_M - b_M; b_M is drawn from its
            // prior conditional on the gap.
            const double b = -cur.gap_machine / 2.0 + kPriorLocationSd / std::sqrt(2.0) * std_normal(rng);
            p.b_machine = b;
            p.a_machine = b + cur.gap_machine;
            p.sigma_machine = cur.sigma_machine;
            p.a_human = cur.a_human;
            p.b_human = 0.0;
            p.sigma_human = 1.0;
            p.rho = cur.rho;
            p.tau = kTau;
            p.cutpoints = cur.cutpoints;
            p.delta = cur.delta;
            p.dirichlet_alpha = 1.0;

            const HumanGrid grid = make_grid(cur, data, human_variance(cur));
            std::vector<double> latent(data.kappa.size());
            for (std::size_t h = 0; h < latent.size(); ++h) {
                const double m = data.kappa[h] * human_mean(cur, data.machine[data.human_case[h]]);
                latent[h] = data.kappa[h] * grid.sample(m, data.rating[h], rng);
            }

            std::vector<double> tr{cur.gap_machine, cur.sigma_machine, cur.a_human, cur.rho};
            tr.insert(tr.end(), cur.cutpoints.begin(), cur.cutpoints.end());
            tr.push_back(cur.delta);
            out.trace.push_back(std::move(tr));
            out.draws.push_back(std::move(p));
            out.latent.push_back(std::move(latent));
        }
    }
    out.diagnostics.acceptance_rate =
        total_tried > 0 ? static_cast<double>(total_accepted) / static_cast<double>(total_tried) : 0.0;
    return out;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> seqs;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        if (half < 2) return std::numeric_limits<double>::quiet_NaN();
        seqs.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
        seqs.emplace_back(c.end() - static_cast<long>(half), c.end());
    }
    const double n = static_cast<double>(seqs.front().size());
    const double m = static_cast<double>(seqs.size());
    std::vector<double> means;
    double w = 0.0;
    for (const auto& s : seqs) {
        const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
        double var = 0.0;
        for (double v : s) var += (v - mean) * (v - mean);
        w += var / (n - 1.0);
        means.push_back(mean);
    }
    w /= m;
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= n / (m - 1.0);
    if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}


double PosteriorSamples::mean(const std::function<double(const BayesParams&)>& field) const {
    if (draws.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (const auto& d : draws) total += field(d);
    return total / static_cast<double>(draws.size());
}

PosteriorSamples fit_posterior(const Dataset& train, const TeamSpec& team, std::span<const std::size_t> instances,
                               const McmcSettings& settings, std::uint64_t seed) {
    settings.validate();
    if (!train.binary()) throw InputError("the Bayesian model handles binary tasks only");
    const auto [h, m] = bayes_members(train, team);
    if (instances.empty()) throw InputError("empty training set");
    const RatingScale scale = resolve_rating_scale(train, h, settings.rating_scale, settings.rating_levels);

    TrainingData data;
    data.rating_levels = settings.rating_levels;
    std::vector<long> case_slot(train.test_cases().size(), -1);
    for (auto inst : instances) {
        const std::size_t c = train.instances()[inst].case_index;
        const Judgment* jh = train.lookup(inst, h);
        const Judgment* jm = train.lookup(inst, m);
        if (jh == nullptr || jm == nullptr) {
            throw InputError("instance " + train.instance_id(inst) + " lacks a judgment from " +
                             train.teammates()[jh == nullptr ? h : m]);
        }
        const int truth = train.truth(c);
        const double orient = truth == 0 ? 1.0 : -1.0;
        if (case_slot[c] < 0) {
            case_slot[c] = static_cast<long>(data.machine.size());
            data.machine.push_back(orient * machine_margin(*jm));
        }
        data.human_case.push_back(static_cast<std::size_t>(case_slot[c]));
        data.kappa.push_back(jh->choice == truth ? 1 : -1);
        data.rating.push_back(human_rating(*jh, scale, settings.rating_levels));
    }

    std::vector<ChainResult> results(static_cast<std::size_t>(settings.chains));
    parallel_for(results.size(), settings.jobs, [&](std::size_t c) {
        results[c] = run_chain(data, settings, seed, static_cast<int>(c));
    });

    PosteriorSamples out;
    out.team = {train.teammates()[h], train.teammates()[m]};
    out.chains = settings.chains;
    out.warmup = settings.warmup;
    out.samples = settings.samples;
    out.thin = settings.thin;
    out.rating_levels = settings.rating_levels;
    out.rating_scale = scale;
    for (auto& r : results) {
        out.chain_diagnostics.push_back(r.diagnostics);
        out.draws.insert(out.draws.end(), r.draws.begin(), r.draws.end());
        out.human_latent.insert(out.human_latent.end(), r.latent.begin(), r.latent.end());
    }
    std::vector<std::string> names{"a_machine-b_machine", "sigma_machine", "a_human", "rho"};
    for (int k = 0; k + 1 < settings.rating_levels; ++k) names.push_back("cutpoint_" + std::to_string(k));
    names.push_back("delta");
    out.converged = true;
    for (std::size_t p = 0; p < names.size(); ++p) {
        std::vector<std::vector<double>> per_chain;
        for (const auto& r : results) {
            std::vector<double> col;
            for (const auto& t : r.trace) col.push_back(t[p]);
            per_chain.push_back(std::move(col));
        }
        const double rh = split_rhat(per_chain);
        out.rhat[names[p]] = rh;
        if (!(rh <= 1.1)) out.converged = false;
    }
    if (!out.converged) warn("posterior sampler flagged: split R-hat above 1.1 or undefined for some parameter");
    return out;
}

PosteriorSamples fit_posterior(const Dataset& train, const TeamSpec& team, const McmcSettings& settings,
                               std::uint64_t seed) {
    std::vector<std::size_t> all(train.instances().size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return fit_posterior(train, team, all, settings, seed);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

std::vector<double> label_probabilities(const BayesParams& p, const BayesObservation& obs) {
    const double gap_m = p.a_machine - p.b_machine;
    const double gap_h = p.a_human - p.b_human;
    const double vm = 2.0 * p.sigma_machine * p.sigma_machine;
    const double vh = 2.0 * (1.0 - p.rho * p.rho) * p.sigma_human * p.sigma_human;
    std::array<double, 2> logw{};
    for (int z = 0; z < 2; ++z) {
        const double orient = z == 0 ? 1.0 : -1.0;
        const double e_m = orient * obs.machine_margin;
        double lw = log_normal(e_m, gap_m, vm);
        const double mean_truth = gap_h + p.rho * p.sigma_human / p.sigma_machine * (e_m - gap_m);
        for (const auto& hobs : obs.humans) {
            const double kappa = hobs.choice == z ? 1.0 : -1.0;
            lw += log_marginal_human(kappa * mean_truth, vh, hobs.rating, p.tau, p.cutpoints, p.delta);
        }
        logw[static_cast<std::size_t>(z)] = lw;
    }
    const double top = std::max(logw[0], logw[1]);
    if (!std::isfinite(top)) return {0.5, 0.5};
    const double w0 = std::exp(logw[0] - top);
    const double w1 = std::exp(logw[1] - top);
    return {w0 / (w0 + w1), w1 / (w0 + w1)};
}

std::vector<double> predict_posterior(const PosteriorSamples& samples, const BayesObservation& obs) {
    if (samples.draws.empty()) throw InputError("posterior has no draws");
    for (const auto& h : obs.humans) {
        if (h.choice < 0 || h.choice > 1) throw InputError("human choice must be 0 or 1");
        if (h.rating < 0 || h.rating >= samples.rating_levels) throw InputError("human rating out of range");
    }
    if (!std::isfinite(obs.machine_margin)) throw InputError("machine margin must be finite");
    std::vector<double> out(2, 0.0);
    for (const auto& d : samples.draws) {
        const auto p = label_probabilities(d, obs);
        out[0] += p[0];
        out[1] += p[1];
    }
    const double total = out[0] + out[1];
    out[0] /= total;
    out[1] /= total;
    return out;
}

std::string posterior_to_json(const PosteriorSamples& samples) {
    nlohmann::ordered_json doc;
    doc["format"] = "teamfuse.posterior/1";
    doc["team"] = {{"human", samples.team.at(0)}, {"machine", samples.team.at(1)}};
    doc["chains"] = samples.chains;
    doc["warmup"] = samples.warmup;
    doc["samples"] = samples.samples;
    doc["thin"] = samples.thin;
    doc["rating_levels"] = samples.rating_levels;
    doc["rating_scale"] = samples.rating_scale == RatingScale::percent ? "percent" : "ordinal";
    nlohmann::ordered_json diag;
    auto chains = nlohmann::ordered_json::array();
    for (const auto& c : samples.chain_diagnostics) {
        chains.push_back({{"acceptance_rate", c.acceptance_rate}});
    }
    diag["chains"] = std::move(chains);
    nlohmann::ordered_json rhat = nlohmann::ordered_json::object();
    for (const auto& [k, v] : samples.rhat) {
        if (std::isfinite(v)) {
            rhat[k] = v;
        } else {
            rhat[k] = nullptr;
        }
    }
    diag["split_rhat"] = std::move(rhat);
    diag["converged"] = samples.converged;
    doc["diagnostics"] = std::move(diag);
    auto draws = nlohmann::ordered_json::array();
    for (const auto& d : samples.draws) {
        draws.push_back({{"a_machine", d.a_machine},
                         {"b_machine", d.b_machine},
                         {"sigma_machine", d.sigma_machine},
                         {"a_human", d.a_human},
                         {"b_human", d.b_human},
                         {"sigma_human", d.sigma_human},
                         {"rho", d.rho},
                         {"tau", d.tau},
                         {"cutpoints", d.cutpoints},
                         {"delta", d.delta},
                         {"dirichlet_alpha", d.dirichlet_alpha}});
    }
    doc["draws"] = std::move(draws);
    return doc.dump(2) + '\n';
}

}  // namespace teamfuse
