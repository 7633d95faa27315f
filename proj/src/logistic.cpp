#include "teamfuse/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "json.hpp"

namespace teamfuse {

namespace {

// Dimension above which Newton's dense Hessian is replaced by L-BFGS.
constexpr Eigen::Index kNewtonMaxParams = 400;
constexpr double kDivergedWeight = 1e8;

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Eigen::MatrixXd with_intercept(const std::vector<FeatureRow>& rows, std::size_t width,
                               const std::vector<double>& mean, const std::vector<double>& scale) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width + 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        for (std::size_t j = 0; j < width; ++j) {
            double v = rows[i].x[j];
            if (!mean.empty()) v = (v - mean[j]) / scale[j];
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = v;
        }
    }
    return X;
}

// Zero on intercept slots, l2 elsewhere.
Eigen::VectorXd penalty_mask(Eigen::Index rows, Eigen::Index cols, double l2) {
    Eigen::VectorXd mask = Eigen::VectorXd::Constant(rows * cols, l2);
    for (Eigen::Index k = 0; k < rows; ++k) mask(k * cols) = 0.0;
    return mask;
}

struct Objective {
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*, Eigen::MatrixXd*)> eval;
    Eigen::Index dim = 0;
};

FitMeta minimize_newton(const Objective& obj, Eigen::VectorXd& theta, const FitOptions& options) {
    FitMeta meta;
    meta.l2 = options.l2;
    Eigen::VectorXd g(obj.dim);
    Eigen::MatrixXd H(obj.dim, obj.dim);
    for (int it = 0;; ++it) {
        meta.iterations = it;
        const double f = obj.eval(theta, &g, &H);
        meta.nll = f;
        meta.gradient_norm = g.lpNorm<Eigen::Infinity>();
        if (meta.gradient_norm < options.tolerance) {
            meta.converged = true;
            meta.status = "converged";
            return meta;
        }
        if (theta.lpNorm<Eigen::Infinity>() > kDivergedWeight) {
            meta.status = "weights diverged";
            return meta;
        }
        if (it >= options.max_iterations) {
            meta.status = "iteration limit reached";
            return meta;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd step;
        if (ldlt.info() == Eigen::Success) step = -ldlt.solve(g);
        if (step.size() != g.size() || !step.allFinite() || g.dot(step) >= 0.0) {
            // Singular Hessian (e.g. constant-zero columns with l2 = 0).
            Eigen::MatrixXd reg = H;
            reg.diagonal().array() += 1e-10 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
            step = -reg.ldlt().solve(g);
            if (!step.allFinite() || g.dot(step) >= 0.0) step = -g;
        }
        const double slope = g.dot(step);
        // Newton decrement below the rounding level of the objective.
        if (-slope < 1e-14 * std::max(1.0, std::abs(f))) {
            meta.converged = true;
            meta.status = "converged";
            return meta;
        }
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Eigen::VectorXd trial = theta + t * step;
            const double ft = obj.eval(trial, nullptr, nullptr);
            if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope) {
                theta = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            meta.status = "line search stalled";
            return meta;
        }
    }
}

FitMeta minimize_lbfgs(const Objective& obj, Eigen::VectorXd& theta, const FitOptions& options) {
    constexpr std::size_t kMemory = 10;
    FitMeta meta;
    meta.l2 = options.l2;
    std::deque<Eigen::VectorXd> s_hist;
    std::deque<Eigen::VectorXd> y_hist;
    Eigen::VectorXd g(obj.dim);
    double f = obj.eval(theta, &g, nullptr);
    const int max_iter = std::max(options.max_iterations, 5000);
    for (int it = 0;; ++it) {
        meta.iterations = it;
        meta.nll = f;
        meta.gradient_norm = g.lpNorm<Eigen::Infinity>();
        if (meta.gradient_norm < options.tolerance) {
            meta.converged = true;
            meta.status = "converged";
            return meta;
        }
        if (theta.lpNorm<Eigen::Infinity>() > kDivergedWeight) {
            meta.status = "weights diverged";
            return meta;
        }
        if (it >= max_iter) {
            meta.status = "iteration limit reached";
            return meta;
        }
        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> a(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            a[i] = s_hist[i].dot(q) / y_hist[i].dot(s_hist[i]);
            q -= a[i] * y_hist[i];
        }
        if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double b = y_hist[i].dot(q) / y_hist[i].dot(s_hist[i]);
            q += s_hist[i] * (a[i] - b);
        }
        Eigen::VectorXd step = -q;
        if (g.dot(step) >= 0.0) {
            step = -g;
            s_hist.clear();
            y_hist.clear();
        }
        const double slope = g.dot(step);
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd g_new(obj.dim);
        for (int ls = 0; ls < 60; ++ls) {
            const Eigen::VectorXd trial = theta + t * step;
            const double ft = obj.eval(trial, &g_new, nullptr);
            if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope) {
                Eigen::VectorXd s = trial - theta;
                Eigen::VectorXd y = g_new - g;
                if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
                    s_hist.push_back(std::move(s));
                    y_hist.push_back(std::move(y));
                    if (s_hist.size() > kMemory) {
                        s_hist.pop_front();
                        y_hist.pop_front();
                    }
                }
                theta = trial;
                f = ft;
                g = g_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            meta.status = "line search stalled";
            return meta;
        }
    }
}

void check_fit_inputs(const Design& design) {
    if (design.rows.size() < 2) throw FitError("need at least 2 training rows, got " + std::to_string(design.rows.size()));
    if (!design.multiclass()) {
        const auto positives = std::count_if(design.rows.begin(), design.rows.end(),
                                             [](const FeatureRow& r) { return r.target == 1; });
        if (positives == 0 || positives == static_cast<long>(design.rows.size())) {
            throw FitError("degenerate training outcomes: every row has the same true label");
        }
    } else {
        std::vector<bool> present(static_cast<std::size_t>(design.num_classes), false);
        for (const auto& r : design.rows) present[static_cast<std::size_t>(r.target)] = true;
        if (std::count(present.begin(), present.end(), true) < 2) {
            throw FitError("degenerate training outcomes: fewer than 2 classes present");
        }
    }
    for (const auto& r : design.rows) {
        if (r.x.size() != design.width()) throw InputError("feature row width does not match design");
    }
}

std::vector<double> probabilities(const TeamModel& model, const Eigen::VectorXd& x1) {
    if (!model.multiclass()) {
        const double z = model.coefficients.row(0).dot(x1);
        return {sigmoid(z), sigmoid(-z)};
    }
    const Eigen::Index K = model.coefficients.rows();
    std::vector<double> eta(static_cast<std::size_t>(K + 1), 0.0);
    for (Eigen::Index k = 0; k < K; ++k) eta[static_cast<std::size_t>(k + 1)] = model.coefficients.row(k).dot(x1);
    const double top = *std::max_element(eta.begin(), eta.end());
    double total = 0.0;
    for (double& e : eta) {
        e = std::exp(e - top);
        total += e;
    }
    for (double& e : eta) e /= total;
    return eta;
}

}  // namespace

double binary_nll(const Eigen::MatrixXd& X, std::span<const int> targets, const Eigen::VectorXd& params, double l2,
                  Eigen::VectorXd* gradient, Eigen::MatrixXd* hessian) {
    const Eigen::VectorXd z = X * params;
    const Eigen::VectorXd mask = penalty_mask(1, X.cols(), l2);
    double f = 0.5 * params.cwiseProduct(mask).dot(params);
    Eigen::VectorXd resid(X.rows());
    Eigen::VectorXd w(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double t = targets[static_cast<std::size_t>(i)];
        f += softplus(z(i)) - t * z(i);
        const double p = sigmoid(z(i));
        resid(i) = p - t;
        w(i) = p * (1.0 - p);
    }
    if (gradient) *gradient = X.transpose() * resid + mask.cwiseProduct(params);
    if (hessian) {
        *hessian = X.transpose() * w.asDiagonal() * X;
        hessian->diagonal() += mask;
    }
    return f;
}

double multinomial_nll(const Eigen::MatrixXd& X, std::span<const int> targets, int num_classes,
                       const Eigen::VectorXd& params, double l2, Eigen::VectorXd* gradient,
                       Eigen::MatrixXd* hessian) {
    const Eigen::Index K = num_classes - 1;
    const Eigen::Index P = X.cols();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> theta(
        params.data(), K, P);
    const Eigen::MatrixXd eta = X * theta.transpose();  // n x K
    const Eigen::VectorXd mask = penalty_mask(K, P, l2);
    double f = 0.5 * params.cwiseProduct(mask).dot(params);
    Eigen::MatrixXd prob(X.rows(), K);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double top = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) top = std::max(top, eta(i, k));
        double total = std::exp(-top);
        for (Eigen::Index k = 0; k < K; ++k) total += std::exp(eta(i, k) - top);
        const double lse = top + std::log(total);
        const int t = targets[static_cast<std::size_t>(i)];
        f += lse - (t == 0 ? 0.0 : eta(i, t - 1));
        for (Eigen::Index k = 0; k < K; ++k) prob(i, k) = std::exp(eta(i, k) - lse);
    }
    if (gradient) {
        Eigen::MatrixXd resid = prob;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const int t = targets[static_cast<std::size_t>(i)];
            if (t > 0) resid(i, t - 1) -= 1.0;
        }
        const Eigen::MatrixXd g = resid.transpose() * X;  // K x P
        gradient->resize(K * P);
        for (Eigen::Index k = 0; k < K; ++k) {
            for (Eigen::Index j = 0; j < P; ++j) (*gradient)(k * P + j) = g(k, j);
        }
        *gradient += mask.cwiseProduct(params);
    }
    if (hessian) {
        hessian->setZero(K * P, K * P);
        for (Eigen::Index k = 0; k < K; ++k) {
            for (Eigen::Index l = k; l < K; ++l) {
                Eigen::VectorXd w = prob.col(k).cwiseProduct((k == l ? 1.0 : 0.0) * Eigen::VectorXd::Ones(X.rows()) -
                                                            prob.col(l));
                const Eigen::MatrixXd block = X.transpose() * w.asDiagonal() * X;
                hessian->block(k * P, l * P, P, P) = block;
                if (l != k) hessian->block(l * P, k * P, P, P) = block.transpose();
            }
        }
        hessian->diagonal() += mask;
    }
    return f;
}

double TeamModel::weight(const std::string& name) const {
    if (multiclass()) throw InputError("weight() is only defined for binary models");
    if (name == "intercept") return coefficients(0, 0);
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        if (feature_names[j] == name) return coefficients(0, static_cast<Eigen::Index>(j + 1));
    }
    throw InputError("model has no feature '" + name + "'");
}

std::vector<std::pair<std::string, double>> TeamModel::named_weights() const {
    std::vector<std::pair<std::string, double>> out;
    for (Eigen::Index k = 0; k < coefficients.rows(); ++k) {
        const std::string prefix = multiclass() ? "class_" + std::to_string(k + 1) + ":" : "";
        out.emplace_back(prefix + "intercept", coefficients(k, 0));
        for (std::size_t j = 0; j < feature_names.size(); ++j) {
            out.emplace_back(prefix + feature_names[j], coefficients(k, static_cast<Eigen::Index>(j + 1)));
        }
    }
    return out;
}

TeamModel fit(const Design& design, const FitOptions& options, const FeatureConfig& config) {
    if (!(options.l2 >= 0.0)) throw ConfigError("l2 penalty must be >= 0");
    check_fit_inputs(design);

    TeamModel model;
    model.config = config;
    model.feature_names = design.names;
    model.num_classes = design.num_classes;
    const std::size_t p = design.width();
    if (config.standardize) {
        model.feature_mean.assign(p, 0.0);
        model.feature_scale.assign(p, 1.0);
        const double n = static_cast<double>(design.rows.size());
        for (std::size_t j = 0; j < p; ++j) {
            double mean = 0.0;
            for (const auto& r : design.rows) mean += r.x[j];
            mean /= n;
            double var = 0.0;
            for (const auto& r : design.rows) var += (r.x[j] - mean) * (r.x[j] - mean);
            const double sd = std::sqrt(var / n);
            model.feature_mean[j] = mean;
            model.feature_scale[j] = sd > 0.0 ? sd : 1.0;
        }
    }
    const Eigen::MatrixXd X = with_intercept(design.rows, p, model.feature_mean, model.feature_scale);
    std::vector<int> targets;
    targets.reserve(design.rows.size());
    for (const auto& r : design.rows) targets.push_back(r.target);

    const Eigen::Index P = static_cast<Eigen::Index>(p + 1);
    const Eigen::Index K = design.multiclass() ? design.num_classes - 1 : 1;
    Objective obj;
    obj.dim = K * P;
    if (design.multiclass()) {
        obj.eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g, Eigen::MatrixXd* h) {
            return multinomial_nll(X, targets, design.num_classes, th, options.l2, g, h);
        };
    } else {
        obj.eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g, Eigen::MatrixXd* h) {
            return binary_nll(X, targets, th, options.l2, g, h);
        };
    }
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.dim);
    model.fit_meta = obj.dim <= kNewtonMaxParams ? minimize_newton(obj, theta, options)
                                                 : minimize_lbfgs(obj, theta, options);
    model.coefficients.resize(K, P);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index j = 0; j < P; ++j) model.coefficients(k, j) = theta(k * P + j);
    }

    // Without a penalty, perfectly separated data has no finite optimum; the
    // gradient still vanishes numerically as the weights run off.
    if (options.l2 == 0.0 && model.fit_meta.converged) {
        bool separated = true;
        for (Eigen::Index i = 0; i < X.rows() && separated; ++i) {
            const auto probs = probabilities(model, X.row(i).transpose());
            const int label = design.multiclass() ? targets[static_cast<std::size_t>(i)]
                                                  : (targets[static_cast<std::size_t>(i)] == 1 ? 0 : 1);
            separated = probs[static_cast<std::size_t>(label)] > 1.0 - 1e-6;
        }
        if (separated) {
            model.fit_meta.converged = false;
            model.fit_meta.status = "separable data: weights diverge without a penalty";
        }
    }
    return model;
}

TeamModel fit_team(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& config,
                   std::span<const std::size_t> instances, const FitOptions& options) {
    const Design design = build_design(dataset, team, config, instances);
    TeamModel model = fit(design, options, config);
    model.team = team_names(dataset, team);
    return model;
}

Prediction predict(const TeamModel& model, std::span<const double> x) {
    if (x.size() != model.width()) {
        throw InputError("feature row has width " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(model.width()));
    }
    Eigen::VectorXd x1(static_cast<Eigen::Index>(x.size() + 1));
    x1(0) = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double v = x[j];
        if (!model.feature_mean.empty()) v = (v - model.feature_mean[j]) / model.feature_scale[j];
        x1(static_cast<Eigen::Index>(j + 1)) = v;
    }
    Prediction out;
    out.probabilities = probabilities(model, x1);
    const auto top = std::max_element(out.probabilities.begin(), out.probabilities.end());
    out.label = static_cast<int>(top - out.probabilities.begin());
    out.tie = std::count(out.probabilities.begin(), out.probabilities.end(), *top) > 1;
    return out;
}

// ---------------------------------------------------------------------------
// Squash search
// ---------------------------------------------------------------------------

SquashFit fit_squash(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& base_config,
                     std::span<const std::size_t> train_instances, const FitOptions& options,
                     const SquashOptions& squash_options, std::uint64_t seed) {
    if (base_config.mode != ConfidenceMode::squash) throw ConfigError("fit_squash needs mode = squash");
    if (squash_options.grid.empty()) throw ConfigError("squash alpha grid is empty");
    for (double a : squash_options.grid) {
        if (!(a >= 0.0)) throw ConfigError("squash alpha grid values must be >= 0");
    }
    if (squash_options.inner_folds < 2) throw ConfigError("inner_folds must be >= 2");

    // Inner folds group instances by test case so replicates never straddle
    // a split.
    std::vector<std::size_t> cases;
    for (auto inst : train_instances) cases.push_back(dataset.instances()[inst].case_index);
    std::sort(cases.begin(), cases.end());
    cases.erase(std::unique(cases.begin(), cases.end()), cases.end());
    std::mt19937_64 rng(seed);
    std::shuffle(cases.begin(), cases.end(), rng);
    const std::size_t n_folds = std::min<std::size_t>(static_cast<std::size_t>(squash_options.inner_folds), cases.size());
    if (n_folds < 2) throw FitError("squash search needs at least 2 training test cases");
    std::vector<std::size_t> fold_of_case(dataset.test_cases().size(), 0);
    for (std::size_t i = 0; i < cases.size(); ++i) fold_of_case[cases[i]] = i % n_folds;
    std::vector<std::vector<std::size_t>> fold_train(n_folds);
    std::vector<std::vector<std::size_t>> fold_test(n_folds);
    for (auto inst : train_instances) {
        const auto f = fold_of_case[dataset.instances()[inst].case_index];
        for (std::size_t k = 0; k < n_folds; ++k) (k == f ? fold_test : fold_train)[k].push_back(inst);
    }

    auto cv_nll = [&](const FeatureConfig& cfg) {
        double total = 0.0;
        for (std::size_t k = 0; k < n_folds; ++k) {
            TeamModel m;
            try {
                m = fit_team(dataset, team, cfg, fold_train[k], options);
            } catch (const FitError&) {
                continue;  // same for every alpha: outcome degeneracy ignores features
            }
            const Design test = build_design(dataset, team, cfg, fold_test[k]);
            for (const auto& row : test.rows) {
                const auto pred = predict(m, row.x);
                const int label = test.multiclass() ? row.target : (row.target == 1 ? 0 : 1);
                total -= std::log(std::max(pred.probabilities[static_cast<std::size_t>(label)], 1e-300));
            }
        }
        return total;
    };

    FeatureConfig cfg = base_config;
    const double start = std::find(squash_options.grid.begin(), squash_options.grid.end(), 0.0) !=
                                 squash_options.grid.end()
                             ? 0.0
                             : squash_options.grid.front();
    for (auto m : team.members) cfg.alpha[dataset.teammates()[m]] = start;
    double best = cv_nll(cfg);
    for (int sweep = 0; sweep < squash_options.max_sweeps; ++sweep) {
        bool changed = false;
        for (auto m : team.members) {
            const auto& name = dataset.teammates()[m];
            const double current = cfg.alpha[name];
            std::vector<double> scores;
            for (double a : squash_options.grid) {
                cfg.alpha[name] = a;
                scores.push_back(a == current ? best : cv_nll(cfg));
            }
            // Scores within a relative 1e-4 count as tied; ties go to the
            // stronger squash, the model that trusts confidence less.
            const double low = *std::min_element(scores.begin(), scores.end());
            const double tie = low + 1e-4 * std::max(1.0, std::abs(low));
            double chosen = current;
            double chosen_score = best;
            bool first = true;
            for (std::size_t g = 0; g < scores.size(); ++g) {
                if (scores[g] > tie) continue;
                if (first || squash_options.grid[g] > chosen) {
                    chosen = squash_options.grid[g];
                    chosen_score = scores[g];
                    first = false;
                }
            }
            best = chosen_score;
            cfg.alpha[name] = chosen;
            changed = changed || chosen != current;
        }
        if (!changed) break;
    }

    SquashFit out;
    out.alpha = cfg.alpha;
    out.inner_cv_nll = best;
    out.model = fit_team(dataset, team, cfg, train_instances, options);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string model_to_json(const TeamModel& model) {
    nlohmann::ordered_json doc;
    doc["format"] = "teamfuse.team_model/1";
    doc["team"] = model.team;
    doc["num_classes"] = model.num_classes;
    nlohmann::ordered_json cfg;
    cfg["mode"] = std::string(to_string(model.config.mode));
    cfg["default_alpha"] = model.config.default_alpha;
    nlohmann::ordered_json alpha = nlohmann::ordered_json::object();
    for (const auto& [k, v] : model.config.alpha) alpha[k] = v;
    cfg["alpha"] = std::move(alpha);
    cfg["expansion"] = std::string(to_string(model.config.expansion));
    cfg["degree"] = model.config.degree;
    cfg["standardize"] = model.config.standardize;
    cfg["strict"] = model.config.strict;
    doc["config"] = std::move(cfg);
    doc["feature_names"] = model.feature_names;
    nlohmann::ordered_json weights = nlohmann::ordered_json::object();
    for (const auto& [name, value] : model.named_weights()) weights[name] = value;
    doc["weights"] = std::move(weights);
    if (!model.feature_mean.empty()) {
        doc["standardization"] = {{"mean", model.feature_mean}, {"scale", model.feature_scale}};
    }
    const auto& m = model.fit_meta;
    doc["fit_meta"] = {{"iterations", m.iterations}, {"nll", m.nll},         {"gradient_norm", m.gradient_norm},
                       {"l2", m.l2},                 {"converged", m.converged}, {"status", m.status}};
    return doc.dump(2) + '\n';
}

TeamModel model_from_json(std::string_view text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        TeamModel model;
        model.team = doc.at("team").get<std::vector<std::string>>();
        model.num_classes = doc.at("num_classes").get<int>();
        const auto& cfg = doc.at("config");
        model.config.mode = parse_confidence_mode(cfg.at("mode").get<std::string>());
        model.config.default_alpha = cfg.at("default_alpha").get<double>();
        model.config.alpha = cfg.at("alpha").get<std::map<std::string, double>>();
        model.config.expansion = parse_expansion(cfg.at("expansion").get<std::string>());
        model.config.degree = cfg.at("degree").get<int>();
        model.config.standardize = cfg.at("standardize").get<bool>();
        model.config.strict = cfg.at("strict").get<bool>();
        model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
        const Eigen::Index K = model.num_classes > 2 ? model.num_classes - 1 : 1;
        const Eigen::Index P = static_cast<Eigen::Index>(model.feature_names.size() + 1);
        model.coefficients.resize(K, P);
        const auto& w = doc.at("weights");
        for (Eigen::Index k = 0; k < K; ++k) {
            const std::string prefix = model.num_classes > 2 ? "class_" + std::to_string(k + 1) + ":" : "";
            model.coefficients(k, 0) = w.at(prefix + "intercept").get<double>();
            for (Eigen::Index j = 1; j < P; ++j) {
                model.coefficients(k, j) = w.at(prefix + model.feature_names[static_cast<std::size_t>(j - 1)]).get<double>();
            }
        }
        if (doc.contains("standardization")) {
            model.feature_mean = doc["standardization"].at("mean").get<std::vector<double>>();
            model.feature_scale = doc["standardization"].at("scale").get<std::vector<double>>();
        }
        const auto& m = doc.at("fit_meta");
        model.fit_meta.iterations = m.at("iterations").get<int>();
        model.fit_meta.nll = m.at("nll").get<double>();
        model.fit_meta.gradient_norm = m.at("gradient_norm").get<double>();
        model.fit_meta.l2 = m.at("l2").get<double>();
        model.fit_meta.converged = m.at("converged").get<bool>();
        model.fit_meta.status = m.at("status").get<std::string>();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed model JSON: ") + e.what());
    }
}

std::string weight_summary(const TeamModel& model) {
    std::string out = "team: ";
    for (std::size_t i = 0; i < model.team.size(); ++i) out += (i ? "+" : "") + model.team[i];
    out += "\nmode: " + std::string(to_string(model.config.mode)) + "\n";
    std::size_t width = 0;
    for (const auto& [name, v] : model.named_weights()) width = std::max(width, name.size());
    for (const auto& [name, v] : model.named_weights()) {
        out += name + std::string(width - name.size() + 2, ' ') + format_double(v) + "\n";
    }
    out += "converged: " + std::string(model.fit_meta.converged ? "yes" : "no") + " (" + model.fit_meta.status +
           ", " + std::to_string(model.fit_meta.iterations) + " iterations)\n";
    return out;
}

}  // namespace teamfuse
