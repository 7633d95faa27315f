#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "teamfuse/errors.hpp"
#include "teamfuse/bayes.hpp"
#include "teamfuse/logistic.hpp"

using namespace teamfuse;

namespace {

Design make_design(const std::vector<std::vector<double>>& xs, const std::vector<int>& targets, int classes = 2) {
    Design d;
    d.num_classes = classes;
    for (std::size_t j = 0; j < xs.front().size(); ++j) d.names.push_back("f" + std::to_string(j));
    d.base_width = d.names.size();
    for (std::size_t i = 0; i < xs.size(); ++i) d.rows.push_back(FeatureRow{i, xs[i], targets[i]});
    return d;
}

TeamModel binary_model(std::vector<double> beta) {
    TeamModel m;
    m.num_classes = 2;
    for (std::size_t j = 1; j < beta.size(); ++j) m.feature_names.push_back("f" + std::to_string(j - 1));
    m.coefficients.resize(1, static_cast<Eigen::Index>(beta.size()));
    for (std::size_t j = 0; j < beta.size(); ++j) m.coefficients(0, static_cast<Eigen::Index>(j)) = beta[j];
    return m;
}

Eigen::MatrixXd random_design(std::mt19937_64& rng, int n, int p) {
    std::normal_distribution<double> z(0.0, 1.5);
    Eigen::MatrixXd X(n, p + 1);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (int j = 1; j <= p; ++j) X(i, j) = z(rng);
    }
    return X;
}

double max_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    return (analytic - numeric).lpNorm<Eigen::Infinity>() / std::max(1.0, analytic.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("binary gradient and Hessian match central differences") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> z(0.0, 1.0);
    const Eigen::MatrixXd X = random_design(rng, 60, 3);
    std::vector<int> y(60);
    for (auto& v : y) v = z(rng) > 0 ? 1 : 0;
    for (int point = 0; point < 20; ++point) {
        Eigen::VectorXd theta(4);
        for (int j = 0; j < 4; ++j) theta(j) = z(rng);
        Eigen::VectorXd g;
        Eigen::MatrixXd H;
        binary_nll(X, y, theta, 0.3, &g, &H);
        Eigen::VectorXd num(4);
        Eigen::MatrixXd numH(4, 4);
        const double h = 1e-5;
        for (int j = 0; j < 4; ++j) {
            Eigen::VectorXd up = theta;
            Eigen::VectorXd dn = theta;
            up(j) += h;
            dn(j) -= h;
            Eigen::VectorXd gu;
            Eigen::VectorXd gd;
            num(j) = (binary_nll(X, y, up, 0.3, &gu) - binary_nll(X, y, dn, 0.3, &gd)) / (2 * h);
            numH.col(j) = (gu - gd) / (2 * h);
        }
        CHECK(max_rel_error(g, num) < 1e-6);
        CHECK((H - numH).lpNorm<Eigen::Infinity>() / std::max(1.0, H.lpNorm<Eigen::Infinity>()) < 1e-6);
    }
}

TEST_CASE("multinomial gradient matches central differences for four classes") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> z(0.0, 1.0);
    const Eigen::MatrixXd X = random_design(rng, 80, 2);
    std::vector<int> y(80);
    for (auto& v : y) v = static_cast<int>(rng() % 4);
    const int dim = 3 * 3;
    for (int point = 0; point < 20; ++point) {
        Eigen::VectorXd theta(dim);
        for (int j = 0; j < dim; ++j) theta(j) = z(rng);
        Eigen::VectorXd g;
        Eigen::MatrixXd H;
        multinomial_nll(X, y, 4, theta, 0.1, &g, &H);
        Eigen::VectorXd num(dim);
        const double h = 1e-5;
        for (int j = 0; j < dim; ++j) {
            Eigen::VectorXd up = theta;
            Eigen::VectorXd dn = theta;
            up(j) += h;
            dn(j) -= h;
            num(j) = (multinomial_nll(X, y, 4, up, 0.1) - multinomial_nll(X, y, 4, dn, 0.1)) / (2 * h);
        }
        CHECK(max_rel_error(g, num) < 1e-6);
        CHECK((H - H.transpose()).norm() < 1e-10);
    }
}

TEST_CASE("the informative teammate dominates a noise teammate") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<double>> xs;
    std::vector<int> t;
    for (int i = 0; i < 200; ++i) {
        const double h = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + std::abs(z(rng)));
        xs.push_back({h, z(rng)});
        t.push_back(h > 0 ? 1 : 0);
    }
    const TeamModel m = fit(make_design(xs, t));
    CHECK(m.fit_meta.converged);
    CHECK(m.coefficients(0, 1) > 10.0 * std::abs(m.coefficients(0, 2)));
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) correct += (predict(m, xs[i]).label == 0) == (t[i] == 1);
    CHECK(correct == 200);
}

TEST_CASE("all-zero features give the base rate") {
    std::vector<std::vector<double>> xs(40, std::vector<double>{0.0, 0.0});
    std::vector<int> t(40, 0);
    for (int i = 0; i < 30; ++i) t[static_cast<std::size_t>(i)] = 1;
    const TeamModel m = fit(make_design(xs, t));
    const auto p = predict(m, xs[0]);
    CHECK(p.probabilities[0] == doctest::Approx(0.75).epsilon(1e-8));
    CHECK(m.coefficients(0, 1) == 0.0);
}

TEST_CASE("duplicating every row leaves the weights unchanged") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<double>> xs;
    std::vector<int> t;
    for (int i = 0; i < 60; ++i) {
        xs.push_back({z(rng), z(rng)});
        t.push_back(xs.back()[0] + z(rng) > 0 ? 1 : 0);
    }
    FitOptions unpenalized;
    unpenalized.l2 = 0.0;
    const TeamModel a = fit(make_design(xs, t), unpenalized);
    auto xs2 = xs;
    auto t2 = t;
    xs2.insert(xs2.end(), xs.begin(), xs.end());
    t2.insert(t2.end(), t.begin(), t.end());
    const TeamModel b = fit(make_design(xs2, t2), unpenalized);
    CHECK((a.coefficients - b.coefficients).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("predict values and tie flag") {
    const auto zero = predict(binary_model({0.0, 0.0, 0.0}), std::vector<double>{1.3, -4.0});
    CHECK(zero.probabilities == std::vector<double>{0.5, 0.5});
    CHECK(zero.label == 0);
    CHECK(zero.tie);
    const auto p = predict(binary_model({0.0, 1.0, 0.0}), std::vector<double>{2.0, 17.0});
    CHECK(p.probabilities[0] == doctest::Approx(0.8807970779778823).epsilon(1e-14));
    CHECK(p.label == 0);
    CHECK_FALSE(p.tie);
    CHECK_THROWS_AS(predict(binary_model({0.0, 1.0, 0.0}), std::vector<double>{1.0}), InputError);
}

TEST_CASE("negating features and weights leaves probabilities unchanged") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z(0.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        const double b1 = z(rng);
        const double b2 = z(rng);
        const std::vector<double> x{z(rng), z(rng)};
        const std::vector<double> nx{-x[0], -x[1]};
        const auto a = predict(binary_model({0.4, b1, b2}), x);
        const auto b = predict(binary_model({0.4, -b1, -b2}), nx);
        CHECK(std::abs(a.probabilities[0] - b.probabilities[0]) < 1e-15);
    }
}

TEST_CASE("probability of option 0 increases with a positively weighted feature") {
    const TeamModel m = binary_model({-0.3, 0.8, 1.1});
    double last = 0.0;
    for (double x = -5.0; x <= 5.0; x += 0.1) {
        const double p = predict(m, std::vector<double>{x, 0.4}).probabilities[0];
        CHECK(p > last);
        last = p;
    }
}

TEST_CASE("probabilities are positive and sum to one") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<double>> xs;
    std::vector<int> t;
    for (int i = 0; i < 90; ++i) {
        xs.push_back({z(rng), z(rng)});
        t.push_back(static_cast<int>(i % 3));
    }
    const TeamModel m = fit(make_design(xs, t, 3));
    CHECK(m.coefficients.rows() == 2);
    for (const auto& x : xs) {
        const auto p = predict(m, x);
        double sum = 0.0;
        for (double v : p.probabilities) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("multinomial with two classes reproduces the binary model") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0.0, 1.0);
    const Eigen::MatrixXd X = random_design(rng, 50, 2);
    std::vector<int> ybin(50);
    std::vector<int> ycls(50);
    for (int i = 0; i < 50; ++i) {
        ycls[static_cast<std::size_t>(i)] = X(i, 1) + z(rng) > 0 ? 1 : 0;
        ybin[static_cast<std::size_t>(i)] = ycls[static_cast<std::size_t>(i)] == 0 ? 1 : 0;
    }
    for (int point = 0; point < 10; ++point) {
        Eigen::VectorXd theta(3);
        for (int j = 0; j < 3; ++j) theta(j) = z(rng);
        // Class 1 relative to class 0 is the negated evidence for option 0.
        const double a = binary_nll(X, ybin, -theta, 0.0);
        const double b = multinomial_nll(X, ycls, 2, theta, 0.0);
        CHECK(std::abs(a - b) < 1e-10);
    }
    // Fitted through the public path: both parameterizations predict alike.
    std::vector<std::vector<double>> xs;
    for (int i = 0; i < 50; ++i) xs.push_back({X(i, 1), X(i, 2)});
    const TeamModel mb = fit(make_design(xs, ybin));
    Design md = make_design(xs, ycls, 2);
    md.num_classes = 2;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    for (int j = 0; j < 3; ++j) theta(j) = -mb.coefficients(0, j);
    Eigen::VectorXd g;
    multinomial_nll(X, ycls, 2, theta, 1e-4, &g);
    CHECK(g.lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("degenerate and separable training data") {
    std::vector<std::vector<double>> xs{{1.0}, {2.0}, {-1.0}};
    CHECK_THROWS_AS(fit(make_design(xs, {1, 1, 1})), FitError);
    CHECK_THROWS_AS(fit(make_design({{1.0}}, {1})), FitError);
    FitOptions unpenalized;
    unpenalized.l2 = 0.0;
    const TeamModel sep = fit(make_design({{1.0}, {2.0}, {-1.0}, {-2.0}}, {1, 1, 0, 0}), unpenalized);
    CHECK_FALSE(sep.fit_meta.converged);
    const TeamModel pen = fit(make_design({{1.0}, {2.0}, {-1.0}, {-2.0}}, {1, 1, 0, 0}));
    CHECK(pen.fit_meta.converged);
    CHECK(std::isfinite(pen.coefficients(0, 1)));
}

TEST_CASE("fit is deterministic and the model JSON round-trips") {
    const Dataset d = generate(BayesParams{}, 120, 2, 12);
    const TeamSpec team = make_team(d, {"human", "machine"});
    FeatureConfig cfg;
    cfg.standardize = true;
    const auto all = teamfuse::testing::all_instances(d);
    const TeamModel a = fit_team(d, team, cfg, all);
    const TeamModel b = fit_team(d, team, cfg, all);
    CHECK(model_to_json(a) == model_to_json(b));
    const TeamModel c = model_from_json(model_to_json(a));
    CHECK(c.coefficients == a.coefficients);
    CHECK(c.feature_mean == a.feature_mean);
    CHECK(c.team == a.team);
    CHECK(a.weight("human") == a.coefficients(0, 1));
    CHECK(a.weight("intercept") == a.intercept());
    const Design design = build_design(d, team, cfg);
    for (const auto& row : design.rows) CHECK(predict(a, row.x).probabilities == predict(c, row.x).probabilities);
}

namespace {

// Single teammate whose signed confidence is the exact log-odds of option 0.
Dataset calibrated_dataset(std::uint64_t seed, bool random_confidence) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string rows = "test_case,teammate,kind,choice,confidence\n";
    std::string truth = "test_case,true_label\n";
    for (int i = 0; i < 20000; ++i) {
        const std::string c = "c" + std::to_string(i);
        int label = 0;
        int choice = 0;
        double conf = 0.0;
        if (random_confidence) {
            label = u(rng) < 0.5 ? 0 : 1;
            choice = u(rng) < 0.8 ? label : 1 - label;
            conf = 10.0 * u(rng);
        } else {
            const double s = z(rng);
            label = u(rng) < 1.0 / (1.0 + std::exp(-s)) ? 0 : 1;
            choice = s >= 0 ? 0 : 1;
            conf = std::abs(s);
        }
        rows += c + ",m,machine," + std::to_string(choice) + ',' + format_double(conf) + '\n';
        truth += c + ',' + std::to_string(label) + '\n';
    }
    return parse_csv_dataset(rows, truth, 2);
}

}  // namespace

TEST_CASE("squash search keeps calibrated confidence and flattens random confidence") {
    FeatureConfig cfg;
    cfg.mode = ConfidenceMode::squash;
    for (std::uint64_t seed : {1u, 2u}) {
        const Dataset calibrated = calibrated_dataset(seed, false);
        const auto all = teamfuse::testing::all_instances(calibrated);
        const SquashFit a = fit_squash(calibrated, make_team(calibrated, {"m"}), cfg, all, FitOptions{}, SquashOptions{},
                                       seed);
        CHECK(a.alpha.at("m") <= 0.01);
        const Dataset noisy = calibrated_dataset(seed, true);
        const SquashFit b =
            fit_squash(noisy, make_team(noisy, {"m"}), cfg, all, FitOptions{}, SquashOptions{}, seed);
        CHECK(b.alpha.at("m") == 1e6);
    }
}

TEST_CASE("squash search over a zero-only grid equals confidence mode") {
    const Dataset d = generate(BayesParams{}, 100, 2, 3);
    const TeamSpec team = make_team(d, {"human", "machine"});
    const auto all = teamfuse::testing::all_instances(d);
    FeatureConfig sq;
    sq.mode = ConfidenceMode::squash;
    SquashOptions grid;
    grid.grid = {0.0};
    const SquashFit s = fit_squash(d, team, sq, all, FitOptions{}, grid, 1);
    const TeamModel c = fit_team(d, team, FeatureConfig{}, all);
    CHECK((s.model.coefficients - c.coefficients).lpNorm<Eigen::Infinity>() < 1e-12);
    SquashOptions empty;
    empty.grid.clear();
    CHECK_THROWS_AS(fit_squash(d, team, sq, all, FitOptions{}, empty, 1), ConfigError);
    CHECK_THROWS_AS(fit_squash(d, team, FeatureConfig{}, all, FitOptions{}, grid, 1), ConfigError);
}
