#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "teamfuse/features.hpp"

namespace teamfuse {

struct FitOptions {
    // Ridge penalty on every non-intercept weight.
    double l2 = 1e-4;
    int max_iterations = 500;
    // Stop when the largest gradient component falls below this.
    double tolerance = 1e-8;
    // Kept for interface stability; the optimizer starts from zero weights
    // and has no random component.
    std::uint64_t seed = 0;
};

struct FitMeta {
    int iterations = 0;
    double nll = 0.0;
    double gradient_norm = 0.0;
    double l2 = 0.0;
    bool converged = false;
    std::string status;
};

// Fitted logistic combination model. Binary models give the evidence for
// option 0; multiclass models hold one coefficient row per class 1..L-1,
// each relative to class 0.
struct TeamModel {
    std::vector<std::string> team;
    FeatureConfig config;
    std::vector<std::string> feature_names;
    int num_classes = 2;
    // Row k holds (intercept, weights...) of class k + 1 in the multiclass
    // case; the single row of a binary model is (beta_I, beta_1, ...).
    Eigen::MatrixXd coefficients;
    // Column standardization learned on the training rows; empty when off.
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    FitMeta fit_meta;

    bool multiclass() const { return num_classes > 2; }
    std::size_t width() const { return feature_names.size(); }
    double intercept() const { return coefficients(0, 0); }
    // Binary weight of a named feature (or "intercept").
    double weight(const std::string& name) const;
    // Every coefficient with its display name, in storage order.
    std::vector<std::pair<std::string, double>> named_weights() const;
};

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
    // Set when several labels share the top probability.
    bool tie = false;
};

// Penalized negative log-likelihood, optionally with gradient and Hessian.
// `design` carries a leading column of ones. Binary targets are 1 for
// option 0; `params` is (beta_I, beta_1, ...). Multiclass params are the
// (L-1) x (1+p) coefficient matrix flattened row by row.
double binary_nll(const Eigen::MatrixXd& design, std::span<const int> targets, const Eigen::VectorXd& params,
                  double l2, Eigen::VectorXd* gradient = nullptr, Eigen::MatrixXd* hessian = nullptr);
double multinomial_nll(const Eigen::MatrixXd& design, std::span<const int> targets, int num_classes,
                       const Eigen::VectorXd& params, double l2, Eigen::VectorXd* gradient = nullptr,
                       Eigen::MatrixXd* hessian = nullptr);

// Maximum-likelihood fit of the rows in `design`. Throws FitError on fewer
// than two rows or a single observed outcome.
TeamModel fit(const Design& design, const FitOptions& options = {}, const FeatureConfig& config = {});

// Builds the design for `instances` and fits it, recording team and config.
TeamModel fit_team(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& config,
                   std::span<const std::size_t> instances, const FitOptions& options = {});

Prediction predict(const TeamModel& model, std::span<const double> x);

inline const std::vector<double>& default_alpha_grid() {
    static const std::vector<double> grid{0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e6};
    return grid;
}

struct SquashOptions {
    std::vector<double> grid = default_alpha_grid();
    int inner_folds = 5;
    int max_sweeps = 3;
};

struct SquashFit {
    TeamModel model;
    std::map<std::string, double> alpha;
    double inner_cv_nll = 0.0;
};

// Chooses one squash alpha per teammate by coordinate search over the grid,
// scoring each candidate by inner cross-validated log loss on
// `train_instances` only, then refits on all of them.
SquashFit fit_squash(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& base_config,
                     std::span<const std::size_t> train_instances, const FitOptions& options,
                     const SquashOptions& squash_options, std::uint64_t seed);

std::string model_to_json(const TeamModel& model);
TeamModel model_from_json(std::string_view text);
std::string weight_summary(const TeamModel& model);

}  // namespace teamfuse
