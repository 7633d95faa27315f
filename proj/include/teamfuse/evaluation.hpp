#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "teamfuse/bayes.hpp"
#include "teamfuse/logistic.hpp"
#include "teamfuse/stats.hpp"

namespace teamfuse {

// --- Folds -------------------------------------------------------------------

struct Fold {
    std::size_t case_index = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Leave-one-test-case-out plan: fold i holds out every instance of case i.
struct FoldPlan {
    std::vector<Fold> folds;
};

// Restricting to `eligible` instances (all when empty) drops instances no
// team member judged. The plan is checked with check_fold_plan before return.
FoldPlan make_fold_plan(const Dataset& dataset, const std::vector<std::size_t>& eligible = {});

// Throws ValidationError unless every fold's test set is exactly its case's
// eligible instances, no training instance shares the held-out case, and
// test sets partition the eligible instances.
void check_fold_plan(const Dataset& dataset, const FoldPlan& plan);

// --- Cross-validated evaluation ------------------------------------------------

enum class ModelKind { logistic, bayes };
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct EvalOptions {
    ModelKind model = ModelKind::logistic;
    // Logistic model. Squash mode selects alpha inside every training fold.
    FeatureConfig features;
    FitOptions fit;
    SquashOptions squash;
    // Bayesian model.
    McmcSettings mcmc;
    // Combine every human replicate of the held-out case by multiplying
    // their likelihoods; otherwise each instance is predicted from its own row.
    bool pool_replicates = true;
    // Parallel folds; 0 uses the hardware concurrency.
    int jobs = 0;
};

struct InstanceOutcome {
    std::size_t instance = 0;
    std::string id;
    int truth = 0;
    int predicted = 0;
    bool correct = false;
    bool tie = false;
    std::vector<double> probabilities;
};

struct FoldIssue {
    std::string test_case;
    std::string message;
};

struct EvalReport {
    std::vector<std::string> team;
    std::string model;
    std::size_t n_evaluations = 0;
    double accuracy = 0.0;
    double sem = 0.0;
    std::size_t ties = 0;
    std::vector<InstanceOutcome> outcomes;
    // Folds whose fit failed; their instances are left out of the outcomes.
    std::vector<FoldIssue> fold_errors;
    // Folds whose fit finished but did not meet its convergence criterion.
    std::vector<FoldIssue> unconverged;
    // Shuffle-to-chance control, when computed.
    std::optional<double> shuffled_accuracy;

    std::string label() const;
    std::size_t size() const { return team.size(); }
};

// Fills n_evaluations, accuracy, sem and ties from the outcomes.
void summarize(EvalReport& report);

EvalReport loocv(const Dataset& dataset, const TeamSpec& team, const EvalOptions& options, std::uint64_t seed);

// Accuracy after permuting predicted labels across instances, averaged over
// `permutations` shuffles.
struct ShuffleResult {
    double accuracy = 0.0;
    double sd = 0.0;
    int permutations = 0;
};
ShuffleResult shuffled_accuracy(const EvalReport& report, int permutations, std::uint64_t seed);

// --- Teams ---------------------------------------------------------------------

constexpr std::size_t kMaxEnumeratedTeammates = 16;

// Every nonempty subset of `n_teammates`, ordered by size and then
// lexicographically by member index. With `must_include`, only subsets
// containing that teammate are kept.
std::vector<TeamSpec> enumerate_teams(std::size_t n_teammates, std::optional<std::size_t> must_include = {});

// --- Calibration -----------------------------------------------------------------

struct CalibrationBin {
    double lower = 0.0;
    double upper = 0.0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct CalibrationTable {
    std::string teammate;
    std::vector<CalibrationBin> bins;
    // Least-squares slope of bin accuracy on bin index.
    double slope = 0.0;
};

// Equal-count bins over the teammate's judgments sorted by confidence.
CalibrationTable calibration(const Dataset& dataset, std::size_t teammate, int n_bins);

// Bins (-inf, e_0], (e_0, e_1], ..., (e_last, inf).
CalibrationTable calibration_by_edges(const Dataset& dataset, std::size_t teammate, const std::vector<double>& edges);

// Default bin count: 3 for discrete ratings, 10 for continuous confidences.
int default_calibration_bins(const Dataset& dataset, std::size_t teammate);

// --- Diversity -------------------------------------------------------------------

// Per-test-case ease: machines use the margin toward the correct answer,
// humans their mean accuracy. NaN where the teammate has no judgment.
std::vector<double> item_difficulty(const Dataset& dataset, std::size_t teammate);

struct DiversityMatrix {
    std::vector<std::string> teammates;
    // Spearman correlation over cases judged by both; empty when undefined.
    std::vector<std::vector<std::optional<double>>> rho;
};

DiversityMatrix diversity(const Dataset& dataset, const std::vector<std::size_t>& teammates);

// --- Significance ----------------------------------------------------------------

enum class Unit { teams, instances };
std::string_view to_string(Unit unit);
Unit parse_unit(std::string_view text);

struct Comparison {
    std::string name;
    std::string test;  // "welch" or "paired"
    Unit unit = Unit::teams;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::optional<TTest> result;  // empty when the statistic is undefined
    std::string note;
};

// Result set A against B. Teams unit: Welch over team accuracies and a
// paired test over teams present in both. Instances unit: per shared team,
// Welch over per-instance correctness and a paired test over shared instances.
std::vector<Comparison> compare_results(const std::vector<EvalReport>& a, const std::vector<EvalReport>& b, Unit unit,
                                        Tail tail);

// Teams containing `member` against the same teams without it.
std::vector<Comparison> compare_with_without(const std::vector<EvalReport>& reports, const std::string& member,
                                             Unit unit, Tail tail);

// --- Serialization ---------------------------------------------------------------

// Teams sorted by size, then accuracy (descending), then label.
std::vector<EvalReport> sorted_reports(std::vector<EvalReport> reports);
std::string reports_csv(const std::vector<EvalReport>& reports);
std::string reports_json(const std::vector<EvalReport>& reports, const std::string& metadata_json = "{}");
std::vector<EvalReport> reports_from_json(std::string_view text);

}  // namespace teamfuse
