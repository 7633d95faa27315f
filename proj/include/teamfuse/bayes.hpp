#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "teamfuse/core.hpp"

namespace teamfuse {

// Parameters of the two-member (human + machine) latent-score model. Each
// member's latent score for class j is b + (a - b) * [j == true label] plus
// normal noise with scale sigma; the two members' noise is correlated by rho.
// Humans choose through a tempered softmax of their latent scores and rate
// confidence through an ordered logistic on the probability of their choice.
struct BayesParams {
    double a_machine = 2.5;
    double b_machine = 0.0;
    double sigma_machine = 1.0;
    double a_human = 1.5;
    double b_human = 0.0;
    double sigma_human = 1.0;
    double rho = 0.3;
    double tau = 0.05;
    std::vector<double> cutpoints{0.7, 0.85};
    double delta = 30.0;
    double dirichlet_alpha = 1.0;

    int rating_levels() const { return static_cast<int>(cutpoints.size()) + 1; }
    // Throws ConfigError unless cutpoints are strictly increasing inside
    // (0, 1), sigmas, tau, delta and alpha are positive and |rho| <= 1.
    void validate() const;
};

// Ordered-logistic rating distribution: P(r <= k) = logistic(delta (c_k - eta)).
std::vector<double> ordered_logistic_pmf(double eta, std::span<const double> cutpoints, double delta);

// --- Generative sampler ------------------------------------------------------

struct LatentTeammate {
    std::string name;
    Kind kind = Kind::machine;
    double a = 1.0;
    double b = 0.0;
    double sigma = 1.0;
    // Human replicates per test case, drawn uniformly from [min, max].
    int min_instances = 1;
    int max_instances = 1;
};

// Multi-teammate generalization used by the simulator. Machines are drawn
// from their joint marginal, then every human replicate is drawn from the
// humans' conditional normal given the machines.
struct GeneratorSpec {
    std::vector<LatentTeammate> teammates;
    // Latent-noise correlation between teammates; identity when empty.
    Eigen::MatrixXd correlation;
    double tau = 0.05;
    std::vector<double> cutpoints{0.7, 0.85};
    double delta = 30.0;
    double dirichlet_alpha = 1.0;

    void validate() const;
};

GeneratorSpec two_member_spec(const BayesParams& params, const std::string& human = "human",
                              const std::string& machine = "machine");

struct GeneratedData {
    Dataset dataset;
    // Latent score vector behind each judgment, aligned with dataset.judgments().
    std::vector<std::vector<double>> latent;
};

GeneratedData generate_with_latents(const GeneratorSpec& spec, int n_cases, int num_classes, std::uint64_t seed);
Dataset generate(const GeneratorSpec& spec, int n_cases, int num_classes, std::uint64_t seed);
Dataset generate(const BayesParams& params, int n_cases, int num_classes, std::uint64_t seed);

// --- Posterior inference -------------------------------------------------------

enum class RatingScale { automatic, ordinal, percent };
RatingScale parse_rating_scale(std::string_view text);

struct McmcSettings {
    int warmup = 500;
    int chains = 3;
    int samples = 25;
    // Sweeps between stored draws.
    int thin = 10;
    int rating_levels = 3;
    RatingScale rating_scale = RatingScale::automatic;
    // Parallel chains; 0 uses the hardware concurrency.
    int jobs = 0;

    void validate() const;
};

struct ChainDiagnostics {
    double acceptance_rate = 0.0;
};

struct PosteriorSamples {
    std::vector<std::string> team;  // human first, then machine
    std::vector<BayesParams> draws;  // chain-major
    // Truth-oriented human latent margin of each training instance, per draw.
    std::vector<std::vector<double>> human_latent;
    int chains = 0;
    int warmup = 0;
    int samples = 0;
    int thin = 0;
    int rating_levels = 3;
    RatingScale rating_scale = RatingScale::ordinal;
    std::vector<ChainDiagnostics> chain_diagnostics;
    // Split R-hat of each sampled scalar (a_machine-b_machine, sigma_machine,
    // a_human, rho, cutpoint_k, delta).
    std::map<std::string, double> rhat;
    bool converged = false;

    std::size_t size() const { return draws.size(); }
    double mean(const std::function<double(const BayesParams&)>& field) const;
};

// Observed judgments on one test case, in the binary model's terms.
struct BayesObservation {
    // Machine evidence for option 0 over option 1 on the latent score scale.
    double machine_margin = 0.0;
    struct Human {
        int choice = 0;
        int rating = 0;
    };
    std::vector<Human> humans;
};

// Orders the team as (human, machine); throws unless it has exactly one of each.
std::pair<std::size_t, std::size_t> bayes_members(const Dataset& dataset, const TeamSpec& team);

// Machine evidence on the latent scale: log score ratio when class scores
// are present, signed confidence otherwise.
double machine_margin(const Judgment& judgment);

// Rating index of a human judgment under `scale`.
int human_rating(const Judgment& judgment, RatingScale scale, int rating_levels);

// Resolves `automatic` by inspecting every human judgment of `teammate`.
RatingScale resolve_rating_scale(const Dataset& dataset, std::size_t teammate, RatingScale scale, int rating_levels);

PosteriorSamples fit_posterior(const Dataset& train, const TeamSpec& team, std::span<const std::size_t> instances,
                               const McmcSettings& settings, std::uint64_t seed);
PosteriorSamples fit_posterior(const Dataset& train, const TeamSpec& team, const McmcSettings& settings,
                               std::uint64_t seed);

// Split R-hat over per-chain traces; NaN when a half-chain has fewer than 2 draws.
double split_rhat(const std::vector<std::vector<double>>& chains);

// Label probabilities given one parameter draw.
std::vector<double> label_probabilities(const BayesParams& params, const BayesObservation& obs);

// Posterior predictive label probabilities, averaged over draws.
std::vector<double> predict_posterior(const PosteriorSamples& samples, const BayesObservation& obs);

// Builds the observation for one instance (its human replicate plus the
// machine's judgment). Missing judgments raise InputError.
BayesObservation observe_instance(const Dataset& dataset, const TeamSpec& team, std::size_t instance,
                                  RatingScale scale, int rating_levels);

std::string posterior_to_json(const PosteriorSamples& samples);

}  // namespace teamfuse
