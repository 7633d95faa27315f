#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "teamfuse/core.hpp"

namespace teamfuse {

enum class ConfidenceMode { confidence, no_confidence, squash };
enum class Expansion { none, interactions, polynomial };

std::string_view to_string(ConfidenceMode mode);
std::string_view to_string(Expansion expansion);
ConfidenceMode parse_confidence_mode(std::string_view text);
Expansion parse_expansion(std::string_view text);

struct FeatureConfig {
    ConfidenceMode mode = ConfidenceMode::confidence;
    // Squash strength per teammate name; teammates not listed use default_alpha.
    std::map<std::string, double> alpha;
    double default_alpha = 0.0;
    Expansion expansion = Expansion::none;
    int degree = 2;
    bool standardize = false;
    // Missing judgments raise instead of being imputed as zero evidence.
    bool strict = false;

    double alpha_for(const std::string& teammate) const;
    // Throws ConfigError on negative alpha or degree < 2 with an expansion.
    void validate() const;
};

struct FeatureRow {
    std::size_t instance = 0;
    std::vector<double> x;
    // Binary: 1 when the true label is option 0. Multiclass: the class index.
    int target = 0;
};

struct Design {
    std::vector<std::string> names;
    std::vector<FeatureRow> rows;
    int num_classes = 2;
    std::size_t base_width = 0;
    std::size_t imputed = 0;

    bool multiclass() const { return num_classes > 2; }
    std::size_t width() const { return names.size(); }
};

// Confidence magnitude with the sign given by the choice: +c for option 0,
// -c for option 1. Binary judgments only.
double signed_confidence(const Judgment& judgment);

// 1 + (x - 1) / (1 + alpha |x - 1|): identity at alpha = 0, collapses to 1
// as alpha grows.
double squash(double x, double alpha);

// Feature vector of one judgment before expansion: one signed value for
// binary tasks, L class masses otherwise.
std::vector<double> judgment_features(const Judgment& judgment, int num_classes, ConfidenceMode mode,
                                      double alpha);

// Base-index tuples of the expansion terms, ordered by degree and then
// lexicographically.
std::vector<std::vector<std::size_t>> expansion_terms(std::size_t base_width, Expansion expansion, int degree);

Design build_design(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& config,
                    std::span<const std::size_t> instances);

// Convenience overload over every instance of the dataset.
Design build_design(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& config);

}  // namespace teamfuse
