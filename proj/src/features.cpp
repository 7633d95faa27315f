#include "teamfuse/features.hpp"

#include <cmath>
#include <functional>

namespace teamfuse {

std::string_view to_string(ConfidenceMode mode) {
    switch (mode) {
        case ConfidenceMode::confidence: return "confidence";
        case ConfidenceMode::no_confidence: return "no_confidence";
        case ConfidenceMode::squash: return "squash";
    }
    return "confidence";
}

std::string_view to_string(Expansion expansion) {
    switch (expansion) {
        case Expansion::none: return "none";
        case Expansion::interactions: return "interactions";
        case Expansion::polynomial: return "polynomial";
    }
    return "none";
}

ConfidenceMode parse_confidence_mode(std::string_view text) {
    if (text == "confidence") return ConfidenceMode::confidence;
    if (text == "no_confidence") return ConfidenceMode::no_confidence;
    if (text == "squash") return ConfidenceMode::squash;
    throw ConfigError("unknown mode '" + std::string(text) + "' (confidence, no_confidence, squash)");
}

Expansion parse_expansion(std::string_view text) {
    if (text == "none") return Expansion::none;
    if (text == "interactions") return Expansion::interactions;
    if (text == "polynomial") return Expansion::polynomial;
    throw ConfigError("unknown expansion '" + std::string(text) + "' (none, interactions, polynomial)");
}

double FeatureConfig::alpha_for(const std::string& teammate) const {
    auto it = alpha.find(teammate);
    return it == alpha.end() ? default_alpha : it->second;
}

void FeatureConfig::validate() const {
    if (!(default_alpha >= 0.0)) throw ConfigError("squash alpha must be >= 0");
    for (const auto& [name, a] : alpha) {
        if (!(a >= 0.0)) throw ConfigError("squash alpha for '" + name + "' must be >= 0");
    }
    if (expansion != Expansion::none && degree < 2) throw ConfigError("expansion degree must be >= 2");
}

double signed_confidence(const Judgment& judgment) {
    if (judgment.choice < 0 || judgment.choice > 1) {
        throw InputError("signed confidence needs a binary choice; use class-mass features for multiclass tasks");
    }
    return judgment.choice == 0 ? judgment.confidence : -judgment.confidence;
}

double squash(double x, double alpha) {
    if (!(alpha >= 0.0)) throw ConfigError("squash alpha must be >= 0");
    if (alpha == 0.0) return x;
    if (std::isinf(alpha)) return 1.0;
    const double d = x - 1.0;
    return 1.0 + d / (1.0 + alpha * std::abs(d));
}

std::vector<double> judgment_features(const Judgment& judgment, int num_classes, ConfidenceMode mode,
                                      double alpha) {
    const auto magnitude = [&](double c) {
        switch (mode) {
            case ConfidenceMode::confidence: return c;
            case ConfidenceMode::no_confidence: return 1.0;
            case ConfidenceMode::squash: return squash(c, alpha);
        }
        return c;
    };
    if (num_classes == 2) {
        const double m = magnitude(judgment.confidence);
        return {judgment.choice == 0 ? m : -m};
    }
    std::vector<double> out(static_cast<std::size_t>(num_classes), 0.0);
    if (judgment.class_scores.empty() || mode == ConfidenceMode::no_confidence) {
        out[judgment.choice] = magnitude(judgment.confidence);
        return out;
    }
    // Class-score vectors: the chosen class is squashed like a scalar
    // confidence, the remaining mass shrinks toward zero at the same rate.
    for (int k = 0; k < num_classes; ++k) {
        const double s = judgment.class_scores[k];
        if (k == judgment.choice) {
            out[k] = magnitude(s);
        } else {
            out[k] = mode == ConfidenceMode::squash ? s / (1.0 + alpha) : s;
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> expansion_terms(std::size_t base_width, Expansion expansion, int degree) {
    std::vector<std::vector<std::size_t>> terms;
    if (expansion == Expansion::none) return terms;
    const bool repeat = expansion == Expansion::polynomial;
    std::vector<std::size_t> current;
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t remaining) {
        if (remaining == 0) {
            terms.push_back(current);
            return;
        }
        for (std::size_t i = start; i < base_width; ++i) {
            current.push_back(i);
            rec(repeat ? i : i + 1, remaining - 1);
            current.pop_back();
        }
    };
    for (int d = 2; d <= degree; ++d) rec(0, static_cast<std::size_t>(d));
    return terms;
}

namespace {

std::string term_name(const std::vector<std::string>& base, const std::vector<std::size_t>& term) {
    std::string out;
    for (std::size_t i = 0; i < term.size();) {
        std::size_t j = i;
        while (j < term.size() && term[j] == term[i]) ++j;
        if (!out.empty()) out += '*';
        out += base[term[i]];
        if (j - i > 1) out += '^' + std::to_string(j - i);
        i = j;
    }
    return out;
}

}  // namespace

Design build_design(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& config,
                    std::span<const std::size_t> instances) {
    config.validate();
    Design design;
    design.num_classes = dataset.num_classes();
    const int L = dataset.num_classes();
    const std::size_t per_member = L == 2 ? 1 : static_cast<std::size_t>(L);

    std::vector<std::string> base;
    std::vector<double> alphas;
    for (auto m : team.members) {
        const auto& name = dataset.teammates()[m];
        alphas.push_back(config.alpha_for(name));
        if (per_member == 1) {
            base.push_back(name);
        } else {
            for (int k = 0; k < L; ++k) base.push_back(name + "[" + std::to_string(k) + "]");
        }
    }
    design.base_width = base.size();
    const auto terms = expansion_terms(base.size(), config.expansion, config.degree);
    design.names = base;
    for (const auto& t : terms) design.names.push_back(term_name(base, t));

    design.rows.reserve(instances.size());
    for (auto inst : instances) {
        FeatureRow row;
        row.instance = inst;
        const int truth = dataset.instance_truth(inst);
        row.target = L == 2 ? (truth == 0 ? 1 : 0) : truth;
        row.x.reserve(design.names.size());
        for (std::size_t k = 0; k < team.members.size(); ++k) {
            const auto m = team.members[k];
            const Judgment* j = dataset.lookup(inst, m);
            if (j == nullptr) {
                if (config.strict) {
                    throw ValidationError("teammate '" + dataset.teammates()[m] + "' has no judgment on instance " +
                                          dataset.instance_id(inst));
                }
                ++design.imputed;
                row.x.insert(row.x.end(), per_member, 0.0);
                continue;
            }
            const auto f = judgment_features(*j, L, config.mode, alphas[k]);
            row.x.insert(row.x.end(), f.begin(), f.end());
        }
        for (const auto& t : terms) {
            double prod = 1.0;
            for (auto i : t) prod *= row.x[i];
            row.x.push_back(prod);
        }
        design.rows.push_back(std::move(row));
    }
    if (design.imputed > 0) {
        warn("imputed zero evidence for " + std::to_string(design.imputed) + " missing judgment(s) in team " +
             team_label(dataset, team));
    }
    return design;
}

Design build_design(const Dataset& dataset, const TeamSpec& team, const FeatureConfig& config) {
    std::vector<std::size_t> all(dataset.instances().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return build_design(dataset, team, config, all);
}

}  // namespace teamfuse
