#include "teamfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "teamfuse/parallel.hpp"

namespace teamfuse {

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

FoldPlan make_fold_plan(const Dataset& dataset, const std::vector<std::size_t>& eligible) {
    std::vector<char> keep(dataset.instances().size(), eligible.empty() ? 1 : 0);
    for (auto i : eligible) keep.at(i) = 1;
    FoldPlan plan;
    std::vector<std::vector<std::size_t>> by_case(dataset.test_cases().size());
    for (std::size_t i = 0; i < dataset.instances().size(); ++i) {
        if (keep[i]) by_case[dataset.instances()[i].case_index].push_back(i);
    }
    for (std::size_t c = 0; c < by_case.size(); ++c) {
        if (by_case[c].empty()) continue;
        Fold fold;
        fold.case_index = c;
        fold.test = by_case[c];
        for (std::size_t o = 0; o < by_case.size(); ++o) {
            if (o != c) fold.train.insert(fold.train.end(), by_case[o].begin(), by_case[o].end());
        }
        std::sort(fold.train.begin(), fold.train.end());
        plan.folds.push_back(std::move(fold));
    }
    check_fold_plan(dataset, plan);
    return plan;
}

void check_fold_plan(const Dataset& dataset, const FoldPlan& plan) {
    std::vector<int> seen(dataset.instances().size(), 0);
    std::set<std::size_t> cases;
    for (const auto& fold : plan.folds) {
        if (!cases.insert(fold.case_index).second) {
            throw ValidationError("fold plan holds out case " + dataset.test_cases()[fold.case_index] + " twice");
        }
        for (auto i : fold.test) {
            if (dataset.instances().at(i).case_index != fold.case_index) {
                throw ValidationError("fold " + dataset.test_cases()[fold.case_index] + " tests a foreign instance");
            }
            ++seen[i];
        }
        for (auto i : fold.train) {
            if (dataset.instances().at(i).case_index == fold.case_index) {
                throw ValidationError("fold " + dataset.test_cases()[fold.case_index] +
                                      " trains on an instance of its held-out case");
            }
        }
    }
    std::set<std::size_t> tested;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (seen[i] > 1) throw ValidationError("instance " + dataset.instance_id(i) + " is tested more than once");
        if (seen[i] == 1) tested.insert(i);
    }
    // Training sets must be the tested instances of every other case.
    for (const auto& fold : plan.folds) {
        if (fold.train.size() + fold.test.size() != tested.size()) {
            throw ValidationError("fold " + dataset.test_cases()[fold.case_index] +
                                  " does not train on all other eligible instances");
        }
        for (auto i : fold.train) {
            if (!tested.count(i)) {
                throw ValidationError("fold " + dataset.test_cases()[fold.case_index] +
                                      " trains on an ineligible instance");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::logistic ? "logistic" : "bayes";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "logistic") return ModelKind::logistic;
    if (text == "bayes") return ModelKind::bayes;
    throw ConfigError("unknown model '" + std::string(text) + "' (logistic, bayes)");
}

std::string EvalReport::label() const {
    std::string out;
    for (const auto& m : team) {
        if (!out.empty()) out += '+';
        out += m;
    }
    return out;
}

void summarize(EvalReport& report) {
    report.n_evaluations = report.outcomes.size();
    std::size_t correct = 0;
    report.ties = 0;
    for (const auto& o : report.outcomes) {
        correct += o.correct ? 1 : 0;
        report.ties += o.tie ? 1 : 0;
    }
    if (report.n_evaluations == 0) {
        report.accuracy = std::numeric_limits<double>::quiet_NaN();
        report.sem = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_evaluations);
    report.sem = binomial_sem(report.accuracy, report.n_evaluations);
}

namespace {

InstanceOutcome make_outcome(const Dataset& dataset, std::size_t instance, std::vector<double> probabilities) {
    InstanceOutcome o;
    o.instance = instance;
    o.id = dataset.instance_id(instance);
    o.truth = dataset.instance_truth(instance);
    const auto top = std::max_element(probabilities.begin(), probabilities.end());
    o.predicted = static_cast<int>(top - probabilities.begin());
    o.tie = std::count(probabilities.begin(), probabilities.end(), *top) > 1;
    o.correct = o.predicted == o.truth;
    o.probabilities = std::move(probabilities);
    return o;
}

struct FoldOutput {
    std::vector<InstanceOutcome> outcomes;
    std::optional<std::string> error;
    std::optional<std::string> unconverged;
};

FoldOutput run_logistic_fold(const Dataset& dataset, const TeamSpec& team, const EvalOptions& options,
                             const Fold& fold, std::uint64_t seed) {
    FoldOutput out;
    TeamModel model;
    if (options.features.mode == ConfidenceMode::squash) {
        model = fit_squash(dataset, team, options.features, fold.train, options.fit, options.squash, seed).model;
    } else {
        model = fit_team(dataset, team, options.features, fold.train, options.fit);
    }
    if (!model.fit_meta.converged) out.unconverged = model.fit_meta.status;
    const Design test = build_design(dataset, team, model.config, fold.test);
    for (const auto& row : test.rows) {
        const Prediction p = predict(model, row.x);
        out.outcomes.push_back(make_outcome(dataset, row.instance, p.probabilities));
    }
    return out;
}

FoldOutput run_bayes_fold(const Dataset& dataset, const TeamSpec& team, const EvalOptions& options,
                          const Fold& fold, std::uint64_t seed) {
    FoldOutput out;
    const PosteriorSamples post = fit_posterior(dataset, team, fold.train, options.mcmc, seed);
    if (!post.converged) out.unconverged = "split R-hat above 1.1";
    if (options.pool_replicates) {
        const auto [h, m] = bayes_members(dataset, team);
        BayesObservation obs;
        const Judgment* machine = nullptr;
        std::vector<const Judgment*> humans;
        for (auto i : fold.test) {
            const Judgment* jm = dataset.lookup(i, m);
            const Judgment* jh = dataset.lookup(i, h);
            if (jm == nullptr || jh == nullptr) {
                throw InputError("instance " + dataset.instance_id(i) + " lacks a judgment from " +
                                 dataset.teammates()[jh == nullptr ? h : m]);
            }
            machine = jm;
            if (std::find(humans.begin(), humans.end(), jh) == humans.end()) humans.push_back(jh);
        }
        obs.machine_margin = machine_margin(*machine);
        for (const auto* jh : humans) {
            obs.humans.push_back({jh->choice, human_rating(*jh, post.rating_scale, post.rating_levels)});
        }
        const auto probs = predict_posterior(post, obs);
        for (auto i : fold.test) out.outcomes.push_back(make_outcome(dataset, i, probs));
    } else {
        for (auto i : fold.test) {
            const auto obs = observe_instance(dataset, team, i, post.rating_scale, post.rating_levels);
            out.outcomes.push_back(make_outcome(dataset, i, predict_posterior(post, obs)));
        }
    }
    return out;
}

}  // namespace

EvalReport loocv(const Dataset& dataset, const TeamSpec& team, const EvalOptions& options, std::uint64_t seed) {
    if (team.members.empty()) throw ValidationError("team is empty");
    for (auto m : team.members) {
        if (m >= dataset.teammates().size()) throw ValidationError("team member index out of range");
    }
    EvalReport report;
    report.team = team_names(dataset, team);

    std::vector<std::size_t> eligible;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < dataset.instances().size(); ++i) {
        std::size_t present = 0;
        for (auto m : team.members) present += dataset.lookup(i, m) != nullptr ? 1 : 0;
        if (present > 0) eligible.push_back(i);
        if (present > 0) missing += team.size() - present;
    }

    if (team.size() == 1) {
        report.model = "individual";
        for (auto i : eligible) {
            const Judgment* j = dataset.lookup(i, team.members[0]);
            InstanceOutcome o;
            o.instance = i;
            o.id = dataset.instance_id(i);
            o.truth = dataset.instance_truth(i);
            o.predicted = j->choice;
            o.correct = o.predicted == o.truth;
            o.tie = j->tie;
            report.outcomes.push_back(std::move(o));
        }
        summarize(report);
        return report;
    }

    report.model = std::string(to_string(options.model));
    if (options.model == ModelKind::logistic) {
        options.features.validate();
        report.model += ':' + std::string(to_string(options.features.mode));
        if (missing > 0) {
            if (options.features.strict) {
                throw ValidationError(std::to_string(missing) + " missing judgment(s) in team " + report.label() +
                                      " (strict mode)");
            }
            warn("imputing zero evidence for " + std::to_string(missing) + " missing judgment(s) in team " +
                 report.label());
        }
    } else {
        options.mcmc.validate();
        bayes_members(dataset, team);
    }

    const FoldPlan plan = make_fold_plan(dataset, eligible);
    std::vector<FoldOutput> outputs(plan.folds.size());
    parallel_for(plan.folds.size(), options.jobs, [&](std::size_t f) {
        const QuietWarnings quiet;
        const Fold& fold = plan.folds[f];
        const std::uint64_t fold_seed = seed * 0x9E3779B97F4A7C15ull + fold.case_index;
        try {
            outputs[f] = options.model == ModelKind::logistic ? run_logistic_fold(dataset, team, options, fold, fold_seed)
                                                              : run_bayes_fold(dataset, team, options, fold, fold_seed);
        } catch (const FitError& e) {
            outputs[f] = FoldOutput{};
            outputs[f].error = e.what();
        } catch (const InputError& e) {
            outputs[f] = FoldOutput{};
            outputs[f].error = e.what();
        }
    });
    for (std::size_t f = 0; f < outputs.size(); ++f) {
        const std::string name = dataset.test_cases()[plan.folds[f].case_index];
        if (outputs[f].error) report.fold_errors.push_back({name, *outputs[f].error});
        if (outputs[f].unconverged) report.unconverged.push_back({name, *outputs[f].unconverged});
        for (auto& o : outputs[f].outcomes) report.outcomes.push_back(std::move(o));
    }
    if (!report.fold_errors.empty()) {
        warn(std::to_string(report.fold_errors.size()) + " fold(s) of team " + report.label() +
             " could not be fitted; first: " + report.fold_errors.front().test_case + ": " +
             report.fold_errors.front().message);
    }
    if (!report.unconverged.empty()) {
        warn(std::to_string(report.unconverged.size()) + " fold(s) of team " + report.label() +
             " did not converge");
    }
    summarize(report);
    return report;
}

ShuffleResult shuffled_accuracy(const EvalReport& report, int permutations, std::uint64_t seed) {
    if (permutations < 1) throw ConfigError("permutations must be >= 1");
    if (report.outcomes.empty()) throw InputError("report has no outcomes");
    std::vector<int> predicted;
    std::vector<int> truth;
    for (const auto& o : report.outcomes) {
        predicted.push_back(o.predicted);
        truth.push_back(o.truth);
    }
    std::mt19937_64 rng(seed);
    std::vector<double> acc;
    for (int p = 0; p < permutations; ++p) {
        std::shuffle(predicted.begin(), predicted.end(), rng);
        std::size_t hit = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
        acc.push_back(static_cast<double>(hit) / static_cast<double>(truth.size()));
    }
    ShuffleResult out;
    out.accuracy = mean(acc);
    out.sd = permutations > 1 ? std::sqrt(sample_variance(acc)) : 0.0;
    out.permutations = permutations;
    return out;
}

// ---------------------------------------------------------------------------
// Teams
// ---------------------------------------------------------------------------

std::vector<TeamSpec> enumerate_teams(std::size_t n_teammates, std::optional<std::size_t> must_include) {
    if (n_teammates == 0) throw ConfigError("no teammates to combine");
    if (n_teammates > kMaxEnumeratedTeammates) {
        throw ConfigError(std::to_string(n_teammates) + " teammates exceed the enumeration limit of " +
                          std::to_string(kMaxEnumeratedTeammates) + "; list teams explicitly");
    }
    if (must_include && *must_include >= n_teammates) throw ConfigError("must-include teammate out of range");
    std::vector<TeamSpec> teams;
    for (std::size_t k = 1; k <= n_teammates; ++k) {
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        while (true) {
            if (!must_include || std::find(idx.begin(), idx.end(), *must_include) != idx.end()) {
                teams.push_back(TeamSpec{idx});
            }
            // Next k-combination in lexicographic order.
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == n_teammates - k + i - 1) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return teams;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

namespace {

struct Scored {
    double confidence;
    bool correct;
};

std::vector<Scored> scored_judgments(const Dataset& dataset, std::size_t teammate) {
    std::vector<Scored> out;
    for (const auto* j : dataset.judgments_of(teammate)) {
        out.push_back({j->confidence, j->choice == dataset.truth_of(j->test_case)});
    }
    return out;
}

CalibrationBin make_bin(const std::vector<Scored>& items, double lower, double upper) {
    CalibrationBin bin;
    bin.lower = lower;
    bin.upper = upper;
    bin.count = items.size();
    if (items.empty()) {
        bin.mean_confidence = std::numeric_limits<double>::quiet_NaN();
        bin.accuracy = std::numeric_limits<double>::quiet_NaN();
        return bin;
    }
    double conf = 0.0;
    std::size_t hit = 0;
    for (const auto& s : items) {
        conf += s.confidence;
        hit += s.correct ? 1 : 0;
    }
    bin.mean_confidence = conf / static_cast<double>(items.size());
    bin.accuracy = static_cast<double>(hit) / static_cast<double>(items.size());
    return bin;
}

void fit_slope(CalibrationTable& table) {
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t b = 0; b < table.bins.size(); ++b) {
        if (table.bins[b].count == 0) continue;
        x.push_back(static_cast<double>(b));
        y.push_back(table.bins[b].accuracy);
    }
    table.slope = x.size() >= 2 ? ls_slope(x, y) : 0.0;
}

}  // namespace

CalibrationTable calibration(const Dataset& dataset, std::size_t teammate, int n_bins) {
    if (n_bins < 1) throw ConfigError("calibration needs at least one bin");
    auto items = scored_judgments(dataset, teammate);
    const std::size_t n = items.size();
    if (n < static_cast<std::size_t>(n_bins)) {
        throw InputError(dataset.teammates()[teammate] + " has " + std::to_string(n) + " judgment(s), fewer than " +
                         std::to_string(n_bins) + " bins");
    }
    std::stable_sort(items.begin(), items.end(), [](const Scored& a, const Scored& b) {
        return a.confidence < b.confidence;
    });
    CalibrationTable table;
    table.teammate = dataset.teammates()[teammate];
    const auto nb = static_cast<std::size_t>(n_bins);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * n / nb;
        const std::size_t hi = (b + 1) * n / nb;
        std::vector<Scored> part(items.begin() + static_cast<long>(lo), items.begin() + static_cast<long>(hi));
        table.bins.push_back(make_bin(part, part.front().confidence, part.back().confidence));
    }
    fit_slope(table);
    return table;
}

CalibrationTable calibration_by_edges(const Dataset& dataset, std::size_t teammate, const std::vector<double>& edges) {
    for (std::size_t k = 1; k < edges.size(); ++k) {
        if (!(edges[k] > edges[k - 1])) throw ConfigError("calibration edges must be strictly increasing");
    }
    const auto items = scored_judgments(dataset, teammate);
    std::vector<std::vector<Scored>> parts(edges.size() + 1);
    for (const auto& s : items) {
        const auto b = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), s.confidence) -
                                                edges.begin());
        parts[b].push_back(s);
    }
    CalibrationTable table;
    table.teammate = dataset.teammates()[teammate];
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < parts.size(); ++b) {
        table.bins.push_back(make_bin(parts[b], b == 0 ? -inf : edges[b - 1], b == edges.size() ? inf : edges[b]));
    }
    fit_slope(table);
    return table;
}

int default_calibration_bins(const Dataset& dataset, std::size_t teammate) {
    if (dataset.kind(teammate) != Kind::human) return 10;
    for (const auto* j : dataset.judgments_of(teammate)) {
        if (j->confidence != std::floor(j->confidence)) return 10;
    }
    return 3;
}

// ---------------------------------------------------------------------------
// Diversity
// ---------------------------------------------------------------------------

std::vector<double> item_difficulty(const Dataset& dataset, std::size_t teammate) {
    const std::size_t n_cases = dataset.test_cases().size();
    std::vector<double> sum(n_cases, 0.0);
    std::vector<int> count(n_cases, 0);
    const bool machine = dataset.kind(teammate) == Kind::machine;
    for (const auto* j : dataset.judgments_of(teammate)) {
        const std::size_t c = *dataset.find_case(j->test_case);
        const int z = dataset.truth(c);
        double value;
        if (!machine) {
            value = j->choice == z ? 1.0 : 0.0;
        } else if (!j->class_scores.empty()) {
            double other = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < j->class_scores.size(); ++k) {
                if (static_cast<int>(k) != z) other = std::max(other, j->class_scores[k]);
            }
            value = j->class_scores[static_cast<std::size_t>(z)] - other;
        } else {
            value = j->choice == z ? j->confidence : -j->confidence;
        }
        sum[c] += value;
        ++count[c];
    }
    std::vector<double> out(n_cases, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < n_cases; ++c) {
        if (count[c] > 0) out[c] = sum[c] / count[c];
    }
    return out;
}

DiversityMatrix diversity(const Dataset& dataset, const std::vector<std::size_t>& teammates) {
    if (teammates.size() < 2) throw InputError("diversity needs at least two teammates");
    DiversityMatrix out;
    std::vector<std::vector<double>> difficulty;
    for (auto t : teammates) {
        out.teammates.push_back(dataset.teammates().at(t));
        difficulty.push_back(item_difficulty(dataset, t));
    }
    const std::size_t n = teammates.size();
    out.rho.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) {
            std::vector<double> x;
            std::vector<double> y;
            for (std::size_t c = 0; c < difficulty[a].size(); ++c) {
                if (std::isnan(difficulty[a][c]) || std::isnan(difficulty[b][c])) continue;
                x.push_back(difficulty[a][c]);
                y.push_back(difficulty[b][c]);
            }
            std::optional<double> r = spearman(x, y);
            if (a == b && r) r = 1.0;
            out.rho[a][b] = r;
            out.rho[b][a] = r;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

std::string_view to_string(Unit unit) {
    return unit == Unit::teams ? "teams" : "instances";
}

Unit parse_unit(std::string_view text) {
    if (text == "teams") return Unit::teams;
    if (text == "instances") return Unit::instances;
    throw ConfigError("unknown unit of analysis '" + std::string(text) + "' (teams, instances)");
}

namespace {

Comparison run_welch(std::string name, Unit unit, const std::vector<double>& a, const std::vector<double>& b,
                     Tail tail) {
    Comparison c;
    c.name = std::move(name);
    c.test = "welch";
    c.unit = unit;
    c.n_a = a.size();
    c.n_b = b.size();
    try {
        c.result = welch_t(a, b, tail);
    } catch (const InputError& e) {
        c.note = e.what();
    }
    return c;
}

Comparison run_paired(std::string name, Unit unit, const std::vector<double>& a, const std::vector<double>& b,
                      Tail tail) {
    Comparison c;
    c.name = std::move(name);
    c.test = "paired";
    c.unit = unit;
    c.n_a = a.size();
    c.n_b = b.size();
    try {
        c.result = paired_t(a, b, tail);
    } catch (const InputError& e) {
        c.note = e.what();
    }
    return c;
}

std::vector<double> correctness(const EvalReport& r) {
    std::vector<double> out;
    for (const auto& o : r.outcomes) out.push_back(o.correct ? 1.0 : 0.0);
    return out;
}

// Per-instance correctness of two reports matched on instance id.
void matched_correctness(const EvalReport& a, const EvalReport& b, std::vector<double>& xa, std::vector<double>& xb) {
    std::map<std::string, bool> in_b;
    for (const auto& o : b.outcomes) in_b[o.id] = o.correct;
    for (const auto& o : a.outcomes) {
        const auto it = in_b.find(o.id);
        if (it == in_b.end()) continue;
        xa.push_back(o.correct ? 1.0 : 0.0);
        xb.push_back(it->second ? 1.0 : 0.0);
    }
}

}  // namespace

std::vector<Comparison> compare_results(const std::vector<EvalReport>& a, const std::vector<EvalReport>& b, Unit unit,
                                        Tail tail) {
    std::vector<Comparison> out;
    if (unit == Unit::teams) {
        std::vector<double> acc_a;
        std::vector<double> acc_b;
        for (const auto& r : a) acc_a.push_back(r.accuracy);
        for (const auto& r : b) acc_b.push_back(r.accuracy);
        out.push_back(run_welch("A vs B", unit, acc_a, acc_b, tail));
        std::map<std::string, double> by_label;
        for (const auto& r : b) by_label[r.label()] = r.accuracy;
        std::vector<double> pa;
        std::vector<double> pb;
        for (const auto& r : a) {
            const auto it = by_label.find(r.label());
            if (it == by_label.end()) continue;
            pa.push_back(r.accuracy);
            pb.push_back(it->second);
        }
        out.push_back(run_paired("A vs B (matched teams)", unit, pa, pb, tail));
        return out;
    }
    std::map<std::string, const EvalReport*> by_label;
    for (const auto& r : b) by_label[r.label()] = &r;
    for (const auto& r : a) {
        const auto it = by_label.find(r.label());
        if (it == by_label.end()) continue;
        out.push_back(run_welch(r.label() + ": A vs B", unit, correctness(r), correctness(*it->second), tail));
        std::vector<double> xa;
        std::vector<double> xb;
        matched_correctness(r, *it->second, xa, xb);
        out.push_back(run_paired(r.label() + ": A vs B", unit, xa, xb, tail));
    }
    return out;
}

std::vector<Comparison> compare_with_without(const std::vector<EvalReport>& reports, const std::string& member,
                                             Unit unit, Tail tail) {
    std::map<std::string, const EvalReport*> by_label;
    for (const auto& r : reports) by_label[r.label()] = &r;
    std::vector<double> with;
    std::vector<double> without;
    std::vector<double> paired_with;
    std::vector<double> paired_without;
    for (const auto& r : reports) {
        if (r.size() < 2 || std::find(r.team.begin(), r.team.end(), member) == r.team.end()) continue;
        EvalReport reduced;
        for (const auto& m : r.team) {
            if (m != member) reduced.team.push_back(m);
        }
        const auto it = by_label.find(reduced.label());
        if (it == by_label.end()) continue;
        if (unit == Unit::teams) {
            paired_with.push_back(r.accuracy);
            paired_without.push_back(it->second->accuracy);
        } else {
            matched_correctness(r, *it->second, paired_with, paired_without);
        }
    }
    for (const auto& r : reports) {
        const bool has = std::find(r.team.begin(), r.team.end(), member) != r.team.end();
        if (has && r.size() < 2) continue;
        auto& group = has ? with : without;
        if (unit == Unit::teams) {
            group.push_back(r.accuracy);
        } else {
            const auto c = correctness(r);
            group.insert(group.end(), c.begin(), c.end());
        }
    }
    std::vector<Comparison> out;
    out.push_back(run_welch("with " + member + " vs without", unit, with, without, tail));
    out.push_back(run_paired("with " + member + " vs without (matched teams)", unit, paired_with, paired_without,
                             tail));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::vector<EvalReport> sorted_reports(std::vector<EvalReport> reports) {
    std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        const double xa = std::isnan(a.accuracy) ? -1.0 : a.accuracy;
        const double xb = std::isnan(b.accuracy) ? -1.0 : b.accuracy;
        if (xa != xb) return xa > xb;
        return a.label() < b.label();
    });
    return reports;
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
    std::string out = "team,size,model,n,accuracy,sem,ties,fold_errors,unconverged,shuffled_accuracy\n";
    for (const auto& r : reports) {
        out += csv_field(r.label()) + ',' + std::to_string(r.size()) + ',' + csv_field(r.model) + ',' +
               std::to_string(r.n_evaluations) + ',' + format_double(r.accuracy) + ',' + format_double(r.sem) + ',' +
               std::to_string(r.ties) + ',' + std::to_string(r.fold_errors.size()) + ',' +
               std::to_string(r.unconverged.size()) + ',' +
               (r.shuffled_accuracy ? format_double(*r.shuffled_accuracy) : std::string()) + '\n';
    }
    return out;
}

namespace {

nlohmann::ordered_json number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

nlohmann::ordered_json issues_json(const std::vector<FoldIssue>& issues) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& i : issues) arr.push_back({{"test_case", i.test_case}, {"message", i.message}});
    return arr;
}

std::vector<FoldIssue> issues_from(const nlohmann::json& arr) {
    std::vector<FoldIssue> out;
    for (const auto& i : arr) out.push_back({i.at("test_case").get<std::string>(), i.at("message").get<std::string>()});
    return out;
}

double number_from(const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

std::string reports_json(const std::vector<EvalReport>& reports, const std::string& metadata_json) {
    nlohmann::ordered_json doc;
    doc["format"] = "teamfuse.eval_reports/1";
    doc["metadata"] = nlohmann::ordered_json::parse(metadata_json);
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json item;
        item["team"] = r.team;
        item["label"] = r.label();
        item["model"] = r.model;
        item["n_evaluations"] = r.n_evaluations;
        item["accuracy"] = number(r.accuracy);
        item["sem"] = number(r.sem);
        item["ties"] = r.ties;
        item["fold_errors"] = issues_json(r.fold_errors);
        item["unconverged"] = issues_json(r.unconverged);
        if (r.shuffled_accuracy) item["shuffled_accuracy"] = *r.shuffled_accuracy;
        auto outcomes = nlohmann::ordered_json::array();
        for (const auto& o : r.outcomes) {
            nlohmann::ordered_json oj;
            oj["instance"] = o.id;
            oj["index"] = o.instance;
            oj["truth"] = o.truth;
            oj["predicted"] = o.predicted;
            oj["correct"] = o.correct;
            oj["tie"] = o.tie;
            if (!o.probabilities.empty()) oj["probabilities"] = o.probabilities;
            outcomes.push_back(std::move(oj));
        }
        item["outcomes"] = std::move(outcomes);
        arr.push_back(std::move(item));
    }
    doc["reports"] = std::move(arr);
    return doc.dump(2) + '\n';
}

std::vector<EvalReport> reports_from_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("results JSON: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "teamfuse.eval_reports/1") {
            throw ParseError("results JSON: unexpected format tag");
        }
        std::vector<EvalReport> out;
        for (const auto& item : doc.at("reports")) {
            EvalReport r;
            r.team = item.at("team").get<std::vector<std::string>>();
            r.model = item.at("model").get<std::string>();
            r.fold_errors = issues_from(item.at("fold_errors"));
            r.unconverged = issues_from(item.at("unconverged"));
            if (item.contains("shuffled_accuracy")) r.shuffled_accuracy = item["shuffled_accuracy"].get<double>();
            for (const auto& oj : item.at("outcomes")) {
                InstanceOutcome o;
                o.id = oj.at("instance").get<std::string>();
                o.instance = oj.at("index").get<std::size_t>();
                o.truth = oj.at("truth").get<int>();
                o.predicted = oj.at("predicted").get<int>();
                o.correct = oj.at("correct").get<bool>();
                o.tie = oj.at("tie").get<bool>();
                if (oj.contains("probabilities")) o.probabilities = oj["probabilities"].get<std::vector<double>>();
                r.outcomes.push_back(std::move(o));
            }
            summarize(r);
            const double stored = number_from(item.at("accuracy"));
            if (!(stored == r.accuracy || (std::isnan(stored) && std::isnan(r.accuracy)))) {
                throw ParseError("results JSON: accuracy of " + r.label() + " disagrees with its outcomes");
            }
            out.push_back(std::move(r));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("results JSON: ") + e.what());
    }
}

}  // namespace teamfuse
