#include "teamfuse/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "teamfuse/bayes.hpp"
#include "teamfuse/config.hpp"
#include "teamfuse/evaluation.hpp"
#include "teamfuse/logistic.hpp"

namespace teamfuse {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const std::vector<std::string> kKnownKeys = {
    "data",        "truth",      "format",     "classes",     "seed",        "out",          "jobs",      "strict",
    "model",       "mode",       "alpha",       "expansion",   "degree",       "standardize", "l2",
    "max_iterations", "alpha_grid", "inner_folds", "squash_sweeps", "warmup",   "chains",    "samples",
    "thin",        "rating_levels", "rating_scale", "team",     "teams",        "must_include", "pool_replicates",
    "permutations", "cases",     "results",     "compare",     "with_without", "unit",      "tail",
    "bins",        "edges"};
const std::vector<std::string> kKnownPrefixes = {"alpha.", "sim."};
// Settings that do not change any output byte.
const std::vector<std::string> kUnhashed = {"out", "jobs"};

// Effective settings of one invocation plus the provenance stamped on outputs.
struct Run {
    std::string command;
    Settings settings;
    std::uint64_t seed = 0;
    std::string hash;
    fs::path out_dir;
    int jobs = 0;
    std::ostream* out = nullptr;

    std::string csv_header() const {
        return "# teamfuse " + command + " seed=" + std::to_string(seed) + " config_hash=" + hash + '\n';
    }

    ojson metadata() const {
        ojson m;
        m["tool"] = "teamfuse";
        m["command"] = command;
        m["seed"] = seed;
        m["config_hash"] = hash;
        ojson s = ojson::object();
        for (const auto& [k, v] : settings.values()) {
            if (std::find(kUnhashed.begin(), kUnhashed.end(), k) == kUnhashed.end()) s[k] = v;
        }
        m["settings"] = std::move(s);
        return m;
    }

    fs::path path(const std::string& name) const { return out_dir / name; }

    void write(const std::string& name, const std::string& content) const {
        write_text_file(path(name), content);
        *out << "wrote " << path(name).string() << '\n';
    }
};

Run prepare(const std::string& command, const Settings& flags, const std::optional<std::string>& config_path) {
    Run run;
    run.command = command;
    if (config_path) run.settings = Settings::load(*config_path);
    run.settings.merge(flags);
    run.settings.check_known(kKnownKeys, kKnownPrefixes);
    if (!run.settings.has("seed")) throw ConfigError("--seed is required (no default seed is used)");
    run.seed = run.settings.get_u64("seed");
    run.hash = hex64(fnv1a(command + '\n' + run.settings.canonical(kUnhashed)));
    run.out_dir = run.settings.get("out", ".");
    run.jobs = run.settings.get_int("jobs", 0);
    if (run.jobs < 0) throw ConfigError("--jobs must be >= 0");
    std::error_code ec;
    fs::create_directories(run.out_dir, ec);
    if (ec || !fs::is_directory(run.out_dir)) {
        throw Error("cannot create output directory " + run.out_dir.string());
    }
    return run;
}

Dataset load_data(const Run& run) {
    const auto data = run.settings.find("data");
    if (!data) throw ConfigError("--data is required");
    LoadOptions options;
    if (const auto truth = run.settings.find("truth")) options.truth = fs::path(*truth);
    const std::string format = run.settings.get("format", "auto");
    if (format == "csv") {
        options.format = DataFormat::csv;
    } else if (format == "json") {
        options.format = DataFormat::json;
    } else if (format != "auto") {
        throw ConfigError("format must be auto, csv or json, got '" + format + "'");
    }
    if (run.settings.has("classes")) options.num_classes = run.settings.get_int("classes", 2);
    return load_dataset(*data, options);
}

std::vector<std::string> team_members(std::string_view text) {
    std::string joined(text);
    std::replace(joined.begin(), joined.end(), ',', '+');
    return split(joined, '+');
}

FeatureConfig feature_config(const Run& run) {
    const Settings& s = run.settings;
    FeatureConfig cfg;
    cfg.mode = parse_confidence_mode(s.get("mode", "confidence"));
    cfg.default_alpha = s.get_double("alpha", 0.0);
    for (const auto& [name, value] : s.with_prefix("alpha.")) cfg.alpha[name] = s.get_double("alpha." + name, 0.0);
    cfg.expansion = parse_expansion(s.get("expansion", "none"));
    cfg.degree = s.get_int("degree", 2);
    cfg.standardize = s.get_bool("standardize", false);
    cfg.strict = s.get_bool("strict", false);
    cfg.validate();
    return cfg;
}

FitOptions fit_options(const Run& run) {
    FitOptions o;
    o.l2 = run.settings.get_double("l2", o.l2);
    o.max_iterations = run.settings.get_int("max_iterations", o.max_iterations);
    o.seed = run.seed;
    if (!(o.l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
    if (o.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    return o;
}

SquashOptions squash_options(const Run& run) {
    SquashOptions o;
    o.grid = run.settings.get_doubles("alpha_grid", o.grid);
    o.inner_folds = run.settings.get_int("inner_folds", o.inner_folds);
    o.max_sweeps = run.settings.get_int("squash_sweeps", o.max_sweeps);
    if (o.grid.empty()) throw ConfigError("alpha_grid is empty");
    return o;
}

McmcSettings mcmc_settings(const Run& run) {
    McmcSettings m;
    m.warmup = run.settings.get_int("warmup", m.warmup);
    m.chains = run.settings.get_int("chains", m.chains);
    m.samples = run.settings.get_int("samples", m.samples);
    m.thin = run.settings.get_int("thin", m.thin);
    m.rating_levels = run.settings.get_int("rating_levels", m.rating_levels);
    m.rating_scale = parse_rating_scale(run.settings.get("rating_scale", "automatic"));
    m.jobs = run.jobs;
    m.validate();
    return m;
}

EvalOptions eval_options(const Run& run) {
    EvalOptions o;
    o.model = parse_model_kind(run.settings.get("model", "logistic"));
    o.features = feature_config(run);
    o.fit = fit_options(run);
    o.squash = squash_options(run);
    o.mcmc = mcmc_settings(run);
    o.pool_replicates = run.settings.get_bool("pool_replicates", true);
    o.jobs = run.jobs;
    return o;
}

std::string with_metadata(const std::string& json_text, const Run& run) {
    ojson doc = ojson::parse(json_text);
    doc["metadata"] = run.metadata();
    return doc.dump(2) + '\n';
}

// --- fit -----------------------------------------------------------------------

std::string posterior_summary(const PosteriorSamples& post, const Run& run) {
    std::string out = run.csv_header();
    out += "team: " + post.team[0] + "+" + post.team[1] + "\nmodel: bayes\n";
    auto line = [&](const std::string& name, const std::function<double(const BayesParams&)>& f) {
        const double m = post.mean(f);
        double var = 0.0;
        for (const auto& d : post.draws) var += (f(d) - m) * (f(d) - m);
        const double sd = post.draws.size() > 1 ? std::sqrt(var / static_cast<double>(post.draws.size() - 1)) : 0.0;
        out += name + "  mean=" + format_double(m) + "  sd=" + format_double(sd) + '\n';
    };
    line("a_machine-b_machine", [](const BayesParams& p) { return p.a_machine - p.b_machine; });
    line("sigma_machine", [](const BayesParams& p) { return p.sigma_machine; });
    line("a_human", [](const BayesParams& p) { return p.a_human; });
    line("rho", [](const BayesParams& p) { return p.rho; });
    for (int k = 0; k + 1 < post.rating_levels; ++k) {
        line("cutpoint_" + std::to_string(k),
             [k](const BayesParams& p) { return p.cutpoints[static_cast<std::size_t>(k)]; });
    }
    line("delta", [](const BayesParams& p) { return p.delta; });
    for (const auto& [name, r] : post.rhat) out += "split_rhat " + name + "  " + format_double(r) + '\n';
    out += "converged: " + std::string(post.converged ? "yes" : "no") + '\n';
    return out;
}

void cmd_fit(const Run& run) {
    const Dataset dataset = load_data(run);
    const auto team_text = run.settings.find("team");
    const TeamSpec team = team_text ? make_team(dataset, team_members(*team_text)) : make_team(dataset, dataset.teammates());
    std::vector<std::size_t> all(dataset.instances().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    const ModelKind kind = parse_model_kind(run.settings.get("model", "logistic"));
    if (kind == ModelKind::bayes) {
        const PosteriorSamples post = fit_posterior(dataset, team, all, mcmc_settings(run), run.seed);
        run.write("posterior.json", with_metadata(posterior_to_json(post), run));
        const std::string summary = posterior_summary(post, run);
        run.write("weights.txt", summary);
        return;
    }
    const FeatureConfig cfg = feature_config(run);
    TeamModel model;
    std::string extra;
    if (cfg.mode == ConfidenceMode::squash) {
        const SquashFit sf = fit_squash(dataset, team, cfg, all, fit_options(run), squash_options(run), run.seed);
        model = sf.model;
        for (const auto& [name, a] : sf.alpha) extra += "alpha " + name + "  " + format_double(a) + '\n';
        extra += "inner_cv_nll  " + format_double(sf.inner_cv_nll) + '\n';
    } else {
        model = fit_team(dataset, team, cfg, all, fit_options(run));
    }
    run.write("model.json", with_metadata(model_to_json(model), run));
    const std::string summary = run.csv_header() + weight_summary(model) + extra;
    run.write("weights.txt", summary);
    *run.out << weight_summary(model) << extra;
}

// --- teams ---------------------------------------------------------------------

std::vector<TeamSpec> selected_teams(const Dataset& dataset, const Run& run) {
    const std::string text = run.settings.get("teams", "all");
    std::optional<std::size_t> must;
    if (const auto m = run.settings.find("must_include")) must = dataset.teammate_index(*m);
    if (text == "all") return enumerate_teams(dataset.teammates().size(), must);
    std::vector<TeamSpec> teams;
    for (const auto& item : split(text, ',')) {
        TeamSpec t = make_team(dataset, split(item, '+'));
        if (must && !t.contains(*must)) continue;
        if (std::find(teams.begin(), teams.end(), t) == teams.end()) teams.push_back(std::move(t));
    }
    if (teams.empty()) throw ConfigError("no teams selected");
    return teams;
}

bool bayes_pair(const Dataset& dataset, const TeamSpec& team) {
    return team.size() == 2 && dataset.kind(team.members[0]) != dataset.kind(team.members[1]);
}

void cmd_teams(const Run& run) {
    const Dataset dataset = load_data(run);
    const EvalOptions options = eval_options(run);
    const int permutations = run.settings.get_int("permutations", 100);
    if (permutations < 1) throw ConfigError("permutations must be >= 1");
    std::vector<TeamSpec> teams = selected_teams(dataset, run);
    if (options.model == ModelKind::bayes) {
        const auto before = teams.size();
        std::erase_if(teams, [&](const TeamSpec& t) { return t.size() > 1 && !bayes_pair(dataset, t); });
        if (teams.size() < before) {
            warn("skipped " + std::to_string(before - teams.size()) +
                 " team(s) that are not one human plus one machine (the Bayesian model combines pairs)");
        }
    }
    std::vector<EvalReport> reports;
    for (const auto& team : teams) {
        EvalReport r = loocv(dataset, team, options, run.seed);
        if (!r.outcomes.empty()) r.shuffled_accuracy = shuffled_accuracy(r, permutations, run.seed).accuracy;
        reports.push_back(std::move(r));
    }
    reports = sorted_reports(std::move(reports));
    run.write("teams.csv", run.csv_header() + reports_csv(reports));
    ojson meta = run.metadata();
    meta["shuffle_permutations"] = permutations;
    run.write("teams.json", reports_json(reports, meta.dump()));
    for (const auto& r : reports) {
        *run.out << r.label() << "  accuracy=" << format_double(r.accuracy) << "  sem=" << format_double(r.sem)
                 << "  n=" << r.n_evaluations << '\n';
    }
}

// --- simulate ------------------------------------------------------------------

std::pair<int, int> instance_range(const std::string& key, const std::string& text) {
    const auto parts = split(text, '-');
    Settings tmp;
    try {
        if (parts.size() == 1) {
            tmp.set("v", parts[0]);
            const int v = tmp.get_int("v", 1);
            return {v, v};
        }
        if (parts.size() == 2) {
            tmp.set("a", parts[0]);
            tmp.set("b", parts[1]);
            return {tmp.get_int("a", 1), tmp.get_int("b", 1)};
        }
    } catch (const ConfigError&) {
    }
    throw ConfigError("setting '" + key + "' expects N or MIN-MAX, got '" + text + "'");
}

GeneratorSpec generator_spec(const Run& run) {
    const Settings& s = run.settings;
    const BayesParams defaults;
    const auto names_text = s.find("sim.teammates");
    GeneratorSpec spec;
    if (!names_text) {
        spec = two_member_spec(defaults);
    } else {
        for (const auto& name : split(*names_text, ',')) {
            LatentTeammate t;
            t.name = name;
            const std::string p = "sim." + name + ".";
            t.kind = parse_kind(s.get(p + "kind", "machine"));
            const bool human = t.kind == Kind::human;
            t.a = s.get_double(p + "a", human ? defaults.a_human : defaults.a_machine);
            t.b = s.get_double(p + "b", 0.0);
            t.sigma = s.get_double(p + "sigma", 1.0);
            std::tie(t.min_instances, t.max_instances) = instance_range(p + "instances", s.get(p + "instances", "1"));
            spec.teammates.push_back(std::move(t));
        }
        const auto n = static_cast<Eigen::Index>(spec.teammates.size());
        spec.correlation = Eigen::MatrixXd::Identity(n, n);
        for (const auto& [key, value] : s.with_prefix("sim.rho.")) {
            const auto parts = split(key, '.');
            if (parts.size() != 2) throw ConfigError("setting 'sim.rho." + key + "' should name two teammates");
            Eigen::Index ia = -1;
            Eigen::Index ib = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (spec.teammates[static_cast<std::size_t>(i)].name == parts[0]) ia = i;
                if (spec.teammates[static_cast<std::size_t>(i)].name == parts[1]) ib = i;
            }
            if (ia < 0 || ib < 0 || ia == ib) {
                throw ConfigError("setting 'sim.rho." + key + "' names unknown or identical teammates");
            }
            const double r = s.get_double("sim.rho." + key, 0.0);
            spec.correlation(ia, ib) = spec.correlation(ib, ia) = r;
        }
    }
    if (!names_text && s.has("sim.rho")) {
        spec.correlation(0, 1) = spec.correlation(1, 0) = s.get_double("sim.rho", defaults.rho);
    }
    spec.tau = s.get_double("sim.tau", spec.tau);
    spec.cutpoints = s.get_doubles("sim.cutpoints", spec.cutpoints);
    spec.delta = s.get_double("sim.delta", spec.delta);
    spec.dirichlet_alpha = s.get_double("sim.dirichlet_alpha", spec.dirichlet_alpha);
    const std::set<std::string> known_fields = {"kind", "a", "b", "sigma", "instances"};
    for (const auto& [key, value] : s.with_prefix("sim.")) {
        if (key == "teammates" || key == "tau" || key == "cutpoints" || key == "delta" || key == "dirichlet_alpha" ||
            key == "rho" || key.rfind("rho.", 0) == 0) {
            continue;
        }
        const auto dot = key.rfind('.');
        const bool ok = dot != std::string::npos && known_fields.count(key.substr(dot + 1)) &&
                        std::any_of(spec.teammates.begin(), spec.teammates.end(),
                                    [&](const LatentTeammate& t) { return t.name == key.substr(0, dot); });
        if (!ok) throw ConfigError("unknown setting 'sim." + key + "'");
    }
    spec.validate();
    return spec;
}

void cmd_simulate(const Run& run) {
    const GeneratorSpec spec = generator_spec(run);
    const int cases = run.settings.get_int("cases", 200);
    const int classes = run.settings.get_int("classes", 2);
    const Dataset dataset = generate(spec, cases, classes, run.seed);
    run.write("judgments.csv", run.csv_header() + judgments_csv(dataset));
    run.write("truth.csv", run.csv_header() + truth_csv(dataset));
    ojson doc;
    doc["format"] = "teamfuse.simulation/1";
    doc["cases"] = cases;
    doc["classes"] = classes;
    auto members = ojson::array();
    for (const auto& t : spec.teammates) {
        members.push_back({{"name", t.name},
                           {"kind", std::string(to_string(t.kind))},
                           {"a", t.a},
                           {"b", t.b},
                           {"sigma", t.sigma},
                           {"min_instances", t.min_instances},
                           {"max_instances", t.max_instances}});
    }
    doc["teammates"] = std::move(members);
    auto corr = ojson::array();
    for (Eigen::Index i = 0; i < spec.correlation.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(spec.correlation.cols()));
        for (Eigen::Index j = 0; j < spec.correlation.cols(); ++j) row[static_cast<std::size_t>(j)] = spec.correlation(i, j);
        corr.push_back(row);
    }
    doc["correlation"] = std::move(corr);
    doc["tau"] = spec.tau;
    doc["cutpoints"] = spec.cutpoints;
    doc["delta"] = spec.delta;
    doc["dirichlet_alpha"] = spec.dirichlet_alpha;
    doc["judgments"] = dataset.judgments().size();
    doc["metadata"] = run.metadata();
    run.write("simulation.json", doc.dump(2) + '\n');
}

// --- report --------------------------------------------------------------------

std::string file_token(const std::string& name) {
    std::string out;
    for (char c : name) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

std::string number_or_na(double v) {
    return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "NA" : (v > 0 ? "inf" : "-inf"));
}

std::string calibration_csv(const CalibrationTable& table, const Run& run) {
    std::string out = run.csv_header();
    out += "# teammate=" + table.teammate + " slope=" + format_double(table.slope) + '\n';
    out += "bin,lower,upper,mean_confidence,accuracy,count\n";
    for (std::size_t b = 0; b < table.bins.size(); ++b) {
        const auto& bin = table.bins[b];
        out += std::to_string(b) + ',' + number_or_na(bin.lower) + ',' + number_or_na(bin.upper) + ',' +
               number_or_na(bin.mean_confidence) + ',' + number_or_na(bin.accuracy) + ',' +
               std::to_string(bin.count) + '\n';
    }
    return out;
}

std::string diversity_csv(const DiversityMatrix& m, const Run& run) {
    std::string out = run.csv_header() + "teammate";
    for (const auto& t : m.teammates) out += ',' + csv_field(t);
    out += '\n';
    for (std::size_t a = 0; a < m.teammates.size(); ++a) {
        out += csv_field(m.teammates[a]);
        for (std::size_t b = 0; b < m.teammates.size(); ++b) {
            out += ',' + (m.rho[a][b] ? format_double(*m.rho[a][b]) : std::string("NA"));
        }
        out += '\n';
    }
    return out;
}

std::string tests_csv(const std::vector<Comparison>& rows, Tail tail, const Run& run) {
    std::string out = run.csv_header() + "comparison,test,unit,tail,n_a,n_b,t,df,p,note\n";
    for (const auto& c : rows) {
        out += csv_field(c.name) + ',' + c.test + ',' + std::string(to_string(c.unit)) + ',' +
               std::string(to_string(tail)) + ',' + std::to_string(c.n_a) + ',' + std::to_string(c.n_b) + ',';
        if (c.result) {
            out += format_double(c.result->t) + ',' + format_double(c.result->df) + ',' + format_double(c.result->p);
        } else {
            out += "NA,NA,NA";
        }
        out += ',' + csv_field(c.note) + '\n';
    }
    return out;
}

std::string plot_csv(const std::vector<EvalReport>& reports, const Run& run) {
    std::string out = run.csv_header() + "team,size,model,accuracy,sem,n,lower,upper\n";
    for (const auto& r : reports) {
        out += csv_field(r.label()) + ',' + std::to_string(r.size()) + ',' + csv_field(r.model) + ',' +
               number_or_na(r.accuracy) + ',' + number_or_na(r.sem) + ',' + std::to_string(r.n_evaluations) + ',' +
               number_or_na(r.accuracy - r.sem) + ',' + number_or_na(r.accuracy + r.sem) + '\n';
    }
    return out;
}

void cmd_report(const Run& run) {
    const Settings& s = run.settings;
    std::optional<Dataset> dataset;
    if (s.has("data")) dataset = load_data(run);
    std::vector<EvalReport> results;
    if (const auto path = s.find("results")) {
        results = reports_from_json(read_text_file(*path));
    } else if (dataset) {
        EvalOptions individual;
        for (std::size_t t = 0; t < dataset->teammates().size(); ++t) {
            results.push_back(loocv(*dataset, TeamSpec{{t}}, individual, run.seed));
        }
    } else {
        throw ConfigError("report needs --data, --results, or both");
    }

    if (dataset) {
        const auto edges = s.get_doubles("edges", {});
        for (std::size_t t = 0; t < dataset->teammates().size(); ++t) {
            CalibrationTable table;
            if (!edges.empty()) {
                table = calibration_by_edges(*dataset, t, edges);
            } else {
                const int n = static_cast<int>(dataset->judgments_of(t).size());
                const int bins = std::min(s.get_int("bins", default_calibration_bins(*dataset, t)), n);
                table = calibration(*dataset, t, bins);
            }
            run.write("calibration_" + file_token(dataset->teammates()[t]) + ".csv", calibration_csv(table, run));
        }
        if (dataset->teammates().size() >= 2) {
            std::vector<std::size_t> all(dataset->teammates().size());
            for (std::size_t t = 0; t < all.size(); ++t) all[t] = t;
            run.write("diversity.csv", diversity_csv(diversity(*dataset, all), run));
        } else {
            warn("diversity needs at least two teammates; diversity.csv not written");
        }
    }

    const Unit unit = parse_unit(s.get("unit", "teams"));
    const Tail tail = parse_tail(s.get("tail", "greater"));
    std::vector<Comparison> rows;
    if (const auto other = s.find("compare")) {
        const auto b = reports_from_json(read_text_file(*other));
        rows = compare_results(results, b, unit, tail);
    }
    if (const auto member = s.find("with_without")) {
        const auto more = compare_with_without(results, *member, unit, tail);
        rows.insert(rows.end(), more.begin(), more.end());
    }
    if (!s.has("compare") && !s.has("with_without")) {
        std::set<std::string> members;
        for (const auto& r : results) members.insert(r.team.begin(), r.team.end());
        for (const auto& m : members) {
            const bool paired = std::any_of(results.begin(), results.end(), [&](const EvalReport& r) {
                return r.size() >= 2 && std::find(r.team.begin(), r.team.end(), m) != r.team.end();
            });
            if (!paired) continue;
            const auto more = compare_with_without(results, m, unit, tail);
            rows.insert(rows.end(), more.begin(), more.end());
        }
    }
    run.write("tests.csv", tests_csv(rows, tail, run));
    run.write("plot.csv", plot_csv(sorted_reports(results), run));
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const ParseError*>(&e)) {
        return kExitUsage;
    }
    return kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fuse human and machine judgments into team decisions.", "teamfuse"};
    app.require_subcommand(1);
    app.fallthrough();

    Settings flags;
    std::optional<std::string> config_path;
    auto text_flag = [&](CLI::App* target, const std::string& name, const std::string& key, const std::string& help) {
        target->add_option_function<std::string>(
            name, [&flags, key](const std::string& v) { flags.set(key, v); }, help);
    };
    auto bool_flag = [&](CLI::App* target, const std::string& name, const std::string& key, const std::string& help) {
        target->add_flag_function(
            name, [&flags, key](std::int64_t) { flags.set(key, "true"); }, help);
    };

    app.add_option_function<std::string>(
        "--config", [&](const std::string& v) { config_path = v; }, "key = value settings file; flags override it");
    text_flag(&app, "--data", "data", "judgments CSV or JSON bundle");
    text_flag(&app, "--truth", "truth", "ground-truth CSV (required with a judgments CSV)");
    text_flag(&app, "--seed", "seed", "random seed (required)");
    text_flag(&app, "--out", "out", "output directory");
    text_flag(&app, "--jobs", "jobs", "worker threads (0: all cores)");
    bool_flag(&app, "--strict", "strict", "fail on missing judgments instead of imputing zero evidence");
    text_flag(&app, "--classes", "classes", "number of classes");
    text_flag(&app, "--format", "format", "auto, csv or json");

    auto model_flags = [&](CLI::App* sub) {
        text_flag(sub, "--model", "model", "logistic or bayes");
        text_flag(sub, "--mode", "mode", "confidence, no_confidence or squash");
        text_flag(sub, "--alpha", "alpha", "squash strength for every teammate");
        text_flag(sub, "--expansion", "expansion", "none, interactions or polynomial");
        text_flag(sub, "--degree", "degree", "expansion degree");
        bool_flag(sub, "--standardize", "standardize", "z-score features on the training rows");
        text_flag(sub, "--l2", "l2", "ridge penalty on non-intercept weights");
        text_flag(sub, "--alpha-grid", "alpha_grid", "comma-separated squash search grid");
        text_flag(sub, "--warmup", "warmup", "MCMC warmup sweeps");
        text_flag(sub, "--chains", "chains", "MCMC chains");
        text_flag(sub, "--samples", "samples", "stored draws per chain");
        text_flag(sub, "--thin", "thin", "sweeps between stored draws");
        text_flag(sub, "--rating-levels", "rating_levels", "number of human rating levels");
        text_flag(sub, "--rating-scale", "rating_scale", "automatic, ordinal or percent");
    };

    auto* fit = app.add_subcommand("fit", "fit one team's combination model on the whole dataset");
    model_flags(fit);
    text_flag(fit, "--team", "team", "members joined by '+' (default: every teammate)");

    auto* teams = app.add_subcommand("teams", "cross-validate every selected team");
    model_flags(teams);
    text_flag(teams, "--teams", "teams", "'all' or comma-separated teams of '+'-joined members");
    text_flag(teams, "--must-include", "must_include", "keep only teams containing this teammate");
    text_flag(teams, "--permutations", "permutations", "shuffles in the chance-level control");

    auto* simulate = app.add_subcommand("simulate", "draw a synthetic dataset from the latent-score model");
    text_flag(simulate, "--cases", "cases", "number of test cases");

    auto* report = app.add_subcommand("report", "calibration, diversity and significance tables");
    text_flag(report, "--results", "results", "teams.json from a previous run");
    text_flag(report, "--compare", "compare", "second teams.json to test against --results");
    text_flag(report, "--with-without", "with_without", "compare teams with and without this teammate");
    text_flag(report, "--unit", "unit", "unit of analysis: teams or instances");
    text_flag(report, "--tail", "tail", "greater or two-sided");
    text_flag(report, "--bins", "bins", "equal-count calibration bins");
    text_flag(report, "--edges", "edges", "comma-separated calibration bin edges");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    const auto handler = set_warning_handler([&err](std::string_view msg) { err << "warning: " << msg << '\n'; });
    int code = kExitOk;
    try {
        const std::string command = app.get_subcommands().front()->get_name();
        Run run = prepare(command, flags, config_path);
        run.out = &out;
        if (command == "fit") cmd_fit(run);
        if (command == "teams") cmd_teams(run);
        if (command == "simulate") cmd_simulate(run);
        if (command == "report") cmd_report(run);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        code = exit_code_for(e);
    }
    set_warning_handler(handler);
    return code;
}

}  // namespace teamfuse
