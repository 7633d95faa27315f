#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "teamfuse/cli.hpp"
#include "teamfuse/config.hpp"
#include "teamfuse/evaluation.hpp"

using namespace teamfuse;
using teamfuse::testing::fixture;
using teamfuse::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> bb_data() {
    return {"--data", fixture("brainbench_shaped_judgments.csv").string(), "--truth",
            fixture("brainbench_shaped_truth.csv").string()};
}

std::vector<std::string> tiny_data() {
    return {"--data", fixture("tiny_judgments.csv").string(), "--truth", fixture("tiny_truth.csv").string()};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::size_t data_rows(const fs::path& csv) {
    std::ifstream in(csv);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') ++n;
    }
    return n - 1;
}

}  // namespace

TEST_CASE("help and usage errors") {
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"fit", "--no-such-flag"}).code == kExitUsage);
    const auto dir = scratch_dir("cli_usage");
    auto missing_seed = run(concat({"fit", "--out", dir.string()}, tiny_data()));
    CHECK(missing_seed.code == kExitUsage);
    CHECK(missing_seed.err.find("--seed") != std::string::npos);
    CHECK(run(concat({"fit", "--seed", "1", "--model", "forest", "--out", dir.string()}, tiny_data())).code ==
          kExitUsage);
}

TEST_CASE("fit writes named weights") {
    const auto dir = scratch_dir("cli_fit");
    const auto r = run(concat({"fit", "--seed", "3", "--team", "human+machine", "--out", dir.string()}, tiny_data()));
    REQUIRE(r.code == kExitOk);
    const auto doc = nlohmann::json::parse(read_text_file(dir / "model.json"));
    const std::string text = doc.dump();
    for (const char* name : {"\"human\"", "\"machine\"", "\"intercept\""}) CHECK(text.find(name) != std::string::npos);
    CHECK(doc.at("metadata").at("seed") == 3);
    CHECK(doc.at("metadata").at("config_hash").get<std::string>().size() == 16);
    const std::string weights = read_text_file(dir / "weights.txt");
    CHECK(weights.rfind("# teamfuse fit seed=3 config_hash=", 0) == 0);
}

TEST_CASE("unknown teammate exits 2 and lists the known teammates") {
    const auto dir = scratch_dir("cli_unknown");
    const auto r = run(concat({"fit", "--seed", "1", "--team", "human+robot", "--out", dir.string()}, tiny_data()));
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("human, machine") != std::string::npos);
}

TEST_CASE("missing input file exits 1 naming the file") {
    const auto dir = scratch_dir("cli_missing");
    const auto r = run({"report", "--seed", "1", "--data", "/nonexistent/judgments.csv", "--truth",
                        fixture("tiny_truth.csv").string(), "--out", dir.string()});
    CHECK(r.code == kExitRuntime);
    CHECK(r.err.find("/nonexistent/judgments.csv") != std::string::npos);
    const auto results = run({"report", "--seed", "1", "--results", "/nonexistent/teams.json", "--out", dir.string()});
    CHECK(results.code == kExitRuntime);
    CHECK(results.err.find("/nonexistent/teams.json") != std::string::npos);
}

TEST_CASE("teams enumerates all fifteen teams of four teammates") {
    const auto dir = scratch_dir("cli_teams_all");
    REQUIRE(run(concat({"teams", "--seed", "1", "--teams", "all", "--permutations", "5", "--out", dir.string()},
                       bb_data()))
                .code == kExitOk);
    CHECK(data_rows(dir / "teams.csv") == 15);
    const auto reports = reports_from_json(read_text_file(dir / "teams.json"));
    CHECK(reports.size() == 15);
    for (std::size_t i = 1; i < reports.size(); ++i) CHECK(reports[i - 1].size() <= reports[i].size());
    for (const auto& r : reports) CHECK(r.n_evaluations == 503);

    const auto must = scratch_dir("cli_teams_must");
    REQUIRE(run(concat({"teams", "--seed", "1", "--must-include", "human", "--permutations", "5", "--out",
                        must.string()},
                       bb_data()))
                .code == kExitOk);
    CHECK(data_rows(must / "teams.csv") == 8);
}

TEST_CASE("no-confidence variant is selectable") {
    const auto dir = scratch_dir("cli_noconf");
    REQUIRE(run(concat({"teams", "--seed", "1", "--teams", "human+llm70b", "--mode", "no_confidence",
                        "--permutations", "5", "--out", dir.string()},
                       bb_data()))
                .code == kExitOk);
    const std::string csv = read_text_file(dir / "teams.csv");
    CHECK(csv.find("logistic:no_confidence") != std::string::npos);
}

TEST_CASE("simulate writes a loadable three-teammate dataset") {
    const auto dir = scratch_dir("cli_sim");
    const auto cfg = dir / "sim.cfg";
    write_text_file(cfg,
                    "cases = 200\n"
                    "sim.teammates = m1, m2, human\n"
                    "sim.m1.kind = machine\nsim.m1.a = 2\n"
                    "sim.m2.kind = machine\nsim.m2.a = 2\n"
                    "sim.human.kind = human\nsim.human.a = 1.5\nsim.human.instances = 2-4\n"
                    "sim.rho.m1.m2 = 0.9\n");
    const auto out = dir / "out";
    REQUIRE(run({"simulate", "--config", cfg.string(), "--seed", "5", "--out", out.string()}).code == kExitOk);
    LoadOptions o;
    o.truth = out / "truth.csv";
    const Dataset d = load_dataset(out / "judgments.csv", o);
    CHECK(d.teammates().size() == 3);
    CHECK(d.test_cases().size() == 200);
    const auto sim = nlohmann::json::parse(read_text_file(out / "simulation.json"));
    CHECK(sim.at("metadata").at("seed") == 5);
    CHECK(sim.at("correlation")[0][1] == 0.9);

    const auto rep = dir / "report";
    REQUIRE(run({"report", "--seed", "5", "--data", (out / "judgments.csv").string(), "--truth",
                 (out / "truth.csv").string(), "--out", rep.string()})
                .code == kExitOk);
    const std::string div = read_text_file(rep / "diversity.csv");
    std::istringstream lines(div);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(split(line, ','));
    }
    REQUIRE(rows.size() == 4);
    const double mm = std::stod(rows[1][2]);
    const double mh = std::stod(rows[1][3]);
    CHECK(mm > mh);

    CHECK(run({"simulate", "--seed", "5", "--out", out.string(), "--config", cfg.string(), "--cases", "0"}).code ==
          kExitUsage);
    write_text_file(cfg, "sim.teammates = a\nsim.a.kind = machine\nsim.a.sigma = -1\n");
    CHECK(run({"simulate", "--config", cfg.string(), "--seed", "5", "--out", out.string()}).code == kExitUsage);
    write_text_file(cfg, "sim.teammates = a\nsim.b.kind = machine\n");
    CHECK(run({"simulate", "--config", cfg.string(), "--seed", "5", "--out", out.string()}).code == kExitUsage);
}

TEST_CASE("report emits all tables and self-comparison gives t = 0") {
    const auto dir = scratch_dir("cli_report");
    const auto teams = dir / "teams";
    REQUIRE(run(concat({"teams", "--seed", "2", "--permutations", "5", "--out", teams.string()}, bb_data())).code ==
            kExitOk);
    const auto rep = dir / "report";
    const std::string results = (teams / "teams.json").string();
    REQUIRE(run(concat({"report", "--seed", "2", "--results", results, "--compare", results, "--with-without",
                        "human", "--out", rep.string()},
                       bb_data()))
                .code == kExitOk);
    for (const char* f : {"calibration_human.csv", "calibration_llm7b.csv", "diversity.csv", "tests.csv", "plot.csv"}) {
        CHECK(fs::exists(rep / f));
        CHECK(read_text_file(rep / f).rfind("# teamfuse report seed=2 config_hash=", 0) == 0);
    }
    CHECK(data_rows(rep / "plot.csv") == 15);
    const std::string tests = read_text_file(rep / "tests.csv");
    CHECK(tests.find("\nA vs B,welch,teams,greater,15,15,0,") != std::string::npos);
    CHECK(tests.find("with human vs without") != std::string::npos);

    const auto edges = dir / "edges";
    REQUIRE(run(concat({"report", "--seed", "2", "--edges", "33,66", "--out", edges.string()}, bb_data())).code ==
            kExitOk);
    CHECK(data_rows(edges / "calibration_human.csv") == 3);
}

TEST_CASE("reruns are byte-identical and the hash ignores the output directory") {
    const auto dir = scratch_dir("cli_determinism");
    auto teams = [&](const std::string& sub, const std::string& jobs) {
        return run(concat({"teams", "--seed", "9", "--teams", "human+llm7b,llm13b+llm70b", "--mode", "squash",
                           "--permutations", "10", "--jobs", jobs, "--out", (dir / sub).string()},
                          bb_data()));
    };
    REQUIRE(teams("a", "1").code == kExitOk);
    REQUIRE(teams("b", "3").code == kExitOk);
    for (const char* f : {"teams.csv", "teams.json"}) CHECK(read_text_file(dir / "a" / f) == read_text_file(dir / "b" / f));
    REQUIRE(run(concat({"teams", "--seed", "10", "--teams", "human+llm7b", "--permutations", "10", "--out",
                        (dir / "c").string()},
                       bb_data()))
                .code == kExitOk);
    CHECK(read_text_file(dir / "a" / "teams.csv").substr(0, 60) != read_text_file(dir / "c" / "teams.csv").substr(0, 60));
}

TEST_CASE("config file values are overridden by flags") {
    const auto dir = scratch_dir("cli_config");
    write_text_file(dir / "run.cfg", "seed = 4\nmodel = logistic\nmode = no_confidence\nteam = human+machine\n");
    REQUIRE(run(concat({"fit", "--config", (dir / "run.cfg").string(), "--mode", "confidence", "--out",
                        (dir / "o").string()},
                       tiny_data()))
                .code == kExitOk);
    const auto doc = nlohmann::json::parse(read_text_file(dir / "o" / "model.json"));
    CHECK(doc.at("metadata").at("settings").at("mode") == "confidence");
    CHECK(doc.at("metadata").at("seed") == 4);
    write_text_file(dir / "bad.cfg", "seed = 4\ncolour = blue\n");
    CHECK(run(concat({"fit", "--config", (dir / "bad.cfg").string(), "--out", (dir / "o").string()}, tiny_data()))
              .code == kExitUsage);
}
