#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "teamfuse/bayes.hpp"
#include "teamfuse/errors.hpp"
#include "teamfuse/features.hpp"

using namespace teamfuse;

namespace {

Judgment judgment(Kind kind, int choice, double confidence) {
    Judgment j;
    j.test_case = "c";
    j.teammate = kind == Kind::human ? "human" : "machine";
    j.kind = kind;
    j.choice = choice;
    j.confidence = confidence;
    return j;
}

}  // namespace

TEST_CASE("signed confidence") {
    CHECK(signed_confidence(judgment(Kind::human, 0, 2.0)) == 2.0);
    CHECK(signed_confidence(judgment(Kind::human, 1, 2.0)) == -2.0);
    CHECK(signed_confidence(judgment(Kind::machine, 1, 2.5)) == -2.5);
    CHECK_THROWS_AS(signed_confidence(judgment(Kind::machine, 2, 1.0)), InputError);
}

TEST_CASE("signed confidence flips sign, not magnitude") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int i = 0; i < 200; ++i) {
        const double c = u(rng);
        const double a = signed_confidence(judgment(Kind::machine, 0, c));
        const double b = signed_confidence(judgment(Kind::machine, 1, c));
        CHECK(a == -b);
        CHECK(std::abs(a) == c);
    }
}

TEST_CASE("squash values and limits") {
    CHECK(squash(3.0, 0.0) == 3.0);
    CHECK(squash(1.0, 7.0) == 1.0);
    CHECK(squash(3.0, 1.0) == doctest::Approx(1.0 + 2.0 / 3.0).epsilon(1e-15));
    CHECK(std::abs(squash(40.0, 1e6) - 1.0) < 1e-4);
    CHECK(std::abs(squash(0.0, 1e6) - 1.0) < 1e-4);
    CHECK_THROWS_AS(squash(2.0, -0.1), ConfigError);
}

TEST_CASE("squash is monotone in x and contracts toward 1") {
    for (double alpha : {0.0, 0.01, 0.5, 3.0, 100.0}) {
        double last = -INFINITY;
        for (double x = 0.0; x <= 20.0; x += 0.05) {
            const double f = squash(x, alpha);
            CHECK(f > last);
            CHECK(std::abs(f - 1.0) <= std::abs(x - 1.0) + 1e-15);
            last = f;
        }
    }
}

TEST_CASE("design shape for one predictor per teammate and interactions") {
    const Dataset d = teamfuse::testing::tiny_dataset();
    const TeamSpec team = make_team(d, {"human", "machine"});
    FeatureConfig cfg;
    const Design plain = build_design(d, team, cfg);
    CHECK(plain.width() == 2);
    CHECK(plain.names == std::vector<std::string>{"human", "machine"});
    CHECK(plain.rows.size() == 5);
    cfg.expansion = Expansion::interactions;
    const Design inter = build_design(d, team, cfg);
    REQUIRE(inter.width() == 3);
    CHECK(inter.names[2] == "human*machine");
    for (const auto& row : inter.rows) CHECK(row.x[2] == row.x[0] * row.x[1]);
    cfg.expansion = Expansion::polynomial;
    const Design poly = build_design(d, team, cfg);
    CHECK(poly.names == std::vector<std::string>{"human", "machine", "human^2", "human*machine", "machine^2"});
}

TEST_CASE("design rows hold signed confidences and binary targets") {
    const Dataset d = teamfuse::testing::tiny_dataset();
    const TeamSpec team = make_team(d, {"human", "machine"});
    const Design design = build_design(d, team, FeatureConfig{});
    // c1: human 0 @2, machine 0 @0.9, truth 0.
    CHECK(design.rows[0].x == std::vector<double>{2.0, 0.9});
    CHECK(design.rows[0].target == 1);
    // c2 replicate 1: human 1 @1, machine 1 @0.4, truth 1.
    CHECK(design.rows[1].x == std::vector<double>{-1.0, -0.4});
    CHECK(design.rows[1].target == 0);
    FeatureConfig nc;
    nc.mode = ConfidenceMode::no_confidence;
    const Design flat = build_design(d, team, nc);
    CHECK(flat.rows[1].x == std::vector<double>{-1.0, -1.0});
    // Rating 0 keeps its choice sign once confidence is dropped.
    CHECK(flat.rows[3].x[0] == 1.0);
}

TEST_CASE("no-confidence equals confidence when every confidence is 1") {
    const Dataset d = parse_csv_dataset(
        "test_case,teammate,kind,choice,confidence\na,h,human,0,1\na,m,machine,1,1\nb,h,human,1,1\nb,m,machine,1,1\n",
        "test_case,true_label\na,0\nb,1\n");
    const TeamSpec team = make_team(d, {"h", "m"});
    FeatureConfig cfg;
    FeatureConfig nc;
    nc.mode = ConfidenceMode::no_confidence;
    const Design a = build_design(d, team, cfg);
    const Design b = build_design(d, team, nc);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].x == b.rows[i].x);
}

TEST_CASE("squash alpha 0 is the identity and 1e6 reaches no-confidence") {
    const Dataset d = generate(BayesParams{}, 80, 2, 4);
    const TeamSpec team = make_team(d, {"human", "machine"});
    FeatureConfig conf;
    FeatureConfig nc;
    nc.mode = ConfidenceMode::no_confidence;
    FeatureConfig s0;
    s0.mode = ConfidenceMode::squash;
    FeatureConfig sbig = s0;
    sbig.default_alpha = 1e6;
    const Design dc = build_design(d, team, conf);
    const Design dn = build_design(d, team, nc);
    const Design d0 = build_design(d, team, s0);
    const Design db = build_design(d, team, sbig);
    for (std::size_t i = 0; i < dc.rows.size(); ++i) {
        CHECK(d0.rows[i].x == dc.rows[i].x);
        for (std::size_t k = 0; k < dn.rows[i].x.size(); ++k) CHECK(std::abs(db.rows[i].x[k] - dn.rows[i].x[k]) < 1e-4);
    }
}

TEST_CASE("per-teammate squash alpha") {
    FeatureConfig cfg;
    cfg.mode = ConfidenceMode::squash;
    cfg.default_alpha = 2.0;
    cfg.alpha["human"] = 0.0;
    CHECK(cfg.alpha_for("human") == 0.0);
    CHECK(cfg.alpha_for("machine") == 2.0);
    cfg.alpha["machine"] = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    FeatureConfig bad;
    bad.expansion = Expansion::interactions;
    bad.degree = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("multiclass features put human mass on the chosen class") {
    Judgment h = judgment(Kind::human, 2, 1.0);
    CHECK(judgment_features(h, 4, ConfidenceMode::confidence, 0.0) == std::vector<double>{0, 0, 1.0, 0});
    Judgment m = judgment(Kind::machine, 1, 0.7);
    m.class_scores = {0.1, 0.7, 0.2};
    CHECK(judgment_features(m, 3, ConfidenceMode::confidence, 0.0) == std::vector<double>{0.1, 0.7, 0.2});
    CHECK(judgment_features(m, 3, ConfidenceMode::no_confidence, 0.0) == std::vector<double>{0, 1.0, 0});
}

TEST_CASE("missing judgments are imputed with a warning or rejected in strict mode") {
    const Dataset d = parse_csv_dataset(
        "test_case,teammate,kind,choice,confidence\na,h,human,0,2\na,m,machine,1,1\nb,h,human,1,1\n",
        "test_case,true_label\na,0\nb,1\n");
    const TeamSpec team = make_team(d, {"h", "m"});
    int warnings = 0;
    const auto old = set_warning_handler([&](std::string_view) { ++warnings; });
    const Design design = build_design(d, team, FeatureConfig{});
    set_warning_handler(old);
    CHECK(warnings == 1);
    CHECK(design.imputed == 1);
    CHECK(design.rows[1].x == std::vector<double>{-1.0, 0.0});
    FeatureConfig strict;
    strict.strict = true;
    CHECK_THROWS_AS(build_design(d, team, strict), ValidationError);
}

TEST_CASE("design is reproducible") {
    const Dataset d = generate(BayesParams{}, 50, 2, 9);
    const TeamSpec team = make_team(d, {"human", "machine"});
    FeatureConfig cfg;
    cfg.expansion = Expansion::polynomial;
    cfg.degree = 3;
    const Design a = build_design(d, team, cfg);
    const Design b = build_design(d, team, cfg);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].x == b.rows[i].x);
}
