#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "teamfuse/errors.hpp"

using namespace teamfuse;
using teamfuse::testing::fixture;

namespace {

const char* kTruth2 = "test_case,true_label\na,0\nb,1\n";

bool same_judgments(const Dataset& x, const Dataset& y) {
    if (x.judgments().size() != y.judgments().size()) return false;
    for (std::size_t i = 0; i < x.judgments().size(); ++i) {
        const auto& a = x.judgments()[i];
        const auto& b = y.judgments()[i];
        if (a.test_case != b.test_case || a.teammate != b.teammate || a.kind != b.kind || a.choice != b.choice ||
            a.confidence != b.confidence || a.class_scores != b.class_scores) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("minimal CSV loads four judgments") {
    const Dataset d = parse_csv_dataset(
        "test_case,teammate,kind,choice,confidence\na,h,human,0,2\na,m,machine,0,0.8\nb,h,human,1,1\nb,m,machine,0,0.6\n",
        kTruth2);
    CHECK(d.judgments().size() == 4);
    CHECK(d.num_classes() == 2);
    CHECK(d.teammates() == std::vector<std::string>{"h", "m"});
    CHECK(d.instances().size() == 2);
    CHECK(d.truth_of("b") == 1);
}

TEST_CASE("choice outside the label range names the row") {
    try {
        parse_csv_dataset("test_case,teammate,kind,choice,confidence\na,h,human,0,2\nb,h,human,5,1\n", kTruth2, 2);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("choice 5") != std::string::npos);
    }
}

TEST_CASE("loader rejects malformed and inconsistent input") {
    const std::string header = "test_case,teammate,kind,choice,confidence\n";
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,h,human,x,2\n", kTruth2), ParseError);
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,h,robot,0,2\n", kTruth2), ParseError);
    CHECK_THROWS_AS(parse_csv_dataset(header + "z,h,human,0,2\n", kTruth2), ValidationError);
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,h,human,0,-1\n", kTruth2), ValidationError);
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,m,machine,0,1\na,m,machine,1,1\n", kTruth2), ValidationError);
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,h,human,0,2\na,h,machine,0,2\n", kTruth2), ValidationError);
    CHECK_THROWS_AS(parse_csv_dataset("case,who\n", kTruth2), ParseError);
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,h,human,0,2\n", "test_case,true_label\na,0\na,1\n"),
                    ValidationError);
}

TEST_CASE("class scores must agree with the choice") {
    const std::string header = "test_case,teammate,kind,choice,confidence,score_0,score_1,score_2\n";
    const char* truth = "test_case,true_label\na,2\n";
    const Dataset ok = parse_csv_dataset(header + "a,m,machine,2,0.6,0.1,0.3,0.6\n", truth);
    CHECK(ok.num_classes() == 3);
    CHECK(ok.judgments()[0].class_scores == std::vector<double>{0.1, 0.3, 0.6});
    CHECK_THROWS_AS(parse_csv_dataset(header + "a,m,machine,0,0.6,0.1,0.3,0.6\n", truth), ValidationError);
}

TEST_CASE("human replicates become separate instances and machines are shared") {
    const Dataset d = teamfuse::testing::tiny_dataset();
    CHECK(d.test_cases().size() == 4);
    CHECK(d.instances().size() == 5);
    const auto c2 = d.instances_of_case(*d.find_case("c2"));
    REQUIRE(c2.size() == 2);
    const std::size_t machine = d.teammate_index("machine");
    const std::size_t human = d.teammate_index("human");
    CHECK(d.lookup(c2[0], machine) == d.lookup(c2[1], machine));
    CHECK(d.lookup(c2[0], human) != d.lookup(c2[1], human));
    CHECK(d.lookup(c2[1], human)->confidence == 2.0);
}

TEST_CASE("unknown teammate lists the known ones") {
    const Dataset d = teamfuse::testing::tiny_dataset();
    try {
        d.teammate_index("nobody");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("human, machine") != std::string::npos);
    }
    CHECK_THROWS_AS(make_team(d, {"human", "human"}), ValidationError);
    CHECK_THROWS_AS(make_team(d, {}), ValidationError);
    CHECK(team_label(d, make_team(d, {"machine", "human"})) == "human+machine");
}

TEST_CASE("BrainBench-shaped file has four teammates and 803 judgments") {
    LoadOptions options;
    options.truth = fixture("brainbench_shaped_truth.csv");
    const Dataset d = load_dataset(fixture("brainbench_shaped_judgments.csv"), options);
    CHECK(d.test_cases().size() == 100);
    CHECK(d.teammates() == std::vector<std::string>{"human", "llm7b", "llm13b", "llm70b"});
    CHECK(d.judgments_of(d.teammate_index("human")).size() == 503);
    CHECK(d.instances().size() == 503);
    for (const char* llm : {"llm7b", "llm13b", "llm70b"}) CHECK(d.judgments_of(d.teammate_index(llm)).size() == 100);
}

TEST_CASE("judgments CSV without truth file is rejected and missing files are named") {
    CHECK_THROWS_AS(load_dataset(fixture("tiny_judgments.csv")), ValidationError);
    LoadOptions options;
    options.truth = fixture("tiny_truth.csv");
    try {
        load_dataset(fixture("does_not_exist.csv"), options);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("does_not_exist.csv") != std::string::npos);
    }
}

TEST_CASE("CSV and JSON round trips preserve judgments, truth and class count") {
    const Dataset d = teamfuse::testing::tiny_dataset();
    const Dataset csv = parse_csv_dataset(judgments_csv(d), truth_csv(d));
    const Dataset json = parse_json_dataset(dataset_json(d));
    for (const Dataset* other : {&csv, &json}) {
        CHECK(same_judgments(d, *other));
        CHECK(other->num_classes() == d.num_classes());
        CHECK(other->test_cases() == d.test_cases());
        for (std::size_t c = 0; c < d.test_cases().size(); ++c) CHECK(other->truth(c) == d.truth(c));
    }
}

TEST_CASE("round trip keeps full float precision") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string rows = "test_case,teammate,kind,choice,confidence\n";
    for (int i = 0; i < 50; ++i) {
        rows += "case" + std::to_string(i) + ",m,machine,0," + format_double(u(rng) * 1e3) + '\n';
    }
    std::string truth = "test_case,true_label\n";
    for (int i = 0; i < 50; ++i) truth += "case" + std::to_string(i) + ",0\n";
    const Dataset d = parse_csv_dataset(rows, truth, 2);
    CHECK(same_judgments(d, parse_csv_dataset(judgments_csv(d), truth_csv(d))));
}

TEST_CASE("format_double is the shortest exact representation") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        CHECK(parse_double(format_double(v)) == v);
    }
}

TEST_CASE("discretize_confidence uses cutpoints 33 and 66") {
    CHECK(discretize_confidence(33) == 0);
    CHECK(discretize_confidence(34) == 1);
    CHECK(discretize_confidence(66) == 1);
    CHECK(discretize_confidence(66.5) == 2);
    CHECK(discretize_confidence(100) == 2);
    CHECK(discretize_confidence(1) == 0);
    CHECK_THROWS_AS(discretize_confidence(101), InputError);
    CHECK_THROWS_AS(discretize_confidence(-1), InputError);
    CHECK_THROWS_AS(discretize_confidence(std::nan("")), InputError);
    std::string captured;
    const auto old = set_warning_handler([&](std::string_view m) { captured = m; });
    CHECK(discretize_confidence(0) == 0);
    set_warning_handler(old);
    CHECK_FALSE(captured.empty());
}

TEST_CASE("discretize_confidence is monotone") {
    int last = 0;
    for (double raw = 1.0; raw <= 100.0; raw += 0.25) {
        const int r = discretize_confidence(raw);
        CHECK(r >= last);
        last = r;
    }
}

TEST_CASE("perplexity choice and confidence") {
    auto a = perplexity_to_choice_confidence(10.0, 12.5);
    CHECK(a.choice == 0);
    CHECK(a.confidence == doctest::Approx(2.5));
    CHECK_FALSE(a.tie);
    auto b = perplexity_to_choice_confidence(12.5, 10.0);
    CHECK(b.choice == 1);
    CHECK(b.confidence == doctest::Approx(2.5));
    auto c = perplexity_to_choice_confidence(7.0, 7.0);
    CHECK(c.choice == 0);
    CHECK(c.confidence == 0.0);
    CHECK(c.tie);
    CHECK_THROWS_AS(perplexity_to_choice_confidence(INFINITY, 1.0), InputError);
}

TEST_CASE("softmax_scores values") {
    const std::vector<double> zero{0.0, 0.0};
    CHECK(softmax_scores(zero) == std::vector<double>{0.5, 0.5});
    const std::vector<double> q{0.0, std::log(3.0)};
    const auto p = softmax_scores(q);
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));
    const std::vector<double> huge{1000.0, 1001.0, 999.0};
    const auto h = softmax_scores(huge);
    CHECK(std::isfinite(h[0]));
    CHECK(h[2] > h[0]);
    CHECK_THROWS_AS(softmax_scores(std::vector<double>{}), InputError);
}

TEST_CASE("softmax_scores is shift invariant and permutation equivariant") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> q(static_cast<std::size_t>(2 + trial % 5));
        for (auto& v : q) v = n(rng);
        const auto p = softmax_scores(q);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        auto shifted = q;
        const double c = n(rng) * 100.0;
        for (auto& v : shifted) v += c;
        const auto ps = softmax_scores(shifted);
        for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(ps[i] - p[i]) < 1e-12);
        std::vector<std::size_t> perm(q.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> qp(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) qp[i] = q[perm[i]];
        const auto pp = softmax_scores(qp);
        for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(pp[i] - p[perm[i]]) < 1e-15);
    }
}
