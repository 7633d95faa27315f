#include "doctest.h"
#include "teamfuse/config.hpp"
#include "teamfuse/errors.hpp"

using namespace teamfuse;

TEST_CASE("settings file syntax") {
    const Settings s = Settings::parse(
        "# run settings\n"
        "model = logistic\n"
        "  mode=squash   # per-teammate alpha below\n"
        "alpha.human = 0.5\n"
        "\n"
        "out = \"results # 1\"\n"
        "alpha_grid = 0, 0.1, 1\n");
    CHECK(s.get("model", "") == "logistic");
    CHECK(s.get("mode", "") == "squash");
    CHECK(s.get_double("alpha.human", 0.0) == 0.5);
    CHECK(s.get("out", "") == "results # 1");
    CHECK(s.get_doubles("alpha_grid", {}) == std::vector<double>{0.0, 0.1, 1.0});
    CHECK(s.with_prefix("alpha.") == std::map<std::string, std::string>{{"human", "0.5"}});
    CHECK_FALSE(s.find("seed").has_value());
}

TEST_CASE("settings errors name the key or line") {
    CHECK_THROWS_AS(Settings::parse("model logistic\n"), ConfigError);
    CHECK_THROWS_AS(Settings::parse("a = 1\na = 2\n"), ConfigError);
    const Settings s = Settings::parse("jobs = many\nstrict = maybe\n");
    try {
        s.get_int("jobs", 0);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("jobs") != std::string::npos);
    }
    CHECK_THROWS_AS(s.get_bool("strict", false), ConfigError);
    CHECK_THROWS_AS(s.get_u64("seed"), ConfigError);
    CHECK_THROWS_AS(s.check_known({"jobs"}, {}), ConfigError);
    CHECK_NOTHROW(s.check_known({"jobs", "strict"}, {}));
    CHECK_THROWS_AS(Settings::load("/nonexistent/teamfuse.cfg"), Error);
}

TEST_CASE("flags override the file and canonical text is order independent") {
    Settings file = Settings::parse("seed = 1\nmodel = bayes\nout = a\n");
    Settings flags;
    flags.set("model", "logistic");
    file.merge(flags);
    CHECK(file.get("model", "") == "logistic");
    Settings other;
    other.set("out", "b");
    other.set("model", "logistic");
    other.set("seed", "1");
    CHECK(file.canonical({"out"}) == other.canonical({"out"}));
    CHECK(file.canonical() != other.canonical());
    CHECK(file.canonical({"out"}) == "model=logistic\nseed=1\n");
}

TEST_CASE("typed getters") {
    Settings s;
    s.set("a", "yes");
    s.set("b", "off");
    s.set("n", "18446744073709551615");
    CHECK(s.get_bool("a", false));
    CHECK_FALSE(s.get_bool("b", true));
    CHECK(s.get_u64("n") == 18446744073709551615ull);
    CHECK(s.get_int("missing", 7) == 7);
}

TEST_CASE("hashing helpers") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
    CHECK(hex64(0xabcull) == "0000000000000abc");
    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(trim_view("  x y \t") == "x y");
}
