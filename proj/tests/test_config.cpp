#include <gtest/gtest.h>

#include "pirl/config.hpp"

using namespace pirl;

static const char* kDoc = R"(
# oval scenario
[scenario]
seed = 7
target_speed_kph = 70
checkpoints = 0:220, 2:450, 0:680

[planner]
branching = 4
horizon = 6.0
)";

TEST(Config, ParseSectionsAndTypes) {
    Config cfg = Config::parse(kDoc);
    EXPECT_EQ(cfg.get_u64("scenario.seed", 0), 7u);
    EXPECT_DOUBLE_EQ(cfg.get_double("scenario.target_speed_kph", 0.0), 70.0);
    EXPECT_EQ(cfg.get_int("planner.branching", 0), 4);
    auto cps = cfg.get_list("scenario.checkpoints");
    ASSERT_EQ(cps.size(), 3u);
    EXPECT_EQ(cps[1], "2:450");
    EXPECT_EQ(cfg.get_string("missing.key", "dflt"), "dflt");
}

TEST(Config, Errors) {
    EXPECT_THROW(Config::parse("[s]\nnot a pair\n"), ConfigError);
    Config cfg = Config::parse("[a]\nx = abc\n");
    EXPECT_THROW(cfg.get_double("a.x", 0.0), ConfigError);
    EXPECT_THROW(cfg.require_string("a.missing"), ConfigError);
}

TEST(Config, FingerprintIsOrderIndependent) {
    Config a = Config::parse("[s]\nx = 1\ny = 2\n");
    Config b = Config::parse("[s]\ny = 2\nx = 1\n");
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    Config c = Config::parse("[s]\nx = 1\ny = 3\n");
    EXPECT_NE(a.fingerprint(), c.fingerprint());
}
