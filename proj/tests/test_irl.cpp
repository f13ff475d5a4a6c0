#include <gtest/gtest.h>

#include "pirl/irl.hpp"

using namespace pirl;
using namespace pirl::irl;

namespace {

std::vector<std::vector<double>> random_features(Rng& rng, int n, int k) {
    std::vector<std::vector<double>> f(static_cast<std::size_t>(n));
    for (auto& row : f) {
        row.resize(static_cast<std::size_t>(k));
        for (double& v : row) v = rng.uniform(0.0, 4.0);
    }
    return f;
}

std::vector<double> random_theta(Rng& rng, int k, double lo = 0.0, double hi = 1.0) {
    std::vector<double> t(static_cast<std::size_t>(k));
    for (double& v : t) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST(PolicyDistribution, ZeroThetaIsUniform) {
    Rng rng(3);
    auto f = random_features(rng, 8, 5);
    auto d = policy_distribution(f, std::vector<double>(5, 0.0));
    for (double p : d.probabilities) EXPECT_NEAR(p, 1.0 / 8.0, 1e-12);
}

TEST(PolicyDistribution, IdenticalFeaturesSplitEvenly) {
    std::vector<std::vector<double>> f = {{1.0, 2.0}, {1.0, 2.0}};
    auto d = policy_distribution(f, {0.7, 0.3});
    EXPECT_NEAR(d.probabilities[0], 0.5, 1e-12);
    EXPECT_NEAR(d.probabilities[1], 0.5, 1e-12);
}

TEST(PolicyDistribution, ClosedFormTwoPolicies) {
    std::vector<std::vector<double>> f = {{0.0}, {1.0}};
    auto d = policy_distribution(f, {std::log(2.0)});
    EXPECT_NEAR(d.probabilities[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(d.probabilities[1], 1.0 / 3.0, 1e-12);
}

TEST(PolicyDistribution, SimplexAndStability) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto f = random_features(rng, rng.uniform_int(1, 30), 15);
        auto theta = random_theta(rng, 15, 0.0, 50.0);  // large weights stress exp
        auto d = policy_distribution(f, theta);
        double sum = 0.0;
        for (double p : d.probabilities) {
            EXPECT_GE(p, 0.0);
            EXPECT_TRUE(std::isfinite(p));
            sum += p;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(PolicyDistribution, ShiftInvariance) {
    Rng rng(6);
    auto f = random_features(rng, 12, 7);
    auto theta = random_theta(rng, 7);
    auto base = policy_distribution(f, theta);
    // add the same feature vector to every policy: all logits shift equally
    std::vector<double> delta = random_theta(rng, 7, -1.0, 1.0);
    for (auto& row : f)
        for (std::size_t k = 0; k < row.size(); ++k) row[k] += delta[k];
    auto shifted = policy_distribution(f, theta);
    for (std::size_t i = 0; i < base.probabilities.size(); ++i)
        EXPECT_NEAR(base.probabilities[i], shifted.probabilities[i], 1e-12);
}

TEST(PolicyDistribution, EmptySetThrows) {
    std::vector<std::vector<double>> f;
    EXPECT_THROW(policy_distribution(f, {1.0}), DimensionError);
}

TEST(LogLikelihood, SingletonIsZero) {
    std::vector<std::vector<double>> f = {{0.3, 0.4}};
    EXPECT_NEAR(log_likelihood(f, 0, {1.0, 2.0}), 0.0, 1e-12);
}

TEST(LogLikelihood, UniformFour) {
    Rng rng(7);
    auto f = random_features(rng, 4, 3);
    EXPECT_NEAR(log_likelihood(f, 2, std::vector<double>(3, 0.0)), std::log(0.25), 1e-12);
}

TEST(LogLikelihood, ExpMatchesDirectRatio) {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        auto f = random_features(rng, rng.uniform_int(2, 12), 6);
        auto theta = random_theta(rng, 6);
        int demo = rng.uniform_int(0, static_cast<int>(f.size()) - 1);
        double ll = log_likelihood(f, demo, theta);
        EXPECT_LE(ll, 1e-12);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            double e = std::exp(-std::inner_product(theta.begin(), theta.end(), f[i].begin(), 0.0));
            den += e;
            if (static_cast<int>(i) == demo) num = e;
        }
        EXPECT_NEAR(std::exp(ll), num / den, 1e-12);
    }
}

TEST(MaxEntGradient, SingletonIsZero) {
    std::vector<std::vector<double>> f = {{0.3, 0.4}};
    auto g = maxent_gradient(f, 0, {1.0, 2.0});
    EXPECT_NEAR(g[0], 0.0, 1e-15);
    EXPECT_NEAR(g[1], 0.0, 1e-15);
}

TEST(MaxEntGradient, TwoPolicyHandValue) {
    std::vector<std::vector<double>> f = {{0.0}, {1.0}};
    auto g = maxent_gradient(f, 0, {0.0});
    EXPECT_NEAR(g[0], 0.5, 1e-12);
}

TEST(MaxEntGradient, MatchesFiniteDifferences) {
    Rng rng(9);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        int n = rng.uniform_int(2, 16);
        auto f = random_features(rng, n, 15);
        auto theta = random_theta(rng, 15, 0.05, 1.0);
        int demo = rng.uniform_int(0, n - 1);
        auto g = maxent_gradient(f, demo, theta);
        for (int k = 0; k < 15; ++k) {
            auto tp = theta, tm = theta;
            tp[static_cast<std::size_t>(k)] += h;
            tm[static_cast<std::size_t>(k)] -= h;
            double fd = (log_likelihood(f, demo, tp) - log_likelihood(f, demo, tm)) / (2.0 * h);
            double scale = std::max({1.0, std::fabs(fd), std::fabs(g[static_cast<std::size_t>(k)])});
            EXPECT_NEAR(g[static_cast<std::size_t>(k)], fd, 1e-6 * scale);
        }
    }
}

TEST(TrainLirl, ZeroEpochsReturnsTheta0) {
    Rng rng(11);
    std::vector<CycleData> data(3);
    for (auto& c : data) {
        c.features = random_features(rng, 8, 4);
        c.demo = 0;
    }
    LirlConfig cfg;
    cfg.epochs = 0;
    cfg.theta0 = {0.1, 0.2, 0.3, 0.4};
    auto res = train_lirl(data, cfg);
    EXPECT_EQ(res.theta, cfg.theta0);
    EXPECT_TRUE(res.metrics.empty());
}

TEST(TrainLirl, EmptyDatasetThrows) {
    EXPECT_THROW(train_lirl({}, LirlConfig{}), DatasetError);
}

TEST(TrainLirl, LikelihoodIncreasesOnSeparableData) {
    // demo is the feature-wise minimal policy in every cycle
    Rng rng(12);
    std::vector<CycleData> data;
    for (int c = 0; c < 6; ++c) {
        CycleData cd;
        cd.features = random_features(rng, 10, 5);
        for (auto& row : cd.features)
            for (double& v : row) v += 1.0;
        cd.features[3] = {0.1, 0.1, 0.1, 0.1, 0.1};
        cd.demo = 3;
        data.push_back(cd);
    }
    LirlConfig cfg;
    cfg.epochs = 25;
    cfg.step = 0.02;
    cfg.batch = 64;  // full batch: plain ascent must be monotone for small steps
    cfg.theta0 = std::vector<double>(5, 0.5);
    auto res = train_lirl(data, cfg);
    for (std::size_t e = 1; e < res.metrics.size(); ++e)
        EXPECT_GT(res.metrics[e].mean_log_likelihood, res.metrics[e - 1].mean_log_likelihood);
}

TEST(TrainLirl, SingleCycleLikelihoodImproves) {
    Rng rng(13);
    CycleData cd;
    cd.features = random_features(rng, 12, 15);
    cd.demo = 2;
    for (double& v : cd.features[2]) v *= 0.2;  // make the demo attainable
    LirlConfig cfg;
    cfg.epochs = 60;
    cfg.step = 0.05;
    cfg.seed = 4;
    std::vector<double> theta0(15, 0.2);
    cfg.theta0 = theta0;
    double before = log_likelihood(cd.features, cd.demo, theta0);
    auto res = train_lirl({cd}, cfg);
    double after = log_likelihood(cd.features, cd.demo, res.theta);
    EXPECT_GT(after, before);
}

TEST(TrainLirl, DeterministicGivenSeed) {
    Rng rng(14);
    std::vector<CycleData> data;
    for (int c = 0; c < 5; ++c) {
        CycleData cd;
        cd.features = random_features(rng, 9, 6);
        cd.demo = c % 9;
        data.push_back(cd);
    }
    LirlConfig cfg;
    cfg.epochs = 10;
    cfg.batch = 2;
    cfg.seed = 77;
    auto a = train_lirl(data, cfg);
    auto b = train_lirl(data, cfg);
    EXPECT_EQ(a.theta, b.theta);
}

TEST(Evd, SingletonIsZero) {
    std::vector<std::vector<double>> f = {{1.0, 2.0}};
    auto e = evd(f, 0, {0.5, 0.5});
    ASSERT_TRUE(e.has_value());
    EXPECT_NEAR(*e, 0.0, 1e-12);
}

TEST(Evd, AllMassOnDemoGoesToZero) {
    std::vector<std::vector<double>> f = {{0.1, 0.1}, {3.0, 3.0}};
    auto e = evd(f, 0, {40.0, 40.0});
    ASSERT_TRUE(e.has_value());
    EXPECT_LT(*e, 1e-6);
}

TEST(Evd, DegenerateNormalizationMarked) {
    std::vector<std::vector<double>> f = {{0.0, 0.0}, {1.0, 1.0}};
    EXPECT_FALSE(evd(f, 0, {0.5, 0.5}).has_value());
}

TEST(Evd, MatchesDirectOracle) {
    Rng rng(15);
    for (int trial = 0; trial < 40; ++trial) {
        auto f = random_features(rng, rng.uniform_int(2, 10), 4);
        auto theta = random_theta(rng, 4, 0.1, 1.0);
        int demo = rng.uniform_int(0, static_cast<int>(f.size()) - 1);
        auto e = evd(f, demo, theta);
        ASSERT_TRUE(e.has_value());

        // first principles
        std::vector<double> vals(f.size());
        std::vector<double> expw(f.size());
        double z = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            vals[i] = -std::inner_product(theta.begin(), theta.end(), f[i].begin(), 0.0);
            expw[i] = std::exp(vals[i]);
            z += expw[i];
        }
        double expectation = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) expectation += expw[i] / z * vals[i];
        double oracle = std::fabs(vals[static_cast<std::size_t>(demo)] - expectation) /
                        std::fabs(vals[static_cast<std::size_t>(demo)]);
        EXPECT_NEAR(*e, oracle, 1e-12);
    }
}

TEST(Ed, AllMassOnDemoIsZero) {
    CycleData cd;
    cd.features = {{0.1, 0.1}, {4.0, 4.0}};
    cd.demo = 0;
    cd.demo_distance = {0.0, 2.5};
    EXPECT_LT(ed(cd, {30.0, 30.0}), 1e-6);
}

TEST(Ed, UniformTwoPolicies) {
    CycleData cd;
    cd.features = {{1.0}, {1.0}};
    cd.demo = 0;
    cd.demo_distance = {0.0, 3.0};  // normalizes to 0 and 1
    EXPECT_NEAR(ed(cd, {0.0}), 0.5, 1e-12);
}

TEST(Ed, MatchesWeightedSumOracle) {
    Rng rng(16);
    for (int trial = 0; trial < 40; ++trial) {
        CycleData cd;
        int n = rng.uniform_int(2, 12);
        cd.features = random_features(rng, n, 5);
        cd.demo = rng.uniform_int(0, n - 1);
        cd.demo_distance.resize(static_cast<std::size_t>(n));
        for (double& d : cd.demo_distance) d = rng.uniform(0.0, 5.0);
        cd.demo_distance[static_cast<std::size_t>(cd.demo)] = 0.0;
        auto theta = random_theta(rng, 5);
        double got = ed(cd, theta);

        auto dist = policy_distribution(cd.features, theta);
        double dmax = *std::max_element(cd.demo_distance.begin(), cd.demo_distance.end());
        double oracle = 0.0;
        for (std::size_t i = 0; i < cd.features.size(); ++i)
            oracle += dist.probabilities[i] * cd.demo_distance[i] / dmax;
        EXPECT_NEAR(got, oracle, 1e-12);
        EXPECT_GE(got, 0.0);
        EXPECT_LE(got, 1.0);
    }
}

TEST(Opd, OptimalIsDemoGivesZero) {
    CycleData cd;
    cd.features = {{0.1, 0.1}, {2.0, 2.0}};
    cd.demo = 0;
    cd.demo_distance = {0.0, 1.0};
    EXPECT_EQ(opd(cd, {1.0, 1.0}), 0.0);
}

TEST(Opd, ZeroThetaPicksIndexZero) {
    CycleData cd;
    cd.features = {{1.0}, {0.5}, {0.2}};
    cd.demo = 2;
    cd.demo_distance = {0.8, 0.4, 0.0};
    // theta = 0: all values tie, index 0 wins per the tie-break contract
    EXPECT_NEAR(opd(cd, {0.0}), 1.0, 1e-12);
}

TEST(Opd, ScalingThetaNeverChangesIt) {
    Rng rng(18);
    for (int trial = 0; trial < 30; ++trial) {
        CycleData cd;
        int n = rng.uniform_int(2, 12);
        cd.features = random_features(rng, n, 6);
        cd.demo = rng.uniform_int(0, n - 1);
        cd.demo_distance.resize(static_cast<std::size_t>(n));
        for (double& d : cd.demo_distance) d = rng.uniform(0.0, 5.0);
        auto theta = random_theta(rng, 6, 0.01, 1.0);
        double a = opd(cd, theta);
        for (double& v : theta) v *= 7.3;
        EXPECT_EQ(a, opd(cd, theta));
    }
}

TEST(Metrics, SingletonDemonstrationAllZero) {
    CycleData cd;
    cd.features = {{0.5, 0.7}};
    cd.demo = 0;
    cd.demo_distance = {0.0};
    auto theta = std::vector<double>{1.0, 1.0};
    auto e = evd(cd.features, cd.demo, theta);
    ASSERT_TRUE(e.has_value());
    EXPECT_NEAR(*e, 0.0, 1e-12);
    EXPECT_EQ(ed(cd, theta), 0.0);
    EXPECT_EQ(opd(cd, theta), 0.0);
}
