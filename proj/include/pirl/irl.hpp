#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "pirl/common.hpp"
#include "pirl/rng.hpp"

namespace pirl::irl {

// Minimal view of one planning cycle for the IRL math: the path-integral
// feature matrix, the demonstration index and, for the distance metrics, the
// unnormalized distance of every policy to the demonstration.
struct CycleData {
    std::vector<std::vector<double>> features;  // n_policies x K
    int demo = 0;
    std::vector<double> demo_distance;
};

struct PolicyDistribution {
    std::vector<double> probabilities;
    double log_partition = 0.0;
};

inline void check_cycle(const std::vector<std::vector<double>>& features,
                        const std::vector<double>& theta) {
    if (features.empty()) throw DimensionError("policy distribution: empty policy set");
    for (const auto& f : features)
        if (f.size() != theta.size())
            throw DimensionError("feature vector of length " + std::to_string(f.size()) +
                                 " vs theta of length " + std::to_string(theta.size()));
}

// p(pi | theta) = exp(-theta.f^pi) / Z with Z approximated over the sampled
// set; computed with max subtraction inside logsumexp.
inline PolicyDistribution policy_distribution(const std::vector<std::vector<double>>& features,
                                              const std::vector<double>& theta) {
    check_cycle(features, theta);
    std::vector<double> logits(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        logits[i] = -std::inner_product(theta.begin(), theta.end(), features[i].begin(), 0.0);
    PolicyDistribution dist;
    dist.log_partition = logsumexp(logits);
    dist.probabilities.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        dist.probabilities[i] = std::exp(logits[i] - dist.log_partition);
    return dist;
}

inline double log_likelihood(const std::vector<std::vector<double>>& features, int demo,
                             const std::vector<double>& theta) {
    check_cycle(features, theta);
    if (demo < 0 || demo >= static_cast<int>(features.size()))
        throw DimensionError("log_likelihood: demonstration index out of range");
    std::vector<double> logits(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        logits[i] = -std::inner_product(theta.begin(), theta.end(), features[i].begin(), 0.0);
    return logits[static_cast<std::size_t>(demo)] - logsumexp(logits);
}

// dL/dtheta = E_p[f] - f^demo; ascending this maximizes the demonstration's
// log-likelihood under the maximum entropy distribution.
inline std::vector<double> maxent_gradient(const std::vector<std::vector<double>>& features,
                                           int demo, const std::vector<double>& theta) {
    PolicyDistribution dist = policy_distribution(features, theta);
    if (demo < 0 || demo >= static_cast<int>(features.size()))
        throw DimensionError("maxent_gradient: demonstration index out of range");
    std::vector<double> g(theta.size(), 0.0);
    for (std::size_t i = 0; i < features.size(); ++i)
        for (std::size_t k = 0; k < theta.size(); ++k)
            g[k] += dist.probabilities[i] * features[i][k];
    for (std::size_t k = 0; k < theta.size(); ++k)
        g[k] -= features[static_cast<std::size_t>(demo)][k];
    return g;
}

constexpr double kEvdEpsilon = 1e-6;

// |V(demo) - E_p[V]| / |V(demo)|. Returns nullopt when the demonstration
// value is too small to normalize; callers exclude those cycles from
// averages and count them.
inline std::optional<double> evd(const std::vector<std::vector<double>>& features, int demo,
                                 const std::vector<double>& theta) {
    PolicyDistribution dist = policy_distribution(features, theta);
    auto value = [&](std::size_t i) {
        return -std::inner_product(theta.begin(), theta.end(), features[i].begin(), 0.0);
    };
    const double v_demo = value(static_cast<std::size_t>(demo));
    if (std::fabs(v_demo) < kEvdEpsilon) return std::nullopt;
    double expectation = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) expectation += dist.probabilities[i] * value(i);
    return std::fabs(v_demo - expectation) / std::fabs(v_demo);
}

// Distances scaled by the cycle's maximum so ED and OPD live in [0, 1].
inline std::vector<double> normalized_distances(const std::vector<double>& demo_distance) {
    double dmax = 0.0;
    for (double d : demo_distance) dmax = std::max(dmax, d);
    std::vector<double> out(demo_distance.size(), 0.0);
    if (dmax <= 0.0) return out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = demo_distance[i] / dmax;
    return out;
}

// Expected normalized distance of the policy distribution to the demo.
inline double ed(const CycleData& cycle, const std::vector<double>& theta) {
    if (cycle.demo_distance.size() != cycle.features.size())
        throw DimensionError("ed: distance vector does not match the policy set");
    PolicyDistribution dist = policy_distribution(cycle.features, theta);
    const std::vector<double> dn = normalized_distances(cycle.demo_distance);
    double acc = 0.0;
    for (std::size_t i = 0; i < dn.size(); ++i) acc += dist.probabilities[i] * dn[i];
    return acc;
}

// Normalized distance between the argmax-value policy and the demo, ties
// broken by the lowest index.
inline double opd(const CycleData& cycle, const std::vector<double>& theta) {
    if (cycle.demo_distance.size() != cycle.features.size())
        throw DimensionError("opd: distance vector does not match the policy set");
    check_cycle(cycle.features, theta);
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cycle.features.size(); ++i) {
        const double v =
            -std::inner_product(theta.begin(), theta.end(), cycle.features[i].begin(), 0.0);
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }
    return normalized_distances(cycle.demo_distance)[best];
}

struct LirlConfig {
    int epochs = 200;
    double step = 0.05;
    int batch = 32;
    std::uint64_t seed = 0;
    std::vector<double> theta0;  // empty: uniform random in [0,1]^K
};

struct EpochMetrics {
    int epoch = 0;
    double mean_log_likelihood = 0.0;
    double mean_evd = 0.0;
    int evd_degenerate = 0;
    double mean_ed = 0.0;
};

struct LirlResult {
    std::vector<double> theta;
    std::vector<std::vector<double>> theta_per_epoch;
    std::vector<EpochMetrics> metrics;
};

inline EpochMetrics dataset_metrics(const std::vector<CycleData>& data,
                                    const std::vector<double>& theta, int epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    double ed_acc = 0.0;
    int ed_count = 0;
    for (const CycleData& c : data) {
        m.mean_log_likelihood += log_likelihood(c.features, c.demo, theta);
        if (auto e = evd(c.features, c.demo, theta))
            m.mean_evd += *e;
        else
            ++m.evd_degenerate;
        if (c.demo_distance.size() == c.features.size()) {
            ed_acc += ed(c, theta);
            ++ed_count;
        }
    }
    const double n = static_cast<double>(data.size());
    m.mean_log_likelihood /= n;
    const int evd_count = static_cast<int>(data.size()) - m.evd_degenerate;
    m.mean_evd = evd_count > 0 ? m.mean_evd / evd_count : 0.0;
    m.mean_ed = ed_count > 0 ? ed_acc / ed_count : 0.0;
    return m;
}

// Mini-batch gradient ascent on the summed log-likelihood with projection of
// theta onto the non-negative orthant after every step.
inline LirlResult train_lirl(const std::vector<CycleData>& data, const LirlConfig& cfg) {
    if (data.empty()) throw DatasetError("train_lirl: empty dataset");
    const std::size_t k = data.front().features.at(0).size();
    LirlResult res;
    if (!cfg.theta0.empty()) {
        if (cfg.theta0.size() != k) throw DimensionError("train_lirl: theta0 has wrong length");
        res.theta = cfg.theta0;
    } else {
        Rng init(derive_seed(cfg.seed, 101));
        res.theta.resize(k);
        for (double& v : res.theta) v = init.uniform();
    }

    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            std::vector<double> grad(k, 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const CycleData& c = data[static_cast<std::size_t>(order[i])];
                std::vector<double> g = maxent_gradient(c.features, c.demo, res.theta);
                for (std::size_t j = 0; j < k; ++j) grad[j] += g[j];
            }
            const double scale = cfg.step / static_cast<double>(end - start);
            for (std::size_t j = 0; j < k; ++j) {
                res.theta[j] += scale * grad[j];
                if (res.theta[j] < 0.0) res.theta[j] = 0.0;
                if (!std::isfinite(res.theta[j]))
                    throw DivergenceError("train_lirl diverged at epoch " + std::to_string(epoch));
            }
        }
        res.theta_per_epoch.push_back(res.theta);
        res.metrics.push_back(dataset_metrics(data, res.theta, epoch));
    }
    return res;
}

}  // namespace pirl::irl
