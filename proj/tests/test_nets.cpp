#include <gtest/gtest.h>

#include "pirl/nets.hpp"
#include "synthetic.hpp"

using namespace pirl;
using namespace pirl::nn;

namespace {

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.n_policies_in = 4;
    cfg.m_control_points = 5;
    cfg.n_actions = 2;
    cfg.enc_ch1 = 3;
    cfg.enc_ch2 = 4;
    cfg.latent = 5;
    cfg.att_ch = 2;
    cfg.att_hidden = 3;
    cfg.context_dim = 4;
    cfg.head_hidden = 4;
    cfg.fc_hidden = 6;
    cfg.bi_ch1 = 4;
    cfg.bi_ch2 = 3;
    cfg.tan_hidden = 4;
    cfg.history = 3;
    return cfg;
}

NetConfig desk_config(int n_in = 16) {
    NetConfig cfg;
    cfg.n_policies_in = n_in;
    return cfg;
}

// random well-formed input for a given config
NetInput random_input(Rng& rng, const NetConfig& cfg, int n_real = -1) {
    if (n_real < 0) n_real = cfg.n_policies_in;
    NetInput in;
    in.n_real = n_real;
    for (int i = 0; i < cfg.n_policies_in; ++i) {
        const bool valid = i < n_real;
        in.valid.push_back(valid);
        Tensor cp = Tensor::zeros({3, static_cast<std::size_t>(cfg.m_control_points)});
        Tensor pif = Tensor::zeros({static_cast<std::size_t>(cfg.k_features)});
        Tensor act = Tensor::zeros({static_cast<std::size_t>(cfg.act_dim())});
        if (valid) {
            for (double& x : cp.v) x = rng.uniform(-1.0, 1.0);
            for (double& x : pif.v) x = rng.uniform(0.0, 1.0);
            for (double& x : act.v) x = rng.uniform(-1.0, 1.0);
        }
        in.cp.push_back(std::move(cp));
        in.pif.push_back(std::move(pif));
        in.act.push_back(std::move(act));
        in.dist_raw.push_back(valid ? rng.uniform(0.0, 2.0) : 0.0);
    }
    in.demo_slot = rng.uniform_int(0, n_real - 1);
    in.dist_raw[static_cast<std::size_t>(in.demo_slot)] = 0.0;
    double dmax = 0.0;
    for (double d : in.dist_raw) dmax = std::max(dmax, d);
    for (double d : in.dist_raw) in.dist_norm.push_back(dmax > 0 ? d / dmax : 0.0);
    for (int i = 0; i < n_real; ++i) {
        std::vector<double> f(static_cast<std::size_t>(cfg.k_features));
        for (double& x : f) x = rng.uniform(0.0, 2.0);
        in.features.push_back(std::move(f));
    }
    return in;
}

}  // namespace

TEST(BuildNetInput, SortsByProgressAndTracksDemo) {
    Rng rng(3);
    CycleRecord rec = synth::make_record(rng, 0, 12, 0);
    NetConfig cfg = desk_config(16);
    NetInput in = build_net_input(rec, cfg);
    EXPECT_EQ(in.n_real, 12);
    for (int i = 1; i < in.n_real; ++i) {
        const double prev = in.cp[static_cast<std::size_t>(i - 1)].v[2 * cfg.m_control_points + cfg.m_control_points - 1];
        const double cur = in.cp[static_cast<std::size_t>(i)].v[2 * cfg.m_control_points + cfg.m_control_points - 1];
        EXPECT_GE(cur, prev - 1e-12);  // progress channel ascending
    }
    for (int i = in.n_real; i < cfg.n_policies_in; ++i) EXPECT_FALSE(in.valid[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(in.dist_raw[static_cast<std::size_t>(in.demo_slot)], 0.0, 1e-12);
}

TEST(BuildNetInput, TruncationKeepsDemo) {
    Rng rng(4);
    CycleRecord rec = synth::make_record(rng, 0, 40, 0);
    NetConfig cfg = desk_config(8);
    NetInput in = build_net_input(rec, cfg);
    EXPECT_EQ(in.n_real, 8);
    EXPECT_NEAR(in.dist_raw[static_cast<std::size_t>(in.demo_slot)], 0.0, 1e-12);
    EXPECT_EQ(in.features.size(), 8u);
}

TEST(PolicyNet, GammaZeroMakesContextAttentionIndependent) {
    Rng rng(5);
    NetConfig cfg = tiny_config();
    NetInput in = random_input(rng, cfg);
    ParamStore p1 = init_policy_net_params(cfg, Method::kPacnn, 7);
    ParamStore p2 = init_policy_net_params(cfg, Method::kPacnn, 7);
    // wreck p2's attention encoder; with gamma = 0 the context cannot change
    for (double& x : p2.value("att.fc2.w").v) x += 3.0;
    for (double& x : p2.value("att.conv.w").v) x -= 1.0;
    Tape t1, t2;
    PolicyNetOutput o1 = policy_net_forward(t1, p1, in, cfg, Method::kPacnn);
    PolicyNetOutput o2 = policy_net_forward(t2, p2, in, cfg, Method::kPacnn);
    for (std::size_t i = 0; i < o1.context.value().size(); ++i)
        EXPECT_EQ(o1.context.value().v[i], o2.context.value().v[i]);
    // alpha itself must differ, proving the independence comes from gamma
    bool alpha_differs = false;
    for (std::size_t i = 0; i < o1.alpha.value().size(); ++i)
        if (o1.alpha.value().v[i] != o2.alpha.value().v[i]) alpha_differs = true;
    EXPECT_TRUE(alpha_differs);
}

TEST(PolicyNet, DuplicationHalvesAttention) {
    Rng rng(6);
    NetConfig cfg = tiny_config();
    NetInput in = random_input(rng, cfg);
    ParamStore params = init_policy_net_params(cfg, Method::kPacnn, 9);
    for (double& x : params.value("att.gamma").v) x = 0.8;  // make attention matter

    Tape t1;
    PolicyNetOutput base = policy_net_forward(t1, params, in, cfg, Method::kPacnn);

    NetConfig cfg2 = cfg;
    cfg2.n_policies_in = 2 * cfg.n_policies_in;
    NetInput dup;
    dup.n_real = 2 * in.n_real;
    for (int i = 0; i < cfg.n_policies_in; ++i) {
        for (int copy = 0; copy < 2; ++copy) {
            dup.valid.push_back(in.valid[static_cast<std::size_t>(i)]);
            dup.cp.push_back(in.cp[static_cast<std::size_t>(i)]);
            dup.pif.push_back(in.pif[static_cast<std::size_t>(i)]);
            dup.act.push_back(in.act[static_cast<std::size_t>(i)]);
            dup.dist_raw.push_back(in.dist_raw[static_cast<std::size_t>(i)]);
            dup.dist_norm.push_back(in.dist_norm[static_cast<std::size_t>(i)]);
        }
    }
    dup.demo_slot = 2 * in.demo_slot;
    for (const auto& f : in.features) {
        dup.features.push_back(f);
        dup.features.push_back(f);
    }
    Tape t2;
    PolicyNetOutput doubled = policy_net_forward(t2, params, dup, cfg2, Method::kPacnn);

    for (int i = 0; i < cfg.n_policies_in; ++i) {
        if (!in.valid[static_cast<std::size_t>(i)]) continue;
        const double a = base.alpha.value().v[static_cast<std::size_t>(i)];
        EXPECT_NEAR(doubled.alpha.value().v[static_cast<std::size_t>(2 * i)], 0.5 * a, 1e-9);
        EXPECT_NEAR(doubled.alpha.value().v[static_cast<std::size_t>(2 * i + 1)], 0.5 * a, 1e-9);
    }
    for (std::size_t i = 0; i < base.context.value().size(); ++i)
        EXPECT_NEAR(base.context.value().v[i], doubled.context.value().v[i], 1e-9);
}

TEST(PolicyNet, PermutationEquivariantAttention) {
    Rng rng(7);
    NetConfig cfg = tiny_config();
    NetInput in = random_input(rng, cfg);  // all slots valid
    ParamStore params = init_policy_net_params(cfg, Method::kPacnn, 11);
    for (double& x : params.value("att.gamma").v) x = 0.5;

    Tape t1;
    PolicyNetOutput base = policy_net_forward(t1, params, in, cfg, Method::kPacnn);

    std::vector<int> perm = {2, 0, 3, 1};
    NetInput permuted = in;
    for (int i = 0; i < 4; ++i) {
        permuted.cp[static_cast<std::size_t>(i)] = in.cp[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        permuted.pif[static_cast<std::size_t>(i)] = in.pif[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        permuted.act[static_cast<std::size_t>(i)] = in.act[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    Tape t2;
    PolicyNetOutput out = policy_net_forward(t2, params, permuted, cfg, Method::kPacnn);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(out.alpha.value().v[static_cast<std::size_t>(i)],
                    base.alpha.value().v[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])], 1e-12);
    for (std::size_t i = 0; i < base.context.value().size(); ++i)
        EXPECT_NEAR(base.context.value().v[i], out.context.value().v[i], 1e-9);
}

TEST(PolicyNet, SimplexInvariantsOnRandomForwards) {
    Rng rng(8);
    NetConfig cfg = tiny_config();
    for (int trial = 0; trial < 50; ++trial) {
        NetInput in = random_input(rng, cfg, rng.uniform_int(1, cfg.n_policies_in));
        ParamStore params = init_policy_net_params(cfg, Method::kPacnnS, 100 + static_cast<std::uint64_t>(trial));
        Tape tape;
        PolicyNetOutput out = policy_net_forward(tape, params, in, cfg, Method::kPacnnS);
        double sum = 0.0;
        for (std::size_t i = 0; i < out.alpha.value().size(); ++i) {
            const double a = out.alpha.value().v[i];
            EXPECT_GE(a, 0.0);
            if (!in.valid[i]) EXPECT_EQ(a, 0.0);
            sum += a;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
        for (double th : out.theta.value().v) EXPECT_GE(th, 0.0);
    }
}

TEST(AttentionLoss, TrivialValues) {
    Tape tape;
    Var one_hot = tape.constant(Tensor::vec({0.0, 1.0, 0.0}));
    Var loss = attention_loss(tape, one_hot, {0.7, 0.0, 0.3});  // demo at slot 1
    EXPECT_EQ(loss.value().v[0], 0.0);

    Var uniform = tape.constant(Tensor::vec({0.5, 0.5}));
    Var loss2 = attention_loss(tape, uniform, {0.0, 1.0});
    EXPECT_DOUBLE_EQ(loss2.value().v[0], 0.5);
}

TEST(AttentionLoss, GradientWrtLogitsMatchesFiniteDifferences) {
    Rng rng(9);
    std::vector<double> dist = {0.9, 0.1, 0.0, 0.55};
    Tensor logits = Tensor::vec({0.3, -0.2, 0.7, 0.1});
    auto loss_of = [&](const Tensor& lg) {
        Tape tape;
        Var a = softmax(tape.constant(lg));
        return attention_loss(tape, a, dist).value().v[0];
    };
    Tensor grad = Tensor::zeros({4});
    {
        Tape tape;
        ParamStore p;
        p.add("lg", logits);
        Var a = softmax(tape.param(p.value("lg"), p.grad("lg")));
        Var l = attention_loss(tape, a, dist);
        tape.seed_scalar(l, 1.0);
        tape.backward();
        grad = p.grads.at("lg");
    }
    const double h = 1e-6;
    for (std::size_t i = 0; i < 4; ++i) {
        Tensor lp = logits, lm = logits;
        lp.v[i] += h;
        lm.v[i] -= h;
        const double fd = (loss_of(lp) - loss_of(lm)) / (2.0 * h);
        EXPECT_NEAR(grad.v[i], fd, 1e-5 * std::max(1.0, std::fabs(fd)));
    }
}

TEST(UpsampleAttention, IdentityAndAverage) {
    std::vector<double> a = {0.25, 0.25, 0.25, 0.25};
    EXPECT_EQ(upsample_attention(a, 4), a);
    std::vector<double> two = {0.5, 0.5};
    std::vector<double> up = upsample_attention(two, 4);
    for (double x : up) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(UpsampleAttention, MassPreserved) {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = rng.uniform_int(2, 10);
        std::vector<double> a(static_cast<std::size_t>(n));
        double s = 0.0;
        for (double& x : a) {
            x = rng.uniform(0.0, 1.0);
            s += x;
        }
        for (double& x : a) x /= s;
        const std::size_t target = static_cast<std::size_t>(n + rng.uniform_int(0, 17));
        std::vector<double> up = upsample_attention(a, target);
        double sum = 0.0;
        for (double x : up) sum += x;
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Tan, MixtureIsConvexCombination) {
    Rng rng(11);
    NetConfig cfg = tiny_config();
    ParamStore params = init_tan_params(cfg, 13);
    std::vector<std::vector<double>> contexts, thetas;
    for (int t = 0; t < cfg.history; ++t) {
        std::vector<double> c(static_cast<std::size_t>(cfg.context_dim));
        for (double& x : c) x = rng.uniform(-1.0, 1.0);
        contexts.push_back(std::move(c));
        std::vector<double> th(static_cast<std::size_t>(cfg.k_features));
        for (double& x : th) x = rng.uniform(0.0, 3.0);
        thetas.push_back(std::move(th));
    }
    Tape tape;
    TanOutput out = tan_forward(tape, params, contexts, thetas, cfg);
    double wsum = 0.0;
    for (double w : out.weights.value().v) {
        EXPECT_GE(w, 0.0);
        wsum += w;
    }
    EXPECT_NEAR(wsum, 1.0, 1e-9);
    for (int k = 0; k < cfg.k_features; ++k) {
        double lo = 1e300, hi = -1e300;
        for (int t = 0; t < cfg.history; ++t) {
            lo = std::min(lo, thetas[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
            hi = std::max(hi, thetas[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
        }
        const double v = out.theta_next.value().v[static_cast<std::size_t>(k)];
        EXPECT_GE(v, lo - 1e-12);
        EXPECT_LE(v, hi + 1e-12);
    }
}

TEST(Tan, OneHotAndUniformMixtureContracts) {
    // the mixture op itself: w one-hot reproduces that slot, uniform averages
    Tape tape;
    Tensor hist = Tensor::zeros({2, static_cast<std::size_t>(kFeatureCount)});
    hist.v[0] = 1.0;                                    // theta^(1) = e0
    hist.v[static_cast<std::size_t>(kFeatureCount) + 1] = 1.0;  // theta^(2) = e1
    Var one_hot = tape.constant(Tensor::vec({1.0, 0.0}));
    Var m1 = attend(one_hot, tape.constant(hist));
    EXPECT_EQ(m1.value().v[0], 1.0);
    EXPECT_EQ(m1.value().v[1], 0.0);
    Var uniform = tape.constant(Tensor::vec({0.5, 0.5}));
    Var m2 = attend(uniform, tape.constant(hist));
    EXPECT_DOUBLE_EQ(m2.value().v[0], 0.5);
    EXPECT_DOUBLE_EQ(m2.value().v[1], 0.5);
}

TEST(Tan, WrongHistoryLengthThrows) {
    NetConfig cfg = tiny_config();
    ParamStore params = init_tan_params(cfg, 13);
    std::vector<std::vector<double>> contexts(2, std::vector<double>(static_cast<std::size_t>(cfg.context_dim), 0.0));
    std::vector<std::vector<double>> thetas(2, std::vector<double>(static_cast<std::size_t>(cfg.k_features), 0.0));
    Tape tape;
    EXPECT_THROW(tan_forward(tape, params, contexts, thetas, cfg), DimensionError);
}

TEST(EndToEnd, PacnnGradientsMatchFiniteDifferences) {
    Rng rng(14);
    NetConfig cfg = tiny_config();
    cfg.lambda_att = 0.1;
    NetInput in = random_input(rng, cfg);
    ParamStore params = init_policy_net_params(cfg, Method::kPacnnS, 21);
    for (double& x : params.value("att.gamma").v) x = 0.3;

    // objective: J = LL(theta) - lambda * L_att, via gradient seeding
    auto objective = [&]() {
        Tape tape;
        PolicyNetOutput out = policy_net_forward(tape, params, in, cfg, Method::kPacnnS);
        double j = irl::log_likelihood(in.features, in.demo_slot, out.theta.value().v);
        j -= cfg.lambda_att * attention_loss(tape, out.alpha, in.dist_norm).value().v[0];
        return j;
    };
    params.zero_grads();
    {
        Tape tape;
        PolicyNetOutput out = policy_net_forward(tape, params, in, cfg, Method::kPacnnS);
        std::vector<double> g = irl::maxent_gradient(in.features, in.demo_slot, out.theta.value().v);
        tape.seed(out.theta, Tensor::vec(g));
        Var l_att = attention_loss(tape, out.alpha, in.dist_norm);
        tape.seed_scalar(l_att, -cfg.lambda_att);
        tape.backward();
    }
    const double h = 1e-5;
    for (auto& [name, value] : params.values) {
        const Tensor& g = params.grads.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value.v[i];
            value.v[i] = orig + h;
            const double jp = objective();
            value.v[i] = orig - h;
            const double jm = objective();
            value.v[i] = orig;
            const double fd = (jp - jm) / (2.0 * h);
            const double scale = std::max({1.0, std::fabs(fd), std::fabs(g.v[i])});
            ASSERT_NEAR(g.v[i], fd, 1e-4 * scale) << name << "[" << i << "]";
        }
    }
}

TEST(EndToEnd, TanGradientsMatchFiniteDifferences) {
    Rng rng(15);
    NetConfig cfg = tiny_config();
    ParamStore params = init_tan_params(cfg, 23);
    std::vector<std::vector<double>> contexts, thetas;
    for (int t = 0; t < cfg.history; ++t) {
        std::vector<double> c(static_cast<std::size_t>(cfg.context_dim));
        for (double& x : c) x = rng.uniform(-1.0, 1.0);
        contexts.push_back(std::move(c));
        std::vector<double> th(static_cast<std::size_t>(cfg.k_features));
        for (double& x : th) x = rng.uniform(0.0, 2.0);
        thetas.push_back(std::move(th));
    }
    std::vector<std::vector<double>> features;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> f(static_cast<std::size_t>(cfg.k_features));
        for (double& x : f) x = rng.uniform(0.0, 1.5);
        features.push_back(std::move(f));
    }
    const int demo = 2;

    auto objective = [&]() {
        Tape tape;
        TanOutput out = tan_forward(tape, params, contexts, thetas, cfg);
        return irl::log_likelihood(features, demo, out.theta_next.value().v);
    };
    params.zero_grads();
    {
        Tape tape;
        TanOutput out = tan_forward(tape, params, contexts, thetas, cfg);
        std::vector<double> g = irl::maxent_gradient(features, demo, out.theta_next.value().v);
        tape.seed(out.theta_next, Tensor::vec(g));
        tape.backward();
    }
    const double h = 1e-5;
    for (auto& [name, value] : params.values) {
        const Tensor& g = params.grads.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value.v[i];
            value.v[i] = orig + h;
            const double jp = objective();
            value.v[i] = orig - h;
            const double jm = objective();
            value.v[i] = orig;
            const double fd = (jp - jm) / (2.0 * h);
            const double scale = std::max({1.0, std::fabs(fd), std::fabs(g.v[i])});
            ASSERT_NEAR(g.v[i], fd, 1e-4 * scale) << name << "[" << i << "]";
        }
    }
}

TEST(Training, SingleCycleOverfit) {
    Rng rng(16);
    CycleRecord rec = synth::make_record(rng, 0, 16, 0);
    NetConfig cfg = desk_config(16);
    cfg.epochs = 500;
    cfg.batch = 1;
    cfg.step = 0.05;
    cfg.seed = 5;
    cfg.validate_every = 1000000;
    PolicyNetTrainResult res = train_policy_net({rec}, {}, cfg, Method::kPacnn);
    NetInput in = build_net_input(rec, cfg);
    PolicyNetInference inf = policy_net_infer(res.params, in, cfg, Method::kPacnn);
    auto dist = irl::policy_distribution(in.features, inf.theta);
    EXPECT_GT(dist.probabilities[static_cast<std::size_t>(in.demo_slot)], 0.9);
}

TEST(Training, DeterministicGivenSeed) {
    auto data = synth::make_dataset(31, 6, 12, false);
    NetConfig cfg = desk_config(16);
    cfg.epochs = 3;
    cfg.seed = 9;
    PolicyNetTrainResult a = train_policy_net(data, {}, cfg, Method::kPacnnS);
    PolicyNetTrainResult b = train_policy_net(data, {}, cfg, Method::kPacnnS);
    for (const auto& [name, t] : a.params.values) {
        const Tensor& u = b.params.value(name);
        for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(t.v[i], u.v[i]) << name;
    }
}

TEST(Training, LambdaVariantsBothComplete) {
    auto data = synth::make_dataset(33, 8, 12, false);
    NetConfig cfg = desk_config(16);
    cfg.epochs = 4;
    cfg.seed = 3;
    PolicyNetTrainResult plain = train_policy_net(data, data, cfg, Method::kPacnn);
    PolicyNetTrainResult with_s = train_policy_net(data, data, cfg, Method::kPacnnS);
    EXPECT_EQ(plain.train_curve.size(), 4u);
    EXPECT_EQ(with_s.train_curve.size(), 4u);
    for (const TrainPoint& pt : plain.train_curve) EXPECT_TRUE(std::isfinite(pt.objective));
    for (const TrainPoint& pt : with_s.train_curve) EXPECT_TRUE(std::isfinite(pt.objective));
}

TEST(Training, TanLearnsRecencyAfterSwitch) {
    // small smoke version of the temporal criterion: reward regime switches,
    // the trained mixture must lean on recent slots right after a switch
    NetConfig cfg = tiny_config();
    cfg.history = 4;
    cfg.context_dim = 4;
    cfg.epochs = 150;
    cfg.step = 0.05;
    cfg.batch = 8;
    cfg.seed = 11;
    auto stream = synth::make_temporal_stream(17, 60, {10, 20, 30, 40, 50}, cfg.context_dim, 16);
    auto samples = synth::tan_samples_from_stream(stream, cfg.history);
    TanTrainResult res = train_tan(samples, cfg);
    EXPECT_GT(res.curve.back().objective, res.curve.front().objective);
}
