#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "pirl/dataset.hpp"
#include "pirl/irl.hpp"
#include "pirl/params_io.hpp"
#include "pirl/tensor.hpp"

namespace pirl::nn {

enum class Method { kLirl, k1dcnn, kBi1dcnn, kPacnn, kPacnnS, kPtacnn, kPtacnnS };

inline Method method_from_string(const std::string& s) {
    if (s == "lirl") return Method::kLirl;
    if (s == "1dcnn") return Method::k1dcnn;
    if (s == "bi1dcnn") return Method::kBi1dcnn;
    if (s == "pacnn") return Method::kPacnn;
    if (s == "pacnn+s") return Method::kPacnnS;
    if (s == "ptacnn") return Method::kPtacnn;
    if (s == "ptacnn+s") return Method::kPtacnnS;
    throw ConfigError("unknown method: " + s);
}

inline std::string method_name(Method m) {
    switch (m) {
        case Method::kLirl: return "lirl";
        case Method::k1dcnn: return "1dcnn";
        case Method::kBi1dcnn: return "bi1dcnn";
        case Method::kPacnn: return "pacnn";
        case Method::kPacnnS: return "pacnn+s";
        case Method::kPtacnn: return "ptacnn";
        case Method::kPtacnnS: return "ptacnn+s";
    }
    return "?";
}

// The policy-attention stage backing each temporal method.
inline Method base_method(Method m) {
    if (m == Method::kPtacnn) return Method::kPacnn;
    if (m == Method::kPtacnnS) return Method::kPacnnS;
    return m;
}

inline bool uses_attention(Method m) {
    m = base_method(m);
    return m == Method::kPacnn || m == Method::kPacnnS;
}

inline bool uses_attention_loss(Method m) { return base_method(m) == Method::kPacnnS; }

struct NetConfig {
    int n_policies_in = 64;  // slots after pad-or-truncate
    int m_control_points = 13;
    int k_features = 15;
    int n_actions = 4;

    int enc_ch1 = 8;
    int enc_ch2 = 16;
    int latent = 16;
    int att_ch = 4;
    int att_hidden = 8;
    int context_dim = 32;
    int head_hidden = 16;
    int fc_hidden = 64;  // 1dcnn context encoder
    int bi_ch1 = 16;
    int bi_ch2 = 8;

    int tan_hidden = 32;
    int history = 10;

    double lambda_att = 10.0;

    // input normalization
    double lat_scale = 5.0;
    double yaw_scale = 0.7854;
    double progress_scale = 120.0;
    double pif_scale = 6.0;
    double accel_scale = 4.0;
    double curv_rate_scale = 0.02;
    double duration_scale = 6.0;

    // training
    int epochs = 60;
    double step = 0.02;
    int batch = 8;
    std::uint64_t seed = 0;
    int validate_every = 5;
    double clip_norm = 5.0;  // 0 disables clipping
    std::string optimizer = "sgd";

    int act_dim() const { return 3 * n_actions; }
    int att_pool_len() const { return (m_control_points - 2) / 2 + 1; }

    static NetConfig from_config(const Config& cfg) {
        NetConfig n;
        n.n_policies_in = static_cast<int>(cfg.get_int("net.n_policies_in", n.n_policies_in));
        n.m_control_points = static_cast<int>(cfg.get_int("planner.control_points", n.m_control_points));
        n.n_actions = static_cast<int>(cfg.get_int("planner.depth", n.n_actions));
        n.latent = static_cast<int>(cfg.get_int("net.latent", n.latent));
        n.context_dim = static_cast<int>(cfg.get_int("net.context_dim", n.context_dim));
        n.tan_hidden = static_cast<int>(cfg.get_int("net.tan_hidden", n.tan_hidden));
        n.history = static_cast<int>(cfg.get_int("net.history", n.history));
        n.lambda_att = cfg.get_double("net.lambda_att", n.lambda_att);
        n.epochs = static_cast<int>(cfg.get_int("net.epochs", n.epochs));
        n.step = cfg.get_double("net.step", n.step);
        n.batch = static_cast<int>(cfg.get_int("net.batch", n.batch));
        n.seed = cfg.get_u64("net.seed", n.seed);
        n.validate_every = static_cast<int>(cfg.get_int("net.validate_every", n.validate_every));
        n.clip_norm = cfg.get_double("net.clip_norm", n.clip_norm);
        n.optimizer = cfg.get_string("net.optimizer", n.optimizer);
        n.pif_scale = cfg.get_double("planner.horizon", n.pif_scale);
        n.duration_scale = cfg.get_double("planner.horizon", n.duration_scale);
        const double v = cfg.get_double("scenario.target_speed_kph", 70.0) / 3.6;
        n.progress_scale = v * cfg.get_double("planner.horizon", 6.0);
        return n;
    }
};

// One cycle, assembled for the networks: policies sorted ascending by final
// route progress, padded or evenly subsampled to n_policies_in slots. The
// demonstration always survives subsampling. `features` keeps the raw path
// integrals of the used slots; the maximum entropy gradient is computed on
// exactly the distribution the network sees.
struct NetInput {
    int n_real = 0;
    std::vector<bool> valid;
    std::vector<Tensor> cp;   // [3, M] per slot
    std::vector<Tensor> pif;  // [K] per slot
    std::vector<Tensor> act;  // [3*D] per slot
    int demo_slot = 0;
    std::vector<double> dist_raw;   // unnormalized distance to the demo per slot
    std::vector<double> dist_norm;  // normalized by the used maximum
    std::vector<std::vector<double>> features;  // n_real x K
};

inline NetInput build_net_input(const CycleRecord& rec, const NetConfig& cfg,
                                const DistanceWeights& dw = {}) {
    const int n = static_cast<int>(rec.n_policies());
    if (n == 0) throw DimensionError("build_net_input: empty record");
    if (rec.k() != cfg.k_features)
        throw DimensionError("record has " + std::to_string(rec.k()) + " features, expected " +
                             std::to_string(cfg.k_features));
    if (rec.m() != cfg.m_control_points)
        throw DimensionError("record has " + std::to_string(rec.m()) + " control points, expected " +
                             std::to_string(cfg.m_control_points));
    if (static_cast<int>(rec.actions[0].size()) != cfg.act_dim())
        throw DimensionError("record action length " + std::to_string(rec.actions[0].size()) +
                             ", expected " + std::to_string(cfg.act_dim()));

    // sort by final progress, ascending
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return rec.final_progress(static_cast<std::size_t>(a)) <
               rec.final_progress(static_cast<std::size_t>(b));
    });
    int demo_sorted = 0;
    for (int i = 0; i < n; ++i)
        if (order[static_cast<std::size_t>(i)] == rec.demo_index) demo_sorted = i;

    // pick slots: identity when n <= n_in, else evenly spaced keeping the demo
    std::vector<int> picks;
    if (n <= cfg.n_policies_in) {
        picks = order;
    } else {
        picks.reserve(static_cast<std::size_t>(cfg.n_policies_in));
        bool demo_in = false;
        std::vector<int> pos;
        for (int j = 0; j < cfg.n_policies_in; ++j) {
            int p = static_cast<int>(static_cast<long>(j) * n / cfg.n_policies_in);
            pos.push_back(p);
            if (p == demo_sorted) demo_in = true;
        }
        if (!demo_in) {
            int closest = 0;
            for (int j = 1; j < cfg.n_policies_in; ++j)
                if (std::abs(pos[static_cast<std::size_t>(j)] - demo_sorted) <
                    std::abs(pos[static_cast<std::size_t>(closest)] - demo_sorted))
                    closest = j;
            pos[static_cast<std::size_t>(closest)] = demo_sorted;
        }
        for (int p : pos) picks.push_back(order[static_cast<std::size_t>(p)]);
    }

    NetInput in;
    in.n_real = static_cast<int>(picks.size());
    const auto& demo_cps = rec.cp_states[static_cast<std::size_t>(rec.demo_index)];
    for (std::size_t slot = 0; slot < picks.size(); ++slot) {
        const std::size_t i = static_cast<std::size_t>(picks[slot]);
        if (static_cast<int>(i) == rec.demo_index) in.demo_slot = static_cast<int>(slot);
        Tensor cp = Tensor::zeros({3, static_cast<std::size_t>(cfg.m_control_points)});
        for (int j = 0; j < cfg.m_control_points; ++j) {
            const ControlPoint& c = rec.control_points[i][static_cast<std::size_t>(j)];
            cp.v[static_cast<std::size_t>(j)] = c.lat_offset / cfg.lat_scale;
            cp.v[static_cast<std::size_t>(cfg.m_control_points + j)] = c.yaw / cfg.yaw_scale;
            cp.v[static_cast<std::size_t>(2 * cfg.m_control_points + j)] = c.progress / cfg.progress_scale;
        }
        in.cp.push_back(std::move(cp));
        Tensor pif = Tensor::zeros({static_cast<std::size_t>(cfg.k_features)});
        for (int kf = 0; kf < cfg.k_features; ++kf)
            pif.v[static_cast<std::size_t>(kf)] = rec.features[i][static_cast<std::size_t>(kf)] / cfg.pif_scale;
        in.pif.push_back(std::move(pif));
        Tensor act = Tensor::zeros({static_cast<std::size_t>(cfg.act_dim())});
        for (int a = 0; a < cfg.n_actions; ++a) {
            act.v[static_cast<std::size_t>(3 * a)] = rec.actions[i][static_cast<std::size_t>(3 * a)] / cfg.accel_scale;
            act.v[static_cast<std::size_t>(3 * a + 1)] =
                rec.actions[i][static_cast<std::size_t>(3 * a + 1)] / cfg.curv_rate_scale;
            act.v[static_cast<std::size_t>(3 * a + 2)] =
                rec.actions[i][static_cast<std::size_t>(3 * a + 2)] / cfg.duration_scale;
        }
        in.act.push_back(std::move(act));
        in.dist_raw.push_back(control_point_distance(rec.cp_states[i], demo_cps, dw));
        in.features.push_back(rec.features[i]);
        in.valid.push_back(true);
    }
    while (static_cast<int>(in.valid.size()) < cfg.n_policies_in) {
        in.valid.push_back(false);
        in.cp.push_back(Tensor::zeros({3, static_cast<std::size_t>(cfg.m_control_points)}));
        in.pif.push_back(Tensor::zeros({static_cast<std::size_t>(cfg.k_features)}));
        in.act.push_back(Tensor::zeros({static_cast<std::size_t>(cfg.act_dim())}));
        in.dist_raw.push_back(0.0);
    }
    double dmax = 0.0;
    for (int i = 0; i < in.n_real; ++i) dmax = std::max(dmax, in.dist_raw[static_cast<std::size_t>(i)]);
    in.dist_norm.assign(in.dist_raw.size(), 0.0);
    if (dmax > 0.0)
        for (std::size_t i = 0; i < in.dist_raw.size(); ++i) in.dist_norm[i] = in.dist_raw[i] / dmax;
    return in;
}

// ---- parameter initialization ---------------------------------------------

namespace detail {

inline Tensor xavier(Rng& rng, std::vector<std::size_t> shape, double fan_in, double fan_out) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : t.v) x = rng.uniform(-limit, limit);
    return t;
}

inline void add_fc(ParamStore& p, Rng& rng, const std::string& name, int out, int in) {
    p.add(name + ".w", xavier(rng, {static_cast<std::size_t>(out), static_cast<std::size_t>(in)}, in, out));
    p.add(name + ".b", Tensor::zeros({static_cast<std::size_t>(out)}));
}

inline void add_conv(ParamStore& p, Rng& rng, const std::string& name, int cout, int cin, int k) {
    p.add(name + ".w", xavier(rng, {static_cast<std::size_t>(cout), static_cast<std::size_t>(cin),
                                    static_cast<std::size_t>(k)},
                              cin * k, cout * k));
    p.add(name + ".b", Tensor::zeros({static_cast<std::size_t>(cout)}));
}

}  // namespace detail

inline ParamStore init_policy_net_params(const NetConfig& cfg, Method method, std::uint64_t seed) {
    ParamStore p;
    Rng rng(derive_seed(seed, 0xA11));
    detail::add_conv(p, rng, "enc.conv1", cfg.enc_ch1, 3, 3);
    detail::add_conv(p, rng, "enc.conv2", cfg.enc_ch2, cfg.enc_ch1, 3);
    detail::add_fc(p, rng, "enc.fc", cfg.latent, cfg.enc_ch2 + cfg.k_features + cfg.act_dim());

    const Method base = base_method(method);
    if (base == Method::kPacnn || base == Method::kPacnnS) {
        detail::add_conv(p, rng, "att.conv", cfg.att_ch, 3, 3);
        detail::add_fc(p, rng, "att.fc1", cfg.att_hidden, cfg.att_ch * cfg.att_pool_len());
        detail::add_fc(p, rng, "att.fc2", 1, cfg.att_hidden);
        p.add("att.gamma", Tensor::scalar(0.0));  // starts attention-independent
        detail::add_fc(p, rng, "ctx", cfg.context_dim, cfg.latent);
    } else if (base == Method::k1dcnn) {
        detail::add_fc(p, rng, "flat.fc1", cfg.fc_hidden, cfg.n_policies_in * cfg.latent);
        detail::add_fc(p, rng, "ctx", cfg.context_dim, cfg.fc_hidden);
    } else if (base == Method::kBi1dcnn) {
        detail::add_conv(p, rng, "bi.conv1", cfg.bi_ch1, cfg.latent, 3);
        detail::add_conv(p, rng, "bi.conv2", cfg.bi_ch2, cfg.bi_ch1, 3);
        detail::add_fc(p, rng, "ctx", cfg.context_dim, cfg.bi_ch2);
    } else {
        throw ConfigError("init_policy_net_params: not a policy-network method");
    }
    detail::add_fc(p, rng, "head.fc1", cfg.head_hidden, cfg.context_dim);
    detail::add_fc(p, rng, "head.fc2", cfg.k_features, cfg.head_hidden);
    p.meta["method"] = method_name(method);
    p.meta["format"] = "policy-net";
    return p;
}

inline ParamStore init_tan_params(const NetConfig& cfg, std::uint64_t seed) {
    ParamStore p;
    Rng rng(derive_seed(seed, 0x7A2));
    const int in_dim = cfg.context_dim + cfg.k_features;
    const int h = cfg.tan_hidden;
    detail::add_fc(p, rng, "tan.l1.wih", 4 * h, in_dim);
    detail::add_fc(p, rng, "tan.l1.whh", 4 * h, h);
    detail::add_fc(p, rng, "tan.l2.wih", 4 * h, h);
    detail::add_fc(p, rng, "tan.l2.whh", 4 * h, h);
    // the .b of wih tensors double as the cell bias; whh biases stay unused
    for (const char* cell : {"tan.l1", "tan.l2"}) {
        Tensor& b = p.value(std::string(cell) + ".wih.b");
        for (int i = h; i < 2 * h; ++i) b.v[static_cast<std::size_t>(i)] = 1.0;  // forget gate
    }
    detail::add_fc(p, rng, "tan.fc1", 32, h);
    detail::add_fc(p, rng, "tan.fc2", 32, 32);
    detail::add_fc(p, rng, "tan.fc3", 16, 32);
    detail::add_fc(p, rng, "tan.fc4", cfg.history, 16);
    p.meta["method"] = "tan";
    p.meta["format"] = "tan";
    return p;
}

// ---- forward passes --------------------------------------------------------

struct PolicyNetOutput {
    Var theta;    // [K], non-negative
    Var context;  // [C]
    Var alpha;    // [N] attention over policy slots (attention methods only)
    bool has_alpha = false;
};

namespace detail {

inline Var fc(Tape& tape, ParamStore& p, const std::string& name, const Var& x) {
    Var w = tape.param(p.value(name + ".w"), p.grad(name + ".w"));
    Var b = tape.param(p.value(name + ".b"), p.grad(name + ".b"));
    return fully_connected(x, w, b);
}

inline Var conv(Tape& tape, ParamStore& p, const std::string& name, const Var& x, int pad) {
    Var w = tape.param(p.value(name + ".w"), p.grad(name + ".w"));
    Var b = tape.param(p.value(name + ".b"), p.grad(name + ".b"));
    return conv1d(x, w, b, 1, pad);
}

// Shared policy encoder: conv stack over the control-point channels, global
// average over time, then a fully-connected fusion with the path-integral
// features and action parameters.
inline Var encode_policy(Tape& tape, ParamStore& p, const NetInput& in, std::size_t slot) {
    Var x = tape.constant(in.cp[slot]);
    Var c1 = relu(conv(tape, p, "enc.conv1", x, 1));
    Var c2 = relu(conv(tape, p, "enc.conv2", c1, 1));
    Var pooled = mean_time(c2);
    Var fused = concat({pooled, tape.constant(in.pif[slot]), tape.constant(in.act[slot])});
    return nn::tanh(fc(tape, p, "enc.fc", fused));
}

inline Var attention_logit(Tape& tape, ParamStore& p, const NetInput& in, std::size_t slot) {
    Var x = tape.constant(in.cp[slot]);
    Var c = relu(conv(tape, p, "att.conv", x, 1));
    Var pooled = avgpool1d(c, 2, 2);
    Var flat = reshape(pooled, {pooled.value().size()});
    Var h = relu(fc(tape, p, "att.fc1", flat));
    return fc(tape, p, "att.fc2", h);  // [1]
}

}  // namespace detail

inline PolicyNetOutput policy_net_forward(Tape& tape, ParamStore& params, const NetInput& in,
                                          const NetConfig& cfg, Method method) {
    const Method base = base_method(method);
    const std::size_t n = in.cp.size();
    if (static_cast<int>(n) != cfg.n_policies_in)
        throw DimensionError("forward: input has " + std::to_string(n) + " slots, config wants " +
                             std::to_string(cfg.n_policies_in));

    std::vector<Var> latents;
    latents.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (in.valid[i]) {
            latents.push_back(detail::encode_policy(tape, params, in, i));
        } else {
            latents.push_back(tape.constant(Tensor::zeros({static_cast<std::size_t>(cfg.latent)})));
        }
    }
    Var h_matrix = stack_rows(latents);

    PolicyNetOutput out;
    Var context_raw;
    if (base == Method::kPacnn || base == Method::kPacnnS) {
        std::vector<Var> logits;
        logits.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (in.valid[i])
                logits.push_back(detail::attention_logit(tape, params, in, i));
            else
                logits.push_back(tape.constant(Tensor::scalar(0.0)));  // masked out
        }
        out.alpha = softmax(concat(logits), in.valid);
        out.has_alpha = true;
        Var attended = attend(out.alpha, h_matrix);

        Tensor mean_w = Tensor::zeros({n});
        for (std::size_t i = 0; i < n; ++i)
            if (in.valid[i]) mean_w.v[i] = 1.0 / static_cast<double>(in.n_real);
        Var mean_h = attend(tape.constant(mean_w), h_matrix);

        Var gamma = tape.param(params.value("att.gamma"), params.grad("att.gamma"));
        Var combined = add(scalar_mul(gamma, attended), mean_h);
        context_raw = nn::tanh(detail::fc(tape, params, "ctx", combined));
    } else if (base == Method::k1dcnn) {
        Var flat = reshape(h_matrix, {h_matrix.value().size()});
        Var hidden = relu(detail::fc(tape, params, "flat.fc1", flat));
        context_raw = nn::tanh(detail::fc(tape, params, "ctx", hidden));
    } else if (base == Method::kBi1dcnn) {
        Var channels = transpose2d(h_matrix);  // [latent, N]
        Var c1 = relu(detail::conv(tape, params, "bi.conv1", channels, 1));
        Var pooled = avgpool1d(c1, 2, 2);
        Var c2 = relu(detail::conv(tape, params, "bi.conv2", pooled, 1));
        context_raw = nn::tanh(detail::fc(tape, params, "ctx", mean_time(c2)));
    } else {
        throw ConfigError("policy_net_forward: not a policy-network method");
    }

    out.context = context_raw;
    Var head = nn::tanh(detail::fc(tape, params, "head.fc1", context_raw));
    out.theta = softplus(detail::fc(tape, params, "head.fc2", head));
    return out;
}

// Semi-supervised attention loss: expected normalized distance to the
// demonstration under the attention distribution. Zero when the attention is
// one-hot on the demo; drives mass toward expert-like policies.
inline Var attention_loss(Tape& tape, const Var& alpha, const std::vector<double>& dist_norm) {
    if (alpha.value().size() != dist_norm.size())
        throw DimensionError("attention_loss: alpha " + shape_str(alpha.value().shape) + " vs " +
                             std::to_string(dist_norm.size()) + " distances");
    return dot(alpha, tape.constant(Tensor::vec(dist_norm)));
}

// Piecewise-constant average upsampling of an attention vector to the
// original policy-set length; renormalized so the mass stays 1.
inline std::vector<double> upsample_attention(const std::vector<double>& att, std::size_t target) {
    if (att.empty() || target < att.size())
        throw DimensionError("upsample_attention: target shorter than source");
    std::vector<double> out(target);
    for (std::size_t i = 0; i < target; ++i) out[i] = att[i * att.size() / target];
    double s = 0.0;
    for (double x : out) s += x;
    if (s > 0.0)
        for (double& x : out) x /= s;
    return out;
}

struct TanOutput {
    Var weights;     // [H] simplex over history slots
    Var theta_next;  // [K] convex mixture of the history's reward weights
};

// Two-layer recurrent encoder over the (context, theta) history, four
// fully-connected layers, softmax to temporal weights, then the reward
// mixture theta_next = sum_h w_h theta^(h).
inline TanOutput tan_forward(Tape& tape, ParamStore& params,
                             const std::vector<std::vector<double>>& contexts,
                             const std::vector<std::vector<double>>& thetas, const NetConfig& cfg) {
    if (static_cast<int>(contexts.size()) != cfg.history ||
        static_cast<int>(thetas.size()) != cfg.history)
        throw DimensionError("tan_forward: history length " + std::to_string(contexts.size()) +
                             "/" + std::to_string(thetas.size()) + ", expected " +
                             std::to_string(cfg.history));
    const std::size_t h = static_cast<std::size_t>(cfg.tan_hidden);
    LstmState s1{tape.constant(Tensor::zeros({h})), tape.constant(Tensor::zeros({h}))};
    LstmState s2{tape.constant(Tensor::zeros({h})), tape.constant(Tensor::zeros({h}))};
    Var l1_wih = tape.param(params.value("tan.l1.wih.w"), params.grad("tan.l1.wih.w"));
    Var l1_whh = tape.param(params.value("tan.l1.whh.w"), params.grad("tan.l1.whh.w"));
    Var l1_b = tape.param(params.value("tan.l1.wih.b"), params.grad("tan.l1.wih.b"));
    Var l2_wih = tape.param(params.value("tan.l2.wih.w"), params.grad("tan.l2.wih.w"));
    Var l2_whh = tape.param(params.value("tan.l2.whh.w"), params.grad("tan.l2.whh.w"));
    Var l2_b = tape.param(params.value("tan.l2.wih.b"), params.grad("tan.l2.wih.b"));

    for (int t = 0; t < cfg.history; ++t) {
        if (static_cast<int>(contexts[static_cast<std::size_t>(t)].size()) != cfg.context_dim ||
            static_cast<int>(thetas[static_cast<std::size_t>(t)].size()) != cfg.k_features)
            throw DimensionError("tan_forward: slot " + std::to_string(t) + " has wrong width");
        std::vector<double> joint = contexts[static_cast<std::size_t>(t)];
        joint.insert(joint.end(), thetas[static_cast<std::size_t>(t)].begin(),
                     thetas[static_cast<std::size_t>(t)].end());
        Var x = tape.constant(Tensor::vec(joint));
        s1 = recurrent_cell_step(x, s1, l1_wih, l1_whh, l1_b);
        s2 = recurrent_cell_step(s1.h, s2, l2_wih, l2_whh, l2_b);
    }

    Var f1 = relu(detail::fc(tape, params, "tan.fc1", s2.h));
    Var f2 = relu(detail::fc(tape, params, "tan.fc2", f1));
    Var f3 = relu(detail::fc(tape, params, "tan.fc3", f2));
    TanOutput out;
    out.weights = softmax(detail::fc(tape, params, "tan.fc4", f3));

    Tensor theta_hist = Tensor::zeros({static_cast<std::size_t>(cfg.history),
                                       static_cast<std::size_t>(cfg.k_features)});
    for (int t = 0; t < cfg.history; ++t)
        for (int kf = 0; kf < cfg.k_features; ++kf)
            theta_hist.v[static_cast<std::size_t>(t * cfg.k_features + kf)] =
                thetas[static_cast<std::size_t>(t)][static_cast<std::size_t>(kf)];
    out.theta_next = attend(out.weights, tape.constant(theta_hist));
    return out;
}

// ---- optimizers -------------------------------------------------------------

// Adam on the ascent direction; state keyed by parameter name.
struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void step(ParamStore& p, double lr) {
        ++t;
        for (auto& [name, val] : p.values) {
            const Tensor& g = p.grads.at(name);
            if (!m.count(name)) {
                m[name] = Tensor::zeros(g.shape);
                v[name] = Tensor::zeros(g.shape);
            }
            Tensor& mt = m[name];
            Tensor& vt = v[name];
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
            for (std::size_t i = 0; i < g.size(); ++i) {
                mt.v[i] = beta1 * mt.v[i] + (1.0 - beta1) * g.v[i];
                vt.v[i] = beta2 * vt.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
                val.v[i] += lr * (mt.v[i] / bc1) / (std::sqrt(vt.v[i] / bc2) + eps);
            }
        }
    }
};

// ---- training ----------------------------------------------------------------

struct TrainPoint {
    int epoch = 0;
    double objective = 0.0;  // mean log-likelihood minus the attention term
    double mean_evd = 0.0;
    int evd_degenerate = 0;
    double mean_ed = 0.0;
};

struct PolicyNetTrainResult {
    ParamStore params;
    std::vector<TrainPoint> train_curve;
    std::vector<TrainPoint> validation_curve;  // every validate_every epochs
};

namespace detail {

inline TrainPoint eval_policy_net(ParamStore& params, const std::vector<NetInput>& inputs,
                                  const NetConfig& cfg, Method method, int epoch) {
    TrainPoint pt;
    pt.epoch = epoch;
    double ed_acc = 0.0;
    for (const NetInput& in : inputs) {
        Tape tape;
        PolicyNetOutput out = policy_net_forward(tape, params, in, cfg, method);
        const std::vector<double>& theta = out.theta.value().v;
        pt.objective += irl::log_likelihood(in.features, in.demo_slot, theta);
        if (auto e = irl::evd(in.features, in.demo_slot, theta))
            pt.mean_evd += *e;
        else
            ++pt.evd_degenerate;
        irl::CycleData cd;
        cd.features = in.features;
        cd.demo = in.demo_slot;
        cd.demo_distance.assign(in.dist_raw.begin(), in.dist_raw.begin() + in.n_real);
        ed_acc += irl::ed(cd, theta);
    }
    const double n = static_cast<double>(inputs.size());
    pt.objective /= n;
    const int evd_n = static_cast<int>(inputs.size()) - pt.evd_degenerate;
    pt.mean_evd = evd_n > 0 ? pt.mean_evd / evd_n : 0.0;
    pt.mean_ed = ed_acc / n;
    return pt;
}

}  // namespace detail

// Trains PACNN / 1DCNN / Bi1DCNN (optionally with the semi-supervised
// attention loss) by backpropagating the maximum entropy gradient through the
// reward head: the seed planted at theta is dL/dtheta = E_p[f] - f^D, and the
// tape carries it into every parameter.
inline PolicyNetTrainResult train_policy_net(const std::vector<CycleRecord>& train,
                                             const std::vector<CycleRecord>& validation,
                                             const NetConfig& cfg, Method method,
                                             const DistanceWeights& dw = {}) {
    if (train.empty()) throw DatasetError("train_policy_net: empty dataset");
    PolicyNetTrainResult res;
    res.params = init_policy_net_params(cfg, method, cfg.seed);

    std::vector<NetInput> inputs;
    inputs.reserve(train.size());
    for (const CycleRecord& r : train) inputs.push_back(build_net_input(r, cfg, dw));
    std::vector<NetInput> val_inputs;
    for (const CycleRecord& r : validation) val_inputs.push_back(build_net_input(r, cfg, dw));

    AdamState adam;
    const bool use_adam = cfg.optimizer == "adam";
    if (!use_adam && cfg.optimizer != "sgd")
        throw ConfigError("unknown optimizer: " + cfg.optimizer);

    std::vector<int> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double objective = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const double inv = 1.0 / static_cast<double>(end - start);
            res.params.zero_grads();
            for (std::size_t bi = start; bi < end; ++bi) {
                const NetInput& in = inputs[static_cast<std::size_t>(order[bi])];
                Tape tape;
                PolicyNetOutput out = policy_net_forward(tape, res.params, in, cfg, method);
                const std::vector<double>& theta = out.theta.value().v;
                objective += irl::log_likelihood(in.features, in.demo_slot, theta);
                std::vector<double> g = irl::maxent_gradient(in.features, in.demo_slot, theta);
                for (double& x : g) x *= inv;
                tape.seed(out.theta, Tensor::vec(g));
                if (uses_attention_loss(method)) {
                    Var l_att = attention_loss(tape, out.alpha, in.dist_norm);
                    objective -= cfg.lambda_att * l_att.value().v[0];
                    tape.seed_scalar(l_att, -cfg.lambda_att * inv);
                }
                tape.backward();
            }
            if (cfg.clip_norm > 0.0) res.params.clip_grads(cfg.clip_norm);
            if (use_adam)
                adam.step(res.params, cfg.step);
            else
                res.params.ascend(cfg.step);
        }
        if (!std::isfinite(objective))
            throw DivergenceError("train_policy_net: non-finite loss at epoch " + std::to_string(epoch));
        TrainPoint pt;
        pt.epoch = epoch;
        pt.objective = objective / static_cast<double>(inputs.size());
        res.train_curve.push_back(pt);
        if (!val_inputs.empty() && (epoch + 1) % cfg.validate_every == 0)
            res.validation_curve.push_back(detail::eval_policy_net(res.params, val_inputs, cfg, method, epoch));
    }
    return res;
}

struct PolicyNetInference {
    std::vector<double> theta;
    std::vector<double> context;
    std::vector<double> alpha;  // empty for non-attention methods
    int n_real = 0;
};

inline PolicyNetInference policy_net_infer(ParamStore& params, const NetInput& in,
                                           const NetConfig& cfg, Method method) {
    Tape tape;
    PolicyNetOutput out = policy_net_forward(tape, params, in, cfg, method);
    PolicyNetInference inf;
    inf.theta = out.theta.value().v;
    inf.context = out.context.value().v;
    if (out.has_alpha) inf.alpha = out.alpha.value().v;
    inf.n_real = in.n_real;
    return inf;
}

// One supervised unit for the temporal stage: a full history of (context,
// theta) slots and the next cycle's policy set the mixture is scored on.
struct TanSample {
    std::vector<std::vector<double>> contexts;  // H x C, oldest first
    std::vector<std::vector<double>> thetas;    // H x K
    irl::CycleData next;
};

// Builds TAN training samples from a sequential dataset using a trained
// policy network. The history bootstraps by repeating the oldest cycle;
// cycles without a successor are skipped and counted.
struct TanSampleBuild {
    std::vector<TanSample> samples;
    int skipped = 0;
};

inline TanSampleBuild make_tan_samples(const std::vector<CycleRecord>& records, ParamStore& params,
                                       const NetConfig& cfg, Method method,
                                       const DistanceWeights& dw = {}) {
    TanSampleBuild out;
    std::vector<std::vector<double>> contexts, thetas;
    for (const CycleRecord& r : records) {
        NetInput in = build_net_input(r, cfg, dw);
        PolicyNetInference inf = policy_net_infer(params, in, cfg, base_method(method));
        contexts.push_back(inf.context);
        thetas.push_back(inf.theta);
    }
    for (std::size_t t = 0; t + 1 < records.size(); ++t) {
        if (records[t + 1].cycle != records[t].cycle + 1) {
            ++out.skipped;
            continue;
        }
        TanSample s;
        for (int hslot = cfg.history - 1; hslot >= 0; --hslot) {
            const long src = std::max<long>(0, static_cast<long>(t) - hslot);
            s.contexts.push_back(contexts[static_cast<std::size_t>(src)]);
            s.thetas.push_back(thetas[static_cast<std::size_t>(src)]);
        }
        s.next = records[t + 1].to_cycle_data(dw);
        out.samples.push_back(std::move(s));
    }
    return out;
}

struct TanTrainResult {
    ParamStore params;
    std::vector<TrainPoint> curve;
};

// Second training stage: the policy network is frozen, the temporal network
// learns to mix the history's reward functions so the mixture maximizes the
// next cycle's demonstration likelihood.
inline TanTrainResult train_tan(const std::vector<TanSample>& samples, const NetConfig& cfg) {
    if (samples.empty()) throw DatasetError("train_tan: no samples");
    TanTrainResult res;
    res.params = init_tan_params(cfg, cfg.seed);
    AdamState adam;
    const bool use_adam = cfg.optimizer == "adam";

    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double objective = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const double inv = 1.0 / static_cast<double>(end - start);
            res.params.zero_grads();
            for (std::size_t bi = start; bi < end; ++bi) {
                const TanSample& s = samples[static_cast<std::size_t>(order[bi])];
                Tape tape;
                TanOutput out = tan_forward(tape, res.params, s.contexts, s.thetas, cfg);
                const std::vector<double>& theta = out.theta_next.value().v;
                objective += irl::log_likelihood(s.next.features, s.next.demo, theta);
                std::vector<double> g = irl::maxent_gradient(s.next.features, s.next.demo, theta);
                for (double& x : g) x *= inv;
                tape.seed(out.theta_next, Tensor::vec(g));
                tape.backward();
            }
            if (cfg.clip_norm > 0.0) res.params.clip_grads(cfg.clip_norm);
            if (use_adam)
                adam.step(res.params, cfg.step);
            else
                res.params.ascend(cfg.step);
        }
        if (!std::isfinite(objective))
            throw DivergenceError("train_tan: non-finite loss at epoch " + std::to_string(epoch));
        TrainPoint pt;
        pt.epoch = epoch;
        pt.objective = objective / static_cast<double>(samples.size());
        res.curve.push_back(pt);
    }
    return res;
}

struct TanInference {
    std::vector<double> weights;
    std::vector<double> theta_next;
};

inline TanInference tan_infer(ParamStore& params, const std::vector<std::vector<double>>& contexts,
                              const std::vector<std::vector<double>>& thetas, const NetConfig& cfg) {
    Tape tape;
    TanOutput out = tan_forward(tape, params, contexts, thetas, cfg);
    return {out.weights.value().v, out.theta_next.value().v};
}

}  // namespace pirl::nn
