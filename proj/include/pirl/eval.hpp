#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "pirl/dataset.hpp"
#include "pirl/nets.hpp"

namespace pirl::eval {

using nn::Method;

// Per-cycle evaluation output. Distances to the recorded odometry are only
// filled when an odometry trace is supplied (playback datasets).
struct EvalRow {
    long cycle = 0;
    std::optional<double> evd;  // empty: degenerate normalization, excluded from means
    double ed = 0.0;
    double opd = 0.0;
    double dist_opt_odo = -1.0;   // distance of the argmax policy to the odometry
    double dist_demo_odo = -1.0;  // the demonstration's own projection distance
    std::vector<double> theta;    // weights the cycle was evaluated with
    std::vector<double> temporal_weights;  // ptacnn only
    std::vector<double> attention;         // upsampled to the record's policy count
};

struct RunReport {
    std::string method;
    int history = 10;
    std::size_t parameter_count = 0;
    std::vector<EvalRow> rows;

    double mean_ed = 0.0;
    double mean_opd = 0.0;
    double mean_evd = 0.0;
    int evd_degenerate = 0;

    void finalize() {
        mean_ed = mean_opd = mean_evd = 0.0;
        evd_degenerate = 0;
        if (rows.empty()) return;
        int evd_n = 0;
        for (const EvalRow& r : rows) {
            mean_ed += r.ed;
            mean_opd += r.opd;
            if (r.evd) {
                mean_evd += *r.evd;
                ++evd_n;
            } else {
                ++evd_degenerate;
            }
        }
        mean_ed /= static_cast<double>(rows.size());
        mean_opd /= static_cast<double>(rows.size());
        mean_evd = evd_n > 0 ? mean_evd / evd_n : 0.0;
    }
};

// Rolling per-method reward inference. Baselines evaluate each cycle with the
// arithmetic mean of the inferred weights over the history window; the
// temporal methods mix the history's rewards with the trained TAN, using
// slots that end at the previous cycle (the prediction is made before the
// cycle it scores). The window bootstraps by repeating the oldest entry.
class MethodInference {
public:
    MethodInference(Method method, int history, const nn::NetConfig& net_cfg,
                    nn::ParamStore* policy_params, nn::ParamStore* tan_params,
                    std::vector<double> lirl_theta = {})
        : method_(method),
          history_(history),
          net_cfg_(net_cfg),
          policy_params_(policy_params),
          tan_params_(tan_params),
          lirl_theta_(std::move(lirl_theta)) {
        if (method_ == Method::kLirl && lirl_theta_.empty())
            throw ConfigError("lirl inference requires trained weights");
        if (method_ != Method::kLirl && policy_params_ == nullptr)
            throw ConfigError("network inference requires parameters");
        if ((method_ == Method::kPtacnn || method_ == Method::kPtacnnS) && tan_params_ == nullptr)
            throw ConfigError("temporal methods require TAN parameters");
    }

    struct CycleInference {
        std::vector<double> theta_eval;
        std::vector<double> theta_raw;
        std::vector<double> attention;  // slot-level, empty for non-attention methods
        std::vector<double> temporal_weights;
        int n_real = 0;
    };

    CycleInference step(const nn::NetInput& input) {
        CycleInference out;
        if (method_ == Method::kLirl) {
            out.theta_raw = lirl_theta_;
            out.theta_eval = lirl_theta_;
            return out;
        }
        nn::PolicyNetInference inf =
            nn::policy_net_infer(*policy_params_, input, net_cfg_, nn::base_method(method_));
        out.theta_raw = inf.theta;
        out.attention = inf.alpha;
        out.n_real = inf.n_real;

        if (method_ == Method::kPtacnn || method_ == Method::kPtacnnS) {
            auto slots_ctx = window(contexts_, inf.context);
            auto slots_theta = window(thetas_, inf.theta);
            nn::TanInference tan = nn::tan_infer(*tan_params_, slots_ctx, slots_theta, net_cfg_);
            out.theta_eval = tan.theta_next;
            out.temporal_weights = tan.weights;
        } else {
            thetas_.push_back(inf.theta);
            while (static_cast<int>(thetas_.size()) > history_) thetas_.pop_front();
            out.theta_eval.assign(inf.theta.size(), 0.0);
            for (const auto& t : thetas_)
                for (std::size_t k = 0; k < t.size(); ++k) out.theta_eval[k] += t[k];
            for (double& v : out.theta_eval) v /= static_cast<double>(thetas_.size());
            return out;
        }
        contexts_.push_back(inf.context);
        thetas_.push_back(inf.theta);
        while (static_cast<int>(contexts_.size()) > history_) contexts_.pop_front();
        while (static_cast<int>(thetas_.size()) > history_) thetas_.pop_front();
        return out;
    }

private:
    // History slots ending at the previous cycle, oldest first; the current
    // inference only backfills when the window is still empty (bootstrap).
    std::vector<std::vector<double>> window(const std::deque<std::vector<double>>& hist,
                                            const std::vector<double>& current) const {
        std::vector<std::vector<double>> slots;
        for (int i = 0; i < history_; ++i) {
            const long idx = static_cast<long>(hist.size()) - history_ + i;
            if (hist.empty()) {
                slots.push_back(current);
            } else if (idx < 0) {
                slots.push_back(hist.front());
            } else {
                slots.push_back(hist[static_cast<std::size_t>(idx)]);
            }
        }
        return slots;
    }

    Method method_;
    int history_;
    nn::NetConfig net_cfg_;
    nn::ParamStore* policy_params_;
    nn::ParamStore* tan_params_;
    std::vector<double> lirl_theta_;
    std::deque<std::vector<double>> contexts_;
    std::deque<std::vector<double>> thetas_;
};

inline int argmax_value(const std::vector<std::vector<double>>& features,
                        const std::vector<double>& theta) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double v = -std::inner_product(theta.begin(), theta.end(), features[i].begin(), 0.0);
        if (v > best_v) {
            best_v = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

inline double trajectory_distance_to_odometry(const std::vector<VehicleState>& cps,
                                              const OdometryRecord& odo, const DistanceWeights& dw) {
    std::vector<VehicleState> ref;
    ref.reserve(cps.size());
    for (const VehicleState& s : cps) {
        OdometrySample o = odo.at(clampd(s.time, odo.t_begin(), odo.t_end()));
        VehicleState v;
        v.x = o.x;
        v.y = o.y;
        v.yaw = o.yaw;
        v.speed = o.v;
        v.time = o.t;
        ref.push_back(v);
    }
    return control_point_distance(cps, ref, dw);
}

// Sequential evaluation: every method sees the cycles in order with a history
// of H; metrics per cycle are computed under the method's evaluated theta.
inline RunReport evaluate_sequential(const std::vector<CycleRecord>& records, Method method,
                                     int history, const nn::NetConfig& net_cfg,
                                     nn::ParamStore* policy_params, nn::ParamStore* tan_params,
                                     const std::vector<double>& lirl_theta,
                                     const OdometryRecord* odometry,
                                     const DistanceWeights& dw = {}) {
    RunReport report;
    report.method = nn::method_name(method);
    report.history = history;
    if (policy_params) report.parameter_count = policy_params->parameter_count();
    if (tan_params) report.parameter_count += tan_params->parameter_count();
    if (method == Method::kLirl) report.parameter_count = lirl_theta.size();

    MethodInference inference(method, history, net_cfg, policy_params, tan_params, lirl_theta);
    for (const CycleRecord& rec : records) {
        nn::NetInput input = nn::build_net_input(rec, net_cfg, dw);
        MethodInference::CycleInference inf = inference.step(input);

        EvalRow row;
        row.cycle = rec.cycle;
        row.theta = inf.theta_eval;
        row.temporal_weights = inf.temporal_weights;
        if (!inf.attention.empty()) {
            std::vector<double> used(inf.attention.begin(), inf.attention.begin() + inf.n_real);
            row.attention = nn::upsample_attention(used, rec.n_policies());
        }

        irl::CycleData cd = rec.to_cycle_data(dw);
        row.evd = irl::evd(cd.features, cd.demo, row.theta);
        row.ed = irl::ed(cd, row.theta);
        row.opd = irl::opd(cd, row.theta);
        if (odometry) {
            const int opt = argmax_value(cd.features, row.theta);
            row.dist_opt_odo = trajectory_distance_to_odometry(
                rec.cp_states[static_cast<std::size_t>(opt)], *odometry, dw);
            row.dist_demo_odo = rec.demo_distance;
        }
        report.rows.push_back(std::move(row));
    }
    report.finalize();
    return report;
}

// ---- closed loop -------------------------------------------------------------

struct ClosedLoopResult {
    std::vector<VehicleState> trajectory;  // executed sub-step trace
    std::vector<EvalRow> cycles;           // theta/attention/weights per cycle
    std::size_t checkpoints_hit = 0;
    std::size_t stop_lines_satisfied = 0;
    long collisions = 0;
    double path_length = 0.0;
    bool lap_complete = false;
    int expert_fallbacks = 0;
};

// Runs the simulator with live reward inference: sample a policy set, infer
// the situation-dependent reward from it, execute the optimal policy's first
// segment, repeat. Model-based collision filtering stays off; the learned
// reward alone controls the task.
inline ClosedLoopResult closed_loop_run(const Config& cfg, Method method, int history,
                                        const nn::NetConfig& net_cfg,
                                        nn::ParamStore* policy_params, nn::ParamStore* tan_params,
                                        const std::vector<double>& lirl_theta, int cycles,
                                        std::uint64_t seed) {
    Scenario sc = make_scenario(cfg);
    PlannerConfig pcfg = PlannerConfig::from_config(cfg);
    DistanceWeights dw = DistanceWeights::from_config(cfg);
    World world(sc);
    MethodInference inference(method, history, net_cfg, policy_params, tan_params, lirl_theta);

    ClosedLoopResult result;
    result.trajectory.push_back(sc.ego_start);
    PolicySet set = sample_policy_set(world, sc.ego_start, pcfg, derive_seed(seed, 0), 0);
    const double lap_length =
        sc.network.lanes[static_cast<std::size_t>(sc.n_loop_lanes / 2)].centerline.length();

    for (int c = 0; c < cycles; ++c) {
        CycleRecord rec = CycleRecord::from_policy_set(set, cfg.fingerprint(), sc.id, pcfg.horizon,
                                                       std::vector<double>(kFeatureCount, 0.0));
        nn::NetInput input = nn::build_net_input(rec, net_cfg, dw);
        MethodInference::CycleInference inf = inference.step(input);
        RewardWeights theta{inf.theta_eval};

        EvalRow row;
        row.cycle = c;
        row.theta = inf.theta_eval;
        row.temporal_weights = inf.temporal_weights;
        if (!inf.attention.empty()) {
            std::vector<double> used(inf.attention.begin(), inf.attention.begin() + inf.n_real);
            row.attention = nn::upsample_attention(used, set.policies.size());
        }
        result.cycles.push_back(std::move(row));

        MpcStepResult step = mpc_step(world, set, theta, pcfg, false,
                                      derive_seed(seed, static_cast<std::uint64_t>(c) + 1));
        for (std::size_t k = 1; k < step.executed.size(); ++k) {
            const VehicleState& s = step.executed[k];
            result.path_length += std::hypot(s.x - result.trajectory.back().x,
                                             s.y - result.trajectory.back().y);
            // footprint collision audit against the stepped world
            OrientedBox ego_box{s.position(), s.yaw, pcfg.ego_length, pcfg.ego_width};
            for (const TrafficVehicle& v : world.vehicles()) {
                const Polyline& cl = sc.network.lanes[static_cast<std::size_t>(v.lane)].centerline;
                const double obj_arc = cl.wrap_s(v.arc - v.speed * (step.executed.back().time - s.time));
                OrientedBox obj_box{cl.point_at(obj_arc), cl.heading_at(obj_arc), v.length, v.width};
                if (boxes_overlap(ego_box, obj_box)) ++result.collisions;
            }
            result.trajectory.push_back(s);
        }
        set = std::move(step.next_set);
    }
    result.checkpoints_hit = world.checkpoints_hit();
    std::size_t satisfied = 0;
    for (std::size_t i = 0; i < sc.stop_lines.size(); ++i)
        if (!world.stop_line_active(i)) ++satisfied;
    result.stop_lines_satisfied = satisfied;
    result.lap_complete = result.path_length >= lap_length &&
                          result.checkpoints_hit >= sc.checkpoints.size();
    return result;
}

}  // namespace pirl::eval
