// pirl — sampling-based planning with situation-dependent reward inference.
//
// Subcommands: collect (expert runs / open-loop training buffers), train
// (lirl and the network methods), eval (sequential playback evaluation),
// closedloop (simulator with live reward inference), report (aggregation).
//
// All outputs are deterministic for a fixed seed and config; wall-clock
// timestamps go only to the run.log sidecar.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pirl/dataset.hpp"
#include "pirl/eval.hpp"
#include "pirl/irl.hpp"
#include "pirl/nets.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pirl;

namespace {

// distinct exit codes per error family, checked by the test suite
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitMissingInput = 2;
constexpr int kExitHashMismatch = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitNoCycles = 5;

struct MissingInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoCyclesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw MissingInputError(what + " not found: " + path);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

// timestamps live here and only here
void write_run_log(const std::string& out_dir, const std::string& command) {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[64];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    std::ofstream f(fs::path(out_dir) / "run.log", std::ios::app);
    f << stamp << " " << command << "\n";
}

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct LoadedMethod {
    nn::Method method;
    nn::ParamStore policy_params;
    nn::ParamStore tan_params;
    std::vector<double> lirl_theta;
    bool has_policy = false;
    bool has_tan = false;
};

LoadedMethod load_method(const std::string& method_name, const std::string& params_path,
                         const std::string& tan_path, const Config& cfg) {
    LoadedMethod lm;
    lm.method = nn::method_from_string(method_name);
    require_file(params_path, "parameter container");
    nn::ParamStore params = nn::load_params(params_path);
    auto hash_it = params.meta.find("config_hash");
    if (hash_it != params.meta.end() && hash_it->second != hash_hex(cfg.fingerprint()))
        throw HashMismatchError("parameters were trained under a different config");
    if (lm.method == nn::Method::kLirl) {
        lm.lirl_theta = params.value("theta").v;
    } else {
        lm.policy_params = std::move(params);
        lm.has_policy = true;
    }
    if (lm.method == nn::Method::kPtacnn || lm.method == nn::Method::kPtacnnS) {
        require_file(tan_path, "TAN parameter container");
        lm.tan_params = nn::load_params(tan_path);
        lm.has_tan = true;
    }
    return lm;
}

std::string eval_rows_csv(const eval::RunReport& report) {
    std::string out = "cycle,evd,evd_degenerate,ed,opd,dist_opt_odo,dist_demo_odo";
    for (int k = 0; k < kFeatureCount; ++k) out += ",theta_" + std::to_string(k);
    out += "\n";
    for (const eval::EvalRow& r : report.rows) {
        out += std::to_string(r.cycle) + "," + fmt(r.evd.value_or(0.0)) + "," +
               (r.evd ? "0" : "1") + "," + fmt(r.ed) + "," + fmt(r.opd) + "," +
               fmt(r.dist_opt_odo) + "," + fmt(r.dist_demo_odo);
        for (double t : r.theta) out += "," + fmt(t);
        out += "\n";
    }
    return out;
}

std::string attention_csv(const std::vector<eval::EvalRow>& rows) {
    std::string out = "cycle,policy,alpha\n";
    for (const eval::EvalRow& r : rows)
        for (std::size_t i = 0; i < r.attention.size(); ++i)
            out += std::to_string(r.cycle) + "," + std::to_string(i) + "," + fmt(r.attention[i]) + "\n";
    return out;
}

std::string temporal_weights_csv(const std::vector<eval::EvalRow>& rows) {
    std::string out = "cycle,slot,weight\n";
    for (const eval::EvalRow& r : rows)
        for (std::size_t i = 0; i < r.temporal_weights.size(); ++i)
            out += std::to_string(r.cycle) + "," + std::to_string(i) + "," +
                   fmt(r.temporal_weights[i]) + "\n";
    return out;
}

json summary_json(const eval::RunReport& report) {
    json j;
    j["method"] = report.method;
    j["history"] = report.history;
    j["trainable_variables"] = report.parameter_count;
    j["cycles"] = report.rows.size();
    j["mean_ed"] = report.mean_ed;
    j["mean_opd"] = report.mean_opd;
    j["mean_evd"] = report.mean_evd;
    j["evd_degenerate"] = report.evd_degenerate;
    return j;
}

// ---- subcommands ------------------------------------------------------------

int cmd_collect(const std::string& config_path, const std::string& mode, int cycles,
                std::uint64_t seed, const std::string& split, const std::string& odometry_path,
                const std::string& out_dir) {
    require_file(config_path, "config");
    Config cfg = Config::load(config_path);
    fs::create_directories(out_dir);
    if (cycles <= 0) throw NoCyclesError("collect: no cycles requested");
    CollectResult res;
    if (mode == "expert") {
        res = collect_expert(cfg, out_dir, cycles, seed, split);
    } else if (mode == "training") {
        require_file(odometry_path, "odometry");
        OdometryRecord odo = read_odometry_csv(odometry_path);
        res = collect_training(cfg, odo, out_dir, cycles, seed, split);
    } else {
        throw CLI::ValidationError("--mode must be expert or training");
    }
    std::cout << "collected " << res.cycles_written << " cycles into " << out_dir << "\n";
    write_run_log(out_dir, "collect " + mode + " seed=" + std::to_string(seed));
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& method_name, const std::string& split,
              const std::string& val_split, std::uint64_t seed, const std::string& base_params,
              const std::string& out_dir) {
    require_file(config_path, "config");
    require_file(manifest_path, "manifest");
    Config cfg = Config::load(config_path);
    fs::create_directories(out_dir);
    nn::Method method = nn::method_from_string(method_name);
    DatasetManifest manifest = DatasetManifest::load(manifest_path);
    if (manifest.config_hash != cfg.fingerprint())
        throw HashMismatchError("dataset was collected under a different config");
    const std::string base_dir = fs::path(manifest_path).parent_path().string();
    nn::NetConfig net_cfg = nn::NetConfig::from_config(cfg);
    net_cfg.seed = seed;
    DistanceWeights dw = DistanceWeights::from_config(cfg);

    std::vector<CycleRecord> train_records = load_records(manifest, base_dir, split);
    if (train_records.empty()) throw NoCyclesError("train: empty split '" + split + "'");
    std::vector<CycleRecord> val_records;
    if (!val_split.empty()) val_records = load_records(manifest, base_dir, val_split);

    std::string metrics_csv = "epoch,kind,objective,mean_evd,evd_degenerate,mean_ed\n";
    const std::string params_path = (fs::path(out_dir) / "params.bin").string();

    if (method == nn::Method::kLirl) {
        irl::LirlConfig lcfg;
        lcfg.epochs = static_cast<int>(cfg.get_int("train.epochs", 200));
        lcfg.step = cfg.get_double("train.step", 0.05);
        lcfg.batch = static_cast<int>(cfg.get_int("train.batch", 32));
        lcfg.seed = seed;
        std::vector<irl::CycleData> data;
        data.reserve(train_records.size());
        for (const CycleRecord& r : train_records) data.push_back(r.to_cycle_data(dw));
        irl::LirlResult res = irl::train_lirl(data, lcfg);
        for (const irl::EpochMetrics& m : res.metrics)
            metrics_csv += std::to_string(m.epoch) + ",train," + fmt(m.mean_log_likelihood) + "," +
                           fmt(m.mean_evd) + "," + std::to_string(m.evd_degenerate) + "," +
                           fmt(m.mean_ed) + "\n";
        nn::ParamStore out;
        out.add("theta", nn::Tensor::vec(res.theta));
        out.meta["method"] = "lirl";
        out.meta["config_hash"] = hash_hex(cfg.fingerprint());
        nn::save_params(params_path, out);
    } else if (method == nn::Method::kPtacnn || method == nn::Method::kPtacnnS) {
        // second stage: contexts and rewards come from a trained policy net
        require_file(base_params, "base policy-network parameters");
        nn::ParamStore base = nn::load_params(base_params);
        if (!manifest.sequential)
            throw DatasetError("temporal training needs a sequential dataset");
        nn::TanSampleBuild samples = nn::make_tan_samples(train_records, base, net_cfg, method, dw);
        if (samples.samples.empty()) throw NoCyclesError("train: no temporal samples");
        if (samples.skipped > 0)
            std::cerr << "[pirl] skipped " << samples.skipped << " cycles without a successor\n";
        nn::TanTrainResult res = nn::train_tan(samples.samples, net_cfg);
        for (const nn::TrainPoint& p : res.curve)
            metrics_csv += std::to_string(p.epoch) + ",train," + fmt(p.objective) + ",0,0,0\n";
        res.params.meta["config_hash"] = hash_hex(cfg.fingerprint());
        res.params.meta["base_params"] = fs::path(base_params).filename().string();
        nn::save_params(params_path, res.params);
    } else {
        nn::PolicyNetTrainResult res = nn::train_policy_net(train_records, val_records, net_cfg,
                                                            method, dw);
        for (const nn::TrainPoint& p : res.train_curve)
            metrics_csv += std::to_string(p.epoch) + ",train," + fmt(p.objective) + ",0,0,0\n";
        for (const nn::TrainPoint& p : res.validation_curve)
            metrics_csv += std::to_string(p.epoch) + ",val," + fmt(p.objective) + "," +
                           fmt(p.mean_evd) + "," + std::to_string(p.evd_degenerate) + "," +
                           fmt(p.mean_ed) + "\n";
        res.params.meta["config_hash"] = hash_hex(cfg.fingerprint());
        nn::save_params(params_path, res.params);
    }
    write_text((fs::path(out_dir) / "training_metrics.csv").string(), metrics_csv);
    std::cout << "trained " << method_name << " -> " << params_path << "\n";
    write_run_log(out_dir, "train " + method_name + " seed=" + std::to_string(seed));
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& manifest_path,
             const std::string& method_name, const std::string& split,
             const std::string& params_path, const std::string& tan_path,
             const std::string& odometry_path, int history, const std::string& out_dir) {
    require_file(config_path, "config");
    require_file(manifest_path, "manifest");
    Config cfg = Config::load(config_path);
    fs::create_directories(out_dir);
    DatasetManifest manifest = DatasetManifest::load(manifest_path);
    if (manifest.config_hash != cfg.fingerprint())
        throw HashMismatchError("dataset was collected under a different config");
    const std::string base_dir = fs::path(manifest_path).parent_path().string();
    std::vector<CycleRecord> records = load_records(manifest, base_dir, split);
    if (records.empty()) throw NoCyclesError("eval: empty split '" + split + "'");

    nn::NetConfig net_cfg = nn::NetConfig::from_config(cfg);
    DistanceWeights dw = DistanceWeights::from_config(cfg);
    LoadedMethod lm = load_method(method_name, params_path, tan_path, cfg);
    OdometryRecord odo;
    bool have_odo = false;
    if (!odometry_path.empty()) {
        require_file(odometry_path, "odometry");
        odo = read_odometry_csv(odometry_path);
        have_odo = true;
    }
    eval::RunReport report = eval::evaluate_sequential(
        records, lm.method, history, net_cfg, lm.has_policy ? &lm.policy_params : nullptr,
        lm.has_tan ? &lm.tan_params : nullptr, lm.lirl_theta, have_odo ? &odo : nullptr, dw);

    write_text((fs::path(out_dir) / "rows.csv").string(), eval_rows_csv(report));
    if (nn::uses_attention(lm.method))
        write_text((fs::path(out_dir) / "attention.csv").string(), attention_csv(report.rows));
    if (lm.has_tan)
        write_text((fs::path(out_dir) / "temporal_weights.csv").string(),
                   temporal_weights_csv(report.rows));
    write_text((fs::path(out_dir) / "summary.json").string(), summary_json(report).dump(2) + "\n");
    std::cout << "eval " << method_name << ": mean_ed=" << report.mean_ed
              << " mean_opd=" << report.mean_opd << " over " << report.rows.size() << " cycles\n";
    write_run_log(out_dir, "eval " + method_name);
    return kExitOk;
}

int cmd_closedloop(const std::string& config_path, const std::string& method_name,
                   const std::string& params_path, const std::string& tan_path, int cycles,
                   int history, std::uint64_t seed, const std::string& out_dir) {
    require_file(config_path, "config");
    Config cfg = Config::load(config_path);
    fs::create_directories(out_dir);
    if (cycles <= 0) throw NoCyclesError("closedloop: no cycles requested");
    nn::NetConfig net_cfg = nn::NetConfig::from_config(cfg);
    LoadedMethod lm = load_method(method_name, params_path, tan_path, cfg);

    eval::ClosedLoopResult res = eval::closed_loop_run(
        cfg, lm.method, history, net_cfg, lm.has_policy ? &lm.policy_params : nullptr,
        lm.has_tan ? &lm.tan_params : nullptr, lm.lirl_theta, cycles, seed);

    std::string traj = "t,x,y,yaw,v\n";
    for (const VehicleState& s : res.trajectory)
        traj += fmt(s.time) + "," + fmt(s.x) + "," + fmt(s.y) + "," + fmt(s.yaw) + "," +
                fmt(s.speed) + "\n";
    write_text((fs::path(out_dir) / "trajectory.csv").string(), traj);

    std::string theta_csv = "cycle";
    for (int k = 0; k < kFeatureCount; ++k) theta_csv += ",theta_" + std::to_string(k);
    theta_csv += "\n";
    for (const eval::EvalRow& r : res.cycles) {
        theta_csv += std::to_string(r.cycle);
        for (double t : r.theta) theta_csv += "," + fmt(t);
        theta_csv += "\n";
    }
    write_text((fs::path(out_dir) / "theta.csv").string(), theta_csv);
    if (nn::uses_attention(lm.method))
        write_text((fs::path(out_dir) / "attention.csv").string(), attention_csv(res.cycles));
    if (lm.has_tan)
        write_text((fs::path(out_dir) / "temporal_weights.csv").string(),
                   temporal_weights_csv(res.cycles));

    json j;
    j["method"] = method_name;
    j["cycles"] = res.cycles.size();
    j["checkpoints_hit"] = res.checkpoints_hit;
    j["stop_lines_satisfied"] = res.stop_lines_satisfied;
    j["collisions"] = res.collisions;
    j["path_length"] = res.path_length;
    j["lap_complete"] = res.lap_complete;
    write_text((fs::path(out_dir) / "result.json").string(), j.dump(2) + "\n");
    std::cout << "closedloop " << method_name << ": path=" << res.path_length
              << "m checkpoints=" << res.checkpoints_hit << " collisions=" << res.collisions << "\n";
    write_run_log(out_dir, "closedloop " + method_name + " seed=" + std::to_string(seed));
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& eval_dirs, const std::string& out_dir) {
    fs::create_directories(out_dir);
    json methods = json::array();
    std::string csv = "method,trainable_variables,cycles,mean_ed,mean_opd,mean_evd\n";
    std::size_t total_cycles = 0;
    for (const std::string& dir : eval_dirs) {
        const std::string path = (fs::path(dir) / "summary.json").string();
        require_file(path, "eval summary");
        std::ifstream f(path);
        json j = json::parse(f);
        total_cycles += j["cycles"].get<std::size_t>();
        methods.push_back(j);
        csv += j["method"].get<std::string>() + "," +
               std::to_string(j["trainable_variables"].get<std::size_t>()) + "," +
               std::to_string(j["cycles"].get<std::size_t>()) + "," +
               fmt(j["mean_ed"].get<double>()) + "," + fmt(j["mean_opd"].get<double>()) + "," +
               fmt(j["mean_evd"].get<double>()) + "\n";
    }
    if (total_cycles == 0) throw NoCyclesError("report: no cycles in any eval");
    json j;
    j["methods"] = methods;
    write_text((fs::path(out_dir) / "comparison.json").string(), j.dump(2) + "\n");
    write_text((fs::path(out_dir) / "comparison.csv").string(), csv);
    std::cout << "report over " << eval_dirs.size() << " evals -> " << out_dir << "\n";
    write_run_log(out_dir, "report");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sampling-based planner with situation-dependent reward inference"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, method = "pacnn", split = "train", val_split;
    std::string params_path, tan_path, odometry_path, out_dir = ".", base_params, mode = "expert";
    std::vector<std::string> eval_dirs;
    int cycles = 100, history = 10;
    std::uint64_t seed = 1;

    auto* collect = app.add_subcommand("collect", "run the simulator and write a dataset");
    collect->add_option("--config", config_path)->required();
    collect->add_option("--mode", mode, "expert | training");
    collect->add_option("--cycles", cycles)->required();
    collect->add_option("--seed", seed);
    collect->add_option("--split", split);
    collect->add_option("--odometry", odometry_path, "expert odometry (training mode)");
    collect->add_option("--out", out_dir)->required();

    auto* train = app.add_subcommand("train", "train a reward model on a dataset");
    train->add_option("--config", config_path)->required();
    train->add_option("--manifest", manifest_path)->required();
    train->add_option("--method", method)->required();
    train->add_option("--split", split);
    train->add_option("--val-split", val_split);
    train->add_option("--seed", seed);
    train->add_option("--base", base_params, "policy-net parameters (temporal methods)");
    train->add_option("--out", out_dir)->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a method on a sequential split");
    eval_cmd->add_option("--config", config_path)->required();
    eval_cmd->add_option("--manifest", manifest_path)->required();
    eval_cmd->add_option("--method", method)->required();
    eval_cmd->add_option("--split", split);
    eval_cmd->add_option("--params", params_path)->required();
    eval_cmd->add_option("--tan-params", tan_path);
    eval_cmd->add_option("--odometry", odometry_path);
    eval_cmd->add_option("--history", history);
    eval_cmd->add_option("--out", out_dir)->required();

    auto* closed = app.add_subcommand("closedloop", "drive the simulator with live inference");
    closed->add_option("--config", config_path)->required();
    closed->add_option("--method", method)->required();
    closed->add_option("--params", params_path)->required();
    closed->add_option("--tan-params", tan_path);
    closed->add_option("--cycles", cycles)->required();
    closed->add_option("--history", history);
    closed->add_option("--seed", seed);
    closed->add_option("--out", out_dir)->required();

    auto* report = app.add_subcommand("report", "aggregate eval summaries");
    report->add_option("--eval", eval_dirs, "eval output directories")->required();
    report->add_option("--out", out_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (collect->parsed())
            return cmd_collect(config_path, mode, cycles, seed, split, odometry_path, out_dir);
        if (train->parsed())
            return cmd_train(config_path, manifest_path, method, split, val_split, seed,
                             base_params, out_dir);
        if (eval_cmd->parsed())
            return cmd_eval(config_path, manifest_path, method, split, params_path, tan_path,
                            odometry_path, history, out_dir);
        if (closed->parsed())
            return cmd_closedloop(config_path, method, params_path, tan_path, cycles, history,
                                  seed, out_dir);
        if (report->parsed()) return cmd_report(eval_dirs, out_dir);
    } catch (const MissingInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const HashMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitHashMismatch;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const NoCyclesError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoCycles;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
