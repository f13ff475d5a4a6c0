#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pirl/demos.hpp"
#include "pirl/irl.hpp"
#include "pirl/params_io.hpp"  // binary encode helpers
#include "pirl/planner.hpp"

namespace pirl {

// Self-contained snapshot of one planning cycle: everything the trainers and
// metrics need, with no reference back to the simulator. cp_states carry the
// absolute-time control-point poses that the distance metric runs on.
struct CycleRecord {
    long cycle = 0;
    std::string scenario_id;
    std::uint64_t config_hash = 0;
    VehicleState ego;
    double horizon = 6.0;
    std::vector<double> theta_collect;  // reward used while collecting

    std::vector<std::vector<double>> features;              // n x K
    std::vector<std::vector<double>> actions;               // n x (3*depth)
    std::vector<std::vector<ControlPoint>> control_points;  // n x M
    std::vector<std::vector<VehicleState>> cp_states;       // n x M

    int demo_index = 0;
    double demo_distance = 0.0;  // distance of the demo policy to the odometry

    std::size_t n_policies() const { return features.size(); }
    int k() const { return features.empty() ? 0 : static_cast<int>(features[0].size()); }
    int m() const { return control_points.empty() ? 0 : static_cast<int>(control_points[0].size()); }
    double final_progress(std::size_t i) const { return control_points[i].back().progress; }

    std::vector<double> distances_to_demo(const DistanceWeights& w = {}) const {
        std::vector<double> d(n_policies());
        const auto& demo_cps = cp_states[static_cast<std::size_t>(demo_index)];
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = control_point_distance(cp_states[i], demo_cps, w);
        return d;
    }

    irl::CycleData to_cycle_data(const DistanceWeights& w = {}) const {
        irl::CycleData c;
        c.features = features;
        c.demo = demo_index;
        c.demo_distance = distances_to_demo(w);
        return c;
    }

    static CycleRecord from_policy_set(const PolicySet& set, std::uint64_t config_hash,
                                       const std::string& scenario_id, double horizon,
                                       const std::vector<double>& theta_collect) {
        CycleRecord r;
        r.cycle = set.cycle;
        r.scenario_id = scenario_id;
        r.config_hash = config_hash;
        r.ego = set.ego;
        r.horizon = horizon;
        r.theta_collect = theta_collect;
        for (const Policy& p : set.policies) {
            r.features.push_back(p.pi_features);
            std::vector<double> act;
            for (const ControlAction& a : p.actions) {
                act.push_back(a.accel);
                act.push_back(a.curvature_rate);
                act.push_back(a.duration);
            }
            r.actions.push_back(std::move(act));
            r.control_points.push_back(p.control_points);
            r.cp_states.push_back(p.cp_states);
        }
        return r;
    }
};

namespace detail {

using nn::detail::get_f64;
using nn::detail::get_str;
using nn::detail::get_u32;
using nn::detail::get_u64;
using nn::detail::put_f64;
using nn::detail::put_str;
using nn::detail::put_u32;
using nn::detail::put_u64;

constexpr char kRecordMagic[9] = "PIRLREC1";

inline void put_section(std::ostream& os, const std::vector<double>& data) {
    put_u64(os, static_cast<std::uint64_t>(data.size() * 8));
    for (double x : data) put_f64(os, x);
}

inline std::vector<double> get_section(std::istream& is, std::size_t expected) {
    const std::uint64_t bytes = get_u64(is);
    if (bytes != expected * 8)
        throw DatasetError("record section of " + std::to_string(bytes) + " bytes, expected " +
                           std::to_string(expected * 8));
    std::vector<double> out(expected);
    for (double& x : out) x = get_f64(is);
    return out;
}

}  // namespace detail

// Little-endian, 64-bit floats, length-prefixed sections: header, feature
// matrix, action matrix, control-point tensor, control-point states.
inline void write_record(const std::string& path, const CycleRecord& r) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot write record: " + path);
    f.write(detail::kRecordMagic, 8);
    detail::put_u64(f, static_cast<std::uint64_t>(r.cycle));
    detail::put_str(f, r.scenario_id);
    detail::put_u64(f, r.config_hash);
    for (double x : {r.ego.x, r.ego.y, r.ego.yaw, r.ego.speed, r.ego.curvature, r.ego.time})
        detail::put_f64(f, x);
    detail::put_f64(f, r.horizon);
    const std::uint32_t n = static_cast<std::uint32_t>(r.n_policies());
    const std::uint32_t k = static_cast<std::uint32_t>(r.k());
    const std::uint32_t m = static_cast<std::uint32_t>(r.m());
    const std::uint32_t alen = n > 0 ? static_cast<std::uint32_t>(r.actions[0].size()) : 0;
    detail::put_u32(f, n);
    detail::put_u32(f, k);
    detail::put_u32(f, m);
    detail::put_u32(f, alen);
    detail::put_u32(f, static_cast<std::uint32_t>(r.demo_index));
    detail::put_f64(f, r.demo_distance);
    detail::put_section(f, r.theta_collect);

    std::vector<double> flat;
    auto flush = [&]() {
        detail::put_section(f, flat);
        flat.clear();
    };
    for (const auto& row : r.features) flat.insert(flat.end(), row.begin(), row.end());
    flush();
    for (const auto& row : r.actions) flat.insert(flat.end(), row.begin(), row.end());
    flush();
    for (const auto& row : r.control_points)
        for (const ControlPoint& cp : row) {
            flat.push_back(cp.lat_offset);
            flat.push_back(cp.yaw);
            flat.push_back(cp.progress);
        }
    flush();
    for (const auto& row : r.cp_states)
        for (const VehicleState& s : row) {
            flat.push_back(s.x);
            flat.push_back(s.y);
            flat.push_back(s.yaw);
            flat.push_back(s.speed);
            flat.push_back(s.time);
        }
    flush();
}

inline CycleRecord read_record(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot open record: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, detail::kRecordMagic, 8) != 0)
        throw DatasetError("not a pirl record: " + path);
    CycleRecord r;
    r.cycle = static_cast<long>(detail::get_u64(f));
    r.scenario_id = detail::get_str(f);
    r.config_hash = detail::get_u64(f);
    r.ego.x = detail::get_f64(f);
    r.ego.y = detail::get_f64(f);
    r.ego.yaw = detail::get_f64(f);
    r.ego.speed = detail::get_f64(f);
    r.ego.curvature = detail::get_f64(f);
    r.ego.time = detail::get_f64(f);
    r.horizon = detail::get_f64(f);
    const std::uint32_t n = detail::get_u32(f);
    const std::uint32_t k = detail::get_u32(f);
    const std::uint32_t m = detail::get_u32(f);
    const std::uint32_t alen = detail::get_u32(f);
    r.demo_index = static_cast<int>(detail::get_u32(f));
    r.demo_distance = detail::get_f64(f);
    r.theta_collect = detail::get_section(f, k);

    std::vector<double> flat = detail::get_section(f, static_cast<std::size_t>(n) * k);
    for (std::uint32_t i = 0; i < n; ++i)
        r.features.emplace_back(flat.begin() + i * k, flat.begin() + (i + 1) * k);
    flat = detail::get_section(f, static_cast<std::size_t>(n) * alen);
    for (std::uint32_t i = 0; i < n; ++i)
        r.actions.emplace_back(flat.begin() + i * alen, flat.begin() + (i + 1) * alen);
    flat = detail::get_section(f, static_cast<std::size_t>(n) * m * 3);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<ControlPoint> row;
        for (std::uint32_t j = 0; j < m; ++j) {
            const std::size_t base = (static_cast<std::size_t>(i) * m + j) * 3;
            row.push_back({flat[base], flat[base + 1], flat[base + 2]});
        }
        r.control_points.push_back(std::move(row));
    }
    flat = detail::get_section(f, static_cast<std::size_t>(n) * m * 5);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<VehicleState> row;
        for (std::uint32_t j = 0; j < m; ++j) {
            const std::size_t base = (static_cast<std::size_t>(i) * m + j) * 5;
            VehicleState s;
            s.x = flat[base];
            s.y = flat[base + 1];
            s.yaw = flat[base + 2];
            s.speed = flat[base + 3];
            s.time = flat[base + 4];
            row.push_back(s);
        }
        r.cp_states.push_back(std::move(row));
    }
    return r;
}

struct ManifestEntry {
    std::string file;
    std::string split;
    long cycle = 0;
};

// Human-readable index of a dataset directory.
struct DatasetManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    bool sequential = false;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split_entries(const std::string& split) const {
        std::vector<ManifestEntry> out;
        for (const ManifestEntry& e : entries)
            if (split.empty() || e.split == split) out.push_back(e);
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw DatasetError("cannot write manifest: " + path);
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash));
        f << "pirl-manifest v1\n";
        f << "config_hash = " << hash << "\n";
        f << "seed = " << seed << "\n";
        f << "sequential = " << (sequential ? 1 : 0) << "\n";
        for (const ManifestEntry& e : entries)
            f << "record = " << e.file << " " << e.split << " " << e.cycle << "\n";
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw DatasetError("cannot open manifest: " + path);
        DatasetManifest m;
        std::string line;
        if (!std::getline(f, line) || line.rfind("pirl-manifest", 0) != 0)
            throw DatasetError("not a pirl manifest: " + path);
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            std::string key, eq;
            ss >> key >> eq;
            if (key == "config_hash") {
                std::string hex;
                ss >> hex;
                m.config_hash = std::stoull(hex, nullptr, 16);
            } else if (key == "seed") {
                ss >> m.seed;
            } else if (key == "sequential") {
                int s = 0;
                ss >> s;
                m.sequential = s != 0;
            } else if (key == "record") {
                ManifestEntry e;
                ss >> e.file >> e.split >> e.cycle;
                m.entries.push_back(e);
            } else {
                throw DatasetError("unknown manifest line: " + line);
            }
        }
        // no record may appear in two splits
        std::map<std::string, std::string> seen;
        for (const ManifestEntry& e : m.entries) {
            auto it = seen.find(e.file);
            if (it != seen.end() && it->second != e.split)
                throw DatasetError("record in two splits: " + e.file);
            seen[e.file] = e.split;
        }
        return m;
    }
};

// Streaming loader. Records are verified against the manifest fingerprint;
// shuffling is only legal for non-sequential datasets and requires a seed.
class RecordReader {
public:
    RecordReader(const DatasetManifest& manifest, std::string base_dir, const std::string& split,
                 std::optional<std::uint64_t> shuffle_seed = std::nullopt)
        : manifest_(manifest), base_dir_(std::move(base_dir)), entries_(manifest.split_entries(split)) {
        if (shuffle_seed.has_value()) {
            if (manifest.sequential)
                throw DatasetError("refusing to shuffle a sequential dataset split");
            Rng rng(*shuffle_seed);
            rng.shuffle(entries_);
        }
    }

    std::optional<CycleRecord> next() {
        if (pos_ >= entries_.size()) return std::nullopt;
        const ManifestEntry& e = entries_[pos_++];
        CycleRecord r = read_record((std::filesystem::path(base_dir_) / e.file).string());
        if (r.config_hash != manifest_.config_hash)
            throw HashMismatchError("incompatible dataset: record " + e.file + " hash mismatch");
        return r;
    }

    std::size_t count() const { return entries_.size(); }

private:
    DatasetManifest manifest_;
    std::string base_dir_;
    std::vector<ManifestEntry> entries_;
    std::size_t pos_ = 0;
};

inline std::vector<CycleRecord> load_records(const DatasetManifest& manifest,
                                             const std::string& base_dir, const std::string& split,
                                             std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
    RecordReader reader(manifest, base_dir, split, shuffle_seed);
    std::vector<CycleRecord> out;
    while (auto r = reader.next()) out.push_back(std::move(*r));
    return out;
}

inline RewardWeights expert_theta_from_config(const Config& cfg) {
    std::vector<double> t = cfg.get_double_list("expert.theta");
    if (t.empty())
        t = {1.2, 1.0, 8.0,  // lat offset, heading, off road
             0.3, 0.2, 0.4, 0.2, 0.3,  // accel, lon jerk, lat accel, lat jerk, curvature
             2.5, 4.0,                 // speed dev, progress shortfall
             0.4, 0.8,                 // lane-change delay, overshoot
             10.0, 25.0, 4.0};         // proximity, stop line, checkpoint corridor
    return RewardWeights(std::move(t));
}

struct CollectResult {
    std::string manifest_path;
    std::string odometry_path;
    std::size_t cycles_written = 0;
    int expert_fallbacks = 0;
};

// Runs the expert-tuned planner closed loop, records the executed odometry
// and a sequential CycleRecord per planning cycle. Demonstrations are the
// projection of the ego's own future odometry onto each cycle's policy set,
// so the demo distance is exactly the sampling discretization floor.
inline CollectResult collect_expert(const Config& cfg, const std::string& out_dir, int cycles,
                                    std::uint64_t seed, const std::string& split = "test") {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Scenario sc = make_scenario(cfg);
    PlannerConfig pcfg = PlannerConfig::from_config(cfg);
    RewardWeights expert_theta = expert_theta_from_config(cfg);
    DistanceWeights dw = DistanceWeights::from_config(cfg);
    World world(sc);

    OdometryRecord odo;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(cfg.fingerprint()));
    odo.meta["config_hash"] = hash;
    odo.meta["scenario_id"] = sc.id;
    auto push_state = [&](const VehicleState& s) {
        odo.samples.push_back({s.time, s.x, s.y, s.yaw, s.speed});
    };
    push_state(sc.ego_start);

    DatasetManifest manifest;
    manifest.config_hash = cfg.fingerprint();
    manifest.seed = seed;
    manifest.sequential = true;

    struct Pending {
        CycleRecord record;
        double end_time;
    };
    std::deque<Pending> pending;
    CollectResult result;

    auto finalize_ready = [&](bool flush) {
        while (!pending.empty() && (flush || pending.front().end_time <= odo.t_end() + 1e-9)) {
            CycleRecord& r = pending.front().record;
            // project the recorded odometry onto the stored policy set
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < r.n_policies(); ++i) {
                std::vector<VehicleState> ref;
                for (const VehicleState& s : r.cp_states[i]) {
                    OdometrySample o = odo.at(std::min(s.time, odo.t_end()));
                    VehicleState v;
                    v.x = o.x;
                    v.y = o.y;
                    v.yaw = o.yaw;
                    v.speed = o.v;
                    v.time = o.t;
                    ref.push_back(v);
                }
                const double d = control_point_distance(r.cp_states[i], ref, dw);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(i);
                }
            }
            r.demo_index = best;
            r.demo_distance = best_d;
            char name[64];
            std::snprintf(name, sizeof(name), "cycle_%06ld.bin", r.cycle);
            write_record((fs::path(out_dir) / name).string(), r);
            manifest.entries.push_back({name, split, r.cycle});
            ++result.cycles_written;
            pending.pop_front();
        }
    };

    PolicySet set = sample_policy_set(world, sc.ego_start, pcfg, derive_seed(seed, 0), 0);
    const int extra = static_cast<int>(std::ceil(pcfg.horizon / pcfg.cycle_period));
    for (int c = 0; c < cycles + extra; ++c) {
        if (c < cycles) {
            Pending p;
            p.record = CycleRecord::from_policy_set(set, cfg.fingerprint(), sc.id, pcfg.horizon,
                                                    expert_theta.theta);
            p.end_time = set.ego.time + pcfg.horizon;
            pending.push_back(std::move(p));
        }
        MpcStepResult step = mpc_step(world, set, expert_theta, pcfg, true,
                                      derive_seed(seed, static_cast<std::uint64_t>(c) + 1));
        if (step.expert_fallback) ++result.expert_fallbacks;
        for (std::size_t i = 1; i < step.executed.size(); ++i) push_state(step.executed[i]);
        set = std::move(step.next_set);
        finalize_ready(false);
    }
    finalize_ready(true);

    result.odometry_path = (fs::path(out_dir) / "odometry.csv").string();
    write_odometry_csv(result.odometry_path, odo);
    result.manifest_path = (fs::path(out_dir) / "manifest.txt").string();
    manifest.save(result.manifest_path);
    return result;
}

// Open-loop training collection: replay the expert odometry as the executed
// trajectory, sample a policy set per cycle under a random theta_0 and
// project the odometry into each set as the demonstration.
inline CollectResult collect_training(const Config& cfg, const OdometryRecord& odometry,
                                      const std::string& out_dir, int cycles, std::uint64_t seed,
                                      const std::string& split = "train") {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Scenario sc = make_scenario(cfg);
    PlannerConfig pcfg = PlannerConfig::from_config(cfg);
    DistanceWeights dw = DistanceWeights::from_config(cfg);

    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(cfg.fingerprint()));
    auto it = odometry.meta.find("config_hash");
    if (it == odometry.meta.end() || it->second != hash)
        throw HashMismatchError("odometry/scenario mismatch: config fingerprints differ");

    const bool rerandomize = cfg.get_bool("collect.rerandomize_theta", false);
    Rng theta_rng(derive_seed(seed, 7));
    std::vector<double> theta0(kFeatureCount);
    for (double& v : theta0) v = theta_rng.uniform();

    World world(sc);
    DatasetManifest manifest;
    manifest.config_hash = cfg.fingerprint();
    manifest.seed = seed;
    manifest.sequential = false;

    CollectResult result;
    double world_time = odometry.t_begin();
    for (int c = 0; c < cycles; ++c) {
        const double t_c = odometry.t_begin() + static_cast<double>(c) * pcfg.cycle_period;
        if (t_c + pcfg.horizon > odometry.t_end() + 1e-9)
            throw DatasetError("odometry does not cover cycle " + std::to_string(c));
        // advance the world (traffic, stop lines) along the expert timeline
        while (world_time + pcfg.substep <= t_c + 1e-9) {
            world.step(pcfg.substep);
            world_time += pcfg.substep;
            OdometrySample o = odometry.at(world_time);
            VehicleState s;
            s.x = o.x;
            s.y = o.y;
            s.yaw = o.yaw;
            s.speed = o.v;
            s.time = o.t;
            world.observe_ego(s);
        }
        OdometrySample o = odometry.at(t_c);
        VehicleState ego;
        ego.x = o.x;
        ego.y = o.y;
        ego.yaw = o.yaw;
        ego.speed = o.v;
        ego.time = t_c;

        if (rerandomize)
            for (double& v : theta0) v = theta_rng.uniform();
        PolicySet set = sample_policy_set(world, ego, pcfg,
                                          derive_seed(seed, 100 + static_cast<std::uint64_t>(c)), c);
        Demonstration demo = select_demonstration(set, odometry, dw);
        CycleRecord r = CycleRecord::from_policy_set(set, cfg.fingerprint(), sc.id, pcfg.horizon, theta0);
        r.demo_index = demo.index;
        r.demo_distance = demo.distance;
        char name[64];
        std::snprintf(name, sizeof(name), "cycle_%06d.bin", c);
        write_record((fs::path(out_dir) / name).string(), r);
        manifest.entries.push_back({name, split, c});
        ++result.cycles_written;
    }
    result.manifest_path = (fs::path(out_dir) / "manifest.txt").string();
    manifest.save(result.manifest_path);
    return result;
}

}  // namespace pirl
