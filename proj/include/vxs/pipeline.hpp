#pragma once

// ======================================================
// Command implementations behind the vxsim tool
// ======================================================
// Each cmd_* function is a plain library entry point returning a process
// exit code (0 ok, 2 usage/validation, 3 runtime), so tests can drive the
// commands without spawning the binary. The tool in tools/ only parses
// flags and forwards here. Every command is deterministic under a fixed
// seed; timing columns are the sole exception.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vxs/geometry.hpp"
#include "vxs/kv.hpp"
#include "vxs/lidar.hpp"
#include "vxs/math.hpp"
#include "vxs/perception.hpp"
#include "vxs/task.hpp"
#include "vxs/terrain.hpp"
#include "vxs/voxel.hpp"

namespace vxs {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

// VXSIM_THREADS overrides the worker count; unparsable or < 1 falls back
// to a single worker.
inline int thread_count_from_env() {
    const char* raw = std::getenv("VXSIM_THREADS");
    if (!raw) return 1;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (end == raw || n < 1) return 1;
    return static_cast<int>(std::min(n, 64L));
}

// Ray-parallel variant of scan_scene. Hits are resolved per ray index and
// compacted in pattern order afterwards, so the output is identical for
// any worker count.
inline LidarScan scan_scene_parallel(const std::vector<SceneInstance>& instances,
                                     const LidarPose& pose, const LidarPattern& pattern,
                                     double timestamp, int sensor_id, int threads) {
    if (threads <= 1) return scan_scene(instances, pose, pattern, timestamp, sensor_id);
    const size_t n = pattern.offsets.size();
    std::vector<std::optional<Vec3>> hits(n);
    auto worker = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const Ray ray{pose.position, pose.orientation.apply(pattern.offsets[i]),
                          kDefaultRayTMax};
            std::optional<RayHit> best;
            for (const SceneInstance& inst : instances) {
                const auto hit = raycast_world(*inst.bvh, *inst.mesh, inst.transform, ray);
                if (hit && (!best || hit->t < best->t)) best = hit;
            }
            if (best) hits[i] = best->point;
        }
    };
    std::vector<std::thread> pool;
    const size_t chunk = (n + threads - 1) / static_cast<size_t>(threads);
    for (int t = 0; t < threads; ++t) {
        const size_t begin = std::min(n, static_cast<size_t>(t) * chunk);
        const size_t end = std::min(n, begin + chunk);
        if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (std::thread& th : pool) th.join();
    LidarScan scan;
    scan.timestamp = timestamp;
    scan.sensor_id = sensor_id;
    for (const auto& h : hits)
        if (h) scan.points.push_back(*h);
    return scan;
}

// ======================================================
// Exported-block loading
// ======================================================
inline TerrainBlock load_block(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::exists(root / "manifest.txt"))
        throw std::runtime_error("no block manifest under " + dir);
    const KvFile kv = KvFile::load((root / "manifest.txt").string());

    TerrainBlock block;
    block.family = family_from_name(kv.get_string("family"));
    block.difficulty = kv.get_double("difficulty");
    block.seed = kv.get_uint("seed", 0);
    block.spawn = {kv.get_double("spawn_x"), kv.get_double("spawn_y"), kv.get_double("spawn_z")};
    block.overlay_present = kv.get_string("overlay_present", "0") == "1";
    for (const auto& [key, value] : kv.entries())
        if (key.rfind("param.", 0) == 0)
            block.params.values.emplace_back(key.substr(6), kv.get_double(key));

    const int64_t count = kv.get_int("mesh_count");
    for (int64_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "mesh_%03lld.obj", static_cast<long long>(i));
        fs::path path = root / name;
        if (fs::exists(path)) {
            block.add_mesh(load_obj(path.string()));
            continue;
        }
        std::snprintf(name, sizeof(name), "mesh_%03lld.bin", static_cast<long long>(i));
        path = root / name;
        if (!fs::exists(path)) throw std::runtime_error("missing mesh file: " + path.string());
        block.add_mesh(load_mesh_binary(path.string()));
    }
    return block;
}

// ======================================================
// gen-terrain
// ======================================================
struct GenTerrainOptions {
    std::string family;
    double difficulty = 0.0;
    uint64_t seed = 0;
    std::string out_dir;
    bool binary = false;
};

inline int cmd_gen_terrain(const GenTerrainOptions& opt, std::ostream& out = std::cout,
                           std::ostream& err = std::cerr) {
    TerrainFamily family;
    try {
        family = family_from_name(opt.family);
    } catch (const std::exception& e) {
        err << "gen-terrain: " << e.what() << "\n";
        return kExitUsage;
    }
    if (!(opt.difficulty >= 0.0 && opt.difficulty <= 1.0)) {
        err << "gen-terrain: difficulty must lie in [0, 1]\n";
        return kExitUsage;
    }
    if (opt.out_dir.empty()) {
        err << "gen-terrain: missing output directory\n";
        return kExitUsage;
    }
    try {
        const TerrainBlock block = generate_block(family, opt.difficulty, opt.seed);
        export_block(block, opt.out_dir, opt.binary);
        out << "wrote " << block.meshes.size() << " meshes and manifest to " << opt.out_dir
            << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "gen-terrain: " << e.what() << "\n";
        return kExitRuntime;
    }
}

// ======================================================
// scan-pipeline
// ======================================================
struct ScanPipelineOptions {
    std::string block_dir;
    std::string script_path;  // empty: stationary script at the block spawn
    std::string sensor_cfg;   // empty: defaults
    std::string out_dir;
    uint64_t seed = 0;
    double duration_s = 2.0;  // synthesized-script length
    bool attach_leg_proxy = false;
    bool no_noise = false;
    bool save_clouds = true;
    bool save_height_maps = true;
};

struct ScanPipelineResult {
    int ticks = 0;
    int sweeps = 0;
};

// Sweeps run at the sensor rate over both mounts, each one perturbed,
// noised, and pushed into its latency buffer; every control tick queries
// the buffers, voxelizes whatever is visible, applies dropout, and dumps
// the grid (plus cloud and height map) named by zero-padded tick index.
inline ScanPipelineResult run_scan_pipeline(const TerrainBlock& block,
                                            const std::vector<TraceFrame>& frames,
                                            const LidarConfig& cfg,
                                            const ScanPipelineOptions& opt) {
    namespace fs = std::filesystem;
    if (frames.empty()) throw std::invalid_argument("script has no frames");
    cfg.validate();
    fs::create_directories(opt.out_dir);

    const int threads = thread_count_from_env();
    Rng rng(opt.seed);

    const LidarPattern base_pattern =
        make_spherical_pattern(cfg.channels, cfg.azimuth_steps, cfg.fov_deg);

    // episode-start randomization: mount jitter and per-ray direction
    // jitter are drawn once and held fixed; the publication delay is
    // sampled once per buffer
    struct Sensor {
        RigidTransform extrinsic;
        LidarPattern pattern;
        LatencyBuffer buffer;
    };
    std::vector<Sensor> sensors;
    for (int s = 0; s < 2; ++s) {
        Sensor sensor{s == 0 ? default_front_sensor_extrinsic() : default_back_sensor_extrinsic(),
                      perturb_pattern(base_pattern, cfg.noise, rng),
                      LatencyBuffer(cfg.rate_hz, cfg.delay_min_s)};
        sensor.extrinsic.translation.x += rng.gaussian(cfg.noise.pose_pos_sigma);
        sensor.extrinsic.translation.y += rng.gaussian(cfg.noise.pose_pos_sigma);
        sensor.extrinsic.translation.z += rng.gaussian(cfg.noise.pose_pos_sigma);
        sensor.buffer.sample_delay(rng, cfg.delay_min_s, cfg.delay_max_s);
        sensors.push_back(std::move(sensor));
    }

    // optional self-scan target: a shin-sized box riding with the base
    TriangleMesh proxy_mesh;
    Bvh proxy_bvh;
    if (opt.attach_leg_proxy) {
        proxy_mesh = make_box({0.05, -0.08, -0.75}, {0.25, 0.08, -0.15});
        proxy_bvh = build_bvh(proxy_mesh);
    }

    ScanPipelineResult result;
    const double sweep_period = 1.0 / cfg.rate_hz;
    double next_sweep = frames.front().time;
    for (const TraceFrame& f : frames) {
        const RigidTransform base = f.base_transform();
        std::vector<SceneInstance> instances = block.instances;
        if (opt.attach_leg_proxy) instances.push_back({&proxy_mesh, &proxy_bvh, base, true});

        if (f.time + 1e-9 >= next_sweep) {
            for (size_t s = 0; s < sensors.size(); ++s) {
                const LidarPose pose{base.apply(sensors[s].extrinsic.translation),
                                     base.rotation * sensors[s].extrinsic.rotation};
                LidarScan scan = scan_scene_parallel(instances, pose, sensors[s].pattern, f.time,
                                                     static_cast<int>(s), threads);
                if (cfg.noise.hit_sigma > 0.0) scan = perturb_hits(scan, cfg.noise, rng);
                sensors[s].buffer.push(scan);
            }
            ++result.sweeps;
            next_sweep += sweep_period;
        }

        std::vector<LidarScan> visible;
        for (Sensor& sensor : sensors)
            if (auto scan = sensor.buffer.query(f.time)) visible.push_back(std::move(*scan));
        VoxelGrid grid = voxelize(visible, base);
        grid = apply_dropout(grid, cfg.noise.voxel_dropout_frac, rng);

        char name[40];
        std::snprintf(name, sizeof(name), "grid_%06lld.vxgrid", static_cast<long long>(f.tick));
        save_grid(grid, (fs::path(opt.out_dir) / name).string());
        if (opt.save_clouds) {
            std::vector<Vec3> points;
            for (const LidarScan& scan : visible)
                points.insert(points.end(), scan.points.begin(), scan.points.end());
            std::snprintf(name, sizeof(name), "cloud_%06lld.ply",
                          static_cast<long long>(f.tick));
            save_ply(points, (fs::path(opt.out_dir) / name).string());
        }
        if (opt.save_height_maps) {
            const HeightMap hm = sample_height_map(block.instances, base);
            std::snprintf(name, sizeof(name), "height_%06lld.csv",
                          static_cast<long long>(f.tick));
            save_height_map_csv(hm, (fs::path(opt.out_dir) / name).string());
        }
        ++result.ticks;
    }

    KvFile manifest = cfg.to_kv();
    manifest.set("run_seed", opt.seed);
    manifest.set("ticks", static_cast<int64_t>(result.ticks));
    manifest.set("sweeps", static_cast<int64_t>(result.sweeps));
    manifest.set("leg_proxy", std::string(opt.attach_leg_proxy ? "1" : "0"));
    manifest.save((fs::path(opt.out_dir) / "run.txt").string());
    return result;
}

inline int cmd_scan_pipeline(const ScanPipelineOptions& opt, std::ostream& out = std::cout,
                             std::ostream& err = std::cerr) {
    TerrainBlock block;
    std::vector<TraceFrame> frames;
    LidarConfig cfg;
    try {
        if (opt.out_dir.empty()) throw std::runtime_error("missing output directory");
        block = load_block(opt.block_dir);
        if (!opt.script_path.empty()) {
            std::ifstream in(opt.script_path);
            if (!in) throw std::runtime_error("cannot open script: " + opt.script_path);
            frames = load_trace_csv(in);
        } else {
            frames = make_stationary_script(block.spawn, opt.duration_s);
        }
        if (!opt.sensor_cfg.empty()) cfg = LidarConfig::from_kv(KvFile::load(opt.sensor_cfg));
    } catch (const std::exception& e) {
        err << "scan-pipeline: " << e.what() << "\n";
        return kExitUsage;
    }
    if (opt.no_noise) {
        cfg.noise.pose_pos_sigma = 0.0;
        cfg.noise.ray_dir_sigma = 0.0;
        cfg.noise.hit_sigma = 0.0;
        cfg.noise.voxel_dropout_frac = 0.0;
    }
    try {
        const ScanPipelineResult result = run_scan_pipeline(block, frames, cfg, opt);
        out << "processed " << result.ticks << " ticks, " << result.sweeps << " sweeps into "
            << opt.out_dir << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "scan-pipeline: " << e.what() << "\n";
        return kExitRuntime;
    }
}

// ======================================================
// replay-rewards
// ======================================================
struct ReplayRewardsOptions {
    std::string block_dir;
    std::string script_path;
    std::string out_csv;
    uint64_t seed = 0;          // goal sampling seed when no explicit goal
    std::optional<Vec3> goal;
};

inline int cmd_replay_rewards(const ReplayRewardsOptions& opt, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
    TerrainBlock block;
    std::vector<TraceFrame> frames;
    try {
        if (opt.out_csv.empty()) throw std::runtime_error("missing output csv path");
        block = load_block(opt.block_dir);
        std::ifstream in(opt.script_path);
        if (!in) throw std::runtime_error("cannot open script: " + opt.script_path);
        frames = load_trace_csv(in);
    } catch (const std::exception& e) {
        err << "replay-rewards: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const Vec3 goal = opt.goal ? *opt.goal : sample_goal(block, opt.seed);
        const std::vector<RewardRow> rows = replay_rewards(block, frames, goal);
        save_reward_csv(rows, opt.out_csv);
        const RewardRow& last = rows.back();
        const TraceFrame& end = frames[rows.size() - 1];
        const Vec3 final_offset{goal.x - end.base_position.x, goal.y - end.base_position.y, 0.0};
        std::optional<TerminationEvent> event;
        if (last.termination)
            event = TerminationEvent{*last.termination, end.time,
                                     static_cast<size_t>(rows.size() - 1)};
        out << "rows " << rows.size() << ", termination "
            << (last.termination ? termination_name(*last.termination) : "none") << ", success "
            << (episode_success(final_offset, event) ? "yes" : "no") << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "replay-rewards: " << e.what() << "\n";
        return kExitRuntime;
    }
}

// ======================================================
// bench-conv
// ======================================================
struct BenchConvOptions {
    int reps = 1000;
    uint64_t seed = 0;
    double density = 0.1;  // occupancy fraction of the benchmark grid
    std::string out_csv;   // empty: write rows to stdout
};

inline int cmd_bench_conv(const BenchConvOptions& opt, std::ostream& out = std::cout,
                          std::ostream& err = std::cerr) {
    if (opt.reps < 0 || opt.density < 0.0 || opt.density > 1.0) {
        err << "bench-conv: reps must be >= 0 and density in [0, 1]\n";
        return kExitUsage;
    }
    try {
        Rng rng(opt.seed);
        VoxelGrid grid;
        for (uint8_t& cell : grid.occupancy)
            if (rng.bernoulli(opt.density)) cell = 1;

        const PolicyNetwork net2d =
            make_policy_network(kActorObsDim, NetworkDims::kActionDim, opt.seed);
        const Cnn3dReference net3d = make_cnn3d_reference(opt.seed + 1);

        // sink defeats dead-code elimination of the timed forwards
        volatile double sink = 0.0;
        auto time_reps = [&](auto&& forward) {
            std::vector<uint64_t> ns(static_cast<size_t>(opt.reps));
            for (int warm = 0; warm < 3; ++warm) sink = sink + forward();
            for (int i = 0; i < opt.reps; ++i) {
                const auto t0 = std::chrono::steady_clock::now();
                sink = sink + forward();
                const auto t1 = std::chrono::steady_clock::now();
                ns[static_cast<size_t>(i)] = static_cast<uint64_t>(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
            }
            std::sort(ns.begin(), ns.end());
            const uint64_t median = ns[ns.size() / 2];
            const uint64_t p95 = ns[std::min(ns.size() - 1, ns.size() * 95 / 100)];
            return std::pair<uint64_t, uint64_t>{median, p95};
        };

        std::ofstream file;
        if (!opt.out_csv.empty()) {
            file.open(opt.out_csv);
            if (!file) throw std::runtime_error("cannot open " + opt.out_csv);
        }
        std::ostream& csv = opt.out_csv.empty() ? out : file;
        csv << "variant,macs,reps,median_ns,p95_ns\n";

        auto emit = [&](const char* variant, uint64_t macs, auto&& forward) {
            csv << variant << ',' << macs << ',' << opt.reps << ',';
            if (opt.reps > 0) {
                const auto [median, p95] = time_reps(forward);
                csv << median << ',' << p95;
            } else {
                csv << ',';
            }
            csv << '\n';
        };
        emit("cnn2d_zgroup", encoder_macs(net2d), [&] { return net2d.encode_voxel(grid)[0]; });
        emit("cnn3d_reference", encoder_macs(net3d), [&] { return net3d.encode(grid)[0]; });
        (void)sink;
        return kExitOk;
    } catch (const std::exception& e) {
        err << "bench-conv: " << e.what() << "\n";
        return kExitRuntime;
    }
}

// ======================================================
// curriculum-sim
// ======================================================
// Success probability as a function of difficulty: either a constant or a
// piecewise-linear table, clamped at both ends.
struct SuccessModel {
    double constant = 1.0;
    std::vector<std::pair<double, double>> table;  // (difficulty, probability), ascending

    double probability(double s) const {
        if (table.empty()) return constant;
        if (s <= table.front().first) return table.front().second;
        if (s >= table.back().first) return table.back().second;
        for (size_t i = 1; i < table.size(); ++i) {
            if (s > table[i].first) continue;
            const auto& [s0, p0] = table[i - 1];
            const auto& [s1, p1] = table[i];
            const double u = (s - s0) / (s1 - s0);
            return (1.0 - u) * p0 + u * p1;
        }
        return table.back().second;
    }

    void validate() const {
        if (table.empty()) {
            if (constant < 0.0 || constant > 1.0)
                throw std::invalid_argument("success probability must lie in [0, 1]");
            return;
        }
        for (size_t i = 0; i < table.size(); ++i) {
            if (table[i].second < 0.0 || table[i].second > 1.0)
                throw std::invalid_argument("table probability out of [0, 1]");
            if (i > 0 && table[i].first <= table[i - 1].first)
                throw std::invalid_argument("table difficulties must be strictly increasing");
        }
    }

    // rows `difficulty,probability`; '#' comments and blank lines ignored
    static SuccessModel from_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open success table: " + path);
        SuccessModel model;
        std::string line;
        while (std::getline(in, line)) {
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const size_t comma = line.find(',');
            if (comma == std::string::npos)
                throw std::runtime_error("bad table row: " + line);
            model.table.emplace_back(std::stod(line.substr(0, comma)),
                                     std::stod(line.substr(comma + 1)));
        }
        if (model.table.empty()) throw std::runtime_error("empty success table: " + path);
        model.validate();
        return model;
    }
};

struct CurriculumSimOptions {
    int episodes = 100;
    int envs = 1;
    double initial = 0.0;
    double step = 0.1;
    SuccessModel model;
    uint64_t seed = 0;
    std::string out_csv;  // empty: write rows to stdout
};

inline int cmd_curriculum_sim(const CurriculumSimOptions& opt, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
    if (opt.episodes < 1 || opt.envs < 1 || opt.step <= 0.0 || opt.step > 1.0 ||
        opt.initial < 0.0 || opt.initial > 1.0) {
        err << "curriculum-sim: episodes/envs must be positive, step in (0, 1], initial in "
               "[0, 1]\n";
        return kExitUsage;
    }
    try {
        opt.model.validate();
    } catch (const std::exception& e) {
        err << "curriculum-sim: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        std::ofstream file;
        if (!opt.out_csv.empty()) {
            file.open(opt.out_csv);
            if (!file) throw std::runtime_error("cannot open " + opt.out_csv);
        }
        std::ostream& csv = opt.out_csv.empty() ? out : file;
        csv << "episode,env,success,difficulty\n";
        csv.precision(17);

        Rng rng(opt.seed);
        CurriculumState state(static_cast<size_t>(opt.envs), opt.initial, opt.step);
        double final_mean = 0.0;
        for (int episode = 0; episode < opt.episodes; ++episode) {
            for (int env = 0; env < opt.envs; ++env) {
                const bool success =
                    rng.bernoulli(opt.model.probability(state.difficulty[env]));
                curriculum_update(state, static_cast<size_t>(env), success);
                csv << episode << ',' << env << ',' << (success ? 1 : 0) << ','
                    << state.difficulty[static_cast<size_t>(env)] << '\n';
            }
        }
        for (double d : state.difficulty) final_mean += d;
        final_mean /= static_cast<double>(opt.envs);
        if (!opt.out_csv.empty())
            out << "final mean difficulty " << final_mean << " over " << opt.envs
                << " envs\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "curriculum-sim: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace vxs
