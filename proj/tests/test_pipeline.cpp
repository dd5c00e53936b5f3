#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vxs/pipeline.hpp"

using namespace vxs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("vxsim_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// sensor config small enough for fast sweeps
LidarConfig small_sensor() {
    LidarConfig cfg;
    cfg.channels = 16;
    cfg.azimuth_steps = 60;
    return cfg;
}

LidarConfig quiet_sensor() {
    LidarConfig cfg = small_sensor();
    cfg.noise.pose_pos_sigma = 0.0;
    cfg.noise.ray_dir_sigma = 0.0;
    cfg.noise.hit_sigma = 0.0;
    cfg.noise.voxel_dropout_frac = 0.0;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(VXSIM_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

}  // namespace

// ======================================================
// Block export round-trip
// ======================================================
TEST_CASE("exported blocks load back with identical content", "[pipeline]") {
    const fs::path dir = temp_dir("roundtrip");
    const TerrainBlock original = generate_block(TerrainFamily::kUpstair, 1.0, 7);
    export_block(original, dir.string());

    const TerrainBlock loaded = load_block(dir.string());
    CHECK(loaded.family == original.family);
    CHECK(loaded.difficulty == original.difficulty);
    CHECK(loaded.seed == original.seed);
    CHECK(loaded.spawn.z == original.spawn.z);
    REQUIRE(loaded.meshes.size() == original.meshes.size());
    REQUIRE(loaded.params.values.size() == original.params.values.size());
    for (size_t i = 0; i < original.params.values.size(); ++i) {
        CHECK(loaded.params.values[i].first == original.params.values[i].first);
        CHECK(loaded.params.values[i].second == original.params.values[i].second);
    }
    // probe heights agree after the disk round-trip
    for (double x : {-3.5, -1.2, 0.0, 1.7, 3.5}) {
        const auto a = original.ground_height(x, 0.3);
        const auto b = loaded.ground_height(x, 0.3);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(*a == Catch::Approx(*b).margin(1e-12));
    }
    CHECK_THROWS_AS(load_block((dir / "nope").string()), std::runtime_error);
}

// ======================================================
// gen-terrain command
// ======================================================
TEST_CASE("gen-terrain validates, writes, and reruns identically", "[pipeline]") {
    std::ostringstream out, err;
    GenTerrainOptions opt;
    opt.family = "upstair";
    opt.difficulty = 1.0;
    opt.seed = 7;

    opt.out_dir = "";
    CHECK(cmd_gen_terrain(opt, out, err) == kExitUsage);
    opt.out_dir = temp_dir("gen_a").string();
    opt.family = "slanted";
    CHECK(cmd_gen_terrain(opt, out, err) == kExitUsage);
    opt.family = "upstair";
    opt.difficulty = 1.5;
    CHECK(cmd_gen_terrain(opt, out, err) == kExitUsage);
    opt.difficulty = 1.0;

    REQUIRE(cmd_gen_terrain(opt, out, err) == kExitOk);
    const KvFile manifest = KvFile::load((fs::path(opt.out_dir) / "manifest.txt").string());
    CHECK(manifest.get_string("family") == "upstair");
    CHECK(manifest.get_double("param.step_height") == Catch::Approx(0.20).margin(1e-12));

    // a second run produces byte-identical files
    GenTerrainOptions again = opt;
    again.out_dir = temp_dir("gen_b").string();
    REQUIRE(cmd_gen_terrain(again, out, err) == kExitOk);
    for (const auto& entry : fs::directory_iterator(opt.out_dir)) {
        const fs::path twin = fs::path(again.out_dir) / entry.path().filename();
        REQUIRE(fs::exists(twin));
        CHECK(slurp(entry.path()) == slurp(twin));
    }
}

// ======================================================
// scan-pipeline command
// ======================================================
TEST_CASE("scan pipeline settles on a static scene and reruns identically", "[pipeline]") {
    // door walls sit inside the grid footprint, so the sweeps populate cells
    const fs::path block_dir = temp_dir("scan_block");
    export_block(generate_block(TerrainFamily::kDoor, 0.5, 3), block_dir.string());

    ScanPipelineOptions opt;
    opt.block_dir = block_dir.string();
    opt.out_dir = temp_dir("scan_a").string();
    opt.seed = 11;
    opt.duration_s = 1.0;
    opt.save_clouds = false;
    opt.save_height_maps = false;

    const TerrainBlock block = load_block(opt.block_dir);
    const auto frames = make_stationary_script(block.spawn, opt.duration_s);
    const ScanPipelineResult result = run_scan_pipeline(block, frames, quiet_sensor(), opt);
    CHECK(result.ticks == 51);
    CHECK(result.sweeps == 11);

    // after the latency buffer warms up the static grids repeat exactly
    const std::string late_a = slurp(fs::path(opt.out_dir) / "grid_000030.vxgrid");
    const std::string late_b = slurp(fs::path(opt.out_dir) / "grid_000050.vxgrid");
    CHECK(late_a == late_b);
    const VoxelGrid grid = load_grid((fs::path(opt.out_dir) / "grid_000050.vxgrid").string());
    size_t occupied = 0;
    for (uint8_t c : grid.occupancy) occupied += c;
    CHECK(occupied > 0);

    // same seed, fresh run: every grid byte-identical
    ScanPipelineOptions rerun = opt;
    rerun.out_dir = temp_dir("scan_b").string();
    run_scan_pipeline(block, frames, quiet_sensor(), rerun);
    for (int tick : {0, 10, 25, 50}) {
        char name[32];
        std::snprintf(name, sizeof(name), "grid_%06d.vxgrid", tick);
        CHECK(slurp(fs::path(opt.out_dir) / name) == slurp(fs::path(rerun.out_dir) / name));
    }
}

TEST_CASE("scan pipeline surfaces missing inputs as usage errors", "[pipeline]") {
    std::ostringstream out, err;
    ScanPipelineOptions opt;
    opt.block_dir = "/nonexistent/block";
    opt.out_dir = temp_dir("scan_bad").string();
    CHECK(cmd_scan_pipeline(opt, out, err) == kExitUsage);

    const fs::path block_dir = temp_dir("scan_bad_block");
    export_block(generate_block(TerrainFamily::kPlane, 0.0, 1), block_dir.string());
    opt.block_dir = block_dir.string();
    opt.script_path = "/nonexistent/script.csv";
    CHECK(cmd_scan_pipeline(opt, out, err) == kExitUsage);
}

TEST_CASE("noise widens the grid population without moving its center", "[pipeline]") {
    // same scene scanned with and without randomization: occupancy differs,
    // but both stay plausible (the clean one is a subset check too strict
    // under dropout, so only the count band is compared)
    const fs::path block_dir = temp_dir("noise_block");
    export_block(generate_block(TerrainFamily::kDoor, 0.5, 3), block_dir.string());
    const TerrainBlock block = load_block(block_dir.string());
    const auto frames = make_stationary_script(block.spawn, 0.5);

    ScanPipelineOptions clean;
    clean.block_dir = block_dir.string();
    clean.out_dir = temp_dir("noise_clean").string();
    clean.seed = 5;
    clean.save_clouds = false;
    clean.save_height_maps = false;
    run_scan_pipeline(block, frames, quiet_sensor(), clean);

    ScanPipelineOptions noisy = clean;
    noisy.out_dir = temp_dir("noise_noisy").string();
    run_scan_pipeline(block, frames, small_sensor(), noisy);

    const VoxelGrid g_clean = load_grid((fs::path(clean.out_dir) / "grid_000024.vxgrid").string());
    const VoxelGrid g_noisy = load_grid((fs::path(noisy.out_dir) / "grid_000024.vxgrid").string());
    size_t n_clean = 0, n_noisy = 0;
    for (uint8_t c : g_clean.occupancy) n_clean += c;
    for (uint8_t c : g_noisy.occupancy) n_noisy += c;
    REQUIRE(n_clean > 0);
    REQUIRE(n_noisy > 0);
    CHECK_FALSE(g_clean.same_occupancy(g_noisy));
    // both runs see the floor under the robot; the noisy count stays within
    // a factor-two band of the clean one
    CHECK(n_noisy > n_clean / 2);
    CHECK(n_noisy < n_clean * 2);
}

// ======================================================
// replay-rewards command
// ======================================================
TEST_CASE("replay command writes the reward csv for a scripted walk", "[pipeline]") {
    const fs::path block_dir = temp_dir("replay_block");
    export_block(generate_block(TerrainFamily::kPlane, 0.0, 1), block_dir.string());
    const fs::path script = block_dir / "script.csv";
    save_trace_csv(make_line_script({-2, 0, 0}, {2, 0, 0}, 10.0), script.string());

    std::ostringstream out, err;
    ReplayRewardsOptions opt;
    opt.block_dir = block_dir.string();
    opt.script_path = script.string();
    opt.out_csv = (block_dir / "rewards.csv").string();
    opt.goal = Vec3{2.0, 0.0, 0.0};
    REQUIRE(cmd_replay_rewards(opt, out, err) == kExitOk);
    CHECK(out.str().find("termination timeout") != std::string::npos);
    CHECK(out.str().find("success yes") != std::string::npos);

    std::ifstream csv(opt.out_csv);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "tick,r_reach,r_velocity_direction,r_head_height,r_feet_clearance,termination");
    size_t rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 501);

    // malformed script: validation failure
    std::ofstream bad(script, std::ios::trunc);
    bad << "tick,time\n0,0\n";
    bad.close();
    CHECK(cmd_replay_rewards(opt, out, err) == kExitUsage);
}

// ======================================================
// bench-conv command
// ======================================================
TEST_CASE("bench-conv reports counts that match the accounting", "[pipeline]") {
    const fs::path dir = temp_dir("bench");
    std::ostringstream out, err;
    BenchConvOptions opt;
    opt.reps = 0;
    opt.out_csv = (dir / "bench.csv").string();
    REQUIRE(cmd_bench_conv(opt, out, err) == kExitOk);

    std::ifstream csv(opt.out_csv);
    std::string header, row2d, row3d;
    std::getline(csv, header);
    std::getline(csv, row2d);
    std::getline(csv, row3d);
    CHECK(header == "variant,macs,reps,median_ns,p95_ns");

    const PolicyNetwork net2d = make_policy_network(kActorObsDim, NetworkDims::kActionDim, 0);
    const Cnn3dReference net3d = make_cnn3d_reference(1);
    std::ostringstream want2d, want3d;
    want2d << "cnn2d_zgroup," << encoder_macs(net2d) << ",0,,";
    want3d << "cnn3d_reference," << encoder_macs(net3d) << ",0,,";
    CHECK(row2d == want2d.str());
    CHECK(row3d == want3d.str());

    // a timed run fills the latency columns with numbers
    opt.reps = 3;
    REQUIRE(cmd_bench_conv(opt, out, err) == kExitOk);
    std::ifstream timed(opt.out_csv);
    std::getline(timed, header);
    std::getline(timed, row2d);
    const size_t last_comma = row2d.rfind(',');
    CHECK(last_comma != std::string::npos);
    CHECK(std::stoll(row2d.substr(last_comma + 1)) > 0);

    opt.reps = -1;
    CHECK(cmd_bench_conv(opt, out, err) == kExitUsage);
}

// ======================================================
// curriculum-sim command
// ======================================================
namespace {
// difficulty column of the last row for each episode of env 0
std::vector<double> difficulty_column(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> out;
    while (std::getline(in, line)) {
        const size_t comma = line.rfind(',');
        out.push_back(std::stod(line.substr(comma + 1)));
    }
    return out;
}
}  // namespace

TEST_CASE("curriculum ladder climbs deterministically on certain success", "[pipeline]") {
    std::ostringstream out, err;
    CurriculumSimOptions opt;
    opt.episodes = 12;
    opt.model.constant = 1.0;
    REQUIRE(cmd_curriculum_sim(opt, out, err) == kExitOk);
    const std::vector<double> difficulty = difficulty_column(out.str());
    REQUIRE(difficulty.size() == 12);
    // ten promotions to the ceiling, then pinned
    CHECK(difficulty[8] == Catch::Approx(0.9).margin(1e-12));
    CHECK(difficulty[9] == Catch::Approx(1.0).margin(1e-12));
    CHECK(difficulty[11] == Catch::Approx(1.0).margin(1e-12));

    std::ostringstream out_zero;
    opt.model.constant = 0.0;
    REQUIRE(cmd_curriculum_sim(opt, out_zero, err) == kExitOk);
    for (double d : difficulty_column(out_zero.str())) CHECK(d == 0.0);
}

TEST_CASE("curriculum random walk stays inside the clamp band", "[pipeline]") {
    std::ostringstream out, err;
    CurriculumSimOptions opt;
    opt.episodes = 2000;
    opt.model.constant = 0.5;
    opt.seed = 21;
    REQUIRE(cmd_curriculum_sim(opt, out, err) == kExitOk);
    const std::vector<double> difficulty = difficulty_column(out.str());
    REQUIRE(difficulty.size() == 2000);
    double mean = 0.0;
    for (double d : difficulty) {
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        mean += d;
    }
    mean /= static_cast<double>(difficulty.size());
    // symmetric walk: the long-run mean sits well inside the band
    CHECK(mean > 0.15);
    CHECK(mean < 0.85);
}

TEST_CASE("curriculum table interpolates between its anchors", "[pipeline]") {
    SuccessModel model;
    model.table = {{0.0, 1.0}, {0.5, 0.5}, {1.0, 0.0}};
    model.validate();
    CHECK(model.probability(-1.0) == 1.0);
    CHECK(model.probability(0.25) == Catch::Approx(0.75).margin(1e-12));
    CHECK(model.probability(0.5) == 0.5);
    CHECK(model.probability(2.0) == 0.0);

    const fs::path dir = temp_dir("curr_table");
    {
        std::ofstream f(dir / "table.csv");
        f << "# difficulty,probability\n0.0,1.0\n1.0,0.2\n";
    }
    const SuccessModel loaded = SuccessModel::from_csv((dir / "table.csv").string());
    CHECK(loaded.probability(0.5) == Catch::Approx(0.6).margin(1e-12));

    SuccessModel bad;
    bad.table = {{0.0, 2.0}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    std::ostringstream out, err;
    CurriculumSimOptions opt;
    opt.model = bad;
    CHECK(cmd_curriculum_sim(opt, out, err) == kExitUsage);
}

// ======================================================
// Binary smoke tests
// ======================================================
TEST_CASE("the vxsim binary wires flags to exit codes", "[pipeline][cli]") {
    const fs::path dir = temp_dir("cli");
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("no-such-command") == 2);

    const std::string block = (dir / "block").string();
    CHECK(run_cli("gen-terrain --family upstair --difficulty 1.0 --seed 7 --out " + block) == 0);
    CHECK(fs::exists(fs::path(block) / "manifest.txt"));
    CHECK(run_cli("gen-terrain --family upstair --difficulty 1.5 --out " + block) == 2);
    CHECK(run_cli("gen-terrain --family upstair --out " + block) == 2);  // missing flag

    CHECK(run_cli("curriculum-sim --episodes 5 --success 1.0 --out " +
                  (dir / "curr.csv").string()) == 0);
    CHECK(run_cli("curriculum-sim --success 1.0 --success-table nope.csv") == 2);
    CHECK(run_cli("bench-conv --reps 0 --out " + (dir / "bench.csv").string()) == 0);

    const std::string scan_out = (dir / "scan").string();
    CHECK(run_cli("scan-pipeline --block " + block + " --out " + scan_out +
                  " --duration 0.1 --no-noise --no-clouds --no-height-maps") == 0);
    CHECK(fs::exists(fs::path(scan_out) / "grid_000000.vxgrid"));
    CHECK(run_cli("scan-pipeline --block /nope --out " + scan_out) == 2);
}
