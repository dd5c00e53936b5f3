// Command-line front end: flag parsing only, all behavior lives in the
// pipeline header so tests can call the same entry points directly.
#include <CLI11.hpp>

#include "vxs/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"voxel-lidar perception pipeline tool"};
    app.require_subcommand(1);
    int rc = vxs::kExitOk;

    // ---- gen-terrain ----
    vxs::GenTerrainOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-terrain", "generate a terrain block");
    gen_cmd->add_option("--family", gen.family, "terrain family name")->required();
    gen_cmd->add_option("--difficulty", gen.difficulty, "difficulty in [0, 1]")->required();
    gen_cmd->add_option("--seed", gen.seed, "generation seed");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_flag("--binary", gen.binary, "write binary meshes instead of OBJ");
    gen_cmd->callback([&] { rc = vxs::cmd_gen_terrain(gen); });

    // ---- scan-pipeline ----
    vxs::ScanPipelineOptions scan;
    bool no_clouds = false, no_height_maps = false;
    CLI::App* scan_cmd =
        app.add_subcommand("scan-pipeline", "sweep, buffer, and voxelize along a script");
    scan_cmd->add_option("--block", scan.block_dir, "exported block directory")->required();
    scan_cmd->add_option("--script", scan.script_path, "trace csv; omitted: stationary script");
    scan_cmd->add_option("--sensor-config", scan.sensor_cfg, "sensor kv file");
    scan_cmd->add_option("--out", scan.out_dir, "output directory")->required();
    scan_cmd->add_option("--seed", scan.seed, "randomization seed");
    scan_cmd->add_option("--duration", scan.duration_s, "synthesized script length, seconds");
    scan_cmd->add_flag("--attach-leg-proxy", scan.attach_leg_proxy,
                       "scan a shin-sized box riding with the base");
    scan_cmd->add_flag("--no-noise", scan.no_noise, "disable all domain randomization");
    scan_cmd->add_flag("--no-clouds", no_clouds, "skip per-tick point clouds");
    scan_cmd->add_flag("--no-height-maps", no_height_maps, "skip per-tick height maps");
    scan_cmd->callback([&] {
        scan.save_clouds = !no_clouds;
        scan.save_height_maps = !no_height_maps;
        rc = vxs::cmd_scan_pipeline(scan);
    });

    // ---- replay-rewards ----
    vxs::ReplayRewardsOptions replay;
    std::vector<double> goal_xyz;
    CLI::App* replay_cmd =
        app.add_subcommand("replay-rewards", "evaluate reward terms along a script");
    replay_cmd->add_option("--block", replay.block_dir, "exported block directory")->required();
    replay_cmd->add_option("--script", replay.script_path, "trace csv")->required();
    replay_cmd->add_option("--out", replay.out_csv, "reward csv path")->required();
    replay_cmd->add_option("--seed", replay.seed, "goal sampling seed");
    replay_cmd->add_option("--goal", goal_xyz, "explicit goal x y z")->expected(3);
    replay_cmd->callback([&] {
        if (goal_xyz.size() == 3) replay.goal = vxs::Vec3{goal_xyz[0], goal_xyz[1], goal_xyz[2]};
        rc = vxs::cmd_replay_rewards(replay);
    });

    // ---- bench-conv ----
    vxs::BenchConvOptions bench;
    CLI::App* bench_cmd =
        app.add_subcommand("bench-conv", "count and time the voxel encoders");
    bench_cmd->add_option("--reps", bench.reps, "timed repetitions; 0 for counts only");
    bench_cmd->add_option("--seed", bench.seed, "weight and input seed");
    bench_cmd->add_option("--density", bench.density, "input occupancy fraction");
    bench_cmd->add_option("--out", bench.out_csv, "csv path; omitted: stdout");
    bench_cmd->callback([&] { rc = vxs::cmd_bench_conv(bench); });

    // ---- curriculum-sim ----
    vxs::CurriculumSimOptions curriculum;
    double success_prob = 1.0;
    std::string success_table;
    CLI::App* cur_cmd =
        app.add_subcommand("curriculum-sim", "simulate promote/demote difficulty dynamics");
    cur_cmd->add_option("--episodes", curriculum.episodes, "episodes per environment");
    cur_cmd->add_option("--envs", curriculum.envs, "independent environments");
    cur_cmd->add_option("--initial", curriculum.initial, "starting difficulty");
    cur_cmd->add_option("--step", curriculum.step, "difficulty step per episode");
    CLI::Option* prob_opt =
        cur_cmd->add_option("--success", success_prob, "constant success probability");
    CLI::Option* table_opt = cur_cmd->add_option("--success-table", success_table,
                                                 "csv of difficulty,probability rows");
    prob_opt->excludes(table_opt);
    table_opt->excludes(prob_opt);
    cur_cmd->add_option("--seed", curriculum.seed, "episode outcome seed");
    cur_cmd->add_option("--out", curriculum.out_csv, "csv path; omitted: stdout");
    cur_cmd->callback([&] {
        try {
            if (!success_table.empty())
                curriculum.model = vxs::SuccessModel::from_csv(success_table);
            else
                curriculum.model.constant = success_prob;
        } catch (const std::exception& e) {
            std::cerr << "curriculum-sim: " << e.what() << "\n";
            rc = vxs::kExitUsage;
            return;
        }
        rc = vxs::cmd_curriculum_sim(curriculum);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : vxs::kExitUsage;
    }
    return rc;
}
