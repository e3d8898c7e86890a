#include <smoothcorr/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace smoothcorr;

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    double lambda = 0.0;
    std::string regularizer;
    int k = 0;
    double tau = 0.0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Config file (TOML-style key = value)");
    cmd->add_option("--seed", flags.seed, "Root random seed");
    cmd->add_option("--out", flags.out, "Output directory");
    cmd->add_option("--lambda", flags.lambda, "Smoothness weight");
    cmd->add_option("--regularizer", flags.regularizer, "none | dirichlet | spectral");
    cmd->add_option("--k", flags.k, "Spectral basis size");
    cmd->add_option("--tau", flags.tau, "Softmax temperature");
}

// Flags beat config-file values; SMOOTHCORR_CACHE beats both for cache_dir.
RunConfig resolve_config(const CLI::App* cmd, const CommonFlags& flags) {
    RunConfig cfg = flags.config_path.empty() ? RunConfig{} : load_config(flags.config_path);
    if (cmd->count("--seed") > 0) cfg.seed = flags.seed;
    if (cmd->count("--out") > 0) cfg.out_dir = flags.out;
    if (cmd->count("--lambda") > 0) cfg.loss.lambda = flags.lambda;
    if (cmd->count("--regularizer") > 0) cfg.loss.regularizer = parse_regularizer(flags.regularizer);
    if (cmd->count("--k") > 0) cfg.loss.k = flags.k;
    if (cmd->count("--tau") > 0) cfg.loss.tau = flags.tau;
    apply_cache_env(cfg);
    cfg.validate();
    return cfg;
}

int cmd_synth(const CLI::App* cmd, const CommonFlags& flags) {
    RunConfig cfg = resolve_config(cmd, flags);
    std::string dir = std::filesystem::path(cfg.manifest).parent_path().string();
    if (cmd->count("--out") > 0) dir = cfg.out_dir;
    if (dir.empty()) dir = ".";
    SynthConfig synth;
    synth.templates = cfg.templates;
    synth.n_train = cfg.n_train;
    synth.n_test = cfg.n_test;
    synth.magnitude = cfg.magnitude;
    synth.decimate_fraction = cfg.decimate_fraction;
    synth.seed = cfg.seed;
    const DatasetManifest manifest = generate_dataset(synth, dir);
    if (manifest.pairs.empty()) std::cerr << "warning: generated an empty dataset\n";
    std::cout << "wrote " << manifest.pairs.size() << " pairs to " << dir << "\n";
    return 0;
}

int cmd_precompute(const CLI::App* cmd, const CommonFlags& flags, const std::string& manifest_opt) {
    RunConfig cfg = resolve_config(cmd, flags);
    const std::string path = manifest_opt.empty() ? cfg.manifest : manifest_opt;
    const DatasetManifest manifest = load_manifest(path);
    CacheStats stats;
    for (const auto& entry : manifest.pairs) {
        ensure_cached(entry.mesh1, cfg.loss.k, cfg.cache_dir, &stats);
        ensure_cached(entry.mesh2, cfg.loss.k, cfg.cache_dir, &stats);
    }
    std::cout << "cache: " << stats.hits << " hits, " << stats.misses << " misses\n";
    return 0;
}

int cmd_train(const CLI::App* cmd, const CommonFlags& flags, bool resume) {
    RunConfig cfg = resolve_config(cmd, flags);
    const TrainArtifacts artifacts = run_training(cfg, resume);
    std::cout << "checkpoint: " << artifacts.checkpoint_path << "\n"
              << "loss log: " << artifacts.csv_path << "\n";
    return 0;
}

int cmd_match(const CLI::App* cmd, const CommonFlags& flags, const std::string& mesh1,
              const std::string& mesh2, const std::string& checkpoint_opt,
              const std::string& map_out_opt) {
    RunConfig cfg = resolve_config(cmd, flags);
    const std::string checkpoint =
        checkpoint_opt.empty()
            ? (std::filesystem::path(cfg.out_dir) / "checkpoint.scmp").string()
            : checkpoint_opt;
    const ModelParams params = load_checkpoint(checkpoint);
    const PointMap pred = match_meshes(params, cfg, mesh1, mesh2);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string map_out =
        map_out_opt.empty() ? (std::filesystem::path(cfg.out_dir) / "pointmap.txt").string()
                            : map_out_opt;
    save_point_map(pred, map_out);
    std::cout << "point map: " << map_out << " (" << pred.size() << " entries)\n";
    return 0;
}

int cmd_eval(const CLI::App* cmd, const CommonFlags& flags, const std::string& pointmap,
             const std::string& gt, const std::string& mesh2) {
    RunConfig cfg = resolve_config(cmd, flags);
    const PointMap pred = load_point_map(pointmap);
    const PointMap truth = load_point_map(gt);
    const TriangleMesh mesh = load_mesh(mesh2);
    const ErrorReport report = mean_geodesic_error(pred, truth, mesh);
    std::filesystem::create_directories(cfg.out_dir);
    write_error_csv(report, (std::filesystem::path(cfg.out_dir) / "errors.csv").string());
    write_report_json(report, (std::filesystem::path(cfg.out_dir) / "report.json").string());
    std::cout << "mean geodesic error: " << report.mean << " (x100: " << report.mean_x100
              << ")\n";
    return 0;
}

int cmd_sweep(const CLI::App* cmd, const CommonFlags& flags) {
    RunConfig cfg = resolve_config(cmd, flags);
    const std::vector<SweepRow> rows = run_sweep(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    write_sweep_csv(rows, (std::filesystem::path(cfg.out_dir) / "sweep.csv").string());
    std::cout << "lambda  mean_gerr_x100  frac>0.1  final_loss\n";
    for (const auto& row : rows) {
        std::printf("%-7g %-15.4f %-9.4f %.6f\n", row.lambda, row.mean_x100, row.frac_above,
                    row.final_loss);
    }
    return 0;
}

int cmd_kp2d_train(const CLI::App* cmd, const CommonFlags& flags) {
    RunConfig cfg = resolve_config(cmd, flags);
    const Kp2dArtifacts artifacts = run_kp2d_training(cfg, cfg.kp2d_data_dir);
    std::cout << "checkpoint: " << artifacts.checkpoint_path << "\n"
              << "loss log: " << artifacts.csv_path << "\n";
    return 0;
}

int cmd_kp2d_eval(const CLI::App* cmd, const CommonFlags& flags,
                  const std::string& checkpoint_opt) {
    RunConfig cfg = resolve_config(cmd, flags);
    const std::string checkpoint =
        checkpoint_opt.empty()
            ? (std::filesystem::path(cfg.out_dir) / "kp2d-checkpoint.scmp").string()
            : checkpoint_opt;
    const ModelParams params = load_checkpoint(checkpoint);
    const Kp2dManifest manifest = load_kp2d_manifest(
        (std::filesystem::path(cfg.kp2d_data_dir) / "manifest.json").string());
    const Kp2dEvaluation eval = evaluate_kp2d_split(params, manifest, "test");
    std::cout << "hits@1: " << eval.hits_at_1 << " over " << eval.n_pairs
              << " pairs (random expectation " << eval.random_expectation << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smoothness-regularized contrastive correspondence toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string manifest_opt, mesh1, mesh2, checkpoint_opt, map_out_opt, pointmap, gt;
    bool resume = false;

    CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic benchmark dataset");
    add_common(synth, flags);
    CLI::App* precompute =
        app.add_subcommand("precompute", "Build operator and basis caches for a manifest");
    add_common(precompute, flags);
    precompute->add_option("--manifest", manifest_opt, "Dataset manifest path");
    CLI::App* train = app.add_subcommand("train", "Train the feature head");
    add_common(train, flags);
    train->add_flag("--resume", resume, "Continue from an existing checkpoint");
    CLI::App* match = app.add_subcommand("match", "Match two meshes with a trained checkpoint");
    add_common(match, flags);
    match->add_option("mesh1", mesh1, "Source mesh")->required();
    match->add_option("mesh2", mesh2, "Target mesh")->required();
    match->add_option("--checkpoint", checkpoint_opt, "Checkpoint path");
    match->add_option("--map-out", map_out_opt, "Point-map output path");
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a point map against ground truth");
    add_common(eval, flags);
    eval->add_option("pointmap", pointmap, "Predicted point map")->required();
    eval->add_option("gt", gt, "Ground-truth point map")->required();
    eval->add_option("mesh2", mesh2, "Target mesh")->required();
    CLI::App* sweep = app.add_subcommand("sweep", "Train and evaluate over the lambda grid");
    add_common(sweep, flags);
    CLI::App* kp2d_train = app.add_subcommand("kp2d-train", "Train the 2D keypoint head");
    add_common(kp2d_train, flags);
    CLI::App* kp2d_eval = app.add_subcommand("kp2d-eval", "Evaluate 2D keypoint matching");
    add_common(kp2d_eval, flags);
    kp2d_eval->add_option("--checkpoint", checkpoint_opt, "Checkpoint path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(synth)) return cmd_synth(synth, flags);
        if (app.got_subcommand(precompute)) return cmd_precompute(precompute, flags, manifest_opt);
        if (app.got_subcommand(train)) return cmd_train(train, flags, resume);
        if (app.got_subcommand(match))
            return cmd_match(match, flags, mesh1, mesh2, checkpoint_opt, map_out_opt);
        if (app.got_subcommand(eval)) return cmd_eval(eval, flags, pointmap, gt, mesh2);
        if (app.got_subcommand(sweep)) return cmd_sweep(sweep, flags);
        if (app.got_subcommand(kp2d_train)) return cmd_kp2d_train(kp2d_train, flags);
        if (app.got_subcommand(kp2d_eval)) return cmd_kp2d_eval(kp2d_eval, flags, checkpoint_opt);
    } catch (const smoothcorr::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "internal: no subcommand dispatched\n";
    return 1;
}
