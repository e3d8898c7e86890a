#pragma once

#include "smoothcorr/config.hpp"
#include "smoothcorr/kp2d.hpp"
#include "smoothcorr/synth.hpp"

namespace smoothcorr {

// Orchestration shared by the command-line tool and the end-to-end tests.
// Every function is deterministic in the RunConfig it receives.

inline std::string manifest_path(const RunConfig& cfg) { return cfg.manifest; }

inline DatasetManifest ensure_dataset(const RunConfig& cfg) {
    if (std::filesystem::exists(cfg.manifest)) return load_manifest(cfg.manifest);
    SynthConfig synth;
    synth.templates = cfg.templates;
    synth.n_train = cfg.n_train;
    synth.n_test = cfg.n_test;
    synth.magnitude = cfg.magnitude;
    synth.decimate_fraction = cfg.decimate_fraction;
    synth.seed = cfg.seed;
    const std::string dir = std::filesystem::path(cfg.manifest).parent_path().string();
    generate_dataset(synth, dir.empty() ? "." : dir);
    return load_manifest(cfg.manifest);
}

// Materializes one manifest split with cached operators and bases.
inline std::vector<TrainPairData> load_split(const DatasetManifest& manifest,
                                             const std::string& split, int k,
                                             const std::string& cache_dir,
                                             CacheStats* stats = nullptr) {
    std::vector<TrainPairData> out;
    for (const auto& entry : manifest.pairs) {
        if (entry.split != split) continue;
        const CachedShape s1 = ensure_cached(entry.mesh1, k, cache_dir, stats);
        const CachedShape s2 = ensure_cached(entry.mesh2, k, cache_dir, stats);
        TrainPairData pair;
        const TriangleMesh m1 = load_mesh(entry.mesh1);
        const TriangleMesh m2 = load_mesh(entry.mesh2);
        pair.X1 = m1.vertices;
        pair.X2 = m2.vertices;
        pair.W1 = s1.ops.stiffness;
        pair.W2 = s2.ops.stiffness;
        pair.basis1 = s1.basis;
        pair.basis2 = s2.basis;
        pair.gt = load_point_map(entry.gt);
        check(static_cast<int>(pair.gt.size()) == m1.n_vertices(), "dimension",
              entry.gt + ": ground truth length does not match " + entry.mesh1);
        for (int t : pair.gt)
            check(t >= 0 && t < m2.n_vertices(), "dimension",
                  entry.gt + ": target index out of range");
        pair.gt_set.reserve(pair.gt.size());
        for (std::size_t i = 0; i < pair.gt.size(); ++i)
            pair.gt_set.push_back({static_cast<int>(i), pair.gt[i]});
        out.push_back(std::move(pair));
    }
    return out;
}

inline TrainOptions train_options(const RunConfig& cfg) {
    TrainOptions opt;
    opt.loss = cfg.loss;
    opt.epochs = cfg.epochs;
    opt.lr = cfg.learning_rate;
    opt.seed = cfg.seed;
    opt.in_dim = cfg.in_dim;
    opt.hidden = cfg.hidden_dims;
    opt.out_dim = cfg.out_dim;
    return opt;
}

struct TrainArtifacts {
    ModelParams params;
    std::string checkpoint_path;
    std::string csv_path;
};

// Trains on the manifest's train split. With resume = true and an existing
// checkpoint, training continues and the CSV is appended without gaps;
// otherwise a fresh run overwrites both artifacts.
inline TrainArtifacts run_training(const RunConfig& cfg, bool resume = false) {
    const DatasetManifest manifest = ensure_dataset(cfg);
    CacheStats stats;
    const std::vector<TrainPairData> pairs =
        load_split(manifest, "train", cfg.loss.k, cfg.cache_dir, &stats);
    check(!pairs.empty(), "invariant", "train: manifest has no train pairs");

    std::filesystem::create_directories(cfg.out_dir);
    TrainArtifacts artifacts;
    artifacts.checkpoint_path =
        (std::filesystem::path(cfg.out_dir) / "checkpoint.scmp").string();
    artifacts.csv_path = (std::filesystem::path(cfg.out_dir) / "loss.csv").string();

    ModelParams params;
    int start_epoch = 0;
    if (resume && std::filesystem::exists(artifacts.checkpoint_path)) {
        params = load_checkpoint(artifacts.checkpoint_path);
        start_epoch = loss_csv_rows(artifacts.csv_path);
    } else {
        params = init_params(cfg.seed, cfg.in_dim, cfg.hidden_dims, cfg.out_dim,
                             static_cast<int>(cfg.hidden_dims.size()));
    }

    TrainResult result = train(train_options(cfg), pairs, std::move(params), start_epoch);
    write_loss_csv(result.log, artifacts.csv_path, start_epoch > 0);
    save_checkpoint(result.params, artifacts.checkpoint_path);
    artifacts.params = std::move(result.params);
    return artifacts;
}

// Matching: features from the checkpoint head, then exact nearest-neighbor
// search on normalized features. No functional-map computation here.
inline PointMap match_meshes(const ModelParams& params, const RunConfig& cfg,
                             const std::string& mesh1_path, const std::string& mesh2_path) {
    const CachedShape s1 = ensure_cached(mesh1_path, cfg.loss.k, cfg.cache_dir);
    const CachedShape s2 = ensure_cached(mesh2_path, cfg.loss.k, cfg.cache_dir);
    const TriangleMesh m1 = load_mesh(mesh1_path);
    const TriangleMesh m2 = load_mesh(mesh2_path);
    const FeatureMatrix g1 = forward(params, m1.vertices, &s1.basis);
    const FeatureMatrix g2 = forward(params, m2.vertices, &s2.basis);
    return nearest_neighbor_map(g1, g2);
}

struct PairEvaluation {
    double mean = 0.0;
    double mean_x100 = 0.0;
    double frac_above = 0.0;  // fraction of errors > threshold
};

inline PairEvaluation evaluate_pair(const PointMap& pred, const PointMap& gt,
                                    const TriangleMesh& mesh2, double threshold = 0.1) {
    const ErrorReport report = mean_geodesic_error(pred, gt, mesh2);
    PairEvaluation out;
    out.mean = report.mean;
    out.mean_x100 = report.mean_x100;
    std::size_t above = 0;
    for (double e : report.errors)
        if (e > threshold) ++above;
    out.frac_above = static_cast<double>(above) / static_cast<double>(report.errors.size());
    return out;
}

struct SplitEvaluation {
    double mean = 0.0;        // average of per-pair means
    double mean_x100 = 0.0;
    double frac_above = 0.0;  // average fraction of errors > 0.1
    int n_pairs = 0;
};

inline SplitEvaluation evaluate_split(const ModelParams& params, const RunConfig& cfg,
                                      const DatasetManifest& manifest, const std::string& split) {
    SplitEvaluation out;
    for (const auto& entry : manifest.pairs) {
        if (entry.split != split) continue;
        const PointMap pred = match_meshes(params, cfg, entry.mesh1, entry.mesh2);
        const PointMap gt = load_point_map(entry.gt);
        const PairEvaluation e = evaluate_pair(pred, gt, load_mesh(entry.mesh2));
        out.mean += e.mean;
        out.mean_x100 += e.mean_x100;
        out.frac_above += e.frac_above;
        ++out.n_pairs;
    }
    check(out.n_pairs > 0, "invariant", "evaluate_split: no pairs in split '" + split + "'");
    out.mean /= out.n_pairs;
    out.mean_x100 /= out.n_pairs;
    out.frac_above /= out.n_pairs;
    return out;
}

// Mean per-column Dirichlet energy of the trained features over a split's
// test shapes; the assertable restatement of the paper's smoothness figure.
inline double mean_feature_dirichlet_energy(const ModelParams& params, const RunConfig& cfg,
                                            const DatasetManifest& manifest,
                                            const std::string& split) {
    double total = 0.0;
    long count = 0;
    for (const auto& entry : manifest.pairs) {
        if (entry.split != split) continue;
        for (const std::string& path : {entry.mesh1, entry.mesh2}) {
            const CachedShape s = ensure_cached(path, cfg.loss.k, cfg.cache_dir);
            const TriangleMesh mesh = load_mesh(path);
            const FeatureMatrix g = forward(params, mesh.vertices, &s.basis);
            for (int c = 0; c < g.cols(); ++c) total += dirichlet_energy(s.ops.stiffness, g.col(c));
            count += g.cols();
        }
    }
    check(count > 0, "invariant", "mean_feature_dirichlet_energy: empty split");
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Lambda sweep: trains one model per lambda in {0.1, 1, 10, 100} and
// evaluates on the test split.

struct SweepRow {
    double lambda = 0.0;
    double mean_x100 = 0.0;
    double frac_above = 0.0;
    double final_loss = 0.0;
};

inline std::vector<SweepRow> run_sweep(const RunConfig& base) {
    const std::vector<double> lambdas = {0.1, 1.0, 10.0, 100.0};
    std::vector<SweepRow> rows;
    const DatasetManifest manifest = ensure_dataset(base);
    for (double lambda : lambdas) {
        RunConfig cfg = base;
        cfg.loss.lambda = lambda;
        cfg.out_dir = (std::filesystem::path(base.out_dir) /
                       ("sweep-lambda-" + std::to_string(lambda)))
                          .string();
        const TrainArtifacts artifacts = run_training(cfg);
        const SplitEvaluation eval = evaluate_split(artifacts.params, cfg, manifest, "test");
        SweepRow row;
        row.lambda = lambda;
        row.mean_x100 = eval.mean_x100;
        row.frac_above = eval.frac_above;
        std::ifstream csv(artifacts.csv_path);
        std::string line, last;
        std::getline(csv, line);  // header
        while (std::getline(csv, line))
            if (!line.empty()) last = line;
        if (!last.empty()) {
            const auto c1 = last.find(',');
            const auto c2 = last.find(',', c1 + 1);
            row.final_loss = std::stod(last.substr(c1 + 1, c2 - c1 - 1));
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "io", "cannot open sweep CSV for writing: " + path);
    out << "lambda,mean_geodesic_error_x100,frac_above_0.1,final_loss\n";
    out << std::setprecision(17);
    for (const auto& row : rows)
        out << row.lambda << "," << row.mean_x100 << "," << row.frac_above << ","
            << row.final_loss << "\n";
    check(out.good(), "io", "write failure: " + path);
}

// ---------------------------------------------------------------------------
// 2D pipeline.

inline Kp2dManifest ensure_kp2d_dataset(const RunConfig& cfg, const std::string& dir) {
    const std::string manifest = (std::filesystem::path(dir) / "manifest.json").string();
    if (std::filesystem::exists(manifest)) return load_kp2d_manifest(manifest);
    Kp2dSynthConfig synth;
    synth.n_train = cfg.n_train;
    synth.n_test = cfg.n_test;
    synth.min_nodes = cfg.kp2d_min_nodes;
    synth.max_nodes = cfg.kp2d_max_nodes;
    synth.embed_dim = cfg.kp2d_embed_dim;
    synth.signal_noise = cfg.kp2d_signal_noise;
    synth.position_noise = cfg.kp2d_position_noise;
    synth.seed = cfg.seed;
    generate_kp2d_dataset(synth, dir);
    return load_kp2d_manifest(manifest);
}

inline std::vector<Kp2dPairData> load_kp2d_split(const Kp2dManifest& manifest,
                                                 const std::string& split,
                                                 const LossConfig& loss) {
    std::vector<Kp2dPairData> out;
    for (const auto& [file, tag] : manifest.pairs) {
        if (tag != split) continue;
        out.push_back(prepare_kp2d_pair(load_graph_pair(file), loss));
    }
    return out;
}

struct Kp2dArtifacts {
    ModelParams params;
    std::string checkpoint_path;
    std::string csv_path;
};

inline Kp2dArtifacts run_kp2d_training(const RunConfig& cfg, const std::string& data_dir) {
    const Kp2dManifest manifest = ensure_kp2d_dataset(cfg, data_dir);
    const std::vector<Kp2dPairData> pairs = load_kp2d_split(manifest, "train", cfg.loss);
    check(!pairs.empty(), "invariant", "kp2d-train: manifest has no train pairs");
    const int in_dim = static_cast<int>(pairs.front().pair.a.node_signals.cols());

    std::filesystem::create_directories(cfg.out_dir);
    Kp2dArtifacts artifacts;
    artifacts.checkpoint_path =
        (std::filesystem::path(cfg.out_dir) / "kp2d-checkpoint.scmp").string();
    artifacts.csv_path = (std::filesystem::path(cfg.out_dir) / "kp2d-loss.csv").string();

    TrainOptions opt = train_options(cfg);
    opt.in_dim = in_dim;
    ModelParams params = init_params(cfg.seed, in_dim, cfg.hidden_dims, cfg.out_dim,
                                     static_cast<int>(cfg.hidden_dims.size()));
    TrainResult result = train_2d(opt, pairs, std::move(params));
    write_loss_csv(result.log, artifacts.csv_path);
    save_checkpoint(result.params, artifacts.checkpoint_path);
    artifacts.params = std::move(result.params);
    return artifacts;
}

struct Kp2dEvaluation {
    double hits_at_1 = 0.0;         // averaged over pairs
    double random_expectation = 0.0;  // average 1/m
    int n_pairs = 0;
};

inline Kp2dEvaluation evaluate_kp2d_split(const ModelParams& params, const Kp2dManifest& manifest,
                                          const std::string& split) {
    Kp2dEvaluation out;
    for (const auto& [file, tag] : manifest.pairs) {
        if (tag != split) continue;
        const GraphPair pair = load_graph_pair(file);
        const PointMap pred = match_graphs(params, pair.a, pair.b);
        out.hits_at_1 += hits_at_1(pred, pair.gt);
        out.random_expectation += 1.0 / static_cast<double>(pair.b.m());
        ++out.n_pairs;
    }
    check(out.n_pairs > 0, "invariant", "kp2d-eval: no pairs in split '" + split + "'");
    out.hits_at_1 /= out.n_pairs;
    out.random_expectation /= out.n_pairs;
    return out;
}

}  // namespace smoothcorr
