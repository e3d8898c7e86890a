#pragma once

#include "smoothcorr/losses.hpp"

#include <chrono>
#include <filesystem>

namespace smoothcorr {

// Adam over the flattened parameter vector.
struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    Eigen::VectorXd m, v;
};

inline void adam_step(AdamState& state, ModelParams& params, const GradientBundle& grad) {
    const Eigen::VectorXd g = flatten(grad);
    Eigen::VectorXd theta = flatten(params);
    check(g.size() == theta.size(), "dimension", "adam_step: gradient shape mismatch");
    if (state.m.size() == 0) {
        state.m = Eigen::VectorXd::Zero(theta.size());
        state.v = Eigen::VectorXd::Zero(theta.size());
    }
    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    theta -= (state.lr / c1) *
             (state.m.array() / ((state.v.array() / c2).sqrt() + state.eps)).matrix();
    unflatten(theta, params);
}

inline void accumulate(GradientBundle& total, const GradientBundle& part) {
    Eigen::VectorXd sum = flatten(total) + flatten(part);
    unflatten(sum, total);
}

// ---------------------------------------------------------------------------

// One training pair, fully materialized: input signals, operators, bases,
// and the ground-truth correspondence.
struct TrainPairData {
    Eigen::MatrixXd X1, X2;  // per-vertex input signals (xyz)
    SpMat W1, W2;
    SpectralBasis basis1, basis2;
    PointMap gt;
    CorrespondenceSet gt_set;
};

struct TrainOptions {
    LossConfig loss;
    int epochs = 200;
    double lr = 0.001;
    std::uint64_t seed = 1;
    int in_dim = 3;
    std::vector<int> hidden = {128, 128, 128, 128};
    int out_dim = 128;
};

struct EpochRow {
    int epoch = 0;
    double total = 0.0, contrastive = 0.0, smooth = 0.0, wall_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRow> log;
};

namespace detail {

inline void check_finite_loss(const CombinedResult& loss, int epoch, int pair_index) {
    const std::string where =
        " at epoch " + std::to_string(epoch) + ", pair " + std::to_string(pair_index);
    check(std::isfinite(loss.contrastive), "solver",
          "training diverged: non-finite contrastive loss" + where);
    check(std::isfinite(loss.smooth), "solver",
          "training diverged: non-finite smoothness loss" + where);
    check(loss.dG1.allFinite() && loss.dG2.allFinite(), "solver",
          "training diverged: non-finite feature gradient" + where);
}

}  // namespace detail

// Gradient steps with batch size one pair; epochs sweep the pair list in
// order. Sampling of ground-truth pairs is re-drawn every step from a
// substream named by the global step index, so runs are seed-deterministic.
inline TrainResult train(const TrainOptions& opt, const std::vector<TrainPairData>& pairs,
                         ModelParams initial, int start_epoch = 0) {
    check(!pairs.empty(), "invariant", "train: empty pair list");
    check(opt.epochs >= 1, "invariant", "train: epochs must be >= 1");
    check(opt.lr > 0.0, "invariant", "train: learning rate must be positive");
    opt.loss.validate();

    TrainResult result;
    result.params = std::move(initial);
    AdamState adam;
    adam.lr = opt.lr;
    long global_step = static_cast<long>(start_epoch) * static_cast<long>(pairs.size());
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = start_epoch; epoch < start_epoch + opt.epochs; ++epoch) {
        EpochRow row;
        row.epoch = epoch;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const TrainPairData& pair = pairs[p];
            const FeatureMatrix G1 = forward(result.params, pair.X1, &pair.basis1);
            const FeatureMatrix G2 = forward(result.params, pair.X2, &pair.basis2);

            const CorrespondenceSet sampled = sample_correspondences(
                pair.gt_set, opt.loss.sample_count,
                substream_seed(opt.seed, "step", static_cast<std::uint64_t>(global_step)));

            LossInputs inputs;
            inputs.W1 = &pair.W1;
            inputs.W2 = &pair.W2;
            inputs.basis1 = &pair.basis1;
            inputs.basis2 = &pair.basis2;
            inputs.gt_pmap = &pair.gt;
            const CombinedResult loss = combined_loss(opt.loss, G1, G2, inputs, sampled);
            detail::check_finite_loss(loss, epoch, static_cast<int>(p));

            GradientBundle grad = backward(result.params, pair.X1, &pair.basis1, loss.dG1);
            accumulate(grad, backward(result.params, pair.X2, &pair.basis2, loss.dG2));
            adam_step(adam, result.params, grad);

            row.total += loss.total;
            row.contrastive += loss.contrastive;
            row.smooth += loss.smooth;
            ++global_step;
        }
        const double inv = 1.0 / static_cast<double>(pairs.size());
        row.total *= inv;
        row.contrastive *= inv;
        row.smooth *= inv;
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);
    }
    return result;
}

// Loss-curve log: CSV with columns epoch, L, L_c, L_s, wall_seconds.
// append = true continues an existing file without rewriting the header.
inline void write_loss_csv(const std::vector<EpochRow>& log, const std::string& path,
                           bool append = false) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    check(out.good(), "io", "cannot open loss CSV for writing: " + path);
    if (!append) out << "epoch,L,L_c,L_s,wall_seconds\n";
    out << std::setprecision(17);
    for (const auto& row : log)
        out << row.epoch << "," << row.total << "," << row.contrastive << "," << row.smooth << ","
            << row.wall_seconds << "\n";
    check(out.good(), "io", "write failure: " + path);
}

// Number of data rows already present (header excluded); used to continue
// epoch numbering on resume.
inline int loss_csv_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) return 0;
    std::string line;
    int rows = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (!line.empty()) ++rows;
    }
    return rows;
}

}  // namespace smoothcorr
