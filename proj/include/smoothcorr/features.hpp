#pragma once

#include "smoothcorr/spectral.hpp"

namespace smoothcorr {

using FeatureMatrix = Eigen::MatrixXd;  // n x d, rows are per-point features

// Feature head: a stack of blocks, each diffusing its input channels with
// learnable per-channel times and then applying a pointwise two-layer MLP.
// When the block width matches its input width the MLP acts as a residual
// on the diffused signal. A final linear layer maps to d output channels.
//
// Diffusion times are stored in log-space and measured in units of
// 1/lambda_max of the basis, so positivity needs no projection and the
// smoothing scale is mesh-independent.
struct FeatureBlock {
    Eigen::VectorXd log_times;  // per input channel
    Eigen::MatrixXd w1;         // in x width
    Eigen::VectorXd b1;         // width
    Eigen::MatrixXd w2;         // width x width
    Eigen::VectorXd b2;         // width
};

struct ModelParams {
    int in_dim = 0;
    std::vector<int> widths;
    int out_dim = 0;
    std::vector<FeatureBlock> blocks;
    Eigen::MatrixXd w_out;  // widths.back() x out_dim
    Eigen::VectorXd b_out;  // out_dim
};

using GradientBundle = ModelParams;

inline ModelParams init_params(std::uint64_t seed, int in_dim, const std::vector<int>& hidden_dims,
                               int d, int n_blocks) {
    check(in_dim >= 1 && d >= 1 && n_blocks >= 1, "dimension", "init_params: dims must be >= 1");
    check(static_cast<int>(hidden_dims.size()) == n_blocks, "dimension",
          "init_params: hidden_dims length must equal n_blocks");
    for (int w : hidden_dims) check(w >= 1, "dimension", "init_params: hidden width must be >= 1");

    Rng rng(seed, "init");
    auto matrix = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
        for (int c = 0; c < cols; ++c)
            for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
        return m;
    };

    ModelParams params;
    params.in_dim = in_dim;
    params.widths = hidden_dims;
    params.out_dim = d;
    int prev = in_dim;
    for (int b = 0; b < n_blocks; ++b) {
        FeatureBlock block;
        block.log_times = Eigen::VectorXd::Constant(prev, std::log(1e-2));
        block.w1 = matrix(prev, hidden_dims[static_cast<std::size_t>(b)]);
        block.b1 = Eigen::VectorXd::Zero(hidden_dims[static_cast<std::size_t>(b)]);
        block.w2 = matrix(hidden_dims[static_cast<std::size_t>(b)], hidden_dims[static_cast<std::size_t>(b)]);
        block.b2 = Eigen::VectorXd::Zero(hidden_dims[static_cast<std::size_t>(b)]);
        params.blocks.push_back(std::move(block));
        prev = hidden_dims[static_cast<std::size_t>(b)];
    }
    params.w_out = matrix(prev, d);
    params.b_out = Eigen::VectorXd::Zero(d);
    return params;
}

inline GradientBundle zeros_like(const ModelParams& params) {
    GradientBundle g = params;
    for (auto& block : g.blocks) {
        block.log_times.setZero();
        block.w1.setZero();
        block.b1.setZero();
        block.w2.setZero();
        block.b2.setZero();
    }
    g.w_out.setZero();
    g.b_out.setZero();
    return g;
}

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

struct BlockCache {
    Eigen::MatrixXd input;   // n x in
    Eigen::MatrixXd coeff;   // k x in, Phi' A input (empty without basis)
    Eigen::MatrixXd damping; // k x in, exp(-lambda * t_j)
    Eigen::MatrixXd diffused;
    Eigen::MatrixXd pre_act; // n x width
    Eigen::MatrixXd act;     // n x width
    bool residual = false;
};

struct ForwardCache {
    std::vector<BlockCache> blocks;
    Eigen::MatrixXd last;  // input of the output layer
    double lambda_scale = 1.0;
};

inline Eigen::MatrixXd forward_impl(const ModelParams& params, const Eigen::MatrixXd& inputs,
                                    const SpectralBasis* basis, ForwardCache* cache) {
    check(inputs.cols() == params.in_dim, "dimension",
          "forward: input has " + std::to_string(inputs.cols()) + " channels, expected " +
              std::to_string(params.in_dim));
    if (basis != nullptr) {
        check(inputs.rows() == basis->n(), "dimension",
              "forward: input row count does not match basis n");
    }
    const double lambda_max =
        basis != nullptr && basis->eigenvalues.size() > 0 ? basis->eigenvalues.maxCoeff() : 0.0;
    const double lambda_scale = lambda_max > 0.0 ? lambda_max : 1.0;
    if (cache != nullptr) {
        cache->blocks.clear();
        cache->lambda_scale = lambda_scale;
    }

    Eigen::MatrixXd h = inputs;
    for (const auto& block : params.blocks) {
        BlockCache bc;
        bc.input = h;
        Eigen::MatrixXd diffused;
        if (basis != nullptr) {
            bc.coeff = basis->phi.transpose() * (basis->mass.asDiagonal() * h);
            bc.damping.resize(bc.coeff.rows(), bc.coeff.cols());
            for (int j = 0; j < bc.coeff.cols(); ++j) {
                const double t = std::exp(block.log_times(j)) / lambda_scale;
                bc.damping.col(j) = (-basis->eigenvalues.array() * t).exp();
            }
            diffused = basis->phi * bc.damping.cwiseProduct(bc.coeff);
        } else {
            diffused = h;
        }
        bc.diffused = diffused;
        bc.pre_act = (diffused * block.w1).rowwise() + block.b1.transpose();
        bc.act = bc.pre_act.unaryExpr([](double x) { return silu(x); });
        Eigen::MatrixXd mlp = (bc.act * block.w2).rowwise() + block.b2.transpose();
        bc.residual = diffused.cols() == mlp.cols();
        h = bc.residual ? Eigen::MatrixXd(diffused + mlp) : std::move(mlp);
        if (cache != nullptr) cache->blocks.push_back(std::move(bc));
    }
    if (cache != nullptr) cache->last = h;
    return (h * params.w_out).rowwise() + params.b_out.transpose();
}

}  // namespace detail

inline FeatureMatrix forward(const ModelParams& params, const Eigen::MatrixXd& inputs,
                             const SpectralBasis* basis) {
    return detail::forward_impl(params, inputs, basis, nullptr);
}

inline FeatureMatrix forward(const ModelParams& params, const Eigen::MatrixXd& inputs,
                             const SpectralBasis& basis) {
    return detail::forward_impl(params, inputs, &basis, nullptr);
}

// Exact reverse-mode gradient of forward with respect to every parameter;
// the basis and its eigenvalues are treated as constants.
inline GradientBundle backward(const ModelParams& params, const Eigen::MatrixXd& inputs,
                               const SpectralBasis* basis, const Eigen::MatrixXd& upstream) {
    detail::ForwardCache cache;
    const Eigen::MatrixXd out = detail::forward_impl(params, inputs, basis, &cache);
    check(upstream.rows() == out.rows() && upstream.cols() == out.cols(), "dimension",
          "backward: upstream gradient shape mismatch");

    GradientBundle grad = zeros_like(params);
    grad.w_out = cache.last.transpose() * upstream;
    grad.b_out = upstream.colwise().sum();
    Eigen::MatrixXd dh = upstream * params.w_out.transpose();

    for (int b = static_cast<int>(params.blocks.size()) - 1; b >= 0; --b) {
        const auto& block = params.blocks[static_cast<std::size_t>(b)];
        const auto& bc = cache.blocks[static_cast<std::size_t>(b)];
        auto& gblock = grad.blocks[static_cast<std::size_t>(b)];

        const Eigen::MatrixXd& dmlp = dh;
        gblock.w2 = bc.act.transpose() * dmlp;
        gblock.b2 = dmlp.colwise().sum();
        Eigen::MatrixXd dact = dmlp * block.w2.transpose();
        Eigen::MatrixXd dpre =
            dact.cwiseProduct(bc.pre_act.unaryExpr([](double x) { return detail::silu_grad(x); }));
        gblock.w1 = bc.diffused.transpose() * dpre;
        gblock.b1 = dpre.colwise().sum();
        Eigen::MatrixXd ddiff = dpre * block.w1.transpose();
        if (bc.residual) ddiff += dh;

        if (basis != nullptr) {
            // diffused = Phi (damping .* coeff), coeff = Phi' A input
            const Eigen::MatrixXd dproj = basis->phi.transpose() * ddiff;  // k x c
            const Eigen::MatrixXd dcoeff = dproj.cwiseProduct(bc.damping);
            for (int j = 0; j < dproj.cols(); ++j) {
                const double t = std::exp(block.log_times(j)) / cache.lambda_scale;
                // d damping / d log_t = -lambda * t * damping
                gblock.log_times(j) =
                    -(basis->eigenvalues.array() * t * bc.damping.col(j).array() *
                      bc.coeff.col(j).array() * dproj.col(j).array())
                         .sum();
            }
            dh = basis->mass.asDiagonal() * (basis->phi * dcoeff);
        } else {
            dh = std::move(ddiff);
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------

inline FeatureMatrix l2_normalize_rows(const FeatureMatrix& G) {
    FeatureMatrix out(G.rows(), G.cols());
    for (int r = 0; r < G.rows(); ++r) {
        const double norm = G.row(r).norm();
        check(norm > 0.0, "invariant",
              "l2_normalize_rows: zero-norm feature row " + std::to_string(r));
        out.row(r) = G.row(r) / norm;
    }
    return out;
}

namespace detail {

struct RowNormalized {
    Eigen::MatrixXd unit;   // normalized rows
    Eigen::VectorXd norms;  // original row norms
};

inline RowNormalized normalize_rows_cached(const Eigen::MatrixXd& G) {
    RowNormalized out;
    out.unit.resize(G.rows(), G.cols());
    out.norms.resize(G.rows());
    for (int r = 0; r < G.rows(); ++r) {
        const double norm = G.row(r).norm();
        check(norm > 0.0, "invariant",
              "l2_normalize_rows: zero-norm feature row " + std::to_string(r));
        out.norms(r) = norm;
        out.unit.row(r) = G.row(r) / norm;
    }
    return out;
}

inline Eigen::MatrixXd normalize_rows_backward(const RowNormalized& cache,
                                               const Eigen::MatrixXd& dunit) {
    Eigen::MatrixXd dG(dunit.rows(), dunit.cols());
    for (int r = 0; r < dunit.rows(); ++r) {
        const double inner = cache.unit.row(r).dot(dunit.row(r));
        dG.row(r) = (dunit.row(r) - inner * cache.unit.row(r)) / cache.norms(r);
    }
    return dG;
}

}  // namespace detail

// HKS(v, t) = sum_i exp(-lambda_i t) phi_i(v)^2.
inline Eigen::MatrixXd heat_kernel_signature(const SpectralBasis& basis,
                                             const Eigen::VectorXd& times) {
    check(times.size() >= 1, "dimension", "heat_kernel_signature: need at least one time");
    check(times.minCoeff() > 0.0, "invariant", "heat_kernel_signature: nonpositive time");
    const Eigen::MatrixXd phi2 = basis.phi.cwiseProduct(basis.phi);  // n x k
    Eigen::MatrixXd out(basis.n(), times.size());
    for (int j = 0; j < times.size(); ++j)
        out.col(j) = phi2 * (-basis.eigenvalues.array() * times(j)).exp().matrix();
    return out;
}

// ---------------------------------------------------------------------------
// Parameter flattening (used by the optimizer, checkpoints, and the
// finite-difference harness). Order: per block log_times, w1 (column-major),
// b1, w2, b2; then w_out, b_out.

inline long param_count(const ModelParams& params) {
    long count = 0;
    for (const auto& block : params.blocks) {
        count += block.log_times.size() + block.w1.size() + block.b1.size() + block.w2.size() +
                 block.b2.size();
    }
    return count + params.w_out.size() + params.b_out.size();
}

inline Eigen::VectorXd flatten(const ModelParams& params) {
    Eigen::VectorXd flat(param_count(params));
    long pos = 0;
    auto put = [&](const auto& m) {
        flat.segment(pos, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        pos += m.size();
    };
    for (const auto& block : params.blocks) {
        put(block.log_times);
        put(block.w1);
        put(block.b1);
        put(block.w2);
        put(block.b2);
    }
    put(params.w_out);
    put(params.b_out);
    return flat;
}

inline void unflatten(const Eigen::VectorXd& flat, ModelParams& params) {
    check(flat.size() == param_count(params), "dimension", "unflatten: length mismatch");
    long pos = 0;
    auto take = [&](auto& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(pos, m.size());
        pos += m.size();
    };
    for (auto& block : params.blocks) {
        take(block.log_times);
        take(block.w1);
        take(block.b1);
        take(block.w2);
        take(block.b2);
    }
    take(params.w_out);
    take(params.b_out);
}

// ---------------------------------------------------------------------------
// Checkpoint container ("SCMP"): magic, version byte, architecture
// descriptor (in_dim, n_blocks, widths, out_dim), flat parameter vector.

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        check(out.good(), "io", "cannot open checkpoint for writing: " + tmp);
        out.write("SCMP", 4);
        binio::put_u8(out, 1);
        binio::put_u32(out, static_cast<std::uint32_t>(params.in_dim));
        binio::put_u32(out, static_cast<std::uint32_t>(params.blocks.size()));
        for (int w : params.widths) binio::put_u32(out, static_cast<std::uint32_t>(w));
        binio::put_u32(out, static_cast<std::uint32_t>(params.out_dim));
        const Eigen::VectorXd flat = flatten(params);
        for (long i = 0; i < flat.size(); ++i) binio::put_f64(out, flat(i));
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "io", "cannot open checkpoint: " + path);
    char magic[4];
    binio::get_bytes(in, magic, 4);
    check(std::memcmp(magic, "SCMP", 4) == 0, "parse", path + ": bad checkpoint magic");
    const auto version = binio::get_u8(in);
    check(version == 1, "parse", path + ": unsupported checkpoint version");
    const int in_dim = static_cast<int>(binio::get_u32(in));
    const int n_blocks = static_cast<int>(binio::get_u32(in));
    check(in_dim >= 1 && n_blocks >= 1 && n_blocks < 1024, "parse", path + ": bad architecture");
    std::vector<int> widths(static_cast<std::size_t>(n_blocks));
    for (auto& w : widths) {
        w = static_cast<int>(binio::get_u32(in));
        check(w >= 1, "parse", path + ": bad width");
    }
    const int d = static_cast<int>(binio::get_u32(in));
    check(d >= 1, "parse", path + ": bad output dimension");
    ModelParams params = init_params(0, in_dim, widths, d, n_blocks);
    Eigen::VectorXd flat(param_count(params));
    for (long i = 0; i < flat.size(); ++i) flat(i) = binio::get_f64(in);
    unflatten(flat, params);
    return params;
}

}  // namespace smoothcorr
