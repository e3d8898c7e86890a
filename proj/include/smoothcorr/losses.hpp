#pragma once

#include "smoothcorr/features.hpp"

namespace smoothcorr {

using SoftCorrespondence = Eigen::MatrixXd;                 // row-stochastic
using CorrespondenceSet = std::vector<std::pair<int, int>>; // (source, target)

enum class Regularizer { none, dirichlet, spectral };

inline Regularizer parse_regularizer(const std::string& s) {
    if (s == "none") return Regularizer::none;
    if (s == "dirichlet") return Regularizer::dirichlet;
    if (s == "spectral") return Regularizer::spectral;
    fail("parse", "unknown regularizer '" + s + "' (expected none|dirichlet|spectral)");
}

inline std::string to_string(Regularizer r) {
    switch (r) {
        case Regularizer::none: return "none";
        case Regularizer::dirichlet: return "dirichlet";
        case Regularizer::spectral: return "spectral";
    }
    return "none";
}

struct LossConfig {
    double tau = 0.07;
    double lambda = 1.0;
    Regularizer regularizer = Regularizer::dirichlet;
    int sample_count = 1024;
    int k = 30;
    // Optional second smoothness term with its own weight; off by default.
    Regularizer regularizer2 = Regularizer::none;
    double lambda2 = 0.0;

    void validate() const {
        check(tau > 0.0, "invariant", "loss config: tau must be positive");
        check(lambda >= 0.0 && lambda2 >= 0.0, "invariant",
              "loss config: lambda must be nonnegative");
        check(sample_count >= 2, "invariant", "loss config: sample_count must be >= 2");
        check(k >= 1, "invariant", "loss config: k must be >= 1");
    }
};

namespace detail {

// Row-wise softmax with max subtraction. Also used by the backward pass:
// for logits L and P = softmax_rows(L), dL = P .* (dP - rowwise dot(dP, P)).
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (int r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

inline Eigen::MatrixXd softmax_rows_backward(const Eigen::MatrixXd& P, const Eigen::MatrixXd& dP) {
    Eigen::MatrixXd dlogits(P.rows(), P.cols());
    for (int r = 0; r < P.rows(); ++r) {
        const double inner = P.row(r).dot(dP.row(r));
        dlogits.row(r) = P.row(r).cwiseProduct((dP.row(r).array() - inner).matrix());
    }
    return dlogits;
}

}  // namespace detail

inline SoftCorrespondence similarity_matrix(const FeatureMatrix& G1, const FeatureMatrix& G2,
                                            double tau) {
    check(G1.cols() == G2.cols(), "dimension", "similarity_matrix: feature dimension mismatch");
    check(tau > 0.0, "invariant", "similarity_matrix: tau must be positive");
    const FeatureMatrix u1 = l2_normalize_rows(G1);
    const FeatureMatrix u2 = l2_normalize_rows(G2);
    return detail::softmax_rows((u1 * u2.transpose()) / tau);
}

struct ContrastiveResult {
    double loss = 0.0;
    Eigen::MatrixXd dPi;
};

// L_c = -(1/|gt|) sum log Pi(i, gt(i)).
inline ContrastiveResult contrastive_loss(const SoftCorrespondence& Pi,
                                          const CorrespondenceSet& gt) {
    check(!gt.empty(), "invariant", "contrastive_loss: empty correspondence set");
    ContrastiveResult out;
    out.dPi = Eigen::MatrixXd::Zero(Pi.rows(), Pi.cols());
    const double scale = 1.0 / static_cast<double>(gt.size());
    for (const auto& [i, j] : gt) {
        check(i >= 0 && i < Pi.rows() && j >= 0 && j < Pi.cols(), "dimension",
              "contrastive_loss: correspondence (" + std::to_string(i) + ", " + std::to_string(j) +
                  ") out of range");
        const double p = Pi(i, j);
        check(p > 0.0, "invariant", "contrastive_loss: zero probability at a ground-truth pair");
        out.loss -= scale * std::log(p);
        out.dPi(i, j) -= scale / p;
    }
    return out;
}

inline CorrespondenceSet sample_correspondences(const CorrespondenceSet& gt_full, int m,
                                                std::uint64_t seed) {
    check(!gt_full.empty(), "invariant", "sample_correspondences: empty correspondence set");
    check(m >= 1, "invariant", "sample_correspondences: sample count must be positive");
    std::vector<int> order(gt_full.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(m), order.size());
    Rng rng(seed, "sample");
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    CorrespondenceSet out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(gt_full[static_cast<std::size_t>(order[i])]);
    return out;
}

struct DirichletResult {
    double loss = 0.0;
    Eigen::MatrixXd dG1, dG2;
};

// L_s = (1/2d) sum_cols (g1' W1 g1 + g2' W2 g2), gradient (1/d) W G per shape.
inline DirichletResult dirichlet_loss(const FeatureMatrix& G1, const SpMat& W1,
                                      const FeatureMatrix& G2, const SpMat& W2) {
    check(G1.cols() == G2.cols(), "dimension", "dirichlet_loss: feature dimension mismatch");
    check(G1.rows() == W1.rows() && G2.rows() == W2.rows(), "dimension",
          "dirichlet_loss: feature rows do not match stiffness size");
    const double d = static_cast<double>(G1.cols());
    DirichletResult out;
    for (int c = 0; c < G1.cols(); ++c) {
        out.loss += dirichlet_energy(W1, G1.col(c)) + dirichlet_energy(W2, G2.col(c));
    }
    out.loss /= 2.0 * d;
    out.dG1 = (W1 * G1) / d;
    out.dG2 = (W2 * G2) / d;
    return out;
}

struct SpectralResult {
    double loss = 0.0;
    Eigen::MatrixXd dPi;
};

// L_s = ||C - C_gt||_F^2 with C the area-weighted projection of the full soft
// map; dL/dPi = 2 A1 Phi1 (C - C_gt) Phi2'. The whole path stays inside the
// multiply/scale/gather interface.
inline SpectralResult spectral_loss(const SoftCorrespondence& Pi_full, const SpectralBasis& basis1,
                                    const MassMatrix& A1, const SpectralBasis& basis2,
                                    const PointMap& gt_pmap) {
    check(Pi_full.rows() == basis1.n() && Pi_full.cols() == basis2.n(), "dimension",
          "spectral_loss: soft map shape does not match bases");
    check(basis1.k() == basis2.k(), "dimension", "spectral_loss: basis sizes differ");
    const FunctionalMap C = project_softmap_to_fmap(Pi_full, basis1, A1, basis2);
    const FunctionalMap C_gt = fmap_from_pointmap(gt_pmap, basis1, A1, basis2);
    const Eigen::MatrixXd diff = C - C_gt;
    SpectralResult out;
    out.loss = diff.squaredNorm();
    const Eigen::MatrixXd weighted = specops::scale_rows(A1, basis1.phi);  // A1 Phi1
    out.dPi = 2.0 * specops::multiply(specops::multiply(weighted, diff), basis2.phi.transpose());
    return out;
}

// ---------------------------------------------------------------------------

struct LossInputs {
    const SpMat* W1 = nullptr;
    const SpMat* W2 = nullptr;
    const SpectralBasis* basis1 = nullptr;
    const SpectralBasis* basis2 = nullptr;
    const PointMap* gt_pmap = nullptr;  // full map, used by the spectral term
};

struct CombinedResult {
    double total = 0.0;
    double contrastive = 0.0;
    double smooth = 0.0;  // weighted smoothness contribution, total - contrastive
    Eigen::MatrixXd dG1, dG2;
};

namespace detail {

inline Eigen::MatrixXi as_index_matrix(const std::vector<int>& idx) {
    Eigen::MatrixXi m(static_cast<int>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) m(static_cast<int>(i), 0) = idx[i];
    return m;
}

struct SmoothTerm {
    double value = 0.0;
    Eigen::MatrixXd dG1, dG2;    // raw-feature gradients
    Eigen::MatrixXd dU1, dU2;    // normalized-feature gradients
};

inline SmoothTerm smooth_term(Regularizer reg, const FeatureMatrix& G1, const FeatureMatrix& G2,
                              const RowNormalized& n1, const RowNormalized& n2, double tau,
                              const LossInputs& inputs) {
    SmoothTerm term;
    if (reg == Regularizer::dirichlet) {
        check(inputs.W1 != nullptr && inputs.W2 != nullptr, "invariant",
              "combined_loss: dirichlet regularizer requires stiffness matrices");
        DirichletResult dir = dirichlet_loss(G1, *inputs.W1, G2, *inputs.W2);
        term.value = dir.loss;
        term.dG1 = std::move(dir.dG1);
        term.dG2 = std::move(dir.dG2);
        return term;
    }
    check(reg == Regularizer::spectral, "invariant", "combined_loss: unexpected regularizer");
    check(inputs.basis1 != nullptr && inputs.basis2 != nullptr && inputs.gt_pmap != nullptr,
          "invariant", "combined_loss: spectral regularizer requires bases and a ground-truth map");
    const Eigen::MatrixXd logits = (n1.unit * n2.unit.transpose()) / tau;
    const Eigen::MatrixXd Pi = softmax_rows(logits);
    SpectralResult spec =
        spectral_loss(Pi, *inputs.basis1, inputs.basis1->mass, *inputs.basis2, *inputs.gt_pmap);
    term.value = spec.loss;
    const Eigen::MatrixXd dlogits = softmax_rows_backward(Pi, spec.dPi) / tau;
    term.dU1 = dlogits * n2.unit;
    term.dU2 = dlogits.transpose() * n1.unit;
    return term;
}

}  // namespace detail

// L = L_c + lambda L_s (plus an optional second weighted term). With
// lambda = 0 or regularizer none, the smoothness path is never touched and
// the result is bitwise equal to the contrastive loss alone.
inline CombinedResult combined_loss(const LossConfig& config, const FeatureMatrix& G1,
                                    const FeatureMatrix& G2, const LossInputs& inputs,
                                    const CorrespondenceSet& sampled_gt) {
    check(G1.cols() == G2.cols(), "dimension", "combined_loss: feature dimension mismatch");
    check(config.tau > 0.0, "invariant", "combined_loss: tau must be positive");
    check(!sampled_gt.empty(), "invariant", "combined_loss: empty correspondence sample");

    const detail::RowNormalized n1 = detail::normalize_rows_cached(G1);
    const detail::RowNormalized n2 = detail::normalize_rows_cached(G2);

    std::vector<int> src, tgt;
    src.reserve(sampled_gt.size());
    tgt.reserve(sampled_gt.size());
    for (const auto& [i, j] : sampled_gt) {
        check(i >= 0 && i < G1.rows(), "dimension", "combined_loss: source index out of range");
        check(j >= 0 && j < G2.rows(), "dimension", "combined_loss: target index out of range");
        src.push_back(i);
        tgt.push_back(j);
    }
    const Eigen::MatrixXd u1 = specops::gather_rows(n1.unit, src);
    const Eigen::MatrixXd u2 = specops::gather_rows(n2.unit, tgt);
    const Eigen::MatrixXd logits = (u1 * u2.transpose()) / config.tau;
    const Eigen::MatrixXd Pi = detail::softmax_rows(logits);

    CorrespondenceSet diag(sampled_gt.size());
    for (std::size_t r = 0; r < diag.size(); ++r)
        diag[r] = {static_cast<int>(r), static_cast<int>(r)};
    ContrastiveResult con = contrastive_loss(Pi, diag);

    const Eigen::MatrixXd dlogits = detail::softmax_rows_backward(Pi, con.dPi) / config.tau;
    Eigen::MatrixXd dU1 = Eigen::MatrixXd::Zero(G1.rows(), G1.cols());
    Eigen::MatrixXd dU2 = Eigen::MatrixXd::Zero(G2.rows(), G2.cols());
    const Eigen::MatrixXd dU1_local = dlogits * u2;
    const Eigen::MatrixXd dU2_local = dlogits.transpose() * u1;
    for (std::size_t r = 0; r < src.size(); ++r) {
        dU1.row(src[r]) += dU1_local.row(static_cast<int>(r));
        dU2.row(tgt[r]) += dU2_local.row(static_cast<int>(r));
    }

    CombinedResult out;
    out.contrastive = con.loss;
    Eigen::MatrixXd dG1_raw = Eigen::MatrixXd::Zero(G1.rows(), G1.cols());
    Eigen::MatrixXd dG2_raw = Eigen::MatrixXd::Zero(G2.rows(), G2.cols());

    auto add_term = [&](Regularizer reg, double weight) {
        if (reg == Regularizer::none || weight == 0.0) return;
        detail::SmoothTerm term = detail::smooth_term(reg, G1, G2, n1, n2, config.tau, inputs);
        out.smooth += weight * term.value;
        if (term.dG1.size() > 0) {
            dG1_raw += weight * term.dG1;
            dG2_raw += weight * term.dG2;
        }
        if (term.dU1.size() > 0) {
            dU1 += weight * term.dU1;
            dU2 += weight * term.dU2;
        }
    };
    add_term(config.regularizer, config.lambda);
    add_term(config.regularizer2, config.lambda2);

    out.total = out.contrastive + out.smooth;
    out.dG1 = detail::normalize_rows_backward(n1, dU1) + dG1_raw;
    out.dG2 = detail::normalize_rows_backward(n2, dU2) + dG2_raw;
    return out;
}

}  // namespace smoothcorr
