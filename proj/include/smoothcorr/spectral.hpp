#pragma once

#include "smoothcorr/operators.hpp"
#include "smoothcorr/spectral_ops.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

namespace smoothcorr {

// First k Laplace-Beltrami eigenpairs of (W, A). Columns of phi are
// A-orthonormal; eigenvalues ascending. The mass diagonal is kept so the
// basis is self-contained for diffusion and projections.
struct SpectralBasis {
    Eigen::MatrixXd phi;         // n x k
    Eigen::VectorXd eigenvalues; // k, nonnegative ascending
    Eigen::VectorXd mass;        // n, the lumped-mass diagonal

    int n() const { return static_cast<int>(phi.rows()); }
    int k() const { return static_cast<int>(phi.cols()); }
};

// k x k functional map between two reduced bases.
using FunctionalMap = Eigen::MatrixXd;

struct EigOptions {
    int dense_threshold = 3000;
    double shift = -1e-8;
    double residual_tol = 1e-6;
};

namespace detail {

// Reproducible caches: make the largest-magnitude entry of each column
// positive (lowest index on exact ties).
inline void canonicalize_signs(Eigen::MatrixXd& phi) {
    for (int c = 0; c < phi.cols(); ++c) {
        int best = 0;
        double best_abs = std::abs(phi(0, c));
        for (int r = 1; r < phi.rows(); ++r) {
            const double a = std::abs(phi(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (phi(best, c) < 0.0) phi.col(c) = -phi.col(c);
    }
}

inline void clamp_eigenvalues(Eigen::VectorXd& vals) {
    const double scale = std::max(1.0, std::abs(vals(vals.size() - 1)));
    for (int i = 0; i < vals.size(); ++i) {
        if (vals(i) < 0.0) {
            check(vals(i) >= -1e-9 * scale, "invariant",
                  "eigenbasis: negative eigenvalue beyond PSD tolerance");
            vals(i) = 0.0;
        }
    }
}

inline SpectralBasis eigenbasis_dense(const SpMat& W, const MassMatrix& A, int k) {
    const int n = static_cast<int>(W.rows());
    const Eigen::VectorXd dinv_sqrt = A.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd B = Eigen::MatrixXd(W);
    B = dinv_sqrt.asDiagonal() * B * dinv_sqrt.asDiagonal();
    B = 0.5 * (B + B.transpose()).eval();
    record_linear_solve();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    check(es.info() == Eigen::Success, "solver", "dense eigendecomposition failed");
    SpectralBasis basis;
    basis.eigenvalues = es.eigenvalues().head(k);
    basis.phi = dinv_sqrt.asDiagonal() * es.eigenvectors().leftCols(k);
    basis.mass = A;
    clamp_eigenvalues(basis.eigenvalues);
    canonicalize_signs(basis.phi);
    (void)n;
    return basis;
}

// Shift-invert Lanczos on Op(x) = (W - shift*A)^{-1} A x, which is
// self-adjoint in the A-inner product. Full reorthogonalization; the
// tridiagonal eigenproblem gives Ritz pairs, with lambda = shift + 1/theta.
inline SpectralBasis eigenbasis_lanczos(const SpMat& W, const MassMatrix& A, int k,
                                        const EigOptions& opt) {
    const int n = static_cast<int>(W.rows());
    SpMat K = W;
    for (int i = 0; i < n; ++i) K.coeffRef(i, i) -= opt.shift * A(i);
    K.makeCompressed();
    Eigen::SimplicialLDLT<SpMat> solver(K);
    check(solver.info() == Eigen::Success, "solver", "shifted operator factorization failed");

    auto a_dot = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return x.dot(A.cwiseProduct(y));
    };

    Eigen::MatrixXd Q;          // Lanczos vectors, A-orthonormal columns
    std::vector<double> alpha;  // T diagonal
    std::vector<double> beta;   // T off-diagonal, beta[j] couples j and j+1
    Rng rng(0x5eedbeefULL, "lanczos");

    auto fresh_vector = [&](int have) {
        Eigen::VectorXd v(n);
        if (have == 0) {
            v.setOnes();
            for (int i = 0; i < n; ++i) v(i) += 1e-3 * rng.normal();
        } else {
            for (int i = 0; i < n; ++i) v(i) = rng.normal();
        }
        for (int pass = 0; pass < 2; ++pass)
            for (int i = 0; i < have; ++i) v -= a_dot(Q.col(i), v) * Q.col(i);
        const double norm = std::sqrt(a_dot(v, v));
        check(norm > 0.0, "solver", "eigensolver lost the Krylov subspace");
        return Eigen::VectorXd(v / norm);
    };

    int m_target = std::min(n, std::max(3 * k, 2 * k + 40));
    const int m_cap = std::min(n, std::max(6 * k, 4 * k + 120));

    SpectralBasis basis;
    basis.mass = A;
    while (true) {
        if (static_cast<int>(alpha.size()) < m_target) {
            // Invariant between rounds: Q holds m+1 columns (one vector
            // ahead), alpha has m entries, beta has m entries where the
            // last couples Q_m to the next step.
            const int m_old = static_cast<int>(alpha.size());
            Q.conservativeResize(n, m_target + 1);
            if (m_old == 0) Q.col(0) = fresh_vector(0);
            for (int j = m_old; j < m_target; ++j) {
                record_linear_solve();
                Eigen::VectorXd w = solver.solve(A.cwiseProduct(Q.col(j)));
                check(solver.info() == Eigen::Success, "solver", "shift-invert solve failed");
                if (j > 0) w -= beta[static_cast<std::size_t>(j - 1)] * Q.col(j - 1);
                const double aj = a_dot(Q.col(j), w);
                alpha.push_back(aj);
                w -= aj * Q.col(j);
                for (int pass = 0; pass < 2; ++pass)
                    for (int i = 0; i <= j; ++i) w -= a_dot(Q.col(i), w) * Q.col(i);
                const double bj = std::sqrt(std::max(0.0, a_dot(w, w)));
                if (bj < 1e-13) {
                    beta.push_back(0.0);
                    if (j + 1 < n) Q.col(j + 1) = fresh_vector(j + 1);
                } else {
                    beta.push_back(bj);
                    Q.col(j + 1) = w / bj;
                }
            }
        }
        const int m = static_cast<int>(alpha.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) T(i, i) = alpha[static_cast<std::size_t>(i)];
        for (int i = 0; i + 1 < m; ++i)
            T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        check(es.info() == Eigen::Success, "solver", "tridiagonal eigendecomposition failed");

        // largest theta <-> smallest lambda
        Eigen::VectorXd lambda(m);
        for (int i = 0; i < m; ++i) {
            const double theta = es.eigenvalues()(i);
            lambda(i) = theta > 0.0 ? opt.shift + 1.0 / theta
                                    : std::numeric_limits<double>::infinity();
        }
        std::vector<int> order(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return lambda(a) < lambda(b); });

        basis.phi.resize(n, k);
        basis.eigenvalues.resize(k);
        bool converged = true;
        for (int c = 0; c < k; ++c) {
            const int idx = order[static_cast<std::size_t>(c)];
            Eigen::VectorXd v = Q.leftCols(m) * es.eigenvectors().col(idx);
            const double vnorm = std::sqrt(a_dot(v, v));
            if (!(vnorm > 0.0) || !std::isfinite(lambda(idx))) {
                converged = false;
                break;
            }
            v /= vnorm;
            basis.phi.col(c) = v;
            basis.eigenvalues(c) = lambda(idx);
            const Eigen::VectorXd resid = W * v - lambda(idx) * A.cwiseProduct(v);
            const double scale = A.cwiseProduct(v).norm() * std::max(1.0, std::abs(lambda(idx)));
            if (resid.norm() > opt.residual_tol * scale) {
                converged = false;
                break;
            }
        }
        if (converged) break;
        m_target = std::min({n, m_cap, 2 * m_target});
        check(m_target > m, "solver",
              "eigensolver non-convergence: iteration cap exceeded (m=" + std::to_string(m) + ")");
    }

    clamp_eigenvalues(basis.eigenvalues);
    canonicalize_signs(basis.phi);
    return basis;
}

}  // namespace detail

inline SpectralBasis eigenbasis(const SpMat& W, const MassMatrix& A, int k,
                                const EigOptions& opt = {}) {
    const int n = static_cast<int>(W.rows());
    check(W.rows() == W.cols(), "dimension", "eigenbasis: stiffness matrix not square");
    check(A.size() == n, "dimension", "eigenbasis: mass diagonal length mismatch");
    check(k >= 1 && k < n, "dimension",
          "eigenbasis: need 1 <= k < n, got k=" + std::to_string(k) + ", n=" + std::to_string(n));
    check(A.minCoeff() > 0.0, "invariant", "eigenbasis: nonpositive mass entry");
    if (n <= opt.dense_threshold) return detail::eigenbasis_dense(W, A, k);
    return detail::eigenbasis_lanczos(W, A, k, opt);
}

// C = Phi1' A1 Pi Phi2, the area-weighted projection of a soft map onto the
// reduced bases. Matrix products only; no linear solves on this path.
inline FunctionalMap project_softmap_to_fmap(const Eigen::MatrixXd& Pi,
                                             const SpectralBasis& basis1,
                                             const MassMatrix& A1,
                                             const SpectralBasis& basis2) {
    check(Pi.rows() == basis1.n() && Pi.cols() == basis2.n(), "dimension",
          "project_softmap_to_fmap: soft map is " + std::to_string(Pi.rows()) + "x" +
              std::to_string(Pi.cols()) + " but bases have n1=" + std::to_string(basis1.n()) +
              ", n2=" + std::to_string(basis2.n()));
    check(A1.size() == basis1.n(), "dimension", "project_softmap_to_fmap: mass length mismatch");
    const Eigen::MatrixXd right = specops::multiply(Pi, basis2.phi);            // n1 x k2
    const Eigen::MatrixXd weighted = specops::scale_rows(A1, basis1.phi);       // n1 x k1
    return specops::multiply(weighted.transpose(), right);                      // k1 x k2
}

// Ground-truth variant: Pi_gt is the binary row-selection matrix of pmap,
// applied by gathering rows of Phi2 instead of materializing it.
inline FunctionalMap fmap_from_pointmap(const PointMap& pmap,
                                        const SpectralBasis& basis1,
                                        const MassMatrix& A1,
                                        const SpectralBasis& basis2) {
    check(static_cast<int>(pmap.size()) == basis1.n(), "dimension",
          "fmap_from_pointmap: map length does not match n1");
    for (int v : pmap)
        check(v >= 0 && v < basis2.n(), "dimension",
              "fmap_from_pointmap: target index " + std::to_string(v) + " out of range");
    const Eigen::MatrixXd right = specops::gather_rows(basis2.phi, pmap);       // n1 x k2
    const Eigen::MatrixXd weighted = specops::scale_rows(A1, basis1.phi);       // n1 x k1
    return specops::multiply(weighted.transpose(), right);
}

// Heat diffusion in the reduced basis, one time per channel:
// out_j = Phi diag(exp(-lambda_i t_j)) Phi' A signal_j.
inline Eigen::MatrixXd spectral_diffuse(const SpectralBasis& basis,
                                        const Eigen::MatrixXd& signal,
                                        const Eigen::VectorXd& times) {
    check(signal.rows() == basis.n(), "dimension", "spectral_diffuse: signal row count mismatch");
    check(times.size() == signal.cols(), "dimension",
          "spectral_diffuse: need one diffusion time per channel");
    check(times.minCoeff() > 0.0, "invariant", "spectral_diffuse: nonpositive diffusion time");
    const Eigen::MatrixXd coeff = basis.phi.transpose() * (basis.mass.asDiagonal() * signal);
    Eigen::MatrixXd damped(coeff.rows(), coeff.cols());
    for (int j = 0; j < coeff.cols(); ++j)
        damped.col(j) = (-basis.eigenvalues.array() * times(j)).exp() * coeff.col(j).array();
    return basis.phi * damped;
}

// ---------------------------------------------------------------------------
// Basis cache container ("SCSB"): magic, version byte, n, k, eigenvalues,
// Phi column-major. Little-endian 64-bit floats. The mass diagonal lives in
// the operator cache, so the loader takes it as an argument.

inline void save_basis(const SpectralBasis& basis, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        check(out.good(), "io", "cannot open cache file for writing: " + tmp);
        out.write("SCSB", 4);
        binio::put_u8(out, 1);
        binio::put_u32(out, static_cast<std::uint32_t>(basis.n()));
        binio::put_u32(out, static_cast<std::uint32_t>(basis.k()));
        for (int i = 0; i < basis.k(); ++i) binio::put_f64(out, basis.eigenvalues(i));
        for (int c = 0; c < basis.k(); ++c)
            for (int r = 0; r < basis.n(); ++r) binio::put_f64(out, basis.phi(r, c));
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline SpectralBasis load_basis(const std::string& path, const MassMatrix& mass) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "io", "cannot open cache file: " + path);
    char magic[4];
    binio::get_bytes(in, magic, 4);
    check(std::memcmp(magic, "SCSB", 4) == 0, "parse", path + ": bad basis cache magic");
    const auto version = binio::get_u8(in);
    check(version == 1, "parse", path + ": unsupported cache version " + std::to_string(version));
    const auto n = binio::get_u32(in);
    const auto k = binio::get_u32(in);
    check(static_cast<int>(n) == mass.size(), "dimension", path + ": mass diagonal length mismatch");
    SpectralBasis basis;
    basis.eigenvalues.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) basis.eigenvalues(i) = binio::get_f64(in);
    basis.phi.resize(n, k);
    for (std::uint32_t c = 0; c < k; ++c)
        for (std::uint32_t r = 0; r < n; ++r) basis.phi(r, c) = binio::get_f64(in);
    basis.mass = mass;
    return basis;
}

}  // namespace smoothcorr
