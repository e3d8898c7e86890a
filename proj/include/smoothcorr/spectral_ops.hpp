#pragma once

#include "smoothcorr/common.hpp"

#include <atomic>

namespace smoothcorr {

// Counts every linear-system solve performed anywhere in the library
// (eigendecomposition, factorizations). The soft-map -> functional-map
// path is written against the primitives below only, so tests can assert
// that evaluating the spectral loss leaves this counter untouched.
inline std::atomic<std::uint64_t>& linear_solve_count() {
    static std::atomic<std::uint64_t> count{0};
    return count;
}

inline void record_linear_solve(std::uint64_t n = 1) { linear_solve_count() += n; }

// Primitives available to the functional-map projection path: dense
// products, diagonal scaling, and row gathering. No solves.
namespace specops {

inline Eigen::MatrixXd multiply(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    check(a.cols() == b.rows(), "dimension", "multiply: inner dimensions disagree");
    return a * b;
}

inline Eigen::MatrixXd scale_rows(const Eigen::VectorXd& d, const Eigen::MatrixXd& a) {
    check(d.size() == a.rows(), "dimension", "scale_rows: diagonal length mismatch");
    return d.asDiagonal() * a;
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& a, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<long>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        check(r >= 0 && r < a.rows(), "dimension",
              "gather_rows: index " + std::to_string(r) + " out of range");
        out.row(static_cast<long>(i)) = a.row(r);
    }
    return out;
}

}  // namespace specops

}  // namespace smoothcorr
