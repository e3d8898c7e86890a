#pragma once

#include "smoothcorr/features.hpp"

#include <limits>

namespace smoothcorr {

// Exact k-d tree over feature rows. Median split on the widest axis; ties in
// distance break to the lowest point index, so the far half-space is pruned
// only when its best possible distance is strictly worse.
class NeighborIndex {
public:
    explicit NeighborIndex(Eigen::MatrixXd points) : points_(std::move(points)) {
        check(points_.rows() > 0, "invariant", "build_index: empty point set");
        std::vector<int> order(static_cast<std::size_t>(points_.rows()));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        nodes_.reserve(order.size());
        root_ = build(order, 0, static_cast<int>(order.size()));
    }

    int nearest(const Eigen::VectorXd& query) const {
        check(query.size() == points_.cols(), "dimension",
              "nearest: query dimension " + std::to_string(query.size()) + " != " +
                  std::to_string(points_.cols()));
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        search(root_, query, best, best_dist);
        return best;
    }

    long size() const { return points_.rows(); }
    long dim() const { return points_.cols(); }

private:
    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(std::vector<int>& order, int lo, int hi) {
        if (lo >= hi) return -1;
        int axis = 0;
        if (points_.cols() > 1) {
            double best_spread = -1.0;
            for (int a = 0; a < points_.cols(); ++a) {
                double mn = points_(order[static_cast<std::size_t>(lo)], a), mx = mn;
                for (int i = lo + 1; i < hi; ++i) {
                    const double v = points_(order[static_cast<std::size_t>(i)], a);
                    mn = std::min(mn, v);
                    mx = std::max(mx, v);
                }
                if (mx - mn > best_spread) {
                    best_spread = mx - mn;
                    axis = a;
                }
            }
        }
        const int mid = lo + (hi - lo) / 2;
        std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                         [&](int a, int b) {
                             const double va = points_(a, axis), vb = points_(b, axis);
                             return va < vb || (va == vb && a < b);
                         });
        Node node;
        node.point = order[static_cast<std::size_t>(mid)];
        node.axis = axis;
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        nodes_[static_cast<std::size_t>(self)].left = build(order, lo, mid);
        nodes_[static_cast<std::size_t>(self)].right = build(order, mid + 1, hi);
        return self;
    }

    void consider(int point, const Eigen::VectorXd& query, int& best, double& best_dist) const {
        const double d = (points_.row(point).transpose() - query).squaredNorm();
        if (d < best_dist || (d == best_dist && point < best)) {
            best_dist = d;
            best = point;
        }
    }

    void search(int node_id, const Eigen::VectorXd& query, int& best, double& best_dist) const {
        if (node_id < 0) return;
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        consider(node.point, query, best, best_dist);
        const double diff = query(node.axis) - points_(node.point, node.axis);
        const int near = diff < 0.0 ? node.left : node.right;
        const int far = diff < 0.0 ? node.right : node.left;
        search(near, query, best, best_dist);
        if (diff * diff <= best_dist) search(far, query, best, best_dist);
    }

    Eigen::MatrixXd points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

inline NeighborIndex build_index(const FeatureMatrix& G2) { return NeighborIndex(G2); }

// Entry i = argmin_j over the index points; the index is expected to hold
// L2-normalized target features, and queries are normalized here, so the
// argmin matches the argmax of the training similarity.
inline PointMap nearest_neighbor_map(const FeatureMatrix& G1, const NeighborIndex& index) {
    check(G1.cols() == index.dim(), "dimension",
          "nearest_neighbor_map: feature dimension mismatch");
    const FeatureMatrix u1 = l2_normalize_rows(G1);
    PointMap map(static_cast<std::size_t>(G1.rows()));
    for (int i = 0; i < G1.rows(); ++i) map[static_cast<std::size_t>(i)] = index.nearest(u1.row(i).transpose());
    return map;
}

inline PointMap nearest_neighbor_map(const FeatureMatrix& G1, const FeatureMatrix& G2) {
    const NeighborIndex index(l2_normalize_rows(G2));
    return nearest_neighbor_map(G1, index);
}

}  // namespace smoothcorr
