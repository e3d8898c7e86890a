#pragma once

#include "smoothcorr/mesh.hpp"

#include <limits>
#include <map>
#include <queue>

namespace smoothcorr {

// Dijkstra over edge lengths; unreachable vertices report +infinity.
inline std::vector<double> geodesic_distances(const EdgeGraph& graph, int source) {
    const int n = static_cast<int>(graph.adjacency.size());
    check(source >= 0 && source < n, "dimension", "geodesic_distances: source out of range");
    std::vector<double> dist(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
    dist[static_cast<std::size_t>(source)] = 0.0;
    heap.push({0.0, source});
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        for (const auto& [v, w] : graph.adjacency[static_cast<std::size_t>(u)]) {
            const double nd = d + w;
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                heap.push({nd, v});
            }
        }
    }
    return dist;
}

inline std::vector<std::pair<double, double>> cumulative_curve(
    const std::vector<double>& errors, const std::vector<double>& thresholds) {
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        check(thresholds[i] > thresholds[i - 1], "invariant",
              "cumulative_curve: thresholds must be ascending");
    std::vector<std::pair<double, double>> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        std::size_t below = 0;
        for (double e : errors)
            if (e < t) ++below;
        const double frac =
            errors.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(errors.size());
        curve.push_back({t, frac});
    }
    return curve;
}

inline double hits_at_1(const PointMap& pred, const PointMap& gt) {
    check(pred.size() == gt.size(), "dimension", "hits_at_1: map lengths differ");
    check(!pred.empty(), "invariant", "hits_at_1: empty maps");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gt[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct ErrorReport {
    std::vector<double> errors;  // per source vertex, unit-area geodesic units
    double mean = 0.0;
    double mean_x100 = 0.0;
    std::vector<std::pair<double, double>> curve;
};

inline std::vector<double> default_error_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 25; ++i) t.push_back(0.01 * i);
    return t;
}

// error(i) = geodesic distance on the unit-area-normalized target mesh
// between the predicted and true images of source vertex i.
inline ErrorReport mean_geodesic_error(const PointMap& pmap, const PointMap& gt,
                                       const TriangleMesh& mesh2,
                                       const std::vector<double>& thresholds =
                                           default_error_thresholds()) {
    check(pmap.size() == gt.size(), "dimension", "mean_geodesic_error: map lengths differ");
    check(!pmap.empty(), "invariant", "mean_geodesic_error: empty maps");
    const int n2 = mesh2.n_vertices();
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        check(pmap[i] >= 0 && pmap[i] < n2 && gt[i] >= 0 && gt[i] < n2, "dimension",
              "mean_geodesic_error: map entry out of range at " + std::to_string(i));
    }
    const TriangleMesh unit = normalize_to_unit_area(mesh2);
    const EdgeGraph graph = edge_graph(unit);

    ErrorReport report;
    report.errors.resize(pmap.size(), 0.0);
    std::map<int, std::vector<double>> by_source;
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (pmap[i] == gt[i]) continue;
        auto it = by_source.find(gt[i]);
        if (it == by_source.end())
            it = by_source.emplace(gt[i], geodesic_distances(graph, gt[i])).first;
        const double d = it->second[static_cast<std::size_t>(pmap[i])];
        check(std::isfinite(d), "invariant",
              "mean_geodesic_error: target " + std::to_string(pmap[i]) +
                  " unreachable from " + std::to_string(gt[i]));
        report.errors[i] = d;
    }
    double sum = 0.0;
    for (double e : report.errors) sum += e;
    report.mean = sum / static_cast<double>(report.errors.size());
    report.mean_x100 = 100.0 * report.mean;
    report.curve = cumulative_curve(report.errors, thresholds);
    return report;
}

inline void write_error_csv(const ErrorReport& report, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        check(out.good(), "io", "cannot open report CSV for writing: " + tmp);
        out << "source_index,error\n";
        out << std::setprecision(17);
        for (std::size_t i = 0; i < report.errors.size(); ++i)
            out << i << "," << report.errors[i] << "\n";
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline void write_report_json(const ErrorReport& report, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        check(out.good(), "io", "cannot open report JSON for writing: " + tmp);
        out << std::setprecision(17);
        out << "{\n  \"mean\": " << report.mean << ",\n  \"mean_x100\": " << report.mean_x100
            << ",\n  \"curve\": [";
        for (std::size_t i = 0; i < report.curve.size(); ++i) {
            if (i > 0) out << ", ";
            out << "[" << report.curve[i].first << ", " << report.curve[i].second << "]";
        }
        out << "]\n}\n";
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace smoothcorr
