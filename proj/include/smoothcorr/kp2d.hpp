#pragma once

#include "smoothcorr/eval.hpp"
#include "smoothcorr/matching.hpp"
#include "smoothcorr/train.hpp"

#include <json.hpp>

#include <array>
#include <set>

namespace smoothcorr {

struct KeypointGraph {
    Eigen::MatrixXd points;        // m x 2, pixels
    Eigen::MatrixXi faces;         // t x 3, empty for m < 3 or collinear input
    Eigen::MatrixXd node_signals;  // m x c
    std::vector<std::pair<int, int>> fallback_edges;  // chain graph when degenerate
    bool degenerate_chain = false;
    bool jittered = false;

    int m() const { return static_cast<int>(points.rows()); }
};

namespace detail {

inline double orient2d(const Eigen::RowVector2d& a, const Eigen::RowVector2d& b,
                       const Eigen::RowVector2d& c) {
    return (b(0) - a(0)) * (c(1) - a(1)) - (b(1) - a(1)) * (c(0) - a(0));
}

// > 0 when d lies strictly inside the circumcircle of CCW triangle (a,b,c).
inline double incircle(const Eigen::RowVector2d& a, const Eigen::RowVector2d& b,
                       const Eigen::RowVector2d& c, const Eigen::RowVector2d& d) {
    const double adx = a(0) - d(0), ady = a(1) - d(1);
    const double bdx = b(0) - d(0), bdy = b(1) - d(1);
    const double cdx = c(0) - d(0), cdy = c(1) - d(1);
    const double ad2 = adx * adx + ady * ady;
    const double bd2 = bdx * bdx + bdy * bdy;
    const double cd2 = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) +
           ad2 * (bdx * cdy - cdx * bdy);
}

}  // namespace detail

// Bowyer-Watson with a strict incircle test; cocircular configurations keep
// whichever diagonal insertion produced, then a canonicalization pass flips
// exactly-tied diagonals to the lexicographically smallest vertex pair.
inline KeypointGraph delaunay(const Eigen::MatrixXd& points_in) {
    check(points_in.cols() == 2, "dimension", "delaunay: points must be m x 2");
    check(points_in.rows() >= 1, "invariant", "delaunay: empty point set");
    check(points_in.allFinite(), "invariant", "delaunay: non-finite point coordinate");

    KeypointGraph graph;
    graph.points = points_in;
    const int m = graph.m();

    // Deterministic jitter for exact duplicates.
    {
        Rng rng(0, "jitter");
        std::set<std::pair<double, double>> seen;
        for (int i = 0; i < m; ++i) {
            std::pair<double, double> key{graph.points(i, 0), graph.points(i, 1)};
            while (seen.count(key) > 0) {
                graph.points(i, 0) += 1e-6 * (2.0 * rng.uniform() - 1.0);
                graph.points(i, 1) += 1e-6 * (2.0 * rng.uniform() - 1.0);
                graph.jittered = true;
                key = {graph.points(i, 0), graph.points(i, 1)};
            }
            seen.insert(key);
        }
    }

    if (m < 3) {
        if (m == 2) graph.fallback_edges.push_back({0, 1});
        return graph;
    }

    // Scale-relative collinearity test over all points against the first
    // non-degenerate direction.
    double scale = 0.0;
    for (int i = 0; i < m; ++i) scale = std::max(scale, graph.points.row(i).norm());
    scale = std::max(scale, 1.0);
    bool collinear = true;
    {
        int second = -1;
        for (int i = 1; i < m && second < 0; ++i)
            if ((graph.points.row(i) - graph.points.row(0)).norm() > 1e-12 * scale) second = i;
        if (second >= 0) {
            for (int i = 0; i < m; ++i) {
                if (std::abs(detail::orient2d(graph.points.row(0), graph.points.row(second),
                                              graph.points.row(i))) > 1e-9 * scale * scale) {
                    collinear = false;
                    break;
                }
            }
        }
    }
    if (collinear) {
        graph.degenerate_chain = true;
        Eigen::RowVector2d dir = Eigen::RowVector2d(1.0, 0.0);
        for (int i = 1; i < m; ++i) {
            const Eigen::RowVector2d d = graph.points.row(i) - graph.points.row(0);
            if (d.norm() > 1e-12 * scale) {
                dir = d.normalized();
                break;
            }
        }
        std::vector<std::pair<double, int>> order;
        for (int i = 0; i < m; ++i)
            order.push_back({(graph.points.row(i) - graph.points.row(0)).dot(dir), i});
        std::sort(order.begin(), order.end());
        for (int i = 0; i + 1 < m; ++i) {
            const int a = std::min(order[static_cast<std::size_t>(i)].second,
                                   order[static_cast<std::size_t>(i + 1)].second);
            const int b = std::max(order[static_cast<std::size_t>(i)].second,
                                   order[static_cast<std::size_t>(i + 1)].second);
            graph.fallback_edges.push_back({a, b});
        }
        return graph;
    }

    // Super-triangle generously containing every point.
    const Eigen::RowVector2d lo = graph.points.colwise().minCoeff();
    const Eigen::RowVector2d hi = graph.points.colwise().maxCoeff();
    const Eigen::RowVector2d center = 0.5 * (lo + hi);
    const double radius = std::max((hi - lo).norm(), 1e-6 * scale) * 64.0;
    Eigen::MatrixXd pts(m + 3, 2);
    pts.topRows(m) = graph.points;
    pts.row(m) = center + Eigen::RowVector2d(0.0, 2.0 * radius);
    pts.row(m + 1) = center + Eigen::RowVector2d(-1.7320508075688772 * radius, -radius);
    pts.row(m + 2) = center + Eigen::RowVector2d(1.7320508075688772 * radius, -radius);

    struct Tri {
        std::array<int, 3> v;
        bool alive = true;
    };
    std::vector<Tri> tris;
    tris.push_back({{m, m + 1, m + 2}, true});

    auto make_ccw = [&](std::array<int, 3>& t) {
        if (detail::orient2d(pts.row(t[0]), pts.row(t[1]), pts.row(t[2])) < 0.0)
            std::swap(t[1], t[2]);
    };

    for (int p = 0; p < m; ++p) {
        std::vector<int> bad;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            if (!tris[t].alive) continue;
            const auto& v = tris[t].v;
            if (detail::incircle(pts.row(v[0]), pts.row(v[1]), pts.row(v[2]), pts.row(p)) > 0.0)
                bad.push_back(static_cast<int>(t));
        }
        // Cavity boundary: edges of bad triangles not shared by two of them.
        std::map<std::pair<int, int>, std::pair<int, int>> edge_count;  // -> (count, a-as-seen)
        for (int t : bad) {
            const auto& v = tris[static_cast<std::size_t>(t)].v;
            for (int c = 0; c < 3; ++c) {
                const int a = v[static_cast<std::size_t>(c)];
                const int b = v[static_cast<std::size_t>((c + 1) % 3)];
                auto& slot = edge_count[std::minmax(a, b)];
                if (slot.first == 0) slot.second = a;
                ++slot.first;
            }
        }
        for (int t : bad) tris[static_cast<std::size_t>(t)].alive = false;
        for (const auto& [edge, slot] : edge_count) {
            if (slot.first != 1) continue;
            const int a = slot.second;
            const int b = a == edge.first ? edge.second : edge.first;
            std::array<int, 3> nt{a, b, p};
            make_ccw(nt);
            tris.push_back({nt, true});
        }
    }

    // Drop super-triangle incidences, canonicalize cocircular diagonals.
    std::vector<std::array<int, 3>> faces;
    for (const auto& t : tris) {
        if (!t.alive) continue;
        if (t.v[0] >= m || t.v[1] >= m || t.v[2] >= m) continue;
        faces.push_back(t.v);
    }
    check(!faces.empty(), "invariant", "delaunay: triangulation produced no faces");

    const double tie_tol = 1e-9 * scale * scale * scale * scale;
    for (bool changed = true; changed;) {
        changed = false;
        std::map<std::pair<int, int>, std::vector<int>> by_edge;
        for (std::size_t f = 0; f < faces.size(); ++f)
            for (int c = 0; c < 3; ++c)
                by_edge[std::minmax(faces[f][static_cast<std::size_t>(c)],
                                    faces[f][static_cast<std::size_t>((c + 1) % 3)])]
                    .push_back(static_cast<int>(f));
        for (const auto& [edge, fs] : by_edge) {
            if (fs.size() != 2) continue;
            auto third = [&](int f) {
                for (int w : faces[static_cast<std::size_t>(f)])
                    if (w != edge.first && w != edge.second) return w;
                return -1;
            };
            const int a = third(fs[0]), b = third(fs[1]);
            const std::pair<int, int> alt = std::minmax(a, b);
            if (alt >= edge) continue;  // already the smaller diagonal
            std::array<int, 3> t1{edge.first, edge.second, a};
            make_ccw(t1);
            if (std::abs(detail::incircle(pts.row(t1[0]), pts.row(t1[1]), pts.row(t1[2]),
                                          pts.row(b))) > tie_tol)
                continue;  // not an exact tie
            // Flip to the lexicographically smaller diagonal (a, b).
            std::array<int, 3> n1{a, b, edge.first};
            std::array<int, 3> n2{a, b, edge.second};
            make_ccw(n1);
            make_ccw(n2);
            faces[static_cast<std::size_t>(fs[0])] = n1;
            faces[static_cast<std::size_t>(fs[1])] = n2;
            changed = true;
            break;
        }
    }

    graph.faces.resize(static_cast<long>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f)
        graph.faces.row(static_cast<long>(f)) << faces[f][0], faces[f][1], faces[f][2];
    return graph;
}

// Cotangent stiffness and barycentric mass of the planar triangulation
// (z = 0), exactly as the 3D operators; degenerate graphs fall back to the
// combinatorial Laplacian with unit masses.
inline std::pair<SpMat, MassMatrix> planar_laplacian(const KeypointGraph& graph) {
    const int m = graph.m();
    if (graph.faces.rows() > 0) {
        TriangleMesh mesh;
        mesh.name = "keypoint-graph";
        mesh.vertices.resize(m, 3);
        mesh.vertices.leftCols(2) = graph.points;
        mesh.vertices.col(2).setZero();
        mesh.faces = graph.faces;
        validate_mesh(mesh);
        return {cotangent_stiffness(mesh), lumped_mass(mesh)};
    }
    SpMat W(m, m);
    std::vector<Triplet> trips;
    for (const auto& [a, b] : graph.fallback_edges) {
        trips.emplace_back(a, b, -1.0);
        trips.emplace_back(b, a, -1.0);
        trips.emplace_back(a, a, 1.0);
        trips.emplace_back(b, b, 1.0);
    }
    W.setFromTriplets(trips.begin(), trips.end());
    return {W, Eigen::VectorXd::Ones(m)};
}

// ---------------------------------------------------------------------------
// Graph-pair container: JSON with flat row-major point/signal arrays and the
// ground-truth node map.

struct GraphPair {
    KeypointGraph a, b;
    PointMap gt;  // node in A -> node in B
};

namespace detail {

inline Eigen::MatrixXd matrix_from_flat(const std::vector<double>& flat, int rows,
                                        const std::string& what) {
    check(rows > 0 && flat.size() % static_cast<std::size_t>(rows) == 0, "parse",
          what + ": flat array length not divisible by row count");
    const int cols = static_cast<int>(flat.size()) / rows;
    Eigen::MatrixXd out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
    return out;
}

inline std::vector<double> flat_from_matrix(const Eigen::MatrixXd& mat) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(mat.size()));
    for (int r = 0; r < mat.rows(); ++r)
        for (int c = 0; c < mat.cols(); ++c) out.push_back(mat(r, c));
    return out;
}

}  // namespace detail

inline void save_graph_pair(const GraphPair& pair, const std::string& path) {
    nlohmann::json j;
    j["pointsA"] = detail::flat_from_matrix(pair.a.points);
    j["pointsB"] = detail::flat_from_matrix(pair.b.points);
    j["signalsA"] = detail::flat_from_matrix(pair.a.node_signals);
    j["signalsB"] = detail::flat_from_matrix(pair.b.node_signals);
    j["gt"] = pair.gt;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        check(out.good(), "io", "cannot open graph pair for writing: " + tmp);
        out << j.dump() << "\n";
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline GraphPair load_graph_pair(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "io", "cannot open graph pair: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail("parse", path + ": " + e.what());
    }
    GraphPair pair;
    try {
        const auto pa = j.at("pointsA").get<std::vector<double>>();
        const auto pb = j.at("pointsB").get<std::vector<double>>();
        check(pa.size() % 2 == 0 && pb.size() % 2 == 0 && !pa.empty() && !pb.empty(), "parse",
              path + ": point arrays must hold (x, y) pairs");
        const int ma = static_cast<int>(pa.size() / 2), mb = static_cast<int>(pb.size() / 2);
        pair.a = delaunay(detail::matrix_from_flat(pa, ma, "pointsA"));
        pair.b = delaunay(detail::matrix_from_flat(pb, mb, "pointsB"));
        pair.a.node_signals =
            detail::matrix_from_flat(j.at("signalsA").get<std::vector<double>>(), ma, "signalsA");
        pair.b.node_signals =
            detail::matrix_from_flat(j.at("signalsB").get<std::vector<double>>(), mb, "signalsB");
        pair.gt = j.at("gt").get<PointMap>();
        check(static_cast<int>(pair.gt.size()) == ma, "parse", path + ": gt length mismatch");
        for (int t : pair.gt)
            check(t >= 0 && t < mb, "parse", path + ": gt target out of range");
        check(pair.a.node_signals.cols() == pair.b.node_signals.cols(), "parse",
              path + ": signal dimensions differ");
    } catch (const nlohmann::json::exception& e) {
        fail("parse", path + ": " + e.what());
    }
    return pair;
}

// ---------------------------------------------------------------------------

// Node features come from the shared feature head run without a basis
// (pointwise MLP only); prediction is the row argmax of Pi, which equals
// nearest-neighbor matching on normalized features.
inline PointMap match_graphs(const ModelParams& params, const KeypointGraph& a,
                             const KeypointGraph& b) {
    check(a.node_signals.size() > 0 && b.node_signals.size() > 0, "invariant",
          "match_graphs: missing node signals");
    const FeatureMatrix ga = forward(params, a.node_signals, nullptr);
    const FeatureMatrix gb = forward(params, b.node_signals, nullptr);
    return nearest_neighbor_map(ga, gb);
}

struct Kp2dPairData {
    GraphPair pair;
    SpMat WA, WB;
    SpectralBasis basisA, basisB;
    bool spectral_ok = false;
};

inline Kp2dPairData prepare_kp2d_pair(GraphPair pair, const LossConfig& loss) {
    Kp2dPairData data;
    data.pair = std::move(pair);
    auto [WA, AA] = planar_laplacian(data.pair.a);
    auto [WB, AB] = planar_laplacian(data.pair.b);
    data.WA = std::move(WA);
    data.WB = std::move(WB);
    if (loss.regularizer == Regularizer::spectral || loss.regularizer2 == Regularizer::spectral) {
        const int ka = std::min(loss.k, data.pair.a.m() - 1);
        const int kb = std::min(loss.k, data.pair.b.m() - 1);
        const int k = std::min(ka, kb);
        if (k >= 1) {
            data.basisA = eigenbasis(data.WA, AA, k);
            data.basisB = eigenbasis(data.WB, AB, k);
            data.spectral_ok = true;
        }
    }
    return data;
}

// Gradient descent on the combined loss over graph pairs, lambda default
// 0.01 for either smoothness variant. Single-node graphs contribute only
// the (trivial) contrastive term.
inline TrainResult train_2d(const TrainOptions& opt, const std::vector<Kp2dPairData>& pairs,
                            ModelParams initial) {
    check(!pairs.empty(), "invariant", "train_2d: empty pair list");
    opt.loss.validate();
    TrainResult result;
    result.params = std::move(initial);
    AdamState adam;
    adam.lr = opt.lr;
    long global_step = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        EpochRow row;
        row.epoch = epoch;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const Kp2dPairData& data = pairs[p];
            const FeatureMatrix ga = forward(result.params, data.pair.a.node_signals, nullptr);
            const FeatureMatrix gb = forward(result.params, data.pair.b.node_signals, nullptr);

            CorrespondenceSet gt_set;
            for (std::size_t i = 0; i < data.pair.gt.size(); ++i)
                gt_set.push_back({static_cast<int>(i), data.pair.gt[i]});
            const CorrespondenceSet sampled = sample_correspondences(
                gt_set, opt.loss.sample_count,
                substream_seed(opt.seed, "step2d", static_cast<std::uint64_t>(global_step)));

            LossConfig cfg = opt.loss;
            if ((cfg.regularizer == Regularizer::spectral ||
                 cfg.regularizer2 == Regularizer::spectral) &&
                !data.spectral_ok) {
                if (cfg.regularizer == Regularizer::spectral) cfg.regularizer = Regularizer::none;
                if (cfg.regularizer2 == Regularizer::spectral) cfg.regularizer2 = Regularizer::none;
            }
            LossInputs inputs;
            inputs.W1 = &data.WA;
            inputs.W2 = &data.WB;
            inputs.basis1 = data.spectral_ok ? &data.basisA : nullptr;
            inputs.basis2 = data.spectral_ok ? &data.basisB : nullptr;
            inputs.gt_pmap = &data.pair.gt;
            const CombinedResult loss = combined_loss(cfg, ga, gb, inputs, sampled);
            detail::check_finite_loss(loss, epoch, static_cast<int>(p));

            GradientBundle grad = backward(result.params, data.pair.a.node_signals, nullptr, loss.dG1);
            accumulate(grad, backward(result.params, data.pair.b.node_signals, nullptr, loss.dG2));
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

// ---------------------------------------------------------------------------
// Synthetic 2D benchmark: random planar point sets whose descriptors are
// noisy copies of shared per-node embeddings plus a positional encoding;
// the second graph permutes node order.

struct Kp2dSynthConfig {
    int n_train = 100;
    int n_test = 50;
    int min_nodes = 5;
    int max_nodes = 19;
    int embed_dim = 8;
    double signal_noise = 0.01;
    double position_noise = 1.0;  // pixels
    std::uint64_t seed = 1;
};

inline GraphPair make_graph_pair_2d(const Kp2dSynthConfig& config, std::uint64_t seed) {
    Rng rng(seed, "kp2d");
    const int m = config.min_nodes +
                  static_cast<int>(rng.below(
                      static_cast<std::uint64_t>(config.max_nodes - config.min_nodes + 1)));

    Eigen::MatrixXd pointsA(m, 2);
    for (int i = 0; i < m; ++i) pointsA.row(i) << rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0);
    Eigen::MatrixXd embed(m, config.embed_dim);
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < config.embed_dim; ++c) embed(i, c) = rng.normal();

    std::vector<int> perm(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = m - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    Eigen::MatrixXd pointsB(m, 2);
    for (int i = 0; i < m; ++i)
        pointsB.row(perm[static_cast<std::size_t>(i)]) =
            pointsA.row(i) + Eigen::RowVector2d(config.position_noise * rng.normal(),
                                                config.position_noise * rng.normal());

    auto signals = [&](const Eigen::MatrixXd& pts, const Eigen::MatrixXd& emb) {
        Eigen::MatrixXd s(pts.rows(), config.embed_dim + 2);
        for (int i = 0; i < pts.rows(); ++i) {
            for (int c = 0; c < config.embed_dim; ++c)
                s(i, c) = emb(i, c) + config.signal_noise * rng.normal();
            s(i, config.embed_dim) = pts(i, 0) / 100.0;
            s(i, config.embed_dim + 1) = pts(i, 1) / 100.0;
        }
        return s;
    };

    GraphPair pair;
    pair.a = delaunay(pointsA);
    pair.a.node_signals = signals(pair.a.points, embed);
    Eigen::MatrixXd embedB(m, config.embed_dim);
    for (int i = 0; i < m; ++i) embedB.row(perm[static_cast<std::size_t>(i)]) = embed.row(i);
    pair.b = delaunay(pointsB);
    pair.b.node_signals = signals(pair.b.points, embedB);
    pair.gt.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) pair.gt[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)];
    return pair;
}

struct Kp2dManifest {
    std::vector<std::pair<std::string, std::string>> pairs;  // (file, split)
};

inline void save_kp2d_manifest(const Kp2dManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& [file, split] : manifest.pairs)
        j["pairs"].push_back({{"file", file}, {"split", split}});
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        check(out.good(), "io", "cannot open manifest for writing: " + tmp);
        out << j.dump(2) << "\n";
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Kp2dManifest load_kp2d_manifest(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "io", "cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail("parse", path + ": " + e.what());
    }
    check(j.contains("pairs") && j["pairs"].is_array(), "parse",
          path + ": manifest missing 'pairs' array");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    Kp2dManifest manifest;
    for (const auto& p : j["pairs"]) {
        try {
            const std::string file = (base / p.at("file").get<std::string>()).string();
            const std::string split = p.at("split").get<std::string>();
            check(split == "train" || split == "test", "parse",
                  path + ": split must be train or test");
            check(std::filesystem::exists(file), "io", "manifest references missing file: " + file);
            manifest.pairs.push_back({file, split});
        } catch (const nlohmann::json::exception& e) {
            fail("parse", path + ": bad manifest entry: " + e.what());
        }
    }
    return manifest;
}

inline Kp2dManifest generate_kp2d_dataset(const Kp2dSynthConfig& config,
                                          const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    Kp2dManifest manifest;
    const int total = config.n_train + config.n_test;
    for (int i = 0; i < total; ++i) {
        const GraphPair pair =
            make_graph_pair_2d(config, substream_seed(config.seed, "kp2d-pair", i));
        char tag[16];
        std::snprintf(tag, sizeof tag, "kp_%03d.json", i);
        save_graph_pair(pair, (std::filesystem::path(out_dir) / tag).string());
        manifest.pairs.push_back({tag, i < config.n_train ? "train" : "test"});
    }
    save_kp2d_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace smoothcorr
