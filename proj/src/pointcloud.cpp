#include "duckmorph/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "duckmorph/errors.hpp"

namespace duckmorph::pointcloud {

namespace {

constexpr std::size_t kLeafSize = 12;

double coord(const Point3& p, int axis) { return axis == 0 ? p.x : (axis == 1 ? p.y : p.z); }

struct Candidate {
    double d2;
    std::size_t index;
    bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

} // namespace

NeighborIndex::NeighborIndex(std::span<const Point3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
    for (std::size_t i = 0; i < order_.size(); ++i) {
        if (!points_[i].finite()) throw ArgumentError("point " + std::to_string(i) + " is not finite");
        order_[i] = i;
    }
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        build(0, points_.size());
    }
}

std::size_t NeighborIndex::build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Point3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& p = points_[order_[i]];
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Point3 ext = hi - lo;
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    if (coord(ext, axis) == 0.0) return id; // all coincident: keep as a leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<long>(begin), order_.begin() + static_cast<long>(mid),
                     order_.begin() + static_cast<long>(end), [&](std::size_t a, std::size_t b) {
                         const double ca = coord(points_[a], axis), cb = coord(points_[b], axis);
                         return ca < cb || (ca == cb && a < b);
                     });
    const double split = coord(points_[order_[mid]], axis);
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<Neighbor> NeighborIndex::knn(const Point3& query, std::size_t k,
                                         std::optional<std::size_t> exclude) const {
    const std::size_t available = points_.size() - (exclude && *exclude < points_.size() ? 1 : 0);
    if (k < 1 || k > available) {
        throw ArgumentError("knn: k=" + std::to_string(k) + " but only " + std::to_string(available) +
                            " candidate points");
    }
    // Sorted ascending by (d2, index); the last entry is the current worst.
    std::vector<Candidate> best;
    best.reserve(k + 1);
    std::pair<std::size_t, double> stack[128];
    std::size_t top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        const auto [id, bound] = stack[--top];
        if (best.size() == k && bound > best.back().d2) continue;
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                if (exclude && idx == *exclude) continue;
                const Candidate c{squared_distance(points_[idx], query), idx};
                if (best.size() == k && !(c < best.back())) continue;
                auto pos = std::upper_bound(best.begin(), best.end(), c);
                best.insert(pos, c);
                if (best.size() > k) best.pop_back();
            }
            continue;
        }
        const double diff = coord(query, n.axis) - n.split;
        const double far_bound = std::max(bound, diff * diff);
        if (diff < 0) {
            stack[top++] = {n.right, far_bound};
            stack[top++] = {n.left, bound};
        } else {
            stack[top++] = {n.left, far_bound};
            stack[top++] = {n.right, bound};
        }
    }
    std::vector<Neighbor> out(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) out[i] = {best[i].index, std::sqrt(best[i].d2)};
    return out;
}

std::vector<std::size_t> NeighborIndex::radius_search(const Point3& query, double radius) const {
    std::vector<std::size_t> out;
    radius_search_unordered(query, radius, out);
    std::sort(out.begin(), out.end());
    return out;
}

void NeighborIndex::radius_search_unordered(const Point3& query, double radius,
                                            std::vector<std::size_t>& out) const {
    out.clear();
    if (points_.empty()) return;
    const double r2 = radius * radius;
    std::size_t stack[128];
    std::size_t top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& n = nodes_[stack[--top]];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                if (squared_distance(points_[order_[i]], query) <= r2) out.push_back(order_[i]);
            }
            continue;
        }
        const double diff = coord(query, n.axis) - n.split;
        if (diff < 0) {
            if (diff * diff <= r2) stack[top++] = n.right;
            stack[top++] = n.left;
        } else {
            if (diff * diff <= r2) stack[top++] = n.left;
            stack[top++] = n.right;
        }
    }
}

OutlierStatistics outlier_statistics(const PointCloud& cloud, std::size_t k, double sigma) {
    if (cloud.size() <= k) {
        throw ArgumentError("statistical outlier removal needs more than k=" + std::to_string(k) +
                            " points, cloud has " + std::to_string(cloud.size()));
    }
    const NeighborIndex index(cloud.points);
    OutlierStatistics s;
    s.mean_distance.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double sum = 0;
        for (const auto& nb : index.knn(cloud.points[i], k, i)) sum += nb.distance;
        s.mean_distance[i] = sum / static_cast<double>(k);
    }
    const double n = static_cast<double>(cloud.size());
    double sum = 0;
    for (double d : s.mean_distance) sum += d;
    s.global_mean = sum / n;
    double sq = 0;
    for (double d : s.mean_distance) sq += (d - s.global_mean) * (d - s.global_mean);
    s.global_stddev = std::sqrt(sq / (n - 1.0));
    s.threshold = s.global_mean + sigma * s.global_stddev;
    return s;
}

std::vector<std::size_t> statistical_outlier_inliers(const PointCloud& cloud, std::size_t k, double sigma) {
    const auto s = outlier_statistics(cloud, k, sigma);
    std::vector<std::size_t> keep;
    keep.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!(s.mean_distance[i] > s.threshold)) keep.push_back(i);
    }
    return keep;
}

PointCloud statistical_outlier_removal(const PointCloud& cloud, std::size_t k, double sigma) {
    return select(cloud, statistical_outlier_inliers(cloud, k, sigma));
}

std::vector<std::vector<std::size_t>> euclidean_cluster_indices(const PointCloud& cloud, double eps,
                                                                std::size_t min_cluster) {
    if (!(eps > 0)) throw ArgumentError("cluster radius must be positive");
    std::vector<std::vector<std::size_t>> clusters;
    if (cloud.empty()) return clusters;
    const NeighborIndex index(cloud.points);
    std::vector<bool> visited(cloud.size(), false);
    std::deque<std::size_t> frontier;
    std::vector<std::size_t> found;
    for (std::size_t seed = 0; seed < cloud.size(); ++seed) {
        if (visited[seed]) continue;
        std::vector<std::size_t> members;
        visited[seed] = true;
        frontier.push_back(seed);
        while (!frontier.empty()) {
            const std::size_t cur = frontier.front();
            frontier.pop_front();
            members.push_back(cur);
            index.radius_search_unordered(cloud.points[cur], eps, found);
            for (auto nb : found) {
                if (!visited[nb]) {
                    visited[nb] = true;
                    frontier.push_back(nb);
                }
            }
        }
        if (members.size() >= min_cluster) {
            std::sort(members.begin(), members.end());
            clusters.push_back(std::move(members));
        }
    }
    // Seeds are scanned in index order, so a stable sort keeps ties ordered
    // by their lowest member.
    std::stable_sort(clusters.begin(), clusters.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return clusters;
}

std::vector<PointCloud> euclidean_cluster(const PointCloud& cloud, double eps, std::size_t min_cluster) {
    std::vector<PointCloud> out;
    for (const auto& c : euclidean_cluster_indices(cloud, eps, min_cluster)) out.push_back(select(cloud, c));
    return out;
}

namespace {

// Spatially coherent blocks of point indices, for pruning FPS updates.
struct FpsBlock {
    std::size_t begin, end;
    Point3 lo, hi;
    double max_d2 = std::numeric_limits<double>::infinity();
    std::size_t argmax = 0;
};

void split_blocks(std::vector<std::size_t>& order, const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::vector<double>& zs, std::size_t begin, std::size_t end, std::vector<FpsBlock>& out) {
    constexpr std::size_t kBlock = 64;
    double lo[3] = {xs[order[begin]], ys[order[begin]], zs[order[begin]]};
    double hi[3] = {lo[0], lo[1], lo[2]};
    for (std::size_t i = begin; i < end; ++i) {
        const double p[3] = {xs[order[i]], ys[order[i]], zs[order[i]]};
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    const double ext[3] = {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
    const int axis = ext[0] >= ext[1] && ext[0] >= ext[2] ? 0 : (ext[1] >= ext[2] ? 1 : 2);
    if (end - begin <= kBlock || ext[axis] == 0.0) {
        FpsBlock b{begin, end, {lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}};
        b.argmax = order[begin];
        for (std::size_t i = begin; i < end; ++i) b.argmax = std::min(b.argmax, order[i]);
        out.push_back(b);
        return;
    }
    const auto& c = axis == 0 ? xs : (axis == 1 ? ys : zs);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + static_cast<long>(begin), order.begin() + static_cast<long>(mid),
                     order.begin() + static_cast<long>(end), [&](std::size_t a, std::size_t b) {
                         return c[a] < c[b] || (c[a] == c[b] && a < b);
                     });
    split_blocks(order, xs, ys, zs, begin, mid, out);
    split_blocks(order, xs, ys, zs, mid, end, out);
}

double box_distance2(const FpsBlock& b, double x, double y, double z) {
    const double dx = std::max({b.lo.x - x, 0.0, x - b.hi.x});
    const double dy = std::max({b.lo.y - y, 0.0, y - b.hi.y});
    const double dz = std::max({b.lo.z - z, 0.0, z - b.hi.z});
    return dx * dx + dy * dy + dz * dz;
}

} // namespace

std::vector<std::size_t> farthest_point_sample(std::span<const Point3> points, std::size_t m,
                                               std::size_t seed_index) {
    const std::size_t n = points.size();
    if (m < 1 || m > n) {
        throw ArgumentError("farthest point sampling: requested " + std::to_string(m) + " of " +
                            std::to_string(n) + " points");
    }
    if (seed_index >= n) throw ArgumentError("farthest point sampling: seed index out of range");

    std::vector<double> xs(n), ys(n), zs(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = points[i].x;
        ys[i] = points[i].y;
        zs[i] = points[i].z;
        order[i] = i;
    }
    std::vector<FpsBlock> blocks;
    split_blocks(order, xs, ys, zs, 0, n, blocks);
    // Block-local copies keep the inner loop contiguous.
    std::vector<double> bx(n), by(n), bz(n), md(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        bx[i] = xs[order[i]];
        by[i] = ys[order[i]];
        bz[i] = zs[order[i]];
    }
    std::vector<std::size_t> slot(n);
    for (std::size_t i = 0; i < n; ++i) slot[order[i]] = i;

    std::vector<std::size_t> selected;
    selected.reserve(m);
    std::size_t current = seed_index;
    for (std::size_t step = 0; step < m; ++step) {
        selected.push_back(current);
        if (step + 1 == m) break;
        // Selected points are pinned at -1 so they are never chosen again.
        md[slot[current]] = -1.0;
        const double cx = xs[current], cy = ys[current], cz = zs[current];
        bool first = true;
        double best_d2 = 0;
        std::size_t best = 0;
        for (auto& b : blocks) {
            // A block whose nearest corner is no closer than its current
            // maximum cannot change, unless it holds the point just pinned.
            const bool holds_current = slot[current] >= b.begin && slot[current] < b.end;
            if (holds_current || box_distance2(b, cx, cy, cz) < b.max_d2) {
                double bmax = -std::numeric_limits<double>::infinity();
                std::size_t barg = 0;
                for (std::size_t i = b.begin; i < b.end; ++i) {
                    const double dx = bx[i] - cx, dy = by[i] - cy, dz = bz[i] - cz;
                    const double d2 = dx * dx + dy * dy + dz * dz;
                    const double v = d2 < md[i] ? d2 : md[i];
                    md[i] = v;
                    if (v > bmax || (v == bmax && order[i] < barg)) {
                        bmax = v;
                        barg = order[i];
                    }
                }
                b.max_d2 = bmax;
                b.argmax = barg;
            }
            if (first || b.max_d2 > best_d2 || (b.max_d2 == best_d2 && b.argmax < best)) {
                first = false;
                best_d2 = b.max_d2;
                best = b.argmax;
            }
        }
        current = best;
    }
    return selected;
}

PreprocessResult preprocess_cloud(const PointCloud& raw, const PreprocessConfig& cfg) {
    PreprocessResult result;
    result.inlier_indices = statistical_outlier_inliers(raw, cfg.neighbors, cfg.sigma);
    const PointCloud denoised = select(raw, result.inlier_indices);

    const auto clusters = euclidean_cluster_indices(denoised, cfg.cluster_eps, cfg.min_cluster);
    result.retained_clusters = clusters.size();
    if (clusters.empty()) {
        throw ArgumentError("no cluster with at least " + std::to_string(cfg.min_cluster) +
                            " points survived denoising");
    }
    if (cfg.cluster_index >= clusters.size()) {
        throw ArgumentError("cluster index " + std::to_string(cfg.cluster_index) + " requested but only " +
                            std::to_string(clusters.size()) + " clusters retained");
    }
    const auto& chosen = clusters[cfg.cluster_index];
    result.cluster_indices.reserve(chosen.size());
    for (auto i : chosen) result.cluster_indices.push_back(result.inlier_indices[i]);

    const PointCloud body = select(raw, result.cluster_indices);
    if (body.size() < cfg.target_points) {
        throw ArgumentError("chosen cluster has " + std::to_string(body.size()) + " points, fewer than the " +
                            std::to_string(cfg.target_points) + " requested");
    }
    result.cloud = select(body, farthest_point_sample(body, cfg.target_points, cfg.fps_seed_index));
    return result;
}

} // namespace duckmorph::pointcloud
