#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "duckmorph/geometry.hpp"

namespace duckmorph::pointcloud {

struct Neighbor {
    std::size_t index;
    double distance;
};

// Exact k-d tree over a snapshot of a cloud. Results are identical to a
// brute-force scan, with equal distances ordered by lower point index.
// Immutable after construction, so concurrent queries are safe.
class NeighborIndex {
public:
    explicit NeighborIndex(std::span<const Point3> points);

    std::size_t size() const { return points_.size(); }
    const std::vector<Point3>& points() const { return points_; }

    // k nearest points in ascending (distance, index) order. `exclude`
    // removes one index from consideration (the query's own point).
    std::vector<Neighbor> knn(const Point3& query, std::size_t k,
                              std::optional<std::size_t> exclude = std::nullopt) const;

    // All indices within `radius` (inclusive), ascending by index.
    std::vector<std::size_t> radius_search(const Point3& query, double radius) const;

    // Same set as radius_search, in tree order, written into `out`.
    void radius_search_unordered(const Point3& query, double radius, std::vector<std::size_t>& out) const;

private:
    struct Node {
        std::size_t begin, end; // range into order_
        int axis = -1;          // -1 for leaves
        double split = 0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end);

    std::vector<Point3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

struct OutlierStatistics {
    std::vector<double> mean_distance; // per point, over its k neighbors
    double global_mean = 0;
    double global_stddev = 0; // sample standard deviation (n - 1)
    double threshold = 0;
};

OutlierStatistics outlier_statistics(const PointCloud& cloud, std::size_t k, double sigma);

// Indices of points kept by the statistical filter, ascending.
std::vector<std::size_t> statistical_outlier_inliers(const PointCloud& cloud, std::size_t k = 20,
                                                     double sigma = 2.0);

PointCloud statistical_outlier_removal(const PointCloud& cloud, std::size_t k = 20,
                                       double sigma = 2.0);

// Connected components of the eps-neighborhood graph with at least
// `min_cluster` members, largest first (ties: lowest first index). Each
// component lists its indices ascending.
std::vector<std::vector<std::size_t>> euclidean_cluster_indices(const PointCloud& cloud, double eps,
                                                                std::size_t min_cluster = 9000);

std::vector<PointCloud> euclidean_cluster(const PointCloud& cloud, double eps,
                                          std::size_t min_cluster = 9000);

// Greedy farthest point sampling from `seed_index`; returns `m` indices in
// selection order. Ties go to the lower index.
std::vector<std::size_t> farthest_point_sample(std::span<const Point3> points, std::size_t m,
                                               std::size_t seed_index = 0);

inline std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                                      std::size_t seed_index = 0) {
    return farthest_point_sample(std::span<const Point3>(cloud.points), m, seed_index);
}

struct PreprocessConfig {
    std::size_t neighbors = 20;
    double sigma = 2.0;
    double cluster_eps = 10.0; // mm
    std::size_t min_cluster = 9000;
    std::size_t cluster_index = 0; // rank among retained clusters, 0 = largest
    std::size_t target_points = 8192;
    std::size_t fps_seed_index = 0;
};

struct PreprocessResult {
    PointCloud cloud;                         // target_points points
    std::vector<std::size_t> inlier_indices;  // survivors of the statistical filter
    std::vector<std::size_t> cluster_indices; // chosen cluster, indices into the raw cloud
    std::size_t retained_clusters = 0;
};

// Denoise, cluster, keep one retained cluster, then downsample with FPS.
// The stages always run in this order.
PreprocessResult preprocess_cloud(const PointCloud& raw, const PreprocessConfig& cfg);

} // namespace duckmorph::pointcloud
