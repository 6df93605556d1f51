#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "duckmorph/dataset.hpp"

namespace duckmorph::metrics {

struct TargetMetrics {
    double r2 = 0;
    double mape = 0; // percent
    double rmse = 0;
    double mae = 0;
};

// How the overall row combines targets: pool every residual in original
// units, or average the per-target values.
enum class OverallMode { Pooled, PerTargetMean };

struct MetricsReport {
    std::array<TargetMetrics, dataset::kTargetCount> per_target{};
    TargetMetrics overall;
    OverallMode mode = OverallMode::Pooled;
    std::size_t samples = 0;
};

// Metrics of one column. Needs n >= 2 and nonzero truth values.
TargetMetrics column_metrics(std::span<const double> pred, std::span<const double> truth);

MetricsReport compute_metrics(const std::vector<dataset::Labels>& pred, const std::vector<dataset::Labels>& truth,
                              OverallMode mode = OverallMode::Pooled);

// Aligned text table: one row per target with its unit, then the overall row.
std::string format_table(const MetricsReport& r);
nlohmann::json report_to_json(const MetricsReport& r);

struct SplitSpec {
    double train = 0.8, val = 0.1, test = 0.1;
    std::uint64_t seed = 1;
    bool grouped = true; // keep every sample of a duck in one split

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train, val, test; // ascending sample indices
};

// `duck_ids[i]` is the group of sample i.
Split split_dataset(const std::vector<std::string>& duck_ids, const SplitSpec& spec);

} // namespace duckmorph::metrics
