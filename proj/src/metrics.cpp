#include "duckmorph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/rng.hpp"

namespace duckmorph::metrics {

namespace {

void check_inputs(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size())
        throw DimensionError("metrics: " + std::to_string(pred.size()) + " predictions for " +
                             std::to_string(truth.size()) + " truth values");
    if (truth.size() < 2) throw ArgumentError("metrics need at least 2 samples");
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(truth[i]))
            throw NumericError("metrics: non-finite value in row " + std::to_string(i));
        if (truth[i] == 0.0) throw ArgumentError("MAPE undefined: truth is zero in row " + std::to_string(i));
    }
}

} // namespace

TargetMetrics column_metrics(std::span<const double> pred, std::span<const double> truth) {
    check_inputs(pred, truth);
    const double n = static_cast<double>(truth.size());
    double mean = 0;
    for (double y : truth) mean += y;
    mean /= n;
    double ss_res = 0, ss_tot = 0, ape = 0, ae = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = truth[i] - pred[i];
        ss_res += e * e;
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
        ape += std::abs(e) / std::abs(truth[i]);
        ae += std::abs(e);
    }
    TargetMetrics m;
    // A constant truth column has no variance to explain.
    m.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
    m.mape = 100.0 * ape / n;
    m.rmse = std::sqrt(ss_res / n);
    m.mae = ae / n;
    return m;
}

MetricsReport compute_metrics(const std::vector<dataset::Labels>& pred, const std::vector<dataset::Labels>& truth,
                              OverallMode mode) {
    if (pred.size() != truth.size())
        throw DimensionError("metrics: " + std::to_string(pred.size()) + " prediction rows for " +
                             std::to_string(truth.size()) + " truth rows");
    MetricsReport r;
    r.mode = mode;
    r.samples = truth.size();
    std::vector<double> p(truth.size()), t(truth.size());
    for (std::size_t k = 0; k < dataset::kTargetCount; ++k) {
        for (std::size_t i = 0; i < truth.size(); ++i) {
            p[i] = pred[i][k];
            t[i] = truth[i][k];
        }
        try {
            r.per_target[k] = column_metrics(p, t);
        } catch (const Error& e) {
            throw ArgumentError(std::string(dataset::kTargets[k].key) + ": " + e.what());
        }
    }
    if (mode == OverallMode::Pooled) {
        std::vector<double> pa, ta;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            pa.insert(pa.end(), pred[i].begin(), pred[i].end());
            ta.insert(ta.end(), truth[i].begin(), truth[i].end());
        }
        r.overall = column_metrics(pa, ta);
    } else {
        for (const auto& m : r.per_target) {
            r.overall.r2 += m.r2;
            r.overall.mape += m.mape;
            r.overall.rmse += m.rmse;
            r.overall.mae += m.mae;
        }
        const double k = static_cast<double>(dataset::kTargetCount);
        r.overall.r2 /= k;
        r.overall.mape /= k;
        r.overall.rmse /= k;
        r.overall.mae /= k;
    }
    return r;
}

std::string format_table(const MetricsReport& r) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-30s %8s %10s %10s %10s\n", "Parameter", "R2", "MAPE(%)", "RMSE", "MAE");
    out += line;
    out += std::string(72, '-') + "\n";
    auto row = [&](const std::string& name, const TargetMetrics& m) {
        std::snprintf(line, sizeof line, "%-30s %8.3f %10.2f %10.3f %10.3f\n", name.c_str(), m.r2, m.mape, m.rmse,
                      m.mae);
        out += line;
    };
    for (std::size_t k = 0; k < dataset::kTargetCount; ++k) {
        const auto& t = dataset::kTargets[k];
        row(std::string(t.display) + " (" + std::string(t.unit) + ")", r.per_target[k]);
    }
    out += std::string(72, '-') + "\n";
    row(r.mode == OverallMode::Pooled ? "Overall (All, pooled)" : "Overall (All, mean)", r.overall);
    return out;
}

nlohmann::json report_to_json(const MetricsReport& r) {
    auto one = [](const TargetMetrics& m) {
        return nlohmann::json{{"r2", m.r2}, {"mape", m.mape}, {"rmse", m.rmse}, {"mae", m.mae}};
    };
    nlohmann::json targets = nlohmann::json::array();
    for (std::size_t k = 0; k < dataset::kTargetCount; ++k) {
        auto j = one(r.per_target[k]);
        j["name"] = dataset::kTargets[k].key;
        j["unit"] = dataset::kTargets[k].unit;
        targets.push_back(j);
    }
    return {{"samples", r.samples},
            {"overall_mode", r.mode == OverallMode::Pooled ? "pooled" : "per_target_mean"},
            {"targets", targets},
            {"overall", one(r.overall)}};
}

void SplitSpec::validate() const {
    if (train <= 0 || val < 0 || test < 0) throw ConfigError("split ratios must be non-negative, train positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

Split split_dataset(const std::vector<std::string>& duck_ids, const SplitSpec& spec) {
    spec.validate();
    if (duck_ids.size() < 10)
        throw ArgumentError("split needs at least 10 samples, got " + std::to_string(duck_ids.size()));
    // Units are ducks (first-appearance order) or single samples.
    std::vector<std::vector<std::size_t>> units;
    if (spec.grouped) {
        std::map<std::string, std::size_t> unit_of;
        for (std::size_t i = 0; i < duck_ids.size(); ++i) {
            auto [it, fresh] = unit_of.emplace(duck_ids[i], units.size());
            if (fresh) units.emplace_back();
            units[it->second].push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < duck_ids.size(); ++i) units.push_back({i});
    }
    const std::size_t g = units.size();
    auto count = [&](double ratio) {
        if (ratio == 0) return std::size_t{0};
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(g))));
    };
    const std::size_t n_val = count(spec.val), n_test = count(spec.test);
    if (n_val + n_test >= g)
        throw ArgumentError("split: " + std::to_string(g) + " groups are too few for the requested ratios");

    std::vector<std::size_t> order(g);
    for (std::size_t i = 0; i < g; ++i) order[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(order.begin(), order.end());

    Split s;
    for (std::size_t r = 0; r < g; ++r) {
        auto& dst = r < n_val ? s.val : (r < n_val + n_test ? s.test : s.train);
        for (auto i : units[order[r]]) dst.push_back(i);
    }
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

} // namespace duckmorph::metrics
