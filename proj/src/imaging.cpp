#include "duckmorph/imaging.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace duckmorph::imaging {

GrayImage depth_to_gray(const DepthImage& depth, double near, double far) {
    if (!(near < far)) {
        throw ArgumentError("depth window near=" + std::to_string(near) + " must be below far=" +
                            std::to_string(far));
    }
    auto out = GrayImage::filled(depth.width, depth.height);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        const double v = depth.data[i];
        if (v < near || v > far) continue;
        out.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v - near) / (far - near)));
    }
    return out;
}

void MinMaxScaler::fit(const std::vector<std::vector<double>>& rows) {
    if (fitted_) throw StateError("scaler is already fitted; refitting is not allowed");
    if (rows.empty()) throw ArgumentError("cannot fit a scaler on zero rows");
    const std::size_t width = rows[0].size();
    min_.assign(rows[0].begin(), rows[0].end());
    max_ = min_;
    for (const auto& r : rows) {
        if (r.size() != width) throw DimensionError("scaler rows have differing widths");
        for (std::size_t c = 0; c < width; ++c) {
            min_[c] = std::min(min_[c], r[c]);
            max_[c] = std::max(max_[c], r[c]);
        }
    }
    fitted_ = true;
}

void MinMaxScaler::require_fitted(std::size_t width) const {
    if (!fitted_) throw StateError("scaler used before fit");
    if (width != min_.size()) {
        throw DimensionError("scaler fitted on " + std::to_string(min_.size()) + " columns, got " +
                             std::to_string(width));
    }
}

std::vector<double> MinMaxScaler::transform(const std::vector<double>& row) const {
    require_fitted(row.size());
    std::vector<double> out(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
        const double span = max_[c] - min_[c];
        out[c] = span > 0 ? (row[c] - min_[c]) / span : 0.5;
    }
    return out;
}

std::vector<double> MinMaxScaler::inverse_transform(const std::vector<double>& row) const {
    require_fitted(row.size());
    std::vector<double> out(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
        const double span = max_[c] - min_[c];
        out[c] = span > 0 ? min_[c] + row[c] * span : min_[c];
    }
    return out;
}

nlohmann::json MinMaxScaler::to_json() const {
    if (!fitted_) throw StateError("cannot serialize an unfitted scaler");
    return {{"min", min_}, {"max", max_}};
}

MinMaxScaler MinMaxScaler::from_json(const nlohmann::json& j) {
    MinMaxScaler s;
    s.min_ = j.at("min").get<std::vector<double>>();
    s.max_ = j.at("max").get<std::vector<double>>();
    if (s.min_.size() != s.max_.size()) throw ValidationError("scaler min/max lengths differ");
    for (std::size_t c = 0; c < s.min_.size(); ++c) {
        if (s.max_[c] < s.min_[c]) throw ValidationError("scaler column " + std::to_string(c) + " has max < min");
    }
    s.fitted_ = true;
    return s;
}

} // namespace duckmorph::imaging
