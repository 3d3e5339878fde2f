#pragma once

// Static, byte-deterministic SVG charts.

#include <string>
#include <utility>
#include <vector>

#include "icc/ranking.hpp"
#include "icc/sweep.hpp"
#include "json.hpp"

namespace icc::plot {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
    bool polyline = false;  // false: one circle per point
};

struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

/// Throws ValidationError when the chart has no points.
std::string render_svg(const Chart& chart);

/// One point per model: measure value against test accuracy.
Chart scatter_chart(const ranking::SweepTable& table, const std::string& measure);

/// Input: the JSON written by `icc ksweep` ({"measures": {"c1": [{"k", "total_score"}, ...]}}).
Chart k_sweep_chart(const nlohmann::json& report);

/// Input: a measure report carrying "per_layer"; one polyline per measure.
Chart layer_profile_chart(const nlohmann::json& report);

/// One polyline per model of `measure` (or "test_accuracy"/"train_accuracy") over epochs.
Chart training_curve_chart(const std::map<std::string, std::vector<sweep::CurvePoint>>& curves,
                           const std::string& measure);

}  // namespace icc::plot
