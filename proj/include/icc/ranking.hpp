#pragma once

// Kendall rank correlation and the granulated protocol over hyperparameter axes.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icc/activation_store.hpp"
#include "icc/measures.hpp"
#include "json.hpp"

namespace icc::ranking {

/// Tie-corrected Kendall tau-b, computed in O(n log n) (Knight's merge-sort
/// count). Returns nullopt when either variable is constant.
/// Throws ValidationError on length mismatch or fewer than 2 points.
std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y);

struct ModelRecord {
    std::string model_id;
    std::map<std::string, std::string> hyperparams;  // axis name -> value label
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::map<std::string, double> measures;

    friend bool operator==(const ModelRecord&, const ModelRecord&) = default;
};

struct SweepTable {
    std::vector<std::string> axes;  // coupled hyperparameters form one composite axis
    std::vector<ModelRecord> records;

    /// Measure names in first-seen column order.
    std::vector<std::string> measure_names() const;
    void validate() const;  // throws ValidationError

    friend bool operator==(const SweepTable&, const SweepTable&) = default;
};

enum class Target { test_accuracy, train_accuracy };

struct AxisScore {
    std::string axis;
    std::optional<double> tau;        // mean over valid groups; nullopt when none
    std::size_t valid_groups = 0;
    std::size_t undefined_groups = 0;  // tau undefined (constant measure or target)
};

struct KendallReport {
    std::string measure;
    std::vector<AxisScore> per_axis;   // in table axis order
    double total_score = 0.0;          // mean over axes that have a valid group
};

/// For each axis, records are grouped by identical values on every other axis;
/// tau(measure, target) is averaged over groups of size >= 2 in which the axis
/// takes >= 2 distinct values. Throws ComputationError when no axis has a
/// valid group.
KendallReport granulated_kendall(const SweepTable& table, const std::string& measure,
                                 Target target = Target::test_accuracy);

// CSV layout: model_id, <axes...>, train_accuracy, test_accuracy, <measures...>
std::string to_csv(const SweepTable& table);
SweepTable table_from_csv(std::string_view text);

nlohmann::json to_json(const SweepTable& table);
SweepTable table_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KendallReport& report);

/// Score matrix: one row per measure, one column per axis plus total.
std::string kendall_matrix_csv(std::span<const KendallReport> reports);

enum class NeuronMeasure { c1, c3 };

struct KSweepPoint {
    std::size_t k = 0;
    std::optional<double> total_score;  // nullopt when every group was undefined
    bool k_clamped = false;
    std::string note;
};

/// Recomputes c1 or c3 for every model at each k and ranks with
/// granulated_kendall. `dumps` is matched to records by model_id.
std::vector<KSweepPoint> k_sensitivity_sweep(std::span<const store::ActivationDataset> dumps, SweepTable table,
                                             std::span<const std::size_t> ks, NeuronMeasure measure,
                                             const measures::MeasureConfig& base);

std::string format_number(double v);  // shortest round-trip decimal

}  // namespace icc::ranking
