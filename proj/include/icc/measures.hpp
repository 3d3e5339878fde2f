#pragma once

// Intraclass clustering measures.
//
//   c1  median over subclasses of the top-k neuron selectivity for the subclass
//       against the rest of its superclass (preactivations).
//   c2  median over subclasses of the top-k layer silhouette of the subclass
//       inside its superclass (post-ReLU activations, cosine distance).
//   c3  mean over classes of the top-k ratio of within-class to dataset
//       neuron standard deviation (preactivations).
//   c4  mean over classes of the top-k ratio of within-class to dataset
//       spread of pairwise cosine distances (standardized preactivations).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icc/activation_store.hpp"
#include "icc/matrix.hpp"
#include "json.hpp"

namespace icc::measures {

struct MeasureConfig {
    std::size_t k_neuron = 30;          // top-k over neurons (c1, c3)
    std::size_t k_layer = 1;            // top-k over layers (c2, c4)
    std::size_t k_profile_neuron = 5;   // top-k within a layer for per-layer profiles
    double activation_fraction = 0.25;  // share of samples left active by c4 standardization
    std::size_t distance_cap = 256;     // max points per pairwise-distance set
    std::uint64_t seed = 0;
    double epsilon = 1e-12;             // added to every std denominator

    void validate() const;  // throws ValidationError
};

nlohmann::json to_json(const MeasureConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a FormatError.
MeasureConfig config_from_json(const nlohmann::json& j);

struct TopK {
    double value = 0.0;
    bool clamped = false;  // k exceeded the number of values
};

/// Mean of the k largest values; k is clamped to values.size().
TopK top_k_mean(std::span<const double> values, std::size_t k);

struct Ratio {
    double value = 0.0;
    bool degenerate = false;  // zero denominator before the epsilon guard
};

/// (mean_sub - mean_rest) / (std_sub + std_rest + eps), population stds.
Ratio neuron_subclass_selectivity(std::span<const double> subclass_values, std::span<const double> complement_values,
                                  double epsilon);

/// std_class / (std_all + eps).
Ratio neuron_variance_ratio(std::span<const double> class_values, std::span<const double> all_values, double epsilon);

struct StandardizedLayer {
    Matrix values;                  // ReLU(z + b), n_samples x n_neurons
    std::vector<bool> degenerate;   // neuron had zero dataset std; column left at 0
};

/// Per neuron: z-score over all samples, then a bias placing the
/// (1 - activation_fraction) nearest-rank quantile at zero, then ReLU.
StandardizedLayer standardize_neurons(const Matrix& preacts, double activation_fraction);

/// Bookkeeping attached to each measure value.
struct Diagnostics {
    std::size_t groups_used = 0;        // classes or subclasses aggregated
    std::size_t groups_skipped = 0;
    std::size_t degenerate_ratios = 0;  // zero-denominator ratios hit the epsilon guard
    bool k_clamped = false;
    bool unreliable = false;            // more than 20% of groups skipped
    std::vector<std::string> warnings;
};

struct MeasureValue {
    double value = 0.0;
    Diagnostics diagnostics;
};

MeasureValue compute_c1(const store::ActivationDataset& ds, const MeasureConfig& cfg);
MeasureValue compute_c2(const store::ActivationDataset& ds, const MeasureConfig& cfg);
MeasureValue compute_c3(const store::ActivationDataset& ds, const MeasureConfig& cfg);
MeasureValue compute_c4(const store::ActivationDataset& ds, const MeasureConfig& cfg);

struct LayerProfile {
    int layer_index = 0;
    std::string name;
    std::optional<double> c1, c2, c3, c4;
};

/// Every measure restricted to one layer at a time. Neuron-level measures use
/// k = k_profile_neuron (clamped to the layer width); layer-level ones k = 1.
std::vector<LayerProfile> per_layer_profile(const store::ActivationDataset& ds, const MeasureConfig& cfg,
                                            Diagnostics* diagnostics = nullptr);

struct SubclassSelectivity {
    int subclass = 0;
    double selectivity = 0.0;
    std::size_t neuron = 0;  // global neuron index; lowest index wins ties
};

std::vector<SubclassSelectivity> selectivity_distribution(const store::ActivationDataset& ds,
                                                          const MeasureConfig& cfg,
                                                          Diagnostics* diagnostics = nullptr);

struct MeasureSelection {
    bool c1 = true, c2 = true, c3 = true, c4 = true;
    bool per_layer = false;
    bool selectivity = false;
};

struct MeasureResult {
    std::string model_id;
    std::optional<double> c1, c2, c3, c4;
    Diagnostics d1, d2, d3, d4;
    std::optional<std::vector<LayerProfile>> per_layer;
    std::optional<std::vector<SubclassSelectivity>> per_subclass_selectivity;
    std::vector<std::string> warnings;
};

/// Computes the selected measures. c1/c2 are silently dropped when the dataset
/// has no subclass labels; callers that asked for them explicitly should check
/// has_subclasses() first.
MeasureResult compute_measures(const store::ActivationDataset& ds, const MeasureConfig& cfg,
                               const MeasureSelection& selection = {});

nlohmann::json to_json(const MeasureResult& result, const MeasureConfig& cfg);

}  // namespace icc::measures
