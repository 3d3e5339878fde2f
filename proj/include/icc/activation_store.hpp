#pragma once

// Portable activation dumps: a directory holding manifest.json, labels.json and
// one raw little-endian float32 payload per captured layer.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icc/matrix.hpp"

namespace icc::store {

inline constexpr int kFormatVersion = 1;

enum class LayerKind { dense, conv };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

/// Class / subclass / superclass index structure of the captured samples.
///
/// When subclasses are present the classes are their superclasses: every
/// sample satisfies superclass_of_subclass[subclass_of[s]] == class_of[s].
struct LabelHierarchy {
    std::vector<int> class_of;
    std::optional<std::vector<int>> subclass_of;
    std::optional<std::vector<int>> superclass_of_subclass;
    int n_classes = 0;

    std::size_t n_samples() const noexcept { return class_of.size(); }
    bool has_subclasses() const noexcept { return subclass_of.has_value(); }
    int n_subclasses() const;

    // Sample indices per class / subclass, each list in ascending order.
    std::vector<std::vector<std::size_t>> class_members() const;
    std::vector<std::vector<std::size_t>> subclass_members() const;

    /// Throws ValidationError naming `source` and the offending array index.
    void validate(const std::string& source = "labels") const;

    friend bool operator==(const LabelHierarchy&, const LabelHierarchy&) = default;
};

/// Builds a hierarchy from per-sample class labels only.
LabelHierarchy flat_labels(std::vector<int> class_of, int n_classes = -1);

/// Builds a two-level hierarchy; class_of is derived from the subclass map.
LabelHierarchy hierarchical_labels(std::vector<int> subclass_of,
                                   std::vector<int> superclass_of_subclass);

struct LayerBlock {
    std::string name;
    int layer_index = 0;
    LayerKind kind = LayerKind::dense;
    Matrix preacts;  // n_samples x n_neurons, post-normalization, pre-ReLU
    std::size_t neuron_offset = 0;

    std::size_t n_neurons() const noexcept { return preacts.cols(); }

    friend bool operator==(const LayerBlock&, const LayerBlock&) = default;
};

struct Metrics {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct ActivationDataset {
    std::string model_id;
    std::vector<LayerBlock> layers;
    LabelHierarchy labels;
    std::optional<Metrics> metrics;
    std::map<std::string, std::string> hyperparams;

    std::size_t n_samples() const noexcept { return labels.n_samples(); }
    std::size_t n_layers() const noexcept { return layers.size(); }
    std::size_t n_neurons() const noexcept;

    /// Checks every container invariant; throws ValidationError.
    void validate() const;

    friend bool operator==(const ActivationDataset&, const ActivationDataset&) = default;
};

/// Assigns contiguous neuron offsets and validates.
ActivationDataset assemble(std::string model_id, std::vector<LayerBlock> layers, LabelHierarchy labels,
                           std::optional<Metrics> metrics = std::nullopt,
                           std::map<std::string, std::string> hyperparams = {});

/// Reduces an n x channels x spatial... tensor to n x channels by taking the
/// spatial maximum of every (sample, channel) cell.
template <typename T>
Matrix global_max_pool(std::span<const T> tensor, std::span<const std::size_t> shape);

/// Elementwise ReLU of the block's preactivations.
Matrix layer_activations(const LayerBlock& block);

ActivationDataset load_dump(const std::filesystem::path& dir);

/// Writes `ds` as dense float32 payloads with SHA-256 checksums in the manifest.
void write_dump(const ActivationDataset& ds, const std::filesystem::path& dir);

// Lower-level writer for producers that hold unpooled conv feature maps.
struct TensorEntry {
    std::string name;
    int layer_index = 0;
    LayerKind kind = LayerKind::dense;
    std::vector<std::size_t> shape;  // [n, neurons] or [n, channels, spatial...]
    std::vector<float> values;       // row-major, samples outermost
};

struct DumpContents {
    std::string model_id;
    std::size_t n_samples = 0;
    std::vector<TensorEntry> tensors;
    LabelHierarchy labels;
    std::optional<Metrics> metrics;
    std::map<std::string, std::string> hyperparams;
};

void write_raw_dump(const DumpContents& contents, const std::filesystem::path& dir,
                    bool with_checksums = true);

}  // namespace icc::store
