#pragma once

// Desk-scale measurement subjects: hierarchical Gaussian-cluster data and a
// small batch-normalized ReLU MLP trained with mini-batch gradient descent.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icc/activation_store.hpp"
#include "icc/matrix.hpp"
#include "json.hpp"

namespace icc::toytrain {

enum class LabelMode { superclass_as_class, subclass_as_class };

struct SyntheticSpec {
    std::size_t n_superclasses = 2;
    std::size_t subclasses_per_superclass = 2;
    std::size_t samples_per_subclass = 10;       // training samples
    std::size_t test_samples_per_subclass = 10;
    std::size_t input_dim = 8;                   // dimensions carrying the cluster structure
    std::size_t noise_dims = 0;                  // extra label-independent dimensions
    double cluster_spread = 0.5;                 // within-subclass std
    double subclass_separation = 2.0;            // subclass-center distance scale within a superclass
    double superclass_separation = 4.0;          // superclass-center distance scale
    double noise_std = 1.0;
    LabelMode label_mode = LabelMode::superclass_as_class;
    std::uint64_t seed = 0;

    std::size_t total_dim() const noexcept { return input_dim + noise_dims; }
    std::size_t n_subclasses() const noexcept { return n_superclasses * subclasses_per_superclass; }
    void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_from_json(const nlohmann::json& j);

struct Split {
    Matrix inputs;                    // n x total_dim
    std::vector<int> targets;         // training label per sample
    store::LabelHierarchy hierarchy;  // samples ordered by subclass
};

struct SyntheticData {
    Split train;
    Split test;
    std::size_t n_outputs = 0;
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

enum class Optimizer { plain, momentum };

const char* to_string(Optimizer o);

struct ToyConfig {
    std::size_t depth = 2;  // hidden layers
    std::size_t width = 32;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    double weight_decay = 0.0;
    double dropout_rate = 0.0;
    bool augment = false;          // additive input jitter
    double augment_noise = 0.1;
    Optimizer optimizer = Optimizer::momentum;
    double momentum = 0.9;
    std::size_t epochs = 50;
    std::vector<std::size_t> lr_drop_epochs;  // lr *= lr_drop_factor once this many epochs are done
    double lr_drop_factor = 0.2;
    std::size_t snapshot_every = 0;            // 0: every 10% of epochs
    double early_stop_loss = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const ToyConfig& cfg);
/// Applies the keys of `j` on top of `base`; unknown keys are a FormatError.
ToyConfig config_from_json(const nlohmann::json& j, ToyConfig base = {});
std::map<std::string, std::string> hyperparam_labels(const ToyConfig& cfg);

struct HiddenLayer {
    Matrix weight;  // width x fan_in
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;  // inference-mode normalization
};

struct Network {
    std::vector<HiddenLayer> hidden;
    Matrix out_weight;  // n_outputs x width
    std::vector<double> out_bias;
};

inline constexpr double kNormEpsilon = 1e-5;

Network init_network(const ToyConfig& cfg, std::size_t input_dim, std::size_t n_outputs, std::uint64_t seed);

/// Every trainable parameter, in a fixed order; used by optimizers and gradient checks.
std::vector<double*> parameters(Network& net);
std::vector<const double*> parameters(const Network& net);

/// Mean softmax cross-entropy in training mode (batch statistics) plus
/// 0.5 * weight_decay * ||W||^2 over weight matrices. Fills `grad` (same shape
/// as `net`) when non-null. `dropout_masks`, when given, holds one scaled mask
/// per hidden layer (batch x width).
double loss_and_gradients(const Network& net, const Matrix& x, std::span<const int> y, double weight_decay,
                          Network* grad, const std::vector<Matrix>* dropout_masks = nullptr);

/// Post-normalization, pre-ReLU values of every hidden layer in inference mode.
std::vector<Matrix> hidden_preacts(const Network& net, const Matrix& x);
Matrix logits(const Network& net, const Matrix& x);
double accuracy(const Network& net, const Split& split);

/// Sets every layer's running statistics to the exact population statistics
/// of `x` propagated layer by layer in inference mode.
void recalibrate(Network& net, const Matrix& x);

struct Snapshot {
    std::size_t epoch = 0;
    Network net;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double train_loss = 0.0;
};

struct TrainedModel {
    ToyConfig config;
    Network net;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double final_loss = 0.0;
    std::size_t epochs_run = 0;
    bool early_stopped = false;
    std::vector<Snapshot> snapshots;
};

/// Throws ComputationError naming the epoch when the loss becomes non-finite.
TrainedModel train(const ToyConfig& cfg, const SyntheticData& data, bool keep_snapshots = true);

/// Captures every hidden layer over the training set, rounded to float32 so the
/// in-memory dataset equals its on-disk form.
store::ActivationDataset dump_activations(const TrainedModel& model, const SyntheticData& data,
                                          std::optional<std::size_t> at_epoch, const std::string& model_id);

}  // namespace icc::toytrain
