#pragma once

// Hyperparameter grid sweeps over the toy trainer.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icc/activation_store.hpp"
#include "icc/measures.hpp"
#include "icc/ranking.hpp"
#include "icc/toytrain.hpp"
#include "json.hpp"

namespace icc::sweep {

/// One table axis. A plain axis sets a single config key; a coupled axis sets
/// several keys together, each value being one entry per parameter.
struct Axis {
    std::string name;
    std::vector<std::string> params;     // config keys; {name} for a plain axis
    std::vector<nlohmann::json> values;  // per value: a scalar, or an array matching params
};

struct Grid {
    toytrain::SyntheticSpec data;
    toytrain::ToyConfig base;
    measures::MeasureConfig measure;
    std::vector<Axis> axes;
    bool curves = false;  // measures at every snapshot
};

/// Layout:
///   {"data": {...}, "base": {...}, "measure": {...},
///    "axes": [{"name": "lr", "values": [0.01, 0.1]},
///             {"name": "capacity", "params": ["depth", "width"], "values": [[2, 16], [3, 32]]}],
///    "curves": false}
/// Syntax problems are FormatErrors; an empty grid or an axis without values
/// is a ValidationError.
Grid grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Grid& grid);

struct GridPoint {
    std::string model_id;
    toytrain::ToyConfig config;
    std::map<std::string, std::string> labels;  // axis name -> value label
};

/// Cartesian product, first axis slowest; ids m000, m001, ...
std::vector<GridPoint> expand_grid(const Grid& grid);

struct ModelFailure {
    std::string model_id;
    std::string message;
};

struct CurvePoint {
    std::size_t epoch = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double train_loss = 0.0;
    std::optional<double> c1, c2, c3, c4;
};

struct SweepResult {
    ranking::SweepTable table;                     // successful models only, grid order
    std::vector<store::ActivationDataset> dumps;   // parallel to table.records
    std::vector<ModelFailure> failures;
    std::map<std::string, std::vector<CurvePoint>> curves;
};

/// Trains every grid point on one shared dataset, possibly in parallel.
/// Per-model failures are collected instead of aborting; the result does not
/// depend on the thread count.
SweepResult run_sweep(const Grid& grid, std::size_t threads);

/// Writes models/<id>/ dumps, sweep_table.csv, sweep_table.json,
/// sweep_summary.json and, when present, curves.json.
void write_sweep(const SweepResult& result, const std::filesystem::path& out_dir);

nlohmann::json curves_to_json(const std::map<std::string, std::vector<CurvePoint>>& curves);
std::map<std::string, std::vector<CurvePoint>> curves_from_json(const nlohmann::json& j);

}  // namespace icc::sweep
