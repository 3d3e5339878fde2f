#include "icc/sweep.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <set>

#include "icc/error.hpp"
#include "icc/parallel.hpp"

namespace icc::sweep {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string value_label(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return ranking::format_number(v.get<double>());
    return v.dump();
}

std::string point_label(const Axis& axis, const json& value) {
    if (axis.params.size() == 1) return value_label(value);
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) out += "/";
        out += value_label(value[i]);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    f << text;
    if (!f) throw FormatError(path.string() + ": write failed");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

Grid grid_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("grid must be a JSON object");
    Grid g;
    for (const auto& [key, v] : j.items()) {
        if (key == "data") g.data = toytrain::synthetic_from_json(v);
        else if (key == "base") g.base = toytrain::config_from_json(v);
        else if (key == "measure") g.measure = measures::config_from_json(v);
        else if (key == "curves") {
            if (!v.is_boolean()) throw FormatError("grid: 'curves' must be a boolean");
            g.curves = v.get<bool>();
        } else if (key == "axes") {
            if (!v.is_array()) throw FormatError("grid: 'axes' must be an array");
            for (const auto& a : v) {
                if (!a.is_object() || !a.contains("name") || !a.at("name").is_string() || !a.contains("values") ||
                    !a.at("values").is_array())
                    throw FormatError("grid: every axis needs a string 'name' and a 'values' array");
                Axis axis;
                axis.name = a.at("name").get<std::string>();
                if (a.contains("params")) {
                    if (!a.at("params").is_array()) throw FormatError("grid: axis '" + axis.name + "': 'params' must be an array");
                    for (const auto& p : a.at("params")) {
                        if (!p.is_string()) throw FormatError("grid: axis '" + axis.name + "': params must be strings");
                        axis.params.push_back(p.get<std::string>());
                    }
                } else {
                    axis.params = {axis.name};
                }
                for (const auto& val : a.at("values")) {
                    if (axis.params.size() > 1 && (!val.is_array() || val.size() != axis.params.size()))
                        throw FormatError("grid: axis '" + axis.name + "': each value must list one entry per param");
                    axis.values.push_back(val);
                }
                for (const auto& [k, _] : a.items())
                    if (k != "name" && k != "params" && k != "values")
                        throw FormatError("grid: axis '" + axis.name + "': unknown key '" + k + "'");
                g.axes.push_back(std::move(axis));
            }
        } else {
            throw FormatError("grid: unknown key '" + key + "'");
        }
    }
    if (g.axes.empty()) throw ValidationError("grid: no axes (empty grid)");
    std::set<std::string> names;
    for (const auto& axis : g.axes) {
        if (!names.insert(axis.name).second) throw ValidationError("grid: duplicate axis '" + axis.name + "'");
        std::set<std::string> labels;
        for (const auto& v : axis.values) labels.insert(point_label(axis, v));
        if (labels.size() < 2) throw ValidationError("grid: axis '" + axis.name + "' needs at least 2 distinct values");
    }
    g.data.validate();
    g.base.validate();
    g.measure.validate();
    return g;
}

json to_json(const Grid& g) {
    json axes = json::array();
    for (const auto& a : g.axes) {
        json ja = {{"name", a.name}, {"values", a.values}};
        if (a.params.size() != 1 || a.params[0] != a.name) ja["params"] = a.params;
        axes.push_back(std::move(ja));
    }
    return {{"data", toytrain::to_json(g.data)},
            {"base", toytrain::to_json(g.base)},
            {"measure", measures::to_json(g.measure)},
            {"axes", axes},
            {"curves", g.curves}};
}

std::vector<GridPoint> expand_grid(const Grid& grid) {
    std::size_t total = 1;
    for (const auto& a : grid.axes) total *= a.values.size();
    std::vector<GridPoint> points;
    points.reserve(total);
    const int digits = total > 1000 ? static_cast<int>(std::to_string(total - 1).size()) : 3;
    for (std::size_t i = 0; i < total; ++i) {
        GridPoint p;
        char id[32];
        std::snprintf(id, sizeof id, "m%0*zu", digits, i);
        p.model_id = id;
        json patch = json::object();
        std::size_t rest = i;
        std::vector<std::size_t> choice(grid.axes.size());
        for (std::size_t a = grid.axes.size(); a-- > 0;) {
            choice[a] = rest % grid.axes[a].values.size();
            rest /= grid.axes[a].values.size();
        }
        for (std::size_t a = 0; a < grid.axes.size(); ++a) {
            const auto& axis = grid.axes[a];
            const auto& v = axis.values[choice[a]];
            if (axis.params.size() == 1) {
                patch[axis.params[0]] = v;
            } else {
                for (std::size_t k = 0; k < axis.params.size(); ++k) patch[axis.params[k]] = v[k];
            }
            p.labels[axis.name] = point_label(axis, v);
        }
        p.config = toytrain::config_from_json(patch, grid.base);
        try {
            p.config.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(p.model_id + ": " + e.what());
        }
        points.push_back(std::move(p));
    }
    return points;
}

namespace {

struct ModelOutcome {
    std::optional<ranking::ModelRecord> record;
    std::optional<store::ActivationDataset> dump;
    std::vector<CurvePoint> curve;
    std::string error;
};

void fill(const measures::MeasureResult& r, std::map<std::string, double>& out) {
    if (r.c1) out["c1"] = *r.c1;
    if (r.c2) out["c2"] = *r.c2;
    if (r.c3) out["c3"] = *r.c3;
    if (r.c4) out["c4"] = *r.c4;
}

}  // namespace

SweepResult run_sweep(const Grid& grid, std::size_t threads) {
    const auto points = expand_grid(grid);
    const auto data = toytrain::gen_synthetic(grid.data);
    std::vector<ModelOutcome> outcomes(points.size());

    parallel_for(points.size(), threads, [&](std::size_t i) {
        const auto& p = points[i];
        auto& out = outcomes[i];
        try {
            const auto model = toytrain::train(p.config, data, grid.curves);
            auto ds = toytrain::dump_activations(model, data, std::nullopt, p.model_id);
            ranking::ModelRecord rec;
            rec.model_id = p.model_id;
            rec.hyperparams = p.labels;
            rec.train_accuracy = model.train_accuracy;
            rec.test_accuracy = model.test_accuracy;
            fill(measures::compute_measures(ds, grid.measure), rec.measures);
            if (grid.curves) {
                for (const auto& s : model.snapshots) {
                    const auto snap = toytrain::dump_activations(model, data, s.epoch, p.model_id);
                    const auto r = measures::compute_measures(snap, grid.measure);
                    out.curve.push_back({s.epoch, s.train_accuracy, s.test_accuracy, s.train_loss, r.c1, r.c2, r.c3, r.c4});
                }
            }
            out.record = std::move(rec);
            out.dump = std::move(ds);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });

    SweepResult result;
    for (const auto& a : grid.axes) result.table.axes.push_back(a.name);
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto& o = outcomes[i];
        if (!o.record) {
            result.failures.push_back({points[i].model_id, o.error});
            continue;
        }
        result.table.records.push_back(std::move(*o.record));
        result.dumps.push_back(std::move(*o.dump));
        if (grid.curves) result.curves[points[i].model_id] = std::move(o.curve);
    }
    return result;
}

json curves_to_json(const std::map<std::string, std::vector<CurvePoint>>& curves) {
    json j = json::object();
    for (const auto& [id, pts] : curves) {
        json arr = json::array();
        for (const auto& p : pts)
            arr.push_back({{"epoch", p.epoch},
                           {"train_accuracy", p.train_accuracy},
                           {"test_accuracy", p.test_accuracy},
                           {"train_loss", p.train_loss},
                           {"c1", optional_json(p.c1)},
                           {"c2", optional_json(p.c2)},
                           {"c3", optional_json(p.c3)},
                           {"c4", optional_json(p.c4)}});
        j[id] = std::move(arr);
    }
    return j;
}

std::map<std::string, std::vector<CurvePoint>> curves_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("curves: expected an object keyed by model id");
    std::map<std::string, std::vector<CurvePoint>> out;
    try {
        for (const auto& [id, arr] : j.items()) {
            auto& pts = out[id];
            for (const auto& e : arr) {
                CurvePoint p;
                p.epoch = e.at("epoch").get<std::size_t>();
                p.train_accuracy = e.at("train_accuracy").get<double>();
                p.test_accuracy = e.at("test_accuracy").get<double>();
                p.train_loss = e.value("train_loss", 0.0);
                p.c1 = optional_from(e, "c1");
                p.c2 = optional_from(e, "c2");
                p.c3 = optional_from(e, "c3");
                p.c4 = optional_from(e, "c4");
                pts.push_back(p);
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("curves: ") + e.what());
    }
    return out;
}

void write_sweep(const SweepResult& result, const fs::path& out_dir) {
    fs::create_directories(out_dir / "models");
    for (const auto& ds : result.dumps) write_dump(ds, out_dir / "models" / ds.model_id);
    if (!result.table.records.empty()) {
        write_text(out_dir / "sweep_table.csv", ranking::to_csv(result.table));
        write_text(out_dir / "sweep_table.json", ranking::to_json(result.table).dump(2) + "\n");
    }
    json failures = json::array();
    for (const auto& f : result.failures) failures.push_back({{"model_id", f.model_id}, {"error", f.message}});
    const json summary = {{"models_ok", result.table.records.size()},
                          {"models_failed", result.failures.size()},
                          {"failures", failures}};
    write_text(out_dir / "sweep_summary.json", summary.dump(2) + "\n");
    if (!result.curves.empty()) write_text(out_dir / "curves.json", curves_to_json(result.curves).dump(2) + "\n");
}

}  // namespace icc::sweep
