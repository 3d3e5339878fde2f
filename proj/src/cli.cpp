#include "icc/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "icc/activation_store.hpp"
#include "icc/error.hpp"
#include "icc/measures.hpp"
#include "icc/numeric.hpp"
#include "icc/parallel.hpp"
#include "icc/plot.hpp"
#include "icc/ranking.hpp"
#include "icc/run_manifest.hpp"
#include "icc/sweep.hpp"

namespace icc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    const auto text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string(), e.byte, std::string("malformed JSON: ") + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    f << text;
}

RunManifest manifest_for(const std::string& command, const std::vector<std::string>& args) {
    RunManifest m;
    m.command = command;
    for (const auto& a : args) m.command += " " + a;
    m.timestamp = utc_timestamp();
    return m;
}

ranking::SweepTable load_table(const fs::path& path) {
    if (fs::is_directory(path)) return load_table(path / "sweep_table.csv");
    if (path.extension() == ".json") return ranking::table_from_json(read_json(path));
    return ranking::table_from_csv(read_text(path));
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty()) out.push_back(part);
    }
    return out;
}

struct MeasureFlags {
    std::string config_path;
    std::optional<std::size_t> k_neuron, k_layer, distance_cap;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_path, "MeasureConfig JSON file");
        app->add_option("--k-neuron", k_neuron, "top-k over neurons (c1, c3)");
        app->add_option("--k-layer", k_layer, "top-k over layers (c2, c4)");
        app->add_option("--distance-cap", distance_cap, "max points per pairwise-distance set");
        app->add_option("--seed", seed, "subsampling seed");
    }

    measures::MeasureConfig resolve() const {
        measures::MeasureConfig cfg;
        if (!config_path.empty()) cfg = measures::config_from_json(read_json(config_path));
        if (k_neuron) cfg.k_neuron = *k_neuron;
        if (k_layer) cfg.k_layer = *k_layer;
        if (distance_cap) cfg.distance_cap = *distance_cap;
        if (seed) cfg.seed = *seed;
        cfg.validate();
        return cfg;
    }
};

void check_measure_names(const std::vector<std::string>& names, const std::vector<std::string>& allowed,
                         const std::string& flag) {
    for (const auto& n : names)
        if (std::find(allowed.begin(), allowed.end(), n) == allowed.end())
            throw ValidationError(flag + ": unknown measure '" + n + "'");
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& dump_path, std::ostream& out) {
    const auto ds = store::load_dump(dump_path);
    const auto& lab = ds.labels;
    out << "model_id:   " << ds.model_id << "\n";
    out << "samples I:  " << ds.n_samples() << "\n";
    out << "layers L:   " << ds.n_layers() << "\n";
    out << "neurons N:  " << ds.n_neurons() << "\n";
    out << "classes:    " << lab.n_classes << "\n";
    out << "subclasses: " << (lab.has_subclasses() ? std::to_string(lab.n_subclasses()) : std::string("none")) << "\n";
    if (ds.metrics) {
        out << "train_accuracy: " << ranking::format_number(ds.metrics->train_accuracy) << "\n";
        out << "test_accuracy:  " << ranking::format_number(ds.metrics->test_accuracy) << "\n";
    }
    out << "\n  index  name                 kind   neurons  offset\n";
    for (const auto& l : ds.layers) {
        char line[160];
        std::snprintf(line, sizeof line, "  %5d  %-20s %-6s %7zu  %6zu\n", l.layer_index, l.name.c_str(),
                      store::to_string(l.kind), l.n_neurons(), l.neuron_offset);
        out << line;
    }
    const auto classes = lab.class_members();
    out << "\nsamples per class:";
    for (const auto& c : classes) out << " " << c.size();
    out << "\n";
    if (lab.has_subclasses()) {
        out << "samples per subclass:";
        for (const auto& s : lab.subclass_members()) out << " " << s.size();
        out << "\n";
    }
    if (!ds.hyperparams.empty()) {
        out << "\nhyperparams:\n";
        for (const auto& [k, v] : ds.hyperparams) out << "  " << k << " = " << v << "\n";
    }
    return 0;
}

int cmd_measure(const std::string& dump_path, const MeasureFlags& flags, const std::vector<std::string>& measure_list,
                bool per_layer, bool selectivity, const std::string& out_dir, const std::vector<std::string>& argv,
                std::ostream& out) {
    const auto cfg = flags.resolve();
    const auto ds = store::load_dump(dump_path);
    measures::MeasureSelection sel;
    sel.per_layer = per_layer;
    sel.selectivity = selectivity;
    const auto names = split_list(measure_list);
    if (!names.empty()) {
        check_measure_names(names, {"c1", "c2", "c3", "c4"}, "--measures");
        auto has = [&](const char* m) { return std::find(names.begin(), names.end(), m) != names.end(); };
        sel.c1 = has("c1");
        sel.c2 = has("c2");
        sel.c3 = has("c3");
        sel.c4 = has("c4");
        if ((sel.c1 || sel.c2) && !ds.labels.has_subclasses())
            throw ValidationError(
                "c1/c2 need subclass labels but this dump has none; remove c1 and c2 from --measures");
    }
    if (selectivity && !ds.labels.has_subclasses())
        throw ValidationError("--selectivity-distribution needs subclass labels but this dump has none");
    const auto result = measures::compute_measures(ds, cfg, sel);
    const auto report = measures::to_json(result, cfg);
    if (out_dir.empty()) {
        out << report.dump(2) << "\n";
        return 0;
    }
    write_text(fs::path(out_dir) / "measures.json", report.dump(2) + "\n");
    auto m = manifest_for("measure", argv);
    m.config = measures::to_json(cfg);
    m.seeds = {{"measure_seed", cfg.seed}};
    m.input_hashes[dump_path] = hash_input(dump_path);
    write_run_manifest(m, out_dir);
    out << "wrote " << (fs::path(out_dir) / "measures.json").string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& grid_path, const std::string& out_dir, const std::vector<std::string>& argv,
              std::ostream& out, std::ostream& err) {
    const auto grid = sweep::grid_from_json(read_json(grid_path));
    const std::size_t threads = thread_count_from_env();
    const auto result = sweep::run_sweep(grid, threads);
    sweep::write_sweep(result, out_dir);
    auto m = manifest_for("sweep", argv);
    m.config = sweep::to_json(grid);
    m.seeds = {{"data_seed", grid.data.seed}, {"train_seed", grid.base.seed}, {"measure_seed", grid.measure.seed}};
    m.input_hashes[grid_path] = hash_input(grid_path);
    write_run_manifest(m, out_dir);
    out << "trained " << result.table.records.size() << " models, " << result.failures.size() << " failed\n";
    for (const auto& f : result.failures) err << "model " << f.model_id << " failed: " << f.message << "\n";
    if (!result.failures.empty()) return ComputationError("").exit_code();
    return 0;
}

int cmd_rank(const std::string& table_path, const std::vector<std::string>& measure_list,
             const std::vector<std::string>& axis_list, const std::string& target_name, const std::string& out_dir,
             const std::vector<std::string>& argv, std::ostream& out) {
    const auto table = load_table(table_path);
    table.validate();
    auto names = split_list(measure_list);
    if (names.empty()) names = table.measure_names();
    check_measure_names(names, table.measure_names(), "--measures");
    const auto axes = split_list(axis_list);
    for (const auto& a : axes)
        if (std::find(table.axes.begin(), table.axes.end(), a) == table.axes.end())
            throw ValidationError("--axes: table has no axis '" + a + "'");
    ranking::Target target;
    if (target_name == "test_accuracy") target = ranking::Target::test_accuracy;
    else if (target_name == "train_accuracy") target = ranking::Target::train_accuracy;
    else throw ValidationError("--target must be test_accuracy or train_accuracy");

    std::vector<ranking::KendallReport> reports;
    for (const auto& name : names) {
        auto r = ranking::granulated_kendall(table, name, target);
        if (!axes.empty()) {
            std::vector<ranking::AxisScore> kept;
            ExactSum total;
            std::size_t scored = 0;
            for (const auto& s : r.per_axis) {
                if (std::find(axes.begin(), axes.end(), s.axis) == axes.end()) continue;
                if (s.tau) {
                    total.add(*s.tau);
                    ++scored;
                }
                kept.push_back(s);
            }
            if (scored == 0)
                throw ComputationError("measure '" + name + "': no valid group on the selected axes");
            r.per_axis = std::move(kept);
            r.total_score = total.value() / static_cast<double>(scored);
        }
        reports.push_back(std::move(r));
    }
    json j = json::array();
    for (const auto& r : reports) j.push_back(ranking::to_json(r));
    const fs::path dir(out_dir);
    write_text(dir / "kendall.json", j.dump(2) + "\n");
    write_text(dir / "kendall_table.csv", ranking::kendall_matrix_csv(reports));
    auto m = manifest_for("rank", argv);
    m.config = {{"measures", names}, {"axes", axes.empty() ? table.axes : axes}, {"target", target_name}};
    m.input_hashes[table_path] = hash_input(table_path);
    write_run_manifest(m, out_dir);
    out << ranking::kendall_matrix_csv(reports);
    return 0;
}

int cmd_ksweep(const std::string& sweep_dir, const std::vector<std::size_t>& ks, const std::vector<std::string>& measure_list,
               const MeasureFlags& flags, const std::string& out_dir, const std::vector<std::string>& argv,
               std::ostream& out) {
    const auto cfg = flags.resolve();
    auto names = split_list(measure_list);
    if (names.empty()) names = {"c1", "c3"};
    check_measure_names(names, {"c1", "c3"}, "--measures");
    if (ks.empty()) throw ValidationError("--ks: no k values");
    if (std::find(ks.begin(), ks.end(), std::size_t{0}) != ks.end()) throw ValidationError("--ks: k must be >= 1");
    const fs::path dir(sweep_dir);
    const auto table = load_table(dir / "sweep_table.csv");
    std::vector<store::ActivationDataset> dumps;
    for (const auto& r : table.records) dumps.push_back(store::load_dump(dir / "models" / r.model_id));
    json measures_json = json::object();
    for (const auto& name : names) {
        if (name == "c1" && !dumps.empty() && !dumps.front().labels.has_subclasses())
            throw ValidationError("c1 needs subclass labels but the sweep dumps have none; use --measures c3");
        const auto points = ranking::k_sensitivity_sweep(
            dumps, table, ks, name == "c1" ? ranking::NeuronMeasure::c1 : ranking::NeuronMeasure::c3, cfg);
        json arr = json::array();
        for (const auto& p : points) {
            arr.push_back({{"k", p.k},
                           {"total_score", p.total_score ? json(*p.total_score) : json(nullptr)},
                           {"k_clamped", p.k_clamped},
                           {"note", p.note}});
            out << name << " k=" << p.k << " total="
                << (p.total_score ? ranking::format_number(*p.total_score) : std::string("NA")) << "\n";
        }
        measures_json[name] = std::move(arr);
    }
    const json report = {{"ks", ks}, {"measures", measures_json}, {"config", measures::to_json(cfg)}};
    write_text(fs::path(out_dir) / "ksweep.json", report.dump(2) + "\n");
    auto m = manifest_for("ksweep", argv);
    m.config = report.at("config");
    m.seeds = {{"measure_seed", cfg.seed}};
    m.input_hashes[sweep_dir] = hash_input(sweep_dir);
    write_run_manifest(m, out_dir);
    return 0;
}

int cmd_plot(const std::string& input, const std::string& kind, const std::string& measure, const std::string& out_path,
             const std::vector<std::string>& argv, std::ostream& out) {
    plot::Chart chart;
    if (kind == "scatter") {
        const fs::path p(input);
        if (p.extension() != ".csv" && p.extension() != ".json" && !fs::is_directory(p))
            throw FormatError(input + ": scatter plots need a sweep table (.csv or .json)");
        ranking::SweepTable table;
        try {
            table = load_table(p);
        } catch (const json::exception& e) {
            throw FormatError(input + ": not a sweep table: " + e.what());
        }
        if (table.records.empty()) throw ValidationError(input + ": table has no records");
        chart = plot::scatter_chart(table, measure.empty() ? "c3" : measure);
    } else if (kind == "k-sweep") {
        chart = plot::k_sweep_chart(read_json(input));
    } else if (kind == "layer-profile") {
        chart = plot::layer_profile_chart(read_json(input));
    } else if (kind == "training-curve") {
        const fs::path p = fs::is_directory(input) ? fs::path(input) / "curves.json" : fs::path(input);
        chart = plot::training_curve_chart(sweep::curves_from_json(read_json(p)),
                                           measure.empty() ? "test_accuracy" : measure);
    } else {
        throw ValidationError("--kind must be one of scatter, k-sweep, layer-profile, training-curve");
    }
    const auto svg = plot::render_svg(chart);
    write_text(out_path, svg);
    const fs::path parent = fs::path(out_path).has_parent_path() ? fs::path(out_path).parent_path() : fs::path(".");
    auto m = manifest_for("plot", argv);
    m.config = {{"kind", kind}, {"measure", measure}};
    m.input_hashes[input] = hash_input(input);
    write_run_manifest(m, parent);
    out << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    const std::vector<std::string> argv = args;
    CLI::App app{"icc: intraclass clustering measures for trained networks"};
    app.name("icc");
    app.require_subcommand(1);

    std::string dump_path, out_dir, grid_path, table_path, sweep_dir, input, kind, measure, target = "test_accuracy";
    std::vector<std::string> measure_list, axis_list;
    std::vector<std::size_t> ks;
    bool per_layer = false, selectivity = false;
    MeasureFlags mflags, kflags;

    auto* inspect = app.add_subcommand("inspect", "validate a dump and print a summary");
    inspect->add_option("dump", dump_path, "dump directory")->required();

    auto* measure_cmd = app.add_subcommand("measure", "compute c1-c4 on a dump");
    measure_cmd->add_option("dump", dump_path, "dump directory")->required();
    mflags.add_to(measure_cmd);
    measure_cmd->add_option("--measures", measure_list, "comma-separated subset of c1,c2,c3,c4")->delimiter(',');
    measure_cmd->add_flag("--per-layer", per_layer, "add the per-layer profile");
    measure_cmd->add_flag("--selectivity-distribution", selectivity, "add the per-subclass selectivity listing");
    measure_cmd->add_option("--out", out_dir, "output directory (default: print to stdout)");

    auto* sweep_cmd = app.add_subcommand("sweep", "train a toy hyperparameter grid");
    sweep_cmd->add_option("grid", grid_path, "grid JSON")->required();
    sweep_cmd->add_option("out_dir", out_dir, "output directory")->required();

    auto* rank = app.add_subcommand("rank", "granulated Kendall scores of measures against accuracy");
    rank->add_option("table", table_path, "sweep table (.csv or .json)")->required();
    rank->add_option("--measures", measure_list, "measure columns (default: all)")->delimiter(',');
    rank->add_option("--axes", axis_list, "axes to score (default: all)")->delimiter(',');
    rank->add_option("--target", target, "test_accuracy or train_accuracy");
    rank->add_option("--out", out_dir, "output directory")->required();

    auto* ksweep = app.add_subcommand("ksweep", "Kendall total score of c1/c3 as a function of k");
    ksweep->add_option("sweep_dir", sweep_dir, "directory written by `icc sweep`")->required();
    ksweep->add_option("--ks", ks, "comma-separated k values")->delimiter(',')->required();
    ksweep->add_option("--measures", measure_list, "c1 and/or c3")->delimiter(',');
    kflags.add_to(ksweep);
    ksweep->add_option("--out", out_dir, "output directory")->required();

    auto* plot_cmd = app.add_subcommand("plot", "render an SVG chart");
    plot_cmd->add_option("input", input, "table, ksweep.json, measure report or curves.json")->required();
    plot_cmd->add_option("--kind", kind, "scatter | k-sweep | layer-profile | training-curve")->required();
    plot_cmd->add_option("--measure", measure, "measure to plot (scatter, training-curve)");
    plot_cmd->add_option("-o,--output", out_dir, "output SVG path")->required();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << "run `icc --help` for usage\n";
        return 1;
    }

    try {
        if (inspect->parsed()) return cmd_inspect(dump_path, out);
        if (measure_cmd->parsed())
            return cmd_measure(dump_path, mflags, measure_list, per_layer, selectivity, out_dir, argv, out);
        if (sweep_cmd->parsed()) return cmd_sweep(grid_path, out_dir, argv, out, err);
        if (rank->parsed()) return cmd_rank(table_path, measure_list, axis_list, target, out_dir, argv, out);
        if (ksweep->parsed()) return cmd_ksweep(sweep_dir, ks, measure_list, kflags, out_dir, argv, out);
        if (plot_cmd->parsed()) return cmd_plot(input, kind, measure, out_dir, argv, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }
    return 1;
}

}  // namespace icc::cli
