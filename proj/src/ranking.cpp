#include "icc/ranking.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <sstream>

#include "icc/error.hpp"
#include "icc/numeric.hpp"

namespace icc::ranking {

namespace {

std::int64_t tied_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Counts strict inversions of `v` while merge-sorting it in place.
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[i] <= v[j]) {
            scratch[k++] = v[i++];
        } else {
            inv += static_cast<std::int64_t>(mid - i);
            scratch[k++] = v[j++];
        }
    }
    while (i < mid) scratch[k++] = v[i++];
    while (j < hi) scratch[k++] = v[j++];
    std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

}  // namespace

std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("kendall_tau: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw ValidationError("kendall_tau: need at least 2 points");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("kendall_tau: non-finite value");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });

    const std::int64_t total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    std::int64_t ties_x = 0, ties_xy = 0;
    std::int64_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i < n; ++i) {
        const double xa = x[order[i - 1]], xb = x[order[i]];
        const double ya = y[order[i - 1]], yb = y[order[i]];
        if (xa == xb) {
            ++run_x;
            if (ya == yb) {
                ++run_xy;
            } else {
                ties_xy += tied_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += tied_pairs(run_x);
            ties_xy += tied_pairs(run_xy);
            run_x = run_xy = 1;
        }
    }
    ties_x += tied_pairs(run_x);
    ties_xy += tied_pairs(run_xy);

    std::vector<double> ys(n), scratch(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    const std::int64_t discordant = count_inversions(ys, scratch, 0, n);

    std::int64_t ties_y = 0, run_y = 1;
    for (std::size_t i = 1; i < n; ++i) {
        if (ys[i] == ys[i - 1]) {
            ++run_y;
        } else {
            ties_y += tied_pairs(run_y);
            run_y = 1;
        }
    }
    ties_y += tied_pairs(run_y);

    const std::int64_t px = total - ties_x;
    const std::int64_t py = total - ties_y;
    if (px == 0 || py == 0) return std::nullopt;
    const std::int64_t s = total - ties_x - ties_y + ties_xy - 2 * discordant;
    const double tau = static_cast<double>(s) / std::sqrt(static_cast<double>(px) * static_cast<double>(py));
    return std::clamp(tau, -1.0, 1.0);
}

std::vector<std::string> SweepTable::measure_names() const {
    std::vector<std::string> names;
    for (const auto& r : records)
        for (const auto& [name, _] : r.measures)
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    return names;
}

void SweepTable::validate() const {
    if (records.empty()) throw ValidationError("sweep table has no records");
    std::set<std::string> seen_axes;
    for (const auto& a : axes) {
        if (a.empty()) throw ValidationError("sweep table: empty axis name");
        if (!seen_axes.insert(a).second) throw ValidationError("sweep table: duplicate axis '" + a + "'");
    }
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.model_id).second) throw ValidationError("sweep table: duplicate model_id '" + r.model_id + "'");
        for (const auto& a : axes) {
            if (!r.hyperparams.contains(a))
                throw ValidationError("sweep table: record '" + r.model_id + "' lacks axis '" + a + "'");
        }
        if (!std::isfinite(r.test_accuracy))
            throw ValidationError("sweep table: record '" + r.model_id + "' has non-finite test_accuracy");
    }
    for (const auto& a : axes) {
        std::set<std::string> values;
        for (const auto& r : records) values.insert(r.hyperparams.at(a));
        if (values.size() < 2) throw ValidationError("sweep table: axis '" + a + "' takes a single value");
    }
}

KendallReport granulated_kendall(const SweepTable& table, const std::string& measure, Target target) {
    table.validate();
    for (const auto& r : table.records) {
        if (!r.measures.contains(measure))
            throw ValidationError("granulated_kendall: record '" + r.model_id + "' lacks measure '" + measure + "'");
    }
    KendallReport report;
    report.measure = measure;
    ExactSum total;
    std::size_t scored_axes = 0;
    for (const auto& axis : table.axes) {
        std::map<std::string, std::vector<const ModelRecord*>> groups;
        for (const auto& r : table.records) {
            std::string key;
            for (const auto& other : table.axes) {
                if (other == axis) continue;
                key += r.hyperparams.at(other);
                key += '\x1f';
            }
            groups[key].push_back(&r);
        }
        AxisScore score;
        score.axis = axis;
        ExactSum sum;
        for (const auto& [_, members] : groups) {
            if (members.size() < 2) continue;
            std::set<std::string> axis_values;
            for (const auto* r : members) axis_values.insert(r->hyperparams.at(axis));
            if (axis_values.size() < 2) continue;
            std::vector<double> m, t;
            for (const auto* r : members) {
                m.push_back(r->measures.at(measure));
                t.push_back(target == Target::test_accuracy ? r->test_accuracy : r->train_accuracy);
            }
            const auto tau = kendall_tau(m, t);
            if (!tau) {
                ++score.undefined_groups;
                continue;
            }
            sum.add(*tau);
            ++score.valid_groups;
        }
        if (score.valid_groups > 0) {
            score.tau = sum.value() / static_cast<double>(score.valid_groups);
            total.add(*score.tau);
            ++scored_axes;
        }
        report.per_axis.push_back(std::move(score));
    }
    if (scored_axes == 0)
        throw ComputationError("granulated_kendall: no valid group on any axis for measure '" + measure + "'");
    report.total_score = total.value() / static_cast<double>(scored_axes);
    return report;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = field_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (field_started || !field.empty() || !row.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            field_started = false;
            ++line;
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw FormatError("sweep table CSV", text.size(), "unterminated quoted field at line " + std::to_string(line));
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw FormatError("sweep table CSV: " + where + ": not a number: '" + s + "'");
    return v;
}

}  // namespace

std::string to_csv(const SweepTable& table) {
    const auto measures = table.measure_names();
    std::ostringstream out;
    out << "model_id";
    for (const auto& a : table.axes) out << ',' << csv_field(a);
    out << ",train_accuracy,test_accuracy";
    for (const auto& m : measures) out << ',' << csv_field(m);
    out << '\n';
    for (const auto& r : table.records) {
        out << csv_field(r.model_id);
        for (const auto& a : table.axes) {
            auto it = r.hyperparams.find(a);
            out << ',' << csv_field(it == r.hyperparams.end() ? "" : it->second);
        }
        out << ',' << format_number(r.train_accuracy) << ',' << format_number(r.test_accuracy);
        for (const auto& m : measures) {
            auto it = r.measures.find(m);
            out << ',' << (it == r.measures.end() ? "" : format_number(it->second));
        }
        out << '\n';
    }
    return out.str();
}

SweepTable table_from_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw FormatError("sweep table CSV: empty input");
    const auto& header = rows[0];
    if (header.empty() || header[0] != "model_id") throw FormatError("sweep table CSV: first column must be model_id");
    const auto train_it = std::find(header.begin(), header.end(), "train_accuracy");
    if (train_it == header.end() || train_it + 1 == header.end() || *(train_it + 1) != "test_accuracy")
        throw FormatError("sweep table CSV: header needs adjacent train_accuracy,test_accuracy columns");
    const std::size_t train_col = static_cast<std::size_t>(train_it - header.begin());

    SweepTable table;
    table.axes.assign(header.begin() + 1, train_it);
    const std::vector<std::string> measure_cols(train_it + 2, header.end());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = "row " + std::to_string(r + 1);
        if (row.size() != header.size())
            throw FormatError("sweep table CSV: " + where + " has " + std::to_string(row.size()) + " fields, header has " +
                              std::to_string(header.size()));
        ModelRecord rec;
        rec.model_id = row[0];
        for (std::size_t a = 0; a < table.axes.size(); ++a) rec.hyperparams[table.axes[a]] = row[1 + a];
        rec.train_accuracy = parse_double(row[train_col], where);
        rec.test_accuracy = parse_double(row[train_col + 1], where);
        for (std::size_t m = 0; m < measure_cols.size(); ++m) {
            const auto& cell = row[train_col + 2 + m];
            if (!cell.empty()) rec.measures[measure_cols[m]] = parse_double(cell, where);
        }
        table.records.push_back(std::move(rec));
    }
    return table;
}

nlohmann::json to_json(const SweepTable& table) {
    nlohmann::json j;
    j["axes"] = table.axes;
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : table.records) {
        records.push_back({{"model_id", r.model_id},
                           {"hyperparams", r.hyperparams},
                           {"train_accuracy", r.train_accuracy},
                           {"test_accuracy", r.test_accuracy},
                           {"measures", r.measures}});
    }
    j["records"] = std::move(records);
    return j;
}

SweepTable table_from_json(const nlohmann::json& j) {
    try {
        SweepTable t;
        t.axes = j.at("axes").get<std::vector<std::string>>();
        for (const auto& r : j.at("records")) {
            ModelRecord rec;
            rec.model_id = r.at("model_id").get<std::string>();
            rec.hyperparams = r.at("hyperparams").get<std::map<std::string, std::string>>();
            rec.train_accuracy = r.at("train_accuracy").get<double>();
            rec.test_accuracy = r.at("test_accuracy").get<double>();
            rec.measures = r.value("measures", std::map<std::string, double>{});
            t.records.push_back(std::move(rec));
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("sweep table JSON: ") + e.what());
    }
}

nlohmann::json to_json(const KendallReport& report) {
    nlohmann::json per_axis = nlohmann::json::object();
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& a : report.per_axis) {
        per_axis[a.axis] = a.tau ? nlohmann::json(*a.tau) : nlohmann::json(nullptr);
        counts[a.axis] = {{"valid", a.valid_groups}, {"undefined", a.undefined_groups}};
    }
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& a : report.per_axis) axes.push_back(a.axis);
    return {{"measure", report.measure},
            {"axes", axes},
            {"per_axis", per_axis},
            {"group_counts", counts},
            {"total_score", report.total_score}};
}

std::string kendall_matrix_csv(std::span<const KendallReport> reports) {
    std::ostringstream out;
    out << "measure";
    if (!reports.empty())
        for (const auto& a : reports.front().per_axis) out << ',' << csv_field(a.axis);
    out << ",total_score\n";
    char buf[32];
    for (const auto& r : reports) {
        out << csv_field(r.measure);
        for (const auto& a : r.per_axis) {
            if (a.tau) {
                std::snprintf(buf, sizeof buf, "%.4f", *a.tau);
                out << ',' << buf;
            } else {
                out << ",NA";
            }
        }
        std::snprintf(buf, sizeof buf, "%.4f", r.total_score);
        out << ',' << buf << '\n';
    }
    return out.str();
}

std::vector<KSweepPoint> k_sensitivity_sweep(std::span<const store::ActivationDataset> dumps, SweepTable table,
                                             std::span<const std::size_t> ks, NeuronMeasure measure,
                                             const measures::MeasureConfig& base) {
    if (ks.empty()) throw ValidationError("k_sensitivity_sweep: no k values");
    std::map<std::string, const store::ActivationDataset*> by_id;
    for (const auto& d : dumps) by_id[d.model_id] = &d;
    for (const auto& r : table.records) {
        if (!by_id.contains(r.model_id))
            throw ValidationError("k_sensitivity_sweep: no dump for model '" + r.model_id + "'");
    }
    const std::string name = measure == NeuronMeasure::c1 ? "c1" : "c3";
    std::vector<KSweepPoint> out;
    for (std::size_t k : ks) {
        measures::MeasureConfig cfg = base;
        cfg.k_neuron = k;
        KSweepPoint point;
        point.k = k;
        for (auto& r : table.records) {
            const auto& ds = *by_id.at(r.model_id);
            const auto mv = measure == NeuronMeasure::c1 ? measures::compute_c1(ds, cfg) : measures::compute_c3(ds, cfg);
            point.k_clamped |= mv.diagnostics.k_clamped;
            r.measures[name] = mv.value;
        }
        try {
            point.total_score = granulated_kendall(table, name).total_score;
        } catch (const ComputationError& e) {
            point.note = e.what();
        }
        if (point.k_clamped) {
            if (!point.note.empty()) point.note += "; ";
            point.note += "k clamped to the neuron count";
        }
        out.push_back(std::move(point));
    }
    return out;
}

}  // namespace icc::ranking
