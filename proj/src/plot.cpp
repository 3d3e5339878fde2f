#include "icc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "icc/error.hpp"

namespace icc::plot {

using nlohmann::json;

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (hi - lo < 1e-12) {
            const double d = std::max(0.5, std::abs(lo) * 0.1);
            lo -= d;
            hi += d;
        } else {
            const double d = (hi - lo) * 0.05;
            lo -= d;
            hi += d;
        }
    }
};

std::string tick_label(double v) {
    if (v != 0.0 && (std::abs(v) >= 1e4 || std::abs(v) < 1e-3)) return fmt("%.2e", v);
    return fmt("%.3g", v);
}

}  // namespace

std::string render_svg(const Chart& chart) {
    Range xr, yr;
    std::size_t n_points = 0;
    for (const auto& s : chart.series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            xr.add(x);
            yr.add(y);
            ++n_points;
        }
    if (n_points == 0) throw ValidationError("plot: nothing to draw (no finite points)");
    xr.pad();
    yr.pad();

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string o;
    o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", kWidth) + "\" height=\"" +
         fmt("%.0f", kHeight) + "\" viewBox=\"0 0 " + fmt("%.0f", kWidth) + " " + fmt("%.0f", kHeight) + "\">\n";
    o += "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o += "<text x=\"" + fmt("%.2f", kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         escape(chart.title) + "</text>\n";

    // axes and ticks
    o += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    o += "<line x1=\"" + fmt("%.2f", kLeft) + "\" y1=\"" + fmt("%.2f", kTop + ph) + "\" x2=\"" + fmt("%.2f", kLeft + pw) +
         "\" y2=\"" + fmt("%.2f", kTop + ph) + "\"/>\n";
    o += "<line x1=\"" + fmt("%.2f", kLeft) + "\" y1=\"" + fmt("%.2f", kTop) + "\" x2=\"" + fmt("%.2f", kLeft) +
         "\" y2=\"" + fmt("%.2f", kTop + ph) + "\"/>\n";
    o += "</g>\n<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0, yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        const double px = sx(xv), py = sy(yv);
        o += "<line x1=\"" + fmt("%.2f", px) + "\" y1=\"" + fmt("%.2f", kTop + ph) + "\" x2=\"" + fmt("%.2f", px) +
             "\" y2=\"" + fmt("%.2f", kTop + ph + 5) + "\" stroke=\"black\"/>\n";
        o += "<text x=\"" + fmt("%.2f", px) + "\" y=\"" + fmt("%.2f", kTop + ph + 18) + "\" text-anchor=\"middle\">" +
             tick_label(xv) + "</text>\n";
        o += "<line x1=\"" + fmt("%.2f", kLeft - 5) + "\" y1=\"" + fmt("%.2f", py) + "\" x2=\"" + fmt("%.2f", kLeft) +
             "\" y2=\"" + fmt("%.2f", py) + "\" stroke=\"black\"/>\n";
        o += "<text x=\"" + fmt("%.2f", kLeft - 8) + "\" y=\"" + fmt("%.2f", py + 4) + "\" text-anchor=\"end\">" +
             tick_label(yv) + "</text>\n";
    }
    o += "</g>\n";
    o += "<text x=\"" + fmt("%.2f", kLeft + pw / 2) + "\" y=\"" + fmt("%.2f", kHeight - 15) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + escape(chart.x_label) + "</text>\n";
    o += "<text x=\"18\" y=\"" + fmt("%.2f", kTop + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 " +
         fmt("%.2f", kTop + ph / 2) + ")\">" + escape(chart.y_label) + "</text>\n";

    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const auto& s = chart.series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        o += "<g class=\"series\" data-name=\"" + escape(s.name) + "\">\n";
        if (s.polyline) {
            o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
            bool first = true;
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                if (!first) o += " ";
                o += fmt("%.2f", sx(x)) + "," + fmt("%.2f", sy(y));
                first = false;
            }
            o += "\"/>\n";
        } else {
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                o += "<circle cx=\"" + fmt("%.2f", sx(x)) + "\" cy=\"" + fmt("%.2f", sy(y)) + "\" r=\"4\" fill=\"" + color +
                     "\"/>\n";
            }
        }
        o += "</g>\n";
        const double ly = kTop + 10 + 18.0 * static_cast<double>(si);
        o += "<g class=\"legend\"><rect x=\"" + fmt("%.2f", kLeft + pw + 15) + "\" y=\"" + fmt("%.2f", ly - 8) +
             "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/><text x=\"" + fmt("%.2f", kLeft + pw + 30) + "\" y=\"" +
             fmt("%.2f", ly + 1) + "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.name) + "</text></g>\n";
    }
    o += "</svg>\n";
    return o;
}

Chart scatter_chart(const ranking::SweepTable& table, const std::string& measure) {
    if (table.records.empty()) throw ValidationError("plot: table has no records");
    Chart c{measure + " vs test accuracy", measure, "test accuracy", {}};
    Series s{measure, {}, false};
    for (const auto& r : table.records) {
        const auto it = r.measures.find(measure);
        if (it == r.measures.end())
            throw ValidationError("plot: record '" + r.model_id + "' has no column '" + measure + "'");
        s.points.emplace_back(it->second, r.test_accuracy);
    }
    c.series.push_back(std::move(s));
    return c;
}

Chart k_sweep_chart(const json& report) {
    if (!report.is_object() || !report.contains("measures") || !report.at("measures").is_object())
        throw FormatError("plot: k-sweep input must be the report written by `icc ksweep`");
    Chart c{"Kendall total score vs k", "k", "granulated Kendall total score", {}};
    try {
        for (const auto& [name, pts] : report.at("measures").items()) {
            Series s{name, {}, true};
            for (const auto& p : pts) {
                if (p.at("total_score").is_null()) continue;
                s.points.emplace_back(p.at("k").get<double>(), p.at("total_score").get<double>());
            }
            c.series.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("plot: malformed k-sweep report: ") + e.what());
    }
    return c;
}

Chart layer_profile_chart(const json& report) {
    if (!report.is_object() || !report.contains("per_layer") || !report.at("per_layer").is_array())
        throw FormatError("plot: layer-profile input must be a measure report produced with --per-layer");
    Chart c{"Per-layer measures", "layer index", "measure value", {}};
    try {
        for (const char* m : {"c1", "c2", "c3", "c4"}) {
            Series s{m, {}, true};
            for (const auto& l : report.at("per_layer")) {
                if (!l.contains(m) || l.at(m).is_null()) continue;
                s.points.emplace_back(l.at("layer_index").get<double>(), l.at(m).get<double>());
            }
            if (!s.points.empty()) c.series.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("plot: malformed per_layer entry: ") + e.what());
    }
    return c;
}

Chart training_curve_chart(const std::map<std::string, std::vector<sweep::CurvePoint>>& curves,
                           const std::string& measure) {
    Chart c{measure + " over training", "epoch", measure, {}};
    for (const auto& [id, pts] : curves) {
        Series s{id, {}, true};
        for (const auto& p : pts) {
            std::optional<double> v;
            if (measure == "test_accuracy") v = p.test_accuracy;
            else if (measure == "train_accuracy") v = p.train_accuracy;
            else if (measure == "c1") v = p.c1;
            else if (measure == "c2") v = p.c2;
            else if (measure == "c3") v = p.c3;
            else if (measure == "c4") v = p.c4;
            else throw ValidationError("plot: unknown curve quantity '" + measure + "'");
            if (v) s.points.emplace_back(static_cast<double>(p.epoch), *v);
        }
        c.series.push_back(std::move(s));
    }
    return c;
}

}  // namespace icc::plot
