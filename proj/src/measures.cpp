#include "icc/measures.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "icc/error.hpp"
#include "icc/geometry.hpp"
#include "icc/numeric.hpp"

namespace icc::measures {

using store::ActivationDataset;
using store::LabelHierarchy;

void MeasureConfig::validate() const {
    if (k_neuron < 1) throw ValidationError("k_neuron must be >= 1");
    if (k_layer < 1) throw ValidationError("k_layer must be >= 1");
    if (k_profile_neuron < 1) throw ValidationError("k_profile_neuron must be >= 1");
    if (!(activation_fraction > 0.0 && activation_fraction < 1.0))
        throw ValidationError("activation_fraction must lie in (0, 1)");
    if (distance_cap < 3) throw ValidationError("distance_cap must be >= 3");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon must be finite and >= 0");
}

nlohmann::json to_json(const MeasureConfig& cfg) {
    return {{"k_neuron", cfg.k_neuron},
            {"k_layer", cfg.k_layer},
            {"k_profile_neuron", cfg.k_profile_neuron},
            {"activation_fraction", cfg.activation_fraction},
            {"distance_cap", cfg.distance_cap},
            {"seed", cfg.seed},
            {"epsilon", cfg.epsilon}};
}

MeasureConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("measure config must be a JSON object");
    MeasureConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "k_neuron") cfg.k_neuron = value.get<std::size_t>();
            else if (key == "k_layer") cfg.k_layer = value.get<std::size_t>();
            else if (key == "k_profile_neuron") cfg.k_profile_neuron = value.get<std::size_t>();
            else if (key == "activation_fraction") cfg.activation_fraction = value.get<double>();
            else if (key == "distance_cap") cfg.distance_cap = value.get<std::size_t>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "epsilon") cfg.epsilon = value.get<double>();
            else throw FormatError("measure config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("measure config: ") + e.what());
    }
    return cfg;
}

TopK top_k_mean(std::span<const double> values, std::size_t k) {
    if (values.empty()) throw ComputationError("top_k_mean: empty input");
    if (k == 0) throw ComputationError("top_k_mean: k must be >= 1");
    TopK out;
    if (k > values.size()) {
        k = values.size();
        out.clamped = true;
    }
    std::vector<double> v(values.begin(), values.end());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end(), std::greater<>());
    out.value = exact_sum(std::span<const double>(v.data(), k)) / static_cast<double>(k);
    return out;
}

Ratio neuron_subclass_selectivity(std::span<const double> subclass_values, std::span<const double> complement_values,
                                  double epsilon) {
    if (subclass_values.size() < 2 || complement_values.size() < 2)
        throw ComputationError("neuron_subclass_selectivity: subclass and complement need >= 2 samples");
    const auto sub = mean_std(subclass_values);
    const auto rest = mean_std(complement_values);
    const double denom = sub.stddev + rest.stddev;
    return {(sub.mean - rest.mean) / (denom + epsilon), denom == 0.0};
}

Ratio neuron_variance_ratio(std::span<const double> class_values, std::span<const double> all_values,
                            double epsilon) {
    if (class_values.size() < 2) throw ComputationError("neuron_variance_ratio: class needs >= 2 samples");
    const double sc = mean_std(class_values).stddev;
    const double sd = mean_std(all_values).stddev;
    return {sc / (sd + epsilon), sd == 0.0};
}

StandardizedLayer standardize_neurons(const Matrix& preacts, double activation_fraction) {
    const std::size_t n = preacts.rows();
    StandardizedLayer out{Matrix(n, preacts.cols()), std::vector<bool>(preacts.cols(), false)};
    if (n == 0) return out;
    // Nearest-rank quantile at p = 1 - fraction: the ceil(p n)-th smallest value.
    const double p = 1.0 - activation_fraction;
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);

    std::vector<double> z(n), sorted(n);
    for (std::size_t c = 0; c < preacts.cols(); ++c) {
        const auto col = preacts.column(c);
        const auto ms = mean_std(col);
        if (ms.stddev == 0.0) {
            out.degenerate[c] = true;
            continue;
        }
        for (std::size_t s = 0; s < n; ++s) z[s] = (col[s] - ms.mean) / ms.stddev;
        sorted = z;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
        const double q = sorted[rank - 1];
        for (std::size_t s = 0; s < n; ++s) out.values(s, c) = std::max(z[s] - q, 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Internal view over a subset of layers so profiles reuse the global code path.
// ---------------------------------------------------------------------------

namespace {

struct View {
    std::vector<const Matrix*> layers;
    std::vector<std::size_t> positions;  // original layer position, mixed into seeds
    const LabelHierarchy* labels = nullptr;

    std::size_t n_neurons() const {
        std::size_t n = 0;
        for (const auto* m : layers) n += m->cols();
        return n;
    }
};

View full_view(const ActivationDataset& ds) {
    View v;
    v.labels = &ds.labels;
    for (std::size_t i = 0; i < ds.layers.size(); ++i) {
        v.layers.push_back(&ds.layers[i].preacts);
        v.positions.push_back(i);
    }
    return v;
}

View layer_view(const ActivationDataset& ds, std::size_t position) {
    View v;
    v.labels = &ds.labels;
    v.layers.push_back(&ds.layers[position].preacts);
    v.positions.push_back(position);
    return v;
}

// Neuron-major copy of every layer: columns[n] holds neuron n over all samples.
std::vector<std::vector<double>> neuron_columns(const View& v) {
    std::vector<std::vector<double>> cols;
    cols.reserve(v.n_neurons());
    for (const auto* m : v.layers)
        for (std::size_t c = 0; c < m->cols(); ++c) cols.push_back(m->column(c));
    return cols;
}

void require_subclasses(const LabelHierarchy& h, const char* measure) {
    if (!h.has_subclasses())
        throw ValidationError(std::string(measure) + " requires subclass labels (subclass_of / superclass_of_subclass)");
}

void mark_reliability(Diagnostics& d, const char* measure) {
    const std::size_t total = d.groups_used + d.groups_skipped;
    if (total > 0 && static_cast<double>(d.groups_skipped) > 0.2 * static_cast<double>(total)) {
        d.unreliable = true;
        d.warnings.push_back(std::string(measure) + ": more than 20% of groups skipped; result unreliable");
    }
    if (d.degenerate_ratios > 0)
        d.warnings.push_back(std::string(measure) + ": " + std::to_string(d.degenerate_ratios) +
                             " zero-variance ratios hit the epsilon guard");
    if (d.k_clamped) d.warnings.push_back(std::string(measure) + ": k clamped to the available count");
}

struct SubclassSplit {
    int subclass = 0;
    std::vector<std::size_t> members;
    std::vector<std::size_t> complement;  // rest of the superclass
};

// Subclasses usable for selectivity; too-small ones are recorded as skipped.
std::vector<SubclassSplit> selectivity_splits(const LabelHierarchy& h, Diagnostics& d) {
    const auto subs = h.subclass_members();
    const auto& super = *h.superclass_of_subclass;
    const auto& sub_of = *h.subclass_of;
    const auto classes = h.class_members();
    std::vector<SubclassSplit> out;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        SubclassSplit split;
        split.subclass = static_cast<int>(i);
        split.members = subs[i];
        for (std::size_t s : classes[static_cast<std::size_t>(super[i])])
            if (sub_of[s] != static_cast<int>(i)) split.complement.push_back(s);
        if (split.members.size() < 2 || split.complement.size() < 2) {
            ++d.groups_skipped;
            d.warnings.push_back("subclass " + std::to_string(i) + " skipped: subclass or superclass complement has < 2 samples");
            continue;
        }
        out.push_back(std::move(split));
    }
    return out;
}

// Selectivity of every neuron for one subclass split.
std::vector<double> neuron_selectivities(const std::vector<std::vector<double>>& cols, const SubclassSplit& split,
                                         double eps, Diagnostics& d) {
    std::vector<double> out(cols.size());
    std::vector<double> in_buf(split.members.size()), out_buf(split.complement.size());
    for (std::size_t n = 0; n < cols.size(); ++n) {
        for (std::size_t k = 0; k < split.members.size(); ++k) in_buf[k] = cols[n][split.members[k]];
        for (std::size_t k = 0; k < split.complement.size(); ++k) out_buf[k] = cols[n][split.complement[k]];
        const Ratio r = neuron_subclass_selectivity(in_buf, out_buf, eps);
        out[n] = r.value;
        if (r.degenerate) ++d.degenerate_ratios;
    }
    return out;
}

MeasureValue c1_impl(const View& v, std::size_t k, double eps) {
    require_subclasses(*v.labels, "c1");
    MeasureValue mv;
    auto& d = mv.diagnostics;
    const auto cols = neuron_columns(v);
    std::vector<double> per_subclass;
    for (const auto& split : selectivity_splits(*v.labels, d)) {
        const auto sel = neuron_selectivities(cols, split, eps, d);
        const TopK t = top_k_mean(sel, k);
        d.k_clamped |= t.clamped;
        per_subclass.push_back(t.value);
        ++d.groups_used;
    }
    if (per_subclass.empty()) throw ComputationError("c1: no subclass has enough samples");
    mv.value = median(per_subclass);
    mark_reliability(d, "c1");
    return mv;
}

MeasureValue c2_impl(const View& v, std::size_t k, std::size_t cap, std::uint64_t seed) {
    const LabelHierarchy& h = *v.labels;
    require_subclasses(h, "c2");
    MeasureValue mv;
    auto& d = mv.diagnostics;
    const auto classes = h.class_members();
    const auto& super = *h.superclass_of_subclass;
    const auto& sub_of = *h.subclass_of;
    const std::size_t n_sub = super.size();

    std::vector<Matrix> activations;
    activations.reserve(v.layers.size());
    for (const auto* m : v.layers) {
        Matrix a = *m;
        for (double& x : a.data()) x = std::max(x, 0.0);
        activations.push_back(std::move(a));
    }

    std::vector<std::vector<double>> scores(n_sub);  // per subclass, one per layer
    std::vector<bool> usable(n_sub, false);
    for (std::size_t s = 0; s < classes.size(); ++s) {
        std::vector<int> subs_here;
        for (std::size_t i = 0; i < n_sub; ++i)
            if (super[i] == static_cast<int>(s)) subs_here.push_back(static_cast<int>(i));
        if (subs_here.size() < 2) {
            for (int i : subs_here) {
                ++d.groups_skipped;
                d.warnings.push_back("subclass " + std::to_string(i) + " skipped: superclass " + std::to_string(s) +
                                     " has a single subclass");
            }
            continue;
        }
        for (std::size_t l = 0; l < activations.size(); ++l) {
            const auto dm = geometry::cosine_distance_matrix(activations[l], classes[s], cap,
                                                             mix_seed(seed, 2, s, v.positions[l]));
            std::vector<int> cluster_of(dm.n);
            for (std::size_t p = 0; p < dm.n; ++p) cluster_of[p] = sub_of[dm.point_ids[p]];
            for (int i : subs_here) {
                if (std::find(cluster_of.begin(), cluster_of.end(), i) == cluster_of.end()) continue;
                scores[static_cast<std::size_t>(i)].push_back(geometry::silhouette_mean(dm, cluster_of, i));
            }
        }
        for (int i : subs_here) usable[static_cast<std::size_t>(i)] = true;
    }

    std::vector<double> per_subclass;
    for (std::size_t i = 0; i < n_sub; ++i) {
        if (!usable[i]) continue;
        if (scores[i].empty()) {
            ++d.groups_skipped;
            d.warnings.push_back("subclass " + std::to_string(i) + " skipped: absent from every distance subsample");
            continue;
        }
        const TopK t = top_k_mean(scores[i], k);
        d.k_clamped |= t.clamped;
        per_subclass.push_back(t.value);
        ++d.groups_used;
    }
    if (per_subclass.empty()) throw ComputationError("c2: no superclass has two or more subclasses");
    mv.value = median(per_subclass);
    mark_reliability(d, "c2");
    return mv;
}

MeasureValue c3_impl(const View& v, std::size_t k, double eps) {
    const auto classes = v.labels->class_members();
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].size() < 2)
            throw ComputationError("c3: class " + std::to_string(i) + " has fewer than 2 samples");
    }
    MeasureValue mv;
    auto& d = mv.diagnostics;
    const auto cols = neuron_columns(v);

    std::vector<std::vector<double>> ratios(classes.size(), std::vector<double>(cols.size()));
    std::vector<double> buf;
    for (std::size_t n = 0; n < cols.size(); ++n) {
        const double sd = mean_std(cols[n]).stddev;
        for (std::size_t i = 0; i < classes.size(); ++i) {
            buf.resize(classes[i].size());
            for (std::size_t j = 0; j < classes[i].size(); ++j) buf[j] = cols[n][classes[i][j]];
            const double sc = mean_std(buf).stddev;
            ratios[i][n] = sc / (sd + eps);
            if (sd == 0.0) ++d.degenerate_ratios;
        }
    }
    ExactSum total;
    for (const auto& r : ratios) {
        const TopK t = top_k_mean(r, k);
        d.k_clamped |= t.clamped;
        total.add(t.value);
        ++d.groups_used;
    }
    mv.value = total.value() / static_cast<double>(classes.size());
    mark_reliability(d, "c3");
    return mv;
}

MeasureValue c4_impl(const View& v, std::size_t k, double fraction, std::size_t cap, std::uint64_t seed,
                     double eps) {
    const auto classes = v.labels->class_members();
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].size() < 3)
            throw ComputationError("c4: class " + std::to_string(i) + " has fewer than 3 samples");
    }
    MeasureValue mv;
    auto& d = mv.diagnostics;
    constexpr std::uint64_t kWholeDataset = std::numeric_limits<std::uint64_t>::max();

    std::vector<std::vector<double>> ratios(classes.size());
    std::size_t degenerate_neurons = 0;
    for (std::size_t l = 0; l < v.layers.size(); ++l) {
        const auto standardized = standardize_neurons(*v.layers[l], fraction);
        degenerate_neurons += static_cast<std::size_t>(
            std::count(standardized.degenerate.begin(), standardized.degenerate.end(), true));
        const std::uint64_t pos = v.positions[l];
        const double sigma_d = geometry::pairwise_distance_std(
            geometry::cosine_distance_matrix(standardized.values, {}, cap, mix_seed(seed, 4, pos, kWholeDataset)));
        if (sigma_d == 0.0) d.degenerate_ratios += classes.size();
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const double sigma_c = geometry::pairwise_distance_std(
                geometry::cosine_distance_matrix(standardized.values, classes[i], cap, mix_seed(seed, 4, pos, i)));
            ratios[i].push_back(sigma_c / (sigma_d + eps));
        }
    }
    if (degenerate_neurons > 0)
        d.warnings.push_back("c4: " + std::to_string(degenerate_neurons) +
                             " constant neurons emitted as all-zero columns");
    ExactSum total;
    for (const auto& r : ratios) {
        const TopK t = top_k_mean(r, k);
        d.k_clamped |= t.clamped;
        total.add(t.value);
        ++d.groups_used;
    }
    mv.value = total.value() / static_cast<double>(classes.size());
    mark_reliability(d, "c4");
    return mv;
}

}  // namespace

MeasureValue compute_c1(const ActivationDataset& ds, const MeasureConfig& cfg) {
    cfg.validate();
    return c1_impl(full_view(ds), cfg.k_neuron, cfg.epsilon);
}

MeasureValue compute_c2(const ActivationDataset& ds, const MeasureConfig& cfg) {
    cfg.validate();
    return c2_impl(full_view(ds), cfg.k_layer, cfg.distance_cap, cfg.seed);
}

MeasureValue compute_c3(const ActivationDataset& ds, const MeasureConfig& cfg) {
    cfg.validate();
    return c3_impl(full_view(ds), cfg.k_neuron, cfg.epsilon);
}

MeasureValue compute_c4(const ActivationDataset& ds, const MeasureConfig& cfg) {
    cfg.validate();
    return c4_impl(full_view(ds), cfg.k_layer, cfg.activation_fraction, cfg.distance_cap, cfg.seed, cfg.epsilon);
}

std::vector<LayerProfile> per_layer_profile(const ActivationDataset& ds, const MeasureConfig& cfg,
                                            Diagnostics* diagnostics) {
    cfg.validate();
    std::vector<LayerProfile> out;
    const bool hierarchy = ds.labels.has_subclasses();
    auto attempt = [&](const char* name, int layer_index, auto&& fn) -> std::optional<double> {
        try {
            return fn();
        } catch (const ComputationError& e) {
            if (diagnostics)
                diagnostics->warnings.push_back(std::string("per-layer ") + name + " at layer " +
                                                std::to_string(layer_index) + ": " + e.what());
            return std::nullopt;
        }
    };
    for (std::size_t p = 0; p < ds.layers.size(); ++p) {
        const View v = layer_view(ds, p);
        const std::size_t width = ds.layers[p].n_neurons();
        const std::size_t k_neuron = std::min(cfg.k_profile_neuron, width);
        LayerProfile row;
        row.layer_index = ds.layers[p].layer_index;
        row.name = ds.layers[p].name;
        if (hierarchy) {
            row.c1 = attempt("c1", row.layer_index, [&] { return c1_impl(v, k_neuron, cfg.epsilon).value; });
            row.c2 = attempt("c2", row.layer_index, [&] { return c2_impl(v, 1, cfg.distance_cap, cfg.seed).value; });
        }
        row.c3 = attempt("c3", row.layer_index, [&] { return c3_impl(v, k_neuron, cfg.epsilon).value; });
        row.c4 = attempt("c4", row.layer_index, [&] {
            return c4_impl(v, 1, cfg.activation_fraction, cfg.distance_cap, cfg.seed, cfg.epsilon).value;
        });
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<SubclassSelectivity> selectivity_distribution(const ActivationDataset& ds, const MeasureConfig& cfg,
                                                          Diagnostics* diagnostics) {
    cfg.validate();
    require_subclasses(ds.labels, "selectivity distribution");
    Diagnostics local;
    Diagnostics& d = diagnostics ? *diagnostics : local;
    const View v = full_view(ds);
    const auto cols = neuron_columns(v);
    std::vector<SubclassSelectivity> out;
    for (const auto& split : selectivity_splits(ds.labels, d)) {
        const auto sel = neuron_selectivities(cols, split, cfg.epsilon, d);
        std::size_t best = 0;
        for (std::size_t n = 1; n < sel.size(); ++n)
            if (sel[n] > sel[best]) best = n;
        out.push_back({split.subclass, sel[best], best});
    }
    return out;
}

MeasureResult compute_measures(const ActivationDataset& ds, const MeasureConfig& cfg,
                               const MeasureSelection& selection) {
    cfg.validate();
    MeasureResult r;
    r.model_id = ds.model_id;
    const bool hierarchy = ds.labels.has_subclasses();
    auto collect = [&](const Diagnostics& d) {
        r.warnings.insert(r.warnings.end(), d.warnings.begin(), d.warnings.end());
    };
    if (hierarchy && selection.c1) {
        auto mv = compute_c1(ds, cfg);
        r.c1 = mv.value;
        r.d1 = std::move(mv.diagnostics);
        collect(r.d1);
    }
    if (hierarchy && selection.c2) {
        auto mv = compute_c2(ds, cfg);
        r.c2 = mv.value;
        r.d2 = std::move(mv.diagnostics);
        collect(r.d2);
    }
    if (selection.c3) {
        auto mv = compute_c3(ds, cfg);
        r.c3 = mv.value;
        r.d3 = std::move(mv.diagnostics);
        collect(r.d3);
    }
    if (selection.c4) {
        auto mv = compute_c4(ds, cfg);
        r.c4 = mv.value;
        r.d4 = std::move(mv.diagnostics);
        collect(r.d4);
    }
    if (selection.per_layer) {
        Diagnostics d;
        r.per_layer = per_layer_profile(ds, cfg, &d);
        collect(d);
    }
    if (selection.selectivity && hierarchy) {
        Diagnostics d;
        r.per_subclass_selectivity = selectivity_distribution(ds, cfg, &d);
    }
    return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json diagnostics_json(const Diagnostics& d) {
    return {{"groups_used", d.groups_used},
            {"groups_skipped", d.groups_skipped},
            {"degenerate_ratios", d.degenerate_ratios},
            {"k_clamped", d.k_clamped},
            {"unreliable", d.unreliable}};
}

}  // namespace

nlohmann::json to_json(const MeasureResult& r, const MeasureConfig& cfg) {
    nlohmann::json j;
    j["model_id"] = r.model_id;
    j["measures"] = {{"c1", optional_json(r.c1)},
                     {"c2", optional_json(r.c2)},
                     {"c3", optional_json(r.c3)},
                     {"c4", optional_json(r.c4)}};
    nlohmann::json flags = nlohmann::json::object();
    if (r.c1) flags["c1"] = diagnostics_json(r.d1);
    if (r.c2) flags["c2"] = diagnostics_json(r.d2);
    if (r.c3) flags["c3"] = diagnostics_json(r.d3);
    if (r.c4) flags["c4"] = diagnostics_json(r.d4);
    j["flags"] = std::move(flags);
    if (r.per_layer) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& p : *r.per_layer) {
            rows.push_back({{"layer_index", p.layer_index},
                            {"name", p.name},
                            {"c1", optional_json(p.c1)},
                            {"c2", optional_json(p.c2)},
                            {"c3", optional_json(p.c3)},
                            {"c4", optional_json(p.c4)}});
        }
        j["per_layer"] = std::move(rows);
    }
    if (r.per_subclass_selectivity) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& s : *r.per_subclass_selectivity)
            rows.push_back({{"subclass", s.subclass}, {"selectivity", s.selectivity}, {"neuron", s.neuron}});
        j["selectivity_distribution"] = std::move(rows);
    }
    j["config"] = to_json(cfg);
    j["warnings"] = r.warnings;
    return j;
}

}  // namespace icc::measures
