#include "icc/activation_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "icc/error.hpp"
#include "icc/hash.hpp"
#include "json.hpp"

namespace icc::store {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(LayerKind kind) { return kind == LayerKind::conv ? "conv" : "dense"; }

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "conv") return LayerKind::conv;
    throw FormatError("unknown layer kind '" + s + "'");
}

int LabelHierarchy::n_subclasses() const {
    if (superclass_of_subclass) return static_cast<int>(superclass_of_subclass->size());
    if (!subclass_of || subclass_of->empty()) return 0;
    return *std::max_element(subclass_of->begin(), subclass_of->end()) + 1;
}

namespace {

std::vector<std::vector<std::size_t>> group_members(const std::vector<int>& of, int count) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(std::max(count, 0)));
    for (std::size_t s = 0; s < of.size(); ++s) {
        if (of[s] >= 0 && of[s] < count) out[static_cast<std::size_t>(of[s])].push_back(s);
    }
    return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> LabelHierarchy::class_members() const {
    return group_members(class_of, n_classes);
}

std::vector<std::vector<std::size_t>> LabelHierarchy::subclass_members() const {
    if (!subclass_of) return {};
    return group_members(*subclass_of, n_subclasses());
}

void LabelHierarchy::validate(const std::string& source) const {
    auto fail = [&](const std::string& what) { throw ValidationError(source + ": " + what); };
    if (n_classes < 1) fail("class count must be >= 1");
    if (class_of.empty()) fail("no samples");
    for (std::size_t s = 0; s < class_of.size(); ++s) {
        if (class_of[s] < 0 || class_of[s] >= n_classes)
            fail("class_of[" + std::to_string(s) + "]: label out of range (" +
                 std::to_string(class_of[s]) + " not in [0, " + std::to_string(n_classes) + "))");
    }
    const auto classes = class_members();
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].empty()) fail("class " + std::to_string(i) + " is empty");
    }
    if (superclass_of_subclass && !subclass_of) fail("superclass_of_subclass given without subclass_of");
    if (!subclass_of) return;

    const auto& sub = *subclass_of;
    if (sub.size() != class_of.size())
        fail("subclass_of has " + std::to_string(sub.size()) + " entries, class_of has " +
             std::to_string(class_of.size()));
    if (!superclass_of_subclass) fail("subclass_of given without superclass_of_subclass");
    const auto& super = *superclass_of_subclass;
    const int n_sub = static_cast<int>(super.size());
    for (std::size_t i = 0; i < super.size(); ++i) {
        if (super[i] < 0 || super[i] >= n_classes)
            fail("superclass_of_subclass[" + std::to_string(i) + "]: label out of range (" +
                 std::to_string(super[i]) + " not in [0, " + std::to_string(n_classes) + "))");
    }
    for (std::size_t s = 0; s < sub.size(); ++s) {
        if (sub[s] < 0 || sub[s] >= n_sub)
            fail("subclass_of[" + std::to_string(s) + "]: label out of range (" + std::to_string(sub[s]) +
                 " not in [0, " + std::to_string(n_sub) + "))");
        if (super[static_cast<std::size_t>(sub[s])] != class_of[s])
            fail("sample " + std::to_string(s) + ": subclass " + std::to_string(sub[s]) +
                 " belongs to superclass " + std::to_string(super[static_cast<std::size_t>(sub[s])]) +
                 " but class_of is " + std::to_string(class_of[s]));
    }
    const auto members = subclass_members();
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (members[i].empty()) fail("subclass " + std::to_string(i) + " is empty");
    }
}

LabelHierarchy flat_labels(std::vector<int> class_of, int n_classes) {
    LabelHierarchy h;
    if (n_classes < 0) {
        n_classes = class_of.empty() ? 0 : *std::max_element(class_of.begin(), class_of.end()) + 1;
    }
    h.class_of = std::move(class_of);
    h.n_classes = n_classes;
    return h;
}

LabelHierarchy hierarchical_labels(std::vector<int> subclass_of, std::vector<int> superclass_of_subclass) {
    LabelHierarchy h;
    h.class_of.resize(subclass_of.size());
    for (std::size_t s = 0; s < subclass_of.size(); ++s) {
        const int sub = subclass_of[s];
        h.class_of[s] = (sub >= 0 && static_cast<std::size_t>(sub) < superclass_of_subclass.size())
                            ? superclass_of_subclass[static_cast<std::size_t>(sub)]
                            : -1;
    }
    h.n_classes = superclass_of_subclass.empty()
                      ? 0
                      : *std::max_element(superclass_of_subclass.begin(), superclass_of_subclass.end()) + 1;
    h.subclass_of = std::move(subclass_of);
    h.superclass_of_subclass = std::move(superclass_of_subclass);
    return h;
}

std::size_t ActivationDataset::n_neurons() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.n_neurons();
    return n;
}

void ActivationDataset::validate() const {
    labels.validate();
    if (layers.empty()) throw ValidationError(model_id + ": dataset has no layers");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string where = model_id + ": layer '" + l.name + "'";
        if (l.preacts.rows() != labels.n_samples())
            throw ValidationError(where + ": inconsistent sample counts (" + std::to_string(l.preacts.rows()) +
                                  " rows vs " + std::to_string(labels.n_samples()) + " labels)");
        if (l.preacts.cols() == 0) throw ValidationError(where + ": no neurons");
        if (i > 0 && l.layer_index <= layers[i - 1].layer_index)
            throw ValidationError(where + ": layer indices must be strictly increasing");
        if (l.neuron_offset != offset)
            throw ValidationError(where + ": neuron offsets are not contiguous");
        offset += l.n_neurons();
        for (std::size_t k = 0; k < l.preacts.data().size(); ++k) {
            if (!std::isfinite(l.preacts.data()[k]))
                throw ValidationError(where + ": non-finite value at element " + std::to_string(k));
        }
    }
    if (metrics) {
        for (double v : {metrics->train_accuracy, metrics->test_accuracy}) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(model_id + ": metrics must lie in [0, 1]");
        }
    }
}

ActivationDataset assemble(std::string model_id, std::vector<LayerBlock> layers, LabelHierarchy labels,
                           std::optional<Metrics> metrics, std::map<std::string, std::string> hyperparams) {
    ActivationDataset ds;
    ds.model_id = std::move(model_id);
    std::size_t offset = 0;
    for (auto& l : layers) {
        l.neuron_offset = offset;
        offset += l.n_neurons();
    }
    ds.layers = std::move(layers);
    ds.labels = std::move(labels);
    ds.metrics = metrics;
    ds.hyperparams = std::move(hyperparams);
    ds.validate();
    return ds;
}

template <typename T>
Matrix global_max_pool(std::span<const T> tensor, std::span<const std::size_t> shape) {
    if (shape.size() < 3) throw FormatError("global_max_pool: tensor must have at least one spatial axis");
    const std::size_t n = shape[0];
    const std::size_t channels = shape[1];
    const std::size_t spatial =
        std::accumulate(shape.begin() + 2, shape.end(), std::size_t{1}, std::multiplies<>());
    if (spatial == 0) throw FormatError("global_max_pool: empty spatial extent");
    if (tensor.size() != n * channels * spatial)
        throw FormatError("global_max_pool: tensor size does not match shape");
    Matrix out(n, channels);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < channels; ++c) {
            const T* cell = tensor.data() + (s * channels + c) * spatial;
            out(s, c) = static_cast<double>(*std::max_element(cell, cell + spatial));
        }
    }
    return out;
}

template Matrix global_max_pool<float>(std::span<const float>, std::span<const std::size_t>);
template Matrix global_max_pool<double>(std::span<const double>, std::span<const std::size_t>);

Matrix layer_activations(const LayerBlock& block) {
    Matrix out = block.preacts;
    for (double& v : out.data()) v = std::max(v, 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

namespace {

std::string read_file(const fs::path& path, const std::string& label) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(label, 0, "missing file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json(const std::string& text, const std::string& label) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(label, e.byte, std::string("malformed JSON: ") + e.what());
    }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& label) {
    if (!obj.is_object() || !obj.contains(key)) throw FormatError(label, 0, std::string("missing field '") + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(label, 0, std::string("field '") + key + "' has the wrong type");
    }
}

std::vector<int> int_array(const json& obj, const char* key, const std::string& label) {
    const json& arr = obj.at(key);
    if (!arr.is_array()) throw FormatError(label, 0, std::string("field '") + key + "' must be an array");
    std::vector<int> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number_integer())
            throw FormatError(label, 0, std::string(key) + "[" + std::to_string(i) + "] is not an integer");
        const auto v = arr[i].get<std::int64_t>();
        if (v < INT32_MIN || v > INT32_MAX)
            throw ValidationError(label + ": " + key + "[" + std::to_string(i) + "]: label out of range");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

float decode_f32le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

void encode_f32le(float v, unsigned char* p) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    p[0] = static_cast<unsigned char>(bits & 0xff);
    p[1] = static_cast<unsigned char>((bits >> 8) & 0xff);
    p[2] = static_cast<unsigned char>((bits >> 16) & 0xff);
    p[3] = static_cast<unsigned char>((bits >> 24) & 0xff);
}

LabelHierarchy load_labels(const fs::path& path, const std::string& label, const json& manifest) {
    const std::string text = read_file(path, label);
    if (manifest.contains("labels_sha256")) {
        const auto expected = field<std::string>(manifest, "labels_sha256", "manifest.json");
        if (sha256_hex(std::string_view(text)) != expected) throw FormatError(label, 0, "checksum mismatch");
    }
    const json j = parse_json(text, label);
    if (!j.is_object()) throw FormatError(label, 0, "top level must be an object");
    if (!j.contains("class_of")) throw FormatError(label, 0, "missing field 'class_of'");

    LabelHierarchy h;
    h.class_of = int_array(j, "class_of", label);
    if (j.contains("subclass_of") && !j["subclass_of"].is_null()) h.subclass_of = int_array(j, "subclass_of", label);
    if (j.contains("superclass_of_subclass") && !j["superclass_of_subclass"].is_null())
        h.superclass_of_subclass = int_array(j, "superclass_of_subclass", label);

    if (j.contains("n_classes")) {
        h.n_classes = field<int>(j, "n_classes", label);
    } else {
        int max_label = -1;
        for (int c : h.class_of) max_label = std::max(max_label, c);
        if (h.superclass_of_subclass)
            for (int c : *h.superclass_of_subclass) max_label = std::max(max_label, c);
        h.n_classes = max_label + 1;
    }
    // Derive the subclass -> superclass map from the samples when omitted.
    if (h.subclass_of && !h.superclass_of_subclass) {
        int n_sub = 0;
        for (int s : *h.subclass_of) n_sub = std::max(n_sub, s + 1);
        std::vector<int> super(static_cast<std::size_t>(n_sub), -1);
        for (std::size_t s = 0; s < h.subclass_of->size(); ++s) {
            const int sub = (*h.subclass_of)[s];
            if (sub < 0 || s >= h.class_of.size()) continue;
            int& slot = super[static_cast<std::size_t>(sub)];
            if (slot == -1) slot = h.class_of[s];
        }
        h.superclass_of_subclass = std::move(super);
    }
    h.validate(label);
    return h;
}

struct LayerSpec {
    std::string name;
    int layer_index = 0;
    LayerKind kind = LayerKind::dense;
    std::string file;
    std::vector<std::size_t> shape;
    std::optional<std::string> sha256;
};

LayerSpec parse_layer_spec(const json& entry, std::size_t position, std::size_t n_samples) {
    const std::string label = "manifest.json: layers[" + std::to_string(position) + "]";
    LayerSpec spec;
    spec.name = field<std::string>(entry, "name", label);
    spec.layer_index = field<int>(entry, "layer_index", label);
    try {
        spec.kind = layer_kind_from_string(field<std::string>(entry, "kind", label));
    } catch (const FormatError&) {
        throw FormatError(label, 0, "kind must be \"dense\" or \"conv\"");
    }
    spec.file = field<std::string>(entry, "file", label);
    if (spec.file.empty() || fs::path(spec.file).is_absolute() || spec.file.find("..") != std::string::npos)
        throw FormatError(label, 0, "file must be a relative path inside the dump");
    if (field<std::string>(entry, "dtype", label) != "f32le")
        throw FormatError(label, 0, "unsupported dtype (only \"f32le\")");
    spec.shape = field<std::vector<std::size_t>>(entry, "shape", label);
    if (entry.contains("sha256")) spec.sha256 = field<std::string>(entry, "sha256", label);

    if (spec.shape.size() < 2) throw FormatError(label, 0, "shape must have at least 2 dimensions");
    if (spec.kind == LayerKind::dense && spec.shape.size() != 2)
        throw FormatError(label, 0, "dense layers must have shape [n_samples, n_neurons]");
    for (std::size_t d : spec.shape) {
        if (d == 0) throw FormatError(label, 0, "shape has a zero extent");
    }
    if (spec.shape[0] != n_samples)
        throw ValidationError(label + ": inconsistent sample counts (shape[0]=" + std::to_string(spec.shape[0]) +
                              ", n_samples=" + std::to_string(n_samples) + ")");
    return spec;
}

LayerBlock load_layer(const fs::path& dir, const LayerSpec& spec) {
    const std::string label = spec.file;
    std::size_t count = 1;
    for (std::size_t d : spec.shape) {
        if (count > (std::size_t{1} << 40) / d) throw FormatError(label, 0, "shape too large");
        count *= d;
    }
    const std::uint64_t expected = static_cast<std::uint64_t>(count) * 4;

    const std::string bytes = read_file(dir / spec.file, label);
    if (bytes.size() < expected)
        throw FormatError(label, bytes.size(),
                          "truncated payload (" + std::to_string(bytes.size()) + " of " + std::to_string(expected) +
                              " bytes)");
    if (bytes.size() > expected)
        throw FormatError(label, expected,
                          "trailing bytes (" + std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(expected) + ")");
    if (spec.sha256 && sha256_hex(std::string_view(bytes)) != *spec.sha256)
        throw FormatError(label, 0, "checksum mismatch");

    std::vector<float> values(count);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = decode_f32le(raw + 4 * i);
        if (!std::isfinite(values[i]))
            throw ValidationError(label + ": byte " + std::to_string(4 * i) + ": non-finite value");
    }

    LayerBlock block;
    block.name = spec.name;
    block.layer_index = spec.layer_index;
    block.kind = spec.kind;
    if (spec.shape.size() == 2) {
        std::vector<double> data(values.begin(), values.end());
        block.preacts = Matrix(spec.shape[0], spec.shape[1], std::move(data));
    } else {
        block.preacts = global_max_pool<float>(values, spec.shape);
    }
    return block;
}

}  // namespace

ActivationDataset load_dump(const fs::path& dir) {
    const std::string manifest_label = "manifest.json";
    const json manifest = parse_json(read_file(dir / "manifest.json", manifest_label), manifest_label);
    if (!manifest.is_object()) throw FormatError(manifest_label, 0, "top level must be an object");

    const int version = field<int>(manifest, "version", manifest_label);
    if (version != kFormatVersion)
        throw FormatError(manifest_label, 0, "unsupported version " + std::to_string(version));
    const auto model_id = field<std::string>(manifest, "model_id", manifest_label);
    const auto n_samples = field<std::size_t>(manifest, "n_samples", manifest_label);
    if (n_samples == 0) throw ValidationError(manifest_label + ": n_samples must be positive");
    const auto labels_file = field<std::string>(manifest, "labels_file", manifest_label);
    if (!manifest.contains("layers") || !manifest["layers"].is_array())
        throw FormatError(manifest_label, 0, "missing array 'layers'");
    const json& layer_entries = manifest["layers"];
    if (layer_entries.empty()) throw ValidationError(manifest_label + ": no layers declared");

    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i < layer_entries.size(); ++i)
        specs.push_back(parse_layer_spec(layer_entries[i], i, n_samples));
    for (std::size_t i = 1; i < specs.size(); ++i) {
        if (specs[i].layer_index <= specs[i - 1].layer_index)
            throw ValidationError(manifest_label + ": layers[" + std::to_string(i) +
                                  "]: layer indices must be strictly increasing");
    }

    std::vector<LayerBlock> layers;
    layers.reserve(specs.size());
    for (const auto& spec : specs) layers.push_back(load_layer(dir, spec));

    LabelHierarchy labels = load_labels(dir / labels_file, labels_file, manifest);
    if (labels.n_samples() != n_samples)
        throw ValidationError(labels_file + ": inconsistent sample counts (" + std::to_string(labels.n_samples()) +
                              " labels, n_samples=" + std::to_string(n_samples) + ")");

    std::optional<Metrics> metrics;
    if (manifest.contains("metrics") && !manifest["metrics"].is_null()) {
        const json& m = manifest["metrics"];
        metrics = Metrics{field<double>(m, "train_accuracy", "manifest.json: metrics"),
                          field<double>(m, "test_accuracy", "manifest.json: metrics")};
    }
    std::map<std::string, std::string> hyperparams;
    if (manifest.contains("hyperparams") && !manifest["hyperparams"].is_null())
        hyperparams = field<std::map<std::string, std::string>>(manifest, "hyperparams", manifest_label);

    return assemble(model_id, std::move(layers), std::move(labels), metrics, std::move(hyperparams));
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

namespace {

void write_bytes(const fs::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string(), 0, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(path.string(), 0, "write failed");
}

json labels_json(const LabelHierarchy& h) {
    json j;
    j["n_classes"] = h.n_classes;
    j["class_of"] = h.class_of;
    if (h.subclass_of) j["subclass_of"] = *h.subclass_of;
    if (h.superclass_of_subclass) j["superclass_of_subclass"] = *h.superclass_of_subclass;
    return j;
}

}  // namespace

void write_raw_dump(const DumpContents& c, const fs::path& dir, bool with_checksums) {
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = kFormatVersion;
    manifest["model_id"] = c.model_id;
    manifest["n_samples"] = c.n_samples;
    json layers = json::array();
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
        const auto& t = c.tensors[i];
        char fname[32];
        std::snprintf(fname, sizeof fname, "layer_%03zu.f32", i);
        std::string bytes(t.values.size() * 4, '\0');
        auto* p = reinterpret_cast<unsigned char*>(bytes.data());
        for (std::size_t k = 0; k < t.values.size(); ++k) encode_f32le(t.values[k], p + 4 * k);
        write_bytes(dir / fname, bytes);

        json entry;
        entry["name"] = t.name;
        entry["layer_index"] = t.layer_index;
        entry["kind"] = to_string(t.kind);
        entry["file"] = fname;
        entry["dtype"] = "f32le";
        entry["shape"] = t.shape;
        if (with_checksums) entry["sha256"] = sha256_hex(std::string_view(bytes));
        layers.push_back(std::move(entry));
    }
    manifest["layers"] = std::move(layers);

    const std::string labels_text = labels_json(c.labels).dump() + "\n";
    write_bytes(dir / "labels.json", labels_text);
    manifest["labels_file"] = "labels.json";
    if (with_checksums) manifest["labels_sha256"] = sha256_hex(std::string_view(labels_text));
    if (c.metrics)
        manifest["metrics"] = {{"train_accuracy", c.metrics->train_accuracy},
                               {"test_accuracy", c.metrics->test_accuracy}};
    if (!c.hyperparams.empty()) manifest["hyperparams"] = c.hyperparams;
    write_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_dump(const ActivationDataset& ds, const fs::path& dir) {
    DumpContents c;
    c.model_id = ds.model_id;
    c.n_samples = ds.n_samples();
    c.labels = ds.labels;
    c.metrics = ds.metrics;
    c.hyperparams = ds.hyperparams;
    for (const auto& l : ds.layers) {
        TensorEntry t;
        t.name = l.name;
        t.layer_index = l.layer_index;
        t.kind = l.kind;
        t.shape = {l.preacts.rows(), l.preacts.cols()};
        t.values.reserve(l.preacts.data().size());
        for (double v : l.preacts.data()) t.values.push_back(static_cast<float>(v));
        c.tensors.push_back(std::move(t));
    }
    write_raw_dump(c, dir);
}

}  // namespace icc::store
