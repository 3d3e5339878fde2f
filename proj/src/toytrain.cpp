#include "icc/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icc/error.hpp"
#include "icc/numeric.hpp"
#include "icc/ranking.hpp"

namespace icc::toytrain {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (n_superclasses < 1 || subclasses_per_superclass < 1 || samples_per_subclass < 1 ||
        test_samples_per_subclass < 1 || input_dim < 1)
        throw ValidationError("synthetic spec: all counts must be >= 1");
    if (!(cluster_spread > 0.0) || !(subclass_separation > 0.0) || !(superclass_separation > 0.0))
        throw ValidationError("synthetic spec: spreads and separations must be > 0");
    if (noise_dims > 0 && !(noise_std > 0.0)) throw ValidationError("synthetic spec: noise_std must be > 0");
}

json to_json(const SyntheticSpec& s) {
    return {{"n_superclasses", s.n_superclasses},
            {"subclasses_per_superclass", s.subclasses_per_superclass},
            {"samples_per_subclass", s.samples_per_subclass},
            {"test_samples_per_subclass", s.test_samples_per_subclass},
            {"input_dim", s.input_dim},
            {"noise_dims", s.noise_dims},
            {"cluster_spread", s.cluster_spread},
            {"subclass_separation", s.subclass_separation},
            {"superclass_separation", s.superclass_separation},
            {"noise_std", s.noise_std},
            {"label_mode", s.label_mode == LabelMode::superclass_as_class ? "superclass" : "subclass"},
            {"seed", s.seed}};
}

SyntheticSpec synthetic_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("synthetic spec must be a JSON object");
    SyntheticSpec s;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "n_superclasses") s.n_superclasses = v.get<std::size_t>();
            else if (key == "subclasses_per_superclass") s.subclasses_per_superclass = v.get<std::size_t>();
            else if (key == "samples_per_subclass") s.samples_per_subclass = v.get<std::size_t>();
            else if (key == "test_samples_per_subclass") s.test_samples_per_subclass = v.get<std::size_t>();
            else if (key == "input_dim") s.input_dim = v.get<std::size_t>();
            else if (key == "noise_dims") s.noise_dims = v.get<std::size_t>();
            else if (key == "cluster_spread") s.cluster_spread = v.get<double>();
            else if (key == "subclass_separation") s.subclass_separation = v.get<double>();
            else if (key == "superclass_separation") s.superclass_separation = v.get<double>();
            else if (key == "noise_std") s.noise_std = v.get<double>();
            else if (key == "seed") s.seed = v.get<std::uint64_t>();
            else if (key == "label_mode") {
                const auto m = v.get<std::string>();
                if (m == "superclass") s.label_mode = LabelMode::superclass_as_class;
                else if (m == "subclass") s.label_mode = LabelMode::subclass_as_class;
                else throw FormatError("synthetic spec: label_mode must be \"superclass\" or \"subclass\"");
            } else {
                throw FormatError("synthetic spec: unknown key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("synthetic spec: ") + e.what());
    }
    return s;
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t dim = spec.input_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    Rng centers_rng(mix_seed(spec.seed, 0));

    std::vector<std::vector<double>> sub_centers;
    std::vector<int> super_of_sub;
    for (std::size_t s = 0; s < spec.n_superclasses; ++s) {
        std::vector<double> super_center(dim);
        for (double& c : super_center) c = spec.superclass_separation * scale * centers_rng.normal();
        for (std::size_t j = 0; j < spec.subclasses_per_superclass; ++j) {
            std::vector<double> c(dim);
            for (std::size_t d = 0; d < dim; ++d)
                c[d] = super_center[d] + spec.subclass_separation * scale * centers_rng.normal();
            sub_centers.push_back(std::move(c));
            super_of_sub.push_back(static_cast<int>(s));
        }
    }

    auto make_split = [&](std::size_t per_subclass, std::uint64_t stream) {
        Rng rng(mix_seed(spec.seed, stream));
        const std::size_t n = per_subclass * sub_centers.size();
        Split split;
        split.inputs = Matrix(n, spec.total_dim());
        std::vector<int> subclass_of;
        std::size_t row = 0;
        for (std::size_t i = 0; i < sub_centers.size(); ++i) {
            for (std::size_t k = 0; k < per_subclass; ++k, ++row) {
                auto x = split.inputs.row(row);
                for (std::size_t d = 0; d < dim; ++d) x[d] = sub_centers[i][d] + spec.cluster_spread * rng.normal();
                for (std::size_t d = dim; d < x.size(); ++d) x[d] = spec.noise_std * rng.normal();
                subclass_of.push_back(static_cast<int>(i));
            }
        }
        if (spec.label_mode == LabelMode::superclass_as_class) {
            split.hierarchy = store::hierarchical_labels(subclass_of, super_of_sub);
            split.targets = split.hierarchy.class_of;
        } else {
            split.targets = subclass_of;
            split.hierarchy = store::flat_labels(subclass_of, static_cast<int>(sub_centers.size()));
        }
        return split;
    };

    SyntheticData data;
    data.train = make_split(spec.samples_per_subclass, 1);
    data.test = make_split(spec.test_samples_per_subclass, 2);
    data.n_outputs = spec.label_mode == LabelMode::superclass_as_class ? spec.n_superclasses : spec.n_subclasses();
    return data;
}

const char* to_string(Optimizer o) { return o == Optimizer::plain ? "plain" : "momentum"; }

void ToyConfig::validate() const {
    if (depth < 1 || width < 1 || batch_size < 1 || epochs < 1)
        throw ValidationError("toy config: depth, width, batch_size and epochs must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ValidationError("toy config: learning_rate must be finite and >= 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("toy config: weight_decay must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("toy config: dropout_rate must lie in [0, 1)");
    if (!(augment_noise >= 0.0)) throw ValidationError("toy config: augment_noise must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("toy config: momentum must lie in [0, 1)");
    if (!(lr_drop_factor > 0.0)) throw ValidationError("toy config: lr_drop_factor must be > 0");
}

json to_json(const ToyConfig& c) {
    return {{"depth", c.depth},
            {"width", c.width},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay},
            {"dropout_rate", c.dropout_rate},
            {"augment", c.augment},
            {"augment_noise", c.augment_noise},
            {"optimizer", to_string(c.optimizer)},
            {"momentum", c.momentum},
            {"epochs", c.epochs},
            {"lr_drop_epochs", c.lr_drop_epochs},
            {"lr_drop_factor", c.lr_drop_factor},
            {"snapshot_every", c.snapshot_every},
            {"early_stop_loss", c.early_stop_loss},
            {"seed", c.seed}};
}

ToyConfig config_from_json(const json& j, ToyConfig c) {
    if (!j.is_object()) throw FormatError("toy config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "depth") c.depth = v.get<std::size_t>();
            else if (key == "width") c.width = v.get<std::size_t>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
            else if (key == "augment") c.augment = v.get<bool>();
            else if (key == "augment_noise") c.augment_noise = v.get<double>();
            else if (key == "momentum") c.momentum = v.get<double>();
            else if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "lr_drop_epochs") c.lr_drop_epochs = v.get<std::vector<std::size_t>>();
            else if (key == "lr_drop_factor") c.lr_drop_factor = v.get<double>();
            else if (key == "snapshot_every") c.snapshot_every = v.get<std::size_t>();
            else if (key == "early_stop_loss") c.early_stop_loss = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "optimizer") {
                const auto o = v.get<std::string>();
                if (o == "plain") c.optimizer = Optimizer::plain;
                else if (o == "momentum") c.optimizer = Optimizer::momentum;
                else throw FormatError("toy config: optimizer must be \"plain\" or \"momentum\"");
            } else {
                throw FormatError("toy config: unknown key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("toy config: ") + e.what());
    }
    return c;
}

std::map<std::string, std::string> hyperparam_labels(const ToyConfig& c) {
    using ranking::format_number;
    return {{"depth", std::to_string(c.depth)},
            {"width", std::to_string(c.width)},
            {"learning_rate", format_number(c.learning_rate)},
            {"batch_size", std::to_string(c.batch_size)},
            {"weight_decay", format_number(c.weight_decay)},
            {"dropout_rate", format_number(c.dropout_rate)},
            {"augment", c.augment ? "true" : "false"},
            {"optimizer", to_string(c.optimizer)},
            {"epochs", std::to_string(c.epochs)},
            {"seed", std::to_string(c.seed)}};
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network init_network(const ToyConfig& cfg, std::size_t input_dim, std::size_t n_outputs, std::uint64_t seed) {
    Rng rng(seed);
    Network net;
    std::size_t fan_in = input_dim;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        HiddenLayer h;
        h.weight = Matrix(cfg.width, fan_in);
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& w : h.weight.data()) w = sd * rng.normal();
        h.gamma.assign(cfg.width, 1.0);
        h.beta.assign(cfg.width, 0.0);
        h.running_mean.assign(cfg.width, 0.0);
        h.running_var.assign(cfg.width, 1.0);
        net.hidden.push_back(std::move(h));
        fan_in = cfg.width;
    }
    net.out_weight = Matrix(n_outputs, fan_in);
    const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& w : net.out_weight.data()) w = sd * rng.normal();
    net.out_bias.assign(n_outputs, 0.0);
    return net;
}

std::vector<double*> parameters(Network& net) {
    std::vector<double*> p;
    for (auto& h : net.hidden) {
        for (double& w : h.weight.data()) p.push_back(&w);
        for (double& g : h.gamma) p.push_back(&g);
        for (double& b : h.beta) p.push_back(&b);
    }
    for (double& w : net.out_weight.data()) p.push_back(&w);
    for (double& b : net.out_bias) p.push_back(&b);
    return p;
}

std::vector<const double*> parameters(const Network& net) {
    auto p = parameters(const_cast<Network&>(net));
    return {p.begin(), p.end()};
}

namespace {

// out = a * w^T   (a: B x in, w: o x in)
void matmul_bt(const Matrix& a, const Matrix& w, Matrix& out) {
    out = Matrix(a.rows(), w.rows());
    for (std::size_t b = 0; b < a.rows(); ++b) {
        auto x = a.row(b);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            auto wr = w.row(o);
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * wr[i];
            out(b, o) = s;
        }
    }
}

// out = d^T * h   (d: B x o, h: B x in) -> o x in
void matmul_at(const Matrix& d, const Matrix& h, Matrix& out) {
    out = Matrix(d.cols(), h.cols());
    for (std::size_t b = 0; b < d.rows(); ++b) {
        auto hr = h.row(b);
        for (std::size_t o = 0; o < d.cols(); ++o) {
            const double g = d(b, o);
            if (g == 0.0) continue;
            auto orow = out.row(o);
            for (std::size_t i = 0; i < hr.size(); ++i) orow[i] += g * hr[i];
        }
    }
}

// out = d * w   (d: B x o, w: o x in) -> B x in
void matmul_ab(const Matrix& d, const Matrix& w, Matrix& out) {
    out = Matrix(d.rows(), w.cols());
    for (std::size_t b = 0; b < d.rows(); ++b) {
        auto orow = out.row(b);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double g = d(b, o);
            if (g == 0.0) continue;
            auto wr = w.row(o);
            for (std::size_t i = 0; i < wr.size(); ++i) orow[i] += g * wr[i];
        }
    }
}

struct ColumnStats {
    std::vector<double> mean, var;
};

ColumnStats column_stats(const Matrix& z) {
    ColumnStats s{std::vector<double>(z.cols(), 0.0), std::vector<double>(z.cols(), 0.0)};
    const double n = static_cast<double>(z.rows());
    for (std::size_t b = 0; b < z.rows(); ++b)
        for (std::size_t j = 0; j < z.cols(); ++j) s.mean[j] += z(b, j);
    for (double& m : s.mean) m /= n;
    for (std::size_t b = 0; b < z.rows(); ++b)
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double d = z(b, j) - s.mean[j];
            s.var[j] += d * d;
        }
    for (double& v : s.var) v /= n;
    return s;
}

Network zeros_like(const Network& net) {
    Network g = net;
    for (double* p : parameters(g)) *p = 0.0;
    return g;
}

bool same_shape(const Network& a, const Network& b) {
    if (a.hidden.size() != b.hidden.size() || a.out_bias.size() != b.out_bias.size()) return false;
    for (std::size_t l = 0; l < a.hidden.size(); ++l)
        if (a.hidden[l].weight.rows() != b.hidden[l].weight.rows() ||
            a.hidden[l].weight.cols() != b.hidden[l].weight.cols())
            return false;
    return a.out_weight.rows() == b.out_weight.rows() && a.out_weight.cols() == b.out_weight.cols();
}

// Copies into dst's existing buffer so parameter pointers into dst stay valid.
void copy_into(Matrix& dst, const Matrix& src) {
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
}

}  // namespace

double loss_and_gradients(const Network& net, const Matrix& x, std::span<const int> y, double weight_decay,
                          Network* grad, const std::vector<Matrix>* dropout_masks) {
    const std::size_t batch = x.rows();
    const double inv_b = 1.0 / static_cast<double>(batch);
    const std::size_t depth = net.hidden.size();

    std::vector<Matrix> inputs(depth), xhat(depth), preact(depth);
    std::vector<std::vector<double>> inv_std(depth);
    Matrix h = x;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = net.hidden[l];
        inputs[l] = h;
        Matrix z;
        matmul_bt(h, layer.weight, z);
        const auto stats = column_stats(z);
        inv_std[l].resize(z.cols());
        for (std::size_t j = 0; j < z.cols(); ++j) inv_std[l][j] = 1.0 / std::sqrt(stats.var[j] + kNormEpsilon);
        xhat[l] = Matrix(batch, z.cols());
        preact[l] = Matrix(batch, z.cols());
        h = Matrix(batch, z.cols());
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < z.cols(); ++j) {
                const double xh = (z(b, j) - stats.mean[j]) * inv_std[l][j];
                xhat[l](b, j) = xh;
                const double yv = layer.gamma[j] * xh + layer.beta[j];
                preact[l](b, j) = yv;
                double a = yv > 0.0 ? yv : 0.0;
                if (dropout_masks) a *= (*dropout_masks)[l](b, j);
                h(b, j) = a;
            }
        }
    }
    Matrix out;
    matmul_bt(h, net.out_weight, out);
    const std::size_t n_out = out.cols();
    double data_loss = 0.0;
    Matrix dlogits(batch, n_out);
    for (std::size_t b = 0; b < batch; ++b) {
        auto row = out.row(b);
        for (std::size_t o = 0; o < n_out; ++o) row[o] += net.out_bias[o];
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        const auto target = static_cast<std::size_t>(y[b]);
        data_loss += lse - row[target];
        for (std::size_t o = 0; o < n_out; ++o)
            dlogits(b, o) = (std::exp(row[o] - lse) - (o == target ? 1.0 : 0.0)) * inv_b;
    }
    data_loss *= inv_b;

    double reg = 0.0;
    if (weight_decay > 0.0) {
        for (const auto& layer : net.hidden)
            for (double w : layer.weight.data()) reg += w * w;
        for (double w : net.out_weight.data()) reg += w * w;
        reg *= 0.5 * weight_decay;
    }
    if (!grad) return data_loss + reg;

    if (same_shape(*grad, net)) {
        for (double* p : parameters(*grad)) *p = 0.0;
    } else {
        *grad = zeros_like(net);
    }
    Matrix tmp;
    matmul_at(dlogits, h, tmp);
    copy_into(grad->out_weight, tmp);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < n_out; ++o) grad->out_bias[o] += dlogits(b, o);
    Matrix dh;
    matmul_ab(dlogits, net.out_weight, dh);

    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = net.hidden[l];
        auto& g = grad->hidden[l];
        const std::size_t width = layer.gamma.size();
        Matrix dxhat(batch, width);
        std::vector<double> sum_dxhat(width, 0.0), sum_dxhat_xhat(width, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < width; ++j) {
                double da = dh(b, j);
                if (dropout_masks) da *= (*dropout_masks)[l](b, j);
                const double dy = preact[l](b, j) > 0.0 ? da : 0.0;
                g.gamma[j] += dy * xhat[l](b, j);
                g.beta[j] += dy;
                const double dx = dy * layer.gamma[j];
                dxhat(b, j) = dx;
                sum_dxhat[j] += dx;
                sum_dxhat_xhat[j] += dx * xhat[l](b, j);
            }
        }
        Matrix dz(batch, width);
        const double nb = static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < width; ++j)
                dz(b, j) = inv_std[l][j] * inv_b *
                           (nb * dxhat(b, j) - sum_dxhat[j] - xhat[l](b, j) * sum_dxhat_xhat[j]);
        matmul_at(dz, inputs[l], tmp);
        copy_into(g.weight, tmp);
        if (l > 0) matmul_ab(dz, layer.weight, dh);
    }
    if (weight_decay > 0.0) {
        for (std::size_t l = 0; l < depth; ++l) {
            auto& gw = grad->hidden[l].weight.data();
            const auto& w = net.hidden[l].weight.data();
            for (std::size_t i = 0; i < w.size(); ++i) gw[i] += weight_decay * w[i];
        }
        auto& gw = grad->out_weight.data();
        const auto& w = net.out_weight.data();
        for (std::size_t i = 0; i < w.size(); ++i) gw[i] += weight_decay * w[i];
    }
    return data_loss + reg;
}

std::vector<Matrix> hidden_preacts(const Network& net, const Matrix& x) {
    std::vector<Matrix> out;
    Matrix h = x;
    for (const auto& layer : net.hidden) {
        Matrix z;
        matmul_bt(h, layer.weight, z);
        for (std::size_t b = 0; b < z.rows(); ++b) {
            for (std::size_t j = 0; j < z.cols(); ++j) {
                const double inv = 1.0 / std::sqrt(layer.running_var[j] + kNormEpsilon);
                z(b, j) = layer.gamma[j] * (z(b, j) - layer.running_mean[j]) * inv + layer.beta[j];
            }
        }
        h = z;
        for (double& v : h.data()) v = std::max(v, 0.0);
        out.push_back(std::move(z));
    }
    return out;
}

Matrix logits(const Network& net, const Matrix& x) {
    auto pre = hidden_preacts(net, x);
    Matrix h = pre.back();
    for (double& v : h.data()) v = std::max(v, 0.0);
    Matrix out;
    matmul_bt(h, net.out_weight, out);
    for (std::size_t b = 0; b < out.rows(); ++b)
        for (std::size_t o = 0; o < out.cols(); ++o) out(b, o) += net.out_bias[o];
    return out;
}

double accuracy(const Network& net, const Split& split) {
    const Matrix out = logits(net, split.inputs);
    std::size_t correct = 0;
    for (std::size_t b = 0; b < out.rows(); ++b) {
        auto row = out.row(b);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == split.targets[b]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(out.rows());
}

void recalibrate(Network& net, const Matrix& x) {
    Matrix h = x;
    for (auto& layer : net.hidden) {
        Matrix z;
        matmul_bt(h, layer.weight, z);
        const auto stats = column_stats(z);
        layer.running_mean = stats.mean;
        layer.running_var = stats.var;
        for (std::size_t b = 0; b < z.rows(); ++b) {
            for (std::size_t j = 0; j < z.cols(); ++j) {
                const double inv = 1.0 / std::sqrt(layer.running_var[j] + kNormEpsilon);
                const double v = layer.gamma[j] * (z(b, j) - layer.running_mean[j]) * inv + layer.beta[j];
                z(b, j) = std::max(v, 0.0);
            }
        }
        h = std::move(z);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainedModel train(const ToyConfig& cfg, const SyntheticData& data, bool keep_snapshots) {
    cfg.validate();
    const Split& tr = data.train;
    const std::size_t n = tr.inputs.rows();
    if (n < 2) throw ValidationError("train: need at least 2 training samples");

    TrainedModel model;
    model.config = cfg;
    Network net = init_network(cfg, tr.inputs.cols(), data.n_outputs, mix_seed(cfg.seed, 1));
    Rng shuffle_rng(mix_seed(cfg.seed, 2));
    Rng dropout_rng(mix_seed(cfg.seed, 3));
    Rng augment_rng(mix_seed(cfg.seed, 4));

    const std::size_t snapshot_every = cfg.snapshot_every ? cfg.snapshot_every : std::max<std::size_t>(1, cfg.epochs / 10);
    auto take_snapshot = [&](std::size_t epoch, double loss) {
        Snapshot s;
        s.epoch = epoch;
        s.net = net;
        recalibrate(s.net, tr.inputs);
        s.train_accuracy = accuracy(s.net, tr);
        s.test_accuracy = accuracy(s.net, data.test);
        s.train_loss = loss;
        model.snapshots.push_back(std::move(s));
    };
    if (keep_snapshots) take_snapshot(0, loss_and_gradients(net, tr.inputs, tr.targets, 0.0, nullptr));

    // Batch boundaries; a trailing singleton batch is merged into its predecessor
    // since batch statistics need at least two samples.
    std::vector<std::size_t> bounds;
    const std::size_t bs = std::max<std::size_t>(2, std::min(cfg.batch_size, n));
    for (std::size_t start = 0; start < n; start += bs) bounds.push_back(start);
    bounds.push_back(n);
    if (bounds.size() > 2 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] < 2)
        bounds.erase(bounds.end() - 2);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Network grad = zeros_like(net);
    auto params = parameters(net);
    auto grads = parameters(grad);
    std::vector<double> velocity(params.size(), 0.0);
    double lr = cfg.learning_rate;
    double epoch_loss = 0.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (std::find(cfg.lr_drop_epochs.begin(), cfg.lr_drop_epochs.end(), epoch - 1) != cfg.lr_drop_epochs.end())
            lr *= cfg.lr_drop_factor;
        shuffle_rng.shuffle(order);
        epoch_loss = 0.0;
        for (std::size_t bi = 0; bi + 1 < bounds.size(); ++bi) {
            const std::size_t lo = bounds[bi], hi = bounds[bi + 1];
            const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            Matrix xb = tr.inputs.select_rows(idx);
            std::vector<int> yb(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) yb[k] = tr.targets[idx[k]];
            if (cfg.augment)
                for (double& v : xb.data()) v += cfg.augment_noise * augment_rng.normal();

            std::vector<Matrix> masks;
            if (cfg.dropout_rate > 0.0) {
                const double keep_scale = 1.0 / (1.0 - cfg.dropout_rate);
                for (const auto& layer : net.hidden) {
                    Matrix m(idx.size(), layer.gamma.size());
                    for (double& v : m.data()) v = dropout_rng.uniform() >= cfg.dropout_rate ? keep_scale : 0.0;
                    masks.push_back(std::move(m));
                }
            }
            const double loss = loss_and_gradients(net, xb, yb, cfg.weight_decay, &grad, masks.empty() ? nullptr : &masks);
            if (!std::isfinite(loss))
                throw ComputationError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
            epoch_loss += loss * static_cast<double>(idx.size());

            for (std::size_t p = 0; p < params.size(); ++p) {
                const double g = *grads[p];
                if (cfg.optimizer == Optimizer::momentum) {
                    velocity[p] = cfg.momentum * velocity[p] + g;
                    *params[p] -= lr * velocity[p];
                } else {
                    *params[p] -= lr * g;
                }
            }
        }
        epoch_loss /= static_cast<double>(n);
        model.epochs_run = epoch;
        const bool stop = epoch_loss < cfg.early_stop_loss;
        if (keep_snapshots && (epoch % snapshot_every == 0 || stop || epoch == cfg.epochs))
            take_snapshot(epoch, epoch_loss);
        if (stop) {
            model.early_stopped = true;
            break;
        }
    }

    recalibrate(net, tr.inputs);
    model.net = std::move(net);
    model.final_loss = epoch_loss;
    model.train_accuracy = accuracy(model.net, tr);
    model.test_accuracy = accuracy(model.net, data.test);
    return model;
}

store::ActivationDataset dump_activations(const TrainedModel& model, const SyntheticData& data,
                                          std::optional<std::size_t> at_epoch, const std::string& model_id) {
    const Network* net = &model.net;
    store::Metrics metrics{model.train_accuracy, model.test_accuracy};
    if (at_epoch) {
        const auto it = std::find_if(model.snapshots.begin(), model.snapshots.end(),
                                     [&](const Snapshot& s) { return s.epoch == *at_epoch; });
        if (it == model.snapshots.end())
            throw ValidationError("dump_activations: no snapshot at epoch " + std::to_string(*at_epoch));
        net = &it->net;
        metrics = {it->train_accuracy, it->test_accuracy};
    }
    const auto pre = hidden_preacts(*net, data.train.inputs);
    std::vector<store::LayerBlock> layers;
    for (std::size_t l = 0; l < pre.size(); ++l) {
        store::LayerBlock block;
        block.name = "hidden_" + std::to_string(l);
        block.layer_index = static_cast<int>(l);
        block.kind = store::LayerKind::dense;
        block.preacts = pre[l];
        for (double& v : block.preacts.data()) v = static_cast<double>(static_cast<float>(v));
        layers.push_back(std::move(block));
    }
    return store::assemble(model_id, std::move(layers), data.train.hierarchy, metrics,
                           hyperparam_labels(model.config));
}

}  // namespace icc::toytrain
