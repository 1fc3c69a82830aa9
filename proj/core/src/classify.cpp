#include "biliscope/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biliscope/random.hpp"
#include "tensor_blob.hpp"

namespace biliscope {

std::string_view to_string(Label label) noexcept { return label == Label::Dilated ? "dilated" : "normal"; }

Label parse_label(std::string_view text) {
    if (text == "dilated") return Label::Dilated;
    if (text == "normal") return Label::Normal;
    throw Error(ErrorKind::Parse, "unknown label '" + std::string(text) + "' (want dilated or normal)");
}

std::size_t LabeledDataset::count(Label label) const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void LabeledDataset::validate() const {
    if (rows.size() != labels.size()) throw Error(ErrorKind::DimensionMismatch, "dataset: rows and labels differ in length");
    if (!ids.empty() && ids.size() != rows.size()) throw Error(ErrorKind::DimensionMismatch, "dataset: ids and rows differ in length");
    const std::size_t d = dimension();
    for (const auto& row : rows) {
        if (row.size() != d) throw Error(ErrorKind::DimensionMismatch, "dataset: ragged feature rows");
        for (const double v : row) {
            if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "dataset: non-finite feature value");
        }
    }
    if (!feature_names.empty() && feature_names.size() != d) {
        throw Error(ErrorKind::DimensionMismatch, "dataset: feature_names do not match the row dimension");
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.feature_names = feature_names;
    for (const auto i : indices) {
        out.rows.push_back(rows.at(i));
        out.labels.push_back(labels.at(i));
        if (!ids.empty()) out.ids.push_back(ids.at(i));
    }
    return out;
}

std::string_view to_string(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::Knn: return "knn";
        case ModelKind::Svm: return "svm";
        case ModelKind::Lr: return "lr";
        case ModelKind::Dt: return "dt";
        case ModelKind::Rf: return "rf";
        case ModelKind::Mlp: return "mlp";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
    for (const auto kind : kAllModelKinds) {
        if (to_string(kind) == text) return kind;
    }
    throw Error(ErrorKind::Config, "unknown model kind '" + std::string(text) + "'");
}

ModelSpec ModelSpec::defaults(ModelKind kind, std::uint64_t seed) {
    ModelSpec spec;
    spec.kind = kind;
    spec.rng_seed = seed;
    return spec;
}

void ModelSpec::validate() const {
    auto fail = [this](const std::string& what) {
        throw Error(ErrorKind::InvalidArgument, std::string(to_string(kind)) + ": " + what);
    };
    switch (kind) {
        case ModelKind::Knn:
            if (knn.k < 1) fail("k must be >= 1");
            break;
        case ModelKind::Svm:
            if (!(svm.c > 0.0)) fail("C must be > 0");
            if (svm.gamma < 0.0) fail("gamma must be >= 0");
            if (!(svm.tolerance > 0.0)) fail("tolerance must be > 0");
            if (svm.max_passes < 1) fail("max_passes must be >= 1");
            break;
        case ModelKind::Lr:
            if (!(lr.learning_rate > 0.0)) fail("learning rate must be > 0");
            if (lr.epochs < 0) fail("epochs must be >= 0");
            break;
        case ModelKind::Dt:
            if (dt.max_depth < 0) fail("max_depth must be >= 0");
            if (dt.min_leaf < 1) fail("min_leaf must be >= 1");
            break;
        case ModelKind::Rf:
            if (rf.trees < 1) fail("trees must be >= 1");
            if (rf.tree.max_depth < 0) fail("max_depth must be >= 0");
            if (rf.tree.min_leaf < 1) fail("min_leaf must be >= 1");
            if (rf.max_features < -1) fail("max_features must be >= -1");
            break;
        case ModelKind::Mlp:
            if (mlp.hidden < 1) fail("hidden must be >= 1");
            if (!(mlp.learning_rate > 0.0)) fail("learning rate must be > 0");
            if (mlp.epochs < 0) fail("epochs must be >= 0");
            break;
    }
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double target(Label label) { return label == Label::Dilated ? 1.0 : 0.0; }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
    return std::exp(-gamma * squared_distance(a, b));
}

// --- KNN --------------------------------------------------------------------

double knn_score(const KnnState& s, std::span<const double> x) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(s.rows.size());
    for (std::size_t i = 0; i < s.rows.size(); ++i) dist.emplace_back(squared_distance(s.rows[i], x), i);
    const std::size_t k = std::min(static_cast<std::size_t>(s.k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t dilated = 0;
    for (std::size_t i = 0; i < k; ++i) dilated += s.labels[dist[i].second] == Label::Dilated ? 1 : 0;
    return static_cast<double>(dilated) / static_cast<double>(k);
}

// --- logistic regression ----------------------------------------------------

LrState train_lr(const LrParams& p, const LabeledDataset& data) {
    const std::size_t d = data.dimension();
    const auto n = static_cast<double>(data.size());
    LrState s{std::vector<double>(d, 0.0), 0.0};
    std::vector<double> grad(d);
    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double err = sigmoid(dot(s.weights, data.rows[i]) + s.bias) - target(data.labels[i]);
            for (std::size_t k = 0; k < d; ++k) grad[k] += err * data.rows[i][k];
            grad_b += err;
        }
        for (std::size_t k = 0; k < d; ++k) s.weights[k] -= p.learning_rate * grad[k] / n;
        s.bias -= p.learning_rate * grad_b / n;
    }
    return s;
}

// --- SVM (simplified SMO) -------------------------------------------------------

SvmState train_svm(const SvmParams& p, const LabeledDataset& data, std::uint64_t seed) {
    const std::size_t n = data.size();
    const double gamma = p.gamma > 0.0 ? p.gamma : 1.0 / static_cast<double>(data.dimension());
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = data.labels[i] == Label::Dilated ? 1.0 : -1.0;
    std::vector<double> kernel(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            kernel[i * n + j] = kernel[j * n + i] = rbf(data.rows[i], data.rows[j], gamma);
        }
    }
    auto k_at = [&](std::size_t i, std::size_t j) { return kernel[i * n + j]; };

    std::vector<double> alpha(n, 0.0);
    double b = 0.0;
    auto margin = [&](std::size_t i) {
        double f = b;
        for (std::size_t j = 0; j < n; ++j) {
            if (alpha[j] != 0.0) f += alpha[j] * y[j] * k_at(j, i);
        }
        return f;
    };

    Rng rng(seed);
    int passes = 0;
    // Hard cap on sweeps so adversarial data cannot spin forever.
    const long max_sweeps = 200L * static_cast<long>(p.max_passes) + 1000L;
    long sweeps = 0;
    while (passes < p.max_passes && sweeps++ < max_sweeps) {
        int changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e_i = margin(i) - y[i];
            const bool violates = (y[i] * e_i < -p.tolerance && alpha[i] < p.c) || (y[i] * e_i > p.tolerance && alpha[i] > 0.0);
            if (!violates) continue;
            std::size_t j = static_cast<std::size_t>(rng.below(n - 1));
            if (j >= i) ++j;
            const double e_j = margin(j) - y[j];
            const double ai_old = alpha[i];
            const double aj_old = alpha[j];
            double lo = 0.0;
            double hi = 0.0;
            if (y[i] != y[j]) {
                lo = std::max(0.0, aj_old - ai_old);
                hi = std::min(p.c, p.c + aj_old - ai_old);
            } else {
                lo = std::max(0.0, ai_old + aj_old - p.c);
                hi = std::min(p.c, ai_old + aj_old);
            }
            if (lo == hi) continue;
            const double eta = 2.0 * k_at(i, j) - k_at(i, i) - k_at(j, j);
            if (eta >= 0.0) continue;
            alpha[j] = std::clamp(aj_old - y[j] * (e_i - e_j) / eta, lo, hi);
            if (std::abs(alpha[j] - aj_old) < 1e-5) {
                alpha[j] = aj_old;
                continue;
            }
            alpha[i] = ai_old + y[i] * y[j] * (aj_old - alpha[j]);
            const double b1 = b - e_i - y[i] * (alpha[i] - ai_old) * k_at(i, i) - y[j] * (alpha[j] - aj_old) * k_at(i, j);
            const double b2 = b - e_j - y[i] * (alpha[i] - ai_old) * k_at(i, j) - y[j] * (alpha[j] - aj_old) * k_at(j, j);
            if (alpha[i] > 0.0 && alpha[i] < p.c) {
                b = b1;
            } else if (alpha[j] > 0.0 && alpha[j] < p.c) {
                b = b2;
            } else {
                b = 0.5 * (b1 + b2);
            }
            ++changed;
        }
        passes = changed == 0 ? passes + 1 : 0;
    }

    SvmState s;
    s.gamma = gamma;
    s.bias = b;
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0.0) {
            s.support.push_back(data.rows[i]);
            s.coef.push_back(alpha[i] * y[i]);
        }
    }
    return s;
}

double svm_margin(const SvmState& s, std::span<const double> x) {
    double f = s.bias;
    for (std::size_t i = 0; i < s.support.size(); ++i) f += s.coef[i] * rbf(s.support[i], x, s.gamma);
    return f;
}

// --- decision tree ------------------------------------------------------------

class TreeBuilder {
public:
    TreeBuilder(const LabeledDataset& data, const TreeParams& params, std::uint64_t seed)
        : data_(data), params_(params), rng_(seed) {}

    TreeState build(std::vector<std::size_t> indices) {
        TreeState tree;
        grow(tree, std::move(indices), 0);
        return tree;
    }

private:
    static double gini(double dilated, double total) {
        if (total <= 0.0) return 0.0;
        const double p = dilated / total;
        return 2.0 * p * (1.0 - p);
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t d = data_.dimension();
        std::vector<std::size_t> features(d);
        std::iota(features.begin(), features.end(), std::size_t{0});
        std::size_t k = d;
        if (params_.max_features == -1) {
            k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
        } else if (params_.max_features > 0) {
            k = std::min(d, static_cast<std::size_t>(params_.max_features));
        }
        if (k >= d) return features;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_.below(d - i));
            std::swap(features[i], features[j]);
        }
        features.resize(k);
        return features;
    }

    int grow(TreeState& tree, std::vector<std::size_t> indices, int depth) {
        const int node_index = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        const double total = static_cast<double>(indices.size());
        double dilated = 0.0;
        for (const auto i : indices) dilated += target(data_.labels[i]);
        tree.nodes[static_cast<std::size_t>(node_index)].score = total > 0.0 ? dilated / total : 0.0;

        const bool pure = dilated == 0.0 || dilated == total;
        const bool depth_exhausted = params_.max_depth > 0 && depth >= params_.max_depth;
        const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
        if (pure || depth_exhausted || indices.size() < 2 * min_leaf) return node_index;

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_impurity = 0.0;
        for (const auto f : candidate_features()) {
            std::vector<std::size_t> sorted = indices;
            std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                return data_.rows[a][f] < data_.rows[b][f];
            });
            double left_dilated = 0.0;
            for (std::size_t pos = 0; pos + 1 < sorted.size(); ++pos) {
                left_dilated += target(data_.labels[sorted[pos]]);
                const double lo = data_.rows[sorted[pos]][f];
                const double hi = data_.rows[sorted[pos + 1]][f];
                const std::size_t n_left = pos + 1;
                const std::size_t n_right = sorted.size() - n_left;
                if (lo == hi || n_left < min_leaf || n_right < min_leaf) continue;
                const double nl = static_cast<double>(n_left);
                const double nr = static_cast<double>(n_right);
                const double impurity = (nl * gini(left_dilated, nl) + nr * gini(dilated - left_dilated, nr)) / total;
                if (best_feature < 0 || impurity < best_impurity) {
                    best_feature = static_cast<int>(f);
                    best_threshold = lo + (hi - lo) / 2.0;
                    best_impurity = impurity;
                }
            }
        }
        if (best_feature < 0) return node_index;

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (const auto i : indices) {
            (data_.rows[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
        }
        const int l = grow(tree, std::move(left), depth + 1);
        const int r = grow(tree, std::move(right), depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(node_index)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return node_index;
    }

    const LabeledDataset& data_;
    TreeParams params_;
    Rng rng_;
};

ForestState train_forest(const ForestParams& p, const LabeledDataset& data, std::uint64_t seed) {
    Rng rng(seed);
    ForestState forest;
    TreeParams tree_params = p.tree;
    tree_params.max_features = p.max_features;
    const std::size_t n = data.size();
    for (int t = 0; t < p.trees; ++t) {
        const std::uint64_t tree_seed = rng.fork();
        Rng sampler(tree_seed);
        std::vector<std::size_t> indices(n);
        if (p.bootstrap) {
            for (auto& i : indices) i = static_cast<std::size_t>(sampler.below(n));
        } else {
            std::iota(indices.begin(), indices.end(), std::size_t{0});
        }
        forest.trees.push_back(TreeBuilder(data, tree_params, sampler.fork()).build(std::move(indices)));
    }
    return forest;
}

// --- MLP --------------------------------------------------------------------------

struct MlpActivations {
    std::vector<double> hidden;
    double p_dilated = 0.0;
    double p_normal = 0.0;
};

MlpActivations mlp_forward(const MlpState& net, std::span<const double> x) {
    MlpActivations a;
    a.hidden.resize(static_cast<std::size_t>(net.hidden));
    for (int j = 0; j < net.hidden; ++j) {
        double z = net.b1[static_cast<std::size_t>(j)];
        for (int i = 0; i < net.inputs; ++i) {
            z += net.w1[static_cast<std::size_t>(j * net.inputs + i)] * x[static_cast<std::size_t>(i)];
        }
        a.hidden[static_cast<std::size_t>(j)] = sigmoid(z);
    }
    std::array<double, 2> logits{net.b2[0], net.b2[1]};
    for (int k = 0; k < 2; ++k) {
        for (int j = 0; j < net.hidden; ++j) {
            logits[static_cast<std::size_t>(k)] +=
                net.w2[static_cast<std::size_t>(k * net.hidden + j)] * a.hidden[static_cast<std::size_t>(j)];
        }
    }
    // Two-way softmax written as a sigmoid of the logit gap.
    a.p_dilated = sigmoid(logits[1] - logits[0]);
    a.p_normal = 1.0 - a.p_dilated;
    return a;
}

MlpState zeros_like(const MlpState& net) {
    MlpState g;
    g.inputs = net.inputs;
    g.hidden = net.hidden;
    g.w1.assign(net.w1.size(), 0.0);
    g.b1.assign(net.b1.size(), 0.0);
    g.w2.assign(net.w2.size(), 0.0);
    g.b2.assign(net.b2.size(), 0.0);
    return g;
}

// Accumulates scale * d(-log p_y)/d(params) for one sample; returns the sample loss.
double mlp_accumulate(const MlpState& net, std::span<const double> x, Label y, double scale, MlpState& grad) {
    const MlpActivations a = mlp_forward(net, x);
    const std::array<double, 2> p{a.p_normal, a.p_dilated};
    const auto cls = static_cast<std::size_t>(y == Label::Dilated ? 1 : 0);
    const std::array<double, 2> dz{p[0] - (cls == 0 ? 1.0 : 0.0), p[1] - (cls == 1 ? 1.0 : 0.0)};
    for (int k = 0; k < 2; ++k) {
        const double g = scale * dz[static_cast<std::size_t>(k)];
        grad.b2[static_cast<std::size_t>(k)] += g;
        for (int j = 0; j < net.hidden; ++j) {
            grad.w2[static_cast<std::size_t>(k * net.hidden + j)] += g * a.hidden[static_cast<std::size_t>(j)];
        }
    }
    for (int j = 0; j < net.hidden; ++j) {
        const double h = a.hidden[static_cast<std::size_t>(j)];
        double dh = 0.0;
        for (int k = 0; k < 2; ++k) dh += dz[static_cast<std::size_t>(k)] * net.w2[static_cast<std::size_t>(k * net.hidden + j)];
        const double da = scale * dh * h * (1.0 - h);
        grad.b1[static_cast<std::size_t>(j)] += da;
        for (int i = 0; i < net.inputs; ++i) {
            grad.w1[static_cast<std::size_t>(j * net.inputs + i)] += da * x[static_cast<std::size_t>(i)];
        }
    }
    return -std::log(std::max(p[cls], 1e-300));
}

void mlp_apply(MlpState& net, const MlpState& grad, double rate) {
    for (std::size_t k = 0; k < net.w1.size(); ++k) net.w1[k] -= rate * grad.w1[k];
    for (std::size_t k = 0; k < net.b1.size(); ++k) net.b1[k] -= rate * grad.b1[k];
    for (std::size_t k = 0; k < net.w2.size(); ++k) net.w2[k] -= rate * grad.w2[k];
    for (std::size_t k = 0; k < net.b2.size(); ++k) net.b2[k] -= rate * grad.b2[k];
}

MlpState train_mlp(const MlpParams& p, const LabeledDataset& data, std::uint64_t seed) {
    MlpState net = MlpState::random(static_cast<int>(data.dimension()), p.hidden, p.init_range, seed);
    Rng rng(seed ^ 0xA0761D6478BD642FULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    MlpState grad = zeros_like(net);
    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        rng.shuffle(order);
        for (const auto i : order) {
            grad = zeros_like(net);
            mlp_accumulate(net, data.rows[i], data.labels[i], 1.0, grad);
            mlp_apply(net, grad, p.learning_rate);
        }
    }
    return net;
}

void require_both_labels(const LabeledDataset& data, ModelKind kind) {
    if (data.size() < 2 || data.count(Label::Dilated) == 0 || data.count(Label::Normal) == 0) {
        throw Error(ErrorKind::DegenerateData,
                    std::string(to_string(kind)) + ": training data needs >= 2 rows with both labels present");
    }
}

}  // namespace

double TreeState::score(std::span<const double> x) const {
    if (nodes.empty()) throw Error(ErrorKind::ModelShape, "decision tree has no nodes");
    std::size_t at = 0;
    while (nodes[at].feature >= 0) {
        const auto& node = nodes[at];
        at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
    }
    return nodes[at].score;
}

MlpState MlpState::random(int inputs, int hidden, double range, std::uint64_t seed) {
    MlpState net;
    net.inputs = inputs;
    net.hidden = hidden;
    Rng rng(seed);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (auto& x : v) x = rng.uniform(-range, range);
    };
    fill(net.w1, static_cast<std::size_t>(hidden * inputs));
    fill(net.b1, static_cast<std::size_t>(hidden));
    fill(net.w2, static_cast<std::size_t>(2 * hidden));
    fill(net.b2, 2);
    return net;
}

double MlpState::forward(std::span<const double> x) const { return mlp_forward(*this, x).p_dilated; }

double mlp_loss_and_gradient(const MlpState& net, const std::vector<std::vector<double>>& rows,
                             const std::vector<Label>& labels, MlpState* grad) {
    if (rows.empty() || rows.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "mlp loss: bad batch");
    MlpState local = zeros_like(net);
    const double scale = 1.0 / static_cast<double>(rows.size());
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) total += mlp_accumulate(net, rows[i], labels[i], scale, local);
    if (grad != nullptr) *grad = std::move(local);
    return total * scale;
}

TrainedModel::TrainedModel(ModelKind kind, std::size_t dimension, ModelState state)
    : kind_(kind), dimension_(dimension), state_(std::move(state)) {
    if (static_cast<std::size_t>(kind_) != state_.index()) {
        throw Error(ErrorKind::ModelShape, "model kind does not match its learned state");
    }
}

Label label_for_score(double score) noexcept { return score >= 0.5 ? Label::Dilated : Label::Normal; }

double TrainedModel::predict_score(std::span<const double> x) const {
    if (x.size() != dimension_) {
        throw Error(ErrorKind::DimensionMismatch, "model expects " + std::to_string(dimension_) +
                                                      " features, got " + std::to_string(x.size()));
    }
    const double score = std::visit(
        [&](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, KnnState>) {
                return knn_score(s, x);
            } else if constexpr (std::is_same_v<S, SvmState>) {
                return sigmoid(svm_margin(s, x));
            } else if constexpr (std::is_same_v<S, LrState>) {
                return sigmoid(dot(s.weights, x) + s.bias);
            } else if constexpr (std::is_same_v<S, TreeState>) {
                return s.score(x);
            } else if constexpr (std::is_same_v<S, ForestState>) {
                double sum = 0.0;
                for (const auto& tree : s.trees) sum += tree.score(x);
                return sum / static_cast<double>(s.trees.size());
            } else {
                return s.forward(x);
            }
        },
        state_);
    return std::clamp(score, 0.0, 1.0);
}

Label TrainedModel::predict_label(std::span<const double> x) const { return label_for_score(predict_score(x)); }

TrainedModel train_model(const ModelSpec& spec, const LabeledDataset& data) {
    spec.validate();
    data.validate();
    if (data.size() == 0) throw Error(ErrorKind::DegenerateData, "cannot train on an empty dataset");
    const std::size_t d = data.dimension();
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    switch (spec.kind) {
        case ModelKind::Knn:
            return TrainedModel(spec.kind, d, KnnState{spec.knn.k, data.rows, data.labels});
        case ModelKind::Svm:
            require_both_labels(data, spec.kind);
            return TrainedModel(spec.kind, d, train_svm(spec.svm, data, spec.rng_seed));
        case ModelKind::Lr:
            require_both_labels(data, spec.kind);
            return TrainedModel(spec.kind, d, train_lr(spec.lr, data));
        case ModelKind::Dt:
            require_both_labels(data, spec.kind);
            return TrainedModel(spec.kind, d, TreeBuilder(data, spec.dt, spec.rng_seed).build(all));
        case ModelKind::Rf:
            require_both_labels(data, spec.kind);
            return TrainedModel(spec.kind, d, train_forest(spec.rf, data, spec.rng_seed));
        case ModelKind::Mlp:
            require_both_labels(data, spec.kind);
            return TrainedModel(spec.kind, d, train_mlp(spec.mlp, data, spec.rng_seed));
    }
    throw Error(ErrorKind::InvalidArgument, "unhandled model kind");
}

// --- serialisation ----------------------------------------------------------------

namespace {

constexpr const char* kModelMagic = "biliscope-model";
constexpr int kModelVersion = 1;

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
    std::vector<double> out;
    for (const auto& row : rows) out.insert(out.end(), row.begin(), row.end());
    return out;
}

std::vector<std::vector<double>> unflatten(const detail::Tensor& t) {
    if (t.shape.size() != 2) throw Error(ErrorKind::ModelShape, "model blob: expected a matrix tensor");
    std::vector<std::vector<double>> rows(t.shape[0]);
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
        rows[i].assign(t.values.begin() + static_cast<std::ptrdiff_t>(i * t.shape[1]),
                       t.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.shape[1]));
    }
    return rows;
}

void write_tree(detail::TensorBlobWriter& w, const std::string& name, const TreeState& tree) {
    std::vector<double> flat;
    for (const auto& node : tree.nodes) {
        flat.insert(flat.end(), {static_cast<double>(node.feature), node.threshold, static_cast<double>(node.left),
                                 static_cast<double>(node.right), node.score});
    }
    w.tensor(name, {tree.nodes.size(), 5}, flat);
}

TreeState read_tree(const detail::Tensor& t) {
    if (t.shape.size() != 2 || t.shape[1] != 5) throw Error(ErrorKind::ModelShape, "model blob: bad tree tensor");
    TreeState tree;
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
        const double* v = t.values.data() + i * 5;
        tree.nodes.push_back(TreeNode{static_cast<int>(v[0]), v[1], static_cast<int>(v[2]), static_cast<int>(v[3]), v[4]});
    }
    const auto n = static_cast<int>(tree.nodes.size());
    for (const auto& node : tree.nodes) {
        if (node.feature >= 0 && (node.left < 0 || node.left >= n || node.right < 0 || node.right >= n)) {
            throw Error(ErrorKind::ModelShape, "model blob: tree child index out of range");
        }
    }
    return tree;
}

}  // namespace

Bytes save_model(const TrainedModel& model) {
    detail::TensorBlobWriter w(kModelMagic, kModelVersion);
    w.attribute("kind", std::string(to_string(model.kind())));
    w.attribute("dimension", std::to_string(model.dimension()));
    const std::size_t d = model.dimension();
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, KnnState>) {
                const std::vector<double> k{static_cast<double>(s.k)};
                std::vector<double> labels;
                for (const auto l : s.labels) labels.push_back(target(l));
                w.tensor("k", {1}, k);
                w.tensor("rows", {s.rows.size(), d}, flatten(s.rows));
                w.tensor("labels", {labels.size()}, labels);
            } else if constexpr (std::is_same_v<S, SvmState>) {
                const std::vector<double> scalars{s.gamma, s.bias};
                w.tensor("gamma_bias", {2}, scalars);
                w.tensor("support", {s.support.size(), d}, flatten(s.support));
                w.tensor("coef", {s.coef.size()}, s.coef);
            } else if constexpr (std::is_same_v<S, LrState>) {
                const std::vector<double> bias{s.bias};
                w.tensor("weights", {s.weights.size()}, s.weights);
                w.tensor("bias", {1}, bias);
            } else if constexpr (std::is_same_v<S, TreeState>) {
                write_tree(w, "tree", s);
            } else if constexpr (std::is_same_v<S, ForestState>) {
                const std::vector<double> count{static_cast<double>(s.trees.size())};
                w.tensor("trees", {1}, count);
                for (std::size_t t = 0; t < s.trees.size(); ++t) write_tree(w, "tree" + std::to_string(t), s.trees[t]);
            } else {
                w.tensor("w1", {static_cast<std::size_t>(s.hidden), static_cast<std::size_t>(s.inputs)}, s.w1);
                w.tensor("b1", {s.b1.size()}, s.b1);
                w.tensor("w2", {2, static_cast<std::size_t>(s.hidden)}, s.w2);
                w.tensor("b2", {2}, s.b2);
            }
        },
        model.state());
    return w.finish();
}

TrainedModel load_model(std::span<const std::uint8_t> bytes) {
    const auto blob = detail::read_tensor_blob(bytes);
    if (blob.magic != kModelMagic) throw Error(ErrorKind::Parse, "model blob: bad magic '" + blob.magic + "'");
    if (blob.version != kModelVersion) {
        throw Error(ErrorKind::UnsupportedFormat, "model blob: unsupported version " + std::to_string(blob.version));
    }
    const ModelKind kind = parse_model_kind(blob.attribute("kind"));
    const std::size_t d = std::stoul(blob.attribute("dimension"));
    auto check_cols = [d](const detail::Tensor& t) {
        if (t.shape.size() != 2 || t.shape[1] != d) throw Error(ErrorKind::ModelShape, "model blob: matrix width != dimension");
        return unflatten(t);
    };
    switch (kind) {
        case ModelKind::Knn: {
            KnnState s;
            s.k = static_cast<int>(blob.tensor("k").values.at(0));
            s.rows = check_cols(blob.tensor("rows"));
            for (const double v : blob.tensor("labels").values) s.labels.push_back(v >= 0.5 ? Label::Dilated : Label::Normal);
            if (s.labels.size() != s.rows.size()) throw Error(ErrorKind::ModelShape, "model blob: knn labels/rows mismatch");
            return TrainedModel(kind, d, std::move(s));
        }
        case ModelKind::Svm: {
            SvmState s;
            const auto& gb = blob.tensor("gamma_bias").values;
            s.gamma = gb.at(0);
            s.bias = gb.at(1);
            s.support = check_cols(blob.tensor("support"));
            s.coef = blob.tensor("coef").values;
            if (s.coef.size() != s.support.size()) throw Error(ErrorKind::ModelShape, "model blob: svm coef/support mismatch");
            return TrainedModel(kind, d, std::move(s));
        }
        case ModelKind::Lr: {
            LrState s{blob.tensor("weights").values, blob.tensor("bias").values.at(0)};
            if (s.weights.size() != d) throw Error(ErrorKind::ModelShape, "model blob: lr weight length != dimension");
            return TrainedModel(kind, d, std::move(s));
        }
        case ModelKind::Dt:
            return TrainedModel(kind, d, read_tree(blob.tensor("tree")));
        case ModelKind::Rf: {
            ForestState s;
            const auto count = static_cast<std::size_t>(blob.tensor("trees").values.at(0));
            for (std::size_t t = 0; t < count; ++t) s.trees.push_back(read_tree(blob.tensor("tree" + std::to_string(t))));
            return TrainedModel(kind, d, std::move(s));
        }
        case ModelKind::Mlp: {
            MlpState s;
            const auto& w1 = blob.tensor("w1");
            if (w1.shape.size() != 2 || w1.shape[1] != d) throw Error(ErrorKind::ModelShape, "model blob: mlp w1 shape");
            s.hidden = static_cast<int>(w1.shape[0]);
            s.inputs = static_cast<int>(d);
            s.w1 = w1.values;
            s.b1 = blob.tensor("b1").values;
            s.w2 = blob.tensor("w2").values;
            s.b2 = blob.tensor("b2").values;
            if (s.b1.size() != static_cast<std::size_t>(s.hidden) || s.w2.size() != 2 * s.b1.size() || s.b2.size() != 2) {
                throw Error(ErrorKind::ModelShape, "model blob: mlp tensor shapes disagree");
            }
            return TrainedModel(kind, d, std::move(s));
        }
    }
    throw Error(ErrorKind::Parse, "model blob: unhandled kind");
}

}  // namespace biliscope
