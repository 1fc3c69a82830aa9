#include "biliscope/denoiser.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "biliscope/random.hpp"

namespace biliscope {

ConvLayer ConvLayer::zeros(int out_channels, int in_channels, bool relu, bool batchnorm) {
    ConvLayer layer;
    layer.out_channels = out_channels;
    layer.in_channels = in_channels;
    layer.kernels.assign(static_cast<std::size_t>(out_channels * in_channels * kKernel * kKernel), 0.0);
    layer.bias.assign(static_cast<std::size_t>(out_channels), 0.0);
    layer.has_relu = relu;
    layer.has_batchnorm = batchnorm;
    if (batchnorm) {
        layer.bn_scale.assign(static_cast<std::size_t>(out_channels), 1.0);
        layer.bn_shift.assign(static_cast<std::size_t>(out_channels), 0.0);
        layer.bn_mean.assign(static_cast<std::size_t>(out_channels), 0.0);
        layer.bn_var.assign(static_cast<std::size_t>(out_channels), 1.0);
    }
    return layer;
}

std::size_t ConvLayer::parameter_count() const noexcept {
    return kernels.size() + bias.size() +
           (has_batchnorm ? bn_scale.size() + bn_shift.size() + bn_mean.size() + bn_var.size() : 0);
}

void ConvLayer::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::ModelShape, "conv layer: " + what); };
    if (out_channels < 1 || in_channels < 1) fail("channel counts must be positive");
    const auto out = static_cast<std::size_t>(out_channels);
    if (kernels.size() != out * static_cast<std::size_t>(in_channels) * kKernel * kKernel) {
        fail("kernel tensor is not out x in x 3 x 3");
    }
    if (bias.size() != out) fail("bias length differs from out_channels");
    if (has_batchnorm) {
        if (bn_scale.size() != out || bn_shift.size() != out || bn_mean.size() != out || bn_var.size() != out) {
            fail("batch-norm vectors differ from out_channels");
        }
        for (const double v : bn_var) {
            if (!(v >= 0.0)) fail("batch-norm variance must be >= 0");
        }
    } else if (!bn_scale.empty() || !bn_shift.empty() || !bn_mean.empty() || !bn_var.empty()) {
        fail("batch-norm parameters present without the batch-norm flag");
    }
}

bool operator==(const ConvLayer& a, const ConvLayer& b) {
    return a.out_channels == b.out_channels && a.in_channels == b.in_channels && a.kernels == b.kernels &&
           a.bias == b.bias && a.has_relu == b.has_relu && a.has_batchnorm == b.has_batchnorm &&
           a.bn_scale == b.bn_scale && a.bn_shift == b.bn_shift && a.bn_mean == b.bn_mean && a.bn_var == b.bn_var;
}

bool operator==(const ResidualNet& a, const ResidualNet& b) { return a.layers_ == b.layers_; }

ResidualNet::ResidualNet(std::vector<ConvLayer> layers) : layers_(std::move(layers)) {
    if (static_cast<int>(layers_.size()) < kMinDepth) {
        throw Error(ErrorKind::ModelShape, "residual net needs at least " + std::to_string(kMinDepth) +
                                               " layers, got " + std::to_string(layers_.size()));
    }
    for (const auto& layer : layers_) layer.validate();
    if (layers_.front().in_channels != 1) throw Error(ErrorKind::ModelShape, "first layer must read 1 channel");
    if (layers_.back().out_channels != 1) throw Error(ErrorKind::ModelShape, "last layer must emit 1 channel");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        if (layers_[i].in_channels != layers_[i - 1].out_channels) {
            throw Error(ErrorKind::ModelShape, "layer " + std::to_string(i) + " reads " +
                                                   std::to_string(layers_[i].in_channels) +
                                                   " channels but layer " + std::to_string(i - 1) + " emits " +
                                                   std::to_string(layers_[i - 1].out_channels));
        }
    }
}

ResidualNet ResidualNet::make(int depth, int channels, std::uint64_t seed) {
    if (depth < kMinDepth) throw Error(ErrorKind::ModelShape, "depth must be >= 3");
    if (channels < 1) throw Error(ErrorKind::ModelShape, "channels must be >= 1");
    Rng rng(seed);
    std::vector<ConvLayer> layers;
    layers.reserve(static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
        const bool first = d == 0;
        const bool last = d == depth - 1;
        const int in = first ? 1 : channels;
        const int out = last ? 1 : channels;
        auto layer = ConvLayer::zeros(out, in, !last, !first && !last);
        const double he = std::sqrt(2.0 / (in * ConvLayer::kKernel * ConvLayer::kKernel));
        const double scale = last ? 0.1 * he : he;
        for (auto& w : layer.kernels) w = rng.normal(0.0, scale);
        layers.push_back(std::move(layer));
    }
    return ResidualNet(std::move(layers));
}

namespace {

/// Channel-major feature stack: index (ch * height + row) * width + col.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int ch, int h, int w)
        : channels(ch), height(h), width(w), data(static_cast<std::size_t>(ch) * h * w, 0.0) {}

    [[nodiscard]] double* plane(int ch) { return data.data() + static_cast<std::size_t>(ch) * height * width; }
    [[nodiscard]] const double* plane(int ch) const {
        return data.data() + static_cast<std::size_t>(ch) * height * width;
    }
};

struct LayerCache {
    FeatureMap input;
    FeatureMap conv;      // conv + bias, before batch norm
    FeatureMap pre_relu;  // after batch norm
};

// Cross-correlation with zero padding.
FeatureMap conv_forward(const ConvLayer& layer, const FeatureMap& in) {
    const int h = in.height;
    const int w = in.width;
    FeatureMap out(layer.out_channels, h, w);
    for (int o = 0; o < layer.out_channels; ++o) {
        double* dst_plane = out.plane(o);
        std::fill(dst_plane, dst_plane + static_cast<std::ptrdiff_t>(h) * w, layer.bias[static_cast<std::size_t>(o)]);
        for (int i = 0; i < layer.in_channels; ++i) {
            const double* src_plane = in.plane(i);
            for (int ky = 0; ky < ConvLayer::kKernel; ++ky) {
                const int dy = ky - 1;
                for (int kx = 0; kx < ConvLayer::kKernel; ++kx) {
                    const int dx = kx - 1;
                    const double wgt = layer.weight(o, i, ky, kx);
                    if (wgt == 0.0) continue;
                    const int r0 = std::max(0, -dy);
                    const int r1 = std::min(h, h - dy);
                    const int c0 = std::max(0, -dx);
                    const int c1 = std::min(w, w - dx);
                    for (int r = r0; r < r1; ++r) {
                        double* dst = dst_plane + static_cast<std::ptrdiff_t>(r) * w;
                        const double* src = src_plane + static_cast<std::ptrdiff_t>(r + dy) * w + dx;
                        for (int c = c0; c < c1; ++c) dst[c] += wgt * src[c];
                    }
                }
            }
        }
    }
    return out;
}

void conv_backward(const ConvLayer& layer, const FeatureMap& in, const FeatureMap& dout, ConvLayer& grad,
                   FeatureMap* din) {
    const int h = in.height;
    const int w = in.width;
    for (int o = 0; o < layer.out_channels; ++o) {
        const double* g_plane = dout.plane(o);
        double bias_sum = 0.0;
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(h) * w; ++k) bias_sum += g_plane[k];
        grad.bias[static_cast<std::size_t>(o)] += bias_sum;
        for (int i = 0; i < layer.in_channels; ++i) {
            const double* src_plane = in.plane(i);
            double* din_plane = din != nullptr ? din->plane(i) : nullptr;
            for (int ky = 0; ky < ConvLayer::kKernel; ++ky) {
                const int dy = ky - 1;
                for (int kx = 0; kx < ConvLayer::kKernel; ++kx) {
                    const int dx = kx - 1;
                    const double wgt = layer.weight(o, i, ky, kx);
                    const int r0 = std::max(0, -dy);
                    const int r1 = std::min(h, h - dy);
                    const int c0 = std::max(0, -dx);
                    const int c1 = std::min(w, w - dx);
                    double acc = 0.0;
                    for (int r = r0; r < r1; ++r) {
                        const double* g = g_plane + static_cast<std::ptrdiff_t>(r) * w;
                        const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(r + dy) * w + dx;
                        const double* src = src_plane + offset;
                        for (int c = c0; c < c1; ++c) acc += g[c] * src[c];
                        if (din_plane != nullptr) {
                            double* d = din_plane + offset;
                            for (int c = c0; c < c1; ++c) d[c] += wgt * g[c];
                        }
                    }
                    grad.weight(o, i, ky, kx) += acc;
                }
            }
        }
    }
}

double bn_gain(const ConvLayer& layer, int ch) {
    const auto c = static_cast<std::size_t>(ch);
    return layer.bn_scale[c] / std::sqrt(layer.bn_var[c] + ConvLayer::kBnEpsilon);
}

FeatureMap forward(const ResidualNet& net, const RealImage& input, std::vector<LayerCache>* caches) {
    FeatureMap x(1, input.height(), input.width());
    std::copy(input.pixels().begin(), input.pixels().end(), x.data.begin());
    if (caches != nullptr) caches->clear();
    for (const auto& layer : net.layers()) {
        LayerCache cache;
        FeatureMap z = conv_forward(layer, x);
        FeatureMap y = z;
        if (layer.has_batchnorm) {
            const std::size_t plane = static_cast<std::size_t>(y.height) * y.width;
            for (int ch = 0; ch < y.channels; ++ch) {
                const double gain = bn_gain(layer, ch);
                const double mean = layer.bn_mean[static_cast<std::size_t>(ch)];
                const double shift = layer.bn_shift[static_cast<std::size_t>(ch)];
                double* p = y.plane(ch);
                for (std::size_t k = 0; k < plane; ++k) p[k] = (p[k] - mean) * gain + shift;
            }
        }
        FeatureMap out = y;
        if (layer.has_relu) {
            for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
        }
        if (caches != nullptr) {
            cache.input = std::move(x);
            cache.conv = std::move(z);
            cache.pre_relu = std::move(y);
            caches->push_back(std::move(cache));
        }
        x = std::move(out);
    }
    return x;
}

NetGradient zero_gradient(const ResidualNet& net) {
    NetGradient grad;
    for (const auto& layer : net.layers()) {
        auto g = ConvLayer::zeros(layer.out_channels, layer.in_channels, layer.has_relu, layer.has_batchnorm);
        if (layer.has_batchnorm) {
            std::fill(g.bn_scale.begin(), g.bn_scale.end(), 0.0);
            std::fill(g.bn_var.begin(), g.bn_var.end(), 0.0);
        }
        grad.push_back(std::move(g));
    }
    return grad;
}

void backward(const ResidualNet& net, const std::vector<LayerCache>& caches, FeatureMap dout, NetGradient& grad) {
    for (int li = net.depth() - 1; li >= 0; --li) {
        const auto& layer = net.layers()[static_cast<std::size_t>(li)];
        const auto& cache = caches[static_cast<std::size_t>(li)];
        auto& g = grad[static_cast<std::size_t>(li)];
        const std::size_t plane = static_cast<std::size_t>(dout.height) * dout.width;
        if (layer.has_relu) {
            for (std::size_t k = 0; k < dout.data.size(); ++k) {
                if (!(cache.pre_relu.data[k] > 0.0)) dout.data[k] = 0.0;
            }
        }
        if (layer.has_batchnorm) {
            for (int ch = 0; ch < dout.channels; ++ch) {
                const auto c = static_cast<std::size_t>(ch);
                const double inv_std = 1.0 / std::sqrt(layer.bn_var[c] + ConvLayer::kBnEpsilon);
                const double gain = layer.bn_scale[c] * inv_std;
                const double mean = layer.bn_mean[c];
                double* d = dout.plane(ch);
                const double* z = cache.conv.plane(ch);
                double d_scale = 0.0;
                double d_shift = 0.0;
                for (std::size_t k = 0; k < plane; ++k) {
                    d_scale += d[k] * (z[k] - mean) * inv_std;
                    d_shift += d[k];
                    d[k] *= gain;
                }
                g.bn_scale[c] += d_scale;
                g.bn_shift[c] += d_shift;
            }
        }
        FeatureMap din;
        const bool need_din = li > 0;
        if (need_din) din = FeatureMap(layer.in_channels, dout.height, dout.width);
        conv_backward(layer, cache.input, dout, g, need_din ? &din : nullptr);
        if (need_din) dout = std::move(din);
    }
}

template <typename Fn>
void for_each_trainable(std::vector<ConvLayer>& params, const NetGradient& grad, Fn fn) {
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto& p = params[l];
        const auto& g = grad[l];
        for (std::size_t k = 0; k < p.kernels.size(); ++k) fn(p.kernels[k], g.kernels[k]);
        for (std::size_t k = 0; k < p.bias.size(); ++k) fn(p.bias[k], g.bias[k]);
        for (std::size_t k = 0; k < p.bn_scale.size(); ++k) fn(p.bn_scale[k], g.bn_scale[k]);
        for (std::size_t k = 0; k < p.bn_shift.size(); ++k) fn(p.bn_shift[k], g.bn_shift[k]);
    }
}

}  // namespace

RealImage residual(const ResidualNet& net, const RealImage& noisy) {
    FeatureMap out = forward(net, noisy, nullptr);
    return RealImage(noisy.width(), noisy.height(), std::move(out.data));
}

GrayImage infer(const ResidualNet& net, const GrayImage& img) {
    const RealImage y = to_real(img, 1.0 / 255.0);
    const RealImage r = residual(net, y);
    GrayImage out(img.width(), img.height());
    const auto yv = y.pixels();
    const auto rv = r.pixels();
    const auto dst = out.pixels();
    for (std::size_t k = 0; k < yv.size(); ++k) dst[k] = quantize(std::clamp(yv[k] - rv[k], 0.0, 1.0) * 255.0);
    return out;
}

double loss_and_gradient(const ResidualNet& net, std::span<const RealPair> pairs, NetGradient* grad) {
    if (pairs.empty()) throw Error(ErrorKind::InvalidArgument, "loss: no training pairs");
    for (const auto& pair : pairs) {
        if (!pair.noisy.same_shape(pair.clean)) {
            throw Error(ErrorKind::DimensionMismatch, "loss: noisy and clean images differ in size");
        }
    }
    if (grad != nullptr) *grad = zero_gradient(net);
    const double n = static_cast<double>(pairs.size());
    double total = 0.0;
    std::vector<LayerCache> caches;
    for (const auto& pair : pairs) {
        FeatureMap r = forward(net, pair.noisy, grad != nullptr ? &caches : nullptr);
        const auto y = pair.noisy.pixels();
        const auto x = pair.clean.pixels();
        for (std::size_t k = 0; k < r.data.size(); ++k) {
            const double diff = r.data[k] - (y[k] - x[k]);
            total += diff * diff;
            r.data[k] = diff / n;  // d loss / d R
        }
        if (grad != nullptr) backward(net, caches, std::move(r), *grad);
    }
    return total / (2.0 * n);
}

double loss(const ResidualNet& net, std::span<const ImagePair> pairs) {
    std::vector<RealPair> real;
    real.reserve(pairs.size());
    for (const auto& pair : pairs) {
        real.push_back(RealPair{to_real(pair.noisy, 1.0 / 255.0), to_real(pair.clean, 1.0 / 255.0)});
    }
    return loss_and_gradient(net, real, nullptr);
}

void TrainConfig::validate() const {
    if (!(noise_sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "train: noise_sigma must be > 0");
    if (patch_size < 8) throw Error(ErrorKind::InvalidArgument, "train: patch_size must be >= 8");
    if (epochs < 0) throw Error(ErrorKind::InvalidArgument, "train: epochs must be >= 0");
    if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "train: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw Error(ErrorKind::InvalidArgument, "train: momentum must lie in [0, 1)");
    if (clip_norm < 0.0) throw Error(ErrorKind::InvalidArgument, "train: clip_norm must be >= 0");
}

ResidualNet train(const TrainConfig& cfg, std::span<const GrayImage> clean_images, const EpochCallback& on_epoch) {
    cfg.validate();
    if (clean_images.empty()) throw Error(ErrorKind::InvalidArgument, "train: no clean patches");
    for (const auto& img : clean_images) {
        if (img.width() < cfg.patch_size || img.height() < cfg.patch_size) {
            throw Error(ErrorKind::InvalidArgument, "train: clean image smaller than patch_size");
        }
    }
    ResidualNet net = ResidualNet::make(cfg.depth, cfg.channels, cfg.rng_seed);
    Rng rng(cfg.rng_seed ^ 0xD1B54A32D192ED03ULL);
    NetGradient velocity = zero_gradient(net);
    const int ps = cfg.patch_size;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(clean_images.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<RealPair> batch;
            for (std::size_t k = start; k < stop; ++k) {
                const auto& src = clean_images[order[k]];
                const int r0 = rng.between(0, src.height() - ps);
                const int c0 = rng.between(0, src.width() - ps);
                RealImage clean(ps, ps);
                RealImage noisy(ps, ps);
                for (int r = 0; r < ps; ++r) {
                    for (int c = 0; c < ps; ++c) {
                        const double v = src(r0 + r, c0 + c);
                        clean(r, c) = v / 255.0;
                        noisy(r, c) = quantize(v + rng.normal(0.0, cfg.noise_sigma)) / 255.0;
                    }
                }
                batch.push_back(RealPair{std::move(noisy), std::move(clean)});
            }
            NetGradient grad;
            epoch_loss += loss_and_gradient(net, batch, &grad);
            ++batches;

            double scale = 1.0;
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for_each_trainable(net.mutable_layers(), grad, [&](double&, double g) { sq += g * g; });
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
            }
            // velocity <- momentum * velocity - lr * g; then apply.
            for_each_trainable(velocity, grad, [&](double& v, double g) {
                v = cfg.momentum * v - cfg.learning_rate * scale * g;
            });
            for_each_trainable(net.mutable_layers(), velocity, [](double& p, double v) { p += v; });
        }
        if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));
    }
    return net;
}

namespace {

void put_f32(Bytes& out, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

double get_f32(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(b)]) << (8 * b);
    offset += 4;
    return static_cast<double>(std::bit_cast<float>(bits));
}

constexpr int kFlagRelu = 1;
constexpr int kFlagBatchnorm = 2;

}  // namespace

Bytes save_weights(const ResidualNet& net) {
    std::ostringstream header;
    for (const auto& layer : net.layers()) {
        const int flags = (layer.has_relu ? kFlagRelu : 0) | (layer.has_batchnorm ? kFlagBatchnorm : 0);
        header << layer.out_channels << ' ' << layer.in_channels << ' ' << flags << '\n';
    }
    header << '\n';
    const std::string text = header.str();
    Bytes out(text.begin(), text.end());
    for (const auto& layer : net.layers()) {
        for (const double v : layer.kernels) put_f32(out, v);
        for (const double v : layer.bias) put_f32(out, v);
        if (layer.has_batchnorm) {
            for (const auto* vec : {&layer.bn_scale, &layer.bn_shift, &layer.bn_mean, &layer.bn_var}) {
                for (const double v : *vec) put_f32(out, v);
            }
        }
    }
    return out;
}

ResidualNet load_weights(std::span<const std::uint8_t> bytes) {
    std::vector<ConvLayer> layers;
    std::size_t pos = 0;
    bool terminated = false;
    while (pos < bytes.size()) {
        std::size_t eol = pos;
        while (eol < bytes.size() && bytes[eol] != '\n') ++eol;
        if (eol == bytes.size()) break;
        const std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(eol));
        pos = eol + 1;
        if (line.empty()) {
            terminated = true;
            break;
        }
        std::istringstream fields(line);
        int out = 0;
        int in = 0;
        int flags = 0;
        std::string extra;
        if (!(fields >> out >> in >> flags) || (fields >> extra) || out < 1 || in < 1 || flags < 0 || flags > 3) {
            throw Error(ErrorKind::Parse, "weight manifest: malformed layer line '" + line + "'");
        }
        layers.push_back(ConvLayer::zeros(out, in, (flags & kFlagRelu) != 0, (flags & kFlagBatchnorm) != 0));
    }
    if (!terminated) throw Error(ErrorKind::Parse, "weight manifest: missing blank terminator line");

    std::size_t need = 0;
    for (const auto& layer : layers) need += layer.parameter_count() * 4;
    if (bytes.size() - pos != need) {
        throw Error(ErrorKind::ModelShape, "weight payload holds " + std::to_string(bytes.size() - pos) +
                                               " bytes, manifest needs " + std::to_string(need));
    }
    for (auto& layer : layers) {
        for (auto* vec : {&layer.kernels, &layer.bias}) {
            for (auto& v : *vec) v = get_f32(bytes, pos);
        }
        if (layer.has_batchnorm) {
            for (auto* vec : {&layer.bn_scale, &layer.bn_shift, &layer.bn_mean, &layer.bn_var}) {
                for (auto& v : *vec) v = get_f32(bytes, pos);
            }
        }
    }
    return ResidualNet(std::move(layers));
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "gaussian: sigma must be > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-(k * k) / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (auto& w : taps) w /= sum;
    return taps;
}

GrayImage gaussian_fallback(const GrayImage& img, double sigma) {
    const auto taps = gaussian_kernel(sigma);
    const int radius = static_cast<int>(taps.size() / 2);
    RealImage horizontal(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += taps[static_cast<std::size_t>(k + radius)] * img.clamped(r, c + k);
            horizontal(r, c) = s;
        }
    }
    GrayImage out(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += taps[static_cast<std::size_t>(k + radius)] * horizontal.clamped(r + k, c);
            out(r, c) = quantize(s);
        }
    }
    return out;
}

double psnr(const GrayImage& reference, const GrayImage& test) {
    if (!reference.same_shape(test)) throw Error(ErrorKind::DimensionMismatch, "psnr: size mismatch");
    double sq = 0.0;
    const auto a = reference.pixels();
    const auto b = test.pixels();
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sq += d * d;
    }
    if (sq == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sq / static_cast<double>(a.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace biliscope
