#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "biliscope/raster.hpp"

namespace biliscope {

/// 3x3 convolution, optionally followed by inference-mode batch
/// normalisation and then ReLU. Kernels are indexed
/// [out][in][ky][kx] row-major.
struct ConvLayer {
    static constexpr int kKernel = 3;
    static constexpr double kBnEpsilon = 1e-5;

    int out_channels = 0;
    int in_channels = 0;
    std::vector<double> kernels;
    std::vector<double> bias;
    bool has_relu = false;
    bool has_batchnorm = false;
    std::vector<double> bn_scale;
    std::vector<double> bn_shift;
    std::vector<double> bn_mean;
    std::vector<double> bn_var;

    /// Zero weights; identity batch-norm parameters when enabled.
    [[nodiscard]] static ConvLayer zeros(int out_channels, int in_channels, bool relu, bool batchnorm);

    [[nodiscard]] double& weight(int out, int in, int ky, int kx) {
        return kernels[static_cast<std::size_t>(((out * in_channels + in) * kKernel + ky) * kKernel + kx)];
    }
    [[nodiscard]] double weight(int out, int in, int ky, int kx) const {
        return kernels[static_cast<std::size_t>(((out * in_channels + in) * kKernel + ky) * kKernel + kx)];
    }

    /// Number of real parameters serialised for this layer.
    [[nodiscard]] std::size_t parameter_count() const noexcept;

    void validate() const;
};

class ResidualNet {
public:
    static constexpr int kMinDepth = 3;

    /// Throws ModelShape when the layer chain is inconsistent.
    explicit ResidualNet(std::vector<ConvLayer> layers);

    /// DnCNN layout: conv+ReLU, (depth-2) x conv+BN+ReLU, conv. Weights are
    /// He-initialised from the seed; the output layer starts near zero.
    [[nodiscard]] static ResidualNet make(int depth, int channels, std::uint64_t seed);

    [[nodiscard]] int depth() const noexcept { return static_cast<int>(layers_.size()); }
    [[nodiscard]] const std::vector<ConvLayer>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::vector<ConvLayer>& mutable_layers() noexcept { return layers_; }

    friend bool operator==(const ResidualNet&, const ResidualNet&);

private:
    std::vector<ConvLayer> layers_;
};

bool operator==(const ConvLayer& a, const ConvLayer& b);

/// Residual R(y) for an image already scaled to [0, 1].
[[nodiscard]] RealImage residual(const ResidualNet& net, const RealImage& noisy);

/// Denoised = clamp(y - R(y)) on the [0, 1] scale, requantised to 8 bits.
[[nodiscard]] GrayImage infer(const ResidualNet& net, const GrayImage& img);

struct ImagePair {
    GrayImage noisy;
    GrayImage clean;
};

/// Real-valued pair on the [0, 1] scale.
struct RealPair {
    RealImage noisy;
    RealImage clean;
};

/// Gradient buffers shaped like the network (bn_mean/bn_var stay zero: the
/// statistics are frozen).
using NetGradient = std::vector<ConvLayer>;

/// (1/2N) * sum_i ||R(y_i) - (y_i - x_i)||_F^2 on the [0, 1] scale.
[[nodiscard]] double loss(const ResidualNet& net, std::span<const ImagePair> pairs);

/// Same objective over real pairs; fills `grad` when non-null.
double loss_and_gradient(const ResidualNet& net, std::span<const RealPair> pairs, NetGradient* grad);

struct TrainConfig {
    double noise_sigma = 25.0;
    int patch_size = 40;
    int epochs = 10;
    int batch_size = 8;
    double learning_rate = 0.01;
    double momentum = 0.9;
    /// Global gradient-norm clip, 0 disables.
    double clip_norm = 0.5;
    int depth = 17;
    int channels = 16;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

/// Per-epoch training hook (epoch index, mean loss over the epoch).
using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Minibatch SGD with momentum on the residual objective. Each epoch crops a
/// random patch from every clean image and adds fresh Gaussian noise.
[[nodiscard]] ResidualNet train(const TrainConfig& cfg, std::span<const GrayImage> clean_images,
                                const EpochCallback& on_epoch = {});

[[nodiscard]] Bytes save_weights(const ResidualNet& net);
[[nodiscard]] ResidualNet load_weights(std::span<const std::uint8_t> bytes);

/// Separable Gaussian blur truncated at 3 sigma, replicated borders.
[[nodiscard]] GrayImage gaussian_fallback(const GrayImage& img, double sigma);

/// Normalised 1-D Gaussian taps of radius ceil(3 sigma).
[[nodiscard]] std::vector<double> gaussian_kernel(double sigma);

/// Peak signal-to-noise ratio in dB for 8-bit images; +inf when identical.
[[nodiscard]] double psnr(const GrayImage& reference, const GrayImage& test);

}  // namespace biliscope
