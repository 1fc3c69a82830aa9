#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the library's own kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "biliscope/classify.hpp"
#include "biliscope/denoiser.hpp"
#include "biliscope/raster.hpp"

namespace oracle {

using biliscope::BinaryMask;
using biliscope::GrayImage;
using biliscope::Label;
using biliscope::RealImage;

inline GrayImage random_image(int w, int h, std::mt19937_64& rng, int lo = 0, int hi = 255) {
    std::uniform_int_distribution<int> d(lo, hi);
    GrayImage img(w, h);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(d(rng));
    return img;
}

inline BinaryMask random_mask(int w, int h, double density, std::mt19937_64& rng) {
    std::bernoulli_distribution d(density);
    BinaryMask m(w, h);
    for (auto& p : m.pixels()) p = d(rng) ? 1 : 0;
    return m;
}

/// Filled disk of the given radius: (r-cr)^2 + (c-cc)^2 <= radius^2.
inline BinaryMask disk_mask(int size, int cr, int cc, double radius) {
    BinaryMask m(size, size);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double dr = r - cr;
            const double dc = c - cc;
            if (dr * dr + dc * dc <= radius * radius) m.set(r, c);
        }
    }
    return m;
}

inline GrayImage two_tone(const BinaryMask& m, std::uint8_t fg, std::uint8_t bg) {
    GrayImage img(m.width(), m.height(), bg);
    for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) {
            if (m.test(r, c)) img(r, c) = fg;
        }
    }
    return img;
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a.pixels()[i] != 0;
        const bool y = b.pixels()[i] != 0;
        inter += (x && y) ? 1 : 0;
        na += x ? 1 : 0;
        nb += y ? 1 : 0;
    }
    return na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

// --- connected components ----------------------------------------------------

/// Recursive 8-connected flood fill. Components are numbered in the raster
/// order of their first pixel.
inline std::vector<int> flood_fill_labels(const BinaryMask& m) {
    const int w = m.width();
    const int h = m.height();
    std::vector<int> lab(static_cast<std::size_t>(w * h), 0);
    std::function<void(int, int, int)> fill = [&](int r, int c, int id) {
        if (r < 0 || c < 0 || r >= h || c >= w) return;
        if (!m.test(r, c) || lab[static_cast<std::size_t>(r * w + c)] != 0) return;
        lab[static_cast<std::size_t>(r * w + c)] = id;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr != 0 || dc != 0) fill(r + dr, c + dc, id);
            }
        }
    };
    int next = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (m.test(r, c) && lab[static_cast<std::size_t>(r * w + c)] == 0) fill(r, c, ++next);
        }
    }
    return lab;
}

// --- GLCM --------------------------------------------------------------------

struct GlcmResult {
    std::vector<double> p;
    double contrast = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double correlation = 0.0;
    bool any_pair = false;
};

/// Enumerates every horizontal pair inside the mask, counts both orderings
/// and evaluates the four statistics directly from the definitions.
inline GlcmResult brute_glcm(const GrayImage& img, const BinaryMask& mask, int levels) {
    GlcmResult out;
    out.p.assign(static_cast<std::size_t>(levels * levels), 0.0);
    double pairs = 0.0;
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c + 1 < img.width(); ++c) {
            if (!mask.test(r, c) || !mask.test(r, c + 1)) continue;
            // Bin k covers [256k/L, 256(k+1)/L).
            const int a = img(r, c) * levels / 256;
            const int b = img(r, c + 1) * levels / 256;
            out.p[static_cast<std::size_t>(a * levels + b)] += 1.0;
            out.p[static_cast<std::size_t>(b * levels + a)] += 1.0;
            pairs += 2.0;
        }
    }
    if (pairs == 0.0) return out;
    out.any_pair = true;
    for (auto& v : out.p) v /= pairs;
    for (int i = 0; i < levels; ++i) {
        for (int j = 0; j < levels; ++j) {
            const double p = out.p[static_cast<std::size_t>(i * levels + j)];
            out.contrast += p * (i - j) * (i - j);
            out.mean += p * i;
        }
    }
    for (int i = 0; i < levels; ++i) {
        for (int j = 0; j < levels; ++j) {
            out.variance += out.p[static_cast<std::size_t>(i * levels + j)] * (i - out.mean) * (i - out.mean);
        }
    }
    if (out.variance > 0.0) {
        for (int i = 0; i < levels; ++i) {
            for (int j = 0; j < levels; ++j) {
                out.correlation +=
                    out.p[static_cast<std::size_t>(i * levels + j)] * (i - out.mean) * (j - out.mean);
            }
        }
        out.correlation /= out.variance;
    } else {
        out.correlation = 1.0;
    }
    return out;
}

// --- AUC ---------------------------------------------------------------------

/// Probability that a random dilated score beats a random normal one; ties count 1/2.
inline double all_pairs_auc(const std::vector<double>& scores, const std::vector<Label>& labels) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != Label::Dilated) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != Label::Normal) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / pairs;
}

// --- raster kernels ----------------------------------------------------------

/// Corner-aligned bilinear sample at output pixel (r, c), rounded half up.
/// The source position r * (h - 1) / (out_h - 1) is kept as an exact fraction.
inline std::uint8_t bilinear_exact(const GrayImage& src, int out_w, int out_h, int r, int c) {
    const long dy = out_h == 1 ? 1 : out_h - 1;
    const long dx = out_w == 1 ? 1 : out_w - 1;
    const long ny = out_h == 1 ? 0 : static_cast<long>(r) * (src.height() - 1);
    const long nx = out_w == 1 ? 0 : static_cast<long>(c) * (src.width() - 1);
    const int y0 = static_cast<int>(ny / dy);
    const int x0 = static_cast<int>(nx / dx);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const int x1 = std::min(x0 + 1, src.width() - 1);
    long num = 0;
    for (const auto& [y, wy] : {std::pair{y0, dy - ny % dy}, std::pair{y1, ny % dy}}) {
        for (const auto& [x, wx] : {std::pair{x0, dx - nx % dx}, std::pair{x1, nx % dx}}) num += wy * wx * src(y, x);
    }
    const long den = dx * dy;
    return static_cast<std::uint8_t>((2 * num + den) / (2 * den));
}

inline double pixel_replicated(const GrayImage& img, int r, int c) {
    r = std::max(0, std::min(r, img.height() - 1));
    c = std::max(0, std::min(c, img.width() - 1));
    return img(r, c);
}

/// Dark-channel dehaze evaluated pixel by pixel with explicit window loops.
inline GrayImage straight_line_dehaze(const GrayImage& img, int radius, double omega, double t_floor,
                                      double airlight_fraction) {
    const int w = img.width();
    const int h = img.height();
    std::vector<double> dark(static_cast<std::size_t>(w * h));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double m = 1e300;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) m = std::min(m, pixel_replicated(img, r + dr, c + dc));
            }
            dark[static_cast<std::size_t>(r * w + c)] = m;
        }
    }
    // Brightest dark-channel pixels, stable by raster index.
    std::vector<std::size_t> order(dark.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dark[a] > dark[b]; });
    const std::size_t top =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(airlight_fraction * static_cast<double>(w * h))));
    double a_sum = 0.0;
    for (std::size_t k = 0; k < top; ++k) a_sum += img.pixels()[order[k]];
    const double airlight = a_sum / static_cast<double>(top);
    if (airlight <= 0.0) return img;

    std::vector<double> t_raw(dark.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double m = 1e300;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    m = std::min(m, pixel_replicated(img, r + dr, c + dc) / airlight);
                }
            }
            t_raw[static_cast<std::size_t>(r * w + c)] = 1.0 - omega * m;
        }
    }
    GrayImage out(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    const int rr = std::max(0, std::min(r + dr, h - 1));
                    const int cc = std::max(0, std::min(c + dc, w - 1));
                    s += t_raw[static_cast<std::size_t>(rr * w + cc)];
                }
            }
            const double t = s / ((2 * radius + 1) * (2 * radius + 1));
            const double j = (img(r, c) - airlight) / std::max(t, t_floor) + airlight;
            out(r, c) = biliscope::quantize(j);
        }
    }
    return out;
}

// --- residual net ------------------------------------------------------------

/// Nested-loop forward pass with zero padding; returns R(y) for a [0,1] image.
inline RealImage naive_residual(const biliscope::ResidualNet& net, const RealImage& y) {
    const int w = y.width();
    const int h = y.height();
    std::vector<std::vector<double>> act(1, std::vector<double>(y.pixels().begin(), y.pixels().end()));
    for (const auto& layer : net.layers()) {
        std::vector<std::vector<double>> next(static_cast<std::size_t>(layer.out_channels),
                                              std::vector<double>(static_cast<std::size_t>(w * h), 0.0));
        for (int o = 0; o < layer.out_channels; ++o) {
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < w; ++c) {
                    double s = layer.bias[static_cast<std::size_t>(o)];
                    for (int i = 0; i < layer.in_channels; ++i) {
                        for (int ky = 0; ky < 3; ++ky) {
                            for (int kx = 0; kx < 3; ++kx) {
                                const int rr = r + ky - 1;
                                const int cc = c + kx - 1;
                                if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
                                s += layer.weight(o, i, ky, kx) *
                                     act[static_cast<std::size_t>(i)][static_cast<std::size_t>(rr * w + cc)];
                            }
                        }
                    }
                    if (layer.has_batchnorm) {
                        const auto k = static_cast<std::size_t>(o);
                        s = (s - layer.bn_mean[k]) / std::sqrt(layer.bn_var[k] + biliscope::ConvLayer::kBnEpsilon) *
                                layer.bn_scale[k] +
                            layer.bn_shift[k];
                    }
                    if (layer.has_relu) s = std::max(0.0, s);
                    next[static_cast<std::size_t>(o)][static_cast<std::size_t>(r * w + c)] = s;
                }
            }
        }
        act = std::move(next);
    }
    return RealImage(w, h, act.front());
}

/// Three-layer net with random weights and non-trivial frozen BN statistics.
inline biliscope::ResidualNet random_net(int channels, bool batchnorm, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> w(-0.4, 0.4);
    std::vector<biliscope::ConvLayer> layers;
    layers.push_back(biliscope::ConvLayer::zeros(channels, 1, true, false));
    layers.push_back(biliscope::ConvLayer::zeros(channels, channels, true, batchnorm));
    layers.push_back(biliscope::ConvLayer::zeros(1, channels, false, false));
    for (auto& l : layers) {
        for (auto& k : l.kernels) k = w(rng);
        for (auto& b : l.bias) b = 0.1 * w(rng);
        if (l.has_batchnorm) {
            for (std::size_t c = 0; c < l.bn_scale.size(); ++c) {
                l.bn_scale[c] = 1.0 + w(rng);
                l.bn_shift[c] = 0.2 * w(rng);
                l.bn_mean[c] = 0.1 * w(rng);
                l.bn_var[c] = 0.5 + std::abs(w(rng));
            }
        }
    }
    return biliscope::ResidualNet(std::move(layers));
}

// --- finite differences -------------------------------------------------------

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f with respect to *x.
template <typename F>
double central_difference(double* x, double h, F&& f) {
    const double saved = *x;
    *x = saved + h;
    const double up = f();
    *x = saved - h;
    const double down = f();
    *x = saved;
    return (up - down) / (2.0 * h);
}

}  // namespace oracle
