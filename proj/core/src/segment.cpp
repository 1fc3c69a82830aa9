#include "biliscope/segment.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace biliscope {

void SeedSpec::check_fits(int width, int height) const {
    if (!fits(width, height)) {
        throw Error(ErrorKind::SeedOutOfBounds,
                    "seed rows [" + std::to_string(top()) + "," + std::to_string(bottom()) + "] cols [" +
                        std::to_string(left()) + "," + std::to_string(right()) + "] exceed " +
                        std::to_string(width) + "x" + std::to_string(height) + " image");
    }
}

SeedSpec default_seed(int width, int height) {
    SeedSpec seed{height / 2, width / 2, SeedSpec::kDefaultHalfSize};
    seed.check_fits(width, height);
    return seed;
}

void ChanVeseParams::validate() const {
    if (iterations < 1) throw Error(ErrorKind::InvalidArgument, "chan-vese: iterations must be >= 1");
    if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "chan-vese: dt must be > 0");
    if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "chan-vese: epsilon must be > 0");
    if (snapshot_every < 0) throw Error(ErrorKind::InvalidArgument, "chan-vese: snapshot_every must be >= 0");
    if (mu < 0.0 || lambda1 < 0.0 || lambda2 < 0.0) {
        throw Error(ErrorKind::InvalidArgument, "chan-vese: mu and lambda weights must be >= 0");
    }
}

BinaryMask seed_mask(const SeedSpec& seed, int width, int height) {
    seed.check_fits(width, height);
    BinaryMask mask(width, height);
    for (int r = seed.top(); r <= seed.bottom(); ++r) {
        for (int c = seed.left(); c <= seed.right(); ++c) mask.set(r, c);
    }
    return mask;
}

LevelSet init_level_set(const SeedSpec& seed, int width, int height) {
    const BinaryMask mask = seed_mask(seed, width, height);
    LevelSet phi(width, height, -1.0);
    auto dst = phi.pixels().begin();
    for (const auto v : mask.pixels()) *dst++ = v != 0 ? 1.0 : -1.0;
    return phi;
}

double smoothed_heaviside(double phi, double epsilon) noexcept {
    return 0.5 * (1.0 + (2.0 / std::numbers::pi) * std::atan(phi / epsilon));
}

double smoothed_delta(double phi, double epsilon) noexcept {
    return epsilon / (std::numbers::pi * (epsilon * epsilon + phi * phi));
}

BinaryMask mask_of(const LevelSet& phi) {
    BinaryMask mask(phi.width(), phi.height());
    auto dst = mask.pixels().begin();
    for (const double v : phi.pixels()) *dst++ = v >= 0.0 ? 1 : 0;
    return mask;
}

namespace {

constexpr double kGradRegularizer = 1e-8;
// The descent runs on the energy divided by 255^2, i.e. in [0, 1] intensity units.
constexpr double kForceScale = 1.0 / (255.0 * 255.0);

void check_shapes(const LevelSet& phi, const GrayImage& img) {
    if (!phi.same_shape(img)) throw Error(ErrorKind::DimensionMismatch, "chan-vese: level set and image differ in size");
}

// Unit normal of phi from central differences; each component is bounded by 1.
struct NormalField {
    RealImage x;
    RealImage y;
};

NormalField normal_field(const LevelSet& phi) {
    NormalField n{RealImage(phi.width(), phi.height()), RealImage(phi.width(), phi.height())};
    for (int r = 0; r < phi.height(); ++r) {
        for (int c = 0; c < phi.width(); ++c) {
            const double phi_x = 0.5 * (phi.clamped(r, c + 1) - phi.clamped(r, c - 1));
            const double phi_y = 0.5 * (phi.clamped(r + 1, c) - phi.clamped(r - 1, c));
            const double norm = std::sqrt(phi_x * phi_x + phi_y * phi_y + kGradRegularizer);
            n.x(r, c) = phi_x / norm;
            n.y(r, c) = phi_y / norm;
        }
    }
    return n;
}

// Divergence of the unit normal, again by central differences.
double divergence_at(const NormalField& n, int r, int c) {
    return 0.5 * (n.x.clamped(r, c + 1) - n.x.clamped(r, c - 1)) + 0.5 * (n.y.clamped(r + 1, c) - n.y.clamped(r - 1, c));
}

struct RegionMeans {
    double c1;
    double c2;
};

RegionMeans region_means(const LevelSet& phi, const GrayImage& img, double epsilon, double prev_c1, double prev_c2) {
    double in_sum = 0.0;
    double in_weight = 0.0;
    double out_sum = 0.0;
    double out_weight = 0.0;
    std::size_t inside = 0;
    const auto p = phi.pixels();
    const auto u = img.pixels();
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double h = smoothed_heaviside(p[k], epsilon);
        if (p[k] >= 0.0) {
            in_sum += h * u[k];
            in_weight += h;
            ++inside;
        } else {
            out_sum += (1.0 - h) * u[k];
            out_weight += 1.0 - h;
        }
    }
    RegionMeans means{prev_c1, prev_c2};
    if (inside > 0 && in_weight > 0.0) means.c1 = in_sum / in_weight;
    if (inside < p.size() && out_weight > 0.0) means.c2 = out_sum / out_weight;
    return means;
}

}  // namespace

RealImage curvature(const LevelSet& phi) {
    const NormalField n = normal_field(phi);
    RealImage out(phi.width(), phi.height());
    for (int r = 0; r < phi.height(); ++r) {
        for (int c = 0; c < phi.width(); ++c) out(r, c) = divergence_at(n, r, c);
    }
    return out;
}

CvState initial_state(LevelSet phi, const GrayImage& img, const ChanVeseParams& params) {
    check_shapes(phi, img);
    double total = 0.0;
    double in_sum = 0.0;
    std::size_t inside = 0;
    const auto p = phi.pixels();
    const auto u = img.pixels();
    for (std::size_t k = 0; k < p.size(); ++k) {
        total += u[k];
        if (p[k] >= 0.0) {
            in_sum += u[k];
            ++inside;
        }
    }
    const double global = total / static_cast<double>(p.size());
    const std::size_t outside = p.size() - inside;
    CvState state{std::move(phi), global, global, 0.0, 0};
    if (inside > 0) state.c1 = in_sum / static_cast<double>(inside);
    if (outside > 0) state.c2 = (total - in_sum) / static_cast<double>(outside);
    state.energy = level_set_energy(state.phi, img, state.c1, state.c2, params);
    return state;
}

double level_set_energy(const LevelSet& phi, const GrayImage& img, double c1, double c2,
                        const ChanVeseParams& params) {
    check_shapes(phi, img);
    double length = 0.0;
    double area = 0.0;
    double fit_in = 0.0;
    double fit_out = 0.0;
    for (int r = 0; r < phi.height(); ++r) {
        for (int c = 0; c < phi.width(); ++c) {
            const double v = phi(r, c);
            const double gx = 0.5 * (phi.clamped(r, c + 1) - phi.clamped(r, c - 1));
            const double gy = 0.5 * (phi.clamped(r + 1, c) - phi.clamped(r - 1, c));
            const double h = smoothed_heaviside(v, params.epsilon);
            const double u = img(r, c);
            length += smoothed_delta(v, params.epsilon) * std::sqrt(gx * gx + gy * gy);
            area += h;
            fit_in += (u - c1) * (u - c1) * h;
            fit_out += (u - c2) * (u - c2) * (1.0 - h);
        }
    }
    return params.mu * length + params.nu * area + params.lambda1 * fit_in + params.lambda2 * fit_out;
}

double mask_energy(const BinaryMask& mask, const GrayImage& img, const ChanVeseParams& params) {
    if (!mask.same_shape(img)) throw Error(ErrorKind::DimensionMismatch, "mask energy: size mismatch");
    double sum_in = 0.0;
    double sum_out = 0.0;
    std::size_t n_in = 0;
    std::size_t edges = 0;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            const bool in = mask.test(r, c);
            if (in) {
                sum_in += img(r, c);
                ++n_in;
            } else {
                sum_out += img(r, c);
            }
            if (c + 1 < mask.width() && mask.test(r, c + 1) != in) ++edges;
            if (r + 1 < mask.height() && mask.test(r + 1, c) != in) ++edges;
        }
    }
    const std::size_t n_out = mask.size() - n_in;
    const double c1 = n_in > 0 ? sum_in / static_cast<double>(n_in) : 0.0;
    const double c2 = n_out > 0 ? sum_out / static_cast<double>(n_out) : 0.0;
    double fit_in = 0.0;
    double fit_out = 0.0;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            const double u = img(r, c);
            if (mask.test(r, c)) {
                fit_in += (u - c1) * (u - c1);
            } else {
                fit_out += (u - c2) * (u - c2);
            }
        }
    }
    return params.mu * static_cast<double>(edges) + params.nu * static_cast<double>(n_in) +
           params.lambda1 * fit_in + params.lambda2 * fit_out;
}

namespace {

// Advances phi in place by one explicit step; returns the means used.
RegionMeans advance(LevelSet& phi, LevelSet& scratch, const GrayImage& img, const ChanVeseParams& params,
                    double prev_c1, double prev_c2) {
    const RegionMeans means = region_means(phi, img, params.epsilon, prev_c1, prev_c2);
    const NormalField n = normal_field(phi);
    const int h = phi.height();
    const int w = phi.width();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double v = phi(r, c);
            const double u = img(r, c);
            const double force = params.mu * divergence_at(n, r, c) - params.nu -
                                 params.lambda1 * (u - means.c1) * (u - means.c1) +
                                 params.lambda2 * (u - means.c2) * (u - means.c2);
            scratch(r, c) = v + params.dt * smoothed_delta(v, params.epsilon) * force * kForceScale;
        }
    }
    std::swap(phi, scratch);
    return means;
}

}  // namespace

CvState cv_step(const CvState& state, const GrayImage& img, const ChanVeseParams& params) {
    params.validate();
    check_shapes(state.phi, img);
    CvState next{state.phi, state.c1, state.c2, 0.0, state.iteration + 1};
    LevelSet scratch(img.width(), img.height());
    const RegionMeans means = advance(next.phi, scratch, img, params, state.c1, state.c2);
    next.c1 = means.c1;
    next.c2 = means.c2;
    next.energy = level_set_energy(next.phi, img, next.c1, next.c2, params);
    return next;
}

Segmentation run_chan_vese(const GrayImage& img, const SeedSpec& seed, const ChanVeseParams& params,
                           const SegmentObserver& observer) {
    params.validate();
    seed.check_fits(img.width(), img.height());
    CvState state = initial_state(init_level_set(seed, img.width(), img.height()), img, params);
    std::vector<BinaryMask> snapshots;
    std::vector<int> snapshot_iterations;
    if (params.snapshot_every > 0) {
        snapshots.push_back(mask_of(state.phi));
        snapshot_iterations.push_back(0);
        if (observer) observer(0, &snapshots.back());
    }
    LevelSet scratch(img.width(), img.height());
    for (int it = 1; it <= params.iterations; ++it) {
        const RegionMeans means = advance(state.phi, scratch, img, params, state.c1, state.c2);
        state.c1 = means.c1;
        state.c2 = means.c2;
        state.iteration = it;
        const BinaryMask* snapshot = nullptr;
        if (params.snapshot_every > 0 && it % params.snapshot_every == 0) {
            snapshots.push_back(mask_of(state.phi));
            snapshot_iterations.push_back(it);
            snapshot = &snapshots.back();
        }
        if (observer) observer(it, snapshot);
    }
    state.energy = level_set_energy(state.phi, img, state.c1, state.c2, params);
    BinaryMask mask = mask_of(state.phi);
    return Segmentation{std::move(mask), std::move(snapshots), std::move(snapshot_iterations), std::move(state)};
}

}  // namespace biliscope
