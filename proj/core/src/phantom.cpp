#include "biliscope/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "biliscope/denoiser.hpp"
#include "biliscope/random.hpp"

namespace biliscope {

void PhantomSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "phantom: " + what); };
    if (size < 32) fail("size must be >= 32");
    if (duct_width_px < 2) fail("duct_width_px must be >= 2");
    if (branch_count < 0) fail("branch_count must be >= 0");
    if (branch_width_px < 1) fail("branch_width_px must be >= 1");
    if (bg_intensity < 0 || fg_intensity > 255 || fg_intensity <= bg_intensity) {
        fail("intensities must satisfy 0 <= bg < fg <= 255");
    }
    if (noise_sigma < 0.0) fail("noise_sigma must be >= 0");
    if (!(haze_strength >= 0.0 && haze_strength < 1.0)) fail("haze_strength must lie in [0, 1)");
    if (!(meander_wavelength_px > 0.0)) fail("meander_wavelength_px must be > 0");
    if (meander_ratio < 0.0 || length_fraction <= 0.0 || length_per_width < 0.0) fail("negative geometry factor");
    if (!(fov_mm > 0.0 && reference_px > 0.0)) fail("fov_mm and reference_px must be > 0");
    if (appearance.psf_sigma < 0.0 || appearance.debris_gain < 0.0 || !(appearance.debris_scale_px > 0.0)) {
        fail("invalid appearance parameters");
    }
}

namespace {

RealImage blur(const RealImage& img, double sigma) {
    const std::vector<double> taps = gaussian_kernel(sigma);
    const int radius = static_cast<int>(taps.size() / 2);
    RealImage tmp(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += taps[static_cast<std::size_t>(k + radius)] * img.clamped(r, c + k);
            tmp(r, c) = s;
        }
    }
    RealImage out(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += taps[static_cast<std::size_t>(k + radius)] * tmp.clamped(r + k, c);
            out(r, c) = s;
        }
    }
    return out;
}

double distance_to_segment(double py, double px, double ay, double ax, double by, double bx) {
    const double dy = by - ay;
    const double dx = bx - ax;
    const double len2 = dy * dy + dx * dx;
    const double t = len2 > 0.0 ? std::clamp(((py - ay) * dy + (px - ax) * dx) / len2, 0.0, 1.0) : 0.0;
    return std::hypot(py - (ay + t * dy), px - (ax + t * dx));
}

// Smooth field in [0, 1] from a few random low-frequency cosines.
RealImage haze_field(int size, Rng& rng) {
    struct Wave {
        double fy, fx, phase, weight;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 3; ++k) {
        waves.push_back(Wave{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(0.0, 2.0 * std::numbers::pi),
                             rng.uniform(0.5, 1.0)});
    }
    RealImage field(size, size);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            double v = 0.0;
            for (const auto& w : waves) {
                v += w.weight * std::cos(2.0 * std::numbers::pi * (w.fy * r + w.fx * c) / size + w.phase);
            }
            field(r, c) = v;
        }
    }
    const auto px = field.pixels();
    const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
    const double min = *lo;
    const double range = *hi - *lo;
    for (auto& v : px) v = range > 0.0 ? (v - min) / range : 0.0;
    return field;
}

}  // namespace

PhantomSample generate(const PhantomSpec& spec) {
    spec.validate();
    const int n = spec.size;
    const int w = spec.duct_width_px;
    const double cy = n / 2;
    const double cx = n / 2;
    const auto& look = spec.appearance;

    auto outside = [&](const std::string& part) {
        throw Error(ErrorKind::InvalidArgument, "phantom: " + part + " leaves the " + std::to_string(n) + "x" +
                                                    std::to_string(n) + " image (width " + std::to_string(w) + ")");
    };
    auto partial_volume = [&](double width) {
        return look.partial_volume_width_px > 0.0 ? std::min(1.0, width / look.partial_volume_width_px) : 1.0;
    };

    BinaryMask duct(n, n);
    BinaryMask tree(n, n);
    // Relative fill strength in [0, 1] over the tree.
    RealImage fill(n, n, 0.0);

    const int length = static_cast<int>(std::lround(spec.length_fraction * n + spec.length_per_width * w));
    const int top = static_cast<int>(cy) - length / 2;
    const int bottom = top + length - 1;
    const double amplitude = spec.meander_ratio * w;
    auto centre = [&](int row) {
        return cx + amplitude * std::sin(2.0 * std::numbers::pi * (row - cy) / spec.meander_wavelength_px);
    };
    if (top < 1 || bottom > n - 2) outside("duct");
    const double duct_pv = partial_volume(w);
    for (int r = top; r <= bottom; ++r) {
        const int c0 = static_cast<int>(std::floor(centre(r) - w / 2.0 + 0.5));
        if (c0 < 1 || c0 + w > n - 1) outside("duct");
        for (int k = 0; k < w; ++k) {
            duct.set(r, c0 + k);
            tree.set(r, c0 + k);
            const double u = 2.0 * (k + 0.5) / w - 1.0;
            fill(r, c0 + k) = duct_pv * (look.tube_profile ? std::sqrt(1.0 - u * u) : 1.0);
        }
    }

    const int bw = spec.branch_width_px;
    const double half_bw = bw / 2.0;
    const double branch_len = spec.branch_length_fraction * n;
    const double branch_pv = partial_volume(bw);
    const double angle = 40.0 * std::numbers::pi / 180.0;
    for (int b = 0; b < spec.branch_count; ++b) {
        const double side = b % 2 == 0 ? -1.0 : 1.0;
        const double oy = top - spec.branch_gap_px - bw - (b / 2) * 0.06 * n;
        const double ox = centre(top);
        const double ey = oy - branch_len * std::cos(angle);
        const double ex = ox + side * branch_len * std::sin(angle);
        if (ey - half_bw < 1.0 || ex - half_bw < 1.0 || ex + half_bw > n - 2.0) outside("branch");
        const int r0 = static_cast<int>(std::floor(ey - half_bw));
        const int r1 = static_cast<int>(std::ceil(oy + half_bw));
        const int c0 = static_cast<int>(std::floor(std::min(ox, ex) - half_bw));
        const int c1 = static_cast<int>(std::ceil(std::max(ox, ex) + half_bw));
        for (int r = std::max(r0, 0); r <= std::min(r1, n - 1); ++r) {
            for (int c = std::max(c0, 0); c <= std::min(c1, n - 1); ++c) {
                const double d = distance_to_segment(r, c, oy, ox, ey, ex);
                if (d > half_bw || duct.test(r, c)) continue;
                tree.set(r, c);
                const double u = half_bw > 0.0 ? d / (half_bw + 0.5) : 0.0;
                const double v = branch_pv * (look.tube_profile ? std::sqrt(std::max(0.0, 1.0 - u * u)) : 1.0);
                fill(r, c) = std::max(fill(r, c), v);
            }
        }
    }

    Rng root(spec.rng_seed);
    Rng debris_rng(root.fork());
    Rng haze_rng(root.fork());
    Rng noise_rng(root.fork());

    const double contrast = spec.fg_intensity - spec.bg_intensity;
    RealImage scene(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) scene(r, c) = spec.bg_intensity + contrast * fill(r, c);
    }

    const double debris = look.debris_gain * std::max(0.0, w - look.debris_onset_px);
    if (debris > 0.0) {
        RealImage white(n, n);
        for (auto& v : white.pixels()) v = debris_rng.normal();
        RealImage field = blur(white, look.debris_scale_px);
        double sq = 0.0;
        for (const double v : field.pixels()) sq += v * v;
        const double norm = std::sqrt(sq / static_cast<double>(field.size()));
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (duct.test(r, c)) scene(r, c) += debris * field(r, c) / norm;
            }
        }
    }
    if (look.psf_sigma > 0.0) scene = blur(scene, look.psf_sigma);
    if (spec.haze_strength > 0.0) {
        const RealImage field = haze_field(n, haze_rng);
        auto s = scene.pixels();
        const auto f = field.pixels();
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] *= 1.0 - spec.haze_strength * f[i];
        }
    }
    if (spec.noise_sigma > 0.0) {
        for (auto& v : scene.pixels()) v += noise_rng.normal(0.0, spec.noise_sigma);
    }

    GrayImage image(n, n);
    auto dst = image.pixels().begin();
    for (const double v : scene.pixels()) *dst++ = quantize(v);
    return PhantomSample{"", w, std::move(image), std::move(tree), std::move(duct), spec.label()};
}

void CorpusSpec::validate() const {
    base.validate();
    if (n_per_class < 1) throw Error(ErrorKind::InvalidArgument, "corpus: n_per_class must be >= 1");
    if (normal_min_width < 2 || normal_min_width > normal_max_width || dilated_min_width > dilated_max_width) {
        throw Error(ErrorKind::InvalidArgument, "corpus: width ranges must be non-empty with widths >= 2");
    }
    const double threshold = base.dilation_threshold_px();
    if (!(normal_max_width <= threshold && dilated_min_width > threshold)) {
        throw Error(ErrorKind::InvalidArgument, "corpus: width ranges must straddle the dilation threshold of " +
                                                    std::to_string(threshold) + " px");
    }
}

std::vector<PhantomSample> generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed);
    std::vector<int> widths;
    for (int i = 0; i < spec.n_per_class; ++i) widths.push_back(rng.between(spec.normal_min_width, spec.normal_max_width));
    for (int i = 0; i < spec.n_per_class; ++i) widths.push_back(rng.between(spec.dilated_min_width, spec.dilated_max_width));
    rng.shuffle(widths);

    std::vector<PhantomSample> samples;
    samples.reserve(widths.size());
    for (std::size_t i = 0; i < widths.size(); ++i) {
        PhantomSpec one = spec.base;
        one.duct_width_px = widths[i];
        one.rng_seed = rng.fork();
        PhantomSample sample = generate(one);
        char id[32];
        std::snprintf(id, sizeof id, "ph%04zu", i + 1);
        sample.id = id;
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::filesystem::path write_corpus(const std::vector<PhantomSample>& samples, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::ostringstream manifest;
    manifest << kManifestHeader << '\n';
    for (const auto& s : samples) {
        const fs::path image = fs::path("images") / (s.id + ".pgm");
        const fs::path tree = fs::path("masks") / (s.id + "_tree.pgm");
        const fs::path duct = fs::path("masks") / (s.id + "_duct.pgm");
        write_file(dir / image, save_pgm(s.image));
        write_file(dir / tree, save_pgm(mask_to_gray(s.tree_mask)));
        write_file(dir / duct, save_pgm(mask_to_gray(s.duct_mask)));
        manifest << s.id << ',' << to_string(s.label) << ',' << s.duct_width_px << ',' << image.generic_string() << ','
                 << tree.generic_string() << ',' << duct.generic_string() << '\n';
    }
    const fs::path path = dir / "manifest.csv";
    const std::string text = manifest.str();
    write_file(path, Bytes(text.begin(), text.end()));
    return path;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path q(p);
        return q.is_absolute() ? q : base / q;
    };
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line == kManifestHeader) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 6) throw Error(ErrorKind::Parse, where + ": expected 6 fields, got " + std::to_string(fields.size()));
        ManifestEntry e;
        e.id = fields[0];
        e.label = parse_label(fields[1]);
        try {
            e.duct_width_px = std::stoi(fields[2]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Parse, where + ": bad duct width '" + fields[2] + "'");
        }
        e.image_path = resolve(fields[3]);
        e.tree_mask_path = resolve(fields[4]);
        e.duct_mask_path = resolve(fields[5]);
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace biliscope
