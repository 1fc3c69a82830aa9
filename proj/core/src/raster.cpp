#include "biliscope/raster.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <string_view>

namespace biliscope {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Parse: return "parse";
        case ErrorKind::UnsupportedFormat: return "unsupported-format";
        case ErrorKind::ModelShape: return "model-shape";
        case ErrorKind::DimensionMismatch: return "dimension-mismatch";
        case ErrorKind::SeedOutOfBounds: return "seed-out-of-bounds";
        case ErrorKind::NoRegion: return "no-region";
        case ErrorKind::DegenerateTexture: return "degenerate-texture";
        case ErrorKind::DegenerateData: return "degenerate-data";
        case ErrorKind::UndefinedAuc: return "undefined-auc";
        case ErrorKind::Stratification: return "stratification";
        case ErrorKind::CorpusQuality: return "corpus-quality";
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

std::size_t BinaryMask::count() const noexcept {
    std::size_t n = 0;
    for (const auto v : pixels()) n += v != 0 ? 1 : 0;
    return n;
}

namespace {

struct NetpbmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    std::size_t data_offset = 0;
};

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::string next_token() {
        skip_space_and_comments();
        std::string token;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
            token.push_back(static_cast<char>(bytes_[pos_++]));
        }
        return token;
    }

    int next_int(std::string_view what) {
        const std::string token = next_token();
        int value = 0;
        const auto* first = token.data();
        const auto* last = token.data() + token.size();
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (token.empty() || ec != std::errc{} || ptr != last) {
            throw Error(ErrorKind::Parse, "netpbm header: invalid " + std::string(what) +
                                              " token '" + token + "'");
        }
        return value;
    }

    /// Exactly one whitespace byte separates maxval from the raster.
    void consume_single_space() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw Error(ErrorKind::Parse, "netpbm header: missing whitespace after maxval");
        }
        ++pos_;
    }

    [[nodiscard]] std::size_t position() const noexcept { return pos_; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

NetpbmHeader parse_header(std::span<const std::uint8_t> bytes, std::size_t channels) {
    if (bytes.empty()) throw Error(ErrorKind::Parse, "netpbm: empty payload");
    HeaderReader reader(bytes);
    NetpbmHeader header;
    header.magic = reader.next_token();
    if (header.magic.size() != 2 || header.magic[0] != 'P') {
        throw Error(ErrorKind::Parse, "netpbm header: invalid magic token '" + header.magic + "'");
    }
    const std::string expected = channels == 1 ? "P5" : "P6";
    if (header.magic != expected) {
        throw Error(ErrorKind::UnsupportedFormat,
                    "netpbm: magic '" + header.magic + "' is not supported here (want " + expected + ")");
    }
    header.width = reader.next_int("width");
    header.height = reader.next_int("height");
    if (header.width < 1 || header.height < 1) {
        throw Error(ErrorKind::Parse, "netpbm header: non-positive dimensions " +
                                          std::to_string(header.width) + "x" +
                                          std::to_string(header.height));
    }
    const int maxval = reader.next_int("maxval");
    if (maxval != 255) {
        throw Error(ErrorKind::UnsupportedFormat,
                    "netpbm: maxval " + std::to_string(maxval) + " unsupported (only 255)");
    }
    reader.consume_single_space();
    header.data_offset = reader.position();

    const std::size_t need = static_cast<std::size_t>(header.width) *
                              static_cast<std::size_t>(header.height) * channels;
    const std::size_t have = bytes.size() - header.data_offset;
    if (have < need) {
        throw Error(ErrorKind::Parse, "netpbm: truncated raster, expected " + std::to_string(need) +
                                          " bytes, got " + std::to_string(have));
    }
    return header;
}

Bytes header_bytes(std::string_view magic, int width, int height) {
    const std::string text = std::string(magic) + "\n" + std::to_string(width) + " " +
                             std::to_string(height) + "\n255\n";
    return Bytes(text.begin(), text.end());
}

// Bilinear weights as fractions fx/dx and fy/dy; the blend is rounded half up
// in integer arithmetic.
struct Lerp {
    std::int64_t fx;
    std::int64_t dx;
    std::int64_t fy;
    std::int64_t dy;

    std::uint8_t operator()(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
        const std::int64_t top = (dx - fx) * a + fx * b;
        const std::int64_t bottom = (dx - fx) * c + fx * d;
        const std::int64_t num = (dy - fy) * top + fy * bottom;
        const std::int64_t den = dx * dy;
        return static_cast<std::uint8_t>((2 * num + den) / (2 * den));
    }
};

template <typename Pixel, typename Mix>
Raster<Pixel> resample(const Raster<Pixel>& img, int width, int height, Mix mix) {
    if (width < 1 || height < 1) {
        throw Error(ErrorKind::InvalidArgument, "resize target must be positive");
    }
    Raster<Pixel> out(width, height);
    const int src_w = img.width();
    const int src_h = img.height();
    // Source coordinates are r * (src_h - 1) / (height - 1), kept as exact fractions.
    const std::int64_t den_y = height > 1 ? height - 1 : 1;
    const std::int64_t den_x = width > 1 ? width - 1 : 1;
    for (int r = 0; r < height; ++r) {
        const std::int64_t num_y = height > 1 ? static_cast<std::int64_t>(r) * (src_h - 1) : 0;
        const int y0 = static_cast<int>(num_y / den_y);
        const int y1 = std::min(y0 + 1, src_h - 1);
        const std::int64_t fy = num_y % den_y;
        for (int c = 0; c < width; ++c) {
            const std::int64_t num_x = width > 1 ? static_cast<std::int64_t>(c) * (src_w - 1) : 0;
            const int x0 = static_cast<int>(num_x / den_x);
            const int x1 = std::min(x0 + 1, src_w - 1);
            const Lerp w{num_x % den_x, den_x, fy, den_y};
            out(r, c) = mix(img(y0, x0), img(y0, x1), img(y1, x0), img(y1, x1), w);
        }
    }
    return out;
}

}  // namespace

GrayImage load_pgm(std::span<const std::uint8_t> bytes) {
    const auto header = parse_header(bytes, 1);
    const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(header.data_offset);
    std::vector<std::uint8_t> data(first, first + static_cast<std::ptrdiff_t>(header.width) * header.height);
    return GrayImage(header.width, header.height, std::move(data));
}

RgbImage load_ppm(std::span<const std::uint8_t> bytes) {
    const auto header = parse_header(bytes, 3);
    RgbImage img(header.width, header.height);
    std::size_t offset = header.data_offset;
    for (auto& px : img.pixels()) {
        px = Rgb{bytes[offset], bytes[offset + 1], bytes[offset + 2]};
        offset += 3;
    }
    return img;
}

Bytes save_pgm(const GrayImage& img) {
    Bytes out = header_bytes("P5", img.width(), img.height());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

Bytes save_ppm(const RgbImage& img) {
    Bytes out = header_bytes("P6", img.width(), img.height());
    out.reserve(out.size() + img.size() * 3);
    for (const auto& px : img.pixels()) {
        out.push_back(px.red);
        out.push_back(px.green);
        out.push_back(px.blue);
    }
    return out;
}

std::variant<GrayImage, RgbImage> decode_netpbm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return load_ppm(bytes);
    return load_pgm(bytes);
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to '" + path.string() + "'");
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

GrayImage to_grayscale(const RgbImage& img) {
    GrayImage out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto& px : img.pixels()) {
        // 0.3 R + 0.59 G + 0.11 B in hundredths; +50 rounds half up exactly.
        const int weighted = 30 * px.red + 59 * px.green + 11 * px.blue;
        *dst++ = static_cast<std::uint8_t>(std::min(255, (weighted + 50) / 100));
    }
    return out;
}

RgbImage to_rgb(const GrayImage& img) {
    RgbImage out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto v : img.pixels()) *dst++ = Rgb{v, v, v};
    return out;
}

RealImage to_real(const GrayImage& img, double scale) {
    RealImage out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto v : img.pixels()) *dst++ = v * scale;
    return out;
}

GrayImage to_gray(const RealImage& img, double scale) {
    GrayImage out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto v : img.pixels()) *dst++ = quantize(v * scale);
    return out;
}

GrayImage mask_to_gray(const BinaryMask& mask) {
    GrayImage out(mask.width(), mask.height());
    auto dst = out.pixels().begin();
    for (const auto v : mask.pixels()) *dst++ = v != 0 ? 255 : 0;
    return out;
}

BinaryMask gray_to_mask(const GrayImage& img) {
    BinaryMask out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto v : img.pixels()) *dst++ = v >= 128 ? 1 : 0;
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
    if (img.width() == width && img.height() == height) return img;
    return resample(img, width, height,
                    [](std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d, const Lerp& w) { return w(a, b, c, d); });
}

RgbImage resize_bilinear(const RgbImage& img, int width, int height) {
    if (img.width() == width && img.height() == height) return img;
    return resample(img, width, height, [](const Rgb& a, const Rgb& b, const Rgb& c, const Rgb& d, const Lerp& w) {
        return Rgb{w(a.red, b.red, c.red, d.red), w(a.green, b.green, c.green, d.green), w(a.blue, b.blue, c.blue, d.blue)};
    });
}

GrayImage resize_to_512(const GrayImage& img) { return resize_bilinear(img, kWorkingSize, kWorkingSize); }
RgbImage resize_to_512(const RgbImage& img) { return resize_bilinear(img, kWorkingSize, kWorkingSize); }

GrayImage complement(const GrayImage& img) {
    GrayImage out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto v : img.pixels()) *dst++ = static_cast<std::uint8_t>(255 - v);
    return out;
}

RealImage box_blur3x3(const GrayImage& img) {
    RealImage out(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            int sum = 0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) sum += img.clamped(r + dr, c + dc);
            }
            out(r, c) = sum / 9.0;
        }
    }
    return out;
}

GrayImage sharpen(const GrayImage& img, double amount) {
    const RealImage blurred = box_blur3x3(img);
    GrayImage out(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            const double v = img(r, c);
            out(r, c) = quantize(v + amount * (v - blurred(r, c)));
        }
    }
    return out;
}

}  // namespace biliscope
