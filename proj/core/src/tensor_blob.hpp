#pragma once

// Named float32 tensors behind a line-oriented manifest. Internal to the
// model serialisers.

#include <bit>
#include <cstdint>
#include <map>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "biliscope/error.hpp"
#include "biliscope/raster.hpp"

namespace biliscope::detail {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

class TensorBlobWriter {
public:
    TensorBlobWriter(std::string magic, int version) {
        manifest_ << magic << ' ' << version << '\n';
    }

    void attribute(const std::string& key, const std::string& value) { manifest_ << key << ' ' << value << '\n'; }

    void tensor(const std::string& name, std::vector<std::size_t> shape, std::span<const double> values) {
        manifest_ << "tensor " << name;
        for (const auto d : shape) manifest_ << ' ' << d;
        manifest_ << '\n';
        for (const double v : values) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) payload_.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    }

    [[nodiscard]] Bytes finish() {
        manifest_ << '\n';
        const std::string text = manifest_.str();
        Bytes out(text.begin(), text.end());
        out.insert(out.end(), payload_.begin(), payload_.end());
        return out;
    }

private:
    std::ostringstream manifest_;
    Bytes payload_;
};

struct TensorBlob {
    std::string magic;
    int version = 0;
    std::map<std::string, std::string> attributes;
    std::map<std::string, Tensor> tensors;

    [[nodiscard]] const std::string& attribute(const std::string& key) const {
        const auto it = attributes.find(key);
        if (it == attributes.end()) throw Error(ErrorKind::Parse, "model blob: missing attribute '" + key + "'");
        return it->second;
    }

    [[nodiscard]] const Tensor& tensor(const std::string& name) const {
        const auto it = tensors.find(name);
        if (it == tensors.end()) throw Error(ErrorKind::Parse, "model blob: missing tensor '" + name + "'");
        return it->second;
    }
};

inline TensorBlob read_tensor_blob(std::span<const std::uint8_t> bytes) {
    TensorBlob blob;
    std::vector<std::string> order;
    std::size_t pos = 0;
    bool first = true;
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
        std::string key;
        fields >> key;
        if (first) {
            blob.magic = key;
            if (!(fields >> blob.version)) throw Error(ErrorKind::Parse, "model blob: bad version line '" + line + "'");
            first = false;
            continue;
        }
        if (key == "tensor") {
            std::string name;
            fields >> name;
            Tensor t;
            std::size_t d = 0;
            while (fields >> d) t.shape.push_back(d);
            if (name.empty() || t.shape.empty()) throw Error(ErrorKind::Parse, "model blob: bad tensor line '" + line + "'");
            order.push_back(name);
            blob.tensors[name] = std::move(t);
        } else {
            std::string value;
            std::getline(fields >> std::ws, value);
            blob.attributes[key] = value;
        }
    }
    if (!terminated) throw Error(ErrorKind::Parse, "model blob: manifest lacks a blank terminator line");
    for (const auto& name : order) {
        Tensor& t = blob.tensors[name];
        std::size_t count = 1;
        for (const auto d : t.shape) count *= d;
        if (bytes.size() - pos < count * 4) throw Error(ErrorKind::Parse, "model blob: truncated tensor '" + name + "'");
        t.values.resize(count);
        for (auto& v : t.values) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(b)]) << (8 * b);
            pos += 4;
            v = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    if (pos != bytes.size()) throw Error(ErrorKind::Parse, "model blob: trailing bytes after tensors");
    return blob;
}

}  // namespace biliscope::detail
