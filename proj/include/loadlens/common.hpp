#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loadlens/errors.hpp"

namespace loadlens {

using json = nlohmann::json;

// --- stable content hashing -------------------------------------------------
//
// FNV-1a, 64 bit. Used for artifact fingerprints (config hash, checkpoint
// hash, window-set fingerprints). Stable across runs and platforms with the
// same byte input; not cryptographic.

class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    void update(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        update(&bits, sizeof(bits));
    }

    void update(std::uint64_t v) { update(&v, sizeof(v)); }

    void update(const std::vector<double>& v) {
        for (double x : v) update(x);
    }

    std::uint64_t digest() const { return state_; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        std::uint64_t v = state_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = digits[v & 0xF];
            v >>= 4;
        }
        return out;
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_string(const std::string& s) {
    Fnv1a h;
    h.update(s);
    return h.hex();
}

inline std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Fnv1a h;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.update(buf, static_cast<std::size_t>(in.gcount()));
        if (!in) break;
    }
    return h.hex();
}

// --- small file helpers -----------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

inline json read_json_file(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw IoError("invalid JSON in " + path.string());
    return j;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

namespace detail {

// Writes a matrix as a PPM raster with a blue-white-red colormap over
// [lo, hi]. Heatmap images are a convenience artifact; their pixel content
// is not a contract surface.
inline void write_matrix_ppm(const std::vector<std::vector<double>>& rows,
                             const std::filesystem::path& path,
                             double lo = -1.0, double hi = 1.0) {
    if (rows.empty() || rows.front().empty()) throw IoError("empty matrix for " + path.string());
    const std::size_t h = rows.size();
    const std::size_t w = rows.front().size();
    std::string body;
    body.reserve(h * w * 3);
    for (const auto& row : rows) {
        for (std::size_t x = 0; x < w; ++x) {
            double v = x < row.size() ? row[x] : lo;
            double t = (v - lo) / (hi - lo);
            t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
            unsigned char r, g, b;
            if (t < 0.5) { // blue -> white
                double u = t * 2.0;
                r = static_cast<unsigned char>(255 * u);
                g = static_cast<unsigned char>(255 * u);
                b = 255;
            } else { // white -> red
                double u = (t - 0.5) * 2.0;
                r = 255;
                g = static_cast<unsigned char>(255 * (1.0 - u));
                b = static_cast<unsigned char>(255 * (1.0 - u));
            }
            body.push_back(static_cast<char>(r));
            body.push_back(static_cast<char>(g));
            body.push_back(static_cast<char>(b));
        }
    }
    std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    write_text_file(path, header + body);
}

} // namespace detail
} // namespace loadlens
