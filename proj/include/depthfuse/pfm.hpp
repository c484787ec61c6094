#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "depthfuse/image.hpp"

// Grayscale PFM ("Pf") reader/writer. We always write scale -1.0
// (little-endian), scanlines bottom-to-top, and encode invalid pixels as NaN.
// Files are written to a temp path and renamed so outputs are all-or-nothing.

namespace depthfuse {

class PfmError : public std::runtime_error {
  public:
    explicit PfmError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline float byteswap_float(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u = ((u & 0x000000ffu) << 24) | ((u & 0x0000ff00u) << 8) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0xff000000u) >> 24);
    std::memcpy(&f, &u, 4);
    return f;
}

// One whitespace-delimited header token; PFM allows '#' comments.
inline std::string pfm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace detail

inline FloatMap read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PfmError("cannot open " + path.string());

    const std::string magic = detail::pfm_token(in);
    if (magic == "PF") throw PfmError(path.string() + ": color PFM not supported");
    if (magic != "Pf") throw PfmError(path.string() + ": not a grayscale PFM file");

    const std::string w_tok = detail::pfm_token(in);
    const std::string h_tok = detail::pfm_token(in);
    const std::string scale_tok = detail::pfm_token(in);
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(w_tok);
        h = std::stoi(h_tok);
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw PfmError(path.string() + ": malformed PFM header");
    }
    if (w <= 0 || h <= 0 || scale == 0.0)
        throw PfmError(path.string() + ": malformed PFM header");

    const bool file_little_endian = scale < 0.0;
    const bool host_little_endian = std::endian::native == std::endian::little;

    FloatMap map(w, h);
    std::vector<float> row(static_cast<size_t>(w));
    // Scanlines are stored bottom-to-top.
    for (int fy = 0; fy < h; ++fy) {
        const int y = h - 1 - fy;
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w) * 4);
        if (!in) throw PfmError(path.string() + ": truncated PFM data");
        for (int x = 0; x < w; ++x) {
            float f = row[x];
            if (file_little_endian != host_little_endian) f = detail::byteswap_float(f);
            if (std::isnan(f)) {
                map.set_invalid(x, y);
            } else {
                map.set(x, y, static_cast<double>(f));
            }
        }
    }
    return map;
}

inline void write_pfm(const std::filesystem::path& path, const FloatMap& map) {
    if (map.width <= 0 || map.height <= 0) throw PfmError("write_pfm: empty map");
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PfmError("cannot open " + tmp.string() + " for writing");
        out << "Pf\n" << map.width << " " << map.height << "\n-1.0\n";

        const bool host_little_endian = std::endian::native == std::endian::little;
        std::vector<float> row(static_cast<size_t>(map.width));
        for (int fy = 0; fy < map.height; ++fy) {
            const int y = map.height - 1 - fy;
            for (int x = 0; x < map.width; ++x) {
                float f = map.is_valid(x, y) ? static_cast<float>(map.at(x, y))
                                             : std::numeric_limits<float>::quiet_NaN();
                if (!host_little_endian) f = detail::byteswap_float(f);
                row[x] = f;
            }
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(map.width) * 4);
        }
        if (!out) throw PfmError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace depthfuse
