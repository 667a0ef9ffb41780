#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ms {

// Fixed 12-significant-digit formatting; the single source of float text in
// every artifact, so identical runs produce identical bytes.
inline std::string fmt_g12(double v) {
    if (v == 0.0) v = 0.0;  // collapse -0
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write-temp-then-rename so concurrent readers never see partial files.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path dir = path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// 8-bit binary PGM, max-normalized. Row 0 is the top image row.
inline std::string encode_pgm(const std::vector<double>& data, int nx, int ny) {
    if (nx <= 0 || ny <= 0 || data.size() != static_cast<size_t>(nx) * static_cast<size_t>(ny))
        throw std::invalid_argument("encode_pgm: shape mismatch");
    double peak = 0.0;
    for (double v : data) peak = std::max(peak, v);
    std::string out = "P5\n" + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
    out.reserve(out.size() + data.size());
    for (double v : data) {
        const double u = peak > 0.0 ? v / peak : 0.0;
        const int byte = std::clamp(static_cast<int>(std::lround(u * 255.0)), 0, 255);
        out.push_back(static_cast<char>(byte));
    }
    return out;
}

struct PgmImage {
    int nx = 0, ny = 0;
    std::vector<double> data;  // values in [0, 1]
};

inline PgmImage decode_pgm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("decode_pgm: expected binary PGM (P5)");
    auto next_int = [&in]() {
        int v;
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string comment;
                std::getline(in, comment);
                continue;
            }
            if (!(in >> v)) throw std::runtime_error("decode_pgm: truncated header");
            return v;
        }
    };
    PgmImage img;
    img.nx = next_int();
    img.ny = next_int();
    const int maxval = next_int();
    if (img.nx <= 0 || img.ny <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error("decode_pgm: unsupported header");
    in.get();  // single whitespace after maxval
    const size_t count = static_cast<size_t>(img.nx) * static_cast<size_t>(img.ny);
    std::string raw(count, '\0');
    in.read(raw.data(), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count)
        throw std::runtime_error("decode_pgm: truncated pixel data");
    img.data.resize(count);
    for (size_t i = 0; i < count; ++i)
        img.data[i] = static_cast<double>(static_cast<unsigned char>(raw[i])) / maxval;
    return img;
}

inline void write_pgm(const std::filesystem::path& path, const std::vector<double>& data, int nx,
                      int ny) {
    atomic_write_file(path, encode_pgm(data, nx, ny));
}

}  // namespace ms
