#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <zlib.h>

#include "qdm/errors.hpp"
#include "qdm/io.hpp"

namespace qdm {

// ---------------------------------------------------------------------------
// Palettes. Diverging is the classic cool/warm pair around neutral gray;
// sequential is a dark-to-light heat ramp. Anchor colors are part of the io
// contract (tests pin them), so treat changes as a format break.
// ---------------------------------------------------------------------------

namespace {

struct Anchor {
    double t;
    std::uint8_t r, g, b;
};

constexpr Anchor kDiverging[] = {
    {0.0, 59, 76, 192},
    {0.5, 221, 221, 221},
    {1.0, 180, 4, 38},
};

constexpr Anchor kSequential[] = {
    {0.0, 0, 0, 4},
    {1.0 / 3.0, 87, 16, 110},
    {2.0 / 3.0, 227, 89, 51},
    {1.0, 252, 255, 164},
};

constexpr std::uint8_t kNanColor[3] = {128, 128, 128};

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Minimal PNG writer: 8-bit truecolor, no filtering, one IDAT chunk.
// ---------------------------------------------------------------------------

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[5],
               const std::vector<std::uint8_t>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> encode_png(std::uint32_t w, std::uint32_t h,
                                     const std::vector<std::uint8_t>& rgb) {
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * w));
    for (std::uint32_t r = 0; r < h; ++r) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = rgb.data() + static_cast<std::size_t>(r) * w * 3;
        raw.insert(raw.end(), row, row + 3 * w);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw NumericError("png deflate failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, w);
    put_be32(ihdr, h);
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, truecolor, default methods
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    return out;
}

}  // namespace

void colormap_rgb(Colormap cmap, double t, std::uint8_t rgb[3]) {
    if (std::isnan(t)) t = 0.5;
    t = std::clamp(t, 0.0, 1.0);
    const Anchor* a = cmap == Colormap::diverging ? kDiverging : kSequential;
    std::size_t n = cmap == Colormap::diverging ? std::size(kDiverging) : std::size(kSequential);
    std::size_t hi = 1;
    while (hi + 1 < n && t > a[hi].t) ++hi;
    double u = (t - a[hi - 1].t) / (a[hi].t - a[hi - 1].t);
    rgb[0] = static_cast<std::uint8_t>(std::llround(a[hi - 1].r + u * (a[hi].r - a[hi - 1].r)));
    rgb[1] = static_cast<std::uint8_t>(std::llround(a[hi - 1].g + u * (a[hi].g - a[hi - 1].g)));
    rgb[2] = static_cast<std::uint8_t>(std::llround(a[hi - 1].b + u * (a[hi].b - a[hi - 1].b)));
}

void render_map(const Map2D& m, Colormap cmap, const RenderRange& range,
                const std::string& path) {
    if (m.size() == 0) throw UsageError("cannot render an empty map");

    std::vector<double> finite;
    finite.reserve(m.size());
    for (double v : m.data)
        if (std::isfinite(v)) finite.push_back(v);
    if (finite.empty()) throw UsageError("cannot render a map with no finite pixels");

    double lo, hi;
    bool degenerate = false;
    if (range.automatic) {
        if (cmap == Colormap::diverging) {
            // symmetric about zero at the 99th percentile of |value|
            // (nearest rank), so a handful of hot pixels cannot flatten
            // the display
            std::vector<double> mag(finite.size());
            for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::fabs(finite[i]);
            std::sort(mag.begin(), mag.end());
            std::size_t idx = static_cast<std::size_t>(
                std::ceil(0.99 * static_cast<double>(mag.size())));
            hi = mag[std::min(idx == 0 ? 0 : idx - 1, mag.size() - 1)];
            lo = -hi;
        } else {
            auto [mn, mx] = std::minmax_element(finite.begin(), finite.end());
            lo = *mn;
            hi = *mx;
        }
        degenerate = !(hi > lo);
    } else {
        lo = range.lo;
        hi = range.hi;
        if (!(hi > lo)) throw UsageError("render range requires hi > lo");
    }

    std::vector<std::uint8_t> rgb(m.size() * 3);
    for (std::size_t i = 0; i < m.size(); ++i) {
        double v = m.data[i];
        if (std::isnan(v)) {
            std::memcpy(&rgb[3 * i], kNanColor, 3);
            continue;
        }
        double t = degenerate ? 0.5 : (v - lo) / (hi - lo);
        colormap_rgb(cmap, t, &rgb[3 * i]);
    }

    auto png = encode_png(static_cast<std::uint32_t>(m.cols),
                          static_cast<std::uint32_t>(m.rows), rgb);
    write_file_atomic(path, png.data(), png.size());

    std::string ann;
    ann += "colormap: ";
    ann += cmap == Colormap::diverging ? "diverging" : "sequential";
    ann += "\nrange_mode: ";
    ann += range.automatic ? "auto" : "explicit";
    ann += "\nrange_lo: " + fmt_double(degenerate ? finite[0] : lo);
    ann += "\nrange_hi: " + fmt_double(degenerate ? finite[0] : hi);
    ann += "\nnan_color: 128 128 128\nrows: " + std::to_string(m.rows);
    ann += "\ncols: " + std::to_string(m.cols);
    ann += "\npixel_size_m: " + fmt_double(m.pixel_size);
    ann += "\n";
    write_file_atomic(path + ".txt", ann.data(), ann.size());
}

}  // namespace qdm
