#include "camflow/png_io.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "camflow/errors.hpp"

namespace camflow::png {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& body) {
    put_u32(out, static_cast<uint32_t>(body.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32(out, crc);
}

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png(const std::string& path, const Tensor& image) {
    const auto& s = image.shape();
    if (s.size() != 3 || (s[0] != 1 && s[0] != 3))
        throw ShapeError("write_png expects c x h x w with c in {1,3}");
    const int c = static_cast<int>(s[0]);
    const int h = static_cast<int>(s[1]);
    const int w = static_cast<int>(s[2]);

    // Filter byte 0 (None) per scanline, RGB samples.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + 3 * static_cast<size_t>(w)));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                raw.push_back(to_byte(image[((c == 1 ? 0 : ch) * int64_t(h) + y) * w + x]));
    }

    uLongf zcap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> zdata(zcap);
    if (compress2(zdata.data(), &zcap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png deflate failed for " + path);
    zdata.resize(zcap);

    std::vector<uint8_t> out;
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(w));
    put_u32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zdata);
    put_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

void write_strip(const std::string& path, const Tensor& video) {
    const auto& s = video.shape();
    if (s.size() != 4) throw ShapeError("write_strip expects f x c x h x w");
    const int f = static_cast<int>(s[0]);
    const int c = static_cast<int>(s[1]);
    const int h = static_cast<int>(s[2]);
    const int w = static_cast<int>(s[3]);
    Tensor strip({c, h, static_cast<int64_t>(f) * w});
    for (int fi = 0; fi < f; ++fi)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    strip[(ch * int64_t(h) + y) * (int64_t(f) * w) + fi * int64_t(w) + x] =
                        video[((fi * int64_t(c) + ch) * h + y) * w + x];
    write_png(path, strip);
}

}  // namespace camflow::png
