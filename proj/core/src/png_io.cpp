#include "zipgait/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "zipgait/errors.hpp"

namespace zipgait {

namespace {

void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

void chunk(std::vector<unsigned char>& out, const char* tag, const std::vector<unsigned char>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), tag, tag + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32(out, crc);
}

}  // namespace

void save_png_gray(const std::string& path, const Tensor<float>& img) {
    std::vector<int> s = img.shape;
    if (s.size() == 3 && s[0] == 1) s = {s[1], s[2]};
    if (s.size() != 2) throw ShapeError("save_png_gray wants [h,w] or [1,h,w]");
    const int h = s[0], w = s[1];

    // One filter byte (0 = none) per scanline.
    std::vector<unsigned char> raw(static_cast<size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        raw[static_cast<size_t>(y) * (w + 1)] = 0;
        for (int x = 0; x < w; ++x) {
            float v = img.data[static_cast<size_t>(y) * w + x];
            v = std::clamp(v, 0.0f, 1.0f);
            raw[static_cast<size_t>(y) * (w + 1) + 1 + x] = static_cast<unsigned char>(v * 255.0f + 0.5f);
        }
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error("png deflate failed");
    z.resize(zlen);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w));
    put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk(out, "IHDR", ihdr);
    chunk(out, "IDAT", z);
    chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace zipgait
