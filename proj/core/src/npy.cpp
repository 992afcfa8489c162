#include "zipgait/npy.hpp"

#include <cstring>
#include <fstream>

#include "zipgait/errors.hpp"

namespace zipgait {

namespace {

std::string header_for(const std::vector<int>& shape) {
    std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < shape.size(); ++i) {
        dict += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
        if (i + 1 < shape.size()) dict += " ";
    }
    dict += "), }";
    // Pad with spaces so that magic(6)+ver(2)+len(2)+header is a multiple of 64.
    size_t total = 10 + dict.size() + 1;
    size_t pad = (64 - total % 64) % 64;
    dict += std::string(pad, ' ');
    dict += '\n';
    return dict;
}

}  // namespace

std::vector<unsigned char> npy_bytes(const Tensor<float>& t) {
    const std::string hdr = header_for(t.shape);
    std::vector<unsigned char> out;
    out.reserve(10 + hdr.size() + t.data.size() * 4);
    const unsigned char magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    out.insert(out.end(), magic, magic + 8);
    out.push_back(static_cast<unsigned char>(hdr.size() & 0xff));
    out.push_back(static_cast<unsigned char>((hdr.size() >> 8) & 0xff));
    out.insert(out.end(), hdr.begin(), hdr.end());
    const unsigned char* raw = reinterpret_cast<const unsigned char*>(t.data.data());
    out.insert(out.end(), raw, raw + t.data.size() * 4);
    return out;
}

Tensor<float> npy_from_bytes(const unsigned char* p, size_t n) {
    if (n < 10 || p[0] != 0x93 || std::memcmp(p + 1, "NUMPY", 5) != 0)
        throw ParseError("not an npy payload");
    const size_t hlen = static_cast<size_t>(p[8]) | (static_cast<size_t>(p[9]) << 8);
    if (10 + hlen > n) throw ParseError("truncated npy header");
    std::string hdr(reinterpret_cast<const char*>(p) + 10, hlen);
    if (hdr.find("'<f4'") == std::string::npos) throw ParseError("npy dtype must be <f4");
    if (hdr.find("False") == std::string::npos) throw ParseError("fortran_order arrays unsupported");
    const size_t lp = hdr.find('(');
    const size_t rp = hdr.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos) throw ParseError("bad npy shape");
    std::vector<int> shape;
    std::string inner = hdr.substr(lp + 1, rp - lp - 1);
    size_t pos = 0;
    while (pos < inner.size()) {
        while (pos < inner.size() && !isdigit(inner[pos])) ++pos;
        if (pos >= inner.size()) break;
        size_t end = pos;
        while (end < inner.size() && isdigit(inner[end])) ++end;
        shape.push_back(std::stoi(inner.substr(pos, end - pos)));
        pos = end;
    }
    Tensor<float> t(shape);
    const size_t need = static_cast<size_t>(t.numel()) * 4;
    if (10 + hlen + need > n) throw ParseError("truncated npy payload");
    std::memcpy(t.data.data(), p + 10 + hlen, need);
    return t;
}

void save_npy(const std::string& path, const Tensor<float>& t) {
    auto bytes = npy_bytes(t);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor<float> load_npy(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return npy_from_bytes(bytes.data(), bytes.size());
}

}  // namespace zipgait
