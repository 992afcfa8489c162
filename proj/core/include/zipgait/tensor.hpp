#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "zipgait/errors.hpp"

namespace zipgait {

// Dense row-major tensor. Shapes are small (<= 4 dims in practice).
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape)) {}
    Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(count(shape), fill) {}

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (std::int64_t i = 0; i < numel(); ++i) out.data[static_cast<size_t>(i)] = static_cast<U>(data[static_cast<size_t>(i)]);
        return out;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int>& want, const char* what) {
    if (t.shape != want)
        throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(t.shape));
}

}  // namespace zipgait
