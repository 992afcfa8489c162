#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "zipgait/errors.hpp"
#include "zipgait/rng.hpp"
#include "zipgait/tensor.hpp"

namespace zipgait::nn {

// Named parameter arrays plus their gradients and optimizer slots.
// Registration order is fixed, which keeps checkpoints and updates
// deterministic.
template <typename T>
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
        Tensor<T> slot_m;  // Adam first moment / SGD momentum
        Tensor<T> slot_v;  // Adam second moment
    };

    Tensor<T>& add(const std::string& name, std::vector<int> shape) {
        if (index_.count(name)) throw InvalidParameter("duplicate parameter: " + name);
        index_[name] = static_cast<int>(entries_.size());
        entries_.push_back(Entry{name, Tensor<T>(shape, T(0)), Tensor<T>(shape, T(0)),
                                 Tensor<T>(shape, T(0)), Tensor<T>(shape, T(0))});
        return entries_.back().value;
    }

    Entry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw InvalidParameter("unknown parameter: " + name);
        return entries_[static_cast<size_t>(it->second)];
    }
    const Entry& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(T(0));
    }

    void adam_step(double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
        ++adam_t_;
        const double c1 = 1.0 - std::pow(b1, adam_t_);
        const double c2 = 1.0 - std::pow(b2, adam_t_);
        for (auto& e : entries_) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i) {
                const size_t k = static_cast<size_t>(i);
                const double g = static_cast<double>(e.grad.data[k]);
                double m = b1 * static_cast<double>(e.slot_m.data[k]) + (1.0 - b1) * g;
                double v = b2 * static_cast<double>(e.slot_v.data[k]) + (1.0 - b2) * g * g;
                e.slot_m.data[k] = static_cast<T>(m);
                e.slot_v.data[k] = static_cast<T>(v);
                e.value.data[k] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + eps));
            }
        }
    }

    void sgd_step(double lr, double momentum = 0.9, double weight_decay = 0.0) {
        for (auto& e : entries_) {
            for (std::int64_t i = 0; i < e.value.numel(); ++i) {
                const size_t k = static_cast<size_t>(i);
                double g = static_cast<double>(e.grad.data[k]) +
                           weight_decay * static_cast<double>(e.value.data[k]);
                double m = momentum * static_cast<double>(e.slot_m.data[k]) + g;
                e.slot_m.data[k] = static_cast<T>(m);
                e.value.data[k] -= static_cast<T>(lr * m);
            }
        }
    }

    int adam_t() const { return adam_t_; }
    void set_adam_t(int t) { adam_t_ = t; }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.shape) = e.value.template cast<U>();
        out.set_adam_t(adam_t_);
        return out;
    }

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
    int adam_t_ = 0;
};

// He-normal fan-in init for a conv/linear weight; biases stay zero.
template <typename T>
void init_he(Tensor<T>& w, std::int64_t fan_in, Rng& rng) {
    rng.fill_normal(w.ptr(), w.numel(), std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace zipgait::nn
