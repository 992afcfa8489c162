#pragma once

#include <cmath>
#include <vector>

#include "zipgait/diffgait_engine.hpp"
#include "zipgait/errors.hpp"
#include "zipgait/nn/tape.hpp"
#include "zipgait/tensor.hpp"

namespace zipgait {

struct FusionWeights {
    std::vector<double> w;

    void validate() const {
        double sum = 0.0;
        for (double x : w) {
            if (x < 0.0) throw InvalidParameter("fusion weights must be >= 0");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw InvalidParameter("fusion weights must sum to 1");
    }

    static FusionWeights recommended() { return {{0.0, 0.0, 0.2, 0.3, 0.5}}; }
};

// Stage one: pixel-wise weighted sum of the multi-level silhouettes.
inline Tensor<float> stage_one_combine(const MultiLevelSilhouettes& preds,
                                       const FusionWeights& weights) {
    if (preds.preds.empty()) throw ShapeError("stage_one_combine: no predictions");
    if (preds.preds.size() != weights.w.size())
        throw ShapeError("stage_one_combine: weight/prediction length mismatch");
    weights.validate();
    Tensor<float> out(preds.preds[0].shape, 0.0f);
    for (size_t i = 0; i < preds.preds.size(); ++i) {
        const auto& p = preds.preds[i];
        if (!p.same_shape(out)) throw ShapeError("stage_one_combine: mismatched prediction shapes");
        const float wi = static_cast<float>(weights.w[i]);
        for (std::int64_t k = 0; k < out.numel(); ++k)
            out.data[static_cast<size_t>(k)] += wi * p.data[static_cast<size_t>(k)];
    }
    return out;
}

// Stage two: convex gating between the silhouette and skeleton branches.
//   F_sil = Conv(sil), F_ske = Conv(heat)
//   g     = Sigmoid(Conv(ReLU(Conv(concat(F_sil, F_ske)))))
//   H     = g * F_sil + (1 - g) * F_ske
template <typename T>
struct PgiFusion {
    int cf;

    static void register_params(nn::ParamStore<T>& ps, int cf, Rng& rng) {
        auto add_conv = [&](const std::string& base, int cin, int cout) {
            auto& w = ps.add(base + ".w", {cout, cin, 3, 3});
            nn::init_he(w, static_cast<std::int64_t>(cin) * 9, rng);
            ps.add(base + ".b", {cout});
        };
        add_conv("pgi.sil", 1, cf);
        add_conv("pgi.ske", 2, cf);
        add_conv("pgi.g1", 2 * cf, cf);
        add_conv("pgi.g2", cf, cf);
    }

    struct Out {
        nn::Val<T> h;      // fused feature [B,cf,64,44]
        nn::Val<T> f_sil;  // silhouette branch
        nn::Val<T> f_ske;  // skeleton branch
        nn::Val<T> gate;   // sigmoid gate, strictly inside (0,1)
    };

    static Out fuse(nn::Tape<T>& tp, nn::ParamStore<T>& ps, nn::Val<T> sil, nn::Val<T> heat,
                    bool train) {
        auto p = [&](const std::string& n) -> nn::Val<T> {
            auto& e = ps.at(n);
            return train ? tp.param(e) : tp.frozen_value(e.value);
        };
        auto f_sil = nn::conv2d(tp, sil, p("pgi.sil.w"), p("pgi.sil.b"), 1, 1);
        auto f_ske = nn::conv2d(tp, heat, p("pgi.ske.w"), p("pgi.ske.b"), 1, 1);
        auto cat = nn::concat_channels(tp, f_sil, f_ske);
        auto g = nn::conv2d(tp, cat, p("pgi.g1.w"), p("pgi.g1.b"), 1, 1);
        g = nn::relu(tp, g);
        g = nn::conv2d(tp, g, p("pgi.g2.w"), p("pgi.g2.b"), 1, 1);
        g = nn::sigmoid(tp, g);
        // g*F_sil + (1-g)*F_ske = F_ske + g*(F_sil - F_ske)
        auto diff = nn::add(tp, f_sil, nn::scale_add(tp, f_ske, T(-1), T(0)));
        auto h = nn::add(tp, f_ske, nn::mul(tp, g, diff));
        return {h, f_sil, f_ske, g};
    }
};

}  // namespace zipgait
