#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zipgait/nn/params.hpp"
#include "zipgait/nn/tape.hpp"
#include "zipgait/rng.hpp"
#include "zipgait/schedule.hpp"
#include "zipgait/skeleton.hpp"

namespace zipgait {

// Width plan derives from the single knob C (condition channels). The
// decoder trunk is deliberately wide at 16x11 and thin at full resolution,
// which is where the parameter budget lives.
struct DiffGaitConfig {
    int C = 64;  // condition feature channels
    int h = kCanvasH;
    int w = kCanvasW;

    int w1() const { return std::max(2, 3 * C / 8); }   // 24 at C=64
    int w2() const { return std::max(2, 3 * C / 4); }   // 48
    int dec() const { return std::max(4, 5 * C / 2); }  // 160
    int half() const { return std::max(2, C / 2); }     // 32
    int mid() const { return std::max(2, 3 * C / 16); } // 12
    int te_hidden() const { return 4 * C; }
};

inline int norm_groups(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0) return g;
    return 1;
}

template <typename T>
class DiffGaitNet {
  public:
    using Val = nn::Val<T>;
    using Tape = nn::Tape<T>;

    explicit DiffGaitNet(DiffGaitConfig cfg = {}, std::uint64_t seed = 0) : cfg_(cfg), seed_(seed) {
        register_params();
        Rng rng(seed);
        init_params(rng);
    }

    const DiffGaitConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    std::int64_t count_params() const { return params_.count(); }

    void set_training(bool on) { training_ = on; }

    // [B,2,h,w] -> [B,C,h/4,w/4]
    Val encode(Tape& tp, Val heat) {
        const auto& s = tp.val(heat).shape;
        if (s.size() != 4 || s[1] != 2 || s[2] != cfg_.h || s[3] != cfg_.w)
            throw ShapeError("encode: want [B,2," + std::to_string(cfg_.h) + "," +
                             std::to_string(cfg_.w) + "], got " + shape_str(s));
        Val x = conv_gn_relu(tp, "enc.s1", heat, 1);
        x = conv_gn_relu(tp, "enc.s2", x, 2);
        x = res_block(tp, "enc.s3", x, false);
        x = conv_gn_relu(tp, "enc.s4", x, 2);
        x = res_block(tp, "enc.s5", x, false);
        return x;
    }

    // [B,1,h,w] -> [B,C,h/4,w/4]; two strided convolutions.
    Val gait_map(Tape& tp, Val dg) {
        const auto& s = tp.val(dg).shape;
        if (s.size() != 4 || s[1] != 1 || s[2] != cfg_.h || s[3] != cfg_.w)
            throw ShapeError("gait_map: bad input shape " + shape_str(s));
        Val x = nn::conv2d(tp, dg, p(tp, "gm.c1.w"), p(tp, "gm.c1.b"), 2, 1);
        x = nn::relu(tp, x);
        x = nn::conv2d(tp, x, p(tp, "gm.c2.w"), p(tp, "gm.c2.b"), 2, 1);
        return x;
    }

    // Sinusoidal encoding of each timestep at dimension C. [B,C]
    Tensor<T> sinusoid(const std::vector<int>& ts) const {
        const int C = cfg_.C;
        const int half = C / 2;
        Tensor<T> out({static_cast<int>(ts.size()), C});
        for (size_t b = 0; b < ts.size(); ++b)
            for (int i = 0; i < half; ++i) {
                const double f = std::exp(-std::log(10000.0) * i / half);
                out.data[b * C + i] = static_cast<T>(std::sin(ts[b] * f));
                out.data[b * C + half + i] = static_cast<T>(std::cos(ts[b] * f));
            }
        return out;
    }

    // [B,C] learned projection of the sinusoid.
    Val timestep_embed(Tape& tp, const std::vector<int>& ts) {
        Val x = tp.input(sinusoid(ts));
        x = nn::linear(tp, x, p(tp, "te.l1.w"), p(tp, "te.l1.b"));
        x = nn::relu(tp, x);
        x = nn::linear(tp, x, p(tp, "te.l2.w"), p(tp, "te.l2.b"));
        return x;
    }

    // HGV = g_ske * (GM(dg) + TE(t)) + g_ske
    Val build_hgv(Tape& tp, Val g_ske, Val dg, const std::vector<int>& ts) {
        Val gm = gait_map(tp, dg);
        Val te = timestep_embed(tp, ts);
        Val mixed = nn::add_bias_bc(tp, gm, te);
        return nn::add(tp, nn::mul(tp, g_ske, mixed), g_ske);
    }

    // [B,C,h/4,w/4] -> [B,1,h,w], tanh output (x0 prediction in [-1,1]).
    Val decode(Tape& tp, Val hgv) {
        const auto& s = tp.val(hgv).shape;
        if (s.size() != 4 || s[1] != cfg_.C || s[2] != cfg_.h / 4 || s[3] != cfg_.w / 4)
            throw ShapeError("decode: bad HGV shape " + shape_str(s));
        Val x = res_block(tp, "dec.s1", hgv, true);
        x = res_block(tp, "dec.s2", x, false);
        x = res_block(tp, "dec.s3", x, false);
        x = nn::upsample2x(tp, x);
        x = res_block(tp, "dec.s4", x, true);
        x = nn::upsample2x(tp, x);
        x = conv_gn_relu(tp, "dec.s5a", x, 1);
        x = nn::conv2d(tp, x, p(tp, "dec.s5b.w"), p(tp, "dec.s5b.b"), 1, 1);
        return nn::tanh_act(tp, x);
    }

    // Full network: heat [B,2,h,w], dg [B,1,h,w], per-item timesteps.
    Val forward(Tape& tp, Val heat, Val dg, const std::vector<int>& ts) {
        Val g = encode(tp, heat);
        Val hgv = build_hgv(tp, g, dg, ts);
        return decode(tp, hgv);
    }

  private:
    struct ConvSpec {
        std::string name;
        int cin, cout, k;
        bool gn;
    };

    Val p(Tape& tp, const std::string& name) {
        auto& e = params_.at(name);
        return training_ ? tp.param(e) : tp.frozen_value(e.value);
    }

    Val conv_gn_relu(Tape& tp, const std::string& base, Val x, int stride) {
        Val y = nn::conv2d(tp, x, p(tp, base + ".w"), p(tp, base + ".b"), stride, 1);
        y = nn::group_norm(tp, y, p(tp, base + ".g"), p(tp, base + ".be"),
                           norm_groups(tp.val(y).dim(1)));
        return nn::relu(tp, y);
    }

    // Post-activation residual block; 1x1 projection skip when widths change.
    Val res_block(Tape& tp, const std::string& base, Val x, bool projected) {
        Val y = conv_gn_relu(tp, base + ".a", x, 1);
        y = nn::conv2d(tp, y, p(tp, base + ".b.w"), p(tp, base + ".b.b"), 1, 1);
        y = nn::group_norm(tp, y, p(tp, base + ".b.g"), p(tp, base + ".b.be"),
                           norm_groups(tp.val(y).dim(1)));
        Val skip = x;
        if (projected) skip = nn::conv2d(tp, x, p(tp, base + ".p.w"), p(tp, base + ".p.b"), 1, 0);
        return nn::relu(tp, nn::add(tp, skip, y));
    }

    void add_conv(const std::string& base, int cin, int cout, int k, bool gn) {
        params_.add(base + ".w", {cout, cin, k, k});
        params_.add(base + ".b", {cout});
        if (gn) {
            params_.add(base + ".g", {cout});
            params_.add(base + ".be", {cout});
        }
        conv_specs_.push_back({base, cin, cout, k, gn});
    }

    void add_res(const std::string& base, int cin, int cout, bool projected) {
        add_conv(base + ".a", cin, cout, 3, true);
        add_conv(base + ".b", cout, cout, 3, true);
        if (projected) add_conv(base + ".p", cin, cout, 1, false);
    }

    void register_params() {
        const int C = cfg_.C, w1 = cfg_.w1(), w2 = cfg_.w2(), dec = cfg_.dec(),
                  half = cfg_.half(), mid = cfg_.mid(), th = cfg_.te_hidden();
        add_conv("enc.s1", 2, w1, 3, true);
        add_conv("enc.s2", w1, w2, 3, true);
        add_res("enc.s3", w2, w2, false);
        add_conv("enc.s4", w2, C, 3, true);
        add_res("enc.s5", C, C, false);

        add_conv("gm.c1", 1, w1, 3, false);
        add_conv("gm.c2", w1, C, 3, false);

        params_.add("te.l1.w", {th, C});
        params_.add("te.l1.b", {th});
        params_.add("te.l2.w", {C, th});
        params_.add("te.l2.b", {C});

        add_res("dec.s1", C, dec, true);
        add_res("dec.s2", dec, dec, false);
        add_res("dec.s3", dec, dec, false);
        add_res("dec.s4", dec, half, true);
        add_conv("dec.s5a", half, mid, 3, true);
        add_conv("dec.s5b", mid, 1, 3, false);
    }

    void init_params(Rng& rng) {
        for (const auto& cs : conv_specs_) {
            auto& w = params_.at(cs.name + ".w").value;
            nn::init_he(w, static_cast<std::int64_t>(cs.cin) * cs.k * cs.k, rng);
            if (cs.gn) params_.at(cs.name + ".g").value.fill(T(1));
        }
        nn::init_he(params_.at("te.l1.w").value, cfg_.C, rng);
        nn::init_he(params_.at("te.l2.w").value, cfg_.te_hidden(), rng);
        // Zero the output head so an untrained model predicts an empty scene.
        params_.at("dec.s5b.w").value.fill(T(0));
    }

    DiffGaitConfig cfg_;
    std::uint64_t seed_;
    bool training_ = true;
    nn::ParamStore<T> params_;
    std::vector<ConvSpec> conv_specs_;
};

}  // namespace zipgait
