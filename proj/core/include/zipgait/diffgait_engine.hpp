#pragma once

#include <cmath>
#include <vector>

#include "zipgait/diffgait.hpp"
#include "zipgait/errors.hpp"
#include "zipgait/nn/tape.hpp"
#include "zipgait/rng.hpp"
#include "zipgait/schedule.hpp"

namespace zipgait {

// Per-step silhouette predictions, earliest sampling step first.
// Each tensor is [B,1,h,w] with values in [0,1].
struct MultiLevelSilhouettes {
    std::vector<Tensor<float>> preds;
    int steps() const { return static_cast<int>(preds.size()); }
};

struct DiffGaitTrainOptions {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

// One optimization step: per-item t ~ U{1..T-1}, eps ~ N(0,1),
// DG_t by forward diffusion, HGV fusion, MSE against DG_0, Adam update.
// heat [B,2,h,w]; gt_sil [B,1,h,w] in [-1,1]. Returns the scalar loss.
inline double train_step_diffgait(DiffGaitNet<float>& net, const Tensor<float>& heat,
                                  const Tensor<float>& gt_sil, const NoiseSchedule& sched,
                                  const DiffGaitTrainOptions& opt, Rng& rng) {
    if (heat.shape.size() != 4 || gt_sil.shape.size() != 4 || heat.dim(0) != gt_sil.dim(0))
        throw ShapeError("train_step_diffgait: bad batch shapes");
    const int B = heat.dim(0);
    const std::int64_t per = gt_sil.numel() / B;

    std::vector<int> ts(static_cast<size_t>(B));
    Tensor<float> dg_t(gt_sil.shape);
    for (int b = 0; b < B; ++b) {
        const int t = static_cast<int>(rng.uniform_int(1, sched.T - 1));
        ts[static_cast<size_t>(b)] = t;
        const double ab = sched.alpha_bar[static_cast<size_t>(t)];
        const float a = static_cast<float>(std::sqrt(ab));
        const float s = static_cast<float>(std::sqrt(1.0 - ab));
        for (std::int64_t i = 0; i < per; ++i) {
            const size_t k = static_cast<size_t>(b * per + i);
            dg_t.data[k] = a * gt_sil.data[k] + s * static_cast<float>(rng.normal());
        }
    }

    net.set_training(true);
    nn::Tape<float> tape;
    auto h = tape.input(heat);
    auto dg = tape.input(std::move(dg_t));
    auto pred = net.forward(tape, h, dg, ts);
    auto loss = nn::mse_loss(tape, pred, gt_sil);
    const double lval = static_cast<double>(tape.val(loss).data[0]);
    if (!std::isfinite(lval)) throw TrainingDiverged("non-finite DiffGait loss");

    net.params().zero_grad();
    tape.backward(loss);
    net.params().adam_step(opt.lr, opt.beta1, opt.beta2);
    return lval;
}

// Appendix-style inference: DG ~ N(0,1); for each (t_now, t_next) pair,
// predict P_i = decode(HGV(heat, DG, t_now)) and step DG with DDIM.
// Collects all M predictions mapped back to [0,1]. Parameters are frozen.
inline MultiLevelSilhouettes sample_silhouettes(DiffGaitNet<float>& net, const Tensor<float>& heat,
                                                const NoiseSchedule& sched, int steps, double eta,
                                                Rng& rng) {
    if (steps < 1) throw InvalidParameter("sample_silhouettes: steps >= 1");
    const int B = heat.dim(0);
    const int h = net.config().h, w = net.config().w;

    Tensor<float> dg({B, 1, h, w});
    rng.fill_normal(dg.ptr(), dg.numel());

    net.set_training(false);
    MultiLevelSilhouettes out;
    for (const auto& [t_now, t_next] : timestep_pairs(sched.T, steps)) {
        nn::Tape<float> tape;
        auto hv = tape.input(heat);
        auto dgv = tape.input(dg);
        std::vector<int> ts(static_cast<size_t>(B), t_now);
        Tensor<float> x0_hat = tape.val(net.forward(tape, hv, dgv, ts));

        Tensor<float> eps_star;
        const Tensor<float>* es = nullptr;
        if (eta > 0.0) {
            eps_star = Tensor<float>(dg.shape);
            rng.fill_normal(eps_star.ptr(), eps_star.numel());
            es = &eps_star;
        }
        dg = ddim_step(dg, x0_hat, t_now, t_next, eta, es, sched);

        // [-1,1] -> [0,1]
        Tensor<float> p01(x0_hat.shape);
        for (std::int64_t i = 0; i < x0_hat.numel(); ++i)
            p01.data[static_cast<size_t>(i)] =
                0.5f * (x0_hat.data[static_cast<size_t>(i)] + 1.0f);
        out.preds.push_back(std::move(p01));
    }
    net.set_training(true);
    return out;
}

}  // namespace zipgait
