#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "zipgait/tensor.hpp"

namespace zipgait {

// Timestep-indexed beta / alpha / alpha_bar tables. Immutable after
// construction; indices run 0..T-1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product of alpha
};

// Cosine schedule with offset s = 0.008 and betas clipped to (1e-8, 0.999).
// alpha_bar is the running product of the clipped alphas, so the two
// parameterizations stay self-consistent.
NoiseSchedule cosine_schedule(int T, double s = 0.008);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
Tensor<float> forward_diffuse(const Tensor<float>& x0, int t, const Tensor<float>& eps,
                              const NoiseSchedule& sched);

// eps = (x_t - sqrt(alpha_bar_t) * x0_hat) / sqrt(1 - alpha_bar_t)
Tensor<float> recover_noise(const Tensor<float>& x_t, const Tensor<float>& x0_hat, int t,
                            const NoiseSchedule& sched);

// DDIM update from t_now to t_next. t_next == -1 is the terminal step and
// returns x0_hat exactly. eps_star is required iff eta > 0.
Tensor<float> ddim_step(const Tensor<float>& x_t, const Tensor<float>& x0_hat, int t_now,
                        int t_next, double eta, const Tensor<float>* eps_star,
                        const NoiseSchedule& sched);

double ddim_sigma(int t_now, int t_next, double eta, const NoiseSchedule& sched);

// Descending (t_now, t_next) pairs covering [T-1 .. -1] in `steps` strides.
std::vector<std::pair<int, int>> timestep_pairs(int T, int steps);

}  // namespace zipgait
