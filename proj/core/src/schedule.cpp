#include "zipgait/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "zipgait/errors.hpp"

namespace zipgait {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBetaMin = 1e-8;
constexpr double kBetaMax = 0.999;

void check_t(int t, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.T) throw InvalidParameter("timestep out of range");
}

}  // namespace

NoiseSchedule cosine_schedule(int T, double s) {
    if (T < 2) throw InvalidParameter("cosine_schedule needs T >= 2");
    auto f = [s, T](double t) {
        const double v = std::cos(((t / T + s) / (1.0 + s)) * kPi / 2.0);
        return v * v;
    };
    const double f0 = f(0.0);
    NoiseSchedule sched;
    sched.T = T;
    sched.beta.resize(static_cast<size_t>(T));
    sched.alpha.resize(static_cast<size_t>(T));
    sched.alpha_bar.resize(static_cast<size_t>(T));
    double prev = 1.0;  // alpha_bar before the first step
    double run = 1.0;
    for (int i = 0; i < T; ++i) {
        const double ab = f(static_cast<double>(i + 1)) / f0;
        double beta = 1.0 - ab / prev;
        beta = std::clamp(beta, kBetaMin, kBetaMax);
        prev = ab;
        sched.beta[static_cast<size_t>(i)] = beta;
        sched.alpha[static_cast<size_t>(i)] = 1.0 - beta;
        run *= 1.0 - beta;
        sched.alpha_bar[static_cast<size_t>(i)] = run;
    }
    return sched;
}

Tensor<float> forward_diffuse(const Tensor<float>& x0, int t, const Tensor<float>& eps,
                              const NoiseSchedule& sched) {
    check_t(t, sched);
    if (!x0.same_shape(eps)) throw ShapeError("forward_diffuse: x0/eps shape mismatch");
    const double ab = sched.alpha_bar[static_cast<size_t>(t)];
    const float a = static_cast<float>(std::sqrt(ab));
    const float b = static_cast<float>(std::sqrt(1.0 - ab));
    Tensor<float> out(x0.shape);
    for (std::int64_t i = 0; i < x0.numel(); ++i)
        out.data[static_cast<size_t>(i)] =
            a * x0.data[static_cast<size_t>(i)] + b * eps.data[static_cast<size_t>(i)];
    return out;
}

Tensor<float> recover_noise(const Tensor<float>& x_t, const Tensor<float>& x0_hat, int t,
                            const NoiseSchedule& sched) {
    check_t(t, sched);
    if (!x_t.same_shape(x0_hat)) throw ShapeError("recover_noise: shape mismatch");
    const double ab = sched.alpha_bar[static_cast<size_t>(t)];
    if (1.0 - ab <= 0.0) throw DivisionGuard("alpha_bar numerically 1");
    const float a = static_cast<float>(std::sqrt(ab));
    const float inv = static_cast<float>(1.0 / std::sqrt(1.0 - ab));
    Tensor<float> out(x_t.shape);
    for (std::int64_t i = 0; i < x_t.numel(); ++i)
        out.data[static_cast<size_t>(i)] =
            (x_t.data[static_cast<size_t>(i)] - a * x0_hat.data[static_cast<size_t>(i)]) * inv;
    return out;
}

double ddim_sigma(int t_now, int t_next, double eta, const NoiseSchedule& sched) {
    check_t(t_now, sched);
    check_t(t_next, sched);
    const double ab_now = sched.alpha_bar[static_cast<size_t>(t_now)];
    const double ab_next = sched.alpha_bar[static_cast<size_t>(t_next)];
    return eta * std::sqrt((1.0 - ab_now / ab_next) * (1.0 - ab_next) / (1.0 - ab_now));
}

Tensor<float> ddim_step(const Tensor<float>& x_t, const Tensor<float>& x0_hat, int t_now,
                        int t_next, double eta, const Tensor<float>* eps_star,
                        const NoiseSchedule& sched) {
    if (t_next >= t_now) throw InvalidParameter("ddim_step needs t_next < t_now");
    if (eta < 0.0 || eta > 1.0) throw InvalidParameter("eta must be in [0,1]");
    if (!x_t.same_shape(x0_hat)) throw ShapeError("ddim_step: shape mismatch");
    if (t_next < 0) return x0_hat;  // terminal convention

    const Tensor<float> eps = recover_noise(x_t, x0_hat, t_now, sched);
    const double sigma = ddim_sigma(t_now, t_next, eta, sched);
    if (eta > 0.0 && eps_star == nullptr) throw InvalidParameter("eps_star required when eta > 0");

    const double ab_next = sched.alpha_bar[static_cast<size_t>(t_next)];
    const double dir2 = 1.0 - ab_next - sigma * sigma;
    if (dir2 < -1e-12) throw SigmaOverflow("eta too large for this step pair");
    const float a = static_cast<float>(std::sqrt(ab_next));
    const float d = static_cast<float>(std::sqrt(std::max(dir2, 0.0)));
    const float sg = static_cast<float>(sigma);

    Tensor<float> out(x_t.shape);
    for (std::int64_t i = 0; i < x_t.numel(); ++i) {
        float v = a * x0_hat.data[static_cast<size_t>(i)] + d * eps.data[static_cast<size_t>(i)];
        if (eta > 0.0) v += sg * eps_star->data[static_cast<size_t>(i)];
        out.data[static_cast<size_t>(i)] = v;
    }
    return out;
}

std::vector<std::pair<int, int>> timestep_pairs(int T, int steps) {
    if (steps < 1 || steps > T) throw InvalidParameter("timestep_pairs: need 1 <= steps <= T");
    // Evenly spaced points from -1 up to T-1 inclusive, then walked downward.
    std::vector<int> times(static_cast<size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        const double v = -1.0 + static_cast<double>(T) * i / steps;
        times[static_cast<size_t>(i)] = std::min(static_cast<int>(std::lround(v)), T - 1);
    }
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<size_t>(steps));
    for (int i = steps; i > 0; --i)
        pairs.emplace_back(times[static_cast<size_t>(i)], times[static_cast<size_t>(i) - 1]);
    return pairs;
}

}  // namespace zipgait
