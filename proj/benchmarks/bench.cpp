#include <benchmark/benchmark.h>

#include "zipgait/diffgait.hpp"
#include "zipgait/nn/tape.hpp"
#include "zipgait/rng.hpp"
#include "zipgait/schedule.hpp"
#include "zipgait/skeleton.hpp"
#include "zipgait/synthetic.hpp"

using namespace zipgait;

static void BM_HeatSkeleton(benchmark::State& state) {
    WalkerSequence ws = render_sequence(generate_identity(1), 1, 0);
    const LimbTable limbs = coco17_limbs();
    for (auto _ : state) {
        HeatSkeleton h = make_heat_skeleton(ws.skeletons[0], limbs, 2.0);
        benchmark::DoNotOptimize(h.data.data());
    }
}
BENCHMARK(BM_HeatSkeleton);

static void BM_Conv2dForward(benchmark::State& state) {
    const int C = static_cast<int>(state.range(0));
    nn::ParamStore<float> ps;
    Rng rng(2);
    Tensor<float>& w = ps.add("w", {C, C, 3, 3});
    Tensor<float>& b = ps.add("b", {C});
    rng.fill_normal(w.ptr(), w.numel(), 0.05);
    rng.fill_normal(b.ptr(), b.numel(), 0.05);
    Tensor<float> x({2, C, 32, 22});
    rng.fill_normal(x.ptr(), x.numel());
    for (auto _ : state) {
        nn::Tape<float> tp;
        auto y = nn::conv2d(tp, tp.input(x), tp.param(ps.at("w")), tp.param(ps.at("b")), 1, 1);
        benchmark::DoNotOptimize(tp.val(y).ptr());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64);

static void BM_DiffGaitDenoiseStep(benchmark::State& state) {
    DiffGaitNet<float> net({32}, 3);
    net.set_training(false);
    Rng rng(4);
    Tensor<float> heat({1, 2, kCanvasH, kCanvasW}), xt({1, 1, kCanvasH, kCanvasW});
    rng.fill_normal(heat.ptr(), heat.numel(), 0.3);
    rng.fill_normal(xt.ptr(), xt.numel());
    for (auto _ : state) {
        nn::Tape<float> tp;
        auto y = net.forward(tp, tp.input(heat), tp.input(xt), {500});
        benchmark::DoNotOptimize(tp.val(y).ptr());
    }
}
BENCHMARK(BM_DiffGaitDenoiseStep);

static void BM_DdimUpdate(benchmark::State& state) {
    NoiseSchedule s = cosine_schedule(1000);
    Rng rng(5);
    Tensor<float> x0({1, 1, kCanvasH, kCanvasW}), eps({1, 1, kCanvasH, kCanvasW});
    rng.fill_normal(x0.ptr(), x0.numel());
    rng.fill_normal(eps.ptr(), eps.numel());
    Tensor<float> xt = forward_diffuse(x0, 800, eps, s);
    for (auto _ : state) {
        Tensor<float> next = ddim_step(xt, x0, 800, 600, 0.0, nullptr, s);
        benchmark::DoNotOptimize(next.ptr());
    }
}
BENCHMARK(BM_DdimUpdate);

BENCHMARK_MAIN();
