#include <doctest.h>

#include <cmath>

#include "zipgait/pgi.hpp"
#include "zipgait/rng.hpp"

using namespace zipgait;

namespace {

MultiLevelSilhouettes random_preds(int n, std::uint64_t seed) {
    MultiLevelSilhouettes m;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Tensor<float> t({1, 1, 8, 6});
        for (auto& v : t.data) v = static_cast<float>(rng.uniform());
        m.preds.push_back(std::move(t));
    }
    return m;
}

}  // namespace

TEST_CASE("one-hot weights select the matching prediction exactly") {
    auto preds = random_preds(5, 1);
    for (int pick = 0; pick < 5; ++pick) {
        FusionWeights w{std::vector<double>(5, 0.0)};
        w.w[static_cast<size_t>(pick)] = 1.0;
        Tensor<float> out = stage_one_combine(preds, w);
        for (std::int64_t i = 0; i < out.numel(); ++i)
            CHECK(out.data[static_cast<size_t>(i)] ==
                  preds.preds[static_cast<size_t>(pick)].data[static_cast<size_t>(i)]);
    }
}

TEST_CASE("default weights reproduce the naive weighted sum") {
    auto preds = random_preds(5, 2);
    FusionWeights w = FusionWeights::recommended();
    Tensor<float> out = stage_one_combine(preds, w);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        double want = 0;
        for (int p = 0; p < 5; ++p)
            want += w.w[static_cast<size_t>(p)] *
                    preds.preds[static_cast<size_t>(p)].data[static_cast<size_t>(i)];
        CHECK(std::abs(out.data[static_cast<size_t>(i)] - want) < 1e-7);
    }
}

TEST_CASE("weight validation") {
    CHECK_THROWS_AS((FusionWeights{{0.5, 0.6}}.validate()), InvalidParameter);
    CHECK_THROWS_AS((FusionWeights{{-0.1, 1.1}}.validate()), InvalidParameter);
    CHECK_NOTHROW((FusionWeights{{0.25, 0.75}}.validate()));
    auto preds = random_preds(3, 3);
    CHECK_THROWS_AS(stage_one_combine(preds, FusionWeights{{0.5, 0.5}}), ShapeError);
    CHECK_THROWS_AS(stage_one_combine(MultiLevelSilhouettes{}, FusionWeights{{1.0}}), ShapeError);
}

TEST_CASE("stage-two output is the gated convex combination") {
    Rng rng(4);
    nn::ParamStore<float> ps;
    PgiFusion<float>::register_params(ps, 8, rng);
    Tensor<float> sil({2, 1, 16, 12});
    Tensor<float> heat({2, 2, 16, 12});
    rng.fill_normal(sil.ptr(), sil.numel());
    rng.fill_normal(heat.ptr(), heat.numel());

    nn::Tape<float> tp;
    auto out = PgiFusion<float>::fuse(tp, ps, tp.input(sil), tp.input(heat), false);
    const Tensor<float>& h = tp.val(out.h);
    const Tensor<float>& fs = tp.val(out.f_sil);
    const Tensor<float>& fk = tp.val(out.f_ske);
    const Tensor<float>& g = tp.val(out.gate);
    for (std::int64_t i = 0; i < h.numel(); ++i) {
        const size_t k = static_cast<size_t>(i);
        CHECK(g.data[k] > 0.0f);
        CHECK(g.data[k] < 1.0f);
        const float want = g.data[k] * fs.data[k] + (1.0f - g.data[k]) * fk.data[k];
        CHECK(h.data[k] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("gate endpoints hand over to a single branch") {
    Rng rng(5);
    nn::ParamStore<float> ps;
    PgiFusion<float>::register_params(ps, 8, rng);
    Tensor<float> sil({1, 1, 16, 12});
    Tensor<float> heat({1, 2, 16, 12});
    rng.fill_normal(sil.ptr(), sil.numel());
    rng.fill_normal(heat.ptr(), heat.numel());

    for (float bias : {40.0f, -40.0f}) {
        ps.at("pgi.g2.w").value.fill(0.0f);
        ps.at("pgi.g2.b").value.fill(bias);  // saturates the sigmoid
        nn::Tape<float> tp;
        auto out = PgiFusion<float>::fuse(tp, ps, tp.input(sil), tp.input(heat), false);
        const Tensor<float>& h = tp.val(out.h);
        const Tensor<float>& want = bias > 0 ? tp.val(out.f_sil) : tp.val(out.f_ske);
        for (std::int64_t i = 0; i < h.numel(); ++i)
            CHECK(h.data[static_cast<size_t>(i)] ==
                  doctest::Approx(want.data[static_cast<size_t>(i)]).epsilon(1e-6));
    }
}
