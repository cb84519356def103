// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#include "gradcheck.hpp"
#include "support.hpp"

#include "texsplat/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace texsplat {
namespace {

using testing::gradcheck_scene_options;
using testing::gradient_check;
using testing::oracle_render;
using testing::random_scene;
using testing::test_camera;

void expect_report_ok(const testing::GradCheckReport &rep, Real tol, Real rot_tol) {
    for (int c = 0; c < testing::kParamClasses; ++c) {
        const auto &r = rep.classes[std::size_t(c)];
        const Real t = c == int(testing::ParamClass::rotation) ? rot_tol : tol;
        EXPECT_LE(r.max_rel_error, t) << testing::class_name(testing::ParamClass(c)) << " scale " << r.scale;
    }
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<Real> u(0, 1);
    Image a(13, 11), b(13, 11);
    for (auto &v : a.data)
        v = u(rng);
    for (auto &v : b.data)
        v = u(rng);
    const auto s = ssim(a, b, true);
    for (std::size_t i = 0; i < a.data.size(); i += 7) {
        Image p = a, m = a;
        p.data[i] += 1e-5;
        m.data[i] -= 1e-5;
        EXPECT_NEAR(s.grad[i], (ssim(p, b).value - ssim(m, b).value) / 2e-5, 1e-8);
    }
}

TEST(Ssim, IdenticalImagesScoreOne) {
    Image a(9, 9);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        a.data[i] = Real(i % 5) / 5;
    EXPECT_NEAR(ssim(a, a).value, 1, 1e-12);
}

TEST(Backward, SinglePrimitiveMatchesFiniteDifferences) {
    std::mt19937_64 rng(100);
    const Camera cam = test_camera(32, 32);
    for (int trial = 0; trial < 4; ++trial) {
        auto opt = gradcheck_scene_options(1);
        const Scene scene = random_scene(rng, opt);
        const Image ref = testing::gradcheck_reference(cam, scene, rng);
        const auto rep = gradient_check(cam, scene, ref, LossWeights{}, RenderSettings::smooth(), 1e-4,
                                        std::numeric_limits<std::size_t>::max(), rng);
        expect_report_ok(rep, 1e-3, 1e-2);
    }
}

TEST(Backward, MultiPrimitiveMatchesFiniteDifferences) {
    std::mt19937_64 rng(200);
    const Camera cam = test_camera(32, 32);
    for (int trial = 0; trial < 3; ++trial) {
        auto opt = gradcheck_scene_options(5);
        opt.min_prims = 2;
        const Scene scene = random_scene(rng, opt);
        const Image ref = testing::gradcheck_reference(cam, scene, rng);
        const auto rep = gradient_check(cam, scene, ref, LossWeights{}, RenderSettings::smooth(), 1e-4, 40, rng);
        expect_report_ok(rep, 1e-3, 1e-2);
    }
}

TEST(Backward, ZeroAgainstOwnRender) {
    std::mt19937_64 rng(7);
    const Camera cam = test_camera(32, 32);
    const Scene scene = random_scene(rng, gradcheck_scene_options(4));
    const Image ref = render(cam, scene).image;
    const auto bw = backward(cam, scene, ref, LossWeights{0.2, 0, 0});
    EXPECT_EQ(bw.loss.l1, 0);
    EXPECT_NEAR(bw.loss.total, 0, 1e-12);
    // SSIM's gradient at a = b is zero up to roundoff.
    for (const auto &g : bw.grads.prims) {
        for (int k = 0; k < 3; ++k)
            EXPECT_NEAR(g.center[k], 0, 1e-12);
        EXPECT_NEAR(g.opacity_logit, 0, 1e-12);
        for (const Real v : g.sh)
            EXPECT_NEAR(v, 0, 1e-12);
    }
    for (const Real v : bw.grads.texels)
        EXPECT_NEAR(v, 0, 1e-12);
}

TEST(Backward, LossMatchesForwardLoss) {
    std::mt19937_64 rng(8);
    const Camera cam = test_camera(32, 32);
    const Scene scene = random_scene(rng);
    const Image ref = oracle_render(cam, random_scene(rng));
    const LossWeights w{0.2, 0.01, 0.05};
    const auto bw = backward(cam, scene, ref, w);
    EXPECT_NEAR(bw.loss.total, testing::forward_loss(cam, scene, ref, w, RenderSettings{}), 1e-12);
    EXPECT_NEAR(bw.loss.rgb, loss_rgb(bw.render.image, ref, 0.2), 1e-12);
}

TEST(Backward, RegularizerGradientsAreLinearInWeight) {
    std::mt19937_64 rng(9);
    const Camera cam = test_camera(24, 24);
    const Scene scene = random_scene(rng);
    const Image ref = oracle_render(cam, random_scene(rng));
    const auto g0 = backward(cam, scene, ref, {0.2, 0, 0}).grads;
    const auto g1 = backward(cam, scene, ref, {0.2, 0.03, 0.02}).grads;
    const auto g2 = backward(cam, scene, ref, {0.2, 0.06, 0.04}).grads;
    for (std::size_t i = 0; i < g0.texels.size(); ++i)
        EXPECT_NEAR(g2.texels[i] - g0.texels[i], 2 * (g1.texels[i] - g0.texels[i]), 1e-12);
    for (std::size_t i = 0; i < g0.prims.size(); ++i)
        EXPECT_NEAR(g2.prims[i].opacity_logit - g0.prims[i].opacity_logit,
                    2 * (g1.prims[i].opacity_logit - g0.prims[i].opacity_logit), 1e-12);
}

TEST(Backward, TextureRegularizerPushesTowardZero) {
    // Only the sparsity term: gradient sign matches the texel sign, and a
    // small step against it shrinks |activated texel|.
    Scene scene;
    Primitive p;
    p.center = {0, 0, 100}; // far outside the view
    scene.prims = {p};
    TextureGrid g(2, 2, 0.1);
    g.texels = {0.5, -0.3, 1.2, -2, 0.1, 0.7, -0.4, 0.9, -1.1, 0.2, 0.3, -0.6};
    scene.textures = TexturePool::from_grids(std::vector<TextureGrid>{g});
    const Camera cam = test_camera(8, 8);
    const auto bw = backward(cam, scene, Image(8, 8), {0.2, 0.5, 0});
    for (std::size_t i = 0; i < g.texels.size(); ++i) {
        const Real v = g.texels[i];
        EXPECT_EQ(std::signbit(bw.grads.texels[i]), std::signbit(v));
        const Real fd = 0.5 * (std::abs(activate(v + 1e-6)) - std::abs(activate(v - 1e-6))) / 2e-6;
        EXPECT_NEAR(bw.grads.texels[i], fd, 1e-8);
    }
}

TEST(Backward, TexelsOutsideFootprintGetNoImageGradient) {
    // A 1×1 grid at a large offset: never sampled, so no gradient.
    const Camera cam = test_camera(16, 16);
    Primitive p;
    p.center = {0, 0, 3};
    p.scales = {0.5, 0.5};
    p.sh[0] = sh_dc_from_color(0.5);
    Scene scene;
    scene.prims = {p};
    TextureGrid g(1, 1, 0.01);
    g.layout.offset = {500, 500};
    g.texels = {0.3, 0.3, 0.3};
    scene.textures = TexturePool::from_grids(std::vector<TextureGrid>{g});
    Image ref(16, 16);
    const auto bw = backward(cam, scene, ref, {0.2, 0, 0});
    EXPECT_NE(bw.grads.prims[0].opacity_logit, 0);
    for (const Real v : bw.grads.texels)
        EXPECT_EQ(v, 0);
}

TEST(Backward, ScaleDoesNotMoveTexelCoordinates) {
    // Same ray, same plane, different σ: local point and texel taps are
    // identical, so UV contributes nothing to the scale gradient.
    const Camera cam = test_camera(16, 16);
    Primitive p;
    p.center = {0.1, -0.05, 2};
    p.rotation = normalized(Quat{1, 0.1, -0.2, 0.05});
    p.scales = {0.2, 0.3};
    Scene a;
    a.prims = {p};
    a.textures = TexturePool::from_grids(std::vector<TextureGrid>{TextureGrid(12, 12, 0.05)});
    Scene b = a;
    b.prims[0].scales = {0.6, 0.1};
    const RenderSettings s = RenderSettings::smooth();
    const auto pa = detail::prepare(cam, a, s), pb = detail::prepare(cam, b, s);
    const std::vector<int> cand{0};
    std::vector<HitSample> ha, hb;
    for (int y = 0; y < 16; y += 3)
        for (int x = 0; x < 16; x += 3) {
            const Ray ray = pixel_ray(cam, x, y);
            detail::trace(ray, pa, cand, sh_basis(ray.direction), ha);
            detail::trace(ray, pb, cand, sh_basis(ray.direction), hb);
            ASSERT_EQ(ha.size(), 1u);
            ASSERT_EQ(hb.size(), 1u);
            EXPECT_EQ(ha[0].local, hb[0].local);
            EXPECT_EQ(ha[0].taps.index, hb[0].taps.index);
            EXPECT_EQ(ha[0].taps.weight, hb[0].taps.weight);
            EXPECT_NE(ha[0].canonical, hb[0].canonical);
        }
}

TEST(Backward, GradientsIndependentOfThreadCount) {
    std::mt19937_64 rng(10);
    const Camera cam = test_camera(48, 48);
    const Scene scene = random_scene(rng);
    const Image ref = oracle_render(cam, random_scene(rng));
    RenderSettings one, many;
    one.threads = 1;
    many.threads = 3;
    const auto a = backward(cam, scene, ref, {}, one).grads;
    const auto b = backward(cam, scene, ref, {}, many).grads;
    EXPECT_EQ(a.texels, b.texels);
    for (std::size_t i = 0; i < a.prims.size(); ++i) {
        EXPECT_EQ(a.prims[i].center, b.prims[i].center);
        EXPECT_EQ(a.prims[i].rotation, b.prims[i].rotation);
        EXPECT_EQ(a.prims[i].sh, b.prims[i].sh);
    }
    EXPECT_TRUE(a.all_finite());
}

TEST(Backward, NonFiniteLossReportsView) {
    const Camera cam = test_camera(8, 8);
    Primitive p;
    p.center = {0, 0, 2};
    p.sh[0] = std::numeric_limits<Real>::quiet_NaN();
    Scene scene;
    scene.prims = {p};
    scene.textures = TexturePool::empty_grids(1);
    try {
        backward(cam, scene, Image(8, 8), {}, {}, 6);
        FAIL() << "expected NonFiniteLoss";
    } catch (const NonFiniteLoss &e) {
        EXPECT_EQ(e.view(), 6);
    }
}

} // namespace
} // namespace texsplat
