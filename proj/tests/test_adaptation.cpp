// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#include "texsplat/adaptation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace texsplat {
namespace {

Camera camera_at(Vec3 pos, Real focal) {
    return look_at(pos, {0, 0, 0}, {0, -1, 0}, focal, 64, 64);
}

TextureGrid checkerboard(int ru, int rv, Real k, Real v) {
    TextureGrid g(ru, rv, k);
    for (int i = 0; i < ru; ++i)
        for (int j = 0; j < rv; ++j)
            for (int c = 0; c < 3; ++c)
                g.at(i, j, c) = deactivate((i + j) % 2 ? v : -v);
    return g;
}

Primitive textured_prim(Real sx, Real sy, int exponent = 2) {
    Primitive p;
    p.scales = {sx, sy};
    p.opacity_logit = 0.5;
    p.t2p_exponent = exponent;
    return p;
}

TEST(MinTexelSize, SingleCamera) {
    Primitive p;
    const std::vector<Camera> cams{camera_at({0, 0, -2}, 100)};
    EXPECT_NEAR(min_texel_size(p, cams), 0.02, 1e-12);
}

TEST(MinTexelSize, ClosestCameraWins) {
    Primitive p;
    const std::vector<Camera> cams{camera_at({0, 0, -2}, 100), camera_at({1, 0, 0}, 100)};
    EXPECT_NEAR(min_texel_size(p, cams), 0.01, 1e-12);
}

TEST(MinTexelSize, DoublingFocalHalves) {
    Primitive p;
    p.center = {0.3, 0.1, 0};
    const std::vector<Camera> a{camera_at({0, 0, -3}, 80)}, b{camera_at({0, 0, -3}, 160)};
    EXPECT_NEAR(min_texel_size(p, b), min_texel_size(p, a) / 2, 1e-15);
}

TEST(MinTexelSize, NoCamerasThrows) {
    EXPECT_THROW(min_texel_size(Primitive{}, std::span<const Camera>{}), std::invalid_argument);
}

TEST(TexelSize, PowerOfTwoRatio) {
    Primitive p;
    p.t2p_exponent = 2;
    EXPECT_DOUBLE_EQ(texel_size(p, 0.01), 0.04);
    p.t2p_exponent = 1;
    EXPECT_DOUBLE_EQ(texel_size(p, 0.01), 0.02);
}

TEST(TexelSize, ExponentStepQuartersTexelCount) {
    const Vec2 s{0.64, 0.64};
    Primitive p;
    p.t2p_exponent = 1;
    const auto r1 = required_resolution(s, texel_size(p, 0.01));
    p.t2p_exponent = 2;
    const auto r2 = required_resolution(s, texel_size(p, 0.01));
    EXPECT_EQ(r1[0] * r1[1], 4 * r2[0] * r2[1]);
}

TEST(InitialExponent, SmallestAxisAboutEightTexels) {
    // 6σ/8 = 0.075 with k_min = 0.01: ratio 7.5 → nearest power 8 → e = 3.
    Primitive p;
    p.scales = {0.1, 0.3};
    EXPECT_EQ(initial_exponent(p, 0.01, 8, 1), 3);
    // Tiny primitive: clamped to the floor.
    p.scales = {0.001, 0.3};
    EXPECT_EQ(initial_exponent(p, 0.01, 8, 1), 1);
}

TEST(TauTr, RampsFrom64To32) {
    const AdaptationConfig cfg;
    EXPECT_EQ(tau_tr(cfg, 0), 64);
    EXPECT_EQ(tau_tr(cfg, 3500), 48);
    EXPECT_EQ(tau_tr(cfg, 7000), 32);
    EXPECT_EQ(tau_tr(cfg, 20000), 32);
    for (int it = 0; it < 8000; it += 50)
        EXPECT_GE(tau_tr(cfg, it), tau_tr(cfg, it + 50));
}

TEST(DownscaleError, ConstantTextureIsZero) {
    TextureGrid g(6, 4, 0.1);
    for (auto &v : g.texels)
        v = 0.7;
    EXPECT_EQ(downscale_error(g, textured_prim(0.1, 0.07)), 0);
}

TEST(DownscaleError, BlockConstantIsZero) {
    // [a, a, b, b] along u.
    TextureGrid g(4, 1, 0.1);
    for (int c = 0; c < 3; ++c) {
        g.at(0, 0, c) = g.at(1, 0, c) = 0.4;
        g.at(2, 0, c) = g.at(3, 0, c) = -1.3;
    }
    // One texel along v: the half grid pads with zero, so v must pair too.
    TextureGrid g2 = reallocate(g, 4, 2);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c)
            g2.at(i, 1, c) = g2.at(i, 0, c);
    EXPECT_EQ(downscale_error(g2, textured_prim(0.07, 0.03)), 0);
}

TEST(DownscaleError, RandomBlockConstantGridsAreZero) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<Real> u(-3, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const int ru = 2 * (1 + trial % 5), rv = 2 * (1 + trial % 3);
        TextureGrid g(ru, rv, 0.05);
        for (int i = 0; i < ru; i += 2)
            for (int j = 0; j < rv; j += 2)
                for (int c = 0; c < 3; ++c) {
                    const Real v = u(rng);
                    g.at(i, j, c) = g.at(i + 1, j, c) = g.at(i, j + 1, c) = g.at(i + 1, j + 1, c) = v;
                }
        EXPECT_EQ(downscale_error(g, textured_prim(0.1, 0.2)), 0);
    }
}

TEST(DownscaleError, CheckerboardGivesAmplitude) {
    for (const Real v : {0.01, 0.3, 0.9}) {
        const TextureGrid g = checkerboard(8, 6, 0.05, v);
        EXPECT_NEAR(downscale_error(g, textured_prim(0.07, 0.05)), v, 1e-6);
    }
}

TEST(AggregateError, Examples) {
    const std::vector<ViewError> one{{3.0, 2.0}};
    EXPECT_DOUBLE_EQ(aggregate_error(one).error, 3.0);
    const std::vector<ViewError> two{{2.0, 1.0}, {0.0, 3.0}};
    EXPECT_DOUBLE_EQ(aggregate_error(two).error, 0.5);
    EXPECT_DOUBLE_EQ(aggregate_error(two).contribution, 4.0);
    const std::vector<ViewError> none{{1.0, 0.0}, {5.0, 0.0}};
    EXPECT_EQ(aggregate_error(none).error, 0);
}

TEST(TopQuantile, TenDistinctPicksArgmax) {
    std::vector<PrimitiveError> e;
    for (int i = 0; i < 10; ++i)
        e.push_back({Real((i * 7) % 10 + 1), 1});
    const auto top = top_quantile(e, 0.9);
    for (int i = 0; i < 10; ++i)
        EXPECT_EQ(top[std::size_t(i)], e[std::size_t(i)].error == 10) << i;
}

TEST(TopQuantile, UnseenPrimitivesIneligible) {
    std::vector<PrimitiveError> e{{100, 0}, {1, 1}, {2, 1}};
    const auto top = top_quantile(e, 0.9);
    EXPECT_FALSE(top[0]);
    EXPECT_FALSE(top[1]);
    EXPECT_TRUE(top[2]);
}

TEST(Split, SingleAxisExample) {
    Primitive p = textured_prim(2, 1);
    p.opacity_logit = logit(0.8);
    const auto kids = split(p, TextureView{}, std::vector<int>{0});
    ASSERT_EQ(kids.size(), 2u);
    EXPECT_NEAR(norm(kids[0].prim.center - Vec3{-2, 0, 0}), 0, 1e-12);
    EXPECT_NEAR(norm(kids[1].prim.center - Vec3{2, 0, 0}), 0, 1e-12);
    for (const auto &k : kids) {
        EXPECT_EQ(k.prim.scales, (Vec2{1, 1}));
        EXPECT_NEAR(k.prim.opacity(), 0.8 * std::exp(-0.5), 1e-9);
        EXPECT_EQ(k.prim.sh, p.sh);
        EXPECT_EQ(k.prim.t2p_exponent, p.t2p_exponent);
    }
}

TEST(Split, BothAxesGiveFourChildren) {
    Primitive p = textured_prim(0.4, 0.2);
    p.center = {1, 2, 3};
    p.rotation = normalized(Quat{0.9, 0.1, 0.3, -0.2});
    const Mat3 r = p.rotation_matrix();
    TextureGrid g(48, 24, 0.05);
    const auto kids = split(p, g, std::vector<int>{0, 1});
    ASSERT_EQ(kids.size(), 4u);
    int idx = 0;
    for (const Real a : {-0.4, 0.4})
        for (const Real b : {-0.2, 0.2}) {
            const auto &k = kids[std::size_t(idx++)];
            EXPECT_NEAR(norm(k.prim.center - (p.center + r.col[0] * a + r.col[1] * b)), 0, 1e-12);
            EXPECT_EQ(k.prim.scales, (Vec2{0.2, 0.1}));
            EXPECT_EQ(k.grid.layout.texel_size, 0.05);
            EXPECT_EQ(k.grid.layout.res_u, 24);
            EXPECT_EQ(k.grid.layout.res_v, 12);
        }
}

TEST(Split, ConstantTextureStaysConstant) {
    Primitive p = textured_prim(0.3, 0.3);
    TextureGrid g(36, 36, 0.05);
    for (auto &v : g.texels)
        v = -0.6;
    for (const auto &k : split(p, g, std::vector<int>{1})) {
        // Interior texels sample the constant; only samples that reach past
        // the parent grid's edge see padding.
        int interior = 0;
        for (int i = 0; i < k.grid.layout.res_u; ++i)
            for (int j = 0; j < k.grid.layout.res_v; ++j) {
                const Vec2 local = (Vec2{Real(i), Real(j)} - k.grid.layout.offset) * 0.05;
                const Vec2 parent = to_local(k.prim.center + k.prim.rotation_matrix() * Vec3{local.x, local.y, 0}, p);
                const Vec2 u = uv_fixed(parent, g.layout);
                if (u.x >= 0 && u.y >= 0 && u.x <= 35 && u.y <= 35) {
                    ++interior;
                    for (int c = 0; c < 3; ++c)
                        EXPECT_NEAR(k.grid.at(i, j, c), -0.6, 1e-12);
                }
            }
        EXPECT_GT(interior, 0);
    }
}

TEST(Split, ChildTexelsSampleParentAtWorldPoints) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<Real> u(-2, 2);
    Primitive p = textured_prim(0.5, 0.25);
    p.center = {0.2, -0.1, 4};
    p.rotation = normalized(Quat{1, -0.2, 0.1, 0.4});
    TextureGrid g(30, 15, 0.1);
    for (auto &v : g.texels)
        v = u(rng);
    for (const auto &k : split(p, g, std::vector<int>{0})) {
        for (int i = 0; i < k.grid.layout.res_u; ++i)
            for (int j = 0; j < k.grid.layout.res_v; ++j) {
                const Vec2 cl = (Vec2{Real(i), Real(j)} - k.grid.layout.offset) * 0.1;
                const Vec3 world = k.prim.center + k.prim.rotation_matrix() * Vec3{cl.x, cl.y, 0};
                const Vec3 expect = sample_raw(g, uv_fixed(to_local(world, p), g.layout));
                for (int c = 0; c < 3; ++c)
                    EXPECT_NEAR(k.grid.at(i, j, c), expect[c], 1e-9);
            }
    }
}

TEST(Split, ChildrenCoverInnerFootprint) {
    // Children at ±σ with half scale reach ±2.5σ of the parent along the
    // split axis.
    const Primitive p = textured_prim(1, 1);
    const auto kids = split(p, TextureView{}, std::vector<int>{0});
    Real lo = 1e9, hi = -1e9;
    for (const auto &k : kids) {
        lo = std::min(lo, k.prim.center.x - 3 * k.prim.scales.x);
        hi = std::max(hi, k.prim.center.x + 3 * k.prim.scales.x);
    }
    EXPECT_NEAR(lo, -2.5, 1e-12);
    EXPECT_NEAR(hi, 2.5, 1e-12);
}

Scene grid_scene(const std::vector<Primitive> &prims, const std::vector<TextureGrid> &grids) {
    Scene s;
    s.prims = prims;
    s.textures = TexturePool::from_grids(grids);
    return s;
}

TEST(AdaptStep, OnlyArgmaxUpscales) {
    std::vector<Primitive> prims;
    std::vector<TextureGrid> grids;
    std::vector<PrimitiveError> errors;
    for (int i = 0; i < 10; ++i) {
        prims.push_back(textured_prim(0.1, 0.1, 3));
        grids.push_back(checkerboard(8, 8, 0.075, 0.5)); // high E_d: never downscaled
        errors.push_back({Real(i == 6 ? 5 : i + 1) / 10, 1});
    }
    Scene s = grid_scene(prims, grids);
    const auto res = adapt_step(s, errors, AdaptationConfig{}, 1000);
    ASSERT_EQ(res.log.size(), 1u);
    EXPECT_EQ(res.log[0].prim_id, 9u);
    EXPECT_EQ(res.log[0].action, AdaptAction::upscale);
    EXPECT_EQ(s.prims[9].t2p_exponent, 2);
    EXPECT_EQ(s.textures.layout(9).res_u, 16);
    EXPECT_EQ(s.textures.layout(9).texel_size, 0.0375);
    for (int i = 0; i < 9; ++i)
        EXPECT_EQ(s.prims[std::size_t(i)].t2p_exponent, 3);
}

TEST(AdaptStep, SmoothLowErrorPrimitiveDownscales) {
    std::vector<Primitive> prims{textured_prim(0.1, 0.1, 2), textured_prim(0.1, 0.1, 2)};
    TextureGrid flat(12, 12, 0.05);
    for (auto &v : flat.texels)
        v = 0.2;
    std::vector<TextureGrid> grids{flat, checkerboard(12, 12, 0.05, 0.5)};
    std::vector<PrimitiveError> errors{{0.1, 1}, {0.9, 1}};
    Scene s = grid_scene(prims, grids);
    const auto res = adapt_step(s, errors, AdaptationConfig{}, 1000);
    EXPECT_EQ(s.prims[0].t2p_exponent, 3);
    EXPECT_EQ(s.textures.layout(0).res_u, 6);
    EXPECT_EQ(s.textures.layout(0).texel_size, 0.1);
    EXPECT_EQ(s.prims[1].t2p_exponent, 1); // top error: upscaled
    EXPECT_TRUE(res.texture_changed[0]);
}

TEST(AdaptStep, FloorPrimitiveWithTopErrorUnchanged) {
    std::vector<Primitive> prims{textured_prim(0.1, 0.1, 1), textured_prim(0.1, 0.1, 1)};
    std::vector<TextureGrid> grids{checkerboard(12, 12, 0.05, 0.5), checkerboard(12, 12, 0.05, 0.5)};
    std::vector<PrimitiveError> errors{{0.1, 1}, {0.9, 1}};
    Scene s = grid_scene(prims, grids);
    const Scene before = s;
    const auto res = adapt_step(s, errors, AdaptationConfig{}, 1000);
    EXPECT_TRUE(res.log.empty());
    EXPECT_EQ(s, before);
}

TEST(AdaptStep, HighResolutionTopPrimitiveSplits) {
    // 80 × 20 texels against τ_tr = 32: split along u only, then upscale.
    std::vector<Primitive> prims{textured_prim(0.4, 0.1, 2), textured_prim(0.1, 0.1, 2)};
    std::vector<TextureGrid> grids{TextureGrid(80, 20, 0.03), checkerboard(8, 8, 0.075, 0.5)};
    std::vector<PrimitiveError> errors{{0.9, 1}, {0.1, 1}};
    Scene s = grid_scene(prims, grids);
    const auto res = adapt_step(s, errors, AdaptationConfig{}, 8000);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(res.source, (std::vector<std::size_t>{0, 0, 1}));
    EXPECT_EQ(res.created, (std::vector<bool>{true, true, false}));
    ASSERT_GE(res.log.size(), 2u);
    EXPECT_EQ(res.log[0].action, AdaptAction::split);
    EXPECT_EQ(res.log[0].detail, "u");
    EXPECT_EQ(res.log[1].action, AdaptAction::upscale);
    for (int c = 0; c < 2; ++c) {
        EXPECT_EQ(s.prims[std::size_t(c)].scales, (Vec2{0.2, 0.1}));
        EXPECT_EQ(s.prims[std::size_t(c)].t2p_exponent, 1);
        EXPECT_EQ(s.textures.layout(std::size_t(c)).texel_size, 0.015);
    }
}

TEST(AdaptStep, SplitSkippedWhenDisallowed) {
    std::vector<Primitive> prims{textured_prim(0.4, 0.4, 1), textured_prim(0.1, 0.1, 1)};
    std::vector<TextureGrid> grids{TextureGrid(80, 80, 0.03), checkerboard(8, 8, 0.075, 0.5)};
    std::vector<PrimitiveError> errors{{0.9, 1}, {0.1, 1}};
    Scene s = grid_scene(prims, grids);
    const auto res = adapt_step(s, errors, AdaptationConfig{}, 8000, 0);
    EXPECT_EQ(s.size(), 2u);
    for (const auto &m : res.log)
        EXPECT_NE(m.action, AdaptAction::split);
}

TEST(AdaptStep, SplitRoomGoesToHighestError) {
    std::vector<Primitive> prims{textured_prim(0.4, 0.4, 1), textured_prim(0.4, 0.4, 1),
                                 textured_prim(0.4, 0.4, 1)};
    std::vector<TextureGrid> grids{TextureGrid(80, 80, 0.03), TextureGrid(80, 80, 0.03), TextureGrid(80, 80, 0.03)};
    std::vector<PrimitiveError> errors{{0.5, 1}, {0.9, 1}, {0.7, 1}};
    Scene s = grid_scene(prims, grids);
    AdaptationConfig cfg;
    cfg.quantile = 0.01;
    const auto res = adapt_step(s, errors, cfg, 8000, 4);
    // Primitive 1 takes three of the four slots; nothing else fits.
    EXPECT_EQ(s.size(), 6u);
    EXPECT_EQ(res.source, (std::vector<std::size_t>{0, 1, 1, 1, 1, 2}));
}

TEST(AdaptStep, NeverBelowFloorOrAboveCap) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<Real> u(0, 1);
    AdaptationConfig cfg;
    cfg.quantile = 0.5;
    std::vector<Primitive> prims;
    std::vector<TextureGrid> grids;
    for (int i = 0; i < 12; ++i) {
        prims.push_back(textured_prim(0.2 + u(rng), 0.2 + u(rng), 1 + i % 3));
        grids.push_back(checkerboard(4 + 20 * (i % 4), 4 + 30 * (i % 3), 0.02, 0.3));
    }
    Scene s = grid_scene(prims, grids);
    for (int round = 0; round < 6; ++round) {
        std::vector<PrimitiveError> errors;
        for (std::size_t i = 0; i < s.size(); ++i)
            errors.push_back({u(rng), 1});
        adapt_step(s, errors, cfg, 1000 * round);
        for (std::size_t i = 0; i < s.size(); ++i) {
            EXPECT_GE(s.prims[i].t2p_exponent, cfg.t2p_floor_exponent);
            EXPECT_LE(s.textures.layout(i).res_u, kMaxTextureRes);
            EXPECT_LE(s.textures.layout(i).res_v, kMaxTextureRes);
        }
    }
}

TEST(AdaptStep, UpscaleThenDownscaleRestoresTexels) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<Real> u(-2, 2);
    TextureGrid g(7, 5, 0.08);
    for (auto &v : g.texels)
        v = u(rng);
    Scene s = grid_scene({textured_prim(0.1, 0.07, 3), textured_prim(0.1, 0.1, 3)},
                         {g, checkerboard(8, 8, 0.075, 0.5)});
    const Scene before = s;
    // Top error: upscale.
    adapt_step(s, std::vector<PrimitiveError>{{0.9, 1}, {0.1, 1}}, AdaptationConfig{}, 1000);
    ASSERT_EQ(s.prims[0].t2p_exponent, 2);
    // Upscaled texels are 2×2 block constant: E_d = 0, so a low error
    // downscales it back.
    adapt_step(s, std::vector<PrimitiveError>{{0.1, 1}, {0.9, 1}}, AdaptationConfig{}, 1250);
    EXPECT_EQ(s.prims[0].t2p_exponent, 3);
    EXPECT_EQ(s.textures.grid(0), before.textures.grid(0));
}

TEST(AdaptStep, BadConfigThrows) {
    Scene s;
    AdaptationConfig cfg;
    cfg.quantile = 1;
    EXPECT_THROW(adapt_step(s, {}, cfg, 0), std::invalid_argument);
    cfg = {};
    cfg.tau_ds = 0;
    EXPECT_THROW(adapt_step(s, {}, cfg, 0), std::invalid_argument);
}

} // namespace
} // namespace texsplat
