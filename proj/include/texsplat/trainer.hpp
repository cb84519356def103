// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/adaptation.hpp"
#include "texsplat/autodiff.hpp"
#include "texsplat/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace texsplat {

class TrainError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Adam step sizes per parameter class.
struct LearningRates {
    Real center = 1.6e-4; ///< times the camera extent
    Real center_final_factor = 0.01; ///< exponential decay reaches this at the last iteration
    Real scale = 5e-3; ///< on log σ
    Real rotation = 5e-3;
    Real opacity = 5e-2; ///< on the logit
    Real sh = 2.5e-3; ///< DC band
    Real sh_rest_factor = 0.05; ///< higher bands use sh × this
    Real texel = 2.5e-2;
};

struct TrainConfig {
    int iters = 25000;
    LossWeights weights;
    LearningRates lr;
    int texture_start_iter = 500;
    int adapt_every = 250;
    int adapt_until = 25000;
    int realloc_every = 100;
    int init_smallest_axis_texels = 8;
    std::optional<int> point_budget;
    AdaptationConfig adaptation;
    /// Off: no split, rescale or pruning; textures still follow ±3σ.
    bool adapt = true;
    Real prune_opacity = 0.005;
    /// Initial primitive count (random init, or cap on the point cloud).
    int init_count = 100;
    int log_every = 250;
    std::uint64_t seed = 0;
    RenderSettings render;

    void validate() const {
        if (iters < 0)
            throw std::invalid_argument("iters must be non-negative");
        if (weights.ssim < 0 || weights.ssim > 1 || weights.texture < 0 || weights.opacity < 0)
            throw std::invalid_argument("loss weights must be non-negative (lambda-ssim at most 1)");
        if (texture_start_iter < 0 || adapt_every <= 0 || realloc_every <= 0 || log_every <= 0 || adapt_until < 0)
            throw std::invalid_argument("cadences must be positive");
        if (init_smallest_axis_texels < 1 || init_count < 1)
            throw std::invalid_argument("init counts must be positive");
        if (point_budget && *point_budget < 1)
            throw std::invalid_argument("point budget must be positive");
        if (!(prune_opacity >= 0 && prune_opacity < 1))
            throw std::invalid_argument("prune opacity must lie in [0, 1)");
        adaptation.validate();
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"iters", iters},
                         {"lambda_ssim", weights.ssim},
                         {"lambda_texture", weights.texture},
                         {"lambda_opacity", weights.opacity},
                         {"lr",
                          {{"center", lr.center},
                           {"center_final_factor", lr.center_final_factor},
                           {"scale", lr.scale},
                           {"rotation", lr.rotation},
                           {"opacity", lr.opacity},
                           {"sh", lr.sh},
                           {"sh_rest_factor", lr.sh_rest_factor},
                           {"texel", lr.texel}}},
                         {"texture_start_iter", texture_start_iter},
                         {"adapt_every", adapt_every},
                         {"adapt_until", adapt_until},
                         {"realloc_every", realloc_every},
                         {"init_smallest_axis_texels", init_smallest_axis_texels},
                         {"point_budget", point_budget ? nlohmann::json(*point_budget) : nlohmann::json(nullptr)},
                         {"tau_ds", adaptation.tau_ds},
                         {"quantile", adaptation.quantile},
                         {"tau_tr_start", adaptation.tau_tr_start},
                         {"tau_tr_end", adaptation.tau_tr_end},
                         {"tau_tr_ramp_iters", adaptation.tau_tr_ramp_iters},
                         {"t2p_floor_exponent", adaptation.t2p_floor_exponent},
                         {"adapt", adapt},
                         {"prune_opacity", prune_opacity},
                         {"init_count", init_count},
                         {"log_every", log_every},
                         {"seed", seed}};
        return j;
    }
};

struct ParameterCount {
    std::size_t n_prims = 0;
    std::size_t n_texels = 0;
    std::size_t n_params = 0;
};

/// 58 splat parameters plus the texel size per primitive, 3 per texel.
inline ParameterCount parameter_count(const Scene &s) {
    const std::size_t t = s.textures.total_texels();
    return {s.size(), t, 59 * s.size() + 3 * t};
}

inline Real mean_t2p_exponent(const Scene &s) {
    Real acc = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (!s.textures.layout(i).empty()) {
            acc += s.prims[i].t2p_exponent;
            ++n;
        }
    return n ? acc / Real(n) : 0;
}

struct Metrics {
    int iter = 0;
    Real l1 = 0;   ///< training L1, mean since the previous record
    Real ssim = 0; ///< training SSIM, same window
    Real loss = 0; ///< training total loss, same window
    std::optional<Real> psnr_test;
    std::size_t n_prims = 0, n_texels = 0, n_params = 0;
    Real mean_t2p = 0;

    nlohmann::json to_json() const {
        return {{"iter", iter},
                {"l1", l1},
                {"ssim", ssim},
                {"loss", loss},
                {"psnr_test", psnr_test ? nlohmann::json(*psnr_test) : nlohmann::json(nullptr)},
                {"n_prims", n_prims},
                {"n_texels", n_texels},
                {"n_params", n_params},
                {"mean_t2p", mean_t2p}};
    }
};

/// Mean PSNR over `views`, rendered from `scene`.
inline Real mean_psnr(const Dataset &ds, std::span<const std::size_t> views, const Scene &scene,
                      const RenderSettings &settings = {}) {
    if (views.empty())
        throw std::invalid_argument("mean_psnr: no views");
    Real acc = 0;
    for (const std::size_t v : views)
        acc += psnr(render(ds.cameras[v], scene, settings).image, ds.images[v]);
    return acc / Real(views.size());
}

/// Radius of the training cameras around their centroid, times 1.1.
inline Real camera_extent(std::span<const Camera> cams) {
    if (cams.empty())
        return 1;
    Vec3 mean;
    for (const auto &c : cams)
        mean += c.center();
    mean = mean / Real(cams.size());
    Real r = 0;
    for (const auto &c : cams)
        r = std::max(r, norm(c.center() - mean));
    return r > 0 ? 1.1 * r : 1;
}

namespace detail {

/// Rotation whose third column is `n`.
inline Quat facing_rotation(Vec3 n) {
    if (!(norm(n) > 0))
        return {1, 0, 0, 0};
    n = normalized(n);
    const Vec3 helper = std::abs(n.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    const Vec3 u = normalized(cross(helper, n));
    const Vec3 v = cross(n, u);
    Mat3 m;
    m.col = {u, v, n};
    return quat_from_matrix(m);
}

/// Pixel color where `p` projects in the training view with the closest
/// camera; gray when it falls outside.
inline Vec3 nearest_pixel_color(const Dataset &ds, Vec3 p) {
    std::size_t best = ds.train.front();
    Real best_d = std::numeric_limits<Real>::infinity();
    for (const std::size_t v : ds.train) {
        const Real d = norm(ds.cameras[v].center() - p);
        if (d < best_d) {
            best_d = d;
            best = v;
        }
    }
    const Camera &c = ds.cameras[best];
    const Vec3 q = c.to_camera(p);
    if (q.z > 0) {
        const int x = int(std::floor(c.fx * q.x / q.z + c.cx));
        const int y = int(std::floor(c.fy * q.y / q.z + c.cy));
        if (x >= 0 && y >= 0 && x < c.width && y < c.height)
            return ds.images[best].at(x, y);
    }
    return {0.5, 0.5, 0.5};
}

} // namespace detail

/// Starting primitives: the dataset's points (a seeded subset of at most
/// init_count) or init_count uniform samples of its bounds. Isotropic
/// scales equal the mean nearest-neighbour distance, normals face the mean
/// training camera, opacity 0.5, untextured.
inline Scene initialize_scene(const Dataset &ds, const TrainConfig &cfg) {
    if (ds.train.empty())
        throw TrainError("dataset has no training views");
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<Vec3> pos, col;
    const std::size_t n_init = std::size_t(cfg.init_count);
    if (!ds.points.positions.empty()) {
        std::vector<std::size_t> idx(ds.points.positions.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
        if (idx.size() > n_init) {
            // Partial Fisher-Yates with explicit draws; stable across standard libraries.
            for (std::size_t i = 0; i < n_init; ++i)
                std::swap(idx[i], idx[i + std::size_t(rng() % (idx.size() - i))]);
            idx.resize(n_init);
        }
        for (const std::size_t i : idx) {
            pos.push_back(ds.points.positions[i]);
            col.push_back(ds.points.colors[i]);
        }
    } else {
        if (!ds.bounds)
            throw TrainError("dataset has neither a point cloud nor bounds to initialize from");
        const Aabb b = *ds.bounds;
        auto uniform = [&](Real lo, Real hi) { return lo + (hi - lo) * Real(rng() >> 11) * 0x1.0p-53; };
        for (std::size_t i = 0; i < n_init; ++i) {
            const Vec3 p{uniform(b.lo.x, b.hi.x), uniform(b.lo.y, b.hi.y), uniform(b.lo.z, b.hi.z)};
            pos.push_back(p);
            col.push_back(detail::nearest_pixel_color(ds, p));
        }
    }

    Real scale = 0;
    if (pos.size() > 1) {
        for (std::size_t i = 0; i < pos.size(); ++i) {
            Real best = std::numeric_limits<Real>::infinity();
            for (std::size_t j = 0; j < pos.size(); ++j)
                if (j != i)
                    best = std::min(best, norm(pos[i] - pos[j]));
            scale += best;
        }
        scale /= Real(pos.size());
    }
    if (!(scale > 0))
        scale = 0.1 * camera_extent(ds.train_cameras());

    Vec3 cam_mean;
    for (const std::size_t v : ds.train)
        cam_mean += ds.cameras[v].center();
    cam_mean = cam_mean / Real(ds.train.size());

    Scene s;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        Primitive p;
        p.center = pos[i];
        p.scales = {scale, scale};
        p.rotation = detail::facing_rotation(cam_mean - pos[i]);
        p.opacity_logit = 0;
        for (int c = 0; c < 3; ++c)
            p.sh[std::size_t(c * kShCoeffs)] = sh_dc_from_color(col[i][c]);
        p.t2p_exponent = cfg.adaptation.t2p_floor_exponent;
        s.prims.push_back(p);
    }
    s.textures = TexturePool::empty_grids(s.size());
    quantize_to_storage(s);
    return s;
}

/// Per-primitive parameter vector as the optimizer sees it:
/// center 3, log σ 2, rotation 4, opacity logit 1, SH 48.
inline constexpr std::size_t kPrimSlots = 58;

/// Runs the optimization loop one iteration at a time.
class Trainer {
  public:
    using Callback = std::function<void(const Metrics &)>;

    Trainer(const Dataset &ds, TrainConfig cfg, std::optional<Scene> init = std::nullopt)
        : ds_(ds), cfg_(std::move(cfg)), rng_(cfg_.seed) {
        cfg_.validate();
        ds_.validate();
        if (ds_.train.empty())
            throw TrainError("dataset has no training views");
        cfg_.render.threads = std::max(1, cfg_.render.threads);
        train_cams_ = ds_.train_cameras();
        train_imgs_ = ds_.train_images();
        extent_ = camera_extent(train_cams_);
        scene_ = init ? std::move(*init) : initialize_scene(ds_, cfg_);
        if (scene_.textures.size() != scene_.size())
            throw std::invalid_argument("trainer: texture pool does not match primitive count");
        textures_on_ = cfg_.texture_start_iter == 0 || scene_.textures.total_texels() > 0;
        if (cfg_.texture_start_iter == 0 && scene_.textures.total_texels() == 0)
            init_textures();
        reset_moments();
    }

    int iteration() const { return iter_; }
    bool done() const { return iter_ >= cfg_.iters; }
    const Scene &scene() const { return scene_; }
    const TrainConfig &config() const { return cfg_; }
    const std::vector<Metrics> &metrics() const { return metrics_; }
    const std::vector<Mutation> &mutations() const { return mutations_; }
    std::size_t pruned() const { return pruned_; }
    /// Optimizer moment buffer sizes: {primitive records, texels}.
    std::array<std::size_t, 2> moment_sizes() const { return {prim_m_.size(), tex_m_.size()}; }

    Checkpoint checkpoint() const { return {scene_, std::uint32_t(iter_), cfg_.to_json().dump()}; }

    /// One iteration: sample a view, step every parameter, then run
    /// whatever schedule falls on the new iteration number.
    void step(const Callback &on_metrics = {}) {
        if (done())
            return;
        const std::size_t view = next_view();
        BackwardResult br;
        try {
            br = backward(ds_.cameras[view], scene_, ds_.images[view], cfg_.weights, cfg_.render, int(view));
        } catch (const NonFiniteLoss &e) {
            throw TrainError("iteration " + std::to_string(iter_ + 1) + ": " + e.what());
        }
        if (!br.grads.all_finite())
            throw TrainError("iteration " + std::to_string(iter_ + 1) + ": non-finite gradient on view " +
                             std::to_string(view));
        ++iter_;
        window_.l1 += br.loss.l1;
        window_.ssim += br.loss.ssim;
        window_.loss += br.loss.total;
        ++window_count_;
        adam_step(br.grads);

        if (iter_ == cfg_.texture_start_iter && !textures_on_)
            init_textures();
        if (textures_on_ && iter_ % cfg_.realloc_every == 0)
            reallocate_all();
        // Nothing would be left to refine a mutation made on the last step.
        if (cfg_.adapt && iter_ % cfg_.adapt_every == 0 && iter_ <= cfg_.adapt_until && iter_ < cfg_.iters)
            adapt();
        if (iter_ % cfg_.log_every == 0 || iter_ == cfg_.iters) {
            metrics_.push_back(current_metrics());
            if (on_metrics)
                on_metrics(metrics_.back());
        }
    }

    void run(const Callback &on_metrics = {}) {
        while (!done())
            step(on_metrics);
    }

    Metrics current_metrics() {
        Metrics m;
        m.iter = iter_;
        if (window_count_ > 0) {
            m.l1 = window_.l1 / window_count_;
            m.ssim = window_.ssim / window_count_;
            m.loss = window_.loss / window_count_;
        }
        window_ = {};
        window_count_ = 0;
        if (!ds_.test.empty())
            m.psnr_test = mean_psnr(ds_, ds_.test, scene_, cfg_.render);
        const auto pc = parameter_count(scene_);
        m.n_prims = pc.n_prims;
        m.n_texels = pc.n_texels;
        m.n_params = pc.n_params;
        m.mean_t2p = mean_t2p_exponent(scene_);
        return m;
    }

    /// Texel size from the closest training camera, exponent so the smallest
    /// ±3σ axis spans about init_smallest_axis_texels, zero texels.
    void init_textures() {
        std::vector<TextureGrid> grids;
        for (auto &p : scene_.prims) {
            const Real k_min = min_texel_size(p, train_cams_);
            p.t2p_exponent = initial_exponent(p, k_min, cfg_.init_smallest_axis_texels,
                                              cfg_.adaptation.t2p_floor_exponent);
            const Real k = to_storage(texel_size(p, k_min));
            const auto res = required_resolution(p.scales, k);
            grids.emplace_back(res[0], res[1], k);
        }
        scene_.textures = TexturePool::from_grids(grids);
        textures_on_ = true;
        reset_texel_moments();
    }

  private:
    struct PrimMoments {
        std::array<Real, kPrimSlots> m{}, v{};
    };
    struct Window {
        Real l1 = 0, ssim = 0, loss = 0;
    };

    std::size_t next_view() {
        if (cursor_ >= order_.size()) {
            order_ = ds_.train;
            for (std::size_t i = order_.size(); i > 1; --i)
                std::swap(order_[i - 1], order_[std::size_t(rng_() % i)]);
            cursor_ = 0;
        }
        return order_[cursor_++];
    }

    void reset_moments() {
        prim_m_.assign(scene_.size(), PrimMoments{});
        reset_texel_moments();
    }
    void reset_texel_moments() {
        tex_m_.assign(scene_.textures.data().size(), 0.0);
        tex_v_.assign(scene_.textures.data().size(), 0.0);
    }

    void adam_step(const GradientSet &g) {
        ++adam_t_;
        const Real b1 = 0.9, b2 = 0.999, eps = 1e-15;
        const Real c1 = 1 - std::pow(b1, Real(adam_t_)), c2 = 1 - std::pow(b2, Real(adam_t_));
        auto update = [&](Real &m, Real &v, Real grad, Real lr) {
            m = b1 * m + (1 - b1) * grad;
            v = b2 * v + (1 - b2) * grad * grad;
            return lr * (m / c1) / (std::sqrt(v / c2) + eps);
        };
        const Real progress = cfg_.iters > 0 ? std::min<Real>(1, Real(iter_) / cfg_.iters) : 1;
        const Real lr_center =
            cfg_.lr.center * extent_ * std::exp(std::log(cfg_.lr.center_final_factor) * progress);
        for (std::size_t i = 0; i < scene_.size(); ++i) {
            Primitive &p = scene_.prims[i];
            const PrimitiveGrad &d = g.prims[i];
            auto &mo = prim_m_[i];
            std::size_t s = 0;
            for (int k = 0; k < 3; ++k, ++s)
                p.center[k] = to_storage(p.center[k] - update(mo.m[s], mo.v[s], d.center[k], lr_center));
            for (int k = 0; k < 2; ++k, ++s) {
                const Real sigma = p.scales[k];
                const Real step = update(mo.m[s], mo.v[s], d.scales[k] * sigma, cfg_.lr.scale);
                p.scales[k] = to_storage(sigma * std::exp(-step));
            }
            for (int k = 0; k < 4; ++k, ++s)
                p.rotation[std::size_t(k)] -= update(mo.m[s], mo.v[s], d.rotation[std::size_t(k)], cfg_.lr.rotation);
            p.rotation = normalized(p.rotation);
            for (Real &q : p.rotation)
                q = to_storage(q);
            p.opacity_logit = to_storage(p.opacity_logit - update(mo.m[s], mo.v[s], d.opacity_logit, cfg_.lr.opacity));
            ++s;
            for (std::size_t k = 0; k < std::size_t(kShParams); ++k, ++s) {
                const Real lr = k % kShCoeffs == 0 ? cfg_.lr.sh : cfg_.lr.sh * cfg_.lr.sh_rest_factor;
                p.sh[k] = to_storage(p.sh[k] - update(mo.m[s], mo.v[s], d.sh[k], lr));
            }
        }
        auto tex = scene_.textures.data();
        for (std::size_t k = 0; k < tex.size(); ++k)
            tex[k] = to_storage(tex[k] - update(tex_m_[k], tex_v_[k], g.texels[k], cfg_.lr.texel));
    }

    /// Grids of a flat moment buffer laid out like the scene's pool.
    std::vector<TextureGrid> moment_grids(const std::vector<Real> &flat) const {
        std::vector<TextureGrid> out(scene_.size());
        for (std::size_t i = 0; i < scene_.size(); ++i) {
            const auto &e = scene_.textures.entry(i);
            out[i].layout = e.layout;
            out[i].texels.assign(flat.begin() + std::ptrdiff_t(e.first),
                                 flat.begin() + std::ptrdiff_t(e.first + e.layout.texel_count() * 3));
        }
        return out;
    }
    static std::vector<Real> flatten(const std::vector<TextureGrid> &grids) {
        std::vector<Real> out;
        for (const auto &g : grids)
            out.insert(out.end(), g.texels.begin(), g.texels.end());
        return out;
    }

    /// Crops or pads every grid to ±3σ coverage; moments follow the texels.
    void reallocate_all() {
        auto grids = scene_.textures.grids();
        auto gm = moment_grids(tex_m_), gv = moment_grids(tex_v_);
        bool changed = false;
        for (std::size_t i = 0; i < grids.size(); ++i) {
            if (grids[i].empty())
                continue;
            const auto res = required_resolution(scene_.prims[i].scales, grids[i].layout.texel_size);
            if (res[0] == grids[i].layout.res_u && res[1] == grids[i].layout.res_v)
                continue;
            grids[i] = reallocate(grids[i], res[0], res[1]);
            gm[i] = reallocate(gm[i], res[0], res[1]);
            gv[i] = reallocate(gv[i], res[0], res[1]);
            changed = true;
        }
        if (!changed)
            return;
        scene_.textures = TexturePool::from_grids(grids);
        tex_m_ = flatten(gm);
        tex_v_ = flatten(gv);
    }

    void adapt() {
        const auto errors = primitive_errors(train_cams_, train_imgs_, scene_, cfg_.render);
        std::size_t room = std::numeric_limits<std::size_t>::max();
        if (cfg_.point_budget)
            room = scene_.size() >= std::size_t(*cfg_.point_budget) ? 0 : std::size_t(*cfg_.point_budget) - scene_.size();
        // Freshly created textures have nothing to judge yet.
        const bool rescale = textures_on_ && iter_ > cfg_.texture_start_iter;
        AdaptResult res;
        if (rescale) {
            const auto gm = moment_grids(tex_m_), gv = moment_grids(tex_v_);
            res = adapt_step(scene_, errors, cfg_.adaptation, iter_, room);
            std::vector<PrimMoments> pm;
            std::vector<TextureGrid> ngm, ngv;
            for (std::size_t j = 0; j < scene_.size(); ++j) {
                const std::size_t src = res.source[j];
                pm.push_back(res.created[j] ? PrimMoments{} : prim_m_[src]);
                if (res.texture_changed[j]) {
                    TextureGrid z = scene_.textures.grid(j);
                    std::fill(z.texels.begin(), z.texels.end(), 0.0);
                    ngm.push_back(z);
                    ngv.push_back(z);
                } else {
                    ngm.push_back(gm[src]);
                    ngv.push_back(gv[src]);
                }
            }
            prim_m_ = std::move(pm);
            tex_m_ = flatten(ngm);
            tex_v_ = flatten(ngv);
            quantize_to_storage(scene_);
            mutations_.insert(mutations_.end(), res.log.begin(), res.log.end());
        }
        prune();
    }

    void prune() {
        std::vector<bool> keep(scene_.size());
        std::size_t kept = 0;
        for (std::size_t i = 0; i < scene_.size(); ++i) {
            keep[i] = scene_.prims[i].opacity() >= cfg_.prune_opacity;
            kept += keep[i];
        }
        if (kept == scene_.size())
            return;
        if (kept == 0)
            throw TrainError("iteration " + std::to_string(iter_) + ": every primitive was pruned (empty scene)");
        const auto grids = scene_.textures.grids();
        const auto gm = moment_grids(tex_m_), gv = moment_grids(tex_v_);
        Scene s;
        std::vector<TextureGrid> ng, ngm, ngv;
        std::vector<PrimMoments> pm;
        for (std::size_t i = 0; i < scene_.size(); ++i) {
            if (!keep[i])
                continue;
            s.prims.push_back(scene_.prims[i]);
            ng.push_back(grids[i]);
            ngm.push_back(gm[i]);
            ngv.push_back(gv[i]);
            pm.push_back(prim_m_[i]);
        }
        pruned_ += scene_.size() - kept;
        s.textures = TexturePool::from_grids(ng);
        scene_ = std::move(s);
        prim_m_ = std::move(pm);
        tex_m_ = flatten(ngm);
        tex_v_ = flatten(ngv);
    }

    Dataset ds_;
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<Camera> train_cams_;
    std::vector<Image> train_imgs_;
    Real extent_ = 1;
    Scene scene_;
    bool textures_on_ = false;
    int iter_ = 0;
    long adam_t_ = 0;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::vector<PrimMoments> prim_m_;
    std::vector<Real> tex_m_, tex_v_;
    Window window_;
    int window_count_ = 0;
    std::vector<Metrics> metrics_;
    std::vector<Mutation> mutations_;
    std::size_t pruned_ = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<Metrics> metrics;
    std::vector<Mutation> mutations;
};

inline TrainResult train(const Dataset &ds, const TrainConfig &cfg, const Trainer::Callback &on_metrics = {}) {
    Trainer t(ds, cfg);
    t.run(on_metrics);
    return {t.checkpoint(), t.metrics(), t.mutations()};
}

} // namespace texsplat
