#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psplat/core.hpp"
#include "psplat/io.hpp"
#include "psplat/losses.hpp"
#include "psplat/raster.hpp"

// Training over a GaussianCloud: point-cloud initialization, the adaptive
// gradient-descent loop with pruning / opacity-reset / splitting toggles, a
// finite-difference gradient checker, and checkpoint serialization.
namespace psplat::optim {

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

// One posed training image with optional depth / normal supervision. Empty
// maps (zero width) switch the matching loss term off for this view.
struct TrainView {
    Camera cam;
    ImageBuffer image;
    DepthMap depth;            // estimated target depth (z along the optical axis)
    ConfidenceMap confidence;  // per-pixel weights for the depth term
    NormalMap normal_target;
    PixelMask normal_mask;
    std::string name;
};

// A warped pseudo-view: photometric supervision restricted to warped pixels.
struct PseudoView {
    Camera cam;
    ImageBuffer image;
    PixelMask mask;
    std::string name;
};

// ---------------------------------------------------------------------------
// Optimizer state
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

template <typename T>
void keep_rows(std::vector<T>& v, const std::vector<size_t>& keep) {
    std::vector<T> out;
    out.reserve(keep.size());
    for (size_t i : keep) out.push_back(v[i]);
    v = std::move(out);
}

inline void keep_sh_rows(std::vector<double>& sh, const std::vector<size_t>& keep, int stride) {
    std::vector<double> out;
    out.reserve(keep.size() * stride);
    for (size_t i : keep)
        out.insert(out.end(), sh.begin() + static_cast<long>(i) * stride,
                   sh.begin() + static_cast<long>(i + 1) * stride);
    sh = std::move(out);
}

}  // namespace detail

// First/second moment accumulators shaped like the parameter groups.
struct AdamMoments {
    std::vector<Vec3> m_position, v_position;
    std::vector<Vec4> m_rotation, v_rotation;
    std::vector<Vec3> m_scale, v_scale;
    std::vector<double> m_opacity, v_opacity;
    std::vector<double> m_sh, v_sh;

    void resize_like(const GaussianCloud& cloud) {
        m_position.assign(cloud.size(), Vec3::Zero());
        v_position.assign(cloud.size(), Vec3::Zero());
        m_rotation.assign(cloud.size(), Vec4::Zero());
        v_rotation.assign(cloud.size(), Vec4::Zero());
        m_scale.assign(cloud.size(), Vec3::Zero());
        v_scale.assign(cloud.size(), Vec3::Zero());
        m_opacity.assign(cloud.size(), 0.0);
        v_opacity.assign(cloud.size(), 0.0);
        m_sh.assign(cloud.sh.size(), 0.0);
        v_sh.assign(cloud.sh.size(), 0.0);
    }

    void keep(const std::vector<size_t>& idx, int sh_stride) {
        detail::keep_rows(m_position, idx);
        detail::keep_rows(v_position, idx);
        detail::keep_rows(m_rotation, idx);
        detail::keep_rows(v_rotation, idx);
        detail::keep_rows(m_scale, idx);
        detail::keep_rows(v_scale, idx);
        detail::keep_rows(m_opacity, idx);
        detail::keep_rows(v_opacity, idx);
        detail::keep_sh_rows(m_sh, idx, sh_stride);
        detail::keep_sh_rows(v_sh, idx, sh_stride);
    }
};

struct TrainState {
    GaussianCloud cloud;
    AdamMoments moments;
    long iteration = 0;
    uint64_t seed = 0;
    std::mt19937_64 rng{0};
    double extent = 1.0;  // scene extent captured at state creation
    std::vector<double> loss_history;
    // Mean positional-gradient-norm accumulators driving the split heuristic.
    std::vector<double> grad_accum;
    std::vector<long> grad_count;
};

inline TrainState make_state(GaussianCloud cloud, uint64_t seed) {
    TrainState state;
    state.extent = scene_extent(cloud.positions);
    state.cloud = std::move(cloud);
    state.moments.resize_like(state.cloud);
    state.seed = seed;
    state.rng.seed(seed);
    state.grad_accum.assign(state.cloud.size(), 0.0);
    state.grad_count.assign(state.cloud.size(), 0);
    return state;
}

// ---------------------------------------------------------------------------
// Initialization from a filtered point cloud
// ---------------------------------------------------------------------------

namespace detail {

// Mean distance to the 3 nearest neighbors, via a uniform grid so dense
// clouds stay near-linear. Points with fewer than 3 neighbors average what
// they have; an isolated point reports 0.
inline std::vector<double> mean_3nn_distance(const std::vector<Vec3>& pts) {
    const size_t n = pts.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;

    Vec3 lo = pts[0], hi = pts[0];
    for (const Vec3& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 span = (hi - lo).cwiseMax(1e-12);
    const int cells = std::clamp(static_cast<int>(std::cbrt(static_cast<double>(n))), 1, 64);
    const Vec3 cell = span / cells;
    const auto cell_of = [&](const Vec3& p) {
        Eigen::Vector3i c;
        for (int a = 0; a < 3; ++a)
            c[a] = std::clamp(static_cast<int>((p[a] - lo[a]) / cell[a]), 0, cells - 1);
        return c;
    };
    const auto flat = [&](const Eigen::Vector3i& c) {
        return (static_cast<size_t>(c[2]) * cells + c[1]) * cells + c[0];
    };
    std::vector<std::vector<uint32_t>> buckets(static_cast<size_t>(cells) * cells * cells);
    for (size_t i = 0; i < n; ++i) buckets[flat(cell_of(pts[i]))].push_back(static_cast<uint32_t>(i));

    const double min_edge = cell.minCoeff();
    std::vector<double> best;
    for (size_t i = 0; i < n; ++i) {
        best.clear();  // up to 3 smallest squared distances, sorted ascending
        const Eigen::Vector3i home = cell_of(pts[i]);
        for (int ring = 0; ring < cells; ++ring) {
            bool visited_any = false;
            for (int dz = -ring; dz <= ring; ++dz) {
                for (int dy = -ring; dy <= ring; ++dy) {
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                        const Eigen::Vector3i c = home + Eigen::Vector3i(dx, dy, dz);
                        if ((c.array() < 0).any() || (c.array() >= cells).any()) continue;
                        visited_any = true;
                        for (uint32_t j : buckets[flat(c)]) {
                            if (j == i) continue;
                            const double d2 = (pts[j] - pts[i]).squaredNorm();
                            if (best.size() < 3) {
                                best.push_back(d2);
                                std::sort(best.begin(), best.end());
                            } else if (d2 < best.back()) {
                                best.back() = d2;
                                std::sort(best.begin(), best.end());
                            }
                        }
                    }
                }
            }
            // Any point in a farther ring is at least (ring * min_edge) away
            // from the home cell, so the current top-3 can no longer improve.
            if (best.size() == 3 && min_edge > 0.0) {
                const double bound = ring * min_edge;
                if (bound * bound >= best.back()) break;
            }
            if (!visited_any && ring > 0) break;  // ring left the grid entirely
        }
        double sum = 0.0;
        for (double d2 : best) sum += std::sqrt(d2);
        out[i] = best.empty() ? 0.0 : sum / static_cast<double>(best.size());
    }
    return out;
}

}  // namespace detail

// One Gaussian per point: DC color from RGB, isotropic scale at the mean
// 3-nearest-neighbor distance clamped to [1e-4, scene extent], opacity 0.1
// pre-activation, identity rotation. The extent covers points and camera
// centers so the clamp survives degenerate point sets.
inline GaussianCloud init_from_points(const std::vector<Vec3>& points,
                                      const std::vector<Vec3>& colors,
                                      const std::vector<Camera>& cams, int sh_degree = 0) {
    if (points.empty()) throw EmptyPointCloud("init_from_points: no points after filtering");
    if (points.size() != colors.size())
        throw LengthMismatch("init_from_points: points and colors differ in length");
    std::vector<Vec3> extent_pts = points;
    for (const Camera& cam : cams) extent_pts.push_back(cam.center);
    const double extent = scene_extent(extent_pts);

    GaussianCloud cloud;
    cloud.sh_degree = sh_degree;
    cloud.resize(points.size());
    const std::vector<double> nn = detail::mean_3nn_distance(points);
    const double opacity_raw = logit(0.1);
    for (size_t i = 0; i < points.size(); ++i) {
        cloud.positions[i] = points[i];
        cloud.rotations[i] = Vec4(1, 0, 0, 0);
        const double s = std::clamp(nn[i], 1e-4, extent);
        cloud.log_scales[i] = Vec3::Constant(std::log(s));
        cloud.opacities[i] = opacity_raw;
        double* sh = cloud.sh_of(i);
        for (int ch = 0; ch < 3; ++ch) sh[ch] = (colors[i][ch] - 0.5) / sh::kC0;
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline void adam_update(double& param, double grad, double& m, double& v, double lr, long t) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(kAdamBeta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(kAdamBeta2, static_cast<double>(t)));
    param -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
}

inline void adam_step(TrainState& state, const ParamGrads& grads, const TrainConfig& cfg) {
    GaussianCloud& cloud = state.cloud;
    AdamMoments& mo = state.moments;
    const long t = state.iteration + 1;
    const double lr_pos = cfg.lr_position * state.extent;
    for (size_t i = 0; i < cloud.size(); ++i) {
        for (int c = 0; c < 3; ++c)
            adam_update(cloud.positions[i][c], grads.position[i][c], mo.m_position[i][c],
                        mo.v_position[i][c], lr_pos, t);
        for (int c = 0; c < 4; ++c)
            adam_update(cloud.rotations[i][c], grads.rotation[i][c], mo.m_rotation[i][c],
                        mo.v_rotation[i][c], cfg.lr_rotation, t);
        for (int c = 0; c < 3; ++c)
            adam_update(cloud.log_scales[i][c], grads.log_scale[i][c], mo.m_scale[i][c],
                        mo.v_scale[i][c], cfg.lr_scale, t);
        adam_update(cloud.opacities[i], grads.opacity[i], mo.m_opacity[i], mo.v_opacity[i],
                    cfg.lr_opacity, t);
    }
    for (size_t k = 0; k < cloud.sh.size(); ++k)
        adam_update(cloud.sh[k], grads.sh[k], mo.m_sh[k], mo.v_sh[k], cfg.lr_color, t);
}

// Two-child split of Gaussians whose mean positional gradient norm exceeds
// the threshold: children sample the parent's own distribution, scales
// shrink by 1.6.
inline void split_gaussians(TrainState& state, const TrainConfig& cfg) {
    GaussianCloud& cloud = state.cloud;
    const int stride = cloud.sh_stride();
    std::vector<uint8_t> split(cloud.size(), 0);
    bool any = false;
    for (size_t i = 0; i < cloud.size(); ++i) {
        if (state.grad_count[i] == 0) continue;
        if (state.grad_accum[i] / state.grad_count[i] > cfg.densify_grad_threshold) {
            split[i] = 1;
            any = true;
        }
    }
    if (!any) return;

    std::normal_distribution<double> gauss(0.0, 1.0);
    GaussianCloud next;
    next.sh_degree = cloud.sh_degree;
    AdamMoments next_mo;
    const auto push = [&](size_t src, const Vec3& pos, const Vec3& log_scale, bool fresh) {
        next.positions.push_back(pos);
        next.rotations.push_back(cloud.rotations[src]);
        next.log_scales.push_back(log_scale);
        next.opacities.push_back(cloud.opacities[src]);
        next.sh.insert(next.sh.end(), cloud.sh.begin() + static_cast<long>(src) * stride,
                       cloud.sh.begin() + static_cast<long>(src + 1) * stride);
        next_mo.m_position.push_back(fresh ? Vec3::Zero() : state.moments.m_position[src]);
        next_mo.v_position.push_back(fresh ? Vec3::Zero() : state.moments.v_position[src]);
        next_mo.m_rotation.push_back(fresh ? Vec4::Zero() : state.moments.m_rotation[src]);
        next_mo.v_rotation.push_back(fresh ? Vec4::Zero() : state.moments.v_rotation[src]);
        next_mo.m_scale.push_back(fresh ? Vec3::Zero() : state.moments.m_scale[src]);
        next_mo.v_scale.push_back(fresh ? Vec3::Zero() : state.moments.v_scale[src]);
        next_mo.m_opacity.push_back(fresh ? 0.0 : state.moments.m_opacity[src]);
        next_mo.v_opacity.push_back(fresh ? 0.0 : state.moments.v_opacity[src]);
        for (int m = 0; m < stride; ++m) {
            next_mo.m_sh.push_back(fresh ? 0.0 : state.moments.m_sh[src * stride + m]);
            next_mo.v_sh.push_back(fresh ? 0.0 : state.moments.v_sh[src * stride + m]);
        }
    };
    const double shrink = std::log(1.6);
    for (size_t i = 0; i < cloud.size(); ++i) {
        if (!split[i]) {
            push(i, cloud.positions[i], cloud.log_scales[i], false);
            continue;
        }
        const Mat3 rot = quat_to_rotation(cloud.rotations[i]);
        const Vec3 scale = cloud.log_scales[i].array().exp();
        for (int child = 0; child < 2; ++child) {
            const Vec3 z(gauss(state.rng), gauss(state.rng), gauss(state.rng));
            const Vec3 pos = cloud.positions[i] + rot * (scale.cwiseProduct(z));
            push(i, pos, cloud.log_scales[i] - Vec3::Constant(shrink), true);
        }
    }
    cloud = std::move(next);
    state.moments = std::move(next_mo);
    state.grad_accum.assign(cloud.size(), 0.0);
    state.grad_count.assign(cloud.size(), 0);
}

inline void prune_gaussians(TrainState& state, const TrainConfig& cfg) {
    GaussianCloud& cloud = state.cloud;
    std::vector<size_t> keep;
    for (size_t i = 0; i < cloud.size(); ++i)
        if (sigmoid(cloud.opacities[i]) >= cfg.prune_opacity) keep.push_back(i);
    if (keep.size() == cloud.size()) return;
    const int stride = cloud.sh_stride();
    keep_rows(cloud.positions, keep);
    keep_rows(cloud.rotations, keep);
    keep_rows(cloud.log_scales, keep);
    keep_rows(cloud.opacities, keep);
    keep_sh_rows(cloud.sh, keep, stride);
    state.moments.keep(keep, stride);
    keep_rows(state.grad_accum, keep);
    keep_rows(state.grad_count, keep);
}

}  // namespace detail

// Runs until state.iteration reaches cfg.iterations. Each iteration takes one
// view — the real views round-robin, with one pseudo-view interleaved after
// every full real-view cycle — renders it, accumulates the weighted loss
// gradients, and applies one adaptive gradient-descent step per parameter
// group. Pruning runs every cfg.prune_interval iterations; opacity reset and
// splitting only when their toggles are set. Deterministic for fixed
// (inputs, config, seed, threads).
inline TrainState& train(TrainState& state, const std::vector<TrainView>& views,
                         const std::vector<PseudoView>& pseudo_views, const TrainConfig& cfg,
                         int threads = 1) {
    cfg.validate();
    if (cfg.multiview_trim_enabled)
        throw NotImplemented("train: multi-view trimming is permanently disabled");
    if (views.empty()) throw NoViews("train: need at least one real view");
    for (const TrainView& v : views) {
        if (v.image.width != v.cam.width || v.image.height != v.cam.height)
            throw DimensionMismatch("train: view image does not match its camera");
        if (v.depth.width > 0 && !v.depth.same_size(v.image))
            throw DimensionMismatch("train: view depth does not match its image");
        if (v.depth.width > 0 &&
            (v.confidence.width != v.depth.width || v.confidence.height != v.depth.height))
            throw DimensionMismatch("train: view confidence does not match its depth");
        if (v.normal_target.width > 0 &&
            (!v.normal_target.same_size(v.image) || v.normal_mask.width != v.image.width ||
             v.normal_mask.height != v.image.height))
            throw DimensionMismatch("train: view normal buffers do not match its image");
    }
    for (const PseudoView& p : pseudo_views) {
        if (p.image.width != p.cam.width || p.image.height != p.cam.height ||
            p.mask.width != p.cam.width || p.mask.height != p.cam.height)
            throw DimensionMismatch("train: pseudo-view buffers do not match its camera");
    }

    RenderOptions ropts;
    ropts.threads = threads;
    ropts.record_contributors = true;

    const long cycle = static_cast<long>(views.size()) + (pseudo_views.empty() ? 0 : 1);
    while (state.iteration < cfg.iterations) {
        const long pos = state.iteration % cycle;
        const bool is_pseudo = pos >= static_cast<long>(views.size());
        const Camera& cam =
            is_pseudo
                ? pseudo_views[(state.iteration / cycle) % pseudo_views.size()].cam
                : views[pos].cam;

        const RenderOutput out = render(state.cloud, cam, ropts);

        losses::LossBundle bundle;
        bundle.cloud = &state.cloud;
        RenderGrads rg = RenderGrads::zeros(cam.width, cam.height);
        ImageBuffer photo_grad(cam.width, cam.height);
        DepthMap depth_grad(cam.width, cam.height, DepthSemantics::kPlaneDistance, 0.0);
        NormalMap normal_grad(cam.width, cam.height);

        if (is_pseudo) {
            const PseudoView& pv = pseudo_views[(state.iteration / cycle) % pseudo_views.size()];
            bundle.pseudo_render = &out.color;
            bundle.pseudo_gt = &pv.image;
            bundle.pseudo_mask = &pv.mask;
            losses::photometric_backward(out.color, pv.image, cfg.lambda_dssim, &pv.mask,
                                         cfg.w_pseudo, photo_grad);
            rg.color = photo_grad.values;
        } else {
            const TrainView& tv = views[pos];
            bundle.render = &out.color;
            bundle.gt = &tv.image;
            losses::photometric_backward(out.color, tv.image, cfg.lambda_dssim, nullptr, 1.0,
                                         photo_grad);
            rg.color = photo_grad.values;
            if (tv.depth.width > 0 && cfg.w_depth > 0) {
                bundle.depth_pred = &out.depth_plane;
                bundle.depth_target = &tv.depth;
                bundle.depth_confidence = &tv.confidence;
                losses::pearson_depth_backward(out.depth_plane, tv.depth, tv.confidence,
                                               cfg.w_depth, depth_grad);
                rg.depth_plane = depth_grad.values;
            }
            if (tv.normal_target.width > 0 && cfg.w_normal > 0) {
                bundle.normal_pred = &out.normals;
                bundle.normal_target = &tv.normal_target;
                bundle.normal_mask = &tv.normal_mask;
                losses::normal_loss_backward(out.normals, tv.normal_target, tv.normal_mask,
                                             cfg.w_normal, normal_grad);
                rg.normal = normal_grad.values;
            }
        }
        const losses::LossBreakdown breakdown = losses::total_loss(bundle, cfg);
        state.loss_history.push_back(breakdown.total);

        ParamGrads grads = render_backward(state.cloud, cam, out, rg, ropts);
        if (cfg.w_scale > 0 && state.cloud.size() > 0)
            losses::scale_loss_backward(state.cloud, cfg.w_scale, grads);

        if (cfg.splitting_enabled) {
            for (size_t i = 0; i < state.cloud.size(); ++i) {
                state.grad_accum[i] += grads.position[i].norm();
                ++state.grad_count[i];
            }
        }

        detail::adam_step(state, grads, cfg);
        state.cloud.normalize_rotations();
        ++state.iteration;

        if (cfg.prune_interval > 0 && state.iteration % cfg.prune_interval == 0) {
            if (cfg.splitting_enabled) detail::split_gaussians(state, cfg);
            detail::prune_gaussians(state, cfg);
        }
        if (cfg.opacity_reset_enabled && cfg.opacity_reset_interval > 0 &&
            state.iteration % cfg.opacity_reset_interval == 0) {
            const double cap = logit(0.01);
            for (double& o : state.cloud.opacities) o = std::min(o, cap);
        }
    }
    return state;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

// Scalar objective driving the check: any combination of the render-based
// losses plus the scale regularizer.
struct GradCheckLoss {
    const ImageBuffer* gt = nullptr;
    double w_photo = 1.0;
    double lambda = 0.2;
    const DepthMap* depth_target = nullptr;
    const ConfidenceMap* confidence = nullptr;
    double w_depth = 0.0;
    const NormalMap* normal_target = nullptr;
    const PixelMask* normal_mask = nullptr;
    double w_normal = 0.0;
    double w_scale = 0.0;
};

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    int threads = 1;
    // Test hook: mutates the analytic gradients before comparison so the
    // detector itself can be validated.
    std::function<void(ParamGrads&)> corrupt;
};

struct GradCheckGroup {
    std::string group;
    double max_rel_err = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    bool pass = true;

    const GradCheckGroup& group(const std::string& name) const {
        for (const GradCheckGroup& g : groups)
            if (g.group == name) return g;
        throw Error("gradcheck: unknown group " + name);
    }
};

// Central finite differences over every parameter of every group, compared
// against the composed analytic backward. Relative error uses
// max(|analytic|, |fd|, 1e-8) as denominator.
inline GradCheckReport gradcheck(GaussianCloud cloud, const Camera& cam,
                                 const GradCheckLoss& loss, const GradCheckOptions& opts = {}) {
    RenderOptions ropts;
    ropts.threads = opts.threads;
    ropts.early_termination = false;  // keeps the objective smooth under probes
    ropts.record_contributors = true;

    const auto forward = [&](const GaussianCloud& c) -> double {
        double total = 0.0;
        if ((loss.gt && loss.w_photo != 0) || (loss.depth_target && loss.w_depth != 0) ||
            (loss.normal_target && loss.w_normal != 0)) {
            const RenderOutput out = render(c, cam, ropts);
            if (loss.gt && loss.w_photo != 0)
                total += loss.w_photo * losses::photometric_loss(out.color, *loss.gt, loss.lambda).loss;
            if (loss.depth_target && loss.w_depth != 0)
                total += loss.w_depth *
                         losses::pearson_depth_loss(out.depth_plane, *loss.depth_target,
                                                    *loss.confidence)
                             .loss;
            if (loss.normal_target && loss.w_normal != 0)
                total += loss.w_normal *
                         losses::normal_loss(out.normals, *loss.normal_target, *loss.normal_mask)
                             .loss;
        }
        if (loss.w_scale != 0) total += loss.w_scale * losses::scale_loss(c);
        return total;
    };

    // Analytic gradient via the composed adjoints.
    const RenderOutput out = render(cloud, cam, ropts);
    RenderGrads rg = RenderGrads::zeros(cam.width, cam.height);
    if (loss.gt && loss.w_photo != 0) {
        ImageBuffer g(cam.width, cam.height);
        losses::photometric_backward(out.color, *loss.gt, loss.lambda, nullptr, loss.w_photo, g);
        rg.color = g.values;
    }
    if (loss.depth_target && loss.w_depth != 0) {
        DepthMap g(cam.width, cam.height, DepthSemantics::kPlaneDistance, 0.0);
        losses::pearson_depth_backward(out.depth_plane, *loss.depth_target, *loss.confidence,
                                       loss.w_depth, g);
        rg.depth_plane = g.values;
    }
    if (loss.normal_target && loss.w_normal != 0) {
        NormalMap g(cam.width, cam.height);
        losses::normal_loss_backward(out.normals, *loss.normal_target, *loss.normal_mask,
                                     loss.w_normal, g);
        rg.normal = g.values;
    }
    ParamGrads analytic = render_backward(cloud, cam, out, rg, ropts);
    if (loss.w_scale != 0 && cloud.size() > 0)
        losses::scale_loss_backward(cloud, loss.w_scale, analytic);
    if (opts.corrupt) opts.corrupt(analytic);

    GradCheckReport report;
    const auto check_group = [&](const std::string& name, auto&& for_each_param) {
        GradCheckGroup group;
        group.group = name;
        for_each_param([&](double* param, double analytic_value) {
            const double saved = *param;
            *param = saved + opts.h;
            const double up = forward(cloud);
            *param = saved - opts.h;
            const double dn = forward(cloud);
            *param = saved;
            const double fd = (up - dn) / (2.0 * opts.h);
            const double rel = std::abs(analytic_value - fd) /
                               std::max({std::abs(analytic_value), std::abs(fd), 1e-8});
            group.max_rel_err = std::max(group.max_rel_err, rel);
        });
        group.pass = group.max_rel_err <= opts.tolerance;
        report.groups.push_back(group);
        report.pass = report.pass && group.pass;
    };

    check_group("position", [&](auto&& probe) {
        for (size_t i = 0; i < cloud.size(); ++i)
            for (int c = 0; c < 3; ++c) probe(&cloud.positions[i][c], analytic.position[i][c]);
    });
    check_group("rotation", [&](auto&& probe) {
        for (size_t i = 0; i < cloud.size(); ++i)
            for (int c = 0; c < 4; ++c) probe(&cloud.rotations[i][c], analytic.rotation[i][c]);
    });
    check_group("log_scale", [&](auto&& probe) {
        for (size_t i = 0; i < cloud.size(); ++i)
            for (int c = 0; c < 3; ++c) probe(&cloud.log_scales[i][c], analytic.log_scale[i][c]);
    });
    check_group("opacity", [&](auto&& probe) {
        for (size_t i = 0; i < cloud.size(); ++i) probe(&cloud.opacities[i], analytic.opacity[i]);
    });
    check_group("sh", [&](auto&& probe) {
        for (size_t k = 0; k < cloud.sh.size(); ++k) probe(&cloud.sh[k], analytic.sh[k]);
    });
    return report;
}

// ---------------------------------------------------------------------------
// Config and checkpoint serialization
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{{"lambda_dssim", cfg.lambda_dssim},
                          {"w_depth", cfg.w_depth},
                          {"w_normal", cfg.w_normal},
                          {"w_scale", cfg.w_scale},
                          {"w_pseudo", cfg.w_pseudo},
                          {"conf_threshold", cfg.conf_threshold},
                          {"opacity_reset_enabled", cfg.opacity_reset_enabled},
                          {"opacity_reset_interval", cfg.opacity_reset_interval},
                          {"splitting_enabled", cfg.splitting_enabled},
                          {"multiview_trim_enabled", cfg.multiview_trim_enabled},
                          {"iterations", cfg.iterations},
                          {"sh_degree", cfg.sh_degree},
                          {"lr_position", cfg.lr_position},
                          {"lr_rotation", cfg.lr_rotation},
                          {"lr_scale", cfg.lr_scale},
                          {"lr_opacity", cfg.lr_opacity},
                          {"lr_color", cfg.lr_color},
                          {"prune_interval", cfg.prune_interval},
                          {"prune_opacity", cfg.prune_opacity},
                          {"densify_grad_threshold", cfg.densify_grad_threshold},
                          {"patch_size", cfg.patch_size}};
}

// Accepts any subset of the known keys (missing keys keep their defaults);
// unknown keys and wrong types are schema errors.
inline TrainConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("config: expected a JSON object");
    TrainConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "lambda_dssim") cfg.lambda_dssim = value.get<double>();
            else if (key == "w_depth") cfg.w_depth = value.get<double>();
            else if (key == "w_normal") cfg.w_normal = value.get<double>();
            else if (key == "w_scale") cfg.w_scale = value.get<double>();
            else if (key == "w_pseudo") cfg.w_pseudo = value.get<double>();
            else if (key == "conf_threshold") cfg.conf_threshold = value.get<double>();
            else if (key == "opacity_reset_enabled") cfg.opacity_reset_enabled = value.get<bool>();
            else if (key == "opacity_reset_interval") cfg.opacity_reset_interval = value.get<int>();
            else if (key == "splitting_enabled") cfg.splitting_enabled = value.get<bool>();
            else if (key == "multiview_trim_enabled") cfg.multiview_trim_enabled = value.get<bool>();
            else if (key == "iterations") cfg.iterations = value.get<int>();
            else if (key == "sh_degree") cfg.sh_degree = value.get<int>();
            else if (key == "lr_position") cfg.lr_position = value.get<double>();
            else if (key == "lr_rotation") cfg.lr_rotation = value.get<double>();
            else if (key == "lr_scale") cfg.lr_scale = value.get<double>();
            else if (key == "lr_opacity") cfg.lr_opacity = value.get<double>();
            else if (key == "lr_color") cfg.lr_color = value.get<double>();
            else if (key == "prune_interval") cfg.prune_interval = value.get<int>();
            else if (key == "prune_opacity") cfg.prune_opacity = value.get<double>();
            else if (key == "densify_grad_threshold") cfg.densify_grad_threshold = value.get<double>();
            else if (key == "patch_size") cfg.patch_size = value.get<int>();
            else throw SchemaError("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline std::string checkpoint_sidecar_path(const std::string& ply_path) {
    return std::filesystem::path(ply_path).replace_extension(".json").string();
}

// Checkpoint = the cloud as a binary PLY plus a sidecar JSON holding the
// config, iteration counter, and seed.
inline void save_checkpoint(const std::string& ply_path, const TrainState& state,
                            const TrainConfig& cfg) {
    io::save_gaussian_ply(ply_path, state.cloud);
    nlohmann::json j;
    j["config"] = config_to_json(cfg);
    j["iteration"] = state.iteration;
    j["seed"] = state.seed;
    io::save_json(checkpoint_sidecar_path(ply_path), j);
}

// Restores the cloud; when the sidecar exists it also restores iteration,
// seed, and (optionally) the config. Optimizer moments restart at zero.
inline TrainState load_checkpoint(const std::string& ply_path, TrainConfig* cfg_out = nullptr) {
    GaussianCloud cloud = io::load_gaussian_ply(ply_path);
    uint64_t seed = 0;
    long iteration = 0;
    const std::string sidecar = checkpoint_sidecar_path(ply_path);
    if (std::filesystem::exists(sidecar)) {
        const nlohmann::json j = io::load_json(sidecar);
        try {
            if (j.contains("iteration")) iteration = j.at("iteration").get<long>();
            if (j.contains("seed")) seed = j.at("seed").get<uint64_t>();
            if (cfg_out && j.contains("config")) *cfg_out = config_from_json(j.at("config"));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("checkpoint: ") + e.what());
        }
    }
    TrainState state = make_state(std::move(cloud), seed);
    state.iteration = iteration;
    return state;
}

}  // namespace psplat::optim
