#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "psplat/core.hpp"
#include "psplat/raster.hpp"

// Training losses: photometric (L1 + D-SSIM), scale flattening, confidence-
// aware Pearson depth correlation, masked normal L1, and their weighted total.
// All losses are pure functions; the *_backward variants accumulate analytic
// gradients with respect to the differentiable argument.
namespace psplat::losses {

namespace detail {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
// Stabilizers (K1·L)^2 and (K2·L)^2 with K1=0.01, K2=0.03 on unit-range data.
inline constexpr double kSsimC1 = 1e-4;
inline constexpr double kSsimC2 = 9e-4;

// Normalized 11x11 Gaussian window, row-major.
inline const std::array<double, kSsimWindow * kSsimWindow>& ssim_kernel() {
    static const auto kernel = [] {
        std::array<double, kSsimWindow> line{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double x = i - (kSsimWindow - 1) / 2.0;
            line[i] = std::exp(-0.5 * x * x / (kSsimSigma * kSsimSigma));
            sum += line[i];
        }
        for (double& v : line) v /= sum;
        std::array<double, kSsimWindow * kSsimWindow> grid{};
        for (int i = 0; i < kSsimWindow; ++i)
            for (int j = 0; j < kSsimWindow; ++j) grid[i * kSsimWindow + j] = line[i] * line[j];
        return grid;
    }();
    return kernel;
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Weighted first/second moments of one 11x11 window pair.
struct WindowStats {
    double mu_x = 0, mu_y = 0;   // weighted means
    double ex2 = 0, ey2 = 0;     // weighted raw second moments
    double exy = 0;              // weighted raw cross moment
};

template <typename AtX, typename AtY>
WindowStats window_stats(int r0, int c0, AtX&& at_x, AtY&& at_y) {
    const auto& w = ssim_kernel();
    WindowStats s;
    for (int i = 0; i < kSsimWindow; ++i) {
        for (int j = 0; j < kSsimWindow; ++j) {
            const double wij = w[i * kSsimWindow + j];
            const double x = at_x(r0 + i, c0 + j);
            const double y = at_y(r0 + i, c0 + j);
            s.mu_x += wij * x;
            s.mu_y += wij * y;
            s.ex2 += wij * x * x;
            s.ey2 += wij * y * y;
            s.exy += wij * x * y;
        }
    }
    return s;
}

// SSIM of one window from its moments, plus partials with respect to the
// x-side statistics (mean, raw second moment, raw cross moment).
struct WindowSsim {
    double value = 0;
    double d_mu_x = 0, d_ex2 = 0, d_exy = 0;
};

inline WindowSsim window_ssim(const WindowStats& s) {
    const double var_x = s.ex2 - s.mu_x * s.mu_x;
    const double var_y = s.ey2 - s.mu_y * s.mu_y;
    const double cov = s.exy - s.mu_x * s.mu_y;
    const double a1 = 2.0 * s.mu_x * s.mu_y + kSsimC1;
    const double a2 = 2.0 * cov + kSsimC2;
    const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + kSsimC1;
    const double b2 = var_x + var_y + kSsimC2;
    WindowSsim out;
    out.value = (a1 * a2) / (b1 * b2);
    // d a1/d mu_x = 2 mu_y; d a2/d mu_x = -2 mu_y; d b1/d mu_x = 2 mu_x;
    // d b2/d mu_x = -2 mu_x; a2 depends on exy, b2 on ex2.
    out.d_mu_x = (2.0 * s.mu_y * a2 - 2.0 * s.mu_y * a1) / (b1 * b2) -
                 out.value * (2.0 * s.mu_x / b1 - 2.0 * s.mu_x / b2);
    out.d_ex2 = -out.value / b2;
    out.d_exy = 2.0 * a1 / (b1 * b2);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

struct SsimResult {
    double value = 0;       // mean SSIM over included windows and channels
    long window_count = 0;  // included (window, channel) pairs
};

// Mean SSIM over all fully-interior 11x11 windows, averaged across channels.
// `center_mask`, when given, keeps only windows whose center pixel is true.
// Images smaller than the window (or an all-false mask) yield window_count 0
// and value 1 (no evidence of dissimilarity).
inline SsimResult ssim(const ImageBuffer& a, const ImageBuffer& b,
                       const PixelMask* center_mask = nullptr) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("ssim: image sizes differ");
    if (center_mask && (center_mask->width != a.width || center_mask->height != a.height))
        throw DimensionMismatch("ssim: mask size differs from images");
    constexpr int w = detail::kSsimWindow;
    constexpr int half = w / 2;
    SsimResult res;
    double sum = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        const auto at_a = [&](int r, int c) { return a.at(r, c)[ch]; };
        const auto at_b = [&](int r, int c) { return b.at(r, c)[ch]; };
        for (int r0 = 0; r0 + w <= a.height; ++r0) {
            for (int c0 = 0; c0 + w <= a.width; ++c0) {
                if (center_mask && !center_mask->at(r0 + half, c0 + half)) continue;
                sum += detail::window_ssim(detail::window_stats(r0, c0, at_a, at_b)).value;
                ++res.window_count;
            }
        }
    }
    res.value = res.window_count > 0 ? sum / res.window_count : 1.0;
    return res;
}

// Adds upstream * d(mean SSIM)/d(a) into grad_a. Must be called with the same
// arguments as the matching ssim() forward.
inline void ssim_backward(const ImageBuffer& a, const ImageBuffer& b, const PixelMask* center_mask,
                          double upstream, ImageBuffer& grad_a) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("ssim_backward: image sizes differ");
    if (grad_a.width != a.width || grad_a.height != a.height)
        throw DimensionMismatch("ssim_backward: gradient buffer size differs");
    constexpr int w = detail::kSsimWindow;
    constexpr int half = w / 2;
    const SsimResult fwd = ssim(a, b, center_mask);
    if (fwd.window_count == 0) return;
    const double scale = upstream / fwd.window_count;
    const auto& kernel = detail::ssim_kernel();
    for (int ch = 0; ch < 3; ++ch) {
        const auto at_a = [&](int r, int c) { return a.at(r, c)[ch]; };
        const auto at_b = [&](int r, int c) { return b.at(r, c)[ch]; };
        for (int r0 = 0; r0 + w <= a.height; ++r0) {
            for (int c0 = 0; c0 + w <= a.width; ++c0) {
                if (center_mask && !center_mask->at(r0 + half, c0 + half)) continue;
                const detail::WindowSsim ws =
                    detail::window_ssim(detail::window_stats(r0, c0, at_a, at_b));
                for (int i = 0; i < w; ++i) {
                    for (int j = 0; j < w; ++j) {
                        const double wij = kernel[i * w + j];
                        const double x = at_a(r0 + i, c0 + j);
                        const double y = at_b(r0 + i, c0 + j);
                        grad_a.at(r0 + i, c0 + j)[ch] +=
                            scale * wij * (ws.d_mu_x + 2.0 * x * ws.d_ex2 + y * ws.d_exy);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Photometric: (1 - lambda) * L1 + lambda * (1 - SSIM) / 2
// ---------------------------------------------------------------------------

struct PhotometricResult {
    double loss = 0;
    double l1 = 0;            // mean absolute error over included pixels
    double ssim = 0;          // mean SSIM over included windows
    long pixel_count = 0;     // pixels in the L1 term (before the x3 channels)
    long window_count = 0;    // (window, channel) pairs in the SSIM term
    bool empty = false;       // mask excluded every pixel
};

// `mask`, when given, restricts the L1 term to mask-true pixels and the SSIM
// term to windows centered on mask-true pixels (the pseudo-view case, where
// only warped-to pixels carry signal).
inline PhotometricResult photometric_loss(const ImageBuffer& render, const ImageBuffer& gt,
                                          double lambda, const PixelMask* mask = nullptr) {
    if (render.width != gt.width || render.height != gt.height)
        throw DimensionMismatch("photometric_loss: image sizes differ");
    if (mask && (mask->width != render.width || mask->height != render.height))
        throw DimensionMismatch("photometric_loss: mask size differs from images");
    PhotometricResult res;
    double abs_sum = 0.0;
    for (int r = 0; r < render.height; ++r) {
        for (int c = 0; c < render.width; ++c) {
            if (mask && !mask->at(r, c)) continue;
            ++res.pixel_count;
            const Vec3 diff = render.at(r, c) - gt.at(r, c);
            abs_sum += diff.cwiseAbs().sum();
        }
    }
    if (res.pixel_count == 0) {
        res.empty = true;
        res.ssim = 1.0;
        return res;
    }
    res.l1 = abs_sum / (3.0 * res.pixel_count);
    const SsimResult s = ssim(render, gt, mask);
    res.ssim = s.value;
    res.window_count = s.window_count;
    res.loss = (1.0 - lambda) * res.l1 + lambda * 0.5 * (1.0 - res.ssim);
    return res;
}

// Adds upstream * d(loss)/d(render) into grad_render.
inline void photometric_backward(const ImageBuffer& render, const ImageBuffer& gt, double lambda,
                                 const PixelMask* mask, double upstream, ImageBuffer& grad_render) {
    if (render.width != gt.width || render.height != gt.height)
        throw DimensionMismatch("photometric_backward: image sizes differ");
    if (grad_render.width != render.width || grad_render.height != render.height)
        throw DimensionMismatch("photometric_backward: gradient buffer size differs");
    long pixel_count = 0;
    for (int r = 0; r < render.height; ++r)
        for (int c = 0; c < render.width; ++c)
            if (!mask || mask->at(r, c)) ++pixel_count;
    if (pixel_count == 0) return;
    const double l1_scale = upstream * (1.0 - lambda) / (3.0 * pixel_count);
    for (int r = 0; r < render.height; ++r) {
        for (int c = 0; c < render.width; ++c) {
            if (mask && !mask->at(r, c)) continue;
            const Vec3 diff = render.at(r, c) - gt.at(r, c);
            for (int ch = 0; ch < 3; ++ch)
                grad_render.at(r, c)[ch] += l1_scale * detail::sign_of(diff[ch]);
        }
    }
    // d loss/d ssim = -lambda/2.
    ssim_backward(render, gt, mask, -0.5 * lambda * upstream, grad_render);
}

// ---------------------------------------------------------------------------
// Scale flattening: mean over Gaussians of |min activated scale|
// ---------------------------------------------------------------------------

inline double scale_loss(const GaussianCloud& cloud) {
    if (cloud.size() == 0) throw EmptyCloud("scale_loss: empty cloud");
    double sum = 0.0;
    for (const Vec3& ls : cloud.log_scales)
        sum += std::abs(std::exp(ls.minCoeff()));
    return sum / static_cast<double>(cloud.size());
}

// Adds upstream * d(scale_loss)/d(log_scales) into grads. Ties on the minimum
// route the gradient to the first minimal axis.
inline void scale_loss_backward(const GaussianCloud& cloud, double upstream, ParamGrads& grads) {
    if (cloud.size() == 0) throw EmptyCloud("scale_loss_backward: empty cloud");
    if (grads.log_scale.size() != cloud.size())
        throw DimensionMismatch("scale_loss_backward: gradient buffer size differs");
    const double inv_n = 1.0 / static_cast<double>(cloud.size());
    for (size_t g = 0; g < cloud.size(); ++g) {
        int axis = 0;
        cloud.log_scales[g].minCoeff(&axis);
        grads.log_scale[g][axis] += upstream * inv_n * std::exp(cloud.log_scales[g][axis]);
    }
}

// ---------------------------------------------------------------------------
// Confidence-aware Pearson depth loss
// ---------------------------------------------------------------------------

struct PearsonResult {
    double loss = 0;         // 1 - correlation, clamped to [0, 2]; 0 when degenerate
    double correlation = 0;  // confidence-weighted Pearson correlation
    double weight_sum = 0;   // sum of effective confidences
    bool degenerate = false; // no weight, or a weighted variance below threshold
};

namespace detail {

// Shared statistics pass. Pixels whose effective weight is zero (confidence 0,
// or a NaN depth on either side) are skipped entirely so the result is exactly
// independent of their values.
struct PearsonStats {
    double weight_sum = 0;
    double mu_p = 0, mu_t = 0;
    double sxx = 0, syy = 0, sxy = 0;
    bool degenerate = true;
};

inline double effective_weight(double pred, double target, double conf) {
    if (std::isnan(pred) || std::isnan(target)) return 0.0;
    return conf;
}

inline PearsonStats pearson_stats(const DepthMap& pred, const DepthMap& target,
                                  const ConfidenceMap& conf) {
    if (!pred.same_size(target) || pred.width != conf.width || pred.height != conf.height)
        throw DimensionMismatch("pearson_depth_loss: map sizes differ");
    PearsonStats s;
    const size_t n = pred.values.size();
    double sp = 0.0, st = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double w = effective_weight(pred.values[i], target.values[i], conf.values[i]);
        if (w == 0.0) continue;
        s.weight_sum += w;
        sp += w * pred.values[i];
        st += w * target.values[i];
    }
    if (s.weight_sum < 1e-9) return s;
    s.mu_p = sp / s.weight_sum;
    s.mu_t = st / s.weight_sum;
    for (size_t i = 0; i < n; ++i) {
        const double w = effective_weight(pred.values[i], target.values[i], conf.values[i]);
        if (w == 0.0) continue;
        const double dp = pred.values[i] - s.mu_p;
        const double dt = target.values[i] - s.mu_t;
        s.sxx += w * dp * dp;
        s.syy += w * dt * dt;
        s.sxy += w * dp * dt;
    }
    // A constant signal on either side carries no correlation to optimize.
    if (s.sxx / s.weight_sum < 1e-12 || s.syy / s.weight_sum < 1e-12) return s;
    s.degenerate = false;
    return s;
}

}  // namespace detail

inline PearsonResult pearson_depth_loss(const DepthMap& pred, const DepthMap& target,
                                        const ConfidenceMap& conf) {
    const detail::PearsonStats s = detail::pearson_stats(pred, target, conf);
    PearsonResult res;
    res.weight_sum = s.weight_sum;
    if (s.degenerate) {
        res.degenerate = true;
        return res;
    }
    res.correlation = s.sxy / std::sqrt(s.sxx * s.syy);
    res.loss = std::clamp(1.0 - res.correlation, 0.0, 2.0);
    return res;
}

// Adds upstream * d(loss)/d(pred) into grad_pred (same shape as pred). Zero-
// weight pixels and degenerate inputs receive exactly zero gradient.
inline void pearson_depth_backward(const DepthMap& pred, const DepthMap& target,
                                   const ConfidenceMap& conf, double upstream,
                                   DepthMap& grad_pred) {
    if (!grad_pred.same_size(pred))
        throw DimensionMismatch("pearson_depth_backward: gradient buffer size differs");
    const detail::PearsonStats s = detail::pearson_stats(pred, target, conf);
    if (s.degenerate) return;
    const double denom = std::sqrt(s.sxx * s.syy);
    const double ratio = s.sxy / s.sxx;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const double w = detail::effective_weight(pred.values[i], target.values[i], conf.values[i]);
        if (w == 0.0) continue;
        const double dp = pred.values[i] - s.mu_p;
        const double dt = target.values[i] - s.mu_t;
        // d loss/d pred_i = -d corr/d pred_i.
        grad_pred.values[i] += -upstream * (w / denom) * (dt - ratio * dp);
    }
}

// ---------------------------------------------------------------------------
// Masked normal supervision: mean per-pixel L1 over mask-true pixels
// ---------------------------------------------------------------------------

struct NormalLossResult {
    double loss = 0;
    long pixel_count = 0;
    bool empty_mask = false;
};

inline NormalLossResult normal_loss(const NormalMap& pred, const NormalMap& target,
                                    const PixelMask& mask) {
    if (!pred.same_size(target) || pred.width != mask.width || pred.height != mask.height)
        throw DimensionMismatch("normal_loss: map sizes differ");
    NormalLossResult res;
    double sum = 0.0;
    for (int r = 0; r < pred.height; ++r) {
        for (int c = 0; c < pred.width; ++c) {
            if (!mask.at(r, c)) continue;
            ++res.pixel_count;
            sum += (target.at(r, c) - pred.at(r, c)).cwiseAbs().sum();
        }
    }
    if (res.pixel_count == 0) {
        res.empty_mask = true;
        return res;
    }
    res.loss = sum / static_cast<double>(res.pixel_count);
    return res;
}

// Adds upstream * d(loss)/d(pred) into grad_pred; masked-out pixels receive
// exactly zero gradient.
inline void normal_loss_backward(const NormalMap& pred, const NormalMap& target,
                                 const PixelMask& mask, double upstream, NormalMap& grad_pred) {
    if (!pred.same_size(target) || pred.width != mask.width || pred.height != mask.height)
        throw DimensionMismatch("normal_loss_backward: map sizes differ");
    if (!grad_pred.same_size(pred))
        throw DimensionMismatch("normal_loss_backward: gradient buffer size differs");
    const size_t count = mask.count_true();
    if (count == 0) return;
    const double scale = upstream / static_cast<double>(count);
    for (int r = 0; r < pred.height; ++r) {
        for (int c = 0; c < pred.width; ++c) {
            if (!mask.at(r, c)) continue;
            const Vec3 diff = pred.at(r, c) - target.at(r, c);
            for (int ch = 0; ch < 3; ++ch)
                grad_pred.at(r, c)[ch] += scale * detail::sign_of(diff[ch]);
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted total
// ---------------------------------------------------------------------------

// Everything one training view contributes to the objective. Null members
// switch their term off.
struct LossBundle {
    const ImageBuffer* render = nullptr;  // real-view photometric (with *gt)
    const ImageBuffer* gt = nullptr;
    const DepthMap* depth_pred = nullptr;  // Pearson term (with *depth_target, *depth_confidence)
    const DepthMap* depth_target = nullptr;
    const ConfidenceMap* depth_confidence = nullptr;
    const NormalMap* normal_pred = nullptr;  // normal term (with *normal_target, *normal_mask)
    const NormalMap* normal_target = nullptr;
    const PixelMask* normal_mask = nullptr;
    const ImageBuffer* pseudo_render = nullptr;  // pseudo-view photometric, masked
    const ImageBuffer* pseudo_gt = nullptr;
    const PixelMask* pseudo_mask = nullptr;
    const GaussianCloud* cloud = nullptr;  // scale flattening
};

// Weighted contributions; total is their exact sum.
struct LossBreakdown {
    double total = 0;
    double photometric_term = 0;
    double depth_term = 0;    // w_depth * pearson
    double normal_term = 0;   // w_normal * normal L1
    double scale_term = 0;    // w_scale * scale flattening
    double pseudo_term = 0;   // w_pseudo * masked photometric
    bool depth_degenerate = false;
    bool normal_empty = false;
    bool pseudo_empty = false;
};

inline LossBreakdown total_loss(const LossBundle& b, const TrainConfig& cfg) {
    LossBreakdown out;
    if (b.render && b.gt)
        out.photometric_term = photometric_loss(*b.render, *b.gt, cfg.lambda_dssim).loss;
    if (b.depth_pred && b.depth_target && b.depth_confidence) {
        const PearsonResult p = pearson_depth_loss(*b.depth_pred, *b.depth_target, *b.depth_confidence);
        out.depth_term = cfg.w_depth * p.loss;
        out.depth_degenerate = p.degenerate;
    }
    if (b.normal_pred && b.normal_target && b.normal_mask) {
        const NormalLossResult n = normal_loss(*b.normal_pred, *b.normal_target, *b.normal_mask);
        out.normal_term = cfg.w_normal * n.loss;
        out.normal_empty = n.empty_mask;
    }
    if (b.cloud) out.scale_term = cfg.w_scale * scale_loss(*b.cloud);
    if (b.pseudo_render && b.pseudo_gt) {
        const PhotometricResult p =
            photometric_loss(*b.pseudo_render, *b.pseudo_gt, cfg.lambda_dssim, b.pseudo_mask);
        out.pseudo_term = cfg.w_pseudo * p.loss;
        out.pseudo_empty = p.empty;
    }
    out.total =
        out.photometric_term + out.depth_term + out.normal_term + out.scale_term + out.pseudo_term;
    return out;
}

}  // namespace psplat::losses
