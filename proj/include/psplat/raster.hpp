#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "psplat/core.hpp"
#include "psplat/parallel.hpp"

// Deterministic CPU reference renderer for flattened Gaussians. Per pixel it
// composites color, plane-distance depth, accumulated-z depth, normals and
// alpha front to back, and provides the analytic adjoint for the optimizer.

namespace psplat {

// Numerical-stability constants from the splatting lineage.
inline constexpr double kCovRegularization = 0.3;   // pixel^2, added to the 2D covariance
inline constexpr double kAlphaCeiling = 0.99;       // keeps 1 - alpha away from zero
inline constexpr double kAlphaFloor = 1.0 / 255.0;  // contributors below this are skipped
inline constexpr double kTransmittanceCutoff = 1e-4;
// Footprint radius in standard deviations. Chosen so that everything outside
// the bounding box falls below kAlphaFloor even at full opacity
// (exp(-3.5^2 / 2) * 0.99 < 1/255), which keeps the culled renderer exactly
// equivalent to the exhaustive one.
inline constexpr double kFootprintSigma = 3.5;

struct ProjectedGaussian {
    int index = 0;       // position in the source cloud
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();  // includes the regularization floor
    Mat2 cov2d_inv = Mat2::Zero();
    double z = 0;                // view-space depth of the center
    double plane_distance = 0;   // d_i, nonnegative
    Vec3 normal_cam = Vec3::Zero();  // camera-frame, faces the camera
    Vec3 color = Vec3::Zero();       // SH evaluated toward the center
    double alpha = 0;                // activated base opacity
    int normal_axis = 2;             // column of R carrying the minimal scale
    double normal_sign = 1;          // +-1 flip applied to face the camera
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel footprint
};

struct Contribution {
    int32_t gaussian;      // cloud index
    double alpha;          // clamped per-pixel opacity alpha_i
    double transmittance;  // T_i, the running front-to-back product
};

struct RenderOutput {
    ImageBuffer color;
    DepthMap depth_plane;
    DepthMap depth_accum;
    NormalMap normals;
    PixelGrid<double> alpha;
    // Per pixel, front-to-back contributor records for the backward pass.
    std::vector<std::vector<Contribution>> contributors;
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    bool early_termination = true;
    int threads = 1;
    bool record_contributors = true;
};

namespace detail {

inline Mat2 invert_cov2d(const Mat2& c) {
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    if (!std::isfinite(det) || det <= 1e-12)
        throw SingularFootprint("projected covariance is singular; degenerate scale input");
    Mat2 inv;
    inv << c(1, 1), -c(0, 1), -c(1, 0), c(0, 0);
    return inv / det;
}

// Shared forward projection. With cull=false every Gaussian in front of the
// near plane keeps a full-image footprint (used by the exhaustive oracle).
inline std::vector<ProjectedGaussian> project_impl(const GaussianCloud& cloud, const Camera& cam,
                                                   bool cull) {
    cam.validate();
    cloud.validate();
    const Mat3 w_rot = cam.rotation.transpose();
    std::vector<ProjectedGaussian> out;
    out.reserve(cloud.size());
    std::vector<double> basis(sh::coeff_count(cloud.sh_degree));
    for (size_t i = 0; i < cloud.size(); ++i) {
        const ActivatedGaussian g = activate(cloud, i);
        const Vec3 t = w_rot * (g.mean - cam.center);
        if (!(t[2] > cam.near) || !(t[2] < cam.far)) continue;

        ProjectedGaussian p;
        p.index = static_cast<int>(i);
        p.z = t[2];
        p.alpha = g.alpha;
        p.mean2d = cam.project(t);

        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / t[2], 0, -cam.fx * t[0] / (t[2] * t[2]), 0, cam.fy / t[2],
            -cam.fy * t[1] / (t[2] * t[2]);
        const Eigen::Matrix<double, 2, 3> b = jac * w_rot * g.rotation * g.scales.asDiagonal();
        p.cov2d = b * b.transpose() + kCovRegularization * Mat2::Identity();
        p.cov2d(1, 0) = p.cov2d(0, 1);  // bit-exact symmetry
        p.cov2d_inv = invert_cov2d(p.cov2d);

        // Normal of the plane: axis of the minimal activated scale, flipped
        // toward the camera; d_i is the (positive) plane-to-camera distance.
        int k = 0;
        if (g.scales[1] < g.scales[k]) k = 1;
        if (g.scales[2] < g.scales[k]) k = 2;
        p.normal_axis = k;
        const Vec3 n_cam_raw = w_rot * g.rotation.col(k);
        const double facing = n_cam_raw.dot(t);
        p.normal_sign = facing > 0 ? -1.0 : 1.0;
        p.normal_cam = p.normal_sign * n_cam_raw;
        p.plane_distance = -t.dot(p.normal_cam);

        Vec3 dir = g.mean - cam.center;
        const double dist = dir.norm();
        dir = dist > 1e-12 ? Vec3(dir / dist) : Vec3(0, 0, 1);
        sh::basis(cloud.sh_degree, dir, basis.data());
        const double* coeffs = cloud.sh_of(i);
        for (int ch = 0; ch < 3; ++ch) {
            double c = 0.5;
            for (int m = 0; m < static_cast<int>(basis.size()); ++m)
                c += basis[m] * coeffs[m * 3 + ch];
            p.color[ch] = c;
        }

        if (cull) {
            const double half_tr = 0.5 * (p.cov2d(0, 0) + p.cov2d(1, 1));
            const double disc =
                std::sqrt(std::max(0.0, half_tr * half_tr - p.cov2d.determinant()));
            const double radius = kFootprintSigma * std::sqrt(half_tr + disc);
            p.x0 = std::max(0, static_cast<int>(std::ceil(p.mean2d[0] - radius)));
            p.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(p.mean2d[0] + radius)));
            p.y0 = std::max(0, static_cast<int>(std::ceil(p.mean2d[1] - radius)));
            p.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(p.mean2d[1] + radius)));
            if (p.x0 > p.x1 || p.y0 > p.y1) continue;
        } else {
            p.x0 = 0;
            p.x1 = cam.width - 1;
            p.y0 = 0;
            p.y1 = cam.height - 1;
        }
        out.push_back(p);
    }
    std::stable_sort(out.begin(), out.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
        return a.z < b.z || (a.z == b.z && a.index < b.index);
    });
    return out;
}

// Gaussians intersecting each pixel row, in global depth order.
inline std::vector<std::vector<int>> row_buckets(const std::vector<ProjectedGaussian>& proj,
                                                 int height) {
    std::vector<std::vector<int>> buckets(height);
    for (size_t i = 0; i < proj.size(); ++i)
        for (int y = proj[i].y0; y <= proj[i].y1; ++y) buckets[y].push_back(static_cast<int>(i));
    return buckets;
}

inline RenderOutput composite(const std::vector<ProjectedGaussian>& proj, const Camera& cam,
                              const RenderOptions& opts) {
    RenderOutput out;
    out.color = ImageBuffer(cam.width, cam.height, opts.background);
    out.depth_plane = DepthMap(cam.width, cam.height, DepthSemantics::kPlaneDistance);
    out.depth_accum = DepthMap(cam.width, cam.height, DepthSemantics::kAccumulatedZ);
    out.normals = NormalMap(cam.width, cam.height);
    out.alpha = PixelGrid<double>(cam.width, cam.height, 0.0);
    if (opts.record_contributors) out.contributors.resize(out.alpha.size());

    const auto buckets = row_buckets(proj, cam.height);
    parallel_chunks(cam.height, opts.threads, [&](int, int row_begin, int row_end) {
        for (int y = row_begin; y < row_end; ++y) {
            const auto& bucket = buckets[y];
            for (int x = 0; x < cam.width; ++x) {
                double transmittance = 1.0;
                Vec3 color_sum = Vec3::Zero();
                double depth_sum = 0, z_sum = 0, alpha_sum = 0;
                Vec3 normal_sum = Vec3::Zero();
                bool hit = false;
                std::vector<Contribution>* record =
                    opts.record_contributors ? &out.contributors[static_cast<size_t>(y) * cam.width + x]
                                             : nullptr;
                for (int pi : bucket) {
                    const ProjectedGaussian& p = proj[pi];
                    if (x < p.x0 || x > p.x1) continue;
                    const Vec2 delta(x - p.mean2d[0], y - p.mean2d[1]);
                    const double power = -0.5 * delta.dot(p.cov2d_inv * delta);
                    const double alpha_i = std::min(kAlphaCeiling, p.alpha * std::exp(power));
                    if (alpha_i < kAlphaFloor) continue;
                    hit = true;
                    if (record) record->push_back({p.index, alpha_i, transmittance});
                    const double w = transmittance * alpha_i;
                    color_sum += w * p.color;
                    depth_sum += w * p.plane_distance;
                    z_sum += w * p.z;
                    normal_sum += w * p.normal_cam;
                    alpha_sum += w;
                    transmittance *= 1.0 - alpha_i;
                    if (opts.early_termination && transmittance < kTransmittanceCutoff) break;
                }
                out.color.at(y, x) = color_sum + transmittance * opts.background;
                out.alpha.at(y, x) = alpha_sum;
                if (hit) {
                    out.depth_plane.at(y, x) = depth_sum;
                    out.depth_accum.at(y, x) = z_sum;
                    out.normals.at(y, x) = normal_sum;
                }
            }
        }
    });
    return out;
}

}  // namespace detail

// Projects every Gaussian, culling those behind the near plane, beyond the
// far plane, or whose footprint misses the image.
inline std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& cam) {
    return detail::project_impl(cloud, cam, /*cull=*/true);
}

inline RenderOutput render(const GaussianCloud& cloud, const Camera& cam,
                           const RenderOptions& opts = {}) {
    return detail::composite(detail::project_impl(cloud, cam, /*cull=*/true), cam, opts);
}

// Oracle renderer: same per-contributor math, but every Gaussian is evaluated
// at every pixel and compositing never terminates early. Test use only.
inline RenderOutput render_bruteforce(const GaussianCloud& cloud, const Camera& cam,
                                      const RenderOptions& opts = {}) {
    RenderOptions exhaustive = opts;
    exhaustive.early_termination = false;
    return detail::composite(detail::project_impl(cloud, cam, /*cull=*/false), cam, exhaustive);
}

// Per-pixel adjoint inputs; an empty channel means zero gradient.
struct RenderGrads {
    int width = 0, height = 0;
    std::vector<Vec3> color;
    std::vector<double> depth_plane;
    std::vector<double> depth_accum;
    std::vector<Vec3> normal;
    std::vector<double> alpha;

    static RenderGrads zeros(int w, int h) {
        RenderGrads g;
        g.width = w;
        g.height = h;
        return g;
    }
    void ensure_color() {
        if (color.empty()) color.assign(static_cast<size_t>(width) * height, Vec3::Zero());
    }
    void ensure_depth_plane() {
        if (depth_plane.empty()) depth_plane.assign(static_cast<size_t>(width) * height, 0.0);
    }
    void ensure_depth_accum() {
        if (depth_accum.empty()) depth_accum.assign(static_cast<size_t>(width) * height, 0.0);
    }
    void ensure_normal() {
        if (normal.empty()) normal.assign(static_cast<size_t>(width) * height, Vec3::Zero());
    }
    void ensure_alpha() {
        if (alpha.empty()) alpha.assign(static_cast<size_t>(width) * height, 0.0);
    }
};

struct ParamGrads {
    std::vector<Vec3> position;
    std::vector<Vec4> rotation;
    std::vector<Vec3> log_scale;
    std::vector<double> opacity;
    std::vector<double> sh;  // layout matches GaussianCloud::sh

    void resize_like(const GaussianCloud& cloud) {
        position.assign(cloud.size(), Vec3::Zero());
        rotation.assign(cloud.size(), Vec4::Zero());
        log_scale.assign(cloud.size(), Vec3::Zero());
        opacity.assign(cloud.size(), 0.0);
        sh.assign(cloud.sh.size(), 0.0);
    }

    ParamGrads& operator+=(const ParamGrads& o) {
        for (size_t i = 0; i < position.size(); ++i) position[i] += o.position[i];
        for (size_t i = 0; i < rotation.size(); ++i) rotation[i] += o.rotation[i];
        for (size_t i = 0; i < log_scale.size(); ++i) log_scale[i] += o.log_scale[i];
        for (size_t i = 0; i < opacity.size(); ++i) opacity[i] += o.opacity[i];
        for (size_t i = 0; i < sh.size(); ++i) sh[i] += o.sh[i];
        return *this;
    }
};

namespace detail {

// Per-gaussian accumulators for the screen-space half of the adjoint.
struct ScreenGrads {
    std::vector<Vec2> mean2d;
    std::vector<Mat2> cov2d;
    std::vector<double> alpha;  // w.r.t. the activated opacity
    std::vector<double> plane_distance;
    std::vector<double> z;
    std::vector<Vec3> normal_cam;
    std::vector<Vec3> color;

    explicit ScreenGrads(size_t n)
        : mean2d(n, Vec2::Zero()),
          cov2d(n, Mat2::Zero()),
          alpha(n, 0.0),
          plane_distance(n, 0.0),
          z(n, 0.0),
          normal_cam(n, Vec3::Zero()),
          color(n, Vec3::Zero()) {}

    void merge(const ScreenGrads& o) {
        for (size_t i = 0; i < mean2d.size(); ++i) {
            mean2d[i] += o.mean2d[i];
            cov2d[i] += o.cov2d[i];
            alpha[i] += o.alpha[i];
            plane_distance[i] += o.plane_distance[i];
            z[i] += o.z[i];
            normal_cam[i] += o.normal_cam[i];
            color[i] += o.color[i];
        }
    }
};

}  // namespace detail

// Adjoint of render(): pulls per-pixel gradients back to every parameter
// group. `output` must come from render() on the same cloud/camera/options;
// the recorded contributor lists pin the exact compositing the forward pass
// performed. Accumulation is deterministic for a fixed worker count.
inline ParamGrads render_backward(const GaussianCloud& cloud, const Camera& cam,
                                  const RenderOutput& output, const RenderGrads& grads,
                                  const RenderOptions& opts = {}) {
    if (grads.width != cam.width || grads.height != cam.height)
        throw DimensionMismatch("render_backward: gradient dimensions do not match the camera");
    if (output.contributors.size() != static_cast<size_t>(cam.width) * cam.height)
        throw Error("render_backward: output has no contributor records");

    const auto proj = detail::project_impl(cloud, cam, /*cull=*/true);
    std::vector<int> slot_of(cloud.size(), -1);
    for (size_t i = 0; i < proj.size(); ++i) slot_of[proj[i].index] = static_cast<int>(i);

    const bool has_color = !grads.color.empty();
    const bool has_dp = !grads.depth_plane.empty();
    const bool has_dz = !grads.depth_accum.empty();
    const bool has_n = !grads.normal.empty();
    const bool has_a = !grads.alpha.empty();

    const int workers = std::max(1, std::min(opts.threads, cam.height));
    std::vector<detail::ScreenGrads> partial(workers, detail::ScreenGrads(proj.size()));

    parallel_chunks(cam.height, workers, [&](int worker, int row_begin, int row_end) {
        detail::ScreenGrads& acc = partial[worker];
        for (int y = row_begin; y < row_end; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const size_t px = static_cast<size_t>(y) * cam.width + x;
                const auto& contribs = output.contributors[px];
                const Vec3 g_color = has_color ? grads.color[px] : Vec3::Zero();
                const double g_dp = has_dp ? grads.depth_plane[px] : 0.0;
                const double g_dz = has_dz ? grads.depth_accum[px] : 0.0;
                const Vec3 g_normal = has_n ? grads.normal[px] : Vec3::Zero();
                const double g_alpha = has_a ? grads.alpha[px] : 0.0;
                const double bg_term = opts.background.dot(g_color);
                if (contribs.empty()) continue;

                double t_final = contribs.back().transmittance * (1.0 - contribs.back().alpha);
                double suffix = t_final * bg_term;
                for (size_t ci = contribs.size(); ci-- > 0;) {
                    const Contribution& c = contribs[ci];
                    const int slot = slot_of[c.gaussian];
                    const ProjectedGaussian& p = proj[slot];
                    const double payload_dot = p.color.dot(g_color) + p.plane_distance * g_dp +
                                               p.z * g_dz + p.normal_cam.dot(g_normal) + g_alpha;
                    const double w = c.transmittance * c.alpha;
                    acc.color[slot] += w * g_color;
                    acc.plane_distance[slot] += w * g_dp;
                    acc.z[slot] += w * g_dz;
                    acc.normal_cam[slot] += w * g_normal;

                    const double d_alpha_i =
                        c.transmittance * payload_dot - suffix / (1.0 - c.alpha);
                    if (c.alpha < kAlphaCeiling) {  // the ceiling clamp blocks the chain
                        const Vec2 delta(x - p.mean2d[0], y - p.mean2d[1]);
                        const Vec2 qd = p.cov2d_inv * delta;
                        const double gauss = std::exp(-0.5 * delta.dot(qd));
                        acc.alpha[slot] += d_alpha_i * gauss;
                        const double g_gauss = d_alpha_i * p.alpha * gauss;
                        acc.mean2d[slot] += g_gauss * qd;
                        acc.cov2d[slot] += (0.5 * g_gauss) * (qd * qd.transpose());
                    }
                    suffix += w * payload_dot;
                }
            }
        }
    });
    detail::ScreenGrads screen = std::move(partial[0]);
    for (int w = 1; w < workers; ++w) screen.merge(partial[w]);

    // Screen-space gradients back to the 3D parameters, per Gaussian.
    ParamGrads grad;
    grad.resize_like(cloud);
    const Mat3 w_rot = cam.rotation.transpose();
    const int n_coeffs = cloud.coeff_count();
    std::vector<double> basis(n_coeffs);
    std::vector<Vec3> basis_grad(n_coeffs);
    for (size_t slot = 0; slot < proj.size(); ++slot) {
        const ProjectedGaussian& p = proj[slot];
        const size_t gi = static_cast<size_t>(p.index);
        const ActivatedGaussian g = activate(cloud, gi);
        const Vec3 t = w_rot * (g.mean - cam.center);

        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / t[2], 0, -cam.fx * t[0] / (t[2] * t[2]), 0, cam.fy / t[2],
            -cam.fy * t[1] / (t[2] * t[2]);
        const Eigen::Matrix<double, 2, 3> a = jac * w_rot;
        const Mat3 rs = g.rotation * g.scales.asDiagonal();

        Vec3 grad_t = Vec3::Zero();
        Mat3 grad_rot = Mat3::Zero();
        Vec3 grad_scales = Vec3::Zero();

        // 2D mean and view depth.
        grad_t += jac.transpose() * screen.mean2d[slot];
        grad_t[2] += screen.z[slot];

        // 2D covariance: cov2d = B B^T + reg, B = A R S. The accumulated
        // gradient is symmetric, so grad_B = 2 sym(grad) B.
        const Eigen::Matrix<double, 2, 3> b = a * rs;
        const Eigen::Matrix<double, 2, 3> grad_b = 2.0 * screen.cov2d[slot] * b;
        const Mat3 grad_rs = a.transpose() * grad_b;
        grad_rot += grad_rs * g.scales.asDiagonal();
        for (int k = 0; k < 3; ++k) grad_scales[k] += g.rotation.col(k).dot(grad_rs.col(k));
        // A = J W depends on t through J.
        const Eigen::Matrix<double, 2, 3> grad_jac = grad_b * rs.transpose() * w_rot.transpose();
        const double z2 = t[2] * t[2], z3 = z2 * t[2];
        grad_t[0] += grad_jac(0, 2) * (-cam.fx / z2);
        grad_t[1] += grad_jac(1, 2) * (-cam.fy / z2);
        grad_t[2] += grad_jac(0, 0) * (-cam.fx / z2) + grad_jac(0, 2) * (2 * cam.fx * t[0] / z3) +
                     grad_jac(1, 1) * (-cam.fy / z2) + grad_jac(1, 2) * (2 * cam.fy * t[1] / z3);

        // Plane distance d = -t . n_cam and the composited normal payload.
        Vec3 grad_ncam = screen.normal_cam[slot];
        grad_t += screen.plane_distance[slot] * (-p.normal_cam);
        grad_ncam += screen.plane_distance[slot] * (-t);
        grad_rot.col(p.normal_axis) += p.normal_sign * (w_rot.transpose() * grad_ncam);

        // Color: SH coefficients and, for view-dependent degrees, the
        // direction's dependence on the position.
        const Vec3 g_color = screen.color[slot];
        if (!g_color.isZero(0.0)) {
            Vec3 u = g.mean - cam.center;
            const double dist = u.norm();
            const Vec3 dir = dist > 1e-12 ? Vec3(u / dist) : Vec3(0, 0, 1);
            sh::basis(cloud.sh_degree, dir, basis.data());
            double* grad_sh = grad.sh.data() + gi * cloud.sh_stride();
            for (int m = 0; m < n_coeffs; ++m)
                for (int ch = 0; ch < 3; ++ch) grad_sh[m * 3 + ch] += basis[m] * g_color[ch];
            if (cloud.sh_degree > 0 && dist > 1e-12) {
                sh::basis_gradient(cloud.sh_degree, dir, basis_grad.data());
                const double* coeffs = cloud.sh_of(gi);
                Vec3 grad_dir = Vec3::Zero();
                for (int m = 0; m < n_coeffs; ++m) {
                    double s = 0;
                    for (int ch = 0; ch < 3; ++ch) s += coeffs[m * 3 + ch] * g_color[ch];
                    grad_dir += s * basis_grad[m];
                }
                grad.position[gi] += (grad_dir - dir * dir.dot(grad_dir)) / dist;
            }
        }

        grad.position[gi] += w_rot.transpose() * grad_t;
        grad.rotation[gi] += quat_rotation_backward(cloud.rotations[gi], grad_rot);
        grad.log_scale[gi] += grad_scales.cwiseProduct(g.scales);
        const double act = g.alpha * (1.0 - g.alpha);
        grad.opacity[gi] += screen.alpha[slot] * act;
    }
    return grad;
}

}  // namespace psplat
