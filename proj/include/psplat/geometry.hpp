#pragma once

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "psplat/core.hpp"
#include "psplat/math.hpp"

// Depth-map geometry kernels: normals from depth, patch-border masks, forward
// depth warping, circle interpolation of camera centers, pseudo-camera
// synthesis, confidence filtering, and trajectory alignment error.
namespace psplat::geometry {

// ---------------------------------------------------------------------------
// Normals from a z-depth map
// ---------------------------------------------------------------------------

// Per pixel: unproject the pixel and its +x / +y neighbors (one-sided at the
// right/bottom borders) to camera-frame points, take the normalized cross
// product of the two difference vectors, and flip it to face the camera.
// Depth values are read as distance along the optical axis. A NaN depth at any
// participating pixel yields an exactly zero normal.
inline NormalMap normals_from_depth(const DepthMap& depth, const Camera& cam) {
    if (depth.width != cam.width || depth.height != cam.height)
        throw DimensionMismatch("normals_from_depth: depth and camera sizes differ");
    NormalMap out(depth.width, depth.height, /*unit=*/true);
    const auto point_at = [&](int r, int c) -> Vec3 {
        return cam.pixel_ray(r, c) * depth.at(r, c);
    };
    for (int r = 0; r < depth.height; ++r) {
        for (int c = 0; c < depth.width; ++c) {
            // One-sided differences at the borders, always pointing +x / +y.
            const int cx0 = (c + 1 < depth.width) ? c : c - 1;
            const int cx1 = cx0 + 1;
            const int ry0 = (r + 1 < depth.height) ? r : r - 1;
            const int ry1 = ry0 + 1;
            if (cx0 < 0 || ry0 < 0) continue;  // 1-pixel-wide image axis
            const double d00 = depth.at(r, c);
            const double dx0 = depth.at(r, cx0), dx1 = depth.at(r, cx1);
            const double dy0 = depth.at(ry0, c), dy1 = depth.at(ry1, c);
            if (std::isnan(d00) || std::isnan(dx0) || std::isnan(dx1) || std::isnan(dy0) ||
                std::isnan(dy1))
                continue;
            const Vec3 vx = point_at(r, cx1) - point_at(r, cx0);
            const Vec3 vy = point_at(ry1, c) - point_at(ry0, c);
            Vec3 n = vx.cross(vy);
            const double len = n.norm();
            if (!(len > 1e-15) || !std::isfinite(len)) continue;
            n /= len;
            if (n.dot(point_at(r, c)) > 0.0) n = -n;  // face the camera at the origin
            out.at(r, c) = n;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patch-border mask
// ---------------------------------------------------------------------------

// Tiles the image into patch x patch cells anchored at (0, 0) and marks the
// 1-pixel inner border of every (possibly clipped) cell false; cell interiors
// and nothing else are true.
inline PixelMask patch_border_mask(int width, int height, int patch = 14) {
    if (width < 1 || height < 1) throw ValueRange("patch_border_mask: image must be at least 1x1");
    if (patch < 1) throw ValueRange("patch_border_mask: patch must be >= 1");
    PixelMask mask(width, height, true);
    for (int r = 0; r < height; ++r) {
        const int cell_r0 = (r / patch) * patch;
        const int cell_r1 = std::min(cell_r0 + patch, height);
        const bool row_border = (r == cell_r0) || (r == cell_r1 - 1);
        for (int c = 0; c < width; ++c) {
            const int cell_c0 = (c / patch) * patch;
            const int cell_c1 = std::min(cell_c0 + patch, width);
            const bool col_border = (c == cell_c0) || (c == cell_c1 - 1);
            if (row_border || col_border) mask.at(r, c) = 0;
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Confidence filtering
// ---------------------------------------------------------------------------

// Indices of entries whose confidence is >= threshold (inclusive: a value
// exactly at the threshold survives), in input order.
inline std::vector<size_t> filter_indices(const std::vector<double>& confidences,
                                          double threshold = 0.2) {
    std::vector<size_t> kept;
    kept.reserve(confidences.size());
    for (size_t i = 0; i < confidences.size(); ++i)
        if (confidences[i] >= threshold) kept.push_back(i);
    return kept;
}

inline std::vector<Vec3> filter_points(const std::vector<Vec3>& points,
                                       const std::vector<double>& confidences,
                                       double threshold = 0.2) {
    if (points.size() != confidences.size())
        throw LengthMismatch("filter_points: points and confidences differ in length");
    std::vector<Vec3> kept;
    for (size_t i : filter_indices(confidences, threshold)) kept.push_back(points[i]);
    return kept;
}

// ---------------------------------------------------------------------------
// Forward depth warping
// ---------------------------------------------------------------------------

struct WarpResult {
    ImageBuffer image;  // black where nothing landed
    PixelMask mask;     // true = a source pixel splatted here
};

// Forward-warps src_img into dst_cam's frame: every source pixel with
// confidence >= conf_threshold and finite positive depth is unprojected along
// its ray, reprojected, and splatted to the nearest destination pixel with
// z-buffering (nearest destination depth wins; exact ties keep the earlier
// source pixel in raster order). Unwritten pixels stay mask=false.
inline WarpResult warp(const ImageBuffer& src_img, const DepthMap& src_depth,
                       const ConfidenceMap& src_conf, const Camera& src_cam,
                       const Camera& dst_cam, double conf_threshold = 0.2) {
    if (!src_img.same_size(src_depth) || src_img.width != src_conf.width ||
        src_img.height != src_conf.height)
        throw DimensionMismatch("warp: source image, depth, and confidence sizes differ");
    if (src_img.width != src_cam.width || src_img.height != src_cam.height)
        throw DimensionMismatch("warp: source buffers do not match the source camera");
    WarpResult out;
    out.image = ImageBuffer(dst_cam.width, dst_cam.height, Vec3::Zero());
    out.mask = PixelMask(dst_cam.width, dst_cam.height, false);
    PixelGrid<double> zbuf(dst_cam.width, dst_cam.height,
                           std::numeric_limits<double>::infinity());
    for (int r = 0; r < src_img.height; ++r) {
        for (int c = 0; c < src_img.width; ++c) {
            if (src_conf.at(r, c) < conf_threshold) continue;
            const double d = src_depth.at(r, c);
            if (!std::isfinite(d) || d <= 0.0) continue;
            const Vec3 world = src_cam.camera_to_world(src_cam.pixel_ray(r, c) * d);
            const Vec3 q = dst_cam.world_to_camera(world);
            if (!(q[2] > 0.0)) continue;
            const Vec2 px = dst_cam.project(q);
            const long dc = std::lround(px[0]);
            const long dr = std::lround(px[1]);
            if (dr < 0 || dr >= dst_cam.height || dc < 0 || dc >= dst_cam.width) continue;
            double& best = zbuf.at(static_cast<int>(dr), static_cast<int>(dc));
            if (q[2] < best) {
                best = q[2];
                out.image.at(static_cast<int>(dr), static_cast<int>(dc)) = src_img.at(r, c);
                out.mask.at(static_cast<int>(dr), static_cast<int>(dc)) = 1;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Circle interpolation
// ---------------------------------------------------------------------------

// Point at fraction t along the minor arc from a to b on the unique circle
// through a, b, c. Collinear triples (circumradius > 1e6 x the largest
// pairwise distance) fall back to linear interpolation between a and b.
// The endpoints are returned exactly at t = 0 and t = 1.
inline Vec3 circle_interpolate(const Vec3& a, const Vec3& b, const Vec3& c, double t) {
    const double dab = (a - b).norm(), dac = (a - c).norm(), dbc = (b - c).norm();
    if (dab < 1e-12 || dac < 1e-12 || dbc < 1e-12)
        throw DegenerateInput("circle_interpolate: two of the three points coincide");
    if (t == 0.0) return a;
    if (t == 1.0) return b;

    const Vec3 u = b - a;
    const Vec3 v = c - a;
    const Vec3 w = u.cross(v);  // circle-plane normal
    const double denom = 2.0 * w.squaredNorm();
    const double max_dist = std::max({dab, dac, dbc});
    const auto lerp = [&] { return Vec3(a + t * (b - a)); };
    if (denom == 0.0) return lerp();
    const Vec3 center = a + (u.squaredNorm() * v.cross(w) + v.squaredNorm() * w.cross(u)) / denom;
    const double radius = (a - center).norm();
    if (!std::isfinite(radius) || radius > 1e6 * max_dist) return lerp();

    const Vec3 ra = a - center;
    const Vec3 rb = b - center;
    const Vec3 axis = w.normalized();
    // Signed angle from ra to rb about the plane normal; |angle| <= pi is the
    // minor arc by construction.
    const double cos_t = ra.dot(rb) / (radius * radius);
    const double sin_t = ra.cross(rb).dot(axis) / (radius * radius);
    const double angle = std::atan2(sin_t, cos_t);
    const Eigen::AngleAxisd rot(t * angle, axis);
    return center + rot * ra;
}

// ---------------------------------------------------------------------------
// Pseudo-camera synthesis
// ---------------------------------------------------------------------------

// For each camera: its two nearest neighbors by center distance (ties by
// index) define a circle with the target; views_per_pair pseudo-cameras are
// emitted along each target-to-neighbor minor arc at t = k/(views_per_pair+1),
// with spherically interpolated orientation and the target's intrinsics.
inline std::vector<Camera> pseudo_cameras(const std::vector<Camera>& cams,
                                          int views_per_pair = 2) {
    if (cams.size() < 3)
        throw TooFewCameras("pseudo_cameras: need at least 3 cameras to define circles");
    if (views_per_pair < 1) throw ValueRange("pseudo_cameras: views_per_pair must be >= 1");
    std::vector<Camera> out;
    out.reserve(cams.size() * 2 * static_cast<size_t>(views_per_pair));
    for (size_t i = 0; i < cams.size(); ++i) {
        std::vector<std::pair<double, size_t>> by_dist;
        for (size_t j = 0; j < cams.size(); ++j) {
            if (j == i) continue;
            by_dist.emplace_back((cams[j].center - cams[i].center).norm(), j);
        }
        std::sort(by_dist.begin(), by_dist.end());
        const size_t n1 = by_dist[0].second;
        const size_t n2 = by_dist[1].second;
        const Vec4 q_target = rotation_to_quat(cams[i].rotation);
        for (size_t neighbor : {n1, n2}) {
            const size_t other = (neighbor == n1) ? n2 : n1;
            const Vec4 q_neighbor = rotation_to_quat(cams[neighbor].rotation);
            for (int k = 1; k <= views_per_pair; ++k) {
                const double t = static_cast<double>(k) / (views_per_pair + 1);
                Camera pseudo = cams[i];  // intrinsics, near/far from the target
                pseudo.center = circle_interpolate(cams[i].center, cams[neighbor].center,
                                                   cams[other].center, t);
                pseudo.rotation = quat_to_rotation(quat_slerp(q_target, q_neighbor, t));
                out.push_back(pseudo);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Absolute trajectory error
// ---------------------------------------------------------------------------

struct AteResult {
    double mean = 0;
    double rmse = 0;
};

// Aligns est to gt with the closed-form least-squares similarity transform
// (rotation + translation + uniform scale), then reports the mean and RMS of
// the residual point distances.
inline AteResult ate(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
    if (est.size() != gt.size()) throw LengthMismatch("ate: trajectory lengths differ");
    if (est.size() < 3) throw LengthMismatch("ate: need at least 3 poses");
    const double n = static_cast<double>(est.size());
    Vec3 mu_x = Vec3::Zero(), mu_y = Vec3::Zero();
    for (size_t i = 0; i < est.size(); ++i) {
        mu_x += est[i];
        mu_y += gt[i];
    }
    mu_x /= n;
    mu_y /= n;
    Mat3 cov = Mat3::Zero();
    double var_x = 0.0, var_y = 0.0;
    for (size_t i = 0; i < est.size(); ++i) {
        const Vec3 dx = est[i] - mu_x;
        const Vec3 dy = gt[i] - mu_y;
        cov += dy * dx.transpose();
        var_x += dx.squaredNorm();
        var_y += dy.squaredNorm();
    }
    cov /= n;
    var_x /= n;
    var_y /= n;
    if (var_y < 1e-24) throw DegenerateTrajectory("ate: ground-truth points all coincide");
    if (var_x < 1e-24) throw DegenerateTrajectory("ate: estimated points all coincide");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 d = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d[2] = -1.0;
    const Mat3 rot = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    // trace(R^T cov) equals the sign-corrected singular value sum.
    const double scale = (rot.transpose() * cov).trace() / var_x;
    const Vec3 trans = mu_y - scale * (rot * mu_x);

    double sum = 0.0, sum_sq = 0.0;
    for (size_t i = 0; i < est.size(); ++i) {
        const double r = (scale * (rot * est[i]) + trans - gt[i]).norm();
        sum += r;
        sum_sq += r * r;
    }
    AteResult res;
    res.mean = sum / n;
    res.rmse = std::sqrt(sum_sq / n);
    return res;
}

}  // namespace psplat::geometry
