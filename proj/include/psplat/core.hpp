#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "psplat/math.hpp"

namespace psplat {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct ValueRange : Error {
    using Error::Error;
};
struct DegenerateInput : Error {
    using Error::Error;
};
struct DegenerateTrajectory : Error {
    using Error::Error;
};
struct TooFewCameras : Error {
    using Error::Error;
};
struct EmptyCloud : Error {
    using Error::Error;
};
struct EmptyPointCloud : Error {
    using Error::Error;
};
struct NoViews : Error {
    using Error::Error;
};
struct SingularFootprint : Error {
    using Error::Error;
};
struct NotImplemented : Error {
    using Error::Error;
};
struct MalformedHeader : Error {
    using Error::Error;
};
struct UnsupportedFormat : Error {
    using Error::Error;
};
struct MissingProperty : Error {
    using Error::Error;
};
struct NonFiniteScale : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct NonOrthonormalRotation : Error {
    using Error::Error;
};

// Pinhole camera. `rotation` is the camera-to-world rotation R_c and `center`
// the camera position T_c in world units; the view transform W and the
// projection Jacobian J are derived, never stored.
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    Mat3 rotation = Mat3::Identity();
    Vec3 center = Vec3::Zero();
    double near = 0.01;
    double far = 1000.0;

    void validate() const {
        if (width < 1 || height < 1) throw ValueRange("camera: width/height must be >= 1");
        if (!(fx > 0) || !(fy > 0)) throw ValueRange("camera: fx/fy must be positive");
        if (!(near > 0) || !(far > near)) throw ValueRange("camera: need 0 < near < far");
        const Mat3 rtr = rotation.transpose() * rotation;
        if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
            throw NonOrthonormalRotation("camera: rotation is not orthonormal");
        if (std::abs(rotation.determinant() - 1.0) > 1e-6)
            throw NonOrthonormalRotation("camera: rotation determinant is not +1");
    }

    Vec3 world_to_camera(const Vec3& p) const { return rotation.transpose() * (p - center); }
    Vec3 camera_to_world(const Vec3& p) const { return rotation * p + center; }

    // Continuous pixel coordinates; integer coordinates are pixel sample
    // positions, so the optical axis projects to (cx, cy).
    Vec2 project(const Vec3& cam_point) const {
        return Vec2(fx * cam_point[0] / cam_point[2] + cx, fy * cam_point[1] / cam_point[2] + cy);
    }

    // Camera-frame ray through pixel (row, col) with unit z.
    Vec3 pixel_ray(double row, double col) const {
        return Vec3((col - cx) / fx, (row - cy) / fy, 1.0);
    }

    // Camera frame is x-right / y-down / z-forward; `image_down` is the world
    // direction the image's downward axis should follow.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& image_down, int width,
                          int height, double focal_px) {
        Camera cam;
        cam.width = width;
        cam.height = height;
        cam.fx = cam.fy = focal_px;
        cam.cx = 0.5 * (width - 1);
        cam.cy = 0.5 * (height - 1);
        const Vec3 fwd = (target - eye).normalized();
        Vec3 right = image_down.cross(fwd);
        if (right.norm() < 1e-12) right = Vec3(1, 0, 0);
        right.normalize();
        const Vec3 down = fwd.cross(right);  // completes a right-handed frame
        cam.rotation.col(0) = right;
        cam.rotation.col(1) = down;
        cam.rotation.col(2) = fwd;
        cam.center = eye;
        return cam;
    }
};

template <typename T>
struct PixelGrid {
    int width = 0;
    int height = 0;
    std::vector<T> values;

    PixelGrid() = default;
    PixelGrid(int w, int h, const T& fill = T{})
        : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

    T& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }
    const T& at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
    size_t size() const { return values.size(); }
    bool same_size(int w, int h) const { return width == w && height == h; }
    template <typename U>
    bool same_size(const PixelGrid<U>& other) const {
        return width == other.width && height == other.height;
    }
    bool in_bounds(int row, int col) const {
        return row >= 0 && row < height && col >= 0 && col < width;
    }
};

enum class DepthSemantics {
    kPlaneDistance,  // composited per-Gaussian plane distances
    kAccumulatedZ,   // composited view-space z
    kEstimated,      // ingested external estimate
};

// Per-pixel depth in world units; NaN marks pixels with no value.
struct DepthMap : PixelGrid<double> {
    DepthSemantics semantics = DepthSemantics::kEstimated;

    DepthMap() = default;
    DepthMap(int w, int h, DepthSemantics sem,
             double fill = std::numeric_limits<double>::quiet_NaN())
        : PixelGrid<double>(w, h, fill), semantics(sem) {}
};

// Per-pixel weights in [0, 1]. from_raw() maps arbitrary nonnegative scores
// into range: NaN -> 0, negatives -> 0, and a global divide when max > 1.
struct ConfidenceMap : PixelGrid<double> {
    ConfidenceMap() = default;
    ConfidenceMap(int w, int h, double fill = 1.0) : PixelGrid<double>(w, h, fill) {}

    static ConfidenceMap from_raw(const PixelGrid<double>& raw) {
        ConfidenceMap out(raw.width, raw.height);
        double max_value = 0.0;
        for (double v : raw.values)
            if (std::isfinite(v) && v > max_value) max_value = v;
        const double scale = max_value > 1.0 ? 1.0 / max_value : 1.0;
        for (size_t i = 0; i < raw.values.size(); ++i) {
            const double v = raw.values[i];
            out.values[i] = std::isfinite(v) ? std::clamp(v * scale, 0.0, 1.0) : 0.0;
        }
        return out;
    }
};

// Camera-frame normals; zero means no coverage. `normalized` marks maps whose
// nonzero entries are unit length (depth-derived targets), as opposed to
// alpha-weighted rendered normals.
struct NormalMap : PixelGrid<Vec3> {
    bool normalized = false;

    NormalMap() = default;
    NormalMap(int w, int h, bool unit = false) : PixelGrid<Vec3>(w, h, Vec3::Zero()), normalized(unit) {}
};

// RGB image, values nominally in [0, 1].
struct ImageBuffer : PixelGrid<Vec3> {
    ImageBuffer() = default;
    ImageBuffer(int w, int h, const Vec3& fill = Vec3::Zero()) : PixelGrid<Vec3>(w, h, fill) {}
};

// true = pixel participates in a loss.
struct PixelMask : PixelGrid<uint8_t> {
    PixelMask() = default;
    PixelMask(int w, int h, bool fill = true)
        : PixelGrid<uint8_t>(w, h, fill ? uint8_t{1} : uint8_t{0}) {}

    size_t count_true() const {
        size_t n = 0;
        for (uint8_t v : values) n += v != 0;
        return n;
    }
};

// The optimizable scene, struct-of-arrays. Opacity is stored pre-sigmoid and
// scale pre-exp so the optimizer works in unconstrained space. Quaternions
// are (w, x, y, z) and kept unit-length by the optimizer.
struct GaussianCloud {
    std::vector<Vec3> positions;
    std::vector<Vec4> rotations;
    std::vector<Vec3> log_scales;
    std::vector<double> opacities;
    std::vector<double> sh;  // layout: [gaussian][coefficient][rgb]
    int sh_degree = 0;

    size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    int coeff_count() const { return sh::coeff_count(sh_degree); }
    int sh_stride() const { return 3 * coeff_count(); }
    double* sh_of(size_t i) { return sh.data() + i * sh_stride(); }
    const double* sh_of(size_t i) const { return sh.data() + i * sh_stride(); }

    void resize(size_t n) {
        positions.resize(n, Vec3::Zero());
        rotations.resize(n, Vec4(1, 0, 0, 0));
        log_scales.resize(n, Vec3::Zero());
        opacities.resize(n, 0.0);
        sh.resize(n * sh_stride(), 0.0);
    }

    void validate() const {
        const size_t n = positions.size();
        if (rotations.size() != n || log_scales.size() != n || opacities.size() != n ||
            sh.size() != n * sh_stride())
            throw LengthMismatch("gaussian cloud: parameter arrays disagree on length");
        if (sh_degree < 0 || sh_degree > 3) throw ValueRange("gaussian cloud: sh_degree must be 0..3");
    }

    void normalize_rotations() {
        for (auto& q : rotations) q /= q.norm();
    }
};

struct ActivatedGaussian {
    Vec3 mean;
    Mat3 rotation;
    Vec3 scales;  // activated, positive
    double alpha;
    Mat3 covariance;  // R S S^T R^T, PSD by construction
};

inline ActivatedGaussian activate(const GaussianCloud& cloud, size_t index) {
    ActivatedGaussian g;
    g.mean = cloud.positions[index];
    g.rotation = quat_to_rotation(cloud.rotations[index]);
    g.scales = cloud.log_scales[index].array().exp();
    g.alpha = sigmoid(cloud.opacities[index]);
    const Mat3 rs = g.rotation * g.scales.asDiagonal();
    g.covariance = rs * rs.transpose();
    // Mirror the upper triangle so symmetry holds bit-exactly, not just up to
    // vectorized rounding.
    g.covariance(1, 0) = g.covariance(0, 1);
    g.covariance(2, 0) = g.covariance(0, 2);
    g.covariance(2, 1) = g.covariance(1, 2);
    return g;
}

// Ablation toggles and loss weights. The depth/normal/scale weights are
// calibration constants; the pseudo-view weight and confidence threshold
// carry their published defaults.
struct TrainConfig {
    double lambda_dssim = 0.2;
    double w_depth = 0.5;
    double w_normal = 0.05;
    double w_scale = 10.0;
    double w_pseudo = 0.1;
    double conf_threshold = 0.2;
    bool opacity_reset_enabled = false;
    int opacity_reset_interval = 3000;
    bool splitting_enabled = false;
    bool multiview_trim_enabled = false;
    int iterations = 7000;
    int sh_degree = 0;
    double lr_position = 1.6e-4;  // scaled by scene extent when training
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_color = 2.5e-3;
    int prune_interval = 100;
    double prune_opacity = 0.005;
    double densify_grad_threshold = 2e-4;
    int patch_size = 14;

    void validate() const {
        if (lambda_dssim < 0 || lambda_dssim > 1) throw ValueRange("config: lambda_dssim must be in [0,1]");
        if (w_depth < 0 || w_normal < 0 || w_scale < 0 || w_pseudo < 0)
            throw ValueRange("config: loss weights must be nonnegative");
        if (conf_threshold < 0 || conf_threshold > 1)
            throw ValueRange("config: conf_threshold must be in [0,1]");
        if (iterations < 0) throw ValueRange("config: iterations must be nonnegative");
        if (sh_degree < 0 || sh_degree > 3) throw ValueRange("config: sh_degree must be 0..3");
    }
};

inline constexpr double kDepthNaN = std::numeric_limits<double>::quiet_NaN();

// Diagonal of the world-space bounding box; the canonical scene size used for
// scale clamps and position learning rates.
inline double scene_extent(const std::vector<Vec3>& points) {
    if (points.empty()) return 1.0;
    Vec3 lo = points.front(), hi = points.front();
    for (const Vec3& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double d = (hi - lo).norm();
    return d > 0 ? d : 1.0;
}

}  // namespace psplat
