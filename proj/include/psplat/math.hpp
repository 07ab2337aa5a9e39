#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace psplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Rotation matrix from a quaternion stored (w, x, y, z). The quaternion is
// normalized here, so callers may pass unnormalized values; gradients must
// then flow through the normalization (see quat_rotation_backward).
inline Mat3 quat_to_rotation(const Vec4& q_raw) {
    const Vec4 q = q_raw / q_raw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// dR/dq for a *unit* quaternion (w,x,y,z), one 3x3 matrix per component.
inline std::array<Mat3, 4> quat_rotation_derivatives(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (auto& m : d) m *= 2.0;
    return d;
}

// Pull a gradient w.r.t. R(q/|q|) back to the raw stored quaternion.
inline Vec4 quat_rotation_backward(const Vec4& q_raw, const Mat3& grad_r) {
    const double norm = q_raw.norm();
    const Vec4 q = q_raw / norm;
    const auto d = quat_rotation_derivatives(q);
    Vec4 grad_unit;
    for (int i = 0; i < 4; ++i) grad_unit[i] = d[i].cwiseProduct(grad_r).sum();
    // Jacobian of q_raw -> q_raw/|q_raw|.
    return (grad_unit - q * q.dot(grad_unit)) / norm;
}

inline Vec4 rotation_to_quat(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0) out = -out;  // canonical hemisphere
    return out;
}

inline Vec4 quat_slerp(const Vec4& a_in, const Vec4& b_in, double t) {
    Vec4 a = a_in / a_in.norm();
    Vec4 b = b_in / b_in.norm();
    double dot = a.dot(b);
    if (dot < 0) {  // shortest path
        b = -b;
        dot = -dot;
    }
    if (dot > 1.0 - 1e-12) {
        Vec4 out = a + t * (b - a);
        return out / out.norm();
    }
    const double theta = std::acos(std::clamp(dot, -1.0, 1.0));
    const double sin_theta = std::sin(theta);
    return (std::sin((1 - t) * theta) / sin_theta) * a + (std::sin(t * theta) / sin_theta) * b;
}

// Real spherical harmonics up to degree 3, coefficient order and constants as
// used by the splatting lineage. Fills (degree+1)^2 basis values.
namespace sh {

inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                  -1.0925484305920792, 0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                                  0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                  -0.5900435899266435};

inline int coeff_count(int degree) { return (degree + 1) * (degree + 1); }

inline void basis(int degree, const Vec3& dir, double* out) {
    const double x = dir[0], y = dir[1], z = dir[2];
    out[0] = kC0;
    if (degree < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = kC2[0] * x * y;
    out[5] = kC2[1] * y * z;
    out[6] = kC2[2] * (2 * zz - xx - yy);
    out[7] = kC2[3] * x * z;
    out[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kC3[0] * y * (3 * xx - yy);
    out[10] = kC3[1] * x * y * z;
    out[11] = kC3[2] * y * (4 * zz - xx - yy);
    out[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
    out[13] = kC3[4] * x * (4 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = kC3[6] * x * (xx - 3 * yy);
}

// d basis_m / d dir, for the gradient of view-dependent color w.r.t. the
// (unnormalized chain handled by the caller) view direction.
inline void basis_gradient(int degree, const Vec3& dir, Vec3* out) {
    const double x = dir[0], y = dir[1], z = dir[2];
    out[0] = Vec3::Zero();
    if (degree < 1) return;
    out[1] = Vec3(0, -kC1, 0);
    out[2] = Vec3(0, 0, kC1);
    out[3] = Vec3(-kC1, 0, 0);
    if (degree < 2) return;
    out[4] = kC2[0] * Vec3(y, x, 0);
    out[5] = kC2[1] * Vec3(0, z, y);
    out[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
    out[7] = kC2[3] * Vec3(z, 0, x);
    out[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
    if (degree < 3) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
    out[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    out[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
    out[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
    out[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
    out[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
    out[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
}

}  // namespace sh

}  // namespace psplat
