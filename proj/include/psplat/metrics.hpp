#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psplat/geometry.hpp"
#include "psplat/losses.hpp"

// Evaluation metrics for rendered views and camera trajectories: PSNR, SSIM,
// and an aggregated per-view report.
namespace psplat::metrics {

// Peak signal-to-noise ratio in dB over all pixels and channels, peak 1.0.
// Identical images return +infinity.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("psnr: image sizes differ");
    double sq_sum = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) sq_sum += (a.values[i] - b.values[i]).squaredNorm();
    const double mse = sq_sum / (3.0 * a.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// Mean SSIM over valid 11x11 windows; shares the photometric-loss kernel.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    return losses::ssim(a, b).value;
}

struct ViewMetrics {
    std::string name;
    double psnr_db = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<ViewMetrics> views;
    double mean_psnr_db = 0;
    double mean_ssim = 0;
    double ate_mean = 0;  // zero when no trajectory was supplied
    double ate_rmse = 0;

    // {views: [{name, psnr_db, ssim, lpips: null}], mean_psnr_db, mean_ssim,
    //  ate_mean, ate_rmse}; infinite PSNR serializes as null.
    nlohmann::json to_json() const {
        const auto db = [](double v) {
            return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
        };
        nlohmann::json j;
        j["views"] = nlohmann::json::array();
        for (const ViewMetrics& v : views)
            j["views"].push_back({{"name", v.name},
                                  {"psnr_db", db(v.psnr_db)},
                                  {"ssim", v.ssim},
                                  {"lpips", nullptr}});
        j["mean_psnr_db"] = db(mean_psnr_db);
        j["mean_ssim"] = mean_ssim;
        j["ate_mean"] = ate_mean;
        j["ate_rmse"] = ate_rmse;
        return j;
    }

    std::string to_text() const {
        size_t name_width = 4;  // "view" / "mean"
        for (const ViewMetrics& v : views) name_width = std::max(name_width, v.name.size());
        std::ostringstream os;
        os << std::left << std::setw(static_cast<int>(name_width)) << "view" << std::right
           << std::setw(10) << "psnr_db" << std::setw(9) << "ssim" << "\n";
        os << std::string(name_width + 19, '-') << "\n";
        os << std::fixed << std::setprecision(2);
        const auto row = [&](const std::string& name, double p, double s) {
            os << std::left << std::setw(static_cast<int>(name_width)) << name << std::right
               << std::setw(10);
            if (std::isfinite(p))
                os << p;
            else
                os << "inf";
            os << std::setw(9) << std::setprecision(4) << s << std::setprecision(2) << "\n";
        };
        for (const ViewMetrics& v : views) row(v.name, v.psnr_db, v.ssim);
        row("mean", mean_psnr_db, mean_ssim);
        os << std::setprecision(6) << "ate_mean " << ate_mean << "  ate_rmse " << ate_rmse << "\n";
        return os.str();
    }
};

// Per-view PSNR/SSIM plus trajectory alignment error. Trajectories may be
// empty (ATE reported as zero); when given, they are aligned by geometry::ate.
// View names default to view_<index>.
inline EvalReport eval_report(const std::vector<ImageBuffer>& renders,
                              const std::vector<ImageBuffer>& gts,
                              const std::vector<Vec3>& traj_est = {},
                              const std::vector<Vec3>& traj_gt = {},
                              const std::vector<std::string>& names = {}) {
    if (renders.size() != gts.size())
        throw LengthMismatch("eval_report: render and ground-truth counts differ");
    if (!names.empty() && names.size() != renders.size())
        throw LengthMismatch("eval_report: name count differs from view count");
    if (traj_est.size() != traj_gt.size())
        throw LengthMismatch("eval_report: trajectory lengths differ");
    if (renders.empty()) throw NoViews("eval_report: no views to evaluate");
    EvalReport report;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (size_t i = 0; i < renders.size(); ++i) {
        ViewMetrics vm;
        vm.name = names.empty() ? "view_" + std::to_string(i) : names[i];
        vm.psnr_db = psnr(renders[i], gts[i]);
        vm.ssim = ssim(renders[i], gts[i]);
        psnr_sum += vm.psnr_db;
        ssim_sum += vm.ssim;
        report.views.push_back(std::move(vm));
    }
    report.mean_psnr_db = psnr_sum / renders.size();
    report.mean_ssim = ssim_sum / renders.size();
    if (!traj_est.empty()) {
        const geometry::AteResult a = geometry::ate(traj_est, traj_gt);
        report.ate_mean = a.mean;
        report.ate_rmse = a.rmse;
    }
    return report;
}

}  // namespace psplat::metrics
