// Command-line front end over the psplat library: scene initialization,
// rendering, depth warping, pseudo-camera generation, loss evaluation,
// gradient checking, training, and metric reports. Every subcommand exits 0
// on success and nonzero with a diagnostic on stderr otherwise; all file
// writers go through atomic temp-file renames.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "psplat/geometry.hpp"
#include "psplat/io.hpp"
#include "psplat/losses.hpp"
#include "psplat/metrics.hpp"
#include "psplat/optim.hpp"
#include "psplat/raster.hpp"

namespace {

using namespace psplat;

// A camera reference is "file.json" (single-camera file) or "file.json#i".
Camera load_camera_ref(const std::string& ref) {
    const size_t hash = ref.rfind('#');
    if (hash == std::string::npos) {
        const std::vector<Camera> cams = io::load_cameras(ref);
        if (cams.size() != 1)
            throw ValueRange("camera ref '" + ref + "': file holds " +
                             std::to_string(cams.size()) + " cameras, use path#index");
        return cams[0];
    }
    const std::string path = ref.substr(0, hash);
    size_t pos = 0;
    int index = -1;
    try {
        index = std::stoi(ref.substr(hash + 1), &pos);
    } catch (const std::exception&) {
        throw ValueRange("camera ref '" + ref + "': index is not a number");
    }
    if (pos != ref.size() - hash - 1 || index < 0)
        throw ValueRange("camera ref '" + ref + "': index is not a nonnegative number");
    const std::vector<Camera> cams = io::load_cameras(path);
    if (static_cast<size_t>(index) >= cams.size())
        throw ValueRange("camera ref '" + ref + "': index out of range (file holds " +
                         std::to_string(cams.size()) + " cameras)");
    return cams[static_cast<size_t>(index)];
}

std::string resolve(const std::string& manifest_path, const std::string& rel) {
    return (std::filesystem::path(manifest_path).parent_path() / rel).string();
}

DepthMap depth_from_pfm(const std::string& path, DepthSemantics sem) {
    const PixelGrid<double> grid = io::load_pfm(path);
    DepthMap out(grid.width, grid.height, sem);
    out.values = grid.values;
    return out;
}

ConfidenceMap confidence_from_pfm(const std::string& path) {
    const PixelGrid<double> grid = io::load_pfm(path);
    ConfidenceMap out(grid.width, grid.height);
    out.values = grid.values;
    return out;
}

NormalMap normals_from_pfm3(const std::string& path) {
    const PixelGrid<Vec3> grid = io::load_pfm3(path);
    NormalMap out(grid.width, grid.height, true);
    out.values = grid.values;
    return out;
}

// Views manifest: {"cameras": "cams.json", "views": [{"camera": 0,
// "image": "v.ppm", "depth": ..., "confidence": ..., "normal": ...,
// "normal_mask": ..., "name": ...}]}. Paths resolve relative to the manifest.
std::vector<optim::TrainView> load_view_manifest(const std::string& path) {
    const io::json j = io::load_json(path);
    if (!j.is_object() || !j.contains("cameras") || !j.contains("views"))
        throw SchemaError("views manifest: need 'cameras' and 'views' fields");
    const std::vector<Camera> cams =
        io::load_cameras(resolve(path, j.at("cameras").get<std::string>()));
    std::vector<optim::TrainView> views;
    try {
        for (const auto& entry : j.at("views")) {
            optim::TrainView v;
            const size_t ci = entry.at("camera").get<size_t>();
            if (ci >= cams.size()) throw ValueRange("views manifest: camera index out of range");
            v.cam = cams[ci];
            v.image = io::load_ppm(resolve(path, entry.at("image").get<std::string>()));
            if (entry.contains("depth")) {
                v.depth = depth_from_pfm(resolve(path, entry.at("depth").get<std::string>()),
                                         DepthSemantics::kAccumulatedZ);
                v.confidence =
                    entry.contains("confidence")
                        ? confidence_from_pfm(
                              resolve(path, entry.at("confidence").get<std::string>()))
                        : ConfidenceMap(v.depth.width, v.depth.height, 1.0);
            }
            if (entry.contains("normal")) {
                v.normal_target =
                    normals_from_pfm3(resolve(path, entry.at("normal").get<std::string>()));
                v.normal_mask =
                    entry.contains("normal_mask")
                        ? io::load_pgm_mask(
                              resolve(path, entry.at("normal_mask").get<std::string>()))
                        : PixelMask(v.normal_target.width, v.normal_target.height, true);
            }
            v.name = entry.contains("name") ? entry.at("name").get<std::string>()
                                            : "view_" + std::to_string(views.size());
            views.push_back(std::move(v));
        }
    } catch (const io::json::exception& e) {
        throw SchemaError(std::string("views manifest: ") + e.what());
    }
    return views;
}

// Pseudo-view manifest: same shape with "image" and optional "mask" entries.
std::vector<optim::PseudoView> load_pseudo_manifest(const std::string& path) {
    const io::json j = io::load_json(path);
    if (!j.is_object() || !j.contains("cameras") || !j.contains("views"))
        throw SchemaError("pseudo manifest: need 'cameras' and 'views' fields");
    const std::vector<Camera> cams =
        io::load_cameras(resolve(path, j.at("cameras").get<std::string>()));
    std::vector<optim::PseudoView> views;
    try {
        for (const auto& entry : j.at("views")) {
            optim::PseudoView v;
            const size_t ci = entry.at("camera").get<size_t>();
            if (ci >= cams.size()) throw ValueRange("pseudo manifest: camera index out of range");
            v.cam = cams[ci];
            v.image = io::load_ppm(resolve(path, entry.at("image").get<std::string>()));
            v.mask = entry.contains("mask")
                         ? io::load_pgm_mask(resolve(path, entry.at("mask").get<std::string>()))
                         : PixelMask(v.image.width, v.image.height, true);
            v.name = entry.contains("name") ? entry.at("name").get<std::string>()
                                            : "pseudo_" + std::to_string(views.size());
            views.push_back(std::move(v));
        }
    } catch (const io::json::exception& e) {
        throw SchemaError(std::string("pseudo manifest: ") + e.what());
    }
    return views;
}

void check_threads(int threads) {
    if (threads < 1) throw ValueRange("--threads must be >= 1");
}

// --- subcommand bodies -----------------------------------------------------

struct InitArgs {
    std::string points, cameras, out;
    double conf_threshold = 0.2;
    int sh_degree = 0;
};

void run_init(const InitArgs& a) {
    if (a.conf_threshold < 0.0 || a.conf_threshold > 1.0)
        throw ValueRange("--conf-threshold must be in [0,1]");
    const io::PointSet pts = io::load_point_ply(a.points);
    const std::vector<Camera> cams = io::load_cameras(a.cameras);
    const std::vector<size_t> kept = geometry::filter_indices(pts.confidences, a.conf_threshold);
    std::vector<Vec3> positions, colors;
    positions.reserve(kept.size());
    colors.reserve(kept.size());
    for (size_t i : kept) {
        positions.push_back(pts.positions[i]);
        colors.push_back(pts.colors[i]);
    }
    const GaussianCloud cloud = optim::init_from_points(positions, colors, cams, a.sh_degree);
    io::save_gaussian_ply(a.out, cloud);
    std::printf("init: kept %zu of %zu points -> %zu gaussians\n", kept.size(), pts.size(),
                cloud.size());
}

struct RenderArgs {
    std::string cloud, camera;
    std::string out_color, out_depth, out_depth_accum, out_normal, out_alpha;
    int threads = 1;
};

void run_render(const RenderArgs& a) {
    check_threads(a.threads);
    if (a.out_color.empty() && a.out_depth.empty() && a.out_depth_accum.empty() &&
        a.out_normal.empty() && a.out_alpha.empty())
        throw ValueRange("render: no output requested (pass at least one --out-* flag)");
    const GaussianCloud cloud = io::load_gaussian_ply(a.cloud);
    const Camera cam = load_camera_ref(a.camera);
    RenderOptions opts;
    opts.threads = a.threads;
    opts.record_contributors = false;
    const RenderOutput out = render(cloud, cam, opts);
    if (!a.out_color.empty()) io::save_ppm(a.out_color, out.color);
    if (!a.out_depth.empty()) io::save_pfm(a.out_depth, out.depth_plane);
    if (!a.out_depth_accum.empty()) io::save_pfm(a.out_depth_accum, out.depth_accum);
    if (!a.out_normal.empty()) io::save_pfm3(a.out_normal, out.normals);
    if (!a.out_alpha.empty()) io::save_pfm(a.out_alpha, out.alpha);
    std::printf("render: %zu gaussians -> %dx%d\n", cloud.size(), cam.width, cam.height);
}

struct WarpArgs {
    std::string image, depth, confidence, src_camera, dst_camera, out_image, out_mask;
    double conf_threshold = 0.2;
};

void run_warp(const WarpArgs& a) {
    const ImageBuffer img = io::load_ppm(a.image);
    const DepthMap depth = depth_from_pfm(a.depth, DepthSemantics::kAccumulatedZ);
    const ConfidenceMap conf = a.confidence.empty()
                                   ? ConfidenceMap(img.width, img.height, 1.0)
                                   : confidence_from_pfm(a.confidence);
    const Camera src = load_camera_ref(a.src_camera);
    const Camera dst = load_camera_ref(a.dst_camera);
    const geometry::WarpResult out = geometry::warp(img, depth, conf, src, dst, a.conf_threshold);
    io::save_ppm(a.out_image, out.image);
    if (!a.out_mask.empty()) io::save_pgm_mask(a.out_mask, out.mask);
    std::printf("warp: %zu of %zu destination pixels written\n", out.mask.count_true(),
                out.mask.size());
}

struct PseudoCamArgs {
    std::string cameras, out;
    int views_per_pair = 2;
};

void run_pseudo_cams(const PseudoCamArgs& a) {
    const std::vector<Camera> cams = io::load_cameras(a.cameras);
    const std::vector<Camera> pseudo = geometry::pseudo_cameras(cams, a.views_per_pair);
    io::save_cameras(a.out, pseudo);
    std::printf("pseudo-cams: %zu cameras -> %zu pseudo cameras\n", cams.size(), pseudo.size());
}

struct MaskArgs {
    std::string out;
    int width = 0, height = 0, patch = 14;
};

void run_mask(const MaskArgs& a) {
    const PixelMask mask = geometry::patch_border_mask(a.width, a.height, a.patch);
    if (!a.out.empty()) io::save_pgm_mask(a.out, mask);
    std::printf("mask: %zu of %zu pixels masked\n", mask.size() - mask.count_true(), mask.size());
}

struct LossArgs {
    std::string pred, target, confidence, mask, cloud;
    std::string render_path, gt;
    double lambda = 0.2;
};

void run_loss_pearson(const LossArgs& a) {
    const DepthMap pred = depth_from_pfm(a.pred, DepthSemantics::kAccumulatedZ);
    const DepthMap target = depth_from_pfm(a.target, DepthSemantics::kAccumulatedZ);
    const ConfidenceMap conf = a.confidence.empty()
                                   ? ConfidenceMap(pred.width, pred.height, 1.0)
                                   : confidence_from_pfm(a.confidence);
    const losses::PearsonResult r = losses::pearson_depth_loss(pred, target, conf);
    std::printf("pearson %.17g%s\n", r.loss, r.degenerate ? " (degenerate)" : "");
}

void run_loss_photometric(const LossArgs& a) {
    const ImageBuffer render_img = io::load_ppm(a.render_path);
    const ImageBuffer gt = io::load_ppm(a.gt);
    std::optional<PixelMask> mask;
    if (!a.mask.empty()) mask = io::load_pgm_mask(a.mask);
    const losses::PhotometricResult r =
        losses::photometric_loss(render_img, gt, a.lambda, mask ? &*mask : nullptr);
    std::printf("photometric %.17g\n", r.loss);
    std::printf("l1 %.17g\n", r.l1);
    std::printf("ssim %.17g\n", r.ssim);
}

void run_loss_normal(const LossArgs& a) {
    const NormalMap pred = normals_from_pfm3(a.pred);
    const NormalMap target = normals_from_pfm3(a.target);
    const PixelMask mask = a.mask.empty() ? PixelMask(pred.width, pred.height, true)
                                          : io::load_pgm_mask(a.mask);
    const losses::NormalLossResult r = losses::normal_loss(pred, target, mask);
    std::printf("normal %.17g%s\n", r.loss, r.empty_mask ? " (empty mask)" : "");
}

void run_loss_scale(const LossArgs& a) {
    const GaussianCloud cloud = io::load_gaussian_ply(a.cloud);
    std::printf("scale %.17g\n", losses::scale_loss(cloud));
}

struct GradcheckArgs {
    std::string cloud, camera, gt, depth, confidence, normal, normal_mask;
    double lambda = 0.2, w_depth = 0.0, w_normal = 0.0, w_scale = 0.0;
    double h = 1e-5, tolerance = 1e-4;
    int threads = 1;
};

int run_gradcheck(const GradcheckArgs& a) {
    check_threads(a.threads);
    const GaussianCloud cloud = io::load_gaussian_ply(a.cloud);
    const Camera cam = load_camera_ref(a.camera);
    const ImageBuffer gt = io::load_ppm(a.gt);

    std::optional<DepthMap> depth;
    std::optional<ConfidenceMap> conf;
    if (!a.depth.empty()) {
        depth = depth_from_pfm(a.depth, DepthSemantics::kAccumulatedZ);
        conf = a.confidence.empty() ? ConfidenceMap(depth->width, depth->height, 1.0)
                                    : confidence_from_pfm(a.confidence);
    }
    std::optional<NormalMap> normal;
    std::optional<PixelMask> nmask;
    if (!a.normal.empty()) {
        normal = normals_from_pfm3(a.normal);
        nmask = a.normal_mask.empty() ? PixelMask(normal->width, normal->height, true)
                                      : io::load_pgm_mask(a.normal_mask);
    }

    optim::GradCheckLoss loss;
    loss.gt = &gt;
    loss.lambda = a.lambda;
    if (depth) {
        loss.depth_target = &*depth;
        loss.confidence = &*conf;
        loss.w_depth = a.w_depth;
    }
    if (normal) {
        loss.normal_target = &*normal;
        loss.normal_mask = &*nmask;
        loss.w_normal = a.w_normal;
    }
    loss.w_scale = a.w_scale;

    optim::GradCheckOptions opts;
    opts.h = a.h;
    opts.tolerance = a.tolerance;
    opts.threads = a.threads;
    const optim::GradCheckReport report = optim::gradcheck(cloud, cam, loss, opts);
    std::printf("%-10s %-14s %s\n", "group", "max_rel_err", "status");
    for (const auto& g : report.groups)
        std::printf("%-10s %-14.3e %s\n", g.group.c_str(), g.max_rel_err,
                    g.pass ? "pass" : "FAIL");
    std::printf("overall %s\n", report.pass ? "pass" : "FAIL");
    return report.pass ? 0 : 1;
}

struct TrainArgs {
    std::string cloud, views, pseudo, config, out;
    uint64_t seed = 0;
    int threads = 1;
    bool seed_given = false;
    // optional overrides (applied only when the flag is present)
    std::optional<int> iterations;
    std::optional<double> w_depth, w_normal, w_scale, w_pseudo, lambda_dssim;
    std::optional<bool> splitting, opacity_reset;
};

void run_train(const TrainArgs& a) {
    check_threads(a.threads);
    TrainConfig cfg;
    if (!a.config.empty()) cfg = optim::config_from_json(io::load_json(a.config));
    if (a.iterations) cfg.iterations = *a.iterations;
    if (a.w_depth) cfg.w_depth = *a.w_depth;
    if (a.w_normal) cfg.w_normal = *a.w_normal;
    if (a.w_scale) cfg.w_scale = *a.w_scale;
    if (a.w_pseudo) cfg.w_pseudo = *a.w_pseudo;
    if (a.lambda_dssim) cfg.lambda_dssim = *a.lambda_dssim;
    if (a.splitting) cfg.splitting_enabled = *a.splitting;
    if (a.opacity_reset) cfg.opacity_reset_enabled = *a.opacity_reset;
    cfg.validate();

    const std::vector<optim::TrainView> views = load_view_manifest(a.views);
    std::vector<optim::PseudoView> pseudo;
    if (!a.pseudo.empty()) pseudo = load_pseudo_manifest(a.pseudo);

    // A checkpoint sidecar resumes iteration and seed; an explicit --seed wins.
    optim::TrainState state = optim::load_checkpoint(a.cloud);
    if (a.seed_given && state.seed != a.seed) {
        state.seed = a.seed;
        state.rng.seed(a.seed);
    }
    optim::train(state, views, pseudo, cfg, a.threads);
    optim::save_checkpoint(a.out, state, cfg);
    std::printf("train: %ld iterations, %zu gaussians, final loss %.6g\n", state.iteration,
                state.cloud.size(),
                state.loss_history.empty() ? 0.0 : state.loss_history.back());
}

struct EvalArgs {
    std::string cloud, views, out, traj_est, traj_gt;
    int threads = 1;
};

void run_eval(const EvalArgs& a) {
    check_threads(a.threads);
    const GaussianCloud cloud = io::load_gaussian_ply(a.cloud);
    const std::vector<optim::TrainView> views = load_view_manifest(a.views);
    RenderOptions opts;
    opts.threads = a.threads;
    opts.record_contributors = false;

    std::vector<ImageBuffer> renders, gts;
    std::vector<std::string> names;
    for (const auto& v : views) {
        renders.push_back(render(cloud, v.cam, opts).color);
        gts.push_back(v.image);
        names.push_back(v.name);
    }
    std::vector<Vec3> est, gt_traj;
    if (!a.traj_est.empty() || !a.traj_gt.empty()) {
        if (a.traj_est.empty() || a.traj_gt.empty())
            throw ValueRange("eval: --traj-est and --traj-gt must be given together");
        for (const Camera& c : io::load_cameras(a.traj_est)) est.push_back(c.center);
        for (const Camera& c : io::load_cameras(a.traj_gt)) gt_traj.push_back(c.center);
    }
    const metrics::EvalReport report = metrics::eval_report(renders, gts, est, gt_traj, names);
    if (!a.out.empty()) io::save_json(a.out, report.to_json());
    std::fputs(report.to_text().c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"planar gaussian splatting toolkit"};
    app.require_subcommand(1);

    InitArgs init_args;
    CLI::App* init = app.add_subcommand("init", "initialize a Gaussian cloud from a point cloud");
    init->add_option("--points", init_args.points, "input point PLY")->required();
    init->add_option("--cameras", init_args.cameras, "camera JSON")->required();
    init->add_option("--conf-threshold", init_args.conf_threshold,
                     "drop points with confidence below this");
    init->add_option("--sh-degree", init_args.sh_degree, "spherical harmonics degree");
    init->add_option("--out", init_args.out, "output Gaussian PLY")->required();

    RenderArgs render_args;
    CLI::App* rend = app.add_subcommand("render", "render a Gaussian cloud from a camera");
    rend->add_option("--cloud", render_args.cloud, "Gaussian PLY")->required();
    rend->add_option("--camera", render_args.camera, "camera JSON ref (path or path#index)")
        ->required();
    rend->add_option("--out-color", render_args.out_color, "color PPM");
    rend->add_option("--out-depth", render_args.out_depth, "plane-distance depth PFM");
    rend->add_option("--out-depth-accum", render_args.out_depth_accum,
                     "accumulated view-z depth PFM");
    rend->add_option("--out-normal", render_args.out_normal, "camera-space normal PFM");
    rend->add_option("--out-alpha", render_args.out_alpha, "accumulated alpha PFM");
    rend->add_option("--threads", render_args.threads, "renderer worker count");

    WarpArgs warp_args;
    CLI::App* warp = app.add_subcommand("warp", "forward-warp an image through its depth map");
    warp->add_option("--image", warp_args.image, "source PPM")->required();
    warp->add_option("--depth", warp_args.depth, "source depth PFM")->required();
    warp->add_option("--confidence", warp_args.confidence, "source confidence PFM");
    warp->add_option("--src-camera", warp_args.src_camera, "source camera ref")->required();
    warp->add_option("--dst-camera", warp_args.dst_camera, "destination camera ref")->required();
    warp->add_option("--conf-threshold", warp_args.conf_threshold, "minimum confidence to warp");
    warp->add_option("--out-image", warp_args.out_image, "warped PPM")->required();
    warp->add_option("--out-mask", warp_args.out_mask, "coverage mask PGM");

    PseudoCamArgs pc_args;
    CLI::App* pc = app.add_subcommand("pseudo-cams",
                                      "interpolate pseudo cameras between nearest view pairs");
    pc->add_option("--cameras", pc_args.cameras, "camera JSON")->required();
    pc->add_option("--views-per-pair", pc_args.views_per_pair, "pseudo views per camera pair");
    pc->add_option("--out", pc_args.out, "output camera JSON")->required();

    MaskArgs mask_args;
    CLI::App* mask = app.add_subcommand("mask", "patch-border exclusion mask");
    mask->add_option("--width", mask_args.width, "image width")->required();
    mask->add_option("--height", mask_args.height, "image height")->required();
    mask->add_option("--patch", mask_args.patch, "patch cell size");
    mask->add_option("--out", mask_args.out, "output PGM");

    LossArgs loss_args;
    CLI::App* loss = app.add_subcommand("loss", "evaluate a loss on stored buffers");
    loss->require_subcommand(1);
    CLI::App* lp = loss->add_subcommand("pearson", "confidence-weighted depth correlation loss");
    lp->add_option("--pred", loss_args.pred, "predicted depth PFM")->required();
    lp->add_option("--target", loss_args.target, "target depth PFM")->required();
    lp->add_option("--confidence", loss_args.confidence, "confidence PFM");
    CLI::App* lph = loss->add_subcommand("photometric", "L1 + D-SSIM image loss");
    lph->add_option("--render", loss_args.render_path, "rendered PPM")->required();
    lph->add_option("--gt", loss_args.gt, "ground-truth PPM")->required();
    lph->add_option("--lambda", loss_args.lambda, "D-SSIM mixing weight");
    lph->add_option("--mask", loss_args.mask, "pixel mask PGM");
    CLI::App* ln = loss->add_subcommand("normal", "masked normal L1 loss");
    ln->add_option("--pred", loss_args.pred, "predicted normal PFM")->required();
    ln->add_option("--target", loss_args.target, "target normal PFM")->required();
    ln->add_option("--mask", loss_args.mask, "pixel mask PGM");
    CLI::App* ls = loss->add_subcommand("scale", "mean minimal-axis scale regularizer");
    ls->add_option("--cloud", loss_args.cloud, "Gaussian PLY")->required();

    GradcheckArgs gc_args;
    CLI::App* gc = app.add_subcommand("gradcheck",
                                      "compare analytic gradients against finite differences");
    gc->add_option("--cloud", gc_args.cloud, "Gaussian PLY")->required();
    gc->add_option("--camera", gc_args.camera, "camera ref")->required();
    gc->add_option("--gt", gc_args.gt, "ground-truth PPM")->required();
    gc->add_option("--lambda", gc_args.lambda, "D-SSIM mixing weight");
    gc->add_option("--depth", gc_args.depth, "target depth PFM");
    gc->add_option("--confidence", gc_args.confidence, "depth confidence PFM");
    gc->add_option("--w-depth", gc_args.w_depth, "depth loss weight");
    gc->add_option("--normal", gc_args.normal, "target normal PFM");
    gc->add_option("--normal-mask", gc_args.normal_mask, "normal mask PGM");
    gc->add_option("--w-normal", gc_args.w_normal, "normal loss weight");
    gc->add_option("--w-scale", gc_args.w_scale, "scale regularizer weight");
    gc->add_option("--fd-step", gc_args.h, "finite-difference step");
    gc->add_option("--tolerance", gc_args.tolerance, "max allowed relative error");
    gc->add_option("--threads", gc_args.threads, "renderer worker count");

    TrainArgs train_args;
    std::optional<uint64_t> seed_opt;
    CLI::App* tr = app.add_subcommand("train", "optimize a Gaussian cloud against posed views");
    tr->add_option("--cloud", train_args.cloud, "initial Gaussian PLY (or checkpoint to resume)")
        ->required();
    tr->add_option("--views", train_args.views, "views manifest JSON")->required();
    tr->add_option("--pseudo", train_args.pseudo, "pseudo-views manifest JSON");
    tr->add_option("--config", train_args.config, "training config JSON");
    tr->add_option("--out", train_args.out, "output checkpoint PLY")->required();
    tr->add_option("--seed", seed_opt, "RNG seed (default 0, checkpoint seed when resuming)");
    tr->add_option("--threads", train_args.threads, "renderer worker count");
    std::optional<int> it_opt;
    std::optional<double> wd_opt, wn_opt, ws_opt, wp_opt, ld_opt;
    std::optional<bool> split_opt, reset_opt;
    tr->add_option("--iterations", it_opt, "override: total iterations");
    tr->add_option("--w-depth", wd_opt, "override: depth loss weight");
    tr->add_option("--w-normal", wn_opt, "override: normal loss weight");
    tr->add_option("--w-scale", ws_opt, "override: scale regularizer weight");
    tr->add_option("--w-pseudo", wp_opt, "override: pseudo-view loss weight");
    tr->add_option("--lambda-dssim", ld_opt, "override: D-SSIM mixing weight");
    tr->add_option("--splitting", split_opt, "override: enable gradient-driven splitting");
    tr->add_option("--opacity-reset", reset_opt, "override: enable periodic opacity reset");

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "render views and report image metrics");
    ev->add_option("--cloud", eval_args.cloud, "Gaussian PLY")->required();
    ev->add_option("--views", eval_args.views, "views manifest JSON with ground truth images")
        ->required();
    ev->add_option("--out", eval_args.out, "metrics report JSON");
    ev->add_option("--traj-est", eval_args.traj_est, "estimated trajectory camera JSON");
    ev->add_option("--traj-gt", eval_args.traj_gt, "ground-truth trajectory camera JSON");
    ev->add_option("--threads", eval_args.threads, "renderer worker count");

    try {
        app.parse(argc, argv);
        if (init->parsed()) run_init(init_args);
        if (rend->parsed()) run_render(render_args);
        if (warp->parsed()) run_warp(warp_args);
        if (pc->parsed()) run_pseudo_cams(pc_args);
        if (mask->parsed()) run_mask(mask_args);
        if (loss->parsed()) {
            if (lp->parsed()) run_loss_pearson(loss_args);
            if (lph->parsed()) run_loss_photometric(loss_args);
            if (ln->parsed()) run_loss_normal(loss_args);
            if (ls->parsed()) run_loss_scale(loss_args);
        }
        if (gc->parsed()) return run_gradcheck(gc_args);
        if (tr->parsed()) {
            train_args.iterations = it_opt;
            train_args.w_depth = wd_opt;
            train_args.w_normal = wn_opt;
            train_args.w_scale = ws_opt;
            train_args.w_pseudo = wp_opt;
            train_args.lambda_dssim = ld_opt;
            train_args.splitting = split_opt;
            train_args.opacity_reset = reset_opt;
            if (seed_opt) {
                train_args.seed = *seed_opt;
                train_args.seed_given = true;
            }
            run_train(train_args);
        }
        if (ev->parsed()) run_eval(eval_args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
