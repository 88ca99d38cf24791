#include "wmx2/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "wmx2/bench.hpp"
#include "wmx2/imaging.hpp"
#include "wmx2/png_io.hpp"
#include "wmx2/serialize.hpp"
#include "wmx2/training.hpp"

namespace wmx2 {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

struct ConfigFlags {
    int channels = 144;
    int depth = 4;
    float mlp_mult = 2.0f;
    float dropout = 0.3f;
    int scale = 2;
    std::string upsample = "bicubic";

    ModelConfig to_config() const {
        if (scale != 2 && scale != 4) {
            throw ParamError("scale must be 2 or 4, got " + std::to_string(scale));
        }
        ModelConfig cfg;
        cfg.stages = scale == 2 ? 1 : 2;
        cfg.sr2x.depth = depth;
        cfg.sr2x.block.embed_dim = channels;
        cfg.sr2x.block.mlp_mult = mlp_mult;
        cfg.sr2x.block.dropout_rate = dropout;
        if (upsample == "bicubic") {
            cfg.sr2x.upsample_mode = ResizeMode::kBicubic;
        } else if (upsample == "bilinear") {
            cfg.sr2x.upsample_mode = ResizeMode::kBilinear;
        } else {
            throw ParamError("upsample must be bicubic or bilinear, got " + upsample);
        }
        validate_config(cfg);
        return cfg;
    }
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--channels", flags.channels, "Embedding dimension C (multiple of 4)");
    cmd->add_option("--depth", flags.depth, "Blocks per stage L");
    cmd->add_option("--mlp-mult", flags.mlp_mult, "MLP inverse-bottleneck multiplier (> 1)");
    cmd->add_option("--dropout", flags.dropout, "Dropout rate in [0, 1)");
    cmd->add_option("--upsample", flags.upsample, "Upsampling mode: bicubic | bilinear");
}

std::vector<fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .png files in " + dir);
    return files;
}

Tensor load_rgb_tensor(const std::string& path) {
    return image_to_tensor(promote_to_rgb(load_png(path)));
}

Tensor upscale_rgb(const Model& model, const Tensor& lr_rgb) {
    const Tensor out_ycbcr = model_forward(model, rgb_to_ycbcr(lr_rgb));
    return ycbcr_to_rgb(out_ycbcr);
}

Tensor y_plane(const Tensor& rgb) {
    return slice_channels(rgb_to_ycbcr(rgb), 0, 1);
}

// ---- upscale ---------------------------------------------------------------

struct UpscaleOpts {
    std::string input, weights, output;
};

int cmd_upscale(const UpscaleOpts& opt) {
    const Model model = load_weights(opt.weights);
    const Tensor lr = load_rgb_tensor(opt.input);
    const Tensor sr = upscale_rgb(model, lr);
    save_png(tensor_to_image(sr), opt.output);
    std::printf("upscaled %dx%d -> %dx%d (scale %d) -> %s\n", lr.w(), lr.h(), sr.w(), sr.h(),
                model.config.scale(), opt.output.c_str());
    return kExitOk;
}

// ---- degrade ---------------------------------------------------------------

struct DegradeOpts {
    std::string input, output;
    int scale = 2;
};

int cmd_degrade(const DegradeOpts& opt) {
    const ImageU8 img = load_png(opt.input);
    const Tensor hr = crop_to_multiple(image_to_tensor(img), opt.scale);
    const Tensor lr = degrade_bicubic(hr, opt.scale);
    save_png(tensor_to_image(lr), opt.output);
    std::printf("degraded %dx%d -> %dx%d (scale %d) -> %s\n", img.w, img.h, lr.w(), lr.h(),
                opt.scale, opt.output.c_str());
    return kExitOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalOpts {
    std::string hr_dir, lr_dir, weights, report;
    int crop = 0;
    bool baseline = false;
    int scale = 2;
};

int cmd_eval(const EvalOpts& opt) {
    std::optional<Model> model;
    int scale = opt.scale;
    if (!opt.baseline) {
        if (opt.weights.empty()) {
            throw ParamError("eval: --weights required unless --baseline is set");
        }
        model = load_weights(opt.weights);
        scale = model->config.scale();
    }

    EvalReport report;
    for (const auto& path : list_pngs(opt.hr_dir)) {
        try {
            Tensor hr = crop_to_multiple(load_rgb_tensor(path.string()), scale);
            Tensor lr;
            if (!opt.lr_dir.empty()) {
                const fs::path lr_path = fs::path(opt.lr_dir) / path.filename();
                lr = load_rgb_tensor(lr_path.string());
                // Align the HR reference with what the LR image can produce.
                hr = crop_top_left(hr, std::min(hr.h(), lr.h() * scale),
                                   std::min(hr.w(), lr.w() * scale));
            } else {
                lr = degrade_bicubic(hr, scale);
            }
            const Tensor sr = opt.baseline
                                  ? resize(lr, hr.h(), hr.w(), ResizeMode::kBicubic)
                                  : upscale_rgb(*model, lr);
            Tensor sr_y = y_plane(sr);
            Tensor hr_y = y_plane(hr);
            if (opt.crop > 0) {
                sr_y = crop_border(sr_y, opt.crop);
                hr_y = crop_border(hr_y, opt.crop);
            }
            EvalRecord rec;
            rec.image_id = path.stem().string();
            rec.psnr_db = psnr(sr_y, hr_y, 1.0);
            rec.ssim = ssim(sr_y, hr_y);
            report.records.push_back(std::move(rec));
        } catch (const IoError& e) {
            std::fprintf(stderr, "warning: skipping %s: %s\n", path.string().c_str(), e.what());
            ++report.skipped;
        }
    }
    if (report.records.empty()) throw IoError("eval: no image could be evaluated");
    if (!opt.report.empty()) write_eval_csv(report, opt.report);
    std::printf("evaluated %zu image(s)%s: mean PSNR %.4f dB, mean SSIM %.6f",
                report.records.size(), opt.baseline ? " [bicubic baseline]" : "",
                report.mean_psnr(), report.mean_ssim());
    if (report.skipped > 0) std::printf(", skipped %d", report.skipped);
    std::printf("\n");
    return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
    std::string data_dir, out, loss_csv;
    ConfigFlags config;
    int64_t steps = 500;
    int64_t switch_step = -1;  // default: 80% of steps
    int batch = 1;
    int patch = 64;
    uint64_t seed = 0;
};

int cmd_train(const TrainOpts& opt) {
    if (opt.config.scale != 2) {
        throw ParamError(
            "train: only scale 2 is trainable (the inter-stage upsampling of larger scales has no "
            "gradient)");
    }
    ModelConfig cfg = opt.config.to_config();
    TrainPlan plan;
    plan.total_steps = opt.steps;
    plan.switch_step = opt.switch_step >= 0 ? opt.switch_step : opt.steps * 8 / 10;
    plan.batch_size = opt.batch;
    plan.patch_size = opt.patch;
    plan.scale = opt.config.scale;
    plan.seed = opt.seed;
    validate_plan(plan);

    std::vector<Tensor> dataset;
    for (const auto& path : list_pngs(opt.data_dir)) {
        dataset.push_back(load_rgb_tensor(path.string()));
    }

    Model model = init_model<float>(cfg, opt.seed);
    const std::vector<double> trace = train(model, dataset, plan);
    save_weights(model, opt.out);
    if (!opt.loss_csv.empty()) write_loss_csv(trace, opt.loss_csv);

    std::printf("trained %" PRId64 " step(s) on %zu image(s), %" PRId64 " parameters\n",
                plan.total_steps, dataset.size(), param_count(model));
    if (!trace.empty()) {
        std::printf("loss: initial %.6f, final %.6f\n", trace.front(), trace.back());
    }
    std::printf("weights written to %s\n", opt.out.c_str());
    return kExitOk;
}

// ---- bench -----------------------------------------------------------------

struct BenchOpts {
    std::string weights, csv;
    ConfigFlags config;
    int size = 64;
    int iters = 10;
    int warmup = 2;
};

int cmd_bench(const BenchOpts& opt) {
    const Model model = opt.weights.empty() ? init_model<float>(opt.config.to_config(), 7)
                                            : load_weights(opt.weights);
    const BenchReport r = run_benchmark(model, opt.size, opt.iters, opt.warmup);
    std::printf("input            %dx%d (batch %d)\n", r.input_size, r.input_size, r.batch);
    std::printf("scale            %dx\n", model.config.scale());
    std::printf("iterations       %d (+%d warmup)\n", r.timed_iters, r.warmup_iters);
    std::printf("latency mean     %.3f ms\n", r.latency_ms_mean);
    std::printf("latency median   %.3f ms\n", r.latency_ms_median);
    std::printf("throughput       %.3f images/s\n", r.throughput_fps);

    char line[256];
    std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.6f,%.6f,%.6f", r.input_size, r.batch,
                  r.timed_iters, r.warmup_iters, r.latency_ms_mean, r.latency_ms_median,
                  r.throughput_fps);
    if (!opt.csv.empty()) {
        std::ofstream f(opt.csv);
        if (!f) throw IoError("cannot open for writing: " + opt.csv);
        f << "input_size,batch,timed_iters,warmup_iters,latency_ms_mean,latency_ms_median,"
             "throughput_fps\n"
          << line << "\n";
    } else {
        std::printf("csv: input_size,batch,timed_iters,warmup_iters,latency_ms_mean,"
                    "latency_ms_median,throughput_fps\ncsv: %s\n", line);
    }
    return kExitOk;
}

// ---- gradcheck -------------------------------------------------------------

int cmd_gradcheck() {
    GradCheckReport ops = grad_check_ops();
    GradCheckReport model = grad_check_model();
    for (const auto& r : model.entries) ops.entries.push_back(r);
    bool ok = true;
    for (const auto& e : ops.entries) {
        std::printf("%-22s max rel err %.3e (tol %.0e) %s\n", e.name.c_str(), e.max_rel_err,
                    e.tolerance, e.pass ? "ok" : "FAIL");
        ok = ok && e.pass;
    }
    if (!ok) {
        std::fprintf(stderr, "gradcheck: FAILED\n");
        return kExitNumeric;
    }
    std::printf("gradcheck: all passed\n");
    return kExitOk;
}

// ---- inspect ---------------------------------------------------------------

struct InspectOpts {
    std::string weights;
    ConfigFlags config;
    int size = 64;
};

int cmd_inspect(const InspectOpts& opt) {
    const Model model = opt.weights.empty() ? init_model<float>(opt.config.to_config(), 0)
                                            : load_weights(opt.weights);
    const ModelConfig& cfg = model.config;
    std::printf("scale       %dx (%d stage(s))\n", cfg.scale(), cfg.stages);
    std::printf("embed dim   %d\n", cfg.sr2x.block.embed_dim);
    std::printf("depth       %d block(s) per stage\n", cfg.sr2x.depth);
    std::printf("mlp mult    %.3g\n", static_cast<double>(cfg.sr2x.block.mlp_mult));
    std::printf("dropout     %.3g\n", static_cast<double>(cfg.sr2x.block.dropout_rate));
    std::printf("upsample    %s\n",
                cfg.sr2x.upsample_mode == ResizeMode::kBicubic ? "bicubic" : "bilinear");
    std::printf("\n%-28s %-18s %s\n", "tensor", "shape", "elements");
    for_each_tensor(model, [](const std::string& name, const Tensor& t, bool trainable, int rank) {
        std::string shape = rank == 1 ? "(" + std::to_string(t.size()) + ")" : t.shape().str();
        std::printf("%-28s %-18s %" PRId64 "%s\n", name.c_str(), shape.c_str(), t.size(),
                    trainable ? "" : "  (stat)");
    });
    const int64_t params = param_count(model);
    const double madds = madd_estimate(cfg, opt.size, opt.size);
    std::printf("\ntotal parameters  %" PRId64 " (%.3f M)", params, params / 1e6);
    // The published budget is for the 4x composition.
    if (cfg.scale() == 4 && (params < 400'000 || params > 1'000'000)) {
        std::printf("  ** outside the 0.4M-1.0M reference budget **");
    }
    std::printf("\nmultiply-adds     %.2f G for a %dx%d input (mult and add counted separately)\n",
                madds / 1e9, opt.size, opt.size);
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"WaveMixSR-V2 super-resolution engine"};
    app.require_subcommand(1);
    app.footer("Environment: WMX2_THREADS caps internal parallelism (0 = auto).");

    UpscaleOpts up;
    auto* up_cmd = app.add_subcommand("upscale", "Upscale a PNG with trained weights");
    up_cmd->add_option("--input", up.input, "Input PNG")->required();
    up_cmd->add_option("--weights", up.weights, "Weight file")->required();
    up_cmd->add_option("--output", up.output, "Output PNG")->required();

    DegradeOpts deg;
    auto* deg_cmd = app.add_subcommand("degrade", "Bicubic-downsample a PNG (LR generation)");
    deg_cmd->add_option("--input", deg.input, "Input PNG")->required();
    deg_cmd->add_option("--scale", deg.scale, "Downsampling factor (2 or 4)")
        ->check(CLI::IsMember({2, 4}));
    deg_cmd->add_option("--output", deg.output, "Output PNG")->required();

    EvalOpts ev;
    auto* ev_cmd = app.add_subcommand("eval", "PSNR/SSIM over a directory of HR images");
    ev_cmd->add_option("--hr-dir", ev.hr_dir, "Directory of HR PNGs")->required();
    ev_cmd->add_option("--lr-dir", ev.lr_dir, "Optional directory of matching LR PNGs");
    ev_cmd->add_option("--weights", ev.weights, "Weight file");
    ev_cmd->add_option("--crop-border", ev.crop, "Crop N pixels per side before metrics");
    ev_cmd->add_flag("--baseline", ev.baseline, "Evaluate bicubic upsampling instead of a model");
    ev_cmd->add_option("--scale", ev.scale, "Scale for --baseline runs (2 or 4)")
        ->check(CLI::IsMember({2, 4}));
    ev_cmd->add_option("--report", ev.report, "Write per-image CSV here");

    TrainOpts tr;
    auto* tr_cmd = app.add_subcommand("train", "Train on a directory of HR images");
    tr_cmd->add_option("--data-dir", tr.data_dir, "Directory of HR PNGs")->required();
    tr_cmd->add_option("--scale", tr.config.scale, "SR scale (training supports 2)");
    tr_cmd->add_option("--steps", tr.steps, "Total optimization steps");
    tr_cmd->add_option("--switch-step", tr.switch_step, "Step to switch AdamW -> SGD (default 80%)");
    tr_cmd->add_option("--batch", tr.batch, "Patches per step");
    tr_cmd->add_option("--patch", tr.patch, "LR patch size in pixels");
    tr_cmd->add_option("--seed", tr.seed, "RNG seed");
    tr_cmd->add_option("--out", tr.out, "Output weight file")->required();
    tr_cmd->add_option("--loss-csv", tr.loss_csv, "Write the loss trace here");
    add_config_flags(tr_cmd, tr.config);

    BenchOpts be;
    auto* be_cmd = app.add_subcommand("bench", "Measure inference latency and throughput");
    be_cmd->add_option("--weights", be.weights, "Weight file (otherwise built from config flags)");
    be_cmd->add_option("--size", be.size, "Square input size in pixels");
    be_cmd->add_option("--iters", be.iters, "Timed iterations");
    be_cmd->add_option("--warmup", be.warmup, "Warmup iterations");
    be_cmd->add_option("--scale", be.config.scale, "SR scale when built from config (2 or 4)");
    be_cmd->add_option("--csv", be.csv, "Write the report CSV here");
    add_config_flags(be_cmd, be.config);

    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");

    InspectOpts in;
    auto* in_cmd = app.add_subcommand("inspect", "Print config, layer shapes and compute budget");
    in_cmd->add_option("--weights", in.weights, "Weight file (otherwise built from config flags)");
    in_cmd->add_option("--scale", in.config.scale, "SR scale when built from config (2 or 4)");
    in_cmd->add_option("--size", in.size, "Input size for the multiply-add estimate");
    add_config_flags(in_cmd, in.config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (up_cmd->parsed()) return cmd_upscale(up);
        if (deg_cmd->parsed()) return cmd_degrade(deg);
        if (ev_cmd->parsed()) return cmd_eval(ev);
        if (tr_cmd->parsed()) return cmd_train(tr);
        if (be_cmd->parsed()) return cmd_bench(be);
        if (gc_cmd->parsed()) return cmd_gradcheck();
        if (in_cmd->parsed()) return cmd_inspect(in);
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFormat;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {  // ShapeError, ParamError
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
    return kExitUsage;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.emplace_back("wmx2");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& s : full) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace wmx2
