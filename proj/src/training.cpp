#include "wmx2/training.hpp"

#include <cmath>
#include <fstream>

namespace wmx2 {

std::vector<double> train(Model& model, const std::vector<Tensor>& dataset, const TrainPlan& plan) {
    validate_plan(plan);
    validate_config(model.config);
    if (dataset.empty()) throw ParamError("train: dataset is empty");
    if (model.config.scale() != plan.scale) {
        throw ParamError("train: plan scale " + std::to_string(plan.scale) +
                         " does not match model scale " + std::to_string(model.config.scale()));
    }
    if (model.config.stages != 1) {
        // Stage handoffs start with a resize of the previous stage's output,
        // and resize carries no gradient.
        throw UnsupportedOpError(
            "train: multi-stage models are not trainable end-to-end (no gradient through the "
            "inter-stage upsampling); train at scale 2");
    }
    const int hr_patch = plan.patch_size * plan.scale;
    for (const auto& img : dataset) {
        if (img.h() < hr_patch || img.w() < hr_patch) {
            throw ParamError("train: image " + img.shape().str() + " smaller than HR patch " +
                             std::to_string(hr_patch));
        }
    }

    std::vector<Tensor*> params;
    for_each_tensor(model, [&](const std::string&, Tensor& t, bool trainable, int) {
        if (trainable) params.push_back(&t);
    });
    AdamWState adamw;
    adamw.reset(params);
    SgdState sgd;
    sgd.reset(params);

    Rng rng(plan.seed);
    std::vector<double> trace;
    trace.reserve(static_cast<size_t>(plan.total_steps));

    for (int64_t step = 0; step < plan.total_steps; ++step) {
        const auto& hr_image = dataset[rng.integer(dataset.size())];
        auto [lr_rgb, hr_rgb] = sample_patches(hr_image, plan, rng);
        const Tensor lr_ycbcr = rgb_to_ycbcr(lr_rgb);
        const Tensor hr_y = slice_channels(rgb_to_ycbcr(hr_rgb), 0, 1);

        auto bound = BoundModel::bind(model, true);
        ForwardCtx ctx{true, &rng};
        auto out = model_forward_bound(bound, lr_ycbcr, ctx);
        Var<float> loss = huber_loss(out.y, hr_y, static_cast<float>(plan.huber_delta));
        const double loss_value = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(loss_value)) {
            throw NumericError("train: diverged at step " + std::to_string(step) +
                               " (loss is not finite)");
        }
        trace.push_back(loss_value);

        backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (const auto& leaf : bound.trainable_leaves()) grads.push_back(leaf.grad());

        if (step < plan.switch_step) {
            adamw.step(params, grads);
        } else {
            sgd.step(params, grads);
        }
    }
    return trace;
}

void write_loss_csv(const std::vector<double>& trace, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "step,loss\n";
    for (size_t i = 0; i < trace.size(); ++i) {
        f << i << "," << trace[i] << "\n";
    }
    if (!f) throw IoError("failed to write loss trace to " + path);
}

// ---- gradient checking -----------------------------------------------------

namespace {

using DTensor = TensorT<double>;
using DVar = Var<double>;

// Objective: sum of a fixed random weighting over the op output. The same
// forward closure is used for the analytic pass and every FD evaluation, so
// any internal randomness must be re-seeded inside it.
struct CheckCase {
    std::string name;
    double tolerance;
    std::vector<DTensor> inputs;
    std::function<DVar(const std::vector<DVar>&)> forward;
};

double objective(const CheckCase& c, const std::vector<DTensor>& inputs, const DTensor& weights) {
    std::vector<DVar> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(DVar::leaf(t, false));
    const DTensor out = c.forward(leaves).value();
    double acc = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(weights[i]) * out[i];
    return acc;
}

GradCheckEntry run_case(const CheckCase& c, Rng& rng, int max_coords) {
    constexpr double kStep = 1e-4;
    std::vector<DVar> leaves;
    leaves.reserve(c.inputs.size());
    for (const auto& t : c.inputs) leaves.push_back(DVar::leaf(t, true));
    DVar out = c.forward(leaves);
    DTensor weights = DTensor::random_uniform(out.value().n(), out.value().c(), out.value().h(),
                                              out.value().w(), rng);
    backward(out, weights);

    double max_rel = 0.0;
    std::vector<DTensor> work = c.inputs;
    for (size_t i = 0; i < work.size(); ++i) {
        const DTensor analytic = leaves[i].grad();
        const int64_t n = work[i].size();
        const int64_t coords = std::min<int64_t>(n, max_coords);
        for (int64_t k = 0; k < coords; ++k) {
            const int64_t j = coords == n ? k : static_cast<int64_t>(rng.integer(static_cast<uint64_t>(n)));
            const double saved = work[i][j];
            work[i][j] = saved + kStep;
            const double lp = objective(c, work, weights);
            work[i][j] = saved - kStep;
            const double lm = objective(c, work, weights);
            work[i][j] = saved;
            const double numeric = (lp - lm) / (2.0 * kStep);
            const double a = analytic[j];
            const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    }
    return {c.name, max_rel, c.tolerance, max_rel < c.tolerance};
}

}  // namespace

GradCheckReport grad_check_ops(uint64_t seed) {
    Rng rng(seed);
    auto rand_t = [&rng](int n, int c, int h, int w) {
        return DTensor::random_uniform(n, c, h, w, rng);
    };
    std::vector<CheckCase> cases;

    cases.push_back({"add", 1e-9, {rand_t(2, 3, 4, 5), rand_t(2, 3, 4, 5)},
                     [](const std::vector<DVar>& v) { return add(v[0], v[1]); }});
    cases.push_back({"concat_channels", 1e-9, {rand_t(1, 2, 3, 4), rand_t(1, 3, 3, 4), rand_t(1, 1, 3, 4)},
                     [](const std::vector<DVar>& v) { return concat_channels<double>({v[0], v[1], v[2]}); }});
    cases.push_back({"gelu", 1e-3, {rand_t(2, 2, 4, 4)},
                     [](const std::vector<DVar>& v) { return gelu(v[0]); }});
    cases.push_back({"conv2d_3x3", 1e-3, {rand_t(2, 3, 6, 7), rand_t(4, 3, 3, 3), rand_t(1, 4, 1, 1)},
                     [](const std::vector<DVar>& v) { return conv2d(v[0], v[1], v[2], 1, 1); }});
    cases.push_back({"conv2d_1x1", 1e-3, {rand_t(1, 8, 5, 5), rand_t(2, 8, 1, 1), rand_t(1, 2, 1, 1)},
                     [](const std::vector<DVar>& v) { return conv2d(v[0], v[1], v[2], 1, 0); }});
    cases.push_back({"conv2d_stride2", 1e-3, {rand_t(1, 2, 7, 7), rand_t(3, 2, 3, 3), rand_t(1, 3, 1, 1)},
                     [](const std::vector<DVar>& v) { return conv2d(v[0], v[1], v[2], 2, 1); }});
    cases.push_back({"batch_norm_train", 1e-3, {rand_t(2, 3, 4, 4), rand_t(1, 3, 1, 1), rand_t(1, 3, 1, 1)},
                     [](const std::vector<DVar>& v) {
                         // Fresh running stats per evaluation; they do not
                         // influence training-mode output.
                         DTensor rm(1, 3, 1, 1), rv = DTensor::full(1, 3, 1, 1, 1.0);
                         return batch_norm(v[0], v[1], v[2], rm, rv, 1e-5, 0.1, true);
                     }});
    cases.push_back({"batch_norm_eval", 1e-3, {rand_t(2, 3, 4, 4), rand_t(1, 3, 1, 1), rand_t(1, 3, 1, 1)},
                     [](const std::vector<DVar>& v) {
                         DTensor rm = DTensor::full(1, 3, 1, 1, 0.25);
                         DTensor rv = DTensor::full(1, 3, 1, 1, 0.5);
                         return batch_norm(v[0], v[1], v[2], rm, rv, 1e-5, 0.1, false);
                     }});
    cases.push_back({"dropout", 1e-3, {rand_t(2, 2, 6, 6)},
                     [](const std::vector<DVar>& v) {
                         Rng mask_rng(7);  // fixed mask across FD evaluations
                         return dropout(v[0], 0.3, true, mask_rng);
                     }});
    cases.push_back({"dwt2_haar", 1e-9, {rand_t(1, 3, 6, 8)},
                     [](const std::vector<DVar>& v) { return dwt2_haar(v[0]); }});
    cases.push_back({"idwt2_haar", 1e-9, {rand_t(1, 8, 3, 4)},
                     [](const std::vector<DVar>& v) { return idwt2_haar(v[0]); }});
    cases.push_back({"pixel_shuffle", 1e-9, {rand_t(1, 8, 3, 4)},
                     [](const std::vector<DVar>& v) { return pixel_shuffle(v[0], 2); }});
    cases.push_back({"pixel_unshuffle", 1e-9, {rand_t(1, 2, 6, 4)},
                     [](const std::vector<DVar>& v) { return pixel_unshuffle(v[0], 2); }});
    cases.push_back({"reflect_pad_to_even", 1e-9, {rand_t(1, 2, 5, 7)},
                     [](const std::vector<DVar>& v) { return reflect_pad_to_even(v[0]); }});
    cases.push_back({"crop_top_left", 1e-9, {rand_t(1, 2, 6, 6)},
                     [](const std::vector<DVar>& v) { return crop_top_left(v[0], 4, 5); }});
    cases.push_back({"huber_loss", 1e-3, {rand_t(1, 1, 6, 6)},
                     [target = rand_t(1, 1, 6, 6)](const std::vector<DVar>& v) {
                         return huber_loss(v[0], target, 0.25);
                     }});

    GradCheckReport report;
    for (const auto& c : cases) {
        report.entries.push_back(run_case(c, rng, 24));
    }
    return report;
}

GradCheckReport grad_check_model(uint64_t seed, int samples) {
    constexpr double kStep = 1e-4;
    constexpr double kTolerance = 1e-2;
    ModelConfig cfg;
    cfg.stages = 1;
    cfg.sr2x.depth = 1;
    cfg.sr2x.block.embed_dim = 8;
    cfg.sr2x.block.mlp_mult = 2.0f;
    cfg.sr2x.block.dropout_rate = 0.1f;

    Rng rng(seed);
    ModelT<double> model = init_model<double>(cfg, seed);
    const DTensor lr_ycbcr = DTensor::random_uniform(1, 3, 8, 8, rng, 0.0, 1.0);
    const DTensor target = DTensor::random_uniform(1, 1, 16, 16, rng, 0.0, 1.0);

    // Both passes run the training-mode forward on a scratch copy of the
    // model so BN running-stat updates never leak between evaluations, with
    // the dropout mask re-seeded identically each time.
    auto loss_of = [&](ModelT<double>& m, bool with_grad) {
        auto bound = BoundModelT<double>::bind(m, with_grad);
        Rng drop_rng(42);
        ForwardCtx ctx{true, &drop_rng};
        auto out = model_forward_bound(bound, lr_ycbcr, ctx);
        return std::make_pair(huber_loss(out.y, target, 1.0), std::move(bound));
    };

    ModelT<double> scratch = model;
    auto [loss, bound] = loss_of(scratch, true);
    backward(loss);
    std::vector<DTensor> analytic;
    for (const auto& leaf : bound.trainable_leaves()) analytic.push_back(leaf.grad());

    std::vector<DTensor*> params;
    for_each_tensor(model, [&](const std::string&, DTensor& t, bool trainable, int) {
        if (trainable) params.push_back(&t);
    });

    double max_rel = 0.0;
    for (int s = 0; s < samples; ++s) {
        const size_t pi = static_cast<size_t>(rng.integer(params.size()));
        const int64_t j = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(params[pi]->size())));
        const double saved = (*params[pi])[j];

        (*params[pi])[j] = saved + kStep;
        ModelT<double> mp = model;
        const double lp = loss_of(mp, false).first.value()[0];
        (*params[pi])[j] = saved - kStep;
        ModelT<double> mm = model;
        const double lm = loss_of(mm, false).first.value()[0];
        (*params[pi])[j] = saved;

        const double numeric = (lp - lm) / (2.0 * kStep);
        const double a = analytic[pi][j];
        const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        max_rel = std::max(max_rel, rel);
    }
    GradCheckReport report;
    report.entries.push_back({"model_end_to_end", max_rel, kTolerance, max_rel < kTolerance});
    return report;
}

}  // namespace wmx2
