#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wmx2/imaging.hpp"
#include "wmx2/model.hpp"
#include "wmx2/optim.hpp"
#include "wmx2/serialize.hpp"

// Desk-scale training: AdamW for the initial steps, SGD with momentum for the
// tail, Huber loss on the Y channel. Also hosts the finite-difference
// gradient-check harness (double precision).

namespace wmx2 {

struct TrainPlan {
    int64_t total_steps = 0;
    int64_t switch_step = 0;  // AdamW before, SGD from this step on
    int batch_size = 1;
    int patch_size = 64;  // LR pixels
    int scale = 2;
    double huber_delta = 1.0;
    uint64_t seed = 0;
};

inline void validate_plan(const TrainPlan& plan) {
    if (plan.total_steps < 0) throw ParamError("train plan: total_steps must be >= 0");
    if (plan.switch_step < 0 || plan.switch_step > plan.total_steps) {
        throw ParamError("train plan: switch_step must be in [0, total_steps]");
    }
    if (plan.batch_size < 1) throw ParamError("train plan: batch_size must be >= 1");
    if (plan.patch_size < 1) throw ParamError("train plan: patch_size must be >= 1");
    if (plan.scale < 1) throw ParamError("train plan: scale must be >= 1");
    if (!(plan.huber_delta > 0.0)) throw ParamError("train plan: huber delta must be > 0");
}

// Uniformly random scale-aligned crops from one HR image; the LR patch is the
// bicubic degradation of the HR patch. No augmentation.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> sample_patches(const TensorT<T>& hr_image, const TrainPlan& plan,
                                                 Rng& rng) {
    const int hr_patch = plan.patch_size * plan.scale;
    if (hr_image.h() < hr_patch || hr_image.w() < hr_patch) {
        throw ParamError("sample_patches: image " + hr_image.shape().str() +
                         " smaller than HR patch " + std::to_string(hr_patch));
    }
    if (hr_image.n() != 1) throw ShapeError("sample_patches: expected a single image (n=1)");
    const int ny = (hr_image.h() - hr_patch) / plan.scale + 1;
    const int nx = (hr_image.w() - hr_patch) / plan.scale + 1;
    TensorT<T> hr_batch(plan.batch_size, hr_image.c(), hr_patch, hr_patch);
    for (int b = 0; b < plan.batch_size; ++b) {
        const int oy = plan.scale * static_cast<int>(rng.integer(static_cast<uint64_t>(ny)));
        const int ox = plan.scale * static_cast<int>(rng.integer(static_cast<uint64_t>(nx)));
        for (int ic = 0; ic < hr_image.c(); ++ic) {
            for (int iy = 0; iy < hr_patch; ++iy) {
                std::copy_n(hr_image.row(0, ic, oy + iy) + ox, hr_patch, hr_batch.row(b, ic, iy));
            }
        }
    }
    TensorT<T> lr_batch = degrade_bicubic(hr_batch, plan.scale);
    return {std::move(lr_batch), std::move(hr_batch)};
}

// Runs the full loop on a dataset of HR RGB images in [0,1]. Returns the
// per-step loss trace. Throws NumericError with the step index on divergence.
std::vector<double> train(Model& model, const std::vector<Tensor>& dataset, const TrainPlan& plan);

// CSV: header `step,loss`, one row per step.
void write_loss_csv(const std::vector<double>& trace, const std::string& path);

// ---- gradient checking -----------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    bool all_pass() const {
        for (const auto& e : entries) {
            if (!e.pass) return false;
        }
        return true;
    }
};

// Central finite differences (step 1e-4) against the recorded-tape gradients,
// in double precision. Covers every differentiable op.
GradCheckReport grad_check_ops(uint64_t seed = 1234);

// End-to-end check through a tiny 2x model (C=8, L=1): Huber loss gradients
// for `samples` randomly chosen parameters.
GradCheckReport grad_check_model(uint64_t seed = 99, int samples = 20);

}  // namespace wmx2
