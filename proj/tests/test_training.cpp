#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "wmx2/training.hpp"

using namespace wmx2;

namespace {

Tensor scalar_param(float v) { return Tensor::full(1, 1, 1, 1, v); }

// Procedural test image: smooth multi-frequency field in [0,1].
Tensor synthetic_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
    Tensor img(1, 3, h, w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double v = 0.5 + 0.22 * std::sin(0.19 * x + p1 + 1.7 * c) *
                                           std::cos(0.23 * y + p2) +
                                 0.18 * std::sin(0.55 * (x + y) + 0.9 * c) +
                                 0.05 * std::sin(1.9 * x) * std::sin(2.3 * y);
                img.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return img;
}

ModelConfig overfit_config() {
    ModelConfig cfg;
    cfg.stages = 1;
    cfg.sr2x.depth = 1;
    cfg.sr2x.block.embed_dim = 16;
    cfg.sr2x.block.mlp_mult = 2.0f;
    cfg.sr2x.block.dropout_rate = 0.0f;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("adamw zero-gradient step is pure decay") {
    AdamWState opt;
    Tensor theta = scalar_param(2.0f);
    opt.reset({&theta});
    opt.step({&theta}, {scalar_param(0.0f)});
    CHECK(theta[0] == doctest::Approx(2.0 * (1.0 - 1e-5)).epsilon(1e-6));
    CHECK(opt.m[0][0] == 0.0f);
    CHECK(opt.v[0][0] == 0.0f);
}

TEST_CASE("adamw first step follows the sign of the gradient") {
    AdamWState opt;
    opt.weight_decay = 0.0f;
    Tensor theta = scalar_param(0.0f);
    opt.reset({&theta});
    opt.step({&theta}, {scalar_param(0.5f)});
    // mhat = g, vhat = g^2 -> update ~ -lr * sign(g) for |g| >> eps.
    CHECK(theta[0] == doctest::Approx(-0.001).epsilon(1e-4));
}

TEST_CASE("adamw three-step trace matches a hand computation") {
    const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
    const double grads[3] = {0.4, -0.2, 0.1};
    double theta_ref = 1.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        theta_ref -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta_ref);
    }

    AdamWState opt;
    Tensor theta = scalar_param(1.5f);
    opt.reset({&theta});
    for (double g : grads) opt.step({&theta}, {scalar_param(static_cast<float>(g))});
    CHECK(std::abs(static_cast<double>(theta[0]) - (theta_ref)) < 1e-7);
}

TEST_CASE("sgd momentum") {
    SUBCASE("mu = 0 is plain gradient descent") {
        SgdState opt;
        opt.momentum = 0.0f;
        Tensor theta = scalar_param(1.0f);
        opt.reset({&theta});
        opt.step({&theta}, {scalar_param(0.5f)});
        CHECK(theta[0] == doctest::Approx(1.0 - 0.001 * 0.5).epsilon(1e-6));
    }
    SUBCASE("velocity decays geometrically with zero gradients") {
        SgdState opt;
        Tensor theta = scalar_param(0.0f);
        opt.reset({&theta});
        opt.step({&theta}, {scalar_param(1.0f)});
        const float v1 = opt.velocity[0][0];
        opt.step({&theta}, {scalar_param(0.0f)});
        opt.step({&theta}, {scalar_param(0.0f)});
        CHECK(opt.velocity[0][0] == doctest::Approx(v1 * 0.9f * 0.9f).epsilon(1e-6));
    }
    SUBCASE("three-step trace matches a hand computation") {
        const double grads[3] = {0.4, -0.2, 0.1};
        double theta_ref = 1.5, v = 0.0;
        for (double g : grads) {
            v = 0.9 * v + g;
            theta_ref -= 0.001 * v;
        }
        SgdState opt;
        Tensor theta = scalar_param(1.5f);
        opt.reset({&theta});
        for (double g : grads) opt.step({&theta}, {scalar_param(static_cast<float>(g))});
        CHECK(std::abs(static_cast<double>(theta[0]) - (theta_ref)) < 1e-7);
    }
}

TEST_CASE("optimizers descend a quadratic bowl") {
    // loss = 0.5 * theta^2, gradient = theta.
    auto run = [](auto& opt) {
        Tensor theta = scalar_param(1.0f);
        opt.reset({&theta});
        double prev_loss = 0.5;
        for (int i = 0; i < 50; ++i) {
            opt.step({&theta}, {theta});
            const double loss = 0.5 * theta[0] * theta[0];
            CHECK(loss < prev_loss);
            prev_loss = loss;
        }
    };
    AdamWState adamw;
    adamw.weight_decay = 0.0f;
    run(adamw);
    SgdState sgd;
    sgd.momentum = 0.0f;
    run(sgd);
}

TEST_CASE("sample_patches") {
    TrainPlan plan;
    plan.batch_size = 4;
    plan.patch_size = 8;
    plan.scale = 2;

    SUBCASE("degenerate crop space returns the whole image every time") {
        Tensor img = synthetic_image(16, 16, 1);
        Rng rng(2);
        auto [lr, hr] = sample_patches(img, plan, rng);
        CHECK(hr.shape() == Shape{4, 3, 16, 16});
        CHECK(lr.shape() == Shape{4, 3, 8, 8});
        for (int b = 0; b < 4; ++b) {
            for (int c = 0; c < 3; ++c) {
                CHECK(hr.at(b, c, 3, 5) == img.at(0, c, 3, 5));
            }
        }
        CHECK(max_abs_diff(lr, degrade_bicubic(hr, 2)) == 0.0);
    }
    SUBCASE("fixed seed reproduces the batch") {
        Tensor img = synthetic_image(40, 40, 3);
        Rng r1(7), r2(7);
        auto [lr1, hr1] = sample_patches(img, plan, r1);
        auto [lr2, hr2] = sample_patches(img, plan, r2);
        CHECK(bit_equal(hr1, hr2));
        CHECK(bit_equal(lr1, lr2));
    }
    SUBCASE("offsets cover the valid range approximately uniformly") {
        // 8 possible aligned offsets per axis on a 30px image with 16px crops.
        // Channel 0 encodes the row index, channel 1 the column index, so the
        // crop origin can be read back from the first pixel.
        Tensor img(1, 3, 30, 30);
        for (int y = 0; y < 30; ++y) {
            for (int x = 0; x < 30; ++x) {
                img.at(0, 0, y, x) = static_cast<float>(y) / 30.0f;
                img.at(0, 1, y, x) = static_cast<float>(x) / 30.0f;
                img.at(0, 2, y, x) = 0.5f;
            }
        }
        TrainPlan p2 = plan;
        p2.batch_size = 1;
        Rng rng(8);
        std::vector<int> row_counts(8, 0), col_counts(8, 0);
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            auto [lr, hr] = sample_patches(img, p2, rng);
            const int oy = static_cast<int>(std::lround(hr.at(0, 0, 0, 0) * 30.0f)) / 2;
            const int ox = static_cast<int>(std::lround(hr.at(0, 1, 0, 0) * 30.0f)) / 2;
            REQUIRE(oy >= 0);
            REQUIRE(oy < 8);
            REQUIRE(ox >= 0);
            REQUIRE(ox < 8);
            ++row_counts[static_cast<size_t>(oy)];
            ++col_counts[static_cast<size_t>(ox)];
        }
        const double expected = draws / 8.0;
        for (const auto& counts : {row_counts, col_counts}) {
            double chi2 = 0.0;
            for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
            CHECK(chi2 < 30.0);  // 7 dof; anything near uniform is far below this
        }
    }
    SUBCASE("too-small image rejected") {
        Tensor img = synthetic_image(15, 20, 5);
        Rng rng(9);
        CHECK_THROWS_AS(sample_patches(img, plan, rng), ParamError);
    }
}

TEST_CASE("zero-step training leaves the model untouched") {
    Model model = init_model<float>(overfit_config(), 10);
    const Model before = model;
    TrainPlan plan;
    plan.total_steps = 0;
    plan.switch_step = 0;
    plan.patch_size = 8;
    plan.scale = 2;
    plan.seed = 1;
    std::vector<Tensor> data{synthetic_image(16, 16, 11)};
    const auto trace = train(model, data, plan);
    CHECK(trace.empty());
    bool equal = true;
    std::vector<const Tensor*> lhs, rhs;
    for_each_tensor(before, [&](const std::string&, const Tensor& t, bool, int) { lhs.push_back(&t); });
    for_each_tensor(model, [&](const std::string&, const Tensor& t, bool, int) { rhs.push_back(&t); });
    for (size_t i = 0; i < lhs.size(); ++i) equal = equal && bit_equal(*lhs[i], *rhs[i]);
    CHECK(equal);
}

TEST_CASE("multi-stage training is rejected") {
    ModelConfig cfg = overfit_config();
    cfg.stages = 2;
    Model model = init_model<float>(cfg, 12);
    TrainPlan plan;
    plan.total_steps = 1;
    plan.patch_size = 8;
    plan.scale = 4;
    std::vector<Tensor> data{synthetic_image(64, 64, 13)};
    CHECK_THROWS_AS(train(model, data, plan), UnsupportedOpError);
}

TEST_CASE("short overfit run halves the loss and is seed-deterministic") {
    std::vector<Tensor> data{synthetic_image(32, 32, 14)};
    TrainPlan plan;
    plan.total_steps = 60;
    plan.switch_step = 48;
    plan.batch_size = 1;
    plan.patch_size = 16;
    plan.scale = 2;
    plan.seed = 15;

    Model model = init_model<float>(overfit_config(), 15);
    const auto trace = train(model, data, plan);
    REQUIRE(trace.size() == 60);
    for (double v : trace) CHECK(std::isfinite(v));
    CHECK(trace.back() < 0.5 * trace.front());

    Model model2 = init_model<float>(overfit_config(), 15);
    const auto trace2 = train(model2, data, plan);
    CHECK(trace == trace2);
    CHECK(bit_equal(model.stages[0].head.weight, model2.stages[0].head.weight));
}

TEST_CASE("optimizer switch itself changes no parameters") {
    std::vector<Tensor> data{synthetic_image(32, 32, 16)};
    auto run_trace = [&](int64_t switch_step) {
        Model model = init_model<float>(overfit_config(), 17);
        TrainPlan plan;
        plan.total_steps = 6;
        plan.switch_step = switch_step;
        plan.patch_size = 16;
        plan.scale = 2;
        plan.seed = 18;
        return train(model, data, plan);
    };
    // The loss at step i reflects the parameters before that step's update,
    // so a read-only handoff at step k means traces agree through index k and
    // only diverge once SGD updates have acted.
    const auto all_adamw = run_trace(6);
    const auto switched = run_trace(3);
    for (int i = 0; i <= 3; ++i) CHECK(all_adamw[static_cast<size_t>(i)] == switched[static_cast<size_t>(i)]);
    bool diverged = false;
    for (size_t i = 4; i < all_adamw.size(); ++i) diverged = diverged || all_adamw[i] != switched[i];
    CHECK(diverged);
}

TEST_CASE("loss trace csv") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "wmx2_train_test";
    fs::create_directories(dir);
    const std::string path = (dir / "loss.csv").string();
    write_loss_csv({0.5, 0.25}, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "step,loss");
    std::getline(f, line);
    CHECK(line == "0,0.5");
    std::getline(f, line);
    CHECK(line == "1,0.25");
}

TEST_SUITE_END();
