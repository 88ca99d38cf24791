#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "wmx2/imaging.hpp"
#include "wmx2/png_io.hpp"

using namespace wmx2;

namespace {

Tensor solid_rgb(float r, float g, float b, int h = 2, int w = 2) {
    Tensor t(1, 3, h, w);
    for (int i = 0; i < h * w; ++i) {
        t.row(0, 0, 0)[i] = r;
        t.row(0, 1, 0)[i] = g;
        t.row(0, 2, 0)[i] = b;
    }
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("imaging");

TEST_CASE("ycbcr endpoints and primaries") {
    Tensor white = rgb_to_ycbcr(solid_rgb(1, 1, 1));
    CHECK(std::abs(static_cast<double>(white.at(0, 0, 0, 0)) - (235.0 / 255.0)) < 1e-4);
    CHECK(std::abs(static_cast<double>(white.at(0, 1, 0, 0)) - (128.0 / 255.0)) < 1e-4);
    CHECK(std::abs(static_cast<double>(white.at(0, 2, 0, 0)) - (128.0 / 255.0)) < 1e-4);

    Tensor black = rgb_to_ycbcr(solid_rgb(0, 0, 0));
    CHECK(std::abs(static_cast<double>(black.at(0, 0, 0, 0)) - (16.0 / 255.0)) < 1e-6);
    CHECK(std::abs(static_cast<double>(black.at(0, 1, 0, 0)) - (128.0 / 255.0)) < 1e-6);

    Tensor red = rgb_to_ycbcr(solid_rgb(1, 0, 0));
    CHECK(std::abs(static_cast<double>(red.at(0, 0, 0, 0)) - (81.481 / 255.0)) < 1e-3);
    CHECK(std::abs(static_cast<double>(red.at(0, 1, 0, 0)) - (90.203 / 255.0)) < 1e-3);
    CHECK(std::abs(static_cast<double>(red.at(0, 2, 0, 0)) - (240.0 / 255.0)) < 1e-3);
}

TEST_CASE("ycbcr_to_rgb inverts the studio-swing matrix") {
    Tensor bars(1, 3, 1, 1);
    bars.at(0, 0, 0, 0) = 16.0f / 255.0f;
    bars.at(0, 1, 0, 0) = 128.0f / 255.0f;
    bars.at(0, 2, 0, 0) = 128.0f / 255.0f;
    Tensor rgb = ycbcr_to_rgb(bars);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(static_cast<double>(rgb.at(0, c, 0, 0)) - (0.0)) < 1e-6);
    }

    // Round trip over a 17^3 RGB lattice.
    double max_err = 0.0;
    for (int ri = 0; ri <= 16; ++ri) {
        for (int gi = 0; gi <= 16; ++gi) {
            Tensor grid(1, 3, 1, 17);
            for (int bi = 0; bi <= 16; ++bi) {
                grid.at(0, 0, 0, bi) = ri / 16.0f;
                grid.at(0, 1, 0, bi) = gi / 16.0f;
                grid.at(0, 2, 0, bi) = bi / 16.0f;
            }
            Tensor back = ycbcr_to_rgb(rgb_to_ycbcr(grid));
            max_err = std::max(max_err, max_abs_diff(back, grid));
        }
    }
    CHECK(max_err < 1e-3);
}

TEST_CASE("degrade_bicubic") {
    SUBCASE("constant preserved at reduced size") {
        Tensor x = Tensor::full(1, 3, 8, 12, 0.6f);
        Tensor y = degrade_bicubic(x, 4);
        CHECK(y.shape() == Shape{1, 3, 2, 3});
        for (int64_t i = 0; i < y.size(); ++i) {
            CHECK(std::abs(static_cast<double>(y[i]) - (0.6)) < 1e-6);
        }
    }
    SUBCASE("unit scale is the identity") {
        Rng rng(1);
        Tensor x = Tensor::random_uniform(1, 1, 5, 5, rng);
        CHECK(bit_equal(degrade_bicubic(x, 1), x));
    }
    SUBCASE("one 4x is not two 2x reductions") {
        Rng rng(2);
        Tensor x = Tensor::random_uniform(1, 1, 16, 16, rng, 0.0, 1.0);
        Tensor direct = degrade_bicubic(x, 4);
        Tensor twice = degrade_bicubic(degrade_bicubic(x, 2), 2);
        CHECK(direct.shape() == twice.shape());
        CHECK(max_abs_diff(direct, twice) > 1e-4);  // documents non-composability
    }
    SUBCASE("indivisible dims rejected") {
        CHECK_THROWS_AS(degrade_bicubic(Tensor(1, 1, 9, 8), 4), ShapeError);
        CHECK(crop_to_multiple(Tensor(1, 1, 9, 11), 4).shape() == Shape{1, 1, 8, 8});
    }
}

TEST_CASE("psnr") {
    Rng rng(3);
    Tensor a = Tensor::random_uniform(1, 1, 6, 6, rng, 0.0, 1.0);
    SUBCASE("identical images saturate") {
        CHECK(std::isinf(psnr(a, a, 1.0)));
    }
    SUBCASE("closed form at mse 0.01") {
        Tensor b(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) b[i] = a[i] + 0.1f;
        CHECK(std::abs(static_cast<double>(psnr(a, b, 1.0)) - (20.0)) < 1e-6);
    }
    SUBCASE("matches the loop oracle and is symmetric") {
        Tensor b = Tensor::random_uniform(1, 1, 6, 6, rng, 0.0, 1.0);
        CHECK(std::abs(static_cast<double>(psnr(a, b, 1.0)) - (oracle::psnr(a, b, 1.0))) < 1e-6);
        CHECK(psnr(a, b, 1.0) == psnr(b, a, 1.0));
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(psnr(a, Tensor(1, 1, 5, 6), 1.0), ShapeError);
    }
}

TEST_CASE("ssim") {
    Rng rng(4);
    Tensor a = Tensor::random_uniform(1, 1, 16, 20, rng, 0.0, 1.0);
    SUBCASE("self similarity is exactly one") {
        CHECK(ssim(a, a) == 1.0);
    }
    SUBCASE("constant images match the closed form") {
        const double u = 0.3, v = 0.5;
        Tensor ca = Tensor::full(1, 1, 12, 12, static_cast<float>(u));
        Tensor cb = Tensor::full(1, 1, 12, 12, static_cast<float>(v));
        const double uu = static_cast<double>(static_cast<float>(u));
        const double vv = static_cast<double>(static_cast<float>(v));
        const double expected = (2 * uu * vv + 0.0001) / (uu * uu + vv * vv + 0.0001);
        CHECK(std::abs(static_cast<double>(ssim(ca, cb)) - (expected)) < 1e-6);
    }
    SUBCASE("matches the sliding-window oracle and is symmetric") {
        Tensor b = Tensor::random_uniform(1, 1, 16, 20, rng, 0.0, 1.0);
        CHECK(std::abs(static_cast<double>(ssim(a, b)) - (oracle::ssim(a, b))) < 1e-5);
        CHECK(std::abs(static_cast<double>(ssim(a, b)) - (ssim(b, a))) < 1e-7);
    }
    SUBCASE("images below the window size are rejected") {
        CHECK_THROWS_AS(ssim(Tensor(1, 1, 10, 16), Tensor(1, 1, 10, 16)), ParamError);
    }
}

TEST_CASE("huber loss") {
    Tensor t = Tensor::full(1, 1, 2, 2, 0.0f);
    SUBCASE("zero residual") {
        CHECK(huber_loss(t, t, 1.0) == 0.0);
    }
    SUBCASE("quadratic branch") {
        Tensor p = Tensor::full(1, 1, 2, 2, 0.1f);
        CHECK(huber_loss(p, t, 1.0) == doctest::Approx(0.005).epsilon(1e-6));
    }
    SUBCASE("linear branch") {
        Tensor p = Tensor::full(1, 1, 2, 2, 2.0f);
        CHECK(huber_loss(p, t, 1.0) == doctest::Approx(1.5).epsilon(1e-9));
    }
    SUBCASE("continuously differentiable at the knee") {
        const double delta = 1.0, h = 1e-4;
        auto loss_at = [&](double r) {
            Tensor p = Tensor::full(1, 1, 1, 1, static_cast<float>(r));
            return huber_loss(p, Tensor(1, 1, 1, 1), delta);
        };
        const double left = (loss_at(delta) - loss_at(delta - h)) / h;
        const double right = (loss_at(delta + h) - loss_at(delta)) / h;
        CHECK(std::abs(left - right) < 1e-3);
    }
}

TEST_CASE("png round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "wmx2_png_test";
    fs::create_directories(dir);

    SUBCASE("rgb save/load is lossless") {
        Rng rng(5);
        ImageU8 img;
        img.h = 13;
        img.w = 9;
        img.channels = 3;
        img.data.resize(13 * 9 * 3);
        for (auto& v : img.data) v = static_cast<uint8_t>(rng.integer(256));
        const std::string path = (dir / "roundtrip.png").string();
        save_png(img, path);
        CHECK(load_png(path) == img);
    }
    SUBCASE("grayscale save/load is lossless") {
        ImageU8 img;
        img.h = 4;
        img.w = 5;
        img.channels = 1;
        img.data = {0,  10,  20,  30,  40,  50,  60,  70,  80,  90,
                    99, 110, 120, 130, 140, 150, 160, 170, 180, 255};
        const std::string path = (dir / "gray.png").string();
        save_png(img, path);
        CHECK(load_png(path) == img);
        CHECK(promote_to_rgb(img).channels == 3);
        CHECK(promote_to_rgb(img).data[3] == 10);
    }
    SUBCASE("tensor conversion endpoints and rounding") {
        ImageU8 img;
        img.h = 1;
        img.w = 2;
        img.channels = 1;
        img.data = {255, 0};
        Tensor t = image_to_tensor(img);
        CHECK(t[0] == 1.0f);
        CHECK(t[1] == 0.0f);
        CHECK(tensor_to_image(t).data == img.data);

        Tensor half = Tensor::full(1, 1, 1, 1, 0.5f);
        CHECK(tensor_to_image(half).data[0] == 128);  // round half away from zero
        Tensor over = Tensor::full(1, 1, 1, 1, 1.7f);
        CHECK(tensor_to_image(over).data[0] == 255);
    }
    SUBCASE("missing file names the cause") {
        CHECK_THROWS_WITH_AS(load_png((dir / "absent.png").string()),
                             doctest::Contains("cannot open"), IoError);
    }
    SUBCASE("non-png rejected") {
        const std::string path = (dir / "fake.png").string();
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("not a png at all, just text", f);
        std::fclose(f);
        CHECK_THROWS_AS(load_png(path), IoError);
    }
}

TEST_CASE("eval report csv format") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "wmx2_csv_test";
    fs::create_directories(dir);
    EvalReport report;
    report.records.push_back({"img_a", 31.25, 0.91});
    report.records.push_back({"img_b", 28.75, 0.87});
    const std::string path = (dir / "report.csv").string();
    write_eval_csv(report, path);

    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "image,psnr_db,ssim");
    int rows = 0;
    std::string last;
    while (std::getline(f, line)) {
        if (!line.empty()) last = line;
        ++rows;
    }
    CHECK(rows == 3);  // image count + mean row
    CHECK(last.substr(0, 5) == "mean,");
    CHECK(last.find("30.0000") != std::string::npos);
}

TEST_SUITE_END();
