#include "wmx2/bench.hpp"

#include <algorithm>
#include <chrono>

#include "wmx2/imaging.hpp"

namespace wmx2 {

BenchReport run_benchmark(const Model& model, int input_size, int iters, int warmup, uint64_t seed) {
    if (iters < 1) throw ParamError("benchmark: iters must be >= 1");
    if (warmup < 0) throw ParamError("benchmark: warmup must be >= 0");
    Rng rng(seed);
    const Tensor input = rgb_to_ycbcr(Tensor::random_uniform(1, 3, input_size, input_size, rng, 0.0, 1.0));

    for (int i = 0; i < warmup; ++i) {
        (void)model_forward(model, input);
    }
    using Clock = std::chrono::steady_clock;
    std::vector<double> samples_ms;
    samples_ms.reserve(static_cast<size_t>(iters));
    for (int i = 0; i < iters; ++i) {
        const auto t0 = Clock::now();
        (void)model_forward(model, input);
        const auto t1 = Clock::now();
        samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double total_ms = 0.0;
    for (double v : samples_ms) total_ms += v;
    std::vector<double> sorted = samples_ms;
    std::sort(sorted.begin(), sorted.end());
    const double median = iters % 2 == 1 ? sorted[static_cast<size_t>(iters / 2)]
                                         : 0.5 * (sorted[static_cast<size_t>(iters / 2 - 1)] +
                                                  sorted[static_cast<size_t>(iters / 2)]);

    BenchReport report;
    report.latency_ms_mean = total_ms / iters;
    report.latency_ms_median = median;
    report.throughput_fps = 1000.0 * iters / total_ms;
    report.warmup_iters = warmup;
    report.timed_iters = iters;
    report.input_size = input_size;
    report.batch = 1;
    return report;
}

}  // namespace wmx2
