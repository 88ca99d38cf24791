#pragma once

#include <cstdint>

#include "wmx2/model.hpp"

namespace wmx2 {

// Wall-time statistics of eval-mode forwards on a random input.
struct BenchReport {
    double latency_ms_mean = 0.0;
    double latency_ms_median = 0.0;
    double throughput_fps = 0.0;
    int warmup_iters = 0;
    int timed_iters = 0;
    int input_size = 0;
    int batch = 1;
};

BenchReport run_benchmark(const Model& model, int input_size, int iters, int warmup,
                          uint64_t seed = 7);

}  // namespace wmx2
