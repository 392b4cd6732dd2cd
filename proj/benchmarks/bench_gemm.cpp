#include <benchmark/benchmark.h>

#include <random>

#include "pnacc/gemm.hpp"

using namespace pnacc;

namespace {

QTensor random_qtensor(std::mt19937_64& rng, std::int64_t rows, std::int64_t cols,
                       FixedFormat fmt) {
    std::uniform_int_distribution<std::int32_t> dist(fmt.min_code(), fmt.max_code());
    QTensor t;
    t.dims = {rows, cols};
    t.fmt = fmt;
    t.codes.resize(static_cast<std::size_t>(rows * cols));
    for (auto& c : t.codes) c = dist(rng);
    return t;
}

void BM_MatmulTiledInt8(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const auto tile = static_cast<int>(state.range(1));
    std::mt19937_64 rng(1);
    const FixedFormat ffmt{8, 4}, wfmt{8, 6};
    const QTensor a = random_qtensor(rng, n, 128, ffmt);
    const QTensor w = random_qtensor(rng, 128, 1024, wfmt);
    const std::vector<std::int64_t> bias(1024, 0);
    for (auto _ : state) {
        QTensor out = matmul_tiled(a, w, bias, {tile, tile}, OutputOrientation::RowOriented,
                                   Activation::ReLU, 6, ffmt);
        benchmark::DoNotOptimize(out.codes.data());
    }
    state.SetItemsProcessed(state.iterations() * n * 128 * 1024);
}

void BM_MatmulTiledInt16(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(2);
    const FixedFormat ffmt{16, 8}, wfmt{16, 10};
    const QTensor a = random_qtensor(rng, n, 128, ffmt);
    const QTensor w = random_qtensor(rng, 128, 1024, wfmt);
    const std::vector<std::int64_t> bias(1024, 0);
    for (auto _ : state) {
        QTensor out = matmul_tiled(a, w, bias, {32, 32}, OutputOrientation::RowOriented,
                                   Activation::ReLU, 10, ffmt);
        benchmark::DoNotOptimize(out.codes.data());
    }
    state.SetItemsProcessed(state.iterations() * n * 128 * 1024);
}

void BM_MatmulMaxpool(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(3);
    const FixedFormat ffmt{8, 4}, wfmt{8, 6};
    const QTensor a = random_qtensor(rng, n, 128, ffmt);
    const QTensor w = random_qtensor(rng, 128, 1024, wfmt);
    const std::vector<std::int64_t> bias(1024, 0);
    for (auto _ : state) {
        QTensor out = matmul_maxpool(a, w, bias, {32, 32}, Activation::ReLU, 6, ffmt);
        benchmark::DoNotOptimize(out.codes.data());
    }
    state.SetItemsProcessed(state.iterations() * n * 128 * 1024);
}

}  // namespace

BENCHMARK(BM_MatmulTiledInt8)->Args({1024, 32})->Args({4096, 32})->Args({4096, 8});
BENCHMARK(BM_MatmulTiledInt16)->Arg(1024)->Arg(4096);
BENCHMARK(BM_MatmulMaxpool)->Arg(1024)->Arg(4096);
