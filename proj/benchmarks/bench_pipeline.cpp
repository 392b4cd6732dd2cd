#include <benchmark/benchmark.h>

#include <random>

#include "pnacc/pointnet.hpp"
#include "pnacc/simulator.hpp"
#include "pnacc/velodyne.hpp"

using namespace pnacc;

namespace {

WeightSet random_weights(const NetworkGraph& g, std::mt19937_64& rng) {
    WeightSet ws;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (const Layer& l : g.layers) {
        if (l.kind != LayerKind::SharedMLP && l.kind != LayerKind::FC) continue;
        const double s = 0.5 / std::sqrt(static_cast<double>(l.in_dim));
        FloatTensor w;
        w.dims = {l.in_dim, l.out_dim};
        w.values.resize(static_cast<std::size_t>(l.in_dim * l.out_dim));
        for (double& v : w.values) v = unit(rng) * s;
        ws.tensors.emplace(l.name + ".weight", std::move(w));
    }
    return ws;
}

void BM_SimulateFullClsInt8(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::mt19937_64 rng(1);
    const NetworkGraph g = build_network(NetworkKind::FullCls, n, 40);
    const auto qs = quantize_weights(g, random_weights(g, rng), 8);
    const Program p = compile(g, qs, {32, 32});
    const MachineParams mp = MachineParams::for_bits(8);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> pts(static_cast<std::size_t>(n * 3));
    for (double& v : pts) v = unit(rng);
    const QTensor input = quantize(pts, {n, 3}, qs.feature_fmt);
    for (auto _ : state) {
        auto rr = run_program(p, input, mp);
        benchmark::DoNotOptimize(rr.output.codes.data());
    }
    state.SetItemsProcessed(state.iterations() * count_ops(g).macs);
}

void BM_DecodePacket(benchmark::State& state) {
    PacketSpec spec;
    std::uint16_t az = 0;
    for (auto& b : spec.blocks) {
        b.azimuth_centideg = az;
        az = static_cast<std::uint16_t>((az + 40) % 36000);
        for (auto& ch : b.channels) {
            ch.distance_code = 2000;
            ch.reflectivity = 80;
        }
    }
    const PacketBytes bytes = encode_packet(spec);
    for (auto _ : state) {
        auto decoded = decode_packet(bytes);
        benchmark::DoNotOptimize(decoded.points.data());
    }
    state.SetItemsProcessed(state.iterations() * 384);
}

void BM_RoiAndSubsample(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coord(-60.0, 60.0);
    PointCloudFrame frame;
    for (int i = 0; i < 28800; ++i)
        frame.points.push_back({coord(rng), std::abs(coord(rng)), coord(rng) / 10.0, 0});
    for (auto _ : state) {
        auto fitted = fit_to_capacity(roi_filter(frame, {}), 4096, FitMode::Subsample, 1);
        benchmark::DoNotOptimize(fitted.data());
    }
    state.SetItemsProcessed(state.iterations() * 28800);
}

}  // namespace

BENCHMARK(BM_SimulateFullClsInt8)->Arg(256)->Arg(1024)->Arg(4096)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodePacket);
BENCHMARK(BM_RoiAndSubsample);
