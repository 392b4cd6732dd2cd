#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pnacc/fixed_point.hpp"

namespace pnacc {

// Block shape processed per PE-array pass: m_unroll multipliers per PE along
// the dot-product (K) axis, n_unroll PEs across output channels (C).
struct TileConfig {
    int m_unroll = 32;
    int n_unroll = 32;

    void validate() const;
};

enum class OutputOrientation { RowOriented, ColumnOriented };

enum class Activation { None, ReLU, ReLU6 };

// One weight-tile pass: input row `point`, K-block `k_tile`, C-block `c_tile`.
struct TileTraceRecord {
    std::int64_t point;
    std::int64_t k_tile;
    std::int64_t c_tile;

    bool operator==(const TileTraceRecord&) const = default;
};
using TileTrace = std::vector<TileTraceRecord>;

// Block-partitioned integer matmul with fused bias/requantization/activation.
//
//   out[i][c] = act(requantize(sum_k A[i][k] * W[k][c] + bias[c], shift))
//
// A is n x K, W is K x C, bias is pre-scaled to frac(A)+frac(W). The row loop
// is never unrolled; the K and C loops are blocked by cfg. Partial sums live
// in a wide first-stage buffer that wraps at the accumulator width (32-bit
// for 8-bit operands, 48-bit otherwise) and are narrowed exactly once per
// output element. Ragged edge tiles behave as zero-padded blocks. Output
// values are identical for both orientations; only the traversal (observable
// via `trace`) differs.
QTensor matmul_tiled(const QTensor& a, const QTensor& w, std::span<const std::int64_t> bias,
                     TileConfig cfg, OutputOrientation orient, Activation act, int shift,
                     FixedFormat out_fmt, TileTrace* trace = nullptr,
                     std::int64_t* saturation_counter = nullptr);

// Column-oriented matmul with the max-pool comparator fused into the output
// path: out[0][c] = max_i act(requantize((A*W + bias)[i][c], shift)).
QTensor matmul_maxpool(const QTensor& a, const QTensor& w, std::span<const std::int64_t> bias,
                       TileConfig cfg, Activation act, int shift, FixedFormat out_fmt,
                       TileTrace* trace = nullptr,
                       std::int64_t* saturation_counter = nullptr);

// ReLU: max(code, 0). ReLU6: clamp to [0, 6 * 2^frac], saturated into fmt.
std::int32_t apply_activation_one(std::int32_t code, Activation act, FixedFormat fmt);
std::vector<std::int32_t> apply_activation(std::span<const std::int32_t> codes, Activation act,
                                           FixedFormat fmt);

// Columnwise maximum of an n x C tensor; n >= 1.
QTensor max_columns(const QTensor& x);

}  // namespace pnacc
