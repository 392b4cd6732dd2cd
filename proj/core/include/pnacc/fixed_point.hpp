#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace pnacc {

// Signed two's-complement fixed-point format. A stored code c represents the
// real value c * 2^-frac_bits. Feature and weight tensors are 8 or 16 bits
// wide; accumulators use wider integer registers and are not described by
// this struct.
struct FixedFormat {
    int total_bits = 8;
    int frac_bits = 4;

    static FixedFormat int8(int frac = 4) { return {8, frac}; }
    static FixedFormat int16(int frac = 8) { return {16, frac}; }
    // Default feature format for a given datapath width: Q8.4 or Q16.8.
    static FixedFormat features(int bits) { return bits == 8 ? int8() : int16(); }

    std::int32_t min_code() const { return -(std::int32_t{1} << (total_bits - 1)); }
    std::int32_t max_code() const { return (std::int32_t{1} << (total_bits - 1)) - 1; }
    double scale() const { return std::ldexp(1.0, -frac_bits); }

    bool operator==(const FixedFormat&) const = default;

    void validate() const;  // total_bits in {8,16}, 0 <= frac_bits < total_bits
};

// Row-major integer tensor with fixed-point metadata.
struct QTensor {
    std::vector<std::int64_t> dims;
    std::vector<std::int32_t> codes;
    FixedFormat fmt;

    std::int64_t size() const { return static_cast<std::int64_t>(codes.size()); }
    std::int64_t rows() const { return dims.empty() ? 0 : dims[0]; }
    std::int64_t cols() const { return dims.size() < 2 ? 1 : dims[1]; }
    std::int32_t at(std::int64_t r, std::int64_t c) const { return codes[r * cols() + c]; }

    void validate() const;  // product(dims) == codes.size(), every code in range
};

struct QuantizeStats {
    std::int64_t saturated = 0;
};

// code = clamp(round_half_away_from_zero(value * 2^frac), representable range).
// Saturation is silent; pass stats to observe the clip count.
QTensor quantize(std::span<const double> values, std::vector<std::int64_t> dims,
                 FixedFormat fmt, QuantizeStats* stats = nullptr);

std::vector<double> dequantize(const QTensor& qt);

// Narrow a wide accumulator: round_half_away_from_zero(acc / 2^shift), then
// saturate into out_fmt. shift < 0 is a configuration error.
inline std::int32_t requantize_one(std::int64_t acc, int shift, FixedFormat out_fmt,
                                   std::int64_t* saturation_counter = nullptr) {
    if (shift < 0) throw std::invalid_argument("requantize: negative shift");
    std::int64_t q;
    if (shift == 0) {
        q = acc;
    } else {
        const std::int64_t half = std::int64_t{1} << (shift - 1);
        q = acc >= 0 ? (acc + half) >> shift : -((-acc + half) >> shift);
    }
    const std::int64_t lo = out_fmt.min_code(), hi = out_fmt.max_code();
    if (q < lo) {
        if (saturation_counter) ++*saturation_counter;
        return static_cast<std::int32_t>(lo);
    }
    if (q > hi) {
        if (saturation_counter) ++*saturation_counter;
        return static_cast<std::int32_t>(hi);
    }
    return static_cast<std::int32_t>(q);
}

std::vector<std::int32_t> requantize(std::span<const std::int64_t> acc, int shift,
                                     FixedFormat out_fmt,
                                     std::int64_t* saturation_counter = nullptr);

struct BnParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double epsilon = 1e-5;

    void validate(std::int64_t channels) const;
};

struct FoldedAffine {
    std::vector<double> weight;  // K x C row-major
    std::vector<double> bias;    // C
};

// Absorb inference-time batch normalization into the preceding affine layer:
//   W'[k][c] = W[k][c] * gamma[c] / sqrt(var[c] + eps)
//   b'[c]    = (b[c] - mean[c]) * gamma[c] / sqrt(var[c] + eps) + beta[c]
FoldedAffine fold_batchnorm(std::span<const double> weight, std::int64_t k_dim,
                            std::int64_t c_dim, std::span<const double> bias,
                            const BnParams& bn);

// Accumulator width for a feature/weight operand pair: 32-bit when both are
// 8-bit, 48-bit otherwise. Accumulation wraps at this width and never
// saturates, so partial-sum order is irrelevant.
int accumulator_bits(FixedFormat a, FixedFormat w);

// Two's-complement wrap of v into `bits` bits (sign-extended result).
inline std::int64_t wrap_to_bits(std::int64_t v, int bits) {
    if (bits >= 64) return v;
    const int drop = 64 - bits;
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(v) << drop) >> drop;
}

// Largest frac_bits whose representable range clips at most max_clip_fraction
// of the given values. All-zero (or empty) input admits any frac; the finest
// one is returned.
int choose_frac_bits(std::span<const double> values, int total_bits,
                     double max_clip_fraction = 0.001);

}  // namespace pnacc
