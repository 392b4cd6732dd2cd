#include "pnacc/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pnacc/errors.hpp"

namespace pnacc {

void FixedFormat::validate() const {
    if (total_bits != 8 && total_bits != 16)
        throw std::invalid_argument("FixedFormat: total_bits must be 8 or 16");
    if (frac_bits < 0 || frac_bits >= total_bits)
        throw std::invalid_argument("FixedFormat: frac_bits out of range");
}

void QTensor::validate() const {
    fmt.validate();
    std::int64_t n = 1;
    for (std::int64_t d : dims) {
        if (d <= 0) throw std::invalid_argument("QTensor: non-positive dim");
        n *= d;
    }
    if (n != size()) throw std::invalid_argument("QTensor: dims do not match code count");
    const std::int32_t lo = fmt.min_code(), hi = fmt.max_code();
    for (std::int32_t c : codes)
        if (c < lo || c > hi) throw std::invalid_argument("QTensor: code outside format range");
}

QTensor quantize(std::span<const double> values, std::vector<std::int64_t> dims,
                 FixedFormat fmt, QuantizeStats* stats) {
    fmt.validate();
    QTensor qt;
    qt.fmt = fmt;
    qt.dims = std::move(dims);
    qt.codes.resize(values.size());
    const double scale = std::ldexp(1.0, fmt.frac_bits);
    const std::int64_t lo = fmt.min_code(), hi = fmt.max_code();
    std::int64_t clipped = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw std::invalid_argument("quantize: non-finite value");
        // llround rounds halfway cases away from zero.
        std::int64_t code = std::llround(values[i] * scale);
        if (code < lo) {
            code = lo;
            ++clipped;
        } else if (code > hi) {
            code = hi;
            ++clipped;
        }
        qt.codes[i] = static_cast<std::int32_t>(code);
    }
    if (stats) stats->saturated += clipped;
    qt.validate();
    return qt;
}

std::vector<double> dequantize(const QTensor& qt) {
    std::vector<double> out(qt.codes.size());
    const double scale = qt.fmt.scale();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = qt.codes[i] * scale;
    return out;
}

std::vector<std::int32_t> requantize(std::span<const std::int64_t> acc, int shift,
                                     FixedFormat out_fmt, std::int64_t* saturation_counter) {
    out_fmt.validate();
    if (shift < 0) throw std::invalid_argument("requantize: negative shift");
    std::vector<std::int32_t> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        out[i] = requantize_one(acc[i], shift, out_fmt, saturation_counter);
    return out;
}

void BnParams::validate(std::int64_t channels) const {
    const auto n = static_cast<std::size_t>(channels);
    if (gamma.size() != n || beta.size() != n || running_mean.size() != n ||
        running_var.size() != n)
        throw BindError("BnParams: vector length does not match channel count");
    if (epsilon <= 0.0) throw std::invalid_argument("BnParams: epsilon must be positive");
    for (double v : running_var)
        if (v < 0.0) throw std::invalid_argument("BnParams: negative running_var");
}

FoldedAffine fold_batchnorm(std::span<const double> weight, std::int64_t k_dim,
                            std::int64_t c_dim, std::span<const double> bias,
                            const BnParams& bn) {
    if (static_cast<std::int64_t>(weight.size()) != k_dim * c_dim)
        throw BindError("fold_batchnorm: weight size does not match K x C");
    if (static_cast<std::int64_t>(bias.size()) != c_dim)
        throw BindError("fold_batchnorm: bias length does not match C");
    bn.validate(c_dim);

    FoldedAffine out;
    out.weight.resize(weight.size());
    out.bias.resize(bias.size());
    std::vector<double> inv_sigma(static_cast<std::size_t>(c_dim));
    for (std::int64_t c = 0; c < c_dim; ++c)
        inv_sigma[c] = bn.gamma[c] / std::sqrt(bn.running_var[c] + bn.epsilon);
    for (std::int64_t k = 0; k < k_dim; ++k)
        for (std::int64_t c = 0; c < c_dim; ++c)
            out.weight[k * c_dim + c] = weight[k * c_dim + c] * inv_sigma[c];
    for (std::int64_t c = 0; c < c_dim; ++c)
        out.bias[c] = (bias[c] - bn.running_mean[c]) * inv_sigma[c] + bn.beta[c];
    return out;
}

int accumulator_bits(FixedFormat a, FixedFormat w) {
    return (a.total_bits == 8 && w.total_bits == 8) ? 32 : 48;
}

int choose_frac_bits(std::span<const double> values, int total_bits,
                     double max_clip_fraction) {
    const std::int64_t hi = (std::int64_t{1} << (total_bits - 1)) - 1;
    const std::int64_t lo = -(std::int64_t{1} << (total_bits - 1));
    for (int frac = total_bits - 1; frac >= 0; --frac) {
        const double scale = std::ldexp(1.0, frac);
        std::size_t clipped = 0;
        for (double v : values) {
            const double code = v * scale;
            if (code > static_cast<double>(hi) + 0.5 || code < static_cast<double>(lo) - 0.5)
                ++clipped;
        }
        if (values.empty() ||
            static_cast<double>(clipped) <= max_clip_fraction * static_cast<double>(values.size()))
            return frac;
    }
    return 0;
}

}  // namespace pnacc
