#include "pnacc/gemm.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace pnacc {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Hot MAC loops, kept free-standing with restrict-qualified pointers so the
// compiler can vectorize the channel loop.
void mac_rows_u32(std::uint32_t* __restrict acc, const std::int32_t* __restrict arow,
                  const std::int32_t* __restrict wbase, std::int64_t k0, std::int64_t k1,
                  std::int64_t c_stride, std::int64_t width) {
    for (std::int64_t k = k0; k < k1; ++k) {
        const std::int32_t av = arow[k];
        const std::int32_t* __restrict wrow = wbase + k * c_stride;
        for (std::int64_t j = 0; j < width; ++j)
            acc[j] += static_cast<std::uint32_t>(av * wrow[j]);
    }
}

void mac_rows_i64(std::int64_t* __restrict acc, const std::int32_t* __restrict arow,
                  const std::int32_t* __restrict wbase, std::int64_t k0, std::int64_t k1,
                  std::int64_t c_stride, std::int64_t width) {
    for (std::int64_t k = k0; k < k1; ++k) {
        const std::int64_t av = arow[k];
        const std::int32_t* __restrict wrow = wbase + k * c_stride;
        for (std::int64_t j = 0; j < width; ++j) acc[j] += av * wrow[j];
    }
}

void check_matmul_args(const QTensor& a, const QTensor& w, std::span<const std::int64_t> bias,
                       const TileConfig& cfg, int shift, FixedFormat out_fmt) {
    cfg.validate();
    out_fmt.validate();
    if (a.dims.size() != 2 || w.dims.size() != 2)
        throw std::invalid_argument("matmul: operands must be 2-D");
    if (a.cols() != w.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree");
    if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != w.cols())
        throw std::invalid_argument("matmul: bias length does not match output channels");
    if (shift < 0) throw std::invalid_argument("matmul: negative requantization shift");
}

// Computes one (input row, C-block) strip: all K-blocks accumulated into the
// wide first-stage buffer, then narrowed and activated into `vals`. The
// accumulator wraps at acc_bits; with 8-bit operands the whole strip runs in
// 32-bit registers whose natural modular wrap matches wrap_to_bits.
struct StripRunner {
    const QTensor& a;
    const QTensor& w;
    std::span<const std::int64_t> bias;
    TileConfig cfg;
    Activation act;
    int shift;
    FixedFormat out_fmt;
    int acc_bits;
    std::int64_t k_dim, c_dim, k_tiles;
    TileTrace* trace;
    std::int64_t* sat;

    std::vector<std::uint32_t> acc32;
    std::vector<std::int64_t> acc48;

    StripRunner(const QTensor& a_, const QTensor& w_, std::span<const std::int64_t> bias_,
                TileConfig cfg_, Activation act_, int shift_, FixedFormat out_fmt_,
                TileTrace* trace_, std::int64_t* sat_)
        : a(a_), w(w_), bias(bias_), cfg(cfg_), act(act_), shift(shift_), out_fmt(out_fmt_),
          acc_bits(accumulator_bits(a_.fmt, w_.fmt)), k_dim(a_.cols()), c_dim(w_.cols()),
          k_tiles(ceil_div(k_dim, cfg_.m_unroll)), trace(trace_), sat(sat_) {
        if (acc_bits == 32)
            acc32.resize(static_cast<std::size_t>(cfg.n_unroll));
        else
            acc48.resize(static_cast<std::size_t>(cfg.n_unroll));
    }

    // vals must hold at least n_unroll entries; returns the strip width.
    std::int64_t run(std::int64_t i, std::int64_t ct, std::int32_t* vals) {
        const std::int64_t c0 = ct * cfg.n_unroll;
        const std::int64_t width = std::min<std::int64_t>(cfg.n_unroll, c_dim - c0);
        const std::int32_t* arow = a.codes.data() + i * k_dim;
        const std::int32_t* wbase = w.codes.data() + c0;

        if (acc_bits == 32) {
            std::uint32_t* acc = acc32.data();
            for (std::int64_t j = 0; j < width; ++j)
                acc[j] = static_cast<std::uint32_t>(
                    static_cast<std::int32_t>(bias.empty() ? 0 : wrap_to_bits(bias[c0 + j], 32)));
            for (std::int64_t kt = 0; kt < k_tiles; ++kt) {
                if (trace) trace->push_back({i, kt, ct});
                const std::int64_t k0 = kt * cfg.m_unroll;
                const std::int64_t k1 = std::min(k_dim, k0 + cfg.m_unroll);
                mac_rows_u32(acc, arow, wbase, k0, k1, c_dim, width);
            }
            for (std::int64_t j = 0; j < width; ++j) {
                const auto wide = static_cast<std::int64_t>(static_cast<std::int32_t>(acc[j]));
                vals[j] = apply_activation_one(requantize_one(wide, shift, out_fmt, sat), act,
                                               out_fmt);
            }
        } else {
            std::int64_t* acc = acc48.data();
            for (std::int64_t j = 0; j < width; ++j)
                acc[j] = bias.empty() ? 0 : wrap_to_bits(bias[c0 + j], acc_bits);
            for (std::int64_t kt = 0; kt < k_tiles; ++kt) {
                if (trace) trace->push_back({i, kt, ct});
                const std::int64_t k0 = kt * cfg.m_unroll;
                const std::int64_t k1 = std::min(k_dim, k0 + cfg.m_unroll);
                mac_rows_i64(acc, arow, wbase, k0, k1, c_dim, width);
                for (std::int64_t j = 0; j < width; ++j) acc[j] = wrap_to_bits(acc[j], acc_bits);
            }
            for (std::int64_t j = 0; j < width; ++j)
                vals[j] = apply_activation_one(requantize_one(acc[j], shift, out_fmt, sat), act,
                                               out_fmt);
        }
        return width;
    }
};

}  // namespace

void TileConfig::validate() const {
    if (m_unroll < 1 || n_unroll < 1)
        throw std::invalid_argument("TileConfig: unroll factors must be >= 1");
}

QTensor matmul_tiled(const QTensor& a, const QTensor& w, std::span<const std::int64_t> bias,
                     TileConfig cfg, OutputOrientation orient, Activation act, int shift,
                     FixedFormat out_fmt, TileTrace* trace, std::int64_t* saturation_counter) {
    check_matmul_args(a, w, bias, cfg, shift, out_fmt);
    const std::int64_t n = a.rows(), c_dim = w.cols();
    QTensor out;
    out.dims = {n, c_dim};
    out.codes.resize(static_cast<std::size_t>(n * c_dim));
    out.fmt = out_fmt;

    StripRunner strip(a, w, bias, cfg, act, shift, out_fmt, trace, saturation_counter);
    std::vector<std::int32_t> vals(static_cast<std::size_t>(cfg.n_unroll));
    const std::int64_t c_tiles = ceil_div(c_dim, cfg.n_unroll);

    auto emit = [&](std::int64_t i, std::int64_t ct) {
        const std::int64_t width = strip.run(i, ct, vals.data());
        std::copy_n(vals.data(), width, out.codes.data() + i * c_dim + ct * cfg.n_unroll);
    };
    if (orient == OutputOrientation::RowOriented) {
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t ct = 0; ct < c_tiles; ++ct) emit(i, ct);
    } else {
        for (std::int64_t ct = 0; ct < c_tiles; ++ct)
            for (std::int64_t i = 0; i < n; ++i) emit(i, ct);
    }
    return out;
}

QTensor matmul_maxpool(const QTensor& a, const QTensor& w, std::span<const std::int64_t> bias,
                       TileConfig cfg, Activation act, int shift, FixedFormat out_fmt,
                       TileTrace* trace, std::int64_t* saturation_counter) {
    check_matmul_args(a, w, bias, cfg, shift, out_fmt);
    const std::int64_t n = a.rows(), c_dim = w.cols();
    if (n < 1) throw std::invalid_argument("matmul_maxpool: empty input");

    QTensor out;
    out.dims = {1, c_dim};
    out.codes.resize(static_cast<std::size_t>(c_dim));
    out.fmt = out_fmt;

    StripRunner strip(a, w, bias, cfg, act, shift, out_fmt, trace, saturation_counter);
    std::vector<std::int32_t> vals(static_cast<std::size_t>(cfg.n_unroll));
    std::vector<std::int32_t> pooled(static_cast<std::size_t>(cfg.n_unroll));
    const std::int64_t c_tiles = ceil_div(c_dim, cfg.n_unroll);

    for (std::int64_t ct = 0; ct < c_tiles; ++ct) {
        std::fill(pooled.begin(), pooled.end(), std::numeric_limits<std::int32_t>::min());
        std::int64_t width = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            width = strip.run(i, ct, vals.data());
            for (std::int64_t j = 0; j < width; ++j) pooled[j] = std::max(pooled[j], vals[j]);
        }
        std::copy_n(pooled.data(), width, out.codes.data() + ct * cfg.n_unroll);
    }
    return out;
}

std::int32_t apply_activation_one(std::int32_t code, Activation act, FixedFormat fmt) {
    switch (act) {
        case Activation::None:
            return code;
        case Activation::ReLU:
            return std::max(code, 0);
        case Activation::ReLU6: {
            const std::int32_t six = std::min<std::int32_t>(6 << fmt.frac_bits, fmt.max_code());
            return std::clamp(code, 0, six);
        }
    }
    return code;
}

std::vector<std::int32_t> apply_activation(std::span<const std::int32_t> codes, Activation act,
                                           FixedFormat fmt) {
    std::vector<std::int32_t> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i)
        out[i] = apply_activation_one(codes[i], act, fmt);
    return out;
}

QTensor max_columns(const QTensor& x) {
    if (x.dims.size() != 2 || x.rows() < 1)
        throw std::invalid_argument("max_columns: need a non-empty 2-D tensor");
    const std::int64_t n = x.rows(), c_dim = x.cols();
    QTensor out;
    out.dims = {1, c_dim};
    out.fmt = x.fmt;
    out.codes.assign(x.codes.begin(), x.codes.begin() + c_dim);
    for (std::int64_t i = 1; i < n; ++i)
        for (std::int64_t c = 0; c < c_dim; ++c)
            out.codes[c] = std::max(out.codes[c], x.at(i, c));
    return out;
}

}  // namespace pnacc
