#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnacc/fixed_point.hpp"
#include "pnacc/program.hpp"

namespace pnacc {

enum class NetworkKind { VanillaCls, FullCls, FullSeg };

enum class LayerKind { SharedMLP, FC, MaxPool, TransformApply, Concat };

// One node of the layer DAG. `input` is the index of the producing layer
// (-1 = network input). TransformApply additionally reads the flattened
// M x M transform from `aux_input`; Concat reads the broadcast global
// feature from `aux_input`.
struct Layer {
    LayerKind kind = LayerKind::SharedMLP;
    std::string name;
    std::int64_t in_dim = 0;
    std::int64_t out_dim = 0;
    Activation activation = Activation::None;
    bool has_bn = false;
    int input = -1;
    int aux_input = -1;
};

struct NetworkGraph {
    NetworkKind kind = NetworkKind::VanillaCls;
    std::int64_t n_points = 0;
    std::int64_t num_classes = 0;
    std::int64_t num_seg_classes = 0;
    std::vector<Layer> layers;

    void validate() const;
    // Output rows of a layer: n_points for per-point layers, 1 after pooling.
    std::int64_t layer_rows(int index) const;
};

// Learned alignment sub-network shape: shared MLPs M->64->128->1024, global
// pool, FCs 1024->512->256->M^2, reshaped M x M with the identity added
// before application.
struct TNetSpec {
    std::int64_t dim = 3;  // 3 for the input transform, 64 for the feature transform

    std::vector<std::int64_t> mlp_dims() const { return {dim, 64, 128, 1024}; }
    std::vector<std::int64_t> fc_dims() const { return {1024, 512, 256, dim * dim}; }
};

struct FloatTensor {
    std::vector<std::int64_t> dims;
    std::vector<double> values;

    std::int64_t rows() const { return dims.empty() ? 0 : dims[0]; }
    std::int64_t cols() const { return dims.size() < 2 ? 1 : dims[1]; }
};

// Float weights keyed "<layer>.weight" / "<layer>.bias", with optional
// unfolded batch-norm parameters per layer.
struct WeightSet {
    std::map<std::string, FloatTensor> tensors;
    std::map<std::string, BnParams> bn;
};

// Quantized weights plus float biases (bias codes are derived per program at
// frac(in)+frac(weight)) and the feature format every activation tensor uses.
struct QuantizedWeightSet {
    std::map<std::string, QTensor> weights;  // "<layer>.weight"
    std::map<std::string, std::vector<double>> biases;
    FixedFormat feature_fmt;
};

NetworkGraph build_network(NetworkKind kind, std::int64_t n_points, std::int64_t num_classes,
                           std::int64_t num_seg_classes = 0);

// Row-wise X * (T + I); X is n x M, transform is the flattened M x M output
// of a T-Net head.
FloatTensor apply_tnet(const FloatTensor& x, std::span<const double> transform);

struct OpCount {
    std::int64_t macs = 0;
    std::int64_t ops = 0;
};

// Multiply-accumulate count of the graph: rows x in_dim x out_dim per affine
// layer (rows = n for shared layers, 1 for FC), n x M^2 per transform
// application. Pooling/activation/concat contribute nothing.
OpCount count_ops(const NetworkGraph& graph);

// Lower the graph to an accelerator program: every affine layer becomes a
// Matmul, the global pool fuses into its producer as MatmulMaxpool,
// intermediates route through the input buffer when the next instruction is
// the sole consumer, T-Net outputs bind as frame-lifetime dynamic weights,
// and concat becomes a memory rearrangement step.
Program compile(const NetworkGraph& graph, const QuantizedWeightSet& weights, TileConfig tile);

// Double-precision forward pass, architecture-identical to the compiled
// instruction semantics. Returns the final layer's output (1 x k class
// scores or n x m per-point scores). When `intermediates` is given it
// receives every layer output (for calibration).
FloatTensor run_reference_float(const NetworkGraph& graph, const WeightSet& weights,
                                const FloatTensor& points,
                                std::vector<FloatTensor>* intermediates = nullptr);

// Fold batch norm, pick per-tensor frac_bits by the 0.1% clipping rule, and
// quantize every weight tensor to the given width. feature_frac overrides the
// default feature format (Q8.4 / Q16.8).
QuantizedWeightSet quantize_weights(const NetworkGraph& graph, const WeightSet& weights, int bits,
                                    std::optional<int> feature_frac = std::nullopt,
                                    QuantizeStats* stats = nullptr);

// Feature frac_bits that keeps activation clipping within 0.1% on a
// calibration cloud (runs the float reference and pools all activations).
int calibrate_feature_frac(const NetworkGraph& graph, const WeightSet& weights,
                           const FloatTensor& calib_points, int bits);

}  // namespace pnacc
