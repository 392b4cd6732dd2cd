#include "pnacc/pointnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pnacc/errors.hpp"

namespace pnacc {

namespace {

Layer shared_mlp(std::string name, std::int64_t in, std::int64_t out, int input) {
    return {LayerKind::SharedMLP, std::move(name), in, out, Activation::ReLU, true, input, -1};
}

Layer fc(std::string name, std::int64_t in, std::int64_t out, int input, bool head) {
    return {LayerKind::FC,   std::move(name), in, out, head ? Activation::None : Activation::ReLU,
            !head,           input,           -1};
}

// Appends the T-Net tower (shared MLPs, pool, FC head producing the flattened
// M x M transform) and returns the index of the transform-producing layer.
int append_tnet(std::vector<Layer>& layers, const std::string& prefix, std::int64_t dim,
                int input) {
    const TNetSpec spec{dim};
    const auto mlp = spec.mlp_dims();
    const auto fcd = spec.fc_dims();
    int cur = input;
    for (std::size_t i = 0; i + 1 < mlp.size(); ++i) {
        layers.push_back(shared_mlp(prefix + ".mlp" + std::to_string(i + 1), mlp[i], mlp[i + 1],
                                    cur));
        cur = static_cast<int>(layers.size()) - 1;
    }
    layers.push_back({LayerKind::MaxPool, prefix + ".pool", mlp.back(), mlp.back(),
                      Activation::None, false, cur, -1});
    cur = static_cast<int>(layers.size()) - 1;
    for (std::size_t i = 0; i + 1 < fcd.size(); ++i) {
        const bool head = i + 2 == fcd.size();
        layers.push_back(
            fc(prefix + ".fc" + std::to_string(i + 1), fcd[i], fcd[i + 1], cur, head));
        cur = static_cast<int>(layers.size()) - 1;
    }
    return cur;
}

void append_backbone_tail(std::vector<Layer>& layers, int from) {
    layers.push_back(shared_mlp("mlp3", 64, 64, from));
    layers.push_back(shared_mlp("mlp4", 64, 128, static_cast<int>(layers.size()) - 1));
    layers.push_back(shared_mlp("mlp5", 128, 1024, static_cast<int>(layers.size()) - 1));
    layers.push_back({LayerKind::MaxPool, "pool", 1024, 1024, Activation::None, false,
                      static_cast<int>(layers.size()) - 1, -1});
}

void append_cls_head(std::vector<Layer>& layers, std::int64_t k) {
    layers.push_back(fc("fc1", 1024, 512, static_cast<int>(layers.size()) - 1, false));
    layers.push_back(fc("fc2", 512, 256, static_cast<int>(layers.size()) - 1, false));
    layers.push_back(fc("fc3", 256, k, static_cast<int>(layers.size()) - 1, true));
}

}  // namespace

NetworkGraph build_network(NetworkKind kind, std::int64_t n_points, std::int64_t num_classes,
                           std::int64_t num_seg_classes) {
    if (n_points < 1 || n_points > kMaxPoints)
        throw CapacityError("build_network: point count must be in [1, 4096]");
    NetworkGraph g;
    g.kind = kind;
    g.n_points = n_points;
    g.num_classes = num_classes;
    g.num_seg_classes = num_seg_classes;
    auto& L = g.layers;

    if (kind == NetworkKind::VanillaCls) {
        L.push_back(shared_mlp("mlp1", 3, 64, -1));
        L.push_back(shared_mlp("mlp2", 64, 64, static_cast<int>(L.size()) - 1));
        append_backbone_tail(L, static_cast<int>(L.size()) - 1);
        append_cls_head(L, num_classes);
        g.validate();
        return g;
    }

    const int t3 = append_tnet(L, "tnet3", 3, -1);
    L.push_back({LayerKind::TransformApply, "input_transform", 3, 3, Activation::None, false, -1,
                 t3});
    L.push_back(shared_mlp("mlp1", 3, 64, static_cast<int>(L.size()) - 1));
    L.push_back(shared_mlp("mlp2", 64, 64, static_cast<int>(L.size()) - 1));
    const int pre_t64 = static_cast<int>(L.size()) - 1;
    const int t64 = append_tnet(L, "tnet64", 64, pre_t64);
    L.push_back({LayerKind::TransformApply, "feature_transform", 64, 64, Activation::None, false,
                 pre_t64, t64});
    const int transformed = static_cast<int>(L.size()) - 1;
    append_backbone_tail(L, transformed);
    const int global_pool = static_cast<int>(L.size()) - 1;

    if (kind == NetworkKind::FullCls) {
        append_cls_head(L, num_classes);
    } else {
        L.push_back({LayerKind::Concat, "concat", 64, 64 + 1024, Activation::None, false,
                     transformed, global_pool});
        L.push_back(shared_mlp("seg1", 1088, 512, static_cast<int>(L.size()) - 1));
        L.push_back(shared_mlp("seg2", 512, 256, static_cast<int>(L.size()) - 1));
        L.push_back(shared_mlp("seg3", 256, 128, static_cast<int>(L.size()) - 1));
        L.push_back({LayerKind::SharedMLP, "seg4", 128, num_seg_classes, Activation::None, false,
                     static_cast<int>(L.size()) - 1, -1});
    }
    g.validate();
    return g;
}

std::int64_t NetworkGraph::layer_rows(int index) const {
    if (index < 0) return n_points;
    const Layer& l = layers[static_cast<std::size_t>(index)];
    switch (l.kind) {
        case LayerKind::MaxPool:
        case LayerKind::FC:
            return 1;
        default:
            return layer_rows(l.input);
    }
}

void NetworkGraph::validate() const {
    if (n_points < 1 || n_points > kMaxPoints)
        throw CapacityError("NetworkGraph: point count must be in [1, 4096]");
    if (layers.empty()) throw std::invalid_argument("NetworkGraph: no layers");

    std::vector<std::int64_t> tnet_dims;
    // Layers feeding a TransformApply's aux edge (transitively) belong to a
    // T-Net tower; their pools are not the global pool.
    std::vector<bool> in_tnet(layers.size(), false);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.input >= static_cast<int>(i) || l.input < -1 ||
            (l.aux_input >= 0 && l.aux_input >= static_cast<int>(i)))
            throw std::invalid_argument("NetworkGraph: layer references must point backwards");
        const std::int64_t producer_dim =
            l.input < 0 ? l.in_dim : layers[static_cast<std::size_t>(l.input)].out_dim;
        switch (l.kind) {
            case LayerKind::SharedMLP:
            case LayerKind::FC:
                if (l.in_dim != producer_dim)
                    throw std::invalid_argument("NetworkGraph: dim mismatch at " + l.name);
                if (l.kind == LayerKind::FC && layer_rows(l.input) != 1)
                    throw std::invalid_argument("NetworkGraph: FC layer needs a pooled input: " +
                                                l.name);
                break;
            case LayerKind::MaxPool:
                if (l.in_dim != producer_dim || l.out_dim != l.in_dim)
                    throw std::invalid_argument("NetworkGraph: bad pool dims at " + l.name);
                break;
            case LayerKind::TransformApply: {
                if (l.aux_input < 0)
                    throw std::invalid_argument("NetworkGraph: transform without source");
                const Layer& aux = layers[static_cast<std::size_t>(l.aux_input)];
                if (l.in_dim != l.out_dim || l.in_dim != producer_dim ||
                    aux.out_dim != l.in_dim * l.in_dim || layer_rows(l.aux_input) != 1)
                    throw std::invalid_argument("NetworkGraph: bad transform dims at " + l.name);
                tnet_dims.push_back(l.in_dim);
                // mark the aux chain
                int cur = l.aux_input;
                while (cur >= 0 && !in_tnet[static_cast<std::size_t>(cur)]) {
                    in_tnet[static_cast<std::size_t>(cur)] = true;
                    cur = layers[static_cast<std::size_t>(cur)].input;
                }
                break;
            }
            case LayerKind::Concat: {
                if (l.aux_input < 0)
                    throw std::invalid_argument("NetworkGraph: concat without global source");
                const Layer& aux = layers[static_cast<std::size_t>(l.aux_input)];
                if (l.in_dim != producer_dim || l.out_dim != l.in_dim + aux.out_dim ||
                    layer_rows(l.aux_input) != 1)
                    throw std::invalid_argument("NetworkGraph: bad concat dims at " + l.name);
                break;
            }
        }
    }

    if (kind == NetworkKind::VanillaCls) {
        if (!tnet_dims.empty())
            throw std::invalid_argument("NetworkGraph: vanilla network must not transform");
    } else {
        std::sort(tnet_dims.begin(), tnet_dims.end());
        if (tnet_dims != std::vector<std::int64_t>{3, 64})
            throw std::invalid_argument(
                "NetworkGraph: full network needs input (3) and feature (64) transforms");
    }
    int global_pools = 0;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].kind == LayerKind::MaxPool && !in_tnet[i]) ++global_pools;
    if (global_pools != 1)
        throw std::invalid_argument("NetworkGraph: exactly one global max pool required");
    if ((kind == NetworkKind::FullSeg && num_seg_classes < 1) ||
        (kind != NetworkKind::FullSeg && num_classes < 1))
        throw std::invalid_argument("NetworkGraph: class count must be positive");
}

FloatTensor apply_tnet(const FloatTensor& x, std::span<const double> transform) {
    const std::int64_t n = x.rows(), m = x.cols();
    if (static_cast<std::int64_t>(transform.size()) != m * m)
        throw std::invalid_argument("apply_tnet: transform size must be M^2");
    FloatTensor out;
    out.dims = {n, m};
    out.values.assign(static_cast<std::size_t>(n * m), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t r = 0; r < m; ++r) {
            const double v = x.values[i * m + r];
            for (std::int64_t c = 0; c < m; ++c)
                out.values[i * m + c] += v * (transform[r * m + c] + (r == c ? 1.0 : 0.0));
        }
    return out;
}

OpCount count_ops(const NetworkGraph& graph) {
    OpCount oc;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const Layer& l = graph.layers[i];
        switch (l.kind) {
            case LayerKind::SharedMLP:
                oc.macs += graph.n_points * l.in_dim * l.out_dim;
                break;
            case LayerKind::FC:
                oc.macs += l.in_dim * l.out_dim;
                break;
            case LayerKind::TransformApply:
                oc.macs += graph.n_points * l.in_dim * l.out_dim;
                break;
            default:
                break;
        }
    }
    oc.ops = 2 * oc.macs;
    return oc;
}

namespace {

const FloatTensor& weight_tensor(const WeightSet& ws, const std::string& layer_name,
                                 std::int64_t in_dim, std::int64_t out_dim) {
    auto it = ws.tensors.find(layer_name + ".weight");
    if (it == ws.tensors.end()) throw BindError("missing weight tensor: " + layer_name);
    if (it->second.rows() != in_dim || it->second.cols() != out_dim)
        throw BindError("weight shape mismatch: " + layer_name);
    return it->second;
}

std::vector<double> bias_values(const WeightSet& ws, const std::string& layer_name,
                                std::int64_t out_dim) {
    auto it = ws.tensors.find(layer_name + ".bias");
    if (it == ws.tensors.end()) return std::vector<double>(static_cast<std::size_t>(out_dim), 0.0);
    if (static_cast<std::int64_t>(it->second.values.size()) != out_dim)
        throw BindError("bias length mismatch: " + layer_name);
    return it->second.values;
}

double activate_float(double v, Activation act) {
    switch (act) {
        case Activation::None: return v;
        case Activation::ReLU: return std::max(v, 0.0);
        case Activation::ReLU6: return std::clamp(v, 0.0, 6.0);
    }
    return v;
}

}  // namespace

FloatTensor run_reference_float(const NetworkGraph& graph, const WeightSet& weights,
                                const FloatTensor& points,
                                std::vector<FloatTensor>* intermediates) {
    graph.validate();
    if (points.rows() != graph.n_points)
        throw std::invalid_argument("run_reference_float: point count mismatch");

    std::vector<FloatTensor> outs(graph.layers.size());
    auto source = [&](int idx) -> const FloatTensor& {
        return idx < 0 ? points : outs[static_cast<std::size_t>(idx)];
    };

    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const Layer& l = graph.layers[i];
        const FloatTensor& x = source(l.input);
        FloatTensor& y = outs[i];
        switch (l.kind) {
            case LayerKind::SharedMLP:
            case LayerKind::FC: {
                if (x.cols() != l.in_dim)
                    throw std::invalid_argument("run_reference_float: dim mismatch at " + l.name);
                const FloatTensor& w = weight_tensor(weights, l.name, l.in_dim, l.out_dim);
                std::vector<double> b = bias_values(weights, l.name, l.out_dim);
                const std::int64_t n = x.rows();
                y.dims = {n, l.out_dim};
                y.values.assign(static_cast<std::size_t>(n * l.out_dim), 0.0);
                for (std::int64_t r = 0; r < n; ++r) {
                    double* yr = y.values.data() + r * l.out_dim;
                    for (std::int64_t c = 0; c < l.out_dim; ++c) yr[c] = b[c];
                    for (std::int64_t k = 0; k < l.in_dim; ++k) {
                        const double xv = x.values[r * l.in_dim + k];
                        const double* wr = w.values.data() + k * l.out_dim;
                        for (std::int64_t c = 0; c < l.out_dim; ++c) yr[c] += xv * wr[c];
                    }
                }
                if (l.has_bn) {
                    auto bn_it = weights.bn.find(l.name);
                    if (bn_it != weights.bn.end()) {
                        const BnParams& bn = bn_it->second;
                        bn.validate(l.out_dim);
                        for (std::int64_t r = 0; r < n; ++r)
                            for (std::int64_t c = 0; c < l.out_dim; ++c) {
                                double& v = y.values[r * l.out_dim + c];
                                v = (v - bn.running_mean[c]) /
                                        std::sqrt(bn.running_var[c] + bn.epsilon) * bn.gamma[c] +
                                    bn.beta[c];
                            }
                    }
                }
                for (double& v : y.values) v = activate_float(v, l.activation);
                break;
            }
            case LayerKind::MaxPool: {
                const std::int64_t n = x.rows(), d = x.cols();
                y.dims = {1, d};
                y.values.assign(x.values.begin(), x.values.begin() + d);
                for (std::int64_t r = 1; r < n; ++r)
                    for (std::int64_t c = 0; c < d; ++c)
                        y.values[c] = std::max(y.values[c], x.values[r * d + c]);
                break;
            }
            case LayerKind::TransformApply: {
                const FloatTensor& t = source(l.aux_input);
                y = apply_tnet(x, t.values);
                break;
            }
            case LayerKind::Concat: {
                const FloatTensor& g = source(l.aux_input);
                const std::int64_t n = x.rows(), ca = x.cols(), cb = g.cols();
                y.dims = {n, ca + cb};
                y.values.resize(static_cast<std::size_t>(n * (ca + cb)));
                for (std::int64_t r = 0; r < n; ++r) {
                    std::copy_n(x.values.data() + r * ca, ca, y.values.data() + r * (ca + cb));
                    std::copy_n(g.values.data(), cb, y.values.data() + r * (ca + cb) + ca);
                }
                break;
            }
        }
    }
    FloatTensor result = outs.back();
    if (intermediates) *intermediates = std::move(outs);
    return result;
}

QuantizedWeightSet quantize_weights(const NetworkGraph& graph, const WeightSet& weights, int bits,
                                    std::optional<int> feature_frac, QuantizeStats* stats) {
    if (bits != 8 && bits != 16)
        throw std::invalid_argument("quantize_weights: bits must be 8 or 16");
    QuantizedWeightSet out;
    out.feature_fmt = FixedFormat::features(bits);
    if (feature_frac) out.feature_fmt.frac_bits = *feature_frac;
    out.feature_fmt.validate();

    for (const Layer& l : graph.layers) {
        if (l.kind != LayerKind::SharedMLP && l.kind != LayerKind::FC) continue;
        const FloatTensor& w = weight_tensor(weights, l.name, l.in_dim, l.out_dim);
        std::vector<double> wv = w.values;
        std::vector<double> bv = bias_values(weights, l.name, l.out_dim);
        if (l.has_bn) {
            auto bn_it = weights.bn.find(l.name);
            if (bn_it != weights.bn.end()) {
                FoldedAffine folded = fold_batchnorm(wv, l.in_dim, l.out_dim, bv, bn_it->second);
                wv = std::move(folded.weight);
                bv = std::move(folded.bias);
            }
        }
        FixedFormat wfmt{bits, choose_frac_bits(wv, bits)};
        out.weights.emplace(l.name + ".weight",
                            quantize(wv, {l.in_dim, l.out_dim}, wfmt, stats));
        out.biases.emplace(l.name + ".bias", std::move(bv));
    }
    return out;
}

int calibrate_feature_frac(const NetworkGraph& graph, const WeightSet& weights,
                           const FloatTensor& calib_points, int bits) {
    std::vector<FloatTensor> inter;
    run_reference_float(graph, weights, calib_points, &inter);
    std::vector<double> all(calib_points.values);
    for (const FloatTensor& t : inter) all.insert(all.end(), t.values.begin(), t.values.end());
    return choose_frac_bits(all, bits);
}

namespace {

struct Emitter {
    int layer = -1;        // source layer of this program item
    int out_layer = -1;    // layer whose output this item produces (pool when fused)
    bool is_concat = false;
};

struct ConsumerRef {
    int layer;
    bool via_aux;
};

}  // namespace

Program compile(const NetworkGraph& graph, const QuantizedWeightSet& weights, TileConfig tile) {
    graph.validate();
    tile.validate();
    const FixedFormat ffmt = weights.feature_fmt;
    const std::int64_t n = graph.n_points;

    // Fused pools: a MaxPool directly following its producing shared layer
    // merges into that instruction.
    std::vector<bool> fused(graph.layers.size(), false);
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const Layer& l = graph.layers[i];
        if (l.kind != LayerKind::MaxPool) continue;
        if (l.input != static_cast<int>(i) - 1 ||
            graph.layers[static_cast<std::size_t>(l.input)].kind != LayerKind::SharedMLP)
            throw std::invalid_argument("compile: max pool must directly follow a shared layer");
        fused[i] = true;
    }

    // Emitted program items in layer order.
    std::vector<Emitter> items;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const Layer& l = graph.layers[i];
        if (l.kind == LayerKind::MaxPool) continue;  // always fused (checked above)
        Emitter e;
        e.layer = static_cast<int>(i);
        e.out_layer = static_cast<int>(i);
        if ((l.kind == LayerKind::SharedMLP) && i + 1 < graph.layers.size() &&
            fused[i + 1] )
            e.out_layer = static_cast<int>(i) + 1;
        e.is_concat = l.kind == LayerKind::Concat;
        items.push_back(e);
    }

    // Consumers per output layer index (and -1 for the network input).
    auto consumers_of = [&](int idx) {
        std::vector<ConsumerRef> cs;
        for (std::size_t j = 0; j < graph.layers.size(); ++j) {
            const Layer& l = graph.layers[j];
            int primary = l.input;
            if (l.kind == LayerKind::MaxPool && fused[j])
                continue;  // the fused pool is not a real consumer
            if (primary == idx) cs.push_back({static_cast<int>(j), false});
            if (l.aux_input == idx) cs.push_back({static_cast<int>(j), true});
        }
        return cs;
    };

    Program p;
    p.feature_fmt = ffmt;
    std::int64_t cursor = 0;
    std::int64_t in_cols = 3;
    for (const Layer& l : graph.layers)
        if (l.input == -1) {
            in_cols = l.in_dim;
            break;
        }
    p.input = {cursor, n, in_cols};
    cursor += p.input.elems();

    std::vector<MemRegion> region(graph.layers.size());      // valid when routed external
    std::vector<bool> external(graph.layers.size(), false);
    std::vector<int> step_of_layer(graph.layers.size(), -1);

    // Routing: buffer an output only when its sole consumer is the next
    // program item reading it as matmul input.
    for (std::size_t it = 0; it < items.size(); ++it) {
        const int out_layer = items[it].out_layer;
        const Layer& ol = graph.layers[static_cast<std::size_t>(out_layer)];
        bool route_ext = true;
        if (it + 1 < items.size() && !items[it].is_concat) {
            const auto cs = consumers_of(out_layer);
            const int next_layer = items[it + 1].layer;
            if (cs.size() == 1 && cs[0].layer == next_layer && !cs[0].via_aux &&
                !items[it + 1].is_concat)
                route_ext = false;
        }
        external[static_cast<std::size_t>(out_layer)] = route_ext;
        if (route_ext) {
            const std::int64_t rows = graph.layer_rows(out_layer);
            region[static_cast<std::size_t>(out_layer)] = {cursor, rows, ol.out_dim};
            cursor += rows * ol.out_dim;
        }
    }

    auto source_loc = [&](int idx) -> DataLoc {
        if (idx < 0) return DataLoc::external(p.input.offset);
        if (!external[static_cast<std::size_t>(idx)]) return DataLoc::input_buffer();
        return DataLoc::external(region[static_cast<std::size_t>(idx)].offset);
    };
    auto source_region = [&](int idx) -> const MemRegion& {
        if (idx < 0) return p.input;
        return region[static_cast<std::size_t>(idx)];
    };

    for (std::size_t it = 0; it < items.size(); ++it) {
        const Emitter& e = items[it];
        const Layer& l = graph.layers[static_cast<std::size_t>(e.layer)];
        const int out_layer = e.out_layer;
        const bool ext = external[static_cast<std::size_t>(out_layer)];
        const DataLoc dst =
            ext ? DataLoc::external(region[static_cast<std::size_t>(out_layer)].offset)
                : DataLoc::input_buffer();

        if (e.is_concat) {
            const MemRegion& a = source_region(l.input);
            const MemRegion& b = source_region(l.aux_input);
            ConcatStep cc;
            cc.rows = a.rows;
            cc.cols_a = a.cols;
            cc.cols_b = b.cols;
            cc.src_a = a.offset;
            cc.src_b = b.offset;
            cc.dst = region[static_cast<std::size_t>(out_layer)].offset;
            p.steps.emplace_back(cc);
            step_of_layer[static_cast<std::size_t>(e.layer)] = static_cast<int>(it);
            continue;
        }

        Instruction ins;
        ins.n_rows = graph.layer_rows(l.input);
        ins.k_dim = l.in_dim;
        ins.c_dim = l.out_dim;
        ins.input_src = source_loc(l.input);
        ins.output_dst = dst;
        ins.activation = l.activation;
        if (out_layer != e.layer) {
            ins.op = OpKind::MatmulMaxpool;
            ins.orientation = OutputOrientation::ColumnOriented;
        }

        if (l.kind == LayerKind::TransformApply) {
            ins.weight_id = l.name;
            ins.requant_shift = ffmt.frac_bits;
            DynamicWeight dyn;
            dyn.id = l.name;
            const MemRegion& src = source_region(l.aux_input);
            dyn.src_offset = src.offset;
            dyn.rows = l.in_dim;
            dyn.cols = l.in_dim;
            dyn.fmt = ffmt;
            dyn.add_identity = true;
            dyn.producer_step = step_of_layer[static_cast<std::size_t>(l.aux_input)];
            p.dynamic_weights.push_back(dyn);
        } else {
            auto wit = weights.weights.find(l.name + ".weight");
            if (wit == weights.weights.end())
                throw BindError("compile: unbound weight: " + l.name);
            const QTensor& w = wit->second;
            if (w.rows() != l.in_dim || w.cols() != l.out_dim)
                throw BindError("compile: weight shape mismatch: " + l.name);
            ins.weight_id = l.name;
            // frac(in) + frac(w) - frac(out) with in/out both in the feature format.
            ins.requant_shift = w.fmt.frac_bits;
            const double bias_scale = std::ldexp(1.0, ffmt.frac_bits + w.fmt.frac_bits);
            std::vector<std::int64_t> bias_codes(static_cast<std::size_t>(l.out_dim), 0);
            auto bit = weights.biases.find(l.name + ".bias");
            if (bit != weights.biases.end()) {
                if (static_cast<std::int64_t>(bit->second.size()) != l.out_dim)
                    throw BindError("compile: bias length mismatch: " + l.name);
                for (std::size_t c = 0; c < bit->second.size(); ++c)
                    bias_codes[c] = std::llround(bit->second[c] * bias_scale);
            }
            p.weights.load(l.name, w, std::move(bias_codes));
        }
        p.steps.emplace_back(ins);
        step_of_layer[static_cast<std::size_t>(e.layer)] = static_cast<int>(it);
        if (out_layer != e.layer)
            step_of_layer[static_cast<std::size_t>(out_layer)] = static_cast<int>(it);
    }

    p.memory_elems = cursor;
    const int last_layer = items.back().out_layer;
    p.output = region[static_cast<std::size_t>(last_layer)];
    p.validate();
    return p;
}

}  // namespace pnacc
