#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include "pnacc/errors.hpp"
#include "pnacc/pointnet.hpp"
#include "pnacc/simulator.hpp"
#include "pnacc/text.hpp"
#include "pnacc/udp.hpp"
#include "pnacc/velodyne.hpp"
#include "pnacc/weight_container.hpp"

namespace pnacc::cli {

namespace {

bool verbose() {
    const char* v = std::getenv("PNACC_VERBOSE");
    return v && *v && std::string(v) != "0";
}

void log_info(const std::string& msg) {
    if (verbose()) std::cerr << "[pnacc] " << msg << "\n";
}

NetworkKind parse_net(const std::string& s) {
    if (s == "vanilla-cls") return NetworkKind::VanillaCls;
    if (s == "cls") return NetworkKind::FullCls;
    if (s == "seg") return NetworkKind::FullSeg;
    throw FormatError("unknown network: " + s + " (expected vanilla-cls|cls|seg)");
}

TileConfig parse_tile(const std::string& s) {
    TileConfig tile;
    if (s.empty()) return tile;
    std::istringstream is(s);
    char sep = 0;
    if (!(is >> tile.m_unroll >> sep >> tile.n_unroll) || (sep != ',' && sep != 'x'))
        throw FormatError("bad --tile value: " + s + " (expected M,N)");
    tile.validate();
    return tile;
}

RoiBox parse_roi(const std::string& s) {
    RoiBox roi;
    if (s.empty()) return roi;
    std::istringstream is(s);
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(is >> roi.x_min >> c1 >> roi.x_max >> c2 >> roi.y_min >> c3 >> roi.y_max) ||
        c1 != ',' || c2 != ',' || c3 != ',')
        throw FormatError("bad --roi value: " + s + " (expected x0,x1,y0,y1)");
    roi.validate();
    return roi;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

FloatTensor points_tensor(const std::vector<CartesianPoint>& pts) {
    FloatTensor t;
    t.dims = {static_cast<std::int64_t>(pts.size()), 3};
    t.values.reserve(pts.size() * 3);
    for (const CartesianPoint& p : pts) {
        t.values.push_back(p.x);
        t.values.push_back(p.y);
        t.values.push_back(p.z);
    }
    return t;
}

// Class count is carried by the head weights: fc3 for classification,
// seg4 for segmentation.
std::int64_t head_classes(const QuantizedWeightSet& qs, NetworkKind kind) {
    const char* head = kind == NetworkKind::FullSeg ? "seg4.weight" : "fc3.weight";
    auto it = qs.weights.find(head);
    if (it == qs.weights.end())
        throw BindError(std::string("container lacks the network head tensor ") + head);
    return it->second.cols();
}

void write_report(const PerfReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open report path: " + path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
        os << report.to_json() << "\n";
    else
        os << report.to_kv();
}

WeightSet zero_weights_for(const NetworkGraph& graph) {
    WeightSet ws;
    for (const Layer& l : graph.layers) {
        if (l.kind != LayerKind::SharedMLP && l.kind != LayerKind::FC) continue;
        FloatTensor w;
        w.dims = {l.in_dim, l.out_dim};
        w.values.assign(static_cast<std::size_t>(l.in_dim * l.out_dim), 0.0);
        ws.tensors.emplace(l.name + ".weight", std::move(w));
    }
    return ws;
}

struct ReferenceRow {
    NetworkKind kind;
    int bits;
    double gops;
    double ms;
};

// Throughput and per-frame latency of the FPGA implementation this model is
// calibrated against (ZCU104, 32x32 tile, 4096 points).
constexpr ReferenceRow kFpgaReference[] = {
    {NetworkKind::VanillaCls, 8, 112.5, 10.9}, {NetworkKind::VanillaCls, 16, 64.9, 18.9},
    {NetworkKind::FullCls, 8, 182.1, 19.8},    {NetworkKind::FullCls, 16, 130.0, 27.8},
    {NetworkKind::FullSeg, 8, 280.0, 34.6},    {NetworkKind::FullSeg, 16, 227.4, 42.6},
};

const ReferenceRow* find_reference(NetworkKind kind, int bits) {
    for (const ReferenceRow& r : kFpgaReference)
        if (r.kind == kind && r.bits == bits) return &r;
    return nullptr;
}

}  // namespace

int run_quantize(const QuantizeArgs& args) {
    if (args.bits != 8 && args.bits != 16) throw FormatError("--bits must be 8 or 16");
    const WeightSet ws = entries_to_weight_set(read_weight_container(args.input));
    std::optional<int> frac;
    if (args.feature_frac >= 0) frac = args.feature_frac;

    QuantizeStats stats;
    QuantizedWeightSet qs;
    if (!args.net.empty()) {
        const NetworkKind kind = parse_net(args.net);
        std::int64_t k = 1, m = 1;
        {
            const char* head = kind == NetworkKind::FullSeg ? "seg4.weight" : "fc3.weight";
            auto it = ws.tensors.find(head);
            if (it == ws.tensors.end())
                throw BindError(std::string("container lacks the network head tensor ") + head);
            (kind == NetworkKind::FullSeg ? m : k) = it->second.cols();
        }
        if (!args.calib.empty() && !frac) {
            const auto pts = parse_pointcloud_csv(read_text_file(args.calib));
            if (pts.empty()) throw FormatError("calibration file holds no points: " + args.calib);
            if (static_cast<std::int64_t>(pts.size()) > kMaxPoints)
                throw CapacityError("calibration cloud exceeds 4096 points");
            const NetworkGraph cg =
                build_network(kind, static_cast<std::int64_t>(pts.size()), k, m);
            frac = calibrate_feature_frac(cg, ws, points_tensor(pts), args.bits);
            log_info("calibrated feature frac_bits = " + std::to_string(*frac));
        }
        const NetworkGraph graph = build_network(kind, kMaxPoints, k, m);
        qs = quantize_weights(graph, ws, args.bits, frac, &stats);
    } else {
        if (!args.calib.empty())
            throw FormatError("--calib requires --net to run the calibration forward pass");
        // Generic path: every "<layer>.weight" tensor, folding "<layer>" BN
        // parameters when present.
        qs.feature_fmt = FixedFormat::features(args.bits);
        if (frac) qs.feature_fmt.frac_bits = *frac;
        qs.feature_fmt.validate();
        for (const auto& [name, t] : ws.tensors) {
            constexpr const char* kSuffix = ".weight";
            if (name.size() <= 7 || name.substr(name.size() - 7) != kSuffix) continue;
            const std::string layer = name.substr(0, name.size() - 7);
            if (t.dims.size() != 2) throw BindError("weight tensor must be 2-D: " + name);
            std::vector<double> wv = t.values;
            std::vector<double> bv(static_cast<std::size_t>(t.cols()), 0.0);
            if (auto bit = ws.tensors.find(layer + ".bias"); bit != ws.tensors.end())
                bv = bit->second.values;
            if (auto bn = ws.bn.find(layer); bn != ws.bn.end()) {
                FoldedAffine folded = fold_batchnorm(wv, t.rows(), t.cols(), bv, bn->second);
                wv = std::move(folded.weight);
                bv = std::move(folded.bias);
            }
            FixedFormat wfmt{args.bits, choose_frac_bits(wv, args.bits)};
            qs.weights.emplace(name, quantize(wv, t.dims, wfmt, &stats));
            qs.biases.emplace(layer + ".bias", std::move(bv));
        }
        if (qs.weights.empty()) throw BindError("no .weight tensors found in " + args.input);
    }

    write_weight_container(args.output, quantized_set_to_entries(qs));
    std::cout << "tensors=" << qs.weights.size() << " bits=" << args.bits
              << " feature_frac=" << qs.feature_fmt.frac_bits
              << " saturated_codes=" << stats.saturated << "\n";
    return 0;
}

namespace {

struct DecodeSink {
    const DecodeArgs& args;
    RoiBox roi;
    FitMode mode;
    std::int64_t frames = 0;
    std::int64_t parts = 0;
    std::int64_t roi_points = 0;
    std::int64_t capped_points = 0;

    void emit(const PolarFrame& polar) {
        const PointCloudFrame cart = frame_to_cartesian(polar);
        const PointCloudFrame filtered = args.no_roi ? cart : roi_filter(cart, roi);
        roi_points += static_cast<std::int64_t>(filtered.points.size());
        const auto fitted = fit_to_capacity(filtered, args.cap, mode, args.seed);
        for (const PointCloudFrame& f : fitted) {
            capped_points += static_cast<std::int64_t>(f.points.size());
            std::ostringstream name;
            name << args.out_prefix << "_" << std::setw(3) << std::setfill('0') << parts
                 << ".csv";
            std::ofstream os(name.str(), std::ios::binary);
            if (!os) throw FormatError("cannot open output: " + name.str());
            os << pointcloud_to_csv(f);
            ++parts;
        }
        ++frames;
    }
};

}  // namespace

int run_decode(const DecodeArgs& args) {
    if (args.cap < 1) throw FormatError("--cap must be >= 1");
    FitMode mode;
    if (args.mode == "subsample")
        mode = FitMode::Subsample;
    else if (args.mode == "partition")
        mode = FitMode::Partition;
    else
        throw FormatError("bad --mode: " + args.mode + " (expected subsample|partition)");

    DecodeSink sink{args, parse_roi(args.roi), mode};
    FrameAssembler assembler;

    if (args.input.rfind("udp", 0) == 0) {
        // "udp" or "udp:" listens on the sensor's stock port 2368.
        int port = 2368;
        if (args.input.size() > 4 && args.input[3] == ':')
            port = std::stoi(args.input.substr(4));
        else if (args.input != "udp" && args.input != "udp:")
            throw FormatError("bad --in value: " + args.input);
        UdpListener listener(static_cast<std::uint16_t>(port));
        log_info("listening on UDP port " + std::to_string(listener.port()));
        for (;;) {
            auto rec = listener.next(std::chrono::milliseconds(args.idle_timeout_ms));
            if (!rec) break;  // idle: stream is quiet, stop
            if (auto frame = assembler.push_packet(rec->timestamp_us, rec->payload))
                sink.emit(*frame);
            if (args.max_frames > 0 && sink.frames >= args.max_frames) break;
        }
        if (auto frame = assembler.flush())
            if (args.max_frames == 0 || sink.frames < args.max_frames) sink.emit(*frame);
    } else {
        const auto records = read_capture(args.input);
        for (const CaptureRecord& r : records)
            if (auto frame = assembler.push_packet(r.timestamp_us, r.payload)) sink.emit(*frame);
        if (auto frame = assembler.flush()) sink.emit(*frame);
    }

    std::cout << "frames=" << sink.frames << " parts=" << sink.parts
              << " decoded_points=" << assembler.points_decoded()
              << " roi_points=" << sink.roi_points << " capped_points=" << sink.capped_points
              << " rejected_packets=" << assembler.packets_rejected()
              << " out_of_order=" << assembler.packets_dropped_out_of_order() << "\n";
    return 0;
}

int run_infer(const InferArgs& args) {
    if (args.bits != 8 && args.bits != 16) throw FormatError("--bits must be 8 or 16");
    const NetworkKind kind = parse_net(args.net);
    const auto pts = parse_pointcloud_csv(read_text_file(args.points));
    if (pts.empty()) throw FormatError("no points in " + args.points);
    if (static_cast<std::int64_t>(pts.size()) > kMaxPoints)
        throw CapacityError("input exceeds the 4096-point capacity: " +
                            std::to_string(pts.size()) + " points");

    const QuantizedWeightSet qs = entries_to_quantized_set(read_weight_container(args.weights));
    if (qs.feature_fmt.total_bits != args.bits)
        throw BindError("container width does not match --bits");
    for (const auto& [name, w] : qs.weights)
        if (w.fmt.total_bits != args.bits)
            throw BindError("weight tensor width does not match --bits: " + name);

    const std::int64_t n = static_cast<std::int64_t>(pts.size());
    const std::int64_t classes = head_classes(qs, kind);
    const NetworkGraph graph =
        build_network(kind, n, kind == NetworkKind::FullSeg ? 1 : classes,
                      kind == NetworkKind::FullSeg ? classes : 0);

    MachineParams mp = MachineParams::for_bits(args.bits, parse_tile(args.tile));
    mp.clock_hz = args.clock_hz;
    const Program program = compile(graph, qs, mp.tile);

    const FloatTensor points = points_tensor(pts);
    QuantizeStats in_stats;
    const QTensor input = quantize(points.values, {n, 3}, qs.feature_fmt, &in_stats);
    log_info("input saturations: " + std::to_string(in_stats.saturated));

    const RunResult rr = run_program(program, input, mp);

    if (kind == NetworkKind::FullSeg) {
        std::ostringstream os;
        os << "point,label\n";
        for (std::int64_t i = 0; i < rr.output.rows(); ++i) {
            std::int64_t best = 0;
            for (std::int64_t c = 1; c < rr.output.cols(); ++c)
                if (rr.output.at(i, c) > rr.output.at(i, best)) best = c;
            os << i << ',' << best << "\n";
        }
        if (args.out.empty()) {
            std::cout << os.str();
        } else {
            std::ofstream f(args.out, std::ios::binary);
            if (!f) throw FormatError("cannot open output: " + args.out);
            f << os.str();
        }
    } else {
        const std::vector<double> scores = dequantize(rr.output);
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.size(); ++c)
            if (scores[c] > scores[best]) best = c;
        std::cout << "class=" << best << "\n" << "scores=";
        for (std::size_t c = 0; c < scores.size(); ++c)
            std::cout << (c ? "," : "") << format_double(scores[c]);
        std::cout << "\n";
    }

    if (!args.report.empty()) write_report(rr.report, args.report);
    if (!args.trace.empty()) {
        std::ofstream f(args.trace, std::ios::binary);
        if (!f) throw FormatError("cannot open trace path: " + args.trace);
        f << trace_to_csv(rr.trace);
    }
    return 0;
}

int run_bench(const BenchArgs& args) {
    if (args.bits != 8 && args.bits != 16) throw FormatError("--bits must be 8 or 16");
    const NetworkKind kind = parse_net(args.net);
    const NetworkGraph graph =
        build_network(kind, args.n, args.num_classes, args.num_seg_classes);

    const WeightSet ws = zero_weights_for(graph);
    const QuantizedWeightSet qs = quantize_weights(graph, ws, args.bits);
    MachineParams mp = MachineParams::for_bits(args.bits, parse_tile(args.tile));
    mp.clock_hz = args.clock_hz;

    const Program program = compile(graph, qs, mp.tile);
    const PerfReport report = estimate_latency(program, mp);
    const OpCount counted = count_ops(graph);

    std::cout << "net=" << args.net << "\n"
              << "bits=" << args.bits << "\n"
              << "n=" << args.n << "\n"
              << "tile=" << mp.tile.m_unroll << "x" << mp.tile.n_unroll << "\n"
              << "clock_hz=" << format_double(mp.clock_hz) << "\n"
              << "graph_macs=" << counted.macs << "\n"
              << "graph_ops=" << counted.ops << "\n"
              << report.to_kv() << "latency_ms=" << format_double(report.latency_s * 1e3) << "\n"
              << "roofline_gops="
              << format_double(2.0 * mp.tile.m_unroll * mp.tile.n_unroll * mp.clock_hz / 1e9)
              << "\n";

    if (const ReferenceRow* ref = find_reference(kind, args.bits);
        ref != nullptr && args.n == kMaxPoints) {
        const double ref_ops = ref->gops * 1e9 * (ref->ms * 1e-3);
        std::cout << "reference_gops=" << format_double(ref->gops) << "\n"
                  << "reference_ms=" << format_double(ref->ms) << "\n"
                  << "reference_ops=" << format_double(ref_ops) << "\n"
                  << "reference_fps=" << format_double(1000.0 / ref->ms) << "\n"
                  << "consistency_ratio="
                  << format_double(static_cast<double>(report.ops) / ref_ops) << "\n";
    }
    return 0;
}

}  // namespace pnacc::cli
