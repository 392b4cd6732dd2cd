#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "pnacc/errors.hpp"

// Exit codes: 0 success, 2 input-format error, 3 weight/network mismatch,
// 4 capacity violation.
int main(int argc, char** argv) {
    CLI::App app{"Bit-accurate model of a PointNet FPGA accelerator and its VLP-16 front-end"};
    app.require_subcommand(1);

    pnacc::cli::QuantizeArgs qargs;
    auto* quantize = app.add_subcommand("quantize", "Quantize a float weight container");
    quantize->add_option("--in", qargs.input, "Input float container (.pnqw)")->required();
    quantize->add_option("--out", qargs.output, "Output quantized container")->required();
    quantize->add_option("--bits", qargs.bits, "Datapath width (8 or 16)");
    quantize->add_option("--net", qargs.net, "Validate names/dims against vanilla-cls|cls|seg");
    quantize->add_option("--calib", qargs.calib, "Calibration point CSV (needs --net)");
    quantize->add_option("--feature-frac", qargs.feature_frac,
                         "Feature frac_bits override (default Q8.4 / Q16.8)");

    pnacc::cli::DecodeArgs dargs;
    auto* decode = app.add_subcommand("decode", "Decode a capture file or UDP stream to CSV");
    decode->add_option("--in", dargs.input, ".vlpcap path or udp:<port>")->required();
    decode->add_option("--out", dargs.out_prefix, "Output CSV prefix")->required();
    decode->add_option("--roi", dargs.roi, "x0,x1,y0,y1 box (default -10,10,0,60)");
    decode->add_flag("--no-roi", dargs.no_roi, "Keep all points");
    decode->add_option("--cap", dargs.cap, "Per-frame point capacity");
    decode->add_option("--mode", dargs.mode, "subsample|partition");
    decode->add_option("--seed", dargs.seed, "Subsample seed");
    decode->add_option("--frames", dargs.max_frames, "Stop after N frames (udp source)");
    decode->add_option("--idle-timeout-ms", dargs.idle_timeout_ms,
                       "Stop when the stream is quiet this long (udp source)");

    pnacc::cli::InferArgs iargs;
    auto* infer = app.add_subcommand("infer", "Run a point cloud through the simulated network");
    infer->add_option("--net", iargs.net, "vanilla-cls|cls|seg");
    infer->add_option("--weights", iargs.weights, "Quantized container (.pnqw)")->required();
    infer->add_option("--points", iargs.points, "Point CSV (x,y,z[,reflectivity])")->required();
    infer->add_option("--bits", iargs.bits, "Datapath width (8 or 16)");
    infer->add_option("--tile", iargs.tile, "Tile M,N (default 32,32)");
    infer->add_option("--report", iargs.report, "Write PerfReport (.json for JSON)");
    infer->add_option("--trace", iargs.trace, "Write FSM trace CSV");
    infer->add_option("--out", iargs.out, "Segmentation label CSV path (default stdout)");
    infer->add_option("--clock", iargs.clock_hz, "Clock in Hz (default 150e6)");

    pnacc::cli::BenchArgs bargs;
    auto* bench = app.add_subcommand("bench", "Model throughput/latency for a network");
    bench->add_option("--net", bargs.net, "vanilla-cls|cls|seg");
    bench->add_option("--n", bargs.n, "Point count (default 4096)");
    bench->add_option("--bits", bargs.bits, "Datapath width (8 or 16)");
    bench->add_option("--clock", bargs.clock_hz, "Clock in Hz (default 150e6)");
    bench->add_option("--tile", bargs.tile, "Tile M,N (default 32,32)");
    bench->add_option("--classes", bargs.num_classes, "Classification classes (default 40)");
    bench->add_option("--seg-classes", bargs.num_seg_classes,
                      "Segmentation classes (default 50)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*quantize) return pnacc::cli::run_quantize(qargs);
        if (*decode) return pnacc::cli::run_decode(dargs);
        if (*infer) return pnacc::cli::run_infer(iargs);
        if (*bench) return pnacc::cli::run_bench(bargs);
    } catch (const pnacc::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const pnacc::BindError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const pnacc::CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
