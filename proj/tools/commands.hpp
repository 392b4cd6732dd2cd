#pragma once

#include <cstdint>
#include <string>

namespace pnacc::cli {

struct QuantizeArgs {
    std::string input;
    std::string output;
    int bits = 8;
    std::string net;    // optional: vanilla-cls|cls|seg, validates names/dims
    std::string calib;  // optional CSV of calibration points (requires net)
    int feature_frac = -1;  // -1 = default / calibrated
};

struct DecodeArgs {
    std::string input;  // path to .vlpcap or "udp:<port>"
    std::string out_prefix;
    std::string roi;  // "x0,x1,y0,y1"; empty = default box
    std::int64_t cap = 4096;
    std::string mode = "subsample";
    std::uint64_t seed = 0;
    std::int64_t max_frames = 0;  // udp source: stop after N frames (0 = idle timeout)
    std::int64_t idle_timeout_ms = 1000;
    bool no_roi = false;
};

struct InferArgs {
    std::string net = "cls";
    std::string weights;
    std::string points;
    int bits = 8;
    std::string tile = "32,32";
    std::string report;  // optional PerfReport path (.json -> JSON, else key=value)
    std::string trace;   // optional FSM trace CSV path
    std::string out;     // segmentation labels CSV ("" = stdout)
    double clock_hz = 150e6;
};

struct BenchArgs {
    std::string net = "cls";
    std::int64_t n = 4096;
    int bits = 8;
    double clock_hz = 150e6;
    std::string tile = "32,32";
    std::int64_t num_classes = 40;
    std::int64_t num_seg_classes = 50;
};

int run_quantize(const QuantizeArgs& args);
int run_decode(const DecodeArgs& args);
int run_infer(const InferArgs& args);
int run_bench(const BenchArgs& args);

}  // namespace pnacc::cli
