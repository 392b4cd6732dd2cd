#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pnacc/program.hpp"

namespace pnacc {

// Timing/bandwidth knobs of the modeled platform. Functional results never
// depend on these; only PerfReport does.
struct MachineParams {
    TileConfig tile;
    double clock_hz = 150e6;
    double hp_peak_bits_per_s = 102.4e9;
    std::int64_t pipeline_fill_cycles = 37;  // adder-tree depth: m_unroll + log2(m_unroll)
    std::int64_t per_op_overhead_cycles = 256;  // buffer swap + descriptor setup
    int bytes_per_element = 1;

    // Defaults for a datapath width (1- or 2-byte elements) and tile shape;
    // pipeline fill tracks the tile's dot-product depth.
    static MachineParams for_bits(int bits, TileConfig tile = {});

    void validate() const;
};

struct PerfReport {
    std::int64_t macs = 0;
    std::int64_t ops = 0;  // 2 * macs
    std::int64_t compute_cycles = 0;
    std::int64_t dma_cycles = 0;
    std::int64_t total_cycles = 0;
    std::int64_t bytes_moved = 0;
    std::int64_t saturation_events = 0;
    double latency_s = 0.0;
    double effective_gops = 0.0;

    // Flat "key=value" lines, locale-independent.
    std::string to_kv() const;
    // Structured JSON document for machine consumption.
    std::string to_json() const;
};

enum class FsmState { Idle, Config, Load, Compute, Drain, LoadOverlap };

const char* fsm_state_name(FsmState s);

struct FsmEvent {
    std::int64_t cycle = 0;
    FsmState state = FsmState::Idle;
    int buffer_id = 0;  // ping-pong buffer fed by this instruction
    int instr_index = 0;
};

// CSV export: header "cycle,state,buffer_id,instruction_index".
std::string trace_to_csv(std::span<const FsmEvent> trace);

struct RunResult {
    QTensor output;
    PerfReport report;
    std::vector<FsmEvent> trace;
};

// Execute a validated program on the given input (n x input.cols tensor in
// the program's feature format). Outputs are bit-identical to running the
// tile-mm operations in step order with the programmed routing; the report
// and FSM trace come from the cycle model.
RunResult run_program(const Program& program, const QTensor& input, const MachineParams& mp);

// Cycle/bandwidth model only; no numerics are executed.
PerfReport estimate_latency(const Program& program, const MachineParams& mp);

}  // namespace pnacc
