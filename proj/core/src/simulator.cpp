#include "pnacc/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pnacc/errors.hpp"
#include "pnacc/text.hpp"

namespace pnacc {

MachineParams MachineParams::for_bits(int bits, TileConfig tile) {
    if (bits != 8 && bits != 16) throw std::invalid_argument("MachineParams: bits must be 8 or 16");
    MachineParams mp;
    mp.tile = tile;
    mp.bytes_per_element = bits / 8;
    mp.pipeline_fill_cycles =
        tile.m_unroll + std::bit_width(static_cast<unsigned>(tile.m_unroll)) - 1;
    return mp;
}

void MachineParams::validate() const {
    tile.validate();
    if (clock_hz <= 0 || hp_peak_bits_per_s <= 0)
        throw std::invalid_argument("MachineParams: rates must be positive");
    if (pipeline_fill_cycles < 0 || per_op_overhead_cycles < 0)
        throw std::invalid_argument("MachineParams: negative cycle counts");
    if (bytes_per_element != 1 && bytes_per_element != 2)
        throw std::invalid_argument("MachineParams: bytes_per_element must be 1 or 2");
}

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t dma_cycles_for(std::int64_t bytes, const MachineParams& mp) {
    if (bytes == 0) return 0;
    const double bits_per_cycle = mp.hp_peak_bits_per_s / mp.clock_hz;
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(bytes) * 8.0 / bits_per_cycle));
}

struct StageCost {
    bool is_instr = false;
    std::int64_t compute = 0;   // PE-array cycles
    std::int64_t in_cycles = 0;   // external input + dynamic weight fetch
    std::int64_t out_cycles = 0;  // external output drain
    std::int64_t macs = 0;
    std::int64_t bytes = 0;
};

std::vector<StageCost> stage_costs(const Program& p, const MachineParams& mp) {
    std::vector<StageCost> stages;
    stages.reserve(p.steps.size());
    const std::int64_t bpe = mp.bytes_per_element;
    for (const auto& step : p.steps) {
        StageCost sc;
        if (const auto* ins = std::get_if<Instruction>(&step)) {
            sc.is_instr = true;
            sc.compute = ins->n_rows * ceil_div(ins->k_dim, mp.tile.m_unroll) *
                             ceil_div(ins->c_dim, mp.tile.n_unroll) +
                         mp.pipeline_fill_cycles;
            sc.macs = ins->n_rows * ins->k_dim * ins->c_dim;
            std::int64_t in_bytes = 0;
            if (ins->input_src.is_external()) in_bytes += ins->n_rows * ins->k_dim * bpe;
            if (const auto* dyn = p.find_dynamic(ins->weight_id))
                in_bytes += dyn->rows * dyn->cols * bpe;
            const std::int64_t out_bytes =
                ins->output_dst.is_external() ? ins->out_rows() * ins->c_dim * bpe : 0;
            sc.in_cycles = dma_cycles_for(in_bytes, mp);
            sc.out_cycles = dma_cycles_for(out_bytes, mp);
            sc.bytes = in_bytes + out_bytes;
        } else {
            const auto& cc = std::get<ConcatStep>(step);
            const std::int64_t in_bytes = (cc.rows * cc.cols_a + cc.cols_b) * bpe;
            const std::int64_t out_bytes = cc.rows * (cc.cols_a + cc.cols_b) * bpe;
            sc.in_cycles = dma_cycles_for(in_bytes, mp);
            sc.out_cycles = dma_cycles_for(out_bytes, mp);
            sc.bytes = in_bytes + out_bytes;
        }
        stages.push_back(sc);
    }
    return stages;
}

struct Schedule {
    PerfReport report;
    std::vector<std::int64_t> compute_start;  // per step; instructions only
    std::vector<bool> load_overlapped;        // per step; true when the input
                                              // load was issued during the
                                              // previous instruction's compute
};

// Double-buffered pipeline: the first instruction's input load is a prologue,
// each stage then runs max(compute of i, load of i+1, drain of i-1) plus the
// per-operation overhead, and the last drain is an epilogue. Concat steps are
// processor-side and serialize.
Schedule schedule_program(const Program& p, const MachineParams& mp) {
    const auto costs = stage_costs(p, mp);
    Schedule sch;
    sch.compute_start.assign(costs.size(), 0);
    sch.load_overlapped.assign(costs.size(), false);

    std::int64_t t = 0;
    std::int64_t pending_drain = 0;
    bool prev_was_instr = false;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        const StageCost& sc = costs[i];
        if (!sc.is_instr) {
            t += pending_drain;
            pending_drain = 0;
            t += sc.in_cycles + sc.out_cycles;
            prev_was_instr = false;
            continue;
        }
        sch.load_overlapped[i] = prev_was_instr && sc.in_cycles > 0;
        if (!prev_was_instr) t += sc.in_cycles;
        const std::int64_t next_load =
            (i + 1 < costs.size() && costs[i + 1].is_instr) ? costs[i + 1].in_cycles : 0;
        sch.compute_start[i] = t;
        t += std::max({sc.compute, next_load, pending_drain}) + mp.per_op_overhead_cycles;
        pending_drain = sc.out_cycles;
        prev_was_instr = true;
    }
    t += pending_drain;

    PerfReport& r = sch.report;
    for (const StageCost& sc : costs) {
        r.macs += sc.macs;
        r.compute_cycles += sc.compute;
        r.dma_cycles += sc.in_cycles + sc.out_cycles;
        r.bytes_moved += sc.bytes;
    }
    r.ops = 2 * r.macs;
    r.total_cycles = t;
    r.latency_s = static_cast<double>(t) / mp.clock_hz;
    r.effective_gops = r.latency_s > 0 ? static_cast<double>(r.ops) / r.latency_s / 1e9 : 0.0;
    return sch;
}

std::vector<FsmEvent> build_trace(const Program& p, const MachineParams& mp,
                                  const Schedule& sch) {
    const auto costs = stage_costs(p, mp);
    std::vector<FsmEvent> trace;

    // Register-file load phase: the whole program is configured up front, so
    // no Config state ever follows a Compute state.
    int instr_seq = 0;
    for (std::size_t i = 0; i < p.steps.size(); ++i) {
        if (!std::holds_alternative<Instruction>(p.steps[i])) continue;
        trace.push_back({0, FsmState::Idle, instr_seq % 2, instr_seq});
        trace.push_back({0, FsmState::Config, instr_seq % 2, instr_seq});
        ++instr_seq;
    }

    instr_seq = 0;
    int prev_instr_stage = -1;
    for (std::size_t i = 0; i < p.steps.size(); ++i) {
        if (!std::holds_alternative<Instruction>(p.steps[i])) {
            prev_instr_stage = -1;
            continue;
        }
        const int buf = instr_seq % 2;
        std::int64_t load_cycle;
        if (sch.load_overlapped[i] && prev_instr_stage >= 0) {
            load_cycle = sch.compute_start[prev_instr_stage];
            trace.push_back({load_cycle, FsmState::Load, buf, instr_seq});
            trace.push_back({load_cycle, FsmState::LoadOverlap, buf, instr_seq});
        } else {
            load_cycle = sch.compute_start[i] - costs[i].in_cycles;
            trace.push_back({load_cycle, FsmState::Load, buf, instr_seq});
        }
        trace.push_back({sch.compute_start[i], FsmState::Compute, buf, instr_seq});
        trace.push_back(
            {sch.compute_start[i] + costs[i].compute, FsmState::Drain, buf, instr_seq});
        prev_instr_stage = static_cast<int>(i);
        ++instr_seq;
    }
    std::stable_sort(trace.begin(), trace.end(),
                     [](const FsmEvent& a, const FsmEvent& b) { return a.cycle < b.cycle; });
    return trace;
}

QTensor read_region(const std::vector<std::int32_t>& mem, const MemRegion& r, FixedFormat fmt) {
    QTensor t;
    t.dims = {r.rows, r.cols};
    t.fmt = fmt;
    t.codes.assign(mem.begin() + r.offset, mem.begin() + r.offset + r.elems());
    return t;
}

void write_region(std::vector<std::int32_t>& mem, std::int64_t offset, const QTensor& t) {
    std::copy(t.codes.begin(), t.codes.end(), mem.begin() + offset);
}

QTensor materialize_dynamic(const std::vector<std::int32_t>& mem, const DynamicWeight& dyn) {
    QTensor w;
    w.dims = {dyn.rows, dyn.cols};
    w.fmt = dyn.fmt;
    w.codes.assign(mem.begin() + dyn.src_offset,
                   mem.begin() + dyn.src_offset + dyn.rows * dyn.cols);
    if (dyn.add_identity) {
        const std::int64_t one = std::int64_t{1} << dyn.fmt.frac_bits;
        const std::int64_t lo = dyn.fmt.min_code(), hi = dyn.fmt.max_code();
        for (std::int64_t d = 0; d < std::min(dyn.rows, dyn.cols); ++d) {
            std::int64_t v = w.codes[d * dyn.cols + d] + one;
            w.codes[d * dyn.cols + d] = static_cast<std::int32_t>(std::clamp(v, lo, hi));
        }
    }
    return w;
}

}  // namespace

RunResult run_program(const Program& program, const QTensor& input, const MachineParams& mp) {
    program.validate();
    mp.validate();
    input.validate();
    if (input.rows() > kMaxPoints)
        throw CapacityError("run_program: input exceeds the 4096-point capacity");
    if (input.rows() != program.input.rows || input.cols() != program.input.cols)
        throw std::invalid_argument("run_program: input shape does not match program descriptor");
    if (!(input.fmt == program.feature_fmt))
        throw std::invalid_argument("run_program: input format does not match program");

    std::vector<std::int32_t> mem(static_cast<std::size_t>(program.memory_elems), 0);
    write_region(mem, program.input.offset, input);

    std::int64_t saturations = 0;
    QTensor buffer;  // ping-pong buffer contents when the previous op routed there
    for (const auto& step : program.steps) {
        if (const auto* ins = std::get_if<Instruction>(&step)) {
            QTensor a = ins->input_src.is_external()
                            ? read_region(mem, {ins->input_src.offset, ins->n_rows, ins->k_dim},
                                          program.feature_fmt)
                            : std::move(buffer);
            QTensor dyn_w;
            const WeightEntry* entry = nullptr;
            std::span<const std::int64_t> bias;
            const QTensor* w = nullptr;
            if (const auto* dyn = program.find_dynamic(ins->weight_id)) {
                dyn_w = materialize_dynamic(mem, *dyn);
                w = &dyn_w;
            } else {
                entry = &program.weights.get(ins->weight_id);
                w = &entry->weight;
                bias = entry->bias;
            }
            QTensor result =
                ins->op == OpKind::MatmulMaxpool
                    ? matmul_maxpool(a, *w, bias, mp.tile, ins->activation, ins->requant_shift,
                                     program.feature_fmt, nullptr, &saturations)
                    : matmul_tiled(a, *w, bias, mp.tile, ins->orientation, ins->activation,
                                   ins->requant_shift, program.feature_fmt, nullptr,
                                   &saturations);
            if (ins->output_dst.is_external())
                write_region(mem, ins->output_dst.offset, result);
            else
                buffer = std::move(result);
        } else {
            const auto& cc = std::get<ConcatStep>(step);
            for (std::int64_t i = 0; i < cc.rows; ++i) {
                std::copy_n(mem.begin() + cc.src_a + i * cc.cols_a, cc.cols_a,
                            mem.begin() + cc.dst + i * (cc.cols_a + cc.cols_b));
                std::copy_n(mem.begin() + cc.src_b, cc.cols_b,
                            mem.begin() + cc.dst + i * (cc.cols_a + cc.cols_b) + cc.cols_a);
            }
        }
    }

    Schedule sch = schedule_program(program, mp);
    RunResult rr;
    rr.output = read_region(mem, program.output, program.feature_fmt);
    rr.report = sch.report;
    rr.report.saturation_events = saturations;
    rr.trace = build_trace(program, mp, sch);
    return rr;
}

PerfReport estimate_latency(const Program& program, const MachineParams& mp) {
    program.validate();
    mp.validate();
    return schedule_program(program, mp).report;
}

std::string PerfReport::to_kv() const {
    std::ostringstream os;
    os << "macs=" << macs << "\n"
       << "ops=" << ops << "\n"
       << "compute_cycles=" << compute_cycles << "\n"
       << "dma_cycles=" << dma_cycles << "\n"
       << "total_cycles=" << total_cycles << "\n"
       << "bytes_moved=" << bytes_moved << "\n"
       << "saturation_events=" << saturation_events << "\n"
       << "latency_s=" << format_double(latency_s) << "\n"
       << "effective_gops=" << format_double(effective_gops) << "\n";
    return os.str();
}

std::string PerfReport::to_json() const {
    nlohmann::json j;
    j["macs"] = macs;
    j["ops"] = ops;
    j["compute_cycles"] = compute_cycles;
    j["dma_cycles"] = dma_cycles;
    j["total_cycles"] = total_cycles;
    j["bytes_moved"] = bytes_moved;
    j["saturation_events"] = saturation_events;
    j["latency_s"] = latency_s;
    j["effective_gops"] = effective_gops;
    return j.dump(2);
}

const char* fsm_state_name(FsmState s) {
    switch (s) {
        case FsmState::Idle: return "IDLE";
        case FsmState::Config: return "CONFIG";
        case FsmState::Load: return "LOAD";
        case FsmState::Compute: return "COMPUTE";
        case FsmState::Drain: return "DRAIN";
        case FsmState::LoadOverlap: return "LOAD_OVERLAP";
    }
    return "?";
}

std::string trace_to_csv(std::span<const FsmEvent> trace) {
    std::ostringstream os;
    os << "cycle,state,buffer_id,instruction_index\n";
    for (const FsmEvent& e : trace)
        os << e.cycle << ',' << fsm_state_name(e.state) << ',' << e.buffer_id << ','
           << e.instr_index << "\n";
    return os.str();
}

}  // namespace pnacc
