#include "pnacc/program.hpp"

#include <stdexcept>

#include "pnacc/errors.hpp"

namespace pnacc {

void WeightStore::load(const std::string& id, QTensor weight, std::vector<std::int64_t> bias) {
    if (entries_.count(id)) throw BindError("WeightStore: id already loaded: " + id);
    weight.validate();
    if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != weight.cols())
        throw BindError("WeightStore: bias length does not match weight columns: " + id);
    const std::int64_t bytes =
        weight.size() * (weight.fmt.total_bits / 8) + static_cast<std::int64_t>(bias.size()) * 8;
    if (capacity_bytes_ > 0 && bytes_used_ + bytes > capacity_bytes_)
        throw CapacityError("WeightStore: capacity exceeded loading " + id);
    bytes_used_ += bytes;
    entries_.emplace(id, WeightEntry{std::move(weight), std::move(bias)});
}

const WeightEntry& WeightStore::get(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw BindError("WeightStore: unbound id: " + id);
    return it->second;
}

const DynamicWeight* Program::find_dynamic(const std::string& id) const {
    for (const auto& d : dynamic_weights)
        if (d.id == id) return &d;
    return nullptr;
}

namespace {

void check_region(const MemRegion& r, std::int64_t memory_elems, const char* what) {
    if (r.rows <= 0 || r.cols <= 0 || r.offset < 0)
        throw std::invalid_argument(std::string("Program: bad region for ") + what);
    if (r.offset + r.elems() > memory_elems)
        throw std::invalid_argument(std::string("Program: region out of bounds for ") + what);
}

}  // namespace

void Program::validate() const {
    if (steps.empty()) throw std::invalid_argument("Program: no steps");
    feature_fmt.validate();
    check_region(input, memory_elems, "input");
    check_region(output, memory_elems, "output");

    const Instruction* prev_instr = nullptr;
    bool prev_step_was_instr = false;
    for (std::size_t s = 0; s < steps.size(); ++s) {
        if (const auto* ins = std::get_if<Instruction>(&steps[s])) {
            if (ins->n_rows <= 0 || ins->k_dim <= 0 || ins->c_dim <= 0)
                throw std::invalid_argument("Program: non-positive instruction dims");
            if (ins->n_rows > kMaxPoints)
                throw CapacityError("Program: n_rows exceeds the 4096-point capacity");
            if (ins->requant_shift < 0)
                throw std::invalid_argument("Program: negative requant_shift");
            if (ins->op == OpKind::MatmulMaxpool &&
                ins->orientation != OutputOrientation::ColumnOriented)
                throw std::invalid_argument(
                    "Program: fused max-pool requires column-oriented output");

            if (const auto* dyn = find_dynamic(ins->weight_id)) {
                if (dyn->rows != ins->k_dim || dyn->cols != ins->c_dim)
                    throw BindError("Program: dynamic weight shape mismatch: " + ins->weight_id);
                if (dyn->producer_step < 0 || dyn->producer_step >= static_cast<int>(s))
                    throw BindError("Program: dynamic weight not produced before use: " +
                                    ins->weight_id);
                check_region({dyn->src_offset, 1, dyn->rows * dyn->cols}, memory_elems,
                             "dynamic weight");
            } else {
                const WeightEntry& entry = weights.get(ins->weight_id);
                if (entry.weight.rows() != ins->k_dim || entry.weight.cols() != ins->c_dim)
                    throw BindError("Program: weight shape mismatch: " + ins->weight_id);
            }

            if (ins->input_src.is_external()) {
                check_region({ins->input_src.offset, ins->n_rows, ins->k_dim}, memory_elems,
                             "instruction input");
            } else {
                if (!prev_step_was_instr || prev_instr == nullptr ||
                    prev_instr->output_dst.is_external())
                    throw std::invalid_argument(
                        "Program: InputBuffer read without a buffered producer");
                if (prev_instr->out_rows() != ins->n_rows || prev_instr->c_dim != ins->k_dim)
                    throw std::invalid_argument("Program: InputBuffer shape mismatch");
            }
            if (ins->output_dst.is_external())
                check_region({ins->output_dst.offset, ins->out_rows(), ins->c_dim}, memory_elems,
                             "instruction output");
            if (prev_instr && prev_step_was_instr && !prev_instr->output_dst.is_external() &&
                ins->input_src.is_external())
                throw std::invalid_argument(
                    "Program: buffered output not consumed by the next instruction");
            prev_instr = ins;
            prev_step_was_instr = true;
        } else {
            const auto& cc = std::get<ConcatStep>(steps[s]);
            if (prev_instr && prev_step_was_instr && !prev_instr->output_dst.is_external())
                throw std::invalid_argument(
                    "Program: buffered output not consumed by the next instruction");
            check_region({cc.src_a, cc.rows, cc.cols_a}, memory_elems, "concat A");
            check_region({cc.src_b, 1, cc.cols_b}, memory_elems, "concat B");
            check_region({cc.dst, cc.rows, cc.cols_a + cc.cols_b}, memory_elems, "concat dst");
            prev_step_was_instr = false;
        }
    }
    const auto* last = std::get_if<Instruction>(&steps.back());
    if (!last || !last->output_dst.is_external())
        throw std::invalid_argument("Program: final instruction must write external memory");
}

}  // namespace pnacc
