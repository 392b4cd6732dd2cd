#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "pnacc/fixed_point.hpp"
#include "pnacc/gemm.hpp"

namespace pnacc {

// Design capacity: largest point count one accelerator pass supports.
inline constexpr std::int64_t kMaxPoints = 4096;

enum class OpKind { Matmul, MatmulMaxpool };

// Source/destination of an instruction's feature data. External memory
// offsets are in elements; InputBuffer refers to the on-chip ping-pong
// buffer holding the previous instruction's result.
struct DataLoc {
    enum class Kind { ExternalMemory, InputBuffer };
    Kind kind = Kind::ExternalMemory;
    std::int64_t offset = 0;

    static DataLoc external(std::int64_t offset) { return {Kind::ExternalMemory, offset}; }
    static DataLoc input_buffer() { return {Kind::InputBuffer, 0}; }
    bool is_external() const { return kind == Kind::ExternalMemory; }
};

// One register-file configuration entry: a matmul (optionally with fused
// max-pool) of an n_rows x k_dim input against the bound k_dim x c_dim weight.
struct Instruction {
    OpKind op = OpKind::Matmul;
    std::int64_t n_rows = 0;
    std::int64_t k_dim = 0;
    std::int64_t c_dim = 0;
    DataLoc input_src;
    DataLoc output_dst;
    std::string weight_id;
    OutputOrientation orientation = OutputOrientation::RowOriented;
    Activation activation = Activation::None;
    int requant_shift = 0;

    std::int64_t out_rows() const { return op == OpKind::MatmulMaxpool ? 1 : n_rows; }
};

// Processor-side memory rearrangement: writes a rows x (cols_a + cols_b)
// region where row i is [A row i | B row 0]. Carries DMA traffic only; the
// PE array is idle.
struct ConcatStep {
    std::int64_t rows = 0;
    std::int64_t cols_a = 0;
    std::int64_t cols_b = 0;
    std::int64_t src_a = 0;
    std::int64_t src_b = 0;
    std::int64_t dst = 0;
};

using Step = std::variant<Instruction, ConcatStep>;

struct WeightEntry {
    QTensor weight;                  // k_dim x c_dim
    std::vector<std::int64_t> bias;  // c_dim, pre-scaled to frac(in)+frac(weight)
};

// Immutable id -> (weight, bias) store standing in for the accelerator's
// pre-loaded block RAM. Entries cannot be replaced once loaded.
class WeightStore {
  public:
    explicit WeightStore(std::int64_t capacity_bytes = 0)  // 0 = unbounded
        : capacity_bytes_(capacity_bytes) {}

    void load(const std::string& id, QTensor weight, std::vector<std::int64_t> bias);
    const WeightEntry& get(const std::string& id) const;
    bool contains(const std::string& id) const { return entries_.count(id) != 0; }
    std::int64_t bytes_used() const { return bytes_used_; }
    std::int64_t capacity_bytes() const { return capacity_bytes_; }

  private:
    std::map<std::string, WeightEntry> entries_;
    std::int64_t capacity_bytes_ = 0;
    std::int64_t bytes_used_ = 0;
};

// Spec'd free-function spelling of WeightStore::load.
inline void load_weights(WeightStore& store, const std::string& id, QTensor weight,
                         std::vector<std::int64_t> bias) {
    store.load(id, std::move(weight), std::move(bias));
}

// A weight materialized during the run from an external-memory region written
// by an earlier instruction (frame-lifetime entry). The 1 x (rows*cols) source
// row vector is reshaped row-major; add_identity adds 1.0 in `fmt` to the
// diagonal with saturation.
struct DynamicWeight {
    std::string id;
    std::int64_t src_offset = 0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    FixedFormat fmt;
    bool add_identity = false;
    int producer_step = -1;  // step index whose output fills the source region
};

struct MemRegion {
    std::int64_t offset = 0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;

    std::int64_t elems() const { return rows * cols; }
};

// A full pre-validated accelerator run: ordered steps, the weight store they
// reference, dynamic-weight bindings, and the external-memory layout. The
// whole program is loaded into the register file before execution starts.
struct Program {
    std::vector<Step> steps;
    WeightStore weights;
    std::vector<DynamicWeight> dynamic_weights;
    FixedFormat feature_fmt;
    MemRegion input;
    MemRegion output;
    std::int64_t memory_elems = 0;

    const DynamicWeight* find_dynamic(const std::string& id) const;
    void validate() const;
};

}  // namespace pnacc
