#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pnacc/fixed_point.hpp"
#include "pnacc/pointnet.hpp"

namespace pnacc {

// Binary weight container ("PNQW"):
//   magic "PNQW", u16-le version (1), u32-le entry count; per entry:
//   u16-le name length + UTF-8 name, u8 dtype (0=int8, 1=int16, 2=float32),
//   i8 frac_bits (ignored for float32), u8 rank, rank x u32-le dims,
//   row-major little-endian payload.
enum class EntryDtype : std::uint8_t { Int8 = 0, Int16 = 1, Float32 = 2 };

struct ContainerEntry {
    std::string name;
    EntryDtype dtype = EntryDtype::Float32;
    int frac_bits = 0;
    std::vector<std::int64_t> dims;
    std::vector<std::int32_t> int_codes;  // Int8/Int16 payloads
    std::vector<float> floats;            // Float32 payloads

    std::int64_t elem_count() const;
};

void write_weight_container(const std::string& path, const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> read_weight_container(const std::string& path);

// Reserved scalar entry recording the calibrated feature format.
inline constexpr const char* kFeatureFormatEntry = "__feature_format__";

// float WeightSet <-> container (weights/biases/bn parameters as float32).
std::vector<ContainerEntry> weight_set_to_entries(const WeightSet& ws);
WeightSet entries_to_weight_set(const std::vector<ContainerEntry>& entries);

// quantized set <-> container (int weights + float32 biases + format marker).
std::vector<ContainerEntry> quantized_set_to_entries(const QuantizedWeightSet& qs);
QuantizedWeightSet entries_to_quantized_set(const std::vector<ContainerEntry>& entries);

}  // namespace pnacc
