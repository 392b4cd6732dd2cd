#include "pnacc/weight_container.hpp"

#include <cstring>
#include <fstream>

#include "pnacc/errors.hpp"

namespace pnacc {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::uint8_t* p;
    const std::uint8_t* end;
    std::string path;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw FormatError("weight container truncated: " + path);
    }
    std::uint8_t u8() {
        need(1);
        return *p++;
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
};

}  // namespace

std::int64_t ContainerEntry::elem_count() const {
    std::int64_t n = 1;
    for (std::int64_t d : dims) n *= d;
    return n;
}

void write_weight_container(const std::string& path, const std::vector<ContainerEntry>& entries) {
    std::string out;
    out += "PNQW";
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const ContainerEntry& e : entries) {
        if (e.name.size() > 0xFFFF) throw FormatError("entry name too long: " + e.name);
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.dtype));
        out.push_back(static_cast<char>(static_cast<std::int8_t>(e.frac_bits)));
        if (e.dims.size() > 0xFF) throw FormatError("entry rank too large: " + e.name);
        out.push_back(static_cast<char>(e.dims.size()));
        for (std::int64_t d : e.dims) {
            if (d <= 0 || d > 0xFFFFFFFFLL) throw FormatError("bad dim in entry: " + e.name);
            put_u32(out, static_cast<std::uint32_t>(d));
        }
        const std::int64_t n = e.elem_count();
        switch (e.dtype) {
            case EntryDtype::Int8:
                if (static_cast<std::int64_t>(e.int_codes.size()) != n)
                    throw FormatError("payload size mismatch: " + e.name);
                for (std::int32_t c : e.int_codes)
                    out.push_back(static_cast<char>(static_cast<std::int8_t>(c)));
                break;
            case EntryDtype::Int16:
                if (static_cast<std::int64_t>(e.int_codes.size()) != n)
                    throw FormatError("payload size mismatch: " + e.name);
                for (std::int32_t c : e.int_codes)
                    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(c)));
                break;
            case EntryDtype::Float32:
                if (static_cast<std::int64_t>(e.floats.size()) != n)
                    throw FormatError("payload size mismatch: " + e.name);
                for (float f : e.floats) {
                    std::uint32_t bits;
                    std::memcpy(&bits, &f, 4);
                    put_u32(out, bits);
                }
                break;
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw FormatError("write failed: " + path);
}

std::vector<ContainerEntry> read_weight_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
    Reader r{raw.data(), raw.data() + raw.size(), path};

    r.need(4);
    if (std::memcmp(r.p, "PNQW", 4) != 0) throw FormatError("bad container magic: " + path);
    r.p += 4;
    const std::uint16_t version = r.u16();
    if (version != 1) throw FormatError("unsupported container version: " + path);
    const std::uint32_t count = r.u32();

    std::vector<ContainerEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ContainerEntry e;
        const std::uint16_t name_len = r.u16();
        r.need(name_len);
        e.name.assign(reinterpret_cast<const char*>(r.p), name_len);
        r.p += name_len;
        const std::uint8_t dtype = r.u8();
        if (dtype > 2) throw FormatError("bad dtype in entry: " + e.name);
        e.dtype = static_cast<EntryDtype>(dtype);
        e.frac_bits = static_cast<std::int8_t>(r.u8());
        const std::uint8_t rank = r.u8();
        for (int d = 0; d < rank; ++d) e.dims.push_back(r.u32());
        const std::int64_t n = e.elem_count();
        switch (e.dtype) {
            case EntryDtype::Int8:
                r.need(static_cast<std::size_t>(n));
                e.int_codes.resize(static_cast<std::size_t>(n));
                for (std::int64_t k = 0; k < n; ++k)
                    e.int_codes[static_cast<std::size_t>(k)] =
                        static_cast<std::int8_t>(r.u8());
                break;
            case EntryDtype::Int16:
                e.int_codes.resize(static_cast<std::size_t>(n));
                for (std::int64_t k = 0; k < n; ++k)
                    e.int_codes[static_cast<std::size_t>(k)] =
                        static_cast<std::int16_t>(r.u16());
                break;
            case EntryDtype::Float32:
                e.floats.resize(static_cast<std::size_t>(n));
                for (std::int64_t k = 0; k < n; ++k) {
                    const std::uint32_t bits = r.u32();
                    float f;
                    std::memcpy(&f, &bits, 4);
                    e.floats[static_cast<std::size_t>(k)] = f;
                }
                break;
        }
        for (const ContainerEntry& prev : entries)
            if (prev.name == e.name) throw FormatError("duplicate entry name: " + e.name);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ContainerEntry> weight_set_to_entries(const WeightSet& ws) {
    std::vector<ContainerEntry> entries;
    auto add = [&entries](const std::string& name, const std::vector<std::int64_t>& dims,
                          const std::vector<double>& values) {
        ContainerEntry e;
        e.name = name;
        e.dtype = EntryDtype::Float32;
        e.dims = dims;
        e.floats.assign(values.begin(), values.end());
        entries.push_back(std::move(e));
    };
    for (const auto& [name, t] : ws.tensors) add(name, t.dims, t.values);
    for (const auto& [layer, bn] : ws.bn) {
        const auto c = static_cast<std::int64_t>(bn.gamma.size());
        add(layer + ".bn.gamma", {c}, bn.gamma);
        add(layer + ".bn.beta", {c}, bn.beta);
        add(layer + ".bn.mean", {c}, bn.running_mean);
        add(layer + ".bn.var", {c}, bn.running_var);
        add(layer + ".bn.eps", {1}, {bn.epsilon});
    }
    return entries;
}

WeightSet entries_to_weight_set(const std::vector<ContainerEntry>& entries) {
    WeightSet ws;
    for (const ContainerEntry& e : entries) {
        if (e.dtype != EntryDtype::Float32)
            throw BindError("float container expected, found quantized entry: " + e.name);
        const auto bn_pos = e.name.find(".bn.");
        if (bn_pos != std::string::npos) {
            const std::string layer = e.name.substr(0, bn_pos);
            const std::string field = e.name.substr(bn_pos + 4);
            BnParams& bn = ws.bn[layer];
            std::vector<double> v(e.floats.begin(), e.floats.end());
            if (field == "gamma")
                bn.gamma = std::move(v);
            else if (field == "beta")
                bn.beta = std::move(v);
            else if (field == "mean")
                bn.running_mean = std::move(v);
            else if (field == "var")
                bn.running_var = std::move(v);
            else if (field == "eps")
                bn.epsilon = v.empty() ? 1e-5 : v[0];
            else
                throw BindError("unknown batch-norm field: " + e.name);
        } else {
            FloatTensor t;
            t.dims = e.dims;
            t.values.assign(e.floats.begin(), e.floats.end());
            ws.tensors.emplace(e.name, std::move(t));
        }
    }
    return ws;
}

std::vector<ContainerEntry> quantized_set_to_entries(const QuantizedWeightSet& qs) {
    std::vector<ContainerEntry> entries;
    {
        ContainerEntry marker;
        marker.name = kFeatureFormatEntry;
        marker.dtype = qs.feature_fmt.total_bits == 8 ? EntryDtype::Int8 : EntryDtype::Int16;
        marker.frac_bits = qs.feature_fmt.frac_bits;
        marker.int_codes = {0};  // rank-0 scalar
        entries.push_back(std::move(marker));
    }
    for (const auto& [name, w] : qs.weights) {
        ContainerEntry e;
        e.name = name;
        e.dtype = w.fmt.total_bits == 8 ? EntryDtype::Int8 : EntryDtype::Int16;
        e.frac_bits = w.fmt.frac_bits;
        e.dims = w.dims;
        e.int_codes = w.codes;
        entries.push_back(std::move(e));
    }
    for (const auto& [name, b] : qs.biases) {
        ContainerEntry e;
        e.name = name;
        e.dtype = EntryDtype::Float32;
        e.dims = {static_cast<std::int64_t>(b.size())};
        e.floats.assign(b.begin(), b.end());
        entries.push_back(std::move(e));
    }
    return entries;
}

QuantizedWeightSet entries_to_quantized_set(const std::vector<ContainerEntry>& entries) {
    QuantizedWeightSet qs;
    bool have_marker = false;
    int weight_bits = 0;
    for (const ContainerEntry& e : entries) {
        if (e.name == kFeatureFormatEntry) {
            qs.feature_fmt = {e.dtype == EntryDtype::Int8 ? 8 : 16, e.frac_bits};
            qs.feature_fmt.validate();
            have_marker = true;
            continue;
        }
        if (e.dtype == EntryDtype::Float32) {
            qs.biases.emplace(e.name, std::vector<double>(e.floats.begin(), e.floats.end()));
            continue;
        }
        QTensor t;
        t.dims = e.dims;
        t.codes = e.int_codes;
        t.fmt = {e.dtype == EntryDtype::Int8 ? 8 : 16, e.frac_bits};
        t.validate();
        weight_bits = t.fmt.total_bits;
        qs.weights.emplace(e.name, std::move(t));
    }
    if (qs.weights.empty()) throw BindError("quantized container holds no weight tensors");
    if (!have_marker) qs.feature_fmt = FixedFormat::features(weight_bits);
    return qs;
}

}  // namespace pnacc
