#include "pnacc/velodyne.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pnacc/errors.hpp"
#include "pnacc/text.hpp"

namespace pnacc {

namespace {

constexpr std::size_t kBlockBytes = 100;

void put_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v & 0xFF);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double wrap_deg(double a) {
    a = std::fmod(a, 360.0);
    return a < 0 ? a + 360.0 : a;
}

}  // namespace

PacketBytes encode_packet(const PacketSpec& spec) {
    PacketBytes bytes{};
    for (int b = 0; b < kBlocksPerPacket; ++b) {
        std::uint8_t* p = bytes.data() + b * kBlockBytes;
        p[0] = kBlockFlag0;
        p[1] = kBlockFlag1;
        if (spec.blocks[b].azimuth_centideg >= 36000)
            throw std::invalid_argument("encode_packet: azimuth out of range");
        put_u16(p + 2, spec.blocks[b].azimuth_centideg);
        for (int ch = 0; ch < kChannelsPerBlock; ++ch) {
            const PacketChannel& c = spec.blocks[b].channels[ch];
            put_u16(p + 4 + ch * 3, c.distance_code);
            p[4 + ch * 3 + 2] = c.reflectivity;
        }
    }
    put_u32(bytes.data() + kBlocksPerPacket * kBlockBytes, spec.timestamp_us);
    bytes[kPacketBytes - 2] = spec.return_mode;
    bytes[kPacketBytes - 1] = spec.product_id;
    return bytes;
}

double interpolate_azimuth(double block_azimuth_deg, double next_block_azimuth_deg,
                           int sequence_index, int channel_index) {
    double delta = next_block_azimuth_deg - block_azimuth_deg;
    if (delta < 0) delta += 360.0;
    const double t = sequence_index * kSequencePeriodUs + channel_index * kFiringPeriodUs;
    return wrap_deg(block_azimuth_deg + delta * t / kBlockPeriodUs);
}

DecodedPacket decode_packet(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kPacketBytes)
        throw FormatError("decode_packet: payload must be exactly 1206 bytes");
    const std::uint8_t return_mode = bytes[kPacketBytes - 2];
    if (return_mode == kReturnModeDual)
        throw FormatError("decode_packet: dual-return mode is not supported");

    DecodedPacket out;
    out.timestamp_us = get_u32(bytes.data() + kBlocksPerPacket * kBlockBytes);
    for (int b = 0; b < kBlocksPerPacket; ++b) {
        const std::uint8_t* p = bytes.data() + b * kBlockBytes;
        if (p[0] != kBlockFlag0 || p[1] != kBlockFlag1)
            throw FormatError("decode_packet: bad block flag in block " + std::to_string(b));
        const std::uint16_t az = get_u16(p + 2);
        if (az >= 36000) throw FormatError("decode_packet: azimuth out of range");
        out.block_azimuth_centideg[b] = az;
    }

    out.points.reserve(kBlocksPerPacket * kChannelsPerBlock);
    for (int b = 0; b < kBlocksPerPacket; ++b) {
        const std::uint8_t* p = bytes.data() + b * kBlockBytes;
        const double az_block = out.block_azimuth_centideg[b] * kAzimuthResolutionDeg;
        // Last block extrapolates with the previous block's rotation delta.
        double az_next;
        if (b + 1 < kBlocksPerPacket) {
            az_next = out.block_azimuth_centideg[b + 1] * kAzimuthResolutionDeg;
        } else {
            const double prev = out.block_azimuth_centideg[b - 1] * kAzimuthResolutionDeg;
            double delta = az_block - prev;
            if (delta < 0) delta += 360.0;
            az_next = wrap_deg(az_block + delta);
        }
        for (int ch = 0; ch < kChannelsPerBlock; ++ch) {
            const std::uint16_t dist = get_u16(p + 4 + ch * 3);
            if (dist == 0) continue;  // non-return
            PolarPoint pt;
            pt.laser_id = ch % kLasersPerSequence;
            pt.sequence = ch / kLasersPerSequence;
            pt.block = b;
            pt.r = dist * kDistanceResolutionM;
            pt.reflectivity = p[4 + ch * 3 + 2];
            pt.elevation_deg = kLaserElevationDeg[static_cast<std::size_t>(pt.laser_id)];
            pt.azimuth_deg = interpolate_azimuth(az_block, az_next, pt.sequence, pt.laser_id);
            pt.t_offset_us = b * kBlockPeriodUs + pt.sequence * kSequencePeriodUs +
                             pt.laser_id * kFiringPeriodUs;
            out.points.push_back(pt);
        }
    }
    return out;
}

CartesianPoint to_cartesian(const PolarPoint& p) {
    const double az = p.azimuth_deg * std::numbers::pi / 180.0;
    const double el = p.elevation_deg * std::numbers::pi / 180.0;
    CartesianPoint c;
    c.x = p.r * std::cos(el) * std::sin(az);
    c.y = p.r * std::cos(el) * std::cos(az);
    c.z = p.r * std::sin(el);
    c.reflectivity = p.reflectivity;
    return c;
}

PointCloudFrame frame_to_cartesian(const PolarFrame& frame) {
    PointCloudFrame out;
    out.frame_index = frame.frame_index;
    out.start_timestamp_us = frame.start_timestamp_us;
    out.points.reserve(frame.points.size());
    for (const PolarPoint& p : frame.points) out.points.push_back(to_cartesian(p));
    return out;
}

std::optional<PolarFrame> FrameAssembler::push_packet(std::uint64_t rx_timestamp_us,
                                                      std::span<const std::uint8_t> payload) {
    if (last_packet_ts_ && rx_timestamp_us < *last_packet_ts_) {
        ++dropped_out_of_order_;
        return std::nullopt;
    }
    DecodedPacket pkt;
    try {
        pkt = decode_packet(payload);
    } catch (const FormatError&) {
        ++rejected_;
        return std::nullopt;
    }
    last_packet_ts_ = rx_timestamp_us;

    std::optional<PolarFrame> completed;
    std::size_t next_point = 0;
    for (int b = 0; b < kBlocksPerPacket; ++b) {
        const std::uint16_t az = pkt.block_azimuth_centideg[b];
        if (last_azimuth_ && az < *last_azimuth_ && !pending_.empty()) {
            PolarFrame frame;
            frame.points = std::move(pending_);
            pending_.clear();
            frame.frame_index = frames_emitted_++;
            frame.start_timestamp_us = static_cast<std::uint64_t>(
                frame_start_abs_us_.value_or(static_cast<double>(rx_timestamp_us)));
            frame_start_abs_us_.reset();
            completed = std::move(frame);
        }
        last_azimuth_ = az;

        while (next_point < pkt.points.size() && pkt.points[next_point].block == b) {
            PolarPoint p = pkt.points[next_point++];
            const double abs_us = static_cast<double>(pkt.timestamp_us) + p.t_offset_us;
            if (!frame_start_abs_us_) frame_start_abs_us_ = abs_us;
            p.t_offset_us = abs_us - *frame_start_abs_us_;
            pending_.push_back(p);
            ++points_decoded_;
        }
    }
    return completed;
}

std::optional<PolarFrame> FrameAssembler::flush() {
    if (pending_.empty()) return std::nullopt;
    PolarFrame frame;
    frame.points = std::move(pending_);
    pending_.clear();
    frame.frame_index = frames_emitted_++;
    frame.start_timestamp_us =
        static_cast<std::uint64_t>(frame_start_abs_us_.value_or(0.0));
    frame_start_abs_us_.reset();
    return frame;
}

void RoiBox::validate() const {
    if (!(x_min < x_max) || !(y_min < y_max))
        throw std::invalid_argument("RoiBox: min must be below max on each axis");
}

PointCloudFrame roi_filter(const PointCloudFrame& frame, const RoiBox& roi) {
    roi.validate();
    PointCloudFrame out;
    out.frame_index = frame.frame_index;
    out.start_timestamp_us = frame.start_timestamp_us;
    for (const CartesianPoint& p : frame.points)
        if (roi.contains(p)) out.points.push_back(p);
    return out;
}

std::vector<PointCloudFrame> fit_to_capacity(const PointCloudFrame& frame, std::int64_t cap,
                                             FitMode mode, std::uint64_t seed) {
    if (cap < 1) throw std::invalid_argument("fit_to_capacity: cap must be >= 1");
    const std::int64_t n = static_cast<std::int64_t>(frame.points.size());
    std::vector<PointCloudFrame> out;
    if (n <= cap) {
        out.push_back(frame);
        return out;
    }
    if (mode == FitMode::Subsample) {
        // Choose cap indices without replacement, keep input order.
        std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::mt19937_64 rng(seed);
        for (std::int64_t i = 0; i < cap; ++i) {
            std::uniform_int_distribution<std::int64_t> pick(i, n - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
        }
        idx.resize(static_cast<std::size_t>(cap));
        std::sort(idx.begin(), idx.end());
        PointCloudFrame f;
        f.frame_index = frame.frame_index;
        f.start_timestamp_us = frame.start_timestamp_us;
        f.points.reserve(static_cast<std::size_t>(cap));
        for (std::int64_t i : idx) f.points.push_back(frame.points[static_cast<std::size_t>(i)]);
        out.push_back(std::move(f));
    } else {
        for (std::int64_t start = 0; start < n; start += cap) {
            PointCloudFrame f;
            f.frame_index = frame.frame_index;
            f.start_timestamp_us = frame.start_timestamp_us;
            const std::int64_t end = std::min(n, start + cap);
            f.points.assign(frame.points.begin() + start, frame.points.begin() + end);
            out.push_back(std::move(f));
        }
    }
    return out;
}

void write_capture(const std::string& path, std::span<const CaptureRecord> records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("write_capture: cannot open " + path);
    os.write("VLPC", 4);
    const char version = 1;
    os.write(&version, 1);
    for (const CaptureRecord& r : records) {
        std::uint8_t hdr[10];
        for (int i = 0; i < 8; ++i)
            hdr[i] = static_cast<std::uint8_t>((r.timestamp_us >> (8 * i)) & 0xFF);
        if (r.payload.size() > 0xFFFF) throw FormatError("write_capture: payload too large");
        hdr[8] = static_cast<std::uint8_t>(r.payload.size() & 0xFF);
        hdr[9] = static_cast<std::uint8_t>(r.payload.size() >> 8);
        os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
        os.write(reinterpret_cast<const char*>(r.payload.data()),
                 static_cast<std::streamsize>(r.payload.size()));
    }
    if (!os) throw FormatError("write_capture: write failed for " + path);
}

std::vector<CaptureRecord> read_capture(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("read_capture: cannot open " + path);
    char magic[4];
    char version = 0;
    if (!is.read(magic, 4) || std::string(magic, 4) != "VLPC")
        throw FormatError("read_capture: bad magic in " + path);
    if (!is.read(&version, 1) || version != 1)
        throw FormatError("read_capture: unsupported version in " + path);
    std::vector<CaptureRecord> records;
    for (;;) {
        std::uint8_t hdr[10];
        if (!is.read(reinterpret_cast<char*>(hdr), sizeof(hdr))) {
            if (is.gcount() == 0) break;
            throw FormatError("read_capture: truncated record header in " + path);
        }
        CaptureRecord r;
        for (int i = 0; i < 8; ++i)
            r.timestamp_us |= static_cast<std::uint64_t>(hdr[i]) << (8 * i);
        const std::size_t len = static_cast<std::size_t>(hdr[8]) | (static_cast<std::size_t>(hdr[9]) << 8);
        r.payload.resize(len);
        if (!is.read(reinterpret_cast<char*>(r.payload.data()),
                     static_cast<std::streamsize>(len)))
            throw FormatError("read_capture: truncated payload in " + path);
        records.push_back(std::move(r));
    }
    return records;
}

std::string pointcloud_to_csv(const PointCloudFrame& frame, bool with_reflectivity) {
    std::ostringstream os;
    os << (with_reflectivity ? "x,y,z,reflectivity\n" : "x,y,z\n");
    for (const CartesianPoint& p : frame.points) {
        os << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.z);
        if (with_reflectivity) os << ',' << static_cast<int>(p.reflectivity);
        os << '\n';
    }
    return os.str();
}

std::vector<CartesianPoint> parse_pointcloud_csv(const std::string& text) {
    std::vector<CartesianPoint> points;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::array<double, 4> vals{};
        int count = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        bool ok = true;
        while (p < end && count < 4) {
            auto [next, ec] = std::from_chars(p, end, vals[static_cast<std::size_t>(count)]);
            if (ec != std::errc{}) {
                ok = false;
                break;
            }
            ++count;
            p = next;
            if (p < end) {
                if (*p != ',') {
                    ok = false;
                    break;
                }
                ++p;
            }
        }
        if (!ok || count < 3) {
            if (first) {  // header line
                first = false;
                continue;
            }
            throw FormatError("parse_pointcloud_csv: unparsable line: " + line);
        }
        first = false;
        CartesianPoint pt;
        pt.x = vals[0];
        pt.y = vals[1];
        pt.z = vals[2];
        if (count >= 4)
            pt.reflectivity = static_cast<std::uint8_t>(std::clamp(vals[3], 0.0, 255.0));
        points.push_back(pt);
    }
    return points;
}

}  // namespace pnacc
