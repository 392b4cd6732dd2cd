#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pnacc {

// VLP-16 single-return wire constants (sensor interface manual). Validated by
// encoder/decoder round-trip tests, never by hand-typed expected buffers.
//
//   payload            1206 bytes = 12 data blocks + timestamp + factory bytes
//   data block         100 bytes: flag 0xFF,0xEE; u16-le azimuth in 0.01 deg;
//                      32 channel records of u16-le distance (2 mm units) +
//                      u8 reflectivity (two 16-laser firing sequences)
//   timestamp          u32-le microseconds (first firing of the packet)
//   factory bytes      return mode (0x37 strongest / 0x38 last / 0x39 dual),
//                      product id (0x22 = VLP-16)
//   firing timing      one sequence 55.296 us, one firing 2.304 us
//   laser elevations   -15..+15 deg, interleaved factory order by laser id
inline constexpr std::size_t kPacketBytes = 1206;
inline constexpr int kBlocksPerPacket = 12;
inline constexpr int kChannelsPerBlock = 32;
inline constexpr int kLasersPerSequence = 16;
inline constexpr int kSequencesPerBlock = 2;
inline constexpr double kDistanceResolutionM = 0.002;
inline constexpr double kAzimuthResolutionDeg = 0.01;
inline constexpr double kSequencePeriodUs = 55.296;
inline constexpr double kFiringPeriodUs = 2.304;
inline constexpr double kBlockPeriodUs = 110.592;
inline constexpr std::uint8_t kBlockFlag0 = 0xFF;
inline constexpr std::uint8_t kBlockFlag1 = 0xEE;
inline constexpr std::uint8_t kReturnModeStrongest = 0x37;
inline constexpr std::uint8_t kReturnModeLast = 0x38;
inline constexpr std::uint8_t kReturnModeDual = 0x39;
inline constexpr std::uint8_t kProductIdVlp16 = 0x22;
inline constexpr std::array<double, 16> kLaserElevationDeg = {
    -15.0, 1.0, -13.0, 3.0, -11.0, 5.0, -9.0, 7.0, -7.0, 9.0, -5.0, 11.0, -3.0, 13.0, -1.0, 15.0};

using PacketBytes = std::array<std::uint8_t, kPacketBytes>;

// One LiDAR return in sensor-spherical coordinates. azimuth_deg carries the
// time-offset correction; t_offset_us is relative to the packet start at
// decode time and rebased to the frame start by the assembler.
struct PolarPoint {
    double r = 0.0;
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    std::uint8_t reflectivity = 0;
    double t_offset_us = 0.0;
    int laser_id = 0;
    int block = 0;
    int sequence = 0;
};

struct CartesianPoint {
    double x = 0.0;
    double y = 0.0;  // vehicle-forward
    double z = 0.0;
    std::uint8_t reflectivity = 0;
};

struct PolarFrame {
    std::vector<PolarPoint> points;
    std::int64_t frame_index = 0;
    std::uint64_t start_timestamp_us = 0;
};

struct PointCloudFrame {
    std::vector<CartesianPoint> points;
    std::int64_t frame_index = 0;
    std::uint64_t start_timestamp_us = 0;
};

// Builder-level view of one packet (test fixture and synthetic sources).
struct PacketChannel {
    std::uint16_t distance_code = 0;  // 2 mm units; 0 = non-return
    std::uint8_t reflectivity = 0;
};

struct PacketBlock {
    std::uint16_t azimuth_centideg = 0;  // [0, 36000)
    std::array<PacketChannel, kChannelsPerBlock> channels{};
};

struct PacketSpec {
    std::array<PacketBlock, kBlocksPerPacket> blocks{};
    std::uint32_t timestamp_us = 0;
    std::uint8_t return_mode = kReturnModeStrongest;
    std::uint8_t product_id = kProductIdVlp16;
};

PacketBytes encode_packet(const PacketSpec& spec);

struct DecodedPacket {
    std::uint32_t timestamp_us = 0;
    std::array<std::uint16_t, kBlocksPerPacket> block_azimuth_centideg{};
    std::vector<PolarPoint> points;  // non-returns dropped; up to 384
};

// Rejects wrong length, bad block flags, and dual-return packets with a
// FormatError. Distances are scaled to meters, azimuths carry the per-firing
// time-offset correction, elevations come from the laser table.
DecodedPacket decode_packet(std::span<const std::uint8_t> bytes);

// Azimuth at firing (sequence, channel) between two block azimuths:
//   a = a_block + delta * (seq * 55.296us + ch * 2.304us) / 110.592us
// with wraparound delta; result normalized to [0, 360).
double interpolate_azimuth(double block_azimuth_deg, double next_block_azimuth_deg,
                           int sequence_index, int channel_index);

// x = r cos(w) sin(a), y = r cos(w) cos(a), z = r sin(w); y is forward.
CartesianPoint to_cartesian(const PolarPoint& p);

PointCloudFrame frame_to_cartesian(const PolarFrame& frame);

// Splits a time-ordered packet stream into revolutions at the azimuth
// wraparound (block azimuth smaller than its predecessor). Out-of-order
// packets and undecodable payloads are dropped with counters.
class FrameAssembler {
  public:
    // Feed one packet; returns a completed frame when this packet crossed a
    // revolution boundary.
    std::optional<PolarFrame> push_packet(std::uint64_t rx_timestamp_us,
                                          std::span<const std::uint8_t> payload);
    // Remaining points as a final partial frame (empty -> nullopt).
    std::optional<PolarFrame> flush();

    std::int64_t frames_emitted() const { return frames_emitted_; }
    std::int64_t packets_dropped_out_of_order() const { return dropped_out_of_order_; }
    std::int64_t packets_rejected() const { return rejected_; }
    std::int64_t points_decoded() const { return points_decoded_; }

  private:
    std::vector<PolarPoint> pending_;
    std::optional<std::uint16_t> last_azimuth_;
    std::optional<std::uint64_t> last_packet_ts_;
    std::optional<double> frame_start_abs_us_;
    std::int64_t frames_emitted_ = 0;
    std::int64_t dropped_out_of_order_ = 0;
    std::int64_t rejected_ = 0;
    std::int64_t points_decoded_ = 0;
};

// Forward 20 m x 60 m box by default; closed interval on both axes, z free.
struct RoiBox {
    double x_min = -10.0;
    double x_max = 10.0;
    double y_min = 0.0;
    double y_max = 60.0;

    void validate() const;
    bool contains(const CartesianPoint& p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
    }
};

PointCloudFrame roi_filter(const PointCloudFrame& frame, const RoiBox& roi);

enum class FitMode { Subsample, Partition };

// Subsample: order-preserving uniform selection without replacement,
// deterministic per seed, single output of min(n, cap) points. Partition:
// ceil(n/cap) order-preserving chunks of at most cap points.
std::vector<PointCloudFrame> fit_to_capacity(const PointCloudFrame& frame, std::int64_t cap,
                                             FitMode mode, std::uint64_t seed = 0);

// ---- capture files (".vlpcap") -------------------------------------------
// magic "VLPC", u8 version (1), then records of
// [u64-le microsecond timestamp][u16-le payload length][payload bytes].

struct CaptureRecord {
    std::uint64_t timestamp_us = 0;
    std::vector<std::uint8_t> payload;
};

void write_capture(const std::string& path, std::span<const CaptureRecord> records);
std::vector<CaptureRecord> read_capture(const std::string& path);

// ---- point cloud text format ----------------------------------------------
// CSV lines "x,y,z[,reflectivity]" in meters, locale-independent decimals.

std::string pointcloud_to_csv(const PointCloudFrame& frame, bool with_reflectivity = true);
// Accepts an optional header line; extra columns beyond x,y,z are kept as
// reflectivity when integral, otherwise ignored.
std::vector<CartesianPoint> parse_pointcloud_csv(const std::string& text);

}  // namespace pnacc
