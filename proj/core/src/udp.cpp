#include "pnacc/udp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

namespace pnacc {

namespace {

std::uint64_t monotonic_us() {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count());
}

}  // namespace

UdpListener::UdpListener(std::uint16_t port, std::size_t queue_capacity)
    : queue_(queue_capacity) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::runtime_error("UdpListener: socket() failed");

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const int err = errno;
        ::close(fd_);
        fd_ = -1;
        throw std::runtime_error(std::string("UdpListener: bind failed: ") + std::strerror(err));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);

    // Poll-style receive timeout so stop() can join promptly.
    timeval tv{};
    tv.tv_usec = 50 * 1000;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

    thread_ = std::thread(&UdpListener::run, this);
}

UdpListener::~UdpListener() { stop(); }

void UdpListener::stop() {
    if (!stopping_.exchange(true)) {
        if (thread_.joinable()) thread_.join();
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    } else if (thread_.joinable()) {
        thread_.join();
    }
}

void UdpListener::run() {
    std::vector<std::uint8_t> buf(2048);
    while (!stopping_.load()) {
        const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, nullptr, nullptr);
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
            break;
        }
        if (static_cast<std::size_t>(n) != kPacketBytes) {
            ++wrong_size_dropped_;
            continue;
        }
        PacketRecord rec;
        rec.timestamp_us = monotonic_us();
        rec.payload.assign(buf.begin(), buf.begin() + n);
        ++received_;
        queue_.push(std::move(rec));
    }
}

std::optional<PacketRecord> UdpListener::next(std::chrono::milliseconds timeout) {
    return queue_.pop(timeout);
}

void replay_capture_records(std::span<const CaptureRecord> records, std::uint16_t port,
                            bool preserve_timing) {
    const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw std::runtime_error("replay: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);

    std::uint64_t prev_ts = records.empty() ? 0 : records.front().timestamp_us;
    for (const CaptureRecord& r : records) {
        if (preserve_timing && r.timestamp_us > prev_ts)
            std::this_thread::sleep_for(std::chrono::microseconds(r.timestamp_us - prev_ts));
        prev_ts = r.timestamp_us;
        const ssize_t sent =
            ::sendto(fd, r.payload.data(), r.payload.size(), 0,
                     reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
        if (sent < 0) {
            ::close(fd);
            throw std::runtime_error("replay: sendto failed");
        }
    }
    ::close(fd);
}

}  // namespace pnacc
