#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pnacc/velodyne.hpp"

namespace pnacc {

// Bounded single-producer queue with drop-oldest overflow, so a slow consumer
// never blocks real-time ingestion.
template <typename T>
class BoundedQueue {
  public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(T item) {
        {
            std::lock_guard<std::mutex> lk(mu_);
            if (q_.size() >= capacity_) {
                q_.pop_front();
                ++dropped_;
            }
            q_.push_back(std::move(item));
        }
        cv_.notify_one();
    }

    std::optional<T> pop(std::chrono::milliseconds timeout) {
        std::unique_lock<std::mutex> lk(mu_);
        if (!cv_.wait_for(lk, timeout, [this] { return !q_.empty(); })) return std::nullopt;
        T item = std::move(q_.front());
        q_.pop_front();
        return item;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lk(mu_);
        return q_.size();
    }
    std::uint64_t dropped() const { return dropped_.load(); }
    std::size_t capacity() const { return capacity_; }

  private:
    const std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> q_;
    std::atomic<std::uint64_t> dropped_{0};
};

struct PacketRecord {
    std::uint64_t timestamp_us = 0;        // receive time, monotonic
    std::vector<std::uint8_t> payload;     // exactly kPacketBytes
};

// A VLP-16 packet stream at a 10 Hz revolution rate is ~75 packets/frame;
// the default queue holds four frames' worth.
inline constexpr std::size_t kPacketsPerRevolution10Hz = 75;
inline constexpr std::size_t kDefaultQueueFrames = 4;

// UDP listener stage: a receiver thread pushes well-sized datagrams into the
// bounded queue; datagrams of any other size are counted and dropped. The
// consumer pops PacketRecords via next().
class UdpListener {
  public:
    // port 0 binds an ephemeral port (see port()). Throws std::runtime_error
    // when the socket cannot be bound.
    explicit UdpListener(std::uint16_t port,
                         std::size_t queue_capacity = kDefaultQueueFrames *
                                                      kPacketsPerRevolution10Hz);
    ~UdpListener();

    UdpListener(const UdpListener&) = delete;
    UdpListener& operator=(const UdpListener&) = delete;

    std::uint16_t port() const { return port_; }
    std::optional<PacketRecord> next(std::chrono::milliseconds timeout);
    void stop();

    std::uint64_t wrong_size_dropped() const { return wrong_size_dropped_.load(); }
    std::uint64_t queue_dropped() const { return queue_.dropped(); }
    std::uint64_t received() const { return received_.load(); }

  private:
    void run();

    int fd_ = -1;
    std::uint16_t port_ = 0;
    BoundedQueue<PacketRecord> queue_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> wrong_size_dropped_{0};
    std::atomic<std::uint64_t> received_{0};
    std::thread thread_;
};

// Sends capture records as UDP datagrams to 127.0.0.1:port in file order,
// optionally reproducing inter-record timing.
void replay_capture_records(std::span<const CaptureRecord> records, std::uint16_t port,
                            bool preserve_timing = false);

}  // namespace pnacc
