#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

namespace fedssp {

// Unbounded multi-producer queue used by the simulated transport.
template <typename T>
class Channel {
public:
    explicit Channel(std::chrono::microseconds latency = std::chrono::microseconds{0})
        : latency_(latency) {}

    Channel(const Channel&) = delete;
    Channel& operator=(const Channel&) = delete;

    // Returns false if the channel is closed.
    bool send(T value) {
        if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
        {
            std::lock_guard lock(mu_);
            if (closed_) return false;
            queue_.push_back(std::move(value));
        }
        cv_.notify_one();
        return true;
    }

    // Blocks until a value arrives; nullopt once closed and drained.
    std::optional<T> receive() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
        return pop_locked();
    }

    // nullopt on timeout, or once closed and drained.
    std::optional<T> receive_for(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return closed_ || !queue_.empty(); });
        return pop_locked();
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

private:
    std::optional<T> pop_locked() {
        if (queue_.empty()) return std::nullopt;
        T value = std::move(queue_.front());
        queue_.pop_front();
        return value;
    }

    std::chrono::microseconds latency_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> queue_;
    bool closed_ = false;
};

}  // namespace fedssp
