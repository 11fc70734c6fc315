#pragma once

#include <atomic>
#include <chrono>
#include <memory>

namespace kmstn {

using Nanos = std::chrono::nanoseconds;

/// Monotonic time source. The simulator and the harness share one instance
/// so that simulated time can be advanced deterministically.
class Clock {
public:
    virtual ~Clock() = default;
    virtual Nanos now() const = 0;
};

/// steady_clock, measured from construction.
class SystemClock final : public Clock {
public:
    SystemClock() : origin_(std::chrono::steady_clock::now()) {}
    Nanos now() const override {
        return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now() - origin_);
    }

private:
    std::chrono::steady_clock::time_point origin_;
};

/// Virtual time that only moves when advanced.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Nanos start = Nanos{0}) : ns_(start.count()) {}
    Nanos now() const override { return Nanos{ns_.load(std::memory_order_acquire)}; }
    void advance(Nanos d) { ns_.fetch_add(d.count(), std::memory_order_acq_rel); }
    void set(Nanos t) { ns_.store(t.count(), std::memory_order_release); }

private:
    std::atomic<Nanos::rep> ns_;
};

inline std::shared_ptr<Clock> system_clock() {
    static const auto clock = std::make_shared<SystemClock>();
    return clock;
}

inline double to_seconds(Nanos d) { return std::chrono::duration<double>(d).count(); }
inline double to_millis(Nanos d) { return std::chrono::duration<double, std::milli>(d).count(); }
inline Nanos from_seconds(double s) {
    return std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(s));
}
inline Nanos from_millis(double ms) {
    return std::chrono::duration_cast<Nanos>(std::chrono::duration<double, std::milli>(ms));
}

}  // namespace kmstn
