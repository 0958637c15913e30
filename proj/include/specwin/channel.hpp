#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace specwin {

// How a probe slot signals that the gadget touched it.
enum class ProbeMode {
    Cached,  // gadget loads the slot; signal = fast (cached) read
    Evicted, // gadget flushes a preloaded slot; signal = slow (evicted) read
};

// Latency threshold separating cached from evicted reads, derived from
// measured distributions on the machine under test.
struct ChannelCalibration {
    uint64_t hit_p99 = 0;    // 99th percentile of cached-read latencies
    uint64_t miss_p1 = 0;    // 1st percentile of evicted-read latencies
    uint64_t threshold = 0;  // midpoint; read < threshold counts as cached
    size_t samples_per_class = 0;
};

// Nearest-rank percentile of an unsorted sample set (p in [0, 100]).
uint64_t percentile(std::vector<uint64_t> samples, double p);

// Derives a threshold from raw latency samples. Pure: feeds the unit tests
// with synthetic distributions. Throws DistributionsOverlap when the hit
// p99 does not sit strictly below the miss p1, and CalibrationFailed when
// either sample set is empty.
ChannelCalibration calibrate_from_samples(const std::vector<uint64_t>& hit_samples,
                                          const std::vector<uint64_t>& miss_samples);

// One cache line per value, one page per slot so only the intended line of
// the intended page can become cached. Guard pages bracket the array.
class ProbeArray {
public:
    static constexpr size_t kSlots = 256;
    static constexpr size_t kStride = size_t{1} << 0xc; // matches shl 0xc in the gadgets

    ProbeArray(); // throws AllocFailed
    ~ProbeArray();
    ProbeArray(ProbeArray&&) noexcept;
    ProbeArray& operator=(ProbeArray&&) noexcept;
    ProbeArray(const ProbeArray&) = delete;
    ProbeArray& operator=(const ProbeArray&) = delete;

    uint8_t* base() const { return slots_; }
    uint8_t* slot(size_t i) const { return slots_ + i * kStride; }

    void touch_all() const;   // resolve address translations
    void flush_all() const;   // evict every slot (Cached-mode setup)
    void preload_all() const; // cache every slot (Evicted-mode setup)

    // Timed read of every slot, visited in a seed-determined permutation so
    // the stride prefetcher cannot walk ahead of the measurement.
    std::array<uint64_t, kSlots> measure(uint64_t seed) const;

    // Slots whose read latency signals gadget activity under `mode`.
    std::vector<int> probe(const ChannelCalibration& cal, ProbeMode mode,
                           uint64_t seed) const;

private:
    uint8_t* region_ = nullptr;
    size_t region_size_ = 0;
    uint8_t* slots_ = nullptr;
};

// Measures cached/evicted latency distributions on the current CPU and
// derives the threshold. Requires clflush; throws NoFlushSupport otherwise.
ChannelCalibration calibrate_channel(size_t samples_per_class = 4096, uint64_t seed = 1);

} // namespace specwin
