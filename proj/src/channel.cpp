#include "specwin/channel.hpp"
#include "specwin/errors.hpp"
#include "specwin/timing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include <sys/mman.h>
#include <unistd.h>

namespace specwin {

uint64_t percentile(std::vector<uint64_t> samples, double p) {
    if (samples.empty())
        throw CalibrationFailed("percentile of empty sample set");
    std::sort(samples.begin(), samples.end());
    if (p <= 0.0)
        return samples.front();
    size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * samples.size()));
    rank = std::min(std::max<size_t>(rank, 1), samples.size());
    return samples[rank - 1];
}

ChannelCalibration calibrate_from_samples(const std::vector<uint64_t>& hit_samples,
                                          const std::vector<uint64_t>& miss_samples) {
    if (hit_samples.empty() || miss_samples.empty())
        throw CalibrationFailed("calibration needs samples of both classes");
    ChannelCalibration cal;
    cal.hit_p99 = percentile(hit_samples, 99.0);
    cal.miss_p1 = percentile(miss_samples, 1.0);
    cal.samples_per_class = std::min(hit_samples.size(), miss_samples.size());
    if (cal.hit_p99 >= cal.miss_p1)
        throw DistributionsOverlap("cached/evicted latency distributions overlap");
    cal.threshold = (cal.hit_p99 + cal.miss_p1) / 2;
    return cal;
}

// ---------------------------------------------------------------------------
// ProbeArray

namespace {
size_t page_size() {
    static const size_t ps = static_cast<size_t>(sysconf(_SC_PAGESIZE));
    return ps;
}
} // namespace

ProbeArray::ProbeArray() {
    const size_t ps = page_size();
    const size_t body = kSlots * kStride;
    region_size_ = body + 2 * ps;
    void* p = mmap(nullptr, region_size_, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (p == MAP_FAILED)
        throw AllocFailed("mmap of probe array failed");
    region_ = static_cast<uint8_t*>(p);
    slots_ = region_ + ps;
    if (mprotect(slots_, body, PROT_READ | PROT_WRITE) != 0)
        throw AllocFailed("mprotect of probe array failed");
    std::memset(slots_, 1, body);
}

ProbeArray::~ProbeArray() {
    if (region_)
        munmap(region_, region_size_);
}

ProbeArray::ProbeArray(ProbeArray&& o) noexcept
    : region_(o.region_), region_size_(o.region_size_), slots_(o.slots_) {
    o.region_ = nullptr;
    o.region_size_ = 0;
    o.slots_ = nullptr;
}

ProbeArray& ProbeArray::operator=(ProbeArray&& o) noexcept {
    if (this != &o) {
        if (region_)
            munmap(region_, region_size_);
        region_ = o.region_;
        region_size_ = o.region_size_;
        slots_ = o.slots_;
        o.region_ = nullptr;
        o.region_size_ = 0;
        o.slots_ = nullptr;
    }
    return *this;
}

void ProbeArray::touch_all() const {
    for (size_t i = 0; i < kSlots; ++i)
        force_read(slot(i));
}

void ProbeArray::flush_all() const {
    for (size_t i = 0; i < kSlots; ++i)
        flush_line(slot(i));
    memory_fence();
}

void ProbeArray::preload_all() const {
    for (size_t i = 0; i < kSlots; ++i)
        force_read(slot(i));
    memory_fence();
}

std::array<uint64_t, ProbeArray::kSlots> ProbeArray::measure(uint64_t seed) const {
    // Walk order matters a great deal here. A uniformly shuffled permutation
    // routinely places slots a few pages apart within a short read window,
    // which is enough for the hardware prefetcher to fill lines we have not
    // measured yet — each such fill reads back as a spurious hit. An affine
    // order  slot(i) = offset + i*K (mod 256)  with a large odd multiplier
    // keeps every nearby pair of reads ~100 pages apart, which empirically
    // cuts spurious hits by almost two orders of magnitude on modern cores.
    // The multiplier and offset are drawn from the seed, so the order is
    // deterministic per seed but varies between calls.
    static constexpr int kMultipliers[] = {97, 101, 111, 121, 131, 141, 151, 159};
    std::mt19937_64 rng(seed);
    const uint64_t draw = rng();
    const int mult = kMultipliers[draw & 7];
    const int offset = static_cast<int>((draw >> 8) & (kSlots - 1));

    std::array<uint64_t, kSlots> latency{};
    for (size_t i = 0; i < kSlots; ++i) {
        const auto idx =
            static_cast<size_t>((offset + static_cast<int>(i) * mult) & (kSlots - 1));
        latency[idx] = timed_read(slot(idx));
    }
    return latency;
}

std::vector<int> ProbeArray::probe(const ChannelCalibration& cal, ProbeMode mode,
                                   uint64_t seed) const {
    auto latency = measure(seed);
    std::vector<int> observed;
    for (size_t i = 0; i < kSlots; ++i) {
        const bool cached = latency[i] < cal.threshold;
        if ((mode == ProbeMode::Cached) == cached)
            observed.push_back(static_cast<int>(i));
    }
    return observed;
}

// ---------------------------------------------------------------------------
// Hardware calibration

ChannelCalibration calibrate_channel(size_t samples_per_class, uint64_t seed) {
    if (!has_clflush())
        throw NoFlushSupport("clflush not available on this CPU");
    if (samples_per_class == 0)
        throw CalibrationFailed("calibration needs at least one sample per class");

    ProbeArray arr;
    arr.touch_all();

    // Walk the slots in a seeded pseudorandom order, same rationale as in
    // measure(): a linear walk would let the prefetcher manufacture hits.
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, ProbeArray::kSlots - 1);

    std::vector<uint64_t> hits, misses;
    hits.reserve(samples_per_class);
    misses.reserve(samples_per_class);

    for (size_t n = 0; n < samples_per_class; ++n) {
        uint8_t* line = arr.slot(pick(rng));
        force_read(line);
        memory_fence();
        hits.push_back(timed_read(line));
    }
    for (size_t n = 0; n < samples_per_class; ++n) {
        uint8_t* line = arr.slot(pick(rng));
        flush_line(line);
        memory_fence();
        misses.push_back(timed_read(line));
    }
    return calibrate_from_samples(hits, misses);
}

} // namespace specwin
