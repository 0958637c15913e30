#pragma once

#if !defined(__x86_64__)
#error "this toolkit drives x86-64 hardware directly"
#endif

#include <cstdint>

#include <cpuid.h>
#include <x86intrin.h>

namespace specwin {

inline void flush_line(const void* p) { _mm_clflush(p); }
inline void memory_fence() { _mm_mfence(); }
inline void load_fence() { _mm_lfence(); }

// Architecturally reads one byte; the volatile access keeps the compiler
// from folding it away.
inline void force_read(const volatile void* p) {
    (void)*static_cast<const volatile uint8_t*>(p);
}

// CPUID is the classic userspace full serializer; used between the training
// phase and the mispredicted run so no in-flight state bleeds across.
inline void serialize_full() {
    unsigned a, b, c, d;
    __cpuid(0, a, b, c, d);
}

// Cycle count for one dereference, with the timestamp reads fenced on both
// sides so neither the access nor the counter read can drift.
inline uint64_t timed_read(const volatile void* p) {
    _mm_lfence();
    uint64_t t0 = __rdtsc();
    _mm_lfence();
    (void)*static_cast<const volatile uint8_t*>(p);
    _mm_lfence();
    uint64_t t1 = __rdtsc();
    _mm_lfence();
    return t1 - t0;
}

inline bool has_clflush() {
    unsigned a, b, c, d;
    if (!__get_cpuid(1, &a, &b, &c, &d))
        return false;
    return (d >> 19) & 1u;
}

} // namespace specwin
