#pragma once

#include <string>

namespace specwin {

// Identity of the logical processor the calling thread currently runs on.
// Resolve after pinning: hybrid parts report a different microarchitecture
// per core type.
struct CpuIdentity {
    std::string vendor;     // "GenuineIntel" / "AuthenticAMD" / ...
    std::string brand;      // marketing string
    unsigned family = 0;    // display family (incl. extended)
    unsigned model = 0;     // display model (incl. extended)
    unsigned stepping = 0;
    // Best-effort microarchitecture name ("Zen 2", "Golden Cove", ...);
    // falls back to "family 0xNN model 0xMM" when unknown.
    std::string microarch;
    bool hybrid = false;    // package mixes core types
};

CpuIdentity identify_current_cpu();

// CPUID hypervisor-present bit. Cache-timing fidelity on a guest depends on
// host scheduling and host-side prefetch activity; criteria calibrated for
// bare metal gate on this.
bool running_under_hypervisor();

} // namespace specwin
