#pragma once

#include "specwin/codegen.hpp"
#include "specwin/workloads.hpp"

#include <cstdint>
#include <string>

namespace specwin {

// Everything that determines one measurement cell. Serialized alongside the
// outcome so a result line is self-describing and reproducible.
struct ExperimentConfig {
    GadgetKind gadget = GadgetKind::LoadShiftLoad;
    FenceMode fence = FenceMode::Lfence;
    WorkloadKind workload = WorkloadKind::None;
    int spacer_nops = 0;
    SpacerKind spacer_kind = SpacerKind::Nop;
    int cpu = -1;     // attacker CPU; -1 = wherever the scheduler put us
    int sibling = -1; // workload CPU; -1 = auto (SMT sibling of cpu)
    int trials = 1000;
    int train_iterations = 8;
    uint64_t seed = 1;
    // Control cells train the branch to the landing pad instead of the
    // gadget, so any observed signal is channel noise, not speculation.
    bool control = false;
};

// Identity of the machine a result came from.
struct MachineMetadata {
    std::string vendor;
    std::string brand;
    std::string microarch;
    unsigned family = 0;
    unsigned model = 0;
    bool smt_enabled = false;
    int logical_cpus = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    MachineMetadata machine;
    int counted = 0;   // trials that survived the migration check
    int hits = 0;      // trials where the planted slot lit up
    int discarded = 0; // trials dropped (thread migrated mid-trial)
    uint64_t threshold = 0;
    uint64_t workload_iterations = 0;
    std::string toolkit_version;

    double rate() const { return counted > 0 ? double(hits) / counted : 0.0; }
};

// Byte-by-byte secret recovery through the mispredicted branch.
struct PocResult {
    FenceMode fence = FenceMode::NoFence;
    WorkloadKind workload = WorkloadKind::None;
    std::string expected;  // planted message
    std::string recovered; // what the channel read back (unreadable -> '.')
    int correct_bytes = 0;
    int trials_per_byte = 0;
    MachineMetadata machine;
};

} // namespace specwin
