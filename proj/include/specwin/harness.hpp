#pragma once

#include "specwin/channel.hpp"
#include "specwin/experiment.hpp"
#include "specwin/topology.hpp"

#include <cstdint>

namespace specwin {

// How a gadget's signal is read back: every gadget loads the slot it names
// except the flush gadget, which evicts it from a fully preloaded array.
ProbeMode probe_mode_for(GadgetKind kind);

// Register values handed to one victim invocation.
struct VictimArgs {
    uint64_t data = 0;  // rdi: pointer (or scaled offset) the gadget chases
    uint64_t probe = 0; // rsi: probe-array base
    uint64_t index = 0; // rdx: byte offset within the data page
};

class VictimBuffer;

// Writes the training-time values: pointers stay inside the victim's own
// dummy pages so architectural gadget runs never touch the real probe
// array or the real secret. Returns the registers to train with.
VictimArgs plant_training_values(GadgetKind kind, VictimBuffer& victim);

// Writes the measurement-run values encoding `secret`, pointed at the real
// probe array. The returned registers make the gadget reveal probe slot
// `secret` (transiently) if it executes.
VictimArgs plant_secret(GadgetKind kind, VictimBuffer& victim,
                        const ProbeArray& probe, uint8_t secret);

// Byte offset inside the value/dummy page where plant_* put the index-
// addressed secret; keeps 32-bit gadget loads clear of the page edges.
inline constexpr uint64_t kSecretIndex = 64;

// Current-machine identity for result records.
MachineMetadata collect_machine_metadata();

// Runs one measurement cell: builds the victim, calibrates the channel,
// optionally starts the sibling workload, then races `config.trials` times.
// Pins to config.cpu when >= 0. Throws CalibrationFailed, SmtDisabled,
// NotSibling, InvalidCpu or PinFailed per the failing precondition.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const CpuTopology& topo);

// Secret-recovery demonstration: plants `message`, then reconstructs it one
// byte at a time from the mispredicted branch (majority vote over
// trials_per_byte races per byte).
struct PocConfig {
    FenceMode fence = FenceMode::NoFence;
    WorkloadKind workload = WorkloadKind::None;
    int cpu = -1;
    int sibling = -1;
    int trials_per_byte = 100;
    int train_iterations = 8;
    uint64_t seed = 1;
    std::string message = "TRANSIENT WINDOW";
};

PocResult run_poc(const PocConfig& config, const CpuTopology& topo);

} // namespace specwin
