#pragma once

#include "specwin/codegen.hpp"
#include "specwin/topology.hpp"

#include <cstdint>
#include <memory>
#include <thread>
#include <utility>
#include <vector>

namespace specwin {

// Instruction mix run on the sibling hyperthread while the victim races.
enum class WorkloadKind {
    None,                 // idle sibling
    DirectJmp,            // unconditional short jumps
    CondPredicted,        // conditional branches with a constant outcome
    CondMispredicted,     // conditional branches on pseudorandom bits
    IndirectPredicted,    // register-indirect jumps with a constant target
    IndirectMispredicted, // register-indirect jumps over rotating targets
    FarJmp,               // far jumps reloading the current code segment
    XorLoop,              // register-only ALU traffic, no branches
    Nanosleep,            // repeated nanosleep syscalls
};

const char* workload_name(WorkloadKind k);

inline constexpr int kDefaultBranchesPerIteration = 64;
// Distinct targets each mispredicted indirect jump rotates through.
inline constexpr int kIndirectFan = 16;

// Shared state between the harness and a generated workload body. The body
// receives a pointer to this struct and derives every address it needs from
// it, so the emitted code itself is position-independent.
struct WorkloadArgs {
    volatile uint64_t stop = 0;       // body exits when nonzero
    volatile uint64_t iterations = 0; // incremented once per inner loop
    uint64_t seed = 0;                // branch-pattern rng state
    uint64_t table = 0;               // indirect-target slots (8 bytes each)
    uint64_t far_table = 0;           // far-pointer slots (16 bytes each)
};

static_assert(offsetof(WorkloadArgs, iterations) == 8);
static_assert(offsetof(WorkloadArgs, seed) == 16);
static_assert(offsetof(WorkloadArgs, table) == 24);
static_assert(offsetof(WorkloadArgs, far_table) == 32);

// Encoded workload body plus the data-table layout it expects. Jump targets
// live in the tables, never in the code, so the same bytes run at any load
// address once the loader fills the slots.
struct WorkloadProgram {
    std::vector<uint8_t> code;
    size_t table_slots = 0; // 8-byte indirect-target slots to allocate
    size_t far_slots = 0;   // 16-byte far-pointer slots to allocate
    // slot index -> code offset; loader stores code_base + offset there
    std::vector<std::pair<size_t, size_t>> table_patches;
    std::vector<std::pair<size_t, size_t>> far_patches;
};

// Emits the loop body for a JIT-able kind. Throws UnsupportedWorkload for
// None and Nanosleep, which have no generated code.
WorkloadProgram encode_workload_body(WorkloadKind kind,
                                     int branches_per_iteration = kDefaultBranchesPerIteration);

// Owns one running workload: generated code (or the nanosleep loop), its
// data tables, and the thread executing it. The constructor returns once
// the body is confirmed running; destruction stops and joins.
class WorkloadRunner {
public:
    // cpu < 0 runs unpinned (used by tests on machines without SMT).
    WorkloadRunner(WorkloadKind kind, int cpu, uint64_t seed,
                   int branches_per_iteration = kDefaultBranchesPerIteration);
    ~WorkloadRunner();
    WorkloadRunner(const WorkloadRunner&) = delete;
    WorkloadRunner& operator=(const WorkloadRunner&) = delete;

    void stop_and_join();
    uint64_t iterations() const { return args_.iterations; }
    WorkloadKind kind() const { return kind_; }

    // True when [lo, hi) intersects any region this workload owns (code or
    // data tables). The harness asserts the probe array never aliases them.
    bool overlaps(uint64_t lo, uint64_t hi) const;

private:
    void thread_main(int cpu);

    WorkloadKind kind_;
    WorkloadArgs args_;
    ExecBuffer code_;
    std::vector<uint64_t> table_;
    std::vector<uint8_t> far_table_;
    std::thread thread_;
    bool joined_ = true;
};

// Validates the CPU pairing, then starts `kind` on workload_cpu. Throws
// SmtDisabled when the topology has no second thread per core, NotSibling
// when the two CPUs do not share a physical core. Returns nullptr for
// WorkloadKind::None.
std::unique_ptr<WorkloadRunner> start_workload(WorkloadKind kind, int attacker_cpu,
                                               int workload_cpu,
                                               const CpuTopology& topo, uint64_t seed);

} // namespace specwin
