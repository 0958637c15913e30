#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace specwin {

// Logical-processor layout derived from the kernel's per-CPU sibling lists.
// Immutable after detection; safe to share across threads.
struct CpuTopology {
    std::vector<int> logical_ids;        // sorted, every online logical CPU
    std::map<int, std::vector<int>> cores; // core id (smallest member) -> sorted logical ids
    bool smt_enabled = false;            // true iff some core has >= 2 threads

    bool contains(int cpu) const;
    int core_of(int cpu) const;          // throws InvalidCpu
    // The co-resident logical processor sharing cpu's physical core,
    // or nullopt when the core runs a single thread.
    std::optional<int> sibling_of(int cpu) const;
};

// Reads <sysroot>/sys/devices/system/cpu/cpu*/topology/thread_siblings_list.
// Accepts both "a,b" and "a-b" list syntax. Throws TopologyUnavailable when
// the tree is missing or the lists are inconsistent.
CpuTopology detect_topology(const std::filesystem::path& sysroot);

// Same, with the sysroot taken from $SPECWIN_SYSROOT (default "/").
CpuTopology detect_topology();

// Restricts the calling thread to exactly {cpu}. Throws InvalidCpu when cpu
// is not in topo, PinFailed when the OS rejects the affinity change or a
// subsequent query does not confirm it.
void pin_current_thread(int cpu, const CpuTopology& topo);

// Affinity mask of the calling thread, as a sorted cpu list.
std::vector<int> current_affinity();

// Parses one sibling-list string, e.g. "0,4" or "0-3" or "1,8-9". Exposed
// for fixture tests. Throws TopologyUnavailable on malformed input.
std::vector<int> parse_cpu_list(const std::string& text);

} // namespace specwin
