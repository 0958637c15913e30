// Shipping gate. Prints one line per criterion:
//
//   C1..C4  hardware-independent, must pass on any machine
//   C5..C8  hardware-gated: run when this machine qualifies, otherwise
//           SKIP with a notice naming the missing capability
//   C9      informational reproduction: recorded, never fails the gate
//
// Exit status is the number of hard FAILs (0 = gate passed).

#include "specwin/channel.hpp"
#include "specwin/cpuinfo.hpp"
#include "specwin/errors.hpp"
#include "specwin/golden.hpp"
#include "specwin/harness.hpp"
#include "specwin/report.hpp"
#include "specwin/sweep.hpp"
#include "specwin/timing.hpp"
#include "specwin/topology.hpp"

#include "report_samples.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

using namespace specwin;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void line(int criterion, const char* status, const std::string& detail) {
    std::printf("C%d %-4s %s\n", criterion, status, detail.c_str());
    std::fflush(stdout);
}

void verdict(int criterion, bool ok, const std::string& detail) {
    if (!ok)
        ++g_failures;
    line(criterion, ok ? "PASS" : "FAIL", detail);
}

void skip(int criterion, const std::string& why) {
    line(criterion, "SKIP", why);
}

void info(int criterion, const std::string& detail) {
    line(criterion, "INFO", detail);
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// C1: generated victim code matches the reference-assembled fixtures

void criterion_1() {
    Timer timer;
    const auto fixtures = golden_fixtures();
    std::set<std::tuple<GadgetKind, FenceMode, int>> required;
    for (int g = 0; g < 8; ++g)
        for (int f = 0; f < 2; ++f)
            for (int n : {0, 1, 23})
                required.insert({static_cast<GadgetKind>(g),
                                 static_cast<FenceMode>(f), n});

    int checked = 0;
    for (const auto& fix : fixtures) {
        const std::string divergence = check_against_golden(fix);
        if (!divergence.empty()) {
            verdict(1, false, fmt("victim '%s' diverges: %s", fix.name,
                                  divergence.c_str()));
            return;
        }
        ++checked;
        required.erase({fix.options.gadget, fix.options.fence,
                        fix.options.spacer_nops});
    }
    if (!required.empty()) {
        verdict(1, false,
                fmt("fixture set is missing %zu of the required gadget x "
                    "fence x spacer configurations",
                    required.size()));
        return;
    }
    const double secs = timer.seconds();
    verdict(1, secs < 5.0,
            fmt("%d reference victims byte-identical in %.2fs (budget 5s)",
                checked, secs));
}

// ---------------------------------------------------------------------------
// C2: window estimator is exact against injected oracles

void criterion_2() {
    Timer timer;
    for (int cutoff = 0; cutoff <= 40; ++cutoff) {
        const CellRunner oracle = [cutoff](int spacers) {
            return SweepPoint{spacers, spacers <= cutoff ? 100 : 0, 100};
        };
        const SweepResult got = estimate_window(oracle);
        if (got.max_spacers_with_signal != cutoff || got.capped) {
            verdict(2, false,
                    fmt("deterministic cutoff %d estimated as %d%s", cutoff,
                        got.max_spacers_with_signal,
                        got.capped ? " (capped)" : ""));
            return;
        }
    }

    std::mt19937_64 rng(2026);
    std::binomial_distribution<int> leak(100, 0.99);
    int correct = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
        const int cutoff = rep % 41;
        const CellRunner oracle = [&, cutoff](int spacers) {
            return SweepPoint{spacers, spacers <= cutoff ? leak(rng) : 0, 100};
        };
        if (estimate_window(oracle).max_spacers_with_signal == cutoff)
            ++correct;
    }
    const double secs = timer.seconds();
    verdict(2, correct >= 99 && secs < 30.0,
            fmt("deterministic cutoffs 0..40 exact; noisy oracle %d/%d exact "
                "in %.2fs (budget 30s)",
                correct, reps, secs));
}

// ---------------------------------------------------------------------------
// C3: rendering is deterministic against frozen fixtures

std::optional<std::string> read_fixture(const char* name) {
    std::ifstream in(fs::path(SPECWIN_FIXTURE_DIR) / name, std::ios::binary);
    if (!in)
        return std::nullopt;
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

void criterion_3() {
    const std::pair<double, const char*> boundaries[] = {
        {0.0, "0%"},   {0.004, "<1%"}, {0.01, "1%"},
        {0.985, "99%"}, {0.99, ">99%"}, {1.0, ">99%"},
    };
    for (const auto& [rate, want] : boundaries) {
        const std::string got = format_rate(rate);
        if (got != want) {
            verdict(3, false, fmt("format_rate(%g) = \"%s\", expected \"%s\"",
                                  rate, got.c_str(), want));
            return;
        }
    }

    const std::pair<const char*, std::string> renders[] = {
        {"gadget_fence.txt",
         render_table(TableKind::GadgetByFence, samples::rate_table_set())},
        {"variants.txt",
         render_table(TableKind::MinimalVariants, samples::rate_table_set())},
        {"workloads.txt",
         render_table(TableKind::SmtWorkloads, samples::workload_table_set())},
        {"windows.txt",
         render_table(TableKind::WindowSizes, samples::window_table_set())},
        {"poc.txt", render_table(TableKind::PocMatrix, samples::poc_table_set())},
        {"plot_decay.txt", render_sweep_plot(samples::plot_curve())},
    };
    for (const auto& [name, rendered] : renders) {
        const auto frozen = read_fixture(name);
        if (!frozen) {
            verdict(3, false, fmt("fixture %s missing under %s", name,
                                  SPECWIN_FIXTURE_DIR));
            return;
        }
        if (*frozen != rendered) {
            verdict(3, false, fmt("render of %s diverges from fixture", name));
            return;
        }
    }
    verdict(3, true,
            "percent boundaries exact; 5 table shapes + sweep plot "
            "byte-identical to fixtures");
}

// ---------------------------------------------------------------------------
// C4: topology parsing on synthetic sysfs trees + sibling symmetry

class TempSysroot {
public:
    TempSysroot() {
        std::string tmpl =
            (fs::temp_directory_path() / "specwin-acc-XXXXXX").string();
        if (!mkdtemp(tmpl.data()))
            throw Error("mkdtemp failed for topology fixture");
        root_ = tmpl;
    }
    ~TempSysroot() {
        std::error_code ec;
        fs::remove_all(root_, ec);
    }
    void add_cpu(int cpu, const std::string& siblings) const {
        const fs::path dir = root_ / "sys/devices/system/cpu" /
                             ("cpu" + std::to_string(cpu)) / "topology";
        fs::create_directories(dir);
        std::ofstream(dir / "thread_siblings_list") << siblings << "\n";
    }
    const fs::path& path() const { return root_; }

private:
    fs::path root_;
};

bool symmetric(const CpuTopology& topo, std::string& why) {
    for (int cpu : topo.logical_ids) {
        const auto sib = topo.sibling_of(cpu);
        if (!sib)
            continue;
        const auto back = topo.sibling_of(*sib);
        if (!back || *back != cpu || topo.core_of(cpu) != topo.core_of(*sib)) {
            why = fmt("sibling relation not symmetric at cpu %d", cpu);
            return false;
        }
    }
    return true;
}

void criterion_4() {
    std::string why;
    {
        TempSysroot tree; // four single-thread cores
        for (int c = 0; c < 4; ++c)
            tree.add_cpu(c, std::to_string(c));
        const CpuTopology topo = detect_topology(tree.path());
        if (topo.logical_ids != std::vector<int>{0, 1, 2, 3} ||
            topo.smt_enabled || topo.cores.size() != 4 ||
            topo.sibling_of(2).has_value() || !symmetric(topo, why)) {
            verdict(4, false, "single-thread tree parsed wrong: " + why);
            return;
        }
    }
    {
        TempSysroot tree; // four 2-way cores, siblings offset by 4
        for (int c = 0; c < 8; ++c) {
            const int a = c % 4;
            tree.add_cpu(c, std::to_string(a) + "," + std::to_string(a + 4));
        }
        const CpuTopology topo = detect_topology(tree.path());
        if (topo.logical_ids.size() != 8 || !topo.smt_enabled ||
            topo.cores.size() != 4 || topo.core_of(6) != 2 ||
            topo.sibling_of(1) != std::optional<int>(5) ||
            topo.sibling_of(7) != std::optional<int>(3) ||
            !symmetric(topo, why)) {
            verdict(4, false, "2-thread tree parsed wrong: " + why);
            return;
        }
    }
    {
        TempSysroot tree; // mixed: two 2-way cores + two singles
        tree.add_cpu(0, "0-1");
        tree.add_cpu(1, "0-1");
        tree.add_cpu(2, "2,3");
        tree.add_cpu(3, "2,3");
        tree.add_cpu(4, "4");
        tree.add_cpu(5, "5");
        const CpuTopology topo = detect_topology(tree.path());
        if (topo.logical_ids.size() != 6 || !topo.smt_enabled ||
            topo.cores.size() != 4 ||
            topo.sibling_of(0) != std::optional<int>(1) ||
            topo.sibling_of(4).has_value() || !symmetric(topo, why)) {
            verdict(4, false, "mixed tree parsed wrong: " + why);
            return;
        }
    }
    verdict(4, true,
            "1-thread, 2-thread and mixed sibling trees parse correctly; "
            "sibling relation symmetric");
}

// ---------------------------------------------------------------------------
// C5: channel self-test (needs clflush + a calibratable channel)

void criterion_5() {
    if (!has_clflush()) {
        skip(5, "clflush not available on this CPU");
        return;
    }
    ChannelCalibration cal;
    try {
        cal = calibrate_channel(2048, 7);
    } catch (const Error& e) {
        skip(5, fmt("channel not calibratable here: %s", e.what()));
        return;
    }

    Timer timer;
    ProbeArray probe;
    probe.touch_all();
    std::mt19937_64 rng(2026);
    const int trials = 1000;

    int exact = 0;
    for (int t = 0; t < trials; ++t) {
        const int planted = static_cast<int>(rng() % ProbeArray::kSlots);
        probe.flush_all();
        force_read(probe.slot(static_cast<size_t>(planted)));
        memory_fence();
        const std::vector<int> observed =
            probe.probe(cal, ProbeMode::Cached, rng());
        if (observed.size() == 1 && observed[0] == planted)
            ++exact;
    }

    int control_hits = 0;
    for (int t = 0; t < trials; ++t) {
        probe.flush_all();
        if (!probe.probe(cal, ProbeMode::Cached, rng()).empty())
            ++control_hits;
    }

    const double secs = timer.seconds();
    const std::string numbers =
        fmt("planted slot recovered exactly in %d/%d trials (need 990), "
            "control noise %d/%d (allow 10), %.2fs (budget 10s)",
            exact, trials, control_hits, trials, secs);
    if (running_under_hypervisor()) {
        // Host-side prefetch and scheduling activity adds a spurious-hit
        // floor of one to a few percent that no guest-side measurement
        // discipline removes; the fidelity bar assumes bare metal.
        skip(5, "hypervisor detected, single-slot fidelity is judged on bare "
                "metal only; measured anyway: " +
                    numbers);
        return;
    }
    verdict(5, exact >= 990 && control_hits <= 10 && secs < 10.0, numbers);
}

// ---------------------------------------------------------------------------
// C6-C9 share machine identity and an injectability probe

struct HwContext {
    bool available = false;
    std::string unavailable_reason;
    CpuTopology topo;
    MachineMetadata meta;
    int cpu = -1;
    double nofence_rate = -1.0; // LoadShiftLoad / NoFence / quiet sibling
};

HwContext probe_hardware() {
    HwContext hw;
    if (!has_clflush()) {
        hw.unavailable_reason = "clflush not available on this CPU";
        return hw;
    }
    try {
        hw.topo = detect_topology();
        hw.cpu = hw.topo.logical_ids.at(0);
        hw.meta = collect_machine_metadata();

        ExperimentConfig probe;
        probe.gadget = GadgetKind::LoadShiftLoad;
        probe.fence = FenceMode::NoFence;
        probe.workload = WorkloadKind::None;
        probe.trials = 500;
        probe.cpu = hw.cpu;
        probe.seed = 11;
        hw.nofence_rate = run_experiment(probe, hw.topo).rate();
        hw.available = true;
    } catch (const Error& e) {
        hw.unavailable_reason = e.what();
    }
    return hw;
}

bool injectable(const HwContext& hw) { return hw.nofence_rate >= 0.10; }

std::string not_injectable_notice(const HwContext& hw) {
    return fmt("indirect-branch injection does not take on this machine "
               "(unfenced best-case rate %.1f%%; hardened predictor or "
               "virtualized environment)",
               100.0 * hw.nofence_rate);
}

double cell_rate(const HwContext& hw, GadgetKind g, FenceMode f, WorkloadKind w,
                 uint64_t seed) {
    ExperimentConfig config;
    config.gadget = g;
    config.fence = f;
    config.workload = w;
    config.trials = 1000;
    config.cpu = hw.cpu;
    config.seed = seed;
    return run_experiment(config, hw.topo).rate();
}

void criterion_6(const HwContext& hw) {
    if (!hw.available) {
        skip(6, hw.unavailable_reason);
        return;
    }
    if (!injectable(hw)) {
        skip(6, not_injectable_notice(hw));
        return;
    }
    try {
        const double nofence =
            cell_rate(hw, GadgetKind::LoadShiftLoad, FenceMode::NoFence,
                      WorkloadKind::None, 21);
        // The fenced leak is specified as eliminated on these cores; other
        // parts (notably Zen families) legitimately leak through the fence.
        static const std::set<std::string> fenced_quiet_parts = {
            "Goldmont Plus", "Tremont",   "Sunny Cove",
            "Willow Cove",   "Golden Cove", "Gracemont"};
        if (fenced_quiet_parts.count(hw.meta.microarch)) {
            const double fenced =
                cell_rate(hw, GadgetKind::LoadShiftLoad, FenceMode::Lfence,
                          WorkloadKind::None, 22);
            verdict(6, nofence >= 0.90 && fenced <= 0.01,
                    fmt("unfenced %.1f%% (need >=90%%), fenced %.2f%% "
                        "(allow <=1%%) on %s",
                        100 * nofence, 100 * fenced,
                        hw.meta.microarch.c_str()));
        } else {
            verdict(6, nofence >= 0.90,
                    fmt("unfenced %.1f%% (need >=90%%); fenced bound not "
                        "asserted on %s",
                        100 * nofence, hw.meta.microarch.c_str()));
        }
    } catch (const Error& e) {
        verdict(6, false, fmt("cell failed to run: %s", e.what()));
    }
}

void criterion_7(const HwContext& hw) {
    if (!hw.available) {
        skip(7, hw.unavailable_reason);
        return;
    }
    if (hw.meta.microarch != "Zen 2") {
        skip(7, fmt("requires Zen 2 (this machine: %s)",
                    hw.meta.microarch.c_str()));
        return;
    }
    if (!injectable(hw)) {
        skip(7, not_injectable_notice(hw));
        return;
    }
    if (!hw.topo.smt_enabled || !hw.topo.sibling_of(hw.cpu)) {
        skip(7, "needs an SMT sibling for the contention workload");
        return;
    }
    try {
        const double minimal =
            cell_rate(hw, GadgetKind::MinimalLoad, FenceMode::Lfence,
                      WorkloadKind::None, 31);
        const double contested =
            cell_rate(hw, GadgetKind::LoadShiftLoad, FenceMode::Lfence,
                      WorkloadKind::CondMispredicted, 32);

        PocConfig poc;
        poc.fence = FenceMode::Lfence;
        poc.workload = WorkloadKind::CondMispredicted;
        poc.cpu = hw.cpu;
        poc.trials_per_byte = 100;
        poc.seed = 33;
        poc.message = "TRANSIENT WINDOW"; // 16 bytes
        const PocResult recovered = run_poc(poc, hw.topo);

        const bool ok = minimal >= 0.90 && contested >= 0.10 &&
                        recovered.recovered == recovered.expected;
        verdict(7, ok,
                fmt("minimal-load fenced %.1f%% (need >=90%%), mispredicted-"
                    "branch sibling raises fenced leak to %.1f%% (need "
                    ">=10%%), 16-byte recovery \"%s\"",
                    100 * minimal, 100 * contested,
                    recovered.recovered.c_str()));
    } catch (const Error& e) {
        verdict(7, false, fmt("cell failed to run: %s", e.what()));
    }
}

void criterion_8(const HwContext& hw) {
    if (!hw.available) {
        skip(8, hw.unavailable_reason);
        return;
    }
    if (hw.meta.microarch != "Golden Cove") {
        skip(8, fmt("requires Golden Cove (this machine: %s)",
                    hw.meta.microarch.c_str()));
        return;
    }
    if (!injectable(hw)) {
        skip(8, not_injectable_notice(hw));
        return;
    }
    if (!hw.topo.smt_enabled || !hw.topo.sibling_of(hw.cpu)) {
        skip(8, "needs an SMT sibling for the contention workload");
        return;
    }
    try {
        const double contested =
            cell_rate(hw, GadgetKind::LoadShiftLoad, FenceMode::Lfence,
                      WorkloadKind::IndirectPredicted, 41);
        verdict(8, contested >= 0.50,
                fmt("predicted-indirect sibling raises fenced leak to %.1f%% "
                    "(need >=50%%)",
                    100 * contested));
    } catch (const Error& e) {
        verdict(8, false, fmt("cell failed to run: %s", e.what()));
    }
}

void criterion_9(const HwContext& hw) {
    static const std::vector<std::pair<std::string, int>> reference = {
        {"Goldmont Plus", 5}, {"Tremont", 5},  {"Sunny Cove", 2},
        {"Willow Cove", 2},   {"Golden Cove", 14}, {"Gracemont", 23},
        {"Zen", 23},          {"Zen+", 23},    {"Zen 2", 23},
        {"Zen 3", 15},
    };
    if (!hw.available) {
        info(9, fmt("window sweep not attempted: %s",
                    hw.unavailable_reason.c_str()));
        return;
    }
    const auto ref = std::find_if(reference.begin(), reference.end(),
                                  [&](const auto& r) {
                                      return r.first == hw.meta.microarch;
                                  });
    if (ref == reference.end()) {
        info(9, fmt("no reference window recorded for %s",
                    hw.meta.microarch.c_str()));
        return;
    }
    if (!injectable(hw)) {
        info(9, fmt("reference window for %s is %d spacers; sweep not "
                    "attempted (%s)",
                    hw.meta.microarch.c_str(), ref->second,
                    not_injectable_notice(hw).c_str()));
        return;
    }
    try {
        ExperimentConfig base;
        base.gadget = GadgetKind::LoadOnce;
        base.fence = FenceMode::Lfence;
        base.workload = WorkloadKind::None;
        base.spacer_kind = SpacerKind::Nop;
        base.trials = 500;
        base.cpu = hw.cpu;
        base.seed = 51;
        const SweepResult sweep =
            estimate_window(hardware_cell_runner(base, hw.topo));
        const int measured = sweep.max_spacers_with_signal;
        const bool within =
            std::abs(measured - ref->second) <= 0.30 * ref->second;
        info(9, fmt("fenced single-load window: measured %d spacer(s)%s, "
                    "reference %d (%s +-30%%)",
                    measured, sweep.capped ? " (capped)" : "", ref->second,
                    within ? "within" : "outside"));
    } catch (const Error& e) {
        info(9, fmt("window sweep failed to run: %s", e.what()));
    }
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    const HwContext hw = probe_hardware();
    criterion_6(hw);
    criterion_7(hw);
    criterion_8(hw);
    criterion_9(hw);
    if (g_failures)
        std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    else
        std::printf("acceptance: all judged criteria passed\n");
    return g_failures == 0 ? 0 : 1;
}
