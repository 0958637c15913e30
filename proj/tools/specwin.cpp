// specwin: measures how far transient execution reaches past a mispredicted
// indirect branch, with and without a dispatch-serializing LFENCE in front
// of it. All measurements run against the calling process only, but they
// deliberately train the branch predictor and hammer the cache, so the
// hardware-facing subcommands require --i-own-this-machine.

#include "specwin/channel.hpp"
#include "specwin/cpuinfo.hpp"
#include "specwin/errors.hpp"
#include "specwin/golden.hpp"
#include "specwin/harness.hpp"
#include "specwin/report.hpp"
#include "specwin/serialize.hpp"
#include "specwin/sweep.hpp"
#include "specwin/timing.hpp"
#include "specwin/topology.hpp"
#include "specwin/version.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace specwin;

constexpr int kExitEnvironment = 2; // machine cannot support the measurement

struct CellFlags {
    std::string gadget = "lsl";
    std::string fence = "lfence";
    std::string workload = "none";
    std::string spacer = "nop";
    int cpu = -1;
    int sibling = -1;
    int trials = 1000;
    int nops = 0;
    int train = 8;
    uint64_t seed = 1;
    bool control = false;
    std::string out;

    ExperimentConfig to_config() const {
        ExperimentConfig c;
        c.gadget = parse_gadget(gadget);
        c.fence = parse_fence(fence);
        c.workload = parse_workload(workload);
        c.spacer_kind = parse_spacer(spacer);
        c.spacer_nops = nops;
        c.cpu = cpu;
        c.sibling = sibling;
        c.trials = trials;
        c.train_iterations = train;
        c.seed = seed;
        c.control = control;
        return c;
    }
};

const std::vector<std::string> kGadgetNames = {
    "lsl", "load-once", "minimal", "store", "prefetch", "flush", "complex",
    "three-load"};
const std::vector<std::string> kFenceNames = {"none", "lfence"};
const std::vector<std::string> kWorkloadNames = {
    "none", "djmp", "jcc-p", "jcc-m", "ijmp-p", "ijmp-m", "farjmp", "xor",
    "nanosleep"};
const std::vector<std::string> kSpacerNames = {"nop", "cbw"};

void add_cell_options(CLI::App* sub, CellFlags& f, bool with_nops = true) {
    sub->add_option("--gadget", f.gadget, "disclosure gadget template")
        ->check(CLI::IsMember(kGadgetNames));
    sub->add_option("--fence", f.fence, "fence in front of the indirect jump")
        ->check(CLI::IsMember(kFenceNames));
    sub->add_option("--workload", f.workload, "instruction mix on the SMT sibling")
        ->check(CLI::IsMember(kWorkloadNames));
    sub->add_option("--spacer", f.spacer, "spacer instruction before the gadget")
        ->check(CLI::IsMember(kSpacerNames));
    sub->add_option("--cpu", f.cpu, "logical CPU to pin the victim to");
    sub->add_option("--sibling", f.sibling,
                    "logical CPU for the workload (default: SMT sibling of --cpu)");
    sub->add_option("--trials", f.trials, "races per cell")->check(CLI::PositiveNumber);
    if (with_nops)
        sub->add_option("--nops", f.nops, "spacer instructions before the gadget")
            ->check(CLI::Range(0, kMaxSpacers));
    sub->add_option("--train", f.train, "training runs before each race")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.seed, "rng seed (secrets, probe order, workload)");
    sub->add_option("--out", f.out, "append results to this JSON-lines file");
}

void require_ownership(bool owned) {
    if (!owned)
        throw Error("this subcommand trains the branch predictor and measures "
                    "the cache; pass --i-own-this-machine to confirm the "
                    "machine is yours to experiment on");
}

void print_config_echo(const ExperimentConfig& c) {
    std::printf("# %s %s | gadget=%s fence=%s workload=%s nops=%d spacer=%s "
                "cpu=%d sibling=%d trials=%d train=%d seed=%llu%s\n",
                kToolkitName, kToolkitVersion, gadget_name(c.gadget),
                fence_name(c.fence), workload_name(c.workload), c.spacer_nops,
                spacer_name(c.spacer_kind), c.cpu, c.sibling, c.trials,
                c.train_iterations, static_cast<unsigned long long>(c.seed),
                c.control ? " control" : "");
}

void print_result_line(const ExperimentResult& r) {
    std::printf("%-10s %-6s %-9s nops=%-2d  rate=%-5s  hits=%d/%d discarded=%d "
                "threshold=%llu\n",
                gadget_name(r.config.gadget), fence_name(r.config.fence),
                workload_name(r.config.workload), r.config.spacer_nops,
                format_rate(r.rate()).c_str(), r.hits, r.counted, r.discarded,
                static_cast<unsigned long long>(r.threshold));
}

ExperimentResult run_and_record(const ExperimentConfig& config,
                                const CpuTopology& topo, const std::string& out) {
    ExperimentResult r = run_experiment(config, topo);
    print_result_line(r);
    if (!out.empty())
        append_result_jsonl(out, r);
    return r;
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_topology() {
    const CpuTopology topo = detect_topology();
    nlohmann::json j = topo;
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

int cmd_calibrate(size_t samples, uint64_t seed, const std::string& out) {
    const ChannelCalibration cal = calibrate_channel(samples, seed);
    nlohmann::json j = cal;
    j["version"] = kToolkitVersion;
    j["seed"] = seed;
    std::printf("%s\n", j.dump(2).c_str());
    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f)
            throw IoError("cannot open " + out + " for writing");
        f << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_selftest(bool fixture_only, uint64_t seed) {
    int failures = 0;

    size_t bad = 0;
    for (const auto& fix : golden_fixtures()) {
        const std::string diff = check_against_golden(fix);
        if (!diff.empty()) {
            std::printf("FAIL encoder: %s\n", diff.c_str());
            ++bad;
        }
    }
    std::printf("%s encoder: %zu/%zu reference victims byte-identical\n",
                bad == 0 ? "ok  " : "FAIL", golden_fixtures().size() - bad,
                golden_fixtures().size());
    failures += bad != 0;

    if (fixture_only)
        return failures == 0 ? 0 : 1;

    ChannelCalibration cal;
    try {
        cal = calibrate_channel(4096, seed);
        std::printf("ok   channel: hit p99 %llu < threshold %llu < miss p1 %llu\n",
                    static_cast<unsigned long long>(cal.hit_p99),
                    static_cast<unsigned long long>(cal.threshold),
                    static_cast<unsigned long long>(cal.miss_p1));
    } catch (const Error& e) {
        std::printf("FAIL channel: %s\n", e.what());
        return kExitEnvironment;
    }

    // architectural round trip: touching a slot must light up exactly that
    // slot, in both probe directions
    {
        ProbeArray probe;
        probe.touch_all();
        int misses = 0, extras = 0;
        for (int s : {7, 123, 200}) {
            probe.flush_all();
            force_read(probe.slot(static_cast<size_t>(s)));
            memory_fence();
            auto seen = probe.probe(cal, ProbeMode::Cached, seed + uint64_t(s));
            if (std::find(seen.begin(), seen.end(), s) == seen.end())
                ++misses;
            extras += int(seen.size()) - 1;
        }
        probe.preload_all();
        flush_line(probe.slot(42));
        memory_fence();
        auto seen = probe.probe(cal, ProbeMode::Evicted, seed + 1000);
        const bool inverted_ok =
            std::find(seen.begin(), seen.end(), 42) != seen.end();
        if (misses == 0 && inverted_ok && extras < 32) {
            std::printf("ok   probe: planted slots read back (%d stray hits)\n",
                        extras);
        } else {
            std::printf("FAIL probe: %d planted slots missing, inverted %s, "
                        "%d stray hits\n",
                        misses, inverted_ok ? "ok" : "missing", extras);
            return kExitEnvironment;
        }
    }

    // control cell: branch trained to the landing pad must show (nearly) no
    // signal; anything above noise means the channel lies
    {
        ExperimentConfig cfg;
        cfg.gadget = GadgetKind::LoadShiftLoad;
        cfg.fence = FenceMode::NoFence;
        cfg.trials = 200;
        cfg.seed = seed;
        cfg.control = true;
        const ExperimentResult r = run_experiment(cfg, detect_topology());
        if (r.rate() <= 0.05) {
            std::printf("ok   control: %d/%d hits with an untrained gadget\n",
                        r.hits, r.counted);
        } else {
            std::printf("FAIL control: %d/%d hits with an untrained gadget\n",
                        r.hits, r.counted);
            return kExitEnvironment;
        }
    }

    return failures == 0 ? 0 : 1;
}

int cmd_cell(const CellFlags& flags) {
    const CpuTopology topo = detect_topology();
    const ExperimentConfig config = flags.to_config();
    print_config_echo(config);
    const ExperimentResult r = run_and_record(config, topo, flags.out);
    std::printf("%s\n", nlohmann::json(r).dump().c_str());
    return 0;
}

// Shared shape of the three grid subcommands: run a batch of cells, skip
// the ones this machine cannot host, render the table.
int run_grid(const std::vector<ExperimentConfig>& cells, TableKind kind,
             const CpuTopology& topo, const std::string& out) {
    ResultSet rs;
    std::vector<std::string> skipped;
    for (const auto& config : cells) {
        try {
            rs.experiments.push_back(run_and_record(config, topo, out));
        } catch (const SmtDisabled& e) {
            skipped.push_back(std::string(workload_name(config.workload)) + ": " +
                              e.what());
        } catch (const NotSibling& e) {
            skipped.push_back(std::string(workload_name(config.workload)) + ": " +
                              e.what());
        }
    }
    for (const auto& s : skipped)
        std::printf("skipped %s\n", s.c_str());
    if (rs.experiments.empty()) {
        std::printf("no cell could run on this machine\n");
        return kExitEnvironment;
    }
    std::printf("\n%s", render_table(kind, rs).c_str());
    return 0;
}

int cmd_table2(const CellFlags& flags) {
    const CpuTopology topo = detect_topology();
    std::vector<ExperimentConfig> cells;
    for (const auto& g : kGadgetNames) {
        for (const auto& fence : kFenceNames) {
            CellFlags f = flags;
            f.gadget = g;
            f.fence = fence;
            cells.push_back(f.to_config());
        }
    }
    return run_grid(cells, TableKind::GadgetByFence, topo, flags.out);
}

int cmd_table4(const CellFlags& flags) {
    const CpuTopology topo = detect_topology();
    std::vector<ExperimentConfig> cells;
    for (const std::string g : {"minimal", "store", "prefetch", "flush"}) {
        for (const auto& fence : kFenceNames) {
            CellFlags f = flags;
            f.gadget = g;
            f.fence = fence;
            cells.push_back(f.to_config());
        }
    }
    return run_grid(cells, TableKind::MinimalVariants, topo, flags.out);
}

int cmd_table5(const CellFlags& flags) {
    const CpuTopology topo = detect_topology();
    std::vector<ExperimentConfig> cells;
    for (const auto& wl : kWorkloadNames) {
        CellFlags f = flags;
        f.workload = wl;
        cells.push_back(f.to_config());
    }
    return run_grid(cells, TableKind::SmtWorkloads, topo, flags.out);
}

// The sibling workload that disturbed the fenced victim the most in prior
// measurements, per microarchitecture family. A starting point, not a law;
// override with --workload.
WorkloadKind default_best_workload(const std::string& microarch) {
    if (microarch == "Zen" || microarch == "Zen+")
        return WorkloadKind::XorLoop;
    if (microarch == "Zen 2")
        return WorkloadKind::CondMispredicted;
    if (microarch == "Zen 3")
        return WorkloadKind::Nanosleep;
    return WorkloadKind::IndirectPredicted;
}

int cmd_table6(const CellFlags& flags, const std::string& workload_override,
               int trials_per_byte) {
    const CpuTopology topo = detect_topology();

    WorkloadKind best;
    if (!workload_override.empty()) {
        best = parse_workload(workload_override);
    } else {
        const MachineMetadata m = collect_machine_metadata();
        best = default_best_workload(m.microarch);
        std::printf("# best-guess workload for %s: %s\n", m.microarch.c_str(),
                    workload_name(best));
    }

    struct Row {
        FenceMode fence;
        WorkloadKind workload;
    };
    const Row rows[] = {{FenceMode::NoFence, WorkloadKind::None},
                        {FenceMode::Lfence, WorkloadKind::None},
                        {FenceMode::Lfence, best}};

    ResultSet rs;
    for (const Row& row : rows) {
        PocConfig pc;
        pc.fence = row.fence;
        pc.workload = row.workload;
        pc.cpu = flags.cpu;
        pc.sibling = flags.sibling;
        pc.trials_per_byte = trials_per_byte;
        pc.train_iterations = flags.train;
        pc.seed = flags.seed;
        try {
            PocResult p = run_poc(pc, topo);
            std::printf("%-6s %-9s -> %s (%d/%zu)\n", fence_name(p.fence),
                        workload_name(p.workload), p.recovered.c_str(),
                        p.correct_bytes, p.expected.size());
            rs.pocs.push_back(std::move(p));
        } catch (const SmtDisabled& e) {
            std::printf("skipped %s/%s: %s\n", fence_name(row.fence),
                        workload_name(row.workload), e.what());
        } catch (const NotSibling& e) {
            std::printf("skipped %s/%s: %s\n", fence_name(row.fence),
                        workload_name(row.workload), e.what());
        }
    }
    if (rs.pocs.empty()) {
        std::printf("no recovery run could execute on this machine\n");
        return kExitEnvironment;
    }
    std::printf("\n%s", render_table(TableKind::PocMatrix, rs).c_str());
    if (!flags.out.empty())
        write_pocs_jsonl(flags.out, rs.pocs);
    return 0;
}

int cmd_sweep(const CellFlags& flags, int cap) {
    const CpuTopology topo = detect_topology();
    ExperimentConfig base = flags.to_config();
    print_config_echo(base);

    SweepOptions opts;
    opts.cap = cap;
    const SweepResult sweep = estimate_window(hardware_cell_runner(base, topo), opts);

    std::printf("%s", render_sweep_plot(sweep).c_str());
    if (!flags.out.empty()) {
        std::ofstream f(flags.out, std::ios::trunc);
        if (!f)
            throw IoError("cannot open " + flags.out + " for writing");
        f << sweep_to_csv(sweep);
    }
    return 0;
}

int cmd_report(const std::string& in, const std::vector<std::string>& sweep_csvs,
               const std::string& poc_file, const std::string& table, bool csv) {
    ResultSet rs;
    if (!in.empty())
        rs.experiments = read_results_jsonl(in);
    if (!poc_file.empty())
        rs.pocs = read_pocs_jsonl(poc_file);
    for (const auto& path : sweep_csvs) {
        std::ifstream f(path);
        if (!f)
            throw IoError("cannot open " + path);
        std::string text((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
        LabeledSweep ls;
        ls.label = std::filesystem::path(path).stem().string();
        ls.result = sweep_from_csv(text);
        rs.sweeps.push_back(std::move(ls));
    }

    TableKind kind;
    if (table == "gadget-fence")
        kind = TableKind::GadgetByFence;
    else if (table == "variants")
        kind = TableKind::MinimalVariants;
    else if (table == "workloads")
        kind = TableKind::SmtWorkloads;
    else if (table == "windows")
        kind = TableKind::WindowSizes;
    else if (table == "poc")
        kind = TableKind::PocMatrix;
    else
        throw Error("unknown table '" + table + "'");

    std::printf("%s", (csv ? render_table_csv(kind, rs) : render_table(kind, rs)).c_str());
    if (kind == TableKind::WindowSizes && !csv)
        for (const auto& s : rs.sweeps)
            std::printf("\n[%s]\n%s", s.label.c_str(),
                        render_sweep_plot(s.result).c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kToolkitName) +
                 ": speculation-window measurements around LFENCE/JMP"};
    app.set_version_flag("--version", std::string(kToolkitName) + " " + kToolkitVersion);
    app.require_subcommand(1);

    bool owned = false;
    app.add_flag("--i-own-this-machine", owned,
                 "confirm this machine is yours to run predictor experiments on");

    int rc = 0;

    // topology
    auto* sub_topo = app.add_subcommand("topology", "print the detected CPU topology");
    sub_topo->callback([&] { rc = cmd_topology(); });

    // calibrate
    size_t cal_samples = 4096;
    uint64_t cal_seed = 1;
    std::string cal_out;
    auto* sub_cal =
        app.add_subcommand("calibrate", "measure cache hit/miss latency split");
    sub_cal->add_option("--samples", cal_samples, "samples per class")
        ->check(CLI::PositiveNumber);
    sub_cal->add_option("--seed", cal_seed, "probe-order seed");
    sub_cal->add_option("--out", cal_out, "also write the calibration JSON here");
    sub_cal->callback([&] { rc = cmd_calibrate(cal_samples, cal_seed, cal_out); });

    // selftest
    bool fixture_only = false;
    uint64_t selftest_seed = 1;
    auto* sub_self = app.add_subcommand(
        "selftest", "check the encoder against reference bytes and the channel "
                    "against planted slots");
    sub_self->add_flag("--fixture-only", fixture_only,
                       "skip the hardware checks, verify encodings only");
    sub_self->add_option("--seed", selftest_seed, "probe-order seed");
    sub_self->callback([&] { rc = cmd_selftest(fixture_only, selftest_seed); });

    // cell
    CellFlags cell_flags;
    auto* sub_cell = app.add_subcommand("cell", "run one measurement cell");
    add_cell_options(sub_cell, cell_flags);
    sub_cell->add_flag("--control", cell_flags.control,
                       "train to the landing pad instead of the gadget (noise floor)");
    sub_cell->callback([&] {
        require_ownership(owned);
        rc = cmd_cell(cell_flags);
    });

    // table2
    CellFlags t2_flags;
    auto* sub_t2 = app.add_subcommand(
        "table2", "every gadget x fence mode, one rate table");
    add_cell_options(sub_t2, t2_flags);
    sub_t2->remove_option(sub_t2->get_option("--gadget"));
    sub_t2->remove_option(sub_t2->get_option("--fence"));
    sub_t2->callback([&] {
        require_ownership(owned);
        rc = cmd_table2(t2_flags);
    });

    // table4
    CellFlags t4_flags;
    auto* sub_t4 = app.add_subcommand(
        "table4", "pointer-chase gadget variants x fence mode");
    add_cell_options(sub_t4, t4_flags);
    sub_t4->remove_option(sub_t4->get_option("--gadget"));
    sub_t4->remove_option(sub_t4->get_option("--fence"));
    sub_t4->callback([&] {
        require_ownership(owned);
        rc = cmd_table4(t4_flags);
    });

    // table5
    CellFlags t5_flags;
    auto* sub_t5 = app.add_subcommand(
        "table5", "every SMT sibling workload against the fenced victim");
    add_cell_options(sub_t5, t5_flags);
    sub_t5->remove_option(sub_t5->get_option("--workload"));
    sub_t5->callback([&] {
        require_ownership(owned);
        rc = cmd_table5(t5_flags);
    });

    // table6
    CellFlags t6_flags;
    std::string t6_workload;
    int t6_trials_per_byte = 100;
    auto* sub_t6 = app.add_subcommand(
        "table6", "secret recovery with and without the fence");
    sub_t6->add_option("--cpu", t6_flags.cpu, "logical CPU to pin the victim to");
    sub_t6->add_option("--sibling", t6_flags.sibling,
                       "logical CPU for the workload row");
    sub_t6->add_option("--workload", t6_workload,
                       "workload for the fenced row (default: by microarchitecture)")
        ->check(CLI::IsMember(kWorkloadNames));
    sub_t6->add_option("--trials", t6_trials_per_byte, "races per recovered byte")
        ->check(CLI::PositiveNumber);
    sub_t6->add_option("--train", t6_flags.train, "training runs before each race")
        ->check(CLI::PositiveNumber);
    sub_t6->add_option("--seed", t6_flags.seed, "rng seed");
    sub_t6->add_option("--out", t6_flags.out, "write recovery results (JSON lines)");
    sub_t6->callback([&] {
        require_ownership(owned);
        rc = cmd_table6(t6_flags, t6_workload, t6_trials_per_byte);
    });

    // sweep
    CellFlags sweep_flags;
    int sweep_cap = kMaxSpacers;
    sweep_flags.trials = 500;
    auto* sub_sweep = app.add_subcommand(
        "sweep", "grow the spacer run until the signal dies; estimate the window");
    add_cell_options(sub_sweep, sweep_flags, /*with_nops=*/false);
    sub_sweep->add_option("--cap", sweep_cap, "largest spacer count to try")
        ->check(CLI::Range(0, kMaxSpacers));
    sub_sweep->callback([&] {
        require_ownership(owned);
        rc = cmd_sweep(sweep_flags, sweep_cap);
    });

    // report
    std::string rep_in, rep_poc, rep_table;
    std::vector<std::string> rep_sweeps;
    bool rep_csv = false;
    auto* sub_rep = app.add_subcommand("report", "render tables from saved results");
    sub_rep->add_option("--in", rep_in, "experiment results (JSON lines)");
    sub_rep->add_option("--sweep-csv", rep_sweeps, "sweep curve CSV (repeatable)");
    sub_rep->add_option("--poc", rep_poc, "recovery results (JSON lines)");
    sub_rep
        ->add_option("--table", rep_table,
                     "gadget-fence | variants | workloads | windows | poc")
        ->required()
        ->check(CLI::IsMember({"gadget-fence", "variants", "workloads", "windows",
                               "poc"}));
    sub_rep->add_flag("--csv", rep_csv, "emit CSV instead of the plaintext table");
    sub_rep->callback([&] {
        rc = cmd_report(rep_in, rep_sweeps, rep_poc, rep_table, rep_csv);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const SmtDisabled& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitEnvironment;
    } catch (const CalibrationFailed& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitEnvironment;
    } catch (const DistributionsOverlap& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitEnvironment;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return rc;
}
