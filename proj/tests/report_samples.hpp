#pragma once

// Deterministic synthetic result sets shared by the report unit tests and
// the fixture regenerator (gen_report_fixtures). Frozen: changing anything
// here invalidates the committed fixtures under fixtures/report/.

#include "specwin/report.hpp"

namespace specwin::samples {

inline ExperimentResult experiment(GadgetKind g, FenceMode f, int hits, int counted,
                                   WorkloadKind w = WorkloadKind::None,
                                   bool control = false) {
    ExperimentResult r;
    r.config.gadget = g;
    r.config.fence = f;
    r.config.workload = w;
    r.config.trials = counted;
    r.config.control = control;
    r.hits = hits;
    r.counted = counted;
    r.machine.vendor = "GenuineIntel";
    r.machine.microarch = "Golden Cove";
    r.toolkit_version = "0.1.0";
    return r;
}

// One result per (gadget, fence) cell except load-once/lfence, which stays
// empty to exercise the "-" rendering. lsl/none arrives split across two
// results to exercise trial pooling. One control row must be ignored.
inline ResultSet rate_table_set() {
    ResultSet rs;
    auto& e = rs.experiments;
    e.push_back(experiment(GadgetKind::LoadShiftLoad, FenceMode::NoFence, 600, 600));
    e.push_back(experiment(GadgetKind::LoadShiftLoad, FenceMode::NoFence, 390, 400));
    e.push_back(experiment(GadgetKind::LoadShiftLoad, FenceMode::Lfence, 2, 1000));
    e.push_back(experiment(GadgetKind::LoadOnce, FenceMode::NoFence, 1000, 1000));
    e.push_back(experiment(GadgetKind::MinimalLoad, FenceMode::NoFence, 800, 1000));
    e.push_back(experiment(GadgetKind::MinimalLoad, FenceMode::Lfence, 0, 1000));
    e.push_back(experiment(GadgetKind::StoreGadget, FenceMode::NoFence, 700, 1000));
    e.push_back(experiment(GadgetKind::StoreGadget, FenceMode::Lfence, 0, 500));
    e.push_back(experiment(GadgetKind::PrefetchGadget, FenceMode::NoFence, 650, 1000));
    e.push_back(experiment(GadgetKind::PrefetchGadget, FenceMode::Lfence, 5, 1000));
    e.push_back(experiment(GadgetKind::FlushGadget, FenceMode::NoFence, 500, 1000));
    e.push_back(experiment(GadgetKind::FlushGadget, FenceMode::Lfence, 0, 100));
    e.push_back(experiment(GadgetKind::ComplexLoad, FenceMode::NoFence, 450, 1000));
    e.push_back(experiment(GadgetKind::ComplexLoad, FenceMode::Lfence, 30, 1000));
    e.push_back(experiment(GadgetKind::ThreeLoadMasked, FenceMode::NoFence, 640, 1000));
    e.push_back(experiment(GadgetKind::ThreeLoadMasked, FenceMode::Lfence, 1, 2000));
    // channel-noise control: excluded from every table
    e.push_back(experiment(GadgetKind::LoadShiftLoad, FenceMode::NoFence, 999, 1000,
                           WorkloadKind::None, /*control=*/true));
    return rs;
}

inline ResultSet workload_table_set() {
    ResultSet rs;
    auto& e = rs.experiments;
    auto cell = [&](WorkloadKind w, FenceMode f, int hits) {
        e.push_back(experiment(GadgetKind::LoadShiftLoad, f, hits, 1000, w));
    };
    cell(WorkloadKind::None, FenceMode::Lfence, 0);
    cell(WorkloadKind::DirectJmp, FenceMode::Lfence, 10);
    cell(WorkloadKind::CondPredicted, FenceMode::Lfence, 40);
    cell(WorkloadKind::CondMispredicted, FenceMode::Lfence, 210);
    cell(WorkloadKind::IndirectPredicted, FenceMode::Lfence, 980);
    cell(WorkloadKind::IndirectMispredicted, FenceMode::Lfence, 950);
    cell(WorkloadKind::FarJmp, FenceMode::Lfence, 120);
    cell(WorkloadKind::XorLoop, FenceMode::Lfence, 300);
    cell(WorkloadKind::Nanosleep, FenceMode::Lfence, 15);
    cell(WorkloadKind::None, FenceMode::NoFence, 995);
    cell(WorkloadKind::IndirectPredicted, FenceMode::NoFence, 990);
    return rs;
}

inline SweepResult sweep_curve(std::initializer_list<std::pair<int, int>> pts,
                               int max_signal, bool capped) {
    SweepResult s;
    for (auto [spacers, hits] : pts) {
        SweepPoint p;
        p.spacers = spacers;
        p.hits = hits;
        p.counted = 1000;
        s.curve.push_back(p);
    }
    s.max_spacers_with_signal = max_signal;
    s.capped = capped;
    return s;
}

inline ResultSet window_table_set() {
    ResultSet rs;
    rs.sweeps.push_back({"Golden Cove / nop", SpacerKind::Nop,
                         sweep_curve({{0, 900}, {1, 500}, {2, 100}, {3, 0}}, 2, false)});
    rs.sweeps.push_back({"Zen 3 / cbw", SpacerKind::Cbw,
                         sweep_curve({{0, 800}, {1, 700}, {2, 600}}, 2, true)});
    rs.sweeps.push_back({"fenced / nop", SpacerKind::Nop,
                         sweep_curve({{0, 0}, {1, 0}, {2, 0}}, -1, false)});
    return rs;
}

inline ResultSet poc_table_set() {
    ResultSet rs;
    PocResult a;
    a.fence = FenceMode::NoFence;
    a.workload = WorkloadKind::None;
    a.expected = "TRANSIENT WINDOW";
    a.recovered = "TRANSIENT WINDOW";
    a.correct_bytes = 16;
    a.trials_per_byte = 100;
    rs.pocs.push_back(a);

    PocResult b;
    b.fence = FenceMode::Lfence;
    b.workload = WorkloadKind::IndirectPredicted;
    b.expected = "TRANSIENT WINDOW";
    b.recovered = "TRA.SI..T W,\"DOW"; // forces CSV quoting
    b.correct_bytes = 11;
    b.trials_per_byte = 100;
    rs.pocs.push_back(b);
    return rs;
}

// 100%, 50%, 25%, 1.3%, silent: exercises full, fractional and empty bars.
inline SweepResult plot_curve() {
    return sweep_curve({{0, 1000}, {1, 500}, {2, 250}, {3, 13}, {4, 0}}, 3, false);
}

inline SweepResult plot_curve_silent() {
    return sweep_curve({{0, 0}, {1, 0}, {2, 0}}, -1, false);
}

} // namespace specwin::samples
