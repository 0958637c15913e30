#pragma once

#include "specwin/experiment.hpp"
#include "specwin/topology.hpp"

#include <functional>
#include <string>
#include <vector>

namespace specwin {

struct SweepPoint {
    int spacers = 0;
    int hits = 0;
    int counted = 0;
    double rate() const { return counted > 0 ? double(hits) / counted : 0.0; }
};

struct SweepResult {
    std::vector<SweepPoint> curve; // ascending spacer counts, no gaps
    // Largest spacer count that still showed signal; -1 when none did.
    int max_spacers_with_signal = -1;
    // True when the sweep reached the cap before seeing enough quiet
    // points, i.e. the window may extend beyond what was measured.
    bool capped = false;
};

struct SweepOptions {
    int start = 0;
    int cap = kMaxSpacers;
    // Stop once this many consecutive points show no signal: one silent
    // point can be a fluke, a run of them is the end of the window.
    int quiet_margin = 3;
    // A point counts as signal when its rate reaches this floor.
    double min_rate = 0.01;
};

// Measures one spacer count and reports the outcome. Injected so the
// stopping logic can be driven by synthetic curves in tests.
using CellRunner = std::function<SweepPoint(int spacers)>;

// Walks spacer counts upward from opts.start, running one cell per count,
// until quiet_margin consecutive no-signal points or the cap. The window
// estimate is the deepest count that still leaked.
SweepResult estimate_window(const CellRunner& run_cell, const SweepOptions& opts = {});

// CellRunner that races real hardware: each point is `base` with its
// spacer count replaced. Used by the sweep subcommand.
CellRunner hardware_cell_runner(const ExperimentConfig& base, const CpuTopology& topo);

// A sweep curve plus where it came from, for rendering and persistence.
struct LabeledSweep {
    std::string label; // e.g. "<microarch> / nop"
    SpacerKind spacer_kind = SpacerKind::Nop;
    SweepResult result;
};

// nops,hits,counted,rate per line, one line per curve point.
std::string sweep_to_csv(const SweepResult& sweep);

// Rebuilds a sweep from its CSV: the curve verbatim, the window estimate
// and cap flag re-derived with the given stopping parameters.
SweepResult sweep_from_csv(const std::string& text,
                           double min_rate = SweepOptions{}.min_rate,
                           int quiet_margin = SweepOptions{}.quiet_margin);

} // namespace specwin
