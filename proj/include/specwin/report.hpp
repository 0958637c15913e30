#pragma once

#include "specwin/experiment.hpp"
#include "specwin/sweep.hpp"

#include <string>
#include <vector>

namespace specwin {

// The fixed table shapes the CLI can render.
enum class TableKind {
    GadgetByFence,   // rows: all gadgets, cols: fence modes
    MinimalVariants, // rows: pointer-chase variants, cols: fence modes
    SmtWorkloads,    // rows: sibling workloads, cols: fence modes
    WindowSizes,     // rows: sweep curves, col: deepest leaking spacer count
    PocMatrix,       // rows: recovery runs
};

// Everything a report can draw from. Loaded from JSON-lines files or filled
// directly by the table subcommands.
struct ResultSet {
    std::vector<ExperimentResult> experiments;
    std::vector<LabeledSweep> sweeps;
    std::vector<PocResult> pocs;
};

// Human-facing success-rate formatting. Saturates at the ends so a table
// never claims a clean 100% or hides a nonzero leak as 0%:
//   0        -> "0%"
//   (0,1%)   -> "<1%"
//   [1%,99%) -> nearest whole percent
//   >= 99%   -> ">99%"
std::string format_rate(double rate);

// Fixed-width plaintext table. Aggregates every result that fits the shape
// (control cells are excluded); cells with no data render as "-". Throws
// EmptyResultSet when nothing in `results` feeds this table kind.
std::string render_table(TableKind kind, const ResultSet& results);

// Same selection and aggregation, machine-readable.
std::string render_table_csv(TableKind kind, const ResultSet& results);

// Horizontal bar per curve point; deterministic, terminal-friendly.
std::string render_sweep_plot(const SweepResult& sweep);

} // namespace specwin
