#include "specwin/report.hpp"
#include "specwin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>

namespace specwin {

std::string format_rate(double rate) {
    if (rate <= 0.0)
        return "0%";
    if (rate >= 0.99)
        return ">99%";
    if (rate < 0.01)
        return "<1%";
    const long pct = std::lround(rate * 100.0);
    return std::to_string(pct) + "%";
}

namespace {

constexpr GadgetKind kAllGadgets[] = {
    GadgetKind::LoadShiftLoad,  GadgetKind::LoadOnce,
    GadgetKind::MinimalLoad,    GadgetKind::StoreGadget,
    GadgetKind::PrefetchGadget, GadgetKind::FlushGadget,
    GadgetKind::ComplexLoad,    GadgetKind::ThreeLoadMasked,
};

constexpr GadgetKind kVariantGadgets[] = {
    GadgetKind::MinimalLoad,
    GadgetKind::StoreGadget,
    GadgetKind::PrefetchGadget,
    GadgetKind::FlushGadget,
};

constexpr WorkloadKind kAllWorkloads[] = {
    WorkloadKind::None,          WorkloadKind::DirectJmp,
    WorkloadKind::CondPredicted, WorkloadKind::CondMispredicted,
    WorkloadKind::IndirectPredicted, WorkloadKind::IndirectMispredicted,
    WorkloadKind::FarJmp,        WorkloadKind::XorLoop,
    WorkloadKind::Nanosleep,
};

constexpr FenceMode kAllFences[] = {FenceMode::NoFence, FenceMode::Lfence};

struct Tally {
    long hits = 0;
    long counted = 0;
    bool any = false;
    std::string cell() const {
        if (!any)
            return "-";
        return format_rate(counted > 0 ? double(hits) / double(counted) : 0.0);
    }
};

// Left-justified fixed-width plaintext grid with a two-space gutter.
std::string layout_grid(const std::vector<std::vector<std::string>>& rows) {
    std::vector<size_t> width;
    for (const auto& row : rows)
        for (size_t c = 0; c < row.size(); ++c) {
            if (c >= width.size())
                width.push_back(0);
            width[c] = std::max(width[c], row[c].size());
        }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (size_t c = 0; c < row.size(); ++c) {
            line += row[c];
            if (c + 1 < row.size())
                line += std::string(width[c] - row[c].size() + 2, ' ');
        }
        out += line + '\n';
    }
    return out;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos)
        return field;
    std::string quoted = "\"";
    for (char ch : field) {
        if (ch == '"')
            quoted += '"';
        quoted += ch;
    }
    return quoted + '"';
}

std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& row : rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            out += csv_escape(row[c]);
            if (c + 1 < row.size())
                out += ',';
        }
        out += '\n';
    }
    return out;
}

// Rate grids over (row key, fence) with one aggregation rule: results for
// the same cell pool their trials.
template <typename RowKey>
std::vector<std::vector<std::string>> rate_grid(
    const std::vector<ExperimentResult>& experiments, const char* row_header,
    std::span<const RowKey> row_keys, const char* (*row_name)(RowKey),
    RowKey (*row_of)(const ExperimentConfig&)) {
    std::map<std::pair<int, int>, Tally> cells;
    for (const auto& r : experiments) {
        if (r.config.control)
            continue;
        const RowKey row = row_of(r.config);
        const auto row_it = std::find(row_keys.begin(), row_keys.end(), row);
        if (row_it == row_keys.end())
            continue;
        const int ri = int(row_it - row_keys.begin());
        const int ci = r.config.fence == FenceMode::Lfence ? 1 : 0;
        Tally& t = cells[{ri, ci}];
        t.hits += r.hits;
        t.counted += r.counted;
        t.any = true;
    }
    if (cells.empty())
        throw EmptyResultSet("no results feed this table");

    std::vector<std::vector<std::string>> rows;
    rows.push_back({row_header, fence_name(kAllFences[0]), fence_name(kAllFences[1])});
    for (size_t ri = 0; ri < row_keys.size(); ++ri) {
        const bool present = cells.count({int(ri), 0}) || cells.count({int(ri), 1});
        if (!present)
            continue;
        rows.push_back({row_name(row_keys[ri]), cells[{int(ri), 0}].cell(),
                        cells[{int(ri), 1}].cell()});
    }
    return rows;
}

GadgetKind gadget_of(const ExperimentConfig& c) { return c.gadget; }
WorkloadKind workload_of(const ExperimentConfig& c) { return c.workload; }

std::vector<std::vector<std::string>> window_grid(const ResultSet& results) {
    if (results.sweeps.empty())
        throw EmptyResultSet("no sweep curves to tabulate");
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"curve", "spacer", "window"});
    for (const auto& s : results.sweeps) {
        std::string window;
        if (s.result.max_spacers_with_signal < 0)
            window = "none";
        else
            window = std::to_string(s.result.max_spacers_with_signal) +
                     (s.result.capped ? "+" : "");
        rows.push_back({s.label, spacer_name(s.spacer_kind), window});
    }
    return rows;
}

std::vector<std::vector<std::string>> poc_grid(const ResultSet& results) {
    if (results.pocs.empty())
        throw EmptyResultSet("no recovery runs to tabulate");
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"fence", "workload", "bytes", "rate", "recovered"});
    for (const auto& p : results.pocs) {
        const size_t total = p.expected.size();
        const double rate = total > 0 ? double(p.correct_bytes) / double(total) : 0.0;
        rows.push_back({fence_name(p.fence), workload_name(p.workload),
                        std::to_string(p.correct_bytes) + "/" + std::to_string(total),
                        format_rate(rate), p.recovered});
    }
    return rows;
}

std::vector<std::vector<std::string>> grid_for(TableKind kind, const ResultSet& results) {
    switch (kind) {
    case TableKind::GadgetByFence:
        return rate_grid<GadgetKind>(results.experiments, "gadget", kAllGadgets,
                                     gadget_name, gadget_of);
    case TableKind::MinimalVariants:
        return rate_grid<GadgetKind>(results.experiments, "variant", kVariantGadgets,
                                     gadget_name, gadget_of);
    case TableKind::SmtWorkloads:
        return rate_grid<WorkloadKind>(results.experiments, "workload", kAllWorkloads,
                                       workload_name, workload_of);
    case TableKind::WindowSizes:
        return window_grid(results);
    case TableKind::PocMatrix:
        return poc_grid(results);
    }
    throw Error("unknown table kind");
}

} // namespace

std::string render_table(TableKind kind, const ResultSet& results) {
    return layout_grid(grid_for(kind, results));
}

std::string render_table_csv(TableKind kind, const ResultSet& results) {
    return to_csv(grid_for(kind, results));
}

std::string render_sweep_plot(const SweepResult& sweep) {
    constexpr int kBarWidth = 40;
    std::string out = "rate by spacer count (each # is 2.5%)\n";
    char line[96];
    for (const auto& p : sweep.curve) {
        const double rate = p.rate();
        const int bar = int(std::lround(rate * kBarWidth));
        std::snprintf(line, sizeof(line), "%4d |%-*s| %s\n", p.spacers, kBarWidth,
                      std::string(size_t(bar), '#').c_str(), format_rate(rate).c_str());
        out += line;
    }
    if (sweep.max_spacers_with_signal >= 0) {
        std::snprintf(line, sizeof(line), "window: signal up to %d spacer%s%s\n",
                      sweep.max_spacers_with_signal,
                      sweep.max_spacers_with_signal == 1 ? "" : "s",
                      sweep.capped ? " (capped)" : "");
        out += line;
    } else {
        out += "window: no signal at any spacer count\n";
    }
    return out;
}

} // namespace specwin
