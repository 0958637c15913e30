#include "specwin/sweep.hpp"
#include "specwin/errors.hpp"
#include "specwin/harness.hpp"

#include <cstdio>

namespace specwin {

SweepResult estimate_window(const CellRunner& run_cell, const SweepOptions& opts) {
    if (opts.start < 0 || opts.cap > kMaxSpacers || opts.start > opts.cap)
        throw Error("sweep range outside the encodable spacer counts");
    if (opts.quiet_margin < 1)
        throw Error("quiet_margin must be positive");

    SweepResult res;
    int quiet_streak = 0;
    for (int n = opts.start; n <= opts.cap; ++n) {
        SweepPoint point = run_cell(n);
        point.spacers = n;
        const bool signal = point.hits > 0 && point.rate() >= opts.min_rate;
        res.curve.push_back(point);
        if (signal) {
            res.max_spacers_with_signal = n;
            quiet_streak = 0;
        } else if (++quiet_streak >= opts.quiet_margin) {
            return res;
        }
    }
    // Ran out of encodable spacers while the signal (or the chance of one)
    // was still alive.
    res.capped = quiet_streak < opts.quiet_margin;
    return res;
}

CellRunner hardware_cell_runner(const ExperimentConfig& base, const CpuTopology& topo) {
    return [base, &topo](int spacers) {
        ExperimentConfig config = base;
        config.spacer_nops = spacers;
        // decorrelate the per-point rng streams without losing determinism
        config.seed = base.seed + static_cast<uint64_t>(spacers) * 0x9E3779B9u;
        const ExperimentResult r = run_experiment(config, topo);
        SweepPoint p;
        p.spacers = spacers;
        p.hits = r.hits;
        p.counted = r.counted;
        return p;
    };
}

std::string sweep_to_csv(const SweepResult& sweep) {
    std::string out = "spacers,hits,counted,rate\n";
    char line[96];
    for (const auto& p : sweep.curve) {
        std::snprintf(line, sizeof(line), "%d,%d,%d,%.6f\n", p.spacers, p.hits,
                      p.counted, p.rate());
        out += line;
    }
    return out;
}

SweepResult sweep_from_csv(const std::string& text, double min_rate,
                           int quiet_margin) {
    SweepResult res;
    size_t pos = 0;
    bool header = true;
    int quiet_streak = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos)
            eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty())
            continue;
        if (header) { // "spacers,hits,counted,rate"
            header = false;
            continue;
        }
        SweepPoint p;
        if (std::sscanf(line.c_str(), "%d,%d,%d", &p.spacers, &p.hits, &p.counted) != 3)
            throw IoError("malformed sweep csv line: " + line);
        const bool signal = p.hits > 0 && p.rate() >= min_rate;
        if (signal) {
            res.max_spacers_with_signal = p.spacers;
            quiet_streak = 0;
        } else {
            ++quiet_streak;
        }
        res.curve.push_back(p);
    }
    res.capped = !res.curve.empty() && quiet_streak < quiet_margin;
    return res;
}

} // namespace specwin
