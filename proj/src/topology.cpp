#include "specwin/topology.hpp"
#include "specwin/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <pthread.h>
#include <sched.h>

namespace specwin {

namespace fs = std::filesystem;

bool CpuTopology::contains(int cpu) const {
    return std::binary_search(logical_ids.begin(), logical_ids.end(), cpu);
}

int CpuTopology::core_of(int cpu) const {
    for (const auto& [core, threads] : cores)
        if (std::find(threads.begin(), threads.end(), cpu) != threads.end())
            return core;
    throw InvalidCpu("cpu " + std::to_string(cpu) + " not in topology");
}

std::optional<int> CpuTopology::sibling_of(int cpu) const {
    const auto& threads = cores.at(core_of(cpu));
    for (int t : threads)
        if (t != cpu)
            return t;
    return std::nullopt;
}

std::vector<int> parse_cpu_list(const std::string& text) {
    // getline never reports a trailing empty token, so "1," needs its own
    // check to be rejected like any other empty token.
    std::string trimmed = text;
    while (!trimmed.empty() &&
           (trimmed.back() == '\n' || trimmed.back() == '\r' || trimmed.back() == ' '))
        trimmed.pop_back();
    if (!trimmed.empty() && trimmed.back() == ',')
        throw TopologyUnavailable("trailing separator in cpu list '" + text + "'");

    std::vector<int> out;
    std::string tok;
    std::istringstream in(text);
    auto parse_int = [&](const std::string& s) {
        int v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || v < 0)
            throw TopologyUnavailable("bad cpu list token '" + s + "' in '" + text + "'");
        return v;
    };
    while (std::getline(in, tok, ',')) {
        // strip trailing whitespace/newline
        while (!tok.empty() && (tok.back() == '\n' || tok.back() == '\r' || tok.back() == ' '))
            tok.pop_back();
        while (!tok.empty() && tok.front() == ' ')
            tok.erase(tok.begin());
        if (tok.empty())
            throw TopologyUnavailable("empty token in cpu list '" + text + "'");
        auto dash = tok.find('-');
        if (dash == std::string::npos) {
            out.push_back(parse_int(tok));
        } else {
            int lo = parse_int(tok.substr(0, dash));
            int hi = parse_int(tok.substr(dash + 1));
            if (hi < lo)
                throw TopologyUnavailable("inverted range '" + tok + "'");
            for (int v = lo; v <= hi; ++v)
                out.push_back(v);
        }
    }
    if (out.empty())
        throw TopologyUnavailable("empty cpu list '" + text + "'");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

static std::optional<int> cpu_index_of_dir(const fs::path& p) {
    const std::string name = p.filename().string();
    static const std::regex re("^cpu([0-9]+)$");
    std::smatch m;
    if (!std::regex_match(name, m, re))
        return std::nullopt;
    return std::stoi(m[1]);
}

CpuTopology detect_topology(const fs::path& sysroot) {
    const fs::path cpu_root = sysroot / "sys" / "devices" / "system" / "cpu";
    std::error_code ec;
    if (!fs::is_directory(cpu_root, ec))
        throw TopologyUnavailable("no cpu topology tree at " + cpu_root.string());

    // cpu -> its normalized sibling set
    std::map<int, std::vector<int>> sibling_sets;
    for (const auto& entry : fs::directory_iterator(cpu_root, ec)) {
        auto idx = cpu_index_of_dir(entry.path());
        if (!idx)
            continue;
        const fs::path list_file = entry.path() / "topology" / "thread_siblings_list";
        std::ifstream in(list_file);
        if (!in)
            continue; // offline cpus have no populated topology dir
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto sibs = parse_cpu_list(text);
        if (std::find(sibs.begin(), sibs.end(), *idx) == sibs.end())
            throw TopologyUnavailable("cpu" + std::to_string(*idx) +
                                      " sibling list does not contain itself");
        sibling_sets[*idx] = std::move(sibs);
    }
    if (sibling_sets.empty())
        throw TopologyUnavailable("no parseable sibling lists under " + cpu_root.string());

    CpuTopology topo;
    for (const auto& [cpu, sibs] : sibling_sets) {
        topo.logical_ids.push_back(cpu);
        // Every member of the set must report the identical set, otherwise the
        // partition into cores is ill-defined.
        for (int s : sibs) {
            auto it = sibling_sets.find(s);
            if (it == sibling_sets.end() || it->second != sibs)
                throw TopologyUnavailable("inconsistent sibling lists for cpu" +
                                          std::to_string(cpu) + " and cpu" + std::to_string(s));
        }
        int core_id = sibs.front(); // smallest member names the core
        topo.cores[core_id] = sibs;
    }
    std::sort(topo.logical_ids.begin(), topo.logical_ids.end());
    topo.smt_enabled = std::any_of(topo.cores.begin(), topo.cores.end(),
                                   [](const auto& kv) { return kv.second.size() >= 2; });
    return topo;
}

CpuTopology detect_topology() {
    const char* root = std::getenv("SPECWIN_SYSROOT");
    return detect_topology(root && *root ? fs::path(root) : fs::path("/"));
}

void pin_current_thread(int cpu, const CpuTopology& topo) {
    if (!topo.contains(cpu))
        throw InvalidCpu("cpu " + std::to_string(cpu) + " not in topology");
    cpu_set_t mask;
    CPU_ZERO(&mask);
    CPU_SET(cpu, &mask);
    if (pthread_setaffinity_np(pthread_self(), sizeof(mask), &mask) != 0)
        throw PinFailed("setaffinity for cpu " + std::to_string(cpu) + " rejected");
    auto now = current_affinity();
    if (now != std::vector<int>{cpu})
        throw PinFailed("affinity query does not confirm pin to cpu " + std::to_string(cpu));
}

std::vector<int> current_affinity() {
    cpu_set_t mask;
    CPU_ZERO(&mask);
    if (pthread_getaffinity_np(pthread_self(), sizeof(mask), &mask) != 0)
        throw PinFailed("getaffinity failed");
    std::vector<int> out;
    for (int c = 0; c < CPU_SETSIZE; ++c)
        if (CPU_ISSET(c, &mask))
            out.push_back(c);
    return out;
}

} // namespace specwin
