#include "specwin/serialize.hpp"
#include "specwin/errors.hpp"
#include "specwin/version.hpp"

#include <fstream>

namespace specwin {

GadgetKind parse_gadget(const std::string& name) {
    for (auto k : {GadgetKind::LoadShiftLoad, GadgetKind::LoadOnce,
                   GadgetKind::MinimalLoad, GadgetKind::StoreGadget,
                   GadgetKind::PrefetchGadget, GadgetKind::FlushGadget,
                   GadgetKind::ComplexLoad, GadgetKind::ThreeLoadMasked})
        if (name == gadget_name(k))
            return k;
    throw UnsupportedGadget("unknown gadget '" + name + "'");
}

FenceMode parse_fence(const std::string& name) {
    for (auto m : {FenceMode::NoFence, FenceMode::Lfence})
        if (name == fence_name(m))
            return m;
    throw Error("unknown fence mode '" + name + "'");
}

WorkloadKind parse_workload(const std::string& name) {
    for (auto k : {WorkloadKind::None, WorkloadKind::DirectJmp,
                   WorkloadKind::CondPredicted, WorkloadKind::CondMispredicted,
                   WorkloadKind::IndirectPredicted, WorkloadKind::IndirectMispredicted,
                   WorkloadKind::FarJmp, WorkloadKind::XorLoop, WorkloadKind::Nanosleep})
        if (name == workload_name(k))
            return k;
    throw UnsupportedWorkload("unknown workload '" + name + "'");
}

SpacerKind parse_spacer(const std::string& name) {
    for (auto k : {SpacerKind::Nop, SpacerKind::Cbw})
        if (name == spacer_name(k))
            return k;
    throw Error("unknown spacer kind '" + name + "'");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"gadget", gadget_name(c.gadget)},
         {"fence", fence_name(c.fence)},
         {"workload", workload_name(c.workload)},
         {"spacer_nops", c.spacer_nops},
         {"spacer_kind", spacer_name(c.spacer_kind)},
         {"cpu", c.cpu},
         {"sibling", c.sibling},
         {"trials", c.trials},
         {"train_iterations", c.train_iterations},
         {"seed", c.seed},
         {"control", c.control}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.gadget = parse_gadget(j.at("gadget").get<std::string>());
    c.fence = parse_fence(j.at("fence").get<std::string>());
    c.workload = parse_workload(j.at("workload").get<std::string>());
    j.at("spacer_nops").get_to(c.spacer_nops);
    c.spacer_kind = parse_spacer(j.at("spacer_kind").get<std::string>());
    j.at("cpu").get_to(c.cpu);
    j.at("sibling").get_to(c.sibling);
    j.at("trials").get_to(c.trials);
    j.at("train_iterations").get_to(c.train_iterations);
    j.at("seed").get_to(c.seed);
    j.at("control").get_to(c.control);
}

void to_json(nlohmann::json& j, const MachineMetadata& m) {
    j = {{"vendor", m.vendor},     {"brand", m.brand},
         {"microarch", m.microarch}, {"family", m.family},
         {"model", m.model},       {"smt_enabled", m.smt_enabled},
         {"logical_cpus", m.logical_cpus}};
}

void from_json(const nlohmann::json& j, MachineMetadata& m) {
    j.at("vendor").get_to(m.vendor);
    j.at("brand").get_to(m.brand);
    j.at("microarch").get_to(m.microarch);
    j.at("family").get_to(m.family);
    j.at("model").get_to(m.model);
    j.at("smt_enabled").get_to(m.smt_enabled);
    j.at("logical_cpus").get_to(m.logical_cpus);
}

void to_json(nlohmann::json& j, const ExperimentResult& r) {
    j = {{"config", r.config},
         {"machine", r.machine},
         {"counted", r.counted},
         {"hits", r.hits},
         {"discarded", r.discarded},
         {"threshold", r.threshold},
         {"workload_iterations", r.workload_iterations},
         {"version", r.toolkit_version},
         {"rate", r.rate()}};
}

void from_json(const nlohmann::json& j, ExperimentResult& r) {
    j.at("config").get_to(r.config);
    j.at("machine").get_to(r.machine);
    j.at("counted").get_to(r.counted);
    j.at("hits").get_to(r.hits);
    j.at("discarded").get_to(r.discarded);
    j.at("threshold").get_to(r.threshold);
    j.at("workload_iterations").get_to(r.workload_iterations);
    j.at("version").get_to(r.toolkit_version);
    // "rate" is derived; recomputed from counted/hits on load
}

void to_json(nlohmann::json& j, const PocResult& p) {
    j = {{"fence", fence_name(p.fence)},
         {"workload", workload_name(p.workload)},
         {"expected", p.expected},
         {"recovered", p.recovered},
         {"correct_bytes", p.correct_bytes},
         {"trials_per_byte", p.trials_per_byte},
         {"machine", p.machine}};
}

void from_json(const nlohmann::json& j, PocResult& p) {
    p.fence = parse_fence(j.at("fence").get<std::string>());
    p.workload = parse_workload(j.at("workload").get<std::string>());
    j.at("expected").get_to(p.expected);
    j.at("recovered").get_to(p.recovered);
    j.at("correct_bytes").get_to(p.correct_bytes);
    j.at("trials_per_byte").get_to(p.trials_per_byte);
    j.at("machine").get_to(p.machine);
}

void to_json(nlohmann::json& j, const ChannelCalibration& c) {
    j = {{"hit_p99", c.hit_p99},
         {"miss_p1", c.miss_p1},
         {"threshold", c.threshold},
         {"samples_per_class", c.samples_per_class}};
}

void from_json(const nlohmann::json& j, ChannelCalibration& c) {
    j.at("hit_p99").get_to(c.hit_p99);
    j.at("miss_p1").get_to(c.miss_p1);
    j.at("threshold").get_to(c.threshold);
    j.at("samples_per_class").get_to(c.samples_per_class);
}

void to_json(nlohmann::json& j, const CpuTopology& t) {
    nlohmann::json cores = nlohmann::json::object();
    for (const auto& [core, threads] : t.cores)
        cores[std::to_string(core)] = threads;
    j = {{"logical_ids", t.logical_ids},
         {"cores", cores},
         {"smt_enabled", t.smt_enabled}};
}

void write_results_jsonl(const std::filesystem::path& path,
                         const std::vector<ExperimentResult>& results) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& r : results)
        out << nlohmann::json(r).dump() << '\n';
    if (!out)
        throw IoError("short write to " + path.string());
}

void append_result_jsonl(const std::filesystem::path& path,
                         const ExperimentResult& result) {
    std::ofstream out(path, std::ios::app);
    if (!out)
        throw IoError("cannot open " + path.string() + " for appending");
    out << nlohmann::json(result).dump() << '\n';
    if (!out)
        throw IoError("short write to " + path.string());
}

namespace {

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<T>());
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " +
                          e.what());
        }
    }
    return out;
}

} // namespace

std::vector<ExperimentResult> read_results_jsonl(const std::filesystem::path& path) {
    return read_jsonl<ExperimentResult>(path);
}

void write_pocs_jsonl(const std::filesystem::path& path,
                      const std::vector<PocResult>& pocs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& p : pocs)
        out << nlohmann::json(p).dump() << '\n';
    if (!out)
        throw IoError("short write to " + path.string());
}

std::vector<PocResult> read_pocs_jsonl(const std::filesystem::path& path) {
    return read_jsonl<PocResult>(path);
}

} // namespace specwin
