#pragma once

#include "specwin/channel.hpp"
#include "specwin/experiment.hpp"
#include "specwin/topology.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace specwin {

// Inverse of the *_name functions; throw the matching Unsupported* error on
// unknown strings. These accept exactly the names the CLI documents.
GadgetKind parse_gadget(const std::string& name);
FenceMode parse_fence(const std::string& name);
WorkloadKind parse_workload(const std::string& name);
SpacerKind parse_spacer(const std::string& name);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const MachineMetadata& m);
void from_json(const nlohmann::json& j, MachineMetadata& m);
void to_json(nlohmann::json& j, const ExperimentResult& r);
void from_json(const nlohmann::json& j, ExperimentResult& r);
void to_json(nlohmann::json& j, const PocResult& p);
void from_json(const nlohmann::json& j, PocResult& p);
void to_json(nlohmann::json& j, const ChannelCalibration& c);
void from_json(const nlohmann::json& j, ChannelCalibration& c);
void to_json(nlohmann::json& j, const CpuTopology& t);

// One JSON object per line; append-friendly, so partial runs still parse.
void write_results_jsonl(const std::filesystem::path& path,
                         const std::vector<ExperimentResult>& results);
void append_result_jsonl(const std::filesystem::path& path,
                         const ExperimentResult& result);
std::vector<ExperimentResult> read_results_jsonl(const std::filesystem::path& path);

void write_pocs_jsonl(const std::filesystem::path& path,
                      const std::vector<PocResult>& pocs);
std::vector<PocResult> read_pocs_jsonl(const std::filesystem::path& path);

} // namespace specwin
