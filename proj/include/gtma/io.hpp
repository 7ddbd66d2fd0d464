#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtma/benchmark.hpp"

namespace gtma {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kFixtureFormat = "gtma-fixture-v1";

struct OutputFormats {
    bool json = true;
    bool csv = true;
};

// Fully validated experiment description. GRPO hyperparameters are always
// explicit in the file; everything else has documented defaults.
struct ExperimentConfig {
    BenchmarkSpec benchmark;
    GrpoConfig grpo;
    std::size_t eval_shots = 4;
    AggregationMode aggregation = AggregationMode::MeanPseudoWord;
    std::vector<AblationVariant> variants = all_variants();
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "out";
    OutputFormats formats;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& root);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Canonical config echo used for hashing and report headers.
nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& cfg);
nlohmann::ordered_json grpo_config_to_json(const GrpoConfig& cfg);
nlohmann::ordered_json benchmark_spec_to_json(const BenchmarkSpec& spec);

// Dataset fixture round-trip.
nlohmann::ordered_json fixture_to_json(const GeneratedBenchmark& bench);
GeneratedBenchmark fixture_from_json(const nlohmann::json& root);

// Trajectory serialization: CSV step table and a JSON document with config,
// endpoints, and steps.
std::string trajectory_csv(const Trajectory& traj);
nlohmann::ordered_json trajectory_json(const Trajectory& traj,
                                       const GrpoConfig& config,
                                       double final_score,
                                       double final_regularizer);

nlohmann::ordered_json report_json(const EvalReport& report);

struct SeedReports {
    std::uint64_t seed = 0;
    EvalReport baseline;
    std::optional<EvalReport> gtma;
};

nlohmann::ordered_json eval_summary_json(
    const ExperimentConfig& cfg, AblationVariant variant,
    const std::vector<SeedReports>& per_seed);
std::string eval_summary_csv(AblationVariant variant, std::size_t shots,
                             const std::vector<SeedReports>& per_seed);

nlohmann::ordered_json ablation_json(const AblationTable& table);
std::string ablation_csv(const AblationTable& table);

// 17-significant-digit float formatting for CSV round-trip exactness.
std::string format_double(double x);

// FNV-1a over the sorted-key dump of the canonical config.
std::string config_hash_hex(const nlohmann::json& canonical_config);

nlohmann::ordered_json make_run_manifest(
    const nlohmann::json& canonical_config,
    const std::vector<std::uint64_t>& seeds,
    const std::vector<std::string>& output_paths);

void write_text_file(const std::filesystem::path& path,
                     const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json load_json_file(const std::filesystem::path& path);

// "7", "1,2,5", and inclusive ranges "0-19" are accepted, comma-separated.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace gtma
