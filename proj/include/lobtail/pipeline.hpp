#pragma once

#include "lobtail/innovations.hpp"
#include "lobtail/spread_index.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lobtail::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.1.0";

struct TickerInput {
    std::string ticker;
    fs::path orderbook;
    fs::path messages;  // empty when the order book carries its own time column
};

struct PricingConfig {
    double damping = 0.0;  // <= 0 scans the candidate set
    int fft_n = 4096;
    double eta = 0.25;
    double rate = 0.0;
    /// Years per event is 1 / events_per_year; 0 means n_events * 252
    /// (one session is one trading day).
    double events_per_year = 0.0;
    std::vector<double> moneyness;   // strike / spot
    std::vector<double> maturities;  // years
    std::vector<IndexKind> kinds{IndexKind::Tmobbas};
    std::vector<int> depths;  // empty means every configured depth
};

struct Config {
    std::vector<TickerInput> inputs;
    std::vector<int> depths{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<IndexKind> kinds{IndexKind::Tmobbas, IndexKind::Gmp};
    double burn_in_fraction = 0.05;
    double session_start_s = 34200.0;
    double session_end_s = 57600.0;
    double tail_fraction = 0.05;
    Innovation innovation = Innovation::Nig;
    std::vector<Innovation> selection_families{Innovation::StudentT, Innovation::Nig, Innovation::Ged};
    std::vector<IndexKind> dynamics_kinds{IndexKind::Tmobbas};
    int fit_max_iterations = 500;
    int n_scenarios = 10000;
    int horizon = 1;
    std::uint64_t seed = 20120621;
    PricingConfig pricing;
    double rachev_beta = 0.05;
    double rachev_gamma = 0.05;
    std::vector<double> systemic_levels{0.95, 0.99};
    fs::path output_dir = "lobtail_out";
};

/// Defaults with the pricing grids filled in: 21 strikes at exp(-0.2..0.2)
/// times spot and maturities of 1, 5, 15, 30 and 60 trading minutes.
Config default_config();

/// JSON text to config; absent keys keep their defaults, unknown keys are a ConfigError.
Config parse_config(std::string_view json_text);
Config load_config(const fs::path& path);
/// Canonical JSON (sorted keys), the basis of the config hash.
std::string to_json(const Config& cfg);

/// Checks ranges and that every input file exists. Throws ConfigError.
void validate(const Config& cfg);

enum class Stage { Ingest, Spreads, StaticTails, FitDynamics, Simulate, PriceOptions, ImpliedVol, Rachev, Systemic };

std::string_view to_string(Stage s) noexcept;
Stage parse_stage(std::string_view name);
const std::vector<Stage>& all_stages();

/// Files a stage reads and writes, fixed by the config alone.
struct StagePlan {
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
};
StagePlan plan(const Config& cfg, Stage s);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
/// Hex FNV-1a of the file contents.
std::string file_digest(const fs::path& path);

struct StageRecord {
    std::string config_hash;
    bool skipped = false;
    double wall_s = 0.0;
    std::map<std::string, std::string> inputs;   // path -> digest
    std::map<std::string, std::string> outputs;  // path -> digest
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version{kToolVersion};
    std::uint64_t seed = 0;
    std::map<std::string, StageRecord> stages;  // by stage name
    std::string failed_stage;                   // empty on success
};

fs::path manifest_path(const Config& cfg);
RunManifest read_manifest(const fs::path& path);
void write_manifest(const RunManifest& m, const fs::path& path);

struct RunOptions {
    bool force = false;  // run stages even when their digests match
};

/// Runs the stages in the given order. A stage is skipped when its previous
/// record has the same config hash, its inputs still have the recorded
/// digests and its outputs still exist with the recorded digests. On error the
/// manifest is written with `failed_stage` set and the error is rethrown with
/// the stage name prefixed.
RunManifest run(const Config& cfg, const std::vector<Stage>& stages, const RunOptions& opts = {});
inline RunManifest run_all(const Config& cfg, const RunOptions& opts = {}) { return run(cfg, all_stages(), opts); }

/// Stream-specific seed derived from the run seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace lobtail::pipeline
