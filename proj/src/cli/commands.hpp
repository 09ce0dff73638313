#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "report.hpp"

namespace ctxdb::cli {

/// Runs the ctxdb command line. `args[0]` is the program name. Returns the
/// process exit code; errors are written to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RunMode {
    bool deterministic = false;  // one worker, no timing fields
    std::size_t threads = 0;     // 0 = all cores (ignored when deterministic)
    std::size_t workers() const;
};

struct BenchDiprOptions {
    std::size_t queries = 100;
    std::vector<double> betas{0, 2, 4, 8, 12, 16, 24};
    std::vector<std::size_t> ks{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
    IndexType index = IndexType::Flat;  // Flat (exact) or Fine (graph)
};
Report bench_dipr(const EngineConfig& cfg, const BenchDiprOptions& opt, const RunMode& mode);

struct BenchHeadsOptions {
    std::size_t queries = 50;
    double target = 0.9;
    std::optional<double> beta;  // default: planner beta
};
Report bench_heads(const EngineConfig& cfg, const BenchHeadsOptions& opt, const RunMode& mode);

struct DecodeReplayOptions {
    std::size_t steps = 32;
    std::string plan = "auto";  // auto | full | dipr-flat | dipr-fine | topk-coarse
    double prefix_ratio = 1.0;  // share of the stored prompt reused by the session
    double slo_seconds = 0.24;
    std::optional<std::filesystem::path> root;
};
Report decode_replay(const EngineConfig& cfg, const DecodeReplayOptions& opt, const RunMode& mode);

struct BuildBenchOptions {
    double sample_ratio = 0.4;
};
Report build_bench(const EngineConfig& cfg, const BuildBenchOptions& opt, const RunMode& mode);

Report import_context(const EngineConfig& cfg, const std::filesystem::path& root, const RunMode& mode);

struct StoreOptions {
    std::filesystem::path root;
    std::size_t steps = 16;
    double prefix_ratio = 1.0;
    std::optional<ContextId> base;  // default: the most recent context
};
Report store_session(const EngineConfig& cfg, const StoreOptions& opt, const RunMode& mode);

/// Header and block directory of each vector file (directories are walked).
Report inspect(const std::vector<std::filesystem::path>& paths, bool blocks);

}  // namespace ctxdb::cli
