#ifndef MORSECON_TOOLS_PIPELINES_HPP
#define MORSECON_TOOLS_PIPELINES_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "morsecon/complex_builder.hpp"
#include "morsecon/truncation.hpp"
#include "report.hpp"

namespace morsecon::cli {

struct RunOptions {
    std::uint64_t seed = 0;
};

struct NamedComplex {
    std::string name;
    ComplexAssembly assembly;
    std::optional<GradedMap> u;
};

struct RunResult {
    // Unsealed report document.
    Json report;
    // File name and CSV text.
    std::vector<std::pair<std::string, std::string>> sidecars;
    // Seconds per stage; kept out of the report.
    std::vector<std::pair<std::string, double>> timings;
    bool passed = false;

    ManifoldSpec manifold;
    std::vector<StationaryPoint> points;
    CountLedger ledger;
    std::vector<NamedComplex> complexes;
    HomologyResult homology;
    std::optional<TruncationReport> truncation;
};

// Runs the pipeline of a resolved config. Configuration problems throw Error(ConfigError);
// numerical failures are recorded as failed checks.
RunResult run_pipeline(const Config& config, const RunOptions& options = {});

// Writes report.json, timings.json and CSV sidecars into dir.
void write_outputs(const RunResult& result, const std::string& dir);

}  // namespace morsecon::cli

#endif
