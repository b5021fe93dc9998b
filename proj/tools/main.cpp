#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "morsecon/parallel.hpp"
#include "pipelines.hpp"

namespace {

int verify(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        std::cerr << "error: cannot read " << path << "\n";
        return 1;
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        if (morsecon::cli::verify_report(ss.str())) {
            std::cout << path << ": hash matches\n";
            return 0;
        }
        std::cerr << path << ": hash mismatch\n";
        return 2;
    } catch (const morsecon::Error& e) {
        std::cerr << "error: " << path << ": " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Morse, boundary, equivariant, Conley and truncated-flow homology from a batch config"};
    std::string config, out = "morsecon-out", verify_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    app.add_option("--config", config, "Config file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--seed", seed, "Offset of the quasi-random seed sequence")->capture_default_str();
    app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--verify-only", verify_path, "Recompute the hash of a saved report");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (!verify_path.empty()) return verify(verify_path);
    if (config.empty()) {
        std::cerr << "error: --config is required\n";
        return 1;
    }
    morsecon::set_jobs(jobs);
    try {
        auto cfg = morsecon::cli::Config::load(config).resolve();
        morsecon::cli::RunOptions opt;
        opt.seed = seed;
        auto result = morsecon::cli::run_pipeline(cfg, opt);
        morsecon::cli::write_outputs(result, out);
        for (const auto& c : result.report["checks"])
            if (!c["passed"].get<bool>())
                std::cerr << "check failed: " << c["name"].get<std::string>() << " (" << c["stage"].get<std::string>()
                          << ") " << c["detail"].get<std::string>() << "\n";
        std::cout << out << "/report.json " << (result.passed ? "passed" : "failed") << "\n";
        return result.passed ? 0 : 2;
    } catch (const morsecon::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
