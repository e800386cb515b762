// Minimal end-to-end use of the library: synthesize a small market, run every
// stage, and print the cost-level table.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "findpo/fixture.hpp"
#include "findpo/pipeline.hpp"

int main(int argc, char** argv) {
    namespace fs = std::filesystem;
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "findpo_quickstart";

    const auto files = findpo::fixture::gen_fixture({}, root / "data");

    findpo::pipeline::RunConfig cfg;
    cfg.articles = files.articles;
    cfg.prices = files.prices;
    cfg.samples = files.samples;
    cfg.benchmark = files.benchmark;
    cfg.out_dir = root / "out";
    cfg.dpo.learning_rate = 0.1;

    try {
        const auto res = findpo::pipeline::run_pipeline(cfg);
        std::cout << "DPO weighted F1: " << res.evaluation["policies"]["dpo"]["weighted_f1"] << '\n'
                  << "SFT weighted F1: " << res.evaluation["policies"]["sft"]["weighted_f1"] << '\n'
                  << "temperature: " << res.calibration.temperature << "\n\n";
        std::ifstream table(root / "out" / "report.txt");
        std::cout << table.rdbuf();
    } catch (const findpo::pipeline::StageError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
}
