// Synthetic C-MAPSS-format fleet generator for demos and tests.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "dlbp/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate a synthetic run-to-failure fleet in C-MAPSS text format"};
    std::string out_dir;
    std::string dataset = "FD003";
    dlbp::synth::SynthConfig cfg;
    app.add_option("--out-dir", out_dir, "output directory")->required();
    app.add_option("--dataset", dataset, "dataset id used in file names");
    app.add_option("--train-engines", cfg.train_engines, "training fleet size");
    app.add_option("--test-engines", cfg.test_engines, "test fleet size");
    app.add_option("--seed", cfg.seed, "generator seed");
    app.add_option("--noise", cfg.noise_level, "sensor noise level");
    app.add_option("--bias", cfg.bias_level, "per-engine calibration offset level");
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        dlbp::synth::write_cmapss_synthetic(out_dir, dataset, cfg);
        std::printf("wrote train_%s.txt, test_%s.txt, RUL_%s.txt under %s\n", dataset.c_str(),
                    dataset.c_str(), dataset.c_str(), out_dir.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
