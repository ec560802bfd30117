// ============================================================================
// synth.hpp - synthetic run-to-failure fleet generator in C-MAPSS text
// format. Produces FD003-shaped files: 26 whitespace-separated columns,
// 21 sensors of which {1,5,16,18,19} are exactly constant, a single
// operating condition, and two overlapping failure-mode signatures.
// Intended for tests and demos where the real NASA files are unavailable.
// ============================================================================
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dlbp/common.hpp"

namespace dlbp::synth {

struct SynthConfig {
    int train_engines = 100;
    int test_engines = 100;
    std::uint64_t seed = 2003;
    double noise_level = 0.35;  // sensor noise sd as a fraction of full-degradation amplitude
    double bias_level = 0.10;   // per-engine calibration offset sd, same units
    int min_length = 140;
    int max_length = 520;
};

namespace detail {

struct SensorModel {
    double base;
    double amplitude;  // full-degradation swing
    double direction;  // +1 rises toward failure, -1 falls
    bool constant;
};

// magnitudes loosely follow the turbofan channels; exact values are
// irrelevant after min-max normalization
inline const std::array<SensorModel, 21>& sensor_models() {
    static const std::array<SensorModel, 21> models = {{
        {518.67, 0.0, +1.0, true},   // 1
        {642.00, 3.0, +1.0, false},  // 2
        {1586.0, 10.0, +1.0, false}, // 3
        {1398.0, 18.0, +1.0, false}, // 4
        {14.62, 0.0, +1.0, true},    // 5
        {21.58, 0.8, +1.0, false},   // 6
        {554.0, 5.5, -1.0, false},   // 7
        {2387.9, 1.2, +1.0, false},  // 8
        {9052.0, 28.0, +1.0, false}, // 9
        {1.30, 0.9, +1.0, false},    // 10
        {47.25, 1.6, +1.0, false},   // 11
        {521.7, 4.8, -1.0, false},   // 12
        {2388.0, 1.5, +1.0, false},  // 13
        {8131.0, 22.0, +1.0, false}, // 14
        {8.44, 0.55, +1.0, false},   // 15
        {0.03, 0.0, +1.0, true},     // 16
        {392.0, 5.0, +1.0, false},   // 17
        {2388.0, 0.0, +1.0, true},   // 18
        {100.0, 0.0, +1.0, true},    // 19
        {38.95, 1.7, -1.0, false},   // 20
        {23.38, 1.1, -1.0, false},   // 21
    }};
    return models;
}

// relative strength of each failure mode on each sensor; both modes move
// every informative channel, with different emphasis (overlapping sources)
inline double mode_weight(int sensor_1based, int mode) {
    static const std::array<int, 8> fan = {2, 3, 4, 6, 9, 14, 15, 17};
    static const std::array<int, 8> hpc = {7, 8, 11, 12, 13, 20, 21, 10};
    const auto& strong = mode == 0 ? fan : hpc;
    for (int s : strong) {
        if (s == sensor_1based) return 1.0;
    }
    return 0.35;
}

struct Engine {
    int mode = 0;
    int life = 0;        // total cycles to failure
    double tau = 60.0;   // degradation onset time constant, in RUL cycles
    std::vector<double> bias;  // per-sensor calibration offset
};

inline Engine draw_engine(Rng& rng, const SynthConfig& cfg) {
    Engine e;
    e.mode = uniform01(rng) < 0.5 ? 0 : 1;
    const double log_mean = e.mode == 0 ? std::log(230.0) : std::log(200.0);
    const double log_sd = e.mode == 0 ? 0.22 : 0.25;
    double y = std::exp(log_mean + log_sd * normal01(rng));
    y = std::clamp(y, static_cast<double>(cfg.min_length), static_cast<double>(cfg.max_length));
    e.life = static_cast<int>(std::lround(y));
    const double tau_base = e.mode == 0 ? 55.0 : 75.0;
    e.tau = tau_base * uniform(rng, 0.85, 1.20);
    const auto& models = sensor_models();
    e.bias.resize(models.size());
    for (std::size_t j = 0; j < models.size(); ++j) {
        e.bias[j] = models[j].constant
                        ? 0.0
                        : cfg.bias_level * models[j].amplitude * normal01(rng);
    }
    return e;
}

inline void write_rows(std::ofstream& os, int unit, const Engine& e, int n_cycles, Rng& rng,
                       const SynthConfig& cfg) {
    const auto& models = sensor_models();
    char buf[64];
    for (int t = 1; t <= n_cycles; ++t) {
        const double rul = static_cast<double>(e.life - t);
        const double damage = std::exp(-rul / e.tau);  // ~0 early, 1 at failure
        os << unit << " " << t;
        std::snprintf(buf, sizeof(buf), " %.4f %.4f 100.0", 0.0022 * normal01(rng),
                      0.0003 * normal01(rng));
        os << buf;
        for (std::size_t j = 0; j < models.size(); ++j) {
            const auto& sm = models[j];
            double v = sm.base;
            if (!sm.constant) {
                const double w = mode_weight(static_cast<int>(j) + 1, e.mode);
                v += sm.direction * sm.amplitude * w * damage +
                     e.bias[j] + cfg.noise_level * sm.amplitude * normal01(rng);
            }
            std::snprintf(buf, sizeof(buf), " %.2f", v);
            os << buf;
        }
        os << "\n";
    }
}

}  // namespace detail

// Writes train_<id>.txt, test_<id>.txt, RUL_<id>.txt under dir.
inline void write_cmapss_synthetic(const std::string& dir, const std::string& dataset_id,
                                   const SynthConfig& cfg = {}) {
    Rng rng(cfg.seed);

    {
        std::ofstream os(dir + "/train_" + dataset_id + ".txt", std::ios::binary);
        if (!os) throw parse_error(dir + ": cannot write train file");
        for (int u = 1; u <= cfg.train_engines; ++u) {
            auto e = detail::draw_engine(rng, cfg);
            detail::write_rows(os, u, e, e.life, rng, cfg);
        }
    }
    {
        std::ofstream os(dir + "/test_" + dataset_id + ".txt", std::ios::binary);
        std::ofstream rs(dir + "/RUL_" + dataset_id + ".txt", std::ios::binary);
        if (!os || !rs) throw parse_error(dir + ": cannot write test files");
        for (int u = 1; u <= cfg.test_engines; ++u) {
            auto e = detail::draw_engine(rng, cfg);
            int rul = 6 + static_cast<int>(uniform01(rng) * 139.0);
            if (e.life - rul < 40) rul = std::max(6, e.life - 40);
            detail::write_rows(os, u, e, e.life - rul, rng, cfg);
            rs << rul << "\n";
        }
    }
}

}  // namespace dlbp::synth
