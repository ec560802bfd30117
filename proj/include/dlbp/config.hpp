// ============================================================================
// config.hpp - declarative run configuration: a documented key = value file
// with unknown keys rejected, plus the fully-resolved echo every run writes
// next to its outputs.
// ============================================================================
#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dlbp/common.hpp"
#include "dlbp/evaluation.hpp"
#include "dlbp/lls.hpp"
#include "dlbp/network.hpp"
#include "dlbp/training.hpp"

namespace dlbp {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace detail

// `key = value` lines; '#' starts a comment; blank lines ignored
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error(path + ": cannot open config file");
    std::map<std::string, std::string> kv;
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw config_error(path + ":" + std::to_string(line_no) + ": empty key or value");
        if (kv.count(key))
            throw config_error(path + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                               "'");
        kv[key] = value;
    }
    return kv;
}

struct RunConfig {
    // model and optimizer
    std::string model = "dlbp1";
    std::vector<std::string> families = {"lognormal", "lognormal"};
    int window = 30;
    std::vector<int> lstm_units = {128};
    std::vector<int> fc_units = {64};
    int batch_size = 512;
    int epochs = 200;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string output_gate = "sigmoid";
    std::vector<std::string> head_activations;  // empty = per-family defaults

    // shared-scale model
    int outer_iterations = 20;
    double tolerance = 1e-4;
    int inner_epochs = 0;  // 0 = ceil(epochs / outer-iterations)
    bool sigma_init_literal = false;
    bool weighted_scale_mle = false;

    // data and outputs
    std::string train_data;
    std::string out_dir = ".";
    double rul_cap = kDefaultRulCap;

    // evaluation flags
    std::string weibull_mean_variant = "standard";
    std::string eval_mode = "final-window";
    bool truth_cap = true;

    static RunConfig from_kv(const std::map<std::string, std::string>& kv,
                             const std::string& origin);
    static RunConfig from_file(const std::string& path) {
        return from_kv(parse_kv_file(path), path);
    }

    TrainConfig to_train_config() const;
    ModelKind model_kind() const {
        if (model == "dlbp1") return ModelKind::Dlbp1;
        if (model == "dlbp2") return ModelKind::Dlbp2;
        throw config_error("model must be dlbp1 or dlbp2 (got '" + model + "')");
    }
    MixtureSpec mixture_spec() const {
        MixtureSpec spec;
        for (const auto& f : families) spec.push_back(family_from_name(f));
        if (spec.empty()) throw config_error("families must list at least one component");
        return spec;
    }
    OutputGateActivation output_gate_activation() const {
        if (output_gate == "sigmoid") return OutputGateActivation::Sigmoid;
        if (output_gate == "tanh") return OutputGateActivation::Tanh;
        throw config_error("output-gate-activation must be sigmoid or tanh");
    }
    WeibullMeanVariant weibull_variant() const {
        if (weibull_mean_variant == "standard") return WeibullMeanVariant::Standard;
        if (weibull_mean_variant == "squared") return WeibullMeanVariant::Squared;
        throw config_error("weibull-mean-variant must be standard or squared");
    }
    EvalMode evaluation_mode() const {
        if (eval_mode == "final-window") return EvalMode::FinalWindow;
        if (eval_mode == "all-windows") return EvalMode::AllWindows;
        throw config_error("eval-mode must be final-window or all-windows");
    }

    std::string resolved_text() const;
};

namespace detail {

inline int to_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': expected an integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& v, const std::string& key) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw config_error("key '" + key + "': expected on/off, got '" + v + "'");
}

inline std::vector<int> to_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    for (const auto& item : split_list(v)) out.push_back(to_int(item, key));
    if (out.empty()) throw config_error("key '" + key + "': empty list");
    return out;
}

}  // namespace detail

inline RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv,
                                    const std::string& origin) {
    RunConfig c;
    for (const auto& [key, value] : kv) {
        if (key == "model") c.model = value;
        else if (key == "families") c.families = detail::split_list(value);
        else if (key == "window") c.window = detail::to_int(value, key);
        else if (key == "lstm-units") c.lstm_units = detail::to_int_list(value, key);
        else if (key == "fc-units") c.fc_units = detail::to_int_list(value, key);
        else if (key == "batch-size") c.batch_size = detail::to_int(value, key);
        else if (key == "epochs") c.epochs = detail::to_int(value, key);
        else if (key == "learning-rate") c.learning_rate = detail::to_double(value, key);
        else if (key == "adam-beta1") c.adam_beta1 = detail::to_double(value, key);
        else if (key == "adam-beta2") c.adam_beta2 = detail::to_double(value, key);
        else if (key == "adam-epsilon") c.adam_epsilon = detail::to_double(value, key);
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "threads") c.threads = detail::to_int(value, key);
        else if (key == "output-gate-activation") c.output_gate = value;
        else if (key == "head-activations") c.head_activations = detail::split_list(value);
        else if (key == "outer-iterations") c.outer_iterations = detail::to_int(value, key);
        else if (key == "tolerance") c.tolerance = detail::to_double(value, key);
        else if (key == "inner-epochs") c.inner_epochs = detail::to_int(value, key);
        else if (key == "sigma-init-literal") c.sigma_init_literal = detail::to_bool(value, key);
        else if (key == "weighted-scale-mle") c.weighted_scale_mle = detail::to_bool(value, key);
        else if (key == "train-data") c.train_data = value;
        else if (key == "out-dir") c.out_dir = value;
        else if (key == "rul-cap") c.rul_cap = detail::to_double(value, key);
        else if (key == "weibull-mean-variant") c.weibull_mean_variant = value;
        else if (key == "eval-mode") c.eval_mode = value;
        else if (key == "truth-cap") c.truth_cap = detail::to_bool(value, key);
        else throw config_error(origin + ": unknown key '" + key + "'");
    }
    // validate enumerations eagerly so bad configs fail at parse time
    c.model_kind();
    c.mixture_spec();
    c.output_gate_activation();
    c.weibull_variant();
    c.evaluation_mode();
    return c;
}

inline TrainConfig RunConfig::to_train_config() const {
    TrainConfig t;
    t.kind = model_kind();
    t.mixture_spec = mixture_spec();
    t.window_width = window;
    t.lstm_units = lstm_units;
    t.fc_units = fc_units;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.learning_rate = learning_rate;
    t.adam_beta1 = adam_beta1;
    t.adam_beta2 = adam_beta2;
    t.adam_epsilon = adam_epsilon;
    t.seed = seed;
    t.output_gate = output_gate_activation();
    t.threads = threads;
    t.outer_iterations = outer_iterations;
    t.tolerance = tolerance;
    t.inner_epochs = inner_epochs;
    t.sigma_init_literal = sigma_init_literal;
    t.weighted_scale_mle = weighted_scale_mle;
    for (const auto& a : head_activations) t.head_activations.push_back(activation_from_name(a));
    t.check();
    return t;
}

// Grid for the block-coordinate tuner. Defaults follow the documented search:
// window {15,20,25,30,35}; layer counts {1,2}x{1,2}; units {64,128,256} x
// {32,64,128}; batch {128,256,512}; epochs {120,150,200,250}; 5 seeded 90/10
// engine-level repeats per candidate. Unoptimized blocks sit at 1 LSTM layer,
// 2 FC layers, 128/64 units, batch 512, epochs 200.
struct TuneGrid {
    RunConfig base;
    std::vector<int> windows = {15, 20, 25, 30, 35};
    std::vector<int> lstm_layer_counts = {1, 2};
    std::vector<int> fc_layer_counts = {1, 2};
    std::vector<int> lstm_units = {64, 128, 256};
    std::vector<int> fc_units = {32, 64, 128};
    std::vector<int> batches = {128, 256, 512};
    std::vector<int> epochs = {120, 150, 200, 250};
    int repeats = 5;
    double train_fraction = 0.9;
    int default_lstm_layers = 1;
    int default_fc_layers = 2;
    int default_lstm_units = 128;
    int default_fc_units = 64;
    int default_batch = 512;
    int default_epochs = 200;

    std::size_t candidate_count() const {
        return windows.size() + lstm_layer_counts.size() * fc_layer_counts.size() +
               lstm_units.size() * fc_units.size() + batches.size() + epochs.size();
    }
};

inline TuneGrid parse_tune_grid(const std::string& path) {
    auto kv = parse_kv_file(path);
    TuneGrid g;
    auto take_ints = [&](const char* key, std::vector<int>& dst) {
        if (auto it = kv.find(key); it != kv.end()) {
            dst = detail::to_int_list(it->second, key);
            kv.erase(it);
        }
    };
    auto take_int = [&](const char* key, int& dst) {
        if (auto it = kv.find(key); it != kv.end()) {
            dst = detail::to_int(it->second, key);
            kv.erase(it);
        }
    };
    take_ints("window-candidates", g.windows);
    take_ints("lstm-layers-candidates", g.lstm_layer_counts);
    take_ints("fc-layers-candidates", g.fc_layer_counts);
    take_ints("lstm-units-candidates", g.lstm_units);
    take_ints("fc-units-candidates", g.fc_units);
    take_ints("batch-candidates", g.batches);
    take_ints("epochs-candidates", g.epochs);
    take_int("repeats", g.repeats);
    take_int("default-lstm-layers", g.default_lstm_layers);
    take_int("default-fc-layers", g.default_fc_layers);
    take_int("default-lstm-units", g.default_lstm_units);
    take_int("default-fc-units", g.default_fc_units);
    take_int("default-batch", g.default_batch);
    take_int("default-epochs", g.default_epochs);
    if (auto it = kv.find("train-fraction"); it != kv.end()) {
        g.train_fraction = detail::to_double(it->second, "train-fraction");
        kv.erase(it);
    }
    g.base = RunConfig::from_kv(kv, path);
    return g;
}

inline std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    auto list_int = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    auto list_str = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    };
    os << "model = " << model << "\n";
    os << "families = " << list_str(families) << "\n";
    os << "window = " << window << "\n";
    os << "lstm-units = " << list_int(lstm_units) << "\n";
    os << "fc-units = " << list_int(fc_units) << "\n";
    os << "batch-size = " << batch_size << "\n";
    os << "epochs = " << epochs << "\n";
    os << "learning-rate = " << fmt_double(learning_rate) << "\n";
    os << "adam-beta1 = " << fmt_double(adam_beta1) << "\n";
    os << "adam-beta2 = " << fmt_double(adam_beta2) << "\n";
    os << "adam-epsilon = " << fmt_double(adam_epsilon) << "\n";
    os << "seed = " << seed << "\n";
    os << "threads = " << threads << "\n";
    os << "output-gate-activation = " << output_gate << "\n";
    if (!head_activations.empty()) os << "head-activations = " << list_str(head_activations) << "\n";
    os << "outer-iterations = " << outer_iterations << "\n";
    os << "tolerance = " << fmt_double(tolerance) << "\n";
    os << "inner-epochs = " << inner_epochs << "\n";
    os << "sigma-init-literal = " << (sigma_init_literal ? "on" : "off") << "\n";
    os << "weighted-scale-mle = " << (weighted_scale_mle ? "on" : "off") << "\n";
    if (!train_data.empty()) os << "train-data = " << train_data << "\n";
    os << "out-dir = " << out_dir << "\n";
    os << "rul-cap = " << fmt_double(rul_cap) << "\n";
    os << "weibull-mean-variant = " << weibull_mean_variant << "\n";
    os << "eval-mode = " << eval_mode << "\n";
    os << "truth-cap = " << (truth_cap ? "on" : "off") << "\n";
    return os.str();
}

}  // namespace dlbp
