// ============================================================================
// dlbp - command-line surface for the mixture-LLS prognostic pipeline:
// preprocess, train, predict, evaluate, and block-coordinate tune.
// ============================================================================
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlbp/config.hpp"
#include "dlbp/dataset.hpp"
#include "dlbp/evaluation.hpp"
#include "dlbp/lls.hpp"
#include "dlbp/network.hpp"
#include "dlbp/training.hpp"

namespace fs = std::filesystem;
using namespace dlbp;

namespace {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error(path + ": cannot open for writing");
    os << content;
}

std::string file_magic(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw parse_error(path + ": cannot open");
    char magic[8] = {};
    is.read(magic, 8);
    return std::string(magic, static_cast<std::size_t>(is.gcount()));
}

struct StatsRef {
    NormalizationStats stats;
    int window_width = 0;
    double cap = kDefaultRulCap;
};

StatsRef load_stats_reference(const std::string& path) {
    const auto magic = file_magic(path);
    StatsRef ref;
    if (magic == "DLBPDS01") {
        auto ds = load_dataset(path);
        ref.stats = ds.stats;
        ref.window_width = ds.window_width;
        ref.cap = ds.cap;
    } else if (magic == "DLBPMD01") {
        auto m = load_model(path);
        ref.stats = m.stats;
        ref.window_width = m.window_width;
        ref.cap = m.rul_cap;
    } else {
        throw parse_error(path + ": expected a windowed-dataset or model file for --stats");
    }
    return ref;
}

// keep only the reference's sensors (1-based raw indices) and normalize
std::vector<EngineTrace> select_and_normalize(std::vector<EngineTrace> traces,
                                              const NormalizationStats& stats) {
    for (auto& t : traces) {
        Eigen::MatrixXd sel(t.signals.rows(), stats.p());
        for (Eigen::Index j = 0; j < stats.p(); ++j) {
            const int src = stats.kept_sensors[static_cast<std::size_t>(j)] - 1;
            if (src < 0 || src >= t.signals.cols())
                throw config_error("input lacks sensor " + std::to_string(src + 1) +
                                   " required by the normalization stats");
            sel.col(j) = t.signals.col(src);
        }
        t.signals = std::move(sel);
    }
    apply_normalization(traces, stats);
    return traces;
}

bool stats_equal(const NormalizationStats& a, const NormalizationStats& b) {
    return a.kept_sensors == b.kept_sensors && a.min == b.min && a.max == b.max;
}

void check_dataset_against_model(const WindowedDataset& ds, const ModelParams& m,
                                 const std::string& input, const std::string& model_path) {
    if (ds.window_width != m.window_width)
        throw config_error(input + " has T_w=" + std::to_string(ds.window_width) + " but " +
                           model_path + " was trained with T_w=" +
                           std::to_string(m.window_width));
    if (!stats_equal(ds.stats, m.stats))
        throw config_error(input + ": normalization stats do not match the ones stored in " +
                           model_path + "; preprocess the input with the model's stats");
}

std::string cmapss_path(const std::string& dir, const std::string& prefix,
                        const std::string& dataset) {
    return dir + "/" + prefix + "_" + dataset + ".txt";
}

void write_run_json(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error(path + ": cannot open for writing");
    os << j.dump(2) << "\n";
}

// ----------------------------------------------------------------------------
// preprocess
// ----------------------------------------------------------------------------
struct PreprocessArgs {
    std::string data_dir;
    std::string dataset = "FD003";
    std::string kind = "train";
    int window = 30;
    double cap = kDefaultRulCap;
    std::string out;
    std::string stats_ref;
    std::uint64_t seed = 1;
    int stride = 1;
};

int cmd_preprocess(const PreprocessArgs& a) {
    WindowedDataset ds;
    ds.window_width = a.window;
    ds.cap = a.cap;
    ds.seed = a.seed;

    std::size_t engines = 0;
    if (a.kind == "train") {
        auto traces = load_cmapss(cmapss_path(a.data_dir, "train", a.dataset), DatasetKind::Train);
        engines = traces.size();
        auto filtered = drop_constant_sensors(traces);
        ds.stats = fit_normalization(filtered.traces, filtered.kept_sensors);
        apply_normalization(filtered.traces, ds.stats);
        ds.kind = DatasetKind::Train;
        for (const auto& t : filtered.traces) {
            auto w = sliding_window(t, a.window, WindowMode::All, a.stride);
            cap_targets(w, a.cap);
            ds.samples.insert(ds.samples.end(), w.begin(), w.end());
        }
    } else if (a.kind == "test") {
        if (a.stats_ref.empty())
            throw config_error(
                "test preprocessing requires --stats (training dataset or model file)");
        const auto rul = cmapss_path(a.data_dir, "RUL", a.dataset);
        if (!fs::exists(rul)) throw parse_error(rul + ": missing RUL file for test preprocessing");
        auto traces = load_cmapss(cmapss_path(a.data_dir, "test", a.dataset), DatasetKind::Test, rul);
        engines = traces.size();
        auto ref = load_stats_reference(a.stats_ref);
        ds.stats = ref.stats;
        ds.kind = DatasetKind::Test;
        auto normalized = select_and_normalize(std::move(traces), ds.stats);
        for (const auto& t : normalized) {
            // test targets stay uncapped; evaluation applies the cap policy
            auto w = sliding_window(t, a.window, WindowMode::All, a.stride);
            ds.samples.insert(ds.samples.end(), w.begin(), w.end());
        }
    } else {
        throw config_error("--kind must be train or test");
    }

    if (const auto parent = fs::path(a.out).parent_path(); !parent.empty())
        fs::create_directories(parent);
    save_dataset(ds, a.out);

    std::ostringstream conf;
    conf << "command = preprocess\n"
         << "data-dir = " << a.data_dir << "\n"
         << "dataset = " << a.dataset << "\n"
         << "kind = " << a.kind << "\n"
         << "window = " << a.window << "\n"
         << "cap = " << fmt_double(a.cap) << "\n"
         << "stride = " << a.stride << "\n"
         << "seed = " << a.seed << "\n";
    if (!a.stats_ref.empty()) conf << "stats = " << a.stats_ref << "\n";
    conf << "out = " << a.out << "\n"
         << "dataset-hash = " << hex64(hash_file(a.out)) << "\n";
    write_text_file(a.out + ".conf", conf.str());

    std::string kept;
    for (std::size_t i = 0; i < ds.stats.kept_sensors.size(); ++i)
        kept += (i ? "," : "") + std::to_string(ds.stats.kept_sensors[i]);
    std::printf("engines=%zu windows=%zu P=%d kept=%s out=%s\n", engines, ds.samples.size(),
                static_cast<int>(ds.p()), kept.c_str(), a.out.c_str());
    return kExitOk;
}

// ----------------------------------------------------------------------------
// train
// ----------------------------------------------------------------------------
struct TrainArgs {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

void write_history_csv(const std::string& path, const TrainResult& res, ModelKind kind) {
    std::ofstream os(path, std::ios::binary);
    os << "epoch_or_iter,loss";
    if (kind == ModelKind::Dlbp2) {
        for (std::size_t k = 1; k <= res.model.k(); ++k) os << ",sigma_" << k;
    }
    os << "\n";
    if (kind == ModelKind::Dlbp1) {
        for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
            os << e + 1 << "," << fmt_double(res.epoch_loss[e]) << "\n";
    } else {
        for (const auto& r : res.outer_history) {
            os << r.iteration << "," << fmt_double(r.loss);
            for (double s : r.sigma) os << "," << fmt_double(s);
            os << "\n";
        }
    }
}

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = RunConfig::from_file(a.config);
    if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    if (cfg.train_data.empty()) throw config_error("config must set train-data");

    auto ds = load_dataset(cfg.train_data);
    if (ds.window_width != cfg.window)
        throw config_error("config window=" + std::to_string(cfg.window) + " but " +
                           cfg.train_data + " was windowed with T_w=" +
                           std::to_string(ds.window_width));
    if (cfg.rul_cap != ds.cap)
        throw config_error("config rul-cap=" + fmt_double(cfg.rul_cap) + " but " + cfg.train_data +
                           " was capped at " + fmt_double(ds.cap));

    fs::create_directories(cfg.out_dir);
    TrainConfig tc = cfg.to_train_config();
    TrainResult res = cfg.model_kind() == ModelKind::Dlbp1 ? train_dlbp1(ds.samples, tc)
                                                           : train_dlbp2(ds.samples, tc);
    res.model.stats = ds.stats;
    res.model.rul_cap = ds.cap;

    const std::string model_path = cfg.out_dir + "/model.dlbp";
    save_model(res.model, model_path);
    write_history_csv(cfg.out_dir + "/history.csv", res, cfg.model_kind());
    const std::string resolved = cfg.resolved_text();
    write_text_file(cfg.out_dir + "/resolved.conf", resolved);

    nlohmann::ordered_json j;
    j["command"] = "train";
    j["config_hash"] = hex64(fnv1a64(resolved.data(), resolved.size()));
    j["dataset_hash"] = hex64(hash_file(cfg.train_data));
    j["model_hash"] = hex64(hash_file(model_path));
    j["epochs_run"] = res.epoch_loss.size();
    j["outer_iterations_run"] = res.outer_history.size();
    j["final_loss"] = res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back();
    if (!res.model.shared_sigma.empty()) j["shared_sigma"] = res.model.shared_sigma;
    j["warnings"] = res.warnings;
    write_run_json(cfg.out_dir + "/run.json", j);

    for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("trained %s on %zu windows; final loss %s; model %s\n", cfg.model.c_str(),
                ds.samples.size(), fmt_double(res.epoch_loss.back()).c_str(), model_path.c_str());
    return kExitOk;
}

// ----------------------------------------------------------------------------
// predict / evaluate
// ----------------------------------------------------------------------------
struct PredictArgs {
    std::string model;
    std::string input;
    std::string out_dir = ".";
    std::string weibull_mean_variant = "standard";
};

WeibullMeanVariant parse_variant(const std::string& s) {
    if (s == "standard") return WeibullMeanVariant::Standard;
    if (s == "squared") return WeibullMeanVariant::Squared;
    throw config_error("weibull-mean-variant must be standard or squared");
}

int cmd_predict(const PredictArgs& a) {
    auto model = load_model(a.model);
    const auto variant = parse_variant(a.weibull_mean_variant);
    fs::create_directories(a.out_dir);

    std::vector<Prediction> preds;
    const auto magic = file_magic(a.input);
    if (magic == "DLBPDS01") {
        auto ds = load_dataset(a.input);
        check_dataset_against_model(ds, model, a.input, a.model);
        std::map<int, const WindowedSample*> finals;
        for (const auto& s : ds.samples) {
            auto& slot = finals[s.asset_id];
            if (!slot || s.window_index > slot->window_index) slot = &s;
        }
        for (const auto& [id, s] : finals) {
            Prediction p = predict(s->window, model, variant);
            p.asset_id = id;
            p.window_index = s->window_index;
            preds.push_back(std::move(p));
        }
    } else {
        auto traces = load_cmapss(a.input, DatasetKind::Train);  // failure times unused
        auto normalized = select_and_normalize(std::move(traces), model.stats);
        for (const auto& t : normalized) {
            auto w = sliding_window(t, model.window_width, WindowMode::Final);
            Prediction p = predict(w.front().window, model, variant);
            p.asset_id = t.asset_id;
            p.window_index = w.front().window_index;
            preds.push_back(std::move(p));
        }
    }

    const std::string csv = a.out_dir + "/predictions.csv";
    write_predictions_csv(preds, model.k(), csv);
    nlohmann::ordered_json j;
    j["command"] = "predict";
    j["model_hash"] = hex64(hash_file(a.model));
    j["input_hash"] = hex64(hash_file(a.input));
    j["weibull_mean_variant"] = a.weibull_mean_variant;
    j["predictions"] = preds.size();
    write_run_json(a.out_dir + "/run.json", j);
    std::printf("predicted %zu assets; %s\n", preds.size(), csv.c_str());
    return kExitOk;
}

struct EvaluateArgs {
    std::string model;
    std::string input;  // windowed dataset
    std::string test_dir;
    std::string dataset = "FD003";
    std::string out_dir = ".";
    std::string eval_mode = "final-window";
    std::string weibull_mean_variant = "standard";
    bool no_truth_cap = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
    auto model = load_model(a.model);
    EvalOptions opts;
    opts.mode = a.eval_mode == "all-windows" ? EvalMode::AllWindows : EvalMode::FinalWindow;
    if (a.eval_mode != "all-windows" && a.eval_mode != "final-window")
        throw config_error("eval-mode must be final-window or all-windows");
    opts.cap_truth = !a.no_truth_cap;
    opts.cap = model.rul_cap;
    opts.weibull_mean_variant = parse_variant(a.weibull_mean_variant);
    fs::create_directories(a.out_dir);

    FleetResult fr;
    std::string input_path;
    if (!a.input.empty()) {
        input_path = a.input;
        auto ds = load_dataset(a.input);
        check_dataset_against_model(ds, model, a.input, a.model);
        fr = evaluate_samples(ds.samples, model, opts);
    } else if (!a.test_dir.empty()) {
        input_path = cmapss_path(a.test_dir, "test", a.dataset);
        auto traces = load_cmapss(input_path, DatasetKind::Test,
                                  cmapss_path(a.test_dir, "RUL", a.dataset));
        auto normalized = select_and_normalize(std::move(traces), model.stats);
        fr = evaluate_fleet(normalized, model, opts);
    } else {
        throw config_error("evaluate needs --input <windowed dataset> or --test-dir <dir>");
    }

    const std::string csv = a.out_dir + "/predictions.csv";
    write_predictions_csv(fr.predictions, model.k(), csv, &fr.report.score_per_asset,
                          &fr.report.rae_per_asset);
    const std::string resolved = "command = evaluate\neval-mode = " + a.eval_mode +
                                 "\ntruth-cap = " + (opts.cap_truth ? "on" : "off") +
                                 "\nrul-cap = " + fmt_double(opts.cap) +
                                 "\nweibull-mean-variant = " + a.weibull_mean_variant + "\n";
    write_text_file(a.out_dir + "/resolved.conf", resolved);
    std::map<std::string, std::string> provenance = {
        {"config_hash", hex64(fnv1a64(resolved.data(), resolved.size()))},
        {"model_hash", hex64(hash_file(a.model))},
        {"dataset_hash", hex64(hash_file(input_path))},
        {"weibull_mean_variant", a.weibull_mean_variant},
        {"model_kind", model_kind_name(model.kind)},
        {"output_gate_activation",
         model.output_gate == OutputGateActivation::Sigmoid ? "sigmoid" : "tanh"},
    };
    write_report_json(fr.report, a.out_dir + "/report.json", provenance);
    std::printf("n_t=%zu rmse=%s score_total=%s score_mean=%s out=%s\n", fr.report.n_t,
                fmt_double(fr.report.rmse).c_str(), fmt_double(fr.report.score_total).c_str(),
                fmt_double(fr.report.score_mean).c_str(), a.out_dir.c_str());
    return kExitOk;
}

// ----------------------------------------------------------------------------
// tune - block-coordinate search per the documented block order
// ----------------------------------------------------------------------------
struct TuneArgs {
    std::string grid;
    std::string data_dir;
    std::string dataset = "FD003";
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

struct TuneChoice {
    int window = 30;
    int lstm_layers = 1;
    int fc_layers = 2;
    int lstm_units = 128;
    int fc_units = 64;
    int batch = 512;
    int epochs = 200;

    std::vector<int> lstm_vec() const {
        return std::vector<int>(static_cast<std::size_t>(lstm_layers), lstm_units);
    }
    std::vector<int> fc_vec() const {
        return std::vector<int>(static_cast<std::size_t>(fc_layers), fc_units);
    }
};

int cmd_tune(const TuneArgs& a) {
    TuneGrid grid = parse_tune_grid(a.grid);
    if (a.seed) grid.base.seed = *a.seed;
    if (a.threads) grid.base.threads = *a.threads;
    fs::create_directories(a.out_dir);

    // preprocessing shared across candidates: normalization is fit on the
    // whole training fleet, windows are regenerated per window width
    auto traces = load_cmapss(cmapss_path(a.data_dir, "train", a.dataset), DatasetKind::Train);
    auto filtered = drop_constant_sensors(traces);
    auto stats = fit_normalization(filtered.traces, filtered.kept_sensors);
    apply_normalization(filtered.traces, stats);
    std::map<int, std::vector<WindowedSample>> windows_by_width;
    auto windows_for = [&](int t_w) -> const std::vector<WindowedSample>& {
        auto it = windows_by_width.find(t_w);
        if (it == windows_by_width.end()) {
            std::vector<WindowedSample> all;
            for (const auto& t : filtered.traces) {
                auto w = sliding_window(t, t_w);
                cap_targets(w, grid.base.rul_cap);
                all.insert(all.end(), w.begin(), w.end());
            }
            it = windows_by_width.emplace(t_w, std::move(all)).first;
        }
        return it->second;
    };

    std::ofstream trace(a.out_dir + "/trace.csv", std::ios::binary);
    trace << "block,candidate,repeat,seed,val_rmse,status\n";

    TuneChoice chosen;
    chosen.lstm_layers = grid.default_lstm_layers;
    chosen.fc_layers = grid.default_fc_layers;
    chosen.lstm_units = grid.default_lstm_units;
    chosen.fc_units = grid.default_fc_units;
    chosen.batch = grid.default_batch;
    chosen.epochs = grid.default_epochs;

    auto param_count_of = [&](const TuneChoice& c) {
        ModelConfig mc;
        mc.kind = grid.base.model_kind();
        mc.mixture_spec = grid.base.mixture_spec();
        mc.window_width = c.window;
        mc.input_dim = static_cast<int>(stats.p());
        mc.lstm_units = c.lstm_vec();
        mc.fc_units = c.fc_vec();
        return parameter_count(make_model(mc, 0));
    };

    nlohmann::ordered_json summary;
    summary["blocks"] = nlohmann::ordered_json::array();

    auto evaluate_candidate = [&](int block, int cand_idx, const TuneChoice& c,
                                  const std::string& desc) -> std::pair<double, bool> {
        const auto& samples = windows_for(c.window);
        double rmse_sum = 0.0;
        int ok = 0;
        for (int rep = 0; rep < grid.repeats; ++rep) {
            const std::uint64_t rep_seed = derive_seed(
                grid.base.seed, 1000003ULL * static_cast<std::uint64_t>(block) +
                                    1009ULL * static_cast<std::uint64_t>(cand_idx) +
                                    static_cast<std::uint64_t>(rep));
            std::string status = "ok";
            double val_rmse = 0.0;
            try {
                auto split = split_train_val(samples, grid.train_fraction, rep_seed);
                TrainConfig tc = grid.base.to_train_config();
                tc.window_width = c.window;
                tc.lstm_units = c.lstm_vec();
                tc.fc_units = c.fc_vec();
                tc.batch_size = c.batch;
                tc.epochs = c.epochs;
                tc.seed = rep_seed;
                TrainResult res = tc.kind == ModelKind::Dlbp1 ? train_dlbp1(split.train, tc)
                                                              : train_dlbp2(split.train, tc);
                std::vector<const WindowedSample*> val;
                for (const auto& s : split.val) val.push_back(&s);
                auto ho = batched_head_outputs(val, res.model);
                double acc = 0.0;
                for (std::size_t i = 0; i < val.size(); ++i) {
                    MixtureParams mp;
                    for (std::size_t k = 0; k < res.model.k(); ++k) {
                        mp.components.push_back({res.model.mixture_spec[k],
                                                 ho.mu(static_cast<Eigen::Index>(i),
                                                       static_cast<Eigen::Index>(k)),
                                                 ho.sigma(static_cast<Eigen::Index>(i),
                                                          static_cast<Eigen::Index>(k))});
                        mp.weights.push_back(ho.lambda(static_cast<Eigen::Index>(i),
                                                       static_cast<Eigen::Index>(k)));
                    }
                    const double pred = mixture_mean(mp, grid.base.weibull_variant());
                    acc += (pred - val[i]->target) * (pred - val[i]->target);
                }
                val_rmse = std::sqrt(acc / static_cast<double>(val.size()));
                rmse_sum += val_rmse;
                ++ok;
            } catch (const std::exception& e) {
                status = "failed";
                std::fprintf(stderr, "tune: candidate '%s' repeat %d failed: %s\n", desc.c_str(),
                             rep, e.what());
            }
            trace << block << "," << desc << "," << rep << "," << rep_seed << ","
                  << (status == "ok" ? fmt_double(val_rmse) : "") << "," << status << "\n";
            trace.flush();
        }
        if (ok < grid.repeats) return {0.0, false};  // any failure marks the candidate failed
        return {rmse_sum / static_cast<double>(grid.repeats), true};
    };

    auto run_block = [&](int block, const std::string& name,
                         const std::vector<std::pair<std::string, TuneChoice>>& candidates) {
        double best_rmse = 0.0;
        std::size_t best_params = 0;
        int best_idx = -1;
        for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
            const auto& [desc, cand] = candidates[static_cast<std::size_t>(i)];
            auto [mean_rmse, ok] = evaluate_candidate(block, i, cand, desc);
            if (!ok) continue;
            const auto pc = param_count_of(cand);
            const bool better =
                best_idx < 0 || mean_rmse < best_rmse ||
                (mean_rmse == best_rmse && pc < best_params);  // ties: smaller model, then order
            if (better) {
                best_rmse = mean_rmse;
                best_params = pc;
                best_idx = i;
            }
            std::printf("block %d (%s): %s -> mean val RMSE %s\n", block, name.c_str(),
                        desc.c_str(), fmt_double(mean_rmse).c_str());
        }
        if (best_idx < 0) throw solver_error("tune: every candidate in block '" + name + "' failed");
        nlohmann::ordered_json b;
        b["block"] = block;
        b["name"] = name;
        b["winner"] = candidates[static_cast<std::size_t>(best_idx)].first;
        b["mean_val_rmse"] = best_rmse;
        summary["blocks"].push_back(b);
        std::printf("block %d (%s) winner: %s (mean val RMSE %s)\n", block, name.c_str(),
                    candidates[static_cast<std::size_t>(best_idx)].first.c_str(),
                    fmt_double(best_rmse).c_str());
        return candidates[static_cast<std::size_t>(best_idx)].second;
    };

    // block 1: window width
    {
        std::vector<std::pair<std::string, TuneChoice>> cands;
        for (int w : grid.windows) {
            TuneChoice c = chosen;
            c.window = w;
            cands.emplace_back("window=" + std::to_string(w), c);
        }
        chosen = run_block(1, "window", cands);
    }
    // block 2: layer counts
    {
        std::vector<std::pair<std::string, TuneChoice>> cands;
        for (int nl : grid.lstm_layer_counts) {
            for (int nf : grid.fc_layer_counts) {
                TuneChoice c = chosen;
                c.lstm_layers = nl;
                c.fc_layers = nf;
                cands.emplace_back(
                    "lstm-layers=" + std::to_string(nl) + "+fc-layers=" + std::to_string(nf), c);
            }
        }
        chosen = run_block(2, "layer counts", cands);
    }
    // block 3: unit counts
    {
        std::vector<std::pair<std::string, TuneChoice>> cands;
        for (int ul : grid.lstm_units) {
            for (int uf : grid.fc_units) {
                TuneChoice c = chosen;
                c.lstm_units = ul;
                c.fc_units = uf;
                cands.emplace_back(
                    "lstm-units=" + std::to_string(ul) + "+fc-units=" + std::to_string(uf), c);
            }
        }
        chosen = run_block(3, "unit counts", cands);
    }
    // block 4: batch size
    {
        std::vector<std::pair<std::string, TuneChoice>> cands;
        for (int b : grid.batches) {
            TuneChoice c = chosen;
            c.batch = b;
            cands.emplace_back("batch=" + std::to_string(b), c);
        }
        chosen = run_block(4, "batch size", cands);
    }
    // block 5: epochs
    {
        std::vector<std::pair<std::string, TuneChoice>> cands;
        for (int e : grid.epochs) {
            TuneChoice c = chosen;
            c.epochs = e;
            cands.emplace_back("epochs=" + std::to_string(e), c);
        }
        chosen = run_block(5, "epochs", cands);
    }

    RunConfig best = grid.base;
    best.window = chosen.window;
    best.lstm_units = chosen.lstm_vec();
    best.fc_units = chosen.fc_vec();
    best.batch_size = chosen.batch;
    best.epochs = chosen.epochs;
    write_text_file(a.out_dir + "/best-config.conf", best.resolved_text());
    summary["grid_hash"] = hex64(hash_file(a.grid));
    summary["data_hash"] = hex64(hash_file(cmapss_path(a.data_dir, "train", a.dataset)));
    write_run_json(a.out_dir + "/tune-summary.json", summary);
    std::printf("tune complete; best config written to %s/best-config.conf\n", a.out_dir.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RUL prognostics with mixture (log)-location-scale deep models"};
    app.require_subcommand(1);

    PreprocessArgs pa;
    auto* pre = app.add_subcommand("preprocess", "window and normalize C-MAPSS-format data");
    pre->add_option("--data-dir", pa.data_dir, "directory with train_/test_/RUL_ files")->required();
    pre->add_option("--dataset", pa.dataset, "dataset id, e.g. FD003");
    pre->add_option("--kind", pa.kind, "train or test");
    pre->add_option("--window", pa.window, "sliding window width T_w");
    pre->add_option("--cap", pa.cap, "RUL cap for training targets");
    pre->add_option("--out", pa.out, "output windowed-dataset file")->required();
    pre->add_option("--stats", pa.stats_ref, "training dataset/model supplying normalization stats");
    pre->add_option("--seed", pa.seed, "seed recorded in the dataset header");
    pre->add_option("--stride", pa.stride, "window stride");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    tr->add_option("--config", ta.config, "run configuration file")->required();
    tr->add_option("--out-dir", ta.out_dir, "output directory (overrides config)");
    std::uint64_t seed_opt = 0;
    auto* seed_flag = tr->add_option("--seed", seed_opt, "seed (overrides config)");
    int threads_opt = 1;
    auto* threads_flag = tr->add_option("--threads", threads_opt, "threads (overrides config)");

    PredictArgs pra;
    auto* pr = app.add_subcommand("predict", "predict RULs for in-field assets");
    pr->add_option("--model", pra.model, "trained model file")->required();
    pr->add_option("--input", pra.input, "C-MAPSS text file or windowed dataset")->required();
    pr->add_option("--out-dir", pra.out_dir, "output directory");
    pr->add_option("--weibull-mean-variant", pra.weibull_mean_variant, "standard or squared");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "evaluate a model on a labeled test fleet");
    ev->add_option("--model", ea.model, "trained model file")->required();
    ev->add_option("--input", ea.input, "preprocessed windowed test dataset");
    ev->add_option("--test-dir", ea.test_dir, "directory with raw test_/RUL_ files");
    ev->add_option("--dataset", ea.dataset, "dataset id for --test-dir");
    ev->add_option("--out-dir", ea.out_dir, "output directory");
    ev->add_option("--eval-mode", ea.eval_mode, "final-window or all-windows");
    ev->add_option("--weibull-mean-variant", ea.weibull_mean_variant, "standard or squared");
    ev->add_flag("--no-truth-cap", ea.no_truth_cap, "score against uncapped true RULs");

    TuneArgs tua;
    auto* tu = app.add_subcommand("tune", "block-coordinate hyperparameter search");
    tu->add_option("--grid", tua.grid, "grid configuration file")->required();
    tu->add_option("--data-dir", tua.data_dir, "directory with raw training files")->required();
    tu->add_option("--dataset", tua.dataset, "dataset id");
    tu->add_option("--out-dir", tua.out_dir, "output directory");
    std::uint64_t tune_seed = 0;
    auto* tune_seed_flag = tu->add_option("--seed", tune_seed, "base seed (overrides grid)");
    int tune_threads = 1;
    auto* tune_threads_flag = tu->add_option("--threads", tune_threads, "threads");

    try {
        app.parse(argc, argv);
        if (pre->parsed()) return cmd_preprocess(pa);
        if (tr->parsed()) {
            if (*seed_flag) ta.seed = seed_opt;
            if (*threads_flag) ta.threads = threads_opt;
            return cmd_train(ta);
        }
        if (pr->parsed()) return cmd_predict(pra);
        if (ev->parsed()) return cmd_evaluate(ea);
        if (tu->parsed()) {
            if (*tune_seed_flag) tua.seed = tune_seed;
            if (*tune_threads_flag) tua.threads = tune_threads;
            return cmd_tune(tua);
        }
        return kExitGeneric;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const parse_error& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitParse;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const solver_error& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitGeneric;
    }
}
