// ============================================================================
// evaluation.hpp - point RUL prediction from mixture parameters and the
// fleet-level metrics: RMSE, prediction score (asymmetric exponential
// penalty), and relative absolute error, plus predictions.csv / report.json
// emission.
// ============================================================================
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlbp/common.hpp"
#include "dlbp/dataset.hpp"
#include "dlbp/lls.hpp"
#include "dlbp/network.hpp"

namespace dlbp {

struct Prediction {
    int asset_id = 0;
    int window_index = 0;
    double predicted_rul = 0.0;
    std::optional<double> true_rul;
    std::vector<double> mu, sigma, lambda;  // per-component head parameters

    double delta() const { return predicted_rul - *true_rul; }
};

enum class EvalMode : std::uint8_t { FinalWindow = 0, AllWindows = 1 };

inline const char* eval_mode_name(EvalMode m) {
    return m == EvalMode::FinalWindow ? "final-window" : "all-windows";
}

struct EvalOptions {
    EvalMode mode = EvalMode::FinalWindow;
    bool cap_truth = true;  // cap true RULs like the training targets
    double cap = kDefaultRulCap;
    WeibullMeanVariant weibull_mean_variant = WeibullMeanVariant::Standard;
};

struct RaeSummary {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

struct EvalReport {
    double rmse = 0.0;
    double score_total = 0.0;
    double score_mean = 0.0;
    std::vector<double> score_per_asset;
    std::vector<double> rae_per_asset;
    RaeSummary rae_summary;
    std::size_t n_t = 0;
    EvalMode mode = EvalMode::FinalWindow;
    int excluded_zero_truth = 0;  // assets excluded from RAE (true RUL = 0)
    bool truth_capped = true;
    double cap = kDefaultRulCap;
};

// ----------------------------------------------------------------------------
// Point prediction: forward pass then mixture mean. The raw mean is reported;
// the RUL cap applies only to training targets.
// ----------------------------------------------------------------------------
inline Prediction predict(const Eigen::MatrixXd& window, const ModelParams& m,
                          WeibullMeanVariant variant = WeibullMeanVariant::Standard) {
    const MixtureParams params = forward(window, m);
    Prediction p;
    for (std::size_t k = 0; k < params.k(); ++k) {
        p.mu.push_back(params.components[k].mu);
        p.sigma.push_back(params.components[k].sigma);
        p.lambda.push_back(params.weights[k]);
    }
    try {
        p.predicted_rul = mixture_mean(params, variant);
    } catch (const std::domain_error& e) {
        std::string msg = std::string("prediction mean undefined: ") + e.what() + " [params:";
        for (std::size_t k = 0; k < params.k(); ++k) {
            msg += " (" + std::string(family_name(params.components[k].family)) +
                   " mu=" + fmt_double(p.mu[k]) + " sigma=" + fmt_double(p.sigma[k]) +
                   " lambda=" + fmt_double(p.lambda[k]) + ")";
        }
        throw numeric_error(msg + "]");
    }
    return p;
}

// ----------------------------------------------------------------------------
// Metrics
// ----------------------------------------------------------------------------
inline double rmse(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw std::invalid_argument("rmse: empty prediction list");
    double s = 0.0;
    for (const auto& p : preds) {
        if (!p.true_rul) throw std::invalid_argument("rmse: prediction lacks a true RUL");
        s += p.delta() * p.delta();
    }
    return std::sqrt(s / static_cast<double>(preds.size()));
}

inline double score_of_delta(double delta) {
    return delta < 0.0 ? std::expm1(-delta / 13.0) : std::expm1(delta / 10.0);
}

struct ScoreResult {
    double total = 0.0;
    std::vector<double> per_asset;
};

inline ScoreResult score(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw std::invalid_argument("score: empty prediction list");
    ScoreResult r;
    for (const auto& p : preds) {
        if (!p.true_rul) throw std::invalid_argument("score: prediction lacks a true RUL");
        r.per_asset.push_back(score_of_delta(p.delta()));
        r.total += r.per_asset.back();
    }
    return r;
}

struct RaeResult {
    std::vector<double> per_asset;
    int excluded = 0;  // true RUL = 0 entries, excluded with a warning
};

inline RaeResult rae(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw std::invalid_argument("rae: empty prediction list");
    RaeResult r;
    for (const auto& p : preds) {
        if (!p.true_rul) throw std::invalid_argument("rae: prediction lacks a true RUL");
        if (*p.true_rul == 0.0) {
            ++r.excluded;
            continue;
        }
        r.per_asset.push_back(std::abs(p.delta()) / std::abs(*p.true_rul));
    }
    return r;
}

// linear-interpolation quantile on a copy (q in [0,1])
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile: empty input");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

// ----------------------------------------------------------------------------
// Fleet evaluation over preprocessed (filtered + normalized) test traces.
// final-window mode: one prediction per engine at its latest window;
// all-windows mode: every positive-RUL window.
// ----------------------------------------------------------------------------
struct FleetResult {
    EvalReport report;
    std::vector<Prediction> predictions;
};

inline FleetResult evaluate_predictions(std::vector<Prediction> preds, const EvalOptions& opts) {
    if (preds.empty()) throw std::invalid_argument("evaluate: no predictions");
    FleetResult out;
    out.report.mode = opts.mode;
    out.report.truth_capped = opts.cap_truth;
    out.report.cap = opts.cap;
    if (opts.cap_truth) {
        for (auto& p : preds) {
            if (p.true_rul) p.true_rul = std::min(*p.true_rul, opts.cap);
        }
    }
    out.report.n_t = preds.size();
    out.report.rmse = rmse(preds);
    auto sc = score(preds);
    out.report.score_total = sc.total;
    out.report.score_mean = sc.total / static_cast<double>(preds.size());
    out.report.score_per_asset = std::move(sc.per_asset);
    auto ra = rae(preds);
    out.report.rae_per_asset = std::move(ra.per_asset);
    out.report.excluded_zero_truth = ra.excluded;
    if (!out.report.rae_per_asset.empty()) {
        out.report.rae_summary.median = quantile(out.report.rae_per_asset, 0.5);
        out.report.rae_summary.q1 = quantile(out.report.rae_per_asset, 0.25);
        out.report.rae_summary.q3 = quantile(out.report.rae_per_asset, 0.75);
    }
    out.predictions = std::move(preds);
    return out;
}

inline FleetResult evaluate_fleet(const std::vector<EngineTrace>& traces, const ModelParams& m,
                                  const EvalOptions& opts = {}) {
    if (traces.empty()) throw std::invalid_argument("evaluate_fleet: no traces");
    std::vector<Prediction> preds;
    for (const auto& t : traces) {
        if (t.signals.cols() != m.input_dim())
            throw config_error("trace asset=" + std::to_string(t.asset_id) +
                               " has P=" + std::to_string(t.signals.cols()) +
                               " sensors, model expects " + std::to_string(m.input_dim()));
        if (opts.mode == EvalMode::FinalWindow) {
            auto windows = sliding_window(t, m.window_width, WindowMode::Final);
            Prediction p = predict(windows.front().window, m, opts.weibull_mean_variant);
            p.asset_id = t.asset_id;
            p.window_index = windows.front().window_index;
            p.true_rul = t.failure_time - static_cast<double>(t.length());
            preds.push_back(std::move(p));
        } else {
            for (const auto& w : sliding_window(t, m.window_width, WindowMode::All)) {
                Prediction p = predict(w.window, m, opts.weibull_mean_variant);
                p.asset_id = t.asset_id;
                p.window_index = w.window_index;
                p.true_rul = w.target;
                preds.push_back(std::move(p));
            }
        }
    }
    return evaluate_predictions(std::move(preds), opts);
}

// Evaluation straight from a windowed dataset file's samples (targets must be
// present). final-window mode keeps each asset's last window.
inline FleetResult evaluate_samples(const std::vector<WindowedSample>& samples,
                                    const ModelParams& m, const EvalOptions& opts = {}) {
    if (samples.empty()) throw std::invalid_argument("evaluate_samples: no samples");
    std::map<int, const WindowedSample*> finals;
    std::vector<const WindowedSample*> chosen;
    if (opts.mode == EvalMode::FinalWindow) {
        for (const auto& s : samples) {
            auto& slot = finals[s.asset_id];
            if (!slot || s.window_index > slot->window_index) slot = &s;
        }
        for (auto& [id, s] : finals) chosen.push_back(s);
    } else {
        for (const auto& s : samples) chosen.push_back(&s);
    }
    std::vector<Prediction> preds;
    for (const auto* s : chosen) {
        if (!s->has_target())
            throw std::invalid_argument("evaluate_samples: sample lacks a true RUL (asset " +
                                        std::to_string(s->asset_id) + ")");
        Prediction p = predict(s->window, m, opts.weibull_mean_variant);
        p.asset_id = s->asset_id;
        p.window_index = s->window_index;
        p.true_rul = s->target;
        preds.push_back(std::move(p));
    }
    return evaluate_predictions(std::move(preds), opts);
}

// ----------------------------------------------------------------------------
// Output files
// ----------------------------------------------------------------------------
inline void write_predictions_csv(const std::vector<Prediction>& preds, std::size_t k,
                                  const std::string& path,
                                  const std::vector<double>* scores = nullptr,
                                  const std::vector<double>* raes = nullptr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error(path + ": cannot open for writing");
    os << "asset_id,predicted_rul,true_rul,delta,score,rae";
    for (std::size_t i = 1; i <= k; ++i) {
        os << ",mu_" << i << ",sigma_" << i << ",lambda_" << i;
    }
    os << "\n";
    std::size_t rae_pos = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& p = preds[i];
        os << p.asset_id << "," << fmt_double(p.predicted_rul) << ",";
        if (p.true_rul) {
            os << fmt_double(*p.true_rul) << "," << fmt_double(p.delta()) << ","
               << (scores ? fmt_double((*scores)[i]) : fmt_double(score_of_delta(p.delta())))
               << ",";
            if (*p.true_rul == 0.0) {
                os << "";  // excluded from RAE
            } else if (raes) {
                os << fmt_double((*raes)[rae_pos++]);
            } else {
                os << fmt_double(std::abs(p.delta()) / std::abs(*p.true_rul));
            }
        } else {
            os << ",,,";
        }
        for (std::size_t j = 0; j < k; ++j) {
            os << "," << fmt_double(p.mu[j]) << "," << fmt_double(p.sigma[j]) << ","
               << fmt_double(p.lambda[j]);
        }
        os << "\n";
    }
}

inline void write_report_json(const EvalReport& r, const std::string& path,
                              const std::map<std::string, std::string>& provenance = {}) {
    nlohmann::ordered_json j;
    j["rmse"] = r.rmse;
    j["score_total"] = r.score_total;
    j["score_mean"] = r.score_mean;
    j["n_t"] = r.n_t;
    j["evaluation_mode"] = eval_mode_name(r.mode);
    j["rae_median"] = r.rae_summary.median;
    j["rae_q1"] = r.rae_summary.q1;
    j["rae_q3"] = r.rae_summary.q3;
    j["rae_excluded_zero_truth"] = r.excluded_zero_truth;
    j["truth_capped"] = r.truth_capped;
    j["rul_cap"] = r.cap;
    for (const auto& [key, value] : provenance) j[key] = value;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error(path + ": cannot open for writing");
    os << j.dump(2) << "\n";
}

}  // namespace dlbp
