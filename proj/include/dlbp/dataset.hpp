// ============================================================================
// dataset.hpp - C-MAPSS ingestion, sensor filtering, min-max normalization,
// RUL capping, sliding-window sample generation, engine-level splits, and the
// versioned windowed-dataset file format (see docs/FORMATS.md).
// ============================================================================
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dlbp/common.hpp"

namespace dlbp {

inline constexpr int kOpSettings = 3;
inline constexpr int kRawSensors = 21;
inline constexpr double kDefaultRulCap = 125.0;
inline constexpr double kConstantSensorTol = 1e-12;

// One asset's raw multi-sensor time series plus its failure time.
// Training traces are run to failure (y = n); test traces are truncated and
// carry y = n + residual RUL from the companion RUL file.
struct EngineTrace {
    int asset_id = 0;
    Eigen::MatrixXd op_settings;  // n x 3
    Eigen::MatrixXd signals;      // n x P (P = 21 raw, fewer after filtering)
    double failure_time = 0.0;    // y_i
    bool normalized = false;

    Eigen::Index length() const { return signals.rows(); }
};

// Fixed-length window paired with its capped RUL target.
struct WindowedSample {
    int asset_id = 0;
    int window_index = 0;         // 1-based position of the window in the trace
    Eigen::MatrixXd window;       // T_w x P
    double target = std::numeric_limits<double>::quiet_NaN();  // NaN for inference

    bool has_target() const { return !std::isnan(target); }
};

// Per-sensor min/max over the training fleet (post-filter columns).
struct NormalizationStats {
    std::vector<int> kept_sensors;  // 1-based original sensor numbers
    Eigen::VectorXd min;            // length P
    Eigen::VectorXd max;

    Eigen::Index p() const { return min.size(); }
};

enum class DatasetKind : std::uint8_t { Train = 0, Test = 1 };
enum class WindowMode : std::uint8_t { All = 0, Final = 1 };

// ----------------------------------------------------------------------------
// C-MAPSS text parsing: whitespace-separated rows of
// unit, cycle, 3 op settings, 21 sensor readings.
// ----------------------------------------------------------------------------
namespace detail {

inline bool parse_row(const std::string& line, std::vector<double>& out) {
    out.clear();
    const char* p = line.c_str();
    char* end = nullptr;
    while (*p) {
        while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
        if (!*p) break;
        const double v = std::strtod(p, &end);
        if (end == p) return false;
        out.push_back(v);
        p = end;
    }
    return true;
}

}  // namespace detail

inline std::vector<EngineTrace> load_cmapss(const std::string& path, DatasetKind kind,
                                            const std::optional<std::string>& rul_path = {}) {
    std::ifstream is(path);
    if (!is) throw parse_error(path + ": cannot open file");

    std::map<int, std::vector<std::vector<double>>> rows_by_unit;
    std::string line;
    std::vector<double> row;
    long line_no = 0;
    bool any = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!detail::parse_row(line, row) || row.size() != 2 + kOpSettings + kRawSensors)
            throw parse_error(path + ":" + std::to_string(line_no) +
                              ": malformed row (expected 26 numeric columns)");
        any = true;
        rows_by_unit[static_cast<int>(row[0])].push_back(row);
    }
    if (!any) throw parse_error(path + ": no data rows");

    std::vector<double> ruls;
    if (kind == DatasetKind::Test) {
        if (!rul_path) throw parse_error(path + ": test data requires an RUL file");
        std::ifstream rs(*rul_path);
        if (!rs) throw parse_error(*rul_path + ": cannot open RUL file");
        double v;
        while (rs >> v) ruls.push_back(v);
        if (ruls.size() < rows_by_unit.size())
            throw parse_error(*rul_path + ": missing RUL entry for unit " +
                              std::to_string(ruls.size() + 1) + " (file has " +
                              std::to_string(ruls.size()) + " entries, data has " +
                              std::to_string(rows_by_unit.size()) + " units)");
    }

    std::vector<EngineTrace> traces;
    traces.reserve(rows_by_unit.size());
    std::size_t unit_pos = 0;
    for (auto& [unit, rows] : rows_by_unit) {
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return a[1] < b[1]; });
        EngineTrace t;
        t.asset_id = unit;
        const auto n = static_cast<Eigen::Index>(rows.size());
        t.op_settings.resize(n, kOpSettings);
        t.signals.resize(n, kRawSensors);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (static_cast<long>(rows[i][1]) != i + 1)
                throw parse_error(path + ": unit " + std::to_string(unit) +
                                  ": non-contiguous cycle index " +
                                  std::to_string(static_cast<long>(rows[i][1])) + " at position " +
                                  std::to_string(i + 1));
            for (int j = 0; j < kOpSettings; ++j) t.op_settings(i, j) = rows[i][2 + j];
            for (int j = 0; j < kRawSensors; ++j) t.signals(i, j) = rows[i][2 + kOpSettings + j];
        }
        t.failure_time = kind == DatasetKind::Train
                             ? static_cast<double>(n)
                             : static_cast<double>(n) + ruls[unit_pos];
        ++unit_pos;
        traces.push_back(std::move(t));
    }
    return traces;
}

// ----------------------------------------------------------------------------
// Sensor filtering and normalization
// ----------------------------------------------------------------------------
struct FilterResult {
    std::vector<EngineTrace> traces;
    std::vector<int> kept_sensors;  // 1-based
};

// Removes sensors whose fleet-wide value range is below tolerance.
inline FilterResult drop_constant_sensors(const std::vector<EngineTrace>& traces,
                                          double tol = kConstantSensorTol) {
    if (traces.empty()) throw std::invalid_argument("drop_constant_sensors: no traces");
    const auto p = traces.front().signals.cols();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, -std::numeric_limits<double>::infinity());
    for (const auto& t : traces) {
        lo = lo.cwiseMin(t.signals.colwise().minCoeff().transpose());
        hi = hi.cwiseMax(t.signals.colwise().maxCoeff().transpose());
    }
    std::vector<int> kept;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (hi[j] - lo[j] > tol) kept.push_back(static_cast<int>(j) + 1);
    }
    if (kept.empty()) throw std::invalid_argument("drop_constant_sensors: all sensors constant");

    FilterResult out;
    out.kept_sensors = kept;
    out.traces.reserve(traces.size());
    for (const auto& t : traces) {
        EngineTrace f = t;
        f.signals.resize(t.signals.rows(), static_cast<Eigen::Index>(kept.size()));
        for (std::size_t j = 0; j < kept.size(); ++j) {
            f.signals.col(static_cast<Eigen::Index>(j)) = t.signals.col(kept[j] - 1);
        }
        out.traces.push_back(std::move(f));
    }
    return out;
}

// Stats must come from the training fleet only.
inline NormalizationStats fit_normalization(const std::vector<EngineTrace>& traces,
                                            const std::vector<int>& kept_sensors) {
    if (traces.empty()) throw std::invalid_argument("fit_normalization: no traces");
    const auto p = traces.front().signals.cols();
    NormalizationStats stats;
    stats.kept_sensors = kept_sensors;
    stats.min = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
    stats.max = Eigen::VectorXd::Constant(p, -std::numeric_limits<double>::infinity());
    for (const auto& t : traces) {
        stats.min = stats.min.cwiseMin(t.signals.colwise().minCoeff().transpose());
        stats.max = stats.max.cwiseMax(t.signals.colwise().maxCoeff().transpose());
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!(stats.max[j] > stats.min[j]))
            throw numeric_error("fit_normalization: sensor " + std::to_string(stats.kept_sensors[j]) +
                                " has max == min; run drop_constant_sensors first");
    }
    return stats;
}

// x' = (x - min) / (max - min). Test values outside the training range are
// not clipped. Applying twice is a pipeline bug, hence the normalized flag.
inline void apply_normalization(std::vector<EngineTrace>& traces, const NormalizationStats& stats) {
    for (auto& t : traces) {
        if (t.normalized)
            throw std::logic_error("apply_normalization: trace already normalized (asset " +
                                   std::to_string(t.asset_id) + ")");
        if (t.signals.cols() != stats.p())
            throw std::invalid_argument("apply_normalization: column count mismatch");
        for (Eigen::Index j = 0; j < stats.p(); ++j) {
            t.signals.col(j) =
                (t.signals.col(j).array() - stats.min[j]) / (stats.max[j] - stats.min[j]);
        }
        t.normalized = true;
    }
}

inline double cap_rul(double target, double cap = kDefaultRulCap) {
    if (!(target > 0.0)) throw std::domain_error("cap_rul: target must be > 0");
    return std::min(target, cap);
}

// ----------------------------------------------------------------------------
// Sliding window method. Window j (1-based, stride s) covers rows
// [1+(j-1)s, T_w+(j-1)s]; its target is y - T_w - (j-1)s. Training emits all
// windows with positive target; inference emits only the latest window.
// Traces shorter than T_w are left-zero-padded.
// ----------------------------------------------------------------------------
inline std::vector<WindowedSample> sliding_window(const EngineTrace& trace, int window_width,
                                                  WindowMode mode = WindowMode::All,
                                                  int stride = 1) {
    if (window_width < 1) throw std::invalid_argument("sliding_window: T_w must be >= 1");
    if (stride < 1) throw std::invalid_argument("sliding_window: stride must be >= 1");
    const auto n = trace.length();
    const auto p = trace.signals.cols();
    std::vector<WindowedSample> out;

    auto make_window = [&](Eigen::Index last_row) {  // rows (last_row-T_w, last_row]
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(window_width, p);
        const Eigen::Index first = last_row - window_width;  // may be negative: left padding
        for (Eigen::Index r = std::max<Eigen::Index>(first, 0); r < last_row; ++r) {
            w.row(r - first) = trace.signals.row(r);
        }
        return w;
    };

    if (mode == WindowMode::Final) {
        WindowedSample s;
        s.asset_id = trace.asset_id;
        s.window_index = n >= window_width ? static_cast<int>((n - window_width) / stride) + 1 : 1;
        s.window = make_window(n);
        out.push_back(std::move(s));
        return out;
    }

    if (n < window_width) {
        // single padded window; its target y - n is only emitted when positive
        const double target = trace.failure_time - static_cast<double>(n);
        if (target > 0.0) {
            WindowedSample s;
            s.asset_id = trace.asset_id;
            s.window_index = 1;
            s.window = make_window(n);
            s.target = target;
            out.push_back(std::move(s));
        }
        return out;
    }

    for (int j = 1;; ++j) {
        const Eigen::Index last = window_width + static_cast<Eigen::Index>(j - 1) * stride;
        if (last > n) break;
        const double target = trace.failure_time - static_cast<double>(last);
        if (target <= 0.0) break;
        WindowedSample s;
        s.asset_id = trace.asset_id;
        s.window_index = j;
        s.window = make_window(last);
        s.target = target;
        out.push_back(std::move(s));
    }
    return out;
}

inline void cap_targets(std::vector<WindowedSample>& samples, double cap = kDefaultRulCap) {
    for (auto& s : samples) {
        if (s.has_target()) s.target = cap_rul(s.target, cap);
    }
}

// ----------------------------------------------------------------------------
// Engine-level train/validation split (all windows of an engine land on one
// side). Deterministic given seed.
// ----------------------------------------------------------------------------
struct SampleSplit {
    std::vector<WindowedSample> train;
    std::vector<WindowedSample> val;
};

inline SampleSplit split_train_val(const std::vector<WindowedSample>& samples, double fraction,
                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split_train_val: fraction must be in (0,1)");
    std::vector<int> assets;
    for (const auto& s : samples) {
        if (assets.empty() || std::find(assets.begin(), assets.end(), s.asset_id) == assets.end())
            assets.push_back(s.asset_id);
    }
    if (assets.size() < 2) throw std::invalid_argument("split_train_val: need at least 2 assets");

    std::sort(assets.begin(), assets.end());
    Rng rng(seed);
    fisher_yates(assets, rng);
    auto n_train = static_cast<std::size_t>(fraction * static_cast<double>(assets.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, assets.size() - 1);

    std::map<int, bool> in_train;
    for (std::size_t i = 0; i < assets.size(); ++i) in_train[assets[i]] = i < n_train;

    SampleSplit split;
    for (const auto& s : samples) {
        (in_train[s.asset_id] ? split.train : split.val).push_back(s);
    }
    return split;
}

// ----------------------------------------------------------------------------
// Windowed-dataset file (magic "DLBPDS01", little-endian; docs/FORMATS.md)
// ----------------------------------------------------------------------------
struct WindowedDataset {
    int window_width = 0;
    double cap = kDefaultRulCap;
    std::uint64_t seed = 0;
    DatasetKind kind = DatasetKind::Train;
    NormalizationStats stats;
    std::vector<WindowedSample> samples;

    Eigen::Index p() const { return stats.p(); }
};

inline void save_dataset(const WindowedDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error(path + ": cannot open for writing");
    os.write("DLBPDS01", 8);
    write_pod<std::uint32_t>(os, 1);  // version
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(ds.kind));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.window_width));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.stats.p()));
    for (int ks : ds.stats.kept_sensors) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ks));
    write_f64s(os, ds.stats.min.data(), static_cast<std::size_t>(ds.stats.p()));
    write_f64s(os, ds.stats.max.data(), static_cast<std::size_t>(ds.stats.p()));
    write_pod<double>(os, ds.cap);
    write_pod<std::uint64_t>(os, ds.seed);
    write_pod<std::uint64_t>(os, ds.samples.size());
    for (const auto& s : ds.samples) {
        write_pod<std::int32_t>(os, s.asset_id);
        write_pod<std::int32_t>(os, s.window_index);
        write_pod<double>(os, s.target);
        // row-major
        for (Eigen::Index r = 0; r < s.window.rows(); ++r) {
            for (Eigen::Index c = 0; c < s.window.cols(); ++c) write_pod<double>(os, s.window(r, c));
        }
    }
    if (!os) throw parse_error(path + ": write failed");
}

inline WindowedDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw parse_error(path + ": cannot open");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "DLBPDS01")
        throw parse_error(path + ": not a windowed-dataset file (bad magic)");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != 1) throw parse_error(path + ": unsupported dataset version");

    WindowedDataset ds;
    ds.kind = static_cast<DatasetKind>(read_pod<std::uint8_t>(is));
    ds.window_width = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto p = static_cast<Eigen::Index>(read_pod<std::uint32_t>(is));
    ds.stats.kept_sensors.resize(static_cast<std::size_t>(p));
    for (auto& ks : ds.stats.kept_sensors) ks = static_cast<int>(read_pod<std::uint32_t>(is));
    ds.stats.min.resize(p);
    ds.stats.max.resize(p);
    read_f64s(is, ds.stats.min.data(), static_cast<std::size_t>(p));
    read_f64s(is, ds.stats.max.data(), static_cast<std::size_t>(p));
    ds.cap = read_pod<double>(is);
    ds.seed = read_pod<std::uint64_t>(is);
    const auto n = read_pod<std::uint64_t>(is);
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        s.asset_id = read_pod<std::int32_t>(is);
        s.window_index = read_pod<std::int32_t>(is);
        s.target = read_pod<double>(is);
        s.window.resize(ds.window_width, p);
        for (Eigen::Index r = 0; r < s.window.rows(); ++r) {
            for (Eigen::Index c = 0; c < s.window.cols(); ++c) s.window(r, c) = read_pod<double>(is);
        }
    }
    return ds;
}

}  // namespace dlbp
