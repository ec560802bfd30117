// ============================================================================
// network.hpp - forward computation of the deep structure: LSTM layer(s),
// fully connected layer(s), and the distribution-parameter head (3K neurons
// for the per-asset-scale model, 2K for the shared-scale model), plus
// activations, Xavier initialization, and model (de)serialization.
// ============================================================================
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dlbp/common.hpp"
#include "dlbp/dataset.hpp"
#include "dlbp/lls.hpp"

namespace dlbp {

// ----------------------------------------------------------------------------
// Scalar activations
// ----------------------------------------------------------------------------
inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double softplus_plus_one(double x) { return softplus(x) + 1.0; }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

enum class Activation : std::uint8_t {
    Elu = 0,
    Softplus = 1,
    SoftplusPlusOne = 2,
    Sigmoid = 3,
    Identity = 4,
};

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Elu: return elu(x);
        case Activation::Softplus: return softplus(x);
        case Activation::SoftplusPlusOne: return softplus_plus_one(x);
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Identity: return x;
    }
    return x;
}

// derivative expressed through the activation's own output
inline double activation_deriv_from_output(Activation a, double out) {
    switch (a) {
        case Activation::Elu: return out >= 0.0 ? 1.0 : out + 1.0;
        case Activation::Softplus: return 1.0 - std::exp(-out);
        case Activation::SoftplusPlusOne: return 1.0 - std::exp(-(out - 1.0));
        case Activation::Sigmoid: return out * (1.0 - out);
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Elu: return "elu";
        case Activation::Softplus: return "softplus";
        case Activation::SoftplusPlusOne: return "softplus+1";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "elu") return Activation::Elu;
    if (s == "softplus") return Activation::Softplus;
    if (s == "softplus+1" || s == "softplus_plus_one") return Activation::SoftplusPlusOne;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw config_error("unknown activation: " + s);
}

// Some formulations apply tanh to the output gate instead of the standard
// sigmoid. Both are supported; sigmoid is the default.
enum class OutputGateActivation : std::uint8_t { Sigmoid = 0, Tanh = 1 };

// ----------------------------------------------------------------------------
// Parameter blocks
// ----------------------------------------------------------------------------
struct LstmLayerParams {
    Eigen::MatrixXd w_f, w_i, w_g, w_o;  // hidden x input
    Eigen::MatrixXd u_f, u_i, u_g, u_o;  // hidden x hidden
    Eigen::VectorXd b_f, b_i, b_g, b_o;  // hidden

    Eigen::Index hidden() const { return w_f.rows(); }
    Eigen::Index input() const { return w_f.cols(); }
};

struct FcLayerParams {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

struct HeadParams {
    Eigen::MatrixXd weight;               // Q x in
    Eigen::VectorXd bias;                 // Q
    std::vector<Activation> activations;  // per neuron, length Q

    Eigen::Index q() const { return weight.rows(); }
};

enum class ModelKind : std::uint8_t { Dlbp1 = 0, Dlbp2 = 1 };

inline const char* model_kind_name(ModelKind k) { return k == ModelKind::Dlbp1 ? "dlbp1" : "dlbp2"; }

struct ModelParams {
    ModelKind kind = ModelKind::Dlbp1;
    MixtureSpec mixture_spec;
    OutputGateActivation output_gate = OutputGateActivation::Sigmoid;
    int window_width = 0;
    std::vector<LstmLayerParams> lstm_layers;
    std::vector<FcLayerParams> fc_layers;
    HeadParams head;
    std::vector<double> shared_sigma;  // shared-scale model only, length K
    NormalizationStats stats;          // preprocessing provenance, travels with weights
    double rul_cap = kDefaultRulCap;
    std::uint64_t seed = 0;

    std::size_t k() const { return mixture_spec.size(); }
    Eigen::Index input_dim() const { return lstm_layers.front().input(); }
};

// ----------------------------------------------------------------------------
// Initialization
// ----------------------------------------------------------------------------
inline Eigen::MatrixXd xavier_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("xavier_init: dims must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform(rng, -bound, bound);
    }
    return m;
}

inline Eigen::MatrixXd xavier_init(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    return xavier_init(rows, cols, rng);
}

// Default per-neuron head activations. Locations: elu for log-normal
// (mu in R), softplus for Weibull/log-logistic (mu > 0). Scales: softplus,
// except softplus+1 for log-logistic (sigma > 1). Weights: sigmoid.
inline std::vector<Activation> default_head_activations(ModelKind kind, const MixtureSpec& spec) {
    std::vector<Activation> acts;
    for (auto f : spec) {
        acts.push_back(f == LLSFamily::LogNormal ? Activation::Elu : Activation::Softplus);
    }
    if (kind == ModelKind::Dlbp1) {
        for (auto f : spec) {
            acts.push_back(f == LLSFamily::LogLogistic ? Activation::SoftplusPlusOne
                                                       : Activation::Softplus);
        }
    }
    for (std::size_t i = 0; i < spec.size(); ++i) acts.push_back(Activation::Sigmoid);
    return acts;
}

struct ModelConfig {
    ModelKind kind = ModelKind::Dlbp1;
    MixtureSpec mixture_spec;
    int window_width = 30;
    int input_dim = 16;
    std::vector<int> lstm_units = {128};
    std::vector<int> fc_units = {64};
    OutputGateActivation output_gate = OutputGateActivation::Sigmoid;
    std::vector<Activation> head_activations;  // empty = defaults
};

inline ModelParams make_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.mixture_spec.empty()) throw config_error("mixture spec must have K >= 1 components");
    if (cfg.lstm_units.empty()) throw config_error("at least one LSTM layer required");
    const auto K = cfg.mixture_spec.size();
    const auto q = static_cast<Eigen::Index>((cfg.kind == ModelKind::Dlbp1 ? 3 : 2) * K);

    ModelParams m;
    m.kind = cfg.kind;
    m.mixture_spec = cfg.mixture_spec;
    m.output_gate = cfg.output_gate;
    m.window_width = cfg.window_width;
    m.seed = seed;

    Rng rng(seed);
    Eigen::Index in = cfg.input_dim;
    for (int units : cfg.lstm_units) {
        LstmLayerParams l;
        l.w_f = xavier_init(units, in, rng);
        l.w_i = xavier_init(units, in, rng);
        l.w_g = xavier_init(units, in, rng);
        l.w_o = xavier_init(units, in, rng);
        l.u_f = xavier_init(units, units, rng);
        l.u_i = xavier_init(units, units, rng);
        l.u_g = xavier_init(units, units, rng);
        l.u_o = xavier_init(units, units, rng);
        l.b_f = Eigen::VectorXd::Zero(units);
        l.b_i = Eigen::VectorXd::Zero(units);
        l.b_g = Eigen::VectorXd::Zero(units);
        l.b_o = Eigen::VectorXd::Zero(units);
        m.lstm_layers.push_back(std::move(l));
        in = units;
    }
    for (int units : cfg.fc_units) {
        FcLayerParams f;
        f.weight = xavier_init(units, in, rng);
        f.bias = Eigen::VectorXd::Zero(units);
        m.fc_layers.push_back(std::move(f));
        in = units;
    }
    m.head.weight = xavier_init(q, in, rng);
    m.head.bias = Eigen::VectorXd::Zero(q);
    m.head.activations =
        cfg.head_activations.empty() ? default_head_activations(cfg.kind, cfg.mixture_spec)
                                     : cfg.head_activations;
    if (static_cast<Eigen::Index>(m.head.activations.size()) != q)
        throw config_error("head activation list must have " + std::to_string(q) + " entries");

    if (cfg.kind == ModelKind::Dlbp2) m.shared_sigma.assign(K, 1.0);
    return m;
}

// ----------------------------------------------------------------------------
// Forward computation (single sample)
// ----------------------------------------------------------------------------
struct LstmState {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
};

inline LstmState lstm_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                           const Eigen::VectorXd& c_prev, const LstmLayerParams& p,
                           OutputGateActivation gate_act = OutputGateActivation::Sigmoid) {
    if (x.size() != p.input() || h_prev.size() != p.hidden() || c_prev.size() != p.hidden())
        throw std::invalid_argument("lstm_cell: shape mismatch");
    const Eigen::VectorXd f =
        (p.w_f * x + p.u_f * h_prev + p.b_f).unaryExpr([](double v) { return sigmoid(v); });
    const Eigen::VectorXd i =
        (p.w_i * x + p.u_i * h_prev + p.b_i).unaryExpr([](double v) { return sigmoid(v); });
    const Eigen::VectorXd g = (p.w_g * x + p.u_g * h_prev + p.b_g).array().tanh();
    Eigen::VectorXd o = p.w_o * x + p.u_o * h_prev + p.b_o;
    if (gate_act == OutputGateActivation::Sigmoid) {
        o = o.unaryExpr([](double v) { return sigmoid(v); });
    } else {
        o = o.array().tanh().matrix();
    }
    LstmState s;
    s.c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    s.h = o.cwiseProduct(s.c.array().tanh().matrix());
    return s;
}

// Iterates cells over t = 1..T_w with zero initial state; stacked layers feed
// the hidden sequence upward. Returns the last layer's final hidden state.
inline Eigen::VectorXd lstm_forward(const Eigen::MatrixXd& window,
                                    const std::vector<LstmLayerParams>& layers,
                                    OutputGateActivation gate_act = OutputGateActivation::Sigmoid) {
    if (layers.empty()) throw std::invalid_argument("lstm_forward: no layers");
    Eigen::MatrixXd seq = window.transpose();  // input x T
    for (const auto& layer : layers) {
        if (seq.rows() != layer.input()) throw std::invalid_argument("lstm_forward: shape mismatch");
        Eigen::MatrixXd out(layer.hidden(), seq.cols());
        LstmState s{Eigen::VectorXd::Zero(layer.hidden()), Eigen::VectorXd::Zero(layer.hidden())};
        for (Eigen::Index t = 0; t < seq.cols(); ++t) {
            s = lstm_cell(seq.col(t), s.h, s.c, layer, gate_act);
            out.col(t) = s.h;
        }
        seq = std::move(out);
    }
    return seq.col(seq.cols() - 1);
}

inline Eigen::VectorXd fc_forward(const Eigen::VectorXd& v, const std::vector<FcLayerParams>& layers) {
    Eigen::VectorXd h = v;
    for (const auto& l : layers) {
        if (l.weight.cols() != h.size()) throw std::invalid_argument("fc_forward: shape mismatch");
        h = (l.weight * h + l.bias).unaryExpr([](double x) { return elu(x); });
    }
    return h;
}

// Neurons 1..K emit locations, K+1..2K scales, 2K+1..3K unnormalized weights.
inline MixtureParams head_forward_dlbp1(const Eigen::VectorXd& v, const HeadParams& head,
                                        const MixtureSpec& spec) {
    const auto K = static_cast<Eigen::Index>(spec.size());
    if (head.q() != 3 * K) throw std::invalid_argument("head_forward_dlbp1: head must have 3K neurons");
    if (head.weight.cols() != v.size()) throw std::invalid_argument("head_forward_dlbp1: shape mismatch");
    const Eigen::VectorXd pre = head.weight * v + head.bias;
    MixtureParams out;
    std::vector<double> raw_w(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        ComponentParams c;
        c.family = spec[static_cast<std::size_t>(k)];
        c.mu = apply_activation(head.activations[static_cast<std::size_t>(k)], pre[k]);
        c.sigma = std::max(
            apply_activation(head.activations[static_cast<std::size_t>(K + k)], pre[K + k]),
            kSigmaFloor);
        out.components.push_back(c);
        raw_w[static_cast<std::size_t>(k)] =
            apply_activation(head.activations[static_cast<std::size_t>(2 * K + k)], pre[2 * K + k]);
    }
    out.weights = normalized_weights(raw_w);
    return out;
}

// Neurons 1..K emit locations, K+1..2K unnormalized weights; scales come from
// the shared vector.
inline MixtureParams head_forward_dlbp2(const Eigen::VectorXd& v, const HeadParams& head,
                                        const MixtureSpec& spec,
                                        const std::vector<double>& shared_sigma) {
    const auto K = static_cast<Eigen::Index>(spec.size());
    if (head.q() != 2 * K) throw std::invalid_argument("head_forward_dlbp2: head must have 2K neurons");
    if (shared_sigma.size() != spec.size())
        throw std::invalid_argument("head_forward_dlbp2: shared_sigma must have K entries");
    if (head.weight.cols() != v.size()) throw std::invalid_argument("head_forward_dlbp2: shape mismatch");
    const Eigen::VectorXd pre = head.weight * v + head.bias;
    MixtureParams out;
    std::vector<double> raw_w(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        ComponentParams c;
        c.family = spec[static_cast<std::size_t>(k)];
        c.mu = apply_activation(head.activations[static_cast<std::size_t>(k)], pre[k]);
        c.sigma = shared_sigma[static_cast<std::size_t>(k)];
        out.components.push_back(c);
        raw_w[static_cast<std::size_t>(k)] =
            apply_activation(head.activations[static_cast<std::size_t>(K + k)], pre[K + k]);
    }
    out.weights = normalized_weights(raw_w);
    return out;
}

inline MixtureParams forward(const Eigen::MatrixXd& window, const ModelParams& m) {
    const Eigen::VectorXd h = lstm_forward(window, m.lstm_layers, m.output_gate);
    const Eigen::VectorXd v = fc_forward(h, m.fc_layers);
    return m.kind == ModelKind::Dlbp1
               ? head_forward_dlbp1(v, m.head, m.mixture_spec)
               : head_forward_dlbp2(v, m.head, m.mixture_spec, m.shared_sigma);
}

// ----------------------------------------------------------------------------
// Parameter traversal (fixed declared order) - used by the optimizer,
// serialization, and finite-difference checks.
// ----------------------------------------------------------------------------
template <typename Model, typename Fn>
void for_each_tensor(Model& m, Fn&& fn) {
    for (auto& l : m.lstm_layers) {
        fn(l.w_f); fn(l.w_i); fn(l.w_g); fn(l.w_o);
        fn(l.u_f); fn(l.u_i); fn(l.u_g); fn(l.u_o);
        fn(l.b_f); fn(l.b_i); fn(l.b_g); fn(l.b_o);
    }
    for (auto& f : m.fc_layers) {
        fn(f.weight);
        fn(f.bias);
    }
    fn(m.head.weight);
    fn(m.head.bias);
}

inline std::size_t parameter_count(const ModelParams& m) {
    std::size_t n = 0;
    for_each_tensor(m, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

// ----------------------------------------------------------------------------
// Model file (magic "DLBPMD01", little-endian; docs/FORMATS.md)
// ----------------------------------------------------------------------------
inline void save_model(const ModelParams& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error(path + ": cannot open for writing");
    os.write("DLBPMD01", 8);
    write_pod<std::uint32_t>(os, 1);  // version
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(m.kind));
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(m.output_gate));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.k()));
    for (auto f : m.mixture_spec) write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(f));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.window_width));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.input_dim()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.lstm_layers.size()));
    for (const auto& l : m.lstm_layers)
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.hidden()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.fc_layers.size()));
    for (const auto& f : m.fc_layers)
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(f.weight.rows()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.head.q()));
    for (auto a : m.head.activations) write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a));
    write_pod<std::uint64_t>(os, m.seed);
    write_pod<double>(os, m.rul_cap);

    // embedded normalization stats
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.stats.p()));
    for (int ks : m.stats.kept_sensors) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ks));
    write_f64s(os, m.stats.min.data(), static_cast<std::size_t>(m.stats.p()));
    write_f64s(os, m.stats.max.data(), static_cast<std::size_t>(m.stats.p()));

    // tensors in declared order, row-major
    for_each_tensor(m, [&](const auto& t) {
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) write_pod<double>(os, t(r, c));
    });
    for (double s : m.shared_sigma) write_pod<double>(os, s);
    if (!os) throw parse_error(path + ": write failed");
}

inline ModelParams load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw parse_error(path + ": cannot open");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "DLBPMD01")
        throw parse_error(path + ": not a model file (bad magic)");
    if (read_pod<std::uint32_t>(is) != 1) throw parse_error(path + ": unsupported model version");

    ModelConfig cfg;
    cfg.kind = static_cast<ModelKind>(read_pod<std::uint8_t>(is));
    const auto gate = static_cast<OutputGateActivation>(read_pod<std::uint8_t>(is));
    const auto K = read_pod<std::uint32_t>(is);
    cfg.mixture_spec.resize(K);
    for (auto& f : cfg.mixture_spec) f = static_cast<LLSFamily>(read_pod<std::uint8_t>(is));
    cfg.window_width = static_cast<int>(read_pod<std::uint32_t>(is));
    cfg.input_dim = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto n_lstm = read_pod<std::uint32_t>(is);
    cfg.lstm_units.resize(n_lstm);
    for (auto& u : cfg.lstm_units) u = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto n_fc = read_pod<std::uint32_t>(is);
    cfg.fc_units.resize(n_fc);
    for (auto& u : cfg.fc_units) u = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto q = read_pod<std::uint32_t>(is);
    cfg.head_activations.resize(q);
    for (auto& a : cfg.head_activations) a = static_cast<Activation>(read_pod<std::uint8_t>(is));
    cfg.output_gate = gate;

    const auto seed = read_pod<std::uint64_t>(is);
    const auto cap = read_pod<double>(is);

    NormalizationStats stats;
    const auto p = static_cast<Eigen::Index>(read_pod<std::uint32_t>(is));
    stats.kept_sensors.resize(static_cast<std::size_t>(p));
    for (auto& ks : stats.kept_sensors) ks = static_cast<int>(read_pod<std::uint32_t>(is));
    stats.min.resize(p);
    stats.max.resize(p);
    read_f64s(is, stats.min.data(), static_cast<std::size_t>(p));
    read_f64s(is, stats.max.data(), static_cast<std::size_t>(p));

    ModelParams m = make_model(cfg, seed);
    m.rul_cap = cap;
    m.stats = std::move(stats);
    for_each_tensor(m, [&](auto& t) {
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = read_pod<double>(is);
    });
    if (cfg.kind == ModelKind::Dlbp2) {
        for (auto& s : m.shared_sigma) s = read_pod<double>(is);
    }
    return m;
}

}  // namespace dlbp
