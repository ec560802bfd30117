// ============================================================================
// training.hpp - reverse-mode gradients of the mixture NLL through the head,
// FC stack, and LSTM layers (backpropagation through time), Adam updates,
// maximum-likelihood scale solvers, and the two training loops: plain
// gradient training (dlbp1) and the alternating weight/scale scheme (dlbp2).
//
// Gradients are accumulated over fixed 128-sample chunks merged in chunk
// order, so results are bit-identical for any thread count.
// ============================================================================
#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <numbers>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dlbp/common.hpp"
#include "dlbp/dataset.hpp"
#include "dlbp/lls.hpp"
#include "dlbp/network.hpp"

namespace dlbp {

inline constexpr int kGradChunk = 128;

// Mirrors the trainable tensors of ModelParams (shared scales are updated by
// MLE, not by gradient, and deliberately have no slot here).
struct GradientTape {
    std::vector<LstmLayerParams> lstm_layers;
    std::vector<FcLayerParams> fc_layers;
    HeadParams head;
    std::vector<Eigen::MatrixXd> input_grads;  // optional, per sample T_w x P
};

inline GradientTape make_tape(const ModelParams& m) {
    GradientTape t;
    for (const auto& l : m.lstm_layers) {
        LstmLayerParams z;
        z.w_f = Eigen::MatrixXd::Zero(l.w_f.rows(), l.w_f.cols());
        z.w_i = Eigen::MatrixXd::Zero(l.w_i.rows(), l.w_i.cols());
        z.w_g = Eigen::MatrixXd::Zero(l.w_g.rows(), l.w_g.cols());
        z.w_o = Eigen::MatrixXd::Zero(l.w_o.rows(), l.w_o.cols());
        z.u_f = Eigen::MatrixXd::Zero(l.u_f.rows(), l.u_f.cols());
        z.u_i = Eigen::MatrixXd::Zero(l.u_i.rows(), l.u_i.cols());
        z.u_g = Eigen::MatrixXd::Zero(l.u_g.rows(), l.u_g.cols());
        z.u_o = Eigen::MatrixXd::Zero(l.u_o.rows(), l.u_o.cols());
        z.b_f = Eigen::VectorXd::Zero(l.b_f.size());
        z.b_i = Eigen::VectorXd::Zero(l.b_i.size());
        z.b_g = Eigen::VectorXd::Zero(l.b_g.size());
        z.b_o = Eigen::VectorXd::Zero(l.b_o.size());
        t.lstm_layers.push_back(std::move(z));
    }
    for (const auto& f : m.fc_layers) {
        FcLayerParams z;
        z.weight = Eigen::MatrixXd::Zero(f.weight.rows(), f.weight.cols());
        z.bias = Eigen::VectorXd::Zero(f.bias.size());
        t.fc_layers.push_back(std::move(z));
    }
    t.head.weight = Eigen::MatrixXd::Zero(m.head.weight.rows(), m.head.weight.cols());
    t.head.bias = Eigen::VectorXd::Zero(m.head.bias.size());
    return t;
}

struct TensorView {
    double* data;
    std::size_t n;
};

template <typename M>
std::vector<TensorView> tensor_views(M& m) {
    std::vector<TensorView> v;
    for_each_tensor(m, [&](auto& t) { v.push_back({t.data(), static_cast<std::size_t>(t.size())}); });
    return v;
}

inline void tape_axpy(GradientTape& dst, const GradientTape& src, double scale = 1.0) {
    auto d = tensor_views(dst);
    auto s = tensor_views(const_cast<GradientTape&>(src));
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d[i].n; ++j) d[i].data[j] += scale * s[i].data[j];
    }
}

inline void tape_scale(GradientTape& t, double scale) {
    for (auto v : tensor_views(t)) {
        for (std::size_t j = 0; j < v.n; ++j) v.data[j] *= scale;
    }
}

// ----------------------------------------------------------------------------
// Batched forward/backward core
// ----------------------------------------------------------------------------
namespace detail {

inline double sigmoid_s(double v) { return sigmoid(v); }
inline double tanh_s(double v) { return std::tanh(v); }

// Per-layer activations over the whole chunk; every matrix is hidden x (T*B)
// with the block for step t at columns [t*B, (t+1)*B).
struct LstmLayerCache {
    Eigen::MatrixXd f, i, g, o, c, h;
};

struct StackCache {
    Eigen::MatrixXd x;                   // input_dim x (T*B)
    std::vector<LstmLayerCache> lstm;    // per layer
    std::vector<Eigen::MatrixXd> fc_out; // per fc layer, out x B
    Eigen::MatrixXd head_out;            // Q x B
};

inline Eigen::MatrixXd gather_inputs(const WindowedSample* const* batch, int nb, int t_w,
                                     Eigen::Index p) {
    Eigen::MatrixXd x(p, static_cast<Eigen::Index>(t_w) * nb);
    for (int b = 0; b < nb; ++b) {
        const auto& w = batch[b]->window;
        if (w.rows() != t_w || w.cols() != p)
            throw std::invalid_argument("sample window shape does not match model");
        for (int t = 0; t < t_w; ++t)
            x.col(static_cast<Eigen::Index>(t) * nb + b) = w.row(t).transpose();
    }
    return x;
}

// Runs one LSTM layer over the chunk. `keep` retains gate/state blocks for
// backprop; otherwise only the hidden sequence is produced.
inline void lstm_layer_forward(const LstmLayerParams& p, OutputGateActivation gate,
                               const Eigen::MatrixXd& x_all, int nb, LstmLayerCache& cache,
                               bool keep) {
    const auto hsz = p.hidden();
    const auto total = x_all.cols();
    const int t_w = static_cast<int>(total / nb);

    // input contributions for all steps at once
    Eigen::MatrixXd wx_f = p.w_f * x_all;
    Eigen::MatrixXd wx_i = p.w_i * x_all;
    Eigen::MatrixXd wx_g = p.w_g * x_all;
    Eigen::MatrixXd wx_o = p.w_o * x_all;

    cache.h.resize(hsz, total);
    if (keep) {
        cache.f.resize(hsz, total);
        cache.i.resize(hsz, total);
        cache.g.resize(hsz, total);
        cache.o.resize(hsz, total);
        cache.c.resize(hsz, total);
    }

    Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(hsz, nb);
    Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(hsz, nb);
    Eigen::MatrixXd pre_f(hsz, nb), pre_i(hsz, nb), pre_g(hsz, nb), pre_o(hsz, nb);
    Eigen::MatrixXd f(hsz, nb), i(hsz, nb), g(hsz, nb), o(hsz, nb), c(hsz, nb);
    for (int t = 0; t < t_w; ++t) {
        const auto col0 = static_cast<Eigen::Index>(t) * nb;
        pre_f = wx_f.middleCols(col0, nb);
        pre_f.noalias() += p.u_f * h_prev;
        pre_f.colwise() += p.b_f;
        pre_i = wx_i.middleCols(col0, nb);
        pre_i.noalias() += p.u_i * h_prev;
        pre_i.colwise() += p.b_i;
        pre_g = wx_g.middleCols(col0, nb);
        pre_g.noalias() += p.u_g * h_prev;
        pre_g.colwise() += p.b_g;
        pre_o = wx_o.middleCols(col0, nb);
        pre_o.noalias() += p.u_o * h_prev;
        pre_o.colwise() += p.b_o;

        f = pre_f.unaryExpr(&sigmoid_s);
        i = pre_i.unaryExpr(&sigmoid_s);
        g = pre_g.unaryExpr(&tanh_s);
        o = gate == OutputGateActivation::Sigmoid ? pre_o.unaryExpr(&sigmoid_s)
                                                  : pre_o.unaryExpr(&tanh_s);
        c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
        h_prev = o.cwiseProduct(c.unaryExpr(&tanh_s));
        c_prev = c;

        cache.h.middleCols(col0, nb) = h_prev;
        if (keep) {
            cache.f.middleCols(col0, nb) = f;
            cache.i.middleCols(col0, nb) = i;
            cache.g.middleCols(col0, nb) = g;
            cache.o.middleCols(col0, nb) = o;
            cache.c.middleCols(col0, nb) = c;
        }
    }
}

// forward through the whole stack; returns Q x B head outputs
inline void forward_stack(const ModelParams& m, const WindowedSample* const* batch, int nb,
                          StackCache& cache, bool keep) {
    const int t_w = m.window_width;
    cache.x = gather_inputs(batch, nb, t_w, m.input_dim());
    cache.lstm.resize(m.lstm_layers.size());
    const Eigen::MatrixXd* in = &cache.x;
    for (std::size_t l = 0; l < m.lstm_layers.size(); ++l) {
        lstm_layer_forward(m.lstm_layers[l], m.output_gate, *in, nb, cache.lstm[l], keep);
        in = &cache.lstm[l].h;
    }
    // fc input: final hidden state of the top layer
    Eigen::MatrixXd v = cache.lstm.back().h.rightCols(nb);
    cache.fc_out.clear();
    for (const auto& fc : m.fc_layers) {
        Eigen::MatrixXd z = fc.weight * v;
        z.colwise() += fc.bias;
        v = z.unaryExpr([](double a) { return elu(a); });
        cache.fc_out.push_back(v);
    }
    Eigen::MatrixXd pre = m.head.weight * v;
    pre.colwise() += m.head.bias;
    cache.head_out.resize(pre.rows(), pre.cols());
    for (Eigen::Index q = 0; q < pre.rows(); ++q) {
        const Activation a = m.head.activations[static_cast<std::size_t>(q)];
        for (Eigen::Index b = 0; b < pre.cols(); ++b)
            cache.head_out(q, b) = apply_activation(a, pre(q, b));
    }
}

// per-component log-density and its parameter derivatives
struct LogPdfGrad {
    double logf;
    double d_mu;
    double d_sigma;
};

inline LogPdfGrad component_log_pdf_grad(LLSFamily family, double y, double mu, double sigma) {
    const double ly = std::log(y);
    LogPdfGrad r{};
    switch (family) {
        case LLSFamily::LogNormal: {
            const double z = (ly - mu) / sigma;
            r.logf = -ly - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
            r.d_mu = z / sigma;
            r.d_sigma = (z * z - 1.0) / sigma;
            break;
        }
        case LLSFamily::Weibull: {
            const double lr = ly - std::log(sigma);  // mu is the shape, sigma the scale
            const double u = std::exp(mu * lr);
            r.logf = std::log(mu) - std::log(sigma) + (mu - 1.0) * lr - u;
            r.d_mu = 1.0 / mu + lr * (1.0 - u);
            r.d_sigma = mu * (u - 1.0) / sigma;
            break;
        }
        case LLSFamily::LogLogistic: {
            const double lr = ly - std::log(mu);  // mu is the scale, sigma the shape
            const double t = sigma * lr;
            const double w = sigmoid(t);
            const double log1pet = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
            r.logf = std::log(sigma) - std::log(mu) + (sigma - 1.0) * lr - 2.0 * log1pet;
            r.d_mu = sigma * (2.0 * w - 1.0) / mu;
            r.d_sigma = 1.0 / sigma + lr * (1.0 - 2.0 * w);
            break;
        }
    }
    return r;
}

struct ChunkOut {
    double loss_sum = 0.0;
    GradientTape tape;
    int bad_sample = -1;  // chunk-relative index of first non-finite loss
};

// NLL layer: emits summed loss and d(loss)/d(head output), Q x B.
inline void nll_layer(const ModelParams& m, const Eigen::MatrixXd& head_out,
                      const WindowedSample* const* batch, int nb, ChunkOut& out,
                      Eigen::MatrixXd& d_head) {
    const auto K = static_cast<Eigen::Index>(m.k());
    const bool per_sample_sigma = m.kind == ModelKind::Dlbp1;
    d_head.setZero(head_out.rows(), head_out.cols());

    std::vector<LogPdfGrad> comp(static_cast<std::size_t>(K));
    std::vector<double> lam(static_cast<std::size_t>(K));
    std::vector<bool> floored(static_cast<std::size_t>(K));
    for (int b = 0; b < nb; ++b) {
        const double y = batch[b]->target;
        double raw_sum = 0.0;
        for (Eigen::Index k = 0; k < K; ++k)
            raw_sum += head_out(per_sample_sigma ? 2 * K + k : K + k, b);
        double max_term = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < K; ++k) {
            const double mu = head_out(k, b);
            double sig;
            if (per_sample_sigma) {
                sig = head_out(K + k, b);
                floored[static_cast<std::size_t>(k)] = sig < kSigmaFloor;
                sig = std::max(sig, kSigmaFloor);
            } else {
                sig = m.shared_sigma[static_cast<std::size_t>(k)];
            }
            lam[static_cast<std::size_t>(k)] =
                head_out(per_sample_sigma ? 2 * K + k : K + k, b) / raw_sum;
            auto& c = comp[static_cast<std::size_t>(k)];
            c = component_log_pdf_grad(m.mixture_spec[static_cast<std::size_t>(k)], y, mu, sig);
            max_term = std::max(max_term, std::log(lam[static_cast<std::size_t>(k)]) + c.logf);
        }
        double sum_exp = 0.0;
        for (Eigen::Index k = 0; k < K; ++k)
            sum_exp += std::exp(std::log(lam[static_cast<std::size_t>(k)]) +
                                comp[static_cast<std::size_t>(k)].logf - max_term);
        const double log_g = max_term + std::log(sum_exp);
        if (!std::isfinite(log_g)) {
            if (out.bad_sample < 0) out.bad_sample = b;
            continue;
        }
        out.loss_sum += -log_g;
        for (Eigen::Index k = 0; k < K; ++k) {
            const auto& c = comp[static_cast<std::size_t>(k)];
            const double resp = std::exp(std::log(lam[static_cast<std::size_t>(k)]) + c.logf - log_g);
            const double ratio = std::exp(c.logf - log_g);  // f_k / g
            d_head(k, b) = -resp * c.d_mu;
            if (per_sample_sigma) {
                d_head(K + k, b) = floored[static_cast<std::size_t>(k)] ? 0.0 : -resp * c.d_sigma;
                d_head(2 * K + k, b) = (1.0 - ratio) / raw_sum;
            } else {
                d_head(K + k, b) = (1.0 - ratio) / raw_sum;
            }
        }
    }
}

inline void lstm_layer_backward(const LstmLayerParams& p, OutputGateActivation gate,
                                const Eigen::MatrixXd& x_all, const LstmLayerCache& cache,
                                const Eigen::MatrixXd& dh_ext_final,
                                const Eigen::MatrixXd* dh_ext_all, int nb, LstmLayerParams& grad,
                                Eigen::MatrixXd* dx_all) {
    const auto hsz = p.hidden();
    const auto total = cache.h.cols();
    const int t_w = static_cast<int>(total / nb);

    Eigen::MatrixXd dpre_f(hsz, total), dpre_i(hsz, total), dpre_g(hsz, total), dpre_o(hsz, total);
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(hsz, nb);
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(hsz, nb);
    Eigen::MatrixXd tc(hsz, nb), df(hsz, nb);

    for (int t = t_w - 1; t >= 0; --t) {
        const auto col0 = static_cast<Eigen::Index>(t) * nb;
        if (t == t_w - 1) dh += dh_ext_final;
        if (dh_ext_all) dh += dh_ext_all->middleCols(col0, nb);

        auto f = cache.f.middleCols(col0, nb).array();
        auto i = cache.i.middleCols(col0, nb).array();
        auto g = cache.g.middleCols(col0, nb).array();
        auto o = cache.o.middleCols(col0, nb).array();
        tc = cache.c.middleCols(col0, nb).unaryExpr(&tanh_s);

        if (gate == OutputGateActivation::Sigmoid) {
            dpre_o.middleCols(col0, nb) = (dh.array() * tc.array() * o * (1.0 - o)).matrix();
        } else {
            dpre_o.middleCols(col0, nb) = (dh.array() * tc.array() * (1.0 - o * o)).matrix();
        }
        dc.array() += dh.array() * o * (1.0 - tc.array().square());

        if (t > 0) {
            auto c_prev = cache.c.middleCols(col0 - nb, nb).array();
            dpre_f.middleCols(col0, nb) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
        } else {
            dpre_f.middleCols(col0, nb).setZero();  // c_0 = 0
        }
        dpre_i.middleCols(col0, nb) = (dc.array() * g * i * (1.0 - i)).matrix();
        dpre_g.middleCols(col0, nb) = (dc.array() * i * (1.0 - g * g)).matrix();

        // recurrent gradients for step t-1
        dh.noalias() = p.u_f.transpose() * dpre_f.middleCols(col0, nb);
        dh.noalias() += p.u_i.transpose() * dpre_i.middleCols(col0, nb);
        dh.noalias() += p.u_g.transpose() * dpre_g.middleCols(col0, nb);
        dh.noalias() += p.u_o.transpose() * dpre_o.middleCols(col0, nb);
        dc.array() *= f;
    }

    grad.w_f.noalias() += dpre_f * x_all.transpose();
    grad.w_i.noalias() += dpre_i * x_all.transpose();
    grad.w_g.noalias() += dpre_g * x_all.transpose();
    grad.w_o.noalias() += dpre_o * x_all.transpose();
    // h_{t-1} blocks are the h blocks shifted one step right
    const auto shifted = total - nb;
    grad.u_f.noalias() += dpre_f.rightCols(shifted) * cache.h.leftCols(shifted).transpose();
    grad.u_i.noalias() += dpre_i.rightCols(shifted) * cache.h.leftCols(shifted).transpose();
    grad.u_g.noalias() += dpre_g.rightCols(shifted) * cache.h.leftCols(shifted).transpose();
    grad.u_o.noalias() += dpre_o.rightCols(shifted) * cache.h.leftCols(shifted).transpose();
    grad.b_f += dpre_f.rowwise().sum();
    grad.b_i += dpre_i.rowwise().sum();
    grad.b_g += dpre_g.rowwise().sum();
    grad.b_o += dpre_o.rowwise().sum();

    if (dx_all) {
        dx_all->noalias() = p.w_f.transpose() * dpre_f;
        dx_all->noalias() += p.w_i.transpose() * dpre_i;
        dx_all->noalias() += p.w_g.transpose() * dpre_g;
        dx_all->noalias() += p.w_o.transpose() * dpre_o;
    }
}

inline void backward_stack(const ModelParams& m, const StackCache& cache,
                           const Eigen::MatrixXd& d_head, int nb, GradientTape& tape,
                           std::vector<Eigen::MatrixXd>* input_grads) {
    // head
    Eigen::MatrixXd dpre = d_head;
    for (Eigen::Index q = 0; q < dpre.rows(); ++q) {
        const Activation a = m.head.activations[static_cast<std::size_t>(q)];
        for (Eigen::Index b = 0; b < dpre.cols(); ++b)
            dpre(q, b) *= activation_deriv_from_output(a, cache.head_out(q, b));
    }
    const Eigen::MatrixXd& head_in =
        m.fc_layers.empty() ? cache.lstm.back().h.rightCols(nb) : cache.fc_out.back();
    tape.head.weight.noalias() += dpre * head_in.transpose();
    tape.head.bias += dpre.rowwise().sum();
    Eigen::MatrixXd dv = m.head.weight.transpose() * dpre;

    // fc stack
    for (int l = static_cast<int>(m.fc_layers.size()) - 1; l >= 0; --l) {
        const auto& out = cache.fc_out[static_cast<std::size_t>(l)];
        Eigen::MatrixXd dz(dv.rows(), dv.cols());
        dz = (dv.array() * out.unaryExpr([](double v) {
                               return activation_deriv_from_output(Activation::Elu, v);
                           }).array())
                 .matrix();
        const Eigen::MatrixXd& in =
            l == 0 ? Eigen::MatrixXd(cache.lstm.back().h.rightCols(nb))
                   : cache.fc_out[static_cast<std::size_t>(l - 1)];
        tape.fc_layers[static_cast<std::size_t>(l)].weight.noalias() += dz * in.transpose();
        tape.fc_layers[static_cast<std::size_t>(l)].bias += dz.rowwise().sum();
        dv = m.fc_layers[static_cast<std::size_t>(l)].weight.transpose() * dz;
    }

    // lstm stack, top down; dv is the gradient on the top layer's final h
    Eigen::MatrixXd dh_ext_all;
    bool have_ext = false;
    for (int l = static_cast<int>(m.lstm_layers.size()) - 1; l >= 0; --l) {
        const Eigen::MatrixXd& x_all =
            l == 0 ? cache.x : cache.lstm[static_cast<std::size_t>(l - 1)].h;
        const bool want_dx = l > 0 || input_grads != nullptr;
        Eigen::MatrixXd dx;
        const Eigen::MatrixXd dh_final =
            l == static_cast<int>(m.lstm_layers.size()) - 1
                ? dv
                : Eigen::MatrixXd::Zero(m.lstm_layers[static_cast<std::size_t>(l)].hidden(), nb);
        lstm_layer_backward(m.lstm_layers[static_cast<std::size_t>(l)], m.output_gate, x_all,
                            cache.lstm[static_cast<std::size_t>(l)], dh_final,
                            have_ext ? &dh_ext_all : nullptr, nb,
                            tape.lstm_layers[static_cast<std::size_t>(l)], want_dx ? &dx : nullptr);
        dh_ext_all = std::move(dx);
        have_ext = true;
    }

    if (input_grads) {
        const int t_w = m.window_width;
        for (int b = 0; b < nb; ++b) {
            Eigen::MatrixXd g(t_w, m.input_dim());
            for (int t = 0; t < t_w; ++t)
                g.row(t) = dh_ext_all.col(static_cast<Eigen::Index>(t) * nb + b);
            (*input_grads)[static_cast<std::size_t>(b)] = std::move(g);
        }
    }
}

inline ChunkOut chunk_loss_grad(const ModelParams& m, const WindowedSample* const* batch, int nb,
                                bool want_grad, std::vector<Eigen::MatrixXd>* input_grads) {
    ChunkOut out;
    StackCache cache;
    forward_stack(m, batch, nb, cache, want_grad);
    Eigen::MatrixXd d_head;
    nll_layer(m, cache.head_out, batch, nb, out, d_head);
    if (want_grad && out.bad_sample < 0) {
        out.tape = make_tape(m);
        backward_stack(m, cache, d_head, nb, out.tape, input_grads);
    }
    return out;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Public batched loss/gradient
// ----------------------------------------------------------------------------
struct LossGrad {
    double loss = 0.0;
    GradientTape tape;
};

struct BatchOptions {
    int threads = 1;
    bool collect_input_grads = false;
};

inline LossGrad loss_and_grad(const std::vector<const WindowedSample*>& batch,
                              const ModelParams& m, const BatchOptions& opts = {}) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    for (const auto* s : batch) {
        if (!s->has_target() || !(s->target > 0.0))
            throw std::invalid_argument("loss_and_grad: every sample needs a positive target");
    }
    const int n = static_cast<int>(batch.size());
    const int n_chunks = (n + kGradChunk - 1) / kGradChunk;

    std::vector<detail::ChunkOut> outs(static_cast<std::size_t>(n_chunks));
    std::vector<std::vector<Eigen::MatrixXd>> chunk_igrads(static_cast<std::size_t>(n_chunks));

    auto run_chunk = [&](int ci) {
        const int lo = ci * kGradChunk;
        const int nb = std::min(kGradChunk, n - lo);
        std::vector<Eigen::MatrixXd>* ig = nullptr;
        if (opts.collect_input_grads) {
            chunk_igrads[static_cast<std::size_t>(ci)].resize(static_cast<std::size_t>(nb));
            ig = &chunk_igrads[static_cast<std::size_t>(ci)];
        }
        outs[static_cast<std::size_t>(ci)] =
            detail::chunk_loss_grad(m, batch.data() + lo, nb, true, ig);
    };

    if (opts.threads <= 1 || n_chunks == 1) {
        for (int ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<int> next{0};
        const int workers = std::min(opts.threads, n_chunks);
        for (int w = 0; w < workers; ++w) {
            futs.push_back(std::async(std::launch::async, [&]() {
                for (int ci = next.fetch_add(1); ci < n_chunks; ci = next.fetch_add(1)) run_chunk(ci);
            }));
        }
        for (auto& f : futs) f.get();
    }

    // merge in fixed chunk order
    LossGrad lg;
    lg.tape = make_tape(m);
    for (int ci = 0; ci < n_chunks; ++ci) {
        const auto& o = outs[static_cast<std::size_t>(ci)];
        if (o.bad_sample >= 0) {
            const auto* s = batch[static_cast<std::size_t>(ci * kGradChunk + o.bad_sample)];
            throw numeric_error("non-finite loss at sample asset=" + std::to_string(s->asset_id) +
                                " window=" + std::to_string(s->window_index));
        }
        lg.loss += o.loss_sum;
        tape_axpy(lg.tape, o.tape);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    lg.loss *= inv_n;
    tape_scale(lg.tape, inv_n);
    if (opts.collect_input_grads) {
        lg.tape.input_grads.reserve(static_cast<std::size_t>(n));
        for (auto& cg : chunk_igrads) {
            for (auto& g : cg) {
                g *= inv_n;
                lg.tape.input_grads.push_back(std::move(g));
            }
        }
    }
    return lg;
}

inline double batch_nll(const std::vector<const WindowedSample*>& batch, const ModelParams& m) {
    if (batch.empty()) throw std::invalid_argument("batch_nll: empty batch");
    double loss = 0.0;
    const int n = static_cast<int>(batch.size());
    for (int lo = 0; lo < n; lo += kGradChunk) {
        const int nb = std::min(kGradChunk, n - lo);
        auto out = detail::chunk_loss_grad(m, batch.data() + lo, nb, false, nullptr);
        if (out.bad_sample >= 0) {
            const auto* s = batch[static_cast<std::size_t>(lo + out.bad_sample)];
            throw numeric_error("non-finite loss at sample asset=" + std::to_string(s->asset_id) +
                                " window=" + std::to_string(s->window_index));
        }
        loss += out.loss_sum;
    }
    return loss / n;
}

// Per-sample head parameters over a sample set (used by the shared-scale
// model's MLE pass and by batched evaluation).
struct HeadOutputs {
    Eigen::MatrixXd mu;      // n x K
    Eigen::MatrixXd sigma;   // n x K (per-sample for dlbp1, broadcast shared for dlbp2)
    Eigen::MatrixXd lambda;  // n x K, normalized
};

inline HeadOutputs batched_head_outputs(const std::vector<const WindowedSample*>& samples,
                                        const ModelParams& m) {
    const auto K = static_cast<Eigen::Index>(m.k());
    const int n = static_cast<int>(samples.size());
    HeadOutputs ho;
    ho.mu.resize(n, K);
    ho.sigma.resize(n, K);
    ho.lambda.resize(n, K);
    for (int lo = 0; lo < n; lo += kGradChunk) {
        const int nb = std::min(kGradChunk, n - lo);
        detail::StackCache cache;
        detail::forward_stack(m, samples.data() + lo, nb, cache, false);
        for (int b = 0; b < nb; ++b) {
            double raw_sum = 0.0;
            for (Eigen::Index k = 0; k < K; ++k)
                raw_sum += cache.head_out(m.kind == ModelKind::Dlbp1 ? 2 * K + k : K + k, b);
            for (Eigen::Index k = 0; k < K; ++k) {
                ho.mu(lo + b, k) = cache.head_out(k, b);
                ho.sigma(lo + b, k) =
                    m.kind == ModelKind::Dlbp1
                        ? std::max(cache.head_out(K + k, b), kSigmaFloor)
                        : m.shared_sigma[static_cast<std::size_t>(k)];
                ho.lambda(lo + b, k) =
                    cache.head_out(m.kind == ModelKind::Dlbp1 ? 2 * K + k : K + k, b) / raw_sum;
            }
        }
    }
    return ho;
}

// ----------------------------------------------------------------------------
// Adam
// ----------------------------------------------------------------------------
struct AdamState {
    GradientTape m;  // first moment
    GradientTape v;  // second moment
    long t = 0;
};

inline AdamState make_adam_state(const ModelParams& model) {
    return AdamState{make_tape(model), make_tape(model), 0};
}

inline void adam_step(ModelParams& model, const GradientTape& grad, AdamState& st, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
    ++st.t;
    auto p = tensor_views(model);
    auto g = tensor_views(const_cast<GradientTape&>(grad));
    auto mo = tensor_views(st.m);
    auto vo = tensor_views(st.v);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p[i].n; ++j) {
            const double gj = g[i].data[j];
            double& mj = mo[i].data[j];
            double& vj = vo[i].data[j];
            mj = beta1 * mj + (1.0 - beta1) * gj;
            vj = beta2 * vj + (1.0 - beta2) * gj * gj;
            p[i].data[j] -= lr * (mj / c1) / (std::sqrt(vj / c2) + epsilon);
        }
    }
}

// ----------------------------------------------------------------------------
// Scale MLE solvers (shared-scale model). Each sigma_k is the stationary
// point of the per-component log-likelihood in sigma given fixed locations.
// ----------------------------------------------------------------------------
struct SolverDiagnostics {
    int newton_iterations = 0;
    bool used_bisection = false;
    double residual = 0.0;
};

inline double mle_sigma_lognormal(const std::vector<double>& targets,
                                  const std::vector<double>& locations,
                                  const std::vector<double>* weights = nullptr) {
    if (targets.empty()) throw std::invalid_argument("mle_sigma_lognormal: empty input");
    if (targets.size() != locations.size())
        throw std::invalid_argument("mle_sigma_lognormal: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        const double r = std::log(targets[i]) - locations[i];
        num += w * r * r;
        den += w;
    }
    if (den <= 0.0) throw std::invalid_argument("mle_sigma_lognormal: zero total weight");
    return std::sqrt(num / den);
}

namespace detail {

// Newton-Raphson with damped steps and a bisection fallback on
// [1e-6, 10*max(y)]. fn must be evaluable on (0, inf); root_tol is on |fn|.
// Iterates escaping the bracket count as leaving the domain, so a function
// with no root inside it surfaces as a bracket failure instead of a runaway
// pseudo-root.
template <typename F>
double newton_with_bisection(F&& fn, double init, double bracket_hi, double root_tol,
                             SolverDiagnostics* diag, const char* what) {
    constexpr int kMaxIter = 100;
    constexpr double kBracketLo = 1e-6;

    double x = (init > 0.0 && init <= bracket_hi) ? init : 1.0;
    auto [h, hp] = fn(x);
    bool newton_ok = std::isfinite(h) && std::isfinite(hp);
    int it = 0;
    for (; newton_ok && it < kMaxIter && std::abs(h) >= root_tol; ++it) {
        if (hp == 0.0) {
            newton_ok = false;
            break;
        }
        double step = -h / hp;
        double x_new = x + step;
        double h_new = std::numeric_limits<double>::infinity(), hp_new = 0.0;
        int halvings = 0;
        // damp until the iterate stays inside the domain and |h| decreases
        while (halvings < 60) {
            if (x_new > 0.0 && x_new <= bracket_hi) {
                std::tie(h_new, hp_new) = fn(x_new);
                if (std::isfinite(h_new) && std::abs(h_new) < std::abs(h)) break;
            }
            step *= 0.5;
            x_new = x + step;
            ++halvings;
        }
        if (halvings >= 60) {
            newton_ok = false;
            break;
        }
        x = x_new;
        h = h_new;
        hp = hp_new;
    }
    if (diag) diag->newton_iterations = it;
    if (newton_ok && std::abs(h) < root_tol) {
        if (diag) diag->residual = h;
        return x;
    }

    // bisection fallback; infinities count with their sign for bracketing
    if (diag) diag->used_bisection = true;
    double lo = kBracketLo, hi = bracket_hi;
    double f_lo = std::get<0>(fn(lo));
    double f_hi = std::get<0>(fn(hi));
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;
    if (std::isnan(f_lo) || std::isnan(f_hi) || (f_lo > 0.0) == (f_hi > 0.0)) {
        throw solver_error(std::string(what) + ": no sign change on bracket [" +
                           fmt_double(lo) + ", " + fmt_double(hi) + "] (f(lo)=" + fmt_double(f_lo) +
                           ", f(hi)=" + fmt_double(f_hi) + ")");
    }
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = std::get<0>(fn(mid));
        if (std::abs(f_mid) < root_tol || (hi - lo) < 1e-15 * hi) {
            if (diag) diag->residual = f_mid;
            return mid;
        }
        if ((f_mid > 0) == (f_lo > 0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    const double mid = 0.5 * (lo + hi);
    if (diag) diag->residual = std::get<0>(fn(mid));
    return mid;
}

}  // namespace detail

// Weibull scale: root of h(sigma) = sum_i mu_i (sigma^mu_i - y_i^mu_i) / sigma^(mu_i+1),
// where mu_i are the per-sample shapes.
inline double solve_sigma_weibull(const std::vector<double>& targets,
                                  const std::vector<double>& shapes, double init,
                                  const std::vector<double>* weights = nullptr,
                                  SolverDiagnostics* diag = nullptr) {
    if (targets.empty()) throw std::invalid_argument("solve_sigma_weibull: empty input");
    if (targets.size() != shapes.size())
        throw std::invalid_argument("solve_sigma_weibull: length mismatch");
    double y_max = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!(targets[i] > 0.0) || !(shapes[i] > 0.0))
            throw std::invalid_argument("solve_sigma_weibull: targets and shapes must be > 0");
        y_max = std::max(y_max, targets[i]);
    }
    auto fn = [&](double sigma) {
        const double ls = std::log(sigma);
        double sum_mu = 0.0, sum_mu_e = 0.0, sum_mu2_e = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double w = weights ? (*weights)[i] : 1.0;
            const double t = shapes[i] * (std::log(targets[i]) - ls);
            const double e = std::exp(t);
            sum_mu += w * shapes[i];
            sum_mu_e += w * shapes[i] * e;
            sum_mu2_e += w * shapes[i] * shapes[i] * e;
        }
        const double h = (sum_mu - sum_mu_e) / sigma;
        const double hp = (-sum_mu + sum_mu_e + sum_mu2_e) / (sigma * sigma);
        return std::make_pair(h, hp);
    };
    return detail::newton_with_bisection(fn, init, 10.0 * y_max, 1e-10, diag,
                                         "solve_sigma_weibull");
}

// Log-logistic shape: root of
// s(sigma) = sum_i log(y_i/mu_i) [1 - 2 v_i/(1+v_i)] + n/sigma, v_i = (y_i/mu_i)^sigma.
// s is strictly decreasing; v/(1+v) = sigmoid(sigma log(y/mu)) keeps it stable.
inline double solve_sigma_loglogistic(const std::vector<double>& targets,
                                      const std::vector<double>& scales, double init,
                                      const std::vector<double>* weights = nullptr,
                                      SolverDiagnostics* diag = nullptr) {
    if (targets.empty()) throw std::invalid_argument("solve_sigma_loglogistic: empty input");
    if (targets.size() != scales.size())
        throw std::invalid_argument("solve_sigma_loglogistic: length mismatch");
    double y_max = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!(targets[i] > 0.0) || !(scales[i] > 0.0))
            throw std::invalid_argument("solve_sigma_loglogistic: targets and scales must be > 0");
        y_max = std::max(y_max, targets[i]);
    }
    auto fn = [&](double sigma) {
        double s = 0.0, sp = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double w = weights ? (*weights)[i] : 1.0;
            const double L = std::log(targets[i]) - std::log(scales[i]);
            const double q = sigmoid(sigma * L);
            s += w * L * (1.0 - 2.0 * q);
            sp += -2.0 * w * L * L * q * (1.0 - q);
            wsum += w;
        }
        s += wsum / sigma;
        sp += -wsum / (sigma * sigma);
        return std::make_pair(s, sp);
    };
    return detail::newton_with_bisection(fn, init, 10.0 * y_max, 1e-10, diag,
                                         "solve_sigma_loglogistic");
}

// ----------------------------------------------------------------------------
// Training configuration and loops
// ----------------------------------------------------------------------------
struct TrainConfig {
    ModelKind kind = ModelKind::Dlbp1;
    MixtureSpec mixture_spec;
    int window_width = 30;
    std::vector<int> lstm_units = {128};
    std::vector<int> fc_units = {64};
    int batch_size = 512;
    int epochs = 200;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 1;
    OutputGateActivation output_gate = OutputGateActivation::Sigmoid;
    std::vector<Activation> head_activations;  // empty = per-family defaults
    int threads = 1;

    // shared-scale model only
    int outer_iterations = 20;  // I
    double tolerance = 1e-4;    // epsilon
    int inner_epochs = 0;       // E; 0 = ceil(epochs / I)
    bool sigma_init_literal = false;
    bool weighted_scale_mle = false;

    void check() const {
        if (mixture_spec.empty()) throw config_error("mixture spec must have K >= 1 components");
        if (batch_size < 1) throw config_error("batch size must be >= 1");
        if (epochs < 1) throw config_error("epochs must be >= 1");
        if (!(learning_rate >= 0.0)) throw config_error("learning rate must be >= 0");
        if (!(tolerance > 0.0)) throw config_error("tolerance must be > 0");
        if (outer_iterations < 1) throw config_error("outer iterations must be >= 1");
        if (window_width < 1) throw config_error("window width must be >= 1");
    }
};

struct OuterRecord {
    int iteration = 0;
    double loss = 0.0;           // mean training loss of the iteration's last inner epoch
    std::vector<double> sigma;   // shared scales after the update
    double delta_stat = 0.0;     // (1/K) sum_k (sigma_k^(j) - sigma_k^(j-1))^2
};

struct TrainResult {
    ModelParams model;
    std::vector<double> epoch_loss;
    std::vector<OuterRecord> outer_history;  // shared-scale model only
    std::vector<std::string> warnings;
};

namespace detail {

inline void check_training_samples(const std::vector<WindowedSample>& samples,
                                   const TrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("training requires at least one sample");
    for (const auto& s : samples) {
        if (!s.has_target() || !(s.target > 0.0))
            throw std::invalid_argument("training sample asset=" + std::to_string(s.asset_id) +
                                        " window=" + std::to_string(s.window_index) +
                                        " lacks a positive target");
        if (s.window.rows() != cfg.window_width)
            throw config_error("sample window width " + std::to_string(s.window.rows()) +
                               " does not match configured T_w " +
                               std::to_string(cfg.window_width));
    }
}

// one epoch of shuffled mini-batch Adam; returns the epoch's mean loss
inline double run_epoch(const std::vector<WindowedSample>& samples, std::vector<std::size_t>& idx,
                        Rng& shuffle_rng, ModelParams& model, AdamState& adam,
                        const TrainConfig& cfg) {
    fisher_yates(idx, shuffle_rng);
    const std::size_t n = samples.size();
    double loss_sum = 0.0;
    std::vector<const WindowedSample*> batch;
    for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.batch_size));
        batch.clear();
        for (std::size_t i = lo; i < hi; ++i) batch.push_back(&samples[idx[i]]);
        auto lg = loss_and_grad(batch, model, BatchOptions{cfg.threads, false});
        adam_step(model, lg.tape, adam, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_epsilon);
        loss_sum += lg.loss * static_cast<double>(hi - lo);
    }
    return loss_sum / static_cast<double>(n);
}

inline ModelParams init_model(const std::vector<WindowedSample>& samples, const TrainConfig& cfg) {
    ModelConfig mc;
    mc.kind = cfg.kind;
    mc.mixture_spec = cfg.mixture_spec;
    mc.window_width = cfg.window_width;
    mc.input_dim = static_cast<int>(samples.front().window.cols());
    mc.lstm_units = cfg.lstm_units;
    mc.fc_units = cfg.fc_units;
    mc.output_gate = cfg.output_gate;
    mc.head_activations = cfg.head_activations;
    return make_model(mc, cfg.seed);
}

}  // namespace detail

inline TrainResult train_dlbp1(const std::vector<WindowedSample>& samples, const TrainConfig& cfg) {
    cfg.check();
    if (cfg.kind != ModelKind::Dlbp1) throw config_error("train_dlbp1 requires model kind dlbp1");
    detail::check_training_samples(samples, cfg);

    TrainResult res;
    res.model = detail::init_model(samples, cfg);
    AdamState adam = make_adam_state(res.model);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5u));
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int e = 0; e < cfg.epochs; ++e) {
        res.epoch_loss.push_back(
            detail::run_epoch(samples, idx, shuffle_rng, res.model, adam, cfg));
    }
    return res;
}

// Applies the per-family MLE update to each component given per-sample
// locations (and, for the mixed log-normal/Weibull spec, dispatches per
// component family). Optional weights give the EM-style variant.
inline std::vector<double> update_shared_sigmas(const MixtureSpec& spec,
                                                const std::vector<double>& targets,
                                                const Eigen::MatrixXd& mu_hat,
                                                const std::vector<double>& prev_sigma,
                                                const Eigen::MatrixXd* responsibility = nullptr,
                                                std::vector<std::string>* warnings = nullptr) {
    const auto K = spec.size();
    std::vector<double> out(K);
    const auto n = targets.size();
    std::vector<double> locs(n), w;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < n; ++i) locs[i] = mu_hat(static_cast<Eigen::Index>(i),
                                                            static_cast<Eigen::Index>(k));
        const std::vector<double>* wp = nullptr;
        if (responsibility) {
            w.resize(n);
            double wsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                w[i] = (*responsibility)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                wsum += w[i];
            }
            if (wsum < 1e-9 * static_cast<double>(n)) {
                // dead component under the weighted variant: keep its scale
                if (warnings)
                    warnings->push_back("component " + std::to_string(k) +
                                        " carries ~zero responsibility; scale kept at " +
                                        fmt_double(prev_sigma[k]));
                out[k] = prev_sigma[k];
                continue;
            }
            wp = &w;
        }
        switch (spec[k]) {
            case LLSFamily::LogNormal:
                out[k] = std::max(mle_sigma_lognormal(targets, locs, wp), kSigmaFloor);
                break;
            case LLSFamily::Weibull:
                out[k] = solve_sigma_weibull(targets, locs, prev_sigma[k], wp);
                break;
            case LLSFamily::LogLogistic: {
                double root = solve_sigma_loglogistic(targets, locs, prev_sigma[k], wp);
                if (root <= 1.0) {
                    if (warnings)
                        warnings->push_back("loglogistic component " + std::to_string(k) +
                                            ": MLE shape " + fmt_double(root) +
                                            " <= 1 projected to 1+1e-6 for mean validity");
                    root = 1.0 + 1e-6;
                }
                out[k] = root;
                break;
            }
        }
    }
    return out;
}

inline TrainResult train_dlbp2(const std::vector<WindowedSample>& samples, const TrainConfig& cfg) {
    cfg.check();
    if (cfg.kind != ModelKind::Dlbp2) throw config_error("train_dlbp2 requires model kind dlbp2");
    detail::check_training_samples(samples, cfg);

    TrainResult res;
    res.model = detail::init_model(samples, cfg);

    // sigma^(0) ~ Uniform(0,1); log-logistic components start in Uniform(1,2)
    // unless the literal initialization was requested
    Rng sigma_rng(derive_seed(cfg.seed, 0xD2u));
    for (std::size_t k = 0; k < res.model.k(); ++k) {
        double s0 = uniform01(sigma_rng);
        if (!cfg.sigma_init_literal && cfg.mixture_spec[k] == LLSFamily::LogLogistic) s0 += 1.0;
        res.model.shared_sigma[k] = s0;
    }

    const int inner =
        cfg.inner_epochs > 0
            ? cfg.inner_epochs
            : static_cast<int>((cfg.epochs + cfg.outer_iterations - 1) / cfg.outer_iterations);

    AdamState adam = make_adam_state(res.model);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5u));
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<const WindowedSample*> all;
    all.reserve(samples.size());
    for (const auto& s : samples) all.push_back(&s);
    std::vector<double> targets(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) targets[i] = samples[i].target;

    for (int j = 1; j <= cfg.outer_iterations; ++j) {
        double last_loss = 0.0;
        for (int e = 0; e < inner; ++e) {
            last_loss = detail::run_epoch(samples, idx, shuffle_rng, res.model, adam, cfg);
            res.epoch_loss.push_back(last_loss);
        }

        HeadOutputs ho = batched_head_outputs(all, res.model);

        const Eigen::MatrixXd* resp_ptr = nullptr;
        Eigen::MatrixXd resp;
        if (cfg.weighted_scale_mle) {
            // posterior responsibilities under the current parameters
            resp.resize(ho.mu.rows(), ho.mu.cols());
            for (Eigen::Index i = 0; i < ho.mu.rows(); ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index k = 0; k < ho.mu.cols(); ++k) {
                    const auto lg = detail::component_log_pdf_grad(
                        cfg.mixture_spec[static_cast<std::size_t>(k)], targets[static_cast<std::size_t>(i)],
                        ho.mu(i, k), ho.sigma(i, k));
                    resp(i, k) = std::log(ho.lambda(i, k)) + lg.logf;
                    mx = std::max(mx, resp(i, k));
                }
                double s = 0.0;
                for (Eigen::Index k = 0; k < ho.mu.cols(); ++k) s += std::exp(resp(i, k) - mx);
                const double lse = mx + std::log(s);
                for (Eigen::Index k = 0; k < ho.mu.cols(); ++k)
                    resp(i, k) = std::exp(resp(i, k) - lse);
            }
            resp_ptr = &resp;
        }

        std::vector<double> sigma_new;
        try {
            sigma_new = update_shared_sigmas(cfg.mixture_spec, targets, ho.mu,
                                             res.model.shared_sigma, resp_ptr, &res.warnings);
        } catch (const solver_error& e) {
            throw solver_error("outer iteration " + std::to_string(j) + ": " + e.what());
        }

        double stat = 0.0;
        for (std::size_t k = 0; k < sigma_new.size(); ++k) {
            const double d = sigma_new[k] - res.model.shared_sigma[k];
            stat += d * d;
        }
        stat /= static_cast<double>(sigma_new.size());
        res.model.shared_sigma = sigma_new;
        res.outer_history.push_back(OuterRecord{j, last_loss, sigma_new, stat});
        if (stat < cfg.tolerance) break;
    }
    return res;
}

}  // namespace dlbp
