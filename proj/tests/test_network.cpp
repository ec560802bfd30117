#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "dlbp/network.hpp"
#include "test_support.hpp"

using namespace dlbp;

namespace {

LstmLayerParams zero_lstm(int hidden, int input) {
    LstmLayerParams p;
    p.w_f = p.w_i = p.w_g = p.w_o = Eigen::MatrixXd::Zero(hidden, input);
    p.u_f = p.u_i = p.u_g = p.u_o = Eigen::MatrixXd::Zero(hidden, hidden);
    p.b_f = p.b_i = p.b_g = p.b_o = Eigen::VectorXd::Zero(hidden);
    return p;
}

ModelParams random_model(ModelKind kind, const MixtureSpec& spec, int t_w, int p,
                         std::uint64_t seed, std::vector<int> lstm_units = {4},
                         std::vector<int> fc_units = {5}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.mixture_spec = spec;
    cfg.window_width = t_w;
    cfg.input_dim = p;
    cfg.lstm_units = std::move(lstm_units);
    cfg.fc_units = std::move(fc_units);
    return make_model(cfg, seed);
}

}  // namespace

TEST_CASE("scalar activations") {
    CHECK(softplus(0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(elu(0.0) == 0.0);
    CHECK(elu(2.5) == 2.5);
    CHECK(elu(-1.0) == Catch::Approx(std::exp(-1.0) - 1.0).epsilon(1e-14));
    // approaches 1 from above; below about -36 the increment rounds away
    CHECK(softplus_plus_one(-30.0) > 1.0);
    CHECK(softplus_plus_one(-30.0) == Catch::Approx(1.0).margin(1e-12));
    // overflow-safe branches
    CHECK(softplus(800.0) == 800.0);
    CHECK(std::isfinite(sigmoid(-800.0)));

    SECTION("derivative-from-output identities") {
        Rng rng(1);
        for (int i = 0; i < 200; ++i) {
            const double x = uniform(rng, -6.0, 6.0);
            const double h = 1e-6;
            for (auto a : {Activation::Elu, Activation::Softplus, Activation::SoftplusPlusOne,
                           Activation::Sigmoid, Activation::Identity}) {
                const double fd =
                    (apply_activation(a, x + h) - apply_activation(a, x - h)) / (2.0 * h);
                const double an = activation_deriv_from_output(a, apply_activation(a, x));
                CHECK(an == Catch::Approx(fd).margin(1e-8));
            }
        }
    }
}

TEST_CASE("lstm cell") {
    SECTION("all-zero parameters pin the state at zero") {
        auto p = zero_lstm(3, 2);
        Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.7);
        auto s = lstm_cell(x, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), p);
        CHECK(s.h.isZero());
        CHECK(s.c.isZero());
    }
    SECTION("single step matches a scalar hand computation") {
        LstmLayerParams p = zero_lstm(2, 2);
        p.w_f << 0.1, -0.2, 0.3, 0.4;
        p.w_i << -0.5, 0.6, 0.7, -0.8;
        p.w_g << 0.9, 0.1, -0.2, 0.3;
        p.w_o << 0.4, 0.5, -0.6, 0.7;
        p.u_f << 0.11, 0.12, 0.13, 0.14;
        p.u_i << -0.15, 0.16, 0.17, 0.18;
        p.u_g << 0.19, -0.21, 0.22, 0.23;
        p.u_o << 0.24, 0.25, -0.26, 0.27;
        p.b_f << 0.01, -0.02;
        p.b_i << 0.03, 0.04;
        p.b_g << -0.05, 0.06;
        p.b_o << 0.07, 0.08;
        Eigen::VectorXd x(2), h0(2), c0(2);
        x << 0.5, -0.3;
        h0 << 0.2, -0.1;
        c0 << 0.05, 0.15;

        auto s = lstm_cell(x, h0, c0, p);

        auto sg = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        for (int r = 0; r < 2; ++r) {
            const double pre_f = p.w_f(r, 0) * x(0) + p.w_f(r, 1) * x(1) + p.u_f(r, 0) * h0(0) +
                                 p.u_f(r, 1) * h0(1) + p.b_f(r);
            const double pre_i = p.w_i(r, 0) * x(0) + p.w_i(r, 1) * x(1) + p.u_i(r, 0) * h0(0) +
                                 p.u_i(r, 1) * h0(1) + p.b_i(r);
            const double pre_g = p.w_g(r, 0) * x(0) + p.w_g(r, 1) * x(1) + p.u_g(r, 0) * h0(0) +
                                 p.u_g(r, 1) * h0(1) + p.b_g(r);
            const double pre_o = p.w_o(r, 0) * x(0) + p.w_o(r, 1) * x(1) + p.u_o(r, 0) * h0(0) +
                                 p.u_o(r, 1) * h0(1) + p.b_o(r);
            const double c = sg(pre_f) * c0(r) + sg(pre_i) * std::tanh(pre_g);
            const double h = sg(pre_o) * std::tanh(c);
            CHECK(s.c(r) == Catch::Approx(c).epsilon(1e-14));
            CHECK(s.h(r) == Catch::Approx(h).epsilon(1e-14));
        }

        SECTION("tanh output-gate variant differs only through o") {
            auto s2 = lstm_cell(x, h0, c0, p, OutputGateActivation::Tanh);
            CHECK(s2.c == s.c);
            for (int r = 0; r < 2; ++r) {
                const double pre_o = p.w_o(r, 0) * x(0) + p.w_o(r, 1) * x(1) + p.u_o(r, 0) * h0(0) +
                                     p.u_o(r, 1) * h0(1) + p.b_o(r);
                CHECK(s2.h(r) == Catch::Approx(std::tanh(pre_o) * std::tanh(s.c(r))).epsilon(1e-14));
            }
        }
    }
    SECTION("saturated forget gate with closed input gate carries state") {
        auto p = zero_lstm(2, 1);
        p.b_f = Eigen::VectorXd::Constant(2, 40.0);   // f ~ 1
        p.b_i = Eigen::VectorXd::Constant(2, -40.0);  // i ~ 0
        Eigen::VectorXd c0(2);
        c0 << 0.8, -0.4;
        auto s = lstm_cell(Eigen::VectorXd::Constant(1, 0.9), Eigen::VectorXd::Zero(2), c0, p);
        CHECK(s.c(0) == Catch::Approx(0.8).epsilon(1e-12));
        CHECK(s.c(1) == Catch::Approx(-0.4).epsilon(1e-12));
    }
    SECTION("shape mismatch rejected") {
        auto p = zero_lstm(2, 3);
        CHECK_THROWS_AS(lstm_cell(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                                  Eigen::VectorXd::Zero(2), p),
                        std::invalid_argument);
    }
}

TEST_CASE("lstm forward") {
    SECTION("T_w = 1 reduces to one cell application") {
        auto m = random_model(ModelKind::Dlbp1, {LLSFamily::LogNormal}, 1, 3, 5);
        Eigen::MatrixXd w(1, 3);
        w << 0.2, -0.4, 0.6;
        auto via_forward = lstm_forward(w, m.lstm_layers);
        auto via_cell = lstm_cell(w.row(0).transpose(), Eigen::VectorXd::Zero(4),
                                  Eigen::VectorXd::Zero(4), m.lstm_layers[0]);
        CHECK(via_forward == via_cell.h);
    }
    SECTION("zero window with zero params gives the zero vector") {
        std::vector<LstmLayerParams> layers = {zero_lstm(3, 2)};
        CHECK(lstm_forward(Eigen::MatrixXd::Zero(5, 2), layers).isZero());
    }
    SECTION("leading zero padding preserves the output when b_g = 0") {
        // zero state is a fixed point under zero input while the g-bias is
        // zero, which is exactly how models are initialized
        auto m = random_model(ModelKind::Dlbp1, {LLSFamily::LogNormal}, 8, 3, 17, {4, 3});
        Eigen::MatrixXd data = Eigen::MatrixXd::Random(5, 3);
        Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(8, 3);
        padded.bottomRows(5) = data;
        auto out_padded = lstm_forward(padded, m.lstm_layers);
        auto out_short = lstm_forward(data, m.lstm_layers);
        CHECK((out_padded - out_short).lpNorm<Eigen::Infinity>() < 1e-14);

        Eigen::MatrixXd right_padded = Eigen::MatrixXd::Zero(8, 3);
        right_padded.topRows(5) = data;
        auto out_right = lstm_forward(right_padded, m.lstm_layers);
        CHECK((out_right - out_short).lpNorm<Eigen::Infinity>() > 1e-6);
    }
    SECTION("hidden state is bounded by the tanh envelope") {
        Rng rng(23);
        for (int rep = 0; rep < 20; ++rep) {
            auto m = random_model(ModelKind::Dlbp1, {LLSFamily::LogNormal}, 6, 4,
                                  derive_seed(1000, static_cast<std::uint64_t>(rep)), {5});
            Eigen::MatrixXd w(6, 4);
            for (int r = 0; r < 6; ++r) {
                for (int c = 0; c < 4; ++c) w(r, c) = uniform(rng, -50.0, 50.0);
            }
            auto h = lstm_forward(w, m.lstm_layers);
            CHECK(h.lpNorm<Eigen::Infinity>() <= 1.0);
        }
    }
}

TEST_CASE("fc forward") {
    SECTION("identity weights with elu act as identity on non-negative input") {
        FcLayerParams l;
        l.weight = Eigen::MatrixXd::Identity(3, 3);
        l.bias = Eigen::VectorXd::Zero(3);
        Eigen::VectorXd v(3);
        v << 0.0, 1.5, 2.0;
        CHECK(fc_forward(v, {l}) == v);
    }
    SECTION("random 3x3 case matches a scalar hand computation") {
        FcLayerParams l;
        l.weight = Eigen::MatrixXd(3, 3);
        l.weight << 0.3, -0.7, 0.2, 1.1, 0.4, -0.5, -0.9, 0.8, 0.6;
        l.bias = Eigen::VectorXd(3);
        l.bias << 0.1, -0.2, 0.3;
        Eigen::VectorXd v(3);
        v << -0.4, 0.9, 0.2;
        auto out = fc_forward(v, {l});
        for (int r = 0; r < 3; ++r) {
            double z = l.bias(r);
            for (int c = 0; c < 3; ++c) z += l.weight(r, c) * v(c);
            const double expected = z >= 0.0 ? z : std::exp(z) - 1.0;
            CHECK(out(r) == Catch::Approx(expected).epsilon(1e-14));
        }
    }
    SECTION("shape mismatch rejected") {
        FcLayerParams l;
        l.weight = Eigen::MatrixXd::Zero(2, 4);
        l.bias = Eigen::VectorXd::Zero(2);
        CHECK_THROWS_AS(fc_forward(Eigen::VectorXd::Zero(3), {l}), std::invalid_argument);
    }
}

TEST_CASE("distribution parameter heads") {
    SECTION("zero head: mu = elu(0) = 0, sigma = softplus(0) = ln 2, uniform weights") {
        HeadParams head;
        head.weight = Eigen::MatrixXd::Zero(6, 4);
        head.bias = Eigen::VectorXd::Zero(6);
        MixtureSpec spec{LLSFamily::LogNormal, LLSFamily::LogNormal};
        head.activations = default_head_activations(ModelKind::Dlbp1, spec);
        auto p = head_forward_dlbp1(Eigen::VectorXd::Zero(4), head, spec);
        CHECK(p.components[0].mu == 0.0);
        CHECK(p.components[1].mu == 0.0);
        CHECK(p.components[0].sigma == Catch::Approx(std::log(2.0)).epsilon(1e-14));
        CHECK(p.weights[0] == 0.5);
        CHECK(p.weights[1] == 0.5);
        CHECK(validate(p).ok);
    }
    SECTION("equal raw weights normalize to one half each") {
        // sigmoid outputs are equal whenever the weight-neuron inputs agree
        HeadParams head;
        head.weight = Eigen::MatrixXd::Zero(6, 2);
        head.bias = Eigen::VectorXd::Zero(6);
        head.bias.tail(2) = Eigen::VectorXd::Constant(2, 1.7);
        MixtureSpec spec{LLSFamily::Weibull, LLSFamily::Weibull};
        head.activations = default_head_activations(ModelKind::Dlbp1, spec);
        auto p = head_forward_dlbp1(Eigen::VectorXd::Zero(2), head, spec);
        CHECK(p.weights[0] == Catch::Approx(0.5).epsilon(1e-14));
        CHECK(p.weights[1] == Catch::Approx(0.5).epsilon(1e-14));
    }
    SECTION("shared-scale head takes sigma from the shared vector") {
        HeadParams head;
        head.weight = Eigen::MatrixXd::Zero(4, 3);
        head.bias = Eigen::VectorXd::Zero(4);
        MixtureSpec spec{LLSFamily::LogNormal, LLSFamily::LogNormal};
        head.activations = default_head_activations(ModelKind::Dlbp2, spec);
        auto p = head_forward_dlbp2(Eigen::VectorXd::Zero(3), head, spec, {1.0, 1.0});
        CHECK(p.components[0].sigma == 1.0);
        CHECK(p.components[1].sigma == 1.0);
        CHECK(p.weights[0] == 0.5);

        auto q = head_forward_dlbp2(Eigen::VectorXd::Zero(3), head, spec, {0.3, 2.0});
        CHECK(q.components[0].sigma == 0.3);
        CHECK(q.components[1].sigma == 2.0);
        CHECK(q.components[0].mu == p.components[0].mu);
        CHECK(q.weights == p.weights);
    }
    SECTION("K = 1 weight is exactly one") {
        HeadParams head;
        head.weight = Eigen::MatrixXd::Random(2, 3);
        head.bias = Eigen::VectorXd::Random(2);
        MixtureSpec spec{LLSFamily::Weibull};
        head.activations = default_head_activations(ModelKind::Dlbp2, spec);
        auto p = head_forward_dlbp2(Eigen::VectorXd::Random(3), head, spec, {2.0});
        CHECK(p.weights[0] == 1.0);
    }
    SECTION("per-family default activations") {
        MixtureSpec spec{LLSFamily::LogNormal, LLSFamily::Weibull, LLSFamily::LogLogistic};
        auto acts = default_head_activations(ModelKind::Dlbp1, spec);
        REQUIRE(acts.size() == 9);
        CHECK(acts[0] == Activation::Elu);
        CHECK(acts[1] == Activation::Softplus);
        CHECK(acts[2] == Activation::Softplus);
        CHECK(acts[3] == Activation::Softplus);
        CHECK(acts[4] == Activation::Softplus);
        CHECK(acts[5] == Activation::SoftplusPlusOne);
        CHECK(acts[6] == Activation::Sigmoid);
        CHECK(acts[7] == Activation::Sigmoid);
        CHECK(acts[8] == Activation::Sigmoid);
        auto acts2 = default_head_activations(ModelKind::Dlbp2, spec);
        REQUIRE(acts2.size() == 6);
        CHECK(acts2[3] == Activation::Sigmoid);
    }
}

TEST_CASE("xavier initialization") {
    SECTION("fan 3+3 bound is 1") {
        Rng rng(9);
        auto m = xavier_init(3, 3, rng);
        CHECK(m.cwiseAbs().maxCoeff() <= 1.0);
    }
    SECTION("deterministic given seed") {
        CHECK(xavier_init(4, 7, std::uint64_t{123}) == xavier_init(4, 7, std::uint64_t{123}));
        CHECK(xavier_init(4, 7, std::uint64_t{123}) != xavier_init(4, 7, std::uint64_t{124}));
    }
    SECTION("empirical variance matches 2/(fan_in+fan_out) within 5%") {
        Rng rng(31);
        const Eigen::Index rows = 250, cols = 400;  // 1e5 draws
        auto m = xavier_init(rows, cols, rng);
        const double mean = m.mean();
        const double var = (m.array() - mean).square().mean();
        const double expected = 2.0 / static_cast<double>(rows + cols);
        CHECK(var == Catch::Approx(expected).epsilon(0.05));
    }
}

TEST_CASE("full forward") {
    MixtureSpec spec{LLSFamily::LogNormal, LLSFamily::Weibull};

    SECTION("deterministic and always valid") {
        Rng rng(55);
        for (int rep = 0; rep < 30; ++rep) {
            const auto kind = rep % 2 == 0 ? ModelKind::Dlbp1 : ModelKind::Dlbp2;
            auto m = random_model(kind, spec, 5, 4, derive_seed(77, static_cast<std::uint64_t>(rep)));
            if (kind == ModelKind::Dlbp2) m.shared_sigma = {0.7, 1.9};
            // stress with inputs far outside the training range
            Eigen::MatrixXd w(5, 4);
            for (int r = 0; r < 5; ++r) {
                for (int c = 0; c < 4; ++c) w(r, c) = uniform(rng, -30.0, 30.0);
            }
            auto out1 = forward(w, m);
            auto out2 = forward(w, m);
            CHECK(validate(out1).ok);
            CHECK(out1.weights == out2.weights);
            for (std::size_t k = 0; k < out1.k(); ++k) {
                CHECK(out1.components[k].mu == out2.components[k].mu);
                CHECK(out1.components[k].sigma == out2.components[k].sigma);
            }
            double wsum = 0.0;
            for (double lw : out1.weights) wsum += lw;
            CHECK(std::abs(wsum - 1.0) <= 1e-9);
        }
    }
    SECTION("head-neuron permutation within role blocks matches spec permutation") {
        auto m = random_model(ModelKind::Dlbp1, spec, 4, 3, 99);
        Eigen::MatrixXd w = Eigen::MatrixXd::Random(4, 3);
        auto base = forward(w, m);

        ModelParams perm = m;
        perm.mixture_spec = {spec[1], spec[0]};
        const auto K = 2;
        for (int blk = 0; blk < 3; ++blk) {
            perm.head.weight.row(blk * K + 0) = m.head.weight.row(blk * K + 1);
            perm.head.weight.row(blk * K + 1) = m.head.weight.row(blk * K + 0);
            std::swap(perm.head.bias(blk * K + 0), perm.head.bias(blk * K + 1));
            std::swap(perm.head.activations[static_cast<std::size_t>(blk * K)],
                      perm.head.activations[static_cast<std::size_t>(blk * K + 1)]);
        }
        auto swapped = forward(w, perm);
        for (double y : {2.0, 20.0, 90.0}) {
            CHECK(mixture_pdf(y, swapped) == Catch::Approx(mixture_pdf(y, base)).epsilon(1e-13));
        }
    }
}

TEST_CASE("model serialization") {
    MixtureSpec spec{LLSFamily::LogNormal, LLSFamily::Weibull};
    auto m = random_model(ModelKind::Dlbp2, spec, 6, 5, 2024, {4, 3}, {6});
    m.shared_sigma = {0.8, 1.3};
    m.rul_cap = 125.0;
    m.stats.kept_sensors = {2, 3, 4, 6, 7};
    m.stats.min = Eigen::VectorXd::LinSpaced(5, 0.0, 4.0);
    m.stats.max = Eigen::VectorXd::LinSpaced(5, 10.0, 14.0);

    auto dir = test_support::scratch_dir("modelio");
    save_model(m, dir + "/m.dlbp");
    auto back = load_model(dir + "/m.dlbp");

    CHECK(back.kind == m.kind);
    CHECK(back.mixture_spec == m.mixture_spec);
    CHECK(back.window_width == m.window_width);
    CHECK(back.shared_sigma == m.shared_sigma);
    CHECK(back.seed == m.seed);
    CHECK(back.stats.kept_sensors == m.stats.kept_sensors);
    CHECK(back.stats.min == m.stats.min);
    CHECK(back.head.activations == m.head.activations);

    Eigen::MatrixXd w = Eigen::MatrixXd::Random(6, 5);
    auto a = forward(w, m);
    auto b = forward(w, back);
    CHECK(a.weights == b.weights);
    for (std::size_t k = 0; k < a.k(); ++k) {
        CHECK(a.components[k].mu == b.components[k].mu);
        CHECK(a.components[k].sigma == b.components[k].sigma);
    }

    SECTION("rewriting produces identical bytes") {
        save_model(back, dir + "/m2.dlbp");
        CHECK(hash_file(dir + "/m.dlbp") == hash_file(dir + "/m2.dlbp"));
    }
    SECTION("bad magic rejected") {
        std::ofstream os(dir + "/junk.dlbp", std::ios::binary);
        os << "NOTMODEL";
        os.close();
        CHECK_THROWS_AS(load_model(dir + "/junk.dlbp"), parse_error);
    }
}
