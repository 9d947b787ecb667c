#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "recognet/convlstm.hpp"
#include "recognet/gradcheck.hpp"

using namespace recognet;

namespace {

template <typename T>
Tensor<T> rand_t(Shape s, Rng& rng, double lo = -1, double hi = 1, bool rg = false) {
    Tensor<T> t = Tensor<T>::zeros(std::move(s), rg);
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Independently scripted scalar LSTM, the oracle for the 1x1 degenerate case.
struct ScalarLstm {
    double wxi, whi, bi, wxf, whf, bf, wxg, whg, bg, wxo, who, bo;
    double h = 0, c = 0;

    static double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

    void step(double x) {
        const double i = sig(wxi * x + whi * h + bi);
        const double f = sig(wxf * x + whf * h + bf);
        const double g = std::tanh(wxg * x + whg * h + bg);
        const double o = sig(wxo * x + who * h + bo);
        c = f * c + i * g;
        h = o * std::tanh(c);
    }
};

// Literal four-kernel evaluation of the gate equations, used to validate the
// fused implementation.
template <typename T>
ConvLstmState<T> literal_cell_step(const Tensor<T>& x, const ConvLstmState<T>& st,
                                   const ConvLstmParams<T>& p) {
    const int pad = p.padding();
    auto gate_pre = [&](Gate g) {
        return add(conv2d(x, p.input_kernel(g), p.gate_bias(g), 1, pad, 1),
                   conv2d(st.hidden, p.hidden_kernel(g), 1, pad, 1));
    };
    Tensor<T> i = sigmoid(gate_pre(Gate::input));
    Tensor<T> f = sigmoid(gate_pre(Gate::forget));
    Tensor<T> g = tanh_op(gate_pre(Gate::cell));
    Tensor<T> o = sigmoid(gate_pre(Gate::output));
    Tensor<T> cell = add(mul(f, st.cell), mul(i, g));
    return {mul(o, tanh_op(cell)), cell};
}

template <typename T>
double max_abs(const Tensor<T>& t) {
    double m = 0;
    for (T v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

}  // namespace

TEST_CASE("all-zero parameters give half-open gates and a zero state") {
    ConvLstmParams<float> p;
    p.in_channels = 2;
    p.hidden_channels = 3;
    p.kernel = 3;
    p.weight = Tensor<float>::zeros({12, 5, 3, 3}, true);
    p.bias = Tensor<float>::zeros({12}, true);

    Rng rng(1);
    auto x = rand_t<float>({1, 2, 4, 4}, rng);
    auto st = ConvLstmState<float>::zeros(1, 3, 4, 4);
    auto d = cell_step_detail(x, st, p);
    for (float v : d.input_gate.data()) CHECK(v == 0.5f);
    for (float v : d.forget_gate.data()) CHECK(v == 0.5f);
    for (float v : d.output_gate.data()) CHECK(v == 0.5f);
    for (float v : d.cell_gate.data()) CHECK(v == 0.0f);
    for (float v : d.state.cell.data()) CHECK(v == 0.0f);
    for (float v : d.state.hidden.data()) CHECK(v == 0.0f);
}

TEST_CASE("a saturated forget gate preserves the cell state") {
    ConvLstmParams<float> p;
    p.in_channels = 1;
    p.hidden_channels = 1;
    p.kernel = 1;
    p.weight = Tensor<float>::zeros({4, 2, 1, 1}, true);
    p.bias = Tensor<float>::from_data({4}, {0, 100, 0, 0}, true);  // i,f,g,o

    Rng rng(2);
    auto x = rand_t<float>({1, 1, 3, 3}, rng);
    ConvLstmState<float> st{Tensor<float>::zeros({1, 1, 3, 3}),
                            rand_t<float>({1, 1, 3, 3}, rng, -2, 2)};
    auto next = cell_step(x, st, p);
    for (size_t i = 0; i < next.cell.data().size(); ++i) {
        CHECK(next.cell.data()[i] == Catch::Approx(st.cell.data()[i]).margin(1e-6));
        CHECK(next.hidden.data()[i] ==
              Catch::Approx(0.5 * std::tanh(st.cell.data()[i])).margin(1e-6));
    }
}

TEST_CASE("1x1 cell on 1x1 tensors matches the scalar LSTM oracle") {
    Rng rng(99);
    ScalarLstm oracle{};
    double* coefs[12] = {&oracle.wxi, &oracle.whi, &oracle.bi, &oracle.wxf,
                         &oracle.whf, &oracle.bf, &oracle.wxg, &oracle.whg,
                         &oracle.bg,  &oracle.wxo, &oracle.who, &oracle.bo};
    for (auto* c : coefs) *c = rng.uniform(-1, 1);

    auto k = [](double v) { return Tensor<double>::from_data({1, 1, 1, 1}, {v}); };
    auto b = [](double v) { return Tensor<double>::from_data({1}, {v}); };
    auto p = ConvLstmParams<double>::assemble(
        {k(oracle.wxi), k(oracle.wxf), k(oracle.wxg), k(oracle.wxo)},
        {k(oracle.whi), k(oracle.whf), k(oracle.whg), k(oracle.who)},
        {b(oracle.bi), b(oracle.bf), b(oracle.bg), b(oracle.bo)});

    auto st = ConvLstmState<double>::zeros(1, 1, 1, 1);
    for (int t = 0; t < 5; ++t) {
        const double x = rng.uniform(-2, 2);
        oracle.step(x);
        st = cell_step(Tensor<double>::from_data({1, 1, 1, 1}, {x}), st, p);
        CHECK(st.hidden.item() == Catch::Approx(oracle.h).margin(1e-6));
        CHECK(st.cell.item() == Catch::Approx(oracle.c).margin(1e-6));
    }
}

TEST_CASE("fused gate convolution equals the literal four-kernel form") {
    Rng rng(7);
    auto p = ConvLstmParams<double>::init(3, 4, 3, rng);
    ConvLstmState<double> st{rand_t<double>({1, 4, 5, 5}, rng, -0.5, 0.5),
                             rand_t<double>({1, 4, 5, 5}, rng, -0.5, 0.5)};
    for (int t = 0; t < 3; ++t) {
        auto x = rand_t<double>({1, 3, 5, 5}, rng);
        auto fused = cell_step(x, st, p);
        auto lit = literal_cell_step(x, st, p);
        for (size_t i = 0; i < fused.hidden.data().size(); ++i) {
            CHECK(fused.hidden.data()[i] == Catch::Approx(lit.hidden.data()[i]).margin(1e-12));
            CHECK(fused.cell.data()[i] == Catch::Approx(lit.cell.data()[i]).margin(1e-12));
        }
        st = fused;
    }
}

TEST_CASE("init biases start at zero with forget at one") {
    Rng rng(3);
    auto p = ConvLstmParams<float>::init(2, 3, 3, rng);
    for (int i = 0; i < 12; ++i) {
        const float expect = (i >= 3 && i < 6) ? 1.0f : 0.0f;
        CHECK(p.bias.data()[i] == expect);
    }
}

TEST_CASE("length-1 sequence equals a single step from the zero state") {
    Rng rng(5);
    auto p = ConvLstmParams<float>::init(2, 2, 3, rng);
    auto x = rand_t<float>({1, 2, 4, 4}, rng);
    auto seq = run_sequence<float>({x}, p);
    auto single = cell_step(x, ConvLstmState<float>::zeros(1, 2, 4, 4), p);
    REQUIRE(seq.hiddens.size() == 1);
    CHECK(seq.hiddens[0].data() == single.hidden.data());
}

TEST_CASE("outputs before a perturbed step are bit-identical") {
    Rng rng(17);
    auto p = ConvLstmParams<float>::init(1, 2, 3, rng);
    std::vector<Tensor<float>> xs;
    for (int t = 0; t < 5; ++t) xs.push_back(rand_t<float>({1, 1, 4, 4}, rng));
    auto base = run_sequence(xs, p);
    for (int k = 0; k < 5; ++k) {
        auto perturbed = xs;
        perturbed[k] = rand_t<float>({1, 1, 4, 4}, rng, 5, 6);
        auto res = run_sequence(perturbed, p);
        for (int t = 0; t < k; ++t) CHECK(res.hiddens[t].data() == base.hiddens[t].data());
    }
}

TEST_CASE("zero inputs with zero biases stay at the zero fixed point") {
    Rng rng(23);
    auto p = ConvLstmParams<float>::init(1, 2, 3, rng);
    std::fill(p.bias.data().begin(), p.bias.data().end(), 0.0f);
    std::vector<Tensor<float>> xs(4, Tensor<float>::zeros({1, 1, 3, 3}));
    auto res = run_sequence(xs, p);
    for (const auto& h : res.hiddens)
        for (float v : h.data()) CHECK(v == 0.0f);
}

TEST_CASE("run_sequence validates its inputs") {
    Rng rng(29);
    auto p = ConvLstmParams<float>::init(1, 2, 3, rng);
    CHECK_THROWS_AS(run_sequence<float>({}, p), std::invalid_argument);
    std::vector<Tensor<float>> xs{Tensor<float>::zeros({1, 1, 4, 4}),
                                  Tensor<float>::zeros({1, 1, 4, 5})};
    CHECK_THROWS_WITH(run_sequence(xs, p), Catch::Matchers::ContainsSubstring("index 1"));
    auto bad_channels = Tensor<float>::zeros({1, 3, 4, 4});
    CHECK_THROWS_WITH(cell_step(bad_channels, ConvLstmState<float>::zeros(1, 2, 4, 4), p),
                      Catch::Matchers::ContainsSubstring("input-to-gate"));
}

TEST_CASE("gates stay in (0,1), the cell obeys its growth bound, the hidden its range") {
    Rng rng(31);
    auto p = ConvLstmParams<float>::init(2, 3, 3, rng);
    auto st = ConvLstmState<float>::zeros(1, 3, 6, 6);
    double prev_cell_max = 0.0;
    for (int t = 0; t < 8; ++t) {
        auto x = rand_t<float>({1, 2, 6, 6}, rng, -3, 3);
        auto d = cell_step_detail(x, st, p);
        for (const Tensor<float>* g : {&d.input_gate, &d.forget_gate, &d.output_gate})
            for (float v : g->data()) {
                CHECK(v > 0.0f);
                CHECK(v < 1.0f);
            }
        const double cell_max = max_abs(d.state.cell);
        CHECK(cell_max <= prev_cell_max + 1.0 + 1e-6);
        CHECK(max_abs(d.state.hidden) < 1.0);
        prev_cell_max = cell_max;
        st = d.state;
    }
}

TEST_CASE("state continuity across a split sequence") {
    Rng rng(37);
    auto p = ConvLstmParams<float>::init(1, 2, 3, rng);
    std::vector<Tensor<float>> xs;
    for (int t = 0; t < 6; ++t) xs.push_back(rand_t<float>({1, 1, 4, 4}, rng));
    auto whole = run_sequence(xs, p);
    std::vector<Tensor<float>> first(xs.begin(), xs.begin() + 4);
    std::vector<Tensor<float>> second(xs.begin() + 4, xs.end());
    auto part1 = run_sequence(first, p);
    auto part2 = run_sequence(second, p, &part1.final_state);
    for (int t = 0; t < 2; ++t)
        for (size_t i = 0; i < whole.hiddens[4 + t].data().size(); ++i)
            CHECK(whole.hiddens[4 + t].data()[i] ==
                  Catch::Approx(part2.hiddens[t].data()[i]).margin(1e-6));
}

TEST_CASE("gradients through a 3-step sequence match finite differences") {
    Rng rng(41);
    auto p = ConvLstmParams<double>::init(2, 2, 3, rng);
    std::vector<Tensor<double>> xs;
    for (int t = 0; t < 3; ++t) xs.push_back(rand_t<double>({1, 2, 3, 3}, rng, -1, 1, true));
    auto r = rand_t<double>({1, 2, 3, 3}, rng);
    const double err = max_fd_error<double>(
        [&] {
            auto res = run_sequence(xs, p);
            Tensor<double> loss = Tensor<double>::scalar(0);
            for (const auto& h : res.hiddens) loss = add(loss, sum(mul(h, r)));
            return loss;
        },
        {xs[0], xs[1], xs[2], p.weight, p.bias}, 1e-5);
    CHECK(err < 1e-4);
}
