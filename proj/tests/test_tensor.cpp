#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "recognet/adam.hpp"
#include "recognet/gradcheck.hpp"
#include "recognet/ops.hpp"
#include "recognet/rng.hpp"
#include "recognet/tensor.hpp"

using namespace recognet;

namespace {

// Independent direct-summation convolution, deliberately written as the
// plainest possible loop nest. Used as the oracle for conv2d.
template <typename T>
Tensor<T> ref_conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, int dil) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const int oh = (xs[2] + 2 * pad - dil * (ws[2] - 1) - 1) / stride + 1;
    const int ow = (xs[3] + 2 * pad - dil * (ws[3] - 1) - 1) / stride + 1;
    Tensor<T> y = Tensor<T>::zeros({xs[0], ws[0], oh, ow});
    for (int n = 0; n < xs[0]; ++n)
        for (int co = 0; co < ws[0]; ++co)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    T acc = 0;
                    for (int ci = 0; ci < xs[1]; ++ci)
                        for (int u = 0; u < ws[2]; ++u)
                            for (int v = 0; v < ws[3]; ++v) {
                                const int ih = i * stride - pad + u * dil;
                                const int iw = j * stride - pad + v * dil;
                                if (ih < 0 || ih >= xs[2] || iw < 0 || iw >= xs[3]) continue;
                                acc += x.data()[((int64_t(n) * xs[1] + ci) * xs[2] + ih) * xs[3] + iw] *
                                       w.data()[((int64_t(co) * xs[1] + ci) * ws[2] + u) * ws[3] + v];
                            }
                    y.data()[((int64_t(n) * ws[0] + co) * oh + i) * ow + j] = acc;
                }
    return y;
}

template <typename T>
Tensor<T> rand_t(Shape s, Rng& rng, double lo = -1, double hi = 1, bool rg = false) {
    Tensor<T> t = Tensor<T>::zeros(std::move(s), rg);
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double acc = 0;
    for (size_t i = 0; i < a.data().size(); ++i)
        acc += static_cast<double>(a.data()[i]) * static_cast<double>(b.data()[i]);
    return acc;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
    auto x = Tensor<float>::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto w = Tensor<float>::from_data({1, 1, 1, 1}, {1});
    auto y = conv2d(x, w);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    for (size_t i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d matches direct summation on the 2x2 example") {
    auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto w = Tensor<float>::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
    auto y = conv2d(x, w);
    auto ref = ref_conv2d(x, w, 1, 0, 1);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 10.0f);
    CHECK(y.item() == ref.item());
}

TEST_CASE("conv2d with dilation 2 sees spaced taps") {
    auto x = Tensor<float>::full({1, 1, 5, 5}, 1.0f);
    auto w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    auto y = conv2d(x, w, 1, 0, 2);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 9.0f);
}

TEST_CASE("conv2d agrees with the oracle across strides, padding and dilation") {
    Rng rng(42);
    for (auto [stride, pad, dil] : std::vector<std::array<int, 3>>{
             {1, 0, 1}, {1, 1, 1}, {2, 1, 1}, {1, 2, 2}, {2, 0, 1}, {3, 2, 2}}) {
        auto x = rand_t<float>({2, 3, 9, 8}, rng);
        auto w = rand_t<float>({4, 3, 3, 3}, rng);
        auto y = conv2d(x, w, stride, pad, dil);
        auto ref = ref_conv2d(x, w, stride, pad, dil);
        REQUIRE(y.shape() == ref.shape());
        for (size_t i = 0; i < y.data().size(); ++i)
            CHECK(y.data()[i] == Catch::Approx(ref.data()[i]).margin(1e-4));
    }
}

TEST_CASE("conv2d rejects bad geometry with a named dimension") {
    auto x = Tensor<float>::zeros({1, 3, 4, 4});
    auto w = Tensor<float>::zeros({2, 4, 3, 3});
    CHECK_THROWS_WITH(conv2d(x, w), Catch::Matchers::ContainsSubstring("channels"));
    auto w2 = Tensor<float>::zeros({2, 3, 7, 7});
    CHECK_THROWS_WITH(conv2d(x, w2), Catch::Matchers::ContainsSubstring("output extent"));
}

TEST_CASE("conv2d is linear in its input") {
    Rng rng(7);
    auto x = rand_t<float>({1, 2, 6, 6}, rng);
    auto y = rand_t<float>({1, 2, 6, 6}, rng);
    auto w = rand_t<float>({3, 2, 3, 3}, rng);
    const float a = 1.7f, b = -0.6f;
    auto lhs = conv2d(add(scale(x, a), scale(y, b)), w, 1, 1, 1);
    auto rhs = add(scale(conv2d(x, w, 1, 1, 1), a), scale(conv2d(y, w, 1, 1, 1), b));
    for (size_t i = 0; i < lhs.data().size(); ++i)
        CHECK(lhs.data()[i] ==
              Catch::Approx(rhs.data()[i]).epsilon(1e-5).margin(1e-5));
}

TEST_CASE("conv_transpose2d scalar case") {
    auto x = Tensor<float>::from_data({1, 1, 1, 1}, {2});
    auto w = Tensor<float>::from_data({1, 1, 1, 1}, {3});
    CHECK(conv_transpose2d(x, w).item() == 6.0f);
}

TEST_CASE("conv_transpose2d scatter-adds disjoint tiles at stride 2") {
    auto x = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
    auto w = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
    auto y = conv_transpose2d(x, w, 2, 0);
    REQUIRE(y.shape() == Shape{1, 1, 4, 4});
    for (float v : y.data()) CHECK(v == 1.0f);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
    // Geometries where the conv taps tile the input exactly, so the adjoint
    // maps back onto the full input shape.
    Rng rng(11);
    for (auto [stride, pad] : std::vector<std::array<int, 2>>{{1, 0}, {2, 1}, {3, 0}}) {
        auto x = rand_t<double>({2, 3, 9, 9}, rng);
        auto w = rand_t<double>({4, 3, 3, 3}, rng);
        auto cx = conv2d(x, w, stride, pad, 1);
        auto y = rand_t<double>(cx.shape(), rng);
        auto ty = conv_transpose2d(y, w, stride, pad);
        REQUIRE(ty.shape() == x.shape());
        const double lhs = dot(cx, y);
        const double rhs = dot(x, ty);
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-10));
    }
    // single-precision path stays within the documented tolerance
    auto xf = rand_t<float>({1, 2, 7, 7}, rng);
    auto wf = rand_t<float>({3, 2, 3, 3}, rng);
    auto cxf = conv2d(xf, wf, 2, 1, 1);
    auto yf = rand_t<float>(cxf.shape(), rng);
    CHECK(dot(cxf, yf) == Catch::Approx(dot(xf, conv_transpose2d(yf, wf, 2, 1))).epsilon(1e-5));
}

TEST_CASE("bilinear_resize to the same size is the identity") {
    Rng rng(3);
    auto x = rand_t<float>({2, 3, 5, 7}, rng);
    auto y = bilinear_resize(x, 5, 7);
    CHECK(x.data() == y.data());
}

TEST_CASE("bilinear_resize of a constant is constant") {
    auto x = Tensor<float>::full({1, 2, 3, 3}, 0.7f);
    for (auto [h, w] : std::vector<std::array<int, 2>>{{1, 1}, {5, 9}, {8, 2}}) {
        auto y = bilinear_resize(x, h, w);
        for (float v : y.data()) CHECK(v == Catch::Approx(0.7f).epsilon(1e-6));
    }
}

TEST_CASE("bilinear_resize upsamples [0,1] with half-pixel sampling") {
    // Hand evaluation: source coordinate (o+0.5)*inW/outW - 0.5 clamped at 0
    // gives -0.25->0, 0.25, 0.75, 1.25->clamp, so values 0, 0.25, 0.75, 1.
    auto x = Tensor<float>::from_data({1, 1, 1, 2}, {0, 1});
    auto y = bilinear_resize(x, 1, 4);
    const std::vector<float> expect{0.0f, 0.25f, 0.75f, 1.0f};
    REQUIRE(y.data().size() == 4);
    for (size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == Catch::Approx(expect[i]).margin(1e-7));
}

TEST_CASE("elementwise basics") {
    CHECK(sigmoid(Tensor<float>::scalar(0)).item() == 0.5f);
    CHECK(tanh_op(Tensor<float>::scalar(0)).item() == 0.0f);

    auto a = Tensor<float>::zeros({1, 2, 3, 3});
    auto b = Tensor<float>::zeros({1, 3, 3, 3});
    CHECK(concat<float>({a, b}, 1).shape() == Shape{1, 5, 3, 3});

    auto c = Tensor<float>::zeros({1, 2, 3, 4});
    CHECK_THROWS_AS(add(a, c), std::invalid_argument);
    CHECK_THROWS_AS(concat<float>({a, c}, 1), std::invalid_argument);

    // broadcast against a per-channel [1,C,1,1] operand
    auto bias = Tensor<float>::from_data({1, 2, 1, 1}, {1.0f, -1.0f});
    auto s = add(a, bias);
    CHECK(s.data()[0] == 1.0f);
    CHECK(s.data()[9] == -1.0f);
}

TEST_CASE("sigmoid and tanh stay inside their open ranges") {
    // Up to the saturation point of each precision; beyond it the closest
    // representable value is exactly 1.
    Rng rng(5);
    auto x = rand_t<float>({1, 1, 8, 8}, rng, -8, 8);
    auto s = sigmoid(x);
    auto t = tanh_op(x);
    for (float v : s.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
    for (float v : t.data()) {
        CHECK(v > -1.0f);
        CHECK(v < 1.0f);
    }
    auto xd = rand_t<double>({1, 1, 8, 8}, rng, -14, 14);
    auto sd = sigmoid(xd);
    auto td = tanh_op(xd);
    for (double v : sd.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    for (double v : td.data()) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("backward of sum gives ones and accumulates on repeat") {
    auto x = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4}, true);
    auto loss = sum(x);
    loss.backward();
    for (float g : x.grad()) CHECK(g == 1.0f);
    loss.backward();  // documented accumulate semantics
    for (float g : x.grad()) CHECK(g == 2.0f);
}

TEST_CASE("backward of sum(x*x) doubles the input") {
    auto x = Tensor<float>::from_data({1}, {3}, true);
    sum(mul(x, x)).backward();
    CHECK(x.grad()[0] == 6.0f);
}

TEST_CASE("backward requires a scalar") {
    auto x = Tensor<float>::zeros({2, 2}, true);
    CHECK_THROWS_AS(add(x, x).backward(), std::invalid_argument);
}

TEST_CASE("finite differences confirm conv and resize gradients in wide precision") {
    Rng rng(99);
    auto x = rand_t<double>({1, 2, 5, 5}, rng, -1, 1, true);
    auto w = rand_t<double>({3, 2, 3, 3}, rng, -1, 1, true);
    auto b = rand_t<double>({3}, rng, -1, 1, true);
    auto r = rand_t<double>({1, 3, 3, 3}, rng);
    const double err = max_fd_error<double>(
        [&] { return sum(mul(conv2d(x, w, b, 2, 1, 1), r)); }, {x, w, b}, 1e-5);
    CHECK(err < 1e-4);

    auto x2 = rand_t<double>({1, 2, 4, 4}, rng, -1, 1, true);
    auto r2 = rand_t<double>({1, 2, 7, 5}, rng);
    CHECK(max_fd_error<double>([&] { return sum(mul(bilinear_resize(x2, 7, 5), r2)); }, {x2},
                               1e-5) < 1e-4);
}

TEST_CASE("finite differences hold in standard precision at the loose tolerance") {
    Rng rng(123);
    auto x = rand_t<float>({1, 2, 4, 4}, rng, -1, 1, true);
    auto w = rand_t<float>({2, 2, 3, 3}, rng, -1, 1, true);
    auto r = rand_t<float>({1, 2, 4, 4}, rng);
    const double err = max_fd_error<float>(
        [&] { return sum(mul(conv2d(x, w, Tensor<float>{}, 1, 1, 1), r)); }, {x, w}, 1e-2);
    CHECK(err < 1e-2);
}

TEST_CASE("identical seeds give bit-identical op outputs") {
    auto run = [] {
        Rng rng(77);
        auto x = rand_t<float>({1, 2, 6, 6}, rng);
        auto w = rand_t<float>({3, 2, 3, 3}, rng);
        return conv2d(sigmoid(x), w, 1, 1, 1).data();
    };
    CHECK(run() == run());
}

TEST_CASE("adam leaves parameters alone under zero gradient") {
    auto p = Tensor<float>::from_data({3}, {1, -2, 3}, true);
    std::vector<Tensor<float>> params{p};
    AdamState<float> st(params);
    p.grad();  // allocate zeros
    st.step(params);
    CHECK(p.data() == std::vector<float>{1, -2, 3});
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
    auto p = Tensor<float>::from_data({2}, {0.0f, 0.0f}, true);
    std::vector<Tensor<float>> params{p};
    AdamConfig<float> cfg;
    cfg.lr = 0.01f;
    AdamState<float> st(params, cfg);
    p.grad() = {0.7f, -2.5f};
    st.step(params);
    CHECK(p.data()[0] == Catch::Approx(-0.01).epsilon(1e-4));
    CHECK(p.data()[1] == Catch::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam rollout on a quadratic bowl matches a scalar oracle") {
    // Independent scalar Adam, following the published update rule.
    double w = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> oracle;
    for (int t = 1; t <= 20; ++t) {
        const double g = 2.0 * w;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        oracle.push_back(w);
    }

    auto p = Tensor<double>::from_data({1}, {1.0}, true);
    std::vector<Tensor<double>> params{p};
    AdamConfig<double> cfg;
    cfg.lr = 0.1;
    AdamState<double> st(params, cfg);
    for (int t = 0; t < 20; ++t) {
        p.zero_grad();
        sum(mul(p, p)).backward();
        st.step(params);
        CHECK(p.data()[0] == Catch::Approx(oracle[t]).margin(1e-12));
    }
    // |w| shrinks monotonically while the iterate approaches the optimum;
    // afterwards momentum carries it across zero, but it stays well inside
    // the bowl.
    for (int t = 1; t < 10; ++t) CHECK(std::abs(oracle[t]) < std::abs(oracle[t - 1]));
    for (int t = 0; t < 20; ++t) CHECK(std::abs(oracle[t]) < 1.0);
    CHECK(std::abs(oracle[19]) < 0.5);
}
