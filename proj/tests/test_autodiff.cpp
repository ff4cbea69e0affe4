#include <omp.h>

#include <cmath>

#include "doctest.h"
#include "grad_cases.hpp"
#include "mirage/kernels.hpp"
#include "mirage/optim.hpp"

using namespace mirage;
using ad::Tape;
using ad::Tensor;

TEST_CASE("primitive examples") {
    Tape<double> t;
    const Tensor<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(1);
    const auto a = testing::random_tensor(rng, {3, 4});
    const auto prod = t.matmul(eye, a);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(prod[i] == a[i]);

    const auto sm = t.softmax(Tensor<double>({3}, {1, 2, 3}), 0);
    CHECK(sm[0] + sm[1] + sm[2] == doctest::Approx(1.0).epsilon(1e-12));

    const Tensor<double> v({1, 4}, {0.3, -2, 5, 1e-3});
    CHECK(t.cosine_similarity(v, v).item() == doctest::Approx(1.0).epsilon(1e-12));

    const auto joined = t.concat({Tensor<double>::zeros({4, 5}), Tensor<double>::zeros({4, 2})}, 1);
    CHECK(joined.shape() == ad::Shape{4, 7});
}

TEST_CASE("shape errors name the primitive") {
    Tape<double> t;
    try {
        t.matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({4, 2}));
        FAIL("expected ShapeError");
    } catch (const ad::ShapeError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    CHECK_THROWS_AS(ad::parse_primitive("conv2d"), ad::UnknownPrimitive);
    CHECK(ad::parse_primitive("softmax") == ad::Primitive::Softmax);
    for (int p = 0; p < ad::kPrimitiveCount; ++p)
        CHECK(ad::parse_primitive(ad::primitive_name(static_cast<ad::Primitive>(p))) == static_cast<ad::Primitive>(p));
}

TEST_CASE("backward basics") {
    SUBCASE("sum of squares") {
        Tape<double> t;
        const auto x = Tensor<double>({2}, {1, -2}, true);
        const auto g = t.backward(t.sum(t.mul(x, x)));
        CHECK(g.at(x)[0] == 2.0);
        CHECK(g.at(x)[1] == -4.0);
    }
    SUBCASE("constant in x") {
        Tape<double> t;
        const auto x = Tensor<double>({3}, {1, 2, 3}, true);
        const auto g = t.backward(t.sum(t.scale(x, 0.0)));
        for (double v : g.at(x)) CHECK(v == 0.0);
    }
    SUBCASE("misuse") {
        Tape<double> t;
        const auto x = Tensor<double>({2}, {1, 2}, true);
        CHECK_THROWS_AS(t.backward(t.exp(x)), ad::TapeError);
        Tape<double> u;
        const auto y = u.sum(u.exp(x));
        u.backward(y);
        CHECK(u.consumed());
        CHECK_THROWS_AS(u.backward(y), ad::TapeError);
    }
    SUBCASE("untracked work records nothing") {
        Tape<double> t;
        t.exp(Tensor<double>({2}, {1, 2}));
        CHECK(t.size() == 0);
    }
}

TEST_CASE("detached values receive no gradient") {
    Tape<double> t;
    const auto x = Tensor<double>({1, 3}, {0.5, -1, 2}, true);
    const auto held = t.exp(x).detach();
    const auto y = t.sum(t.mul(t.exp(x), held));
    const auto g = t.backward(y);
    CHECK_FALSE(g.contains(held));
    CHECK(g.contains(x));
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.at(x)[i] == doctest::Approx(std::exp(2 * x[i])));
}

TEST_CASE("gradient linearity") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = testing::random_tensor(rng, {3, 4});
        auto f = [](Tape<double>& t, const Tensor<double>& x) { return t.sum(t.gelu(t.layer_norm(x))); };
        auto g = [](Tape<double>& t, const Tensor<double>& x) { return t.mean(t.exp(t.scale(x, 0.5))); };
        std::vector<double> separate(p.numel(), 0.0), together;
        for (auto fn : {std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>(f), std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>(g)}) {
            Tape<double> t;
            const auto x = p.as_leaf();
            const auto grads = t.backward(fn(t, x));
            for (std::size_t i = 0; i < p.numel(); ++i) separate[i] += grads.at(x)[i];
        }
        Tape<double> t;
        const auto x = p.as_leaf();
        const auto grads = t.backward(t.add(f(t, x), g(t, x)));
        for (std::size_t i = 0; i < p.numel(); ++i) CHECK(grads.at(x)[i] == doctest::Approx(separate[i]).epsilon(1e-12));
    }
}

TEST_CASE("grad_check examples") {
    Rng rng(3);
    const auto w = testing::random_tensor(rng, {4, 1});
    const double linear = ad::grad_check([&](Tape<double>& t, const Tensor<double>& x) { return t.sum(t.matmul(x, w)); },
                                         testing::random_tensor(rng, {3, 4}));
    CHECK(linear < 1e-9);
    for (int i = 0; i < 20; ++i) {
        const auto ce = testing::composite_case(1, rng);
        CHECK(ad::grad_check(ce.function, ce.point, 1e-6) < 1e-6);
        const auto ln = testing::composite_case(2, rng);
        CHECK(ad::grad_check(ln.function, ln.point, 1e-6) < 1e-6);
        const auto mlp = testing::composite_case(0, rng);
        CHECK(ad::grad_check(mlp.function, mlp.point, 1e-5) < 1e-3);
    }
    CHECK_THROWS_AS(ad::grad_check([](Tape<double>& t, const Tensor<double>& x) { return t.sum(t.log(x)); },
                                   Tensor<double>({1}, {-1.0})),
                    std::domain_error);
}

TEST_CASE("every primitive passes grad_check") {
    Rng rng(11);
    for (int p = 0; p < ad::kPrimitiveCount; ++p) {
        const auto prim = static_cast<ad::Primitive>(p);
        CAPTURE(ad::primitive_name(prim));
        for (int i = 0; i < 25; ++i) {
            const auto c = testing::primitive_case(prim, rng);
            CHECK(ad::grad_check(c.function, c.point, 1e-6) < 1e-6);
        }
    }
}

TEST_CASE("sgd and cosine schedule") {
    CHECK(ad::cosine_lr(0.002, 0.0, 0, 100) == 0.002);
    CHECK(ad::cosine_lr(0.002, 0.0, 100, 100) == doctest::Approx(0.0).epsilon(1e-15));
    double prev = INFINITY;
    for (std::size_t t = 0; t <= 100; ++t) {
        const double lr = ad::cosine_lr(0.002, 0.0, t, 100);
        CHECK(lr <= prev);
        CHECK(lr >= 0.0);
        prev = lr;
    }

    ad::OptimizerState<double> state;
    state.base_lr = 1.0;
    state.momentum = 0.0;
    state.total_steps = 10;
    const std::vector<Tensor<double>> params = {Tensor<double>({1}, {0.0}, true)};
    Tape<double> t;
    const auto loss = t.scale(t.sum(params[0]), 3.0);
    const auto grads = t.backward(loss);
    const auto updated = ad::sgd_step<double>(params, grads, state);
    CHECK(updated[0][0] == -3.0);
    CHECK(updated[0].tracked());
    CHECK(state.step == 1);

    // Momentum accumulates: v1 = g, v2 = 0.9 g + g.
    ad::OptimizerState<double> m;
    m.base_lr = 1.0;
    m.total_steps = 1000000;
    std::vector<Tensor<double>> p = {Tensor<double>({1}, {0.0}, true)};
    for (int k = 0; k < 2; ++k) {
        Tape<double> tk;
        const auto gk = tk.backward(tk.sum(p[0]));
        p = ad::sgd_step<double>(p, gk, m);
    }
    CHECK(p[0][0] == doctest::Approx(-(1.0 + 1.9)).epsilon(1e-9));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 1 + rng.index(40), n = 1 + rng.index(40), k = 1 + rng.index(40);
        const bool ta = rng.bernoulli(0.5), tb = rng.bernoulli(0.5), acc = rng.bernoulli(0.5);
        std::vector<float> a(m * k), b(k * n), c0(m * n);
        for (auto& v : a) v = static_cast<float>(rng.normal());
        for (auto& v : b) v = static_cast<float>(rng.normal());
        for (auto& v : c0) v = static_cast<float>(rng.normal());
        auto cs = c0, cp = c0;
        kernels::serial::gemm(m, n, k, a.data(), ta, b.data(), tb, cs.data(), acc);
        kernels::parallel::gemm(m, n, k, a.data(), ta, b.data(), tb, cp.data(), acc);
        CHECK(cs == cp);
    }
    for (int trial = 0; trial < 20; ++trial) {
        kernels::AttentionDims d;
        d.sequences = 1 + rng.index(5);
        d.seq_len = 1 + rng.index(12);
        d.heads = 1 + rng.index(4);
        d.head_dim = 1 + rng.index(8);
        d.causal = rng.bernoulli(0.5);
        const std::size_t rows = d.sequences * d.seq_len;
        std::vector<double> qkv(rows * 3 * d.width()), dout(rows * d.width());
        for (auto& v : qkv) v = rng.normal();
        for (auto& v : dout) v = rng.normal();
        const std::size_t np = d.sequences * d.heads * d.seq_len * d.seq_len;
        std::vector<double> os(rows * d.width()), op(os.size()), ps(np), pp(np);
        kernels::serial::attention_forward(d, qkv.data(), os.data(), ps.data());
        kernels::parallel::attention_forward(d, qkv.data(), op.data(), pp.data());
        CHECK(os == op);
        CHECK(ps == pp);
        std::vector<double> gs(qkv.size(), 0.0), gp(qkv.size(), 0.0);
        kernels::serial::attention_backward(d, qkv.data(), ps.data(), dout.data(), gs.data());
        kernels::parallel::attention_backward(d, qkv.data(), pp.data(), dout.data(), gp.data());
        CHECK(gs == gp);
    }
    omp_set_num_threads(saved);
}
