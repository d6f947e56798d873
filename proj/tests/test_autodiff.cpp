#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "actirisk/autodiff.hpp"
#include "actirisk/rng.hpp"
#include "oracles.hpp"

using namespace actirisk;
using namespace actirisk::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, scale);
    return t;
}

// Checks d(loss)/d(inputs[k]) against central differences for every entry.
// `build` must construct the op output from graph leaves of `inputs`.
void grad_check(std::vector<Tensor>& inputs,
                const std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>& build,
                Rng& rng) {
    // Fixed random projection makes the scalar loss sensitive to all outputs.
    Tensor projection;
    {
        Graph g;
        std::vector<Graph::NodeId> ids;
        for (auto& t : inputs) ids.push_back(g.leaf(t, false));
        projection = random_tensor(g.value(build(g, ids)).shape, rng, 1.0);
    }
    const auto loss_value = [&]() {
        Graph g;
        std::vector<Graph::NodeId> ids;
        for (auto& t : inputs) ids.push_back(g.leaf(t, false));
        const Graph::NodeId out = build(g, ids);
        const Graph::NodeId proj = g.leaf(projection, false);
        return g.value(g.sum_all(g.mul(out, proj)))[0];
    };

    Graph g;
    std::vector<Graph::NodeId> ids;
    for (auto& t : inputs) ids.push_back(g.leaf(t, true));
    const Graph::NodeId out = build(g, ids);
    const Graph::NodeId proj = g.leaf(projection, false);
    g.backward(g.sum_all(g.mul(out, proj)));

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& analytic = g.grad(ids[k]);
        for (std::int64_t i = 0; i < inputs[k].size(); ++i) {
            const double fd = oracles::central_difference(loss_value, inputs[k][i]);
            CHECK(oracles::rel_err(analytic[i], fd) < 1e-4);
        }
    }
}

} // namespace

TEST_CASE("conv1d: 1x1 identity kernel") {
    Rng rng(3);
    Graph g;
    Tensor in = random_tensor({2, 5, 3}, rng);
    Tensor ker = Tensor::zeros({1, 3, 3});
    for (int c = 0; c < 3; ++c) ker[c * 3 + c] = 1.0;
    const auto out = g.conv1d(g.leaf(in, false), g.leaf(ker, false),
                              g.leaf(Tensor::zeros({3}), false));
    CHECK(g.value(out).data == in.data);
}

TEST_CASE("conv1d: zero input passes bias through") {
    Graph g;
    const auto out = g.conv1d(g.leaf(Tensor::zeros({1, 4, 2}), false),
                              g.leaf(Tensor::zeros({3, 2, 5}), false),
                              g.leaf(Tensor::from({5}, {1, 2, 3, 4, 5}), false));
    const Tensor& v = g.value(out);
    REQUIRE(v.shape == std::vector<int>{1, 4, 5});
    for (int l = 0; l < 4; ++l) {
        for (int c = 0; c < 5; ++c) CHECK(v[l * 5 + c] == doctest::Approx(c + 1.0));
    }
}

TEST_CASE("conv1d matches the nested-loop oracle") {
    Rng rng(5);
    for (const int K : {1, 3, 8}) {
        Tensor in = random_tensor({2, 9, 4}, rng);
        Tensor ker = random_tensor({K, 4, 3}, rng);
        Tensor bias = random_tensor({3}, rng);
        Graph g;
        const auto out = g.conv1d(g.leaf(in, false), g.leaf(ker, false), g.leaf(bias, false));
        const Tensor expect = oracles::naive_conv1d(in, ker, bias);
        REQUIRE(g.value(out).shape == expect.shape);
        for (std::int64_t i = 0; i < expect.size(); ++i) {
            CHECK(g.value(out)[i] == doctest::Approx(expect[i]).epsilon(1e-12));
        }
    }
    // the spec's small case: N=1, L=4, Cin=1, K=3
    Tensor in = random_tensor({1, 4, 1}, rng);
    Tensor ker = random_tensor({3, 1, 1}, rng);
    Tensor bias = random_tensor({1}, rng);
    Graph g;
    const auto out = g.conv1d(g.leaf(in, false), g.leaf(ker, false), g.leaf(bias, false));
    const Tensor expect = oracles::naive_conv1d(in, ker, bias);
    for (std::int64_t i = 0; i < expect.size(); ++i) {
        CHECK(g.value(out)[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv1d gradient check") {
    Rng rng(7);
    for (const int K : {1, 3, 8}) {
        std::vector<Tensor> inputs{random_tensor({2, 6, 3}, rng), random_tensor({K, 3, 2}, rng),
                                   random_tensor({2}, rng)};
        grad_check(inputs,
                   [](Graph& g, const std::vector<Graph::NodeId>& ids) {
                       return g.conv1d(ids[0], ids[1], ids[2]);
                   },
                   rng);
    }
}

TEST_CASE("per_component_affine values and gradient") {
    Graph g;
    const auto out = g.per_component_affine(g.leaf(Tensor::from({1, 1, 1}, {3.0}), false),
                                            g.leaf(Tensor::from({1}, {2.0}), false),
                                            g.leaf(Tensor::from({1}, {1.0}), false));
    CHECK(g.value(out)[0] == doctest::Approx(7.0));

    Rng rng(9);
    std::vector<Tensor> inputs{random_tensor({3, 4, 2}, rng), random_tensor({2}, rng),
                               random_tensor({2}, rng)};
    grad_check(inputs,
               [](Graph& gg, const std::vector<Graph::NodeId>& ids) {
                   return gg.per_component_affine(ids[0], ids[1], ids[2]);
               },
               rng);
}

TEST_CASE("relu values and gradient") {
    Graph g;
    const auto out = g.relu(g.leaf(Tensor::from({3}, {-1.0, 0.0, 2.0}), false));
    CHECK(g.value(out).data == std::vector<double>{0.0, 0.0, 2.0});

    Rng rng(11);
    std::vector<Tensor> inputs{random_tensor({4, 5}, rng)};
    grad_check(inputs,
               [](Graph& gg, const std::vector<Graph::NodeId>& ids) { return gg.relu(ids[0]); },
               rng);
}

TEST_CASE("dense gradient check") {
    Rng rng(13);
    std::vector<Tensor> inputs{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
                               random_tensor({2}, rng)};
    grad_check(inputs,
               [](Graph& gg, const std::vector<Graph::NodeId>& ids) {
                   return gg.dense(ids[0], ids[1], ids[2]);
               },
               rng);
}

TEST_CASE("avg_pool and weighted mean gradients") {
    Rng rng(15);
    std::vector<Tensor> inputs{random_tensor({2, 5, 3}, rng)};
    grad_check(inputs,
               [](Graph& gg, const std::vector<Graph::NodeId>& ids) {
                   return gg.avg_pool_axis1(ids[0]);
               },
               rng);

    std::vector<double> w(2 * 5, 0.0);
    w[0] = 0.5; w[1] = 0.5;                             // row 0: two days kept
    w[5] = 0.25; w[6] = 0.25; w[7] = 0.25; w[9] = 0.25; // row 1: four days kept
    grad_check(inputs,
               [w](Graph& gg, const std::vector<Graph::NodeId>& ids) {
                   return gg.weighted_mean_axis1(ids[0], w);
               },
               rng);
}

TEST_CASE("batch_norm training and eval") {
    Rng rng(17);
    Tensor run_mean = Tensor::zeros({3});
    Tensor run_var = Tensor::full({3}, 1.0);
    std::vector<Tensor> inputs{random_tensor({4, 6, 3}, rng), random_tensor({3}, rng),
                               random_tensor({3}, rng)};
    // Fresh running buffers per evaluation keep the loss a pure function.
    grad_check(inputs,
               [&](Graph& gg, const std::vector<Graph::NodeId>& ids) {
                   Tensor rm = run_mean, rv = run_var;
                   return gg.batch_norm(ids[0], ids[1], ids[2], &rm, &rv, true);
               },
               rng);
    grad_check(inputs,
               [&](Graph& gg, const std::vector<Graph::NodeId>& ids) {
                   Tensor rm = run_mean, rv = run_var;
                   return gg.batch_norm(ids[0], ids[1], ids[2], &rm, &rv, false);
               },
               rng);

    // Eval mode uses frozen statistics: no dependence on the batch makeup.
    Graph g;
    Tensor x = random_tensor({2, 2, 3}, rng);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::from({3}, {0.5, -0.25, 0.0});
    Tensor rv = Tensor::from({3}, {2.0, 1.0, 0.5});
    const auto out = g.batch_norm(g.leaf(x, false), g.leaf(gamma, false), g.leaf(beta, false),
                                  &rm, &rv, false);
    for (std::int64_t r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) {
            const double expect = (x[r * 3 + c] - rm[c]) / std::sqrt(rv[c] + 1e-5);
            CHECK(g.value(out)[r * 3 + c] == doctest::Approx(expect));
        }
    }
    CHECK(rm[0] == 0.5); // frozen
}

TEST_CASE("softmax_cross_entropy") {
    SUBCASE("uniform logits over two classes equal ln 2") {
        Graph g;
        const auto loss = g.softmax_cross_entropy(
            g.leaf(Tensor::zeros({2, 2}), false), {0, 1}, {1, 1});
        CHECK(std::fabs(g.value(loss)[0] - std::log(2.0)) < 1e-12);
    }
    SUBCASE("empty mask is an error") {
        Graph g;
        const auto logits = g.leaf(Tensor::zeros({2, 2}), false);
        CHECK_THROWS_AS(g.softmax_cross_entropy(logits, {0, 1}, {0, 0}), ValidationError);
    }
    SUBCASE("masked rows do not contribute") {
        Graph g1, g2;
        Tensor z = Tensor::from({2, 2}, {1.0, -0.5, 30.0, -9.0});
        const auto l1 = g1.softmax_cross_entropy(g1.leaf(z, false), {0, 1}, {1, 0});
        const auto l2 = g2.softmax_cross_entropy(
            g2.leaf(Tensor::from({1, 2}, {1.0, -0.5}), false), {0}, {1});
        CHECK(g1.value(l1)[0] == doctest::Approx(g2.value(l2)[0]));
    }
    SUBCASE("gradient check") {
        Rng rng(19);
        std::vector<Tensor> inputs{random_tensor({4, 3}, rng)};
        const std::vector<int> labels{0, 2, 1, 2};
        const std::vector<std::uint8_t> mask{1, 1, 0, 1};
        const auto loss_value = [&]() {
            Graph g;
            return g.value(
                g.softmax_cross_entropy(g.leaf(inputs[0], false), labels, mask))[0];
        };
        Graph g;
        const auto id = g.leaf(inputs[0], true);
        g.backward(g.softmax_cross_entropy(id, labels, mask));
        for (std::int64_t i = 0; i < inputs[0].size(); ++i) {
            const double fd = oracles::central_difference(loss_value, inputs[0][i]);
            CHECK(oracles::rel_err(g.grad(id)[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("dropout") {
    Rng rng(21);
    Tensor x = random_tensor({10, 10}, rng);
    SUBCASE("rate 0 is the identity and leaves the rng untouched") {
        Rng d1(5), d2(5);
        Graph g;
        const auto out = g.dropout(g.leaf(x, false), 0.0, true, d1);
        CHECK(g.value(out).data == x.data);
        CHECK(d1.next_u64() == d2.next_u64());
    }
    SUBCASE("eval mode is the identity") {
        Rng d(5);
        Graph g;
        const auto out = g.dropout(g.leaf(x, false), 0.5, false, d);
        CHECK(g.value(out).data == x.data);
    }
    SUBCASE("training keeps inverted-scale values only") {
        Rng d(5);
        Graph g;
        const auto out = g.dropout(g.leaf(x, false), 0.25, true, d);
        int kept = 0;
        for (std::int64_t i = 0; i < x.size(); ++i) {
            const double v = g.value(out)[i];
            if (v != 0.0) {
                CHECK(v == doctest::Approx(x[i] / 0.75));
                ++kept;
            }
        }
        CHECK(kept > 50);
        CHECK(kept < 100);
    }
    SUBCASE("bad rate") {
        Graph g;
        const auto id = g.leaf(x, false);
        Rng d(5);
        CHECK_THROWS_AS(g.dropout(id, 1.0, true, d), ValidationError);
        CHECK_THROWS_AS(g.dropout(id, -0.1, true, d), ValidationError);
    }
}

TEST_CASE("gradient_reversal") {
    Tensor x = Tensor::from({2}, {3.0, -1.5});
    SUBCASE("forward is the identity") {
        Graph g;
        CHECK(g.value(g.gradient_reversal(g.leaf(x, false), 0.7)).data == x.data);
    }
    SUBCASE("backward multiplies by -lambda") {
        Graph g;
        const auto id = g.leaf(x, true);
        const auto rev = g.gradient_reversal(id, 0.1);
        // upstream gradient of 2.0 on every element
        const auto two = g.leaf(Tensor::full({2}, 2.0), false);
        g.backward(g.sum_all(g.mul(rev, two)));
        CHECK(g.grad(id)[0] == doctest::Approx(-0.2));
        CHECK(g.grad(id)[1] == doctest::Approx(-0.2));
    }
    SUBCASE("lambda 0 kills the signal") {
        Graph g;
        const auto id = g.leaf(x, true);
        g.backward(g.sum_all(g.gradient_reversal(id, 0.0)));
        CHECK(g.grad(id)[0] == 0.0);
        CHECK(g.grad(id)[1] == 0.0);
    }
    SUBCASE("negative lambda rejected") {
        Graph g;
        const auto id = g.leaf(x, false);
        CHECK_THROWS_AS(g.gradient_reversal(id, -0.5), ValidationError);
    }
}

TEST_CASE("gradient_reversal equals -lambda times the layer-free gradient") {
    Rng rng(23);
    const double lambda = 0.37;
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    const auto run = [&](bool with_layer) {
        Graph g;
        const auto xi = g.leaf(x, true);
        const auto head = with_layer ? g.gradient_reversal(xi, lambda) : xi;
        const auto logits = g.dense(head, g.leaf(w, false), g.leaf(b, false));
        g.backward(g.softmax_cross_entropy(logits, {0, 1, 0}, {1, 1, 1}));
        return g.grad(xi);
    };
    const Tensor with = run(true);
    const Tensor without = run(false);
    for (std::int64_t i = 0; i < with.size(); ++i) {
        CHECK(with[i] == doctest::Approx(-lambda * without[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward basics") {
    SUBCASE("loss = sum(x) gives unit gradients") {
        Graph g;
        const auto id = g.leaf(Tensor::from({3}, {1.0, 2.0, 3.0}), true);
        g.backward(g.sum_all(id));
        for (int i = 0; i < 3; ++i) CHECK(g.grad(id)[i] == 1.0);
    }
    SUBCASE("loss = dot(x, y) gives the partner") {
        Graph g;
        Tensor xv = Tensor::from({3}, {1.0, 2.0, 3.0});
        Tensor yv = Tensor::from({3}, {-1.0, 0.5, 4.0});
        const auto x = g.leaf(xv, true);
        const auto y = g.leaf(yv, true);
        g.backward(g.sum_all(g.mul(x, y)));
        CHECK(g.grad(x).data == yv.data);
        CHECK(g.grad(y).data == xv.data);
    }
    SUBCASE("non-scalar loss rejected") {
        Graph g;
        const auto id = g.leaf(Tensor::zeros({2}), true);
        CHECK_THROWS_AS(g.backward(id), ValidationError);
    }
    SUBCASE("forward pass is bitwise deterministic") {
        Rng a(99), b(99);
        Tensor xv = Tensor::from({2, 3, 1}, {0.5, 1.5, -1.0, 2.0, 0.0, 3.0});
        Tensor kv = Tensor::from({3, 1, 2}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
        const auto run = [&](Rng& rng) {
            Graph g;
            const auto out = g.dropout(
                g.conv1d(g.leaf(xv, false), g.leaf(kv, false), g.leaf(Tensor::zeros({2}), false)),
                0.3, true, rng);
            return g.value(out).data;
        };
        CHECK(run(a) == run(b));
    }
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradient leaves parameters, advances the step") {
        Tensor p = Tensor::from({2}, {1.0, -2.0});
        Tensor gz = Tensor::zeros({2});
        AdamState st = AdamState::init_like({&p});
        adam_step({&p}, {&gz}, st, 1e-3);
        CHECK(p.data == std::vector<double>{1.0, -2.0});
        CHECK(st.step == 1);
    }
    SUBCASE("first step with unit gradient") {
        Tensor p = Tensor::from({1}, {0.0});
        Tensor g1 = Tensor::from({1}, {1.0});
        AdamState st = AdamState::init_like({&p});
        adam_step({&p}, {&g1}, st, 1e-3);
        // hand-evaluated Adam at t=1: -lr * 1 / (1 + eps)
        CHECK(p[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
        CHECK(std::fabs(p[0] - (-9.999e-4)) < 1e-6);
    }
    SUBCASE("update sign opposes a constant gradient") {
        Tensor p = Tensor::from({1}, {0.3});
        Tensor gc = Tensor::from({1}, {-2.5});
        AdamState st = AdamState::init_like({&p});
        double prev = p[0];
        for (int i = 0; i < 20; ++i) {
            adam_step({&p}, {&gc}, st, 1e-2);
            CHECK(p[0] > prev); // gradient negative, parameter climbs
            prev = p[0];
        }
    }
    SUBCASE("NaN gradient aborts") {
        Tensor p = Tensor::from({1}, {0.0});
        Tensor gn = Tensor::from({1}, {std::nan("")});
        AdamState st = AdamState::init_like({&p});
        CHECK_THROWS_AS(adam_step({&p}, {&gn}, st, 1e-3), NumericError);
    }
}
