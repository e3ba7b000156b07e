#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "helpers.hpp"
#include "tcedit/gradcheck.hpp"
#include "tcedit/model.hpp"
#include "tcedit/ops.hpp"

using namespace tcedit;
using test::random_tensor;

namespace {

// Random fixed weighting, so that sum(w ⊙ y) exercises every output element differently.
Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    auto w = random_tensor(rng, y.shape(), 1.0, false);
    return sum(mul(y, w));
}

void expect_gradients(const std::vector<NamedTensor>& inputs, const std::function<Tensor<double>()>& loss,
                      double tol = 1e-4) {
    const auto report = check_gradients(inputs, loss, tol);
    for (const auto& t : report.tensors) {
        INFO(t.name << " worst " << t.worst_relative_error);
        CHECK(t.passed);
    }
}

// A deliberately wrong gradient rule: forward x², backward claims 3x.
Tensor<double> square_with_bad_rule(const Tensor<double>& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x.data()[i] * x.data()[i];
    }
    return make_result<double>(x.shape(), std::move(out), {x}, [x](std::span<const double> g, GradSlots<double> gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*gin[0])[i] += g[i] * 3.0 * x.data()[i];
        }
    });
}

}  // namespace

TEST_SUITE("matmul") {
    TEST_CASE("identity case") {
        Tensor<float> eye({2, 2}, {1, 0, 0, 1});
        Tensor<float> b({2, 2}, {3, 4, 5, 6});
        const auto c = matmul(eye, b);
        CHECK(c.shape() == Shape{2, 2});
        CHECK(std::vector<float>(c.data().begin(), c.data().end()) == std::vector<float>{3, 4, 5, 6});
    }

    TEST_CASE("row times column") {
        Tensor<float> a({1, 2}, {1, 2});
        Tensor<float> b({2, 1}, {3, 4});
        const auto c = matmul(a, b);
        CHECK(c.shape() == Shape{1, 1});
        CHECK(c.item() == 11.0f);
    }

    TEST_CASE("inner dimension mismatch names both shapes") {
        Tensor<float> a = Tensor<float>::zeros({2, 3});
        try {
            (void)matmul(a, a);
            FAIL("expected DimensionError");
        } catch (const DimensionError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[2,3]") != std::string::npos);
            CHECK(msg.find("and [2,3]") != std::string::npos);
        }
    }

    TEST_CASE("associativity on random 4x4 triples in single precision") {
        Rng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            auto a = test::random_matrix(rng, 4, 4);
            auto b = test::random_matrix(rng, 4, 4);
            auto c = test::random_matrix(rng, 4, 4);
            const auto left = matmul(matmul(a, b), c);
            const auto right = matmul(a, matmul(b, c));
            for (std::size_t i = 0; i < 16; ++i) {
                CHECK(std::abs(left.data()[i] - right.data()[i]) < 1e-4f);
            }
        }
    }

    TEST_CASE("matches a naive triple loop") {
        Rng rng(5);
        auto a = random_tensor(rng, {7, 5}, 1.0, false);
        auto b = random_tensor(rng, {5, 9}, 1.0, false);
        const auto c = matmul(a, b);
        for (std::size_t i = 0; i < 7; ++i) {
            for (std::size_t j = 0; j < 9; ++j) {
                double ref = 0.0;
                for (std::size_t p = 0; p < 5; ++p) {
                    ref += a.at(i, p) * b.at(p, j);
                }
                CHECK(c.at(i, j) == doctest::Approx(ref).epsilon(1e-12));
            }
        }
    }
}

TEST_SUITE("softmax") {
    TEST_CASE("uniform input") {
        Tensor<double> x({3}, {0, 0, 0});
        const auto y = softmax(x, 0);
        for (double v : y.data()) {
            CHECK(v == doctest::Approx(1.0 / 3.0));
        }
    }

    TEST_CASE("closed form with ln 3") {
        Tensor<double> x({2}, {0, std::log(3.0)});
        const auto y = softmax(x, 0);
        CHECK(y.data()[0] == doctest::Approx(0.25));
        CHECK(y.data()[1] == doctest::Approx(0.75));
    }

    TEST_CASE("shift invariance") {
        Rng rng(3);
        auto x = random_tensor(rng, {4, 5}, 1.0, false);
        Tensor<double> shifted(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
        for (auto& v : shifted.mutable_data()) {
            v += 17.5;
        }
        const auto a = softmax(x, 1);
        const auto b = softmax(shifted, 1);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
        }
    }

    TEST_CASE("sums to one along either axis and stays finite for large inputs") {
        Rng rng(4);
        for (std::size_t axis = 0; axis < 2; ++axis) {
            std::vector<float> v(6 * 7);
            for (auto& x : v) {
                x = static_cast<float>(rng.uniform(-1e4, 1e4));
            }
            Tensor<float> x({6, 7}, std::move(v));
            const auto y = softmax(x, axis);
            CHECK(test::all_finite(y.data()));
            const std::size_t outer = axis == 0 ? 7 : 6;
            const std::size_t len = axis == 0 ? 6 : 7;
            for (std::size_t o = 0; o < outer; ++o) {
                double total = 0.0;
                for (std::size_t l = 0; l < len; ++l) {
                    const std::size_t idx = axis == 0 ? l * 7 + o : o * 7 + l;
                    CHECK(y.data()[idx] >= 0.0f);
                    total += y.data()[idx];
                }
                CHECK(std::abs(total - 1.0) < 1e-6);
            }
        }
    }

    TEST_CASE("invalid axis") {
        CHECK_THROWS_AS((void)softmax(Tensor<float>::zeros({2, 2}), 2), DimensionError);
    }
}

TEST_SUITE("layer_norm") {
    TEST_CASE("constant row maps to zero") {
        Tensor<double> x({1, 4}, {2.5, 2.5, 2.5, 2.5});
        const auto y = layer_norm(x, Tensor<double>::full({4}, 1.0), Tensor<double>::zeros({4}));
        for (double v : y.data()) {
            CHECK(v == 0.0);
        }
    }

    TEST_CASE("two-element row with vanishing eps") {
        Tensor<double> x({1, 2}, {1, 3});
        const auto y = layer_norm(x, Tensor<double>::full({2}, 1.0), Tensor<double>::zeros({2}), 1e-15);
        CHECK(y.data()[0] == doctest::Approx(-1.0));
        CHECK(y.data()[1] == doctest::Approx(1.0));
    }

    TEST_CASE("row moments of random input") {
        Rng rng(8);
        auto x = random_tensor(rng, {5, 32}, 3.0, false);
        const auto y = layer_norm(x, Tensor<double>::full({32}, 1.0), Tensor<double>::zeros({32}));
        for (std::size_t r = 0; r < 5; ++r) {
            double m = 0.0;
            double v = 0.0;
            for (std::size_t c = 0; c < 32; ++c) {
                m += y.at(r, c);
            }
            m /= 32.0;
            for (std::size_t c = 0; c < 32; ++c) {
                v += (y.at(r, c) - m) * (y.at(r, c) - m);
            }
            v /= 32.0;
            CHECK(std::abs(m) < 1e-9);
            CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
        }
    }

    TEST_CASE("width mismatch") {
        CHECK_THROWS_AS(
            (void)layer_norm(Tensor<float>::zeros({2, 3}), Tensor<float>::zeros({4}), Tensor<float>::zeros({4})),
            DimensionError);
    }
}

TEST_SUITE("gelu") {
    TEST_CASE("zero and the positive asymptote") {
        Tensor<double> x({2}, {0.0, 10.0});
        const auto y = gelu(x);
        CHECK(y.data()[0] == 0.0);
        CHECK(std::abs(y.data()[1] - 10.0) < 1e-6);
    }

    TEST_CASE("gradient matches finite differences to 1e-6") {
        Rng rng(21);
        auto x = random_tensor(rng, {40}, 2.0);
        // One output at a time keeps the difference quotient free of summation roundoff.
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto report = check_gradients({{"x", x}}, [&] { return sum(slice(gelu(x), 0, i, 1)); }, 1e-6);
            CHECK(report.passed());
        }
    }
}

TEST_SUITE("sigmoid") {
    TEST_CASE("value, symmetry and slope at zero") {
        Tensor<double> x({3}, {0.0, 1.7, -1.7});
        const auto y = sigmoid(x);
        CHECK(y.data()[0] == 0.5);
        CHECK(y.data()[2] == doctest::Approx(1.0 - y.data()[1]).epsilon(1e-15));

        Tensor<double> z = Tensor<double>::scalar(0.0, true);
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto g = tape.backward(sum(sigmoid(z)));
        CHECK(g.of(z)[0] == doctest::Approx(0.25));
    }

    TEST_CASE("outputs stay strictly inside the unit interval") {
        Tensor<float> x({4}, {-200.0f, -40.0f, 40.0f, 200.0f});
        const auto y = sigmoid(x);
        for (float v : y.data()) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
    }
}

TEST_SUITE("concat and slice") {
    TEST_CASE("vector concat") {
        const auto c = concat(Tensor<float>({2}, {1, 2}), Tensor<float>({1}, {3}), 0);
        CHECK(std::vector<float>(c.data().begin(), c.data().end()) == std::vector<float>{1, 2, 3});
    }

    TEST_CASE("concat then slice recovers the inputs") {
        Rng rng(2);
        auto a = random_tensor(rng, {3, 2}, 1.0, false);
        auto b = random_tensor(rng, {3, 4}, 1.0, false);
        const auto c = concat(a, b, 1);
        const auto a2 = slice(c, 1, 0, 2);
        const auto b2 = slice(c, 1, 2, 4);
        CHECK(std::equal(a.data().begin(), a.data().end(), a2.data().begin()));
        CHECK(std::equal(b.data().begin(), b.data().end(), b2.data().begin()));
    }

    TEST_CASE("gradient of the sum is ones into both inputs") {
        Tensor<double> a({2}, {1, 2}, true);
        Tensor<double> b({3}, {3, 4, 5}, true);
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto g = tape.backward(sum(concat(a, b, 0)));
        CHECK(g.of(a) == std::vector<double>{1, 1});
        CHECK(g.of(b) == std::vector<double>{1, 1, 1});
    }

    TEST_CASE("mismatched non-axis dims") {
        CHECK_THROWS_AS((void)concat(Tensor<float>::zeros({2, 3}), Tensor<float>::zeros({3, 3}), 1), DimensionError);
    }
}

TEST_SUITE("backward") {
    TEST_CASE("sum of squares") {
        Tensor<double> x({3}, {1, -2, 0.5}, true);
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto g = tape.backward(sum(mul(x, x)));
        CHECK(g.of(x) == std::vector<double>{2, -4, 1});
    }

    TEST_CASE("sigmoid of w.x at w = 0") {
        Tensor<double> w({1, 3}, {0, 0, 0}, true);
        Tensor<double> x({3, 1}, {1, 2, -3});
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto g = tape.backward(sum(sigmoid(matmul(w, x))));
        const auto gw = g.of(w);
        CHECK(gw[0] == doctest::Approx(0.25));
        CHECK(gw[1] == doctest::Approx(0.5));
        CHECK(gw[2] == doctest::Approx(-0.75));
    }

    TEST_CASE("non-scalar loss is rejected") {
        Tensor<double> x({2}, {1, 2}, true);
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto y = scale(x, 2.0);
        CHECK_THROWS_AS((void)tape.backward(y), DimensionError);
    }

    TEST_CASE("the record is consumed") {
        Tensor<double> x({2}, {1, 2}, true);
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto loss = sum(mul(x, x));
        CHECK(tape.size() > 0);
        (void)tape.backward(loss);
        CHECK(tape.size() == 0);
    }

    TEST_CASE("values without requires_grad record nothing") {
        Tape<float> tape;
        TapeScope<float> scope(tape);
        (void)matmul(Tensor<float>::zeros({2, 2}), Tensor<float>::zeros({2, 2}));
        CHECK(tape.size() == 0);
    }

    TEST_CASE("full model loss agrees with finite differences") {
        ModelConfig c;
        c.d_in = 3;
        c.d_model = 8;
        c.n_heads = 2;
        c.n_layers_t = 2;
        c.n_layers_c = 2;
        c.window = 3;
        c.d_ff = 8;
        c.d_fuse = 4;
        const auto params = init_params(c).cast<double>();
        Rng rng(9);
        auto h = test::random_matrix(rng, 3, 3);
        auto ctx = test::random_matrix(rng, 4, 3);
        std::vector<Sample> samples;
        std::vector<double> labels;
        for (std::size_t j = 0; j < 4; ++j) {
            samples.push_back({h, ctx, j, j == 2 ? 1 : 0, {}});
            labels.push_back(j == 2 ? 1.0 : 0.0);
        }
        std::vector<NamedTensor> inputs;
        for (const auto& p : params.named()) {
            inputs.push_back({p.name, p.tensor});
        }
        expect_gradients(inputs, [&] {
            return bce_with_logits(forward_logits(params, std::span<const Sample>(samples)),
                                   std::span<const double>(labels));
        });
    }
}

TEST_SUITE("finite_diff_grad") {
    TEST_CASE("sum of squares at [1, 2]") {
        Tensor<double> x({2}, {1, 2});
        const auto g = finite_diff_grad(
            [](const Tensor<double>& t) { return t.data()[0] * t.data()[0] + t.data()[1] * t.data()[1]; }, x);
        CHECK(g.data()[0] == doctest::Approx(2.0).epsilon(1e-8));
        CHECK(g.data()[1] == doctest::Approx(4.0).epsilon(1e-8));
    }

    TEST_CASE("linear functions are exact for any step") {
        Tensor<double> x({3}, {0.5, -1, 4});
        for (double h : {1e-1, 1e-3, 1e-5}) {
            const auto g = finite_diff_grad(
                [](const Tensor<double>& t) { return 2.0 * t.data()[0] - 3.0 * t.data()[1] + 0.5 * t.data()[2]; }, x,
                h);
            CHECK(g.data()[0] == doctest::Approx(2.0).epsilon(1e-9));
            CHECK(g.data()[1] == doctest::Approx(-3.0).epsilon(1e-9));
            CHECK(g.data()[2] == doctest::Approx(0.5).epsilon(1e-9));
        }
    }

    TEST_CASE("agrees with backward through a two-layer encoder") {
        Rng rng(31);
        ModelConfig c;
        c.d_in = 4;
        c.d_model = 8;
        c.n_heads = 2;
        c.d_ff = 12;
        const auto p = init_params(c).cast<double>();
        auto x = random_tensor(rng, {5, 8});
        const std::size_t seg[2] = {2, 3};
        auto f = [&](const Tensor<double>& input) {
            return weighted_sum(encoder_layer(p.temporal[1], encoder_layer(p.temporal[0], input, seg, 2), seg, 2), 4);
        };
        const auto numeric = finite_diff_grad([&](const Tensor<double>& t) { return f(t).item(); }, x);
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto g = tape.backward(f(x));
        CHECK(max_relative_error(g.of(x), numeric.data()) < 1e-4);
    }

    TEST_CASE("max_relative_error uses the floor for zero gradients") {
        const std::vector<double> a{0.0, 1.0};
        const std::vector<double> n{1e-9, 1.0};
        CHECK(max_relative_error(a, n) == doctest::Approx(1e-3));
    }
}

TEST_SUITE("gradient oracle for every op") {
    TEST_CASE("reverse mode matches central differences over 20 seeds") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            CAPTURE(seed);
            Rng rng(seed);
            auto a = random_tensor(rng, {3, 4});
            auto b = random_tensor(rng, {4, 2});
            auto c = random_tensor(rng, {3, 4});
            auto bias = random_tensor(rng, {4});
            auto gain = random_tensor(rng, {4});
            auto logits = random_tensor(rng, {6, 1}, 2.0);
            std::vector<double> labels{1, 0, 0, 1, 0, 0};

            expect_gradients({{"a", a}, {"b", b}}, [&] { return weighted_sum(matmul(a, b), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(transpose(a), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(reshape(a, {2, 6}), seed); });
            expect_gradients({{"a", a}, {"c", c}}, [&] { return weighted_sum(add(a, c), seed); });
            expect_gradients({{"a", a}, {"c", c}}, [&] { return weighted_sum(sub(a, c), seed); });
            expect_gradients({{"a", a}, {"c", c}}, [&] { return weighted_sum(mul(a, c), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(scale(a, -1.5), seed); });
            expect_gradients({{"a", a}, {"bias", bias}}, [&] { return weighted_sum(add_row_bias(a, bias), seed); });
            auto bias2 = random_tensor(rng, {2});
            expect_gradients({{"a", a}, {"b", b}, {"bias2", bias2}},
                             [&] { return weighted_sum(linear(a, b, bias2), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(softmax(a, 0), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(softmax(a, 1), seed); });
            expect_gradients({{"a", a}, {"gain", gain}, {"bias", bias}},
                             [&] { return weighted_sum(layer_norm(a, gain, bias), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(gelu(a), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(sigmoid(a), seed); });
            expect_gradients({{"a", a}, {"c", c}}, [&] { return weighted_sum(concat(a, c, 0), seed); });
            expect_gradients({{"a", a}, {"c", c}}, [&] { return weighted_sum(concat(a, c, 1), seed); });
            expect_gradients({{"a", a}}, [&] { return weighted_sum(slice(a, 1, 1, 2), seed); });
            const std::size_t rows[4] = {2, 0, 2, 1};
            expect_gradients({{"a", a}}, [&] { return weighted_sum(gather_rows(a, rows), seed); });
            expect_gradients({{"a", a}}, [&] { return sum(mul(a, a)); });
            expect_gradients({{"a", a}}, [&] { return mean(mul(a, c)); });
            expect_gradients({{"logits", logits}}, [&] { return bce_with_logits(logits, std::span<const double>(labels)); });

            auto q = random_tensor(rng, {5, 4});
            auto k = random_tensor(rng, {5, 4});
            auto v = random_tensor(rng, {5, 4});
            const std::size_t seg[2] = {3, 2};
            expect_gradients({{"q", q}, {"k", k}, {"v", v}},
                             [&] { return weighted_sum(segmented_attention(q, k, v, seg, 2), seed); });
        }
    }
}

TEST_SUITE("segmented_attention") {
    TEST_CASE("segments do not see each other") {
        Rng rng(1);
        auto q = random_tensor(rng, {5, 4}, 1.0, false);
        auto k = random_tensor(rng, {5, 4}, 1.0, false);
        auto v = random_tensor(rng, {5, 4}, 1.0, false);
        const std::size_t seg[2] = {2, 3};
        const auto full = segmented_attention(q, k, v, seg, 2);
        const std::size_t first[1] = {2};
        const auto alone = segmented_attention(slice(q, 0, 0, 2), slice(k, 0, 0, 2), slice(v, 0, 0, 2), first, 2);
        for (std::size_t i = 0; i < alone.size(); ++i) {
            CHECK(full.data()[i] == doctest::Approx(alone.data()[i]).epsilon(1e-12));
        }
    }

    TEST_CASE("single head equals softmax(QK^T / sqrt d) V") {
        Rng rng(2);
        auto q = random_tensor(rng, {3, 4}, 1.0, false);
        auto k = random_tensor(rng, {3, 4}, 1.0, false);
        auto v = random_tensor(rng, {3, 4}, 1.0, false);
        const std::size_t seg[1] = {3};
        const auto out = segmented_attention(q, k, v, seg, 1);
        const auto ref = matmul(softmax(scale(matmul(q, transpose(k)), 0.5), 1), v);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
        }
    }

    TEST_CASE("segment lengths must cover every row") {
        const std::size_t seg[1] = {2};
        const auto x = Tensor<float>::zeros({3, 4});
        CHECK_THROWS_AS((void)segmented_attention(x, x, x, seg, 2), DimensionError);
    }
}

TEST_SUITE("gradient harness") {
    TEST_CASE("a corrupted gradient rule is caught") {
        Rng rng(3);
        auto x = random_tensor(rng, {6});
        const auto report = check_gradients({{"x", x}}, [&] { return sum(square_with_bad_rule(x)); });
        REQUIRE(report.tensors.size() == 1);
        CHECK_FALSE(report.passed());
        CHECK(report.worst() > 0.3);
    }

    TEST_CASE("forward ops on finite inputs stay finite") {
        Rng rng(4);
        auto x = random_tensor(rng, {4, 6}, 50.0, false);
        CHECK(test::all_finite(gelu(x).data()));
        CHECK(test::all_finite(sigmoid(x).data()));
        CHECK(test::all_finite(softmax(x, 1).data()));
        CHECK(test::all_finite(layer_norm(x, Tensor<double>::full({6}, 1.0), Tensor<double>::zeros({6})).data()));
    }
}
