#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "sadlr/errors.hpp"
#include "sadlr/head.hpp"
#include "sadlr/model.hpp"

using namespace sadlr;

namespace {

SadlrConfig small_config(int n, std::vector<int> structure = {4, 8}) {
    SadlrConfig c;
    c.iterations = n;
    c.channels = 8;
    c.structure = std::move(structure);
    c.lambdas = lambda_preset(n);
    return c;
}

HeadParams<double> make_head(const SadlrConfig& c, int lang = 6, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    auto head = HeadParams<double>::init(c, lang, rng);
    // nonzero biases so every term of the oracle matters
    for (Param<double>* p : head.params()) {
        if (p->name.ends_with("bias") || p->name.ends_with("beta")) {
            p->value = oracle::random_tensor<double>(p->value.shape(), rng, -0.3, 0.3);
        }
    }
    return head;
}

Tensor<double> column_mean(const Tensor<double>& l, int valid) {
    Tensor<double> m({l.dim(0)});
    for (int d = 0; d < l.dim(0); ++d) {
        double s = 0;
        for (int j = 0; j < valid; ++j) {
            s += l.at(d, j);
        }
        m[static_cast<std::size_t>(d)] = s / valid;
    }
    return m;
}

/// Z for one query, rebuilt from the naive oracles.
Tensor<double> dynconv_oracle(HeadParams<double>& head, const Tensor<double>& q, const Tensor<double>& y) {
    Tensor<double> current = y;
    for (auto& layer : head.layers) {
        const Tensor<double> k = oracle::linear(layer.gen_weight.value, layer.gen_bias.value, q).reshaped(
            {layer.in, layer.out});
        current = oracle::relu(oracle::layer_norm(oracle::mix_channels(k, current), layer.ln_gamma.value,
                                                  layer.ln_beta.value, head.config.ln_eps));
    }
    return current;
}

Tensor<double> classify_oracle(HeadParams<double>& head, const Tensor<double>& z) {
    return oracle::conv2d(z, head.cls_weight.value, head.cls_bias.value, 1, 0);
}

Tensor<double> pool_oracle(const BinaryMask& m, const Tensor<double>& y) {
    Tensor<double> o({y.dim(0)});
    const auto n = static_cast<double>(m.count());
    if (n == 0) {
        return o;
    }
    for (int c = 0; c < y.dim(0); ++c) {
        double s = 0;
        for (int yy = 0; yy < y.dim(1); ++yy) {
            for (int x = 0; x < y.dim(2); ++x) {
                s += m.get(yy, x) ? y.at(c, yy, x) : 0.0;
            }
        }
        o[static_cast<std::size_t>(c)] = s / n;
    }
    return o;
}

void check_close(const Tensor<double>& a, const Tensor<double>& b, double tol) {
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
    }
}

} // namespace

TEST_CASE("config validation and presets") {
    CHECK(lambda_preset(1) == std::vector<double>{1.0});
    CHECK(lambda_preset(3) == std::vector<double>{0.15, 0.15, 0.7});
    const auto four = lambda_preset(4);
    REQUIRE(four.size() == 4);
    CHECK(four[0] == doctest::Approx(0.1));
    CHECK(four[3] == 0.7);
    CHECK(lambda_preset(2) == std::vector<double>{0.3, 0.7});
    SadlrConfig c = small_config(3);
    c.validate();
    c.lambdas = {0.2, 0.2, 0.7};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.lambdas = {0.5, 0.5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.lambdas = {0.5, -0.2, 0.7};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(parse_update_mode("add"), ConfigError);
}

TEST_CASE("init_sentence_query") {
    auto head = make_head(small_config(1));
    std::mt19937_64 rng(2);
    Tape<double> t;
    SUBCASE("equal columns") {
        const auto v = oracle::random_tensor<double>({6}, rng);
        Tensor<double> l({6, 4});
        for (int d = 0; d < 6; ++d) {
            for (int j = 0; j < 4; ++j) {
                l.at(d, j) = v[static_cast<std::size_t>(d)];
            }
        }
        check_close(t.value(init_sentence_query(t, head, t.constant(l), 4).vector),
                    oracle::linear(head.sent_weight.value, head.sent_bias.value, v), 1e-12);
    }
    SUBCASE("valid=1 ignores padding") {
        auto l = oracle::random_tensor<double>({6, 4}, rng);
        const auto a = t.value(init_sentence_query(t, head, t.constant(l), 1).vector);
        for (int d = 0; d < 6; ++d) {
            for (int j = 1; j < 4; ++j) {
                l.at(d, j) = 100.0 + j;
            }
        }
        CHECK(t.value(init_sentence_query(t, head, t.constant(l), 1).vector) == a);
    }
    SUBCASE("masked mean of three of four") {
        const auto l = oracle::random_tensor<double>({6, 4}, rng);
        check_close(t.value(init_sentence_query(t, head, t.constant(l), 3).vector),
                    oracle::linear(head.sent_weight.value, head.sent_bias.value, column_mean(l, 3)), 1e-12);
    }
    SUBCASE("no valid words") {
        CHECK_THROWS_AS(init_sentence_query(t, head, t.constant(Tensor<double>({6, 4})), 0), ContractError);
    }
}

TEST_CASE("generate_kernel") {
    auto head = make_head(small_config(1));
    auto& layer = head.layers[0];
    std::mt19937_64 rng(4);
    Tape<double> t;
    SUBCASE("zero query gives the bias") {
        Var k = generate_kernel(t, Query{t.constant(Tensor<double>({8}))}, layer.gen_weight, layer.gen_bias, 8, 4);
        CHECK(t.value(k) == layer.gen_bias.value.reshaped({8, 4}));
    }
    SUBCASE("zero generator") {
        Param<double> w("w", Tensor<double>({32, 8}));
        Param<double> b("b", Tensor<double>({32}));
        Var k = generate_kernel(t, Query{t.constant(oracle::random_tensor<double>({8}, rng))}, w, b, 8, 4);
        CHECK(t.value(k) == Tensor<double>({8, 4}));
    }
    SUBCASE("random query") {
        const auto q = oracle::random_tensor<double>({8}, rng);
        Var k = generate_kernel(t, Query{t.constant(q)}, layer.gen_weight, layer.gen_bias, 8, 4);
        check_close(t.value(k), oracle::linear(layer.gen_weight.value, layer.gen_bias.value, q).reshaped({8, 4}),
                    1e-12);
    }
    SUBCASE("size mismatch") {
        CHECK_THROWS_AS(
            generate_kernel(t, Query{t.constant(Tensor<double>({8}))}, layer.gen_weight, layer.gen_bias, 4, 4),
            ShapeError);
    }
}

TEST_CASE("dynconv_block") {
    std::mt19937_64 rng(6);
    SUBCASE("zero cascade") {
        auto head = make_head(small_config(1));
        for (auto& layer : head.layers) {
            layer.gen_weight.value.fill(0);
            layer.gen_bias.value.fill(0);
            layer.ln_gamma.value.fill(1);
            layer.ln_beta.value.fill(0);
        }
        Tape<double> t;
        Var z = dynconv_block(t, head, Query{t.constant(oracle::random_tensor<double>({8}, rng))},
                              t.constant(oracle::random_tensor<double>({8, 3, 3}, rng)));
        CHECK(t.value(z) == Tensor<double>({8, 3, 3}));
    }
    SUBCASE("composed oracle, 8x3x3 with [4,8]") {
        auto head = make_head(small_config(1));
        const auto q = oracle::random_tensor<double>({8}, rng);
        const auto y = oracle::random_tensor<double>({8, 3, 3}, rng);
        Tape<double> t;
        check_close(t.value(dynconv_block(t, head, Query{t.constant(q)}, t.constant(y))), dynconv_oracle(head, q, y),
                    1e-10);
    }
    SUBCASE("spatial equivariance is exact") {
        auto head = make_head(small_config(1));
        const auto q = oracle::random_tensor<double>({8}, rng);
        const auto y = oracle::random_tensor<double>({8, 4, 5}, rng);
        std::vector<int> perm(20);
        std::iota(perm.begin(), perm.end(), 0);
        for (int trial = 0; trial < 5; ++trial) {
            std::shuffle(perm.begin(), perm.end(), rng);
            auto permute = [&](const Tensor<double>& x) {
                Tensor<double> out(x.shape());
                for (int c = 0; c < x.dim(0); ++c) {
                    for (int p = 0; p < 20; ++p) {
                        const int src = perm[static_cast<std::size_t>(p)];
                        out.at(c, p / 5, p % 5) = x.at(c, src / 5, src % 5);
                    }
                }
                return out;
            };
            Tape<double> t;
            const auto z = t.value(dynconv_block(t, head, Query{t.constant(q)}, t.constant(y)));
            const auto zp = t.value(dynconv_block(t, head, Query{t.constant(q)}, t.constant(permute(y))));
            CHECK(zp == permute(z));
        }
    }
    SUBCASE("wrong channel count") {
        auto head = make_head(small_config(1));
        Tape<double> t;
        CHECK_THROWS_AS(
            dynconv_block(t, head, Query{t.constant(Tensor<double>({8}))}, t.constant(Tensor<double>({4, 2, 2}))),
            ShapeError);
    }
}

TEST_CASE("classify_scores and mask_argmax") {
    auto head = make_head(small_config(1));
    std::mt19937_64 rng(8);
    Tape<double> t;
    const auto z = oracle::random_tensor<double>({8, 3, 4}, rng);
    SUBCASE("object bias wins") {
        head.cls_weight.value.fill(0);
        head.cls_bias.value = Tensor<double>({2}, {0.0, 1.0});
        const auto m = mask_argmax(t.value(classify_scores(t, head, t.constant(z))));
        CHECK(m.count() == 12);
    }
    SUBCASE("tie goes to background") {
        head.cls_weight.value.fill(0);
        head.cls_bias.value.fill(0);
        const auto m = mask_argmax(t.value(classify_scores(t, head, t.constant(z))));
        CHECK(m.count() == 0);
    }
    SUBCASE("1x1 conv oracle") {
        check_close(t.value(classify_scores(t, head, t.constant(z))), classify_oracle(head, z), 1e-12);
    }
    SUBCASE("argmax oracle") {
        const auto r = oracle::random_tensor<double>({2, 5, 6}, rng);
        const auto m = mask_argmax(r);
        for (int y = 0; y < 5; ++y) {
            for (int x = 0; x < 6; ++x) {
                CHECK(m.get(y, x) == (r.at(1, y, x) > r.at(0, y, x)));
            }
        }
        Tensor<double> plus_one({2, 2, 2});
        for (int i = 0; i < 4; ++i) {
            plus_one[static_cast<std::size_t>(i)] = i;
            plus_one[static_cast<std::size_t>(4 + i)] = i + 1;
        }
        CHECK(mask_argmax(plus_one).count() == 4);
    }
}

TEST_CASE("pool_object and update_query") {
    std::mt19937_64 rng(10);
    const auto y = oracle::random_tensor<double>({3, 2, 2}, rng);
    Tape<double> t;
    Var yv = t.constant(y);
    SUBCASE("single pixel") {
        BinaryMask m(2, 2);
        m.set(1, 0, true);
        const auto o = t.value(pool_object(t, m, yv));
        for (int c = 0; c < 3; ++c) {
            CHECK(o[static_cast<std::size_t>(c)] == y.at(c, 1, 0));
        }
    }
    SUBCASE("empty mask") {
        CHECK(t.value(pool_object(t, BinaryMask(2, 2), yv)) == Tensor<double>({3}));
    }
    SUBCASE("two pixels") {
        BinaryMask m(2, 2);
        m.set(0, 0, true);
        m.set(1, 1, true);
        const auto o = t.value(pool_object(t, m, yv));
        for (int c = 0; c < 3; ++c) {
            CHECK(o[static_cast<std::size_t>(c)] == doctest::Approx((y.at(c, 0, 0) + y.at(c, 1, 1)) / 2));
        }
    }
    SUBCASE("mask is a constant for gradients") {
        Var yin = t.input(y);
        BinaryMask m(2, 2);
        m.set(0, 1, true);
        t.backward(sum(t, pool_object(t, m, yin)));
        const auto g = t.grad(yin);
        for (int c = 0; c < 3; ++c) {
            CHECK(g.at(c, 0, 1) == 1.0);
            CHECK(g.at(c, 0, 0) == 0.0);
        }
    }
    SUBCASE("update modes") {
        Query q{t.constant(Tensor<double>({2}, {1, 2}))};
        Var o = t.constant(Tensor<double>({2}, {3, 4}));
        CHECK(t.value(update_query(t, q, o, UpdateMode::sum).vector) == Tensor<double>({2}, {4, 6}));
        CHECK(t.value(update_query(t, q, o, UpdateMode::replace).vector) == Tensor<double>({2}, {3, 4}));
        CHECK(t.value(update_query(t, q, t.constant(Tensor<double>({2})), UpdateMode::sum).vector) ==
              t.value(q.vector));
        CHECK_THROWS_AS(update_query(t, q, t.constant(Tensor<double>({3})), UpdateMode::sum), ShapeError);
    }
}

TEST_CASE("sadlr_forward structure") {
    std::mt19937_64 rng(12);
    const auto y = oracle::random_tensor<double>({8, 4, 4}, rng, -1, 2);
    const auto l = oracle::random_tensor<double>({6, 4}, rng);

    SUBCASE("n=1 is a single pass with no pooling") {
        auto head = make_head(small_config(1));
        Tape<double> t;
        auto out = sadlr_forward(t, head, t.constant(y), t.constant(l), 3);
        CHECK(out.scores.size() == 1);
        CHECK(out.objects.empty());
        const auto s = oracle::linear(head.sent_weight.value, head.sent_bias.value, column_mean(l, 3));
        check_close(t.value(out.scores[0]), classify_oracle(head, dynconv_oracle(head, s, y)), 1e-10);
    }
    SUBCASE("n=3 shapes, binarity and telescoping") {
        auto head = make_head(small_config(3));
        Tape<double> t;
        auto out = sadlr_forward(t, head, t.constant(y), t.constant(l), 4);
        REQUIRE(out.scores.size() == 3);
        REQUIRE(out.objects.size() == 2);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(t.value(out.scores[i]).shape() == Shape{2, 4, 4});
            for (auto b : out.masks[i].bits()) {
                CHECK((b == 0 || b == 1));
            }
        }
        Tensor<double> expect = t.value(out.queries[0].vector);
        for (std::size_t i = 0; i < 2; ++i) {
            expect.add_(t.value(out.objects[i]));
            CHECK(t.value(out.queries[i + 1].vector) == expect);
        }
    }
    SUBCASE("n=2 matches the hand-unrolled composition") {
        auto head = make_head(small_config(2), 6, 77);
        Tape<double> t;
        auto out = sadlr_forward(t, head, t.constant(y), t.constant(l), 2);
        const auto q1 = oracle::linear(head.sent_weight.value, head.sent_bias.value, column_mean(l, 2));
        const auto r1 = classify_oracle(head, dynconv_oracle(head, q1, y));
        check_close(t.value(out.scores[0]), r1, 1e-10);
        const BinaryMask m1 = mask_argmax(r1);
        CHECK(m1 == out.masks[0]);
        Tensor<double> q2 = q1;
        q2.add_(pool_oracle(m1, y));
        check_close(t.value(out.scores[1]), classify_oracle(head, dynconv_oracle(head, q2, y)), 1e-10);
    }
    SUBCASE("replace mode carries only the object") {
        SadlrConfig c = small_config(2);
        c.update_mode = UpdateMode::replace;
        auto head = make_head(c);
        Tape<double> t;
        auto out = sadlr_forward(t, head, t.constant(y), t.constant(l), 4);
        CHECK(t.value(out.queries[1].vector) == t.value(out.objects[0]));
    }
    SUBCASE("empty mask leaves the query unchanged") {
        auto head = make_head(small_config(3));
        head.cls_bias.value = Tensor<double>({2}, {1e6, 0.0});
        Tape<double> t;
        auto out = sadlr_forward(t, head, t.constant(y), t.constant(l), 4);
        CHECK(out.masks[0].count() == 0);
        CHECK(t.value(out.queries[1].vector) == t.value(out.queries[0].vector));
        CHECK(t.value(out.queries[2].vector) == t.value(out.queries[0].vector));
    }
    SUBCASE("n=0 equals the bare classifier") {
        SadlrConfig c = small_config(0);
        auto head = make_head(c);
        CHECK(head.params().size() == 2);
        Tape<double> t;
        auto out = sadlr_forward(t, head, t.constant(y), t.constant(l), 4);
        REQUIRE(out.scores.size() == 1);
        Tape<double> t2;
        const auto bare = t2.value(conv2d(t2, t2.constant(y), t2.constant(head.cls_weight.value),
                                          t2.constant(head.cls_bias.value), 1, 0));
        CHECK(t.value(out.scores[0]) == bare);
        CHECK(out.masks[0] == mask_argmax(bare));
    }
}

TEST_CASE("parameters are shared across iterations") {
    ModelConfig c;
    c.encoder = EncoderConfig{8, 6, 11};
    c.head = small_config(3);
    Model<double> model(c, 5);
    const auto before = serialize_checkpoint(model);

    std::mt19937_64 rng(14);
    TokenSeq tokens{{3, 5, 0, 0}, 2};
    Tape<double> t;
    auto fwd = model.forward(t, oracle::random_tensor<double>({3, 16, 16}, rng, 0, 1), tokens);
    CHECK(fwd.head.scores.size() == 3);
    CHECK(t.param_leaf_count() == model.params().size());
    t.backward(sum(t, fwd.head.scores.back()));
    CHECK(serialize_checkpoint(model) == before);

    // The stored parameter set does not depend on the iteration count.
    ModelConfig c1 = c;
    c1.head = small_config(1);
    Model<double> single(c1, 5);
    const auto names = [](Model<double>& m) {
        std::vector<std::pair<std::string, Shape>> out;
        for (auto* p : m.params()) {
            out.emplace_back(p->name, p->value.shape());
        }
        return out;
    };
    CHECK(names(single) == names(model));
}
