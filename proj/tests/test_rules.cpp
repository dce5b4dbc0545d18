#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dtd/rng.hpp"
#include "dtd/rules.hpp"

using namespace dtd;

namespace {

Matrix row_matrix(const Vec& w) {
    Matrix m(1, w.size());
    for (size_t i = 0; i < w.size(); ++i) m(0, i) = w[i];
    return m;
}

}  // namespace

TEST_CASE("rule strings parse and print") {
    CHECK(parse_rule("lrp0").tag == RuleTag::LRP0);
    CHECK(parse_rule("w2").tag == RuleTag::W2);
    CHECK(parse_rule("zplus").tag == RuleTag::ZPlus);
    CHECK(parse_rule("ab:1:0").tag == RuleTag::ZPlus);  // alpha1-beta0 alias
    CHECK(parse_rule("eps:0.25").epsilon == doctest::Approx(0.25));
    CHECK(parse_rule("gamma:2.5").gamma == doctest::Approx(2.5));
    CHECK(rule_name(RuleKind::gamma_rule(1.0)) == "gamma:1");
    CHECK(rule_name(RuleKind::eps(0.01)) == "eps:0.01");
    CHECK_THROWS_AS((void)parse_rule("w3"), DtdError);
    CHECK_THROWS_AS((void)parse_rule("eps:zero"), DtdError);
    CHECK_THROWS_AS((void)RuleKind::eps(0.0), DtdError);
    CHECK_THROWS_AS((void)RuleKind::gamma_rule(-1.0), DtdError);
}

TEST_CASE("search directions") {
    CHECK(search_direction(RuleKind::w2(), {3.0, -4.0}, {9.0, 9.0}) == Vec{3.0, -4.0});
    CHECK(search_direction(RuleKind::zplus(), {1.0, -2.0}, {5.0, 7.0}) == Vec{5.0, 0.0});
    CHECK(search_direction(RuleKind::gamma_rule(1.0), {1.0, -2.0}, {5.0, 7.0}) ==
          Vec{10.0, 7.0});
    CHECK(search_direction(RuleKind::lrp0(), {1.0, -2.0}, {5.0, 7.0}) == Vec{5.0, 7.0});
}

TEST_CASE("find_root_linear: w2 intersects the hyperplane") {
    RootPoint root = find_root_linear(RuleKind::w2(), {1.0, 0.0}, -1.0, {3.0, 5.0});
    CHECK(root.t == doctest::Approx(2.0));
    CHECK(root.point[0] == doctest::Approx(1.0));
    CHECK(root.point[1] == doctest::Approx(5.0));
    CHECK(std::fabs(root.residual) <= 1e-9 * (1.0 + std::fabs(2.0)));
}

TEST_CASE("find_root_linear: zplus") {
    RootPoint root = find_root_linear(RuleKind::zplus(), {2.0, -1.0}, 0.0, {1.0, 1.0});
    CHECK(root.direction == Vec{1.0, 0.0});
    CHECK(root.t == doctest::Approx(0.5));
    CHECK(root.point[0] == doctest::Approx(0.5));
    CHECK(root.point[1] == doctest::Approx(1.0));
    CHECK(std::fabs(root.residual) <= 1e-9);
}

TEST_CASE("find_root_linear: orthogonal direction is an error") {
    CHECK_THROWS_AS((void)find_root_linear(RuleKind::zplus(), {0.0, 1.0}, 0.0, {1.0, 0.0}),
                    OrthogonalDirectionError);
}

TEST_CASE("find_root_linear: input on the hyperplane signals zero relevance") {
    RootPoint root = find_root_linear(RuleKind::w2(), {1.0, 1.0}, -2.0, {1.0, 1.0});
    CHECK(root.zero_relevance);
    CHECK(root.t == 0.0);
    CHECK(root.point == Vec{1.0, 1.0});
}

TEST_CASE("find_root_linear: lrp0 and eps choose the origin") {
    RootPoint root = find_root_linear(RuleKind::lrp0(), {1.0, 2.0}, 0.5, {3.0, 4.0});
    CHECK(root.point == Vec{0.0, 0.0});
    CHECK(root.t == doctest::Approx(1.0));
    RootPoint eps_root = find_root_linear(RuleKind::eps(0.1), {1.0, 2.0}, 0.5, {3.0, 4.0});
    CHECK(eps_root.point == Vec{0.0, 0.0});
}

TEST_CASE("find_root_train_free: plugged formulas") {
    RootPoint a = find_root_train_free(RuleKind::w2(), {1.0, 0.0}, 0.0, {3.0, 5.0}, 3.0);
    CHECK(a.t == doctest::Approx(3.0));
    CHECK(a.point[0] == doctest::Approx(0.0));
    CHECK(a.point[1] == doctest::Approx(5.0));

    RootPoint b = find_root_train_free(RuleKind::zplus(), {1.0, 1.0}, 0.0, {1.0, 3.0}, 4.0);
    CHECK(b.direction == Vec{1.0, 3.0});
    CHECK(b.t == doctest::Approx(1.0));
    CHECK(b.point[0] == doctest::Approx(0.0));
    CHECK(b.point[1] == doctest::Approx(0.0));
}

TEST_CASE("find_root_train_free: relevance w.(a - x~) = R_j holds") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t d = 2 + trial % 4;
        Vec w(d), a(d);
        for (size_t i = 0; i < d; ++i) {
            w[i] = rng.normal();
            a[i] = rng.normal();
        }
        const double r = rng.normal() * 2.0;
        if (r == 0.0) continue;
        for (const auto& rule : {RuleKind::w2(), RuleKind::zplus(), RuleKind::gamma_rule(0.5)}) {
            RootPoint root;
            try {
                root = find_root_train_free(rule, w, 0.3, a, r);
            } catch (const OrthogonalDirectionError&) {
                continue;
            }
            Vec diff(d);
            for (size_t i = 0; i < d; ++i) diff[i] = a[i] - root.point[i];
            CHECK(dot(w, diff) == doctest::Approx(r).epsilon(1e-10));
        }
    }
}

TEST_CASE("find_root_train_free: matches the hyperplane root when R_j = z_j") {
    const Vec w = {1.5, -0.5}, a = {2.0, 1.0};
    const double b = -0.25;
    const double z = dot(w, a) + b;
    RootPoint linear = find_root_linear(RuleKind::zplus(), w, b, a);
    RootPoint train_free = find_root_train_free(RuleKind::zplus(), w, b, a, z);
    CHECK(linf_diff(linear.point, train_free.point) <= 1e-12);
}

TEST_CASE("find_root_train_free: zero relevance signal") {
    RootPoint root = find_root_train_free(RuleKind::w2(), {1.0, 1.0}, 0.0, {1.0, 2.0}, 0.0);
    CHECK(root.zero_relevance);
    CHECK(root.point == Vec{1.0, 2.0});
}

TEST_CASE("propagate_closed_form: worked examples") {
    CHECK(propagate_closed_form(RuleKind::zplus(), row_matrix({1.0, 1.0}), {0.0}, {1.0, 3.0},
                                {4.0}) == Vec{1.0, 3.0});
    CHECK(propagate_closed_form(RuleKind::lrp0(), row_matrix({1.0, -1.0}), {0.0}, {3.0, 1.0},
                                {2.0}) == Vec{3.0, -1.0});
    CHECK(propagate_closed_form(RuleKind::zplus(), row_matrix({1.0, -1.0}), {0.0}, {3.0, 1.0},
                                {2.0}) == Vec{2.0, 0.0});
}

TEST_CASE("propagate_closed_form: zero upstream relevance gives zeros") {
    for (const auto& rule : {RuleKind::lrp0(), RuleKind::eps(0.1), RuleKind::w2(),
                             RuleKind::zplus(), RuleKind::gamma_rule(2.0)}) {
        Vec out = propagate_closed_form(rule, row_matrix({1.0, 2.0}), {0.1}, {0.5, -0.5}, {0.0});
        CHECK(out == Vec{0.0, 0.0});
    }
}

TEST_CASE("propagate_closed_form: conservation for hyperplane rules") {
    Rng rng(6);
    for (int trial = 0; trial < 40; ++trial) {
        const size_t d_in = 3 + trial % 4, d_out = 2 + trial % 3;
        Matrix w(d_out, d_in);
        Vec bias(d_out), a(d_in), upper(d_out);
        for (auto& v : w.data) v = rng.normal();
        for (auto& v : bias) v = rng.normal();
        for (auto& v : a) v = rng.normal();
        for (auto& v : upper) v = rng.normal();
        for (const auto& rule : {RuleKind::w2(), RuleKind::zplus(), RuleKind::gamma_rule(1.0)}) {
            Vec lower;
            try {
                lower = propagate_closed_form(rule, w, bias, a, upper);
            } catch (const DegenerateDenominatorError&) {
                continue;
            }
            CHECK(std::fabs(sum(lower) - sum(upper)) <= 1e-10 * (1.0 + std::fabs(sum(upper))));
        }
    }
}

TEST_CASE("propagate_closed_form: linear in the upstream relevance") {
    Matrix w(2, 3);
    w(0, 0) = 1.0; w(0, 1) = -0.5; w(0, 2) = 2.0;
    w(1, 0) = 0.3; w(1, 1) = 0.7; w(1, 2) = -1.0;
    const Vec bias = {-0.1, 0.2}, a = {1.0, 2.0, 0.5};
    for (const auto& rule : {RuleKind::lrp0(), RuleKind::zplus(), RuleKind::w2()}) {
        Vec r1 = propagate_closed_form(rule, w, bias, a, {1.0, -2.0});
        Vec r2 = propagate_closed_form(rule, w, bias, a, {3.0, -6.0});
        for (size_t i = 0; i < r1.size(); ++i) {
            CHECK(r2[i] == doctest::Approx(3.0 * r1[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("gamma converges to zplus for large gamma on positive inputs") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t d = 4;
        Matrix w(2, d);
        Vec a(d), upper = {1.3, -0.4};
        for (auto& v : w.data) v = rng.normal();
        for (auto& v : a) v = 0.1 + std::fabs(rng.normal());
        // The limit error is O(1/gamma) divided by the z+ denominator; keep
        // the draw well-conditioned so the absolute bound applies.
        bool conditioned = true;
        for (size_t j = 0; j < 2; ++j) {
            const Vec w_j = w.row(j);
            conditioned = conditioned &&
                          dot(w_j, search_direction(RuleKind::zplus(), w_j, a)) > 0.1;
        }
        if (!conditioned) continue;
        Vec big_gamma =
            propagate_closed_form(RuleKind::gamma_rule(1e6), w, {0.0, 0.0}, a, upper);
        Vec zplus = propagate_closed_form(RuleKind::zplus(), w, {0.0, 0.0}, a, upper);
        CHECK(linf_diff(big_gamma, zplus) < 1e-5);
    }
}

TEST_CASE("lrp0 on one layer plus sum-pooling equals gradient times input (active units)") {
    // f(a) = sum_j [w_j.a + b_j]^+ with every unit active: propagating
    // lrp0 through pooling and the dense layer must give (sum_j w_j) . a.
    Matrix w(3, 2);
    w(0, 0) = 1.0; w(0, 1) = 0.5;
    w(1, 0) = -0.25; w(1, 1) = 1.5;
    w(2, 0) = 2.0; w(2, 1) = -0.5;
    const Vec bias = {0.5, 0.25, 1.0};
    const Vec a = {1.0, 2.0};

    Vec z(3);
    for (size_t j = 0; j < 3; ++j) {
        z[j] = w(j, 0) * a[0] + w(j, 1) * a[1] + bias[j];
        REQUIRE(z[j] > 0.0);
    }
    Matrix pool(1, 3, 1.0);
    Vec hidden_relevance =
        propagate_closed_form(RuleKind::lrp0(), pool, {0.0}, z, {sum(z)});
    Vec input_relevance = propagate_closed_form(RuleKind::lrp0(), w, bias, a, hidden_relevance);

    Vec grad_sum(2, 0.0);
    for (size_t j = 0; j < 3; ++j) {
        grad_sum[0] += w(j, 0);
        grad_sum[1] += w(j, 1);
    }
    for (size_t i = 0; i < 2; ++i) {
        CHECK(input_relevance[i] == doctest::Approx(grad_sum[i] * a[i]).epsilon(1e-10));
    }
}

TEST_CASE("lrp0 degenerate denominator raises; epsilon never does") {
    Matrix w = row_matrix({1.0, -1.0});
    const Vec a = {1.0, 1.0};  // z = 0 with zero bias
    CHECK_THROWS_AS((void)propagate_closed_form(RuleKind::lrp0(), w, {0.0}, a, {1.0}),
                    DegenerateDenominatorError);
    Vec out = propagate_closed_form(RuleKind::eps(0.1), w, {0.0}, a, {1.0});
    CHECK(std::isfinite(out[0]));
    CHECK(out[0] == doctest::Approx(1.0 / 0.1).epsilon(1e-12));  // a*w*R/(0 + eps)
}

TEST_CASE("per-neuron redistribution weights sum to one for hyperplane rules") {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const size_t d = 3 + trial % 3;
        Vec w(d), a(d);
        for (size_t i = 0; i < d; ++i) {
            w[i] = rng.normal();
            a[i] = rng.normal();
        }
        for (const auto& rule : {RuleKind::w2(), RuleKind::zplus(), RuleKind::gamma_rule(0.7)}) {
            Vec v = search_direction(rule, w, a);
            const double wv = dot(w, v);
            if (std::fabs(wv) < 1e-9) continue;
            double total = 0.0;
            for (size_t i = 0; i < d; ++i) total += w[i] * v[i] / wv;
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}
