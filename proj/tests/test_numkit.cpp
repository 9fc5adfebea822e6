#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "dscmp/numkit/grad_check.hpp"
#include "dscmp/numkit/param_store.hpp"
#include "dscmp/numkit/rng.hpp"
#include "dscmp/numkit/tensor.hpp"

using namespace dscmp;

TEST_SUITE("numkit") {

TEST_CASE("matvec and its transpose agree with hand products") {
    const Mat a(2, 3, {1, 2, 3, 4, 5, 6});
    const Vec x{1, 0, -1};
    CHECK(matvec(a, x) == Vec{-2, -2});
    CHECK(matvec_t(a, Vec{1, 1}) == Vec{5, 7, 9});

    Vec y{10, 20};
    matvec_acc(a, x, y.span());
    CHECK(y == Vec{8, 18});

    Mat m(2, 2);
    add_outer(m, Vec{1, 2}, Vec{3, 4}, 0.5);
    CHECK(m == Mat(2, 2, {1.5, 2, 3, 4}));

    CHECK(matmul(Mat::identity(2), a) == a);
    CHECK_THROWS_AS(matvec(a, Vec{1, 2}), ShapeError);
}

TEST_CASE("element-wise helpers") {
    CHECK(dot(Vec{1, 2, 3}, Vec{4, 5, 6}) == 32);
    CHECK(norm(Vec{3, 4}) == 5);
    CHECK(hadamard(Vec{1, 2}, Vec{3, 4}) == Vec{3, 8});
    Vec y{1, 1};
    axpy(2, Vec{1, -1}, y.span());
    CHECK(y == Vec{3, -1});
    CHECK(sigmoid(Real(0)) == 0.5);
    CHECK(softplus(Real(0)) == doctest::Approx(std::log(2.0)));
    // Large arguments must not overflow.
    CHECK(std::isfinite(softplus(Real(800))));
    CHECK(sigmoid(Real(-800)) >= 0);
}

TEST_CASE("cosine similarity guards zero vectors") {
    CHECK(cosine_sim(Vec{1, 0}, Vec{0, 2}) == 0);
    CHECK(cosine_sim(Vec{1, 1}, Vec{2, 2}) == doctest::Approx(1.0));
    CHECK(cosine_sim(Vec{0, 0}, Vec{1, 2}) == 0);
}

TEST_CASE("non-finite payloads are rejected") {
    CHECK_THROWS_AS(Vec(std::vector<Real>{1, NAN}), NumericError);
    CHECK_THROWS_AS(Mat(1, 2, std::vector<Real>{INFINITY, 0}), NumericError);
    CHECK_THROWS_AS(Mat(2, 2, std::vector<Real>{1, 2, 3}), ShapeError);
    CHECK_FALSE(all_finite(std::vector<Real>{0, NAN}));
}

// Golden values from tests/oracles/golden.py (an independent MT19937-64).
TEST_CASE("rng streams match the reference generator") {
    Rng raw(42);
    CHECK(raw.next_u64() == 13930160852258120406ULL);
    CHECK(raw.next_u64() == 11788048577503494824ULL);
    CHECK(raw.next_u64() == 13874630024467741450ULL);

    Rng u(42);
    CHECK(u.uniform() == 0.755155532954539);
    CHECK(u.uniform() == 0.6390313938546974);
    CHECK(u.uniform() == 0.7521452007480266);

    Rng n(42);
    CHECK(n.normal() == doctest::Approx(-1.0771745442782885).epsilon(1e-14));
    CHECK(n.normal() == doctest::Approx(1.0945198485006107).epsilon(1e-14));
    CHECK(n.normal() == doctest::Approx(1.7947316657951717).epsilon(1e-14));

    Rng idx(42);
    std::vector<std::size_t> got;
    for (int i = 0; i < 8; ++i) got.push_back(idx.uniform_index(10));
    CHECK(got == std::vector<std::size_t>{6, 4, 0, 2, 1, 8, 6, 4});

    Rng sh(7);
    std::vector<int> items{0, 1, 2, 3, 4, 5};
    shuffle(std::span<int>(items), sh);
    CHECK(items == std::vector<int>{5, 1, 4, 2, 0, 3});
}

TEST_CASE("rng properties") {
    Rng a(3), b(3);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(9);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.03);
    CHECK(std::fabs(sq / n - 1.0) < 0.05);

    Rng parent(5), twin(5);
    Rng child = parent.split();
    CHECK(child.seed() == twin.next_u64());
    CHECK_THROWS_AS(r.uniform_index(0), std::invalid_argument);
}

TEST_CASE("sample_gaussian with zero sigma returns mu") {
    Rng rng(1);
    const Vec mu{1, -2, 3};
    CHECK(sample_gaussian(rng, mu, Vec{0, 0, 0}) == mu);
    CHECK_THROWS_AS(sample_gaussian(rng, mu, Vec{0, 0}), ShapeError);
    CHECK_THROWS_AS(sample_gaussian(rng, mu, Vec{0, -1, 0}), std::invalid_argument);
}

TEST_CASE("param store registration and lookup") {
    ParamStore s;
    const ParamId a = s.add("a", 2, 3);
    const ParamId b = s.add("b", 1, 1);
    CHECK(s.size() == 2);
    CHECK(s.scalar_count() == 7);
    CHECK(s.id("b") == b);
    CHECK_FALSE(s.find("c").has_value());
    CHECK_THROWS_AS(s.add("a", 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(s.id("missing"), std::out_of_range);

    const auto v0 = s.version();
    s.mutable_value(a)(1, 2) = 4;
    CHECK(s.version() > v0);
    CHECK(s.value(a)(1, 2) == 4);
    CHECK(s.grads()[a].same_shape(s.value(a)));
}

TEST_CASE("param store text round trip is exact") {
    ParamStore s;
    const ParamId a = s.add("layer.W", 2, 2);
    const ParamId b = s.add("layer.b", 2, 1);
    s.mutable_value(a) = Mat(2, 2, {0.1, -1.0 / 3.0, 1e-300, 123456789.125});
    s.mutable_value(b) = Mat(2, 1, {std::nextafter(1.0, 2.0), -0.0});
    std::stringstream text;
    s.write(text);

    ParamStore t;
    t.add("layer.W", 2, 2);
    t.add("layer.b", 2, 1);
    t.read_values(text);
    CHECK(t.value(a) == s.value(a));
    CHECK(t.value(b) == s.value(b));

    ParamStore wrong;
    wrong.add("layer.W", 2, 2);
    std::stringstream again;
    s.write(again);
    CHECK_THROWS(wrong.read_values(again));
}

TEST_CASE("format_real round trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 5e-324}) {
        CHECK(parse_real(format_real(v)) == v);
    }
    CHECK_THROWS_AS(parse_real("1.5x"), ParseError);
    CHECK_THROWS_AS(parse_real(""), ParseError);
}

TEST_CASE("gradients accumulate slot by slot") {
    Gradients g({Mat(1, 2, {1, 2})});
    Gradients h({Mat(1, 2, {3, 4})});
    g += h;
    CHECK(g[ParamId{0}] == Mat(1, 2, {4, 6}));
    g.zero();
    CHECK(g[ParamId{0}] == Mat(1, 2));
    Gradients bad({Mat(2, 1)});
    CHECK_THROWS(g += bad);
}

TEST_CASE("grad_check accepts correct gradients and flags wrong ones") {
    ParamStore s;
    const ParamId t = s.add("theta", 3, 1);
    s.mutable_value(t) = Mat(3, 1, {0.3, -1.2, 2.0});

    const Objective square = [t](ParamStore& p, bool acc) {
        double f = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double v = p.value(t)[k];
            f += v * v;
            if (acc) p.grads()[t][k] += 2 * v;
        }
        return f;
    };
    CHECK(grad_check(square, s, 1e-5).max_rel_error < 1e-6);

    const Objective sig = [t](ParamStore& p, bool acc) {
        double f = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double sv = sigmoid(p.value(t)[k]);
            f += sv;
            if (acc) p.grads()[t][k] += sv * (1 - sv);
        }
        return f;
    };
    const GradCheckReport ok = grad_check(sig, s, 1e-5);
    CHECK(ok.max_rel_error < 1e-6);
    CHECK(ok.entries_checked == 3);

    const Objective wrong = [t](ParamStore& p, bool acc) {
        const double v = p.value(t)[1];
        if (acc) p.grads()[t][1] += 3 * v;
        return v * v;
    };
    const GradCheckReport bad = grad_check(wrong, s, 1e-5);
    CHECK(bad.max_rel_error > 0.1);
    CHECK(bad.worst_param == "theta");
    CHECK(bad.worst_index == 1);
    CHECK(s.value(t) == Mat(3, 1, {0.3, -1.2, 2.0}));

    CHECK_THROWS_AS(grad_check(square, s, 1e-2), std::invalid_argument);
    const Objective nan = [](ParamStore&, bool) { return NAN; };
    CHECK_THROWS_AS(grad_check(nan, s, 1e-5), NumericError);
}

}  // TEST_SUITE
