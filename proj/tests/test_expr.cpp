#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "qmeas/expr.hpp"

using namespace qmeas;
using Catch::Approx;

TEST_CASE("expression arithmetic and precedence") {
    const auto e = Expression::parse("1 + 2*3 - 4/2", 1);
    CHECK(e.eval({0.0}, 0.0) == Approx(5.0));
    CHECK(Expression::parse("2^3^2", 1).eval({0.0}, 0.0) == Approx(512.0)); // right assoc
    CHECK(Expression::parse("-x1^2", 1).eval({3.0}, 0.0) == Approx(-9.0));
    CHECK(Expression::parse("(1+2)*(3+4)", 1).eval({0.0}, 0.0) == Approx(21.0));
}

TEST_CASE("coordinates, time, and constants") {
    const auto e = Expression::parse("0.5*(x1^2 + x2^2) + 0.1*t", 2);
    CHECK(e.eval({2.0, -1.0}, 3.0) == Approx(0.5 * 5.0 + 0.3));
    CHECK(Expression::parse("pi", 1).eval({0.0}, 0.0) == Approx(std::numbers::pi));
    CHECK(Expression::parse("cos(pi)", 1).eval({0.0}, 0.0) == Approx(-1.0));
    CHECK(Expression::parse("min(x1, 2)", 1).eval({5.0}, 0.0) == Approx(2.0));
    CHECK(Expression::parse("exp(-x1^2/2)", 1).eval({1.0}, 0.0) ==
          Approx(std::exp(-0.5)));
}

TEST_CASE("parse errors are reported") {
    CHECK_THROWS_AS(Expression::parse("x3", 2), ConfigError);
    CHECK_THROWS_AS(Expression::parse("bogus(1)", 1), ConfigError);
    CHECK_THROWS_AS(Expression::parse("1 +", 1), ConfigError);
    CHECK_THROWS_AS(Expression::parse("(1", 1), ConfigError);
    CHECK_THROWS_AS(Expression::parse("1 2", 1), ConfigError);
    CHECK_THROWS_AS(Expression::parse("sin()", 1), ConfigError);
}
