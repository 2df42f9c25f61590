#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "xplain/errors.hpp"
#include "xplain/evalkit.hpp"

using namespace xplain;
using namespace xplain::eval;

namespace {

LikertResponse response(int v, const std::string& group = {}) {
    LikertResponse r;
    r.evaluator = "e";
    r.instance = "i";
    r.group = group;
    for (auto k : kMetricKeys) r.answers[std::string(k)] = v;
    return r;
}

// Pearson via long double, written out independently.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += (long double)x[i] * x[i];
        syy += (long double)y[i] * y[i];
        sxy += (long double)x[i] * y[i];
    }
    return (double)((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

}  // namespace

TEST_CASE("normalize_likert") {
    CHECK(normalize_likert(1) == 0.0);
    CHECK(normalize_likert(2) == 0.5);
    CHECK(normalize_likert(3) == 1.0);
    CHECK_THROWS_AS(normalize_likert(0), ArgumentError);
    CHECK_THROWS_AS(normalize_likert(4), ArgumentError);
}

TEST_CASE("aggregate") {
    auto all3 = aggregate({response(3), response(3), response(3)}, "accuracy");
    CHECK(all3.mean == 1.0);
    CHECK(all3.variance == 0.0);
    auto spread = aggregate({response(1), response(2), response(3)}, "overall_quality");
    CHECK(spread.mean == 0.5);
    CHECK(spread.variance == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(spread.median == 0.5);
    CHECK(aggregate({response(1), response(3)}, "trustworthiness").median == 0.5);
    CHECK_THROWS_AS(aggregate({}, "accuracy"), ArgumentError);

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> v(1, 3);
    for (int t = 0; t < 50; ++t) {
        std::vector<LikertResponse> rs;
        double lo = 1, hi = 0;
        for (int i = 0; i < 1 + t % 9; ++i) {
            rs.push_back(response(v(rng)));
            lo = std::min(lo, normalize_likert(rs.back().answers["sufficiency"]));
            hi = std::max(hi, normalize_likert(rs.back().answers["sufficiency"]));
        }
        auto a = aggregate(rs, "sufficiency");
        CHECK(a.mean >= lo);
        CHECK(a.mean <= hi);
    }
}

TEST_CASE("pearson") {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 1);
    CHECK(std::abs(pearson(x, y) - 1.0) <= 1e-12);
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    CHECK(std::abs(pearson(x, neg) + 1.0) <= 1e-12);

    std::vector<double> a{0.2, 1.7, 3.1, 2.2, 0.9}, b{1.0, 2.5, 2.9, 3.3, 0.1};
    CHECK(pearson(a, b) == doctest::Approx(oracle_pearson(a, b)).epsilon(1e-12));
    CHECK(pearson(a, b) == doctest::Approx(pearson(b, a)).epsilon(1e-15));
    std::vector<double> a2;
    for (double v : a) a2.push_back(3 * v - 7);
    CHECK(pearson(a2, b) == doctest::Approx(pearson(a, b)).epsilon(1e-12));

    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), ArgumentError);
    CHECK_THROWS_AS(pearson({1}, {1}), ArgumentError);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), ArgumentError);
}

TEST_CASE("accuracy_compare") {
    auto same = accuracy_compare({{"m", 12, 12, 20}});
    CHECK(same[0].delta == 0.0);
    auto gap = accuracy_compare({{"m", 10, 14, 20}});
    CHECK(gap[0].delta == doctest::Approx(0.20).epsilon(1e-15));
    auto three = accuracy_compare({{"a", 10, 11, 20}, {"b", 8, 15, 20}, {"c", 12, 12, 20}});
    CHECK_FALSE(three[0].max_delta);
    CHECK(three[1].max_delta);
    CHECK_FALSE(three[2].max_delta);
    CHECK_THROWS_AS(accuracy_compare({{"z", 0, 0, 0}}), ArgumentError);
}

TEST_CASE("responses and report") {
    std::istringstream in(
        "{\"evaluator\":\"u1\",\"instance\":\"x\",\"group\":\"crowd\",\"overall_quality\":3,\"understandability\":3,"
        "\"trustworthiness\":2,\"satisfaction\":3,\"sufficiency\":2,\"completeness\":3,\"accuracy\":3}\n"
        "\n"
        "{\"evaluator\":\"u2\",\"instance\":\"x\",\"group\":\"expert\",\"overall_quality\":2,\"understandability\":3,"
        "\"trustworthiness\":1,\"satisfaction\":2,\"sufficiency\":2,\"completeness\":1,\"accuracy\":3}\n");
    auto rs = parse_responses(in);
    REQUIRE(rs.size() == 2);
    auto rep = build_report(rs, {{"overall_quality", "trustworthiness"}}, {{"m", 10, 14, 20}});
    CHECK(rep.metrics.at("all").at("overall_quality").mean == 0.75);
    CHECK(rep.metrics.at("crowd").at("trustworthiness").mean == 0.5);
    CHECK(rep.metrics.at("expert").at("completeness").mean == 0.0);
    CHECK(rep.correlations.at("overall_quality~trustworthiness") == doctest::Approx(1.0));
    CHECK(rep.to_text().find("overall_quality") != std::string::npos);
    CHECK(rep.to_json()["accuracy"][0]["max_delta"] == true);

    std::istringstream partial("{\"evaluator\":\"u\",\"instance\":\"x\",\"accuracy\":3}\n");
    CHECK_THROWS_AS(parse_responses(partial), ParseError);
    std::istringstream out_of_range(
        "{\"overall_quality\":4,\"understandability\":3,\"trustworthiness\":2,\"satisfaction\":3,\"sufficiency\":2,"
        "\"completeness\":3,\"accuracy\":3}\n");
    CHECK_THROWS_AS(parse_responses(out_of_range), ParseError);
}
