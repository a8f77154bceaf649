#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "vibes/errors.hpp"
#include "vibes/evaluation.hpp"

using namespace vibes;

namespace {

const auto& L = default_ladder();

std::vector<IdentificationTrial> hand_built(int correct) {
    std::vector<IdentificationTrial> t;
    for (int i = 0; i < 25; ++i) {
        const auto& p = L[std::size_t(i % 5)];
        const auto& c = i < correct ? p : L[std::size_t((i + 1) % 5)];
        t.push_back({p, c, true});
    }
    return t;
}

TrialRecord rec(const SandpaperSpec& cmp, bool y) {
    TrialRecord r;
    r.reference = reference_sandpaper();
    r.comparison = cmp;
    r.response_cmp_rougher = y;
    return r;
}

}  // namespace

TEST_CASE("all-correct trials give a diagonal matrix") {
    std::vector<IdentificationTrial> t;
    for (const auto& s : L)
        for (int r = 0; r < 5; ++r) t.push_back({s, s, true});
    const auto cm = confusion_from_trials(t);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(cm.counts[i][j] == (i == j ? 5 : 0));
    const auto a = accuracy(cm);
    CHECK(a.overall == 1.0);
    for (double v : a.per_true_class) CHECK(v == 1.0);
    for (double v : a.per_chosen_class) CHECK(v == 1.0);
}

TEST_CASE("hand-built sequences") {
    const auto cm13 = confusion_from_trials(hand_built(13));
    CHECK(cm13.trace() == 13);
    CHECK(cm13.total() == 25);
    CHECK(accuracy(cm13).overall == doctest::Approx(0.52));
    const auto cm10 = confusion_from_trials(hand_built(10));
    CHECK(cm10.trace() == 10);
    CHECK(accuracy(cm10).overall == doctest::Approx(0.40));
    for (const auto& row : cm10.counts) CHECK(std::accumulate(row.begin(), row.end(), 0L) == 5);
    CHECK(cm10.labels[0].fepa_grade == "P60");
    CHECK(cm10.labels[4].fepa_grade == "P1000");
}

TEST_CASE("per-class accuracies") {
    std::vector<IdentificationTrial> t{{L[0], L[0], true}, {L[0], L[1], true}, {L[1], L[1], true}, {L[2], L[1], true}};
    const auto a = accuracy(confusion_from_trials(t));
    CHECK(a.per_true_class[0] == 0.5);
    CHECK(a.per_true_class[1] == 1.0);
    CHECK(a.per_true_class[2] == 0.0);
    CHECK(std::isnan(a.per_true_class[3]));
    CHECK(a.per_chosen_class[1] == doctest::Approx(1.0 / 3));
    CHECK(std::isnan(a.per_chosen_class[2]));
    CHECK_THROWS(confusion_from_trials(std::vector<IdentificationTrial>{}));
    CHECK_THROWS(confusion_from_trials(std::vector<IdentificationTrial>{{{"P40", 400}, L[0], true}}));
}

TEST_CASE("uniform random choices average 1/K per class") {
    std::mt19937_64 g(1);
    std::uniform_int_distribution<std::size_t> pick(0, 4);
    double mean = 0;
    const int sims = 2000;
    for (int s = 0; s < sims; ++s) {
        std::vector<IdentificationTrial> t;
        for (const auto& p : L)
            for (int r = 0; r < 5; ++r) t.push_back({p, L[pick(g)], false});
        const auto a = accuracy(confusion_from_trials(t));
        mean += std::accumulate(a.per_true_class.begin(), a.per_true_class.end(), 0.0) / 5.0 / sims;
    }
    CHECK(mean == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("relabeling leaves accuracy unchanged") {
    std::mt19937_64 g(3);
    std::uniform_int_distribution<std::size_t> pick(0, 4);
    std::vector<IdentificationTrial> t;
    for (int i = 0; i < 60; ++i) t.push_back({L[pick(g)], L[pick(g)], true});
    const auto cm = confusion_from_trials(t);
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    const auto pm = permute(cm, perm);
    CHECK(pm.total() == cm.total());
    CHECK(accuracy(pm).overall == accuracy(cm).overall);
    for (std::size_t i = 0; i < 5; ++i) CHECK(pm.labels[i] == cm.labels[perm[i]]);
    const auto csv = confusion_to_csv(cm);
    CHECK(csv.rfind("true\\chosen,P60,P80,P120,P220,P1000\n", 0) == 0);
}

TEST_CASE("pairwise table") {
    std::vector<TrialRecord> recs;
    for (int i = 0; i < 20; ++i) {
        recs.push_back(rec(L[0], true));
        recs.push_back(rec(L[1], i < 15));
        recs.push_back(rec(L[2], i < 7));
        recs.push_back(rec(L[3], i < 2));
        recs.push_back(rec(L[4], false));
    }
    const auto t = pairwise_success_table(recs);
    REQUIRE(t.rows.size() == 5);
    CHECK(t.rows[0].comparison == "1-3");
    CHECK(t.rows[0].count_cmp_rougher == 20);
    CHECK(t.rows[0].pct_success == 1.0);
    CHECK(t.rows[1].pct_success == 0.75);
    CHECK(t.rows[2].comparison == "3-3");
    CHECK(t.rows[2].count_cmp_rougher == 7);
    CHECK(t.rows[2].pct_success == doctest::Approx(0.65));
    CHECK(t.rows[3].pct_success == 0.9);
    CHECK(t.rows[4].count_cmp_rougher == 0);
    CHECK(t.rows[4].pct_success == 1.0);
    for (const auto& r : t.rows) CHECK(r.n_trials == 20);
    CHECK(t.warnings.empty());
    CHECK(t.equal_pair_convention.find("y=0") != std::string::npos);

    std::vector<TrialRecord> partial(recs.begin(), recs.begin() + 2);
    const auto p = pairwise_success_table(partial);
    CHECK(p.rows.size() == 2);
    CHECK(p.warnings.size() == 3);
}

TEST_CASE("SUS scoring") {
    CHECK(sus_score(parse_sus("5,1,5,1,5,1,5,1,5,1")) == 100.0);
    CHECK(sus_score(parse_sus("3,3,3,3,3,3,3,3,3,3")) == 50.0);
    // Odd items contribute x - 1, even items 5 - x: (4+3+4+3+4) + (3+4+3+3+3) = 34.
    CHECK(sus_score(parse_sus("5,2,4,1,5,2,4,2,5,2")) == 85.0);
    // (4+3+4+4+4) + (3+4+3+3+3) = 35.
    CHECK(sus_score(parse_sus("5,2,4,1,5,2,5,2,5,2")) == 87.5);
    CHECK(sus_score(parse_sus("1,5,1,5,1,5,1,5,1,5")) == 0.0);
    CHECK_THROWS_AS(parse_sus("5,2,4"), ValidationError);
    CHECK_THROWS_AS(parse_sus("5,2,4,1,5,2,4,2,5,6"), ValidationError);
    CHECK_THROWS_AS(parse_sus("5,2,4,1,5,2,4,2,5,x"), ParseError);
}

TEST_CASE("SUS is monotone in each item") {
    std::mt19937_64 g(7);
    std::uniform_int_distribution<int> v(1, 5), item(0, 9);
    for (int s = 0; s < 1000; ++s) {
        SusResponse r;
        for (auto& x : r.items) x = v(g);
        const int i = item(g);
        if (r.items[std::size_t(i)] == 5) continue;
        SusResponse up = r;
        ++up.items[std::size_t(i)];
        const double a = sus_score(r), b = sus_score(up);
        CHECK(a >= 0.0);
        CHECK(a <= 100.0);
        if (i % 2 == 0) CHECK(b >= a);
        else CHECK(b <= a);
    }
}
