#include "doctest.h"
#include "helpers.hpp"
#include "multiprior/arbitrage.hpp"
#include "multiprior/experiment.hpp"
#include "multiprior/superhedge.hpp"

using namespace multiprior;

TEST_CASE("one-step no-arbitrage verdicts") {
    // increments straddle zero: no arbitrage
    {
        const Market m = testhelp::binomial_call();
        const NAResult na = check_na(m.tree, m.priors);
        CHECK(na.global_na);
        CHECK(na.report_for(0).na_holds);
        CHECK(na.report_for(0).D_basis.size() == 1);
    }
    // every outcome gains: direction h = 1 is an arbitrage
    {
        const Market m = testhelp::one_period(1.0, {2.0, 1.5}, {{0.5, 0.5}}, {0.0, 0.0});
        const NAResult na = check_na(m.tree, m.priors);
        CHECK(!na.global_na);
        const NodeNAReport& r = na.report_for(0);
        REQUIRE(!r.na_holds);
        REQUIRE(r.arbitrage_direction.size() == 1);
        // certificate: gains on all charged children, strictly somewhere
        double total = 0.0;
        for (int c : m.tree.node(0).children) {
            const double gain = r.arbitrage_direction[0] * m.tree.increment(c)[0];
            CHECK(gain >= -1e-12);
            total += gain;
        }
        CHECK(total > 1e-6);
    }
    // a gain only on an uncharged child is no arbitrage
    {
        const Market m =
            testhelp::one_period(1.0, {2.0, 0.5, 3.0}, {{0.5, 0.5, 0.0}}, {0.0, 0.0, 0.0});
        CHECK(check_na(m.tree, m.priors).global_na);
    }
    // all increments zero: nothing to gain, trivially no arbitrage
    {
        const Market m = testhelp::one_period(1.0, {1.0, 1.0}, {{0.5, 0.5}}, {0.0, 0.0});
        const NAResult na = check_na(m.tree, m.priors);
        CHECK(na.global_na);
        CHECK(na.report_for(0).D_basis.empty());
    }
}

TEST_CASE("support span of the increments") {
    // d=1, increments {1, -0.5}: the whole line
    {
        const Market m = testhelp::binomial_call();
        const ChargedSet cs = charged_set(m.tree, m.priors);
        bool linear = true;
        const Mat basis = compute_D(m.tree, cs, 0, &linear);
        CHECK(linear);
        REQUIRE(basis.size() == 1);
        CHECK(std::abs(basis[0][0]) == doctest::Approx(1.0));
    }
    // d=2, increments (1,0) and (-1,0): rank-one span of e1
    {
        std::vector<int> parents{-1, 0, 0};
        Mat prices{{1.0, 1.0}, {2.0, 1.0}, {0.0, 1.0}};
        Market m;
        m.tree = ScenarioTree::from_nodes(2, parents, prices);
        m.priors = PriorSet::from_extremes(m.tree, {{0, {{0.5, 0.5}}}});
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const Mat basis = compute_D(m.tree, cs, 0, nullptr);
        REQUIRE(basis.size() == 1);
        CHECK(std::abs(basis[0][0]) == doctest::Approx(1.0));
        CHECK(basis[0][1] == doctest::Approx(0.0));
    }
}

TEST_CASE("quantitative no-arbitrage level on the dyadic grid") {
    const AlphaOptions opt{12, 0};
    const double step = std::ldexp(1.0, -opt.dyadic_k);
    // increments {+1, -0.5}, prior (1/2, 1/2): every alpha below 1/2
    // works (the down move loses 0.5 with probability 0.5 and the up move
    // loses 1 through h = -1), so the grid reports 1/2 minus one step
    {
        const Market m = testhelp::binomial_call();
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const double a = compute_alpha(m.tree, m.priors, cs, 0, opt);
        CHECK(a == doctest::Approx(0.5 - step).epsilon(1e-12));
    }
    // increments {+1, -1}: the probability level binds before the loss size
    {
        const Market m = testhelp::one_period(1.0, {2.0, 0.0}, {{0.5, 0.5}}, {0.0, 0.0});
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const double a = compute_alpha(m.tree, m.priors, cs, 0, opt);
        CHECK(a == doctest::Approx(0.5 - step).epsilon(1e-12));
    }
    // degenerate one-step market: D = {0}, the condition is vacuous
    {
        const Market m = testhelp::one_period(1.0, {1.0, 1.0}, {{0.5, 0.5}}, {0.0, 0.0});
        const ChargedSet cs = charged_set(m.tree, m.priors);
        CHECK(compute_alpha(m.tree, m.priors, cs, 0, opt) == kInf);
    }
    // arbitrage node: precondition violated
    {
        const Market m = testhelp::one_period(1.0, {2.0, 1.5}, {{0.5, 0.5}}, {0.0, 0.0});
        const ChargedSet cs = charged_set(m.tree, m.priors);
        CHECK_THROWS_AS(compute_alpha(m.tree, m.priors, cs, 0, opt), PreconditionError);
    }
}

TEST_CASE("alpha level scales with the increments in one dimension") {
    const AlphaOptions opt{12, 0};
    const double step = std::ldexp(1.0, -opt.dyadic_k);
    const Market m = testhelp::binomial_call();
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const double a1 = compute_alpha(m.tree, m.priors, cs, 0, opt);

    for (double lam : {0.4, 2.0}) {
        std::vector<int> parents{-1, 0, 0};
        Mat prices{{1.0}, {1.0 + lam * 1.0}, {1.0 + lam * (-0.5)}};
        ScenarioTree scaled = ScenarioTree::from_nodes(1, parents, prices);
        const double a2 = compute_alpha(scaled, m.priors, cs, 0, opt);
        // hand analysis: the sup-feasible level is min(lam * 0.5, 0.5),
        // never attained, so the grid reports the largest dyadic below it
        const double sup = std::min(lam * 0.5, 0.5);
        const double expect = (std::ceil(sup / step) - 1.0) * step;
        CHECK(a2 == doctest::Approx(expect).epsilon(1e-9));
        CHECK(a2 >= std::min(lam * a1, 0.5) - 2.0 * step);
    }
}

TEST_CASE("verdict unchanged by a redundant extreme prior") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        MarketGenOpts g;
        g.d = trial % 2 == 0 ? 1 : 2;
        const Market m = random_na_market(rng, g);
        std::map<int, Mat> ext;
        for (const Node& nd : m.tree.nodes())
            if (!nd.children.empty()) ext[nd.id] = m.priors.extremes(nd.id);
        const Mat& root_fam = m.priors.extremes(0);
        const double lam = rng.uniform();
        Vec mix(root_fam[0].size(), 0.0);
        for (size_t j = 0; j < mix.size(); ++j)
            mix[j] = lam * root_fam[0][j] + (1.0 - lam) * root_fam.back()[j];
        ext[0].push_back(mix);
        const PriorSet wider = PriorSet::from_extremes(m.tree, ext);

        const NAResult before = check_na(m.tree, m.priors);
        const NAResult after = check_na(m.tree, wider);
        CHECK(before.global_na == after.global_na);
        const ChargedSet cs_before = charged_set(m.tree, m.priors);
        const ChargedSet cs_after = charged_set(m.tree, wider);
        for (int id = 0; id < m.tree.node_count(); ++id)
            CHECK(cs_before.is_charged(id) == cs_after.is_charged(id));
        // the certified level at the root is unchanged as well
        if (before.global_na) {
            const AlphaOptions opt{10, 0};
            CHECK(compute_alpha(m.tree, m.priors, cs_before, 0, opt) ==
                  doctest::Approx(compute_alpha(m.tree, wider, cs_after, 0, opt)));
        }
    }
}

TEST_CASE("no-arbitrage keeps every superhedge program bounded") {
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        MarketGenOpts g;
        g.d = trial % 3 == 2 ? 2 : 1;
        Market m = random_na_market(rng, g);
        m.claim = random_claim(rng, m.tree, -1.0, 2.0);
        CHECK_NOTHROW(superreplication_price(m.tree, m.priors, m.claim));
    }
    // and a failing market is reported as unbounded
    const Market arb = testhelp::one_period(1.0, {2.0, 1.5}, {{0.5, 0.5}}, {1.0, 0.0});
    CHECK_THROWS_AS(superreplication_price(arb.tree, arb.priors, arb.claim), SolverError);
}
