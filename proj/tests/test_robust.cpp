#include <memory>

#include "doctest.h"
#include "helpers.hpp"
#include "multiprior/arbitrage.hpp"
#include "multiprior/experiment.hpp"
#include "multiprior/robust.hpp"

using namespace multiprior;
using testhelp::load_data_market;

namespace {

RobustValue urob(const Market& m, const UtilityFamily& f, int n, const Claim& g, double x,
                 RobustSolver s) {
    const ChargedSet cs = charged_set(m.tree, m.priors);
    return robust_utility(m.tree, m.priors, cs, f, n, g, x, s);
}

}  // namespace

TEST_CASE("holding nothing is always available: u(0,x) >= inf_P E_P U(x)") {
    const Market m = load_data_market("trinomial2.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(2.0), 1.0);
    const Claim zero = testhelp::const_claim(m.tree, 0.0);
    for (double x : {0.5, 1.0, 2.0}) {
        const RobustValue u0 = robust_utility(m.tree, m.priors, cs, f, 1, zero, x,
                                              RobustSolver::CaraExact);
        Vec buf(m.tree.node_count(), 0.0);
        for (int leaf : m.tree.leaves()) buf[leaf] = f.value(1, leaf, x);
        const double hold = robust_inf_expectation(m.tree, m.priors, cs, buf);
        CHECK(u0.value >= hold - 1e-10);
    }
}

TEST_CASE("empty admissible set yields minus infinity") {
    const Market m = testhelp::binomial_call();
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    for (RobustSolver s : {RobustSolver::CaraExact, RobustSolver::WealthGrid,
                           RobustSolver::BruteOracle}) {
        const RobustValue u = urob(m, f, 1, m.claim, 0.2, s);  // pi = 1/3 > 0.2
        CHECK(u.inadmissible);
        CHECK(u.value == -kInf);
    }
}

TEST_CASE("complete binomial: replication shifts the value exactly") {
    const Market m = testhelp::binomial_call();
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.3), 1.0);
    const Claim zero = testhelp::const_claim(m.tree, 0.0);
    for (double x : {0.8, 1.5}) {
        const RobustValue with_claim =
            urob(m, f, 1, m.claim, x + 1.0 / 3.0, RobustSolver::CaraExact);
        const RobustValue without = urob(m, f, 1, zero, x, RobustSolver::CaraExact);
        CHECK(with_claim.log_neg == doctest::Approx(without.log_neg).epsilon(1e-9));
    }
}

TEST_CASE("solver paths agree with the brute-force oracle") {
    // shipped one- and two-period instances, exponential family
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.5), 1.0);
    for (const char* name : {"binomial.json", "trinomial1.json", "trinomial2.json"}) {
        const Market m = load_data_market(name);
        const double pi = superreplication_price(m.tree, m.priors, m.claim).price;
        for (double off : {0.25, 1.0}) {
            const double x = pi + off;
            const double ue = urob(m, f, 1, m.claim, x, RobustSolver::CaraExact).value;
            const double ug = urob(m, f, 1, m.claim, x, RobustSolver::WealthGrid).value;
            const double uo = urob(m, f, 1, m.claim, x, RobustSolver::BruteOracle).value;
            const double scale = 1.0 + std::abs(uo);
            CHECK(std::abs(ue - uo) <= 1e-6 * scale);
            CHECK(std::abs(ug - uo) <= 1e-6 * scale);
        }
    }
    // two assets, one period: cutting-plane path against the oracle
    {
        const Market m = load_data_market("twoasset.json");
        const double pi = superreplication_price(m.tree, m.priors, m.claim).price;
        const double x = pi + 0.5;
        const double ue = urob(m, f, 1, m.claim, x, RobustSolver::CaraExact).value;
        const double ug = urob(m, f, 1, m.claim, x, RobustSolver::WealthGrid).value;
        const double uo = urob(m, f, 1, m.claim, x, RobustSolver::BruteOracle).value;
        const double scale = 1.0 + std::abs(uo);
        CHECK(std::abs(ue - uo) <= 1e-6 * scale);
        CHECK(std::abs(ug - uo) <= 1e-6 * scale);
    }
    // a power utility runs through the wealth grid
    {
        const Market m = load_data_market("trinomial1.json");
        const UtilityFamily crra = UtilityFamily::crra(Sequence::constant(0.5), 1.0);
        const double x = 1.0 / 3.0 + 1.0;
        const double ug = urob(m, crra, 1, m.claim, x, RobustSolver::WealthGrid).value;
        const double uo = urob(m, crra, 1, m.claim, x, RobustSolver::BruteOracle).value;
        CHECK(std::abs(ug - uo) <= 1e-6 * (1.0 + std::abs(uo)));
    }
}

TEST_CASE("complete binomial indifference price is the replication cost") {
    const Market m = testhelp::binomial_call();
    const ChargedSet cs = charged_set(m.tree, m.priors);
    for (double gamma : {0.7, 1.0, 4.0}) {
        const UtilityFamily f = UtilityFamily::cara(Sequence::constant(gamma), 1.0);
        const IndifferenceResult r = indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0,
                                                        RobustSolver::CaraExact);
        CHECK(r.price == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
        const BuyerResult b =
            buyer_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::CaraExact);
        CHECK(b.price == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
        CHECK(b.upper_bound_ok);
    }
}

TEST_CASE("incomplete trinomial prices strictly inside the hedging bounds") {
    const Market m = load_data_market("trinomial1.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    const IndifferenceResult r =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::CaraExact);
    // the oracle solver confirms the same price
    const IndifferenceResult ro =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::BruteOracle,
                           RobustOpts{});
    CHECK(r.price == doctest::Approx(ro.price).epsilon(1e-5));
    CHECK(r.price < 1.0 / 3.0 - 1e-3);
    CHECK(r.price >= 1.0 / 3.0 - 1.0 - 1e-8);
    // seller charges at least the buyer would pay
    const BuyerResult b =
        buyer_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::CaraExact);
    CHECK(b.price <= r.price + 1e-8);
    CHECK(b.price >= b.pi_sub - 1e-8);
}

TEST_CASE("zero claim prices to zero under strictly increasing values") {
    const Market m = load_data_market("trinomial2.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(2.0), 1.0);
    const Claim zero = testhelp::const_claim(m.tree, 0.0);
    const IndifferenceResult r =
        indifference_price(m.tree, m.priors, cs, f, 1, zero, 1.0, RobustSolver::CaraExact);
    CHECK(std::abs(r.price) <= 1e-8);
    // constant claims are bought at their face value
    const BuyerResult b = buyer_price(m.tree, m.priors, cs, f, 1,
                                      testhelp::const_claim(m.tree, 0.4), 1.0,
                                      RobustSolver::CaraExact);
    CHECK(b.price == doctest::Approx(0.4).epsilon(1e-8));
}

TEST_CASE("indifference prices agree across solvers") {
    const Market m = load_data_market("trinomial1.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    const double pc =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::CaraExact)
            .price;
    const double pg =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::WealthGrid)
            .price;
    CHECK(pc == doctest::Approx(pg).epsilon(1e-6));
}

TEST_CASE("indifference prices are invariant under affine rescaling") {
    const Market m = load_data_market("trinomial1.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    auto base =
        std::make_shared<const UtilityFamily>(UtilityFamily::cara(Sequence::constant(1.1), 1.0));
    const UtilityFamily scaled =
        UtilityFamily::affine(base, Sequence::constant(2.5), Sequence::constant(0.0));
    const UtilityFamily shifted =
        UtilityFamily::affine(base, Sequence::constant(0.5), Sequence::constant(-3.0));
    const double p0 = indifference_price(m.tree, m.priors, cs, *base, 1, m.claim, 1.0,
                                         RobustSolver::CaraExact)
                          .price;
    const double p1 = indifference_price(m.tree, m.priors, cs, scaled, 1, m.claim, 1.0,
                                         RobustSolver::CaraExact)
                          .price;
    const double p2 = indifference_price(m.tree, m.priors, cs, shifted, 1, m.claim, 1.0,
                                         RobustSolver::WealthGrid)
                          .price;
    CHECK(p0 == doctest::Approx(p1).epsilon(1e-8));
    CHECK(p0 == doctest::Approx(p2).epsilon(1e-6));
}

TEST_CASE("sandwich bounds hold on random markets and signed claims") {
    Rng rng(59);
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    for (int trial = 0; trial < 12; ++trial) {
        MarketGenOpts g;
        g.T_max = 2;
        g.max_children = 3;
        g.max_extremes = 2;
        Market m = random_na_market(rng, g);
        m.claim = random_claim(rng, m.tree, -0.8, 1.6);
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const double x = rng.uniform(0.6, 1.4);
        const IndifferenceResult r =
            indifference_price(m.tree, m.priors, cs, f, 1, m.claim, x, RobustSolver::CaraExact);
        CHECK(r.price >= r.pi - x - 1e-8);
        CHECK(r.price <= r.pi + 1e-8);
    }
}

TEST_CASE("risk measure harness finds no violations for the exponential family") {
    Rng rng(61);
    for (int trial = 0; trial < 3; ++trial) {
        MarketGenOpts g;
        g.T_max = 2;
        g.max_children = 3;
        g.max_extremes = 2;
        Market m = random_na_market(rng, g);
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
        std::vector<Claim> claims{random_claim(rng, m.tree, -0.5, 1.5),
                                  random_claim(rng, m.tree, -0.5, 1.5)};
        const RiskHarnessReport rep = risk_measure_harness(m.tree, m.priors, cs, f, 1, 1.0,
                                                           claims, RobustSolver::CaraExact);
        CHECK(rep.all_ok);
        CHECK(rep.violations == 0);
        CHECK(rep.checks.size() > 20);
    }
}

TEST_CASE("risk measure cash shift on the hedging measure, by hand") {
    // rho(G + 2) = rho(G) - 2 for the binomial call: pi(-G) = -1/3 gives
    // rho(G) = -1/3 and rho(G + 2) = -7/3
    const Market m = testhelp::binomial_call();
    Claim neg;
    neg.value.assign(m.tree.node_count(), 0.0);
    for (int leaf : m.tree.leaves()) neg.value[leaf] = -m.claim.value[leaf];
    const double rhoG = superreplication_price(m.tree, m.priors, neg).price;
    CHECK(rhoG == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    Claim neg_shift = neg;
    for (int leaf : m.tree.leaves()) neg_shift.value[leaf] -= 2.0;
    const double rho_shifted = superreplication_price(m.tree, m.priors, neg_shift).price;
    CHECK(rho_shifted == doctest::Approx(rhoG - 2.0).epsilon(1e-12));
}

TEST_CASE("wealth bound certificate") {
    const AlphaOptions aopt{12, 0};
    // zero strategy: |V| = x and M >= 1 make the bound trivial
    {
        const Market m = load_data_market("trinomial2.json");
        const ChargedSet cs = charged_set(m.tree, m.priors);
        Vec alpha(m.tree.node_count(), 0.0);
        for (const Node& nd : m.tree.nodes())
            if (!nd.children.empty() && cs.is_charged(nd.id))
                alpha[nd.id] = compute_alpha(m.tree, m.priors, cs, nd.id, aopt);
        const WealthBoundReport rep = wealth_bound_certificate(
            m.tree, m.priors, cs, alpha, Strategy::zeros(m.tree), 5.0);
        CHECK(rep.admissible);
        CHECK(rep.bound_ok);
        for (int id = 0; id < m.tree.node_count(); ++id)
            if (cs.is_charged(id)) CHECK(rep.M[id] >= 1.0 - 1e-12);
    }
    // binomial: M at the up leaf is 1 + |dS| / alpha by the product rule
    {
        const Market m = testhelp::binomial_call();
        const ChargedSet cs = charged_set(m.tree, m.priors);
        Vec alpha(m.tree.node_count(), 0.0);
        alpha[0] = compute_alpha(m.tree, m.priors, cs, 0, aopt);
        const WealthBoundReport rep = wealth_bound_certificate(
            m.tree, m.priors, cs, alpha, Strategy::zeros(m.tree), 1.0);
        CHECK(rep.M[1] == doctest::Approx(1.0 + 1.0 / alpha[0]).epsilon(1e-12));
        CHECK(rep.M[2] == doctest::Approx(1.0 + 0.5 / alpha[0]).epsilon(1e-12));
    }
    // x = 0 forces zero wealth everywhere for admissible strategies
    {
        const Market m = testhelp::binomial_call();
        const ChargedSet cs = charged_set(m.tree, m.priors);
        Vec alpha(m.tree.node_count(), 0.0);
        alpha[0] = compute_alpha(m.tree, m.priors, cs, 0, aopt);
        const WealthBoundReport rep = wealth_bound_certificate(
            m.tree, m.priors, cs, alpha, Strategy::zeros(m.tree), 0.0);
        CHECK(rep.admissible);
        CHECK(rep.bound_ok);
    }
    // random admissible strategies on the shipped markets stay within x M
    {
        Rng rng(67);
        for (const char* name : {"binomial.json", "trinomial1.json", "trinomial2.json",
                                 "twoasset.json"}) {
            const Market m = load_data_market(name);
            const ChargedSet cs = charged_set(m.tree, m.priors);
            Vec alpha(m.tree.node_count(), 0.0);
            for (const Node& nd : m.tree.nodes())
                if (!nd.children.empty() && cs.is_charged(nd.id))
                    alpha[nd.id] = compute_alpha(m.tree, m.priors, cs, nd.id, aopt);
            for (int trial = 0; trial < 10; ++trial) {
                const double x = rng.uniform(0.2, 2.0);
                Strategy s = Strategy::zeros(m.tree);
                for (auto& h : s.holding)
                    for (double& v : h) v = rng.uniform(-1.0, 1.0);
                // scale down until the terminal floor V_T >= 0 holds
                double worst = 0.0;
                const Vec w = wealth_process(m.tree, s, x);
                for (int leaf : m.tree.leaves())
                    if (cs.is_charged(leaf)) worst = std::min(worst, w[leaf] - x);
                if (worst < 0.0) {
                    const double t = 0.95 * x / (-worst);
                    if (t < 1.0)
                        for (auto& h : s.holding)
                            for (double& v : h) v *= t;
                }
                const WealthBoundReport rep =
                    wealth_bound_certificate(m.tree, m.priors, cs, alpha, s, x);
                CHECK(rep.admissible);
                CHECK(rep.bound_ok);
            }
        }
    }
}

TEST_CASE("exact solver handles extreme risk aversion in log space") {
    const Market m = load_data_market("trinomial2.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f =
        UtilityFamily::load(testhelp::read_data("cara_pow2.json"), m.tree, m.priors);
    // at n = 25 (gamma ~ 3e7) the raw value underflows but the log form
    // stays informative and the price lands essentially on pi
    const IndifferenceResult r =
        indifference_price(m.tree, m.priors, cs, f, 25, m.claim, 1.0, RobustSolver::CaraExact);
    CHECK(r.pi == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.price <= r.pi + 1e-8);
    CHECK(r.pi - r.price <= 1e-5);
}

TEST_CASE("cutting-plane path expands its box for far-out hedges") {
    // scale the basket claim so the optimal holdings leave the initial
    // trust box and the master LP has to widen it
    Market m = load_data_market("twoasset.json");
    for (int leaf : m.tree.leaves()) m.claim.value[leaf] *= 40.0;
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    const double pi = superreplication_price(m.tree, m.priors, m.claim).price;
    CHECK(pi == doctest::Approx(5.0).epsilon(1e-10));  // 40 * 1/8
    const double x = pi + 0.5;
    const double ue = urob(m, f, 1, m.claim, x, RobustSolver::CaraExact).value;
    const double uo = urob(m, f, 1, m.claim, x, RobustSolver::BruteOracle).value;
    CHECK(std::abs(ue - uo) <= 1e-6 * (1.0 + std::abs(uo)));
}

TEST_CASE("tabulated utilities run through grid and oracle consistently") {
    // tabulate a smooth concave curve; both solvers consume the same
    // spline, so they must agree to solver accuracy
    Vec grid, vals;
    for (double z = 0.0; z <= 12.0 + 1e-9; z += 0.05) {
        grid.push_back(z);
        vals.push_back(-std::exp(-1.5 * (z - 1.0)));
    }
    const UtilityFamily f = UtilityFamily::custom_table(grid, vals, 1.0);
    const Market m = load_data_market("trinomial1.json");
    const double x = 1.0 / 3.0 + 0.8;
    const double ug = urob(m, f, 1, m.claim, x, RobustSolver::WealthGrid).value;
    const double uo = urob(m, f, 1, m.claim, x, RobustSolver::BruteOracle).value;
    CHECK(std::abs(ug - uo) <= 1e-6 * (1.0 + std::abs(uo)));
    // and the spline tracks its generator closely enough that the price
    // sits near the closed-form family's price
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily cara = UtilityFamily::cara(Sequence::constant(1.5), 1.0);
    const double ptab = indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0,
                                           RobustSolver::WealthGrid)
                            .price;
    const double pexp = indifference_price(m.tree, m.priors, cs, cara, 1, m.claim, 1.0,
                                           RobustSolver::CaraExact)
                            .price;
    CHECK(ptab == doctest::Approx(pexp).epsilon(1e-4));
}

TEST_CASE("shifted-reference utilities price through the exact solver") {
    const Market m = load_data_market("trinomial1.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    Vec ref(m.tree.node_count(), 0.0);
    ref[1] = 0.6;
    ref[2] = 0.1;
    const UtilityFamily f = UtilityFamily::shifted_cara(1.2, ref, m.tree, cs, 1.0);
    REQUIRE(f.exp_affine());
    const IndifferenceResult r =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::CaraExact);
    const IndifferenceResult ro =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::BruteOracle);
    CHECK(r.price == doctest::Approx(ro.price).epsilon(1e-5));
    CHECK(r.price >= r.pi - 1.0 - 1e-8);
    CHECK(r.price <= r.pi + 1e-8);
}

TEST_CASE("explicit coefficient tables load and price") {
    const Market m = testhelp::binomial_call();
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const std::string text = R"({
      "kind": "random_cara",
      "x0": 1.0,
      "n_range": [1, 2],
      "coeff_table": {
        "1": {"1": 0.8, "2": 1.4},
        "2": {"1": 1.6, "2": 2.8}
      }
    })";
    const UtilityFamily f = UtilityFamily::load(text, m.tree, m.priors);
    CHECK(f.cara_coeff(1, 1) == doctest::Approx(0.8));
    CHECK(f.cara_coeff(2, 2) == doctest::Approx(2.8));
    CHECK(risk_aversion(f, 2, 1, 0.5) == doctest::Approx(1.6));
    const IndifferenceResult r =
        indifference_price(m.tree, m.priors, cs, f, 1, m.claim, 1.0, RobustSolver::CaraExact);
    // complete market: preferences cannot move the replication price
    CHECK(r.price == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
}

TEST_CASE("node-random coefficients are priced by the exact solver") {
    const Market m = load_data_market("trinomial1.json");
    const ChargedSet cs = charged_set(m.tree, m.priors);
    const UtilityFamily f =
        UtilityFamily::load(testhelp::read_data("random_cara.json"), m.tree, m.priors);
    const IndifferenceResult r =
        indifference_price(m.tree, m.priors, cs, f, 2, m.claim, 1.0, RobustSolver::CaraExact);
    const IndifferenceResult ro =
        indifference_price(m.tree, m.priors, cs, f, 2, m.claim, 1.0, RobustSolver::BruteOracle);
    CHECK(r.price == doctest::Approx(ro.price).epsilon(1e-5));
    CHECK(r.price >= r.pi - 1.0 - 1e-8);
    CHECK(r.price <= r.pi + 1e-8);
}
