// Acceptance suite: end-to-end checks of the pricing pipeline at fixed
// tolerances, one line per criterion. Exit code is the number of
// failures.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include "helpers.hpp"
#include "multiprior/arbitrage.hpp"
#include "multiprior/experiment.hpp"
#include "multiprior/robust.hpp"
#include "multiprior/superhedge.hpp"
#include "multiprior/utility.hpp"

using namespace multiprior;
using testhelp::load_data_market;
using testhelp::read_data;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  %2d %s: %s\n", ok ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
}

// 1. |primal - dual| <= 1e-9 (1 + |primal|) over 500 seeded markets
void criterion_duality() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(42);
    double worst = 0.0;
    int bad = 0;
    for (int i = 0; i < 500; ++i) {
        MarketGenOpts g;
        g.d = (i % 3 == 2) ? 2 : 1;  // T <= 3, <= 4 children by default
        Market m = random_na_market(rng, g);
        m.claim = random_claim(rng, m.tree, -0.5, 2.0);
        const double primal = superreplication_price(m.tree, m.priors, m.claim).price;
        const double dual = dual_price(m.tree, m.priors, m.claim);
        const double gap = std::abs(primal - dual) / (1.0 + std::abs(primal));
        worst = std::max(worst, gap);
        if (gap > 1e-9) ++bad;
    }
    const double dt = seconds_since(t0);
    report(1, "superhedge duality (500 markets)", bad == 0 && dt < 30.0,
           "max rel gap " + fmt6(worst) + ", " + fmt6(dt) + " s");
}

// 2. hand-solved binomial call: pi = 1/3, h = 2/3, dual mass q = 1/3
void criterion_hand_lp() {
    const Market m = load_data_market("binomial.json");
    SuperhedgeOptions opt;
    opt.with_dual = true;
    const SuperhedgeResult r = superreplication_price(m.tree, m.priors, m.claim, opt);
    const bool ok = std::abs(r.price - 1.0 / 3.0) <= 1e-10 &&
                    std::abs(r.strategy.holding[0][0] - 2.0 / 3.0) <= 1e-10 &&
                    std::abs(r.dual_mass[1] - 1.0 / 3.0) <= 1e-10;
    report(2, "hand-solved binomial call", ok,
           "pi=" + fmt(r.price) + " h=" + fmt(r.strategy.holding[0][0]) +
               " q=" + fmt(r.dual_mass[1]));
}

// 3 + 4. risk-measure axioms at 1e-8 on 200 seeded instances, and the
// superreplication sandwich on the same instances
void criterion_axioms_and_sandwich() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(42);
    const UtilityFamily fam = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    int axiom_bad = 0, sandwich_bad = 0, checks = 0, prices = 0;
    for (int i = 0; i < 200; ++i) {
        MarketGenOpts g;
        g.T_max = 2;
        g.max_children = 3;
        g.max_extremes = 2;
        Market m = random_na_market(rng, g);
        const ChargedSet cs = charged_set(m.tree, m.priors);
        std::vector<Claim> claims{random_claim(rng, m.tree, -0.5, 1.5),
                                  random_claim(rng, m.tree, -0.5, 1.5)};
        const RiskHarnessReport rep = risk_measure_harness(m.tree, m.priors, cs, fam, 1, 1.0,
                                                           claims, RobustSolver::CaraExact, 1e-8);
        axiom_bad += rep.violations;
        checks += int(rep.checks.size());
        for (const Claim& gcl : claims) {
            const IndifferenceResult r = indifference_price(m.tree, m.priors, cs, fam, 1, gcl,
                                                            1.0, RobustSolver::CaraExact);
            ++prices;
            if (!(r.price >= r.pi - 1.0 - 1e-8 && r.price <= r.pi + 1e-8)) ++sandwich_bad;
        }
    }
    const double dt = seconds_since(t0);
    report(3, "risk-measure axioms (200 instances)", axiom_bad == 0,
           std::to_string(checks) + " checks, " + std::to_string(axiom_bad) + " violations, " +
               fmt6(dt) + " s");
    report(4, "price sandwich on the same instances", sandwich_bad == 0,
           std::to_string(prices) + " prices, " + std::to_string(sandwich_bad) + " violations");
}

// 5. convergence of seller/buyer prices and the induced risk measure on
// the shipped trinomial market with doubling risk aversion
void criterion_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    const Market m = load_data_market("trinomial2.json");
    const UtilityFamily fam = UtilityFamily::load(read_data("cara_pow2.json"), m.tree, m.priors);
    ExperimentConfig cfg;
    cfg.n_lo = 1;
    cfg.n_hi = 30;
    cfg.tol = 1e-2;
    const ConvergenceReport rep = run_convergence(m, fam, cfg);
    const ConvergenceRow& r20 = rep.rows[19];
    const ConvergenceRow& r30 = rep.rows[29];
    const double dt = seconds_since(t0);
    bool ok = dt < 60.0;
    ok = ok && r20.gap_p < 1e-2 && r20.gap_p >= -1e-8;
    ok = ok && r30.gap_p < 1e-4 && r30.gap_p >= -1e-8;
    ok = ok && std::abs(r20.gap_buyer) < 1e-2;
    ok = ok && std::abs(r20.gap_rho) < 1e-2;
    report(5, "indifference prices approach the hedging bounds", ok,
           "gap(20)=" + fmt6(r20.gap_p) + " gap(30)=" + fmt6(r30.gap_p) +
               " buyer(20)=" + fmt6(r20.gap_buyer) + " rho(20)=" + fmt6(r20.gap_rho) + ", " +
               fmt6(dt) + " s");
}

// 6. certainty equivalent closed form and the per-prior minimum
void criterion_certainty_equivalent() {
    const UtilityFamily fam = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
    const Market coin = testhelp::one_period(1.0, {2.0, 0.5}, {{0.5, 0.5}}, {1.0, 0.0});
    Vec prob(coin.tree.node_count(), 0.0);
    prob[1] = prob[2] = 0.5;
    const double e = certainty_equivalent_mono(fam, 1, coin.tree, prob, coin.claim);
    const double oracle = -std::log(0.5 * (1.0 + std::exp(-1.0)));
    bool ok = std::abs(e - oracle) <= 1e-9;

    const Market two = testhelp::one_period(1.0, {2.0, 0.5}, {{0.7, 0.3}, {0.3, 0.7}},
                                            {0.0, 1.0});
    const ChargedSet cs = charged_set(two.tree, two.priors);
    const CEReport rep = certainty_equivalent_robust(fam, 1, two.tree, two.priors, cs, two.claim);
    ok = ok && rep.enumerated && rep.cross_check_gap <= 1e-9;
    ok = ok && std::abs(rep.e_robust - (-std::log(0.7 + 0.3 * std::exp(-1.0)))) <= 1e-9;
    report(6, "certainty equivalent closed forms", ok,
           "e=" + fmt(e) + " (oracle " + fmt(oracle) + "), robust cross-check gap " +
               fmt6(rep.cross_check_gap));
}

// 7. higher risk aversion never raises the certainty equivalent
void criterion_pratt() {
    Rng rng(42);
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
        MarketGenOpts g;
        g.T_max = 2;
        const Market m = random_na_market(rng, g);
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const Claim gcl = random_claim(rng, m.tree, 0.0, 2.0);
        const double gb = rng.uniform(0.5, 2.5);
        const double ga = gb + rng.uniform(0.25, 2.5);
        const UtilityFamily A = UtilityFamily::cara(Sequence::constant(ga), 1.0);
        const UtilityFamily B = UtilityFamily::cara(Sequence::constant(gb), 1.0);
        const double eA = certainty_equivalent_robust(A, 1, m.tree, m.priors, cs, gcl).e_robust;
        const double eB = certainty_equivalent_robust(B, 1, m.tree, m.priors, cs, gcl).e_robust;
        if (!(eA <= eB + 1e-9)) ++bad;
    }
    report(7, "risk-aversion ranking of certainty equivalents", bad == 0,
           "100 claims, " + std::to_string(bad) + " violations");
}

// 8. the three solvers agree on every shipped instance of depth <= 2
void criterion_solver_agreement() {
    double worst = 0.0;
    bool ok = true;
    const UtilityFamily fam = UtilityFamily::cara(Sequence::constant(1.5), 1.0);
    for (const char* name :
         {"binomial.json", "trinomial1.json", "trinomial2.json", "twoasset.json"}) {
        const Market m = load_data_market(name);
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const double pi = superreplication_price(m.tree, m.priors, m.claim).price;
        for (double off : {0.25, 1.0}) {
            const double x = pi + off;
            const double ue =
                robust_utility(m.tree, m.priors, cs, fam, 1, m.claim, x, RobustSolver::CaraExact)
                    .value;
            const double ug =
                robust_utility(m.tree, m.priors, cs, fam, 1, m.claim, x, RobustSolver::WealthGrid)
                    .value;
            const double uo =
                robust_utility(m.tree, m.priors, cs, fam, 1, m.claim, x, RobustSolver::BruteOracle)
                    .value;
            const double scale = 1.0 + std::abs(uo);
            worst = std::max({worst, std::abs(ue - uo) / scale, std::abs(ug - uo) / scale});
            ok = ok && std::abs(ue - uo) <= 1e-6 * scale && std::abs(ug - uo) <= 1e-6 * scale;
        }
    }
    // a non-exponential family through the wealth grid
    {
        const Market m = load_data_market("trinomial1.json");
        const ChargedSet cs = charged_set(m.tree, m.priors);
        const UtilityFamily crra = UtilityFamily::crra(Sequence::constant(0.5), 1.0);
        const double x = 1.0 / 3.0 + 1.0;
        const double ug =
            robust_utility(m.tree, m.priors, cs, crra, 1, m.claim, x, RobustSolver::WealthGrid)
                .value;
        const double uo =
            robust_utility(m.tree, m.priors, cs, crra, 1, m.claim, x, RobustSolver::BruteOracle)
                .value;
        const double scale = 1.0 + std::abs(uo);
        worst = std::max(worst, std::abs(ug - uo) / scale);
        ok = ok && std::abs(ug - uo) <= 1e-6 * scale;
    }
    report(8, "solver agreement against the oracle", ok, "max rel spread " + fmt6(worst));
}

// 9. |V_t| <= x M_t along charged paths for projected random strategies
void criterion_wealth_bound() {
    Rng rng(42);
    const AlphaOptions aopt{12, 0};
    int bad = 0, total = 0;
    for (const char* name :
         {"binomial.json", "trinomial1.json", "trinomial2.json", "twoasset.json"}) {
        const Market m = load_data_market(name);
        const ChargedSet cs = charged_set(m.tree, m.priors);
        Vec alpha(m.tree.node_count(), 0.0);
        for (const Node& nd : m.tree.nodes())
            if (!nd.children.empty() && cs.is_charged(nd.id))
                alpha[nd.id] = compute_alpha(m.tree, m.priors, cs, nd.id, aopt);
        for (int trial = 0; trial < 25; ++trial) {
            const double x = rng.uniform(0.2, 2.0);
            Strategy s = Strategy::zeros(m.tree);
            for (auto& h : s.holding)
                for (double& v : h) v = rng.uniform(-1.5, 1.5);
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
            ++total;
            if (!rep.admissible || !rep.bound_ok) ++bad;
        }
    }
    report(9, "wealth bound certificate", bad == 0,
           std::to_string(total) + " strategies, " + std::to_string(bad) + " violations");
}

// 10. the seeded property suite replays byte for byte
void criterion_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const PropertySuiteReport a = run_property_suite(42, 200);
    const PropertySuiteReport b = run_property_suite(42, 200);
    const double dt = seconds_since(t0);
    const bool ok = a.all_pass && b.all_pass && a.text == b.text;
    report(10, "property suite determinism (seed 42)", ok,
           std::string(a.text == b.text ? "byte-identical" : "reports differ") + ", " +
               (a.all_pass ? "all pass" : "violations") + ", " + fmt6(dt) + " s");
}

}  // namespace

int main() {
    std::printf("multiprior acceptance suite\n");
    criterion_duality();
    criterion_hand_lp();
    criterion_axioms_and_sandwich();
    criterion_convergence();
    criterion_certainty_equivalent();
    criterion_pratt();
    criterion_solver_agreement();
    criterion_wealth_bound();
    criterion_determinism();
    std::printf("%s (%d failure%s)\n", failures == 0 ? "ALL CRITERIA PASS" : "FAILURES PRESENT",
                failures, failures == 1 ? "" : "s");
    return failures;
}
