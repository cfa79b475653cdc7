#pragma once

#include "multiprior/robust.hpp"

#include <cstdint>

namespace multiprior {

struct MarketGenOpts {
    int T_min = 1, T_max = 3;
    int d = 1;
    int min_children = 2, max_children = 4;
    int max_extremes = 3;
    double zero_prob = 0.15;        // chance an extreme drops an edge
    bool force_all_charged = false;
    int max_attempts = 200;
};

/// Seeded random market that passes the node-wise no-arbitrage check;
/// draws are rejected and redrawn until the check passes, so the result
/// is a deterministic function of the generator state.
Market random_na_market(Rng& rng, const MarketGenOpts& opt = {});

Claim random_claim(Rng& rng, const ScenarioTree& tree, double lo, double hi);

struct ExperimentConfig {
    double x0 = 0.0;  // 0 = take the utility file's anchor
    int n_lo = 1, n_hi = 20;
    RobustSolver solver = RobustSolver::CaraExact;
    double tol = 1e-2;
    bool waive_audits = false;
    RobustOpts robust;
};

struct ConvergenceRow {
    int n = 0;
    double param = 0.0;  // risk-aversion envelope when available
    double p = 0.0, p_buyer = 0.0, rho = 0.0;
    double gap_p = 0.0, gap_buyer = 0.0, gap_rho = 0.0;
};

struct ConvergenceReport {
    double pi = 0.0, pi_sub = 0.0, rho_limit = 0.0;
    double x0 = 0.0;
    std::vector<ConvergenceRow> rows;
    double final_gap = kInf;
    bool converged = false;
    bool u1_pass = false, un_pass = false;
    bool audits_waived = false;
    std::string verdict;
};

/// Sweeps the family index computing seller and buyer prices and the
/// induced risk measure, against the replication-free benchmarks pi,
/// pi_sub and rho = pi(-G). Refuses claims that vanish on the charged
/// set, markets with one-step arbitrage, and families that fail the
/// integrability/blow-up audits (unless waived).
ConvergenceReport run_convergence(const Market& m, const UtilityFamily& fam,
                                  const ExperimentConfig& cfg);

std::string convergence_csv(const ConvergenceReport& rep);
std::string convergence_svg(const ConvergenceReport& rep);

struct PropertySuiteReport {
    std::string text;
    bool all_pass = true;
    int checks = 0;
    int violations = 0;
    std::string counterexample;  // serialized market + note, empty if clean
};

/// Seeded randomized checks across the whole library: superreplication
/// duality, risk-measure axioms, price sandwiches, Pratt ranking, solver
/// agreement, projection and charging invariances. Deterministic given
/// the seed; the report text is byte-stable.
PropertySuiteReport run_property_suite(std::uint64_t seed, int instances);

/// |primal - dual| <= tol * (1 + |primal|); the comparison the duality
/// property and its mutation test share.
bool duality_gap_ok(double primal, double dual, double tol = 1e-9);

}  // namespace multiprior
