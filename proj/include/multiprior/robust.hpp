#pragma once

#include "multiprior/market.hpp"
#include "multiprior/superhedge.hpp"
#include "multiprior/utility.hpp"

namespace multiprior {

enum class RobustSolver { CaraExact, WealthGrid, BruteOracle };

struct RobustOpts {
    int golden_iters = 72;      // inner line-search iterations
    double floor_tol = 1e-9;    // slack allowed on the quasi-sure floor
    int grid_points = 2048;     // wealth-grid resolution before refinement
    int max_refinements = 4;
    double refine_tol = 1e-7;   // root-value movement that triggers refinement
    int zoom_rounds = 42;       // shrinking-grid maximizer
    int zoom_points = 7;
    double oracle_radius = 8.0;
    int max_oracle_dims = 6;    // strategy components the oracle will enumerate
    double kelley_gap = 1e-10;  // cutting-plane stopping gap
    int kelley_max_iter = 400;
    double bisect_tol = 1e-10;  // indifference-price tolerance in z
    double bracket_pad = 1.0;
    double alpha_floor = 0.05;  // fallback level for wealth-grid bounds
};

/// Worst-case expected utility u(G, x) over strategies whose terminal
/// wealth dominates the claim at every charged leaf.
struct RobustValue {
    double value = -kInf;
    /// ln(-u) for the exponential solver; well scaled at any risk
    /// aversion, unlike `value` which under/overflows for large
    /// coefficients.
    double log_neg = kInf;
    bool has_log = false;
    bool inadmissible = false;  // no strategy satisfies the floor
    Strategy strategy;
    RobustSolver solver = RobustSolver::BruteOracle;
    double inner_gap = 0.0;
    int iterations = 0;
};

/// Is a strictly better than b as a robust value?
bool robust_value_less(const RobustValue& a, const RobustValue& b);

/// Three interchangeable solver paths:
///  - CaraExact: exponential members; exact nested recursion in log
///    space for d = 1 at any horizon, cutting-plane for one period in
///    any dimension. The floor enters through the superhedging node
///    values, which describe it exactly on a finite tree.
///  - WealthGrid: any family; backward recursion over a concave
///    piecewise-linear wealth grid (valid because the prior set is
///    stable under pasting), doubling the grid until the root value
///    settles.
///  - BruteOracle: shrinking grid search over the whole strategy vector
///    with the inner infimum taken exactly over extreme pastings; the
///    reference the other two are compared against.
RobustValue robust_utility(const ScenarioTree& tree, const PriorSet& priors,
                           const ChargedSet& charged, const UtilityFamily& fam, int n,
                           const Claim& claim, double x, RobustSolver solver,
                           const RobustOpts& opt = {});

struct IndifferenceResult {
    double price = kInf;
    bool no_finite_price = false;
    double bracket_lo = 0.0, bracket_hi = 0.0;
    int iterations = 0;
    double pi = 0.0;  // superreplication price of the claim
    RobustValue u0;   // value without the claim
};

/// Seller reservation price: smallest z with u(G, x + z) >= u(0, x),
/// bisected inside [pi(G) - x - pad, pi(G) + pad] (the price always
/// lands there; the bracket expands geometrically as a safety net).
IndifferenceResult indifference_price(const ScenarioTree& tree, const PriorSet& priors,
                                      const ChargedSet& charged, const UtilityFamily& fam, int n,
                                      const Claim& claim, double x, RobustSolver solver,
                                      const RobustOpts& opt = {});

struct BuyerResult {
    double price = -kInf;
    bool no_finite_price = false;
    double pi_sub = 0.0;
    bool upper_bound_ok = true;  // price <= pi_sub + x, checked on every run
};

/// Buyer price computed as -p(-G, x).
BuyerResult buyer_price(const ScenarioTree& tree, const PriorSet& priors,
                        const ChargedSet& charged, const UtilityFamily& fam, int n,
                        const Claim& claim, double x, RobustSolver solver,
                        const RobustOpts& opt = {});

struct AxiomCheck {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    bool ok = true;
};

struct RiskHarnessReport {
    std::vector<AxiomCheck> checks;
    int violations = 0;
    bool all_ok = true;
    double tol = 1e-8;
};

/// Evaluates rho(G) = pi(-G) and rho_x(G) = p(-G, x) on the given
/// claims plus generated pairs/shifts, and checks monotonicity, cash
/// invariance, convexity, normalization and the no-free-round-trip
/// inequality rho_x(G) + rho_x(-G) >= 0.
RiskHarnessReport risk_measure_harness(const ScenarioTree& tree, const PriorSet& priors,
                                       const ChargedSet& charged, const UtilityFamily& fam, int n,
                                       double x, const std::vector<Claim>& claims,
                                       RobustSolver solver, double tol = 1e-8,
                                       const RobustOpts& opt = {});

struct WealthBoundReport {
    Vec M;  // multiplicative wealth bound per node (charged paths)
    bool admissible = true;
    bool bound_ok = true;
    std::vector<int> violating_nodes;
    bool projection_changed = false;
    double K_x = kInf;
    bool has_Kx = false;
};

/// Checks |V_t| <= x * M_t along charged paths for the D-projected
/// strategy, where M multiplies (1 + |dS|/alpha) edge by edge, and
/// reports the worst-case bound K_x on E_P U_n^+(., V_T) when a family
/// is supplied.
WealthBoundReport wealth_bound_certificate(const ScenarioTree& tree, const PriorSet& priors,
                                           const ChargedSet& charged, const Vec& alpha_by_node,
                                           const Strategy& s, double x,
                                           const UtilityFamily* fam = nullptr, double q = 2.0);

}  // namespace multiprior
