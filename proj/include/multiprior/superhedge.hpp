#pragma once

#include "multiprior/market.hpp"

namespace multiprior {

struct SuperhedgeResult {
    double price = 0.0;
    Strategy strategy;
    /// Minimal superhedging capital per node; -inf at uncharged nodes,
    /// which carry no quasi-sure constraint.
    Vec node_values;
    double dual_price = 0.0;
    bool has_dual = false;
    /// Unconditional probability per node of an optimal martingale
    /// measure supported on the charged set.
    Vec dual_mass;
};

struct SuperhedgeOptions {
    bool with_dual = false;
};

/// Minimal capital from which some strategy dominates the claim at every
/// charged leaf, by backward induction: one small LP per charged node,
/// minimum-Euclidean-norm holdings among the optima. Throws SolverError
/// ("unbounded") when one-step arbitrage makes a node LP unbounded.
SuperhedgeResult superreplication_price(const ScenarioTree& tree, const PriorSet& priors,
                                        const Claim& claim, const SuperhedgeOptions& opt = {});

/// pi_sub(G) = -pi(-G); the returned strategy is the buyer's hedge.
SuperhedgeResult subreplication_price(const ScenarioTree& tree, const PriorSet& priors,
                                      const Claim& claim, const SuperhedgeOptions& opt = {});

/// Value of the martingale-measure linear program: maximize E_P G over
/// path measures supported on the charged set whose one-step drift
/// vanishes at every supported node. Linear in the unconditional edge
/// masses. This is the independent counterpart of the backward
/// induction; under no-arbitrage the two agree to LP accuracy.
double dual_price(const ScenarioTree& tree, const PriorSet& priors, const Claim& claim,
                  Vec* node_mass = nullptr);

struct SeparationOptions {
    int eps_dyadic_k = 8;       // epsilon grid step 2^-k
    double strategy_radius = 2.0;
    int strategy_steps = 64;    // per side; grid step = radius / steps
    long max_strategies = 400000;
};

struct SeparationResult {
    bool member = false;
    /// Largest grid epsilon such that every grid strategy leaves, under
    /// some extreme pasting, probability above epsilon of falling more
    /// than epsilon short of B. Zero when the grids are too coarse.
    double epsilon = 0.0;
};

/// Brute-force separation check for B against the claims attainable
/// from capital z after free disposal. Scope-limited to small trees.
SeparationResult separation_certificate(const ScenarioTree& tree, const PriorSet& priors,
                                        const Claim& B, double z,
                                        const SeparationOptions& opt = {});

}  // namespace multiprior
