#pragma once

#include "multiprior/market.hpp"

namespace multiprior {

/// One-step no-arbitrage report for a non-leaf node.
struct NodeNAReport {
    int node = -1;
    bool charged = false;
    bool na_holds = true;
    /// When na_holds is false: h with h.dS >= 0 on every charged child
    /// and > 0 on at least one.
    Vec arbitrage_direction;
    /// Orthonormal basis of the span of charged price increments.
    Mat D_basis;
    /// Under one-step no-arbitrage the affine hull of the charged
    /// increments is a linear space and equals that span; when the check
    /// fails this is set to false and D_basis still spans the increments.
    bool D_is_linear = true;
    /// Quantitative no-arbitrage level (filled by compute_alpha).
    double alpha = 0.0;
    bool alpha_filled = false;
    /// D = {0}: the condition on unit directions is vacuous.
    bool alpha_not_applicable = false;
};

struct NAResult {
    bool global_na = true;
    std::vector<NodeNAReport> nodes;  // one entry per non-leaf node, ascending id
    const NodeNAReport& report_for(int node_id) const;
};

/// Decides NA one node at a time: arbitrage at a charged node means some
/// h gains on a charged child without losing on any. Solved as a small
/// LP maximizing the total slack of h.dS over charged children with
/// |h|_inf <= 1; a positive optimum is an arbitrage certificate.
NAResult check_na(const ScenarioTree& tree, const PriorSet& priors);

/// Span of the charged one-step increments at `node_id` as an
/// orthonormal basis. Sets *linear to false when the one-step check
/// fails there and the affine hull need not be a vector space.
Mat compute_D(const ScenarioTree& tree, const ChargedSet& charged, int node_id,
              bool* linear = nullptr);

struct AlphaOptions {
    int dyadic_k = 12;    // candidate grid step 2^-k
    int directions = 0;   // 0 = automatic from dimension
};

/// Largest alpha on the dyadic grid such that every unit direction h in
/// the direction grid over the unit sphere of D admits an extreme prior
/// P with P(h.dS < -alpha) > alpha. Exact in the direction variable for
/// dim D = 1 (only +-1); a grid evaluation for higher dimensions.
/// Returns +inf when D = {0} (vacuous), and 0 when no positive grid
/// value works at this resolution.
double compute_alpha(const ScenarioTree& tree, const PriorSet& priors, const ChargedSet& charged,
                     int node_id, const AlphaOptions& opt = {});

/// Orthogonal projection of a strategy onto D node by node; terminal
/// wealth on charged nodes is unchanged.
Strategy project_onto_D(const ScenarioTree& tree, const ChargedSet& charged, const Strategy& s);

}  // namespace multiprior
