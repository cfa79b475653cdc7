#pragma once

#include "multiprior/common.hpp"

#include <map>
#include <string>

namespace multiprior {

struct Node {
    int id = 0;
    int parent = -1;  // -1 for the root
    int time = 0;
    Vec price;        // S_t at this node, d entries
    std::vector<int> children;
};

/// Finite event tree carrying a d-dimensional price process. Exactly one
/// root at t = 0, every non-leaf node has at least one child and every
/// leaf sits at depth T. Immutable after construction, so concurrent
/// reads are safe.
class ScenarioTree {
public:
    /// Builds and validates a tree from parent links (parent[i] < i,
    /// parent[0] == -1) and per-node prices.
    static ScenarioTree from_nodes(int dim, const std::vector<int>& parents, const Mat& prices);

    int dim() const { return dim_; }
    int horizon() const { return horizon_; }
    int node_count() const { return int(nodes_.size()); }
    const Node& node(int id) const { return nodes_[id]; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<int>& leaves() const { return leaves_; }
    const std::vector<int>& level(int t) const { return levels_[t]; }
    bool is_leaf(int id) const { return nodes_[id].children.empty(); }

    /// Price increment on the edge into `child_id`.
    Vec increment(int child_id) const;

private:
    int dim_ = 1;
    int horizon_ = 0;
    std::vector<Node> nodes_;
    std::vector<int> leaves_;
    std::vector<std::vector<int>> levels_;
};

/// One-step prior sets stored by their extreme points: for every
/// non-leaf node a nonempty list of probability vectors over that
/// node's children in child-id order. The modeled set is the convex
/// hull; the full prior set over paths is every pasting of per-node
/// selections.
class PriorSet {
public:
    static PriorSet from_extremes(const ScenarioTree& tree, const std::map<int, Mat>& extremes);

    const Mat& extremes(int node_id) const { return extremes_[node_id]; }
    int count(int node_id) const { return int(extremes_[node_id].size()); }

private:
    std::vector<Mat> extremes_;  // by node id, empty at leaves
};

/// Terminal payoff, one value per leaf (stored by node id).
struct Claim {
    Vec value;
    double at(int leaf) const { return value[leaf]; }
};

/// Charged = reachable with positive probability under some pasting.
/// An edge is charged iff some extreme prior of its parent gives it
/// positive mass; a node is charged iff its whole path is.
struct ChargedSet {
    std::vector<char> node;  // by node id
    std::vector<char> edge;  // by child node id, root entry set to 1
    bool is_charged(int id) const { return node[id] != 0; }
};

ChargedSet charged_set(const ScenarioTree& tree, const PriorSet& priors);

struct Market {
    ScenarioTree tree;
    PriorSet priors;
    Claim claim;
};

/// Parses the JSON market format documented in the README. Unknown
/// fields are rejected; prior vectors are renormalized when their sum is
/// within 1e-12 of one and rejected otherwise.
Market load_market(const std::string& text);
std::string save_market(const Market& m);

/// Holdings over (t, t+1], one d-vector per non-leaf node.
struct Strategy {
    Mat holding;  // by node id
    static Strategy zeros(const ScenarioTree& tree);
};

/// V_t at every node for initial capital x: V_child = V_parent + h.dS.
Vec wealth_process(const ScenarioTree& tree, const Strategy& s, double x);
std::map<int, double> terminal_wealth(const ScenarioTree& tree, const Strategy& s, double x);

/// inf / sup over all pasted priors of E_P f for a terminal payoff f
/// given by node id. Evaluated by one backward sweep over extreme
/// one-step priors; valid because the prior set is stable under pasting.
double robust_inf_expectation(const ScenarioTree& tree, const PriorSet& priors,
                              const ChargedSet& charged, const Vec& leaf_value);
double robust_sup_expectation(const ScenarioTree& tree, const PriorSet& priors,
                              const ChargedSet& charged, const Vec& leaf_value);

/// A pasting attaining the infimum, as unconditional node probabilities.
Vec robust_inf_argmin(const ScenarioTree& tree, const PriorSet& priors, const ChargedSet& charged,
                      const Vec& leaf_value);

/// Number of extreme pastings (product over non-leaf nodes), saturating
/// at `cap`.
long long pasting_count(const ScenarioTree& tree, const PriorSet& priors, long long cap);

/// All extreme pastings as leaf-probability vectors (by node id), in
/// mixed-radix order over ascending node ids. Throws ScopeError when the
/// count exceeds `cap`.
Mat enumerate_extreme_pastings(const ScenarioTree& tree, const PriorSet& priors, long long cap);

bool claim_nonnegative(const Claim& g, const ScenarioTree& tree, const ChargedSet& charged);

/// max over charged leaves of |G| resp. G.
double claim_abs_sup(const Claim& g, const ScenarioTree& tree, const ChargedSet& charged);
double claim_sup(const Claim& g, const ScenarioTree& tree, const ChargedSet& charged);

}  // namespace multiprior
