#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "multiprior/market.hpp"

namespace testhelp {

inline std::string read_data(const std::string& name) {
    const std::string path = std::string(MPR_DATA_DIR) + "/" + name;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing data file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline multiprior::Market load_data_market(const std::string& name) {
    return multiprior::load_market(read_data(name));
}

// one-period market with given child prices, extreme priors and payoffs
inline multiprior::Market one_period(double s0, const multiprior::Vec& child_prices,
                                     const multiprior::Mat& extremes,
                                     const multiprior::Vec& payoffs) {
    using namespace multiprior;
    std::vector<int> parents{-1};
    Mat prices{{s0}};
    for (double p : child_prices) {
        parents.push_back(0);
        prices.push_back({p});
    }
    Market m;
    m.tree = ScenarioTree::from_nodes(1, parents, prices);
    m.priors = PriorSet::from_extremes(m.tree, {{0, extremes}});
    m.claim.value.assign(m.tree.node_count(), 0.0);
    for (size_t j = 0; j < payoffs.size(); ++j) m.claim.value[1 + j] = payoffs[j];
    return m;
}

inline multiprior::Market binomial_call() {
    return one_period(1.0, {2.0, 0.5}, {{0.5, 0.5}}, {1.0, 0.0});
}

inline multiprior::Claim claim_of(const multiprior::ScenarioTree& tree,
                                  const multiprior::Vec& leaf_values) {
    multiprior::Claim c;
    c.value.assign(tree.node_count(), 0.0);
    const auto& leaves = tree.leaves();
    for (size_t i = 0; i < leaves.size(); ++i) c.value[leaves[i]] = leaf_values[i];
    return c;
}

inline multiprior::Claim const_claim(const multiprior::ScenarioTree& tree, double v) {
    multiprior::Claim c;
    c.value.assign(tree.node_count(), 0.0);
    for (int leaf : tree.leaves()) c.value[leaf] = v;
    return c;
}

}  // namespace testhelp
