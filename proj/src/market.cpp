#include "multiprior/market.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

namespace multiprior {

using nlohmann::json;

ScenarioTree ScenarioTree::from_nodes(int dim, const std::vector<int>& parents, const Mat& prices) {
    if (dim < 1) throw ModelError("asset dimension must be at least 1");
    const int n = int(parents.size());
    if (n == 0 || prices.size() != parents.size())
        throw ModelError("node table empty or price table size mismatch");

    ScenarioTree t;
    t.dim_ = dim;
    t.nodes_.resize(n);
    for (int i = 0; i < n; ++i) {
        Node& nd = t.nodes_[i];
        nd.id = i;
        nd.parent = parents[i];
        if (i == 0) {
            if (nd.parent != -1) throw ModelError("node 0 must be the root");
        } else {
            if (nd.parent < 0 || nd.parent >= i)
                throw ModelError("parent of node " + std::to_string(i) + " must be an earlier node");
            t.nodes_[nd.parent].children.push_back(i);
        }
        if (int(prices[i].size()) != dim)
            throw ModelError("price vector of node " + std::to_string(i) + " has wrong dimension");
        for (double v : prices[i])
            if (!std::isfinite(v))
                throw ModelError("price of node " + std::to_string(i) + " is not finite");
        nd.price = prices[i];
        nd.time = (i == 0) ? 0 : t.nodes_[nd.parent].time + 1;
    }
    int horizon = 0;
    for (const Node& nd : t.nodes_) horizon = std::max(horizon, nd.time);
    if (horizon < 1) throw ModelError("horizon must be at least 1");
    t.horizon_ = horizon;
    t.levels_.assign(horizon + 1, {});
    for (const Node& nd : t.nodes_) {
        t.levels_[nd.time].push_back(nd.id);
        if (nd.children.empty()) {
            if (nd.time != horizon)
                throw ModelError("leaf node " + std::to_string(nd.id) + " is not at depth " +
                                 std::to_string(horizon));
            t.leaves_.push_back(nd.id);
        }
    }
    return t;
}

Vec ScenarioTree::increment(int child_id) const {
    const Node& c = nodes_[child_id];
    return sub(c.price, nodes_[c.parent].price);
}

PriorSet PriorSet::from_extremes(const ScenarioTree& tree, const std::map<int, Mat>& extremes) {
    PriorSet p;
    p.extremes_.assign(tree.node_count(), {});
    for (const auto& [id, vecs] : extremes) {
        if (id < 0 || id >= tree.node_count())
            throw ModelError("prior given for unknown node " + std::to_string(id));
        if (tree.is_leaf(id))
            throw ModelError("prior given for leaf node " + std::to_string(id));
        if (vecs.empty())
            throw ModelError("empty prior list at node " + std::to_string(id));
        const size_t k = tree.node(id).children.size();
        Mat clean;
        for (const Vec& v : vecs) {
            if (v.size() != k)
                throw ModelError("prior length mismatch at node " + std::to_string(id));
            double s = 0.0;
            for (double q : v) {
                if (!(q >= 0.0))
                    throw ModelError("negative prior entry at node " + std::to_string(id));
                s += q;
            }
            if (std::abs(s - 1.0) > 1e-12)
                throw ModelError("prior not normalized at node " + std::to_string(id));
            Vec w = v;
            for (double& q : w) q /= s;
            clean.push_back(std::move(w));
        }
        p.extremes_[id] = std::move(clean);
    }
    for (const Node& nd : tree.nodes())
        if (!nd.children.empty() && p.extremes_[nd.id].empty())
            throw ModelError("no prior given at node " + std::to_string(nd.id));
    return p;
}

ChargedSet charged_set(const ScenarioTree& tree, const PriorSet& priors) {
    ChargedSet cs;
    const int n = tree.node_count();
    cs.node.assign(n, 0);
    cs.edge.assign(n, 0);
    cs.edge[0] = 1;
    cs.node[0] = 1;
    for (const Node& nd : tree.nodes()) {
        if (nd.children.empty()) continue;
        for (size_t j = 0; j < nd.children.size(); ++j) {
            bool hit = false;
            for (const Vec& e : priors.extremes(nd.id))
                if (e[j] > 0.0) { hit = true; break; }
            const int c = nd.children[j];
            cs.edge[c] = hit ? 1 : 0;
            cs.node[c] = (hit && cs.node[nd.id]) ? 1 : 0;
        }
    }
    return cs;
}

namespace {

int require_int(const json& j, const char* what) {
    if (!j.is_number_integer())
        throw ParseError(std::string("field '") + what + "' must be an integer");
    return j.get<int>();
}

double require_num(const json& j, const char* what) {
    if (!j.is_number())
        throw ParseError(std::string("field '") + what + "' must be a number");
    double v = j.get<double>();
    if (!std::isfinite(v))
        throw ParseError(std::string("field '") + what + "' is not finite");
    return v;
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw ParseError(std::string("unknown field '") + it.key() + "' in " + where);
}

}  // namespace

Market load_market(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("market file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("market file must be a JSON object");
    reject_unknown(j, {"d", "T", "nodes", "priors", "claim"}, "market file");
    if (!j.contains("d") || !j.contains("T") || !j.contains("nodes") || !j.contains("priors"))
        throw ParseError("market file needs fields d, T, nodes, priors");

    const int d = require_int(j["d"], "d");
    const int T = require_int(j["T"], "T");
    if (!j["nodes"].is_array()) throw ParseError("'nodes' must be an array");

    std::vector<int> parents;
    Mat prices;
    int expect = 0;
    for (const json& nj : j["nodes"]) {
        if (!nj.is_object()) throw ParseError("node entries must be objects");
        reject_unknown(nj, {"id", "parent", "price"}, "node entry");
        if (!nj.contains("id") || !nj.contains("parent") || !nj.contains("price"))
            throw ParseError("node entry needs id, parent, price");
        const int id = require_int(nj["id"], "id");
        if (id != expect)
            throw ParseError("node ids must be 0,1,2,... in order; got " + std::to_string(id));
        ++expect;
        int parent = -1;
        if (!nj["parent"].is_null()) parent = require_int(nj["parent"], "parent");
        parents.push_back(parent);
        if (!nj["price"].is_array()) throw ParseError("node price must be an array");
        Vec p;
        for (const json& v : nj["price"]) p.push_back(require_num(v, "price"));
        prices.push_back(std::move(p));
    }

    ScenarioTree tree = ScenarioTree::from_nodes(d, parents, prices);
    if (tree.horizon() != T)
        throw ModelError("declared horizon T=" + std::to_string(T) + " but tree depth is " +
                         std::to_string(tree.horizon()));

    if (!j["priors"].is_object()) throw ParseError("'priors' must be an object keyed by node id");
    std::map<int, Mat> ext;
    for (auto it = j["priors"].begin(); it != j["priors"].end(); ++it) {
        int id;
        try {
            id = std::stoi(it.key());
        } catch (...) {
            throw ParseError("prior key '" + it.key() + "' is not a node id");
        }
        if (!it.value().is_array()) throw ParseError("priors of a node must be an array of arrays");
        Mat vecs;
        for (const json& vj : it.value()) {
            if (!vj.is_array()) throw ParseError("each prior must be an array of probabilities");
            Vec v;
            for (const json& q : vj) v.push_back(require_num(q, "prior entry"));
            vecs.push_back(std::move(v));
        }
        ext[id] = std::move(vecs);
    }
    PriorSet priors = PriorSet::from_extremes(tree, ext);

    Claim claim;
    claim.value.assign(tree.node_count(), 0.0);
    if (j.contains("claim")) {
        if (!j["claim"].is_object()) throw ParseError("'claim' must be an object keyed by leaf id");
        std::set<int> seen;
        for (auto it = j["claim"].begin(); it != j["claim"].end(); ++it) {
            int id;
            try {
                id = std::stoi(it.key());
            } catch (...) {
                throw ParseError("claim key '" + it.key() + "' is not a node id");
            }
            if (id < 0 || id >= tree.node_count() || !tree.is_leaf(id))
                throw ModelError("claim given at non-leaf node " + std::to_string(id));
            claim.value[id] = require_num(it.value(), "claim value");
            seen.insert(id);
        }
        for (int leaf : tree.leaves())
            if (!seen.count(leaf))
                throw ModelError("claim missing at leaf " + std::to_string(leaf));
    }

    return Market{std::move(tree), std::move(priors), std::move(claim)};
}

std::string save_market(const Market& m) {
    json j;
    j["d"] = m.tree.dim();
    j["T"] = m.tree.horizon();
    j["nodes"] = json::array();
    for (const Node& nd : m.tree.nodes()) {
        json nj;
        nj["id"] = nd.id;
        if (nd.parent < 0)
            nj["parent"] = nullptr;
        else
            nj["parent"] = nd.parent;
        nj["price"] = nd.price;
        j["nodes"].push_back(nj);
    }
    j["priors"] = json::object();
    for (const Node& nd : m.tree.nodes())
        if (!nd.children.empty()) j["priors"][std::to_string(nd.id)] = m.priors.extremes(nd.id);
    j["claim"] = json::object();
    for (int leaf : m.tree.leaves()) j["claim"][std::to_string(leaf)] = m.claim.value[leaf];
    return j.dump(2);
}

Strategy Strategy::zeros(const ScenarioTree& tree) {
    Strategy s;
    s.holding.assign(tree.node_count(), Vec(tree.dim(), 0.0));
    return s;
}

Vec wealth_process(const ScenarioTree& tree, const Strategy& s, double x) {
    Vec v(tree.node_count(), 0.0);
    v[0] = x;
    for (const Node& nd : tree.nodes()) {
        for (int c : nd.children) {
            const Vec ds = tree.increment(c);
            v[c] = v[nd.id] + dot(s.holding[nd.id], ds);
        }
    }
    return v;
}

std::map<int, double> terminal_wealth(const ScenarioTree& tree, const Strategy& s, double x) {
    const Vec v = wealth_process(tree, s, x);
    std::map<int, double> out;
    for (int leaf : tree.leaves()) out[leaf] = v[leaf];
    return out;
}

namespace {

double robust_expectation(const ScenarioTree& tree, const PriorSet& priors,
                          const ChargedSet& charged, const Vec& leaf_value, bool take_min) {
    Vec val(tree.node_count(), 0.0);
    for (int leaf : tree.leaves()) val[leaf] = leaf_value[leaf];
    for (int t = tree.horizon() - 1; t >= 0; --t) {
        for (int id : tree.level(t)) {
            const Node& nd = tree.node(id);
            if (nd.children.empty() || !charged.is_charged(id)) continue;
            double best = take_min ? kInf : -kInf;
            for (const Vec& e : priors.extremes(id)) {
                double s = 0.0;
                for (size_t jj = 0; jj < nd.children.size(); ++jj)
                    if (e[jj] > 0.0) s += e[jj] * val[nd.children[jj]];
                best = take_min ? std::min(best, s) : std::max(best, s);
            }
            val[id] = best;
        }
    }
    return val[0];
}

}  // namespace

double robust_inf_expectation(const ScenarioTree& tree, const PriorSet& priors,
                              const ChargedSet& charged, const Vec& leaf_value) {
    return robust_expectation(tree, priors, charged, leaf_value, true);
}

double robust_sup_expectation(const ScenarioTree& tree, const PriorSet& priors,
                              const ChargedSet& charged, const Vec& leaf_value) {
    return robust_expectation(tree, priors, charged, leaf_value, false);
}

Vec robust_inf_argmin(const ScenarioTree& tree, const PriorSet& priors, const ChargedSet& charged,
                      const Vec& leaf_value) {
    Vec val(tree.node_count(), 0.0);
    std::vector<int> pick(tree.node_count(), 0);
    for (int leaf : tree.leaves()) val[leaf] = leaf_value[leaf];
    for (int t = tree.horizon() - 1; t >= 0; --t) {
        for (int id : tree.level(t)) {
            const Node& nd = tree.node(id);
            if (nd.children.empty() || !charged.is_charged(id)) continue;
            double best = kInf;
            const Mat& ext = priors.extremes(id);
            for (size_t e = 0; e < ext.size(); ++e) {
                double s = 0.0;
                for (size_t jj = 0; jj < nd.children.size(); ++jj)
                    if (ext[e][jj] > 0.0) s += ext[e][jj] * val[nd.children[jj]];
                if (s < best) {
                    best = s;
                    pick[id] = int(e);
                }
            }
            val[id] = best;
        }
    }
    Vec prob(tree.node_count(), 0.0);
    prob[0] = 1.0;
    for (const Node& nd : tree.nodes()) {
        if (nd.children.empty() || !charged.is_charged(nd.id)) continue;
        const Vec& e = priors.extremes(nd.id)[pick[nd.id]];
        for (size_t jj = 0; jj < nd.children.size(); ++jj)
            prob[nd.children[jj]] = prob[nd.id] * e[jj];
    }
    return prob;
}

long long pasting_count(const ScenarioTree& tree, const PriorSet& priors, long long cap) {
    long long n = 1;
    for (const Node& nd : tree.nodes()) {
        if (nd.children.empty()) continue;
        n *= priors.count(nd.id);
        if (n >= cap) return cap;
    }
    return n;
}

Mat enumerate_extreme_pastings(const ScenarioTree& tree, const PriorSet& priors, long long cap) {
    if (pasting_count(tree, priors, cap) >= cap)
        throw ScopeError("too many extreme pastings to enumerate");
    std::vector<int> inner;  // non-leaf node ids, ascending
    for (const Node& nd : tree.nodes())
        if (!nd.children.empty()) inner.push_back(nd.id);

    Mat out;
    std::vector<int> pick(inner.size(), 0);
    while (true) {
        Vec prob(tree.node_count(), 0.0);
        prob[0] = 1.0;
        for (const Node& nd : tree.nodes()) {
            if (nd.children.empty()) continue;
            const size_t slot = std::lower_bound(inner.begin(), inner.end(), nd.id) - inner.begin();
            const Vec& e = priors.extremes(nd.id)[pick[slot]];
            for (size_t jj = 0; jj < nd.children.size(); ++jj)
                prob[nd.children[jj]] = prob[nd.id] * e[jj];
        }
        out.push_back(std::move(prob));
        size_t k = 0;
        while (k < inner.size()) {
            if (++pick[k] < priors.count(inner[k])) break;
            pick[k] = 0;
            ++k;
        }
        if (k == inner.size()) break;
    }
    return out;
}

bool claim_nonnegative(const Claim& g, const ScenarioTree& tree, const ChargedSet& charged) {
    for (int leaf : tree.leaves())
        if (charged.is_charged(leaf) && g.value[leaf] < 0.0) return false;
    return true;
}

double claim_abs_sup(const Claim& g, const ScenarioTree& tree, const ChargedSet& charged) {
    double m = 0.0;
    for (int leaf : tree.leaves())
        if (charged.is_charged(leaf)) m = std::max(m, std::abs(g.value[leaf]));
    return m;
}

double claim_sup(const Claim& g, const ScenarioTree& tree, const ChargedSet& charged) {
    double m = -kInf;
    for (int leaf : tree.leaves())
        if (charged.is_charged(leaf)) m = std::max(m, g.value[leaf]);
    return m;
}

}  // namespace multiprior
