#include "multiprior/utility.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace multiprior {

using nlohmann::json;

double Sequence::at(int n) const {
    switch (kind) {
        case Kind::Const: return value;
        case Kind::List:
            if (n < 1 || n > int(values.size()))
                throw PreconditionError("sequence index " + std::to_string(n) + " out of range");
            return values[n - 1];
        case Kind::Pow2: return std::ldexp(1.0, n);
        case Kind::Geometric: return base * std::pow(ratio, n - 1);
        case Kind::Linear: return base + step * (n - 1);
    }
    return 0.0;
}

namespace {

double cara_value(double gamma, double shift, double x) {
    if (x < 0.0) return -kInf;
    return -std::exp(-gamma * (x - shift));
}

}  // namespace

double UtilityFamily::coeff_generated(int n, int leaf) const {
    auto it = coeff_table_.find(n);
    if (it != coeff_table_.end()) return it->second[leaf];
    const double lo = b_.at(n), hi = B_.at(n);
    if (!(lo > 0.0) || hi < lo)
        throw ModelError("random coefficient bounds must satisfy 0 < b <= B");
    if (leaf_count_ <= 1) return lo;
    const int r = leaf_rank_[leaf];
    if (r < 0) throw PreconditionError("coefficient requested at a non-leaf node");
    return lo + (hi - lo) * double(r) / double(leaf_count_ - 1);
}

double UtilityFamily::value(int n, int leaf, double x) const {
    switch (kind_) {
        case UtilityKind::Cara:
            return cara_value(gamma_.at(n), shift_, x);
        case UtilityKind::Crra: {
            const double b = beta_.at(n);
            if (!(b > 0.0 && b < 1.0)) throw ModelError("crra exponent must lie in (0,1)");
            if (x < 0.0) return -kInf;
            return std::pow(x, b);
        }
        case UtilityKind::Shifted:
            if (x < 0.0) return -kInf;
            return cara_value(gamma_.at(n), shift_, x + ref_sup_ - reference_[leaf]);
        case UtilityKind::RandomCara:
            return cara_value(coeff_generated(n, leaf), shift_, x);
        case UtilityKind::CustomTable:
            if (x < 0.0) return -kInf;
            return custom_value(x);
        case UtilityKind::Normalized: {
            const double d0 = base_->deriv(n, leaf, norm_anchor_);
            return (base_->value(n, leaf, x) - base_->value(n, leaf, norm_anchor_)) / d0;
        }
        case UtilityKind::Affine:
            return alpha_.at(n) * base_->value(n, leaf, x) + beta_shift_.at(n);
    }
    return -kInf;
}

double UtilityFamily::deriv(int n, int leaf, double x) const {
    switch (kind_) {
        case UtilityKind::Cara: {
            const double g = gamma_.at(n);
            return g * std::exp(-g * (x - shift_));
        }
        case UtilityKind::Crra: {
            const double b = beta_.at(n);
            return b * std::pow(x, b - 1.0);
        }
        case UtilityKind::Shifted: {
            const double g = gamma_.at(n);
            const double z = x + ref_sup_ - reference_[leaf];
            return g * std::exp(-g * (z - shift_));
        }
        case UtilityKind::RandomCara: {
            const double g = coeff_generated(n, leaf);
            return g * std::exp(-g * (x - shift_));
        }
        case UtilityKind::CustomTable:
            return custom_deriv(x);
        case UtilityKind::Normalized:
            return base_->deriv(n, leaf, x) / base_->deriv(n, leaf, norm_anchor_);
        case UtilityKind::Affine:
            return alpha_.at(n) * base_->deriv(n, leaf, x);
    }
    return 0.0;
}

double UtilityFamily::deriv2(int n, int leaf, double x) const {
    switch (kind_) {
        case UtilityKind::Cara: {
            const double g = gamma_.at(n);
            return -g * g * std::exp(-g * (x - shift_));
        }
        case UtilityKind::Crra: {
            const double b = beta_.at(n);
            return b * (b - 1.0) * std::pow(x, b - 2.0);
        }
        case UtilityKind::Shifted: {
            const double g = gamma_.at(n);
            const double z = x + ref_sup_ - reference_[leaf];
            return -g * g * std::exp(-g * (z - shift_));
        }
        case UtilityKind::RandomCara: {
            const double g = coeff_generated(n, leaf);
            return -g * g * std::exp(-g * (x - shift_));
        }
        case UtilityKind::CustomTable:
            return custom_deriv2(x);
        case UtilityKind::Normalized:
            return base_->deriv2(n, leaf, x) / base_->deriv(n, leaf, norm_anchor_);
        case UtilityKind::Affine:
            return alpha_.at(n) * base_->deriv2(n, leaf, x);
    }
    return 0.0;
}

bool UtilityFamily::deterministic() const {
    switch (kind_) {
        case UtilityKind::Cara:
        case UtilityKind::Crra:
        case UtilityKind::CustomTable: return true;
        case UtilityKind::Normalized:
        case UtilityKind::Affine: return base_->deterministic();
        default: return false;
    }
}

bool UtilityFamily::exp_affine() const {
    switch (kind_) {
        case UtilityKind::Cara:
        case UtilityKind::Shifted:
        case UtilityKind::RandomCara: return true;
        case UtilityKind::Affine:
            return beta_shift_.kind == Sequence::Kind::Const && beta_shift_.value == 0.0 &&
                   base_->exp_affine();
        default: return false;
    }
}

void UtilityFamily::exp_affine_leaf(int n, int leaf, double& slope, double& icept) const {
    switch (kind_) {
        case UtilityKind::Cara: {
            const double g = gamma_.at(n);
            slope = -g;
            icept = g * shift_;
            return;
        }
        case UtilityKind::Shifted: {
            const double g = gamma_.at(n);
            slope = -g;
            icept = g * (shift_ - ref_sup_ + reference_[leaf]);
            return;
        }
        case UtilityKind::RandomCara: {
            const double g = coeff_generated(n, leaf);
            slope = -g;
            icept = g * shift_;
            return;
        }
        case UtilityKind::Affine: {
            base_->exp_affine_leaf(n, leaf, slope, icept);
            icept += std::log(alpha_.at(n));
            return;
        }
        default:
            throw PreconditionError("utility member is not exponential-affine");
    }
}

double UtilityFamily::cara_coeff(int n, int leaf) const {
    double s, c;
    exp_affine_leaf(n, leaf, s, c);
    return -s;
}

double UtilityFamily::risk_aversion_envelope(int n) const {
    switch (kind_) {
        case UtilityKind::Cara:
        case UtilityKind::Shifted: return gamma_.at(n);
        case UtilityKind::RandomCara: {
            auto it = coeff_table_.find(n);
            if (it == coeff_table_.end()) return b_.at(n);
            double m = kInf;
            for (int leaf = 0; leaf < int(leaf_rank_.size()); ++leaf)
                if (leaf_rank_[leaf] >= 0) m = std::min(m, it->second[leaf]);
            return m;
        }
        case UtilityKind::Normalized:
        case UtilityKind::Affine: return base_->risk_aversion_envelope(n);
        default: return std::nan("");
    }
}

// ----- factories -----

UtilityFamily UtilityFamily::cara(Sequence gamma, double x0, double shift) {
    if (!(x0 > 0.0)) throw ModelError("anchor wealth x0 must be positive");
    UtilityFamily f;
    f.kind_ = UtilityKind::Cara;
    f.gamma_ = std::move(gamma);
    f.x0_ = x0;
    f.shift_ = shift < 0.0 ? x0 : shift;
    return f;
}

UtilityFamily UtilityFamily::crra(Sequence beta, double x0) {
    if (!(x0 > 0.0)) throw ModelError("anchor wealth x0 must be positive");
    UtilityFamily f;
    f.kind_ = UtilityKind::Crra;
    f.beta_ = std::move(beta);
    f.x0_ = x0;
    return f;
}

UtilityFamily UtilityFamily::shifted_cara(double gamma, const Vec& reference,
                                          const ScenarioTree& tree, const ChargedSet& charged,
                                          double x0) {
    if (!(x0 > 0.0)) throw ModelError("anchor wealth x0 must be positive");
    UtilityFamily f;
    f.kind_ = UtilityKind::Shifted;
    f.gamma_ = Sequence::constant(gamma);
    f.x0_ = x0;
    f.shift_ = x0;
    f.reference_ = reference;
    double sup = 0.0;
    for (int leaf : tree.leaves()) {
        if (reference[leaf] < 0.0) throw ModelError("reference payoff must be nonnegative");
        if (charged.is_charged(leaf)) sup = std::max(sup, reference[leaf]);
    }
    f.ref_sup_ = sup;
    return f;
}

UtilityFamily UtilityFamily::random_cara(Sequence b, Sequence B, const ScenarioTree& tree,
                                         double x0, double shift) {
    if (!(x0 > 0.0)) throw ModelError("anchor wealth x0 must be positive");
    UtilityFamily f;
    f.kind_ = UtilityKind::RandomCara;
    f.b_ = std::move(b);
    f.B_ = std::move(B);
    f.x0_ = x0;
    f.shift_ = shift < 0.0 ? x0 : shift;
    f.leaf_rank_.assign(tree.node_count(), -1);
    int r = 0;
    for (int leaf : tree.leaves()) f.leaf_rank_[leaf] = r++;
    f.leaf_count_ = r;
    return f;
}

UtilityFamily UtilityFamily::random_cara_table(std::map<int, Vec> coeff_by_n, double x0,
                                               double shift) {
    if (!(x0 > 0.0)) throw ModelError("anchor wealth x0 must be positive");
    if (coeff_by_n.empty()) throw ModelError("empty coefficient table");
    UtilityFamily f;
    f.kind_ = UtilityKind::RandomCara;
    f.x0_ = x0;
    f.shift_ = shift < 0.0 ? x0 : shift;
    const size_t nnodes = coeff_by_n.begin()->second.size();
    f.leaf_rank_.assign(nnodes, 0);
    f.leaf_count_ = int(nnodes);
    f.coeff_table_ = std::move(coeff_by_n);
    return f;
}

UtilityFamily UtilityFamily::custom_table(Vec grid, Vec values, double x0) {
    if (!(x0 > 0.0)) throw ModelError("anchor wealth x0 must be positive");
    const int n = int(grid.size());
    if (n < 3 || values.size() != grid.size())
        throw ModelError("custom table needs at least 3 grid points and matching values");
    for (int i = 1; i < n; ++i)
        if (grid[i] <= grid[i - 1]) throw ModelError("custom table grid must be increasing");
    UtilityFamily f;
    f.kind_ = UtilityKind::CustomTable;
    f.x0_ = x0;
    f.table_grid_ = std::move(grid);
    f.table_vals_ = std::move(values);
    // natural cubic spline second derivatives (Thomas algorithm)
    Vec a(n, 0.0), bb(n, 0.0), c(n, 0.0), r(n, 0.0);
    bb[0] = bb[n - 1] = 1.0;
    for (int i = 1; i + 1 < n; ++i) {
        const double h0 = f.table_grid_[i] - f.table_grid_[i - 1];
        const double h1 = f.table_grid_[i + 1] - f.table_grid_[i];
        a[i] = h0 / 6.0;
        bb[i] = (h0 + h1) / 3.0;
        c[i] = h1 / 6.0;
        r[i] = (f.table_vals_[i + 1] - f.table_vals_[i]) / h1 -
               (f.table_vals_[i] - f.table_vals_[i - 1]) / h0;
    }
    Vec m(n, 0.0), cp(n, 0.0), rp(n, 0.0);
    cp[0] = c[0] / bb[0];
    rp[0] = r[0] / bb[0];
    for (int i = 1; i < n; ++i) {
        const double den = bb[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        rp[i] = (r[i] - a[i] * rp[i - 1]) / den;
    }
    m[n - 1] = rp[n - 1];
    for (int i = n - 2; i >= 0; --i) m[i] = rp[i] - cp[i] * m[i + 1];
    f.table_m_ = std::move(m);
    return f;
}

UtilityFamily UtilityFamily::affine(std::shared_ptr<const UtilityFamily> base, Sequence alpha,
                                    Sequence beta) {
    UtilityFamily f;
    f.kind_ = UtilityKind::Affine;
    f.x0_ = base->x0();
    f.n_lo_ = base->n_lo();
    f.n_hi_ = base->n_hi();
    f.alpha_ = std::move(alpha);
    f.beta_shift_ = std::move(beta);
    f.base_ = std::move(base);
    return f;
}

UtilityFamily UtilityFamily::normalized_at(std::shared_ptr<const UtilityFamily> base,
                                           double anchor) {
    if (!base->deterministic())
        throw PreconditionError("slope-one normalization is defined for non-random families");
    if (!(anchor > 0.0)) throw ModelError("normalization anchor must be positive");
    UtilityFamily f;
    f.kind_ = UtilityKind::Normalized;
    f.x0_ = base->x0();
    f.n_lo_ = base->n_lo();
    f.n_hi_ = base->n_hi();
    f.norm_anchor_ = anchor;
    f.base_ = std::move(base);
    return f;
}

double UtilityFamily::custom_value(double x) const {
    const Vec& g = table_grid_;
    const Vec& y = table_vals_;
    const Vec& m = table_m_;
    const int n = int(g.size());
    if (x <= g[0]) return y[0] + custom_deriv(g[0]) * (x - g[0]);
    if (x >= g[n - 1]) return y[n - 1] + custom_deriv(g[n - 1]) * (x - g[n - 1]);
    int i = int(std::upper_bound(g.begin(), g.end(), x) - g.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double h = g[i + 1] - g[i];
    const double t = x - g[i];
    const double b = (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
    return y[i] + b * t + 0.5 * m[i] * t * t + (m[i + 1] - m[i]) / (6.0 * h) * t * t * t;
}

double UtilityFamily::custom_deriv(double x) const {
    const Vec& g = table_grid_;
    const Vec& y = table_vals_;
    const Vec& m = table_m_;
    const int n = int(g.size());
    double xx = std::clamp(x, g[0], g[n - 1]);
    int i = int(std::upper_bound(g.begin(), g.end(), xx) - g.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double h = g[i + 1] - g[i];
    const double t = xx - g[i];
    const double b = (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
    return b + m[i] * t + (m[i + 1] - m[i]) / (2.0 * h) * t * t;
}

double UtilityFamily::custom_deriv2(double x) const {
    const Vec& g = table_grid_;
    const Vec& m = table_m_;
    const int n = int(g.size());
    if (x <= g[0] || x >= g[n - 1]) return 0.0;
    int i = int(std::upper_bound(g.begin(), g.end(), x) - g.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double h = g[i + 1] - g[i];
    const double t = x - g[i];
    return m[i] + (m[i + 1] - m[i]) / h * t;
}

std::vector<std::string> UtilityFamily::validate(const ScenarioTree& tree, int n) const {
    std::vector<std::string> bad;
    std::vector<int> leaves_to_check{tree.leaves().front(), tree.leaves().back()};
    if (exp_affine()) {
        // exponential members are strictly increasing and concave iff the
        // log-slope is negative; the grid test would only hit underflow
        // for very large coefficients.
        for (int leaf : leaves_to_check) {
            double slope, icept;
            exp_affine_leaf(n, leaf, slope, icept);
            if (!(slope < 0.0))
                bad.push_back("exponential coefficient not positive at n=" + std::to_string(n));
        }
        return bad;
    }
    Vec xs;
    for (double x = 0.125; x <= 16.0; x *= 2.0) xs.push_back(x);
    xs.push_back(x0_);
    for (int leaf : leaves_to_check) {
        for (double x : xs) {
            const double d1 = deriv(n, leaf, x);
            const double d2 = deriv2(n, leaf, x);
            if (!(d1 > 0.0))
                bad.push_back("U' not positive at n=" + std::to_string(n) + " x=" + fmt(x));
            if (d2 > 1e-9 * (1.0 + std::abs(d1)))
                bad.push_back("U'' positive at n=" + std::to_string(n) + " x=" + fmt(x));
        }
    }
    return bad;
}

// ----- file loading -----

namespace {

Sequence parse_sequence(const json& j, const char* what) {
    if (j.is_number()) return Sequence::constant(j.get<double>());
    if (!j.is_object())
        throw ParseError(std::string("sequence '") + what + "' must be a number or an object");
    const std::string kind = j.value("kind", "");
    if (kind == "const") return Sequence::constant(j.at("value").get<double>());
    if (kind == "pow2") return Sequence::pow2();
    if (kind == "geometric")
        return Sequence::geometric(j.at("base").get<double>(), j.at("ratio").get<double>());
    if (kind == "linear")
        return Sequence::linear(j.at("base").get<double>(), j.at("step").get<double>());
    if (kind == "list") {
        Vec v = j.at("values").get<Vec>();
        return Sequence::list(std::move(v));
    }
    throw ParseError(std::string("unknown sequence kind in '") + what + "'");
}

void check_keys(const json& obj, const std::set<std::string>& known, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw ParseError(std::string("unknown field '") + it.key() + "' in " + where);
}

Vec parse_leaf_table(const json& j, const ScenarioTree& tree, const char* what) {
    Vec v(tree.node_count(), 0.0);
    std::set<int> seen;
    for (auto it = j.begin(); it != j.end(); ++it) {
        int id;
        try {
            id = std::stoi(it.key());
        } catch (...) {
            throw ParseError(std::string("bad leaf id in ") + what);
        }
        if (id < 0 || id >= tree.node_count() || !tree.is_leaf(id))
            throw ModelError(std::string(what) + " given at non-leaf node " + std::to_string(id));
        v[id] = it.value().get<double>();
        seen.insert(id);
    }
    for (int leaf : tree.leaves())
        if (!seen.count(leaf))
            throw ModelError(std::string(what) + " missing at leaf " + std::to_string(leaf));
    return v;
}

}  // namespace

UtilityFamily UtilityFamily::load(const std::string& text, const ScenarioTree& tree,
                                  const PriorSet& priors) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("utility file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("utility file must be a JSON object");
    check_keys(j, {"kind", "params", "x0", "n_range", "coeff_table"}, "utility file");
    const std::string kind = j.value("kind", "");
    const double x0 = j.value("x0", 1.0);
    int n_lo = 1, n_hi = 1;
    if (j.contains("n_range")) {
        if (!j["n_range"].is_array() || j["n_range"].size() != 2)
            throw ParseError("n_range must be [lo, hi]");
        n_lo = j["n_range"][0].get<int>();
        n_hi = j["n_range"][1].get<int>();
        if (n_lo < 1 || n_hi < n_lo) throw ParseError("n_range must satisfy 1 <= lo <= hi");
    }
    const json params = j.value("params", json::object());

    UtilityFamily f;
    if (kind == "cara") {
        check_keys(params, {"gamma", "shift"}, "cara params");
        f = cara(parse_sequence(params.at("gamma"), "gamma"), x0, params.value("shift", -1.0));
    } else if (kind == "crra") {
        check_keys(params, {"beta"}, "crra params");
        f = crra(parse_sequence(params.at("beta"), "beta"), x0);
    } else if (kind == "shifted_cara") {
        check_keys(params, {"gamma", "reference"}, "shifted_cara params");
        const ChargedSet charged = charged_set(tree, priors);
        f = shifted_cara(params.at("gamma").get<double>(),
                         parse_leaf_table(params.at("reference"), tree, "reference"), tree, charged,
                         x0);
    } else if (kind == "random_cara") {
        if (j.contains("coeff_table")) {
            std::map<int, Vec> table;
            for (auto it = j["coeff_table"].begin(); it != j["coeff_table"].end(); ++it) {
                int n;
                try {
                    n = std::stoi(it.key());
                } catch (...) {
                    throw ParseError("coeff_table keys must be indices n");
                }
                table[n] = parse_leaf_table(it.value(), tree, "coeff_table");
            }
            f = random_cara_table(std::move(table), x0, params.value("shift", -1.0));
            f.leaf_rank_.assign(tree.node_count(), -1);
            int r = 0;
            for (int leaf : tree.leaves()) f.leaf_rank_[leaf] = r++;
            f.leaf_count_ = r;
        } else {
            check_keys(params, {"b", "B", "shift"}, "random_cara params");
            f = random_cara(parse_sequence(params.at("b"), "b"), parse_sequence(params.at("B"), "B"),
                            tree, x0, params.value("shift", -1.0));
        }
    } else if (kind == "custom_table") {
        check_keys(params, {"grid", "values"}, "custom_table params");
        f = custom_table(params.at("grid").get<Vec>(), params.at("values").get<Vec>(), x0);
    } else {
        throw ParseError("unknown utility kind '" + kind + "'");
    }
    f.n_lo_ = n_lo;
    f.n_hi_ = n_hi;
    for (int n : {n_lo, n_hi}) {
        const auto bad = f.validate(tree, n);
        if (!bad.empty()) throw ModelError("utility family fails monotonicity/concavity: " + bad[0]);
    }
    return f;
}

// ----- risk aversion and certainty equivalents -----

double risk_aversion(const UtilityFamily& fam, int n, int leaf, double x) {
    if (!(x > 0.0)) throw PreconditionError("risk aversion needs wealth x > 0");
    if (fam.kind() == UtilityKind::CustomTable) {
        const double h = 1e-5 * std::max(1.0, x);
        const double up = fam.value(n, leaf, x + h);
        const double dn = fam.value(n, leaf, x - h);
        const double mid = fam.value(n, leaf, x);
        const double d1 = (up - dn) / (2.0 * h);
        const double d2 = (up - 2.0 * mid + dn) / (h * h);
        if (!(d1 > 0.0)) throw PreconditionError("U' must be positive for risk aversion");
        return -d2 / d1;
    }
    const double d1 = fam.deriv(n, leaf, x);
    if (!(d1 > 0.0)) throw PreconditionError("U' must be positive for risk aversion");
    return -fam.deriv2(n, leaf, x) / d1;
}

namespace {

constexpr double kCeTol = 1e-10;
constexpr int kCeIters = 200;

}  // namespace

double certainty_equivalent_mono(const UtilityFamily& fam, int n, const ScenarioTree& tree,
                                 const Vec& node_prob, const Claim& g) {
    double target = 0.0;
    double gmax = 0.0;
    for (int leaf : tree.leaves()) {
        const double p = node_prob[leaf];
        if (p <= 0.0) continue;
        if (g.value[leaf] < 0.0)
            throw PreconditionError("certainty equivalent needs G >= 0 on charged leaves");
        const double u = fam.value(n, leaf, g.value[leaf]);
        if (!std::isfinite(u)) throw SolverError("E_P U(.,G) is not integrable");
        target += p * u;
        gmax = std::max(gmax, g.value[leaf]);
    }
    auto psi = [&](double y) {
        double s = 0.0;
        for (int leaf : tree.leaves())
            if (node_prob[leaf] > 0.0) s += node_prob[leaf] * fam.value(n, leaf, y);
        return s;
    };
    double lo = 0.0;
    if (psi(0.0) >= target) return 0.0;
    double hi = std::max(1.0, gmax);
    int grow = 0;
    while (psi(hi) < target) {
        hi *= 2.0;
        if (++grow > 300) throw SolverError("certainty equivalent bracket did not close");
    }
    for (int it = 0; it < kCeIters && hi - lo > kCeTol; ++it) {
        const double mid = 0.5 * (lo + hi);
        (psi(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

CEReport certainty_equivalent_robust(const UtilityFamily& fam, int n, const ScenarioTree& tree,
                                     const PriorSet& priors, const ChargedSet& charged,
                                     const Claim& g, long long enumeration_cap) {
    double gmax = 0.0;
    for (int leaf : tree.leaves()) {
        if (!charged.is_charged(leaf)) continue;
        if (g.value[leaf] < 0.0)
            throw PreconditionError("certainty equivalent needs G >= 0 on charged leaves");
        gmax = std::max(gmax, g.value[leaf]);
    }

    Vec buf(tree.node_count(), 0.0);
    auto robust_u = [&](double y) {
        for (int leaf : tree.leaves()) buf[leaf] = fam.value(n, leaf, y);
        return robust_inf_expectation(tree, priors, charged, buf);
    };

    if (!fam.deterministic()) {
        // strict monotonicity of y -> inf_P E_P U(., y) needs a positive
        // worst-case marginal utility; checked on a coarse grid.
        for (int i = 1; i <= 8; ++i) {
            const double z = std::max(gmax, 1.0) * double(i) / 8.0;
            for (int leaf : tree.leaves()) buf[leaf] = fam.deriv(n, leaf, z);
            if (!(robust_inf_expectation(tree, priors, charged, buf) > 1e-12))
                throw SolverError("monotonicity degenerate: inf_P E_P U'(., z) vanishes");
        }
    }

    for (int leaf : tree.leaves()) {
        buf[leaf] = fam.value(n, leaf, std::max(g.value[leaf], 0.0));
        if (charged.is_charged(leaf) && !std::isfinite(buf[leaf]))
            throw SolverError("inf_P E_P U(.,G) is not integrable");
    }
    const double target = robust_inf_expectation(tree, priors, charged, buf);

    CEReport rep;
    double lo = 0.0, hi = std::max(1.0, gmax);
    if (robust_u(0.0) >= target) {
        rep.e_robust = 0.0;
    } else {
        int grow = 0;
        while (robust_u(hi) < target) {
            hi *= 2.0;
            if (++grow > 300) throw SolverError("robust certainty equivalent bracket did not close");
        }
        if (robust_u(hi) - robust_u(0.0) < 1e-14 * (1.0 + std::abs(target)))
            throw SolverError("monotonicity degenerate: robust value function is flat");
        for (int it = 0; it < kCeIters && hi - lo > kCeTol; ++it) {
            const double mid = 0.5 * (lo + hi);
            (robust_u(mid) < target ? lo : hi) = mid;
        }
        rep.e_robust = 0.5 * (lo + hi);
    }

    Vec gval(tree.node_count(), 0.0);
    for (int leaf : tree.leaves()) gval[leaf] = g.value[leaf];
    rep.sup_expected_payoff = robust_sup_expectation(tree, priors, charged, gval);
    rep.inf_expected_payoff = robust_inf_expectation(tree, priors, charged, gval);

    if (pasting_count(tree, priors, enumeration_cap) < enumeration_cap) {
        const Mat pastings = enumerate_extreme_pastings(tree, priors, enumeration_cap);
        rep.enumerated = true;
        for (size_t p = 0; p < pastings.size(); ++p) {
            CEPerPrior row;
            row.pasting = int(p);
            row.e = certainty_equivalent_mono(fam, n, tree, pastings[p], g);
            row.expected_payoff = 0.0;
            for (int leaf : tree.leaves()) row.expected_payoff += pastings[p][leaf] * g.value[leaf];
            row.premium = row.expected_payoff - row.e;
            rep.min_e_per_prior = std::min(rep.min_e_per_prior, row.e);
            rep.premium_robust = std::max(rep.premium_robust, row.premium);
            rep.per_prior.push_back(row);
        }
        if (fam.deterministic()) rep.cross_check_gap = std::abs(rep.e_robust - rep.min_e_per_prior);
    }
    return rep;
}

// ----- assumption audits -----

namespace {

const UtilityFamily* audit_family(const UtilityFamily& fam, bool normalize,
                                  std::shared_ptr<const UtilityFamily>& holder, bool& normalized) {
    normalized = false;
    if (normalize && fam.deterministic() && fam.kind() != UtilityKind::Normalized) {
        holder = std::make_shared<const UtilityFamily>(
            UtilityFamily::normalized_at(std::make_shared<const UtilityFamily>(fam), fam.x0()));
        normalized = true;
        return holder.get();
    }
    return &fam;
}

bool tail_non_increasing(const Vec& s) {
    const size_t span = std::max<size_t>(2, s.size() / 3);
    if (s.size() < span) return true;  // too short to have a tail
    const size_t start = s.size() - span;
    for (size_t i = start + 1; i < s.size(); ++i)
        if (s[i] > s[i - 1] + 1e-12 * (1.0 + std::abs(s[i - 1]))) return false;
    return true;
}

}  // namespace

U1Audit audit_assumption_u1(const UtilityFamily& fam, const ScenarioTree& tree,
                            const PriorSet& priors, const ChargedSet& charged, double q,
                            bool normalize_deterministic) {
    std::shared_ptr<const UtilityFamily> holder;
    bool normalized = false;
    const UtilityFamily* f = audit_family(fam, normalize_deterministic, holder, normalized);

    U1Audit a;
    a.n_lo = fam.n_lo();
    a.n_hi = fam.n_hi();
    a.q = q;
    a.normalized = normalized;
    Vec buf(tree.node_count(), 0.0);
    for (int n = a.n_lo; n <= a.n_hi; ++n) {
        for (int leaf : tree.leaves()) buf[leaf] = std::max(f->value(n, leaf, fam.x0()), 0.0);
        const double plus = robust_sup_expectation(tree, priors, charged, buf);
        for (int leaf : tree.leaves()) buf[leaf] = std::max(-f->value(n, leaf, fam.x0()), 0.0);
        const double minus = robust_sup_expectation(tree, priors, charged, buf);
        for (int leaf : tree.leaves()) buf[leaf] = std::pow(f->deriv(n, leaf, fam.x0()), q);
        const double dq = std::pow(robust_sup_expectation(tree, priors, charged, buf), 1.0 / q);
        a.plus_norm.push_back(plus);
        a.minus_norm.push_back(minus);
        a.dq_norm.push_back(dq);
        a.sup_plus = std::max(a.sup_plus, plus);
        a.sup_minus = std::max(a.sup_minus, minus);
        a.sup_dq = std::max(a.sup_dq, dq);
    }
    a.finite = std::isfinite(a.sup_plus) && std::isfinite(a.sup_minus) && std::isfinite(a.sup_dq);
    a.tail_stable = tail_non_increasing(a.plus_norm) && tail_non_increasing(a.minus_norm) &&
                    tail_non_increasing(a.dq_norm);
    return a;
}

UnAudit audit_assumption_un(const UtilityFamily& fam, const ScenarioTree& tree,
                            const PriorSet& priors, const ChargedSet& charged, const Vec& M_list,
                            const Vec& x_list, bool normalize_deterministic) {
    std::shared_ptr<const UtilityFamily> holder;
    bool normalized = false;
    const UtilityFamily* f = audit_family(fam, normalize_deterministic, holder, normalized);

    UnAudit a;
    a.normalized = normalized;
    Vec buf(tree.node_count(), 0.0);
    for (double x : x_list) {
        if (!(x >= 0.0 && x < fam.x0()))
            throw PreconditionError("blow-up audit points must lie in [0, x0)");
        for (double M : M_list) {
            UnAuditCell cell;
            cell.x = x;
            cell.M = M;
            for (int n = fam.n_lo(); n <= fam.n_hi(); ++n) {
                for (int leaf : tree.leaves())
                    buf[leaf] = (f->value(n, leaf, x) <= -M) ? 1.0 : 0.0;
                const double p = robust_inf_expectation(tree, priors, charged, buf);
                cell.series.push_back(p);
                if (p >= 1.0 - 1e-12 && cell.crossing_n < 0) cell.crossing_n = n;
            }
            cell.reached = !cell.series.empty() && cell.series.back() >= 1.0 - 1e-12;
            a.all_reached = a.all_reached && cell.reached;
            a.cells.push_back(std::move(cell));
        }
    }

    bool avail = true;
    for (int n = fam.n_lo(); n <= fam.n_hi(); ++n) {
        const double e = fam.risk_aversion_envelope(n);
        if (std::isnan(e)) {
            avail = false;
            break;
        }
        a.envelope.push_back(e);
    }
    a.envelope_available = avail;
    if (avail && a.envelope.size() >= 2) {
        bool nondec = true;
        for (size_t i = 1; i < a.envelope.size(); ++i)
            if (a.envelope[i] < a.envelope[i - 1] - 1e-12) nondec = false;
        const double first = a.envelope.front(), last = a.envelope.back();
        a.envelope_divergent = nondec && last >= 4.0 * std::max(first, 1e-12) && last >= first + 2.0;
    }
    return a;
}

}  // namespace multiprior
