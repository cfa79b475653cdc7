#pragma once

#include "multiprior/market.hpp"

#include <map>
#include <memory>

namespace multiprior {

/// Index-dependent scalar sequence used for utility parameters,
/// addressed by the 1-based family index n.
struct Sequence {
    enum class Kind { Const, List, Pow2, Geometric, Linear } kind = Kind::Const;
    double value = 0.0;   // Const
    Vec values;           // List (values[0] belongs to n = 1)
    double base = 0.0, ratio = 0.0, step = 0.0;

    double at(int n) const;
    static Sequence constant(double v) { return Sequence{Kind::Const, v, {}, 0, 0, 0}; }
    static Sequence list(Vec v) { return Sequence{Kind::List, 0, std::move(v), 0, 0, 0}; }
    static Sequence pow2() { return Sequence{Kind::Pow2, 0, {}, 0, 0, 0}; }
    static Sequence geometric(double base, double ratio) {
        return Sequence{Kind::Geometric, 0, {}, base, ratio, 0};
    }
    static Sequence linear(double base, double step) {
        return Sequence{Kind::Linear, 0, {}, base, 0, step};
    }
};

enum class UtilityKind { Cara, Crra, Shifted, RandomCara, CustomTable, Normalized, Affine };

/// An indexed family of utility functions on [0, inf), extended by -inf
/// below zero and by right continuity at zero. Members may depend on the
/// terminal node (random utilities); evaluation is pure and thread-safe.
class UtilityFamily {
public:
    UtilityKind kind() const { return kind_; }
    double x0() const { return x0_; }
    int n_lo() const { return n_lo_; }
    int n_hi() const { return n_hi_; }

    /// U_n(leaf, x); -inf for x < 0.
    double value(int n, int leaf, double x) const;
    double deriv(int n, int leaf, double x) const;
    double deriv2(int n, int leaf, double x) const;

    /// True when members do not depend on the terminal node.
    bool deterministic() const;

    /// True when ln(-U_n(leaf, y)) is affine in y with negative slope,
    /// i.e. the member is exponential with a node-wise coefficient. This
    /// is the shape the exact exponential solver exploits.
    bool exp_affine() const;
    /// ln(-U_n(leaf, y)) = icept + slope * y (slope < 0).
    void exp_affine_leaf(int n, int leaf, double& slope, double& icept) const;
    /// Exponential coefficient -slope; requires exp_affine().
    double cara_coeff(int n, int leaf) const;

    /// Deterministic lower envelope of the absolute risk aversion when
    /// one is structurally available (gamma_n / b_n); NaN otherwise.
    double risk_aversion_envelope(int n) const;

    // -------- factories --------
    static UtilityFamily cara(Sequence gamma, double x0, double shift = -1.0);
    static UtilityFamily crra(Sequence beta, double x0);
    /// Base utility read against a random reference payoff: member value
    /// at x is base(x + sup_charged B - B(leaf)).
    static UtilityFamily shifted_cara(double gamma, const Vec& reference, const ScenarioTree& tree,
                                      const ChargedSet& charged, double x0);
    static UtilityFamily random_cara(Sequence b, Sequence B, const ScenarioTree& tree, double x0,
                                     double shift = -1.0);
    static UtilityFamily random_cara_table(std::map<int, Vec> coeff_by_n, double x0,
                                           double shift = -1.0);
    static UtilityFamily custom_table(Vec grid, Vec values, double x0);
    /// alpha_n U_n + beta_n with alpha_n > 0: same risk aversion, same
    /// certainty equivalents, same prices.
    static UtilityFamily affine(std::shared_ptr<const UtilityFamily> base, Sequence alpha,
                                Sequence beta);
    /// U_n rescaled so that value 0 and slope 1 are taken at `anchor`;
    /// defined for deterministic families.
    static UtilityFamily normalized_at(std::shared_ptr<const UtilityFamily> base, double anchor);

    static UtilityFamily load(const std::string& json_text, const ScenarioTree& tree,
                              const PriorSet& priors);

    /// Numerical sanity check of concavity and strict monotonicity on a
    /// wealth grid; returns human-readable violations (empty = clean).
    std::vector<std::string> validate(const ScenarioTree& tree, int n) const;

private:
    UtilityKind kind_ = UtilityKind::Cara;
    double x0_ = 1.0;
    int n_lo_ = 1, n_hi_ = 1;
    Sequence gamma_, beta_, b_, B_, alpha_, beta_shift_;
    double shift_ = 1.0;                  // exponential anchor
    Vec reference_;                       // Shifted, by node id
    double ref_sup_ = 0.0;
    std::map<int, Vec> coeff_table_;      // RandomCara override, by n
    std::vector<int> leaf_rank_;          // RandomCara generator support
    int leaf_count_ = 0;
    Vec table_grid_, table_vals_, table_m_;  // CustomTable cubic spline
    std::shared_ptr<const UtilityFamily> base_;  // Affine / Normalized
    double norm_anchor_ = 1.0;

    double custom_value(double x) const;
    double custom_deriv(double x) const;
    double custom_deriv2(double x) const;
    double coeff_generated(int n, int leaf) const;
};

/// Absolute risk aversion -U''/U' at wealth x > 0. Closed forms for the
/// analytic kinds; central finite differences with step 1e-5*max(1,x)
/// for tabulated utilities.
double risk_aversion(const UtilityFamily& fam, int n, int leaf, double x);

/// Certainty equivalent under one fixed path measure (node-probability
/// vector): the root of E_P U(., y) = E_P U(., G) in y >= 0, found by
/// bisection with geometric bracket growth, tolerance 1e-10.
double certainty_equivalent_mono(const UtilityFamily& fam, int n, const ScenarioTree& tree,
                                 const Vec& node_prob, const Claim& g);

struct CEPerPrior {
    int pasting = 0;
    double e = 0.0;
    double expected_payoff = 0.0;
    double premium = 0.0;  // E_P G - e(G, P)
};

struct CEReport {
    double e_robust = 0.0;
    /// Filled when the extreme pastings are enumerable within the cap.
    std::vector<CEPerPrior> per_prior;
    bool enumerated = false;
    double min_e_per_prior = kInf;
    double premium_robust = 0.0;  // max over enumerated pastings
    double sup_expected_payoff = 0.0;
    double inf_expected_payoff = 0.0;
    /// Non-random families only: |e(G) - min_P e(G,P)| from the two
    /// independent routes.
    double cross_check_gap = -1.0;
};

/// Multiple-priors certainty equivalent: the y with
/// inf_P E_P U(., y) = inf_P E_P U(., G), the infima running over all
/// pastings (computed at extremes by a backward sweep). For random
/// members the strict-monotonicity precondition inf_P E_P U'(., z) > 0
/// is checked on a grid first.
CEReport certainty_equivalent_robust(const UtilityFamily& fam, int n, const ScenarioTree& tree,
                                     const PriorSet& priors, const ChargedSet& charged,
                                     const Claim& g, long long enumeration_cap = 4096);

struct U1Audit {
    int n_lo = 1, n_hi = 1;
    double q = 2.0;
    Vec plus_norm, minus_norm, dq_norm;  // per n, index 0 = n_lo
    double sup_plus = 0.0, sup_minus = 0.0, sup_dq = 0.0;
    bool finite = true;
    bool tail_stable = true;  // last-third series non-increasing
    bool normalized = false;  // audited the slope-one rescaling
};

/// sup_n of the worst-case L1 norms of U_n(., x0)^+/- and of the
/// worst-case Lq norm of U_n'(., x0) over the configured index range.
/// Deterministic families are audited after the affine rescaling that
/// fixes value 0 and slope 1 at x0 (set normalize_deterministic=false
/// for the raw family).
U1Audit audit_assumption_u1(const UtilityFamily& fam, const ScenarioTree& tree,
                            const PriorSet& priors, const ChargedSet& charged, double q = 2.0,
                            bool normalize_deterministic = true);

struct UnAuditCell {
    double x = 0.0, M = 0.0;
    int crossing_n = -1;  // first n with inf_P P(U_n(., x) <= -M) = 1
    bool reached = false;
    Vec series;  // inf_P P(...) per n
};

struct UnAudit {
    std::vector<UnAuditCell> cells;
    bool all_reached = true;
    bool envelope_available = false;
    bool envelope_divergent = false;  // observed growth over the range
    Vec envelope;
    bool normalized = false;
};

/// Blow-up audit: for each x in x_list (inside [0, x0)) and threshold M,
/// whether inf over pastings of P(U_n(., x) <= -M) reaches one within
/// the index range; additionally reports the deterministic risk-aversion
/// envelope when the family exposes one.
UnAudit audit_assumption_un(const UtilityFamily& fam, const ScenarioTree& tree,
                            const PriorSet& priors, const ChargedSet& charged, const Vec& M_list,
                            const Vec& x_list, bool normalize_deterministic = true);

}  // namespace multiprior
