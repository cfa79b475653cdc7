#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace multiprior {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class of every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input text (market or utility files).
struct ParseError : Error { using Error::Error; };

/// A structural invariant of the model does not hold.
struct ModelError : Error { using Error::Error; };

/// An operation was invoked outside its stated precondition.
struct PreconditionError : Error { using Error::Error; };

/// A numerical routine could not reach its tolerance.
struct SolverError : Error { using Error::Error; };

/// Instance too large for a brute-force routine.
struct ScopeError : Error { using Error::Error; };

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline Vec sub(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

/// y += t * x
inline void axpy(double t, const Vec& x, Vec& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += t * x[i];
}

/// Solves a dense square system by Gaussian elimination with partial
/// pivoting. Returns false when the matrix is singular at tolerance.
bool solve_linear(Mat a, Vec b, Vec& x, double tol = 1e-12);

/// Deterministic random source. Every draw goes through the fully
/// specified 64-bit Mersenne twister; std::*_distribution is avoided
/// because its output is implementation defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive bounds.
    int uniform_int(int lo, int hi) {
        return std::min(hi, lo + int(uniform() * double(hi - lo + 1)));
    }

    double normal() {
        double u1 = std::max(uniform(), 1e-300);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::mt19937_64 gen_;
};

/// Locale-independent shortest-ish decimal rendering used by all file
/// writers so that seeded runs are byte identical.
inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

inline Vec linspace(double lo, double hi, int n) {
    Vec r(n);
    for (int i = 0; i < n; ++i)
        r[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
    return r;
}

}  // namespace multiprior
