#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coopevo/error.hpp"

namespace coopevo {

/// Thomas elimination for a fixed tridiagonal matrix, factored once and
/// applied to many right-hand sides. Row k reads
///   lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = b[k].
/// No pivoting: the matrix must be diagonally dominant.
class TridiagonalSolver {
public:
    TridiagonalSolver() = default;

    TridiagonalSolver(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper)
        : lower_(std::move(lower)), cprime_(std::move(upper)), inv_(diag.size()) {
        const std::size_t n = diag.size();
        if (n == 0 || lower_.size() != n || cprime_.size() != n)
            fail(ErrorKind::InvalidArgument, "tridiagonal bands must have equal non-zero length");
        double denom = diag[0];
        for (std::size_t k = 0;; ++k) {
            if (denom == 0.0) fail(ErrorKind::NumericalDomain, "singular tridiagonal matrix");
            inv_[k] = 1.0 / denom;
            cprime_[k] *= inv_[k];
            if (k + 1 == n) break;
            denom = diag[k + 1] - lower_[k + 1] * cprime_[k];
        }
    }

    std::size_t size() const { return inv_.size(); }

    /// Overwrites b with the solution.
    void solve(std::span<double> b) const {
        const std::size_t n = inv_.size();
        if (b.size() != n) fail(ErrorKind::InvalidArgument, "right-hand side length mismatch");
        b[0] *= inv_[0];
        for (std::size_t k = 1; k < n; ++k) b[k] = (b[k] - lower_[k] * b[k - 1]) * inv_[k];
        for (std::size_t k = n - 1; k-- > 0;) b[k] -= cprime_[k] * b[k + 1];
    }

private:
    std::vector<double> lower_, cprime_, inv_;
};

/// Second-difference operator with mirrored ghost nodes at both ends,
/// applied as out = v + mu * dx^2 * L v.
inline void apply_neumann_second_difference(std::span<const double> v, double mu, std::span<double> out) {
    const std::size_t n = v.size();
    out[0] = v[0] + mu * 2.0 * (v[1] - v[0]);
    for (std::size_t k = 1; k + 1 < n; ++k) out[k] = v[k] + mu * (v[k - 1] - 2.0 * v[k] + v[k + 1]);
    out[n - 1] = v[n - 1] + mu * 2.0 * (v[n - 2] - v[n - 1]);
}

/// Factored I - mu * dx^2 * L with the same Neumann closure.
inline TridiagonalSolver neumann_implicit_operator(std::size_t n, double mu) {
    std::vector<double> lower(n, -mu), diag(n, 1.0 + 2.0 * mu), upper(n, -mu);
    lower[0] = 0.0;
    upper[0] = -2.0 * mu;
    lower[n - 1] = -2.0 * mu;
    upper[n - 1] = 0.0;
    return TridiagonalSolver(std::move(lower), std::move(diag), std::move(upper));
}

}  // namespace coopevo
