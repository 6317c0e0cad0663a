#pragma once

// Limit objects of the two-population system: the Perron eigen-pair of
//   rho^2 D + R(x, N),   D = diag(d1, d2),   R = [[r1 - N, delta1], [delta2, r2 - N]],
// the population ratio q = n1/n2 it selects, and the fitness landscape.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "coopevo/coefficients.hpp"
#include "coopevo/error.hpp"

namespace coopevo {

/// Coefficient quadruple at one trait value.
struct Rates {
    double r1, r2, delta1, delta2;

    double r(int i) const { return i == 1 ? r1 : r2; }
    double delta(int i) const { return i == 1 ? delta1 : delta2; }
    Rates swapped() const { return {r2, r1, delta2, delta1}; }
};

struct Diffusion {
    double d1, d2;

    double d(int i) const { return i == 1 ? d1 : d2; }
    Diffusion swapped() const { return {d2, d1}; }
};

inline Rates rates_at(const CoefficientField& field, std::size_t k) {
    return {field.r1[k], field.r2[k], field.delta1[k], field.delta2[k]};
}

namespace detail {

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0)) fail(ErrorKind::InvalidArgument, std::string(name) + " must be positive");
}

/// (d_i - d_j) rho^2 + r_i - r_j
inline double shift(int i, const Rates& c, const Diffusion& d, double rho) {
    const int j = 3 - i;
    return (d.d(i) - d.d(j)) * rho * rho + c.r(i) - c.r(j);
}

/// sqrt(shift^2 + 4 delta1 delta2), computed without overflow.
inline double discriminant_root(double shift, const Rates& c) {
    return std::hypot(shift, 2.0 * std::sqrt(c.delta1 * c.delta2));
}

inline void check_index(int i) {
    if (i != 1 && i != 2) fail(ErrorKind::InvalidArgument, "population index must be 1 or 2");
}

}  // namespace detail

/// r_H = (r1 + r2 + sqrt([(d1 - d2) rho^2 + r1 - r2]^2 + 4 delta1 delta2)) / 2
inline double hamiltonian_fitness(const Rates& c, const Diffusion& d, double rho) {
    detail::require_positive(c.delta1, "delta1");
    detail::require_positive(c.delta2, "delta2");
    const double root = detail::discriminant_root(detail::shift(1, c, d, rho), c);
    return 0.5 * (c.r1 + c.r2 + root);
}

/// H_D(rho, N) = (d1 + d2)/2 rho^2 + r_H - N, the Perron eigenvalue of rho^2 D + R(x, N).
inline double effective_hamiltonian(const Rates& c, const Diffusion& d, double rho, double mass) {
    return 0.5 * (d.d1 + d.d2) * rho * rho + hamiltonian_fitness(c, d, rho) - mass;
}

/// Positive root q_i of P(X) = [(d_i - d_j) rho^2 + r_i - r_j] X + delta_i - delta_j X^2,
/// the limit of n_i / n_j. The conjugate form is used when the shift is
/// negative so that the root keeps full relative accuracy.
inline double ratio_q(int i, const Rates& c, const Diffusion& d, double rho) {
    detail::check_index(i);
    const int j = 3 - i;
    detail::require_positive(c.delta(j), "delta_j");
    detail::require_positive(c.delta(i), "delta_i");
    const double s = detail::shift(i, c, d, rho);
    const double root = detail::discriminant_root(s, c);
    if (s >= 0.0) return (s + root) / (2.0 * c.delta(j));
    return 2.0 * c.delta(i) / (root - s);
}

/// Upper companion of q_i: drops the shift outside the root when d_i < d_j.
inline double ratio_q_plus(int i, const Rates& c, const Diffusion& d, double rho) {
    detail::check_index(i);
    const int j = 3 - i;
    if (d.d(i) >= d.d(j)) return ratio_q(i, c, d, rho);
    detail::require_positive(c.delta(j), "delta_j");
    return detail::discriminant_root(detail::shift(i, c, d, rho), c) / (2.0 * c.delta(j));
}

/// Reciprocal 1/q_i in closed form:
///   ([d_j - d_i] rho^2 + r_j - r_i + sqrt(...)) / (2 delta_i).
inline double ratio_q_inverse(int i, const Rates& c, const Diffusion& d, double rho) {
    detail::check_index(i);
    const int j = 3 - i;
    detail::require_positive(c.delta(i), "delta_i");
    detail::require_positive(c.delta(j), "delta_j");
    const double s = -detail::shift(i, c, d, rho);
    const double root = detail::discriminant_root(s, c);
    if (s >= 0.0) return (s + root) / (2.0 * c.delta(i));
    return 2.0 * c.delta(j) / (root - s);
}

/// Positive Perron eigenvector of rho^2 D + R normalized to psi1 = 1.
/// Its components are proportional to (n1, n2) in the limit, so
/// psi2 = 1 / q1.
inline std::array<double, 2> eigenvector_psi(const Rates& c, const Diffusion& d, double rho) {
    return {1.0, ratio_q_inverse(1, c, d, rho)};
}

/// Max-norm residual of (rho^2 D + R) psi - H psi, relative to the matrix scale.
inline double eigen_residual(const Rates& c, const Diffusion& d, double rho, double mass = 0.0) {
    const auto psi = eigenvector_psi(c, d, rho);
    const double h = effective_hamiltonian(c, d, rho, mass);
    const double rho2 = rho * rho;
    const double row1 = (d.d1 * rho2 + c.r1 - mass) * psi[0] + c.delta1 * psi[1] - h * psi[0];
    const double row2 = c.delta2 * psi[0] + (d.d2 * rho2 + c.r2 - mass) * psi[1] - h * psi[1];
    const double scale = std::max({1.0, std::abs(h), std::abs(c.r1), std::abs(c.r2), c.delta1, c.delta2,
                                   d.d1 * rho2, d.d2 * rho2}) *
                         std::max(1.0, std::max(psi[0], psi[1]));
    return std::max(std::abs(row1), std::abs(row2)) / scale;
}

/// Maximal relative residual of the ratio identities, for i in {1, 2}:
///   r_j + delta_j q_i       = r_H + (d_i - d_j) rho^2 / 2
///   1 / q_i                 = closed-form reciprocal
///   r_i + delta_i / q_i     = r_H + (d_j - d_i) rho^2 / 2
/// Both eigen-rows reduce to r_j + delta_j q_i = r_H when d1 = d2.
inline double check_identities(const Rates& c, const Diffusion& d, double rho) {
    const double rh = hamiltonian_fitness(c, d, rho);
    const double rho2 = rho * rho;
    double worst = 0.0;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); };
    for (int i = 1; i <= 2; ++i) {
        const int j = 3 - i;
        const double q = ratio_q(i, c, d, rho);
        const double q_inv = ratio_q_inverse(i, c, d, rho);
        const double tilt = 0.5 * (d.d(i) - d.d(j)) * rho2;
        worst = std::max(worst, rel(c.r(j) + c.delta(j) * q, rh + tilt));
        worst = std::max(worst, rel(1.0 / q, q_inv));
        worst = std::max(worst, rel(c.r(i) + c.delta(i) * q_inv, rh - tilt));
    }
    return worst;
}

/// Aggregate of the limit quantities at one node.
struct SpectralPoint {
    double r_h;
    double h;
    double q1;
    double q2;
    std::array<double, 2> psi;
};

inline SpectralPoint spectral_point(const Rates& c, const Diffusion& d, double rho, double mass) {
    return {hamiltonian_fitness(c, d, rho), effective_hamiltonian(c, d, rho, mass), ratio_q(1, c, d, rho),
            ratio_q(2, c, d, rho), eigenvector_psi(c, d, rho)};
}

/// Fitness of the combined population when n1 = q n2 and d1 = d2:
///   q/(1+q) (r1 + delta2) + 1/(1+q) (r2 + delta1).
inline double effective_fitness_r_infty(const Rates& c) {
    const double q = ratio_q(1, c, Diffusion{1.0, 1.0}, 0.0);
    return (q * (c.r1 + c.delta2) + (c.r2 + c.delta1)) / (1.0 + q);
}

struct Landscape {
    std::vector<double> r_h;
    std::size_t argmax = 0;
};

/// r_H sampled at every node of the field, with smallest-index argmax.
/// `r1_override` replaces the stored r1 (e.g. r1 at a given time).
inline Landscape fitness_landscape(const CoefficientField& field, const Diffusion& d, double rho = 0.0,
                                   std::span<const double> r1_override = {}) {
    Landscape out;
    out.r_h.resize(field.grid.nx);
    for (std::size_t k = 0; k < field.grid.nx; ++k) {
        Rates c = rates_at(field, k);
        if (!r1_override.empty()) c.r1 = r1_override[k];
        out.r_h[k] = hamiltonian_fitness(c, d, rho);
        if (out.r_h[k] > out.r_h[out.argmax]) out.argmax = k;
    }
    return out;
}

}  // namespace coopevo
