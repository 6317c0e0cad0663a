#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coopevo/error.hpp"

namespace coopevo {

/// Uniform mesh on the truncated trait domain [0, x_max].
struct Grid {
    double x_max = 0.0;
    std::size_t nx = 0;
    double dx = 0.0;
    std::vector<double> nodes;

    double operator[](std::size_t k) const { return nodes[k]; }
    std::size_t size() const { return nx; }

    bool operator==(const Grid& other) const { return x_max == other.x_max && nx == other.nx; }
};

inline Grid make_grid(double x_max, std::size_t nx) {
    if (!(x_max > 0.0) || !std::isfinite(x_max))
        fail(ErrorKind::InvalidArgument, "grid length must be positive, got " + std::to_string(x_max));
    if (nx < 3) fail(ErrorKind::InvalidArgument, "grid needs at least 3 nodes, got " + std::to_string(nx));

    Grid g;
    g.x_max = x_max;
    g.nx = nx;
    g.dx = x_max / static_cast<double>(nx - 1);
    g.nodes.resize(nx);
    for (std::size_t k = 0; k < nx; ++k) g.nodes[k] = static_cast<double>(k) * g.dx;
    g.nodes.back() = x_max;
    return g;
}

/// Trapezoid weight of node k; the mass functional used everywhere.
inline double trapezoid_weight(const Grid& grid, std::size_t k) {
    return (k == 0 || k + 1 == grid.nx) ? 0.5 * grid.dx : grid.dx;
}

inline double integrate_on_grid(std::span<const double> values, const Grid& grid) {
    if (values.size() != grid.nx)
        fail(ErrorKind::InvalidArgument, "sample count " + std::to_string(values.size()) +
                                             " does not match grid size " + std::to_string(grid.nx));
    double interior = 0.0;
    for (std::size_t k = 1; k + 1 < values.size(); ++k) interior += values[k];
    return grid.dx * (interior + 0.5 * (values.front() + values.back()));
}

// ---------------------------------------------------------------------------
// Semi-infinite quadrature

enum class QuadratureRule { Trapezoid, Simpson };

inline const char* to_string(QuadratureRule rule) {
    return rule == QuadratureRule::Simpson ? "simpson" : "trapezoid";
}

/// Truncated composite rule for integrals over [0, +inf).
struct QuadratureSpec {
    QuadratureRule rule = QuadratureRule::Simpson;
    double s_max = 40.0;
    std::size_t ns = 4000;
    double tail_tol = 1e-14;

    bool operator==(const QuadratureSpec&) const = default;

    void validate() const {
        if (!(s_max > 0.0) || !std::isfinite(s_max))
            fail(ErrorKind::InvalidArgument, "quadrature s_max must be positive");
        if (ns < 1) fail(ErrorKind::InvalidArgument, "quadrature needs at least one panel");
        if (rule == QuadratureRule::Simpson && ns % 2 != 0)
            fail(ErrorKind::InvalidArgument, "Simpson rule needs an even panel count, got " + std::to_string(ns));
        if (!(tail_tol > 0.0)) fail(ErrorKind::InvalidArgument, "tail_tol must be positive");
    }
};

/// Truncation bound s_max such that exp(-decay_rate * s_max) equals tail_tol.
inline double truncation_bound(double decay_rate, double tail_tol = 1e-14) {
    if (!(decay_rate > 0.0)) fail(ErrorKind::InvalidArgument, "decay rate must be positive");
    return -std::log(tail_tol) / decay_rate;
}

/// Default Simpson spec for integrands carrying exp(-decay_rate * s), with
/// panel width at most max_step.
inline QuadratureSpec default_quadrature(double decay_rate, double max_step = 0.01) {
    QuadratureSpec q;
    q.rule = QuadratureRule::Simpson;
    q.tail_tol = 1e-14;
    q.s_max = truncation_bound(decay_rate, q.tail_tol);
    auto panels = static_cast<std::size_t>(std::ceil(q.s_max / max_step));
    q.ns = panels + (panels % 2);
    return q;
}

/// Abscissae s_k = k * s_max / ns, k = 0..ns, shared by every integrand
/// evaluated against the same spec.
inline std::vector<double> quadrature_nodes(const QuadratureSpec& spec) {
    spec.validate();
    std::vector<double> s(spec.ns + 1);
    const double h = spec.s_max / static_cast<double>(spec.ns);
    for (std::size_t k = 0; k < spec.ns; ++k) s[k] = static_cast<double>(k) * h;
    s.back() = spec.s_max;
    return s;
}

/// Composite rule applied to integrand samples taken at quadrature_nodes(spec).
inline double integrate_samples(std::span<const double> samples, const QuadratureSpec& spec) {
    spec.validate();
    if (samples.size() != spec.ns + 1)
        fail(ErrorKind::InvalidArgument, "expected " + std::to_string(spec.ns + 1) + " integrand samples");
    const double h = spec.s_max / static_cast<double>(spec.ns);
    for (std::size_t k = 0; k < samples.size(); ++k)
        if (!std::isfinite(samples[k]))
            fail(ErrorKind::NumericalDomain, "non-finite integrand at s = " + std::to_string(k * h));

    if (spec.rule == QuadratureRule::Trapezoid) {
        double sum = 0.5 * (samples.front() + samples.back());
        for (std::size_t k = 1; k < spec.ns; ++k) sum += samples[k];
        return h * sum;
    }
    double odd = 0.0, even = 0.0;
    for (std::size_t k = 1; k < spec.ns; ++k) (k % 2 ? odd : even) += samples[k];
    return h * (samples.front() + samples.back() + 4.0 * odd + 2.0 * even) / 3.0;
}

/// Approximates the integral of f over [0, s_max]. The caller is responsible
/// for the neglected tail beyond s_max being below spec.tail_tol.
template <class F>
double integrate_semi_infinite(F&& f, const QuadratureSpec& spec) {
    const auto s = quadrature_nodes(spec);
    std::vector<double> samples(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) samples[k] = f(s[k]);
    return integrate_samples(samples, spec);
}

}  // namespace coopevo
