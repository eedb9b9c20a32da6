#pragma once
// Convex geometry for the projection lemma: halfspace intersections,
// Dykstra nearest-point projection, set intersection probing, and seeded
// generation of the four proxy-vs-true constraint scenarios.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairshift/core.hpp"

namespace fairshift {

struct Halfspace {
    std::vector<double> a;  // a . theta <= b
    double b = 0.0;
};

struct Polyhedron {
    std::vector<Halfspace> rows;

    static Polyhedron create(std::vector<Halfspace> rows) {
        if (rows.empty()) throw ArgumentError("polyhedron: no rows");
        const std::size_t dim = rows[0].a.size();
        for (const auto& r : rows) {
            if (r.a.size() != dim) throw ArgumentError("polyhedron: inconsistent dimensions");
            if (norm2(r.a) == 0.0) throw ArgumentError("polyhedron: zero normal");
        }
        return Polyhedron{std::move(rows)};
    }

    std::size_t dim() const { return rows[0].a.size(); }

    double max_residual(const std::vector<double>& point) const {
        double worst = 0.0;
        for (const auto& r : rows) worst = std::max(worst, dot(r.a, point) - r.b);
        return worst;
    }

    bool contains(const std::vector<double>& point, double tol = 1e-9) const {
        return max_residual(point) <= tol;
    }

    // Feasible intersection of two constraint sets, as one stacked system.
    static Polyhedron stacked(const Polyhedron& p, const Polyhedron& q) {
        std::vector<Halfspace> rows = p.rows;
        rows.insert(rows.end(), q.rows.begin(), q.rows.end());
        return create(std::move(rows));
    }
};

inline std::vector<double> project_halfspace(const std::vector<double>& point,
                                             const std::vector<double>& a, double b) {
    const double nn = dot(a, a);
    if (nn == 0.0) throw ArgumentError("project_halfspace: zero normal");
    const double viol = dot(a, point) - b;
    if (viol <= 0.0) return point;
    std::vector<double> out = point;
    const double scale = viol / nn;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] -= scale * a[j];
    return out;
}

// Dykstra's algorithm over the halfspace rows: converges to the Euclidean
// nearest point of the intersection, unlike plain cyclic projection which
// only reaches some feasible point.
inline std::vector<double> project_polyhedron(const std::vector<double>& point,
                                              const Polyhedron& poly, double tol = 1e-9,
                                              std::size_t max_iter = 100000) {
    if (point.size() != poly.dim())
        throw ArgumentError("project_polyhedron: dimension mismatch");
    std::vector<double> x = point;
    std::vector<std::vector<double>> corrections(poly.rows.size(),
                                                 std::vector<double>(point.size(), 0.0));

    for (std::size_t cycle = 0; cycle < max_iter; ++cycle) {
        double moved = 0.0;
        for (std::size_t r = 0; r < poly.rows.size(); ++r) {
            std::vector<double> z = x;
            for (std::size_t j = 0; j < z.size(); ++j) z[j] += corrections[r][j];
            std::vector<double> nx = project_halfspace(z, poly.rows[r].a, poly.rows[r].b);
            for (std::size_t j = 0; j < z.size(); ++j) corrections[r][j] = z[j] - nx[j];
            moved += distance(x, nx);
            x = std::move(nx);
        }
        if (moved < tol && poly.max_residual(x) <= tol) return x;
    }
    throw ConvergenceError("project_polyhedron: no convergence after " +
                               std::to_string(max_iter) + " cycles",
                           x, poly.max_residual(x));
}

inline double distance_to(const std::vector<double>& point, const Polyhedron& poly,
                          double tol = 1e-9) {
    return distance(point, project_polyhedron(point, poly, tol));
}

enum class FeasibilityStatus { intersecting, disjoint, unknown };

struct FeasibilityReport {
    FeasibilityStatus status = FeasibilityStatus::unknown;
    std::vector<double> witness;  // a point of the intersection when intersecting
    double gap = 0.0;             // stabilized distance between the sets otherwise
    std::size_t iterations = 0;
};

// Alternating projections between the two sets from the origin. Convex sets
// either meet (residuals fall below tol) or the inter-set gap stabilizes at
// its positive minimum; anything else is reported as unknown, not guessed.
inline FeasibilityReport feasibility_probe(const Polyhedron& a, const Polyhedron& b,
                                           double tol = 1e-9, std::size_t max_iter = 100000) {
    if (a.dim() != b.dim()) throw ArgumentError("feasibility_probe: dimension mismatch");
    FeasibilityReport report;
    std::vector<double> x(a.dim(), 0.0);
    double prev_gap = -1.0;
    std::size_t stable = 0;

    for (std::size_t it = 1; it <= max_iter; ++it) {
        report.iterations = it;
        const auto xa = project_polyhedron(x, a, tol, max_iter);
        const auto xb = project_polyhedron(xa, b, tol, max_iter);
        const double gap = distance(xa, xb);

        if (a.max_residual(xb) <= tol && b.max_residual(xb) <= tol) {
            report.status = FeasibilityStatus::intersecting;
            report.witness = xb;
            report.gap = 0.0;
            return report;
        }
        if (prev_gap >= 0.0 && std::abs(gap - prev_gap) <= 1e-12 * (1.0 + gap)) {
            if (++stable >= 5 && gap > tol) {
                report.status = FeasibilityStatus::disjoint;
                report.gap = gap;
                return report;
            }
        } else {
            stable = 0;
        }
        prev_gap = gap;
        x = xb;
    }
    report.gap = prev_gap;
    return report;  // unknown, with the last observed gap as diagnostic
}

struct LemmaInstance {
    std::vector<double> theta_star;
    Polyhedron true_set;
    Polyhedron proxy_set;
};

struct LemmaReport {
    double d1 = 0.0;  // distance(theta_star, I)
    double d2 = 0.0;  // distance(theta_c, I)
    bool pass = false;
    std::vector<double> theta_c;  // projection of theta_star onto the proxy set
    std::vector<double> theta_u;  // projection of theta_star onto the true set
    bool theta_c_true_feasible = false;
    double tol = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["d1"] = d1;
        j["d2"] = d2;
        j["pass"] = pass;
        j["theta_c"] = theta_c;
        j["theta_u"] = theta_u;
        j["theta_c_true_feasible"] = theta_c_true_feasible;
        j["tol"] = tol;
        return j;
    }
};

// The projection lemma: moving the unconstrained optimum onto the convex
// proxy set cannot increase its distance to the true-and-proxy intersection.
// Requires that intersection to be nonempty; a disjoint pair is the
// scenario the lemma explicitly excludes.
inline LemmaReport check_lemma(const LemmaInstance& instance, double tol = 1e-9) {
    if (instance.theta_star.size() != instance.true_set.dim() ||
        instance.true_set.dim() != instance.proxy_set.dim())
        throw ArgumentError("check_lemma: dimension mismatch");

    const auto probe = feasibility_probe(instance.true_set, instance.proxy_set, tol);
    if (probe.status == FeasibilityStatus::disjoint)
        throw ContractError("Lemma assumption violated (disjoint true/proxy sets, case D)");
    if (probe.status == FeasibilityStatus::unknown)
        throw NumericalError("check_lemma: could not establish a nonempty intersection");

    LemmaReport report;
    report.tol = tol;
    report.theta_c = project_polyhedron(instance.theta_star, instance.proxy_set, tol);
    report.theta_u = project_polyhedron(instance.theta_star, instance.true_set, tol);

    const auto intersection = Polyhedron::stacked(instance.true_set, instance.proxy_set);
    report.d1 = distance_to(instance.theta_star, intersection, tol);
    report.d2 = distance_to(report.theta_c, intersection, tol);
    report.pass = report.d2 <= report.d1 + tol;
    report.theta_c_true_feasible = instance.true_set.contains(report.theta_c, tol);
    return report;
}

enum class LemmaCase { A, B, C, D };

inline std::string to_string(LemmaCase c) {
    switch (c) {
        case LemmaCase::A: return "A";
        case LemmaCase::B: return "B";
        case LemmaCase::C: return "C";
        default: return "D";
    }
}

namespace detail {

inline std::vector<double> rotate2(double px, double py, double phi) {
    return {px * std::cos(phi) - py * std::sin(phi), px * std::sin(phi) + py * std::cos(phi)};
}

}  // namespace detail

// Seeded 2-D instances of the four proxy-vs-true scenarios:
//   A: sets overlap and the proxy projection theta_c satisfies the true set
//   B: sets overlap but theta_c violates the true set
//   C: theta_star already satisfies the true set
//   D: the sets are disjoint (the lemma's excluded case)
// Construction is randomized (rotation, offsets) and verified post hoc by
// the classifying predicate; generation retries until it holds.
inline LemmaInstance generate_case(LemmaCase which, std::uint64_t seed) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 500; ++attempt) {
        const double phi = rng.uniform(0.0, 6.283185307179586);
        const auto ex = detail::rotate2(1.0, 0.0, phi);  // rotated axis frame
        const auto ey = detail::rotate2(0.0, 1.0, phi);
        const double wx = rng.uniform(-1.0, 1.0);
        const double wy = rng.uniform(-1.0, 1.0);
        std::vector<double> w = {wx * ex[0] + wy * ey[0], wx * ex[1] + wy * ey[1]};

        LemmaInstance inst;
        switch (which) {
            case LemmaCase::A: {
                // Proxy strip sits inside the true strip along ex; pushing
                // theta_star back to the proxy boundary lands inside true.
                const double margin = rng.uniform(0.3, 1.0);
                const double dx = margin + rng.uniform(0.2, 1.5);
                inst.proxy_set = Polyhedron::create({{ex, dot(ex, w)}});
                inst.true_set = Polyhedron::create({{ex, dot(ex, w) + margin}});
                inst.theta_star = {w[0] + dx * ex[0] + rng.uniform(-1.0, 1.0) * ey[0],
                                   w[1] + dx * ex[1] + rng.uniform(-1.0, 1.0) * ey[1]};
                break;
            }
            case LemmaCase::B: {
                // Orthogonal halfplanes meeting at w; theta_star violates
                // both, and its proxy projection still violates true.
                const double dx = rng.uniform(0.2, 1.5);
                const double dy = rng.uniform(0.2, 1.5);
                inst.proxy_set = Polyhedron::create({{ex, dot(ex, w)}});
                inst.true_set = Polyhedron::create({{ey, dot(ey, w)}});
                inst.theta_star = {w[0] + dx * ex[0] + dy * ey[0], w[1] + dx * ex[1] + dy * ey[1]};
                break;
            }
            case LemmaCase::C: {
                // Both sets built with positive margin around theta_star.
                inst.theta_star = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
                auto around = [&](int nrows) {
                    std::vector<Halfspace> rows;
                    for (int r = 0; r < nrows; ++r) {
                        const double ang = rng.uniform(0.0, 6.283185307179586);
                        std::vector<double> a = {std::cos(ang), std::sin(ang)};
                        rows.push_back({a, dot(a, inst.theta_star) + rng.uniform(0.1, 1.0)});
                    }
                    return Polyhedron::create(std::move(rows));
                };
                inst.true_set = around(1 + static_cast<int>(rng.index(3)));
                inst.proxy_set = around(1 + static_cast<int>(rng.index(3)));
                break;
            }
            case LemmaCase::D: {
                // Opposite halfplanes separated by a positive gap along ex.
                const double c = rng.uniform(-1.0, 1.0);
                const double gap = rng.uniform(0.5, 2.5);
                std::vector<double> neg_ex = {-ex[0], -ex[1]};
                inst.proxy_set = Polyhedron::create({{ex, c}});
                inst.true_set = Polyhedron::create({{neg_ex, -(c + gap)}});  // ex . theta >= c + gap
                inst.theta_star = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
                break;
            }
        }

        // Classifying predicates; resample on failure.
        const double tol = 1e-9;
        switch (which) {
            case LemmaCase::A: {
                if (inst.true_set.contains(inst.theta_star, tol)) continue;
                const auto theta_c = project_polyhedron(inst.theta_star, inst.proxy_set, tol);
                if (!inst.true_set.contains(theta_c, tol)) continue;
                return inst;
            }
            case LemmaCase::B: {
                if (inst.true_set.contains(inst.theta_star, tol)) continue;
                const auto theta_c = project_polyhedron(inst.theta_star, inst.proxy_set, tol);
                if (inst.true_set.contains(theta_c, tol)) continue;
                return inst;
            }
            case LemmaCase::C: {
                if (!inst.true_set.contains(inst.theta_star, tol)) continue;
                return inst;
            }
            case LemmaCase::D: {
                if (feasibility_probe(inst.true_set, inst.proxy_set).status !=
                    FeasibilityStatus::disjoint)
                    continue;
                return inst;
            }
        }
    }
    throw NumericalError("generate_case: no instance satisfied the predicate after 500 attempts");
}

}  // namespace fairshift
