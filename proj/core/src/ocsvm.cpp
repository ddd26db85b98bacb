#include "shm/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "shm/error.hpp"

namespace shm::ocsvm {

std::string_view to_string(KernelKind k) {
    switch (k) {
        case KernelKind::RBF: return "rbf";
        case KernelKind::Polynomial: return "polynomial";
        case KernelKind::Linear: return "linear";
    }
    return "rbf";
}

KernelKind kernel_from_string(std::string_view name) {
    if (name == "rbf") return KernelKind::RBF;
    if (name == "polynomial" || name == "poly") return KernelKind::Polynomial;
    if (name == "linear") return KernelKind::Linear;
    throw UsageError("unknown kernel '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
    if (kind == KernelKind::RBF && !(gamma > 0.0 && std::isfinite(gamma))) throw UsageError("RBF gamma must be positive");
    if (kind == KernelKind::Polynomial) {
        if (order < 2 || order > 4) throw UsageError("polynomial order must lie in [2, 4]");
        if (!std::isfinite(scale) || !std::isfinite(coef0)) throw UsageError("polynomial parameters must be finite");
    }
}

double kernel_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw UsageError("kernel_eval: dimension mismatch");
    switch (spec.kind) {
        case KernelKind::RBF: {
            double d2 = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
            return std::exp(-spec.gamma * d2);
        }
        case KernelKind::Polynomial: {
            double dot = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
            return std::pow(spec.scale * dot + spec.coef0, spec.order);
        }
        case KernelKind::Linear: {
            double dot = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
            return dot;
        }
    }
    return 0.0;
}

double default_gamma(std::span<const Point> points) {
    if (points.empty()) throw UsageError("default_gamma: no points");
    const std::size_t d = points.front().size();
    const double n = static_cast<double>(points.size());
    double var_sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (const auto& p : points) mean += p[c];
        mean /= n;
        double var = 0.0;
        for (const auto& p : points) var += (p[c] - mean) * (p[c] - mean);
        var_sum += var / n;
    }
    const double mean_var = var_sum / static_cast<double>(d);
    return mean_var > 0.0 ? 1.0 / (static_cast<double>(d) * mean_var) : 1.0 / static_cast<double>(d);
}

Eigen::MatrixXd gram_matrix(std::span<const Point> points, const KernelSpec& kernel) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            q(i, j) = q(j, i) = kernel_eval(kernel, points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
        }
    }
    return q;
}

double dual_objective(std::span<const Point> points, std::span<const double> alphas, const KernelSpec& kernel) {
    if (points.size() != alphas.size()) throw UsageError("dual_objective: size mismatch");
    const Eigen::MatrixXd q = gram_matrix(points, kernel);
    const Eigen::Map<const Eigen::VectorXd> a(alphas.data(), static_cast<Eigen::Index>(alphas.size()));
    return 0.5 * a.dot(q * a);
}

FitResult fit_with_report(std::span<const Point> points, double nu, const KernelSpec& kernel,
                          const FitOptions& options) {
    kernel.validate();
    if (points.empty()) throw UsageError("ocsvm fit: no training points");
    if (!(nu > 0.0 && nu <= 1.0)) throw UsageError("ocsvm fit: nu must lie in (0, 1]");
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw UsageError("ocsvm fit: points differ in dimension");
        for (double v : p) {
            if (!std::isfinite(v)) throw DataError("ocsvm fit: non-finite feature");
        }
    }
    nu = std::max(nu, kMinNu);
    const std::size_t n = points.size();
    const double upper = 1.0 / (nu * static_cast<double>(n));
    // Box of N entries each <= 1/(nu N) holds total mass 1/nu >= 1, so sum(alpha) = 1 is reachable.
    if (upper * static_cast<double>(n) < 1.0 - 1e-12) throw UsageError("ocsvm fit: infeasible box constraint");

    const Eigen::MatrixXd q = gram_matrix(points, kernel);

    // Feasible start: fill greedily up to the box bound.
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    double remaining = 1.0;
    for (Eigen::Index i = 0; i < alpha.size() && remaining > 0.0; ++i) {
        alpha(i) = std::min(upper, remaining);
        remaining -= alpha(i);
    }
    Eigen::VectorXd grad = q * alpha;

    const double bound_eps = 1e-12 * upper;
    auto at_upper = [&](Eigen::Index i) { return alpha(i) >= upper - bound_eps; };
    auto at_lower = [&](Eigen::Index i) { return alpha(i) <= bound_eps; };

    FitResult result;
    long iter = 0;
    double violation = 0.0;
    for (;; ++iter) {
        // i: steepest direction to grow (alpha_i < C), j: to shrink (alpha_j > 0).
        Eigen::Index up = -1;
        Eigen::Index low = -1;
        double g_min = std::numeric_limits<double>::infinity();
        double g_max = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < alpha.size(); ++k) {
            if (!at_upper(k) && grad(k) < g_min) {
                g_min = grad(k);
                up = k;
            }
            if (!at_lower(k) && grad(k) > g_max) {
                g_max = grad(k);
                low = k;
            }
        }
        violation = (up < 0 || low < 0) ? 0.0 : g_max - g_min;
        if (violation < options.tol) break;
        if (iter >= options.max_iterations) {
            throw NumericalError("ocsvm fit: no convergence after " + std::to_string(iter) +
                                 " pair updates (max KKT violation " + std::to_string(violation) + ")");
        }
        double eta = q(up, up) + q(low, low) - 2.0 * q(up, low);
        if (eta <= 1e-12) eta = 1e-12;
        double delta = (g_max - g_min) / eta;
        delta = std::min({delta, upper - alpha(up), alpha(low)});
        alpha(up) += delta;
        alpha(low) -= delta;
        if (alpha(up) > upper - bound_eps) alpha(up) = upper;
        if (alpha(low) < bound_eps) alpha(low) = 0.0;
        grad += delta * (q.col(up) - q.col(low));
    }
    // Tiny steps leave round-off residue next to the bounds; snap it so that
    // support-vector and margin membership agree with the solver's view.
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        if (at_lower(k)) alpha(k) = 0.0;
        else if (at_upper(k)) alpha(k) = upper;
    }
    grad = q * alpha;

    // Offset: smallest margin-vector gradient, so that every margin vector sits
    // on the inlier side despite the tol-wide spread of a converged solution.
    // Without margin vectors, the middle of the feasible interval.
    double margin_min = std::numeric_limits<double>::infinity();
    double bound_max = -std::numeric_limits<double>::infinity();
    double zero_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        if (at_upper(k)) bound_max = std::max(bound_max, grad(k));
        else if (at_lower(k)) zero_min = std::min(zero_min, grad(k));
        else margin_min = std::min(margin_min, grad(k));
    }
    double rho = margin_min;
    if (!std::isfinite(rho)) {
        rho = std::isfinite(zero_min) && std::isfinite(bound_max) ? 0.5 * (bound_max + zero_min)
              : std::isfinite(bound_max)                          ? bound_max
                                                                   : zero_min;
    }

    OcSvmModel& model = result.model;
    model.kernel = kernel;
    model.nu = nu;
    model.training_size = n;
    model.rho = rho;
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        if (alpha(k) > 0.0) {
            model.support_vectors.push_back(points[static_cast<std::size_t>(k)]);
            model.alphas.push_back(alpha(k));
        }
    }
    result.report.alphas.assign(alpha.begin(), alpha.end());
    result.report.gradient.assign(grad.begin(), grad.end());
    result.report.objective = 0.5 * alpha.dot(q * alpha);
    result.report.max_violation = violation;
    result.report.iterations = iter;
    return result;
}

OcSvmModel fit(std::span<const Point> points, double nu, const KernelSpec& kernel, double tol) {
    return fit_with_report(points, nu, kernel, FitOptions{tol, 100000}).model;
}

double decision(const OcSvmModel& model, std::span<const double> x) {
    double sum = 0.0;
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
        sum += model.alphas[i] * kernel_eval(model.kernel, x, model.support_vectors[i]);
    }
    return sum - model.rho;
}

Label classify(const OcSvmModel& model, std::span<const double> x) {
    return decision(model, x) >= 0.0 ? Label::Inlier : Label::Outlier;
}

}  // namespace shm::ocsvm
