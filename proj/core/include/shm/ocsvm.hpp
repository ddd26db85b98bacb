#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace shm::ocsvm {

using Point = std::vector<double>;

enum class KernelKind { RBF, Polynomial, Linear };

std::string_view to_string(KernelKind k);
KernelKind kernel_from_string(std::string_view name);

struct KernelSpec {
    KernelKind kind = KernelKind::RBF;
    double gamma = 0.5;   // RBF width
    int order = 3;        // polynomial degree, [2, 4]
    double coef0 = 1.0;   // polynomial offset
    double scale = 0.5;   // polynomial inner-product scale

    void validate() const;

    static KernelSpec rbf(double gamma) { return {KernelKind::RBF, gamma, 3, 1.0, 0.5}; }
    static KernelSpec polynomial(int order, double scale, double coef0) {
        return {KernelKind::Polynomial, 0.5, order, coef0, scale};
    }
    static KernelSpec linear() { return {KernelKind::Linear, 0.5, 3, 1.0, 0.5}; }
};

double kernel_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b);

/// 1 / (d * mean per-component variance) of the training points.
double default_gamma(std::span<const Point> points);

inline constexpr double kMinNu = 1e-3;

struct FitOptions {
    double tol = 1e-6;
    long max_iterations = 100000;  // pair updates
};

struct OcSvmModel {
    std::vector<Point> support_vectors;
    std::vector<double> alphas;
    double rho = 0.0;
    KernelSpec kernel;
    double nu = 0.5;
    std::size_t training_size = 0;

    double upper_bound() const { return 1.0 / (nu * static_cast<double>(training_size)); }
};

/// Solver diagnostics returned alongside the model.
struct FitReport {
    std::vector<double> alphas;       // full length-N dual vector
    std::vector<double> gradient;     // (Q alpha)_i
    double objective = 0.0;           // 1/2 alpha' Q alpha
    double max_violation = 0.0;       // final max KKT pair violation
    long iterations = 0;
};

struct FitResult {
    OcSvmModel model;
    FitReport report;
};

/// Solves min 1/2 a'Qa s.t. 0 <= a_i <= 1/(nu N), sum a = 1 by maximal-violating-pair SMO.
/// nu must lie in (0, 1]; values below kMinNu are raised to it.
FitResult fit_with_report(std::span<const Point> points, double nu, const KernelSpec& kernel,
                          const FitOptions& options = {});
OcSvmModel fit(std::span<const Point> points, double nu, const KernelSpec& kernel, double tol = 1e-6);

/// sum_i alpha_i K(x, sv_i) - rho.
double decision(const OcSvmModel& model, std::span<const double> x);

enum class Label { Inlier, Outlier };

/// Inlier iff decision >= 0.
Label classify(const OcSvmModel& model, std::span<const double> x);

/// Dual objective 1/2 sum_ij a_i a_j K(x_i, x_j) for an arbitrary alpha.
double dual_objective(std::span<const Point> points, std::span<const double> alphas, const KernelSpec& kernel);

Eigen::MatrixXd gram_matrix(std::span<const Point> points, const KernelSpec& kernel);

}  // namespace shm::ocsvm
