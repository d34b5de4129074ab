#include "memsd/modal.hpp"

#include "memsd/errors.hpp"
#include "memsd/quadrature.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

namespace memsd {

using std::numbers::pi;

double characteristic_residual(double beta) { return 1.0 + std::cos(beta) * std::cosh(beta); }

double scaled_characteristic_residual(double beta) { return std::cos(beta) + 1.0 / std::cosh(beta); }

namespace {

// d/d(beta) of cos(beta) + sech(beta).
double scaled_characteristic_slope(double beta) {
    return -std::sin(beta) - std::tanh(beta) / std::cosh(beta);
}

double wavenumber_root(int n) {
    // g changes sign exactly once on ((n-1) pi, n pi).
    double lo = (n - 1) * pi;
    double hi = n * pi;
    double g_lo = scaled_characteristic_residual(lo);
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double g_mid = scaled_characteristic_residual(mid);
        if ((g_mid < 0.0) == (g_lo < 0.0)) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-6) break;
    }
    double beta = 0.5 * (lo + hi);
    for (int i = 0; i < 50; ++i) {
        const double step = scaled_characteristic_residual(beta) / scaled_characteristic_slope(beta);
        beta -= step;
        if (std::abs(step) < 1e-12 * beta) break;
    }
    return beta;
}

}  // namespace

std::vector<double> cantilever_wavenumbers(int count) {
    if (count < 1) throw ValidationError("cantilever_wavenumbers: count must be >= 1");
    std::vector<double> roots;
    roots.reserve(static_cast<std::size_t>(count));
    for (int n = 1; n <= count; ++n) roots.push_back(wavenumber_root(n));
    return roots;
}

ModeShape::ModeShape(int mode, double length) : mode_(mode), length_(length) {
    if (mode < 1) throw ValidationError("mode index must be >= 1");
    if (!(length > 0.0)) throw ValidationError("mode shape length must be > 0");
    beta_ = wavenumber_root(mode);
    sigma_ = (std::cosh(beta_) + std::cos(beta_)) / (std::sinh(beta_) + std::sin(beta_));
    norm_ = unnormalized(1.0);
}

// Past this argument cosh and sinh are replaced by the exponent-shifted form:
// (cosh z - sigma sinh z) cancels to ~eps * cosh(z) absolute error, 5e-8 at z = 20.
constexpr double kAsymptoticArgument = 8.0;

double ModeShape::unnormalized(double xi) const {
    const double z = beta_ * xi;
    if (z <= kAsymptoticArgument)
        return std::cosh(z) - std::cos(z) - sigma_ * (std::sinh(z) - std::sin(z));
    // (1 - sigma) e^z / 2 with 1 - sigma = (sin b - cos b - e^-b) / (sinh b + sin b).
    const double b = beta_;
    const double growing = (std::sin(b) - std::cos(b) - std::exp(-b)) * std::exp(z - b) /
                           (1.0 - std::exp(-2.0 * b) + 2.0 * std::sin(b) * std::exp(-b));
    const double decaying = 0.5 * (1.0 + sigma_) * std::exp(-z);
    return growing + decaying - std::cos(z) + sigma_ * std::sin(z);
}

double ModeShape::unnormalized_slope(double xi) const {
    const double z = beta_ * xi;
    if (z <= kAsymptoticArgument)
        return beta_ * (std::sinh(z) + std::sin(z) - sigma_ * (std::cosh(z) - std::cos(z)));
    const double b = beta_;
    const double growing = (std::sin(b) - std::cos(b) - std::exp(-b)) * std::exp(z - b) /
                           (1.0 - std::exp(-2.0 * b) + 2.0 * std::sin(b) * std::exp(-b));
    const double decaying = 0.5 * (1.0 + sigma_) * std::exp(-z);
    return beta_ * (growing - decaying + std::sin(z) + sigma_ * std::cos(z));
}

double ModeShape::at_xi(double xi) const { return unnormalized(xi) / norm_; }

double ModeShape::slope_at_xi(double xi) const { return unnormalized_slope(xi) / norm_; }

double ModeShape::operator()(double x) const {
    if (!(x >= 0.0) || !(x <= length_))
        throw ValidationError("mode shape position " + std::to_string(x) + " outside [0, L]");
    return at_xi(x / length_);
}

double mode_shape(int mode, double x, const BeamGeometry& beam) {
    beam.validate();
    return ModeShape(mode, beam.length)(x);
}

double natural_frequency(int mode, const BeamGeometry& beam, const Material& material) {
    beam.validate();
    material.validate();
    if (mode < 1) throw ValidationError("mode index must be >= 1");
    const double beta = wavenumber_root(mode);
    const double beta4 = beta * beta * beta * beta;
    return std::sqrt(beta4 / 12.0) * (beam.thickness / (beam.length * beam.length)) *
           std::sqrt(material.youngs_modulus / material.density) / (2.0 * pi);
}

namespace {

constexpr std::size_t kModalQuadraturePoints = 257;
constexpr double kModalQuadratureTolerance = 1e-9;

}  // namespace

ModalMassStiffness modal_mass_stiffness(int mode, const BeamGeometry& beam, const Material& material) {
    const double f = natural_frequency(mode, beam, material);
    const ModeShape shape(mode, beam.length);
    const double phi_sq = simpson_checked(
        [&](double x) {
            const double p = shape(x);
            return p * p;
        },
        0.0, beam.length, kModalQuadraturePoints, kModalQuadratureTolerance);
    const double mass = material.density * section_properties(beam).area * phi_sq;
    const double omega = 2.0 * pi * f;
    return {mass, omega * omega * mass};
}

ModalBasis modal_basis(int mode, const BeamGeometry& beam, const Material& material) {
    const auto ms = modal_mass_stiffness(mode, beam, material);
    ModeShape shape(mode, beam.length);
    return ModalBasis{mode, shape.wavenumber(), natural_frequency(mode, beam, material), ms.mass,
                      ms.stiffness, shape};
}

double mode_overlap(int m, int n, const BeamGeometry& beam) {
    beam.validate();
    const ModeShape a(m, beam.length);
    const ModeShape b(n, beam.length);
    const double integral = simpson_checked([&](double x) { return a(x) * b(x); }, 0.0, beam.length,
                                            kModalQuadraturePoints, kModalQuadratureTolerance,
                                            beam.length);
    return integral / beam.length;
}

namespace {

// The residual ||Kv - w^2 Mv|| / ||Kv|| of the lowest mode is bounded below by
// roughly eps * lambda_max / lambda_1, which for a 32-element mesh is ~1e-8 in
// double. Extended precision keeps it under 1e-10 up to 64 elements.
using Real = long double;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using Matrix4 = Eigen::Matrix<Real, 4, 4>;

// Element matrices in units EI = rhoA = 1 for element length le.
Matrix4 element_stiffness(Real le) {
    Matrix4 k;
    const Real l2 = le * le;
    k << 12, 6 * le, -12, 6 * le,
         6 * le, 4 * l2, -6 * le, 2 * l2,
         -12, -6 * le, 12, -6 * le,
         6 * le, 2 * l2, -6 * le, 4 * l2;
    return k / (l2 * le);
}

Matrix4 element_mass(Real le) {
    Matrix4 m;
    const Real l2 = le * le;
    m << 156, 22 * le, 54, -13 * le,
         22 * le, 4 * l2, 13 * le, -3 * l2,
         54, 13 * le, 156, -22 * le,
         -13 * le, -3 * l2, -22 * le, 4 * l2;
    return m * (le / Real(420));
}

constexpr double kEigenResidualTolerance = 1e-10;
constexpr int kMaxInverseIterations = 500;

}  // namespace

FemModalResult fem_modal(const BeamGeometry& beam, const Material& material, int n_elements,
                         int n_modes) {
    beam.validate();
    material.validate();
    if (n_modes < 1) throw ValidationError("fem_modal: n_modes must be >= 1");
    if (n_elements < n_modes + 2) throw ValidationError("fem_modal: need n_elements >= n_modes + 2");

    // Assemble on the unit-length beam; node 0 is clamped, so free DOF j maps
    // to global DOF j + 2.
    const int free_dofs = 2 * n_elements;
    const Real le = Real(1) / n_elements;
    const Matrix4 ke = element_stiffness(le);
    const Matrix4 me = element_mass(le);
    Matrix K = Matrix::Zero(free_dofs, free_dofs);
    Matrix M = Matrix::Zero(free_dofs, free_dofs);
    for (int e = 0; e < n_elements; ++e) {
        for (int a = 0; a < 4; ++a) {
            const int ga = 2 * e + a - 2;
            if (ga < 0) continue;
            for (int b = 0; b < 4; ++b) {
                const int gb = 2 * e + b - 2;
                if (gb < 0) continue;
                K(ga, gb) += ke(a, b);
                M(ga, gb) += me(a, b);
            }
        }
    }

    // M = L L^T turns K v = lambda M v into A y = lambda y, A = L^-1 K L^-T, y = L^T v.
    const Eigen::LLT<Matrix> mass_factor(M);
    if (mass_factor.info() != Eigen::Success) throw ConvergenceError("fem_modal: mass matrix is singular");
    const Matrix Lm = mass_factor.matrixL();
    Matrix A = Lm.triangularView<Eigen::Lower>().solve(K);
    A = Lm.triangularView<Eigen::Lower>().solve(A.transpose()).transpose();
    A = Real(0.5) * (A + A.transpose());
    const Eigen::LLT<Matrix> a_factor(A);
    if (a_factor.info() != Eigen::Success) throw ConvergenceError("fem_modal: stiffness is not positive definite");

    // Inverse iteration with deflation against the modes already found.
    std::vector<Vector> found;
    std::vector<Real> eigenvalues;
    for (int mode = 0; mode < n_modes; ++mode) {
        Vector y(free_dofs);
        for (int i = 0; i < free_dofs; ++i) y(i) = Real(1) + Real(0.01) * i;
        bool converged = false;
        Real lambda = 0;
        for (int it = 0; it < kMaxInverseIterations; ++it) {
            for (const auto& u : found) y -= u.dot(y) * u;
            y.normalize();
            y = a_factor.solve(y);
            for (const auto& u : found) y -= u.dot(y) * u;
            y.normalize();
            lambda = y.dot(A * y);

            const Vector v = Lm.transpose().triangularView<Eigen::Upper>().solve(y);
            const Vector kv = K * v;
            const Real residual = (kv - lambda * (M * v)).norm() / kv.norm();
            if (residual < kEigenResidualTolerance) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw ConvergenceError("fem_modal: inverse iteration did not converge for mode " +
                                   std::to_string(mode + 1));
        found.push_back(y);
        eigenvalues.push_back(lambda);
    }

    const auto section = section_properties(beam);
    const double L = beam.length;
    const double scale = material.youngs_modulus * section.second_moment /
                         (material.density * section.area * L * L * L * L);

    FemModalResult result;
    result.element_count = n_elements;
    for (int i = 0; i <= n_elements; ++i) result.node_x.push_back(L * i / n_elements);
    for (int mode = 0; mode < n_modes; ++mode) {
        const Vector v = Lm.transpose().triangularView<Eigen::Upper>().solve(found[mode]);
        const Real tip = v(free_dofs - 2);
        FemMode fm;
        fm.frequency = std::sqrt(static_cast<double>(eigenvalues[mode]) * scale) / (2.0 * pi);
        fm.dofs.assign(2, 0.0);
        for (int i = 0; i < free_dofs; ++i) {
            // Rotations come out per unit normalized length; convert to 1/m.
            const double value = static_cast<double>(v(i) / tip);
            fm.dofs.push_back(i % 2 == 0 ? value : value / L);
        }
        result.modes.push_back(std::move(fm));
    }
    return result;
}

}  // namespace memsd
