#pragma once

#include "memsd/device.hpp"

#include <vector>

namespace memsd {

/// First `count` roots of the clamped-free characteristic equation
/// 1 + cos(beta) cosh(beta) = 0, ascending.
std::vector<double> cantilever_wavenumbers(int count);

/// 1 + cos(beta) cosh(beta).
double characteristic_residual(double beta);
/// cos(beta) + 1 / cosh(beta): the same equation divided through by cosh, which
/// stays well conditioned for the higher roots where cosh(beta) is ~1e10.
double scaled_characteristic_residual(double beta);

/// Clamped-free eigenfunction, tip-normalized (phi(L) = 1).
class ModeShape {
public:
    ModeShape(int mode, double length);

    int mode() const { return mode_; }
    double wavenumber() const { return beta_; }
    double length() const { return length_; }

    /// Deflection at x in [0, L]; throws ValidationError outside.
    double operator()(double x) const;
    /// Same, in terms of xi = x / L.
    double at_xi(double xi) const;
    double slope_at_xi(double xi) const;  // d(phi)/d(xi)

private:
    double unnormalized(double xi) const;
    double unnormalized_slope(double xi) const;

    int mode_;
    double length_;
    double beta_;
    double sigma_;
    double norm_;
};

double mode_shape(int mode, double x, const BeamGeometry& beam);

/// f_n = (1/2pi) sqrt(beta_n^4 / 12) (h / L^2) sqrt(E / rho).
double natural_frequency(int mode, const BeamGeometry& beam, const Material& material);

struct ModalMassStiffness {
    double mass = 0.0;       // kg
    double stiffness = 0.0;  // N/m
};

/// Galerkin projection onto the tip-normalized mode: m = rho A int(phi^2),
/// k = (2 pi f_n)^2 m. The integral is computed by checked Simpson quadrature.
ModalMassStiffness modal_mass_stiffness(int mode, const BeamGeometry& beam, const Material& material);

struct ModalBasis {
    int mode = 1;
    double wavenumber = 0.0;
    double frequency = 0.0;       // Hz
    double effective_mass = 0.0;  // kg
    double effective_stiffness = 0.0;  // N/m
    ModeShape shape;
};

ModalBasis modal_basis(int mode, const BeamGeometry& beam, const Material& material);

/// Normalized overlap int(phi_m phi_n dx) / L.
double mode_overlap(int m, int n, const BeamGeometry& beam);

struct FemMode {
    double frequency = 0.0;  // Hz
    /// Interleaved (deflection, rotation) per node, clamped node included.
    std::vector<double> dofs;

    double deflection(std::size_t node) const { return dofs[2 * node]; }
    double rotation(std::size_t node) const { return dofs[2 * node + 1]; }
};

struct FemModalResult {
    int element_count = 0;
    std::vector<double> node_x;  // m
    std::vector<FemMode> modes;  // ascending frequency
};

/// Hermite-cubic Euler-Bernoulli beam elements with consistent mass, clamped
/// at x = 0. Solves K v = w^2 M v for the lowest `n_modes` modes. Each
/// returned mode is tip-normalized (deflection at the free end = 1).
FemModalResult fem_modal(const BeamGeometry& beam, const Material& material, int n_elements,
                         int n_modes);

}  // namespace memsd
