#pragma once

#include <Eigen/Dense>
#include <array>

#include "qdm/errors.hpp"

namespace qdm {

using Eigen::Vector3d;

// ---------------------------------------------------------------------------
// constants (MHz / T / K unit system)
// ---------------------------------------------------------------------------

struct PhysicalConstants {
    double gamma = 2.803e4;    // gyromagnetic ratio, MHz/T
    double D0 = 2870.0;        // zero-field splitting at the working point, MHz
    double A_hf = 2.158;       // 14N hyperfine splitting between adjacent lines, MHz
    double dD_dT = -0.0742;    // thermal shift of D, MHz/K

    void validate() const {
        if (!(gamma > 0)) throw UsageError("gamma must be > 0");
        if (!(D0 > 0)) throw UsageError("D0 must be > 0");
        if (!(A_hf >= 0)) throw UsageError("A_hf must be >= 0");
    }
};

// Spin-stress / electric-field couplings entering the ground-state Hamiltonian.
struct StressParams {
    double mx = 0.0;  // MHz
    double my = 0.0;  // MHz
    double mz = 0.0;  // MHz
};

// Field environment of a pixel: static bias plus the activity-induced deltas.
struct FieldState {
    Vector3d b_bias = Vector3d::Zero();   // T, lab frame
    Vector3d db = Vector3d::Zero();       // T, lab frame
    double dT = 0.0;                      // K
};

// Resonance pair of one NV orientation (hyperfine handled separately).
struct ResonanceSet {
    double f_minus = 0.0;  // MHz
    double f_plus = 0.0;   // MHz
};

// ---------------------------------------------------------------------------
// crystal geometry
// ---------------------------------------------------------------------------

// The four NV orientations in the lab frame, each with an orthonormal
// transverse basis (x_i, y_i, n_i). The transverse basis is fixed by
// Gram-Schmidt of lab Z (fallback lab X) against n_i, so results that
// depend only on Bx^2 + By^2 are convention independent.
class NVAxisSet {
public:
    static NVAxisSet standard();

    const Vector3d& axis(int i) const { return n_[check(i)]; }        // i in 1..4
    const Vector3d& transverse_x(int i) const { return x_[check(i)]; }
    const Vector3d& transverse_y(int i) const { return y_[check(i)]; }

    // lab-frame vector -> (Bx, By, Bz) components in the frame of axis i
    Vector3d project_onto_axis(const Vector3d& b_lab, int i) const;

private:
    static int check(int i) {
        if (i < 1 || i > 4) throw UsageError("NV axis index must be in 1..4");
        return i - 1;
    }
    std::array<Vector3d, 4> n_, x_, y_;
};

// ---------------------------------------------------------------------------
// resonance models
// ---------------------------------------------------------------------------

// Second-order expression for the two transitions of one orientation:
//   f_-/f_+ = (D' ) + 3 gamma^2 (Bx^2+By^2) / (2 D') -/+ ... gamma Bz
// with D' = D0 + dD_dT * dT + Mz and the deltas folded into the components.
// Returns (f_minus, f_plus) tracking the m = -1 / m = +1 branches.
ResonanceSet resonances_perturbative(const PhysicalConstants& c, const StressParams& s,
                                     const Vector3d& b_nv, const Vector3d& db_nv, double dT);

// Full 3x3 ground-state Hamiltonian; returns the two transition frequencies
// from the lowest eigenstate, sorted ascending.
ResonanceSet resonances_exact(const PhysicalConstants& c, const StressParams& s,
                              const Vector3d& b_nv_total, double dT);

// Rigid hyperfine triplet around a center frequency, ascending.
std::array<double, 3> hyperfine_lines(double center, double a_hf);

// Differential observables from the shifts of one orientation's pair:
//   dBz = (df_plus - df_minus) / (2 gamma)
//   dT  = (df_plus + df_minus) / (2 dD_dT)
struct AxisDeltas {
    double dbz = 0.0;  // T
    double dT = 0.0;   // K
};
AxisDeltas delta_fields(const PhysicalConstants& c, double df_minus, double df_plus);

// Lab-frame vector from the four axial projections (p1..p4). Exact inverse of
// projecting a lab vector on the four axes of NVAxisSet::standard().
Vector3d reconstruct_vector(const std::array<double, 4>& axial);

}  // namespace qdm
