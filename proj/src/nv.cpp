#include "qdm/nv.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <limits>

namespace qdm {

// ---------------------------------------------------------------- axes

NVAxisSet NVAxisSet::standard() {
    const double s2 = std::sqrt(2.0);
    const double s3 = std::sqrt(3.0);
    NVAxisSet a;
    a.n_[0] = Vector3d(0, s2, 1) / s3;
    a.n_[1] = Vector3d(s2, 0, 1) / s3;
    a.n_[2] = Vector3d(0, s2, -1) / s3;
    a.n_[3] = Vector3d(s2, 0, -1) / s3;

    const Vector3d labZ(0, 0, 1), labX(1, 0, 0);
    for (int i = 0; i < 4; ++i) {
        Vector3d ref = labZ;
        Vector3d x = ref - ref.dot(a.n_[i]) * a.n_[i];
        if (x.norm() < 1e-9) {  // axis parallel to Z, fall back to X
            ref = labX;
            x = ref - ref.dot(a.n_[i]) * a.n_[i];
        }
        a.x_[i] = x.normalized();
        a.y_[i] = a.n_[i].cross(a.x_[i]);
    }
    return a;
}

Vector3d NVAxisSet::project_onto_axis(const Vector3d& b_lab, int i) const {
    int k = check(i);
    return Vector3d(b_lab.dot(x_[k]), b_lab.dot(y_[k]), b_lab.dot(n_[k]));
}

// ---------------------------------------------------------------- models

ResonanceSet resonances_perturbative(const PhysicalConstants& c, const StressParams& s,
                                     const Vector3d& b_nv, const Vector3d& db_nv, double dT) {
    c.validate();
    double bx = b_nv.x() + db_nv.x();
    double by = b_nv.y() + db_nv.y();
    double bz = b_nv.z() + db_nv.z();
    double dpr = c.D0 + c.dD_dT * dT + s.mz;
    double shift = 1.5 * c.gamma * c.gamma * (bx * bx + by * by) / dpr;
    double split = c.gamma * bz;
    return {dpr + shift - split, dpr + shift + split};
}

ResonanceSet resonances_exact(const PhysicalConstants& c, const StressParams& s,
                              const Vector3d& b_nv_total, double dT) {
    c.validate();
    using cd = std::complex<double>;
    using Matrix3cd = Eigen::Matrix3cd;
    const cd I(0, 1);
    const double r2 = 1.0 / std::sqrt(2.0);

    Matrix3cd Sx, Sy, Sz;
    Sx << 0, r2, 0, r2, 0, r2, 0, r2, 0;
    Sy << 0, -I * r2, 0, I * r2, 0, -I * r2, 0, I * r2, 0;
    Sz << 1, 0, 0, 0, 0, 0, 0, 0, -1;

    double D = c.D0 + c.dD_dT * dT;
    Matrix3cd H = (D + s.mz) * (Sz * Sz) +
                  c.gamma * (b_nv_total.x() * Sx + b_nv_total.y() * Sy + b_nv_total.z() * Sz) +
                  s.mx * (Sy * Sy - Sx * Sx) + s.my * (Sx * Sy + Sy * Sx);

    if ((H - H.adjoint()).norm() > 1e-9 * std::max(1.0, H.norm()))
        throw NumericError("ground-state Hamiltonian is not Hermitian");

    Eigen::SelfAdjointEigenSolver<Matrix3cd> es(H);
    const auto& ev = es.eigenvalues();  // ascending
    return {ev[1] - ev[0], ev[2] - ev[0]};
}

std::array<double, 3> hyperfine_lines(double center, double a_hf) {
    if (a_hf < 0) throw UsageError("hyperfine splitting must be >= 0");
    return {center - a_hf, center, center + a_hf};
}

AxisDeltas delta_fields(const PhysicalConstants& c, double df_minus, double df_plus) {
    c.validate();
    if (c.dD_dT == 0.0) throw UsageError("dD_dT = 0: temperature channel is undefined");
    AxisDeltas d;
    d.dbz = (df_plus - df_minus) / (2.0 * c.gamma);
    d.dT = (df_plus + df_minus) / (2.0 * c.dD_dT);
    return d;
}

Vector3d reconstruct_vector(const std::array<double, 4>& p) {
    for (double v : p)
        if (!std::isfinite(v))  // one bad projection invalidates the whole pixel
            return Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
    const double a = std::sqrt(3.0) / (2.0 * std::sqrt(2.0));
    const double b = std::sqrt(3.0) / 4.0;
    return Vector3d(a * (p[1] + p[3]),
                    a * (p[0] + p[2]),
                    b * ((p[0] - p[2]) - (p[3] - p[1])));
}

}  // namespace qdm
