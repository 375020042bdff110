#pragma once

#include <functional>
#include <vector>

#include "qdm/spectral.hpp"

namespace qdm {

struct FitConfig {
    int max_iterations = 200;
    double cost_tolerance = 1e-10;   // relative decrease of the accepted cost
    double param_tolerance = 1e-8;   // relative step size
    double lambda0 = 1e-3;           // initial damping
    double lambda_up = 10.0;         // on rejected step
    double lambda_down = 0.1;        // on accepted step
    bool share_triplet_shape = true; // rigid hyperfine comb, shared fwhm/contrast
    double a_hf = 2.158;             // MHz, comb spacing
    LineShapeDefaults shape;         // seeds for fwhm / contrast / baseline
    double min_separation = 0.0;     // MHz between guessed centers; 0 -> 1.5 * a_hf

    void validate() const {
        if (max_iterations < 1) throw UsageError("max_iterations must be >= 1");
        if (!(lambda_up > 1.0) || !(lambda_down < 1.0) || !(lambda_down > 0.0))
            throw UsageError("damping factors must satisfy up > 1 and 0 < down < 1");
    }
};

struct InitialGuess {
    std::vector<double> centers;  // ascending, one per group
    double baseline = 1.0;
    double contrast = 0.02;
    bool low_confidence = false;
};

// Seeds for a multiplet fit: smooth, pick the n_groups deepest well-separated
// minima, refine each by a 3-point parabola. Centers are invariant under
// rescaling of the spectrum.
InitialGuess initial_guess(const std::vector<double>& freqs, const double* y, std::size_t n,
                           std::size_t n_groups, const FitConfig& cfg);

struct TripletParams {
    double center = 0.0;
    double fwhm = 0.0;
    double contrast = 0.0;
};

struct WindowFit {
    double baseline = 0.0;
    std::vector<TripletParams> groups;  // ascending by seeded center
    double residual_norm = 0.0;         // sqrt(sum of squared residuals)
    int iterations = 0;                 // accepted steps
    bool converged = false;
};

// Damped least squares on one window. Costs of accepted steps are strictly
// non-increasing; steps into an invalid region (fwhm <= 0, contrast < 0,
// baseline <= 0) are rejected like any cost increase. An optional trace
// records the accepted-cost sequence.
WindowFit fit_window(const std::vector<double>& freqs, const double* y, std::size_t n_groups,
                     const FitConfig& cfg, std::vector<double>* accepted_costs = nullptr);

// Forward model of one window and its analytic Jacobian. Parameter layout is
// [baseline, (center, fwhm, contrast) per group]; jac is n x p row-major and
// may be null when only the model values are needed.
void model_and_jacobian(const std::vector<double>& freqs, const std::vector<double>& params,
                        std::size_t n_groups, double a_hf, std::vector<double>& y,
                        std::vector<double>* jac);

struct WindowMaps {
    Map2D baseline, residual, iterations, converged;  // converged: 1.0 / 0.0
    std::vector<Map2D> center, fwhm, contrast;        // one per group
};

struct ParameterMaps {
    std::size_t rows = 0, cols = 0;
    FrequencyPlan plan;
    CubeMeta meta;  // acquisition context carried over from the cube
    std::vector<WindowMaps> windows;

    double converged_fraction() const;
};

// Number of spectral groups expected in each plan window for the cube's
// acquisition mode (vector: all 8 transition triplets in one window;
// single-axis: one per window).
std::vector<std::size_t> groups_per_window(const SpectralCube& cube);

using FitProgress = std::function<void(std::size_t done, std::size_t total)>;

// Per-pixel fits over the whole cube. Deterministic independent of the
// worker count; NaN spectra produce flagged non-converged pixels.
ParameterMaps fit_cube(const SpectralCube& cube, const FitConfig& cfg, int workers = 0,
                       const FitProgress& progress = {});

}  // namespace qdm
