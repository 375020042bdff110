#pragma once

#include <cstdint>
#include <vector>

#include "qdm/map2d.hpp"
#include "qdm/nv.hpp"

namespace qdm {

// ---------------------------------------------------------------------------
// model types
// ---------------------------------------------------------------------------

struct LorentzianLine {
    double center = 0.0;    // MHz
    double fwhm = 1.0;      // MHz
    double contrast = 0.02; // fractional dip depth
};

// Photoluminescence spectrum: baseline * (1 - sum of Lorentzian dips).
struct SpectrumModel {
    double baseline = 1.0;
    std::vector<LorentzianLine> lines;
};

struct LineShapeDefaults {
    double fwhm = 1.0;
    double contrast = 0.02;
    double baseline = 1.0;
};

// Uniform frequency window, endpoints inclusive.
struct SweepGrid {
    double f_start = 0.0;  // MHz
    double f_stop = 0.0;   // MHz
    std::size_t n_points = 0;

    void validate() const {
        if (!(f_stop > f_start)) throw UsageError("sweep window requires f_stop > f_start");
        if (n_points < 2) throw UsageError("sweep window requires at least 2 points");
    }
    double freq(std::size_t i) const {
        return f_start + (f_stop - f_start) * static_cast<double>(i) / static_cast<double>(n_points - 1);
    }
};

// Acquisition plan: one wide window (vector mode) or a narrow window per
// monitored spectral feature (single-axis mode).
struct FrequencyPlan {
    std::vector<SweepGrid> windows;

    std::size_t total_points() const {
        std::size_t n = 0;
        for (const auto& w : windows) n += w.n_points;
        return n;
    }
    std::vector<double> all_freqs() const {
        std::vector<double> f;
        f.reserve(total_points());
        for (const auto& w : windows)
            for (std::size_t i = 0; i < w.n_points; ++i) f.push_back(w.freq(i));
        return f;
    }
};

struct PlanDefaults {
    double vector_f_start = 2750.0;
    double vector_f_stop = 3000.0;
    std::size_t vector_points = 240;
    std::size_t window_points = 30;
    double window_half_span = 4.0;  // MHz around each monitored triplet
};

// Per-sample Gaussian noise with shot-average reduction sigma / sqrt(n).
struct NoiseSpec {
    double sigma = 0.0;
    int n_averages = 1;

    void validate() const {
        if (sigma < 0) throw UsageError("noise sigma must be >= 0");
        if (n_averages < 1) throw UsageError("n_averages must be >= 1");
    }
};

enum class AcqMode : uint8_t { vector_all = 0, single_axis = 1 };
enum class HamiltonianFidelity : uint8_t { perturbative = 0, exact = 1 };

// ---------------------------------------------------------------------------
// cube
// ---------------------------------------------------------------------------

struct CubeMeta {
    PhysicalConstants constants;
    StressParams stress;
    Vector3d bias = Vector3d::Zero();   // T, lab frame
    AcqMode mode = AcqMode::vector_all;
    int axis = 0;                       // monitored axis for single-axis mode
    HamiltonianFidelity fidelity = HamiltonianFidelity::perturbative;
    LineShapeDefaults shape;
    NoiseSpec noise;
    uint64_t seed = 0;
    double pixel_size = 0.0;            // m
};

struct SpectralCube {
    std::size_t rows = 0, cols = 0;
    FrequencyPlan plan;
    CubeMeta meta;
    std::vector<double> data;               // [row][col][freq], last axis fastest
    std::size_t out_of_grid_lines = 0;      // synthesis diagnostic

    std::size_t n_freq() const { return plan.total_points(); }
    double* pixel(std::size_t r, std::size_t c) { return data.data() + (r * cols + c) * n_freq(); }
    const double* pixel(std::size_t r, std::size_t c) const {
        return data.data() + (r * cols + c) * n_freq();
    }
};

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

std::vector<double> evaluate_spectrum(const SpectrumModel& m, const std::vector<double>& freqs);

// Axis whose bias projection has the largest magnitude: its transitions are
// the outermost features of the full spectrum.
int outermost_axis(const NVAxisSet& axes, const Vector3d& bias_lab);

// Resonance + hyperfine comb of one pixel. Vector mode covers all four axes
// (24 lines), single-axis mode only the monitored one (6 lines).
SpectrumModel build_pixel_model(const PhysicalConstants& c, const StressParams& s,
                                const NVAxisSet& axes, const Vector3d& bias_lab,
                                const Vector3d& db_lab, double dT, AcqMode mode, int axis,
                                HamiltonianFidelity fidelity, const LineShapeDefaults& shape);

// Acquisition plan for the given mode; single-axis windows are centered on
// the idle-state triplet centers of the monitored axis.
FrequencyPlan make_plan(const PhysicalConstants& c, const StressParams& s, const NVAxisSet& axes,
                        const Vector3d& bias_lab, AcqMode mode, int axis,
                        const PlanDefaults& pd = {});

struct SynthesisSpec {
    PhysicalConstants constants;
    StressParams stress;
    Vector3d bias = Vector3d::Zero();
    AcqMode mode = AcqMode::vector_all;
    int axis = 0;  // 0 = pick the outermost axis automatically
    HamiltonianFidelity fidelity = HamiltonianFidelity::perturbative;
    LineShapeDefaults shape;
    PlanDefaults plan;
    NoiseSpec noise;
    uint64_t seed = 0;
    int workers = 0;
};

// Forward synthesis of an ODMR cube from per-pixel field/temperature maps.
// Deterministic for a given seed independent of the worker count: the noise
// stream of each sample is keyed by (seed, pixel index, sample index).
SpectralCube synthesize_cube(const SynthesisSpec& spec, const VectorFieldMap& db, const Map2D& dT);

Map2D uniform_map(std::size_t rows, std::size_t cols, double pixel_size, double value);

}  // namespace qdm
