#include "qdm/spectral.hpp"

#include <cmath>

#include "qdm/parallel.hpp"
#include "qdm/rng.hpp"

namespace qdm {

std::vector<double> evaluate_spectrum(const SpectrumModel& m, const std::vector<double>& freqs) {
    std::vector<double> out(freqs.size());
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        double dip = 0.0;
        for (const auto& l : m.lines) {
            double hw = 0.5 * l.fwhm;
            double d = freqs[i] - l.center;
            dip += l.contrast * hw * hw / (d * d + hw * hw);
        }
        out[i] = m.baseline * (1.0 - dip);
    }
    return out;
}

int outermost_axis(const NVAxisSet& axes, const Vector3d& bias_lab) {
    int best = 1;
    double bz = -1.0;
    for (int i = 1; i <= 4; ++i) {
        double v = std::abs(axes.project_onto_axis(bias_lab, i).z());
        if (v > bz) {
            bz = v;
            best = i;
        }
    }
    return best;
}

SpectrumModel build_pixel_model(const PhysicalConstants& c, const StressParams& s,
                                const NVAxisSet& axes, const Vector3d& bias_lab,
                                const Vector3d& db_lab, double dT, AcqMode mode, int axis,
                                HamiltonianFidelity fidelity, const LineShapeDefaults& shape) {
    SpectrumModel m;
    m.baseline = shape.baseline;

    int lo = 1, hi = 4;
    if (mode == AcqMode::single_axis) {
        if (axis == 0) axis = outermost_axis(axes, bias_lab);
        lo = hi = axis;
    }
    for (int i = lo; i <= hi; ++i) {
        ResonanceSet r;
        if (fidelity == HamiltonianFidelity::perturbative) {
            r = resonances_perturbative(c, s, axes.project_onto_axis(bias_lab, i),
                                        axes.project_onto_axis(db_lab, i), dT);
        } else {
            r = resonances_exact(c, s, axes.project_onto_axis(bias_lab + db_lab, i), dT);
        }
        for (double f0 : {r.f_minus, r.f_plus})
            for (double f : hyperfine_lines(f0, c.A_hf))
                m.lines.push_back({f, shape.fwhm, shape.contrast});
    }
    return m;
}

FrequencyPlan make_plan(const PhysicalConstants& c, const StressParams& s, const NVAxisSet& axes,
                        const Vector3d& bias_lab, AcqMode mode, int axis, const PlanDefaults& pd) {
    FrequencyPlan plan;
    if (mode == AcqMode::vector_all) {
        plan.windows.push_back({pd.vector_f_start, pd.vector_f_stop, pd.vector_points});
    } else {
        if (axis == 0) axis = outermost_axis(axes, bias_lab);
        auto r = resonances_perturbative(c, s, axes.project_onto_axis(bias_lab, axis),
                                         Vector3d::Zero(), 0.0);
        double lo = std::min(r.f_minus, r.f_plus), hi = std::max(r.f_minus, r.f_plus);
        plan.windows.push_back({lo - pd.window_half_span, lo + pd.window_half_span, pd.window_points});
        plan.windows.push_back({hi - pd.window_half_span, hi + pd.window_half_span, pd.window_points});
        if (plan.windows[0].f_stop >= plan.windows[1].f_start)
            throw UsageError("single-axis windows overlap; reduce window_half_span");
    }
    for (const auto& w : plan.windows) w.validate();
    return plan;
}

Map2D uniform_map(std::size_t rows, std::size_t cols, double pixel_size, double value) {
    return Map2D(rows, cols, pixel_size, value);
}

SpectralCube synthesize_cube(const SynthesisSpec& spec, const VectorFieldMap& db, const Map2D& dT) {
    spec.constants.validate();
    spec.noise.validate();
    if (!db.bx.same_shape(db.by) || !db.bx.same_shape(db.bz) || !db.bx.same_shape(dT))
        throw UsageError("field and temperature maps must share one grid");

    SpectralCube cube;
    cube.rows = db.rows();
    cube.cols = db.cols();
    int axis = spec.axis;
    if (spec.mode == AcqMode::single_axis && axis == 0)
        axis = outermost_axis(NVAxisSet::standard(), spec.bias);
    cube.plan = make_plan(spec.constants, spec.stress, NVAxisSet::standard(), spec.bias, spec.mode,
                          axis, spec.plan);
    cube.meta = {spec.constants, spec.stress, spec.bias,    spec.mode, axis,
                 spec.fidelity,  spec.shape,  spec.noise,   spec.seed, db.pixel_size()};

    const std::vector<double> freqs = cube.plan.all_freqs();
    const std::size_t nf = freqs.size();
    const double fmin = cube.plan.windows.front().f_start;
    const double fmax = cube.plan.windows.back().f_stop;
    cube.data.assign(cube.rows * cube.cols * nf, 0.0);

    const NVAxisSet axes = NVAxisSet::standard();
    const double noise_sd = spec.noise.sigma / std::sqrt(static_cast<double>(spec.noise.n_averages));
    std::vector<std::size_t> oog(cube.rows * cube.cols, 0);

    parallel_for(cube.rows * cube.cols, spec.workers, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            std::size_t r = p / cube.cols, col = p % cube.cols;
            double* out = cube.data.data() + p * nf;
            Vector3d dbv(db.bx.at(r, col), db.by.at(r, col), db.bz.at(r, col));
            double dt = dT.at(r, col);
            if (!dbv.allFinite() || !std::isfinite(dt)) {
                for (std::size_t i = 0; i < nf; ++i) out[i] = kNaN;
                continue;
            }
            auto model = build_pixel_model(spec.constants, spec.stress, axes, spec.bias, dbv, dt,
                                           spec.mode, axis, spec.fidelity, spec.shape);
            for (const auto& l : model.lines)
                if (l.center < fmin || l.center > fmax) ++oog[p];
            auto y = evaluate_spectrum(model, freqs);
            if (noise_sd > 0.0) {
                RngStream rng(spec.seed, /*key1=*/p, /*key2=*/0x5bd1u);
                for (std::size_t i = 0; i < nf; ++i) y[i] += noise_sd * rng.next_gaussian();
            }
            for (std::size_t i = 0; i < nf; ++i) out[i] = y[i];
        }
    });

    for (std::size_t v : oog) cube.out_of_grid_lines += v;
    return cube;
}

}  // namespace qdm
