#include "qdm/fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>

#include "qdm/parallel.hpp"

namespace qdm {

// ---------------------------------------------------------------- guess

InitialGuess initial_guess(const std::vector<double>& freqs, const double* y, std::size_t n,
                           std::size_t n_groups, const FitConfig& cfg) {
    InitialGuess g;
    if (n < 5 || n_groups == 0) throw UsageError("initial_guess needs >= 5 samples and >= 1 group");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(y[i])) {
            g.low_confidence = true;
            g.centers.assign(n_groups, freqs[n / 2]);
            return g;
        }

    // moving average, window of about one linewidth
    double df = std::abs(freqs[1] - freqs[0]);
    std::size_t half = std::min<std::size_t>(n / 8, static_cast<std::size_t>(
                           std::max(0.0, std::round(0.5 * cfg.shape.fwhm / std::max(df, 1e-12)))));
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i > half ? i - half : 0;
        std::size_t hi = std::min(n - 1, i + half);
        double acc = 0;
        for (std::size_t k = lo; k <= hi; ++k) acc += y[k];
        s[i] = acc / (hi - lo + 1);
    }

    // robust baseline: 90th percentile of the smoothed spectrum
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    double base = sorted[static_cast<std::size_t>(0.9 * (n - 1))];

    // interpolated dip depth relative to the baseline, zero outside the window
    auto depth_at = [&](double f) {
        if (f <= freqs.front() || f >= freqs.back()) return 0.0;
        auto it = std::upper_bound(freqs.begin(), freqs.end(), f);
        std::size_t i = it - freqs.begin();
        double t = (f - freqs[i - 1]) / (freqs[i] - freqs[i - 1]);
        double v = (1 - t) * s[i - 1] + t * s[i];
        return std::max(0.0, base - v);
    };

    struct Min {
        double f, depth, score;
        std::size_t idx;
    };
    std::vector<Min> minima;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (s[i] <= s[i - 1] && s[i] < s[i + 1]) {
            double depth = base - s[i];
            if (depth > 0) {
                // parabolic refinement of the minimum position
                double d1 = s[i - 1], d2 = s[i], d3 = s[i + 1];
                double denom = d1 - 2 * d2 + d3;
                double shift = std::abs(denom) > 1e-30 ? 0.5 * (d1 - d3) / denom : 0.0;
                shift = std::clamp(shift, -1.0, 1.0);
                double f = freqs[i] + shift * df;
                // A hyperfine triplet's central dip has satellites on *both*
                // sides; a satellite only has a neighbour on one.  Requiring
                // the weaker of the two expected satellites keeps satellites
                // from outranking their own centre when depths are nearly
                // equal, which they are for a_hf >> fwhm.
                double score = depth + std::min(depth_at(f - cfg.a_hf), depth_at(f + cfg.a_hf));
                minima.push_back({f, depth, score, i});
            }
        }
    }
    std::sort(minima.begin(), minima.end(), [](const Min& a, const Min& b) {
        return a.score != b.score ? a.score > b.score : a.f < b.f;
    });

    double min_sep = cfg.min_separation > 0 ? cfg.min_separation : 1.5 * cfg.a_hf;
    std::vector<Min> picked;
    for (const auto& m : minima) {
        if (picked.size() == n_groups) break;
        bool ok = true;
        for (const auto& p : picked)
            if (std::abs(p.f - m.f) < min_sep) ok = false;
        if (ok) picked.push_back(m);
    }
    if (picked.size() < n_groups) {
        g.low_confidence = true;
        std::size_t missing = n_groups - picked.size();
        for (std::size_t k = 0; k < missing; ++k) {
            double f = freqs.front() + (freqs.back() - freqs.front()) * (k + 1.0) / (missing + 1.0);
            picked.push_back({f, 0.0, 0.0, 0});
        }
    }

    for (const auto& p : picked) g.centers.push_back(p.f);
    std::sort(g.centers.begin(), g.centers.end());
    g.baseline = base;
    double max_depth = 0;
    for (const auto& p : picked) max_depth = std::max(max_depth, p.depth);
    g.contrast = base > 0 && max_depth > 0 ? std::min(0.5, max_depth / base) : cfg.shape.contrast;
    return g;
}

// ---------------------------------------------------------------- model

void model_and_jacobian(const std::vector<double>& freqs, const std::vector<double>& params,
                        std::size_t n_groups, double a_hf, std::vector<double>& y,
                        std::vector<double>* jac) {
    const std::size_t n = freqs.size();
    const std::size_t np = params.size();
    const double b = params[0];
    y.assign(n, 0.0);
    if (jac) jac->assign(n * np, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        double dip = 0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            const double f0 = params[1 + 3 * g];
            const double fwhm = params[2 + 3 * g];
            const double c = params[3 + 3 * g];
            const double hw = 0.5 * fwhm;
            double lsum = 0, dldf0 = 0, dldw = 0;
            for (double off : {-a_hf, 0.0, a_hf}) {
                double d = freqs[i] - (f0 + off);
                double den = d * d + hw * hw;
                double L = hw * hw / den;
                lsum += L;
                if (jac) {
                    dldf0 += 2.0 * hw * hw * d / (den * den);
                    dldw += hw * d * d / (den * den);  // dL/d(fwhm) = hw * d^2 / den^2
                }
            }
            dip += c * lsum;
            if (jac) {
                double* row = jac->data() + i * np;
                row[1 + 3 * g] = -b * c * dldf0;
                row[2 + 3 * g] = -b * c * dldw;
                row[3 + 3 * g] = -b * lsum;
            }
        }
        y[i] = b * (1.0 - dip);
        if (jac) (*jac)[i * np] = 1.0 - dip;  // d y / d baseline
    }
}

// ---------------------------------------------------------------- solver

WindowFit fit_window(const std::vector<double>& freqs, const double* yobs, std::size_t n_groups,
                     const FitConfig& cfg, std::vector<double>* accepted_costs) {
    cfg.validate();
    const std::size_t n = freqs.size();
    const std::size_t np = 1 + 3 * n_groups;

    WindowFit out;
    out.groups.assign(n_groups, {kNaN, kNaN, kNaN});
    out.baseline = kNaN;
    out.residual_norm = kNaN;

    bool finite = n >= np;
    for (std::size_t i = 0; i < n && finite; ++i)
        if (!std::isfinite(yobs[i])) finite = false;
    if (!finite) return out;  // flagged, never silently zeroed

    auto g0 = initial_guess(freqs, yobs, n, n_groups, cfg);
    std::vector<double> p(np);
    p[0] = g0.baseline > 0 ? g0.baseline : cfg.shape.baseline;
    for (std::size_t g = 0; g < n_groups; ++g) {
        p[1 + 3 * g] = g0.centers[g];
        p[2 + 3 * g] = cfg.shape.fwhm;
        p[3 + 3 * g] = std::max(1e-4, g0.contrast / 1.1);  // comb wings raise the apparent depth
    }

    auto cost_of = [&](const std::vector<double>& q, std::vector<double>& resid) {
        std::vector<double> ym;
        model_and_jacobian(freqs, q, n_groups, cfg.a_hf, ym, nullptr);
        resid.resize(n);
        double c = 0;
        for (std::size_t i = 0; i < n; ++i) {
            resid[i] = ym[i] - yobs[i];
            c += resid[i] * resid[i];
        }
        return c;
    };
    // Box constraints double as regularisation: a width collapsing to zero
    // turns a line into a delta that can chase single samples, and a contrast
    // above 2 means the dip overshoots an inverted baseline — both are
    // non-physical escapes from a bad basin rather than fits.
    const double fwhm_lo = 0.02 * cfg.shape.fwhm;
    const double fwhm_hi = 2.0 * (freqs.back() - freqs.front());
    auto feasible = [&](const std::vector<double>& q) {
        if (!(q[0] > 0)) return false;
        for (std::size_t g = 0; g < n_groups; ++g) {
            double w = q[2 + 3 * g], c = q[3 + 3 * g];
            if (!(w > fwhm_lo) || w > fwhm_hi || c < 0 || c > 2.0) return false;
            double f0 = q[1 + 3 * g];
            if (f0 < freqs.front() - fwhm_hi || f0 > freqs.back() + fwhm_hi) return false;
        }
        for (double v : q)
            if (!std::isfinite(v)) return false;
        return true;
    };

    std::vector<double> resid, ym, jac;
    double cost = cost_of(p, resid);
    if (accepted_costs) accepted_costs->push_back(cost);

    double lambda = cfg.lambda0;
    bool converged = false;
    int iters = 0;

    Eigen::MatrixXd JtJ(np, np);
    Eigen::VectorXd Jtr(np), delta(np);

    for (; iters < cfg.max_iterations && !converged; ++iters) {
        model_and_jacobian(freqs, p, n_groups, cfg.a_hf, ym, &jac);
        JtJ.setZero();
        Jtr.setZero();
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = jac.data() + i * np;
            double r = ym[i] - yobs[i];
            for (std::size_t a = 0; a < np; ++a) {
                Jtr(a) += row[a] * r;
                for (std::size_t b = a; b < np; ++b) JtJ(a, b) += row[a] * row[b];
            }
        }
        for (std::size_t a = 0; a < np; ++a)
            for (std::size_t b = 0; b < a; ++b) JtJ(a, b) = JtJ(b, a);

        bool accepted = false;
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
            Eigen::MatrixXd A = JtJ;
            for (std::size_t a = 0; a < np; ++a)
                A(a, a) += lambda * std::max(JtJ(a, a), 1e-30);
            delta = A.ldlt().solve(-Jtr);

            std::vector<double> q(np);
            for (std::size_t a = 0; a < np; ++a) q[a] = p[a] + delta(a);
            double newcost = feasible(q) ? cost_of(q, resid) : std::numeric_limits<double>::infinity();

            if (newcost <= cost) {
                double max_step = 0;
                for (std::size_t a = 0; a < np; ++a)
                    max_step = std::max(max_step, std::abs(delta(a)) / std::max(std::abs(p[a]), 1e-12));
                double drop = cost - newcost;
                p = q;
                cost = newcost;
                if (accepted_costs) accepted_costs->push_back(cost);
                lambda = std::max(1e-12, lambda * cfg.lambda_down);
                accepted = true;
                if (drop <= cfg.cost_tolerance * std::max(cost, 1e-30) || max_step <= cfg.param_tolerance)
                    converged = true;
            } else {
                lambda *= cfg.lambda_up;
                if (lambda > 1e14) break;
            }
        }
        if (!accepted) break;  // damping exhausted; keep best point found
    }

    out.baseline = p[0];
    for (std::size_t g = 0; g < n_groups; ++g)
        out.groups[g] = {p[1 + 3 * g], p[2 + 3 * g], p[3 + 3 * g]};
    out.residual_norm = std::sqrt(cost);
    out.iterations = iters;
    out.converged = converged;
    return out;
}

// ---------------------------------------------------------------- cube

std::vector<std::size_t> groups_per_window(const SpectralCube& cube) {
    std::vector<std::size_t> g;
    if (cube.meta.mode == AcqMode::vector_all) {
        for (std::size_t w = 0; w < cube.plan.windows.size(); ++w) g.push_back(8);
    } else {
        for (std::size_t w = 0; w < cube.plan.windows.size(); ++w) g.push_back(1);
    }
    return g;
}

double ParameterMaps::converged_fraction() const {
    if (windows.empty()) return 0.0;
    double ok = 0;
    for (std::size_t i = 0; i < rows * cols; ++i) {
        bool all = true;
        for (const auto& w : windows)
            if (w.converged.data[i] != 1.0) all = false;
        if (all) ok += 1;
    }
    return rows * cols > 0 ? ok / double(rows * cols) : 0.0;
}

ParameterMaps fit_cube(const SpectralCube& cube, const FitConfig& cfg, int workers,
                       const FitProgress& progress) {
    FitConfig c2 = cfg;
    c2.a_hf = cube.meta.constants.A_hf;  // comb spacing always follows the cube
    c2.validate();

    ParameterMaps pm;
    pm.rows = cube.rows;
    pm.cols = cube.cols;
    pm.plan = cube.plan;
    pm.meta = cube.meta;

    auto ngs = groups_per_window(cube);
    const double px = cube.meta.pixel_size;
    for (std::size_t w = 0; w < cube.plan.windows.size(); ++w) {
        WindowMaps wm;
        wm.baseline = Map2D(cube.rows, cube.cols, px, kNaN);
        wm.residual = Map2D(cube.rows, cube.cols, px, kNaN);
        wm.iterations = Map2D(cube.rows, cube.cols, px, 0.0);
        wm.converged = Map2D(cube.rows, cube.cols, px, 0.0);
        for (std::size_t g = 0; g < ngs[w]; ++g) {
            wm.center.emplace_back(cube.rows, cube.cols, px, kNaN);
            wm.fwhm.emplace_back(cube.rows, cube.cols, px, kNaN);
            wm.contrast.emplace_back(cube.rows, cube.cols, px, kNaN);
        }
        pm.windows.push_back(std::move(wm));
    }

    // per-window frequency slices
    std::vector<std::vector<double>> wfreqs;
    std::vector<std::size_t> woff;
    std::size_t off = 0;
    for (const auto& w : cube.plan.windows) {
        std::vector<double> f(w.n_points);
        for (std::size_t i = 0; i < w.n_points; ++i) f[i] = w.freq(i);
        wfreqs.push_back(std::move(f));
        woff.push_back(off);
        off += w.n_points;
    }

    const std::size_t npix = cube.rows * cube.cols;
    std::atomic<std::size_t> done{0};

    parallel_for(npix, workers, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pidx = lo; pidx < hi; ++pidx) {
            std::size_t r = pidx / cube.cols, col = pidx % cube.cols;
            const double* spec = cube.pixel(r, col);
            for (std::size_t w = 0; w < cube.plan.windows.size(); ++w) {
                auto fit = fit_window(wfreqs[w], spec + woff[w], ngs[w], c2);
                auto& wm = pm.windows[w];
                wm.baseline.at(r, col) = fit.baseline;
                wm.residual.at(r, col) = fit.residual_norm;
                wm.iterations.at(r, col) = fit.iterations;
                wm.converged.at(r, col) = fit.converged ? 1.0 : 0.0;
                for (std::size_t g = 0; g < ngs[w]; ++g) {
                    wm.center[g].at(r, col) = fit.groups[g].center;
                    wm.fwhm[g].at(r, col) = fit.groups[g].fwhm;
                    wm.contrast[g].at(r, col) = fit.groups[g].contrast;
                }
            }
            std::size_t d = ++done;
            if (progress && (d % 512 == 0 || d == npix)) progress(d, npix);
        }
    });
    return pm;
}

}  // namespace qdm
