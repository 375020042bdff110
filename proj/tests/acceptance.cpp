// End-to-end acceptance gate. Every check prints exactly one PASS/FAIL line
// with the measured values next to the fixed bound it is held to, and the
// process exits nonzero if anything fails. Workloads are sized so the whole
// gate runs in a couple of minutes on a small CI box; the checks themselves
// are the full-size algorithms, not scaled-down stand-ins.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qdm/classify.hpp"
#include "qdm/fit.hpp"
#include "qdm/forward.hpp"
#include "qdm/io.hpp"
#include "qdm/nv.hpp"
#include "qdm/recon.hpp"
#include "qdm/rng.hpp"
#include "qdm/spectral.hpp"

using namespace qdm;
namespace fs = std::filesystem;

namespace {

const Vector3d kBias(2.04e-3, 1.57e-3, 0.65e-3);  // T, lab frame

int g_failures = 0;
fs::path g_dir;  // scratch directory for artifact determinism checks

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string strf(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void report(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("%s %2d  %-28s  %s\n", ok ? "PASS" : "FAIL", idx, name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::vector<char> ba(1 << 20), bb(1 << 20);
    for (;;) {
        fa.read(ba.data(), ba.size());
        fb.read(bb.data(), bb.size());
        if (fa.gcount() != fb.gcount()) return false;
        if (!std::equal(ba.begin(), ba.begin() + fa.gcount(), bb.begin())) return false;
        if (fa.gcount() == 0) return fa.eof() && fb.eof();
        if (fa.eof() || fb.eof()) return fa.eof() && fb.eof();
    }
}

// ---------------------------------------------------------------- check 1

void check_vector_inverse() {
    NVAxisSet axes = NVAxisSet::standard();
    RngStream rng(11, 0, 0);
    double t0 = now_s();
    double worst = 0;
    for (int n = 0; n < 1000; ++n) {
        Vector3d b(2e-3 * rng.next_gaussian(), 2e-3 * rng.next_gaussian(),
                   2e-3 * rng.next_gaussian());
        std::array<double, 4> proj;
        for (int i = 1; i <= 4; ++i) proj[i - 1] = axes.project_onto_axis(b, i).z();
        Vector3d r = reconstruct_vector(proj);
        worst = std::max(worst, (r - b).norm() / b.norm());
    }
    double dt = now_s() - t0;
    report(1, "field vector inverse",
           worst < 1e-12 && dt < 1.0,
           strf("1000 round trips: max rel err %.2e (<1e-12), %.3f s (<1 s)", worst, dt));
}

// ---------------------------------------------------------------- check 2

void check_line_model() {
    PhysicalConstants c;
    StressParams s;
    NVAxisSet axes = NVAxisSet::standard();
    auto err_at = [&](const Vector3d& b) {
        auto p = resonances_perturbative(c, s, b, Vector3d::Zero(), 0.0);
        auto e = resonances_exact(c, s, b, 0.0);
        return std::max(std::abs(p.f_minus - e.f_minus), std::abs(p.f_plus - e.f_plus));
    };
    double worst = 0, min_shrink = 1e300;
    for (int i = 1; i <= 4; ++i) {
        Vector3d b = axes.project_onto_axis(kBias, i);
        double e_full = err_at(b);
        double e_half = err_at(0.5 * b);  // third-order residual: expect ~8x
        worst = std::max(worst, e_full);
        min_shrink = std::min(min_shrink, e_full / e_half);
    }
    // purely transverse field has closed-form eigenvalues; pin both lines
    auto t = resonances_exact(c, s, Vector3d(2e-3, 0, 0), 0.0);
    double d_lo = std::abs(t.f_minus - 2871.095), d_hi = std::abs(t.f_plus - 2872.189);
    report(2, "line model vs Hamiltonian",
           worst < 1.0 && min_shrink >= 6.0 && d_lo < 1e-3 && d_hi < 1e-3,
           strf("max |df| %.2e MHz (<1), half-field shrink %.1fx (>=6), "
                "transverse lines off %.1e/%.1e MHz (<1e-3)",
                worst, min_shrink, d_lo, d_hi));
}

// ---------------------------------------------------------------- check 3

struct RoundTrip {
    double max_err = 0;    // T, absolute
    double max_ratio = 0;  // err / per-pixel bound
    double seconds = 0;
    double converged = 0;
};

VectorFieldMap test_field(std::size_t n, double px) {
    VectorFieldMap db;
    db.bx = Map2D(n, n, px);
    db.by = Map2D(n, n, px);
    db.bz = Map2D(n, n, px);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            double u = 2 * M_PI * static_cast<double>(c) / static_cast<double>(n);
            double v = 2 * M_PI * static_cast<double>(r) / static_cast<double>(n);
            db.bx.at(r, c) = 8e-6 * std::sin(u) * std::cos(v);
            db.by.at(r, c) = 8e-6 * std::cos(u) * std::sin(2 * v);
            db.bz.at(r, c) = 8e-6 * std::sin(u + v);
        }
    return db;
}

RoundTrip field_round_trip(HamiltonianFidelity fid, unsigned workers, bool keep_artifacts) {
    const std::size_t n = 64;
    const double px = 18.5e-6;
    VectorFieldMap db = test_field(n, px);
    Map2D dT(n, n, px);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            dT.at(r, c) = 0.15 * (1 + db.bx.at(r, c) / 8e-6);

    SynthesisSpec spec;
    spec.bias = kBias;
    spec.fidelity = fid;
    spec.workers = workers;
    double t0 = now_s();
    SpectralCube cube = synthesize_cube(spec, db, dT);
    FitConfig fc;
    ParameterMaps pm = fit_cube(cube, fc, workers);
    SpectralCube idle_cube = synthesize_cube(
        spec, VectorFieldMap{Map2D(n, n, px), Map2D(n, n, px), Map2D(n, n, px)}, Map2D(n, n, px));
    ParameterMaps idle = fit_cube(idle_cube, fc, workers);
    auto axes = all_axis_fields(pm, idle, spec.constants);
    VectorFieldMap rec = combine_axes(axes);

    RoundTrip out;
    out.seconds = now_s() - t0;
    out.converged = pm.converged_fraction();
    for (std::size_t i = 0; i < n * n; ++i) {
        double ex = rec.bx.data[i] - db.bx.data[i];
        double ey = rec.by.data[i] - db.by.data[i];
        double ez = rec.bz.data[i] - db.bz.data[i];
        double err = std::sqrt(ex * ex + ey * ey + ez * ez);
        double mag = std::sqrt(db.bx.data[i] * db.bx.data[i] + db.by.data[i] * db.by.data[i] +
                               db.bz.data[i] * db.bz.data[i]);
        out.max_err = std::max(out.max_err, err);
        out.max_ratio = std::max(out.max_ratio, err / std::max(1e-9, 0.01 * mag));
    }
    if (keep_artifacts) {
        std::string tag = "_w" + std::to_string(workers);
        write_cube(cube, (g_dir / ("rt_cube" + tag + ".qdmf")).string());
        write_parameter_maps(pm, (g_dir / ("rt_params" + tag + ".qdmf")).string());
        write_vector_map(rec, (g_dir / ("rt_recon" + tag + ".qdmf")).string());
    }
    return out;
}

void check_field_round_trip() {
    RoundTrip pert = field_round_trip(HamiltonianFidelity::perturbative, 2, true);
    RoundTrip exact = field_round_trip(HamiltonianFidelity::exact, 2, false);
    bool ok = pert.max_err < 1e-9 && pert.converged == 1.0 && exact.max_ratio <= 1.0 &&
              exact.converged == 1.0 && pert.seconds + exact.seconds < 300.0;
    report(3, "64x64 field map round trip", ok,
           strf("max err %.1e T (<1e-9) matched-model, %.2f of max(1 nT, 1%% |B|) full-model, "
                "%.0f s (<300)",
                pert.max_err, exact.max_ratio, pert.seconds + exact.seconds));
}

// ---------------------------------------------------------------- check 4

// Per-sample fractional contrast noise matching the shot-noise level of the
// two instruments; the chain below must read these back as field noise
// floors of ~20 nT (bare die) and ~2 nT (binned + filtered through-package).
constexpr double kSigmaDecapped = 6.452586e-05;
constexpr double kSigmaIntact = 8.876338e-05;

double floor_for_sigma(double sigma, std::size_t rows, std::size_t cols, int repeats,
                       std::size_t bin, double lowpass_sigma) {
    SynthesisSpec spec;
    spec.bias = kBias;
    spec.mode = AcqMode::single_axis;
    spec.workers = 1;

    VectorFieldMap db{Map2D(rows, cols, 18.5e-6), Map2D(rows, cols, 18.5e-6),
                      Map2D(rows, cols, 18.5e-6)};
    Map2D dT(rows, cols, 18.5e-6);

    spec.noise = {0.0, 1};
    ParameterMaps idle = fit_cube(synthesize_cube(spec, db, dT), FitConfig{}, 1);

    std::vector<Map2D> maps;
    for (int r = 0; r < repeats; ++r) {
        spec.noise = {sigma, 1};
        spec.seed = 1000 + static_cast<std::uint64_t>(r);
        ParameterMaps pm = fit_cube(synthesize_cube(spec, db, dT), FitConfig{}, 1);
        Map2D m = freqs_to_axis_field(pm, idle, spec.constants).dbz;
        if (bin > 1) m = bin_map(m, bin);
        if (lowpass_sigma > 0) m = gaussian_lowpass(m, lowpass_sigma);
        maps.push_back(std::move(m));
    }
    return noise_floor(maps).floor;
}

void check_noise_floors() {
    double f_dec = floor_for_sigma(kSigmaDecapped, 24, 24, 8, 1, 0.0);
    double f_int = floor_for_sigma(kSigmaIntact, 48, 48, 8, 4, 1.0);
    bool ok = f_dec > 16e-9 && f_dec < 24e-9 && f_int > 1.6e-9 && f_int < 2.4e-9;
    report(4, "repeat-measure noise floors", ok,
           strf("bare %.2f nT (20 +-20%%), through-package %.2f nT (2 +-20%%)", f_dec * 1e9,
                f_int * 1e9));
}

// ---------------------------------------------------------------- check 5

void check_wire_field() {
    // long straight segment against the infinite-wire closed form
    WireSegment seg;
    seg.p0 = Eigen::Vector3d(-1.0, 0, 0);
    seg.p1 = Eigen::Vector3d(1.0, 0, 0);
    seg.current = 1e-3;
    double worst_rel = 0;
    for (double r : {1e-4, 5e-4, 1e-3}) {
        double ref = 2e-7 * seg.current / r;
        double got = segment_field(seg, Eigen::Vector3d(0, r, 0)).norm();
        worst_rel = std::max(worst_rel, std::abs(got - ref) / ref);
    }

    // numerical divergence of the full test structure's field
    CurrentLayout fea = fea_reference_layout();
    const double h = 4e-6;
    auto field_at = [&](const Eigen::Vector3d& p) {
        Eigen::Vector3d b = Eigen::Vector3d::Zero();
        for (const auto& sg : fea.segments) b += segment_field(sg, p);
        return b;
    };
    double max_div = 0, peak = 0;
    for (double x : {-3e-4, 1e-4, 2.7e-4})
        for (double z : {2e-4, 5e-4}) {
            Eigen::Vector3d p(x, 0.7e-4, z);
            double div = 0;
            for (int d = 0; d < 3; ++d) {
                Eigen::Vector3d e = Eigen::Vector3d::Zero();
                e[d] = 1.0;
                div += (-field_at(p + 2 * h * e)[d] + 8 * field_at(p + h * e)[d] -
                        8 * field_at(p - h * e)[d] + field_at(p - 2 * h * e)[d]) /
                       (12 * h);
            }
            peak = std::max(peak, field_at(p).norm());
            max_div = std::max(max_div, std::abs(div));
        }
    double div_rel = max_div * h / peak;

    // superposition: plane map of a combined layout equals the sum of maps
    CurrentLayout a, b, both;
    WireSegment s1{Eigen::Vector3d(-5e-4, -1e-4, 0), Eigen::Vector3d(5e-4, -1e-4, 0), 2e-3,
                   WireLayer::top_metal, "a"};
    WireSegment s2{Eigen::Vector3d(-1e-4, -5e-4, -1e-4), Eigen::Vector3d(-1e-4, 5e-4, -1e-4),
                   -1e-3, WireLayer::substrate, "b1"};
    WireSegment s3{Eigen::Vector3d(1e-4, -5e-4, -1e-4), Eigen::Vector3d(1e-4, 5e-4, -1e-4), 1e-3,
                   WireLayer::substrate, "b2"};
    a.segments = {s1};
    b.segments = {s2, s3};
    both.segments = {s1, s2, s3};
    auto grid = PlaneGrid::centered(16, 16, 20e-6);
    VectorFieldMap fa = biot_savart_plane(a, 50e-6, grid, 2);
    VectorFieldMap fb = biot_savart_plane(b, 50e-6, grid, 2);
    VectorFieldMap fc = biot_savart_plane(both, 50e-6, grid, 2);
    double sup_err = 0, sup_peak = 0;
    for (std::size_t i = 0; i < fa.bx.size(); ++i) {
        Eigen::Vector3d sum(fa.bx.data[i] + fb.bx.data[i], fa.by.data[i] + fb.by.data[i],
                            fa.bz.data[i] + fb.bz.data[i]);
        Eigen::Vector3d got(fc.bx.data[i], fc.by.data[i], fc.bz.data[i]);
        sup_err = std::max(sup_err, (got - sum).norm());
        sup_peak = std::max(sup_peak, got.norm());
    }
    double sup_rel = sup_err / sup_peak;

    report(5, "wire field oracle checks",
           worst_rel < 1e-3 && div_rel < 1e-6 && sup_rel < 1e-12,
           strf("straight-wire rel err %.1e (<1e-3), div*h/peak %.1e (<1e-6), "
                "superposition %.1e (<1e-12)",
                worst_rel, div_rel, sup_rel));
}

// ---------------------------------------------------------------- check 6

void check_upward_continuation() {
    const std::size_t n = 512;
    const double px = 16e-6;
    auto grid = PlaneGrid::centered(n, n, px);
    CurrentLayout fea = fea_reference_layout();
    Map2D near_map = biot_savart_plane(fea, 25e-6, grid, 2).bz;
    Map2D far_map = biot_savart_plane(fea, 500e-6, grid, 2).bz;
    Map2D cont = upward_continue(near_map, 475e-6);

    double num = 0, den = 0;
    for (std::size_t r = n / 4; r < 3 * n / 4; ++r)
        for (std::size_t c = n / 4; c < 3 * n / 4; ++c) {
            double d = cont.at(r, c) - far_map.at(r, c);
            num += d * d;
            den += far_map.at(r, c) * far_map.at(r, c);
        }
    double rms = std::sqrt(num / den);

    // Hann-windowed projection onto the wiring fine structure: the top legs
    // alternate sign every 34.3 um, so their field's fundamental sits at the
    // 68.6 um two-wire period. Take the largest row amplitude.
    auto band_amp = [&](const Map2D& m) {
        double best = 0;
        for (std::size_t r = n / 3; r < 2 * n / 3; r += 8) {
            double re = 0, im = 0, wsum = 0;
            for (std::size_t c = 0; c < n; ++c) {
                double w = 0.5 * (1 - std::cos(2 * M_PI * static_cast<double>(c) / (n - 1.0)));
                double x = (static_cast<double>(c) - 0.5 * (n - 1)) * px;
                double ph = 2 * M_PI * x / 68.6e-6;
                re += w * m.at(r, c) * std::cos(ph);
                im -= w * m.at(r, c) * std::sin(ph);
                wsum += w;
            }
            best = std::max(best, 2 * std::sqrt(re * re + im * im) / wsum);
        }
        return best;
    };
    double a_near = band_amp(near_map), a_cont = band_amp(cont);
    double suppression = a_near / std::max(a_cont, 1e-300);

    report(6, "upward continuation", rms < 0.01 && suppression > 100.0,
           strf("central-half RMS mismatch %.2f%% (<1%%), wiring-pitch band %.1e -> %.1e T, "
                "suppressed %.0ex (>100)",
                100 * rms, a_near, a_cont, suppression));
}

// ---------------------------------------------------------------- check 7

void check_temperature_recovery() {
    const std::size_t n = 16;
    const double px = 18.5e-6;
    auto grid = PlaneGrid::centered(n, n, px);
    auto layout = ro_current_layout(DiePlan::reference(), {2, 200}, 50e-6);
    VectorFieldMap db = biot_savart_plane(layout, 10e-6, grid, 1);
    double t_true = temperature_of_state(200);
    Map2D dT(n, n, px, t_true);

    SynthesisSpec spec;
    spec.bias = kBias;
    spec.workers = 1;
    ParameterMaps active = fit_cube(synthesize_cube(spec, db, dT), FitConfig{}, 1);
    ParameterMaps idle = fit_cube(
        synthesize_cube(spec, VectorFieldMap{Map2D(n, n, px), Map2D(n, n, px), Map2D(n, n, px)},
                        Map2D(n, n, px)),
        FitConfig{}, 1);
    TemperatureMap t = mean_axis_temperature(all_axis_fields(active, idle, spec.constants));
    double mean = 0;
    for (double v : t.dT.data) mean += v;
    mean /= static_cast<double>(t.dT.size());
    report(7, "heating at full activity", std::abs(mean - t_true) < 1e-3,
           strf("200 active blocks: %.6f K recovered vs %.3f K, |err| %.1e K (<1e-3)", mean,
                t_true, std::abs(mean - t_true)));
}

// ---------------------------------------------------------------- checks 8-10

struct ChainResult {
    Evaluation ev;
    double explained = 0;
    double peak_single = 0;  // T, mean state-1 signature peak (bare die)
    double seconds = 0;
};

ChainResult run_chain(Scenario scen, std::size_t per_state, std::size_t bin, double fraction,
                      unsigned workers, const std::string& tag) {
    double t0 = now_s();
    DatasetSpec spec;
    spec.scenario = scen;
    for (int s : {0, 1, 5, 10, 50, 100, 200})
        spec.states.push_back({2, static_cast<std::size_t>(s)});
    spec.images_per_state = per_state;
    spec.seed = 7;
    spec.workers = workers;
    Dataset ds = make_dataset(spec);
    write_dataset(ds, (g_dir / ("ds_" + tag + ".qdmf")).string());

    ChainResult out;
    // paired mean difference of the single-active-block frames: background
    // and slow drift cancel, leaving that state's field signature
    std::size_t n_px = ds.actives.images[0].size();
    std::vector<double> sig(n_px, 0.0);
    std::size_t n_one = 0;
    for (std::size_t k = 0; k < ds.actives.size(); ++k) {
        if (ds.actives.labels[k] != 1) continue;
        ++n_one;
        for (std::size_t i = 0; i < n_px; ++i)
            sig[i] += ds.actives.images[k].data[i] - ds.idles.images[k].data[i];
    }
    for (double v : sig) out.peak_single = std::max(out.peak_single, std::abs(v) / n_one);

    LabeledImageSet prep = preprocess(ds.actives, ds.idles, bin);
    SplitConfig sc;
    sc.train_fraction = fraction;
    sc.seed = 0;
    SplitResult sr = split(prep, sc);
    PCABasis basis = pca_fit(sr.train, 9);
    for (double e : basis.explained) out.explained += e;
    ScoreMatrix scores = score_set(basis, sr.train, workers);
    SVMModel svm = svm_train(scores, 6.0);
    ClassifierBundle bundle{basis, svm, bin, scen};
    write_model(bundle, (g_dir / ("model_" + tag + ".qdmf")).string());
    out.ev = evaluate(svm, basis, sr.test);
    out.seconds = now_s() - t0;
    return out;
}

double adjacent_error_share(const Evaluation& ev) {
    double err = 0, adj = 0;
    for (std::size_t r = 0; r < ev.classes.size(); ++r)
        for (std::size_t c = 0; c < ev.classes.size(); ++c) {
            if (r == c) continue;
            err += ev.confusion[r][c];
            if ((r > c ? r - c : c - r) == 1) adj += ev.confusion[r][c];
        }
    return err > 0 ? adj / err : 1.0;
}

double class_accuracy(const Evaluation& ev, int state) {
    for (std::size_t i = 0; i < ev.classes.size(); ++i)
        if (ev.classes[i] == state) return ev.per_class[i];
    return -1.0;
}

void check_bare_die_classifier(const ChainResult& r) {
    bool perfect = true;
    for (double a : r.ev.per_class) perfect = perfect && a == 1.0;
    bool ok = r.explained > 0.99 && perfect && r.seconds < 600.0 && r.peak_single > 1e-7 &&
              r.peak_single < 4e-7;
    report(8, "bare-die activity classifier", ok,
           strf("single-block peak %.0f nT (~200), 9 scores carry %.2f%% variance (>99), "
                "per-class %s, %.0f s (<600)",
                r.peak_single * 1e9, 100 * r.explained, perfect ? "all 1.00" : "NOT all 1.00",
                r.seconds));
}

void check_through_package_classifier(const ChainResult& r) {
    bool high_perfect = class_accuracy(r.ev, 50) == 1.0 && class_accuracy(r.ev, 100) == 1.0 &&
                        class_accuracy(r.ev, 200) == 1.0;
    bool low_ok = true;
    for (int s : {0, 1, 5, 10}) low_ok = low_ok && class_accuracy(r.ev, s) >= 0.5;
    double adj = adjacent_error_share(r.ev);
    bool ok = high_perfect && low_ok && r.ev.total >= 0.75 && r.ev.total <= 1.0 && adj >= 0.9;
    report(9, "through-package classifier", ok,
           strf("total %.3f (0.75..1), >=50-block states %s, low states >=0.5 %s, "
                "adjacent errors %.0f%% (>=90)",
                r.ev.total, high_perfect ? "1.00" : "NOT 1.00", low_ok ? "yes" : "no", 100 * adj));
}

void check_determinism() {
    // the round-trip artifacts again with a different worker count
    field_round_trip(HamiltonianFidelity::perturbative, 1, true);
    bool rt_ok = same_bytes(g_dir / "rt_cube_w2.qdmf", g_dir / "rt_cube_w1.qdmf") &&
                 same_bytes(g_dir / "rt_params_w2.qdmf", g_dir / "rt_params_w1.qdmf") &&
                 same_bytes(g_dir / "rt_recon_w2.qdmf", g_dir / "rt_recon_w1.qdmf");

    // both classifier chains again with a different worker count
    run_chain(Scenario::decapped, 40, 2, 0.75, 2, "dec_w2");
    run_chain(Scenario::intact, 32, 4, 0.64, 2, "int_w2");
    bool ds_ok = same_bytes(g_dir / "ds_dec.qdmf", g_dir / "ds_dec_w2.qdmf") &&
                 same_bytes(g_dir / "ds_int.qdmf", g_dir / "ds_int_w2.qdmf");
    bool model_ok = same_bytes(g_dir / "model_dec.qdmf", g_dir / "model_dec_w2.qdmf") &&
                    same_bytes(g_dir / "model_int.qdmf", g_dir / "model_int_w2.qdmf");

    report(10, "worker-count determinism", rt_ok && ds_ok && model_ok,
           strf("1 vs 2 workers byte-identical: round-trip %s, datasets %s, models %s",
                rt_ok ? "yes" : "NO", ds_ok ? "yes" : "NO", model_ok ? "yes" : "NO"));
}

}  // namespace

int main() {
    g_dir = fs::temp_directory_path() / "qdm_acceptance";
    fs::remove_all(g_dir);
    fs::create_directories(g_dir);

    check_vector_inverse();
    check_line_model();
    check_field_round_trip();
    check_noise_floors();
    check_wire_field();
    check_upward_continuation();
    check_temperature_recovery();
    ChainResult dec = run_chain(Scenario::decapped, 40, 2, 0.75, 1, "dec");
    check_bare_die_classifier(dec);
    ChainResult intact = run_chain(Scenario::intact, 32, 4, 0.64, 1, "int");
    check_through_package_classifier(intact);
    check_determinism();

    fs::remove_all(g_dir);
    std::printf(g_failures ? "%d of 10 checks FAILED\n" : "all 10 checks passed\n", g_failures);
    return g_failures ? 1 : 0;
}
