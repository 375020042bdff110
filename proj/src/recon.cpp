#include "qdm/recon.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace qdm {

// ---------------------------------------------------------------- stats

MapStats map_stats(const Map2D& m) {
    MapStats st;
    double sum = 0;
    st.min = std::numeric_limits<double>::infinity();
    st.max = -std::numeric_limits<double>::infinity();
    for (double v : m.data) {
        if (!std::isfinite(v)) continue;
        sum += v;
        st.min = std::min(st.min, v);
        st.max = std::max(st.max, v);
        ++st.n;
    }
    if (st.n == 0) {
        st.min = st.max = kNaN;
        st.mean = kNaN;
        st.stddev = kNaN;
        return st;
    }
    st.mean = sum / static_cast<double>(st.n);
    if (st.n > 1) {
        double ss = 0;
        for (double v : m.data)
            if (std::isfinite(v)) ss += (v - st.mean) * (v - st.mean);
        st.stddev = std::sqrt(ss / static_cast<double>(st.n - 1));
    }
    return st;
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) throw UsageError("median of empty set");
    std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    double hi = v[m];
    if (v.size() % 2) return hi;
    std::nth_element(v.begin(), v.begin() + m - 1, v.begin() + m);
    return 0.5 * (v[m - 1] + hi);
}

}  // namespace

// ---------------------------------------------------------------- axis maps

namespace {

void check_compatible(const ParameterMaps& a, const ParameterMaps& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw UsageError("active and idle parameter maps differ in shape");
    if (a.meta.mode != b.meta.mode) throw UsageError("active and idle acquisition modes differ");
    if (a.meta.axis != b.meta.axis) throw UsageError("active and idle monitored axes differ");
    if (a.windows.size() != b.windows.size())
        throw UsageError("active and idle window counts differ");
    for (std::size_t w = 0; w < a.windows.size(); ++w)
        if (a.windows[w].center.size() != b.windows[w].center.size())
            throw UsageError("active and idle group counts differ");
}

bool pixel_converged(const ParameterMaps& pm, std::size_t idx) {
    for (const auto& w : pm.windows)
        if (w.converged.data[idx] != 1.0) return false;
    return true;
}

// In vector mode the eight fitted groups carry no axis labels; rank them by
// center frequency and pair ranks with the rank order of the predicted idle
// resonances. The perturbative model is accurate enough for ordering (the
// exact correction is far below the ~10 MHz axis spacing).
struct RankKey {
    int axis;
    bool plus;
};

std::vector<RankKey> predicted_rank_keys(const CubeMeta& meta) {
    NVAxisSet axes = NVAxisSet::standard();
    struct Entry {
        double f;
        RankKey key;
    };
    std::vector<Entry> e;
    for (int i = 1; i <= 4; ++i) {
        auto r = resonances_perturbative(meta.constants, meta.stress,
                                         axes.project_onto_axis(meta.bias, i), Vector3d::Zero(), 0.0);
        e.push_back({r.f_minus, {i, false}});
        e.push_back({r.f_plus, {i, true}});
    }
    std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) { return a.f < b.f; });
    std::vector<RankKey> keys;
    for (const auto& x : e) keys.push_back(x.key);
    return keys;
}

AxisFieldMap axis_field_single(const ParameterMaps& active, const ParameterMaps& idle,
                               const PhysicalConstants& c) {
    NVAxisSet axes = NVAxisSet::standard();
    const CubeMeta& meta = active.meta;
    // windows come ordered by frequency; which one tracks f- follows from the
    // sign of the predicted splitting
    auto r = resonances_perturbative(meta.constants, meta.stress,
                                     axes.project_onto_axis(meta.bias, meta.axis),
                                     Vector3d::Zero(), 0.0);
    std::size_t w_minus = r.f_minus <= r.f_plus ? 0 : 1;
    std::size_t w_plus = 1 - w_minus;

    AxisFieldMap out;
    out.axis = meta.axis;
    out.dbz = Map2D(active.rows, active.cols, meta.pixel_size, kNaN);
    out.dT = Map2D(active.rows, active.cols, meta.pixel_size, kNaN);
    for (std::size_t i = 0; i < active.rows * active.cols; ++i) {
        if (!pixel_converged(active, i) || !pixel_converged(idle, i)) continue;
        double dfm = active.windows[w_minus].center[0].data[i] - idle.windows[w_minus].center[0].data[i];
        double dfp = active.windows[w_plus].center[0].data[i] - idle.windows[w_plus].center[0].data[i];
        auto d = delta_fields(c, dfm, dfp);
        out.dbz.data[i] = d.dbz;
        out.dT.data[i] = d.dT;
    }
    return out;
}

std::vector<AxisFieldMap> axis_fields_vector(const ParameterMaps& active, const ParameterMaps& idle,
                                             const PhysicalConstants& c) {
    if (active.windows.size() != 1 || active.windows[0].center.size() != 8)
        throw UsageError("vector-mode parameter maps must carry one window of eight groups");
    auto keys = predicted_rank_keys(active.meta);
    NVAxisSet nv_axes = NVAxisSet::standard();

    std::vector<AxisFieldMap> out(4);
    for (int i = 0; i < 4; ++i) {
        out[i].axis = i + 1;
        out[i].dbz = Map2D(active.rows, active.cols, active.meta.pixel_size, kNaN);
        out[i].dT = Map2D(active.rows, active.cols, active.meta.pixel_size, kNaN);
    }

    auto ranked = [](const ParameterMaps& pm, std::size_t idx, std::array<double, 8>& f) {
        std::array<std::size_t, 8> order;
        for (std::size_t g = 0; g < 8; ++g) {
            f[g] = pm.windows[0].center[g].data[idx];
            order[g] = g;
        }
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
        std::array<double, 8> sorted;
        for (std::size_t g = 0; g < 8; ++g) sorted[g] = f[order[g]];
        f = sorted;
    };

    for (std::size_t i = 0; i < active.rows * active.cols; ++i) {
        if (!pixel_converged(active, i) || !pixel_converged(idle, i)) continue;
        std::array<double, 8> fa, fi;
        ranked(active, i, fa);
        ranked(idle, i, fi);
        std::array<double, 4> am{}, ap{}, im{}, ip{};
        bool ok = true;
        for (std::size_t g = 0; g < 8; ++g) {
            if (!std::isfinite(fa[g]) || !std::isfinite(fi[g])) ok = false;
            int ax = keys[g].axis - 1;
            (keys[g].plus ? ap : am)[ax] = fa[g];
            (keys[g].plus ? ip : im)[ax] = fi[g];
        }
        if (!ok) continue;
        std::array<double, 4> axial{};
        for (int ax = 0; ax < 4; ++ax)
            axial[ax] = delta_fields(c, am[ax] - im[ax], ap[ax] - ip[ax]).dbz;
        // The pair splitting pins the axial field cleanly, but the pair
        // center mixes the thermal shift with the quadratic transverse term
        // common to both lines -- left in, a transverse field change reads
        // as a few-mK temperature change. With the lab-frame field shift
        // known from all four axes, each side's center obeys
        //     S = D' + 1.5 gamma^2 Bperp^2 / D'
        // with known Bperp, so solve for D' on each side and difference the
        // two; what remains is the thermal shift alone.
        Vector3d db_lab = reconstruct_vector(axial);
        for (int ax = 0; ax < 4; ++ax) {
            Vector3d b_idle = nv_axes.project_onto_axis(active.meta.bias, ax + 1);
            Vector3d b_act = nv_axes.project_onto_axis(active.meta.bias + db_lab, ax + 1);
            double q_idle = 1.5 * c.gamma * c.gamma *
                            (b_idle.x() * b_idle.x() + b_idle.y() * b_idle.y());
            double q_act = 1.5 * c.gamma * c.gamma * (b_act.x() * b_act.x() + b_act.y() * b_act.y());
            double s_act = 0.5 * (am[ax] + ap[ax]);
            double s_idle = 0.5 * (im[ax] + ip[ax]);
            double d_act = 0.5 * (s_act + std::sqrt(s_act * s_act - 4.0 * q_act));
            double d_idle = 0.5 * (s_idle + std::sqrt(s_idle * s_idle - 4.0 * q_idle));
            out[ax].dbz.data[i] = axial[ax];
            // degenerate fit output can push the discriminant negative; the
            // NaN then flags the pixel instead of inventing a temperature
            out[ax].dT.data[i] = (d_act - d_idle) / c.dD_dT;
        }
    }
    return out;
}

}  // namespace

AxisFieldMap freqs_to_axis_field(const ParameterMaps& active, const ParameterMaps& idle,
                                 const PhysicalConstants& c) {
    check_compatible(active, idle);
    if (active.meta.mode != AcqMode::single_axis)
        throw UsageError("freqs_to_axis_field wants single-axis maps; use all_axis_fields");
    return axis_field_single(active, idle, c);
}

std::vector<AxisFieldMap> all_axis_fields(const ParameterMaps& active, const ParameterMaps& idle,
                                          const PhysicalConstants& c) {
    check_compatible(active, idle);
    if (active.meta.mode == AcqMode::single_axis)
        return {axis_field_single(active, idle, c)};
    return axis_fields_vector(active, idle, c);
}

VectorFieldMap combine_axes(const std::vector<AxisFieldMap>& axes) {
    std::array<const AxisFieldMap*, 4> by_axis{};
    for (const auto& a : axes) {
        if (a.axis < 1 || a.axis > 4) throw UsageError("axis index out of range in combine_axes");
        if (by_axis[a.axis - 1]) throw UsageError("duplicate axis in combine_axes");
        by_axis[a.axis - 1] = &a;
    }
    for (int i = 0; i < 4; ++i)
        if (!by_axis[i]) throw UsageError("combine_axes requires all four axes");
    for (int i = 1; i < 4; ++i)
        if (!by_axis[i]->dbz.same_shape(by_axis[0]->dbz))
            throw UsageError("axis maps differ in shape");

    const Map2D& ref = by_axis[0]->dbz;
    VectorFieldMap out = VectorFieldMap::zeros(ref.rows, ref.cols, ref.pixel_size);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        Vector3d b = reconstruct_vector({by_axis[0]->dbz.data[i], by_axis[1]->dbz.data[i],
                                         by_axis[2]->dbz.data[i], by_axis[3]->dbz.data[i]});
        out.bx.data[i] = b.x();
        out.by.data[i] = b.y();
        out.bz.data[i] = b.z();
    }
    return out;
}

TemperatureMap mean_axis_temperature(const std::vector<AxisFieldMap>& axes) {
    if (axes.empty()) throw UsageError("mean_axis_temperature needs at least one axis");
    const Map2D& ref = axes[0].dT;
    for (const auto& a : axes)
        if (!a.dT.same_shape(ref)) throw UsageError("axis maps differ in shape");
    TemperatureMap out;
    out.dT = Map2D(ref.rows, ref.cols, ref.pixel_size, kNaN);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double sum = 0;
        int n = 0;
        for (const auto& a : axes)
            if (std::isfinite(a.dT.data[i])) {
                sum += a.dT.data[i];
                ++n;
            }
        if (n) out.dT.data[i] = sum / n;
    }
    return out;
}

// ---------------------------------------------------------------- binning

Map2D bin_map(const Map2D& m, std::size_t factor, std::string* warning) {
    if (factor < 1) throw UsageError("bin factor must be >= 1");
    std::size_t rows = m.rows / factor, cols = m.cols / factor;
    if (rows == 0 || cols == 0) throw UsageError("bin factor exceeds map size");
    std::size_t drop_r = m.rows - rows * factor, drop_c = m.cols - cols * factor;
    if ((drop_r || drop_c) && warning)
        *warning = "bin_map: dropped " + std::to_string(drop_r) + " trailing row(s) and " +
                   std::to_string(drop_c) + " trailing col(s) not filling a block";

    Map2D out(rows, cols, m.pixel_size * static_cast<double>(factor), kNaN);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double sum = 0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < factor; ++i)
                for (std::size_t j = 0; j < factor; ++j) {
                    double v = m.at(r * factor + i, c * factor + j);
                    if (std::isfinite(v)) {
                        sum += v;
                        ++n;
                    }
                }
            if (n) out.at(r, c) = sum / static_cast<double>(n);
        }
    return out;
}

// ---------------------------------------------------------------- lowpass

namespace {

// One axis of the separable blur; `stride` walks along the filtered axis.
void blur_line(const double* in, double* out, std::size_t n, std::size_t stride,
               const std::vector<double>& kernel) {
    const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(in[i * stride])) {
            out[i * stride] = kNaN;
            continue;
        }
        double acc = 0, wsum = 0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
            std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + k;
            if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
            double v = in[j * stride];
            if (!std::isfinite(v)) continue;
            double w = kernel[k + radius];
            acc += w * v;
            wsum += w;
        }
        out[i * stride] = acc / wsum;  // wsum > 0: the center pixel is valid
    }
}

}  // namespace

Map2D gaussian_lowpass(const Map2D& m, double sigma_px) {
    if (sigma_px < 0) throw UsageError("gaussian_lowpass sigma must be >= 0");
    if (sigma_px == 0) return m;

    std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_px));
    std::vector<double> kernel(2 * radius + 1);
    for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma_px * sigma_px));

    Map2D tmp = m, out = m;
    for (std::size_t r = 0; r < m.rows; ++r)
        blur_line(m.data.data() + r * m.cols, tmp.data.data() + r * m.cols, m.cols, 1, kernel);
    for (std::size_t c = 0; c < m.cols; ++c)
        blur_line(tmp.data.data() + c, out.data.data() + c, m.rows, m.cols, kernel);
    return out;
}

// ---------------------------------------------------------------- continuation

namespace {

// Deterministic NaN fill: each pass replaces a NaN pixel by the mean of its
// valid 8-neighbours, double-buffered so the scan order cannot matter.
std::size_t inpaint_nans(Map2D& m) {
    std::size_t filled_total = 0;
    bool any_nan = true;
    while (any_nan) {
        any_nan = false;
        Map2D next = m;
        std::size_t filled_pass = 0;
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c) {
                if (m.valid(r, c)) continue;
                any_nan = true;
                double sum = 0;
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (!dr && !dc) continue;
                        std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + dr;
                        std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) + dc;
                        if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(m.rows) ||
                            cc >= static_cast<std::ptrdiff_t>(m.cols))
                            continue;
                        double v = m.at(rr, cc);
                        if (std::isfinite(v)) {
                            sum += v;
                            ++n;
                        }
                    }
                if (n) {
                    next.at(r, c) = sum / n;
                    ++filled_pass;
                }
            }
        if (any_nan && filled_pass == 0) throw UsageError("upward_continue: map has no valid pixels");
        filled_total += filled_pass;
        m = std::move(next);
        if (filled_pass == 0) break;
    }
    return filled_total;
}

}  // namespace

Map2D upward_continue(const Map2D& m, double delta_z, bool strict, std::string* warning) {
    if (delta_z < 0) throw UsageError("upward_continue delta_z must be >= 0");
    if (!(m.pixel_size > 0)) throw UsageError("upward_continue needs a positive pixel size");
    if (m.rows < 2 || m.cols < 2) throw UsageError("upward_continue needs at least a 2x2 map");

    Map2D work = m;
    bool has_nan = false;
    for (double v : work.data)
        if (!std::isfinite(v)) has_nan = true;
    if (has_nan) {
        if (strict) throw UsageError("upward_continue: NaN pixels rejected in strict mode");
        std::size_t filled = inpaint_nans(work);
        if (warning)
            *warning = "upward_continue: inpainted " + std::to_string(filled) + " NaN pixel(s)";
    }
    if (delta_z == 0) return work;  // exact identity by contract

    const std::size_t rows = m.rows, cols = m.cols;
    double mean = std::accumulate(work.data.begin(), work.data.end(), 0.0) /
                  static_cast<double>(work.data.size());
    for (double& v : work.data) v -= mean;

    // raised-cosine ramp over the outer 10 px so the padded border is smooth
    const std::size_t t = 10;
    auto ramp = [&](std::size_t i, std::size_t n) {
        std::size_t d = std::min(i, n - 1 - i);
        if (d >= t) return 1.0;
        return 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(d) / static_cast<double>(t)));
    };
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) work.at(r, c) *= ramp(r, rows) * ramp(c, cols);

    const std::size_t R2 = 2 * rows, C2 = 2 * cols, Ck = C2 / 2 + 1;
    std::vector<double> real(R2 * C2, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) real[r * C2 + c] = work.at(r, c);

    std::vector<std::complex<double>> spec(R2 * Ck);  // layout-compatible with fftw_complex
    fftw_plan fwd = fftw_plan_dft_r2c_2d(static_cast<int>(R2), static_cast<int>(C2), real.data(),
                                         reinterpret_cast<fftw_complex*>(spec.data()), FFTW_ESTIMATE);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);

    for (std::size_t i = 0; i < R2; ++i) {
        double ky = (i <= R2 / 2 ? static_cast<double>(i) : static_cast<double>(i) - R2) /
                    (static_cast<double>(R2) * m.pixel_size);
        for (std::size_t j = 0; j < Ck; ++j) {
            double kx = static_cast<double>(j) / (static_cast<double>(C2) * m.pixel_size);
            double att = std::exp(-2.0 * M_PI * std::hypot(kx, ky) * delta_z);
            spec[i * Ck + j] *= att;
        }
    }

    fftw_plan bwd = fftw_plan_dft_c2r_2d(static_cast<int>(R2), static_cast<int>(C2),
                                         reinterpret_cast<fftw_complex*>(spec.data()), real.data(),
                                         FFTW_ESTIMATE);
    fftw_execute(bwd);
    fftw_destroy_plan(bwd);

    Map2D out(rows, cols, m.pixel_size);
    const double norm = 1.0 / (static_cast<double>(R2) * static_cast<double>(C2));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = real[r * C2 + c] * norm + mean;
    return out;
}

// ---------------------------------------------------------------- noise floor

MapStats noise_floor(const std::vector<Map2D>& repeats) {
    if (repeats.size() < 2) throw UsageError("noise_floor needs at least 2 repeated maps");
    for (const auto& r : repeats)
        if (!r.same_shape(repeats[0])) throw UsageError("repeated maps differ in shape");

    Map2D sd(repeats[0].rows, repeats[0].cols, repeats[0].pixel_size, kNaN);
    std::vector<double> valid_sds;
    for (std::size_t i = 0; i < sd.size(); ++i) {
        double sum = 0, n = 0;
        for (const auto& r : repeats)
            if (std::isfinite(r.data[i])) {
                sum += r.data[i];
                n += 1;
            }
        if (n < 2) continue;
        double mean = sum / n, ss = 0;
        for (const auto& r : repeats)
            if (std::isfinite(r.data[i])) ss += (r.data[i] - mean) * (r.data[i] - mean);
        sd.data[i] = std::sqrt(ss / (n - 1));
        valid_sds.push_back(sd.data[i]);
    }
    if (valid_sds.empty()) throw UsageError("noise_floor: no pixel has 2 valid repeats");

    MapStats st = map_stats(sd);
    st.floor = median_of(std::move(valid_sds));
    return st;
}

MapStats noise_floor(const Map2D& m, std::size_t row0, std::size_t row1, std::size_t col0,
                     std::size_t col1) {
    if (row0 >= row1 || col0 >= col1 || row1 > m.rows || col1 > m.cols)
        throw UsageError("noise_floor region is empty or out of range");
    Map2D region(row1 - row0, col1 - col0, m.pixel_size);
    for (std::size_t r = row0; r < row1; ++r)
        for (std::size_t c = col0; c < col1; ++c) region.at(r - row0, c - col0) = m.at(r, c);
    MapStats st = map_stats(region);
    if (st.n == 0) throw UsageError("noise_floor region has no valid pixels");
    st.floor = st.stddev;
    return st;
}

}  // namespace qdm
