#include "qdm/forward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "qdm/errors.hpp"
#include "qdm/parallel.hpp"
#include "qdm/rng.hpp"

namespace qdm {

using Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Layout plumbing
// ---------------------------------------------------------------------------

void CurrentLayout::validate() const {
    double max_i = 0;
    for (std::size_t k = 0; k < segments.size(); ++k) {
        const auto& s = segments[k];
        if ((s.p1 - s.p0).squaredNorm() == 0)
            throw UsageError("current layout: segment #" + std::to_string(k) +
                             " has zero length");
        if (!std::isfinite(s.current) || !s.p0.allFinite() || !s.p1.allFinite())
            throw UsageError("current layout: segment #" + std::to_string(k) +
                             " has non-finite data");
        max_i = std::max(max_i, std::abs(s.current));
    }

    // Kirchhoff balance per net: quantize endpoints to a 1 pm grid and sum
    // signed currents wherever two or more segment ends meet.
    using Key = std::tuple<std::string, long long, long long, long long>;
    auto key_of = [](const std::string& net, const Vector3d& p) {
        return Key{net, std::llround(p.x() * 1e12), std::llround(p.y() * 1e12),
                   std::llround(p.z() * 1e12)};
    };
    std::map<Key, std::pair<double, int>> junctions;  // net flow, endpoint count
    for (const auto& s : segments) {
        auto& in = junctions[key_of(s.net, s.p1)];
        in.first += s.current;
        in.second += 1;
        auto& out = junctions[key_of(s.net, s.p0)];
        out.first -= s.current;
        out.second += 1;
    }
    const double tol = 1e-12 * std::max(max_i, 1e-30);
    for (const auto& [key, flow] : junctions) {
        if (flow.second < 2) continue;  // open end: current enters the model here
        if (std::abs(flow.first) > tol)
            throw UsageError("current layout: net '" + std::get<0>(key) +
                             "' violates current conservation at a junction (net flow " +
                             std::to_string(flow.first) + " A)");
    }
}

void CurrentLayout::append(const CurrentLayout& other) {
    segments.insert(segments.end(), other.segments.begin(), other.segments.end());
}

const DieRegion& DiePlan::region(int index) const {
    if (index < 1 || index > 4)
        throw UsageError("die plan: region index " + std::to_string(index) +
                         " out of range (R1..R4)");
    return regions[static_cast<std::size_t>(index - 1)];
}

void DiePlan::validate() const {
    for (const auto& r : regions) {
        if (!(std::isfinite(r.x0) && std::isfinite(r.x1) && std::isfinite(r.y0) &&
              std::isfinite(r.y1)))
            throw UsageError("die plan: non-finite region bounds");
        if (r.x1 < r.x0 || r.y1 < r.y0)
            throw UsageError("die plan: inverted region bounds");
    }
    for (std::size_t a = 0; a < regions.size(); ++a)
        for (std::size_t b = a + 1; b < regions.size(); ++b) {
            const auto& ra = regions[a];
            const auto& rb = regions[b];
            double ox = std::min(ra.x1, rb.x1) - std::max(ra.x0, rb.x0);
            double oy = std::min(ra.y1, rb.y1) - std::max(ra.y0, rb.y0);
            if (ox > 0 && oy > 0)
                throw UsageError("die plan: regions R" + std::to_string(a + 1) + " and R" +
                                 std::to_string(b + 1) + " overlap");
        }
    if (!(top_pitch > top_width && top_width > 0))
        throw UsageError("die plan: need top_pitch > top_width > 0");
    if (!(sub_pitch > sub_width && sub_width > 0))
        throw UsageError("die plan: need sub_pitch > sub_width > 0");
    if (!(sub_depth > 0) || !(die_thickness > 0))
        throw UsageError("die plan: layer depths must be positive");
}

DiePlan DiePlan::reference() {
    DiePlan plan;
    const double half = 0.275e-3;  // 0.55 mm square clusters
    const double dx = 0.94e-3, dy = 0.9e-3;
    auto box = [&](double cx, double cy) {
        return DieRegion{cx - half, cy - half, cx + half, cy + half};
    };
    // reading order: R1 top-left, R2 top-right, R3 bottom-left, R4 bottom-right
    plan.regions[0] = box(-dx, dy);
    plan.regions[1] = box(dx, dy);
    plan.regions[2] = box(-dx, -dy);
    plan.regions[3] = box(dx, -dy);
    return plan;
}

namespace {

double need_num(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number())
        throw FormatError(std::string("die plan: missing or non-numeric field '") + key + "'");
    return j[key].get<double>();
}

}  // namespace

DiePlan die_plan_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("die plan: ") + e.what(),
                          static_cast<long long>(e.byte));
    }
    if (!j.is_object()) throw FormatError("die plan: top level must be an object");
    if (!j.contains("regions") || !j["regions"].is_array() || j["regions"].size() != 4)
        throw FormatError("die plan: 'regions' must be an array of four rectangles");
    DiePlan plan;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& r = j["regions"][i];
        plan.regions[i].x0 = need_num(r, "x0_m");
        plan.regions[i].y0 = need_num(r, "y0_m");
        plan.regions[i].x1 = need_num(r, "x1_m");
        plan.regions[i].y1 = need_num(r, "y1_m");
    }
    plan.top_pitch = need_num(j, "top_pitch_m");
    plan.top_width = need_num(j, "top_width_m");
    plan.sub_pitch = need_num(j, "sub_pitch_m");
    plan.sub_width = need_num(j, "sub_width_m");
    plan.sub_depth = need_num(j, "sub_depth_m");
    plan.die_thickness = need_num(j, "die_thickness_m");
    plan.validate();
    return plan;
}

std::string die_plan_to_json(const DiePlan& plan) {
    nlohmann::json j;
    j["regions"] = nlohmann::json::array();
    for (const auto& r : plan.regions)
        j["regions"].push_back(
            {{"x0_m", r.x0}, {"y0_m", r.y0}, {"x1_m", r.x1}, {"y1_m", r.y1}});
    j["top_pitch_m"] = plan.top_pitch;
    j["top_width_m"] = plan.top_width;
    j["sub_pitch_m"] = plan.sub_pitch;
    j["sub_width_m"] = plan.sub_width;
    j["sub_depth_m"] = plan.sub_depth;
    j["die_thickness_m"] = plan.die_thickness;
    return j.dump(2) + "\n";
}

void StandoffConfig::validate() const {
    if (!(height > 0)) throw UsageError("stand-off height must be positive");
}

StandoffConfig StandoffConfig::preset(Scenario s) {
    return {s == Scenario::decapped ? 10e-6 : 800e-6};
}

PlaneGrid PlaneGrid::centered(std::size_t rows, std::size_t cols, double pixel_size) {
    PlaneGrid g;
    g.rows = rows;
    g.cols = cols;
    g.pixel_size = pixel_size;
    g.x0 = -0.5 * static_cast<double>(cols - 1) * pixel_size;
    g.y0 = -0.5 * static_cast<double>(rows - 1) * pixel_size;
    return g;
}

void PlaneGrid::validate() const {
    if (rows == 0 || cols == 0) throw UsageError("plane grid: empty");
    if (!(pixel_size > 0)) throw UsageError("plane grid: pixel size must be positive");
    if (!std::isfinite(x0) || !std::isfinite(y0)) throw UsageError("plane grid: non-finite origin");
}

// ---------------------------------------------------------------------------
// Field evaluation
// ---------------------------------------------------------------------------

Vector3d segment_field(const WireSegment& seg, const Vector3d& p) {
    Vector3d d = seg.p1 - seg.p0;
    double len2 = d.squaredNorm();
    if (len2 == 0) return Vector3d::Zero();
    Vector3d u = d / std::sqrt(len2);
    Vector3d a = p - seg.p0, b = p - seg.p1;
    double an = a.norm(), bn = b.norm();
    if (an == 0 || bn == 0) return Vector3d::Zero();  // endpoint: undefined, treat as skipped
    double t1 = u.dot(a);
    Vector3d rho_v = a - t1 * u;
    double rho2 = rho_v.squaredNorm();
    if (rho2 < 1e-30) return Vector3d::Zero();  // on the axis beyond an end: exact zero
    // mu0/(4 pi) * I/rho * (cos(theta1) - cos(theta2)), direction u x rho_hat
    double mag = 1e-7 * seg.current / rho2 * (t1 / an - u.dot(b) / bn);
    return mag * u.cross(rho_v);
}

VectorFieldMap biot_savart_plane(const CurrentLayout& layout, double plane_z,
                                 const PlaneGrid& grid, int workers) {
    grid.validate();
    layout.validate();
    const double clearance = grid.pixel_size / 10.0;
    for (std::size_t k = 0; k < layout.segments.size(); ++k) {
        const auto& s = layout.segments[k];
        double zlo = std::min(s.p0.z(), s.p1.z());
        double zhi = std::max(s.p0.z(), s.p1.z());
        double dist = plane_z < zlo ? zlo - plane_z : (plane_z > zhi ? plane_z - zhi : 0.0);
        if (dist <= clearance) {
            std::ostringstream msg;
            msg << "biot_savart_plane: sensing plane z=" << plane_z
                << " m passes through or grazes segment #" << k << " (net '" << s.net << "')";
            throw UsageError(msg.str());
        }
    }

    VectorFieldMap out = VectorFieldMap::zeros(grid.rows, grid.cols, grid.pixel_size);
    parallel_for(grid.rows, workers, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            double y = grid.y0 + static_cast<double>(r) * grid.pixel_size;
            for (std::size_t c = 0; c < grid.cols; ++c) {
                double x = grid.x0 + static_cast<double>(c) * grid.pixel_size;
                Vector3d p(x, y, plane_z);
                Vector3d b = Vector3d::Zero();
                for (const auto& s : layout.segments) b += segment_field(s, p);
                out.bx.at(r, c) = b.x();
                out.by.at(r, c) = b.y();
                out.bz.at(r, c) = b.z();
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Activity models
// ---------------------------------------------------------------------------

namespace {

// Closed rectangular loop in a horizontal plane: two legs along y at xa (up)
// and xb (down), crossbars at both ends.  Current circulates once.
void add_hairpin(CurrentLayout& out, const std::string& net, WireLayer layer, double xa,
                 double xb, double y0, double y1, double z, double current) {
    Vector3d c1(xa, y0, z), c2(xa, y1, z), c3(xb, y1, z), c4(xb, y0, z);
    WireSegment s;
    s.layer = layer;
    s.net = net;
    s.current = current;
    s.p0 = c1;
    s.p1 = c2;
    out.segments.push_back(s);
    s.p0 = c2;
    s.p1 = c3;
    out.segments.push_back(s);
    s.p0 = c3;
    s.p1 = c4;
    out.segments.push_back(s);
    s.p0 = c4;
    s.p1 = c1;
    out.segments.push_back(s);
}

}  // namespace

CurrentLayout ro_current_layout(const DiePlan& plan, const ChipState& state,
                                double per_ro_current) {
    plan.validate();
    const auto& r = plan.region(state.region);
    CurrentLayout out;
    if (state.n_ros == 0) return out;
    if (!(per_ro_current > 0))
        throw UsageError("ro_current_layout: per-oscillator current must be positive");
    if (!(r.width() > 0) || !(r.height() > 0))
        throw UsageError("ro_current_layout: region R" + std::to_string(state.region) +
                         " has zero area but oscillators are active");

    const std::size_t n_wires = static_cast<std::size_t>(r.width() / plan.top_pitch);
    const std::size_t n_pairs = n_wires / 2;
    if (n_pairs == 0)
        throw UsageError("ro_current_layout: region narrower than one wire pair");

    // Each oscillator spreads its draw over a few adjacent supply/return
    // pairs; the starting pair rotates with the oscillator index so large
    // counts load the whole grid evenly.
    const std::size_t n_share = std::min<std::size_t>(4, n_pairs);
    std::vector<double> pair_current(n_pairs, 0.0);
    const double slice = per_ro_current / static_cast<double>(n_share);
    for (std::size_t j = 0; j < state.n_ros; ++j)
        for (std::size_t m = 0; m < n_share; ++m)
            pair_current[(j + m) % n_pairs] += slice;

    auto wire_x = [&](std::size_t i) {
        return r.cx() +
               (static_cast<double>(i) - 0.5 * static_cast<double>(n_wires - 1)) * plan.top_pitch;
    };
    const std::string tag = "r" + std::to_string(state.region);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        if (pair_current[p] == 0.0) continue;
        add_hairpin(out, tag + "_pair" + std::to_string(p), WireLayer::top_metal, wire_x(2 * p),
                    wire_x(2 * p + 1), r.y0, r.y1, 0.0, pair_current[p]);
    }

    // coarse package-level feed below the die, carrying the whole draw
    double total = static_cast<double>(state.n_ros) * per_ro_current;
    add_hairpin(out, tag + "_feed", WireLayer::substrate, r.cx() - 0.5 * plan.sub_pitch,
                r.cx() + 0.5 * plan.sub_pitch, r.y0 - 0.2e-3, r.y1 + 0.2e-3, -plan.sub_depth,
                total);
    return out;
}

CurrentLayout fea_reference_layout() {
    CurrentLayout out;
    const double i_wire = 10e-3;
    // top metal: 21.6 um wires on a 34.3 um pitch, eight alternating pairs
    const double top_pitch = 34.3e-6;
    const std::size_t top_wires = 16;
    for (std::size_t p = 0; p < top_wires / 2; ++p) {
        double xa = (static_cast<double>(2 * p) - 0.5 * static_cast<double>(top_wires - 1)) *
                    top_pitch;
        add_hairpin(out, "fea_top" + std::to_string(p), WireLayer::top_metal, xa, xa + top_pitch,
                    -0.4e-3, 0.4e-3, 0.0, i_wire);
    }
    // substrate: 100 um wires with 100 um spacing, 300 um below, two pairs
    const double sub_pitch = 200e-6;
    const std::size_t sub_wires = 4;
    for (std::size_t p = 0; p < sub_wires / 2; ++p) {
        double xa = (static_cast<double>(2 * p) - 0.5 * static_cast<double>(sub_wires - 1)) *
                    sub_pitch;
        add_hairpin(out, "fea_sub" + std::to_string(p), WireLayer::substrate, xa, xa + sub_pitch,
                    -0.6e-3, 0.6e-3, -300e-6, i_wire);
    }
    return out;
}

double temperature_of_state(std::size_t n_ros, double kelvin_per_ro) {
    return kelvin_per_ro * static_cast<double>(n_ros);
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

Map2D background_map(const BackgroundSpec& bg, const PlaneGrid& grid) {
    grid.validate();
    Map2D m(grid.rows, grid.cols, grid.pixel_size);
    double x_max = grid.x0 + static_cast<double>(grid.cols - 1) * grid.pixel_size;
    double y_max = grid.y0 + static_cast<double>(grid.rows - 1) * grid.pixel_size;
    const double reach = 4.0 * bg.bump_sigma;
    long i_lo = std::lround(std::floor((grid.x0 - reach) / bg.bump_spacing));
    long i_hi = std::lround(std::ceil((x_max + reach) / bg.bump_spacing));
    long j_lo = std::lround(std::floor((grid.y0 - reach) / bg.bump_spacing));
    long j_hi = std::lround(std::ceil((y_max + reach) / bg.bump_spacing));

    for (std::size_t r = 0; r < grid.rows; ++r) {
        double y = grid.y0 + static_cast<double>(r) * grid.pixel_size;
        for (std::size_t c = 0; c < grid.cols; ++c) {
            double x = grid.x0 + static_cast<double>(c) * grid.pixel_size;
            double v = bg.gradient * (x + y);
            for (long i = i_lo; i <= i_hi; ++i)
                for (long j = j_lo; j <= j_hi; ++j) {
                    double bx = (static_cast<double>(i) + 0.5) * bg.bump_spacing;
                    double by = (static_cast<double>(j) + 0.5) * bg.bump_spacing;
                    double rho2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                    if (rho2 > reach * reach) continue;
                    double q = rho2 / (2.0 * bg.bump_sigma * bg.bump_sigma);
                    double sign = ((i + j) & 1) ? -1.0 : 1.0;
                    v += sign * bg.bump_amplitude * (1.0 - q) * std::exp(-q);
                }
            m.at(r, c) = v;
        }
    }
    return m;
}

void LabeledImageSet::validate() const {
    if (labels.size() != images.size() || timestamps.size() != images.size())
        throw UsageError("image set: images, labels and timestamps differ in length");
    for (std::size_t j = 1; j < images.size(); ++j)
        if (!images[j].same_shape(images[0]))
            throw UsageError("image set: image " + std::to_string(j) +
                             " does not match the common dimensions");
}

double DatasetSpec::resolved_noise_floor() const {
    if (noise_floor >= 0) return noise_floor;
    return scenario == Scenario::decapped ? 20e-9 : 2e-9;
}

double DatasetSpec::resolved_drift_sigma() const {
    if (drift_sigma >= 0) return drift_sigma;
    return scenario == Scenario::decapped ? 10e-9 : 8e-9;
}

Dataset make_dataset(const DatasetSpec& spec) {
    if (spec.states.empty()) throw UsageError("make_dataset: no states requested");
    if (spec.images_per_state == 0) throw UsageError("make_dataset: images_per_state must be > 0");
    if (spec.rows == 0 || spec.cols == 0 || !(spec.pixel_size > 0))
        throw UsageError("make_dataset: bad image geometry");
    spec.plan.validate();

    const auto standoff = StandoffConfig::preset(spec.scenario);
    const auto grid = PlaneGrid::centered(spec.rows, spec.cols, spec.pixel_size);
    const double noise = spec.resolved_noise_floor();
    const double drift = spec.resolved_drift_sigma();
    const Map2D bg = background_map(spec.background, grid);

    // activity field per state, computed once; frames reuse it
    std::vector<Map2D> base;
    base.reserve(spec.states.size());
    for (const auto& st : spec.states) {
        auto layout = ro_current_layout(spec.plan, st, spec.per_ro_current);
        if (layout.segments.empty())
            base.emplace_back(spec.rows, spec.cols, spec.pixel_size, 0.0);
        else
            base.push_back(biot_savart_plane(layout, standoff.height, grid, spec.workers).bz);
    }

    const std::size_t total = spec.states.size() * spec.images_per_state;
    Dataset ds;
    const char* tag = spec.scenario == Scenario::decapped ? "decapped" : "intact";
    ds.actives.scenario = ds.idles.scenario = tag;
    for (auto* set : {&ds.actives, &ds.idles}) {
        set->images.resize(total);
        set->labels.resize(total);
        set->timestamps.resize(total);
    }

    // Low-spatial-frequency background drift: board-level supply and thermal
    // wander, modeled as three smooth modes (uniform plus the two tilts),
    // each a stationary AR(1) process over the acquisition timeline.  The
    // correlation time spans many frame pairs, so an idle frame and the
    // active frame right after it see nearly the same background -- which is
    // what makes nearest-in-time idle subtraction worth doing -- while over
    // the whole run the level still wanders by the full drift sigma.  The
    // walk is precomputed serially so the worker count cannot reorder it.
    constexpr double kDriftCorrelationTime = 1800.0;  // timestamp units
    constexpr std::array<double, 3> kModeWeight = {0.8, 0.424, 0.424};
    const std::size_t total_frames = 2 * total;
    std::vector<std::array<double, 3>> drift_coef(total_frames);
    {
        RngStream walk(spec.seed, 0, 3);
        std::array<double, 3> c{};
        for (std::size_t e = 0; e < total_frames; ++e) {
            // idle frame g sits at t = 3g, its active partner at t = 3g + 1
            double dt = e % 2 ? 1.0 : 2.0;
            double rho = e == 0 ? 0.0 : std::exp(-dt / kDriftCorrelationTime);
            double fresh = std::sqrt(1.0 - rho * rho);
            for (int m = 0; m < 3; ++m)
                c[m] = rho * c[m] + fresh * kModeWeight[m] * drift * walk.next_gaussian();
            drift_coef[e] = c;
        }
    }
    const double sqrt3 = std::sqrt(3.0);

    // frame uid feeds the RNG keying (noise) and indexes the drift walk:
    // idle 2g, active 2g+1 -- exactly the acquisition order
    auto render = [&](std::uint64_t uid, const Map2D* signal) {
        Map2D img = bg;
        if (signal)
            for (std::size_t i = 0; i < img.size(); ++i) img.data[i] += signal->data[i];
        const auto& dc = drift_coef[uid];
        RngStream noise_rng(spec.seed, uid, 2);
        for (std::size_t r = 0; r < spec.rows; ++r) {
            double ty = spec.rows > 1
                            ? sqrt3 * (2.0 * static_cast<double>(r) / (spec.rows - 1) - 1.0)
                            : 0.0;
            for (std::size_t col = 0; col < spec.cols; ++col) {
                double tx = spec.cols > 1
                                ? sqrt3 * (2.0 * static_cast<double>(col) / (spec.cols - 1) - 1.0)
                                : 0.0;
                img.at(r, col) +=
                    dc[0] + dc[1] * tx + dc[2] * ty + noise * noise_rng.next_gaussian();
            }
        }
        return img;
    };

    parallel_for(total, spec.workers, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t g = lo; g < hi; ++g) {
            std::size_t s = g / spec.images_per_state;
            ds.idles.images[g] = render(2 * g, nullptr);
            ds.idles.labels[g] = 0;
            ds.idles.timestamps[g] = 3.0 * static_cast<double>(g);
            ds.actives.images[g] = render(2 * g + 1, &base[s]);
            ds.actives.labels[g] = static_cast<int>(spec.states[s].n_ros);
            ds.actives.timestamps[g] = 3.0 * static_cast<double>(g) + 1.0;
        }
    });
    return ds;
}

}  // namespace qdm
