#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdm/map2d.hpp"

namespace qdm {

// ---------------------------------------------------------------------------
// Current-carrying geometry
// ---------------------------------------------------------------------------

enum class WireLayer : std::uint8_t { top_metal = 0, substrate = 1 };

// Straight wire segment; current flows p0 -> p1 (A, signed).
struct WireSegment {
    Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
    Eigen::Vector3d p1 = Eigen::Vector3d::Zero();
    double current = 0.0;
    WireLayer layer = WireLayer::top_metal;
    std::string net;  // segments sharing a net form one circuit
};

struct CurrentLayout {
    std::vector<WireSegment> segments;

    // Checks p0 != p1, finite currents, and Kirchhoff balance: within each
    // net, the signed currents meeting at every shared endpoint sum to zero.
    void validate() const;

    // Concatenation; fields superpose linearly.
    void append(const CurrentLayout& other);
};

// Axis-aligned rectangle in the die plane (metres, lab frame).
struct DieRegion {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double cx() const { return 0.5 * (x0 + x1); }
    double cy() const { return 0.5 * (y0 + y1); }
};

// Die geometry: four cluster regions R1..R4 plus the wire grids of the two
// current-carrying layers.  Top metal sits at z = 0; the substrate layer sits
// sub_depth below it.  All lengths in metres.
struct DiePlan {
    std::array<DieRegion, 4> regions;
    double top_pitch = 34.3e-6;
    double top_width = 21.6e-6;
    double sub_pitch = 200e-6;
    double sub_width = 100e-6;
    double sub_depth = 300e-6;
    double die_thickness = 300e-6;

    void validate() const;  // disjoint regions, pitches > widths > 0

    const DieRegion& region(int index) const;  // 1-based R1..R4

    // Four ~0.55 mm clusters placed in the quadrants of a ~3.7 mm die.
    static DiePlan reference();
};

// JSON round trip for die plans (documented schema; see README).
DiePlan die_plan_from_json(const std::string& text);
std::string die_plan_to_json(const DiePlan& plan);

// Activity state of the chip: how many ring oscillators run, and where.
struct ChipState {
    int region = 2;          // R1..R4
    std::size_t n_ros = 0;   // 0 allowed (idle)
};

enum class Scenario : std::uint8_t { decapped = 0, intact = 1 };

// Height of the sensing plane above top metal.
struct StandoffConfig {
    double height = 10e-6;
    void validate() const;
    static StandoffConfig preset(Scenario s);  // decapped 10 um, intact 800 um
};

// ---------------------------------------------------------------------------
// Field evaluation
// ---------------------------------------------------------------------------

// Sampling grid for a horizontal plane: pixel (r, c) sits at
// (x0 + c*pixel_size, y0 + r*pixel_size), with x0/y0 the first pixel centre.
struct PlaneGrid {
    double x0 = 0, y0 = 0;
    std::size_t rows = 0, cols = 0;
    double pixel_size = 0;

    static PlaneGrid centered(std::size_t rows, std::size_t cols, double pixel_size);
    void validate() const;
};

// Exact field of one finite segment at a point (T).
Eigen::Vector3d segment_field(const WireSegment& seg, const Eigen::Vector3d& p);

// Biot-Savart sum of the whole layout over a plane at height plane_z.
// Refuses planes that pass through (or graze, within pixel_size/10) any
// segment.  Linear in the currents; parallel over pixels.
VectorFieldMap biot_savart_plane(const CurrentLayout& layout, double plane_z,
                                 const PlaneGrid& grid, int workers = 1);

// ---------------------------------------------------------------------------
// Activity models
// ---------------------------------------------------------------------------

// Power-delivery currents for a cluster state.  Each oscillator draws
// per_ro_current, spread over a few adjacent supply/return wire pairs of the
// region's top-metal grid (consecutive pairs starting at a rotating index, so
// load spreads as the count grows).  Every pair is closed into a hairpin
// loop, and a coarse substrate feed pair below the die carries the total.
CurrentLayout ro_current_layout(const DiePlan& plan, const ChipState& state,
                                double per_ro_current = 50e-6);

// The two-layer validation layout: eight top-metal hairpin pairs at 34.3 um
// pitch over two substrate pairs at 200 um pitch, 300 um lower, all carrying
// 10 mA with alternating bias.
CurrentLayout fea_reference_layout();

// Die heating from oscillator activity (K), linear in the count.
double temperature_of_state(std::size_t n_ros, double kelvin_per_ro = 0.0075);

// ---------------------------------------------------------------------------
// Labeled synthetic datasets
// ---------------------------------------------------------------------------

// Static background field: a gentle gradient plus a grid of alternating
// zero-flux bumps standing in for package-scale magnetization.  Identical in
// active and idle frames, so it cancels under idle subtraction.
struct BackgroundSpec {
    double gradient = 1e-5;        // T per metre, applied along x and y
    double bump_amplitude = 5e-8;  // T
    double bump_spacing = 0.9e-3;  // m
    double bump_sigma = 0.25e-3;   // m
};

Map2D background_map(const BackgroundSpec& bg, const PlaneGrid& grid);

struct LabeledImageSet {
    std::vector<Map2D> images;       // vertical field component (T)
    std::vector<int> labels;         // oscillator count per image
    std::vector<double> timestamps;  // acquisition order
    std::string scenario;

    std::size_t size() const { return images.size(); }
    void validate() const;  // uniform dimensions, aligned lengths
};

struct DatasetSpec {
    DiePlan plan = DiePlan::reference();
    std::vector<ChipState> states;
    std::size_t images_per_state = 40;
    Scenario scenario = Scenario::decapped;
    double per_ro_current = 50e-6;
    BackgroundSpec background;
    // Negative = pick the scenario default (20 nT decapped, 2 nT intact
    // per-pixel noise; 10 / 8 nT slow background drift).
    double noise_floor = -1.0;
    double drift_sigma = -1.0;
    std::uint64_t seed = 0;
    int workers = 1;
    std::size_t rows = 200, cols = 204;
    double pixel_size = 18.5e-6;

    double resolved_noise_floor() const;
    double resolved_drift_sigma() const;
};

struct Dataset {
    LabeledImageSet actives;
    LabeledImageSet idles;
};

// Renders one active/idle frame pair per requested image: per-state base
// field at the scenario stand-off, shared static background, slowly
// wandering low-spatial-frequency drift (uniform + tilts, correlated across
// neighbouring frames), per-pixel Gaussian noise.  Idle frames precede their
// active partner in time.  Deterministic under the seed for any worker count.
Dataset make_dataset(const DatasetSpec& spec);

}  // namespace qdm
