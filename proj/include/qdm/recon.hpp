#pragma once

#include <array>
#include <string>
#include <vector>

#include "qdm/fit.hpp"
#include "qdm/map2d.hpp"
#include "qdm/nv.hpp"

namespace qdm {

// Field and temperature shifts resolved along one NV axis.
struct AxisFieldMap {
    int axis = 0;  // 1-based axis index
    Map2D dbz;     // T, projection onto the axis
    Map2D dT;      // K
};

struct TemperatureMap {
    Map2D dT;  // K
};

// Difference two fitted parameter maps (active minus idle) into per-axis
// field and temperature shifts. The single-axis form returns the one axis
// the acquisition tracked; all_axis_fields handles both modes and returns
// one entry per resolved axis (four in vector mode). A pixel is valid only
// where every window converged in both inputs.
//
// In vector mode the four axial projections determine the lab-frame field
// shift, which lets the quadratic transverse clock shift (common to both
// lines of a pair) be removed from the temperature channel. Single-axis
// maps cannot resolve it, so their dT retains that term whenever the field
// shift has a component transverse to the tracked axis.
AxisFieldMap freqs_to_axis_field(const ParameterMaps& active, const ParameterMaps& idle,
                                 const PhysicalConstants& c);
std::vector<AxisFieldMap> all_axis_fields(const ParameterMaps& active, const ParameterMaps& idle,
                                          const PhysicalConstants& c);

// Invert four axis projections into the lab-frame vector field. The inputs
// may arrive in any order but must cover axes 1..4 exactly once.
VectorFieldMap combine_axes(const std::vector<AxisFieldMap>& axes);

// Pixelwise mean of the per-axis temperature estimates.
TemperatureMap mean_axis_temperature(const std::vector<AxisFieldMap>& axes);

// Block-mean downsampling. Trailing rows/cols that do not fill a block are
// dropped (reported through *warning when provided). NaN-aware: a block's
// mean is taken over its valid members only.
Map2D bin_map(const Map2D& m, std::size_t factor, std::string* warning = nullptr);

// Separable Gaussian blur, kernel renormalized over valid pixels so edges
// and NaN holes do not darken. sigma_px = 0 is the identity.
Map2D gaussian_lowpass(const Map2D& m, double sigma_px);

// Propagate a planar Bz map upward by delta_z: multiply the 2-D spectrum by
// exp(-2*pi*|k|*delta_z). The map is mean-subtracted, edge-tapered and
// zero-padded to twice its size before the transform, then cropped back.
// NaN pixels are filled by local means first (warning set) unless strict,
// in which case they are rejected.
Map2D upward_continue(const Map2D& m, double delta_z, bool strict = false,
                      std::string* warning = nullptr);

// Noise-floor estimators. The repeated form wants >= 2 nominally identical
// maps and reports the median over pixels of the per-pixel st. dev. across
// repeats; the region form reports the st. dev. inside a signal-free
// rectangle (half-open bounds). Both place the headline figure in .floor.
MapStats noise_floor(const std::vector<Map2D>& repeats);
MapStats noise_floor(const Map2D& m, std::size_t row0, std::size_t row1, std::size_t col0,
                     std::size_t col1);

}  // namespace qdm
