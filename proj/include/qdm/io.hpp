#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qdm/classify.hpp"
#include "qdm/fit.hpp"
#include "qdm/forward.hpp"
#include "qdm/map2d.hpp"
#include "qdm/spectral.hpp"

namespace qdm {

// ---------------------------------------------------------------------------
// QDMF container
//
// Fixed little-endian layout, documented in docs/FORMAT.md:
//   magic "QDMF" | version u16 | kind u8 | dtype u8 | ndim u8 | dims ndim*u64
// followed by the payload, one numeric array in row-major order with the
// last axis fastest. Everything that is not the bulk array (grids, labels,
// physical context) lives in a JSON sidecar at <path>.json.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kContainerVersion = 1;

enum class ContainerKind : std::uint8_t {
    cube = 1,
    map2d = 2,
    vecmap = 3,
    params = 4,
    dataset = 5,
    model = 6,
};

enum class ScalarType : std::uint8_t { f32 = 1, f64 = 2 };

struct RawContainer {
    std::uint16_t version = kContainerVersion;
    ContainerKind kind = ContainerKind::map2d;
    ScalarType dtype = ScalarType::f64;
    std::vector<std::uint64_t> dims;
    std::vector<double> f64;  // payload when dtype == f64
    std::vector<float> f32;   // payload when dtype == f32
    std::string meta;         // sidecar JSON text ("" = none present)

    std::uint64_t element_count() const;
    void validate() const;
};

// In-memory binary form (container file bytes only, no sidecar).
std::vector<std::uint8_t> encode_container(const RawContainer& c);
RawContainer decode_container(const std::uint8_t* bytes, std::size_t len);

// File form: <path> gets the binary container, <path>.json the sidecar when
// `meta` is non-empty. Writes are atomic (temp file + rename). Reading picks
// up the sidecar when the file exists.
void write_container(const RawContainer& c, const std::string& path);
RawContainer read_container(const std::string& path);

// Durable replace: bytes land at <path> via a temp file + rename, so readers
// never observe a half-written file.
void write_file_atomic(const std::string& path, const void* data, std::size_t len);

// ---------------------------------------------------------------------------
// Typed round trips (all bit-exact through f64 payloads + JSON sidecars)
// ---------------------------------------------------------------------------

void write_map(const Map2D& m, const std::string& path, const std::string& value_unit = "T");
Map2D read_map(const std::string& path);

void write_vector_map(const VectorFieldMap& m, const std::string& path);
VectorFieldMap read_vector_map(const std::string& path);

void write_cube(const SpectralCube& cube, const std::string& path);
SpectralCube read_cube(const std::string& path);

void write_parameter_maps(const ParameterMaps& pm, const std::string& path);
ParameterMaps read_parameter_maps(const std::string& path);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

// Trained classifier: PCA basis + pairwise SVMs + the preprocessing context
// needed to apply them to fresh frames.
struct ClassifierBundle {
    PCABasis basis;
    SVMModel svm;
    std::uint64_t bin_factor = 1;
    Scenario scenario = Scenario::decapped;
};

void write_model(const ClassifierBundle& m, const std::string& path);
ClassifierBundle read_model(const std::string& path);

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

enum class Colormap : std::uint8_t { diverging = 0, sequential = 1 };

struct RenderRange {
    bool automatic = true;  // diverging: symmetric at the 99th pct of |value|
    double lo = 0.0;        // explicit bounds when automatic == false
    double hi = 0.0;
};

// 8-bit RGB PNG, one image pixel per map pixel; NaN pixels get a neutral
// gray distinct from both colormap endpoints. Scale annotations (range,
// colormap, pixel pitch) go to <path>.txt.
void render_map(const Map2D& m, Colormap cmap, const RenderRange& range,
                const std::string& path);

// Palette sample at t in [0, 1] (public so tests and docs can pin colors).
void colormap_rgb(Colormap cmap, double t, std::uint8_t rgb[3]);

}  // namespace qdm
