#include "qdm/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "qdm/errors.hpp"

namespace qdm {
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Byte-level encoding. Explicit little-endian so files are identical across
// platforms; the bulk payload takes a memcpy fast path on little-endian
// hosts.
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[4] = {0x51, 0x44, 0x4D, 0x46};  // "QDMF"

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
    if (a != 0 && b > UINT64_MAX / a) return false;
    out = a * b;
    return true;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Sequential reader that reports the first missing or unexpected byte.
struct ByteReader {
    const std::uint8_t* p;
    std::size_t len;
    std::size_t off = 0;

    void need(std::size_t n) const {
        if (off + n > len)
            throw FormatError("container truncated", static_cast<long long>(len));
    }
    std::uint8_t u8() {
        need(1);
        return p[off++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[off] | (p[off + 1] << 8));
        off += 2;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
};

template <typename Float, typename Bits>
void put_payload(std::vector<std::uint8_t>& out, const std::vector<Float>& v) {
    static_assert(sizeof(Float) == sizeof(Bits));
    std::size_t start = out.size();
    out.resize(start + v.size() * sizeof(Float));
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + start, v.data(), v.size() * sizeof(Float));
    } else {
        std::uint8_t* dst = out.data() + start;
        for (const Float& x : v) {
            Bits b = std::bit_cast<Bits>(x);
            for (std::size_t i = 0; i < sizeof(Float); ++i)
                *dst++ = static_cast<std::uint8_t>(b >> (8 * i));
        }
    }
}

template <typename Float, typename Bits>
void get_payload(ByteReader& r, std::vector<Float>& v, std::uint64_t count) {
    r.need(count * sizeof(Float));
    v.resize(count);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(v.data(), r.p + r.off, count * sizeof(Float));
    } else {
        for (std::uint64_t i = 0; i < count; ++i) {
            Bits b = 0;
            for (std::size_t k = 0; k < sizeof(Float); ++k)
                b |= static_cast<Bits>(r.p[r.off + i * sizeof(Float) + k]) << (8 * k);
            v[i] = std::bit_cast<Float>(b);
        }
    }
    r.off += count * sizeof(Float);
}

}  // namespace

std::uint64_t RawContainer::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims)
        if (!checked_mul(n, d, n)) throw UsageError("container dimension product overflows");
    return n;
}

void RawContainer::validate() const {
    if (version != kContainerVersion) throw UsageError("container version must be 1");
    std::uint8_t k = static_cast<std::uint8_t>(kind);
    if (k < 1 || k > 6) throw UsageError("container kind out of range");
    if (dtype != ScalarType::f32 && dtype != ScalarType::f64)
        throw UsageError("container dtype out of range");
    if (dims.empty() || dims.size() > 8)
        throw UsageError("container needs between 1 and 8 dims");
    std::uint64_t n = element_count();
    if (dtype == ScalarType::f64) {
        if (f64.size() != n || !f32.empty())
            throw UsageError("container payload does not match dims (expected float64)");
    } else {
        if (f32.size() != n || !f64.empty())
            throw UsageError("container payload does not match dims (expected float32)");
    }
}

std::vector<std::uint8_t> encode_container(const RawContainer& c) {
    c.validate();
    std::size_t elem = c.dtype == ScalarType::f64 ? 8 : 4;
    std::vector<std::uint8_t> out;
    out.reserve(9 + 8 * c.dims.size() + c.element_count() * elem);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, c.version);
    out.push_back(static_cast<std::uint8_t>(c.kind));
    out.push_back(static_cast<std::uint8_t>(c.dtype));
    out.push_back(static_cast<std::uint8_t>(c.dims.size()));
    for (std::uint64_t d : c.dims) put_u64(out, d);
    if (c.dtype == ScalarType::f64)
        put_payload<double, std::uint64_t>(out, c.f64);
    else
        put_payload<float, std::uint32_t>(out, c.f32);
    return out;
}

RawContainer decode_container(const std::uint8_t* bytes, std::size_t len) {
    ByteReader r{bytes, len};
    r.need(4);
    if (std::memcmp(bytes, kMagic, 4) != 0)
        throw FormatError("bad magic, not a QDMF container", 0);
    r.off = 4;

    RawContainer c;
    c.version = r.u16();
    if (c.version != kContainerVersion)
        throw FormatError("unsupported container version " + std::to_string(c.version), 4);

    std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 6)
        throw FormatError("unknown container kind " + std::to_string(kind), 6);
    c.kind = static_cast<ContainerKind>(kind);

    std::uint8_t dtype = r.u8();
    if (dtype != 1 && dtype != 2)
        throw FormatError("unknown scalar type " + std::to_string(dtype), 7);
    c.dtype = static_cast<ScalarType>(dtype);

    std::uint8_t ndim = r.u8();
    if (ndim < 1 || ndim > 8)
        throw FormatError("dimension count " + std::to_string(ndim) + " out of range", 8);

    c.dims.resize(ndim);
    for (std::uint8_t i = 0; i < ndim; ++i) c.dims[i] = r.u64();

    std::uint64_t count = 1, nbytes = 0;
    for (std::uint64_t d : c.dims)
        if (!checked_mul(count, d, count))
            throw FormatError("dimension product overflows", 9);
    if (!checked_mul(count, c.dtype == ScalarType::f64 ? 8 : 4, nbytes))
        throw FormatError("payload size overflows", 9);

    if (c.dtype == ScalarType::f64)
        get_payload<double, std::uint64_t>(r, c.f64, count);
    else
        get_payload<float, std::uint32_t>(r, c.f32, count);

    if (r.off != len)
        throw FormatError("trailing bytes after payload", static_cast<long long>(r.off));
    return c;
}

// ---------------------------------------------------------------------------
// File layer
// ---------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const void* data, std::size_t len) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw UsageError("cannot open " + tmp + " for writing");
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        f.flush();
        if (!f) {
            f.close();
            fs::remove(tmp);
            throw UsageError("write failed for " + tmp);
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw UsageError("cannot move " + tmp + " into place: " + ec.message());
    }
}

void write_container(const RawContainer& c, const std::string& path) {
    auto bytes = encode_container(c);
    write_file_atomic(path, bytes.data(), bytes.size());
    if (!c.meta.empty()) write_file_atomic(path + ".json", c.meta.data(), c.meta.size());
}

RawContainer read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    RawContainer c = decode_container(bytes.data(), bytes.size());

    std::ifstream side(path + ".json", std::ios::binary);
    if (side)
        c.meta.assign(std::istreambuf_iterator<char>(side), std::istreambuf_iterator<char>());
    return c;
}

// ---------------------------------------------------------------------------
// Sidecar JSON. Plain nlohmann::json keeps keys sorted, and its float
// printer emits shortest round-trip digits, so serialization is
// deterministic and lossless for every finite double.
// ---------------------------------------------------------------------------

namespace {

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

json format_block() {
    return json{{"creator", "qdm"}, {"name", "qdmf"}, {"version", 1}};
}

json plan_to_json(const FrequencyPlan& plan) {
    json a = json::array();
    for (const auto& w : plan.windows)
        a.push_back({{"f_start", w.f_start}, {"f_stop", w.f_stop}, {"n_points", w.n_points}});
    return a;
}

FrequencyPlan plan_from_json(const json& a) {
    FrequencyPlan plan;
    for (const auto& w : a)
        plan.windows.push_back({w.at("f_start").get<double>(), w.at("f_stop").get<double>(),
                                w.at("n_points").get<std::size_t>()});
    return plan;
}

json acq_to_json(const CubeMeta& m) {
    return json{
        {"axes_convention", "nv_axis_set_standard"},
        {"constants",
         {{"gamma", m.constants.gamma},
          {"D0", m.constants.D0},
          {"A_hf", m.constants.A_hf},
          {"dD_dT", m.constants.dD_dT}}},
        {"stress", {{"mx", m.stress.mx}, {"my", m.stress.my}, {"mz", m.stress.mz}}},
        {"bias", {m.bias.x(), m.bias.y(), m.bias.z()}},
        {"mode", m.mode == AcqMode::vector_all ? "vector_all" : "single_axis"},
        {"axis", m.axis},
        {"fidelity", m.fidelity == HamiltonianFidelity::exact ? "exact" : "perturbative"},
        {"shape",
         {{"fwhm", m.shape.fwhm}, {"contrast", m.shape.contrast}, {"baseline", m.shape.baseline}}},
        {"noise", {{"sigma", m.noise.sigma}, {"n_averages", m.noise.n_averages}}},
        {"seed", m.seed},
        {"pixel_size", m.pixel_size},
    };
}

CubeMeta acq_from_json(const json& j) {
    if (j.contains("axes_convention") && j.at("axes_convention") != "nv_axis_set_standard")
        throw FormatError("unsupported axes convention '" +
                          j.at("axes_convention").get<std::string>() + "'");
    CubeMeta m;
    const json& c = j.at("constants");
    m.constants.gamma = c.at("gamma").get<double>();
    m.constants.D0 = c.at("D0").get<double>();
    m.constants.A_hf = c.at("A_hf").get<double>();
    m.constants.dD_dT = c.at("dD_dT").get<double>();
    const json& s = j.at("stress");
    m.stress = {s.at("mx").get<double>(), s.at("my").get<double>(), s.at("mz").get<double>()};
    const json& b = j.at("bias");
    m.bias = Vector3d(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>());
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "vector_all")
        m.mode = AcqMode::vector_all;
    else if (mode == "single_axis")
        m.mode = AcqMode::single_axis;
    else
        throw FormatError("unknown acquisition mode '" + mode + "'");
    m.axis = j.at("axis").get<int>();
    std::string fid = j.at("fidelity").get<std::string>();
    if (fid == "perturbative")
        m.fidelity = HamiltonianFidelity::perturbative;
    else if (fid == "exact")
        m.fidelity = HamiltonianFidelity::exact;
    else
        throw FormatError("unknown hamiltonian fidelity '" + fid + "'");
    const json& sh = j.at("shape");
    m.shape = {sh.at("fwhm").get<double>(), sh.at("contrast").get<double>(),
               sh.at("baseline").get<double>()};
    const json& n = j.at("noise");
    m.noise = {n.at("sigma").get<double>(), n.at("n_averages").get<int>()};
    m.seed = j.at("seed").get<std::uint64_t>();
    m.pixel_size = j.at("pixel_size").get<double>();
    return m;
}

std::string scenario_name(Scenario s) {
    return s == Scenario::decapped ? "decapped" : "intact";
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "decapped") return Scenario::decapped;
    if (name == "intact") return Scenario::intact;
    throw FormatError("unknown scenario '" + name + "'");
}

void expect_kind(const RawContainer& raw, ContainerKind kind, const char* what) {
    if (raw.kind != kind)
        throw FormatError(std::string("container does not hold a ") + what, 6);
    if (raw.dtype != ScalarType::f64)
        throw FormatError(std::string(what) + " containers require a float64 payload", 7);
}

// Every typed reader needs the sidecar; json errors surface as FormatError.
template <typename F>
auto with_sidecar(const RawContainer& raw, const std::string& path, F&& f) {
    if (raw.meta.empty())
        throw FormatError("sidecar " + path + ".json is required but missing");
    try {
        return f(json::parse(raw.meta));
    } catch (const json::exception& e) {
        throw FormatError(path + ".json: " + e.what());
    }
}

void append_map(std::vector<double>& payload, const Map2D& m, std::size_t rows,
                std::size_t cols) {
    if (m.rows != rows || m.cols != cols)
        throw UsageError("maps in one container must share a common shape");
    payload.insert(payload.end(), m.data.begin(), m.data.end());
}

Map2D take_map(const std::vector<double>& payload, std::size_t& cursor, std::size_t rows,
               std::size_t cols, double pixel_size) {
    Map2D m(rows, cols, pixel_size);
    std::copy(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
              payload.begin() + static_cast<std::ptrdiff_t>(cursor + rows * cols),
              m.data.begin());
    cursor += rows * cols;
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Typed containers
// ---------------------------------------------------------------------------

void write_map(const Map2D& m, const std::string& path, const std::string& value_unit) {
    RawContainer c;
    c.kind = ContainerKind::map2d;
    c.dims = {m.rows, m.cols};
    c.f64 = m.data;
    c.meta = dump_json({
        {"format", format_block()},
        {"kind", "map2d"},
        {"pixel_size", m.pixel_size},
        {"units", {{"pixel_size", "m"}, {"value", value_unit}}},
    });
    write_container(c, path);
}

Map2D read_map(const std::string& path) {
    RawContainer raw = read_container(path);
    expect_kind(raw, ContainerKind::map2d, "2d map");
    if (raw.dims.size() != 2) throw FormatError("2d map requires exactly 2 dims", 8);
    return with_sidecar(raw, path, [&](const json& j) {
        Map2D m(raw.dims[0], raw.dims[1], j.at("pixel_size").get<double>());
        m.data = std::move(raw.f64);
        return m;
    });
}

void write_vector_map(const VectorFieldMap& m, const std::string& path) {
    if (!m.bx.same_shape(m.by) || !m.bx.same_shape(m.bz))
        throw UsageError("vector map components must share a common shape");
    RawContainer c;
    c.kind = ContainerKind::vecmap;
    c.dims = {3, m.rows(), m.cols()};
    c.f64.reserve(3 * m.bx.size());
    append_map(c.f64, m.bx, m.rows(), m.cols());
    append_map(c.f64, m.by, m.rows(), m.cols());
    append_map(c.f64, m.bz, m.rows(), m.cols());
    c.meta = dump_json({
        {"format", format_block()},
        {"kind", "vecmap"},
        {"planes", {"bx", "by", "bz"}},
        {"pixel_size", m.pixel_size()},
        {"units", {{"pixel_size", "m"}, {"value", "T"}}},
    });
    write_container(c, path);
}

VectorFieldMap read_vector_map(const std::string& path) {
    RawContainer raw = read_container(path);
    expect_kind(raw, ContainerKind::vecmap, "vector map");
    if (raw.dims.size() != 3 || raw.dims[0] != 3)
        throw FormatError("vector map requires dims {3, rows, cols}", 8);
    return with_sidecar(raw, path, [&](const json& j) {
        double px = j.at("pixel_size").get<double>();
        std::size_t rows = raw.dims[1], cols = raw.dims[2], cursor = 0;
        VectorFieldMap m;
        m.bx = take_map(raw.f64, cursor, rows, cols, px);
        m.by = take_map(raw.f64, cursor, rows, cols, px);
        m.bz = take_map(raw.f64, cursor, rows, cols, px);
        return m;
    });
}

void write_cube(const SpectralCube& cube, const std::string& path) {
    if (cube.data.size() != cube.rows * cube.cols * cube.n_freq())
        throw UsageError("cube payload does not match rows*cols*n_freq");
    RawContainer c;
    c.kind = ContainerKind::cube;
    c.dims = {cube.rows, cube.cols, cube.n_freq()};
    c.f64 = cube.data;
    c.meta = dump_json({
        {"format", format_block()},
        {"kind", "cube"},
        {"windows", plan_to_json(cube.plan)},
        {"acquisition", acq_to_json(cube.meta)},
        {"out_of_grid_lines", cube.out_of_grid_lines},
        {"units",
         {{"bias", "T"},
          {"frequency", "MHz"},
          {"pixel_size", "m"},
          {"value", "normalized_pl"}}},
    });
    write_container(c, path);
}

SpectralCube read_cube(const std::string& path) {
    RawContainer raw = read_container(path);
    expect_kind(raw, ContainerKind::cube, "spectral cube");
    if (raw.dims.size() != 3) throw FormatError("spectral cube requires 3 dims", 8);
    return with_sidecar(raw, path, [&](const json& j) {
        SpectralCube cube;
        cube.rows = raw.dims[0];
        cube.cols = raw.dims[1];
        cube.plan = plan_from_json(j.at("windows"));
        if (cube.plan.total_points() != raw.dims[2])
            throw FormatError("sweep plan disagrees with the payload frequency axis");
        cube.meta = acq_from_json(j.at("acquisition"));
        cube.out_of_grid_lines = j.at("out_of_grid_lines").get<std::uint64_t>();
        cube.data = std::move(raw.f64);
        return cube;
    });
}

void write_parameter_maps(const ParameterMaps& pm, const std::string& path) {
    std::vector<std::size_t> groups;
    std::size_t planes = 0;
    for (const auto& w : pm.windows) {
        if (w.center.size() != w.fwhm.size() || w.center.size() != w.contrast.size())
            throw UsageError("per-window line maps must agree in group count");
        groups.push_back(w.center.size());
        planes += 4 + 3 * w.center.size();
    }
    RawContainer c;
    c.kind = ContainerKind::params;
    c.dims = {planes, pm.rows, pm.cols};
    c.f64.reserve(planes * pm.rows * pm.cols);
    for (const auto& w : pm.windows) {
        append_map(c.f64, w.baseline, pm.rows, pm.cols);
        append_map(c.f64, w.residual, pm.rows, pm.cols);
        append_map(c.f64, w.iterations, pm.rows, pm.cols);
        append_map(c.f64, w.converged, pm.rows, pm.cols);
        for (const auto& g : w.center) append_map(c.f64, g, pm.rows, pm.cols);
        for (const auto& g : w.fwhm) append_map(c.f64, g, pm.rows, pm.cols);
        for (const auto& g : w.contrast) append_map(c.f64, g, pm.rows, pm.cols);
    }
    c.meta = dump_json({
        {"format", format_block()},
        {"kind", "params"},
        {"windows", plan_to_json(pm.plan)},
        {"groups", groups},
        {"acquisition", acq_to_json(pm.meta)},
        {"units",
         {{"baseline", "normalized_pl"},
          {"center", "MHz"},
          {"contrast", "fraction"},
          {"fwhm", "MHz"},
          {"pixel_size", "m"},
          {"residual", "normalized_pl"}}},
    });
    write_container(c, path);
}

ParameterMaps read_parameter_maps(const std::string& path) {
    RawContainer raw = read_container(path);
    expect_kind(raw, ContainerKind::params, "fit parameter stack");
    if (raw.dims.size() != 3) throw FormatError("fit parameter stack requires 3 dims", 8);
    return with_sidecar(raw, path, [&](const json& j) {
        ParameterMaps pm;
        pm.rows = raw.dims[1];
        pm.cols = raw.dims[2];
        pm.plan = plan_from_json(j.at("windows"));
        pm.meta = acq_from_json(j.at("acquisition"));
        std::vector<std::size_t> groups = j.at("groups").get<std::vector<std::size_t>>();
        std::size_t planes = 0;
        for (std::size_t g : groups) planes += 4 + 3 * g;
        if (planes != raw.dims[0])
            throw FormatError("group counts disagree with the payload plane count");
        double px = pm.meta.pixel_size;
        std::size_t cursor = 0;
        for (std::size_t g : groups) {
            WindowMaps w;
            w.baseline = take_map(raw.f64, cursor, pm.rows, pm.cols, px);
            w.residual = take_map(raw.f64, cursor, pm.rows, pm.cols, px);
            w.iterations = take_map(raw.f64, cursor, pm.rows, pm.cols, px);
            w.converged = take_map(raw.f64, cursor, pm.rows, pm.cols, px);
            w.center.reserve(g);
            w.fwhm.reserve(g);
            w.contrast.reserve(g);
            for (std::size_t i = 0; i < g; ++i)
                w.center.push_back(take_map(raw.f64, cursor, pm.rows, pm.cols, px));
            for (std::size_t i = 0; i < g; ++i)
                w.fwhm.push_back(take_map(raw.f64, cursor, pm.rows, pm.cols, px));
            for (std::size_t i = 0; i < g; ++i)
                w.contrast.push_back(take_map(raw.f64, cursor, pm.rows, pm.cols, px));
            pm.windows.push_back(std::move(w));
        }
        return pm;
    });
}

void write_dataset(const Dataset& ds, const std::string& path) {
    ds.actives.validate();
    ds.idles.validate();
    std::size_t total = ds.actives.size() + ds.idles.size();
    if (total == 0) throw UsageError("refusing to write an empty dataset");
    const Map2D& first = ds.actives.size() ? ds.actives.images[0] : ds.idles.images[0];

    RawContainer c;
    c.kind = ContainerKind::dataset;
    c.dims = {total, first.rows, first.cols};
    c.f64.reserve(total * first.size());
    for (const auto& m : ds.actives.images) append_map(c.f64, m, first.rows, first.cols);
    for (const auto& m : ds.idles.images) append_map(c.f64, m, first.rows, first.cols);
    c.meta = dump_json({
        {"format", format_block()},
        {"kind", "dataset"},
        {"n_active", ds.actives.size()},
        {"n_idle", ds.idles.size()},
        {"labels_active", ds.actives.labels},
        {"labels_idle", ds.idles.labels},
        {"timestamps_active", ds.actives.timestamps},
        {"timestamps_idle", ds.idles.timestamps},
        {"scenario_active", ds.actives.scenario},
        {"scenario_idle", ds.idles.scenario},
        {"pixel_size", first.pixel_size},
        {"units", {{"pixel_size", "m"}, {"timestamp", "frame"}, {"value", "T"}}},
    });
    write_container(c, path);
}

Dataset read_dataset(const std::string& path) {
    RawContainer raw = read_container(path);
    expect_kind(raw, ContainerKind::dataset, "dataset");
    if (raw.dims.size() != 3) throw FormatError("dataset requires 3 dims", 8);
    return with_sidecar(raw, path, [&](const json& j) {
        std::size_t rows = raw.dims[1], cols = raw.dims[2];
        double px = j.at("pixel_size").get<double>();
        std::size_t na = j.at("n_active").get<std::size_t>();
        std::size_t ni = j.at("n_idle").get<std::size_t>();
        if (na + ni != raw.dims[0])
            throw FormatError("image counts disagree with the payload frame count");

        Dataset ds;
        ds.actives.labels = j.at("labels_active").get<std::vector<int>>();
        ds.idles.labels = j.at("labels_idle").get<std::vector<int>>();
        ds.actives.timestamps = j.at("timestamps_active").get<std::vector<double>>();
        ds.idles.timestamps = j.at("timestamps_idle").get<std::vector<double>>();
        ds.actives.scenario = j.at("scenario_active").get<std::string>();
        ds.idles.scenario = j.at("scenario_idle").get<std::string>();

        std::size_t cursor = 0;
        ds.actives.images.reserve(na);
        for (std::size_t i = 0; i < na; ++i)
            ds.actives.images.push_back(take_map(raw.f64, cursor, rows, cols, px));
        ds.idles.images.reserve(ni);
        for (std::size_t i = 0; i < ni; ++i)
            ds.idles.images.push_back(take_map(raw.f64, cursor, rows, cols, px));
        ds.actives.validate();
        ds.idles.validate();
        return ds;
    });
}

void write_model(const ClassifierBundle& m, const std::string& path) {
    const Map2D& mean = m.basis.mean;
    if (mean.size() == 0) throw UsageError("model has an empty basis");
    for (const auto& comp : m.basis.components)
        if (!comp.same_shape(mean)) throw UsageError("basis components must match the mean shape");
    json machines = json::array();
    for (const auto& mach : m.svm.machines) {
        if (mach.w.size() != m.svm.dim)
            throw UsageError("machine weight length disagrees with the score dimension");
        machines.push_back({{"lo", mach.class_lo}, {"hi", mach.class_hi}});
    }

    RawContainer c;
    c.kind = ContainerKind::model;
    std::size_t mn = mean.size();
    std::size_t total =
        mn * (1 + m.basis.k()) + m.basis.k() + m.svm.machines.size() * (m.svm.dim + 1);
    c.dims = {total};
    c.f64.reserve(total);
    c.f64.insert(c.f64.end(), mean.data.begin(), mean.data.end());
    for (const auto& comp : m.basis.components)
        c.f64.insert(c.f64.end(), comp.data.begin(), comp.data.end());
    c.f64.insert(c.f64.end(), m.basis.explained.begin(), m.basis.explained.end());
    for (const auto& mach : m.svm.machines) {
        c.f64.insert(c.f64.end(), mach.w.begin(), mach.w.end());
        c.f64.push_back(mach.b);
    }
    c.meta = dump_json({
        {"format", format_block()},
        {"kind", "model"},
        {"rows", mean.rows},
        {"cols", mean.cols},
        {"pixel_size", mean.pixel_size},
        {"k", m.basis.k()},
        {"dim", m.svm.dim},
        {"C", m.svm.C},
        {"classes", m.svm.classes},
        {"machines", machines},
        {"bin_factor", m.bin_factor},
        {"scenario", scenario_name(m.scenario)},
        {"units", {{"mean", "T"}, {"pixel_size", "m"}}},
    });
    write_container(c, path);
}

ClassifierBundle read_model(const std::string& path) {
    RawContainer raw = read_container(path);
    expect_kind(raw, ContainerKind::model, "classifier bundle");
    if (raw.dims.size() != 1) throw FormatError("classifier bundle requires 1 dim", 8);
    return with_sidecar(raw, path, [&](const json& j) {
        std::size_t rows = j.at("rows").get<std::size_t>();
        std::size_t cols = j.at("cols").get<std::size_t>();
        double px = j.at("pixel_size").get<double>();
        std::size_t k = j.at("k").get<std::size_t>();
        std::size_t dim = j.at("dim").get<std::size_t>();
        const json& machines = j.at("machines");

        std::size_t mn = rows * cols;
        std::size_t total = mn * (1 + k) + k + machines.size() * (dim + 1);
        if (total != raw.dims[0])
            throw FormatError("model sizes disagree with the payload length");

        ClassifierBundle m;
        std::size_t cursor = 0;
        m.basis.mean = take_map(raw.f64, cursor, rows, cols, px);
        m.basis.components.reserve(k);
        for (std::size_t i = 0; i < k; ++i)
            m.basis.components.push_back(take_map(raw.f64, cursor, rows, cols, px));
        m.basis.explained.assign(raw.f64.begin() + static_cast<std::ptrdiff_t>(cursor),
                                 raw.f64.begin() + static_cast<std::ptrdiff_t>(cursor + k));
        cursor += k;

        m.svm.classes = j.at("classes").get<std::vector<int>>();
        m.svm.C = j.at("C").get<double>();
        m.svm.dim = dim;
        for (const auto& mj : machines) {
            PairwiseSVM mach;
            mach.class_lo = mj.at("lo").get<int>();
            mach.class_hi = mj.at("hi").get<int>();
            mach.w.assign(raw.f64.begin() + static_cast<std::ptrdiff_t>(cursor),
                          raw.f64.begin() + static_cast<std::ptrdiff_t>(cursor + dim));
            cursor += dim;
            mach.b = raw.f64[cursor++];
            m.svm.machines.push_back(std::move(mach));
        }
        m.bin_factor = j.at("bin_factor").get<std::uint64_t>();
        m.scenario = scenario_from_name(j.at("scenario").get<std::string>());
        return m;
    });
}

}  // namespace qdm
