// qdm: command-line front end for the QDM side-channel pipeline.
//
// One subcommand per pipeline stage so stages can be exercised (and their
// artifacts golden-filed) in isolation:
//
//   simulate    current layout -> vector field map at a sensing plane
//   synth       field map -> ODMR spectral cube
//   fit         cube -> per-pixel Lorentzian parameter maps
//   reconstruct active/idle parameter maps -> field + temperature shifts
//   filter      map-space operations (bin, low-pass, upward continuation)
//   dataset     labeled synthetic active/idle image sets
//   train       dataset -> PCA basis + pairwise linear SVMs
//   predict     model + dataset -> per-frame state predictions
//   evaluate    model + dataset -> accuracy table + confusion matrix
//   render      map -> PNG with scale annotations
//
// Exit codes: 0 ok, 2 usage, 3 format, 4 numeric failure. Outputs are
// written atomically, and every output records the fully resolved run
// configuration in its sidecar, so identical invocations give identical
// bytes and any artifact can be regenerated from its inputs.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "defaults_json.h"
#include "qdm/classify.hpp"
#include "qdm/errors.hpp"
#include "qdm/fit.hpp"
#include "qdm/forward.hpp"
#include "qdm/io.hpp"
#include "qdm/nv.hpp"
#include "qdm/recon.hpp"
#include "qdm/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qdm;

namespace {

// ---------------------------------------------------------------------------
// Configuration: embedded defaults, optional --config override, then flags.
// ---------------------------------------------------------------------------

void merge_config(json& base, const json& over, const std::string& prefix) {
    for (const auto& [key, value] : over.items()) {
        std::string where = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw UsageError("unknown config key '" + where + "'");
        if (base[key].is_object() && value.is_object()) {
            merge_config(base[key], value, where);
        } else if (base[key].is_object() || value.is_object()) {
            throw UsageError("config key '" + where + "' has the wrong shape");
        } else {
            base[key] = value;
        }
    }
}

json load_config(const std::string& config_path) {
    json cfg = json::parse(kDefaultsJson);
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw UsageError("cannot open config file " + config_path);
        json over;
        try {
            over = json::parse(f);
        } catch (const json::exception& e) {
            throw FormatError(config_path + ": " + e.what());
        }
        merge_config(cfg, over, "");
    }
    return cfg;
}

PhysicalConstants constants_from(const json& cfg) {
    const json& c = cfg.at("constants");
    PhysicalConstants pc;
    pc.gamma = c.at("gamma").get<double>();
    pc.D0 = c.at("D0").get<double>();
    pc.A_hf = c.at("A_hf").get<double>();
    pc.dD_dT = c.at("dD_dT").get<double>();
    pc.validate();
    return pc;
}

Scenario parse_scenario(const std::string& s) {
    if (s == "decapped") return Scenario::decapped;
    if (s == "intact") return Scenario::intact;
    throw UsageError("scenario must be 'decapped' or 'intact'");
}

const char* scenario_key(Scenario s) { return s == Scenario::decapped ? "decapped" : "intact"; }

int resolve_workers(int flag) {
    if (flag > 0) return flag;
    unsigned n = std::thread::hardware_concurrency();
    return n ? static_cast<int>(n) : 1;
}

// Output path resolution: explicit path > QDM_OUT_DIR > cwd; a trailing
// slash or an existing directory selects the stage's default file name.
std::string resolve_out(const std::string& given, const std::string& default_name) {
    fs::path path;
    if (given.empty()) {
        const char* env = std::getenv("QDM_OUT_DIR");
        path = fs::path(env && *env ? env : ".") / default_name;
    } else if (given.back() == '/' || fs::is_directory(given)) {
        path = fs::path(given) / default_name;
    } else {
        path = given;
    }
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    return path.string();
}

// Fold the resolved run configuration into an output's sidecar.
void record_run(const std::string& path, const json& run) {
    json j = json::object();
    {
        std::ifstream f(path + ".json");
        if (f) j = json::parse(f);
    }
    j["run"] = run;
    std::string text = j.dump(2) + "\n";
    write_file_atomic(path + ".json", text.data(), text.size());
}

void write_json_file(const std::string& path, const json& j) {
    std::string text = j.dump(2) + "\n";
    write_file_atomic(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// Report formatting (accuracy table + row-normalized confusion matrix)
// ---------------------------------------------------------------------------

std::string cell(double v) {
    char buf[32];
    if (std::isnan(v))
        std::snprintf(buf, sizeof(buf), "%7s", "--");
    else
        std::snprintf(buf, sizeof(buf), "%7.2f", v);
    return buf;
}

std::string report_text(const Evaluation& ev) {
    char buf[32];
    std::string t = "chip-state prediction accuracy\nstate   ";
    for (int c : ev.classes) {
        std::snprintf(buf, sizeof(buf), "%7d", c);
        t += buf;
    }
    t += "    total\naccuracy";
    for (double a : ev.per_class) t += cell(a);
    std::snprintf(buf, sizeof(buf), "  %7.2f", ev.total);
    t += buf;
    t += "\n\nconfusion (rows: true state, row-normalized)\nstate   ";
    for (int c : ev.classes) {
        std::snprintf(buf, sizeof(buf), "%7d", c);
        t += buf;
    }
    t += "\n";
    for (std::size_t r = 0; r < ev.classes.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%8d", ev.classes[r]);
        t += buf;
        for (double v : ev.confusion[r]) t += cell(v);
        t += "\n";
    }
    t += "n_test: " + std::to_string(ev.n_samples) + "\n";
    return t;
}

json report_json(const Evaluation& ev) {
    return json{{"classes", ev.classes},
                {"per_class", ev.per_class},
                {"total", ev.total},
                {"confusion", ev.confusion},
                {"n_samples", ev.n_samples}};
}

// ---------------------------------------------------------------------------
// Subcommand options
// ---------------------------------------------------------------------------

struct SimulateOpts {
    std::string scenario = "decapped", layout = "ro", out;
    int state = 1, region = 2, rows = -1, cols = -1, workers = 0;
    double current = -1, height = -1, pixel_size = -1;
};

struct SynthOpts {
    std::string in, dt_map, mode = "vector", fidelity = "perturbative", out;
    std::vector<double> bias;
    int axis = 0, averages = 1, workers = 0;
    double dt = 0, fwhm = -1, contrast = -1, baseline = -1, noise = 0;
    std::uint64_t seed = 0;
};

struct FitOpts {
    std::string in, out;
    int max_iter = 200, workers = 0;
};

struct ReconstructOpts {
    std::string active, idle, out, temperature_out;
};

struct FilterOpts {
    std::string in, out;
    std::size_t bin = 1;
    double lowpass = 0, continue_by = 0;
    bool strict = false;
};

struct DatasetOpts {
    std::string scenario = "decapped", out;
    std::vector<int> states;
    int per_state = -1, region = 2, rows = -1, cols = -1, workers = 0;
    double current = -1, noise_floor = -1, drift = -1, pixel_size = -1;
    std::uint64_t seed = 0;
};

struct TrainOpts {
    std::string in, out;
    int components = -1, workers = 0;
    double c = -1, train_fraction = -1;
    long long bin = -1;
    std::uint64_t seed = 0;
};

struct PredictOpts {
    std::string in, model, out;
    int workers = 0;
};

struct EvaluateOpts {
    std::string in, model, out;
    double train_fraction = -1;
    std::uint64_t seed = 0;
    int workers = 0;
};

struct RenderOpts {
    std::string in, out, cmap = "diverging", component = "z";
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------------------
// Handlers
// ---------------------------------------------------------------------------

void run_simulate(const SimulateOpts& o, const json& cfg, bool verbose) {
    Scenario scen = parse_scenario(o.scenario);
    double current =
        o.current > 0 ? o.current : cfg.at("per_ro_current").get<double>();
    std::size_t rows = o.rows > 0 ? o.rows : cfg.at("grid").at("rows").get<std::size_t>();
    std::size_t cols = o.cols > 0 ? o.cols : cfg.at("grid").at("cols").get<std::size_t>();
    double px = o.pixel_size > 0 ? o.pixel_size : cfg.at("grid").at("pixel_size").get<double>();

    CurrentLayout layout;
    double height;
    if (o.layout == "ro") {
        layout = ro_current_layout(DiePlan::reference(),
                                   {o.region, static_cast<std::size_t>(o.state)}, current);
        height = o.height > 0 ? o.height : cfg.at("standoff").at(scenario_key(scen)).get<double>();
    } else if (o.layout == "fea") {
        layout = fea_reference_layout();
        height = o.height > 0 ? o.height : 25e-6;
    } else {
        throw UsageError("layout must be 'ro' or 'fea'");
    }

    PlaneGrid grid = PlaneGrid::centered(rows, cols, px);
    VectorFieldMap field = biot_savart_plane(layout, height, grid, resolve_workers(o.workers));

    std::string out = resolve_out(o.out, "field.qdmf");
    write_vector_map(field, out);
    record_run(out, {{"subcommand", "simulate"},
                     {"scenario", o.scenario},
                     {"layout", o.layout},
                     {"state", o.state},
                     {"region", o.region},
                     {"current", current},
                     {"height", height},
                     {"rows", rows},
                     {"cols", cols},
                     {"pixel_size", px}});
    if (verbose) std::fprintf(stderr, "qdm: simulated %zux%zu plane at %g m\n", rows, cols, height);
    std::printf("wrote %s\n", out.c_str());
}

void run_synth(const SynthOpts& o, const json& cfg, bool verbose) {
    VectorFieldMap db = read_vector_map(o.in);

    SynthesisSpec spec;
    spec.constants = constants_from(cfg);
    std::vector<double> bias =
        o.bias.empty() ? cfg.at("bias").get<std::vector<double>>() : o.bias;
    if (bias.size() != 3) throw UsageError("--bias needs exactly 3 components");
    spec.bias = Vector3d(bias[0], bias[1], bias[2]);
    if (o.mode == "vector")
        spec.mode = AcqMode::vector_all;
    else if (o.mode == "single")
        spec.mode = AcqMode::single_axis;
    else
        throw UsageError("mode must be 'vector' or 'single'");
    spec.axis = o.axis;
    if (o.fidelity == "perturbative")
        spec.fidelity = HamiltonianFidelity::perturbative;
    else if (o.fidelity == "exact")
        spec.fidelity = HamiltonianFidelity::exact;
    else
        throw UsageError("fidelity must be 'perturbative' or 'exact'");
    const json& ls = cfg.at("lineshape");
    spec.shape.fwhm = o.fwhm > 0 ? o.fwhm : ls.at("fwhm").get<double>();
    spec.shape.contrast = o.contrast > 0 ? o.contrast : ls.at("contrast").get<double>();
    spec.shape.baseline = o.baseline > 0 ? o.baseline : ls.at("baseline").get<double>();
    const json& sw = cfg.at("sweep");
    spec.plan.vector_f_start = sw.at("f_start").get<double>();
    spec.plan.vector_f_stop = sw.at("f_stop").get<double>();
    spec.plan.vector_points = sw.at("points").get<std::size_t>();
    spec.plan.window_points = sw.at("window_points").get<std::size_t>();
    spec.plan.window_half_span = sw.at("window_half_span").get<double>();
    spec.noise = {o.noise, o.averages};
    spec.seed = o.seed;
    spec.workers = resolve_workers(o.workers);

    Map2D dT = o.dt_map.empty()
                   ? uniform_map(db.rows(), db.cols(), db.pixel_size(), o.dt)
                   : read_map(o.dt_map);
    SpectralCube cube = synthesize_cube(spec, db, dT);

    std::string out = resolve_out(o.out, "cube.qdmf");
    write_cube(cube, out);
    record_run(out, {{"subcommand", "synth"},
                     {"in", o.in},
                     {"dt", o.dt},
                     {"dt_map", o.dt_map},
                     {"bias", bias},
                     {"mode", o.mode},
                     {"axis", spec.axis},
                     {"fidelity", o.fidelity},
                     {"fwhm", spec.shape.fwhm},
                     {"contrast", spec.shape.contrast},
                     {"baseline", spec.shape.baseline},
                     {"noise", o.noise},
                     {"averages", o.averages},
                     {"seed", o.seed}});
    if (verbose)
        std::fprintf(stderr, "qdm: synthesized %zu spectral points per pixel\n", cube.n_freq());
    std::printf("wrote %s\n", out.c_str());
}

void run_fit(const FitOpts& o, bool verbose) {
    SpectralCube cube = read_cube(o.in);
    FitConfig cfg;
    cfg.max_iterations = o.max_iter;
    cfg.a_hf = cube.meta.constants.A_hf;
    cfg.shape = cube.meta.shape;
    ParameterMaps pm = fit_cube(cube, cfg, resolve_workers(o.workers));

    std::string out = resolve_out(o.out, "params.qdmf");
    write_parameter_maps(pm, out);
    record_run(out, {{"subcommand", "fit"}, {"in", o.in}, {"max_iter", o.max_iter}});
    double frac = pm.converged_fraction();
    if (verbose) std::fprintf(stderr, "qdm: %.1f%% of pixels converged\n", 100 * frac);
    std::printf("wrote %s (%.1f%% converged)\n", out.c_str(), 100 * frac);
    if (frac < 0.5)
        throw NumericError("fit converged on only " + std::to_string(100 * frac) +
                           "% of pixels (< 50%)");
}

void run_reconstruct(const ReconstructOpts& o, bool verbose) {
    ParameterMaps active = read_parameter_maps(o.active);
    ParameterMaps idle = read_parameter_maps(o.idle);
    std::vector<AxisFieldMap> axes = all_axis_fields(active, idle, active.meta.constants);

    json run = {{"subcommand", "reconstruct"}, {"active", o.active}, {"idle", o.idle}};
    std::string out = resolve_out(o.out, "field.qdmf");
    if (axes.size() == 4) {
        write_vector_map(combine_axes(axes), out);
    } else {
        write_map(axes.at(0).dbz, out, "T");
        run["axis"] = axes.at(0).axis;
    }
    record_run(out, run);
    std::printf("wrote %s\n", out.c_str());

    if (!o.temperature_out.empty()) {
        TemperatureMap t = mean_axis_temperature(axes);
        std::string tout = resolve_out(o.temperature_out, "temperature.qdmf");
        write_map(t.dT, tout, "K");
        record_run(tout, run);
        std::printf("wrote %s\n", tout.c_str());
    }
    if (verbose) std::fprintf(stderr, "qdm: resolved %zu axis projections\n", axes.size());
}

void run_filter(const FilterOpts& o, bool verbose) {
    Map2D m = read_map(o.in);
    std::string warning;
    if (o.bin > 1) m = bin_map(m, o.bin, &warning);
    if (!warning.empty()) std::fprintf(stderr, "qdm: %s\n", warning.c_str());
    if (o.lowpass > 0) m = gaussian_lowpass(m, o.lowpass);
    warning.clear();
    if (o.continue_by != 0) m = upward_continue(m, o.continue_by, o.strict, &warning);
    if (!warning.empty()) std::fprintf(stderr, "qdm: %s\n", warning.c_str());

    std::string out = resolve_out(o.out, "filtered.qdmf");
    write_map(m, out);
    record_run(out, {{"subcommand", "filter"},
                     {"in", o.in},
                     {"bin", o.bin},
                     {"lowpass", o.lowpass},
                     {"continue_by", o.continue_by},
                     {"strict", o.strict}});
    if (verbose) std::fprintf(stderr, "qdm: filtered to %zux%zu\n", m.rows, m.cols);
    std::printf("wrote %s\n", out.c_str());
}

void run_dataset(const DatasetOpts& o, const json& cfg, bool verbose) {
    Scenario scen = parse_scenario(o.scenario);

    DatasetSpec spec;
    spec.scenario = scen;
    std::vector<int> states =
        o.states.empty() ? cfg.at("states").get<std::vector<int>>() : o.states;
    for (int s : states) {
        if (s < 0) throw UsageError("state RO counts must be >= 0");
        spec.states.push_back({o.region, static_cast<std::size_t>(s)});
    }
    spec.images_per_state =
        o.per_state > 0
            ? static_cast<std::size_t>(o.per_state)
            : cfg.at("images_per_state").at(scenario_key(scen)).get<std::size_t>();
    spec.per_ro_current =
        o.current > 0 ? o.current : cfg.at("per_ro_current").get<double>();
    spec.noise_floor = o.noise_floor;  // negative = scenario default
    spec.drift_sigma = o.drift;
    spec.rows = o.rows > 0 ? o.rows : cfg.at("grid").at("rows").get<std::size_t>();
    spec.cols = o.cols > 0 ? o.cols : cfg.at("grid").at("cols").get<std::size_t>();
    spec.pixel_size = o.pixel_size > 0 ? o.pixel_size : cfg.at("grid").at("pixel_size").get<double>();
    spec.seed = o.seed;
    spec.workers = resolve_workers(o.workers);

    Dataset ds = make_dataset(spec);

    std::string out = resolve_out(o.out, "dataset.qdmf");
    write_dataset(ds, out);
    record_run(out, {{"subcommand", "dataset"},
                     {"scenario", o.scenario},
                     {"states", states},
                     {"per_state", spec.images_per_state},
                     {"region", o.region},
                     {"current", spec.per_ro_current},
                     {"noise_floor", spec.resolved_noise_floor()},
                     {"drift_sigma", spec.resolved_drift_sigma()},
                     {"rows", spec.rows},
                     {"cols", spec.cols},
                     {"pixel_size", spec.pixel_size},
                     {"seed", o.seed}});
    if (verbose)
        std::fprintf(stderr, "qdm: noise floor %g T, drift %g T\n",
                     spec.resolved_noise_floor(), spec.resolved_drift_sigma());
    std::printf("wrote %s (%zu active + %zu idle frames)\n", out.c_str(), ds.actives.size(),
                ds.idles.size());
}

void run_train(const TrainOpts& o, const json& cfg, bool verbose) {
    Dataset ds = read_dataset(o.in);
    Scenario scen = parse_scenario(ds.actives.scenario);
    const json& cls = cfg.at("classifier");

    std::size_t bin =
        o.bin > 0 ? static_cast<std::size_t>(o.bin)
                  : cls.at("bin_factor").at(scenario_key(scen)).get<std::size_t>();
    std::size_t k = o.components > 0 ? o.components
                                     : cls.at("pca_components").get<std::size_t>();
    double c = o.c > 0 ? o.c : cls.at("svm_c").get<double>();
    double fraction = o.train_fraction > 0
                          ? o.train_fraction
                          : cls.at("train_fraction").at(scenario_key(scen)).get<double>();

    LabeledImageSet prep = preprocess(ds.actives, ds.idles, bin);
    SplitConfig sc;
    sc.train_fraction = fraction;
    sc.seed = o.seed;
    SplitResult sr = split(prep, sc);

    PCABasis basis = pca_fit(sr.train, k);
    ScoreMatrix scores = score_set(basis, sr.train, resolve_workers(o.workers));
    SVMModel svm = svm_train(scores, c);

    ClassifierBundle bundle;
    bundle.basis = basis;
    bundle.svm = svm;
    bundle.bin_factor = bin;
    bundle.scenario = scen;

    std::string out = resolve_out(o.out, "model.qdmf");
    write_model(bundle, out);
    record_run(out, {{"subcommand", "train"},
                     {"in", o.in},
                     {"components", k},
                     {"C", c},
                     {"bin", bin},
                     {"train_fraction", fraction},
                     {"seed", o.seed}});
    double explained = 0;
    for (double e : basis.explained) explained += e;
    if (verbose)
        std::fprintf(stderr, "qdm: %zu train frames, %zu components explain %.2f%% variance\n",
                     sr.train.size(), k, 100 * explained);
    std::printf("wrote %s (%zu train frames, %.2f%% variance in %zu components)\n", out.c_str(),
                sr.train.size(), 100 * explained, k);
}

void run_predict(const PredictOpts& o, bool verbose) {
    ClassifierBundle bundle = read_model(o.model);
    Dataset ds = read_dataset(o.in);
    LabeledImageSet prep = preprocess(ds.actives, ds.idles, bundle.bin_factor);
    ScoreMatrix scores = score_set(bundle.basis, prep, resolve_workers(o.workers));

    json rows = json::array();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.scores.size(); ++i) {
        int p = svm_predict(bundle.svm, scores.scores[i]);
        correct += p == scores.labels[i];
        rows.push_back({{"index", i},
                        {"timestamp", prep.timestamps[i]},
                        {"label", scores.labels[i]},
                        {"predicted", p}});
    }

    std::string out = resolve_out(o.out, "predictions.json");
    write_json_file(out, {{"run", {{"subcommand", "predict"}, {"in", o.in}, {"model", o.model}}},
                          {"predictions", rows}});
    if (verbose) std::fprintf(stderr, "qdm: scored %zu frames\n", scores.scores.size());
    std::printf("wrote %s (%zu/%zu frames match their labels)\n", out.c_str(), correct,
                scores.scores.size());
}

void run_evaluate(const EvaluateOpts& o, const json& cfg, bool verbose) {
    ClassifierBundle bundle = read_model(o.model);
    Dataset ds = read_dataset(o.in);
    double fraction = o.train_fraction > 0
                          ? o.train_fraction
                          : cfg.at("classifier")
                                .at("train_fraction")
                                .at(scenario_key(bundle.scenario))
                                .get<double>();

    LabeledImageSet prep = preprocess(ds.actives, ds.idles, bundle.bin_factor);
    SplitConfig sc;
    sc.train_fraction = fraction;
    sc.seed = o.seed;
    SplitResult sr = split(prep, sc);
    if (sr.test.size() == 0)
        throw UsageError("held-out test split is empty; lower --train-fraction");
    Evaluation ev = evaluate(bundle.svm, bundle.basis, sr.test);

    std::string text = report_text(ev);
    std::fputs(text.c_str(), stdout);

    std::string out = resolve_out(o.out, "report.json");
    json report = report_json(ev);
    report["run"] = {{"subcommand", "evaluate"},
                     {"in", o.in},
                     {"model", o.model},
                     {"train_fraction", fraction},
                     {"seed", o.seed}};
    write_json_file(out, report);
    if (verbose) std::fprintf(stderr, "qdm: evaluated %zu held-out frames\n", ev.n_samples);
    std::printf("wrote %s\n", out.c_str());
}

void run_render(const RenderOpts& o, bool verbose) {
    RawContainer raw = read_container(o.in);
    Map2D m;
    if (raw.kind == ContainerKind::map2d) {
        m = read_map(o.in);
    } else if (raw.kind == ContainerKind::vecmap) {
        VectorFieldMap v = read_vector_map(o.in);
        if (o.component == "x")
            m = v.bx;
        else if (o.component == "y")
            m = v.by;
        else if (o.component == "z")
            m = v.bz;
        else if (o.component == "mag") {
            m = Map2D(v.rows(), v.cols(), v.pixel_size());
            for (std::size_t i = 0; i < m.data.size(); ++i)
                m.data[i] = std::sqrt(v.bx.data[i] * v.bx.data[i] + v.by.data[i] * v.by.data[i] +
                                      v.bz.data[i] * v.bz.data[i]);
        } else {
            throw UsageError("component must be x, y, z, or mag");
        }
    } else {
        throw UsageError("render expects a 2d map or vector map container");
    }

    Colormap cmap;
    if (o.cmap == "diverging")
        cmap = Colormap::diverging;
    else if (o.cmap == "sequential")
        cmap = Colormap::sequential;
    else
        throw UsageError("colormap must be 'diverging' or 'sequential'");

    RenderRange range;
    if (std::isnan(o.lo) != std::isnan(o.hi))
        throw UsageError("--lo and --hi must be given together");
    if (!std::isnan(o.lo)) {
        range.automatic = false;
        range.lo = o.lo;
        range.hi = o.hi;
    }

    std::string out = resolve_out(o.out, "render.png");
    render_map(m, cmap, range, out);
    json run = {{"subcommand", "render"},
                {"in", o.in},
                {"component", o.component},
                {"colormap", o.cmap},
                {"auto_range", range.automatic}};
    if (!range.automatic) {
        run["lo"] = range.lo;
        run["hi"] = range.hi;
    }
    record_run(out, run);
    if (verbose) std::fprintf(stderr, "qdm: rendered %zux%zu\n", m.rows, m.cols);
    std::printf("wrote %s\n", out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum diamond microscope pipeline: synthetic current-map imaging,\n"
                 "ODMR spectral analysis, and chip-state classification"};
    app.require_subcommand(1);
    std::string config_path;
    bool verbose = false;
    app.add_option("--config", config_path,
                   "JSON file overriding the built-in physical defaults");
    app.add_flag("--verbose", verbose, "Progress details on the error stream");

    SimulateOpts sim;
    auto* c_sim = app.add_subcommand("simulate", "Field map of a current layout");
    c_sim->fallthrough();
    c_sim->add_option("--scenario", sim.scenario, "decapped or intact stand-off preset")
        ->check(CLI::IsMember({"decapped", "intact"}));
    c_sim->add_option("--layout", sim.layout, "ro (oscillator power grid) or fea (reference)")
        ->check(CLI::IsMember({"ro", "fea"}));
    c_sim->add_option("--state", sim.state, "number of active ring oscillators");
    c_sim->add_option("--region", sim.region, "die region 1-4");
    c_sim->add_option("--current", sim.current, "per-oscillator supply current (A)");
    c_sim->add_option("--height", sim.height, "sensing plane height (m), overrides preset");
    c_sim->add_option("--rows", sim.rows, "grid rows");
    c_sim->add_option("--cols", sim.cols, "grid cols");
    c_sim->add_option("--pixel-size", sim.pixel_size, "pixel pitch (m)");
    c_sim->add_option("--workers", sim.workers, "worker threads (0 = all cores)");
    c_sim->add_option("-o,--out", sim.out, "output vector map");

    SynthOpts syn;
    auto* c_syn = app.add_subcommand("synth", "ODMR spectral cube from a field map");
    c_syn->fallthrough();
    c_syn->add_option("--in", syn.in, "input vector field map")->required();
    c_syn->add_option("--dt", syn.dt, "uniform temperature shift (K)");
    c_syn->add_option("--dt-map", syn.dt_map, "per-pixel temperature shift map");
    c_syn->add_option("--bias", syn.bias, "bias field bx,by,bz (T)")->delimiter(',');
    c_syn->add_option("--mode", syn.mode, "vector (all axes) or single (one axis)")
        ->check(CLI::IsMember({"vector", "single"}));
    c_syn->add_option("--axis", syn.axis, "monitored axis for single mode (0 = outermost)");
    c_syn->add_option("--fidelity", syn.fidelity, "resonance model: perturbative or exact")
        ->check(CLI::IsMember({"perturbative", "exact"}));
    c_syn->add_option("--fwhm", syn.fwhm, "line width (MHz)");
    c_syn->add_option("--contrast", syn.contrast, "line contrast");
    c_syn->add_option("--baseline", syn.baseline, "baseline level");
    c_syn->add_option("--noise", syn.noise, "per-sample noise sigma");
    c_syn->add_option("--averages", syn.averages, "shot averages");
    c_syn->add_option("--seed", syn.seed, "noise RNG seed");
    c_syn->add_option("--workers", syn.workers, "worker threads (0 = all cores)");
    c_syn->add_option("-o,--out", syn.out, "output cube");

    FitOpts fit;
    auto* c_fit = app.add_subcommand("fit", "Per-pixel Lorentzian fits of a cube");
    c_fit->fallthrough();
    c_fit->add_option("--in", fit.in, "input spectral cube")->required();
    c_fit->add_option("--max-iter", fit.max_iter, "iteration cap per window");
    c_fit->add_option("--workers", fit.workers, "worker threads (0 = all cores)");
    c_fit->add_option("-o,--out", fit.out, "output parameter maps");

    ReconstructOpts rec;
    auto* c_rec = app.add_subcommand("reconstruct", "Field/temperature shifts from fits");
    c_rec->fallthrough();
    c_rec->add_option("--active", rec.active, "fitted parameters, active state")->required();
    c_rec->add_option("--idle", rec.idle, "fitted parameters, idle state")->required();
    c_rec->add_option("-o,--out", rec.out, "output field map");
    c_rec->add_option("--temperature-out", rec.temperature_out, "also write the mean ΔT map");

    FilterOpts fil;
    auto* c_fil = app.add_subcommand("filter", "Map-space operations (bin, blur, continue)");
    c_fil->fallthrough();
    c_fil->add_option("--in", fil.in, "input 2d map")->required();
    c_fil->add_option("--bin", fil.bin, "block-mean bin factor");
    c_fil->add_option("--lowpass", fil.lowpass, "Gaussian sigma (pixels)");
    c_fil->add_option("--continue-by", fil.continue_by, "upward continuation distance (m)");
    c_fil->add_flag("--strict", fil.strict, "refuse NaN pixels in continuation");
    c_fil->add_option("-o,--out", fil.out, "output map");

    DatasetOpts dat;
    auto* c_dat = app.add_subcommand("dataset", "Labeled synthetic active/idle image sets");
    c_dat->fallthrough();
    c_dat->add_option("--scenario", dat.scenario, "decapped or intact")
        ->check(CLI::IsMember({"decapped", "intact"}));
    c_dat->add_option("--states", dat.states, "RO counts, comma separated")->delimiter(',');
    c_dat->add_option("--per-state", dat.per_state, "images per state");
    c_dat->add_option("--region", dat.region, "die region 1-4");
    c_dat->add_option("--current", dat.current, "per-oscillator supply current (A)");
    c_dat->add_option("--noise-floor", dat.noise_floor, "per-pixel noise (T), default by scenario");
    c_dat->add_option("--drift", dat.drift, "per-frame drift sigma (T), default by scenario");
    c_dat->add_option("--rows", dat.rows, "grid rows");
    c_dat->add_option("--cols", dat.cols, "grid cols");
    c_dat->add_option("--pixel-size", dat.pixel_size, "pixel pitch (m)");
    c_dat->add_option("--seed", dat.seed, "dataset RNG seed");
    c_dat->add_option("--workers", dat.workers, "worker threads (0 = all cores)");
    c_dat->add_option("-o,--out", dat.out, "output file or directory");

    TrainOpts trn;
    auto* c_trn = app.add_subcommand("train", "PCA + SVM classifier from a dataset");
    c_trn->fallthrough();
    c_trn->add_option("--in", trn.in, "input dataset")->required();
    c_trn->add_option("--components", trn.components, "principal components kept");
    c_trn->add_option("--c", trn.c, "SVM regularization C");
    c_trn->add_option("--bin", trn.bin, "preprocessing bin factor, default by scenario");
    c_trn->add_option("--train-fraction", trn.train_fraction, "split fraction, default by scenario");
    c_trn->add_option("--seed", trn.seed, "split RNG seed");
    c_trn->add_option("--workers", trn.workers, "worker threads (0 = all cores)");
    c_trn->add_option("-o,--out", trn.out, "output model");

    PredictOpts prd;
    auto* c_prd = app.add_subcommand("predict", "Per-frame predictions for a dataset");
    c_prd->fallthrough();
    c_prd->add_option("--in", prd.in, "input dataset")->required();
    c_prd->add_option("--model", prd.model, "trained model")->required();
    c_prd->add_option("--workers", prd.workers, "worker threads (0 = all cores)");
    c_prd->add_option("-o,--out", prd.out, "output predictions JSON");

    EvaluateOpts evl;
    auto* c_evl = app.add_subcommand("evaluate", "Held-out accuracy table + confusion matrix");
    c_evl->fallthrough();
    c_evl->add_option("--in", evl.in, "input dataset")->required();
    c_evl->add_option("--model", evl.model, "trained model")->required();
    c_evl->add_option("--train-fraction", evl.train_fraction,
                      "split fraction used at training time");
    c_evl->add_option("--seed", evl.seed, "split RNG seed used at training time");
    c_evl->add_option("--workers", evl.workers, "worker threads (0 = all cores)");
    c_evl->add_option("-o,--out", evl.out, "output report JSON");

    RenderOpts ren;
    auto* c_ren = app.add_subcommand("render", "PNG image of a stored map");
    c_ren->fallthrough();
    c_ren->add_option("--in", ren.in, "input map or vector map")->required();
    c_ren->add_option("--component", ren.component, "vector component: x, y, z, or mag");
    c_ren->add_option("--cmap", ren.cmap, "diverging or sequential")
        ->check(CLI::IsMember({"diverging", "sequential"}));
    c_ren->add_option("--lo", ren.lo, "explicit range low");
    c_ren->add_option("--hi", ren.hi, "explicit range high");
    c_ren->add_option("-o,--out", ren.out, "output PNG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or a diagnostic as appropriate
        return code == 0 ? 0 : 2;
    }

    try {
        json cfg = load_config(config_path);
        if (c_sim->parsed()) run_simulate(sim, cfg, verbose);
        if (c_syn->parsed()) run_synth(syn, cfg, verbose);
        if (c_fit->parsed()) run_fit(fit, verbose);
        if (c_rec->parsed()) run_reconstruct(rec, verbose);
        if (c_fil->parsed()) run_filter(fil, verbose);
        if (c_dat->parsed()) run_dataset(dat, cfg, verbose);
        if (c_trn->parsed()) run_train(trn, cfg, verbose);
        if (c_prd->parsed()) run_predict(prd, verbose);
        if (c_evl->parsed()) run_evaluate(evl, cfg, verbose);
        if (c_ren->parsed()) run_render(ren, verbose);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "qdm: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "qdm: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "qdm: %s\n", e.what());
        return 4;
    }
    return 0;
}
