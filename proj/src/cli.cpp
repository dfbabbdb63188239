#include "contalign/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "contalign/align.hpp"
#include "contalign/checks.hpp"
#include "contalign/edt.hpp"
#include "contalign/errors.hpp"
#include "contalign/eval.hpp"
#include "contalign/loss.hpp"
#include "contalign/simulate.hpp"
#include "contalign/warp.hpp"

namespace contalign::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path data_dir() {
    const char* env = std::getenv("CONTALIGN_DATA_DIR");
    return (env && *env) ? fs::path(env) : fs::path(".");
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

io::RgbImage overlay_image(const ContourImage& source, const ContourImage& target, const ContourImage& aligned) {
    if (!source.same_shape(target) || !source.same_shape(aligned)) {
        throw InvalidInput("overlay: dimension mismatch");
    }
    io::RgbImage img{source.width(), source.height(), std::vector<std::uint8_t>(3 * source.size())};
    for (std::size_t i = 0; i < source.size(); ++i) {
        img.pixels[3 * i + 0] = io::to_byte(aligned[i]);
        img.pixels[3 * i + 1] = io::to_byte(target[i]);
        img.pixels[3 * i + 2] = io::to_byte(source[i]);
    }
    return img;
}

void emit_overlay(const ContourImage& source, const ContourImage& target, const ContourImage& aligned,
                  const fs::path& path) {
    io::write_png_rgb(path, overlay_image(source, target, aligned));
}

int run_selftest(std::ostream& out) {
    struct Item {
        const char* name;
        std::function<checks::Result()> run;
    };
    const std::vector<Item> items = {
        {"edt-exact", [] { return checks::edt_exactness(40, 32, 1); }},
        {"min-max", [] { return checks::min_max_inequality(200, 64, 2); }},
        {"dominance", [] { return checks::upperbound_dominance(10, 12, 16, {0.0, 1e-2, 1.0}, 3); }},
        {"reparam-translation", [] { return checks::reparam_translation(10, 4); }},
        {"reparam-affine", [] { return checks::reparam_affine(10, 0.02, 5); }},
        {"gradient", [] { return checks::gradient_check(2, 2, 1e-4, 1e-4, 6); }},
        {"tps-interpolation",
         [] {
             const TpsControlGrid g(4, 64, 64);
             const double r = g.interpolation_residual();
             return checks::Result{r < 1e-9, "residual " + std::to_string(r)};
         }},
        {"wfld-roundtrip",
         [] {
             const TpsControlGrid g(3, 20, 17);
             const WarpField f = tps_field(random_tps(9, 3.0, g), g, 20, 17);
             return checks::Result{decode_warp_field(encode_warp_field(f)) == f, "encode/decode"};
         }},
    };
    int failures = 0;
    for (const Item& item : items) {
        checks::Result r;
        try {
            r = item.run();
        } catch (const std::exception& e) {
            r = {false, std::string("threw: ") + e.what()};
        }
        if (!r.passed) ++failures;
        out << (r.passed ? "PASS " : "FAIL ") << item.name << ": " << r.detail << '\n';
    }
    return failures;
}

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Flags land in a JSON document at a json-pointer path, so a config file,
// its defaults and the command line all resolve through one structure.
class Bindings {
public:
    explicit Bindings(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* value(const std::string& flag, const std::string& path, const std::string& help,
                       const json& defaults) {
        auto v = std::make_shared<T>();
        CLI::Option* opt = app_->add_option(flag, *v, help + describe_default(defaults, path));
        setters_.push_back([opt, v, path](json& j) {
            if (opt->count()) j[json::json_pointer(path)] = *v;
        });
        return opt;
    }

    CLI::Option* flag(const std::string& name, const std::string& path, const std::string& help) {
        auto v = std::make_shared<bool>(false);
        CLI::Option* opt = app_->add_flag(name, *v, help);
        setters_.push_back([opt, v, path](json& j) {
            if (opt->count()) j[json::json_pointer(path)] = *v;
        });
        return opt;
    }

    void apply(json& j) const {
        for (const auto& s : setters_) s(j);
    }

private:
    static std::string describe_default(const json& defaults, const std::string& path) {
        const json::json_pointer ptr(path);
        if (!defaults.contains(ptr)) return "";
        const json& d = defaults.at(ptr);
        if (d.is_null()) return " (default: automatic)";
        if (d.is_string() && d.get<std::string>().empty()) return "";
        return " (default: " + (d.is_string() ? d.get<std::string>() : d.dump()) + ")";
    }

    CLI::App* app_;
    std::vector<std::function<void(json&)>> setters_;
};

json load_json_file(const fs::path& path) {
    const std::string text = io::read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
}

// defaults <- config file <- flags.
json resolve(const std::string& command, const json& defaults, const std::string& config_path,
             const Bindings& bindings) {
    json j = defaults;
    if (!config_path.empty()) {
        json file;
        try {
            file = load_json_file(config_path);
        } catch (const ParseError& e) {
            throw UsageError(e.what());
        }
        if (!file.is_object()) throw UsageError("config must be a JSON object");
        for (const auto& [key, value] : file.items()) {
            if (key == "command") {
                if (value != command) throw UsageError("config is for '" + value.dump() + "', not '" + command + "'");
                continue;
            }
            if (!defaults.contains(key)) throw UsageError("unknown config key '" + key + "'");
            if (defaults[key].is_object() && value.is_object()) {
                for (const auto& [k, v] : value.items()) j[key][k] = v;
            } else {
                j[key] = value;
            }
        }
    }
    bindings.apply(j);
    j["command"] = command;
    return j;
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

fs::path resolve_against(const fs::path& p, const fs::path& base) {
    return p.is_absolute() ? p : base / p;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateCommand {
    CLI::App* app = nullptr;
    std::string config;
    std::unique_ptr<Bindings> bind;
    json defaults;

    void setup(CLI::App& root) {
        app = root.add_subcommand("simulate", "Generate seeded synthetic pairs and a manifest");
        json pair = PairSpec{};
        pair.erase("seed");
        defaults = {{"out", (data_dir() / "sim").string()},
                    {"count", 10},
                    {"seed", 0},
                    {"shape", "random"},
                    {"mnist", ""},
                    {"jobs", default_jobs()},
                    {"pair", pair}};
        bind = std::make_unique<Bindings>(app);
        app->add_option("--config", config, "JSON config; flags override its values");
        bind->value<std::string>("--out", "/out", "Output directory ($CONTALIGN_DATA_DIR/sim)", defaults);
        bind->value<int>("--count", "/count", "Number of pairs", defaults);
        bind->value<std::uint64_t>("--seed", "/seed", "First pair seed; pair i uses seed + i", defaults);
        bind->value<std::string>("--shape", "/shape", "random, ellipse, rectangle, polygon or stroke", defaults);
        bind->value<std::string>("--mnist", "/mnist",
                                 "IDX3 image file; pair i uses digit i (relative paths try $CONTALIGN_DATA_DIR)",
                                 defaults);
        bind->value<double>("--magnitude", "/pair/magnitude", "Max TPS control offset in pixels", defaults);
        bind->value<double>("--density", "/pair/density", "Salt-noise probability per background pixel", defaults);
        bind->value<int>("--occlusions-min", "/pair/occlusions_min", "Fewest occlusion boxes", defaults);
        bind->value<int>("--occlusions-max", "/pair/occlusions_max", "Most occlusion boxes", defaults);
        bind->value<int>("--box-min", "/pair/box_min", "Smallest occlusion box side", defaults);
        bind->value<int>("--box-max", "/pair/box_max", "Largest occlusion box side", defaults);
        bind->value<int>("--width", "/pair/width", "Canvas width", defaults);
        bind->value<int>("--height", "/pair/height", "Canvas height", defaults);
        bind->value<int>("--warp-grid", "/pair/warp_grid", "TPS lattice size of the ground-truth warp", defaults);
        bind->value<double>("--threshold", "/pair/threshold", "Binarization of the warped source", defaults);
        bind->value<int>("--jobs", "/jobs", "Worker threads", defaults);
    }

    int run(std::ostream& out, std::ostream& err) const {
        const json cfg = resolve("simulate", defaults, config, *bind);
        PairSpec base_spec;
        int count = 0;
        std::uint64_t seed = 0;
        ShapeKind kind = ShapeKind::ellipse;
        bool random_shape = false;
        fs::path mnist;
        try {
            base_spec = cfg.at("pair").get<PairSpec>();
            count = cfg.at("count").get<int>();
            seed = cfg.at("seed").get<std::uint64_t>();
            const std::string shape = cfg.at("shape").get<std::string>();
            random_shape = shape == "random";
            if (!random_shape) kind = shape_kind_from_string(shape);
            mnist = cfg.at("mnist").get<std::string>();
        } catch (const json::exception& e) {
            throw UsageError(std::string("bad config value: ") + e.what());
        }
        if (count < 1) throw UsageError("--count must be at least 1");
        const fs::path out_dir = cfg.at("out").get<std::string>();
        fs::create_directories(out_dir);
        write_json(out_dir / "run.json", cfg);

        std::vector<ContourImage> digits;
        if (!mnist.empty()) {
            if (mnist.is_relative() && !fs::exists(mnist)) mnist = data_dir() / mnist;
            digits = load_mnist_contours(mnist, static_cast<std::size_t>(count));
            if (digits.size() < static_cast<std::size_t>(count)) {
                throw InvalidInput("MNIST file holds only " + std::to_string(digits.size()) + " images");
            }
            if (base_spec.width != 128 || base_spec.height != 128) {
                throw InvalidConfig("MNIST contours are 128x128; set the pair size to match");
            }
        }

        std::vector<std::string> lines(static_cast<std::size_t>(count));
        parallel_for(lines.size(), cfg.at("jobs").get<int>(), [&](std::size_t i) {
            PairSpec spec = base_spec;
            spec.seed = seed + i;
            ContourImage base;
            if (!digits.empty()) {
                base = digits[i];
            } else if (random_shape) {
                base = random_contour(spec.seed, spec.width, spec.height);
            } else {
                ContourParams p;
                p.width = spec.width;
                p.height = spec.height;
                p.cx = 0.5 * (spec.width - 1);
                p.cy = 0.5 * (spec.height - 1);
                p.rx = spec.width * 30.0 / 128.0;
                p.ry = spec.height * 20.0 / 128.0;
                p.rect_w = spec.width * 60 / 128;
                p.rect_h = spec.height * 40 / 128;
                base = gen_contour(kind, p, spec.seed);
            }
            const SimPair pair = make_pair(base, spec);
            const std::string name = "pair_" + std::to_string(spec.seed);
            const fs::path dir = out_dir / name;
            fs::create_directories(dir);
            io::write_png_gray(dir / "source.png", pair.source);
            io::write_png_gray(dir / "target.png", pair.target);
            io::write_png_gray(dir / "clean_source.png", pair.clean_source);
            save_warp_field(dir / "gt_field.wfld", pair.gt_field());
            json offsets = json::array();
            for (const Vec2& v : pair.gt_warp.offsets) offsets.push_back({v.x, v.y});
            write_json(dir / "gt.json", {{"seed", spec.seed},
                                         {"warp_grid", pair.warp_grid},
                                         {"offsets", offsets},
                                         {"affine", pair.gt_warp.affine.p},
                                         {"initial_score", initial_score(pair)}});
            lines[i] = json{{"seed", spec.seed},
                            {"spec", spec},
                            {"source", name + "/source.png"},
                            {"target", name + "/target.png"},
                            {"clean_source", name + "/clean_source.png"},
                            {"gt_field", name + "/gt_field.wfld"}}
                           .dump();
        });
        std::string manifest;
        for (const std::string& l : lines) manifest += l + "\n";
        io::write_file_atomic(out_dir / "manifest.jsonl", manifest);
        err << "simulate: wrote " << count << " pairs to " << out_dir.string() << '\n';
        out << (out_dir / "manifest.jsonl").string() << '\n';
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// manifest

struct ManifestEntry {
    std::uint64_t seed = 0;
    fs::path source, target, clean_source;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    const std::string text = io::read_file(path);
    const fs::path base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t here = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            ManifestEntry e;
            e.seed = j.at("seed").get<std::uint64_t>();
            e.source = resolve_against(j.at("source").get<std::string>(), base);
            e.target = resolve_against(j.at("target").get<std::string>(), base);
            if (j.contains("clean_source")) e.clean_source = resolve_against(j["clean_source"].get<std::string>(), base);
            entries.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ParseError(path.string() + ": bad manifest line: " + ex.what(), here);
        }
    }
    if (entries.empty()) throw InvalidInput(path.string() + ": manifest has no pairs");
    return entries;
}

// ---------------------------------------------------------------------------
// align

struct AlignCommand {
    CLI::App* app = nullptr;
    std::string config;
    std::unique_ptr<Bindings> bind;
    json defaults;
    std::string schedule_flag;
    CLI::Option* schedule_opt = nullptr;
    int max_iters = 0;
    CLI::Option* max_iters_opt = nullptr;
    std::vector<double> weights;
    CLI::Option* weights_opt = nullptr;

    void setup(CLI::App& root) {
        app = root.add_subcommand("align", "Align one pair (--source/--target) or a manifest batch");
        json loss = LossConfig{};
        loss["scale_weights"] = nullptr;
        defaults = {{"source", ""},       {"target", ""},           {"manifest", ""},
                    {"out", (data_dir() / "align").string()},       {"loss", loss},
                    {"schedule", nullptr}, {"joint_finetune", false}, {"jobs", default_jobs()}};
        bind = std::make_unique<Bindings>(app);
        app->add_option("--config", config, "JSON config; flags override its values");
        bind->value<std::string>("--source", "/source", "Source image (PGM/PNG)", defaults);
        bind->value<std::string>("--target", "/target", "Target image (PGM/PNG)", defaults);
        bind->value<std::string>("--manifest", "/manifest", "Pair manifest (JSON lines) for batch mode", defaults);
        bind->value<std::string>("--out", "/out", "Output directory ($CONTALIGN_DATA_DIR/align)", defaults);
        bind->value<double>("--alpha", "/loss/alpha", "Shape-term weight", defaults);
        bind->value<int>("--window", "/loss/window", "Shape-term window (odd)", defaults);
        bind->value<std::string>("--loss", "/loss/kind", "chamfer, reparam, upperbound, ncc or mse", defaults);
        bind->value<std::string>("--normalization", "/loss/normalization", "support, as_written or none",
                                 defaults);
        weights_opt = app->add_option("--scale-weights", weights,
                                      "Per-stage weights of the multiscale loss (default: 1 per stage)")
                          ->delimiter(',');
        schedule_opt = app->add_option("--schedule", schedule_flag,
                                       "Comma-separated stages, e.g. affine@4,tps2@3,tps4@2,tps8@1,tps16@0 "
                                       "(default: that schedule, shortened for small images)");
        max_iters_opt = app->add_option("--max-iters", max_iters, "Iteration cap for every stage (default: 200)");
        bind->flag("--joint-finetune", "/joint_finetune", "Repeat the finest stage once more at full resolution");
        bind->value<int>("--jobs", "/jobs", "Worker threads (batch mode)", defaults);
    }

    json resolved() const {
        json cfg = resolve("align", defaults, config, *bind);
        if (schedule_opt->count()) {
            json stages = json::array();
            std::stringstream ss(schedule_flag);
            std::string label;
            while (std::getline(ss, label, ',')) {
                if (!label.empty()) stages.push_back(label);
            }
            cfg["schedule"] = stages;
        }
        if (weights_opt->count()) cfg["loss"]["scale_weights"] = weights;
        return cfg;
    }

    // Fills automatic entries from the image size.
    static void finalize(json& cfg, int width, int height) {
        if (cfg["schedule"].is_null()) {
            cfg["schedule"] = default_schedule(std::min(5, max_pyramid_levels(width, height)));
        } else {
            cfg["schedule"] = cfg["schedule"].get<std::vector<StageSpec>>();
        }
        if (cfg["loss"]["scale_weights"].is_null()) {
            cfg["loss"]["scale_weights"] = std::vector<double>(cfg["schedule"].size(), 1.0);
        }
    }

    static json align_one(const ContourImage& S, const ContourImage& T, const std::vector<StageSpec>& schedule,
                          const LossConfig& loss, const AlignOptions& opts, const fs::path& dir) {
        if (!S.same_shape(T)) {
            throw InvalidInput("align: dimension mismatch (source " + std::to_string(S.width()) + "x" +
                               std::to_string(S.height()) + ", target " + std::to_string(T.width()) + "x" +
                               std::to_string(T.height()) + ")");
        }
        fs::create_directories(dir);
        const AlignmentResult r = align(S, T, schedule, loss, opts);
        save_warp_field(dir / "fwd.wfld", r.fwd);
        save_warp_field(dir / "bwd.wfld", r.bwd);
        const ContourImage aligned = apply_warp(S, r.fwd);
        io::write_png_gray(dir / "aligned.png", aligned);
        emit_overlay(S, T, aligned, dir / "overlay.png");
        json j = r;
        j["loss"] = to_string(loss.kind);
        write_json(dir / "result.json", j);
        return j;
    }

    int run(std::ostream& out, std::ostream& err) const {
        json cfg = resolved();
        const std::string source = cfg.at("source").get<std::string>();
        const std::string target = cfg.at("target").get<std::string>();
        const std::string manifest = cfg.at("manifest").get<std::string>();
        const bool pair_mode = !source.empty() || !target.empty();
        if (pair_mode == !manifest.empty()) throw UsageError("give either --source and --target, or --manifest");
        if (pair_mode && (source.empty() || target.empty())) throw UsageError("--source and --target go together");

        std::vector<ManifestEntry> entries;
        ContourImage S, T;
        if (pair_mode) {
            S = io::read_image(source);
            T = io::read_image(target);
        } else {
            entries = read_manifest(manifest);
            T = io::read_image(entries.front().target);
        }
        std::vector<StageSpec> schedule;
        LossConfig loss;
        AlignOptions opts;
        try {
            finalize(cfg, T.width(), T.height());
            if (max_iters_opt->count()) {
                for (json& s : cfg["schedule"]) s["max_iters"] = max_iters;
            }
            schedule = cfg["schedule"].get<std::vector<StageSpec>>();
            validate_schedule(schedule);
            loss = cfg.at("loss").get<LossConfig>();
            opts.joint_finetune = cfg.at("joint_finetune").get<bool>();
        } catch (const json::exception& e) {
            throw UsageError(std::string("bad config value: ") + e.what());
        } catch (const InvalidConfig& e) {
            throw UsageError(e.what());
        }
        const fs::path out_dir = cfg.at("out").get<std::string>();
        fs::create_directories(out_dir);
        write_json(out_dir / "run.json", cfg);

        if (pair_mode) {
            const json r = align_one(S, T, schedule, loss, opts, out_dir);
            out << r.at("final").dump() << '\n';
            return kExitOk;
        }
        std::vector<std::string> failures(entries.size());
        parallel_for(entries.size(), cfg.at("jobs").get<int>(), [&](std::size_t i) {
            const ManifestEntry& e = entries[i];
            const fs::path dir = out_dir / ("result_" + std::to_string(e.seed));
            try {
                align_one(io::read_image(e.source), io::read_image(e.target), schedule, loss, opts, dir);
            } catch (const Error& ex) {
                failures[i] = ex.what();
                fs::create_directories(dir);
                write_json(dir / "result.json", {{"complete", false}, {"error", ex.what()}, {"kind", ex.kind()}});
            }
        });
        int failed = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (failures[i].empty()) continue;
            ++failed;
            err << "align: pair " << entries[i].seed << " failed: " << failures[i] << '\n';
        }
        err << "align: " << entries.size() - failed << "/" << entries.size() << " pairs aligned into "
            << out_dir.string() << '\n';
        out << out_dir.string() << '\n';
        return failed ? kExitRuntime : kExitOk;
    }
};

// ---------------------------------------------------------------------------
// eval

struct EvalCommand {
    CLI::App* app = nullptr;
    std::string config;
    std::unique_ptr<Bindings> bind;
    json defaults;

    void setup(CLI::App& root) {
        app = root.add_subcommand("eval", "Score batch alignment results against clean ground truth");
        defaults = {{"manifest", ""}, {"results", ""},        {"out", ""},
                    {"Z", 5.0},       {"binarize", false},    {"method", "direct"},
                    {"jobs", default_jobs()}};
        bind = std::make_unique<Bindings>(app);
        app->add_option("--config", config, "JSON config; flags override its values");
        bind->value<std::string>("--manifest", "/manifest", "Pair manifest written by simulate", defaults);
        bind->value<std::string>("--results", "/results", "Directory written by align --manifest", defaults);
        bind->value<std::string>("--out", "/out", "Report directory (default: <results>/eval)", defaults);
        bind->value<double>("--Z", "/Z", "Distance threshold for the within-Z percentage", defaults);
        bind->flag("--binarize", "/binarize", "Threshold the warped source at 0.5 before scoring");
        bind->value<std::string>("--method", "/method", "Method name for the report table", defaults);
        bind->value<int>("--jobs", "/jobs", "Worker threads", defaults);
    }

    int run(std::ostream& out, std::ostream& err) const {
        json cfg = resolve("eval", defaults, config, *bind);
        EvalOptions opts;
        std::string manifest, results, method;
        try {
            opts.Z = cfg.at("Z").get<double>();
            opts.binarize = cfg.at("binarize").get<bool>();
            manifest = cfg.at("manifest").get<std::string>();
            results = cfg.at("results").get<std::string>();
            method = cfg.at("method").get<std::string>();
        } catch (const json::exception& e) {
            throw UsageError(std::string("bad config value: ") + e.what());
        }
        if (manifest.empty() || results.empty()) throw UsageError("--manifest and --results are required");
        if (!(opts.Z > 0.0)) throw UsageError("--Z must be positive");
        if (cfg.at("out").get<std::string>().empty()) cfg["out"] = (fs::path(results) / "eval").string();
        const fs::path out_dir = cfg.at("out").get<std::string>();
        fs::create_directories(out_dir);
        write_json(out_dir / "run.json", cfg);

        const std::vector<ManifestEntry> entries = read_manifest(manifest);
        std::vector<EvalRow> rows(entries.size());
        std::vector<std::string> losses(entries.size());
        parallel_for(entries.size(), cfg.at("jobs").get<int>(), [&](std::size_t i) {
            const ManifestEntry& e = entries[i];
            if (e.clean_source.empty()) throw InvalidInput("manifest entry lacks clean_source");
            const fs::path dir = fs::path(results) / ("result_" + std::to_string(e.seed));
            SimPair pair;
            pair.clean_source = io::read_image(e.clean_source);
            pair.target = io::read_image(e.target);
            const WarpField fwd = load_warp_field(dir / "fwd.wfld");
            rows[i] = evaluate_pair(fwd, pair, opts, std::to_string(e.seed));
            const json r = load_json_file(dir / "result.json");
            losses[i] = r.value("loss", "unknown");
            write_json(out_dir / ("eval_" + std::to_string(e.seed) + ".json"), rows[i]);
        });
        const EvalReport report = aggregate(rows, method, losses.front(), opts.Z);
        write_json(out_dir / "report.json", report);
        const std::string table = format_table(report);
        io::write_file_atomic(out_dir / "report.txt", table);
        err << "eval: " << report.improved << "/" << rows.size() << " pairs improved\n";
        if (report.vanished > 0) err << "eval: warning: aligned source vanished on " << report.vanished << " pairs\n";
        out << table;
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// overlay, dt

struct OverlayCommand {
    CLI::App* app = nullptr;
    std::string config;
    std::unique_ptr<Bindings> bind;
    json defaults;

    void setup(CLI::App& root) {
        app = root.add_subcommand("overlay", "Write an RGB overlay: blue source, green target, red aligned");
        defaults = {{"source", ""}, {"target", ""}, {"aligned", ""}, {"field", ""}, {"out", ""}};
        bind = std::make_unique<Bindings>(app);
        app->add_option("--config", config, "JSON config; flags override its values");
        bind->value<std::string>("--source", "/source", "Source image", defaults);
        bind->value<std::string>("--target", "/target", "Target image", defaults);
        bind->value<std::string>("--aligned", "/aligned", "Aligned image", defaults);
        bind->value<std::string>("--field", "/field", "Warp field (.wfld) applied to the source instead", defaults);
        bind->value<std::string>("--out", "/out", "Output PNG; run.json goes beside it as <out>.run.json",
                                 defaults);
    }

    int run(std::ostream& out, std::ostream&) const {
        const json cfg = resolve("overlay", defaults, config, *bind);
        const std::string src = cfg.at("source"), tgt = cfg.at("target"), al = cfg.at("aligned"),
                          field = cfg.at("field"), dst = cfg.at("out");
        if (src.empty() || tgt.empty() || dst.empty()) throw UsageError("--source, --target and --out are required");
        if (al.empty() == field.empty()) throw UsageError("give exactly one of --aligned or --field");
        write_json(dst + ".run.json", cfg);
        const ContourImage S = io::read_image(src);
        const ContourImage T = io::read_image(tgt);
        const ContourImage A = al.empty() ? apply_warp(S, load_warp_field(field)) : io::read_image(al);
        emit_overlay(S, T, A, dst);
        out << dst << '\n';
        return kExitOk;
    }
};

struct DtCommand {
    CLI::App* app = nullptr;
    std::string config;
    std::unique_ptr<Bindings> bind;
    json defaults;

    void setup(CLI::App& root) {
        app = root.add_subcommand("dt", "Dump the distance transform of an image as a scaled PGM");
        defaults = {{"image", ""}, {"out", ""}};
        bind = std::make_unique<Bindings>(app);
        app->add_option("--config", config, "JSON config; flags override its values");
        bind->value<std::string>("--image", "/image", "Contour image (pixels above 0.5 count)", defaults);
        bind->value<std::string>("--out", "/out", "Output PGM; <out>.scale.txt holds pixels per gray level",
                                 defaults);
    }

    int run(std::ostream& out, std::ostream&) const {
        const json cfg = resolve("dt", defaults, config, *bind);
        const std::string img = cfg.at("image"), dst = cfg.at("out");
        if (img.empty() || dst.empty()) throw UsageError("--image and --out are required");
        write_json(dst + ".run.json", cfg);
        const DistanceField d = edt(io::read_image(img));
        dump_distance_pgm(d, dst);
        out << "max " << d.max_value() << '\n';
        return kExitOk;
    }
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("contalign: contour alignment with Chamfer losses", "contalign");
    app.require_subcommand(1);
    SimulateCommand simulate;
    AlignCommand align_cmd;
    EvalCommand eval;
    OverlayCommand overlay;
    DtCommand dt;
    simulate.setup(app);
    align_cmd.setup(app);
    eval.setup(app);
    overlay.setup(app);
    dt.setup(app);
    CLI::App* selftest = app.add_subcommand("selftest", "Run oracle-backed property checks");

    std::vector<std::string> storage{"contalign"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (std::string& s : storage) argv.push_back(s.data());

    auto help_for = [&]() -> std::string {
        for (CLI::App* sub : app.get_subcommands()) return sub->help();
        return app.help();
    };
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << help_for();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << help_for();
        return kExitUsage;
    }

    try {
        if (*selftest) {
            const int failures = run_selftest(out);
            return failures ? kExitRuntime : kExitOk;
        }
        if (*simulate.app) return simulate.run(out, err);
        if (*align_cmd.app) return align_cmd.run(out, err);
        if (*eval.app) return eval.run(out, err);
        if (*overlay.app) return overlay.run(out, err);
        if (*dt.app) return dt.run(out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << help_for();
        return kExitUsage;
    } catch (const Error& e) {
        err << "error (" << e.kind() << "): " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

int dispatch(int argc, char** argv) {
    return dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

}  // namespace contalign::cli
