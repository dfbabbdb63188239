// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "contalign/align.hpp"
#include "contalign/checks.hpp"
#include "contalign/cli.hpp"
#include "contalign/eval.hpp"
#include "contalign/image_io.hpp"
#include "contalign/simulate.hpp"

using namespace contalign;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool passed;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    if (!o.passed) ++failures;
    std::cout << "criterion " << id << " " << (o.passed ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << std::endl;
}

void info(const std::string& line) { std::cout << "  info: " << line << std::endl; }

PairSpec warp_only(std::uint64_t seed) {
    PairSpec s;
    s.seed = seed;
    s.density = 0.0;
    s.occlusions_min = s.occlusions_max = 0;
    return s;
}

struct Batch {
    EvalReport report;
    double max_seconds = 0.0;
    double mean_seconds = 0.0;
    double median_retained = 0.0;
};

Batch align_batch(int count, std::uint64_t first_seed, const std::function<PairSpec(std::uint64_t)>& spec_for,
                  const LossConfig& cfg) {
    Batch b;
    std::vector<EvalRow> rows;
    std::vector<double> retained;
    double total = 0.0;
    for (int k = 0; k < count; ++k) {
        const PairSpec spec = spec_for(first_seed + k);
        const SimPair pair = make_pair(random_contour(spec.seed), spec);
        const auto t0 = Clock::now();
        const AlignmentResult r = align(pair.source, pair.target, default_schedule(), cfg);
        const double dt = seconds_since(t0);
        total += dt;
        b.max_seconds = std::max(b.max_seconds, dt);
        rows.push_back(evaluate_pair(r.fwd, pair, EvalOptions{}, std::to_string(spec.seed)));
        const ContourImage kept = apply_warp(pair.clean_source, r.fwd);
        double m0 = 0.0, m1 = 0.0;
        for (std::size_t i = 0; i < kept.size(); ++i) {
            m0 += pair.clean_source[i];
            m1 += kept[i];
        }
        retained.push_back(m1 / m0);
    }
    b.median_retained = median(retained);
    b.mean_seconds = total / count;
    b.report = aggregate(std::move(rows), "direct", to_string(cfg.kind), 5.0);
    return b;
}

Outcome from_check(const checks::Result& r) { return {r.passed, r.detail}; }

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() != "run.json")
            files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
    }
    return files;
}

int dispatch(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    if (code != 0) info("command failed: " + args.front() + ": " + err.str());
    return code;
}

Outcome determinism(const fs::path& work) {
    const fs::path a = work / "determinism_a", b = work / "determinism_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const std::string sim_a = (a / "sim").string(), res_a = (a / "res").string();
    const std::string sim_b = (b / "sim").string(), res_b = (b / "res").string();
    if (dispatch({"simulate", "--seed", "500", "--count", "4", "--out", sim_a, "--jobs", "1"}) ||
        dispatch({"align", "--manifest", sim_a + "/manifest.jsonl", "--out", res_a, "--jobs", "1"}) ||
        dispatch({"eval", "--manifest", sim_a + "/manifest.jsonl", "--results", res_a, "--jobs", "1"})) {
        return {false, "first run failed"};
    }
    // rerun each command from its saved run.json, redirected and with more workers
    if (dispatch({"simulate", "--config", sim_a + "/run.json", "--out", sim_b, "--jobs", "3"}) ||
        dispatch({"align", "--config", res_a + "/run.json", "--manifest", sim_b + "/manifest.jsonl", "--out", res_b,
                  "--jobs", "3"}) ||
        dispatch({"eval", "--config", res_a + "/eval/run.json", "--manifest", sim_b + "/manifest.jsonl", "--results",
                  res_b, "--out", res_b + "/eval", "--jobs", "2"})) {
        return {false, "rerun from run.json failed"};
    }
    const auto ta = tree(a), tb = tree(b);
    std::size_t differing = 0;
    for (const auto& [name, bytes] : ta) {
        const auto it = tb.find(name);
        if (it == tb.end() || it->second != bytes) ++differing;
    }
    const bool ok = ta.size() == tb.size() && differing == 0 && ta.size() > 20;
    return {ok, fmt("%zu files compared (run.json excluded), %zu differ, jobs 1 vs 2-3", ta.size(), differing)};
}

Outcome protocol(const fs::path& work) {
    const fs::path res = work / "determinism_a" / "res";
    const std::string table = io::read_file(res / "eval" / "report.txt");
    std::istringstream in(table);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    const std::regex cell(R"(\d+\.\d\d \(\d+%\)$)");
    bool table_ok = lines.size() == 3 && lines[0].find("Method") == 0 && lines[0].find("Z=5") != std::string::npos &&
                    lines[1].find("Given test pairs") == 0 && std::regex_search(lines[1], cell) &&
                    std::regex_search(lines[2], cell);
    if (table_ok) {
        const auto col = lines[0].find("Chamfer");
        table_ok = lines[1].find_first_of("0123456789", 20) == col && lines[2].find_first_of("0123456789", 20) == col;
    }

    // Overlay channels against the images written beside it.
    std::size_t checked = 0, mismatched = 0;
    for (const auto& e : fs::directory_iterator(res)) {
        if (!e.is_directory() || e.path().filename().string().rfind("result_", 0) != 0) continue;
        const std::string seed = e.path().filename().string().substr(7);
        const fs::path sim = work / "determinism_a" / "sim" / ("pair_" + seed);
        const io::RgbImage ov = io::read_png_rgb(e.path() / "overlay.png");
        const ContourImage src = io::read_image(sim / "source.png");
        const ContourImage tgt = io::read_image(sim / "target.png");
        const ContourImage al = io::read_image(e.path() / "aligned.png");
        for (int y = 0; y < ov.height; ++y) {
            for (int x = 0; x < ov.width; ++x) {
                const auto px = ov.at(x, y);
                ++checked;
                if (px[0] != io::to_byte(al.at(x, y)) || px[1] != io::to_byte(tgt.at(x, y)) ||
                    px[2] != io::to_byte(src.at(x, y)))
                    ++mismatched;
            }
        }
    }
    const bool ok = table_ok && checked > 0 && mismatched == 0;
    return {ok, fmt("table layout %s; overlay R=aligned G=target B=source, %zu pixels decoded, %zu mismatched",
                    table_ok ? "ok" : "wrong", checked, mismatched)};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "contalign_acceptance";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--work") work = argv[i + 1];
    fs::create_directories(work);

    {
        const auto t0 = Clock::now();
        const checks::Result small = checks::edt_exactness(200, 32, 1);
        const checks::Result large = checks::edt_exactness(20, 128, 2);
        const double t = seconds_since(t0);
        report(1, "EDT exactness",
               {small.passed && large.passed && t < 10.0, small.detail + "; " + large.detail + fmt("; %.2f s", t)});
    }
    report(2, "min-max inequality", from_check(checks::min_max_inequality(1000, 64, 3)));
    report(3, "upperbound dominance", from_check(checks::upperbound_dominance(100, 12, 24, {0.0, 1e-2, 1.0}, 4)));
    {
        const checks::Result tr = checks::reparam_translation(50, 5);
        const checks::Result af = checks::reparam_affine(50, 0.02, 6);
        report(4, "reparameterization identity", {tr.passed && af.passed, tr.detail + "; " + af.detail});
    }
    report(5, "gradient correctness", from_check(checks::gradient_check(20, 20, 1e-4, 1e-4, 7)));

    {
        const Batch b = align_batch(100, 1000, warp_only, LossConfig{});
        const EvalReport& r = b.report;
        const double reduction = 1.0 - r.median_final_score / r.median_initial_score;
        const double improved = 100.0 * r.improved / static_cast<double>(r.rows.size());
        const bool ok = reduction >= 0.60 && improved >= 90.0 && b.max_seconds < 5.0;
        report(6, "alignment recovery",
               {ok, fmt("100 warp-only pairs, mean initial %.2f px, median %.2f -> %.2f px (%.1f%% reduction), "
                        "%.0f%% improved, %.2f s/pair mean, %.2f s max",
                        r.mean_initial_score, r.median_initial_score, r.median_final_score, 100.0 * reduction,
                        improved, b.mean_seconds, b.max_seconds)});
        std::istringstream table(format_table(r));
        for (std::string l; std::getline(table, l);) info(l);

        const Batch d = align_batch(20, 1000, [](std::uint64_t s) { PairSpec p; p.seed = s; return p; }, LossConfig{});
        info(fmt("default corruption (density 0.05, 1-3 boxes), 20 pairs: median %.2f -> %.2f px, %d/20 improved",
                 d.report.median_initial_score, d.report.median_final_score, d.report.improved));
    }

    {
        auto noisy = [](std::uint64_t s) {
            PairSpec p;
            p.seed = s;
            p.density = 0.1;
            p.occlusions_min = p.occlusions_max = 1;
            return p;
        };
        LossConfig with_shape;
        LossConfig without_shape;
        without_shape.alpha = 0.0;
        const Batch a = align_batch(50, 2000, noisy, with_shape);
        const Batch z = align_batch(50, 2000, noisy, without_shape);
        const double ma = a.report.median_final_score, mz = z.report.median_final_score;
        report(7, "shape-term noise robustness",
               {ma <= mz, fmt("50 pairs, density 0.1 + one box: median GT Chamfer %.4f px (alpha 1e-2) vs %.4f px "
                              "(alpha 0), initial %.2f px",
                              ma, mz, a.report.median_initial_score)});
        int wins = 0;
        for (std::size_t i = 0; i < a.report.rows.size(); ++i)
            if (a.report.rows[i].final_score <= z.report.rows[i].final_score) ++wins;
        info(fmt("alpha 1e-2 at least as good on %d/50 pairs; means over non-vanished pairs %.3f vs %.3f px", wins,
                 a.report.mean_final_score, z.report.mean_final_score));
        info(fmt("source vanished on %d vs %d pairs; median clean-source mass retained %.2f vs %.2f",
                 a.report.vanished, z.report.vanished, a.median_retained, z.median_retained));
    }

    report(8, "determinism", determinism(work));
    report(9, "protocol fidelity", protocol(work));

    std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
