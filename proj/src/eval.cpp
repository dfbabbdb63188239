#include "contalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "contalign/edt.hpp"
#include "contalign/errors.hpp"

namespace contalign {

double asym_chamfer(const ContourImage& S_aligned, const ContourImage& T_clean) {
    if (!S_aligned.same_shape(T_clean)) throw InvalidInput("asym_chamfer: dimension mismatch");
    const DistanceField dt = edt(T_clean);
    double n = 0.0, s = 0.0;
    for (std::size_t i = 0; i < S_aligned.size(); ++i) {
        n += S_aligned[i];
        s += S_aligned[i] * dt[i];
    }
    if (n <= 0.0) throw EmptyShape("asym_chamfer: aligned source is empty");
    return s / n;
}

double pct_within(const ContourImage& S_aligned, const ContourImage& T_clean, double Z) {
    if (!(Z > 0.0)) throw InvalidConfig("Z must be positive");
    if (!S_aligned.same_shape(T_clean)) throw InvalidInput("pct_within: dimension mismatch");
    const DistanceField dt = edt(T_clean);
    double n = 0.0, in = 0.0;
    for (std::size_t i = 0; i < S_aligned.size(); ++i) {
        n += S_aligned[i];
        if (dt[i] <= Z) in += S_aligned[i];
    }
    if (n <= 0.0) throw EmptyShape("pct_within: aligned source is empty");
    return 100.0 * in / n;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

EvalRow evaluate_pair(const WarpField& fwd, const SimPair& pair, const EvalOptions& opts, const std::string& id) {
    EvalRow row;
    row.id = id;
    row.initial_score = asym_chamfer(pair.clean_source, pair.target);
    row.initial_pct = pct_within(pair.clean_source, pair.target, opts.Z);
    ContourImage aligned = apply_warp(pair.clean_source, fwd);
    if (opts.binarize) aligned = binarize(aligned, 0.5);
    double mass = 0.0;
    for (std::size_t i = 0; i < aligned.size(); ++i) mass += aligned[i];
    if (mass <= 0.0) {
        row.vanished = true;
        row.final_score = std::numeric_limits<double>::infinity();
        row.final_pct = 0.0;
        return row;
    }
    row.final_score = asym_chamfer(aligned, pair.target);
    row.final_pct = pct_within(aligned, pair.target, opts.Z);
    return row;
}

EvalReport aggregate(std::vector<EvalRow> rows, const std::string& method, const std::string& loss, double Z) {
    EvalReport r;
    r.method = method;
    r.loss = loss;
    r.Z = Z;
    r.rows = std::move(rows);
    std::vector<double> is, fs, ip, fp, fs_kept, fp_kept;
    for (const EvalRow& row : r.rows) {
        is.push_back(row.initial_score);
        fs.push_back(row.final_score);
        ip.push_back(row.initial_pct);
        fp.push_back(row.final_pct);
        if (row.vanished) {
            ++r.vanished;
        } else {
            fs_kept.push_back(row.final_score);
            fp_kept.push_back(row.final_pct);
        }
        if (row.final_score < row.initial_score) ++r.improved;
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    r.mean_initial_score = mean(is);
    r.mean_final_score = mean(fs_kept);
    r.mean_initial_pct = mean(ip);
    r.mean_final_pct = mean(fp_kept);
    r.median_initial_score = median(is);
    r.median_final_score = median(fs);
    r.median_initial_pct = median(ip);
    r.median_final_pct = median(fp);
    return r;
}

void to_json(nlohmann::json& j, const EvalRow& r) {
    j = nlohmann::json{{"id", r.id},
                       {"initial_score", r.initial_score},
                       {"final_score", r.final_score},
                       {"initial_pct", r.initial_pct},
                       {"final_pct", r.final_pct}};
    if (r.vanished) {
        j["final_score"] = nullptr;
        j["vanished"] = true;
    }
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    j = nlohmann::json{{"method", r.method},
                       {"loss", r.loss},
                       {"Z", r.Z},
                       {"pairs", r.rows.size()},
                       {"improved", r.improved},
                       {"vanished", r.vanished},
                       {"mean", {{"initial_score", r.mean_initial_score},
                                 {"final_score", r.mean_final_score},
                                 {"initial_pct", r.mean_initial_pct},
                                 {"final_pct", r.mean_final_pct}}},
                       {"median", {{"initial_score", r.median_initial_score},
                                   {"final_score", std::isfinite(r.median_final_score)
                                                       ? nlohmann::json(r.median_final_score)
                                                       : nlohmann::json(nullptr)},
                                   {"initial_pct", r.median_initial_pct},
                                   {"final_pct", r.median_final_pct}}},
                       {"rows", r.rows}};
}

std::string format_table(const EvalReport& r) {
    auto cell = [](double score, double pct) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f (%.0f%%)", score, pct);
        return std::string(buf);
    };
    char z[32];
    std::snprintf(z, sizeof z, "%g", r.Z);
    const std::string header = std::string("Chamfer score (% within Z=") + z + ")";
    struct Line {
        std::string method, loss, value;
    };
    const std::vector<Line> lines = {
        {"Method", "Loss", header},
        {"Given test pairs", "-", cell(r.mean_initial_score, r.mean_initial_pct)},
        {r.method, r.loss, cell(r.mean_final_score, r.mean_final_pct)},
    };
    std::size_t w0 = 0, w1 = 0;
    for (const Line& l : lines) {
        w0 = std::max(w0, l.method.size());
        w1 = std::max(w1, l.loss.size());
    }
    std::ostringstream os;
    for (const Line& l : lines) {
        os << l.method << std::string(w0 - l.method.size() + 2, ' ') << l.loss
           << std::string(w1 - l.loss.size() + 2, ' ') << l.value << '\n';
    }
    return os.str();
}

}  // namespace contalign
