#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "contalign/raster.hpp"
#include "contalign/simulate.hpp"
#include "contalign/warp.hpp"

namespace contalign {

/// (1/N) sum S . dt[T] with N the intensity sum of S.
double asym_chamfer(const ContourImage& S_aligned, const ContourImage& T_clean);

/// Percentage of S intensity lying within Z pixels of T.
double pct_within(const ContourImage& S_aligned, const ContourImage& T_clean, double Z);

struct EvalOptions {
    double Z = 5.0;
    bool binarize = false;  // threshold the warped source at 0.5 before scoring
};

struct EvalRow {
    std::string id;
    double initial_score = 0.0;
    double final_score = 0.0;
    double initial_pct = 0.0;
    double final_pct = 0.0;
    bool vanished = false;  // warped source has no mass left: final_score = inf, final_pct = 0
};

struct EvalReport {
    std::string method = "direct";
    std::string loss;
    double Z = 5.0;
    std::vector<EvalRow> rows;
    double mean_initial_score = 0.0;
    double mean_final_score = 0.0;
    double median_initial_score = 0.0;
    double median_final_score = 0.0;
    double mean_initial_pct = 0.0;
    double mean_final_pct = 0.0;
    double median_initial_pct = 0.0;
    double median_final_pct = 0.0;
    int improved = 0;  // rows with final_score < initial_score
    int vanished = 0;  // final means skip these rows; medians count them as inf
};

double median(std::vector<double> v);

/// Scores clean_source before and after warping by `fwd`; corruption never
/// enters the metric.
EvalRow evaluate_pair(const WarpField& fwd, const SimPair& pair, const EvalOptions& opts,
                      const std::string& id = "");

EvalReport aggregate(std::vector<EvalRow> rows, const std::string& method, const std::string& loss,
                     double Z);

void to_json(nlohmann::json& j, const EvalRow& r);
void to_json(nlohmann::json& j, const EvalReport& r);

/// Aligned-column table: method, loss, score and percentage within Z.
std::string format_table(const EvalReport& r);

}  // namespace contalign
