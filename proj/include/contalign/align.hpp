#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "contalign/edt.hpp"
#include "contalign/errors.hpp"
#include "contalign/loss.hpp"
#include "contalign/raster.hpp"
#include "contalign/warp.hpp"

namespace contalign {

struct StageSpec {
    int level = 0;  // pyramid level, 0 = full resolution
    Family family = Family::affine;
    int grid = 0;   // TPS lattice size g (g x g control points)
    int max_iters = 200;
    double step = 0.0;  // initial step; 0 picks the family default
    double tol = 1e-5;  // stop when the relative improvement falls below this
    int stride = 0;     // TPS evaluation stride; 0 picks max(1, width / 64)

    double initial_step() const noexcept;
    int eval_stride(int width) const noexcept;
    /// "affine@4", "tps8@1", ...
    std::string label() const;
    static StageSpec parse(const std::string& label);
};

void to_json(nlohmann::json& j, const StageSpec& s);
void from_json(const nlohmann::json& j, StageSpec& s);

/// affine at the coarsest level, then TPS grids 2, 4, 8, 16 toward level 0.
/// Shorter schedules keep the finest stages.
std::vector<StageSpec> default_schedule(int levels = 5);

/// Throws InvalidConfig unless the first stage is affine, levels never
/// increase, and TPS grids never shrink toward finer levels.
void validate_schedule(const std::vector<StageSpec>& schedule);

struct StageTrace {
    std::string label;
    int width = 0;
    int height = 0;
    std::vector<double> fwd_values;  // accepted forward-block values, first = initial
    std::vector<double> bwd_values;
    double initial_loss = 0.0;  // forward + backward block at the incoming fields
    double final_loss = 0.0;
    int fwd_iterations = 0;
    int bwd_iterations = 0;
    std::string fwd_stop;
    std::string bwd_stop;
    bool bwd_seeded_by_inverse = false;
    std::vector<double> fwd_params;
    std::vector<double> bwd_params;
};

void to_json(nlohmann::json& j, const StageTrace& t);

struct StageResult {
    WarpField fwd;
    WarpField bwd;
    StageTrace trace;
};

/// Raised when a stage produces a non-finite loss; carries the trace so far.
struct OptimizationFailure : Error {
    OptimizationFailure(const std::string& what, StageTrace t)
        : Error("optimization-failure", what), trace(std::move(t)) {}
    StageTrace trace;
};

/// Optimizes one stage: new transforms are applied after the incoming fields
/// (combined(p) = new(incoming(p))), starting from identity increments.
StageResult optimize_stage(const StageSpec& spec, const ContourImage& S, const ContourImage& T,
                           const DistanceField& dtS, const DistanceField& dtT, const WarpField& init_fwd,
                           const WarpField& init_bwd, const LossConfig& cfg);

struct AlignOptions {
    /// Re-run the finest TPS family once more at level 0 after the schedule.
    bool joint_finetune = false;
};

struct AlignmentResult {
    WarpField fwd;  // full resolution, S -> T (samples S)
    WarpField bwd;  // full resolution, T -> S (samples T)
    std::vector<StageTrace> stages;
    LossBreakdown final_breakdown;       // at full resolution
    std::vector<double> per_stage_loss;  // each stage's fields evaluated at full resolution
    double multiscale_loss = 0.0;        // sum of lambda_i * per_stage_loss[i]
    bool complete = false;
};

void to_json(nlohmann::json& j, const AlignmentResult& r);

struct AlignmentFailure : Error {
    AlignmentFailure(const std::string& what, AlignmentResult partial_result)
        : Error("alignment-failure", what), partial(std::move(partial_result)) {}
    AlignmentResult partial;
};

/// Progressive coarse-to-fine alignment of S onto T.
AlignmentResult align(const ContourImage& S, const ContourImage& T, const std::vector<StageSpec>& schedule,
                      const LossConfig& cfg, const AlignOptions& options = {});

}  // namespace contalign
