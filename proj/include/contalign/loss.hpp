#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

#include "contalign/edt.hpp"
#include "contalign/raster.hpp"
#include "contalign/shape.hpp"
#include "contalign/warp.hpp"

namespace contalign {

enum class LossKind {
    chamfer,     // one-directional: S(fwd) against dt[T]
    reparam,     // bidirectional with dt fields held fixed
    upperbound,  // reparam + alpha * local shape term
    ncc,         // 1 - zero-mean normalized cross-correlation
    mse,         // mean squared pixel difference
};

/// How each directed Chamfer sum is normalized.
enum class Normalization {
    support,     // by the intensity sum of the image whose pixels are summed over
    as_written,  // 1/N_S with the dt[S] sum and 1/N_T with the dt[T] sum
    none,
};

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

struct LossConfig {
    double alpha = 1e-2;
    int window = 5;
    std::vector<double> scale_weights{1.0, 1.0, 1.0, 1.0, 1.0};
    LossKind kind = LossKind::upperbound;
    Normalization normalization = Normalization::support;

    /// Throws InvalidConfig on negative or non-finite weights or an even window.
    void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

struct LossBreakdown {
    double total = 0.0;
    double proximity = 0.0;
    double shape = 0.0;
    double fwd_proximity = 0.0;  // S(fwd) against dt[T]
    double bwd_proximity = 0.0;  // dt[S] against T(bwd)
    double shape_src = 0.0;      // support S(fwd), candidates from T
    double shape_tgt = 0.0;      // support T, candidates from S(fwd)
    double alpha = 0.0;
    int window = 0;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);

/// Sum of S . dt[T] plus sum of dt[S] . T, each normalized per `norm`.
/// With `support` this is the point-set symmetric Chamfer distance.
double chamfer_mdt(const ContourImage& S, const ContourImage& T, const DistanceField& dtS,
                   const DistanceField& dtT, Normalization norm = Normalization::support);

/// Bidirectional Chamfer with the distance fields held fixed: S is warped by
/// `fwd` onto dt[T] and T is warped by `bwd` onto dt[S].
double chamfer_reparam(const ContourImage& S, const ContourImage& T, const DistanceField& dtS,
                       const DistanceField& dtT, const WarpField& fwd, const WarpField& bwd,
                       Normalization norm = Normalization::support);

/// O(N_S N_T) nearest-neighbour evaluation under E(x,y) + alpha * gradient
/// distance, with pixels above 0.5 as the point sets. Test oracle.
double chamfer_shape_direct(const ContourImage& S, const ContourImage& T, double alpha);

LossBreakdown chamfer_upperbound(const ContourImage& S, const ContourImage& T, const DistanceField& dtS,
                                 const DistanceField& dtT, const WarpField& fwd, const WarpField& bwd,
                                 const LossConfig& cfg);

/// kind must be ncc or mse. Throws DegenerateInput for zero-variance ncc input.
double baseline_loss(LossKind kind, const ContourImage& warped, const ContourImage& T);

double multiscale_loss(const std::vector<double>& per_scale, const std::vector<double>& weights);

// ---------------------------------------------------------------------------
// The loss as a function of sampling coordinates. q_fwd[i] is where output
// pixel i samples S; q_bwd[i] is where it samples T. The total splits into a
// forward block (everything that depends on q_fwd) and a backward block.

class StageObjective {
public:
    StageObjective(ContourImage S, ContourImage T, DistanceField dtS, DistanceField dtT, LossConfig cfg);

    int width() const noexcept { return S_.width(); }
    int height() const noexcept { return S_.height(); }
    const LossConfig& config() const noexcept { return cfg_; }
    /// False for the one-directional kinds (chamfer, ncc, mse).
    bool uses_backward() const noexcept;

    double forward_value(std::span<const Vec2> q) const;
    /// dq receives d(forward value)/d(q_i).
    double forward_value_and_grad(std::span<const Vec2> q, std::vector<Vec2>& dq) const;
    double backward_value(std::span<const Vec2> q) const;
    double backward_value_and_grad(std::span<const Vec2> q, std::vector<Vec2>& dq) const;

    LossBreakdown breakdown(std::span<const Vec2> q_fwd, std::span<const Vec2> q_bwd) const;

private:
    double forward_impl(std::span<const Vec2> q, std::vector<Vec2>* dq, LossBreakdown* parts) const;
    double backward_impl(std::span<const Vec2> q, std::vector<Vec2>* dq) const;

    ContourImage S_;
    ContourImage T_;
    DistanceField dtS_;
    DistanceField dtT_;
    LossConfig cfg_;
    VectorGrid tgt_grads_;
    double mass_S_ = 0.0;
    double mass_T_ = 0.0;
};

enum class GradientMode { analytic, finite_difference };

/// d(total loss)/d(params) for the concatenated [forward, backward] vector.
/// The models must be bound to the incoming field coordinates. Throws
/// NumericalError when the loss or a gradient component is not finite.
std::vector<double> loss_grad(const StageObjective& obj, const ParametricWarp& fwd_model,
                              const ParametricWarp& bwd_model, std::span<const double> fwd_params,
                              std::span<const double> bwd_params, GradientMode mode = GradientMode::analytic,
                              double h = 1e-4);

/// Forward plus backward value at the given parameters.
double stage_total(const StageObjective& obj, const ParametricWarp& fwd_model, const ParametricWarp& bwd_model,
                   std::span<const double> fwd_params, std::span<const double> bwd_params);

}  // namespace contalign
