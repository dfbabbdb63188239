#include "contalign/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>

namespace contalign {

double StageSpec::initial_step() const noexcept {
    if (step > 0.0) return step;
    return family == Family::affine ? 1e-2 : 1e-1;
}

int StageSpec::eval_stride(int width) const noexcept {
    if (stride > 0) return stride;
    return std::max(1, width / 64);
}

std::string StageSpec::label() const { return family_name(family, grid) + "@" + std::to_string(level); }

StageSpec StageSpec::parse(const std::string& label) {
    static const std::regex re(R"((affine|tps(\d+)(?:x\d+)?)@(\d+))");
    std::smatch m;
    if (!std::regex_match(label, m, re)) {
        throw InvalidConfig("bad stage '" + label + "' (expected affine@L or tpsG@L)");
    }
    StageSpec s;
    s.level = std::stoi(m[3].str());
    if (m[1].str() == "affine") {
        s.family = Family::affine;
    } else {
        s.family = Family::tps;
        s.grid = std::stoi(m[2].str());
        if (s.grid < 2) throw InvalidConfig("TPS stage needs a grid of at least 2");
    }
    return s;
}

void to_json(nlohmann::json& j, const StageSpec& s) {
    j = nlohmann::json{{"stage", s.label()},
                       {"max_iters", s.max_iters},
                       {"step", s.initial_step()},
                       {"tol", s.tol},
                       {"stride", s.stride}};
}

void from_json(const nlohmann::json& j, StageSpec& s) {
    if (j.is_string()) {
        s = StageSpec::parse(j.get<std::string>());
        return;
    }
    s = StageSpec::parse(j.at("stage").get<std::string>());
    for (const auto& [key, value] : j.items()) {
        if (key == "stage") continue;
        if (key == "max_iters") s.max_iters = value.get<int>();
        else if (key == "step") s.step = value.get<double>();
        else if (key == "tol") s.tol = value.get<double>();
        else if (key == "stride") s.stride = value.get<int>();
        else throw InvalidConfig("unknown stage key '" + key + "'");
    }
    if (s.max_iters < 0) throw InvalidConfig("max_iters must be >= 0");
    if (s.stride < 0) throw InvalidConfig("stride must be >= 0");
    if (!(s.step >= 0.0) || !(s.tol >= 0.0)) throw InvalidConfig("step and tol must be >= 0");
}

std::vector<StageSpec> default_schedule(int levels) {
    if (levels < 1) throw InvalidConfig("schedule needs at least one level");
    std::vector<StageSpec> out;
    out.push_back(StageSpec{levels - 1, Family::affine, 0});
    for (int l = levels - 2; l >= 0; --l) out.push_back(StageSpec{l, Family::tps, 1 << (levels - 1 - l)});
    return out;
}

void validate_schedule(const std::vector<StageSpec>& schedule) {
    if (schedule.empty()) throw InvalidConfig("schedule is empty");
    if (schedule.front().family != Family::affine) throw InvalidConfig("the coarsest stage must be affine");
    int grid = 0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const StageSpec& s = schedule[i];
        if (s.level < 0) throw InvalidConfig("stage level must be >= 0");
        if (i > 0 && s.level > schedule[i - 1].level) {
            throw InvalidConfig("stage levels must not increase (" + schedule[i - 1].label() + " then " +
                                s.label() + ")");
        }
        if (s.family == Family::tps) {
            if (s.grid < 2) throw InvalidConfig("TPS stage needs a grid of at least 2");
            if (s.grid < grid) throw InvalidConfig("TPS grids must not shrink toward finer levels");
            grid = s.grid;
        }
        if (s.max_iters < 0) throw InvalidConfig("max_iters must be >= 0");
    }
}

void to_json(nlohmann::json& j, const StageTrace& t) {
    j = nlohmann::json{{"stage", t.label},
                       {"width", t.width},
                       {"height", t.height},
                       {"initial_loss", t.initial_loss},
                       {"final_loss", t.final_loss},
                       {"fwd_iterations", t.fwd_iterations},
                       {"bwd_iterations", t.bwd_iterations},
                       {"fwd_stop", t.fwd_stop},
                       {"bwd_stop", t.bwd_stop},
                       {"bwd_seeded_by_inverse", t.bwd_seeded_by_inverse},
                       {"fwd_values", t.fwd_values},
                       {"bwd_values", t.bwd_values},
                       {"fwd_params", t.fwd_params},
                       {"bwd_params", t.bwd_params}};
}

void to_json(nlohmann::json& j, const AlignmentResult& r) {
    j = nlohmann::json{{"complete", r.complete},
                       {"final", r.final_breakdown},
                       {"per_stage_loss", r.per_stage_loss},
                       {"multiscale_loss", r.multiscale_loss},
                       {"stages", r.stages}};
}

namespace {

constexpr int kMaxHalvings = 20;

struct BlockOutcome {
    std::vector<double> params;
    std::vector<Vec2> q;
    std::vector<double> values;
    int iterations = 0;
    std::string stop;
};

using ValueFn = double (StageObjective::*)(std::span<const Vec2>) const;
using GradFn = double (StageObjective::*)(std::span<const Vec2>, std::vector<Vec2>&) const;

/// Trial value; a trial that empties the warped support counts as +inf.
double trial_value(const StageObjective& obj, ValueFn fn, std::span<const Vec2> q) {
    try {
        return (obj.*fn)(q);
    } catch (const EmptyShape&) {
        return std::numeric_limits<double>::infinity();
    } catch (const DegenerateInput&) {
        return std::numeric_limits<double>::infinity();
    }
}

/// Backtracking gradient descent on one block. Every accepted iterate
/// strictly lowers the value.
BlockOutcome descend(const StageObjective& obj, const ParametricWarp& model, ValueFn value, GradFn grad,
                     std::vector<double> params, const StageSpec& spec) {
    BlockOutcome out;
    model.evaluate(params, out.q);
    double f = (obj.*value)(out.q);
    out.values.push_back(f);
    double eta = spec.initial_step();
    std::vector<Vec2> dq, dir_q, trial(out.q.size());
    std::vector<double> g(params.size());
    out.stop = "max_iters";
    for (int it = 0; it < spec.max_iters; ++it) {
        (obj.*grad)(out.q, dq);
        std::fill(g.begin(), g.end(), 0.0);
        model.backprop(dq, g);
        std::vector<double> dir = model.precondition(g);
        double norm = 0.0;
        for (double& d : dir) {
            d = -d;
            norm += d * d;
        }
        if (!std::isfinite(norm)) throw NumericalError("non-finite gradient");
        if (norm == 0.0) {
            out.stop = "zero_gradient";
            break;
        }
        model.evaluate(dir, dir_q);
        bool accepted = false;
        double f_new = f;
        for (int k = 0; k <= kMaxHalvings; ++k) {
            for (std::size_t i = 0; i < trial.size(); ++i) {
                trial[i] = {out.q[i].x + eta * dir_q[i].x, out.q[i].y + eta * dir_q[i].y};
            }
            f_new = trial_value(obj, value, trial);
            if (std::isnan(f_new)) throw NumericalError("loss became NaN");
            if (f_new < f) {
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) {
            out.stop = "line_search";
            break;
        }
        for (std::size_t i = 0; i < params.size(); ++i) params[i] += eta * dir[i];
        out.q.swap(trial);
        const double rel = (f - f_new) / std::max(std::abs(f), 1e-300);
        f = f_new;
        out.values.push_back(f);
        out.iterations = it + 1;
        eta *= 2.0;
        if (rel < spec.tol) {
            out.stop = "converged";
            break;
        }
    }
    out.params = std::move(params);
    return out;
}

}  // namespace

StageResult optimize_stage(const StageSpec& spec, const ContourImage& S, const ContourImage& T,
                           const DistanceField& dtS, const DistanceField& dtT, const WarpField& init_fwd,
                           const WarpField& init_bwd, const LossConfig& cfg) {
    const int w = S.width();
    const int h = S.height();
    if (init_fwd.width() != w || init_fwd.height() != h || init_bwd.width() != w || init_bwd.height() != h) {
        throw InvalidInput("optimize_stage: incoming fields do not match the level size");
    }
    StageTrace trace;
    trace.label = spec.label();
    trace.width = w;
    trace.height = h;

    const StageObjective obj(S, T, dtS, dtT, cfg);
    auto make_model = [&] {
        return spec.family == Family::affine ? ParametricWarp::affine(w, h)
                                             : ParametricWarp::tps(spec.grid, w, h);
    };
    ParametricWarp fwd_model = make_model();
    fwd_model.bind(init_fwd.coords(), spec.eval_stride(w));

    try {
        BlockOutcome fo = descend(obj, fwd_model, &StageObjective::forward_value,
                                  &StageObjective::forward_value_and_grad, fwd_model.identity_params(), spec);
        trace.fwd_values = fo.values;
        trace.fwd_iterations = fo.iterations;
        trace.fwd_stop = fo.stop;
        trace.fwd_params = fo.params;

        WarpField bwd = init_bwd;
        if (obj.uses_backward()) {
            ParametricWarp bwd_model = fwd_model;
            bwd_model.bind(init_bwd.coords(), spec.eval_stride(w));
            std::vector<double> seed = bwd_model.identity_params();
            if (spec.family == Family::affine) {
                try {
                    const AffineParams inv = affine_inverse(fwd_model.affine_part(fo.params));
                    std::vector<double> cand(inv.p.begin(), inv.p.end());
                    std::vector<Vec2> q0, q1;
                    bwd_model.evaluate(seed, q0);
                    bwd_model.evaluate(cand, q1);
                    if (trial_value(obj, &StageObjective::backward_value, q1) <
                        obj.backward_value(q0)) {
                        seed = cand;
                        trace.bwd_seeded_by_inverse = true;
                    }
                } catch (const SingularTransform&) {
                }
            }
            BlockOutcome bo = descend(obj, bwd_model, &StageObjective::backward_value,
                                      &StageObjective::backward_value_and_grad, seed, spec);
            trace.bwd_values = bo.values;
            trace.bwd_iterations = bo.iterations;
            trace.bwd_stop = bo.stop;
            trace.bwd_params = bo.params;
            bwd = WarpField(w, h, std::move(bo.q));
        }
        trace.initial_loss = trace.fwd_values.front() + (obj.uses_backward() ? obj.backward_value(init_bwd.coords()) : 0.0);
        trace.final_loss = trace.fwd_values.back() + (trace.bwd_values.empty() ? 0.0 : trace.bwd_values.back());
        return StageResult{WarpField(w, h, std::move(fo.q)), std::move(bwd), std::move(trace)};
    } catch (const NumericalError& e) {
        throw OptimizationFailure(spec.label() + ": " + e.what(), trace);
    }
}

namespace {

WarpField to_size(WarpField f, int w, int h) {
    while (f.width() < w || f.height() < h) f = upsample_field(f);
    return fit_field(f, w, h);
}

}  // namespace

AlignmentResult align(const ContourImage& S, const ContourImage& T, const std::vector<StageSpec>& schedule,
                      const LossConfig& cfg, const AlignOptions& options) {
    cfg.validate();
    validate_schedule(schedule);
    if (!S.same_shape(T)) {
        throw InvalidInput("align: dimension mismatch (" + std::to_string(S.width()) + "x" +
                           std::to_string(S.height()) + " vs " + std::to_string(T.width()) + "x" +
                           std::to_string(T.height()) + ")");
    }
    std::vector<StageSpec> stages = schedule;
    if (options.joint_finetune) {
        StageSpec extra = stages.back();
        extra.level = 0;
        stages.push_back(extra);
    }
    if (cfg.scale_weights.size() != stages.size()) {
        throw InvalidConfig("scale_weights has " + std::to_string(cfg.scale_weights.size()) +
                            " entries but the schedule has " + std::to_string(stages.size()) + " stages");
    }
    const int levels = stages.front().level + 1;
    if (levels > max_pyramid_levels(S.width(), S.height())) {
        throw InvalidConfig("schedule needs " + std::to_string(levels) + " pyramid levels but a " +
                            std::to_string(S.width()) + "x" + std::to_string(S.height()) +
                            " image supports at most " + std::to_string(max_pyramid_levels(S.width(), S.height())));
    }
    const Pyramid ps = build_pyramid(S, levels);
    const Pyramid pt = build_pyramid(T, levels);
    std::vector<DistanceField> dts, dtt;
    for (int l = 0; l < levels; ++l) {
        dts.push_back(edt(ps.levels[l]));
        dtt.push_back(edt(pt.levels[l]));
    }
    const StageObjective full(S, T, dts[0], dtt[0], cfg);

    AlignmentResult result;
    const ContourImage& c0 = ps.levels[stages.front().level];
    WarpField fwd = WarpField::identity(c0.width(), c0.height());
    WarpField bwd = fwd;
    auto finish = [&](bool complete) {
        result.fwd = to_size(fwd, S.width(), S.height());
        result.bwd = to_size(bwd, S.width(), S.height());
        result.final_breakdown = full.breakdown(result.fwd.coords(), result.bwd.coords());
        std::vector<double> lambda(cfg.scale_weights.begin(),
                                   cfg.scale_weights.begin() + static_cast<long>(result.per_stage_loss.size()));
        result.multiscale_loss = multiscale_loss(result.per_stage_loss, lambda);
        result.complete = complete;
    };
    for (const StageSpec& spec : stages) {
        const ContourImage& sl = ps.levels[spec.level];
        const ContourImage& tl = pt.levels[spec.level];
        fwd = to_size(fwd, sl.width(), sl.height());
        bwd = to_size(bwd, sl.width(), sl.height());
        try {
            StageResult r = optimize_stage(spec, sl, tl, dts[spec.level], dtt[spec.level], fwd, bwd, cfg);
            fwd = std::move(r.fwd);
            bwd = std::move(r.bwd);
            result.stages.push_back(std::move(r.trace));
            const WarpField ff = to_size(fwd, S.width(), S.height());
            const WarpField fb = to_size(bwd, S.width(), S.height());
            result.per_stage_loss.push_back(full.breakdown(ff.coords(), fb.coords()).total);
        } catch (const OptimizationFailure& e) {
            result.stages.push_back(e.trace);
            finish(false);
            throw AlignmentFailure(e.what(), std::move(result));
        }
    }
    finish(true);
    return result;
}

}  // namespace contalign
