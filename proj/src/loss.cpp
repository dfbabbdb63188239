#include "contalign/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "contalign/errors.hpp"

namespace contalign {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::chamfer: return "chamfer";
        case LossKind::reparam: return "reparam";
        case LossKind::upperbound: return "upperbound";
        case LossKind::ncc: return "ncc";
        case LossKind::mse: return "mse";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    for (auto k : {LossKind::chamfer, LossKind::reparam, LossKind::upperbound, LossKind::ncc, LossKind::mse}) {
        if (to_string(k) == s) return k;
    }
    throw InvalidConfig("unknown loss kind '" + s + "' (chamfer, reparam, upperbound, ncc, mse)");
}

std::string to_string(Normalization n) {
    switch (n) {
        case Normalization::support: return "support";
        case Normalization::as_written: return "as_written";
        case Normalization::none: return "none";
    }
    return "?";
}

Normalization normalization_from_string(const std::string& s) {
    for (auto n : {Normalization::support, Normalization::as_written, Normalization::none}) {
        if (to_string(n) == s) return n;
    }
    throw InvalidConfig("unknown normalization '" + s + "' (support, as_written, none)");
}

void LossConfig::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) throw InvalidConfig("alpha must be finite and >= 0");
    if (window < 1 || window % 2 == 0) throw InvalidConfig("window must be odd and >= 1");
    for (double l : scale_weights) {
        if (!std::isfinite(l) || l < 0.0) throw InvalidConfig("scale weights must be finite and >= 0");
    }
}

void to_json(nlohmann::json& j, const LossConfig& c) {
    j = nlohmann::json{{"alpha", c.alpha},
                       {"window", c.window},
                       {"scale_weights", c.scale_weights},
                       {"kind", to_string(c.kind)},
                       {"normalization", to_string(c.normalization)}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
    c = LossConfig{};
    for (const auto& [key, value] : j.items()) {
        if (key == "alpha") c.alpha = value.get<double>();
        else if (key == "window") c.window = value.get<int>();
        else if (key == "scale_weights") c.scale_weights = value.get<std::vector<double>>();
        else if (key == "kind") c.kind = loss_kind_from_string(value.get<std::string>());
        else if (key == "normalization") c.normalization = normalization_from_string(value.get<std::string>());
        else throw InvalidConfig("unknown loss config key '" + key + "'");
    }
    c.validate();
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
    j = nlohmann::json{{"total", b.total},         {"proximity", b.proximity},
                       {"shape", b.shape},         {"alpha", b.alpha},
                       {"window", b.window},       {"fwd_proximity", b.fwd_proximity},
                       {"bwd_proximity", b.bwd_proximity}, {"shape_src", b.shape_src},
                       {"shape_tgt", b.shape_tgt}};
}

namespace {

void require_same(int w1, int h1, int w2, int h2, const char* what) {
    if (w1 != w2 || h1 != h2) {
        throw InvalidInput(std::string(what) + ": dimension mismatch (" + std::to_string(w1) + "x" +
                           std::to_string(h1) + " vs " + std::to_string(w2) + "x" + std::to_string(h2) + ")");
    }
}

double sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Normalizer for a directed sum over `img` (mass `own`) whose fixed
/// counterpart has mass `other` under the as-written pairing.
double normalizer(Normalization n, double own, double other) {
    switch (n) {
        case Normalization::support: return own;
        case Normalization::as_written: return other;
        case Normalization::none: return 1.0;
    }
    return 1.0;
}

/// Bilinear sample with zero padding plus its gradient with respect to the
/// sample location (right-continuous at integer coordinates).
struct Sample {
    double value;
    double dx;
    double dy;
};

Sample sample_with_grad(std::span<const double> img, int w, int h, double x, double y) {
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    if (fx0 < -1.0 || fy0 < -1.0 || fx0 > w - 1.0 || fy0 > h - 1.0) return {0.0, 0.0, 0.0};
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double fx = x - fx0;
    const double fy = y - fy0;
    auto px = [&](int xx, int yy) -> double {
        return (xx >= 0 && yy >= 0 && xx < w && yy < h) ? img[static_cast<std::size_t>(yy) * w + xx] : 0.0;
    };
    const double p00 = px(x0, y0), p10 = px(x0 + 1, y0), p01 = px(x0, y0 + 1), p11 = px(x0 + 1, y0 + 1);
    Sample s;
    s.value = (1 - fx) * (1 - fy) * p00 + fx * (1 - fy) * p10 + (1 - fx) * fy * p01 + fx * fy * p11;
    s.dx = (1 - fy) * (p10 - p00) + fy * (p11 - p01);
    s.dy = (1 - fx) * (p01 - p00) + fx * (p11 - p10);
    return s;
}

/// Warps `img` at the coordinates q; values match apply_warp exactly.
void warp_at(const ContourImage& img, std::span<const Vec2> q, std::vector<double>& out,
             std::vector<Vec2>* grad) {
    out.resize(q.size());
    if (grad) grad->resize(q.size());
    const int w = img.width();
    const int h = img.height();
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (grad) {
            const Sample s = sample_with_grad(img.data(), w, h, q[i].x, q[i].y);
            out[i] = std::clamp(s.value, 0.0, 1.0);
            (*grad)[i] = {s.dx, s.dy};
        } else {
            out[i] = std::clamp(sample_bilinear(img, q[i].x, q[i].y), 0.0, 1.0);
        }
    }
}

double ncc_loss(std::span<const double> a, std::span<const double> b, std::vector<double>* adj) {
    const double n = static_cast<double>(a.size());
    const double ma = sum(a) / n;
    const double mb = sum(b) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    // Values live in [0,1]; a variance below 1e-20 is rounding noise around a constant.
    if (saa <= 1e-20 * n || sbb <= 1e-20 * n) throw DegenerateInput("ncc: zero-variance image");
    const double denom = std::sqrt(saa * sbb);
    const double r = sab / denom;
    if (adj) {
        adj->resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double da = a[i] - ma;
            const double db = b[i] - mb;
            (*adj)[i] = -(db / denom - r * da / saa);
        }
    }
    return 1.0 - r;
}

double mse_loss(std::span<const double> a, std::span<const double> b, std::vector<double>* adj) {
    const double n = static_cast<double>(a.size());
    double s = 0.0;
    if (adj) adj->resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
        if (adj) (*adj)[i] = 2.0 * d / n;
    }
    return s / n;
}

/// Directed proximity sum of img against dist, normalized; adj receives
/// d(value)/d(img_i) when requested.
double directed(std::span<const double> img, std::span<const double> dist, Normalization norm, double other_mass,
                std::vector<double>* adj) {
    const double mass = sum(img);
    if (mass <= 0.0) throw EmptyShape("warped contour has no mass inside the canvas");
    const double z = normalizer(norm, mass, other_mass);
    const double value = dot(img, dist) / z;
    if (adj) {
        adj->resize(img.size());
        for (std::size_t i = 0; i < img.size(); ++i) {
            (*adj)[i] = norm == Normalization::support ? (dist[i] - value) / z : dist[i] / z;
        }
    }
    return value;
}

/// Transposed central-difference stencil: adds d/d(img) of <g, G(img)>.
void stencil_transpose(int w, int h, int x, int y, Vec2 g, std::vector<double>& adj) {
    auto at = [&](int xx, int yy) -> double& { return adj[static_cast<std::size_t>(yy) * w + xx]; };
    if (w > 1) {
        if (x == 0) {
            at(1, y) += g.x;
            at(0, y) -= g.x;
        } else if (x == w - 1) {
            at(x, y) += g.x;
            at(x - 1, y) -= g.x;
        } else {
            at(x + 1, y) += 0.5 * g.x;
            at(x - 1, y) -= 0.5 * g.x;
        }
    }
    if (h > 1) {
        if (y == 0) {
            at(x, 1) += g.y;
            at(x, 0) -= g.y;
        } else if (y == h - 1) {
            at(x, y) += g.y;
            at(x, y - 1) -= g.y;
        } else {
            at(x, y + 1) += 0.5 * g.y;
            at(x, y - 1) -= 0.5 * g.y;
        }
    }
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + " is not finite");
}

}  // namespace

// ---------------------------------------------------------------------------

double chamfer_mdt(const ContourImage& S, const ContourImage& T, const DistanceField& dtS,
                   const DistanceField& dtT, Normalization norm) {
    require_same(S.width(), S.height(), T.width(), T.height(), "chamfer_mdt");
    require_same(S.width(), S.height(), dtS.width(), dtS.height(), "chamfer_mdt");
    require_same(S.width(), S.height(), dtT.width(), dtT.height(), "chamfer_mdt");
    const double nS = sum(S.data());
    const double nT = sum(T.data());
    if (nS <= 0.0 || nT <= 0.0) throw EmptyShape("chamfer_mdt: empty image");
    return directed(S.data(), dtT.data(), norm, nT, nullptr) + directed(T.data(), dtS.data(), norm, nS, nullptr);
}

double chamfer_reparam(const ContourImage& S, const ContourImage& T, const DistanceField& dtS,
                       const DistanceField& dtT, const WarpField& fwd, const WarpField& bwd,
                       Normalization norm) {
    LossConfig cfg;
    cfg.kind = LossKind::reparam;
    cfg.normalization = norm;
    return chamfer_upperbound(S, T, dtS, dtT, fwd, bwd, cfg).total;
}

double chamfer_shape_direct(const ContourImage& S, const ContourImage& T, double alpha) {
    require_same(S.width(), S.height(), T.width(), T.height(), "chamfer_shape_direct");
    const VectorGrid gs = unit_gradients(S);
    const VectorGrid gt = unit_gradients(T);
    std::vector<std::size_t> ps, pt;
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (S[i] > kContourThreshold) ps.push_back(i);
        if (T[i] > kContourThreshold) pt.push_back(i);
    }
    if (ps.empty() || pt.empty()) throw EmptyShape("chamfer_shape_direct: empty image");
    const int w = S.width();
    // Distance and gradient parts of each nearest pair are summed separately and
    // combined as proximity + alpha * shape, the same association the upperbound
    // uses, so mathematically tied cases compare equal in floating point too.
    struct Parts {
        double e = 0.0;
        double g = 0.0;
    };
    auto directed_sum = [&](const std::vector<std::size_t>& from, const VectorGrid& gf,
                            const std::vector<std::size_t>& to, const VectorGrid& gto) {
        Parts total;
        for (std::size_t a : from) {
            const auto ax = static_cast<std::int64_t>(a % w), ay = static_cast<std::int64_t>(a / w);
            double best = std::numeric_limits<double>::infinity();
            Parts pick;
            for (std::size_t b : to) {
                const auto dx = static_cast<std::int64_t>(b % w) - ax;
                const auto dy = static_cast<std::int64_t>(b / w) - ay;
                const double e = std::sqrt(static_cast<double>(dx * dx + dy * dy));
                double g = kMaxGradDistance;
                if (gf.valid[a] && gto.valid[b]) {
                    const Vec2 u = gf.v[a], v = gto.v[b];
                    g = std::sqrt(std::max(0.0, 1.0 - (u.x * v.x + u.y * v.y)));
                }
                const double c = e + alpha * g;
                if (c < best || (c == best && e < pick.e)) {
                    best = c;
                    pick = {e, g};
                }
            }
            total.e += pick.e;
            total.g += pick.g;
        }
        const auto n = static_cast<double>(from.size());
        return Parts{total.e / n, total.g / n};
    };
    const Parts st = directed_sum(ps, gs, pt, gt);
    const Parts ts = directed_sum(pt, gt, ps, gs);
    return (st.e + ts.e) + alpha * (st.g + ts.g);
}

LossBreakdown chamfer_upperbound(const ContourImage& S, const ContourImage& T, const DistanceField& dtS,
                                 const DistanceField& dtT, const WarpField& fwd, const WarpField& bwd,
                                 const LossConfig& cfg) {
    require_same(S.width(), S.height(), fwd.width(), fwd.height(), "chamfer_upperbound");
    require_same(S.width(), S.height(), bwd.width(), bwd.height(), "chamfer_upperbound");
    const StageObjective obj(S, T, dtS, dtT, cfg);
    return obj.breakdown(fwd.coords(), bwd.coords());
}

double baseline_loss(LossKind kind, const ContourImage& warped, const ContourImage& T) {
    require_same(warped.width(), warped.height(), T.width(), T.height(), "baseline_loss");
    if (kind == LossKind::ncc) return ncc_loss(warped.data(), T.data(), nullptr);
    if (kind == LossKind::mse) return mse_loss(warped.data(), T.data(), nullptr);
    throw InvalidConfig("baseline_loss expects ncc or mse");
}

double multiscale_loss(const std::vector<double>& per_scale, const std::vector<double>& weights) {
    if (per_scale.size() != weights.size()) {
        throw InvalidInput("multiscale_loss: " + std::to_string(per_scale.size()) + " losses but " +
                           std::to_string(weights.size()) + " weights");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < per_scale.size(); ++i) s += weights[i] * per_scale[i];
    return s;
}

// ---------------------------------------------------------------------------

StageObjective::StageObjective(ContourImage S, ContourImage T, DistanceField dtS, DistanceField dtT,
                               LossConfig cfg)
    : S_(std::move(S)), T_(std::move(T)), dtS_(std::move(dtS)), dtT_(std::move(dtT)), cfg_(std::move(cfg)) {
    cfg_.validate();
    require_same(S_.width(), S_.height(), T_.width(), T_.height(), "StageObjective");
    require_same(S_.width(), S_.height(), dtS_.width(), dtS_.height(), "StageObjective");
    require_same(S_.width(), S_.height(), dtT_.width(), dtT_.height(), "StageObjective");
    mass_S_ = sum(S_.data());
    mass_T_ = sum(T_.data());
    if (mass_S_ <= 0.0 || mass_T_ <= 0.0) throw EmptyShape("alignment needs non-empty source and target");
    tgt_grads_ = unit_gradients(T_);
}

bool StageObjective::uses_backward() const noexcept {
    return cfg_.kind == LossKind::reparam || cfg_.kind == LossKind::upperbound;
}

double StageObjective::forward_impl(std::span<const Vec2> q, std::vector<Vec2>* dq, LossBreakdown* parts) const {
    if (q.size() != S_.size()) throw InvalidInput("forward coordinates do not match the image size");
    const int w = S_.width();
    const int h = S_.height();
    std::vector<double> sw;
    std::vector<Vec2> sgrad;
    warp_at(S_, q, sw, dq ? &sgrad : nullptr);
    std::vector<double> adj;
    std::vector<double>* adj_ptr = dq ? &adj : nullptr;

    double value = 0.0;
    if (cfg_.kind == LossKind::ncc) {
        value = ncc_loss(sw, T_.data(), adj_ptr);
    } else if (cfg_.kind == LossKind::mse) {
        value = mse_loss(sw, T_.data(), adj_ptr);
    } else {
        const double prox = directed(sw, dtT_.data(), cfg_.normalization, mass_T_, adj_ptr);
        value = prox;
        if (parts) parts->fwd_proximity = prox;
        const bool shape_needed = cfg_.kind == LossKind::upperbound && (cfg_.alpha > 0.0 || parts);
        if (shape_needed) {
            const VectorGrid sg = unit_gradients(sw, w, h);
            const ShapeTermDetail src = local_shape_detail(sg, tgt_grads_, sw, T_.data(), cfg_.window);
            const ShapeTermDetail tgt = local_shape_detail(tgt_grads_, sg, T_.data(), sw, cfg_.window);
            const double shape = src.value + tgt.value;
            if (parts) {
                parts->shape_src = src.value;
                parts->shape_tgt = tgt.value;
            }
            value = prox + cfg_.alpha * shape;
            if (dq && cfg_.alpha > 0.0) {
                const double a = cfg_.alpha;
                // Support weights and the mass normalizer of the source-side term.
                for (std::size_t i = 0; i < sw.size(); ++i) {
                    if (sw[i] > 0.0) adj[i] += a * (src.per_pixel_max[i] - src.value) / src.mass;
                }
                // Adjoint on the warped source's unit gradients.
                std::vector<Vec2> U(sw.size());
                for (std::size_t i = 0; i < sw.size(); ++i) {
                    const std::int64_t k = src.argmax[i];
                    const double m = src.per_pixel_max[i];
                    if (sw[i] <= 0.0 || k < 0 || m < 1e-12) continue;
                    const Vec2 v = tgt_grads_.v[static_cast<std::size_t>(k)];
                    const double c = a * sw[i] / src.mass / (2.0 * m);
                    U[i].x -= c * v.x;
                    U[i].y -= c * v.y;
                }
                const auto t = T_.data();
                for (std::size_t y = 0; y < t.size(); ++y) {
                    const std::int64_t k = tgt.argmax[y];
                    const double m = tgt.per_pixel_max[y];
                    if (t[y] <= 0.0 || k < 0 || m < 1e-12) continue;
                    const Vec2 v = tgt_grads_.v[y];
                    const double c = a * t[y] / tgt.mass / (2.0 * m);
                    U[static_cast<std::size_t>(k)].x -= c * v.x;
                    U[static_cast<std::size_t>(k)].y -= c * v.y;
                }
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        const std::size_t k = sg.index(x, y);
                        const Vec2 g = U[k];
                        if (g.x == 0.0 && g.y == 0.0) continue;
                        const Vec2 u = sg.v[k];
                        const double ug = u.x * g.x + u.y * g.y;
                        const double inv = 1.0 / sg.magnitude[k];
                        stencil_transpose(w, h, x, y, {(g.x - u.x * ug) * inv, (g.y - u.y * ug) * inv}, adj);
                    }
                }
            }
        }
    }
    check_finite(value, "forward loss");
    if (dq) {
        dq->resize(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            (*dq)[i] = {adj[i] * sgrad[i].x, adj[i] * sgrad[i].y};
        }
    }
    return value;
}

double StageObjective::backward_impl(std::span<const Vec2> q, std::vector<Vec2>* dq) const {
    if (q.size() != T_.size()) throw InvalidInput("backward coordinates do not match the image size");
    if (!uses_backward()) {
        if (dq) dq->assign(q.size(), Vec2{});
        return 0.0;
    }
    std::vector<double> tw;
    std::vector<Vec2> tgrad;
    warp_at(T_, q, tw, dq ? &tgrad : nullptr);
    std::vector<double> adj;
    const double value = directed(tw, dtS_.data(), cfg_.normalization, mass_S_, dq ? &adj : nullptr);
    check_finite(value, "backward loss");
    if (dq) {
        dq->resize(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) (*dq)[i] = {adj[i] * tgrad[i].x, adj[i] * tgrad[i].y};
    }
    return value;
}

double StageObjective::forward_value(std::span<const Vec2> q) const { return forward_impl(q, nullptr, nullptr); }

double StageObjective::forward_value_and_grad(std::span<const Vec2> q, std::vector<Vec2>& dq) const {
    return forward_impl(q, &dq, nullptr);
}

double StageObjective::backward_value(std::span<const Vec2> q) const { return backward_impl(q, nullptr); }

double StageObjective::backward_value_and_grad(std::span<const Vec2> q, std::vector<Vec2>& dq) const {
    return backward_impl(q, &dq);
}

LossBreakdown StageObjective::breakdown(std::span<const Vec2> q_fwd, std::span<const Vec2> q_bwd) const {
    LossBreakdown b;
    b.alpha = cfg_.alpha;
    b.window = cfg_.window;
    const double f = forward_impl(q_fwd, nullptr, &b);
    if (cfg_.kind == LossKind::ncc || cfg_.kind == LossKind::mse) {
        b.total = b.proximity = f;
        return b;
    }
    b.bwd_proximity = backward_impl(q_bwd, nullptr);
    b.proximity = b.fwd_proximity + b.bwd_proximity;
    if (cfg_.kind == LossKind::upperbound) {
        b.shape = b.shape_src + b.shape_tgt;
        b.total = b.proximity + cfg_.alpha * b.shape;
    } else {
        b.shape_src = b.shape_tgt = 0.0;
        b.total = b.proximity;
    }
    return b;
}

// ---------------------------------------------------------------------------

double stage_total(const StageObjective& obj, const ParametricWarp& fwd_model, const ParametricWarp& bwd_model,
                   std::span<const double> fwd_params, std::span<const double> bwd_params) {
    std::vector<Vec2> qf, qb;
    fwd_model.evaluate(fwd_params, qf);
    double v = obj.forward_value(qf);
    if (obj.uses_backward()) {
        bwd_model.evaluate(bwd_params, qb);
        v += obj.backward_value(qb);
    }
    return v;
}

std::vector<double> loss_grad(const StageObjective& obj, const ParametricWarp& fwd_model,
                              const ParametricWarp& bwd_model, std::span<const double> fwd_params,
                              std::span<const double> bwd_params, GradientMode mode, double h) {
    for (double v : fwd_params) check_finite(v, "forward parameter");
    for (double v : bwd_params) check_finite(v, "backward parameter");
    const std::size_t nf = fwd_params.size();
    const std::size_t nb = bwd_params.size();
    std::vector<double> grad(nf + nb, 0.0);
    if (mode == GradientMode::analytic) {
        std::vector<Vec2> q, dq;
        fwd_model.evaluate(fwd_params, q);
        obj.forward_value_and_grad(q, dq);
        fwd_model.backprop(dq, std::span<double>(grad.data(), nf));
        if (obj.uses_backward()) {
            bwd_model.evaluate(bwd_params, q);
            obj.backward_value_and_grad(q, dq);
            bwd_model.backprop(dq, std::span<double>(grad.data() + nf, nb));
        }
    } else {
        if (!(h > 0.0)) throw InvalidConfig("finite-difference step must be positive");
        std::vector<double> pf(fwd_params.begin(), fwd_params.end());
        std::vector<double> pb(bwd_params.begin(), bwd_params.end());
        std::vector<Vec2> q;
        auto fwd_at = [&] {
            fwd_model.evaluate(pf, q);
            return obj.forward_value(q);
        };
        auto bwd_at = [&] {
            bwd_model.evaluate(pb, q);
            return obj.backward_value(q);
        };
        for (std::size_t i = 0; i < nf; ++i) {
            const double keep = pf[i];
            pf[i] = keep + h;
            const double up = fwd_at();
            pf[i] = keep - h;
            const double down = fwd_at();
            pf[i] = keep;
            grad[i] = (up - down) / (2.0 * h);
        }
        if (obj.uses_backward()) {
            for (std::size_t i = 0; i < nb; ++i) {
                const double keep = pb[i];
                pb[i] = keep + h;
                const double up = bwd_at();
                pb[i] = keep - h;
                const double down = bwd_at();
                pb[i] = keep;
                grad[nf + i] = (up - down) / (2.0 * h);
            }
        }
    }
    for (double g : grad) check_finite(g, "gradient component");
    return grad;
}

}  // namespace contalign
