#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include <array>
#include <optional>

#include "contalign/align.hpp"
#include "contalign/edt.hpp"
#include "contalign/errors.hpp"
#include "contalign/eval.hpp"
#include "contalign/loss.hpp"
#include "contalign/simulate.hpp"
#include "contalign/warp.hpp"

namespace py = pybind11;
using namespace contalign;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ContourImage to_image(const Array& a) {
    if (a.ndim() != 2) throw InvalidInput("expected a 2-D array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return ContourImage(w, h, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_values(std::span<const double> v, int w, int h) {
    Array out({h, w});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array from_image(const ContourImage& img) { return from_values(img.data(), img.width(), img.height()); }

// Fields travel as (h, w, 2) arrays of sampling coordinates (x, y).
WarpField to_field(const Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 2) throw InvalidInput("expected an (h, w, 2) array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    std::vector<Vec2> c(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = {a.data()[2 * i], a.data()[2 * i + 1]};
    return WarpField(w, h, std::move(c));
}

Array from_field(const WarpField& f) {
    Array out({f.height(), f.width(), 2});
    double* d = out.mutable_data();
    for (std::size_t i = 0; i < f.size(); ++i) {
        d[2 * i] = f[i].x;
        d[2 * i + 1] = f[i].y;
    }
    return out;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

LossConfig loss_config(double alpha, int window, const std::string& kind, const std::string& normalization,
                       const std::vector<double>& scale_weights) {
    LossConfig c;
    c.alpha = alpha;
    c.window = window;
    c.kind = loss_kind_from_string(kind);
    c.normalization = normalization_from_string(normalization);
    if (!scale_weights.empty()) c.scale_weights = scale_weights;
    c.validate();
    return c;
}

}  // namespace

PYBIND11_MODULE(_contalign, m) {
    m.doc() = "Contour alignment with Chamfer upper-bound losses";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
    error.call_once_and_store_result([&]() { return py::exception<Error>(m, "Error", PyExc_RuntimeError); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const py::object& cls = error.get_stored();
            py::object exc = cls(py::str(e.what()));
            exc.attr("kind") = e.kind();
            PyErr_SetObject(cls.ptr(), exc.ptr());
        }
    });

    m.def("edt", [](const Array& img) {
        const DistanceField d = edt(to_image(img));
        return from_values(d.data(), d.width(), d.height());
    }, py::arg("image"), "Exact Euclidean distance to the nearest pixel above 0.5.");

    m.def("chamfer_mdt", [](const Array& s, const Array& t, const std::string& normalization) {
        const ContourImage S = to_image(s), T = to_image(t);
        return chamfer_mdt(S, T, edt(S), edt(T), normalization_from_string(normalization));
    }, py::arg("source"), py::arg("target"), py::arg("normalization") = "support");

    m.def("chamfer_shape_direct", [](const Array& s, const Array& t, double alpha) {
        return chamfer_shape_direct(to_image(s), to_image(t), alpha);
    }, py::arg("source"), py::arg("target"), py::arg("alpha") = 1e-2);

    m.def("chamfer_upperbound",
          [](const Array& s, const Array& t, std::optional<Array> fwd, std::optional<Array> bwd, double alpha,
             int window, const std::string& normalization) {
              const ContourImage S = to_image(s), T = to_image(t);
              const WarpField id = WarpField::identity(S.width(), S.height());
              const LossConfig cfg = loss_config(alpha, window, "upperbound", normalization, {});
              const LossBreakdown b = chamfer_upperbound(S, T, edt(S), edt(T), fwd ? to_field(*fwd) : id,
                                                         bwd ? to_field(*bwd) : id, cfg);
              return to_python(nlohmann::json(b));
          },
          py::arg("source"), py::arg("target"), py::arg("fwd") = py::none(), py::arg("bwd") = py::none(),
          py::arg("alpha") = 1e-2, py::arg("window") = 5, py::arg("normalization") = "support");

    m.def("affine_field", [](const std::array<double, 6>& p, int width, int height) {
        return from_field(affine_field(AffineParams{p}, width, height));
    }, py::arg("params"), py::arg("width"), py::arg("height"));

    m.def("apply_warp", [](const Array& img, const Array& field) {
        return from_image(apply_warp(to_image(img), to_field(field)));
    }, py::arg("image"), py::arg("field"));

    m.def("compose", [](const Array& late, const Array& early) {
        return from_field(compose(to_field(late), to_field(early)));
    }, py::arg("late"), py::arg("early"));

    m.def("random_contour", [](std::uint64_t seed, int width, int height) {
        return from_image(random_contour(seed, width, height));
    }, py::arg("seed"), py::arg("width") = 128, py::arg("height") = 128);

    m.def("make_pair",
          [](const Array& base, std::uint64_t seed, double magnitude, double density, int occlusions_min,
             int occlusions_max) {
              PairSpec spec;
              const ContourImage b = to_image(base);
              spec.seed = seed;
              spec.magnitude = magnitude;
              spec.density = density;
              spec.occlusions_min = occlusions_min;
              spec.occlusions_max = occlusions_max;
              spec.width = b.width();
              spec.height = b.height();
              const SimPair p = make_pair(b, spec);
              py::dict d;
              d["source"] = from_image(p.source);
              d["target"] = from_image(p.target);
              d["clean_source"] = from_image(p.clean_source);
              d["gt_field"] = from_field(p.gt_field());
              return d;
          },
          py::arg("base"), py::arg("seed"), py::arg("magnitude") = kCalibratedMagnitude, py::arg("density") = 0.05,
          py::arg("occlusions_min") = 1, py::arg("occlusions_max") = 3);

    m.def("align",
          [](const Array& s, const Array& t, std::optional<std::vector<std::string>> schedule, double alpha,
             int window, const std::string& loss, const std::string& normalization,
             const std::vector<double>& scale_weights, bool joint_finetune) {
              const ContourImage S = to_image(s), T = to_image(t);
              std::vector<StageSpec> stages;
              if (schedule) {
                  for (const std::string& label : *schedule) stages.push_back(StageSpec::parse(label));
              } else {
                  stages = default_schedule(std::min(5, max_pyramid_levels(S.width(), S.height())));
              }
              LossConfig cfg = loss_config(alpha, window, loss, normalization, scale_weights);
              if (scale_weights.empty()) cfg.scale_weights.assign(stages.size(), 1.0);
              AlignmentResult r;
              {
                  py::gil_scoped_release release;
                  r = align(S, T, stages, cfg, AlignOptions{joint_finetune});
              }
              py::dict d = to_python(nlohmann::json(r));
              d["fwd"] = from_field(r.fwd);
              d["bwd"] = from_field(r.bwd);
              return d;
          },
          py::arg("source"), py::arg("target"), py::arg("schedule") = py::none(), py::arg("alpha") = 1e-2,
          py::arg("window") = 5, py::arg("loss") = "upperbound", py::arg("normalization") = "support",
          py::arg("scale_weights") = std::vector<double>{}, py::arg("joint_finetune") = false,
          "Coarse-to-fine alignment of source onto target; fwd samples the source.");

    m.def("asym_chamfer", [](const Array& s, const Array& t) { return asym_chamfer(to_image(s), to_image(t)); },
          py::arg("aligned"), py::arg("target"));
    m.def("pct_within", [](const Array& s, const Array& t, double z) { return pct_within(to_image(s), to_image(t), z); },
          py::arg("aligned"), py::arg("target"), py::arg("Z") = 5.0);
}
