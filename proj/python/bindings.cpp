#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mt3d/evalbench.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/mip.hpp"
#include "mt3d/pointops.hpp"
#include "mt3d/selfcheck.hpp"
#include "mt3d/ssm.hpp"
#include "mt3d/synthgen.hpp"
#include "mt3d/tracker.hpp"
#include "mt3d/weights.hpp"

namespace py = pybind11;
using namespace mt3d;

namespace {

Cloud cloud_from_array(const Mat& pts) {
    if (pts.cols() != 3 && pts.cols() != 4)
        throw Error(ErrorKind::ShapeMismatch, "points must be N x 3 or N x 4");
    Cloud c;
    c.points.reserve(static_cast<std::size_t>(pts.rows()));
    for (int i = 0; i < pts.rows(); ++i) {
        c.points.push_back({pts(i, 0), pts(i, 1), pts(i, 2)});
        if (pts.cols() == 4) c.intensity.push_back(pts(i, 3));
    }
    return c;
}

Mat cloud_to_array(const Cloud& c) {
    Mat out(static_cast<int>(c.points.size()), 4);
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        out(static_cast<int>(i), 0) = c.points[i].x;
        out(static_cast<int>(i), 1) = c.points[i].y;
        out(static_cast<int>(i), 2) = c.points[i].z;
        out(static_cast<int>(i), 3) = c.has_intensity() ? c.intensity[i] : 0.0;
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_mt3d, m) {
    m.doc() = "LiDAR single-object tracking core (point ops, SSM scans, "
              "propagation, metrics)";

    py::register_exception<Error>(m, "Mt3dError");

    py::class_<Config>(m, "Config")
        .def(py::init<>())
        .def_readwrite("num_tokens", &Config::num_tokens)
        .def_readwrite("channels", &Config::channels)
        .def_readwrite("capacity", &Config::capacity)
        .def_readwrite("neighbors", &Config::neighbors)
        .def_readwrite("ssm_layers", &Config::ssm_layers)
        .def_readwrite("state_dim", &Config::state_dim)
        .def_readwrite("search_scale", &Config::search_scale)
        .def_readwrite("search_margin", &Config::search_margin)
        .def_readwrite("precision_cap", &Config::precision_cap)
        .def_readwrite("use_gfem", &Config::use_gfem)
        .def_readwrite("use_mask_fusion", &Config::use_mask_fusion)
        .def("validate", &Config::validate);

    py::class_<Box7>(m, "Box7")
        .def(py::init<>())
        .def(py::init<double, double, double, double, double, double, double>(),
             py::arg("cx"), py::arg("cy"), py::arg("cz"), py::arg("w"), py::arg("l"),
             py::arg("h"), py::arg("theta"))
        .def_readwrite("cx", &Box7::cx)
        .def_readwrite("cy", &Box7::cy)
        .def_readwrite("cz", &Box7::cz)
        .def_readwrite("w", &Box7::w)
        .def_readwrite("l", &Box7::l)
        .def_readwrite("h", &Box7::h)
        .def_readwrite("theta", &Box7::theta)
        .def("volume", &Box7::volume)
        .def("__repr__", [](const Box7& b) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "Box7(cx=%g, cy=%g, cz=%g, w=%g, l=%g, h=%g, theta=%g)", b.cx,
                          b.cy, b.cz, b.w, b.l, b.h, b.theta);
            return std::string(buf);
        });

    m.def("iou3d", &iou3d, py::arg("a"), py::arg("b"));
    m.def("center_error", &center_error, py::arg("a"), py::arg("b"));
    m.def("normalize_angle", &normalize_angle, py::arg("theta"));

    m.def(
        "fps",
        [](const Mat& points, int count) {
            const Cloud c = cloud_from_array(points);
            return fps(c, count, fps_default_start(c));
        },
        py::arg("points"), py::arg("count"),
        "Greedy farthest point sampling; returns selection order.");

    m.def(
        "knn",
        [](const Mat& queries, const Mat& refs, int k) {
            return Eigen::MatrixXi(knn(queries, refs, k).idx);
        },
        py::arg("queries"), py::arg("refs"), py::arg("k"));

    m.def(
        "zoh_discretize",
        [](const Vec& a, const Vec& b, double delta) {
            LTISystem sys;
            sys.a = a;
            sys.b = b;
            sys.c = RowVec::Zero(a.size());
            sys.delta = delta;
            const DiscreteLTI d = zoh_discretize(sys);
            return py::make_tuple(d.abar, d.bbar);
        },
        py::arg("a"), py::arg("b"), py::arg("delta"));

    m.def("success_auc", &success_auc, py::arg("ious"));
    m.def("precision_auc", &precision_auc, py::arg("errors"), py::arg("cap") = 2.0);
    m.def("flops_mip", &flops_mip, py::arg("cfg"), py::arg("n_points"));
    m.def("flops_attention_baseline", &flops_attention_baseline, py::arg("cfg"), py::arg("n"));

    m.def(
        "generate_preset",
        [](const std::string& name) {
            const Tracklet t = generate(preset_by_name(name));
            py::list frames;
            for (const Cloud& c : t.frames) frames.append(cloud_to_array(c));
            py::list boxes;
            for (const Box7& b : t.gt) boxes.append(b);
            py::dict out;
            out["class"] = t.klass;
            out["frames"] = frames;
            out["boxes"] = boxes;
            return out;
        },
        py::arg("name"));

    m.def(
        "track_preset",
        [](const std::string& name, int interval, std::uint64_t seed, bool gt_replay) {
            const Config cfg;
            const Tracklet t = subsample_htv(generate(preset_by_name(name)), interval);
            const PipelineWeights w = init_weights(cfg, seed);
            const std::vector<FrameEval> evals = run_tracklet(t, cfg, w, gt_replay);
            std::vector<double> ious, errs;
            py::list boxes;
            for (std::size_t i = 0; i < evals.size(); ++i) {
                boxes.append(evals[i].box);
                if (i > 0) {
                    ious.push_back(evals[i].iou);
                    errs.push_back(evals[i].center_error);
                }
            }
            py::dict out;
            out["boxes"] = boxes;
            out["iou"] = ious;
            out["center_error"] = errs;
            out["success"] = success_auc(ious);
            out["precision"] = precision_auc(errs, cfg.precision_cap);
            return out;
        },
        py::arg("name"), py::arg("interval") = 1, py::arg("seed") = 0,
        py::arg("gt_replay") = false);

    m.def(
        "init_weights_file",
        [](const std::string& path, std::uint64_t seed) {
            const Config cfg;
            save_weights(path, cfg, init_weights(cfg, seed));
        },
        py::arg("path"), py::arg("seed") = 0);

    m.def("selfcheck", []() {
        py::list out;
        for (const CheckResult& r : run_selfcheck(false))
            out.append(py::make_tuple(r.name, r.pass, r.detail));
        return out;
    });
}
