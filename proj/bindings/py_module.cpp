#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gshs/core.hpp"
#include "gshs/hierarchy.hpp"
#include "gshs/io.hpp"
#include "gshs/losses.hpp"
#include "gshs/raster.hpp"
#include "gshs/train.hpp"

namespace py = pybind11;
using namespace gshs;

namespace {

py::array_t<double> image_to_array(const Image& img) {
    py::array_t<double> out({img.height, img.width, 3});
    std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
    return out;
}

Image array_to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3) {
        throw ShapeMismatch("expected an (H, W, 3) array");
    }
    Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + arr.size(), img.rgb.begin());
    return img;
}

template <typename T>
py::array_t<double> stack_rows(const std::vector<T>& rows) {
    const py::ssize_t n = static_cast<py::ssize_t>(rows.size());
    const py::ssize_t d = n == 0 ? 0 : static_cast<py::ssize_t>(rows[0].size());
    py::array_t<double> out({n, d});
    double* ptr = out.mutable_data();
    for (const auto& r : rows)
        for (py::ssize_t k = 0; k < d; ++k) *ptr++ = r(k);
    return out;
}

py::dict set_to_dict(const GaussianSet& set) {
    py::dict d;
    d["mu"] = stack_rows(set.mu);
    d["log_scale"] = stack_rows(set.log_scale);
    d["quat"] = stack_rows(set.quat);
    d["opacity_logit"] = py::array_t<double>(static_cast<py::ssize_t>(set.opacity_logit.size()),
                                             set.opacity_logit.data());
    d["color_logit"] = stack_rows(set.color_logit);
    return d;
}

GaussianSet dict_to_set(const py::dict& d) {
    const auto mu = d["mu"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    const auto ls = d["log_scale"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    const auto quat = d["quat"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    const auto op = d["opacity_logit"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    const auto col = d["color_logit"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    const py::ssize_t n = mu.shape(0);
    if (ls.shape(0) != n || quat.shape(0) != n || op.shape(0) != n || col.shape(0) != n ||
        mu.shape(1) != 3 || ls.shape(1) != 3 || quat.shape(1) != 4 || col.shape(1) != 3) {
        throw ShapeMismatch("gaussian set arrays have inconsistent shapes");
    }
    GaussianSet set;
    set.resize(static_cast<std::size_t>(n));
    for (py::ssize_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) set.mu[i](k) = mu.at(i, k);
        for (int k = 0; k < 3; ++k) set.log_scale[i](k) = ls.at(i, k);
        for (int k = 0; k < 4; ++k) set.quat[i](k) = quat.at(i, k);
        set.opacity_logit[i] = op.at(i);
        for (int k = 0; k < 3; ++k) set.color_logit[i](k) = col.at(i, k);
    }
    return set;
}

std::vector<Vec3> array_to_points(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2 || arr.shape(1) != 3) throw ShapeMismatch("expected an (N, 3) array");
    std::vector<Vec3> pts(static_cast<std::size_t>(arr.shape(0)));
    for (py::ssize_t i = 0; i < arr.shape(0); ++i)
        pts[i] = Vec3(arr.at(i, 0), arr.at(i, 1), arr.at(i, 2));
    return pts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "hierarchical Gaussian splatting scenes: densify parameterization, "
              "differentiable tile rasterizer, regularization losses";

    py::register_exception<Error>(m, "GshsError");

    py::class_<HierarchyConfig>(m, "HierarchyConfig")
        .def(py::init(&HierarchyConfig::make), py::arg("levels"), py::arg("base_count"),
             py::arg("upsample_ratio"), py::arg("image_width"), py::arg("image_height"))
        .def_readonly("levels", &HierarchyConfig::levels)
        .def_readonly("base_count", &HierarchyConfig::base_count)
        .def_readonly("upsample_ratio", &HierarchyConfig::upsample_ratio)
        .def_readonly("delta_s", &HierarchyConfig::delta_s)
        .def("level_count", &HierarchyConfig::level_count)
        .def("total_count", &HierarchyConfig::total_count);

    py::class_<Camera>(m, "Camera")
        .def(py::init<>())
        .def_readwrite("rotation", &Camera::rotation)
        .def_readwrite("translation", &Camera::translation)
        .def_readwrite("focal", &Camera::focal)
        .def_readwrite("principal_point", &Camera::principal_point)
        .def_readwrite("width", &Camera::width)
        .def_readwrite("height", &Camera::height)
        .def_readwrite("near_plane", &Camera::near_plane);

    py::class_<Scene>(m, "Scene")
        .def_readonly("config", &Scene::config)
        .def("hierarchy_count", &Scene::hierarchy_count)
        .def("level", [](const Scene& s, int l) { return set_to_dict(s.levels.at(l)); })
        .def("anchor_level", [](const Scene& s, int l) { return set_to_dict(s.anchors.at(l)); })
        .def("render_list", [](const Scene& s) { return set_to_dict(s.render_list()); });

    m.def("delta_s", &delta_s, py::arg("height"), py::arg("width"), py::arg("levels"),
          py::arg("base_count"));
    m.def("normalize_quaternion", &normalize_quaternion);
    m.def("quat_to_rotation", &quat_to_rotation);
    m.def("build_covariance", &build_covariance);
    m.def("orbit_camera", &orbit_camera, py::arg("yaw"), py::arg("pitch"), py::arg("radius"),
          py::arg("width"), py::arg("height"), py::arg("focal") = -1.0);

    m.def(
        "build_scene",
        [](const HierarchyConfig& cfg, std::uint64_t seed, double sigma_init) {
            return build_scene(init_residuals(cfg, seed, sigma_init), cfg);
        },
        py::arg("config"), py::arg("seed") = 0, py::arg("sigma_init") = 0.02,
        "Realize a scene from randomly initialized residuals");
    m.def("check_scene_invariants", [](const Scene& s) {
        const InvariantReport rep = check_scene_invariants(s);
        return py::make_tuple(rep.ok, rep.detail);
    });
    m.def("shrink_scales", &shrink_scales);

    m.def(
        "render_reference",
        [](const py::dict& set, const Camera& cam) {
            return image_to_array(render_reference(dict_to_set(set), cam));
        },
        py::arg("gaussians"), py::arg("camera"));
    m.def(
        "render_tiled",
        [](const py::dict& set, const Camera& cam) {
            return image_to_array(render_tiled(dict_to_set(set), cam));
        },
        py::arg("gaussians"), py::arg("camera"));
    m.def(
        "render_backward",
        [](const py::dict& set, const Camera& cam,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& dimg) {
            const GaussianSetGrads g = render_backward(dict_to_set(set), cam, array_to_image(dimg));
            py::dict out;
            out["mu"] = stack_rows(g.mu);
            out["log_scale"] = stack_rows(g.log_scale);
            out["quat"] = stack_rows(g.quat);
            out["opacity_logit"] = py::array_t<double>(
                static_cast<py::ssize_t>(g.opacity_logit.size()), g.opacity_logit.data());
            out["color_logit"] = stack_rows(g.color_logit);
            return out;
        },
        py::arg("gaussians"), py::arg("camera"), py::arg("image_grad"));

    m.def("loss_center", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
        return loss_center(array_to_points(pts));
    });
    m.def("loss_knn", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts,
                         int k) { return loss_knn(array_to_points(pts), k); });
    m.def("knn_indices",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts, int k) {
              return knn_indices(array_to_points(pts), k);
          });
    m.def("loss_pose_contrastive",
          [](const Eigen::MatrixXd& img, const Eigen::MatrixXd& cam, double tau) {
              return loss_pose_contrastive({img, PoseEmbeddingBatch::Source::Image},
                                           {cam, PoseEmbeddingBatch::Source::Camera}, tau);
          },
          py::arg("p_img"), py::arg("p_cam"), py::arg("tau") = 0.1);
    m.def("adv_d_loss", &adv_d_loss, py::arg("real_logits"), py::arg("fake_logits"),
          py::arg("r1_grad_sq_norm") = 0.0, py::arg("lambda_") = 1.0);
    m.def("adv_g_loss", &adv_g_loss);

    m.def(
        "psnr",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            return psnr(array_to_image(a), array_to_image(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "make_synthetic_target",
        [](const std::string& name, std::uint64_t seed, int views, int resolution) {
            SyntheticTarget t = make_synthetic_target(name, seed, views, resolution);
            py::list images;
            for (const Image& img : t.images) images.append(image_to_array(img));
            py::list cams;
            for (const Camera& c : t.cameras) cams.append(c);
            return py::make_tuple(std::move(t.ground_truth), cams, images);
        },
        py::arg("spec_name"), py::arg("seed") = 0, py::arg("views") = 8,
        py::arg("resolution") = 64);

    m.def("write_scene", &write_scene);
    m.def("read_scene", &read_scene);
    m.def(
        "write_image_ppm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& img,
           const std::string& path) { write_image_ppm(array_to_image(img), path); },
        py::arg("image"), py::arg("path"));
    m.def(
        "write_image_png",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& img,
           const std::string& path) { write_image_png(array_to_image(img), path); },
        py::arg("image"), py::arg("path"));
}
