// Python bindings over the main operations: schedules, masking, noise,
// losses, position tables, the synthetic dataset, and a one-call pretrain.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "njepa/eval.hpp"
#include "njepa/losses.hpp"
#include "njepa/masking.hpp"
#include "njepa/noise.hpp"
#include "njepa/runconfig.hpp"
#include "njepa/schedules.hpp"
#include "njepa/trainer.hpp"
#include "njepa/vit.hpp"

namespace py = pybind11;
using namespace njepa;

namespace {

Tensor matrix_to_tensor(const std::vector<std::vector<double>>& rows, const char* who) {
    if (rows.empty() || rows.front().empty())
        throw std::invalid_argument(std::string(who) + ": empty matrix");
    const int r = static_cast<int>(rows.size());
    const int c = static_cast<int>(rows.front().size());
    std::vector<real> flat;
    flat.reserve(static_cast<std::size_t>(r) * c);
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c)
            throw std::invalid_argument(std::string(who) + ": ragged matrix");
        for (double v : row) flat.push_back(static_cast<real>(v));
    }
    return Tensor::from_vector({r, c}, std::move(flat));
}

std::vector<std::vector<double>> tensor_to_matrix(const Tensor& t) {
    const int r = t.dim(0), c = t.dim(1);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(r),
                                         std::vector<double>(static_cast<std::size_t>(c)));
    const real* p = t.node->data.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                static_cast<double>(p[static_cast<std::size_t>(i) * c + j]);
    return out;
}

py::dict layout_to_dict(const MaskLayout& layout, int grid_w) {
    py::list targets;
    for (const BlockSpec& b : layout.target_blocks) {
        py::dict d;
        d["top"] = b.top;
        d["left"] = b.left;
        d["height"] = b.height;
        d["width"] = b.width;
        d["indices"] = b.indices(grid_w);
        targets.append(d);
    }
    py::dict out;
    out["targets"] = targets;
    out["context"] = layout.context_indices;
    out["image_id"] = layout.image_id;
    return out;
}

std::string run_pretrain(const std::string& config_text) {
    RunConfig cfg = parse_run_config(config_text);
    apply_env_overrides(cfg);
    Dataset full = build_run_dataset(cfg);
    auto [train, val] = split_dataset(full, cfg.data_val_frac, cfg.seed);
    (void)val;
    const TrainConfig tc = to_train_config(cfg, full.height, full.width, full.channels);
    const std::string text = resolved_text(cfg);
    Trainer trainer(tc, text, train.count());
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/config.txt") << text;
    trainer.train_loop(train);
    std::ifstream metrics(cfg.out_dir + "/metrics.csv");
    std::ostringstream buf;
    buf << metrics.rdbuf();
    return buf.str();
}

}  // namespace

PYBIND11_MODULE(_njepa, m) {
    m.doc() = "joint-embedding pretraining with noised position targets";
    m.attr("__version__") = "0.1.0";

    py::enum_<LrShape>(m, "LrShape")
        .value("cosine", LrShape::cosine)
        .value("constant", LrShape::constant);

    py::class_<ScheduleSpec>(m, "ScheduleSpec")
        .def(py::init<>())
        .def_readwrite("warmup_steps", &ScheduleSpec::warmup_steps)
        .def_readwrite("start", &ScheduleSpec::start)
        .def_readwrite("peak", &ScheduleSpec::peak)
        .def_readwrite("final_value", &ScheduleSpec::final_value)
        .def_readwrite("total_steps", &ScheduleSpec::total_steps)
        .def_readwrite("ipe_scale", &ScheduleSpec::ipe_scale)
        .def_readwrite("lr_shape", &ScheduleSpec::lr_shape);

    m.def("lr_at", &lr_at, py::arg("spec"), py::arg("step"));
    m.def("wd_at", &wd_at, py::arg("spec"), py::arg("step"));
    m.def("ema_momentum_at", &ema_momentum_at, py::arg("spec"), py::arg("step"));

    m.def(
        "sample_layouts",
        [](std::uint64_t seed, int grid_h, int grid_w, int count) {
            Rng rng = Rng(seed).fork("masking");
            MaskConfig cfg;
            py::list out;
            for (int i = 0; i < count; ++i)
                out.append(layout_to_dict(build_layout(rng, grid_h, grid_w, cfg, i), grid_w));
            return out;
        },
        py::arg("seed"), py::arg("grid_h"), py::arg("grid_w"), py::arg("count"));

    m.def(
        "sample_sigmas",
        [](std::uint64_t seed, int count, double p_mean, double p_std, const std::string& mode) {
            NoiseParams params;
            params.p_mean = p_mean;
            params.p_std = p_std;
            params.mode = noise_mode_from_string(mode);
            Rng rng = Rng(seed).fork("noise");
            std::vector<double> out(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i)
                out[static_cast<std::size_t>(i)] = sample_sigma(rng, params);
            return out;
        },
        py::arg("seed"), py::arg("count"), py::arg("p_mean") = -1.2, py::arg("p_std") = 1.2,
        py::arg("mode") = "multi_level");

    m.def(
        "gelu",
        [](const std::vector<double>& xs) {
            std::vector<real> flat;
            flat.reserve(xs.size());
            for (double v : xs) flat.push_back(static_cast<real>(v));
            Tensor t = Tensor::from_vector({static_cast<int>(xs.size())}, std::move(flat));
            Tensor y = gelu(t);
            std::vector<double> out;
            out.reserve(xs.size());
            for (real v : y.node->data) out.push_back(static_cast<double>(v));
            return out;
        },
        py::arg("values"));

    m.def(
        "smooth_l1",
        [](const std::vector<std::vector<double>>& pred,
           const std::vector<std::vector<double>>& target, bool elementwise) {
            Tensor p = matrix_to_tensor(pred, "smooth_l1");
            Tensor t = matrix_to_tensor(target, "smooth_l1");
            return static_cast<double>(smooth_l1_block(p, t, elementwise).item());
        },
        py::arg("pred"), py::arg("target"), py::arg("elementwise") = false);

    m.def(
        "sincos_pos_embed",
        [](int grid_h, int grid_w, int dim) {
            return tensor_to_matrix(make_sincos_pos_embed(grid_h, grid_w, dim));
        },
        py::arg("grid_h"), py::arg("grid_w"), py::arg("dim"));

    m.def(
        "synthetic_dataset_stats",
        [](std::uint64_t seed, int per_class, int classes, int image_size) {
            const Dataset d = make_synthetic(seed, per_class, classes, image_size);
            py::dict out;
            out["count"] = d.count();
            out["height"] = d.height;
            out["width"] = d.width;
            out["channels"] = d.channels;
            out["mean"] = d.mean;
            out["std"] = d.stdev;
            std::vector<int> hist(static_cast<std::size_t>(d.n_classes()), 0);
            for (int y : d.labels) ++hist[static_cast<std::size_t>(y)];
            out["label_histogram"] = hist;
            return out;
        },
        py::arg("seed"), py::arg("per_class"), py::arg("classes"), py::arg("image_size") = 32);

    m.def("resolve_config",
          [](const std::string& text) { return resolved_text(parse_run_config(text)); },
          py::arg("text"));

    m.def("pretrain", &run_pretrain, py::arg("config_text"),
          "Run the full training loop described by the config text; returns the metrics CSV.");
}
