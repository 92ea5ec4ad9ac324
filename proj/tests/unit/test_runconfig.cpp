#include "doctest.h"

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "njepa/runconfig.hpp"

using namespace njepa;
namespace fs = std::filesystem;

TEST_CASE("defaults survive an empty document") {
    RunConfig cfg = parse_run_config("");
    CHECK(cfg.seed == 42);
    CHECK(cfg.data_kind == "synthetic");
    CHECK(cfg.embed_dim == 64);
    CHECK(cfg.lambda1 == 0.1);
    CHECK(cfg.noise.mode == NoiseMode::multi_level);
    CHECK(cfg.ipe_scale == 1.25);
}

TEST_CASE("comments and blank lines are ignored") {
    RunConfig cfg = parse_run_config("# a comment\n\nseed = 7\n  # indented comment\n");
    CHECK(cfg.seed == 7);
}

TEST_CASE("every key class parses into its typed field") {
    RunConfig cfg = parse_run_config(
        "seed = 9\n"
        "out_dir = runs/x\n"
        "data.classes = 6\n"
        "data.val_frac = 0.1\n"
        "model.embed_dim = 32\n"
        "model.share_predictors = true\n"
        "mask.n_targets = 2\n"
        "mask.target_scale_max = 0.3\n"
        "noise.mode = single_level\n"
        "noise.p_mean = -0.9\n"
        "loss.lambda2 = 0.05\n"
        "train.batch_size = 8\n"
        "sched.lr_shape = constant\n"
        "probe.source = concat_last_k\n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.out_dir == "runs/x");
    CHECK(cfg.data_classes == 6);
    CHECK(cfg.data_val_frac == 0.1);
    CHECK(cfg.embed_dim == 32);
    CHECK(cfg.share_predictors);
    CHECK(cfg.mask.n_targets == 2);
    CHECK(cfg.mask.target_scale_max == 0.3);
    CHECK(cfg.noise.mode == NoiseMode::single_level);
    CHECK(cfg.noise.p_mean == -0.9);
    CHECK(cfg.lambda2 == 0.05);
    CHECK(cfg.batch_size == 8);
    CHECK(cfg.lr_shape == "constant");
    CHECK(cfg.probe_source == "concat_last_k");
}

TEST_CASE("unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS(parse_run_config("model.embed_dims = 64\n"),
                         doctest::Contains("embed_dims"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config("seed 42\n"), std::invalid_argument);  // missing '='
}

TEST_CASE("bad values are rejected with the offending key") {
    CHECK_THROWS_AS(parse_run_config("train.epochs = soon\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config("model.share_predictors = maybe\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config("noise.mode = loud\n"), std::invalid_argument);
}

TEST_CASE("the resolved text is a reparse fixed point") {
    RunConfig cfg = parse_run_config("seed = 3\nmodel.depth = 2\nsched.lr_peak = 0.0005\n");
    const std::string text = resolved_text(cfg);
    RunConfig back = parse_run_config(text);
    CHECK(resolved_text(back) == text);
    CHECK(back.seed == 3);
    CHECK(back.depth == 2);
    CHECK(back.lr_peak == 0.0005);
}

TEST_CASE("resolved text emits doubles in shortest round-trip form") {
    RunConfig cfg;
    const std::string text = resolved_text(cfg);
    CHECK(text.find("loss.lambda1 = 0.1\n") != std::string::npos);
    CHECK(text.find("sched.wd_start = 0.04\n") != std::string::npos);
    CHECK(text.find("noise.p_mean = -1.2\n") != std::string::npos);
}

TEST_CASE("overrides reuse the config grammar") {
    RunConfig cfg;
    apply_override(cfg, "train.epochs=3");
    CHECK(cfg.epochs == 3);
    apply_override(cfg, "noise.mode = off");
    CHECK(cfg.noise.mode == NoiseMode::off);
    CHECK_THROWS_AS(apply_override(cfg, "nonsense=1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "no_equals"), std::invalid_argument);
}

TEST_CASE("the environment can redirect the output directory") {
    RunConfig cfg;
    ::setenv("NJEPA_OUT", "/tmp/njepa_env_test", 1);
    apply_env_overrides(cfg);
    CHECK(cfg.out_dir == "/tmp/njepa_env_test");
    ::unsetenv("NJEPA_OUT");
    RunConfig cfg2;
    apply_env_overrides(cfg2);
    CHECK(cfg2.out_dir == "runs/default");
}

TEST_CASE("loading from disk matches parsing the same text") {
    const fs::path p = fs::temp_directory_path() /
                       ("njepa_cfg_" + std::to_string(::getpid()) + ".cfg");
    {
        std::ofstream os(p);
        os << "seed = 77\ntrain.epochs = 1\n";
    }
    RunConfig cfg = load_run_config(p.string());
    CHECK(cfg.seed == 77);
    CHECK(cfg.epochs == 1);
    fs::remove(p);

    CHECK_THROWS_AS(load_run_config("/nonexistent/njepa.cfg"), std::runtime_error);
}

TEST_CASE("training config derives the patch grid from the image size") {
    RunConfig cfg;
    cfg.patch_size = 4;
    TrainConfig tc = to_train_config(cfg, 32, 32, 3);
    CHECK(tc.enc.grid_h == 8);
    CHECK(tc.enc.grid_w == 8);
    CHECK(tc.enc.in_chans == 3);
    CHECK(tc.enc.embed_dim == cfg.embed_dim);
    CHECK(tc.pred.out_dim == cfg.embed_dim);
    CHECK(tc.weights.lambda1 == real(0.1));

    CHECK_THROWS_AS(to_train_config(cfg, 30, 32, 3), std::invalid_argument);
}

TEST_CASE("probe config carries the probe keys") {
    RunConfig cfg;
    cfg.probe_epochs = 9;
    cfg.probe_source = "concat_last_k";
    cfg.probe_fraction = 0.5;
    ProbeConfig pc = to_probe_config(cfg);
    CHECK(pc.epochs == 9);
    CHECK(pc.source == FeatureSource::concat_last_k);
    CHECK(pc.fraction == 0.5);
}

TEST_CASE("synthetic dataset construction follows the data keys") {
    RunConfig cfg;
    cfg.data_per_class = 3;
    cfg.data_classes = 2;
    cfg.data_image_size = 16;
    Dataset d = build_run_dataset(cfg);
    CHECK(d.count() == 6);
    CHECK(d.height == 16);
}
