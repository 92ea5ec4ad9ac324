// Command-line front end: pretrain / probe / lowshot / inspect-masks /
// schedules / stats, all driven by the plain-text run configuration.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "njepa/checkpoint.hpp"
#include "njepa/dataset.hpp"
#include "njepa/eval.hpp"
#include "njepa/masking.hpp"
#include "njepa/runconfig.hpp"
#include "njepa/trainer.hpp"

namespace {

using namespace njepa;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* sub, CommonArgs& a) {
    sub->add_option("--config", a.config_path, "run configuration file");
    sub->add_option("--override", a.overrides, "key=value override (repeatable)");
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&a](std::uint64_t v) {
            a.seed = v;
            a.seed_set = true;
        },
        "root seed override");
}

// Precedence: --config file (or the fallback text, typically a checkpoint's
// embedded config), then --override assignments, then --seed, then NJEPA_OUT.
RunConfig make_config(const CommonArgs& a, const std::string& fallback_text) {
    RunConfig cfg;
    if (!a.config_path.empty()) {
        cfg = load_run_config(a.config_path);
    } else if (!fallback_text.empty()) {
        cfg = parse_run_config(fallback_text);
    }
    for (const std::string& o : a.overrides) apply_override(cfg, o);
    if (a.seed_set) cfg.seed = a.seed;
    apply_env_overrides(cfg);
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

ModelBundle bundle_from_checkpoint(const CheckpointData& cp, int image_h, int image_w,
                                   int channels) {
    const RunConfig model_cfg = parse_run_config(cp.config_text);
    const TrainConfig tc = to_train_config(model_cfg, image_h, image_w, channels);
    Rng init(0);  // initial values are overwritten by the checkpoint
    ModelBundle bundle =
        make_bundle(tc.enc, tc.pred, tc.share_predictors, tc.share_mask_tokens, init);
    load_bundle_params(bundle, cp);
    return bundle;
}

void append_probe_row(const std::string& out_dir, const std::string& checkpoint,
                      const std::string& source, double fraction, std::uint64_t seed,
                      double top1) {
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/probe_results.csv";
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (fresh) f << "checkpoint,feature_source,label_fraction,seed,top1\n";
    f << checkpoint << ',' << source << ',' << format_double(fraction) << ',' << seed << ','
      << format_double(top1) << '\n';
}

void cmd_pretrain(const CommonArgs& args, const std::string& resume_path) {
    RunConfig cfg = make_config(args, "");
    Dataset full = build_run_dataset(cfg);
    auto [train, val] = split_dataset(full, cfg.data_val_frac, cfg.seed);
    (void)val;
    const TrainConfig tc = to_train_config(cfg, full.height, full.width, full.channels);
    const std::string text = resolved_text(cfg);

    Trainer trainer(tc, text, train.count());
    if (!resume_path.empty()) trainer.restore(read_checkpoint(resume_path));

    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/config.txt", text);
    trainer.train_loop(train);
    std::printf("completed %lld steps; outputs in %s\n",
                static_cast<long long>(trainer.step()), cfg.out_dir.c_str());
}

void cmd_probe(const CommonArgs& args, const std::string& ckpt_path, double fraction,
               bool low_shot) {
    const CheckpointData cp = read_checkpoint(ckpt_path);
    RunConfig cfg = make_config(args, cp.config_text);
    Dataset full = build_run_dataset(cfg);
    auto [train, val] = split_dataset(full, cfg.data_val_frac, cfg.seed);

    ModelBundle bundle = bundle_from_checkpoint(cp, full.height, full.width, full.channels);
    ProbeConfig pc = to_probe_config(cfg);

    double top1 = 0;
    if (low_shot) {
        top1 = low_shot_eval(bundle, train, val, fraction, pc, cfg.seed);
    } else {
        FeatureMatrix ftr =
            extract_features(bundle, train, pc.source, WhichEncoder::student, pc.last_k);
        FeatureMatrix fva =
            extract_features(bundle, val, pc.source, WhichEncoder::student, pc.last_k);
        top1 = linear_probe(ftr, fva, pc, cfg.seed);
        fraction = 1.0;
    }

    write_text(cfg.out_dir + "/probe_config.txt", resolved_text(cfg));
    append_probe_row(cfg.out_dir, ckpt_path, to_string(pc.source), fraction, cfg.seed, top1);
    std::printf("top1 = %s (checkpoint %s, source %s, fraction %s)\n",
                format_double(top1).c_str(), ckpt_path.c_str(), to_string(pc.source).c_str(),
                format_double(fraction).c_str());
}

void cmd_inspect_masks(const CommonArgs& args, int count) {
    RunConfig cfg = make_config(args, "");
    int h = cfg.data_image_size, w = cfg.data_image_size;
    if (cfg.data_kind == "path") {
        const Dataset d = load_dataset(cfg.data_path);
        h = d.height;
        w = d.width;
    }
    if (cfg.patch_size <= 0 || h % cfg.patch_size != 0 || w % cfg.patch_size != 0)
        throw std::invalid_argument("image dimensions must be divisible by model.patch_size");
    const int gh = h / cfg.patch_size, gw = w / cfg.patch_size;

    Rng root(cfg.seed);
    Rng mask_rng = root.fork("masking");
    for (int i = 0; i < count; ++i) {
        const MaskLayout layout = build_layout(mask_rng, gh, gw, cfg.mask, i);
        std::printf("# layout %d: %zu target blocks, %zu context patches\n", i,
                    layout.target_blocks.size(), layout.context_indices.size());
        std::printf("%s\n", render_layout(layout, gh, gw).c_str());
    }
}

void cmd_schedules(const CommonArgs& args) {
    RunConfig cfg = make_config(args, "");
    Dataset full = build_run_dataset(cfg);
    auto [train, val] = split_dataset(full, cfg.data_val_frac, cfg.seed);
    (void)val;
    const TrainConfig tc = to_train_config(cfg, full.height, full.width, full.channels);
    const ScheduleSet s = make_schedules(tc, train.count());
    std::printf("step,lr,wd,q\n");
    for (std::int64_t step = 0; step <= s.total_steps; ++step) {
        std::printf("%lld,%s,%s,%s\n", static_cast<long long>(step),
                    format_double(lr_at(s.lr, step)).c_str(),
                    format_double(wd_at(s.wd, step)).c_str(),
                    format_double(ema_momentum_at(s.ema, step)).c_str());
    }
}

void cmd_stats(const CommonArgs& args, const std::string& ckpt_path) {
    const CheckpointData cp = read_checkpoint(ckpt_path);
    RunConfig cfg = make_config(args, cp.config_text);
    Dataset full = build_run_dataset(cfg);
    auto [train, val] = split_dataset(full, cfg.data_val_frac, cfg.seed);
    (void)train;

    ModelBundle bundle = bundle_from_checkpoint(cp, full.height, full.width, full.channels);
    const FeatureMatrix f =
        extract_features(bundle, val, FeatureSource::last_layer_avg, WhichEncoder::teacher);
    const RepresentationStats st = representation_stats(f);

    int above = 0;
    double lo = 1e300, hi = -1e300;
    for (double s : st.per_dim_std) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
        if (s > 1e-3) ++above;
    }
    std::printf("rows = %d\n", f.rows);
    std::printf("dim = %d\n", f.dim);
    std::printf("per_dim_std_min = %s\n", format_double(lo).c_str());
    std::printf("per_dim_std_max = %s\n", format_double(hi).c_str());
    std::printf("per_dim_std_frac_above_1e-3 = %s\n",
                format_double(static_cast<double>(above) / f.dim).c_str());
    std::printf("mean_pairwise_cosine = %s\n", format_double(st.mean_pairwise_cosine).c_str());
    std::printf("effective_rank = %s\n", format_double(st.effective_rank).c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint-embedding pretraining with noised position targets"};
    app.require_subcommand(1);

    CommonArgs pretrain_args, probe_args, lowshot_args, masks_args, sched_args, stats_args;
    std::string resume_path, probe_ckpt, lowshot_ckpt, stats_ckpt;
    double lowshot_fraction = 0.1;
    int mask_count = 8;

    CLI::App* pretrain = app.add_subcommand("pretrain", "run the training loop");
    add_common(pretrain, pretrain_args);
    pretrain->add_option("--resume", resume_path, "checkpoint to continue from");
    pretrain->callback([&] { cmd_pretrain(pretrain_args, resume_path); });

    CLI::App* probe = app.add_subcommand("probe", "linear probe on frozen features");
    add_common(probe, probe_args);
    probe->add_option("--checkpoint", probe_ckpt, "trained checkpoint")->required();
    probe->callback([&] { cmd_probe(probe_args, probe_ckpt, 1.0, false); });

    CLI::App* lowshot = app.add_subcommand("lowshot", "probe on a label fraction");
    add_common(lowshot, lowshot_args);
    lowshot->add_option("--checkpoint", lowshot_ckpt, "trained checkpoint")->required();
    lowshot->add_option("--fraction", lowshot_fraction, "label fraction in (0, 1]")->required();
    lowshot->callback([&] { cmd_probe(lowshot_args, lowshot_ckpt, lowshot_fraction, true); });

    CLI::App* masks = app.add_subcommand("inspect-masks", "render sampled mask layouts");
    add_common(masks, masks_args);
    masks->add_option("--count", mask_count, "layouts to render");
    masks->callback([&] { cmd_inspect_masks(masks_args, mask_count); });

    CLI::App* sched = app.add_subcommand("schedules", "emit lr/wd/q per step as CSV");
    add_common(sched, sched_args);
    sched->callback([&] { cmd_schedules(sched_args); });

    CLI::App* stats = app.add_subcommand("stats", "representation statistics of a checkpoint");
    add_common(stats, stats_args);
    stats->add_option("--checkpoint", stats_ckpt, "trained checkpoint")->required();
    stats->callback([&] { cmd_stats(stats_args, stats_ckpt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
