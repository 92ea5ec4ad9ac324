#include "njepa/runconfig.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace njepa {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::int64_t parse_i64(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    std::int64_t out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": not an integer: " + v);
    }
    if (used != v.size()) throw std::invalid_argument("config key " + key + ": not an integer: " + v);
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    return static_cast<int>(parse_i64(key, v));
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": not an unsigned integer: " + v);
    }
    if (used != v.size())
        throw std::invalid_argument("config key " + key + ": not an unsigned integer: " + v);
    return out;
}

double parse_f64(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": not a number: " + v);
    }
    if (used != v.size()) throw std::invalid_argument("config key " + key + ": not a number: " + v);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config key " + key + ": not a boolean: " + v);
}

std::string emit_i64(std::int64_t v) { return std::to_string(v); }

std::string emit_double(double v) {
    // Shortest decimal form that parses back to the same value.
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

struct KeyBinding {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyBinding>& bindings() {
    auto i = [](const char* k, int RunConfig::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.*p = parse_int(k, v); },
                          [p](const RunConfig& c) { return emit_i64(c.*p); }};
    };
    auto i64 = [](const char* k, std::int64_t RunConfig::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.*p = parse_i64(k, v); },
                          [p](const RunConfig& c) { return emit_i64(c.*p); }};
    };
    auto f = [](const char* k, double RunConfig::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.*p = parse_f64(k, v); },
                          [p](const RunConfig& c) { return emit_double(c.*p); }};
    };
    auto b = [](const char* k, bool RunConfig::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.*p = parse_bool(k, v); },
                          [p](const RunConfig& c) { return std::string(c.*p ? "true" : "false"); }};
    };
    auto s = [](const char* k, std::string RunConfig::*p) {
        return KeyBinding{k, [p](RunConfig& c, const std::string& v) { c.*p = v; },
                          [p](const RunConfig& c) { return c.*p; }};
    };
    auto mi = [](const char* k, int MaskConfig::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.mask.*p = parse_int(k, v); },
                          [p](const RunConfig& c) { return emit_i64(c.mask.*p); }};
    };
    auto mf = [](const char* k, double MaskConfig::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.mask.*p = parse_f64(k, v); },
                          [p](const RunConfig& c) { return emit_double(c.mask.*p); }};
    };
    auto nf = [](const char* k, double NoiseParams::*p) {
        return KeyBinding{k,
                          [k, p](RunConfig& c, const std::string& v) { c.noise.*p = parse_f64(k, v); },
                          [p](const RunConfig& c) { return emit_double(c.noise.*p); }};
    };

    static const std::vector<KeyBinding> table = {
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        s("out_dir", &RunConfig::out_dir),
        {"data.kind",
         [](RunConfig& c, const std::string& v) {
             if (v != "synthetic" && v != "path")
                 throw std::invalid_argument("config key data.kind: expected synthetic|path, got " + v);
             c.data_kind = v;
         },
         [](const RunConfig& c) { return c.data_kind; }},
        s("data.path", &RunConfig::data_path),
        i("data.classes", &RunConfig::data_classes),
        i("data.per_class", &RunConfig::data_per_class),
        i("data.image_size", &RunConfig::data_image_size),
        f("data.val_frac", &RunConfig::data_val_frac),
        i("model.patch_size", &RunConfig::patch_size),
        i("model.embed_dim", &RunConfig::embed_dim),
        i("model.depth", &RunConfig::depth),
        i("model.heads", &RunConfig::heads),
        i("model.pred_embed_dim", &RunConfig::pred_embed_dim),
        i("model.pred_depth", &RunConfig::pred_depth),
        i("model.pred_heads", &RunConfig::pred_heads),
        b("model.share_predictors", &RunConfig::share_predictors),
        b("model.share_mask_tokens", &RunConfig::share_mask_tokens),
        mi("mask.n_targets", &MaskConfig::n_targets),
        mf("mask.target_scale_min", &MaskConfig::target_scale_min),
        mf("mask.target_scale_max", &MaskConfig::target_scale_max),
        mf("mask.target_aspect_min", &MaskConfig::target_aspect_min),
        mf("mask.target_aspect_max", &MaskConfig::target_aspect_max),
        mf("mask.context_scale_min", &MaskConfig::context_scale_min),
        mf("mask.context_scale_max", &MaskConfig::context_scale_max),
        mi("mask.max_resamples", &MaskConfig::max_context_resamples),
        {"noise.mode",
         [](RunConfig& c, const std::string& v) { c.noise.mode = noise_mode_from_string(v); },
         [](const RunConfig& c) { return to_string(c.noise.mode); }},
        nf("noise.p_mean", &NoiseParams::p_mean),
        nf("noise.p_std", &NoiseParams::p_std),
        nf("noise.sigma_data", &NoiseParams::sigma_data),
        f("loss.lambda1", &RunConfig::lambda1),
        f("loss.lambda2", &RunConfig::lambda2),
        b("loss.elementwise_smooth_l1", &RunConfig::elementwise_smooth_l1),
        i64("train.epochs", &RunConfig::epochs),
        i64("train.total_steps", &RunConfig::total_steps),
        i64("train.batch_size", &RunConfig::batch_size),
        i64("train.checkpoint_every", &RunConfig::checkpoint_every),
        f("sched.lr_start", &RunConfig::lr_start),
        f("sched.lr_peak", &RunConfig::lr_peak),
        f("sched.lr_final", &RunConfig::lr_final),
        i64("sched.lr_warmup_steps", &RunConfig::lr_warmup_steps),
        {"sched.lr_shape",
         [](RunConfig& c, const std::string& v) {
             if (v != "cosine" && v != "constant")
                 throw std::invalid_argument("config key sched.lr_shape: expected cosine|constant, got " + v);
             c.lr_shape = v;
         },
         [](const RunConfig& c) { return c.lr_shape; }},
        f("sched.wd_start", &RunConfig::wd_start),
        f("sched.wd_final", &RunConfig::wd_final),
        f("sched.ema_start", &RunConfig::ema_start),
        f("sched.ema_final", &RunConfig::ema_final),
        f("sched.ipe_scale", &RunConfig::ipe_scale),
        i("probe.epochs", &RunConfig::probe_epochs),
        i("probe.batch_size", &RunConfig::probe_batch_size),
        f("probe.lr", &RunConfig::probe_lr),
        f("probe.momentum", &RunConfig::probe_momentum),
        {"probe.source",
         [](RunConfig& c, const std::string& v) {
             feature_source_from_string(v);  // validates
             c.probe_source = v;
         },
         [](const RunConfig& c) { return c.probe_source; }},
        i("probe.last_k", &RunConfig::probe_last_k),
        f("probe.fraction", &RunConfig::probe_fraction),
    };
    return table;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const KeyBinding& kb : bindings()) {
        if (key == kb.key) {
            kb.set(cfg, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key: " + key);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        set_key(cfg, key, value);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be key=value: " + assignment);
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_env_overrides(RunConfig& cfg) {
    const char* out = std::getenv("NJEPA_OUT");
    if (out != nullptr && out[0] != '\0') cfg.out_dir = out;
}

std::string resolved_text(const RunConfig& cfg) {
    std::ostringstream out;
    for (const KeyBinding& kb : bindings()) out << kb.key << " = " << kb.get(cfg) << "\n";
    return out.str();
}

Dataset build_run_dataset(const RunConfig& cfg) {
    if (cfg.data_kind == "synthetic") {
        return make_synthetic(cfg.seed, cfg.data_per_class, cfg.data_classes, cfg.data_image_size);
    }
    if (cfg.data_path.empty())
        throw std::invalid_argument("data.kind = path requires data.path");
    return load_dataset(cfg.data_path);
}

TrainConfig to_train_config(const RunConfig& cfg, int image_h, int image_w, int channels) {
    if (cfg.patch_size <= 0 || image_h % cfg.patch_size != 0 || image_w % cfg.patch_size != 0)
        throw std::invalid_argument("image dimensions must be divisible by model.patch_size");
    TrainConfig tc;
    tc.enc.grid_h = image_h / cfg.patch_size;
    tc.enc.grid_w = image_w / cfg.patch_size;
    tc.enc.patch_size = cfg.patch_size;
    tc.enc.in_chans = channels;
    tc.enc.embed_dim = cfg.embed_dim;
    tc.enc.depth = cfg.depth;
    tc.enc.heads = cfg.heads;
    tc.pred.embed_dim = cfg.pred_embed_dim;
    tc.pred.depth = cfg.pred_depth;
    tc.pred.heads = cfg.pred_heads;
    tc.pred.out_dim = cfg.embed_dim;
    tc.share_predictors = cfg.share_predictors;
    tc.share_mask_tokens = cfg.share_mask_tokens;
    tc.mask = cfg.mask;
    tc.noise = cfg.noise;
    tc.weights.lambda1 = static_cast<real>(cfg.lambda1);
    tc.weights.lambda2 = static_cast<real>(cfg.lambda2);
    tc.elementwise_smooth_l1 = cfg.elementwise_smooth_l1;
    tc.seed = cfg.seed;
    tc.epochs = cfg.epochs;
    tc.total_steps_override = cfg.total_steps;
    tc.batch_size = cfg.batch_size;
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.lr_start = cfg.lr_start;
    tc.lr_peak = cfg.lr_peak;
    tc.lr_final = cfg.lr_final;
    tc.lr_warmup_steps = cfg.lr_warmup_steps;
    tc.lr_shape = cfg.lr_shape == "constant" ? LrShape::constant : LrShape::cosine;
    tc.wd_start = cfg.wd_start;
    tc.wd_final = cfg.wd_final;
    tc.ema_start = cfg.ema_start;
    tc.ema_final = cfg.ema_final;
    tc.ipe_scale = cfg.ipe_scale;
    tc.out_dir = cfg.out_dir;
    return tc;
}

ProbeConfig to_probe_config(const RunConfig& cfg) {
    ProbeConfig pc;
    pc.epochs = cfg.probe_epochs;
    pc.batch_size = cfg.probe_batch_size;
    pc.lr = cfg.probe_lr;
    pc.momentum = cfg.probe_momentum;
    pc.source = feature_source_from_string(cfg.probe_source);
    pc.last_k = cfg.probe_last_k;
    pc.fraction = cfg.probe_fraction;
    return pc;
}

}  // namespace njepa
