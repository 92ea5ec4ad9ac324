#include "njepa/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace njepa {

namespace {

Tensor average(const std::vector<Tensor>& terms) {
    Tensor acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return scale(acc, static_cast<real>(1.0 / static_cast<double>(terms.size())));
}

}  // namespace

std::uint64_t config_fingerprint(const std::string& config_text) {
    std::istringstream in(config_text);
    std::string line, kept;
    while (std::getline(in, line)) {
        if (line.rfind("out_dir", 0) == 0) continue;
        kept += line;
        kept += '\n';
    }
    return fnv1a64(kept);
}

std::string format_real(real v) {
    char buf[64];
    if (sizeof(real) == 8) {
        std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
    } else {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    }
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// construction

ScheduleSet make_schedules(const TrainConfig& cfg, int dataset_size) {
    if (cfg.batch_size <= 0) throw std::invalid_argument("trainer: batch_size must be positive");
    if (dataset_size < cfg.batch_size)
        throw std::invalid_argument("trainer: dataset smaller than one batch");

    ScheduleSet s;
    s.iters_per_epoch = static_cast<std::int64_t>(dataset_size) / cfg.batch_size;
    s.total_steps = cfg.total_steps_override > 0 ? cfg.total_steps_override
                                                 : cfg.epochs * s.iters_per_epoch;
    if (s.total_steps <= 0) throw std::invalid_argument("trainer: zero total steps");
    if (cfg.lr_warmup_steps < 0 || cfg.lr_warmup_steps > s.total_steps)
        throw std::invalid_argument("trainer: warmup must lie within total steps");

    s.lr.warmup_steps = cfg.lr_warmup_steps;
    s.lr.start = cfg.lr_start;
    s.lr.peak = cfg.lr_peak;
    s.lr.final_value = cfg.lr_final;
    s.lr.total_steps = s.total_steps;
    s.lr.ipe_scale = cfg.ipe_scale;
    s.lr.lr_shape = cfg.lr_shape;

    s.wd.start = cfg.wd_start;
    s.wd.final_value = cfg.wd_final;
    s.wd.total_steps = s.total_steps;
    s.wd.ipe_scale = cfg.ipe_scale;

    s.ema.start = cfg.ema_start;
    s.ema.final_value = cfg.ema_final;
    s.ema.total_steps = s.total_steps;
    s.ema.ipe_scale = cfg.ipe_scale;
    return s;
}

Trainer::Trainer(const TrainConfig& cfg, std::string resolved_config_text, int dataset_size)
    : cfg_(cfg),
      config_text_(std::move(resolved_config_text)),
      dataset_size_(dataset_size),
      mask_rng_(0),
      noise_rng_(0) {
    cfg_.enc.validate();
    cfg_.pred.validate(cfg_.enc.embed_dim);
    cfg_.noise.validate();
    cfg_.weights.validate();

    const ScheduleSet sched = make_schedules(cfg_, dataset_size_);
    iters_per_epoch_ = sched.iters_per_epoch;
    total_steps_ = sched.total_steps;
    lr_spec_ = sched.lr;
    wd_spec_ = sched.wd;
    ema_spec_ = sched.ema;

    // One root stream fans out into named substreams so that consuming more
    // randomness in one place never shifts the others.
    Rng root(cfg_.seed);
    Rng init = root.fork("init");
    bundle_ = make_bundle(cfg_.enc, cfg_.pred, cfg_.share_predictors, cfg_.share_mask_tokens, init);
    mask_rng_ = root.fork("masking");
    noise_rng_ = root.fork("noise");
    data_seed_ = root.fork("data").seed();
    opt_.init(bundle_.trainable);
}

// ---------------------------------------------------------------------------
// batching

std::vector<int> Trainer::batch_ids(std::int64_t step_index) const {
    const std::int64_t epoch = step_index / iters_per_epoch_;
    const std::int64_t iter = step_index % iters_per_epoch_;
    std::vector<int> perm(static_cast<std::size_t>(dataset_size_));
    std::iota(perm.begin(), perm.end(), 0);
    // The permutation is a pure function of (data seed, epoch), so resuming
    // from a checkpoint needs no separate data-order state.
    Rng shuffler(splitmix64(data_seed_ ^ static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(perm);
    const auto first = perm.begin() + iter * cfg_.batch_size;
    return std::vector<int>(first, first + cfg_.batch_size);
}

// ---------------------------------------------------------------------------
// per-step randomness

StepInputs Trainer::prepare_step(const std::vector<int>& image_ids) {
    StepInputs in;
    in.image_ids = image_ids;
    const int gw = cfg_.enc.grid_w;
    const int pred_dim = cfg_.pred.embed_dim;
    for (int id : image_ids) {
        MaskLayout layout = build_layout(mask_rng_, cfg_.enc.grid_h, gw, cfg_.mask, id);
        std::vector<BlockInputs> blocks;
        double shared_sigma = 0.0;
        std::string replay_state;
        if (cfg_.noise.mode == NoiseMode::single_level) {
            shared_sigma = sample_sigma(noise_rng_, cfg_.noise);
            replay_state = noise_rng_.state_string();
        }
        for (const BlockSpec& b : layout.target_blocks) {
            BlockInputs blk;
            blk.positions = b.indices(gw);
            blk.psi_clean = gather_rows(bundle_.pos_pred, blk.positions);
            if (cfg_.noise.mode == NoiseMode::single_level) {
                // Every block replays the same stream position, so equal-size
                // blocks receive the identical noise tensor.
                noise_rng_.set_state(replay_state);
                blk.sigma = shared_sigma;
            } else {
                blk.sigma = sample_sigma(noise_rng_, cfg_.noise);
            }
            NoiseDraw draw = draw_block_noise(noise_rng_, blk.sigma,
                                              static_cast<int>(blk.positions.size()), pred_dim);
            blk.psi_noised = apply_noise(blk.psi_clean, draw);
            blocks.push_back(std::move(blk));
        }
        in.layouts.push_back(std::move(layout));
        in.blocks.push_back(std::move(blocks));
    }
    return in;
}

// ---------------------------------------------------------------------------
// loss

std::pair<Tensor, LossReport> Trainer::compute_batch_loss(const Dataset& data,
                                                          const StepInputs& in) const {
    if (in.image_ids.empty()) throw std::invalid_argument("compute_batch_loss: empty batch");
    const int n_tokens = cfg_.enc.n_patches();
    const int patch_dim = cfg_.enc.patch_dim();
    const int embed_dim = cfg_.enc.embed_dim;

    Tensor patches = patchify(data.image_batch(in.image_ids), cfg_.enc.patch_size);
    Tensor z_teacher = encode_teacher(bundle_, patches);  // (B, N, D), detached

    std::vector<Tensor> ct_terms, nt_terms, cn_terms;
    for (std::size_t bi = 0; bi < in.image_ids.size(); ++bi) {
        Tensor img_patches = reshape(narrow(patches, 0, static_cast<int>(bi), 1),
                                     {n_tokens, patch_dim});
        Tensor z_t = reshape(narrow(z_teacher, 0, static_cast<int>(bi), 1),
                             {n_tokens, embed_dim});
        Tensor z_s = encode_student(bundle_, img_patches, in.layouts[bi].context_indices);

        std::vector<Tensor> preds_c, preds_n, targets;
        for (const BlockInputs& blk : in.blocks[bi]) {
            preds_c.push_back(
                predict(bundle_, PredictorKind::context, z_s, blk.positions, blk.psi_clean));
            preds_n.push_back(
                predict(bundle_, PredictorKind::noise, z_s, blk.positions, blk.psi_noised));
            targets.push_back(gather_rows(z_t, blk.positions));
        }
        ct_terms.push_back(loss_ct(preds_c, targets, cfg_.elementwise_smooth_l1));
        nt_terms.push_back(loss_nt(preds_n, targets, cfg_.elementwise_smooth_l1));
        cn_terms.push_back(loss_cn(preds_n, preds_c));
    }

    Tensor lct = average(ct_terms);
    Tensor lnt = average(nt_terms);
    Tensor lcn = average(cn_terms);
    Tensor total = total_loss(lct, lnt, lcn, cfg_.weights);

    LossReport rep;
    rep.l_ct = static_cast<double>(lct.item());
    rep.l_nt = static_cast<double>(lnt.item());
    rep.l_cn = static_cast<double>(lcn.item());
    rep.total = static_cast<double>(total.item());
    return {total, rep};
}

// ---------------------------------------------------------------------------
// one update

LossReport Trainer::train_step(const Dataset& data) {
    if (step_ >= total_steps_) throw std::logic_error("train_step: schedule exhausted");
    const std::vector<int> ids = batch_ids(step_);
    StepInputs in = prepare_step(ids);

    for (auto& p : bundle_.trainable) p.second.zero_grad();

    Tape tape;
    LossReport rep;
    {
        Tape::Scope scope(tape);
        auto [total, r] = compute_batch_loss(data, in);
        rep = r;
        backward(total);
    }

    const std::int64_t s = step_ + 1;  // schedule index of this update
    const double lr = lr_at(lr_spec_, s);
    const double wd = wd_at(wd_spec_, s);
    const double q = ema_momentum_at(ema_spec_, s);
    opt_.step(bundle_.trainable, lr, wd);
    ema_update(bundle_.teacher_encoder, bundle_.student_encoder, q);
    for (const auto& p : bundle_.teacher_encoder) {
        if (p.second.has_grad())
            throw std::logic_error("train_step: teacher parameter " + p.first +
                                   " received a gradient");
    }
    step_ = s;
    return rep;
}

// ---------------------------------------------------------------------------
// full loop

void Trainer::train_loop(const Dataset& data) {
    std::filesystem::create_directories(cfg_.out_dir);
    const std::string csv_path = cfg_.out_dir + "/metrics.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open " + csv_path);
    csv << "step,epoch,lr,wd,q,l_ct,l_nt,l_cn,total,wall_ms\n";

    while (step_ < total_steps_) {
        const auto t0 = std::chrono::steady_clock::now();
        LossReport rep = train_step(data);
        const auto t1 = std::chrono::steady_clock::now();
        rep.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

        const std::int64_t epoch = (step_ - 1) / iters_per_epoch_;
        char wall[32];
        std::snprintf(wall, sizeof wall, "%.3f", rep.wall_ms);
        csv << step_ << ',' << epoch << ',' << format_double(lr_at(lr_spec_, step_)) << ','
            << format_double(wd_at(wd_spec_, step_)) << ','
            << format_double(ema_momentum_at(ema_spec_, step_)) << ','
            << format_real(static_cast<real>(rep.l_ct)) << ','
            << format_real(static_cast<real>(rep.l_nt)) << ','
            << format_real(static_cast<real>(rep.l_cn)) << ','
            << format_real(static_cast<real>(rep.total)) << ',' << wall << '\n';
        csv.flush();

        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 &&
            step_ < total_steps_) {
            save(cfg_.out_dir + "/checkpoint_" + std::to_string(step_) + ".njpc");
        }
    }
    save(cfg_.out_dir + "/checkpoint_final.njpc");
}

// ---------------------------------------------------------------------------
// checkpointing

void Trainer::save(const std::string& path) const {
    CheckpointData cp;
    cp.config_text = config_text_;
    cp.config_fingerprint = fnv1a64(config_text_);
    cp.step = step_;
    cp.opt_step = opt_.step_count;
    cp.rng_states.emplace_back("masking", mask_rng_.state_string());
    cp.rng_states.emplace_back("noise", noise_rng_.state_string());
    for (std::size_t i = 0; i < bundle_.trainable.size(); ++i) {
        const auto& [name, t] = bundle_.trainable[i];
        CheckpointEntry e;
        e.name = name;
        e.shape = t.shape();
        e.data = t.node->data;
        e.has_moments = true;
        e.m = opt_.m[i];
        e.v = opt_.v[i];
        cp.entries.push_back(std::move(e));
    }
    for (const auto& [name, t] : bundle_.teacher_encoder) {
        CheckpointEntry e;
        e.name = name;
        e.shape = t.shape();
        e.data = t.node->data;
        cp.entries.push_back(std::move(e));
    }
    write_checkpoint(path, cp);
}

namespace {

const CheckpointEntry& entry_for(
    const std::unordered_map<std::string, const CheckpointEntry*>& by_name,
    const std::string& name, const Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end())
        throw std::runtime_error("checkpoint is missing parameter " + name);
    const CheckpointEntry& e = *it->second;
    if (e.shape != t.shape())
        throw std::runtime_error("checkpoint shape mismatch for " + name + ": stored " +
                                 shape_str(e.shape) + " vs model " + shape_str(t.shape()));
    return e;
}

std::unordered_map<std::string, const CheckpointEntry*> index_entries(const CheckpointData& cp) {
    std::unordered_map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : cp.entries) by_name[e.name] = &e;
    return by_name;
}

}  // namespace

void Trainer::restore(const CheckpointData& cp) {
    if (config_fingerprint(cp.config_text) != config_fingerprint(config_text_))
        throw std::runtime_error("checkpoint was produced by a different configuration");
    const auto by_name = index_entries(cp);
    for (std::size_t i = 0; i < bundle_.trainable.size(); ++i) {
        auto& [name, t] = bundle_.trainable[i];
        const CheckpointEntry& e = entry_for(by_name, name, t);
        if (!e.has_moments)
            throw std::runtime_error("checkpoint entry " + name + " lacks optimizer moments");
        t.node->data = e.data;
        t.zero_grad();
        opt_.m[i] = e.m;
        opt_.v[i] = e.v;
    }
    for (auto& [name, t] : bundle_.teacher_encoder) {
        t.node->data = entry_for(by_name, name, t).data;
    }
    for (const auto& [stream, state] : cp.rng_states) {
        if (stream == "masking") {
            mask_rng_.set_state(state);
        } else if (stream == "noise") {
            noise_rng_.set_state(state);
        } else {
            throw std::runtime_error("unknown rng stream in checkpoint: " + stream);
        }
    }
    step_ = cp.step;
    opt_.step_count = cp.opt_step;
}

void load_bundle_params(ModelBundle& bundle, const CheckpointData& cp) {
    const auto by_name = index_entries(cp);
    for (auto& [name, t] : bundle.trainable) {
        t.node->data = entry_for(by_name, name, t).data;
        t.zero_grad();
    }
    for (auto& [name, t] : bundle.teacher_encoder) {
        t.node->data = entry_for(by_name, name, t).data;
    }
}

}  // namespace njepa
