#include "njepa/vit.hpp"

#include <cmath>
#include <stdexcept>

namespace njepa {

void EncoderConfig::validate() const {
    if (grid_h < 1 || grid_w < 1 || patch_size < 1 || in_chans < 1) {
        throw std::invalid_argument("encoder config: geometry extents must be >= 1");
    }
    if (depth < 1) throw std::invalid_argument("encoder config: depth must be >= 1");
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("encoder config: embed_dim not divisible by heads");
    }
    if (embed_dim % 4 != 0) {
        throw std::invalid_argument("encoder config: embed_dim must be divisible by 4 (sin/cos table)");
    }
}

void PredictorConfig::validate(int encoder_embed_dim) const {
    if (depth < 1) throw std::invalid_argument("predictor config: depth must be >= 1");
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("predictor config: embed_dim not divisible by heads");
    }
    if (embed_dim % 4 != 0) {
        throw std::invalid_argument("predictor config: embed_dim must be divisible by 4 (sin/cos table)");
    }
    if (out_dim != encoder_embed_dim) {
        throw std::invalid_argument("predictor config: out_dim must equal encoder embed_dim");
    }
}

// ---- blocks -----------------------------------------------------------------

Tensor block_forward(const TransformerBlock& blk, const Tensor& x, int heads) {
    const int rank = x.ndim();
    if (rank != 2 && rank != 3) throw std::invalid_argument("block_forward: rank must be 2 or 3");
    const int T = x.dim(rank - 2);
    const int D = x.dim(rank - 1);
    const int hd = D / heads;

    Tensor h = layer_norm(x, blk.ln1_g, blk.ln1_b);
    Tensor qkv = add(matmul(h, blk.w_qkv), blk.b_qkv);
    Tensor q = narrow(qkv, rank - 1, 0, D);
    Tensor k = narrow(qkv, rank - 1, D, D);
    Tensor v = narrow(qkv, rank - 1, 2 * D, D);

    Tensor qh, kt, vh;
    if (rank == 2) {
        qh = permute(reshape(q, {T, heads, hd}), {1, 0, 2});  // (H,T,hd)
        kt = permute(reshape(k, {T, heads, hd}), {1, 2, 0});  // (H,hd,T)
        vh = permute(reshape(v, {T, heads, hd}), {1, 0, 2});
    } else {
        const int B = x.dim(0);
        qh = permute(reshape(q, {B, T, heads, hd}), {0, 2, 1, 3});  // (B,H,T,hd)
        kt = permute(reshape(k, {B, T, heads, hd}), {0, 2, 3, 1});  // (B,H,hd,T)
        vh = permute(reshape(v, {B, T, heads, hd}), {0, 2, 1, 3});
    }
    Tensor att = softmax(scale(matmul(qh, kt), real(1) / std::sqrt(static_cast<real>(hd))), -1);
    Tensor o = matmul(att, vh);
    Tensor o2 = rank == 2 ? reshape(permute(o, {1, 0, 2}), {T, D})
                          : reshape(permute(o, {0, 2, 1, 3}), {x.dim(0), T, D});
    Tensor x1 = add(x, add(matmul(o2, blk.w_proj), blk.b_proj));

    Tensor h2 = layer_norm(x1, blk.ln2_g, blk.ln2_b);
    Tensor m = gelu(add(matmul(h2, blk.w_fc1), blk.b_fc1));
    return add(x1, add(matmul(m, blk.w_fc2), blk.b_fc2));
}

// ---- parameter construction ----------------------------------------------------

namespace {

Tensor weight_init(Rng& rng, std::vector<int> shape, double std_dev = 0.02) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    real* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<real>(rng.normal(0.0, std_dev));
    return t;
}

TransformerBlock make_block(int dim, Rng& rng) {
    TransformerBlock b;
    b.ln1_g = Tensor::full({dim}, real(1), true);
    b.ln1_b = Tensor::zeros({dim}, true);
    b.w_qkv = weight_init(rng, {dim, 3 * dim});
    b.b_qkv = Tensor::zeros({3 * dim}, true);
    b.w_proj = weight_init(rng, {dim, dim});
    b.b_proj = Tensor::zeros({dim}, true);
    b.ln2_g = Tensor::full({dim}, real(1), true);
    b.ln2_b = Tensor::zeros({dim}, true);
    b.w_fc1 = weight_init(rng, {dim, 4 * dim});
    b.b_fc1 = Tensor::zeros({4 * dim}, true);
    b.w_fc2 = weight_init(rng, {4 * dim, dim});
    b.b_fc2 = Tensor::zeros({dim}, true);
    return b;
}

void collect_block(const TransformerBlock& b, const std::string& prefix,
                   std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".ln1.g", b.ln1_g);
    out.emplace_back(prefix + ".ln1.b", b.ln1_b);
    out.emplace_back(prefix + ".attn.w_qkv", b.w_qkv);
    out.emplace_back(prefix + ".attn.b_qkv", b.b_qkv);
    out.emplace_back(prefix + ".attn.w_proj", b.w_proj);
    out.emplace_back(prefix + ".attn.b_proj", b.b_proj);
    out.emplace_back(prefix + ".ln2.g", b.ln2_g);
    out.emplace_back(prefix + ".ln2.b", b.ln2_b);
    out.emplace_back(prefix + ".mlp.w_fc1", b.w_fc1);
    out.emplace_back(prefix + ".mlp.b_fc1", b.b_fc1);
    out.emplace_back(prefix + ".mlp.w_fc2", b.w_fc2);
    out.emplace_back(prefix + ".mlp.b_fc2", b.b_fc2);
}

Encoder make_encoder(const EncoderConfig& cfg, Rng& rng) {
    Encoder e;
    e.cfg = cfg;
    // fan-scaled init for the input projection only: patch content has to
    // enter at the same magnitude as the unit-scale position table, or the
    // early representations are position-dominated for every image alike
    const double patch_std = std::sqrt(2.0 / (cfg.patch_dim() + cfg.embed_dim));
    e.w_patch = weight_init(rng, {cfg.patch_dim(), cfg.embed_dim}, patch_std);
    e.b_patch = Tensor::zeros({cfg.embed_dim}, true);
    for (int i = 0; i < cfg.depth; ++i) e.blocks.push_back(make_block(cfg.embed_dim, rng));
    e.lnf_g = Tensor::full({cfg.embed_dim}, real(1), true);
    e.lnf_b = Tensor::zeros({cfg.embed_dim}, true);
    return e;
}

Predictor make_predictor(const PredictorConfig& cfg, int encoder_dim, Rng& rng) {
    Predictor p;
    p.cfg = cfg;
    p.w_in = weight_init(rng, {encoder_dim, cfg.embed_dim});
    p.b_in = Tensor::zeros({cfg.embed_dim}, true);
    for (int i = 0; i < cfg.depth; ++i) p.blocks.push_back(make_block(cfg.embed_dim, rng));
    p.lnf_g = Tensor::full({cfg.embed_dim}, real(1), true);
    p.lnf_b = Tensor::zeros({cfg.embed_dim}, true);
    p.w_out = weight_init(rng, {cfg.embed_dim, cfg.out_dim});
    p.b_out = Tensor::zeros({cfg.out_dim}, true);
    return p;
}

Encoder clone_frozen(const Encoder& src) {
    Encoder e;
    e.cfg = src.cfg;
    auto freeze = [](const Tensor& t) {
        Tensor c = t.clone();
        c.set_requires_grad(false);
        return c;
    };
    e.w_patch = freeze(src.w_patch);
    e.b_patch = freeze(src.b_patch);
    for (const TransformerBlock& b : src.blocks) {
        TransformerBlock tb;
        tb.ln1_g = freeze(b.ln1_g);
        tb.ln1_b = freeze(b.ln1_b);
        tb.w_qkv = freeze(b.w_qkv);
        tb.b_qkv = freeze(b.b_qkv);
        tb.w_proj = freeze(b.w_proj);
        tb.b_proj = freeze(b.b_proj);
        tb.ln2_g = freeze(b.ln2_g);
        tb.ln2_b = freeze(b.ln2_b);
        tb.w_fc1 = freeze(b.w_fc1);
        tb.b_fc1 = freeze(b.b_fc1);
        tb.w_fc2 = freeze(b.w_fc2);
        tb.b_fc2 = freeze(b.b_fc2);
        e.blocks.push_back(std::move(tb));
    }
    e.lnf_g = freeze(src.lnf_g);
    e.lnf_b = freeze(src.lnf_b);
    return e;
}

}  // namespace

Tensor Encoder::embed(const Tensor& patches) const {
    return add(matmul(patches, w_patch), b_patch);
}

Tensor Encoder::forward(const Tensor& x_in, std::vector<Tensor>* taps) const {
    Tensor x = x_in;
    for (const TransformerBlock& b : blocks) {
        x = block_forward(b, x, cfg.heads);
        if (taps) taps->push_back(x);
    }
    x = layer_norm(x, lnf_g, lnf_b);
    if (taps && !taps->empty()) taps->back() = x;  // final tap is the encoder output
    return x;
}

void Encoder::collect(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".patch.w", w_patch);
    out.emplace_back(prefix + ".patch.b", b_patch);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        collect_block(blocks[i], prefix + ".blk" + std::to_string(i), out);
    }
    out.emplace_back(prefix + ".lnf.g", lnf_g);
    out.emplace_back(prefix + ".lnf.b", lnf_b);
}

void Predictor::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".in.w", w_in);
    out.emplace_back(prefix + ".in.b", b_in);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        collect_block(blocks[i], prefix + ".blk" + std::to_string(i), out);
    }
    out.emplace_back(prefix + ".lnf.g", lnf_g);
    out.emplace_back(prefix + ".lnf.b", lnf_b);
    out.emplace_back(prefix + ".out.w", w_out);
    out.emplace_back(prefix + ".out.b", b_out);
}

ModelBundle make_bundle(const EncoderConfig& enc_cfg, const PredictorConfig& pred_cfg,
                        bool share_predictors, bool share_mask_tokens, Rng& init_rng) {
    enc_cfg.validate();
    pred_cfg.validate(enc_cfg.embed_dim);
    ModelBundle m;
    m.enc_cfg = enc_cfg;
    m.pred_cfg = pred_cfg;
    m.share_predictors = share_predictors;
    m.share_mask_tokens = share_mask_tokens;

    m.student = make_encoder(enc_cfg, init_rng);
    m.predictor_c = make_predictor(pred_cfg, enc_cfg.embed_dim, init_rng);
    m.predictor_n = share_predictors ? m.predictor_c
                                     : make_predictor(pred_cfg, enc_cfg.embed_dim, init_rng);
    m.mask_token_c = weight_init(init_rng, {pred_cfg.embed_dim});
    m.mask_token_n = share_mask_tokens ? m.mask_token_c : weight_init(init_rng, {pred_cfg.embed_dim});

    m.teacher = clone_frozen(m.student);
    m.pos_enc = make_sincos_pos_embed(enc_cfg.grid_h, enc_cfg.grid_w, enc_cfg.embed_dim);
    m.pos_pred = make_sincos_pos_embed(enc_cfg.grid_h, enc_cfg.grid_w, pred_cfg.embed_dim);

    m.student.collect("student", m.student_encoder);
    m.teacher.collect("teacher", m.teacher_encoder);

    m.trainable = m.student_encoder;
    m.predictor_c.collect("pred_c", m.trainable);
    if (!share_predictors) m.predictor_n.collect("pred_n", m.trainable);
    m.trainable.emplace_back("mask_token.c", m.mask_token_c);
    if (!share_mask_tokens) m.trainable.emplace_back("mask_token.n", m.mask_token_n);
    return m;
}

std::int64_t parameter_count(const std::vector<std::pair<std::string, Tensor>>& params) {
    std::int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

// ---- patchify --------------------------------------------------------------------

Tensor patchify(const Tensor& images, int patch_size) {
    const int rank = images.ndim();
    if (rank != 3 && rank != 4) throw std::invalid_argument("patchify: expected (C,H,W) or (B,C,H,W)");
    const int B = rank == 4 ? images.dim(0) : 1;
    const int C = images.dim(rank - 3);
    const int H = images.dim(rank - 2);
    const int W = images.dim(rank - 1);
    if (H % patch_size != 0 || W % patch_size != 0) {
        throw std::invalid_argument("patchify: image sides not divisible by patch size");
    }
    const int gh = H / patch_size, gw = W / patch_size;
    const int N = gh * gw, P = patch_size * patch_size * C;
    Tensor out = rank == 4 ? Tensor::zeros({B, N, P}) : Tensor::zeros({N, P});
    const real* src = images.data();
    real* dst = out.data();
    for (int b = 0; b < B; ++b) {
        const real* img = src + static_cast<std::size_t>(b) * C * H * W;
        real* po = dst + static_cast<std::size_t>(b) * N * P;
        for (int gr = 0; gr < gh; ++gr) {
            for (int gc = 0; gc < gw; ++gc) {
                real* patch = po + static_cast<std::size_t>(gr * gw + gc) * P;
                int k = 0;
                for (int c = 0; c < C; ++c) {
                    for (int py = 0; py < patch_size; ++py) {
                        const real* row = img + (static_cast<std::size_t>(c) * H +
                                                 gr * patch_size + py) * W + gc * patch_size;
                        for (int px = 0; px < patch_size; ++px) patch[k++] = row[px];
                    }
                }
            }
        }
    }
    return out;
}

Tensor unpatchify(const Tensor& patches, int patch_size, int channels, int height, int width) {
    const int rank = patches.ndim();
    if (rank != 2 && rank != 3) throw std::invalid_argument("unpatchify: expected (N,P) or (B,N,P)");
    const int B = rank == 3 ? patches.dim(0) : 1;
    const int N = patches.dim(rank - 2);
    const int P = patches.dim(rank - 1);
    const int gh = height / patch_size, gw = width / patch_size;
    if (N != gh * gw || P != patch_size * patch_size * channels) {
        throw std::invalid_argument("unpatchify: geometry mismatch");
    }
    Tensor out = rank == 3 ? Tensor::zeros({B, channels, height, width})
                           : Tensor::zeros({channels, height, width});
    const real* src = patches.data();
    real* dst = out.data();
    for (int b = 0; b < B; ++b) {
        const real* po = src + static_cast<std::size_t>(b) * N * P;
        real* img = dst + static_cast<std::size_t>(b) * channels * height * width;
        for (int gr = 0; gr < gh; ++gr) {
            for (int gc = 0; gc < gw; ++gc) {
                const real* patch = po + static_cast<std::size_t>(gr * gw + gc) * P;
                int k = 0;
                for (int c = 0; c < channels; ++c) {
                    for (int py = 0; py < patch_size; ++py) {
                        real* row = img + (static_cast<std::size_t>(c) * height +
                                           gr * patch_size + py) * width + gc * patch_size;
                        for (int px = 0; px < patch_size; ++px) row[px] = patch[k++];
                    }
                }
            }
        }
    }
    return out;
}

Tensor make_sincos_pos_embed(int grid_h, int grid_w, int dim) {
    if (dim % 4 != 0) throw std::invalid_argument("pos embed dim must be divisible by 4");
    const int quarter = dim / 4;
    Tensor t = Tensor::zeros({grid_h * grid_w, dim});
    real* p = t.data();
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) {
            real* row = p + static_cast<std::size_t>(r * grid_w + c) * dim;
            for (int i = 0; i < quarter; ++i) {
                const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
                row[i] = static_cast<real>(std::sin(r * omega));
                row[quarter + i] = static_cast<real>(std::cos(r * omega));
                row[2 * quarter + i] = static_cast<real>(std::sin(c * omega));
                row[3 * quarter + i] = static_cast<real>(std::cos(c * omega));
            }
        }
    }
    return t;
}

// ---- encoder / predictor entry points -----------------------------------------------

Tensor encode_teacher(const ModelBundle& bundle, const Tensor& patches, std::vector<Tensor>* taps) {
    Tape::NoGrad ng;
    Tensor x = bundle.teacher.embed(patches);
    x = add(x, bundle.pos_enc);  // suffix broadcast covers both (N,D) and (B,N,D)
    return bundle.teacher.forward(x, taps);
}

Tensor encode_student(const ModelBundle& bundle, const Tensor& patches,
                      const std::vector<int>& context_indices, std::vector<Tensor>* taps) {
    if (context_indices.empty()) throw std::invalid_argument("encode_student: empty context");
    if (patches.ndim() != 2) throw std::invalid_argument("encode_student: expected (N, patch_dim)");
    Tensor visible = gather_rows(patches, context_indices);
    Tensor x = bundle.student.embed(visible);
    x = add(x, gather_rows(bundle.pos_enc, context_indices));
    return bundle.student.forward(x, taps);
}

Tensor predict(const ModelBundle& bundle, PredictorKind which, const Tensor& z_s,
               const std::vector<int>& target_positions, const Tensor& psi_target) {
    const Predictor& pred = which == PredictorKind::context ? bundle.predictor_c : bundle.predictor_n;
    const Tensor& mask_token = which == PredictorKind::context ? bundle.mask_token_c
                                                               : bundle.mask_token_n;
    const int n_targets = static_cast<int>(target_positions.size());
    if (psi_target.ndim() != 2 || psi_target.dim(0) != n_targets) {
        throw std::invalid_argument("predict: psi rows (" + shape_str(psi_target.shape()) +
                                    ") must match target token count " + std::to_string(n_targets));
    }
    if (psi_target.dim(1) != pred.cfg.embed_dim) {
        throw std::invalid_argument("predict: psi dim must equal the predictor embed dim");
    }
    const int n_ctx = z_s.dim(0);
    Tensor ctx = add(matmul(z_s, pred.w_in), pred.b_in);
    Tensor tgt = add(psi_target, mask_token);
    Tensor x = concat({ctx, tgt}, 0);
    for (const TransformerBlock& b : pred.blocks) x = block_forward(b, x, pred.cfg.heads);
    x = layer_norm(x, pred.lnf_g, pred.lnf_b);
    Tensor out_tokens = narrow(x, 0, n_ctx, n_targets);
    return add(matmul(out_tokens, pred.w_out), pred.b_out);
}

}  // namespace njepa
