#pragma once

// Patchification, sinusoidal position tables, pre-norm transformer blocks,
// the student/teacher encoder pair, and the two predictor networks.

#include <string>
#include <utility>
#include <vector>

#include "njepa/rng.hpp"
#include "njepa/tensor.hpp"

namespace njepa {

struct EncoderConfig {
    int grid_h = 8, grid_w = 8;
    int patch_size = 4;
    int in_chans = 3;
    int embed_dim = 64;
    int depth = 4;
    int heads = 4;
    int n_patches() const { return grid_h * grid_w; }
    int patch_dim() const { return patch_size * patch_size * in_chans; }
    void validate() const;
};

struct PredictorConfig {
    int embed_dim = 32;
    int depth = 2;
    int heads = 4;
    int out_dim = 64;  // must equal the encoder embed_dim
    void validate(int encoder_embed_dim) const;
};

// One pre-norm block: LN -> MHSA -> residual, LN -> GELU MLP (ratio 4) -> residual.
struct TransformerBlock {
    Tensor ln1_g, ln1_b, w_qkv, b_qkv, w_proj, b_proj;
    Tensor ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;
};

// Runs on (tokens, dim) or (batch, tokens, dim) sequences.
Tensor block_forward(const TransformerBlock& blk, const Tensor& x, int heads);

struct Encoder {
    EncoderConfig cfg;
    Tensor w_patch, b_patch;  // patch_dim -> embed_dim
    std::vector<TransformerBlock> blocks;
    Tensor lnf_g, lnf_b;

    Tensor embed(const Tensor& patches) const;  // linear patch projection
    // Input must already be embedded and positioned. When taps is given it
    // receives each block's output; the final entry is the post-final-norm
    // encoder output.
    Tensor forward(const Tensor& x, std::vector<Tensor>* taps = nullptr) const;
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct Predictor {
    PredictorConfig cfg;
    Tensor w_in, b_in;  // encoder dim -> predictor dim bridge
    std::vector<TransformerBlock> blocks;
    Tensor lnf_g, lnf_b;
    Tensor w_out, b_out;  // predictor dim -> encoder dim bridge
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct ModelBundle {
    EncoderConfig enc_cfg;
    PredictorConfig pred_cfg;
    bool share_predictors = false;
    bool share_mask_tokens = false;

    Encoder student, teacher;
    Predictor predictor_c, predictor_n;  // same underlying tensors when shared
    Tensor mask_token_c, mask_token_n;
    Tensor pos_enc;   // (N, embed_dim), fixed sinusoidal
    Tensor pos_pred;  // (N, predictor embed_dim), fixed sinusoidal

    // Unique optimized leaves: student encoder, both predictors, mask tokens.
    std::vector<std::pair<std::string, Tensor>> trainable;
    // EMA source/destination pairs in matching order.
    std::vector<std::pair<std::string, Tensor>> student_encoder;
    std::vector<std::pair<std::string, Tensor>> teacher_encoder;
};

ModelBundle make_bundle(const EncoderConfig& enc_cfg, const PredictorConfig& pred_cfg,
                        bool share_predictors, bool share_mask_tokens, Rng& init_rng);

std::int64_t parameter_count(const std::vector<std::pair<std::string, Tensor>>& params);

// (C,H,W) -> (N, patch^2*C) or (B,C,H,W) -> (B, N, patch^2*C); row-major
// patch order, channel-major within a patch. unpatchify inverts it.
Tensor patchify(const Tensor& images, int patch_size);
Tensor unpatchify(const Tensor& patches, int patch_size, int channels, int height, int width);

// Fixed 2-D sin/cos table, (grid_h*grid_w, dim); dim must be divisible by 4.
Tensor make_sincos_pos_embed(int grid_h, int grid_w, int dim);

enum class PredictorKind { context, noise };

// Teacher forward over the full patch sequence, never recording gradients.
// Accepts (N, patch_dim) or (B, N, patch_dim).
Tensor encode_teacher(const ModelBundle& bundle, const Tensor& patches,
                      std::vector<Tensor>* taps = nullptr);

// Student forward over the visible subset of one image's patches; output
// rows follow context_indices order.
Tensor encode_student(const ModelBundle& bundle, const Tensor& patches,
                      const std::vector<int>& context_indices,
                      std::vector<Tensor>* taps = nullptr);

// Predicts target-token representations for one block: the input sequence is
// the bridged context tokens followed by (mask token + psi row) per target
// token; psi_target rows are clean for the context predictor and noised for
// the noise predictor.
Tensor predict(const ModelBundle& bundle, PredictorKind which, const Tensor& z_s,
               const std::vector<int>& target_positions, const Tensor& psi_target);

}  // namespace njepa
