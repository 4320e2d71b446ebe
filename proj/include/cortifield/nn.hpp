// The learnable conditioned field: a 3D convolutional encoder over the
// template-space volume, hypercolumn features interpolated at continuous
// coordinates, and a conditional-batch-norm decoder mapping a point and its
// hypercolumn to the four surface channels. Every layer carries hand-written
// forward and gradient rules; tests run the double instantiation, production
// runs float.
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cortifield/geom.hpp"
#include "cortifield/implicit.hpp"
#include "cortifield/rng.hpp"
#include "cortifield/volume.hpp"

namespace cf {

// --- dense containers -------------------------------------------------------

template <typename T>
struct Tensor4 {
    int c = 0, z = 0, y = 0, x = 0; // x fastest
    std::vector<T> v;

    int64_t size() const { return int64_t(c) * z * y * x; }
    int64_t plane() const { return int64_t(y) * x; }
    int64_t volume() const { return int64_t(z) * y * x; }
    void resize(int c_, int z_, int y_, int x_) {
        c = c_; z = z_; y = y_; x = x_;
        v.assign(static_cast<size_t>(size()), T(0));
    }
    T* channel(int ci) { return v.data() + static_cast<size_t>(ci) * volume(); }
    const T* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * volume(); }
};

template <typename T>
struct Matrix {
    int64_t rows = 0;
    int cols = 0;
    std::vector<T> v;

    void resize(int64_t r, int c) {
        rows = r; cols = c;
        v.assign(static_cast<size_t>(r) * c, T(0));
    }
    T* row(int64_t r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T* row(int64_t r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

// Named trainable block registered with the optimizer and the checkpoint.
template <typename T>
struct Param {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<T> value;
    std::vector<T> grad;

    void init(std::string n, std::vector<int64_t> s) {
        name = std::move(n);
        shape = std::move(s);
        int64_t total = 1;
        for (int64_t d : shape) total *= d;
        value.assign(static_cast<size_t>(total), T(0));
        grad.assign(static_cast<size_t>(total), T(0));
    }
    int64_t count() const { return static_cast<int64_t>(value.size()); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// --- primitive layers ---------------------------------------------------------

// 3^3 kernel, padding 1, configurable stride.
template <typename T>
class Conv3d {
public:
    Conv3d(std::string name, int cin, int cout, int stride, Rng& rng);

    Tensor4<T> forward(const Tensor4<T>& input);
    // Accumulates weight/bias grads; returns input grad unless skipped.
    Tensor4<T> backward(const Tensor4<T>& dy, bool need_input_grad);

    Param<T> weight; // [cout][cin][3][3][3]
    Param<T> bias;   // [cout]
    int cin, cout, stride;

private:
    Tensor4<T> cached_input_;
};

// 2^3 window, stride 2, ceil mode (windows clipped at the upper border).
template <typename T>
class MaxPool3d {
public:
    Tensor4<T> forward(const Tensor4<T>& input);
    Tensor4<T> backward(const Tensor4<T>& dy);

private:
    std::array<int, 4> in_dims_{};
    std::vector<int64_t> argmax_; // flat input index per output element
};

template <typename T>
void relu_inplace(std::vector<T>& v);
// Gradient gate from the cached *output* (y > 0 <=> x > 0 away from the kink).
template <typename T>
void relu_backward_inplace(std::vector<T>& dy, const std::vector<T>& y);

// Dense map on row-major point batches.
template <typename T>
class Fc {
public:
    Fc() = default;
    Fc(std::string name, int in, int out, Rng& rng);        // He-normal init
    Fc(std::string name, int in, int out, T weight_fill, T bias_fill); // constant init

    Matrix<T> forward(const Matrix<T>& x);
    Matrix<T> backward(const Matrix<T>& dy, bool need_input_grad = true);

    Param<T> weight; // [out][in]
    Param<T> bias;   // [out]
    int in = 0, out = 0;

private:
    Matrix<T> cached_input_;
};

// Batch normalization over the point axis with scale/shift produced from the
// conditioning vector by learned dense maps.
template <typename T>
class CondBatchNorm {
public:
    CondBatchNorm(std::string name, int features, int cond_dim);

    Matrix<T> forward(const Matrix<T>& x, const Matrix<T>& cond, bool train);
    // Returns dx; adds the conditioning gradient into dcond (same shape as cond).
    Matrix<T> backward(const Matrix<T>& dy, Matrix<T>& dcond);

    Fc<T> fc_gamma, fc_beta;
    std::vector<T> running_mean, running_var; // buffers, momentum 0.1
    std::string name;
    int features = 0;

    static constexpr double kMomentum = 0.1;
    static constexpr double kEps = 1e-5;

private:
    bool train_mode_ = true;
    Matrix<T> xhat_, gamma_;
    std::vector<T> inv_std_;
};

// --- encoder -----------------------------------------------------------------

struct EncoderConfig {
    int input_grid = 96;                       // template-space resample resolution
    std::vector<int> levels = {32, 64, 128, 128};
    int global_dim = 160;                      // final level flattened through an FC
    bool hypercolumns = true;                  // false: conditioning = global feature only

    int hypercolumn_dim() const {
        if (!hypercolumns) return global_dim;
        int total = global_dim;
        for (int c : levels) total += c;
        return total;
    }
    int level_extent(int k) const { // stride 1 at level 0, then stride 2
        int n = input_grid;
        for (int i = 1; i <= k; ++i) n = (n - 1) / 2 + 1;
        return n;
    }
    void validate() const;
};

template <typename T>
struct FeaturePyramid {
    std::vector<Tensor4<T>> levels; // post-activation maps, one per level
    std::vector<T> global;          // 1x1x1 global feature
};

template <typename T>
class Encoder {
public:
    Encoder(const EncoderConfig& cfg, Rng& rng);

    FeaturePyramid<T> forward(const Tensor4<T>& input);
    // Backward from pyramid gradients; input gradient is never needed.
    void backward(const FeaturePyramid<T>& grads);

    std::vector<Conv3d<T>> convs;
    Fc<T> global_fc;
    EncoderConfig cfg;

private:
    std::vector<Tensor4<T>> cached_outputs_; // post-ReLU level maps
    std::vector<T> cached_global_;
};

// --- decoder -----------------------------------------------------------------

struct DecoderConfig {
    int width = 256;
    int blocks = 5;
    void validate() const;
};

template <typename T>
class Decoder {
public:
    Decoder(const DecoderConfig& cfg, int cond_dim, Rng& rng);

    // pts_norm in [-1,1]^3; returns raw channel outputs [P][4].
    Matrix<T> forward(const Matrix<T>& pts_norm, const Matrix<T>& cond, bool train);
    // Returns gradient with respect to the conditioning matrix.
    Matrix<T> backward(const Matrix<T>& dy);

    struct Block {
        Fc<T> fc1, fc2;
        std::unique_ptr<CondBatchNorm<T>> cbn1, cbn2;
    };
    Fc<T> embed; // 3 -> width
    std::vector<Block> blocks;
    Fc<T> head;  // width -> 4
    DecoderConfig cfg;
    int cond_dim = 0;

private:
    std::vector<Matrix<T>> cached_h_;  // block inputs (for the skips)
    std::vector<Matrix<T>> cached_r1_; // first relu outputs per block
    std::vector<Matrix<T>> cached_r2_; // second relu outputs per block
};

// --- hypercolumns --------------------------------------------------------------

// Trilinear gather (and gradient scatter) of pyramid features at continuous
// template coordinates, concatenated in level order then the global feature.
template <typename T>
class HypercolumnSampler {
public:
    HypercolumnSampler(const EncoderConfig& cfg, const TemplateSpace& omega);

    Matrix<T> gather(const FeaturePyramid<T>& pyr, std::span<const Vec3> pts) const;
    // dcond [P][hyper_dim] -> accumulate into pyramid-shaped gradients.
    void scatter(const Matrix<T>& dcond, std::span<const Vec3> pts, FeaturePyramid<T>& grads) const;

private:
    EncoderConfig cfg_;
    TemplateSpace omega_;
};

// --- model ---------------------------------------------------------------------

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    Representation repr = Representation::sdf;
    TemplateSpace omega;
    uint64_t init_seed = 0;

    void validate() const;
    // Canonical text form; its FNV-1a digest keys checkpoint compatibility.
    std::string canonical_text(int scalar_bytes) const;
};

ModelConfig parse_model_config_text(const std::string& text, int expect_scalar_bytes);
uint64_t fnv1a64(const void* data, size_t n);

template <typename T>
class FieldModel {
public:
    explicit FieldModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    bool training() const { return train_; }
    void set_training(bool t) { train_ = t; }

    // input must be the cfg.encoder.input_grid^3 template resample.
    FeaturePyramid<T> encode(const Volume& template_volume);
    Matrix<T> hypercolumns(const FeaturePyramid<T>& pyr, std::span<const Vec3> pts) const;
    // Raw field outputs [P][4]; occupancy models emit logits here.
    Matrix<T> decode(std::span<const Vec3> pts, const Matrix<T>& cond);
    // Map a raw output to the field value consumed downstream (sigmoid for occ).
    static T field_value(T raw, Representation repr);

    // Backward pass helpers (training order: decode -> hypercolumn -> encoder).
    Matrix<T> decode_backward(const Matrix<T>& dpred);
    void hypercolumn_backward(const Matrix<T>& dcond, std::span<const Vec3> pts,
                              FeaturePyramid<T>& grads) const;
    void encode_backward(const FeaturePyramid<T>& grads);

    FeaturePyramid<T> zero_pyramid_grads() const;

    std::vector<Param<T>*> parameters();
    // Non-trainable state (CBN running statistics), also checkpointed.
    std::vector<std::pair<std::string, std::vector<T>*>> buffers();
    void zero_grads();

    Matrix<T> normalize_points(std::span<const Vec3> pts) const;

    Encoder<T>& encoder() { return *enc_; }
    Decoder<T>& decoder() { return *dec_; }

private:
    ModelConfig cfg_;
    std::unique_ptr<Encoder<T>> enc_;
    std::unique_ptr<Decoder<T>> dec_;
    std::unique_ptr<HypercolumnSampler<T>> hc_;
    bool train_ = true;
};

// --- losses ----------------------------------------------------------------------

template <typename T>
struct LossValue {
    T value;
    Matrix<T> grad; // d value / d pred
};

// Numerically stable binary cross-entropy on logits, mean over points x channels.
template <typename T>
LossValue<T> loss_bce_logits(const Matrix<T>& pred, const Matrix<T>& target);

// Mean absolute error.
template <typename T>
LossValue<T> loss_l1(const Matrix<T>& pred, const Matrix<T>& target);

// --- training ----------------------------------------------------------------------

struct TrainingConfig {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0; // decoupled, applied after the Adam step
    int batch_volumes = 5;
    int batch_points = 1024;
    int max_steps = 1000;
    uint64_t seed = 0;

    void validate() const;
};

template <typename T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::vector<Param<T>*> params);
    void step(const TrainingConfig& cfg);

    std::vector<std::vector<T>> m, v;
    int64_t t = 0;

private:
    std::vector<Param<T>*> params_;
};

struct TrainCase {
    Volume template_volume; // already registered + resampled to the encoder grid
    SamplePool pool;
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per step
    bool nan_loss = false;
};

// Minimizes the pooled empirical risk with Adam. Deterministic per seed and
// worker count; gradient accumulation order is fixed.
template <typename T>
TrainResult train(FieldModel<T>& model, AdamOptimizer<T>& opt, const std::vector<TrainCase>& dataset,
                  const TrainingConfig& cfg);

// --- checkpointing ----------------------------------------------------------------

template <typename T>
void save_checkpoint(const std::string& path, FieldModel<T>& model, AdamOptimizer<T>* opt);

template <typename T>
struct LoadedCheckpoint {
    std::unique_ptr<FieldModel<T>> model;
    std::unique_ptr<AdamOptimizer<T>> optimizer; // null when none was saved
};

// Builds a model from the stored config; throws version_mismatch on a digest
// or dtype mismatch and corrupt_checkpoint on malformed data.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

// Loads into an existing model; the stored config must digest-match.
template <typename T>
void load_checkpoint_into(const std::string& path, FieldModel<T>& model, AdamOptimizer<T>* opt);

// Header-only peek used by the CLI info subcommand.
std::string checkpoint_config_text(const std::string& path);

} // namespace cf
