#include <cmath>
#include <cstring>
#include <sstream>

#include "cortifield/errors.hpp"
#include "cortifield/nn.hpp"
#include "cortifield/parallel.hpp"

namespace cf {

void EncoderConfig::validate() const {
    require(input_grid >= 4, errc::invalid_argument, "encoder input grid must be >= 4");
    require(!levels.empty(), errc::invalid_argument, "encoder needs at least one level");
    for (int c : levels) require(c > 0, errc::invalid_argument, "encoder channel counts must be positive");
    require(global_dim > 0, errc::invalid_argument, "global feature dim must be positive");
    require(level_extent(static_cast<int>(levels.size()) - 1) >= 1, errc::invalid_argument,
            "encoder input grid too small for the level count");
}

void DecoderConfig::validate() const {
    require(width > 0 && blocks > 0, errc::invalid_argument, "decoder width/blocks must be positive");
}

void ModelConfig::validate() const {
    encoder.validate();
    decoder.validate();
    require(omega.bbox_min.x < omega.bbox_max.x && omega.bbox_min.y < omega.bbox_max.y &&
                omega.bbox_min.z < omega.bbox_max.z,
            errc::invalid_argument, "template bbox must be nonempty");
}

// --- Encoder -----------------------------------------------------------------

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg_, Rng& rng) : cfg(cfg_) {
    cfg.validate();
    int cin = 1;
    for (size_t l = 0; l < cfg.levels.size(); ++l) {
        const int stride = l == 0 ? 1 : 2;
        convs.emplace_back("encoder.conv" + std::to_string(l), cin, cfg.levels[l], stride, rng);
        cin = cfg.levels[l];
    }
    const int last = static_cast<int>(cfg.levels.size()) - 1;
    const int n_last = cfg.level_extent(last);
    const int flat = cfg.levels[static_cast<size_t>(last)] * n_last * n_last * n_last;
    global_fc = Fc<T>("encoder.global_fc", flat, cfg.global_dim, rng);
}

template <typename T>
FeaturePyramid<T> Encoder<T>::forward(const Tensor4<T>& input) {
    require(input.c == 1 && input.z == cfg.input_grid && input.y == cfg.input_grid && input.x == cfg.input_grid,
            errc::shape_mismatch, "encoder input must be a 1-channel cube of side " +
                                      std::to_string(cfg.input_grid));
    FeaturePyramid<T> pyr;
    cached_outputs_.clear();
    Tensor4<T> cur = input;
    for (auto& conv : convs) {
        cur = conv.forward(cur);
        relu_inplace(cur.v);
        cached_outputs_.push_back(cur);
        pyr.levels.push_back(cur);
    }
    Matrix<T> flat;
    flat.resize(1, static_cast<int>(cur.size()));
    std::copy(cur.v.begin(), cur.v.end(), flat.v.begin());
    Matrix<T> g = global_fc.forward(flat);
    relu_inplace(g.v);
    cached_global_ = g.v;
    pyr.global = g.v;
    return pyr;
}

template <typename T>
void Encoder<T>::backward(const FeaturePyramid<T>& grads) {
    // Global head first; its input gradient joins the last level's gradient.
    Matrix<T> dg;
    dg.resize(1, static_cast<int>(cached_global_.size()));
    dg.v = grads.global;
    relu_backward_inplace(dg.v, cached_global_);
    Matrix<T> dflat = global_fc.backward(dg);

    Tensor4<T> dcur = grads.levels.back();
    for (size_t i = 0; i < dcur.v.size(); ++i) dcur.v[i] += dflat.v[i];

    for (int l = static_cast<int>(convs.size()) - 1; l >= 0; --l) {
        relu_backward_inplace(dcur.v, cached_outputs_[static_cast<size_t>(l)].v);
        Tensor4<T> dprev = convs[static_cast<size_t>(l)].backward(dcur, l > 0);
        if (l > 0) {
            dcur = std::move(dprev);
            for (size_t i = 0; i < dcur.v.size(); ++i)
                dcur.v[i] += grads.levels[static_cast<size_t>(l - 1)].v[i];
        }
    }
}

// --- HypercolumnSampler --------------------------------------------------------

template <typename T>
HypercolumnSampler<T>::HypercolumnSampler(const EncoderConfig& cfg, const TemplateSpace& omega)
    : cfg_(cfg), omega_(omega) {}

namespace {
struct Stencil {
    int i0, j0, k0;
    double fx, fy, fz;
};

// Continuous index in a level grid: input voxel coordinates divided by the
// cumulative stride, clamped to the map border.
inline Stencil stencil_for(const Vec3& p, const TemplateSpace& omega, int input_grid, int level_extent,
                           int stride_pow) {
    const Vec3 ext = omega.bbox_max - omega.bbox_min;
    const double sx = ext.x / (input_grid - 1), sy = ext.y / (input_grid - 1), sz = ext.z / (input_grid - 1);
    const double scale = 1.0 / double(1 << stride_pow);
    auto clampc = [&](double c) {
        if (c < 0.0) return 0.0;
        const double hi = double(level_extent - 1);
        return c > hi ? hi : c;
    };
    const double cx = clampc((p.x - omega.bbox_min.x) / sx * scale);
    const double cy = clampc((p.y - omega.bbox_min.y) / sy * scale);
    const double cz = clampc((p.z - omega.bbox_min.z) / sz * scale);
    Stencil s;
    s.i0 = static_cast<int>(cx);
    s.j0 = static_cast<int>(cy);
    s.k0 = static_cast<int>(cz);
    if (s.i0 >= level_extent - 1) s.i0 = level_extent > 1 ? level_extent - 2 : 0;
    if (s.j0 >= level_extent - 1) s.j0 = level_extent > 1 ? level_extent - 2 : 0;
    if (s.k0 >= level_extent - 1) s.k0 = level_extent > 1 ? level_extent - 2 : 0;
    s.fx = cx - s.i0;
    s.fy = cy - s.j0;
    s.fz = cz - s.k0;
    return s;
}
} // namespace

template <typename T>
Matrix<T> HypercolumnSampler<T>::gather(const FeaturePyramid<T>& pyr, std::span<const Vec3> pts) const {
    const int dim = cfg_.hypercolumn_dim();
    Matrix<T> cond;
    cond.resize(static_cast<int64_t>(pts.size()), dim);
    const int64_t P = static_cast<int64_t>(pts.size());
    parallel_ranges(P, 256, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            T* out = cond.row(r);
            int offset = 0;
            if (cfg_.hypercolumns) {
                for (size_t l = 0; l < pyr.levels.size(); ++l) {
                    const Tensor4<T>& map = pyr.levels[l];
                    const Stencil s = stencil_for(pts[static_cast<size_t>(r)], omega_, cfg_.input_grid, map.x,
                                                  static_cast<int>(l));
                    const double wx[2] = {1.0 - s.fx, s.fx};
                    const double wy[2] = {1.0 - s.fy, s.fy};
                    const double wz[2] = {1.0 - s.fz, s.fz};
                    for (int c = 0; c < map.c; ++c) {
                        const T* mb = map.channel(c);
                        double acc = 0.0;
                        for (int dk = 0; dk < 2; ++dk)
                            for (int dj = 0; dj < 2; ++dj)
                                for (int di = 0; di < 2; ++di) {
                                    const int ii = s.i0 + di < map.x ? s.i0 + di : map.x - 1;
                                    const int jj = s.j0 + dj < map.y ? s.j0 + dj : map.y - 1;
                                    const int kk = s.k0 + dk < map.z ? s.k0 + dk : map.z - 1;
                                    acc += wx[di] * wy[dj] * wz[dk] *
                                           double(mb[(int64_t(kk) * map.y + jj) * map.x + ii]);
                                }
                        out[offset + c] = static_cast<T>(acc);
                    }
                    offset += map.c;
                }
            }
            for (size_t g = 0; g < pyr.global.size(); ++g) out[offset + static_cast<int>(g)] = pyr.global[g];
        }
    });
    return cond;
}

template <typename T>
void HypercolumnSampler<T>::scatter(const Matrix<T>& dcond, std::span<const Vec3> pts,
                                    FeaturePyramid<T>& grads) const {
    const int64_t P = dcond.rows;
    // Scatter-add overlaps between points, so this stays serial (it is cheap
    // next to the decoder) and therefore order-fixed.
    for (int64_t r = 0; r < P; ++r) {
        const T* g = dcond.row(r);
        int offset = 0;
        if (cfg_.hypercolumns) {
            for (size_t l = 0; l < grads.levels.size(); ++l) {
                Tensor4<T>& map = grads.levels[l];
                const Stencil s =
                    stencil_for(pts[static_cast<size_t>(r)], omega_, cfg_.input_grid, map.x, static_cast<int>(l));
                const double wx[2] = {1.0 - s.fx, s.fx};
                const double wy[2] = {1.0 - s.fy, s.fy};
                const double wz[2] = {1.0 - s.fz, s.fz};
                for (int c = 0; c < map.c; ++c) {
                    T* mb = map.channel(c);
                    const T gv = g[offset + c];
                    if (gv == T(0)) continue;
                    for (int dk = 0; dk < 2; ++dk)
                        for (int dj = 0; dj < 2; ++dj)
                            for (int di = 0; di < 2; ++di) {
                                const int ii = s.i0 + di < map.x ? s.i0 + di : map.x - 1;
                                const int jj = s.j0 + dj < map.y ? s.j0 + dj : map.y - 1;
                                const int kk = s.k0 + dk < map.z ? s.k0 + dk : map.z - 1;
                                mb[(int64_t(kk) * map.y + jj) * map.x + ii] +=
                                    static_cast<T>(wx[di] * wy[dj] * wz[dk]) * gv;
                            }
                }
                offset += map.c;
            }
        }
        for (size_t gi = 0; gi < grads.global.size(); ++gi) grads.global[gi] += g[offset + static_cast<int>(gi)];
    }
}

// --- Decoder ---------------------------------------------------------------------

template <typename T>
Decoder<T>::Decoder(const DecoderConfig& cfg_, int cond_dim_, Rng& rng) : cfg(cfg_), cond_dim(cond_dim_) {
    cfg.validate();
    embed = Fc<T>("decoder.embed", 3, cfg.width, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string base = "decoder.block" + std::to_string(b);
        Block blk;
        blk.fc1 = Fc<T>(base + ".fc1", cfg.width, cfg.width, rng);
        blk.fc2 = Fc<T>(base + ".fc2", cfg.width, cfg.width, rng);
        blk.cbn1 = std::make_unique<CondBatchNorm<T>>(base + ".cbn1", cfg.width, cond_dim);
        blk.cbn2 = std::make_unique<CondBatchNorm<T>>(base + ".cbn2", cfg.width, cond_dim);
        blocks.push_back(std::move(blk));
    }
    head = Fc<T>("decoder.head", cfg.width, 4, rng);
}

template <typename T>
Matrix<T> Decoder<T>::forward(const Matrix<T>& pts_norm, const Matrix<T>& cond, bool train) {
    require(cond.cols == cond_dim, errc::shape_mismatch, "decoder: conditioning width mismatch");
    cached_h_.clear();
    cached_r1_.clear();
    cached_r2_.clear();
    Matrix<T> h = embed.forward(pts_norm);
    for (auto& blk : blocks) {
        cached_h_.push_back(h);
        Matrix<T> t = blk.fc1.forward(h);
        t = blk.cbn1->forward(t, cond, train);
        relu_inplace(t.v);
        cached_r1_.push_back(t);
        t = blk.fc2.forward(t);
        t = blk.cbn2->forward(t, cond, train);
        relu_inplace(t.v);
        cached_r2_.push_back(t);
        for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += t.v[i];
    }
    return head.forward(h);
}

template <typename T>
Matrix<T> Decoder<T>::backward(const Matrix<T>& dy) {
    Matrix<T> dcond;
    dcond.resize(dy.rows, cond_dim);
    Matrix<T> dh = head.backward(dy);
    for (int b = static_cast<int>(blocks.size()) - 1; b >= 0; --b) {
        Block& blk = blocks[static_cast<size_t>(b)];
        Matrix<T> dt = dh; // branch gradient; dh continues into the skip
        relu_backward_inplace(dt.v, cached_r2_[static_cast<size_t>(b)].v);
        dt = blk.cbn2->backward(dt, dcond);
        dt = blk.fc2.backward(dt);
        relu_backward_inplace(dt.v, cached_r1_[static_cast<size_t>(b)].v);
        dt = blk.cbn1->backward(dt, dcond);
        dt = blk.fc1.backward(dt);
        for (size_t i = 0; i < dh.v.size(); ++i) dh.v[i] += dt.v[i];
    }
    embed.backward(dh, false);
    return dcond;
}

// --- FieldModel --------------------------------------------------------------------

template <typename T>
FieldModel<T>::FieldModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.init_seed);
    enc_ = std::make_unique<Encoder<T>>(cfg.encoder, rng);
    dec_ = std::make_unique<Decoder<T>>(cfg.decoder, cfg.encoder.hypercolumn_dim(), rng);
    hc_ = std::make_unique<HypercolumnSampler<T>>(cfg.encoder, cfg.omega);
}

template <typename T>
FeaturePyramid<T> FieldModel<T>::encode(const Volume& vol) {
    const int n = cfg_.encoder.input_grid;
    require(vol.dims[0] == n && vol.dims[1] == n && vol.dims[2] == n, errc::shape_mismatch,
            "encoder expects a " + std::to_string(n) + "^3 template-grid volume");
    Tensor4<T> input;
    input.resize(1, n, n, n);
    for (int64_t i = 0; i < vol.size(); ++i) input.v[static_cast<size_t>(i)] = static_cast<T>(vol.data[static_cast<size_t>(i)]);
    return enc_->forward(input);
}

template <typename T>
Matrix<T> FieldModel<T>::hypercolumns(const FeaturePyramid<T>& pyr, std::span<const Vec3> pts) const {
    return hc_->gather(pyr, pts);
}

template <typename T>
Matrix<T> FieldModel<T>::normalize_points(std::span<const Vec3> pts) const {
    const Box3 box = cfg_.omega.box();
    const Vec3 c = box.center();
    const Vec3 half = box.extent() * 0.5;
    Matrix<T> m;
    m.resize(static_cast<int64_t>(pts.size()), 3);
    for (int64_t r = 0; r < m.rows; ++r) {
        const Vec3& p = pts[static_cast<size_t>(r)];
        T* row = m.row(r);
        row[0] = static_cast<T>((p.x - c.x) / half.x);
        row[1] = static_cast<T>((p.y - c.y) / half.y);
        row[2] = static_cast<T>((p.z - c.z) / half.z);
    }
    return m;
}

template <typename T>
Matrix<T> FieldModel<T>::decode(std::span<const Vec3> pts, const Matrix<T>& cond) {
    const Matrix<T> pn = normalize_points(pts);
    return dec_->forward(pn, cond, train_);
}

template <typename T>
T FieldModel<T>::field_value(T raw, Representation repr) {
    if (repr == Representation::sdf) return raw;
    // logistic map; the occupancy level set lives at probability 1/2
    if (raw >= T(0)) return T(1) / (T(1) + std::exp(-raw));
    const T e = std::exp(raw);
    return e / (T(1) + e);
}

template <typename T>
Matrix<T> FieldModel<T>::decode_backward(const Matrix<T>& dpred) {
    return dec_->backward(dpred);
}

template <typename T>
void FieldModel<T>::hypercolumn_backward(const Matrix<T>& dcond, std::span<const Vec3> pts,
                                         FeaturePyramid<T>& grads) const {
    hc_->scatter(dcond, pts, grads);
}

template <typename T>
void FieldModel<T>::encode_backward(const FeaturePyramid<T>& grads) {
    enc_->backward(grads);
}

template <typename T>
FeaturePyramid<T> FieldModel<T>::zero_pyramid_grads() const {
    FeaturePyramid<T> g;
    for (size_t l = 0; l < cfg_.encoder.levels.size(); ++l) {
        Tensor4<T> t;
        const int n = cfg_.encoder.level_extent(static_cast<int>(l));
        t.resize(cfg_.encoder.levels[l], n, n, n);
        g.levels.push_back(std::move(t));
    }
    g.global.assign(static_cast<size_t>(cfg_.encoder.global_dim), T(0));
    return g;
}

template <typename T>
std::vector<Param<T>*> FieldModel<T>::parameters() {
    std::vector<Param<T>*> out;
    for (auto& conv : enc_->convs) {
        out.push_back(&conv.weight);
        out.push_back(&conv.bias);
    }
    out.push_back(&enc_->global_fc.weight);
    out.push_back(&enc_->global_fc.bias);
    out.push_back(&dec_->embed.weight);
    out.push_back(&dec_->embed.bias);
    for (auto& blk : dec_->blocks) {
        out.push_back(&blk.fc1.weight);
        out.push_back(&blk.fc1.bias);
        out.push_back(&blk.cbn1->fc_gamma.weight);
        out.push_back(&blk.cbn1->fc_gamma.bias);
        out.push_back(&blk.cbn1->fc_beta.weight);
        out.push_back(&blk.cbn1->fc_beta.bias);
        out.push_back(&blk.fc2.weight);
        out.push_back(&blk.fc2.bias);
        out.push_back(&blk.cbn2->fc_gamma.weight);
        out.push_back(&blk.cbn2->fc_gamma.bias);
        out.push_back(&blk.cbn2->fc_beta.weight);
        out.push_back(&blk.cbn2->fc_beta.bias);
    }
    out.push_back(&dec_->head.weight);
    out.push_back(&dec_->head.bias);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> FieldModel<T>::buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    for (auto& blk : dec_->blocks) {
        out.emplace_back(blk.cbn1->name + ".running_mean", &blk.cbn1->running_mean);
        out.emplace_back(blk.cbn1->name + ".running_var", &blk.cbn1->running_var);
        out.emplace_back(blk.cbn2->name + ".running_mean", &blk.cbn2->running_mean);
        out.emplace_back(blk.cbn2->name + ".running_var", &blk.cbn2->running_var);
    }
    return out;
}

template <typename T>
void FieldModel<T>::zero_grads() {
    for (Param<T>* p : parameters()) p->zero_grad();
}

// --- losses ---------------------------------------------------------------------

template <typename T>
LossValue<T> loss_bce_logits(const Matrix<T>& pred, const Matrix<T>& target) {
    require(pred.rows == target.rows && pred.cols == target.cols, errc::shape_mismatch,
            "bce: pred/target shape mismatch");
    LossValue<T> out;
    out.grad.resize(pred.rows, pred.cols);
    double acc = 0.0;
    const double inv_n = 1.0 / (double(pred.rows) * pred.cols);
    for (int64_t r = 0; r < pred.rows; ++r) {
        const T* z = pred.row(r);
        const T* t = target.row(r);
        T* g = out.grad.row(r);
        for (int c = 0; c < pred.cols; ++c) {
            const double zz = double(z[c]), tt = double(t[c]);
            acc += std::fmax(zz, 0.0) - zz * tt + std::log1p(std::exp(-std::fabs(zz)));
            const double sig = zz >= 0.0 ? 1.0 / (1.0 + std::exp(-zz)) : std::exp(zz) / (1.0 + std::exp(zz));
            g[c] = static_cast<T>((sig - tt) * inv_n);
        }
    }
    out.value = static_cast<T>(acc * inv_n);
    return out;
}

template <typename T>
LossValue<T> loss_l1(const Matrix<T>& pred, const Matrix<T>& target) {
    require(pred.rows == target.rows && pred.cols == target.cols, errc::shape_mismatch,
            "l1: pred/target shape mismatch");
    LossValue<T> out;
    out.grad.resize(pred.rows, pred.cols);
    double acc = 0.0;
    const double inv_n = 1.0 / (double(pred.rows) * pred.cols);
    for (int64_t r = 0; r < pred.rows; ++r) {
        const T* p = pred.row(r);
        const T* t = target.row(r);
        T* g = out.grad.row(r);
        for (int c = 0; c < pred.cols; ++c) {
            const double d = double(p[c]) - double(t[c]);
            acc += std::fabs(d);
            g[c] = static_cast<T>(d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0));
        }
    }
    out.value = static_cast<T>(acc * inv_n);
    return out;
}

// --- config text / digest ---------------------------------------------------------

uint64_t fnv1a64(const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string ModelConfig::canonical_text(int scalar_bytes) const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "scalar_bytes=" << scalar_bytes << "\n";
    ss << "repr=" << representation_name(repr) << "\n";
    ss << "omega_min=" << omega.bbox_min.x << " " << omega.bbox_min.y << " " << omega.bbox_min.z << "\n";
    ss << "omega_max=" << omega.bbox_max.x << " " << omega.bbox_max.y << " " << omega.bbox_max.z << "\n";
    ss << "omega_name=" << omega.name << "\n";
    ss << "input_grid=" << encoder.input_grid << "\n";
    ss << "levels=";
    for (size_t i = 0; i < encoder.levels.size(); ++i) ss << (i ? " " : "") << encoder.levels[i];
    ss << "\n";
    ss << "global_dim=" << encoder.global_dim << "\n";
    ss << "hypercolumns=" << (encoder.hypercolumns ? 1 : 0) << "\n";
    ss << "decoder_width=" << decoder.width << "\n";
    ss << "decoder_blocks=" << decoder.blocks << "\n";
    ss << "init_seed=" << init_seed << "\n";
    return ss.str();
}

ModelConfig parse_model_config_text(const std::string& text, int expect_scalar_bytes) {
    ModelConfig cfg;
    std::istringstream ss(text);
    std::string line;
    int scalar_bytes = 0;
    while (std::getline(ss, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        std::istringstream vs(val);
        if (key == "scalar_bytes") vs >> scalar_bytes;
        else if (key == "repr") cfg.repr = representation_from_name(val);
        else if (key == "omega_min") vs >> cfg.omega.bbox_min.x >> cfg.omega.bbox_min.y >> cfg.omega.bbox_min.z;
        else if (key == "omega_max") vs >> cfg.omega.bbox_max.x >> cfg.omega.bbox_max.y >> cfg.omega.bbox_max.z;
        else if (key == "omega_name") cfg.omega.name = val;
        else if (key == "input_grid") vs >> cfg.encoder.input_grid;
        else if (key == "levels") {
            cfg.encoder.levels.clear();
            int c;
            while (vs >> c) cfg.encoder.levels.push_back(c);
        } else if (key == "global_dim") vs >> cfg.encoder.global_dim;
        else if (key == "hypercolumns") {
            int h;
            vs >> h;
            cfg.encoder.hypercolumns = h != 0;
        } else if (key == "decoder_width") vs >> cfg.decoder.width;
        else if (key == "decoder_blocks") vs >> cfg.decoder.blocks;
        else if (key == "init_seed") vs >> cfg.init_seed;
    }
    require(scalar_bytes == expect_scalar_bytes, errc::version_mismatch,
            "checkpoint scalar width " + std::to_string(scalar_bytes) + " does not match this model (" +
                std::to_string(expect_scalar_bytes) + ")");
    cfg.validate();
    return cfg;
}

// --- explicit instantiations --------------------------------------------------------

template class Encoder<float>;
template class Encoder<double>;
template class HypercolumnSampler<float>;
template class HypercolumnSampler<double>;
template class Decoder<float>;
template class Decoder<double>;
template class FieldModel<float>;
template class FieldModel<double>;
template LossValue<float> loss_bce_logits<float>(const Matrix<float>&, const Matrix<float>&);
template LossValue<double> loss_bce_logits<double>(const Matrix<double>&, const Matrix<double>&);
template LossValue<float> loss_l1<float>(const Matrix<float>&, const Matrix<float>&);
template LossValue<double> loss_l1<double>(const Matrix<double>&, const Matrix<double>&);

} // namespace cf
