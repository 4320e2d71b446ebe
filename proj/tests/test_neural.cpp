#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "cortifield/errors.hpp"
#include "cortifield/nn.hpp"
#include "support/oracles.hpp"

using namespace cf;
using namespace cf::testing;

namespace {

constexpr double kH = 1e-5;

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("cortifield_test_" + name)).string();
}

template <typename Fill>
Tensor4<double> random_tensor(int c, int n, Rng& rng, Fill fill) {
    Tensor4<double> t;
    t.resize(c, n, n, n);
    for (double& v : t.v) v = fill(rng);
    return t;
}

Matrix<double> random_matrix(int64_t rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix<double> m;
    m.resize(rows, cols);
    for (double& v : m.v) v = scale * rng.normal();
    return m;
}

double weighted_sum(const std::vector<double>& values, const std::vector<double>& weights) {
    double acc = 0.0;
    for (size_t i = 0; i < values.size(); ++i) acc += values[i] * weights[i];
    return acc;
}

// Indices probed per parameter block (keeps FD suites fast but representative).
std::vector<size_t> probe_indices(size_t count, size_t want, Rng& rng) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < want && i < count; ++i) idx.push_back(rng.below(count));
    idx.push_back(0);
    idx.push_back(count - 1);
    return idx;
}

} // namespace

TEST_CASE("conv3d with zero weights emits its bias") {
    Rng rng(1);
    Conv3d<double> conv("t", 2, 3, 2, rng);
    std::fill(conv.weight.value.begin(), conv.weight.value.end(), 0.0);
    conv.bias.value = {0.5, -1.25, 2.0};
    const Tensor4<double> x = random_tensor(2, 5, rng, [](Rng& r) { return r.normal(); });
    Conv3d<double> work = conv;
    const Tensor4<double> y = work.forward(x);
    CHECK(y.c == 3);
    CHECK(y.z == 3); // ceil(5/2)
    for (int c = 0; c < 3; ++c)
        for (int64_t i = 0; i < y.volume(); ++i) CHECK(y.channel(c)[i] == conv.bias.value[static_cast<size_t>(c)]);
}

TEST_CASE("relu backward gates negative inputs to zero") {
    std::vector<double> x = {-1.0, 2.0, 0.0, -0.5};
    std::vector<double> y = x;
    relu_inplace(y);
    std::vector<double> dy = {1.0, 1.0, 1.0, 1.0};
    relu_backward_inplace(dy, y);
    CHECK(dy == std::vector<double>{0.0, 1.0, 0.0, 0.0});
}

TEST_CASE("conv3d gradients match finite differences") {
    for (int stride : {1, 2}) {
        CAPTURE(stride);
        Rng rng(17 + static_cast<uint64_t>(stride));
        Conv3d<double> conv("t", 2, 3, stride, rng);
        Tensor4<double> x = random_tensor(2, 5, rng, [](Rng& r) { return r.normal(); });
        Tensor4<double> y0 = conv.forward(x);
        std::vector<double> lw(static_cast<size_t>(y0.size()));
        for (double& w : lw) w = rng.normal();

        Tensor4<double> dy;
        dy.resize(y0.c, y0.z, y0.y, y0.x);
        dy.v = lw;
        conv.weight.zero_grad();
        conv.bias.zero_grad();
        const Tensor4<double> dx = conv.backward(dy, true);

        auto loss = [&] { return weighted_sum(conv.forward(x).v, lw); };
        Rng pick(5);
        for (size_t i : probe_indices(conv.weight.value.size(), 12, pick)) {
            const double fd = central_difference(loss, conv.weight.value[i], kH);
            CHECK(grad_rel_err(conv.weight.grad[i], fd) < 1e-6);
        }
        for (size_t i : probe_indices(conv.bias.value.size(), 3, pick)) {
            const double fd = central_difference(loss, conv.bias.value[i], kH);
            CHECK(grad_rel_err(conv.bias.grad[i], fd) < 1e-6);
        }
        for (size_t i : probe_indices(x.v.size(), 12, pick)) {
            const double fd = central_difference(loss, x.v[i], kH);
            CHECK(grad_rel_err(dx.v[i], fd) < 1e-6);
        }
    }
}

TEST_CASE("maxpool3d forward/backward and finite differences") {
    Rng rng(23);
    MaxPool3d<double> pool;
    Tensor4<double> x = random_tensor(2, 5, rng, [](Rng& r) { return r.normal(); }); // odd: ceil mode
    Tensor4<double> y0 = pool.forward(x);
    CHECK(y0.z == 3);
    std::vector<double> lw(static_cast<size_t>(y0.size()));
    for (double& w : lw) w = rng.normal();
    Tensor4<double> dy;
    dy.resize(y0.c, y0.z, y0.y, y0.x);
    dy.v = lw;
    const Tensor4<double> dx = pool.backward(dy);
    auto loss = [&] {
        MaxPool3d<double> fresh;
        return weighted_sum(fresh.forward(x).v, lw);
    };
    Rng pick(6);
    for (size_t i : probe_indices(x.v.size(), 24, pick)) {
        const double fd = central_difference(loss, x.v[i], kH);
        CHECK(grad_rel_err(dx.v[i], fd) < 1e-6);
    }
}

TEST_CASE("fully connected gradients match finite differences") {
    Rng rng(31);
    Fc<double> fc("t", 7, 5, rng);
    Matrix<double> x = random_matrix(9, 7, rng);
    Matrix<double> y0 = fc.forward(x);
    std::vector<double> lw(y0.v.size());
    for (double& w : lw) w = rng.normal();
    Matrix<double> dy;
    dy.resize(y0.rows, y0.cols);
    dy.v = lw;
    fc.weight.zero_grad();
    fc.bias.zero_grad();
    const Matrix<double> dx = fc.backward(dy);
    auto loss = [&] { return weighted_sum(fc.forward(x).v, lw); };
    Rng pick(7);
    for (size_t i : probe_indices(fc.weight.value.size(), 15, pick)) {
        const double fd = central_difference(loss, fc.weight.value[i], kH);
        CHECK(grad_rel_err(fc.weight.grad[i], fd) < 1e-6);
    }
    for (size_t i : probe_indices(fc.bias.value.size(), 5, pick)) {
        const double fd = central_difference(loss, fc.bias.value[i], kH);
        CHECK(grad_rel_err(fc.bias.grad[i], fd) < 1e-6);
    }
    for (size_t i : probe_indices(x.v.size(), 15, pick)) {
        const double fd = central_difference(loss, x.v[i], kH);
        CHECK(grad_rel_err(dx.v[i], fd) < 1e-6);
    }
}

TEST_CASE("conditional batch norm gradients match finite differences") {
    for (const bool train_mode : {true, false}) {
        CAPTURE(train_mode);
        Rng rng(41);
        CondBatchNorm<double> cbn("t", 6, 4);
        for (double& w : cbn.fc_gamma.weight.value) w = 0.3 * rng.normal();
        for (double& w : cbn.fc_beta.weight.value) w = 0.3 * rng.normal();
        for (double& m : cbn.running_mean) m = 0.2 * rng.normal();
        for (double& v : cbn.running_var) v = 1.0 + 0.5 * rng.uniform();
        Matrix<double> x = random_matrix(11, 6, rng);
        Matrix<double> cond = random_matrix(11, 4, rng);

        // Fresh copy per evaluation so running-stat updates cannot leak.
        auto loss_eval = [&]() -> double {
            CondBatchNorm<double> fresh = cbn;
            Matrix<double> y = fresh.forward(x, cond, train_mode);
            double acc = 0.0;
            for (size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * std::sin(0.7 * double(i) + 0.2);
            return acc;
        };

        CondBatchNorm<double> work = cbn;
        work.forward(x, cond, train_mode);
        Matrix<double> dy;
        dy.resize(11, 6);
        for (size_t i = 0; i < dy.v.size(); ++i) dy.v[i] = std::sin(0.7 * double(i) + 0.2);
        Matrix<double> dcond;
        dcond.resize(11, 4);
        const Matrix<double> dx = work.backward(dy, dcond);

        Rng pick(8);
        auto fd_check = [&](std::vector<double>& vec, const std::vector<double>& grad, size_t want) {
            for (size_t i : probe_indices(vec.size(), want, pick)) {
                const double fd = central_difference(loss_eval, vec[i], kH);
                CHECK(grad_rel_err(grad[i], fd) < 1e-6);
            }
        };
        fd_check(x.v, dx.v, 18);
        fd_check(cond.v, dcond.v, 12);
        fd_check(cbn.fc_gamma.weight.value, work.fc_gamma.weight.grad, 10);
        fd_check(cbn.fc_gamma.bias.value, work.fc_gamma.bias.grad, 6);
        fd_check(cbn.fc_beta.weight.value, work.fc_beta.weight.grad, 10);
        fd_check(cbn.fc_beta.bias.value, work.fc_beta.bias.grad, 6);
    }
}

TEST_CASE("loss values and gradients") {
    Matrix<double> zeros;
    zeros.resize(3, 4);
    const auto bce = loss_bce_logits(zeros, zeros);
    CHECK(double(bce.value) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(3);
    Matrix<double> pred = random_matrix(5, 4, rng);
    const auto l1_same = loss_l1(pred, pred);
    CHECK(double(l1_same.value) == 0.0);

    SUBCASE("bce gradient") {
        Matrix<double> t = random_matrix(5, 4, rng);
        for (double& v : t.v) v = v > 0 ? 1.0 : 0.0;
        const auto lv = loss_bce_logits(pred, t);
        Rng pick(9);
        for (size_t i : probe_indices(pred.v.size(), 12, pick)) {
            auto eval = [&] { return double(loss_bce_logits(pred, t).value); };
            const double fd = central_difference(eval, pred.v[i], kH);
            CHECK(grad_rel_err(lv.grad.v[i], fd) < 1e-6);
        }
    }
    SUBCASE("l1 gradient") {
        Matrix<double> t = random_matrix(5, 4, rng);
        const auto lv = loss_l1(pred, t);
        Rng pick(10);
        for (size_t i : probe_indices(pred.v.size(), 12, pick)) {
            auto eval = [&] { return double(loss_l1(pred, t).value); };
            const double fd = central_difference(eval, pred.v[i], kH);
            CHECK(grad_rel_err(lv.grad.v[i], fd) < 1e-6);
        }
    }
}

namespace {

ModelConfig tiny_config(Representation repr, bool hypercolumns = true) {
    ModelConfig cfg;
    cfg.encoder.input_grid = 16;
    cfg.encoder.levels = {4, 8, 8};
    cfg.encoder.global_dim = hypercolumns ? 8 : 28;
    cfg.encoder.hypercolumns = hypercolumns;
    cfg.decoder.width = 16;
    cfg.decoder.blocks = 2;
    cfg.repr = repr;
    cfg.omega.bbox_min = {-32, -32, -32};
    cfg.omega.bbox_max = {32, 32, 32};
    cfg.init_seed = 11;
    return cfg;
}

Volume random_volume(int n, double half, Rng& rng) {
    Volume v = make_volume({n, n, n}, Vec3{2 * half / (n - 1), 2 * half / (n - 1), 2 * half / (n - 1)},
                           Vec3{-half, -half, -half});
    for (float& f : v.data) f = static_cast<float>(rng.uniform());
    return v;
}

} // namespace

TEST_CASE("encoder pyramid shapes follow the stride schedule") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    cfg.encoder.input_grid = 21; // odd sizes: ceil division
    FieldModel<double> model(cfg);
    Rng rng(5);
    const Volume vol = random_volume(21, 32, rng);
    const auto pyr = model.encode(vol);
    CHECK(pyr.levels[0].x == 21);
    CHECK(pyr.levels[1].x == 11);
    CHECK(pyr.levels[2].x == 6);
    CHECK(pyr.global.size() == 8);
}

TEST_CASE("zero input with zero weights leaves only biases through relu") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    FieldModel<double> model(cfg);
    auto& enc = model.encoder();
    for (auto& conv : enc.convs) {
        std::fill(conv.weight.value.begin(), conv.weight.value.end(), 0.0);
        for (size_t i = 0; i < conv.bias.value.size(); ++i)
            conv.bias.value[i] = (i % 2 == 0) ? 0.75 : -0.5;
    }
    std::fill(enc.global_fc.weight.value.begin(), enc.global_fc.weight.value.end(), 0.0);
    std::fill(enc.global_fc.bias.value.begin(), enc.global_fc.bias.value.end(), -1.0);
    const Volume zeros = make_volume({16, 16, 16}, {1, 1, 1});
    const auto pyr = model.encode(zeros);
    for (const auto& level : pyr.levels) {
        for (int c = 0; c < level.c; ++c) {
            const double expect = (c % 2 == 0) ? 0.75 : 0.0; // relu(bias)
            for (int64_t i = 0; i < level.volume(); ++i) CHECK(level.channel(c)[i] == expect);
        }
    }
    for (double g : pyr.global) CHECK(g == 0.0); // relu(-1)
}

TEST_CASE("different inputs produce different pyramids") {
    FieldModel<double> model(tiny_config(Representation::sdf));
    Rng rng(6);
    const Volume a = random_volume(16, 32, rng);
    const Volume b = random_volume(16, 32, rng);
    const auto pa = model.encode(a);
    const auto pb = model.encode(b);
    double diff = 0.0;
    for (size_t i = 0; i < pa.levels[0].v.size(); ++i)
        diff += std::fabs(pa.levels[0].v[i] - pb.levels[0].v[i]);
    CHECK(diff > 1e-3);
}

TEST_CASE("hypercolumn interpolation: constants, ramps, gradients") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    FieldModel<double> model(cfg);
    Rng rng(7);
    const Volume vol = random_volume(16, 32, rng);
    auto pyr = model.encode(vol);

    SUBCASE("constant feature maps interpolate to the constant") {
        for (auto& level : pyr.levels)
            for (int c = 0; c < level.c; ++c)
                std::fill(level.channel(c), level.channel(c) + level.volume(), 3.25);
        const std::vector<Vec3> pts = {{0.1, -12.7, 5.3}, {-31.9, 31.9, 0.0}, {8.0, 8.0, 8.0}};
        const Matrix<double> cond = model.hypercolumns(pyr, pts);
        int offset = 0;
        for (const auto& level : pyr.levels) {
            for (int64_t r = 0; r < cond.rows; ++r)
                for (int c = 0; c < level.c; ++c) CHECK(cond.row(r)[offset + c] == doctest::Approx(3.25));
            offset += level.c;
        }
    }

    SUBCASE("linear index ramp is reproduced exactly at fractional positions") {
        auto& level = pyr.levels[0];
        for (int c = 0; c < level.c; ++c)
            for (int k = 0; k < level.z; ++k)
                for (int j = 0; j < level.y; ++j)
                    for (int i = 0; i < level.x; ++i)
                        level.channel(c)[(int64_t(k) * level.y + j) * level.x + i] = i + 2.0 * j + 3.0 * k;
        const Vec3 ext = cfg.omega.bbox_max - cfg.omega.bbox_min;
        const double step = ext.x / (cfg.encoder.input_grid - 1);
        const Vec3 p{cfg.omega.bbox_min.x + 2.5 * step, cfg.omega.bbox_min.y + 3.25 * step,
                     cfg.omega.bbox_min.z + 7.75 * step};
        const Matrix<double> cond = model.hypercolumns(pyr, std::vector<Vec3>{p});
        CHECK(cond.row(0)[0] == doctest::Approx(2.5 + 2.0 * 3.25 + 3.0 * 7.75).epsilon(1e-12));
    }

    SUBCASE("gradient with respect to feature maps matches finite differences") {
        const std::vector<Vec3> pts = {{0.1, -12.7, 5.3}, {31.0, -31.0, 14.2}, {-2.0, 3.0, -4.0}};
        const int dim = cfg.encoder.hypercolumn_dim();
        Matrix<double> lw = random_matrix(3, dim, rng);
        auto loss = [&] {
            const Matrix<double> cond = model.hypercolumns(pyr, pts);
            return weighted_sum(cond.v, lw.v);
        };
        auto grads = model.zero_pyramid_grads();
        model.hypercolumn_backward(lw, pts, grads);
        Rng pick(10);
        for (size_t l = 0; l < pyr.levels.size(); ++l) {
            for (size_t i : probe_indices(pyr.levels[l].v.size(), 10, pick)) {
                const double fd = central_difference(loss, pyr.levels[l].v[i], kH);
                CHECK(grad_rel_err(grads.levels[l].v[i], fd) < 1e-6);
            }
        }
        for (size_t i : probe_indices(pyr.global.size(), 4, pick)) {
            const double fd = central_difference(loss, pyr.global[i], kH);
            CHECK(grad_rel_err(grads.global[i], fd) < 1e-6);
        }
    }
}

TEST_CASE("full chain gradient matches finite differences on a 16^3 input") {
    for (Representation repr : {Representation::sdf, Representation::occ}) {
        CAPTURE(representation_name(repr));
        FieldModel<double> model(tiny_config(repr));
        model.set_training(true);
        Rng rng(13);
        const Volume vol = random_volume(16, 32, rng);
        std::vector<Vec3> pts;
        Matrix<double> targets;
        targets.resize(24, 4);
        for (int i = 0; i < 24; ++i) {
            pts.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)});
            for (int c = 0; c < 4; ++c)
                targets.row(i)[c] = repr == Representation::occ ? double(rng.below(2)) : rng.normal();
        }

        auto loss_value = [&]() -> double {
            auto pyr = model.encode(vol);
            const Matrix<double> cond = model.hypercolumns(pyr, pts);
            const Matrix<double> pred = model.decode(pts, cond);
            return repr == Representation::occ ? double(loss_bce_logits(pred, targets).value)
                                               : double(loss_l1(pred, targets).value);
        };

        model.zero_grads();
        auto pyr = model.encode(vol);
        const Matrix<double> cond = model.hypercolumns(pyr, pts);
        const Matrix<double> pred = model.decode(pts, cond);
        const LossValue<double> loss =
            repr == Representation::occ ? loss_bce_logits(pred, targets) : loss_l1(pred, targets);
        const Matrix<double> dcond = model.decode_backward(loss.grad);
        auto grads = model.zero_pyramid_grads();
        model.hypercolumn_backward(dcond, pts, grads);
        model.encode_backward(grads);

        Rng pick(14);
        for (Param<double>* p : model.parameters()) {
            CAPTURE(p->name);
            for (size_t i : probe_indices(p->value.size(), 4, pick)) {
                const double fd = central_difference(loss_value, p->value[i], kH);
                CHECK(grad_rel_err(p->grad[i], fd) < 1e-5);
            }
        }
    }
}

TEST_CASE("decode output width is always 4 and eval mode is bit deterministic") {
    FieldModel<double> model(tiny_config(Representation::sdf));
    Rng rng(15);
    const Volume vol = random_volume(16, 32, rng);
    model.set_training(false);
    const auto pyr = model.encode(vol);
    std::vector<Vec3> pts;
    for (int i = 0; i < 17; ++i)
        pts.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)});
    const Matrix<double> cond = model.hypercolumns(pyr, pts);
    const Matrix<double> a = model.decode(pts, cond);
    const Matrix<double> b = model.decode(pts, cond);
    CHECK(a.cols == 4);
    CHECK(std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(double)) == 0);
    // Eval must not depend on batch composition: decode one point alone.
    const std::vector<Vec3> single = {pts[3]};
    Matrix<double> cond_single;
    cond_single.resize(1, cond.cols);
    std::copy(cond.row(3), cond.row(3) + cond.cols, cond_single.row(0));
    const Matrix<double> c = model.decode(single, cond_single);
    for (int ch = 0; ch < 4; ++ch) CHECK(c.row(0)[ch] == a.row(3)[ch]);
}

namespace {

std::vector<TrainCase> tiny_dataset(const ModelConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    TrainCase tc;
    tc.template_volume = random_volume(cfg.encoder.input_grid, 32, rng);
    tc.pool.representation = cfg.repr;
    for (int i = 0; i < 512; ++i) {
        tc.pool.points.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)});
        std::array<float, 4> t{};
        for (int c = 0; c < 4; ++c)
            t[static_cast<size_t>(c)] = cfg.repr == Representation::occ
                                            ? static_cast<float>(rng.below(2))
                                            : static_cast<float>(tc.pool.points.back().norm() - 15.0);
        tc.pool.targets.push_back(t);
        tc.pool.source.push_back(SampleSource::uniform);
    }
    std::vector<TrainCase> out;
    out.push_back(std::move(tc));
    return out;
}

} // namespace

TEST_CASE("training with lr zero leaves parameters unchanged") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    FieldModel<double> model(cfg);
    const auto dataset = tiny_dataset(cfg, 77);
    std::vector<double> before;
    for (Param<double>* p : model.parameters()) before.insert(before.end(), p->value.begin(), p->value.end());
    AdamOptimizer<double> opt(model.parameters());
    TrainingConfig tc;
    tc.lr = 0.0;
    tc.max_steps = 5;
    tc.batch_volumes = 2;
    tc.batch_points = 32;
    train(model, opt, dataset, tc);
    std::vector<double> after;
    for (Param<double>* p : model.parameters()) after.insert(after.end(), p->value.begin(), p->value.end());
    CHECK(before == after);
}

TEST_CASE("training is deterministic per seed") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    const auto dataset = tiny_dataset(cfg, 78);
    TrainingConfig tc;
    tc.lr = 1e-3;
    tc.max_steps = 12;
    tc.batch_volumes = 2;
    tc.batch_points = 32;
    tc.seed = 5;

    auto run = [&] {
        FieldModel<double> model(cfg);
        AdamOptimizer<double> opt(model.parameters());
        return train(model, opt, dataset, tc).loss_trace;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("short training reduces the loss on a fixed target field") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    const auto dataset = tiny_dataset(cfg, 79);
    FieldModel<double> model(cfg);
    AdamOptimizer<double> opt(model.parameters());
    TrainingConfig tc;
    tc.lr = 2e-3;
    tc.max_steps = 300;
    tc.batch_volumes = 1;
    tc.batch_points = 128;
    const TrainResult r = train(model, opt, dataset, tc);
    CHECK_FALSE(r.nan_loss);
    const double head = r.loss_trace[0];
    const double tail = r.loss_trace.back();
    CHECK(tail < 0.6 * head);
}

TEST_CASE("pool representation must match the model") {
    ModelConfig cfg = tiny_config(Representation::occ);
    FieldModel<double> model(cfg);
    AdamOptimizer<double> opt(model.parameters());
    auto dataset = tiny_dataset(tiny_config(Representation::sdf), 80); // sdf pool
    TrainingConfig tc;
    tc.max_steps = 1;
    try {
        train(model, opt, dataset, tc);
        FAIL("expected RepresentationMismatch");
    } catch (const error& e) {
        CHECK(e.code() == errc::representation_mismatch);
    }
}

TEST_CASE("checkpoint round trip reproduces predictions bit-exactly") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    const auto dataset = tiny_dataset(cfg, 81);
    FieldModel<float> model(cfg);
    AdamOptimizer<float> opt(model.parameters());
    TrainingConfig tc;
    tc.lr = 1e-3;
    tc.max_steps = 20;
    tc.batch_volumes = 1;
    tc.batch_points = 64;
    train(model, opt, dataset, tc);

    const std::string path = temp_path("ckpt.cfckpt");
    save_checkpoint<float>(path, model, &opt);
    auto loaded = load_checkpoint<float>(path);
    CHECK(loaded.optimizer->t == opt.t);

    model.set_training(false);
    loaded.model->set_training(false);
    Rng rng(8);
    std::vector<Vec3> probes;
    for (int i = 0; i < 100; ++i)
        probes.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)});
    const auto pyr_a = model.encode(dataset[0].template_volume);
    const auto pyr_b = loaded.model->encode(dataset[0].template_volume);
    const auto ca = model.hypercolumns(pyr_a, probes);
    const auto cb = loaded.model->hypercolumns(pyr_b, probes);
    const auto pa = model.decode(probes, ca);
    const auto pb = loaded.model->decode(probes, cb);
    CHECK(std::memcmp(pa.v.data(), pb.v.data(), pa.v.size() * sizeof(float)) == 0);
}

TEST_CASE("truncated checkpoint raises CorruptCheckpoint") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    FieldModel<float> model(cfg);
    const std::string path = temp_path("trunc.cfckpt");
    save_checkpoint<float>(path, model, nullptr);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    try {
        load_checkpoint<float>(path);
        FAIL("expected CorruptCheckpoint");
    } catch (const error& e) {
        CHECK(e.code() == errc::corrupt_checkpoint);
    }
}

TEST_CASE("checkpoint from a different config raises VersionMismatch") {
    ModelConfig cfg = tiny_config(Representation::sdf);
    FieldModel<float> model(cfg);
    const std::string path = temp_path("other.cfckpt");
    save_checkpoint<float>(path, model, nullptr);
    ModelConfig other = cfg;
    other.encoder.levels = {8, 8, 8};
    FieldModel<float> target(other);
    try {
        load_checkpoint_into<float>(path, target, nullptr);
        FAIL("expected VersionMismatch");
    } catch (const error& e) {
        CHECK(e.code() == errc::version_mismatch);
    }
    try {
        load_checkpoint<double>(path);
        FAIL("expected VersionMismatch");
    } catch (const error& e) {
        CHECK(e.code() == errc::version_mismatch);
    }
}
