// Adam and the training loop. One step: draw volumes (without replacement when
// the dataset is large enough), draw points from their pools, encode each
// distinct volume once, decode the pooled point batch, backpropagate, update.
#include <algorithm>
#include <cmath>

#include "cortifield/errors.hpp"
#include "cortifield/nn.hpp"

namespace cf {

void TrainingConfig::validate() const {
    require(lr >= 0.0, errc::invalid_argument, "learning rate must be >= 0");
    require(batch_volumes > 0 && batch_points > 0, errc::invalid_argument, "batch sizes must be positive");
    require(max_steps >= 0, errc::invalid_argument, "max_steps must be >= 0");
}

template <typename T>
AdamOptimizer<T>::AdamOptimizer(std::vector<Param<T>*> params) : params_(std::move(params)) {
    m.reserve(params_.size());
    v.reserve(params_.size());
    for (Param<T>* p : params_) {
        m.emplace_back(p->value.size(), T(0));
        v.emplace_back(p->value.size(), T(0));
    }
}

template <typename T>
void AdamOptimizer<T>::step(const TrainingConfig& cfg) {
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Param<T>& p = *params_[pi];
        T* mm = m[pi].data();
        T* vv = v[pi].data();
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double g = double(p.grad[i]);
            const double mn = cfg.beta1 * double(mm[i]) + (1.0 - cfg.beta1) * g;
            const double vn = cfg.beta2 * double(vv[i]) + (1.0 - cfg.beta2) * g * g;
            mm[i] = static_cast<T>(mn);
            vv[i] = static_cast<T>(vn);
            double value = double(p.value[i]);
            value -= cfg.lr * (mn / bc1) / (std::sqrt(vn / bc2) + cfg.eps);
            if (cfg.weight_decay != 0.0) value -= cfg.lr * cfg.weight_decay * value;
            p.value[i] = static_cast<T>(value);
        }
    }
}

template <typename T>
TrainResult train(FieldModel<T>& model, AdamOptimizer<T>& opt, const std::vector<TrainCase>& dataset,
                  const TrainingConfig& cfg) {
    cfg.validate();
    require(!dataset.empty(), errc::invalid_argument, "training needs at least one case");
    for (const TrainCase& c : dataset) {
        require(c.pool.representation == model.config().repr, errc::representation_mismatch,
                "pool representation does not match the model");
        require(c.pool.size() > 0, errc::invalid_argument, "empty sample pool");
    }

    const int n_cases = static_cast<int>(dataset.size());
    const int bv = cfg.batch_volumes;
    const int bp = cfg.batch_points;
    Rng rng(cfg.seed);
    TrainResult result;
    result.loss_trace.reserve(static_cast<size_t>(cfg.max_steps));
    model.set_training(true);

    std::vector<int> draw(static_cast<size_t>(bv));
    std::vector<Vec3> points(static_cast<size_t>(bv) * bp);
    Matrix<T> targets;
    int last_encoded = -1;

    for (int step = 0; step < cfg.max_steps; ++step) {
        // Volume draws: without replacement when possible.
        if (n_cases >= bv) {
            std::vector<int> perm(static_cast<size_t>(n_cases));
            for (int i = 0; i < n_cases; ++i) perm[static_cast<size_t>(i)] = i;
            for (int i = 0; i < bv; ++i) {
                const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n_cases - i)));
                std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
                draw[static_cast<size_t>(i)] = perm[static_cast<size_t>(i)];
            }
        } else {
            for (int i = 0; i < bv; ++i) draw[static_cast<size_t>(i)] = static_cast<int>(rng.below(static_cast<uint64_t>(n_cases)));
        }

        targets.resize(int64_t(bv) * bp, 4);
        for (int d = 0; d < bv; ++d) {
            const SamplePool& pool = dataset[static_cast<size_t>(draw[static_cast<size_t>(d)])].pool;
            for (int i = 0; i < bp; ++i) {
                const int64_t idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(pool.size())));
                const int64_t slot = int64_t(d) * bp + i;
                points[static_cast<size_t>(slot)] = pool.points[static_cast<size_t>(idx)];
                const auto& t4 = pool.targets[static_cast<size_t>(idx)];
                T* trow = targets.row(slot);
                for (int ch = 0; ch < 4; ++ch) trow[ch] = static_cast<T>(t4[static_cast<size_t>(ch)]);
            }
        }

        // Encode each distinct volume once, in first-appearance order.
        std::vector<int> uniq;
        for (int d = 0; d < bv; ++d)
            if (std::find(uniq.begin(), uniq.end(), draw[static_cast<size_t>(d)]) == uniq.end())
                uniq.push_back(draw[static_cast<size_t>(d)]);
        std::vector<FeaturePyramid<T>> pyramids;
        pyramids.reserve(uniq.size());
        for (int u : uniq) {
            pyramids.push_back(model.encode(dataset[static_cast<size_t>(u)].template_volume));
            last_encoded = u;
        }

        // Conditioning rows per draw, from that draw's pyramid.
        Matrix<T> cond;
        cond.resize(int64_t(bv) * bp, model.config().encoder.hypercolumn_dim());
        for (int d = 0; d < bv; ++d) {
            const size_t which = static_cast<size_t>(
                std::find(uniq.begin(), uniq.end(), draw[static_cast<size_t>(d)]) - uniq.begin());
            const Matrix<T> rows = model.hypercolumns(
                pyramids[which], std::span<const Vec3>(points.data() + int64_t(d) * bp, static_cast<size_t>(bp)));
            std::copy(rows.v.begin(), rows.v.end(), cond.v.begin() + static_cast<size_t>(int64_t(d) * bp) * cond.cols);
        }

        Matrix<T> pred = model.decode(points, cond);
        const LossValue<T> loss = model.config().repr == Representation::occ ? loss_bce_logits(pred, targets)
                                                                             : loss_l1(pred, targets);
        result.loss_trace.push_back(double(loss.value));
        if (!std::isfinite(double(loss.value))) {
            result.nan_loss = true;
            break;
        }

        model.zero_grads();
        const Matrix<T> dcond = model.decode_backward(loss.grad);

        // Scatter conditioning gradients per distinct volume, then run the
        // encoder backward with that volume's caches refreshed.
        for (size_t which = 0; which < uniq.size(); ++which) {
            FeaturePyramid<T> grads = model.zero_pyramid_grads();
            bool any = false;
            for (int d = 0; d < bv; ++d) {
                if (draw[static_cast<size_t>(d)] != uniq[which]) continue;
                Matrix<T> dslice;
                dslice.resize(bp, dcond.cols);
                std::copy(dcond.v.begin() + static_cast<size_t>(int64_t(d) * bp) * dcond.cols,
                          dcond.v.begin() + static_cast<size_t>(int64_t(d) * bp + bp) * dcond.cols,
                          dslice.v.begin());
                model.hypercolumn_backward(
                    dslice, std::span<const Vec3>(points.data() + int64_t(d) * bp, static_cast<size_t>(bp)),
                    grads);
                any = true;
            }
            if (!any) continue;
            // The encoder caches activations of its latest forward; re-prime
            // them when another volume was encoded in between.
            if (last_encoded != uniq[which]) {
                model.encode(dataset[static_cast<size_t>(uniq[which])].template_volume);
                last_encoded = uniq[which];
            }
            model.encode_backward(grads);
        }

        opt.step(cfg);
    }
    return result;
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;
template TrainResult train<float>(FieldModel<float>&, AdamOptimizer<float>&, const std::vector<TrainCase>&,
                                  const TrainingConfig&);
template TrainResult train<double>(FieldModel<double>&, AdamOptimizer<double>&, const std::vector<TrainCase>&,
                                   const TrainingConfig&);

} // namespace cf
