#include "leakgan/nn.hpp"

#include <cmath>
#include <limits>

namespace leakgan {

std::string param_digest(const ParamList &params) {
    std::string bytes;
    for (const auto &p : params) {
        bytes.append(p.name);
        bytes.append(reinterpret_cast<const char *>(p.data), sizeof(double) * p.size());
    }
    return fnv1a_hex(bytes);
}

double squared_norm(const ParamList &params) {
    double s = 0.0;
    for (const auto &p : params) s += p.map().squaredNorm();
    return s;
}

void fill_normal(Eigen::Ref<Matrix> m, Rng &rng, double stddev) {
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) m(i, j) = stddev * standard_normal(rng);
}

LstmParams::LstmParams(Index input_size, Index hidden_size)
    : weight(Matrix::Zero(4 * hidden_size, input_size + hidden_size)),
      bias(Vector::Zero(4 * hidden_size)) {}

void LstmParams::append_params(ParamList &out, const std::string &prefix) {
    add_param(out, prefix + ".weight", weight);
    add_param(out, prefix + ".bias", bias);
}

namespace {

Matrix logistic(const Eigen::Ref<const Matrix> &z) {
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

} // namespace

LstmState lstm_step(const LstmParams &p, const Eigen::Ref<const Matrix> &x, const LstmState &prev,
                    LstmCache *cache) {
    const Index H = p.hidden_size();
    const Index I = p.input_size();
    const Index B = x.cols();

    Matrix xh(I + H, B);
    xh.topRows(I) = x;
    xh.bottomRows(H) = prev.h;

    Matrix z = p.weight * xh;
    z.colwise() += p.bias;

    Matrix i = logistic(z.middleRows(0, H));
    Matrix f = logistic(z.middleRows(H, H));
    Matrix g = z.middleRows(2 * H, H).array().tanh().matrix();
    Matrix o = logistic(z.middleRows(3 * H, H));

    LstmState next;
    next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
    Matrix tanh_c = next.c.array().tanh().matrix();
    next.h = o.cwiseProduct(tanh_c);

    if (cache) {
        cache->xh = std::move(xh);
        cache->c_prev = prev.c;
        cache->i = std::move(i);
        cache->f = std::move(f);
        cache->g = std::move(g);
        cache->o = std::move(o);
        cache->tanh_c = std::move(tanh_c);
    }
    return next;
}

void lstm_step_backward(const LstmParams &p, const LstmCache &cache, Matrix &dh, Matrix &dc,
                        LstmParams &grad, Matrix *dx) {
    const Index H = p.hidden_size();
    const Index I = p.input_size();
    const Index B = dh.cols();

    const auto one = Matrix::Ones(H, B).array();
    dc.array() += dh.array() * cache.o.array() * (one - cache.tanh_c.array().square());

    Matrix dz(4 * H, B);
    dz.middleRows(0, H) =
        (dc.array() * cache.g.array() * cache.i.array() * (one - cache.i.array())).matrix();
    dz.middleRows(H, H) =
        (dc.array() * cache.c_prev.array() * cache.f.array() * (one - cache.f.array())).matrix();
    dz.middleRows(2 * H, H) =
        (dc.array() * cache.i.array() * (one - cache.g.array().square())).matrix();
    dz.middleRows(3 * H, H) =
        (dh.array() * cache.tanh_c.array() * cache.o.array() * (one - cache.o.array())).matrix();

    grad.weight.noalias() += dz * cache.xh.transpose();
    grad.bias += dz.rowwise().sum();

    Matrix dxh = p.weight.transpose() * dz;
    if (dx) *dx = dxh.topRows(I);
    dh = dxh.bottomRows(H);
    dc = dc.cwiseProduct(cache.f);
}

Vector masked_softmax(const Eigen::Ref<const Vector> &logits) {
    const Index n = logits.size();
    if (n <= kFirstRealToken) throw Error("masked_softmax: vocabulary has no real tokens");
    Vector p = Vector::Zero(n);
    const double m = logits.tail(n - kFirstRealToken).maxCoeff();
    p.tail(n - kFirstRealToken) = (logits.tail(n - kFirstRealToken).array() - m).exp().matrix();
    p /= p.sum();
    return p;
}

double masked_log_prob(const Eigen::Ref<const Vector> &logits, Index target) {
    const Index n = logits.size();
    if (target < kFirstRealToken || target >= n) return -std::numeric_limits<double>::infinity();
    auto real = logits.tail(n - kFirstRealToken);
    const double m = real.maxCoeff();
    return logits[target] - m - std::log((real.array() - m).exp().sum());
}

double Optimizer::step(const ParamList &params, const ParamList &grads) {
    if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient mismatch");
    double norm = std::sqrt(squared_norm(grads));
    double scale = 1.0;
    if (config_.clip_norm > 0.0 && norm > config_.clip_norm) scale = config_.clip_norm / norm;

    if (config_.kind == OptimizerKind::Sgd) {
        for (std::size_t k = 0; k < params.size(); ++k)
            params[k].map() -= (config_.learning_rate * scale) * grads[k].map();
        return norm;
    }

    if (m_.empty()) {
        for (const auto &p : params) {
            m_.push_back(Vector::Zero(p.size()));
            v_.push_back(Vector::Zero(p.size()));
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Eigen::Map<Vector> w(params[k].data, params[k].size());
        Eigen::Map<const Vector> g(grads[k].data, grads[k].size());
        m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * scale * g;
        v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * (scale * g).cwiseAbs2();
        w.array() -= config_.learning_rate * (m_[k].array() / bc1) /
                     ((v_[k].array() / bc2).sqrt() + config_.epsilon);
    }
    return norm;
}

} // namespace leakgan
