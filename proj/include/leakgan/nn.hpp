#pragma once

#include <span>
#include <string>
#include <vector>

#include "leakgan/common.hpp"

namespace leakgan {

/// Mutable, named window onto one parameter tensor (Eigen column-major storage).
struct ParamView {
    std::string name;
    double *data;
    Index rows;
    Index cols;

    Index size() const { return rows * cols; }
    Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
};

using ParamList = std::vector<ParamView>;

template <class Derived>
void add_param(ParamList &out, std::string name, Eigen::PlainObjectBase<Derived> &m) {
    out.push_back({std::move(name), m.data(), m.rows(), m.cols()});
}

/// Byte-level hash of every tensor, in order. Equal hashes mean bit-identical values.
std::string param_digest(const ParamList &params);

double squared_norm(const ParamList &params);

/// Fills m with i.i.d. N(0, stddev^2) draws in column-major order.
void fill_normal(Eigen::Ref<Matrix> m, Rng &rng, double stddev);

// ---------------------------------------------------------------------------
// LSTM cell, batched over columns. Gate rows are stacked [input, forget, cell, output].

struct LstmParams {
    Matrix weight; // 4H x (I + H)
    Vector bias;   // 4H

    LstmParams() = default;
    LstmParams(Index input_size, Index hidden_size);

    Index input_size() const { return weight.cols() - hidden_size(); }
    Index hidden_size() const { return weight.rows() / 4; }

    void append_params(ParamList &out, const std::string &prefix);
};

struct LstmState {
    Matrix h;
    Matrix c;

    static LstmState zeros(Index hidden, Index batch) {
        return {Matrix::Zero(hidden, batch), Matrix::Zero(hidden, batch)};
    }
};

struct LstmCache {
    Matrix xh; // stacked [x; h_prev]
    Matrix c_prev;
    Matrix i, f, g, o;
    Matrix tanh_c;
};

/// One recurrent step. When cache is non-null it receives what backward needs.
LstmState lstm_step(const LstmParams &p, const Eigen::Ref<const Matrix> &x, const LstmState &prev,
                    LstmCache *cache = nullptr);

/// Backward through one step. On entry dh/dc hold dL/dh_t and dL/dc_t; on exit
/// they hold dL/dh_{t-1} and dL/dc_{t-1}. Parameter gradients accumulate into grad.
void lstm_step_backward(const LstmParams &p, const LstmCache &cache, Matrix &dh, Matrix &dc,
                        LstmParams &grad, Matrix *dx);

// ---------------------------------------------------------------------------

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Softmax over ids >= kFirstRealToken; PAD and START get probability 0.
Vector masked_softmax(const Eigen::Ref<const Vector> &logits);

/// log of masked_softmax at `target` (target must be a real token).
double masked_log_prob(const Eigen::Ref<const Vector> &logits, Index target);

// ---------------------------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0; // global-norm clipping, 0 disables
};

class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

    /// Applies one descent step; grads must mirror params view by view.
    /// Returns the gradient norm before clipping.
    double step(const ParamList &params, const ParamList &grads);

    const OptimizerConfig &config() const { return config_; }
    void set_learning_rate(double lr) { config_.learning_rate = lr; }

  private:
    OptimizerConfig config_;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
    long t_ = 0;
};

} // namespace leakgan
