#include "leakgan/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace leakgan {

Index ConvSpec::feature_dim() const {
    Index d = 0;
    for (const auto &w : windows) d += w.count;
    return d;
}

void ConvSpec::validate(std::size_t T) const {
    if (windows.empty()) throw Error("conv spec: no windows");
    if (embedding_dim < 1) throw Error("conv spec: embedding_dim must be >= 1");
    for (const auto &w : windows) {
        if (w.window < 1 || static_cast<std::size_t>(w.window) > T)
            throw Error("conv spec: window " + std::to_string(w.window) + " outside [1, T=" +
                        std::to_string(T) + "]");
        if (w.count < 1) throw Error("conv spec: kernel count must be >= 1");
    }
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        throw Error("conv spec: dropout keep rate must be in (0, 1]");
    if (l2_coeff < 0.0) throw Error("conv spec: l2 coefficient must be >= 0");
}

ConvSpec ConvSpec::reference(std::size_t T) {
    ConvSpec s;
    if (T == 20) {
        s.windows = {{1, 100}, {2, 200}, {3, 200}, {4, 200},  {5, 200},  {6, 100},
                     {7, 100}, {8, 100}, {9, 100}, {10, 100}, {15, 160}, {20, 160}};
    } else if (T == 40) {
        s.windows = {{1, 100}, {2, 200}, {3, 200},  {4, 200},  {5, 200},  {6, 100},  {7, 100},
                     {8, 100}, {9, 100}, {10, 100}, {16, 160}, {20, 160}, {30, 160}, {40, 160}};
    } else {
        throw Error("no reference conv layout for T=" + std::to_string(T) + " (have 20, 40)");
    }
    return s;
}

std::vector<ConvWindow> ConvSpec::parse_windows(const std::string &text) {
    std::vector<ConvWindow> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        if (item.empty()) continue;
        auto colon = item.find(':');
        if (colon == std::string::npos) throw Error("conv spec: expected window:count, got '" + item + "'");
        try {
            std::size_t used_w = 0, used_c = 0;
            std::string ws = item.substr(0, colon), cs = item.substr(colon + 1);
            int w = std::stoi(ws, &used_w);
            int c = std::stoi(cs, &used_c);
            if (used_w != ws.size() || used_c != cs.size()) throw std::invalid_argument(item);
            out.push_back({w, c});
        } catch (const std::logic_error &) {
            throw Error("conv spec: expected window:count, got '" + item + "'");
        }
    }
    return out;
}

std::string ConvSpec::format_windows(const std::vector<ConvWindow> &windows) {
    std::string s;
    for (const auto &w : windows) {
        if (!s.empty()) s += ',';
        s += std::to_string(w.window) + ":" + std::to_string(w.count);
    }
    return s;
}

ParamList DiscriminatorParams::parameters() {
    ParamList out;
    add_param(out, "disc.embedding", embedding);
    for (std::size_t i = 0; i < conv.size(); ++i) {
        add_param(out, "disc.conv" + std::to_string(i) + ".weight", conv[i]);
        add_param(out, "disc.conv" + std::to_string(i) + ".bias", conv_bias[i]);
    }
    add_param(out, "disc.highway.gate_weight", gate_weight);
    add_param(out, "disc.highway.gate_bias", gate_bias);
    add_param(out, "disc.highway.transform_weight", transform_weight);
    add_param(out, "disc.highway.transform_bias", transform_bias);
    add_param(out, "disc.out.weight", out_weight);
    add_param(out, "disc.out.bias", out_bias);
    return out;
}

DiscriminatorParams DiscriminatorParams::zeros_like() const {
    DiscriminatorParams z;
    z.embedding = Matrix::Zero(embedding.rows(), embedding.cols());
    for (const auto &c : conv) z.conv.push_back(Matrix::Zero(c.rows(), c.cols()));
    for (const auto &b : conv_bias) z.conv_bias.push_back(Vector::Zero(b.size()));
    z.gate_weight = Matrix::Zero(gate_weight.rows(), gate_weight.cols());
    z.gate_bias = Vector::Zero(gate_bias.size());
    z.transform_weight = Matrix::Zero(transform_weight.rows(), transform_weight.cols());
    z.transform_bias = Vector::Zero(transform_bias.size());
    z.out_weight = Vector::Zero(out_weight.size());
    z.out_bias = Vector::Zero(out_bias.size());
    return z;
}

// ---------------------------------------------------------------------------

namespace {

Vector activate(Activation a, const Vector &x) {
    switch (a) {
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::Identity: return x;
    }
    return x;
}

Vector activation_slope(Activation a, const Vector &pre, const Vector &post) {
    switch (a) {
    case Activation::Relu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh: return (1.0 - post.array().square()).matrix();
    case Activation::Identity: return Vector::Ones(pre.size());
    }
    return Vector::Ones(pre.size());
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace

FeatureExtractor::FeatureExtractor(const Discriminator &disc) : disc_(&disc) {
    std::vector<TokenId> all(disc.vocab_size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<TokenId>(v);
    build(all);
}

FeatureExtractor::FeatureExtractor(const Discriminator &disc, const SequenceBatch &batch)
    : disc_(&disc) {
    std::vector<char> seen(disc.vocab_size(), 0);
    seen[kPad] = 1;
    for (std::size_t r = 0; r < batch.rows(); ++r)
        for (TokenId x : batch[r]) seen.at(static_cast<std::size_t>(x)) = 1;
    std::vector<TokenId> used;
    for (std::size_t v = 0; v < seen.size(); ++v)
        if (seen[v]) used.push_back(static_cast<TokenId>(v));
    build(used);
}

void FeatureExtractor::build(std::span<const TokenId> tokens) {
    const auto &p = disc_->params();
    const Index E = disc_->spec().embedding_dim;
    column_of_.assign(disc_->vocab_size(), -1);
    Matrix emb(E, static_cast<Index>(tokens.size()));
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        column_of_[static_cast<std::size_t>(tokens[k])] = static_cast<int>(k);
        emb.col(static_cast<Index>(k)) = p.embedding.col(tokens[k]);
    }
    tables_.clear();
    for (std::size_t i = 0; i < p.conv.size(); ++i) {
        const int w = disc_->spec().windows[i].window;
        std::vector<Matrix> taps;
        taps.reserve(static_cast<std::size_t>(w));
        for (int o = 0; o < w; ++o) taps.push_back(p.conv[i].middleCols(o * E, E) * emb);
        tables_.push_back(std::move(taps));
    }
}

Vector FeatureExtractor::classifier_input(std::span<const TokenId> tokens, FeatureCache *cache) const {
    const auto &spec = disc_->spec();
    const auto &p = disc_->params();
    const auto T = static_cast<int>(disc_->length());
    const Index D = spec.feature_dim();
    if (tokens.size() > static_cast<std::size_t>(T))
        throw Error("discriminator: sequence longer than T=" + std::to_string(T));

    std::vector<int> cols(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        TokenId x = static_cast<std::size_t>(t) < tokens.size() ? tokens[static_cast<std::size_t>(t)] : kPad;
        if (x < 0 || static_cast<std::size_t>(x) >= column_of_.size() ||
            column_of_[static_cast<std::size_t>(x)] < 0)
            throw Error("discriminator: token " + std::to_string(x) + " has no table column");
        cols[static_cast<std::size_t>(t)] = column_of_[static_cast<std::size_t>(x)];
    }

    Vector pooled(D);
    if (cache) cache->argmax.assign(spec.windows.size(), {});
    Index offset = 0;
    for (std::size_t i = 0; i < spec.windows.size(); ++i) {
        const int w = spec.windows[i].window;
        const int n = spec.windows[i].count;
        const int positions = T - w + 1;
        Matrix acc(n, positions);
        acc.colwise() = p.conv_bias[i];
        for (int o = 0; o < w; ++o) {
            const Matrix &tbl = tables_[i][static_cast<std::size_t>(o)];
            for (int pos = 0; pos < positions; ++pos)
                acc.col(pos) += tbl.col(cols[static_cast<std::size_t>(pos + o)]);
        }
        std::vector<int> best(static_cast<std::size_t>(n), 0);
        for (int j = 0; j < n; ++j) {
            Index arg = 0;
            pooled[offset + j] = acc.row(j).maxCoeff(&arg);
            best[static_cast<std::size_t>(j)] = static_cast<int>(arg);
        }
        if (cache) cache->argmax[i] = std::move(best);
        offset += n;
    }

    Vector activated = activate(spec.activation, pooled);
    Vector out = activated;
    if (spec.highway) {
        Vector gate = (p.gate_weight * activated + p.gate_bias).unaryExpr([](double z) { return sigmoid(z); });
        Vector tpre = p.transform_weight * activated + p.transform_bias;
        Vector tr = tpre.cwiseMax(0.0);
        out = gate.cwiseProduct(tr) + (Vector::Ones(D) - gate).cwiseProduct(activated);
        if (cache) {
            cache->gate = std::move(gate);
            cache->transform_pre = std::move(tpre);
        }
    }
    if (cache) {
        cache->pooled = std::move(pooled);
        cache->activated = std::move(activated);
        cache->highway_out = out;
    }
    return out;
}

Vector FeatureExtractor::leak(std::span<const TokenId> tokens) const {
    if (disc_->spec().feature_source == FeatureSource::PostHighway || !disc_->spec().highway)
        return classifier_input(tokens);
    FeatureCache cache;
    classifier_input(tokens, &cache);
    return cache.activated;
}

Matrix FeatureExtractor::leak(const SequenceBatch &batch) const {
    Matrix f(disc_->feature_dim(), static_cast<Index>(batch.rows()));
    for (std::size_t r = 0; r < batch.rows(); ++r) f.col(static_cast<Index>(r)) = leak(batch[r]);
    return f;
}

double FeatureExtractor::logit(const Eigen::Ref<const Vector> &x) const {
    const auto &p = disc_->params();
    return p.out_weight.dot(x) + p.out_bias[0];
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(ConvSpec spec, std::size_t vocab_size, std::size_t length)
    : spec_(std::move(spec)), vocab_size_(vocab_size), length_(length) {
    spec_.validate(length);
    if (vocab_size < 2) throw Error("discriminator: vocabulary too small");
    const Index E = spec_.embedding_dim;
    const Index D = spec_.feature_dim();
    params_.embedding = Matrix::Zero(E, static_cast<Index>(vocab_size));
    for (const auto &w : spec_.windows) {
        params_.conv.push_back(Matrix::Zero(w.count, w.window * E));
        params_.conv_bias.push_back(Vector::Zero(w.count));
    }
    params_.gate_weight = Matrix::Zero(D, D);
    params_.gate_bias = Vector::Zero(D);
    params_.transform_weight = Matrix::Zero(D, D);
    params_.transform_bias = Vector::Zero(D);
    params_.out_weight = Vector::Zero(D);
    params_.out_bias = Vector::Zero(1);
}

Discriminator Discriminator::init(ConvSpec spec, std::size_t vocab_size, std::size_t length,
                                  std::uint64_t seed) {
    Discriminator d(std::move(spec), vocab_size, length);
    Rng rng(seed);
    auto &p = d.params_;
    fill_normal(p.embedding, rng, 1.0);
    for (auto &c : p.conv) fill_normal(c, rng, 0.1);
    fill_normal(p.gate_weight, rng, 0.1);
    fill_normal(p.transform_weight, rng, 0.1);
    fill_normal(p.out_weight, rng, 0.1);
    return d;
}

Matrix Discriminator::extract_features(const SequenceBatch &batch, FeatureMode mode,
                                       Rng *dropout_rng) const {
    if (batch.length() != length_)
        throw Error("discriminator: batch length " + std::to_string(batch.length()) +
                    " != T=" + std::to_string(length_));
    FeatureExtractor fx(*this, batch);
    if (mode == FeatureMode::Leak) return fx.leak(batch);

    const double keep = spec_.dropout_keep;
    Matrix f(feature_dim(), static_cast<Index>(batch.rows()));
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        Vector x = fx.classifier_input(batch[r]);
        if (dropout_rng && keep < 1.0)
            for (Index j = 0; j < x.size(); ++j)
                x[j] = uniform01(*dropout_rng) < keep ? x[j] / keep : 0.0;
        f.col(static_cast<Index>(r)) = x;
    }
    return f;
}

Vector Discriminator::classify(const SequenceBatch &batch) const {
    FeatureExtractor fx(*this, batch);
    Vector out(static_cast<Index>(batch.rows()));
    for (std::size_t r = 0; r < batch.rows(); ++r)
        out[static_cast<Index>(r)] = sigmoid(fx.logit(fx.classifier_input(batch[r])));
    return out;
}

DiscriminatorLoss Discriminator::loss(const SequenceBatch &batch, std::span<const double> labels,
                                      Rng *dropout_rng, DiscriminatorParams *grad) const {
    if (labels.size() != batch.rows()) throw Error("discriminator: label count mismatch");
    if (batch.rows() == 0) throw Error("discriminator: empty batch");
    const Index E = spec_.embedding_dim;
    const Index D = feature_dim();
    const double keep = spec_.dropout_keep;
    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    const auto &p = params_;

    FeatureExtractor fx(*this, batch);
    DiscriminatorLoss result;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        FeatureCache cache;
        Vector x = fx.classifier_input(batch[r], grad ? &cache : nullptr);
        Vector mask = Vector::Ones(D);
        if (dropout_rng && keep < 1.0)
            for (Index j = 0; j < D; ++j) mask[j] = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
        Vector xd = x.cwiseProduct(mask);
        const double z = p.out_weight.dot(xd) + p.out_bias[0];
        const double y = labels[r];
        result.bce += (softplus(z) - y * z) * inv_b;
        if (!grad) continue;

        const double dz = (sigmoid(z) - y) * inv_b;
        grad->out_weight += dz * xd;
        grad->out_bias[0] += dz;
        Vector dx = (dz * p.out_weight).cwiseProduct(mask);

        Vector dact = dx;
        if (spec_.highway) {
            const Vector &a = cache.activated;
            const Vector &gate = cache.gate;
            Vector tr = cache.transform_pre.cwiseMax(0.0);
            Vector dzg = dx.cwiseProduct(tr - a).cwiseProduct(gate).cwiseProduct(Vector::Ones(D) - gate);
            Vector dtp = dx.cwiseProduct(gate).cwiseProduct(
                (cache.transform_pre.array() > 0.0).cast<double>().matrix());
            grad->gate_weight.noalias() += dzg * a.transpose();
            grad->gate_bias += dzg;
            grad->transform_weight.noalias() += dtp * a.transpose();
            grad->transform_bias += dtp;
            dact = dx.cwiseProduct(Vector::Ones(D) - gate) + p.gate_weight.transpose() * dzg +
                   p.transform_weight.transpose() * dtp;
        }
        Vector dpool = dact.cwiseProduct(activation_slope(spec_.activation, cache.pooled, cache.activated));

        auto row = batch[r];
        Index offset = 0;
        for (std::size_t i = 0; i < spec_.windows.size(); ++i) {
            const int w = spec_.windows[i].window;
            const int n = spec_.windows[i].count;
            for (int j = 0; j < n; ++j) {
                const double d = dpool[offset + j];
                if (d == 0.0) continue;
                grad->conv_bias[i][j] += d;
                const int pos = cache.argmax[i][static_cast<std::size_t>(j)];
                for (int o = 0; o < w; ++o) {
                    const TokenId tok = row[static_cast<std::size_t>(pos + o)];
                    grad->conv[i].block(j, o * E, 1, E) += d * p.embedding.col(tok).transpose();
                    grad->embedding.col(tok) += d * p.conv[i].block(j, o * E, 1, E).transpose();
                }
            }
            offset += n;
        }
    }

    if (spec_.l2_coeff > 0.0) {
        auto views = const_cast<DiscriminatorParams &>(params_).parameters();
        result.l2 = spec_.l2_coeff * squared_norm(views);
        if (grad) {
            auto gviews = grad->parameters();
            for (std::size_t k = 0; k < views.size(); ++k)
                gviews[k].map() += (2.0 * spec_.l2_coeff) * views[k].map();
        }
    }
    return result;
}

DiscriminatorLoss Discriminator::train_step(const SequenceBatch &real, const SequenceBatch &fake,
                                            Optimizer &optimizer, Rng &rng, long step) {
    if (real.rows() == 0 || fake.rows() == 0) throw Error("discriminator: empty training batch");
    std::vector<TokenSequence> rows;
    std::vector<double> labels;
    for (std::size_t r = 0; r < real.rows(); ++r) {
        rows.emplace_back(real[r].begin(), real[r].end());
        labels.push_back(1.0);
    }
    for (std::size_t r = 0; r < fake.rows(); ++r) {
        rows.emplace_back(fake[r].begin(), fake[r].end());
        labels.push_back(0.0);
    }
    SequenceBatch both = SequenceBatch::from_rows(rows);
    DiscriminatorParams grad = params_.zeros_like();
    DiscriminatorLoss l = loss(both, labels, &rng, &grad);
    if (!std::isfinite(l.total())) throw NonFiniteError("discriminator", step, "loss");
    auto gviews = grad.parameters();
    for (const auto &g : gviews)
        if (!g.map().allFinite()) throw NonFiniteError("discriminator", step, "gradient of " + g.name);
    optimizer.step(parameters(), gviews);
    return l;
}

} // namespace leakgan
