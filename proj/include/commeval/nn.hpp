#pragma once

// Minimal neural building blocks for the listener models: an LSTM cell with
// hand-written backpropagation through time, Adam and gradient clipping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "commeval/error.hpp"
#include "commeval/random.hpp"

namespace commeval::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Token inventory with reserved ids for BOS, EOS and UNK.
class Vocab {
  public:
    static constexpr int bos = 0;
    static constexpr int eos = 1;
    static constexpr int unk = 2;

    Vocab() : tokens_{"<s>", "</s>", "<unk>"} { reindex(); }

    /// Specials followed by the given tokens in sorted order.
    template <typename Range> static Vocab from_tokens(const Range &words) {
        std::vector<std::string> sorted(words.begin(), words.end());
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        Vocab v;
        for (auto &w : sorted)
            if (!v.index_.contains(w)) v.tokens_.push_back(w);
        v.reindex();
        return v;
    }

    static Vocab from_list(std::vector<std::string> tokens) {
        if (tokens.size() < 3 || tokens[0] != "<s>" || tokens[1] != "</s>" || tokens[2] != "<unk>")
            throw ValidationError("vocabulary must start with <s>, </s>, <unk>");
        Vocab v;
        v.tokens_ = std::move(tokens);
        v.reindex();
        return v;
    }

    int lookup(const std::string &token) const {
        auto it = index_.find(token);
        return it == index_.end() ? unk : it->second;
    }

    std::vector<int> encode(const std::vector<std::string> &tokens) const {
        std::vector<int> ids;
        ids.reserve(tokens.size());
        for (const auto &t : tokens) ids.push_back(lookup(t));
        return ids;
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string> &tokens() const { return tokens_; }
    friend bool operator==(const Vocab &a, const Vocab &b) { return a.tokens_ == b.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;

    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
                throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Fills with U(-scale, scale).
inline void init_uniform(Mat &m, double scale, Rng &rng) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-scale, scale);
}

/// Per-step cache of an LSTM forward pass. Gate order in the stacked
/// pre-activation is input, forget, candidate, output.
struct LstmStep {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o, c, tanh_c, h;
};

/// Single-layer LSTM. W has shape 4H x (I + H), b has shape 4H x 1.
inline std::vector<LstmStep> lstm_forward(const Mat &W, const Mat &b, const std::vector<Vec> &inputs) {
    const Eigen::Index H = W.rows() / 4;
    const Eigen::Index I = W.cols() - H;
    std::vector<LstmStep> steps;
    steps.reserve(inputs.size());
    Vec h = Vec::Zero(H), c = Vec::Zero(H);
    for (const auto &x : inputs) {
        if (x.size() != I) throw UsageError("lstm_forward: input size mismatch");
        LstmStep s;
        s.x = x;
        s.h_prev = h;
        s.c_prev = c;
        const Vec z = W.leftCols(I) * x + W.rightCols(H) * h + b.col(0);
        s.i = z.segment(0, H).unaryExpr(&sigmoid);
        s.f = z.segment(H, H).unaryExpr(&sigmoid);
        s.g = z.segment(2 * H, H).array().tanh();
        s.o = z.segment(3 * H, H).unaryExpr(&sigmoid);
        s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
        s.tanh_c = s.c.array().tanh();
        s.h = s.o.cwiseProduct(s.tanh_c);
        h = s.h;
        c = s.c;
        steps.push_back(std::move(s));
    }
    return steps;
}

/// Backpropagation through time. dh[t] is the loss gradient arriving at h_t
/// from outside the recurrence. Accumulates into dW, db; returns dL/dx_t.
inline std::vector<Vec> lstm_backward(const Mat &W, const std::vector<LstmStep> &steps, const std::vector<Vec> &dh,
                                      Mat &dW, Mat &db) {
    const Eigen::Index H = W.rows() / 4;
    const Eigen::Index I = W.cols() - H;
    std::vector<Vec> dx(steps.size());
    Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
    for (std::size_t t = steps.size(); t-- > 0;) {
        const LstmStep &s = steps[t];
        const Vec dh_t = dh[t] + dh_next;
        const Vec d_o = dh_t.cwiseProduct(s.tanh_c);
        const Vec dc = dc_next + dh_t.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
        const Vec d_i = dc.cwiseProduct(s.g);
        const Vec d_f = dc.cwiseProduct(s.c_prev);
        const Vec d_g = dc.cwiseProduct(s.i);
        Vec dz(4 * H);
        dz.segment(0, H) = d_i.array() * s.i.array() * (1.0 - s.i.array());
        dz.segment(H, H) = d_f.array() * s.f.array() * (1.0 - s.f.array());
        dz.segment(2 * H, H) = d_g.array() * (1.0 - s.g.array().square());
        dz.segment(3 * H, H) = d_o.array() * s.o.array() * (1.0 - s.o.array());

        dW.leftCols(I).noalias() += dz * s.x.transpose();
        dW.rightCols(H).noalias() += dz * s.h_prev.transpose();
        db.col(0) += dz;
        dx[t] = W.leftCols(I).transpose() * dz;
        dh_next = W.rightCols(H).transpose() * dz;
        dc_next = dc.cwiseProduct(s.f);
    }
    return dx;
}

/// Numerically stable softmax.
inline Vec softmax(const Vec &z) {
    const double mx = z.maxCoeff();
    Vec e = (z.array() - mx).exp();
    return e / e.sum();
}

inline double log_sum_exp(const Vec &z) {
    const double mx = z.maxCoeff();
    return mx + std::log((z.array() - mx).exp().sum());
}

/// Scales gradients down so their global L2 norm is at most max_norm.
inline double clip_global_norm(const std::vector<Mat *> &grads, double max_norm) {
    double sq = 0.0;
    for (const Mat *g : grads) sq += g->squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0)
        for (Mat *g : grads) *g *= max_norm / norm;
    return norm;
}

/// Adam with bias correction.
class Adam {
  public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Mat *> &params, const std::vector<Mat *> &grads) {
        if (m_.empty()) {
            for (const Mat *p : params) {
                m_.push_back(Mat::Zero(p->rows(), p->cols()));
                v_.push_back(Mat::Zero(p->rows(), p->cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            const Mat &g = *grads[k];
            m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
            v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
            params[k]->array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
        }
    }

  private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Mat> m_, v_;
};

} // namespace commeval::nn
