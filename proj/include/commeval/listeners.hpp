#pragma once

// Listener models: each maps (utterance, three-color context) to a
// distribution over which color is the target.
//
//  - OracleListener reads colors through the lexicon's region predicates.
//  - LiteralListenerModel encodes the utterance with an LSTM into a mean color
//    feature vector mu and a square matrix Sigma, scores every context color f
//    by -(f - mu)^T Sigma (f - mu) and normalizes with a softmax.
//  - PragmaticSpeakerLM is a color-conditioned LSTM language model; inverting
//    it with Bayes' rule under a uniform prior over the three colors gives the
//    pragmatic listener.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commeval/colorspace.hpp"
#include "commeval/corpus.hpp"
#include "commeval/error.hpp"
#include "commeval/fileio.hpp"
#include "commeval/lexicon.hpp"
#include "commeval/nn.hpp"
#include "commeval/random.hpp"
#include "commeval/textproc.hpp"

namespace commeval {

struct ListenerDistribution {
    std::array<double, 3> probs{1.0 / 3, 1.0 / 3, 1.0 / 3};

    /// Lowest index among the maximal entries.
    int argmax() const {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
        return best;
    }

    bool tied_max() const {
        const double mx = probs[static_cast<std::size_t>(argmax())];
        return std::count(probs.begin(), probs.end(), mx) > 1;
    }

    bool is_simplex(double tol = 1e-9) const {
        double s = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0)) return false;
            s += p;
        }
        return std::abs(s - 1.0) <= tol;
    }
};

/// Softmax of three log-scores, computed with max subtraction. All -inf gives
/// the uniform distribution.
inline ListenerDistribution softmax3(const std::array<double, 3> &z) {
    const double mx = std::max({z[0], z[1], z[2]});
    if (!std::isfinite(mx)) {
        if (mx > 0) { // +inf somewhere: split mass among the infinite entries
            ListenerDistribution d;
            const double k = static_cast<double>(std::count(z.begin(), z.end(), mx));
            for (std::size_t i = 0; i < 3; ++i) d.probs[i] = z[i] == mx ? 1.0 / k : 0.0;
            return d;
        }
        return {};
    }
    ListenerDistribution d;
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) sum += d.probs[i] = std::exp(z[i] - mx);
    for (auto &p : d.probs) p /= sum;
    return d;
}

class Listener {
  public:
    virtual ~Listener() = default;
    virtual ListenerDistribution distribution(const std::string &utterance, const ColorContext &ctx) const = 0;
    virtual std::string name() const = 0;
};

/// Uniform over the colors matched by every lexicon term in the utterance
/// (uniform over all three when no color matches or no term is known), mixed
/// with epsilon of the uniform distribution.
inline ListenerDistribution oracle_distribution(const std::string &utterance, const ColorContext &ctx,
                                                const ColorLexicon &lexicon, double epsilon = 0.01) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UsageError("oracle epsilon must be in [0, 1)");
    const auto match = matching_colors(lexicon, tokenize(utterance), ctx.colors);
    std::array<double, 3> base{1.0 / 3, 1.0 / 3, 1.0 / 3};
    if (!match.empty()) {
        base = {0.0, 0.0, 0.0};
        for (int i : match) base[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(match.size());
    }
    ListenerDistribution d;
    for (std::size_t i = 0; i < 3; ++i) d.probs[i] = (1.0 - epsilon) * base[i] + epsilon / 3.0;
    return d;
}

class OracleListener final : public Listener {
  public:
    explicit OracleListener(ColorLexicon lexicon = ColorLexicon::builtin(), double epsilon = 0.01)
        : lexicon_(std::move(lexicon)), epsilon_(epsilon) {
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UsageError("oracle epsilon must be in [0, 1)");
    }
    ListenerDistribution distribution(const std::string &u, const ColorContext &ctx) const override {
        return oracle_distribution(u, ctx, lexicon_, epsilon_);
    }
    std::string name() const override { return "oracle"; }

  private:
    ColorLexicon lexicon_;
    double epsilon_;
};

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    int embedding_dim = 50;
    int hidden_dim = 50;
    double clip_norm = 5.0;
    FeatureMode features = FeatureMode::fourier;
    std::string embeddings_path; // optional "token v1 v2 ..." file

    void check() const {
        if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0) || embedding_dim < 1 || hidden_dim < 1 ||
            !(clip_norm > 0.0))
            throw UsageError("training hyperparameters must be positive");
    }

    nlohmann::ordered_json to_json() const {
        return {{"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"seed", seed},
                {"embedding_dim", embedding_dim},
                {"hidden_dim", hidden_dim},
                {"clip_norm", clip_norm},
                {"features", std::string(to_string(features))},
                {"embeddings", embeddings_path.empty() ? nlohmann::ordered_json(nullptr)
                                                       : nlohmann::ordered_json(embeddings_path)}};
    }
};

namespace detail {

inline std::array<nn::Vec, 3> context_features(const ColorContext &ctx, FeatureMode mode) {
    std::array<nn::Vec, 3> out;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto f = color_features(ctx.colors[i], mode);
        out[i] = Eigen::Map<const nn::Vec>(f.data(), static_cast<Eigen::Index>(f.size()));
    }
    return out;
}

inline nn::Vec features_vec(const Color &c, FeatureMode mode) {
    const auto f = color_features(c, mode);
    return Eigen::Map<const nn::Vec>(f.data(), static_cast<Eigen::Index>(f.size()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Literal listener

struct LiteralParams {
    nn::Mat embed;   // d_e x V
    nn::Mat lstm_W;  // 4H x (d_e + H)
    nn::Mat lstm_b;  // 4H x 1
    nn::Mat mu_W;    // F x H
    nn::Mat mu_b;    // F x 1
    nn::Mat sigma_W; // F*F x H, Sigma row-major
    nn::Mat sigma_b; // F*F x 1

    template <typename Self, typename Fn> static void each(Self &self, Fn &&fn) {
        fn("embed", self.embed);
        fn("lstm_W", self.lstm_W);
        fn("lstm_b", self.lstm_b);
        fn("mu_W", self.mu_W);
        fn("mu_b", self.mu_b);
        fn("sigma_W", self.sigma_W);
        fn("sigma_b", self.sigma_b);
    }
};

class LiteralListenerModel {
  public:
    nn::Vocab vocab;
    FeatureMode mode = FeatureMode::raw_hsv;
    LiteralParams params;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();

    static LiteralListenerModel init(nn::Vocab vocab, FeatureMode mode, int d_e, int d_h, std::uint64_t seed) {
        LiteralListenerModel m;
        m.vocab = std::move(vocab);
        m.mode = mode;
        const auto V = static_cast<Eigen::Index>(m.vocab.size());
        const auto F = static_cast<Eigen::Index>(feature_dim(mode));
        Rng rng(seed);
        auto &p = m.params;
        p.embed.resize(d_e, V);
        nn::init_uniform(p.embed, 0.1, rng);
        p.lstm_W.resize(4 * d_h, d_e + d_h);
        nn::init_uniform(p.lstm_W, 0.08, rng);
        p.lstm_b = nn::Mat::Zero(4 * d_h, 1);
        p.lstm_b.block(d_h, 0, d_h, 1).setOnes(); // forget gate bias
        p.mu_W.resize(F, d_h);
        nn::init_uniform(p.mu_W, 0.08, rng);
        p.mu_b = nn::Mat::Constant(F, 1, mode == FeatureMode::raw_hsv ? 0.5 : 0.0);
        p.sigma_W.resize(F * F, d_h);
        nn::init_uniform(p.sigma_W, 0.08, rng);
        p.sigma_b = nn::Mat::Zero(F * F, 1);
        for (Eigen::Index i = 0; i < F; ++i) p.sigma_b(i * F + i, 0) = 1.0;
        return m;
    }

    std::size_t feature_size() const { return feature_dim(mode); }

    struct Forward {
        std::vector<int> ids; // including the leading BOS
        std::vector<nn::LstmStep> steps;
        nn::Vec mu;
        nn::Mat sigma;
        std::array<nn::Vec, 3> diffs;
        std::array<double, 3> scores{};
    };

    Forward forward(const std::vector<int> &token_ids, const std::array<nn::Vec, 3> &feats) const {
        Forward fw;
        fw.ids.push_back(nn::Vocab::bos);
        fw.ids.insert(fw.ids.end(), token_ids.begin(), token_ids.end());
        std::vector<nn::Vec> inputs;
        for (int id : fw.ids) inputs.push_back(params.embed.col(id));
        fw.steps = nn::lstm_forward(params.lstm_W, params.lstm_b, inputs);
        const nn::Vec &h = fw.steps.back().h;
        const auto F = static_cast<Eigen::Index>(feature_size());
        fw.mu = params.mu_W * h + params.mu_b.col(0);
        const nn::Vec s = params.sigma_W * h + params.sigma_b.col(0);
        fw.sigma = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            s.data(), F, F);
        for (std::size_t k = 0; k < 3; ++k) {
            fw.diffs[k] = feats[k] - fw.mu;
            fw.scores[k] = -fw.diffs[k].dot(fw.sigma * fw.diffs[k]);
        }
        return fw;
    }

    std::array<double, 3> scores(const std::string &utterance, const ColorContext &ctx) const {
        return forward(vocab.encode(tokenize(utterance)), detail::context_features(ctx, mode)).scores;
    }

    ListenerDistribution distribution(const std::string &utterance, const ColorContext &ctx) const {
        return softmax3(scores(utterance, ctx));
    }

    /// Cross-entropy of the target index; accumulates gradients into grad.
    double loss(const std::vector<int> &token_ids, const std::array<nn::Vec, 3> &feats, int target,
                LiteralParams *grad) const {
        const Forward fw = forward(token_ids, feats);
        const auto dist = softmax3(fw.scores);
        const double p = dist.probs[static_cast<std::size_t>(target)];
        const double mx = std::max({fw.scores[0], fw.scores[1], fw.scores[2]});
        double lse = 0.0;
        for (double s : fw.scores) lse += std::exp(s - mx);
        const double value = -(fw.scores[static_cast<std::size_t>(target)] - mx - std::log(lse));
        (void)p;
        if (!grad) return value;

        const auto F = static_cast<Eigen::Index>(feature_size());
        nn::Vec dmu = nn::Vec::Zero(F);
        nn::Mat dsigma = nn::Mat::Zero(F, F);
        const nn::Mat sym = fw.sigma + fw.sigma.transpose();
        for (std::size_t k = 0; k < 3; ++k) {
            const double g = dist.probs[k] - (static_cast<int>(k) == target ? 1.0 : 0.0);
            dmu += g * (sym * fw.diffs[k]);
            dsigma -= g * fw.diffs[k] * fw.diffs[k].transpose();
        }
        nn::Vec dsig(F * F);
        for (Eigen::Index r = 0; r < F; ++r)
            for (Eigen::Index c = 0; c < F; ++c) dsig(r * F + c) = dsigma(r, c);

        const nn::Vec &h = fw.steps.back().h;
        grad->mu_W.noalias() += dmu * h.transpose();
        grad->mu_b.col(0) += dmu;
        grad->sigma_W.noalias() += dsig * h.transpose();
        grad->sigma_b.col(0) += dsig;
        const nn::Vec dh = params.mu_W.transpose() * dmu + params.sigma_W.transpose() * dsig;

        std::vector<nn::Vec> dhs(fw.steps.size(), nn::Vec::Zero(h.size()));
        dhs.back() = dh;
        const auto dx = nn::lstm_backward(params.lstm_W, fw.steps, dhs, grad->lstm_W, grad->lstm_b);
        for (std::size_t t = 0; t < fw.ids.size(); ++t) grad->embed.col(fw.ids[t]) += dx[t];
        return value;
    }
};

// ---------------------------------------------------------------------------
// Pragmatic speaker language model

struct PragmaticParams {
    nn::Mat embed;  // d_e x V
    nn::Mat lstm_W; // 4H x (d_e + F + H)
    nn::Mat lstm_b; // 4H x 1
    nn::Mat out_W;  // V x H
    nn::Mat out_b;  // V x 1

    template <typename Self, typename Fn> static void each(Self &self, Fn &&fn) {
        fn("embed", self.embed);
        fn("lstm_W", self.lstm_W);
        fn("lstm_b", self.lstm_b);
        fn("out_W", self.out_W);
        fn("out_b", self.out_b);
    }
};

class PragmaticSpeakerLM {
  public:
    nn::Vocab vocab;
    FeatureMode mode = FeatureMode::raw_hsv;
    PragmaticParams params;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();

    static PragmaticSpeakerLM init(nn::Vocab vocab, FeatureMode mode, int d_e, int d_h, std::uint64_t seed) {
        PragmaticSpeakerLM m;
        m.vocab = std::move(vocab);
        m.mode = mode;
        const auto V = static_cast<Eigen::Index>(m.vocab.size());
        const auto F = static_cast<Eigen::Index>(feature_dim(mode));
        Rng rng(seed);
        auto &p = m.params;
        p.embed.resize(d_e, V);
        nn::init_uniform(p.embed, 0.1, rng);
        p.lstm_W.resize(4 * d_h, d_e + F + d_h);
        nn::init_uniform(p.lstm_W, 0.08, rng);
        p.lstm_b = nn::Mat::Zero(4 * d_h, 1);
        p.lstm_b.block(d_h, 0, d_h, 1).setOnes();
        p.out_W.resize(V, d_h);
        nn::init_uniform(p.out_W, 0.08, rng);
        p.out_b = nn::Mat::Zero(V, 1);
        return m;
    }

    struct Forward {
        std::vector<int> inputs;  // BOS, u_1 .. u_n
        std::vector<int> targets; // u_1 .. u_n, EOS
        std::vector<nn::LstmStep> steps;
        std::vector<nn::Vec> log_probs; // per step, over the vocabulary
    };

    Forward forward(const std::vector<int> &token_ids, const nn::Vec &color) const {
        Forward fw;
        fw.inputs.push_back(nn::Vocab::bos);
        fw.inputs.insert(fw.inputs.end(), token_ids.begin(), token_ids.end());
        fw.targets = token_ids;
        fw.targets.push_back(nn::Vocab::eos);
        const auto d_e = params.embed.rows();
        std::vector<nn::Vec> xs;
        for (int id : fw.inputs) {
            nn::Vec x(d_e + color.size());
            x << params.embed.col(id), color;
            xs.push_back(std::move(x));
        }
        fw.steps = nn::lstm_forward(params.lstm_W, params.lstm_b, xs);
        for (const auto &s : fw.steps) {
            const nn::Vec logits = params.out_W * s.h + params.out_b.col(0);
            fw.log_probs.push_back(logits.array() - nn::log_sum_exp(logits));
        }
        return fw;
    }

    /// Teacher-forced sum of token log-probabilities plus the EOS term.
    double logprob(const std::vector<int> &token_ids, const nn::Vec &color) const {
        const Forward fw = forward(token_ids, color);
        double lp = 0.0;
        for (std::size_t t = 0; t < fw.targets.size(); ++t) lp += fw.log_probs[t](fw.targets[t]);
        return lp;
    }

    double logprob(const std::string &utterance, const Color &color) const {
        return logprob(vocab.encode(tokenize(utterance)), detail::features_vec(color, mode));
    }

    /// Negative log-likelihood; accumulates gradients into grad.
    double loss(const std::vector<int> &token_ids, const nn::Vec &color, PragmaticParams *grad) const {
        const Forward fw = forward(token_ids, color);
        double value = 0.0;
        for (std::size_t t = 0; t < fw.targets.size(); ++t) value -= fw.log_probs[t](fw.targets[t]);
        if (!grad) return value;
        const auto H = params.out_W.cols();
        std::vector<nn::Vec> dhs;
        for (std::size_t t = 0; t < fw.steps.size(); ++t) {
            nn::Vec dlogits = fw.log_probs[t].array().exp();
            dlogits(fw.targets[t]) -= 1.0;
            grad->out_W.noalias() += dlogits * fw.steps[t].h.transpose();
            grad->out_b.col(0) += dlogits;
            dhs.push_back(params.out_W.transpose() * dlogits);
        }
        (void)H;
        const auto dx = nn::lstm_backward(params.lstm_W, fw.steps, dhs, grad->lstm_W, grad->lstm_b);
        const auto d_e = params.embed.rows();
        for (std::size_t t = 0; t < fw.inputs.size(); ++t) grad->embed.col(fw.inputs[t]) += dx[t].head(d_e);
        return value;
    }
};

/// Bayes inversion with a uniform prior over the three context colors.
inline ListenerDistribution pragmatic_from_logprobs(const std::array<double, 3> &logprobs) {
    return softmax3(logprobs);
}

inline ListenerDistribution pragmatic_distribution(const PragmaticSpeakerLM &model, const std::string &utterance,
                                                   const ColorContext &ctx) {
    const auto ids = model.vocab.encode(tokenize(utterance));
    std::array<double, 3> lp{};
    for (std::size_t i = 0; i < 3; ++i) lp[i] = model.logprob(ids, detail::features_vec(ctx.colors[i], model.mode));
    return pragmatic_from_logprobs(lp);
}

inline ListenerDistribution literal_distribution(const LiteralListenerModel &model, const std::string &utterance,
                                                 const ColorContext &ctx) {
    return model.distribution(utterance, ctx);
}

class LiteralListener final : public Listener {
  public:
    explicit LiteralListener(std::shared_ptr<const LiteralListenerModel> model) : model_(std::move(model)) {}
    ListenerDistribution distribution(const std::string &u, const ColorContext &ctx) const override {
        return model_->distribution(u, ctx);
    }
    std::string name() const override { return "literal"; }

  private:
    std::shared_ptr<const LiteralListenerModel> model_;
};

class PragmaticListener final : public Listener {
  public:
    explicit PragmaticListener(std::shared_ptr<const PragmaticSpeakerLM> model) : model_(std::move(model)) {}
    ListenerDistribution distribution(const std::string &u, const ColorContext &ctx) const override {
        return pragmatic_distribution(*model_, u, ctx);
    }
    std::string name() const override { return "pragmatic"; }

  private:
    std::shared_ptr<const PragmaticSpeakerLM> model_;
};

// ---------------------------------------------------------------------------
// Training

/// Reference utterances paired with their context; the training signal for
/// both listener models.
struct TrainingExample {
    std::vector<std::string> tokens;
    ColorContext context;
};

inline std::vector<TrainingExample> reference_examples(const Corpus &corpus) {
    std::vector<TrainingExample> out;
    for (const auto &inst : corpus.instances)
        for (const auto &r : inst.references) out.push_back({tokenize(r), inst.context});
    return out;
}

inline nn::Vocab build_vocab(const std::vector<TrainingExample> &examples) {
    std::set<std::string> words;
    for (const auto &e : examples) words.insert(e.tokens.begin(), e.tokens.end());
    return nn::Vocab::from_tokens(words);
}

/// Overwrites embedding columns for vocabulary tokens found in a
/// whitespace-separated "token v1 .. vd" file. Returns the number of rows used.
inline std::size_t load_embeddings(const std::string &path, const nn::Vocab &vocab, nn::Mat &embed) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding file '" + path + "'");
    std::string line;
    std::size_t lineno = 0, used = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string token;
        if (!(ss >> token)) continue;
        std::vector<double> v;
        double x;
        while (ss >> x) v.push_back(x);
        if (!ss.eof()) throw ParseError("embedding file: non-numeric value", lineno);
        if (static_cast<Eigen::Index>(v.size()) != embed.rows())
            throw ParseError("embedding dimension " + std::to_string(v.size()) + " does not match model dimension " +
                                 std::to_string(embed.rows()),
                             lineno);
        const int id = vocab.lookup(token);
        if (id == nn::Vocab::unk && token != "<unk>") continue;
        embed.col(id) = Eigen::Map<const nn::Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
        ++used;
    }
    return used;
}

struct TrainTrace {
    std::vector<double> epoch_loss; // mean per-example loss
};

namespace detail {

template <typename Params> std::vector<nn::Mat *> param_list(Params &p) {
    std::vector<nn::Mat *> out;
    Params::each(p, [&](const char *, nn::Mat &m) { out.push_back(&m); });
    return out;
}

template <typename Params> Params zeros_like(const Params &p) {
    Params z = p;
    Params::each(z, [](const char *, nn::Mat &m) { m.setZero(); });
    return z;
}

// Mini-batch Adam on per-example losses with global-norm clipping.
template <typename Model, typename Params, typename LossFn>
TrainTrace fit(Model &model, Params &params, std::size_t n_examples, const TrainConfig &cfg, LossFn &&loss) {
    if (n_examples == 0) throw UsageError("training set is empty");
    TrainTrace trace;
    Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    nn::Adam opt(cfg.learning_rate);
    std::vector<std::size_t> order(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
    Params grad = zeros_like(params);
    auto pl = param_list(params);
    auto gl = param_list(grad);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < n_examples; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(n_examples, start + static_cast<std::size_t>(cfg.batch_size));
            for (nn::Mat *g : gl) g->setZero();
            for (std::size_t k = start; k < end; ++k) total += loss(model, order[k], &grad);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (nn::Mat *g : gl) *g *= scale;
            nn::clip_global_norm(gl, cfg.clip_norm);
            opt.step(pl, gl);
        }
        trace.epoch_loss.push_back(total / static_cast<double>(n_examples));
    }
    return trace;
}

} // namespace detail

template <typename Model> struct Trained {
    Model model;
    TrainTrace trace;
};

/// Minimizes target cross-entropy of the literal listener over reference
/// utterances.
inline Trained<LiteralListenerModel> train_literal(const Corpus &corpus, const TrainConfig &cfg) {
    cfg.check();
    const auto examples = reference_examples(corpus);
    if (examples.empty()) throw UsageError("train_literal: corpus has no reference utterances");
    auto model = LiteralListenerModel::init(build_vocab(examples), cfg.features, cfg.embedding_dim, cfg.hidden_dim,
                                            cfg.seed);
    if (!cfg.embeddings_path.empty()) load_embeddings(cfg.embeddings_path, model.vocab, model.params.embed);
    model.config = cfg.to_json();

    std::vector<std::vector<int>> ids;
    std::vector<std::array<nn::Vec, 3>> feats;
    for (const auto &e : examples) {
        ids.push_back(model.vocab.encode(e.tokens));
        feats.push_back(detail::context_features(e.context, cfg.features));
    }
    auto trace = detail::fit(model, model.params, examples.size(), cfg,
                             [&](const LiteralListenerModel &m, std::size_t i, LiteralParams *g) {
                                 return m.loss(ids[i], feats[i], examples[i].context.target_index, g);
                             });
    return {std::move(model), std::move(trace)};
}

/// Next-token cross-entropy of reference utterances conditioned on the
/// target color.
inline Trained<PragmaticSpeakerLM> train_pragmatic(const Corpus &corpus, const TrainConfig &cfg) {
    cfg.check();
    const auto examples = reference_examples(corpus);
    if (examples.empty()) throw UsageError("train_pragmatic: corpus has no reference utterances");
    auto model = PragmaticSpeakerLM::init(build_vocab(examples), cfg.features, cfg.embedding_dim, cfg.hidden_dim,
                                          cfg.seed);
    if (!cfg.embeddings_path.empty()) load_embeddings(cfg.embeddings_path, model.vocab, model.params.embed);
    model.config = cfg.to_json();

    std::vector<std::vector<int>> ids;
    std::vector<nn::Vec> feats;
    for (const auto &e : examples) {
        ids.push_back(model.vocab.encode(e.tokens));
        feats.push_back(detail::features_vec(e.context.target(), cfg.features));
    }
    auto trace = detail::fit(model, model.params, examples.size(), cfg,
                             [&](const PragmaticSpeakerLM &m, std::size_t i, PragmaticParams *g) {
                                 return m.loss(ids[i], feats[i], g);
                             });
    return {std::move(model), std::move(trace)};
}

/// Splits instances into (train, holdout) with a seeded shuffle. Paired
/// contexts stay on the same side.
inline std::pair<Corpus, Corpus> holdout_split(const Corpus &corpus, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw UsageError("holdout fraction must be in [0, 1)");
    std::vector<std::string> groups;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
        const auto &ctx = corpus.instances[i].context;
        const std::string key = ctx.pair_id ? "pair:" + *ctx.pair_id : "ctx:" + ctx.context_id;
        if (!members.contains(key)) groups.push_back(key);
        members[key].push_back(i);
    }
    Rng rng(seed ^ 0xD1B54A32D192ED03ULL);
    rng.shuffle(groups);
    const auto n_hold = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(groups.size()) + 0.5));
    std::set<std::size_t> hold;
    for (std::size_t g = 0; g < n_hold; ++g)
        for (std::size_t i : members[groups[g]]) hold.insert(i);
    Corpus train, test;
    train.name = test.name = corpus.name;
    train.seed = test.seed = corpus.seed;
    train.config = test.config = corpus.config;
    for (std::size_t i = 0; i < corpus.instances.size(); ++i)
        (hold.contains(i) ? test : train).instances.push_back(corpus.instances[i]);
    return {std::move(train), std::move(test)};
}

struct AccuracyReport {
    double accuracy = 0.0;
    std::size_t n = 0;
    std::size_t correct = 0;
    std::size_t ties = 0; // pairs whose maximum was shared by several colors
};

/// Fraction of (reference, context) pairs where the listener's argmax (lowest
/// index on ties) is the target.
inline AccuracyReport listener_accuracy(const Listener &listener, const Corpus &corpus) {
    if (corpus.instances.empty()) throw UsageError("listener_accuracy: empty corpus");
    AccuracyReport rep;
    for (const auto &inst : corpus.instances)
        for (const auto &r : inst.references) {
            const auto d = listener.distribution(r, inst.context);
            ++rep.n;
            if (d.tied_max()) ++rep.ties;
            if (d.argmax() == inst.context.target_index) ++rep.correct;
        }
    rep.accuracy = rep.n ? static_cast<double>(rep.correct) / static_cast<double>(rep.n) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Model files
//
// Layout (little-endian): 8-byte magic "CMEVMODL", u32 version, u8 kind
// (1 literal, 2 pragmatic), u8 feature mode, string config JSON, u32 vocab
// size + strings, u32 parameter count + (string name, u32 rows, u32 cols,
// column-major f64 data), u64 FNV-1a checksum of everything before it.
// Strings are u32 length + bytes.

enum class ModelKind : std::uint8_t { literal = 1, pragmatic = 2 };

namespace detail {

inline constexpr char model_magic[8] = {'C', 'M', 'E', 'V', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t model_version = 1;

inline std::uint64_t fnv1a(const std::string &bytes, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(bytes[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

class Writer {
  public:
    template <typename T> void pod(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void str(const std::string &s) {
        pod(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char *p, std::size_t n) { out_.append(p, n); }
    std::string &bytes() { return out_; }

  private:
    std::string out_;
};

class Reader {
  public:
    explicit Reader(const std::string &bytes) : in_(bytes) {}
    template <typename T> T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void raw(char *p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }

  private:
    const std::string &in_;
    std::size_t pos_ = 0;
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw ParseError("model file truncated");
    }
};

template <typename Model, typename Params>
std::string serialize_model(const Model &m, ModelKind kind) {
    Writer w;
    w.raw(model_magic, 8);
    w.pod(model_version);
    w.pod(static_cast<std::uint8_t>(kind));
    w.pod(static_cast<std::uint8_t>(m.mode == FeatureMode::raw_hsv ? 0 : 1));
    w.str(m.config.dump());
    w.pod(static_cast<std::uint32_t>(m.vocab.size()));
    for (const auto &t : m.vocab.tokens()) w.str(t);
    std::uint32_t count = 0;
    Params::each(m.params, [&](const char *, const nn::Mat &) { ++count; });
    w.pod(count);
    Params::each(m.params, [&](const char *name, const nn::Mat &mat) {
        w.str(name);
        w.pod(static_cast<std::uint32_t>(mat.rows()));
        w.pod(static_cast<std::uint32_t>(mat.cols()));
        w.raw(reinterpret_cast<const char *>(mat.data()), static_cast<std::size_t>(mat.size()) * sizeof(double));
    });
    const std::uint64_t sum = fnv1a(w.bytes(), w.bytes().size());
    w.pod(sum);
    return std::move(w.bytes());
}

struct ModelHeader {
    ModelKind kind;
    FeatureMode mode;
    nlohmann::ordered_json config;
    nn::Vocab vocab;
};

inline ModelHeader read_header(Reader &r, const std::string &bytes) {
    if (bytes.size() < 8 + 8 || std::memcmp(bytes.data(), model_magic, 8) != 0)
        throw ParseError("not a model file (bad magic)");
    if (fnv1a(bytes, bytes.size() - 8) != [&] {
            std::uint64_t v;
            std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
            return v;
        }())
        throw ParseError("model file corrupt or truncated (checksum mismatch)");
    char magic[8];
    r.raw(magic, 8);
    const auto version = r.pod<std::uint32_t>();
    if (version != model_version)
        throw ParseError("unsupported model file version " + std::to_string(version));
    ModelHeader h;
    const auto kind = r.pod<std::uint8_t>();
    if (kind != 1 && kind != 2) throw ParseError("unknown model kind");
    h.kind = static_cast<ModelKind>(kind);
    const auto mode = r.pod<std::uint8_t>();
    if (mode > 1) throw ParseError("unknown feature mode");
    h.mode = mode == 0 ? FeatureMode::raw_hsv : FeatureMode::fourier;
    try {
        h.config = nlohmann::ordered_json::parse(r.str());
    } catch (const nlohmann::json::parse_error &) {
        throw ParseError("model file: bad config block");
    }
    const auto vn = r.pod<std::uint32_t>();
    std::vector<std::string> tokens;
    for (std::uint32_t i = 0; i < vn; ++i) tokens.push_back(r.str());
    h.vocab = nn::Vocab::from_list(std::move(tokens));
    return h;
}

template <typename Params> void read_params(Reader &r, Params &p) {
    const auto count = r.pod<std::uint32_t>();
    std::uint32_t expected = 0;
    Params::each(p, [&](const char *, nn::Mat &) { ++expected; });
    if (count != expected) throw ParseError("model file: wrong parameter count");
    Params::each(p, [&](const char *name, nn::Mat &mat) {
        if (r.str() != name) throw ParseError(std::string("model file: expected parameter ") + name);
        const auto rows = r.pod<std::uint32_t>();
        const auto cols = r.pod<std::uint32_t>();
        mat.resize(rows, cols);
        r.raw(reinterpret_cast<char *>(mat.data()), static_cast<std::size_t>(mat.size()) * sizeof(double));
        if (!mat.allFinite()) throw ParseError(std::string("model file: non-finite weights in ") + name);
    });
}

} // namespace detail

inline std::string serialize_model(const LiteralListenerModel &m) {
    return detail::serialize_model<LiteralListenerModel, LiteralParams>(m, ModelKind::literal);
}
inline std::string serialize_model(const PragmaticSpeakerLM &m) {
    return detail::serialize_model<PragmaticSpeakerLM, PragmaticParams>(m, ModelKind::pragmatic);
}

template <typename Model> void save_model(const Model &m, const std::string &path) {
    write_file_atomic(path, serialize_model(m));
}

inline ModelKind peek_model_kind(const std::string &path) {
    const std::string bytes = read_file(path);
    detail::Reader r(bytes);
    return detail::read_header(r, bytes).kind;
}

namespace detail {

inline void check_shapes(const LiteralListenerModel &m) {
    const auto &p = m.params;
    const auto V = static_cast<Eigen::Index>(m.vocab.size());
    const auto F = static_cast<Eigen::Index>(feature_dim(m.mode));
    const auto E = p.embed.rows(), H = p.lstm_W.rows() / 4;
    const bool ok = p.embed.cols() == V && p.lstm_W.rows() == 4 * H && p.lstm_W.cols() == E + H &&
                    p.lstm_b.rows() == 4 * H && p.lstm_b.cols() == 1 && p.mu_W.rows() == F && p.mu_W.cols() == H &&
                    p.mu_b.rows() == F && p.sigma_W.rows() == F * F && p.sigma_W.cols() == H &&
                    p.sigma_b.rows() == F * F && H > 0;
    if (!ok) throw ParseError("model file: inconsistent literal listener shapes");
}

inline void check_shapes(const PragmaticSpeakerLM &m) {
    const auto &p = m.params;
    const auto V = static_cast<Eigen::Index>(m.vocab.size());
    const auto F = static_cast<Eigen::Index>(feature_dim(m.mode));
    const auto E = p.embed.rows(), H = p.lstm_W.rows() / 4;
    const bool ok = p.embed.cols() == V && p.lstm_W.rows() == 4 * H && p.lstm_W.cols() == E + F + H &&
                    p.lstm_b.rows() == 4 * H && p.out_W.rows() == V && p.out_W.cols() == H && p.out_b.rows() == V &&
                    H > 0;
    if (!ok) throw ParseError("model file: inconsistent speaker model shapes");
}

template <typename Model, typename Params> Model load_model(const std::string &path, ModelKind kind) {
    const std::string bytes = read_file(path);
    try {
        Reader r(bytes);
        auto h = read_header(r, bytes);
        if (h.kind != kind)
            throw ParseError(std::string("model file holds a ") +
                             (h.kind == ModelKind::literal ? "literal listener" : "pragmatic speaker") +
                             " model");
        Model m;
        m.vocab = std::move(h.vocab);
        m.mode = h.mode;
        m.config = std::move(h.config);
        read_params(r, m.params);
        if (r.pos() != bytes.size() - 8) throw ParseError("model file: trailing bytes");
        check_shapes(m);
        return m;
    } catch (const ParseError &ex) {
        throw ParseError(path + ": " + ex.what());
    }
}

} // namespace detail

inline LiteralListenerModel load_literal_model(const std::string &path) {
    return detail::load_model<LiteralListenerModel, LiteralParams>(path, ModelKind::literal);
}

inline PragmaticSpeakerLM load_pragmatic_model(const std::string &path) {
    return detail::load_model<PragmaticSpeakerLM, PragmaticParams>(path, ModelKind::pragmatic);
}

} // namespace commeval
