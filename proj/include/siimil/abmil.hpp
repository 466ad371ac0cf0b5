#pragma once

#include "siimil/eval.hpp"
#include "siimil/io.hpp"
#include "siimil/keylearn.hpp"
#include "siimil/rng.hpp"
#include "siimil/sii.hpp"
#include "siimil/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace siimil {

// Gated attention aggregator plus one linear bag classifier. feature_weights
// feeds the tanh branch, gate_weights the sigmoid branch, score_weights
// projects the gated activation to a scalar attention logit per instance.
struct AttentionModel {
    Matrix feature_weights;  // D x L
    Matrix gate_weights;     // D x L
    Vector score_weights;    // L
    Vector head_weights;     // D
    double head_bias = 0.0;

    Index dim() const { return feature_weights.rows(); }
    Index attention_dim() const { return feature_weights.cols(); }

    void validate() const {
        if (attention_dim() < 1) throw Error("attention model: L must be >= 1");
        if (gate_weights.rows() != dim() || gate_weights.cols() != attention_dim() ||
            score_weights.size() != attention_dim() || head_weights.size() != dim())
            throw Error("attention model: inconsistent parameter shapes");
        if (!feature_weights.allFinite() || !gate_weights.allFinite() ||
            !score_weights.allFinite() || !head_weights.allFinite() || !std::isfinite(head_bias))
            throw Error("attention model: non-finite parameter");
    }
};

// Same shapes as the model parameters; reused for gradients and Adam moments.
struct GradientSet {
    Matrix feature_weights;
    Matrix gate_weights;
    Vector score_weights;
    Vector head_weights;
    double head_bias = 0.0;
};

inline GradientSet zeros_like(const AttentionModel& m) {
    GradientSet g;
    g.feature_weights = Matrix::Zero(m.dim(), m.attention_dim());
    g.gate_weights = Matrix::Zero(m.dim(), m.attention_dim());
    g.score_weights = Vector::Zero(m.attention_dim());
    g.head_weights = Vector::Zero(m.dim());
    g.head_bias = 0.0;
    return g;
}

struct TrainConfig {
    double learning_rate = 0.0002;
    double weight_decay = 0.00001;
    int max_epochs = 100;
    int patience = 10;
    std::uint64_t seed = 0;
    Index attention_dim = 128;

    void validate() const {
        if (!(learning_rate > 0.0)) throw Error("train config: learning_rate must be > 0");
        if (weight_decay < 0.0) throw Error("train config: weight_decay must be >= 0");
        if (max_epochs < 1) throw Error("train config: max_epochs must be >= 1");
        if (patience < 1) throw Error("train config: patience must be >= 1");
        if (attention_dim < 1) throw Error("train config: attention_dim must be >= 1");
    }
};

struct AdamState {
    GradientSet first_moment;
    GradientSet second_moment;
    long step = 0;

    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;
};

inline AdamState make_adam_state(const AttentionModel& m) {
    return AdamState{zeros_like(m), zeros_like(m), 0};
}

// Weights uniform in +-1/sqrt(fan_in), biases zero. Fill order is fixed
// (feature, gate, score, head; column-major) so a seed pins the model.
inline AttentionModel initialize_model(Index dim, Index attention_dim, Rng& rng) {
    if (dim < 1 || attention_dim < 1) throw Error("initialize_model: dims must be >= 1");
    AttentionModel m;
    const auto fill = [&rng](auto& mat, double bound) {
        for (Index c = 0; c < mat.cols(); ++c)
            for (Index r = 0; r < mat.rows(); ++r) mat(r, c) = rng.uniform(-bound, bound);
    };
    const double in_bound = 1.0 / std::sqrt(static_cast<double>(dim));
    const double att_bound = 1.0 / std::sqrt(static_cast<double>(attention_dim));
    m.feature_weights.resize(dim, attention_dim);
    m.gate_weights.resize(dim, attention_dim);
    m.score_weights.resize(attention_dim);
    m.head_weights.resize(dim);
    fill(m.feature_weights, in_bound);
    fill(m.gate_weights, in_bound);
    fill(m.score_weights, att_bound);
    fill(m.head_weights, in_bound);
    m.head_bias = 0.0;
    return m;
}

struct AttentionForward {
    Vector attention;  // t softmax weights, each in (0,1), summing to 1
    Vector bag_repr;   // D
    double logit = 0.0;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Softmax with max subtraction; entries floored at the smallest normal
// double so extreme logit spreads cannot produce an exact zero weight.
inline Vector stable_softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp();
    Vector a = e / e.sum();
    return a.cwiseMax(std::numeric_limits<double>::min());
}

}  // namespace detail

// e_i = w_s.(tanh(Wf'q_i) * sigm(Wg'q_i)), a = softmax(e), z = sum a_i q_i,
// logit = w_h.z + b.
inline AttentionForward attention_forward(const Eigen::Ref<const Matrix>& instances,
                                          const AttentionModel& model) {
    if (instances.cols() < 1) throw Error("attention forward: empty bag");
    if (instances.rows() != model.dim())
        throw Error("attention forward: bag dim " + std::to_string(instances.rows()) +
                    " does not match model dim " + std::to_string(model.dim()));
    const Matrix hidden = (model.feature_weights.transpose() * instances).array().tanh();
    const Matrix gate =
        (1.0 / (1.0 + (-(model.gate_weights.transpose() * instances).array()).exp())).matrix();
    const Matrix gated = hidden.cwiseProduct(gate);
    const Vector logits = gated.transpose() * model.score_weights;
    AttentionForward out;
    out.attention = detail::stable_softmax(logits);
    out.bag_repr = instances * out.attention;
    out.logit = model.head_weights.dot(out.bag_repr) + model.head_bias;
    return out;
}

inline AttentionForward attention_forward(const SalientBag& bag, const AttentionModel& model) {
    return attention_forward(bag.embeddings, model);
}

inline double bag_probability(const Eigen::Ref<const Matrix>& instances, const AttentionModel& model) {
    return detail::sigmoid(attention_forward(instances, model).logit);
}

namespace detail {

inline double clamp_probability(double p) {
    return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

inline double bce(double p, int label) {
    p = clamp_probability(p);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace detail

// Binary cross-entropy of the sigmoid bag probability, p clamped away from
// {0,1}.
inline double bag_loss(const Eigen::Ref<const Matrix>& instances, int label,
                       const AttentionModel& model) {
    return detail::bce(detail::sigmoid(attention_forward(instances, model).logit), label);
}

inline double bag_loss(const SalientBag& bag, int label, const AttentionModel& model) {
    return bag_loss(bag.embeddings, label, model);
}

struct BagBackward {
    GradientSet gradients;
    double loss = 0.0;
    double probability = 0.0;
};

// Analytic gradients of bag_loss through the attention aggregation and the
// classifier head.
inline BagBackward bag_backward(const Eigen::Ref<const Matrix>& instances, int label,
                                const AttentionModel& model) {
    if (label != 0 && label != 1) throw Error("bag label must be 0 or 1");
    if (instances.cols() < 1) throw Error("bag gradients: empty bag");
    if (instances.rows() != model.dim())
        throw Error("bag gradients: bag dim " + std::to_string(instances.rows()) +
                    " does not match model dim " + std::to_string(model.dim()));

    const Matrix hidden = (model.feature_weights.transpose() * instances).array().tanh();  // L x t
    const Matrix gate =
        (1.0 / (1.0 + (-(model.gate_weights.transpose() * instances).array()).exp())).matrix();
    const Matrix gated = hidden.cwiseProduct(gate);          // L x t
    const Vector logits = gated.transpose() * model.score_weights;
    const Vector attention = detail::stable_softmax(logits); // t
    const Vector bag_repr = instances * attention;           // D
    const double logit = model.head_weights.dot(bag_repr) + model.head_bias;
    const double p = detail::clamp_probability(detail::sigmoid(logit));

    BagBackward out;
    out.probability = p;
    out.loss = detail::bce(p, label);

    const double d_logit = p - static_cast<double>(label);
    out.gradients.head_weights = d_logit * bag_repr;
    out.gradients.head_bias = d_logit;

    const Vector d_repr = d_logit * model.head_weights;            // D
    const Vector d_attention = instances.transpose() * d_repr;     // t
    const double mixed = attention.dot(d_attention);
    const Vector d_logits = attention.cwiseProduct((d_attention.array() - mixed).matrix());

    out.gradients.score_weights = gated * d_logits;                // L
    const Matrix d_gated = model.score_weights * d_logits.transpose();  // L x t
    const Matrix d_pre_hidden =
        d_gated.cwiseProduct(gate).cwiseProduct((1.0 - hidden.array().square()).matrix());
    const Matrix d_pre_gate = d_gated.cwiseProduct(hidden).cwiseProduct(
        gate.cwiseProduct((1.0 - gate.array()).matrix()));
    out.gradients.feature_weights = instances * d_pre_hidden.transpose();  // D x L
    out.gradients.gate_weights = instances * d_pre_gate.transpose();       // D x L
    return out;
}

inline GradientSet bag_gradients(const Eigen::Ref<const Matrix>& instances, int label,
                                 const AttentionModel& model) {
    return bag_backward(instances, label, model).gradients;
}

inline GradientSet bag_gradients(const SalientBag& bag, int label, const AttentionModel& model) {
    return bag_gradients(bag.embeddings, label, model);
}

// Adam with bias correction; weight decay is decoupled and applied to the
// parameters before the Adam delta.
inline void adam_step(AttentionModel& model, const GradientSet& grads, AdamState& state,
                      const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
    const double decay = cfg.learning_rate * cfg.weight_decay;

    const auto update = [&](auto& theta, const auto& grad, auto& m, auto& v) {
        theta -= decay * theta;
        m = AdamState::beta1 * m + (1.0 - AdamState::beta1) * grad;
        v = AdamState::beta2 * v + (1.0 - AdamState::beta2) * grad.cwiseProduct(grad);
        theta -= cfg.learning_rate *
                 ((m / bc1).array() / ((v / bc2).array().sqrt() + AdamState::epsilon)).matrix();
    };
    update(model.feature_weights, grads.feature_weights, state.first_moment.feature_weights,
           state.second_moment.feature_weights);
    update(model.gate_weights, grads.gate_weights, state.first_moment.gate_weights,
           state.second_moment.gate_weights);
    update(model.score_weights, grads.score_weights, state.first_moment.score_weights,
           state.second_moment.score_weights);
    update(model.head_weights, grads.head_weights, state.first_moment.head_weights,
           state.second_moment.head_weights);

    double& b = model.head_bias;
    double& mb = state.first_moment.head_bias;
    double& vb = state.second_moment.head_bias;
    b -= decay * b;
    mb = AdamState::beta1 * mb + (1.0 - AdamState::beta1) * grads.head_bias;
    vb = AdamState::beta2 * vb + (1.0 - AdamState::beta2) * grads.head_bias * grads.head_bias;
    b -= cfg.learning_rate * (mb / bc1) / (std::sqrt(vb / bc2) + AdamState::epsilon);
}

// Tracks the lowest validation loss; stops after `patience` epochs without a
// new strict minimum. Epochs are 1-based.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {
        if (patience < 1) throw Error("early stopping: patience must be >= 1");
    }

    bool observe(int epoch, double loss) {
        if (loss < best_loss_) {
            best_loss_ = loss;
            best_epoch_ = epoch;
            return true;
        }
        return false;
    }

    bool should_stop(int epoch) const { return epoch - best_epoch_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainingBag {
    Matrix instances;  // D x t
    int label = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auc = 0.0;
};

struct FoldResult {
    AttentionModel model;  // weights restored from the best epoch
    std::vector<EpochStats> log;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    double best_val_auc = 0.0;
};

// One-bag-per-step Adam training with seeded shuffling, mean validation loss
// and validation AUC per epoch, early stopping on validation loss, and
// restoration of the best-loss epoch's weights.
inline FoldResult train_fold(const std::vector<TrainingBag>& train, const std::vector<TrainingBag>& val,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty() || val.empty()) throw Error("train_fold: empty split");
    bool has_pos = false, has_neg = false;
    for (const auto& b : train) (b.label == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw Error("train_fold: training split must contain both classes");
    const Index dim = train.front().instances.rows();
    for (const auto& b : train)
        if (b.instances.rows() != dim) throw Error("train_fold: inconsistent bag dims");
    for (const auto& b : val)
        if (b.instances.rows() != dim) throw Error("train_fold: inconsistent bag dims");

    Rng rng(cfg.seed);
    AttentionModel model = initialize_model(dim, cfg.attention_dim, rng);
    AdamState adam = make_adam_state(model);
    EarlyStopping stopper(cfg.patience);

    FoldResult result;
    AttentionModel best = model;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> val_labels(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) val_labels[i] = val[i].label;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double train_loss = 0.0;
        for (std::size_t i : order) {
            const BagBackward bb = bag_backward(train[i].instances, train[i].label, model);
            adam_step(model, bb.gradients, adam, cfg);
            train_loss += bb.loss;
        }
        train_loss /= static_cast<double>(train.size());

        double val_loss = 0.0;
        std::vector<double> val_scores(val.size());
        for (std::size_t i = 0; i < val.size(); ++i) {
            const double p = bag_probability(val[i].instances, model);
            val_scores[i] = p;
            val_loss += detail::bce(p, val[i].label);
        }
        val_loss /= static_cast<double>(val.size());
        const double val_auc = roc_auc(val_scores, val_labels);

        result.log.push_back({epoch, train_loss, val_loss, val_auc});
        if (stopper.observe(epoch, val_loss)) {
            best = model;
            result.best_val_auc = val_auc;
        }
        if (stopper.should_stop(epoch)) break;
    }

    result.model = std::move(best);
    result.best_epoch = stopper.best_epoch();
    result.best_val_loss = stopper.best_loss();
    return result;
}

struct CvConfig {
    int folds = 5;
    double val_frac = 0.1;

    void validate() const {
        if (folds < 1) throw Error("cv config: folds must be >= 1");
        if (!(val_frac > 0.0) || val_frac >= 1.0) throw Error("cv config: val_frac must be in (0, 1)");
    }
};

struct FoldOutcome {
    int fold = 0;
    int train_count = 0;
    int val_count = 0;
    FoldResult result;
    std::vector<double> val_auc_trajectory;
    double val_auc = 0.0;  // at the restored epoch
};

struct CvResult {
    std::vector<FoldOutcome> folds;
    AttentionModel selected_model;
    int selected_fold = 0;
    double selected_val_auc = 0.0;
};

namespace detail {

struct StratifiedSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

// Stratified random split: each class contributes clamp(round(frac*n_c), 1,
// n_c-1) validation bags, so both splits always carry both classes.
inline StratifiedSplit stratified_split(std::span<const int> labels, double val_frac, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw Error("monte_carlo_cv: need at least 2 bags per class");
    StratifiedSplit split;
    for (auto* cls : {&neg, &pos}) {
        rng.shuffle(*cls);
        auto n_val = static_cast<std::size_t>(
            std::llround(val_frac * static_cast<double>(cls->size())));
        n_val = std::clamp<std::size_t>(n_val, 1, cls->size() - 1);
        split.val.insert(split.val.end(), cls->begin(), cls->begin() + static_cast<long>(n_val));
        split.train.insert(split.train.end(), cls->begin() + static_cast<long>(n_val), cls->end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    return split;
}

}  // namespace detail

// Monte Carlo cross-validation: independent seeded stratified splits; keys
// are recomputed per fold from that fold's training negatives only, salient
// bags are formed for both splits, then the attention model is trained.
// Fold f uses seed train_cfg.seed + f.
inline CvResult monte_carlo_cv(const std::vector<LabeledEmbeddingBag>& bags, const CvConfig& cv_cfg,
                               const KeyLearnConfig& key_cfg, const SiiConfig& sii_cfg,
                               const TrainConfig& train_cfg) {
    cv_cfg.validate();
    key_cfg.validate();
    sii_cfg.validate();
    train_cfg.validate();
    std::vector<int> labels(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) labels[i] = bags[i].label;

    CvResult cv;
    for (int fold = 0; fold < cv_cfg.folds; ++fold) {
        const std::uint64_t fold_seed = train_cfg.seed + static_cast<std::uint64_t>(fold);
        Rng split_rng(derive_seed(fold_seed, 0));
        const auto split = detail::stratified_split(labels, cv_cfg.val_frac, split_rng);

        std::vector<const EmbeddingMatrix*> fold_negatives;
        for (std::size_t i : split.train)
            if (bags[i].label == 0) fold_negatives.push_back(&bags[i].embeddings);
        const KeyMatrix keys = build_key_matrix(fold_negatives, key_cfg);

        const auto make_bags = [&](const std::vector<std::size_t>& idx) {
            std::vector<TrainingBag> out;
            out.reserve(idx.size());
            for (std::size_t i : idx) {
                SalientBag sb = sii_bag(bags[i].embeddings, keys, sii_cfg, bags[i].bag_id);
                out.push_back({std::move(sb.embeddings), bags[i].label});
            }
            return out;
        };
        const auto train_bags = make_bags(split.train);
        const auto val_bags = make_bags(split.val);

        TrainConfig fold_cfg = train_cfg;
        fold_cfg.seed = derive_seed(fold_seed, 1);
        FoldOutcome outcome;
        outcome.fold = fold;
        outcome.train_count = static_cast<int>(split.train.size());
        outcome.val_count = static_cast<int>(split.val.size());
        outcome.result = train_fold(train_bags, val_bags, fold_cfg);
        outcome.val_auc = outcome.result.best_val_auc;
        for (const auto& e : outcome.result.log) outcome.val_auc_trajectory.push_back(e.val_auc);
        cv.folds.push_back(std::move(outcome));
    }

    std::size_t best = 0;
    for (std::size_t f = 1; f < cv.folds.size(); ++f)
        if (cv.folds[f].val_auc > cv.folds[best].val_auc) best = f;
    cv.selected_fold = static_cast<int>(best);
    cv.selected_val_auc = cv.folds[best].val_auc;
    cv.selected_model = cv.folds[best].result.model;
    return cv;
}

inline constexpr std::uint32_t kSiimVersion = 1;

// SIIM layout (little-endian): magic "SIIM", version u32, D u32, L u32, then
// feature, gate, score, head weights and the bias as f64, column-major.
inline void save_model(const AttentionModel& model, const std::filesystem::path& path) {
    model.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(IoError::Kind::open_failed, "cannot open for writing: " + path.string());
    os.write("SIIM", 4);
    detail::write_pod<std::uint32_t>(os, kSiimVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.dim()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.attention_dim()));
    const auto dump = [&os](const auto& m) {
        os.write(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    };
    dump(model.feature_weights);
    dump(model.gate_weights);
    dump(model.score_weights);
    dump(model.head_weights);
    detail::write_pod<double>(os, model.head_bias);
    os.flush();
    if (!os) throw IoError(IoError::Kind::open_failed, "write failed: " + path.string());
}

inline AttentionModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::open_failed, "cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SIIM", 4) != 0)
        throw IoError(IoError::Kind::bad_magic, "not a SIIM file: " + path.string());
    const auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != kSiimVersion)
        throw IoError(IoError::Kind::bad_version,
                      "unsupported SIIM version " + std::to_string(version));
    const auto dim = detail::read_pod<std::uint32_t>(is, "dim");
    const auto att = detail::read_pod<std::uint32_t>(is, "attention dim");
    if (dim == 0 || att == 0)
        throw IoError(IoError::Kind::shape_mismatch, "SIIM header has zero dimension");

    AttentionModel m;
    m.feature_weights.resize(dim, att);
    m.gate_weights.resize(dim, att);
    m.score_weights.resize(att);
    m.head_weights.resize(dim);
    const auto slurp = [&is](auto& mat) {
        for (Index i = 0; i < mat.size(); ++i)
            mat.data()[i] = detail::read_pod<double>(is, "model weights");
    };
    slurp(m.feature_weights);
    slurp(m.gate_weights);
    slurp(m.score_weights);
    slurp(m.head_weights);
    m.head_bias = detail::read_pod<double>(is, "model weights");
    if (is.peek() != std::char_traits<char>::eof())
        throw IoError(IoError::Kind::trailing_bytes, "trailing bytes after SIIM payload: " + path.string());
    m.validate();
    return m;
}

}  // namespace siimil
