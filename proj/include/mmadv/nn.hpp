#pragma once

// Dense feedforward regressors mapping 2LK UE coordinates (meters) to the K
// powers of one cell plus their sum (mW). Inputs pass through a fixed
// standardizing affine and outputs through a fixed x Pmax scale, both inside
// the model, so input gradients are per meter and outputs are in mW.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/common.hpp"
#include "mmadv/dataset.hpp"

namespace mmadv {

enum class Activation { elu, linear };
enum class Arch { m1, m2, custom };

inline const char* to_string(Activation a) { return a == Activation::elu ? "elu" : "linear"; }
inline const char* to_string(Arch a) { return a == Arch::m1 ? "m1" : a == Arch::m2 ? "m2" : "custom"; }

inline Arch parse_arch(std::string_view s) {
    if (s == "m1") return Arch::m1;
    if (s == "m2") return Arch::m2;
    if (s == "custom") return Arch::custom;
    throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

struct LayerSpec {
    int width = 1;
    Activation activation = Activation::elu;
    bool trainable = true;  // frozen layers must be one wider than their input: [I; 1^T], zero bias
};

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;
    Activation activation = Activation::elu;
    bool trainable = true;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct Model {
    Arch arch = Arch::custom;
    int cell = 0;
    int K = 1;  // number of power heads; the output has K+1 entries
    std::string config_hash;
    Eigen::VectorXd in_mean;
    Eigen::VectorXd in_std;
    double out_scale = 1.0;  // mW per model unit
    std::vector<DenseLayer> layers;

    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers)
            if (l.trainable) n += static_cast<std::size_t>(l.W.size() + l.b.size());
        return n;
    }
    friend bool operator==(const Model&, const Model&) = default;
};

inline std::vector<LayerSpec> arch_layers(Arch arch, int K) {
    const std::vector<int> hidden = arch == Arch::m1 ? std::vector<int>{64, 32, 32, 32} : std::vector<int>{512, 256, 128, 128};
    if (arch == Arch::custom) throw std::invalid_argument("arch_layers: custom architecture has no preset");
    std::vector<LayerSpec> specs;
    for (int w : hidden) specs.push_back({w, Activation::elu});
    specs.push_back({K, Activation::elu});
    specs.push_back({K + 1, Activation::linear, false});
    return specs;
}

/// Glorot-uniform weights, zero biases.
inline Model build_model(int input_dim, const std::vector<LayerSpec>& specs, const NormalizationStats& stats, int cell,
                         std::uint64_t seed) {
    if (specs.empty()) throw std::invalid_argument("build_model: no layers");
    for (const auto& s : specs)
        if (s.width < 1) throw std::invalid_argument("build_model: layer width must be >= 1");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const int in = i == 0 ? input_dim : specs[i - 1].width;
        if (!specs[i].trainable && specs[i].width != in + 1) throw std::invalid_argument("build_model: a frozen layer must be one wider than its input");
    }
    if (stats.mean.size() != input_dim || stats.std.size() != input_dim)
        throw std::invalid_argument("build_model: normalization stats do not match the input dimension");
    Model m;
    m.cell = cell;
    m.K = specs.back().width - 1;
    m.in_mean = stats.mean;
    m.in_std = stats.std;
    m.out_scale = stats.power_scale;
    Rng rng(seed);
    int fan_in = input_dim;
    for (const auto& s : specs) {
        DenseLayer layer;
        layer.activation = s.activation;
        layer.trainable = s.trainable;
        layer.b = Eigen::VectorXd::Zero(s.width);
        if (!s.trainable) {
            layer.W = Eigen::MatrixXd::Zero(s.width, fan_in);
            layer.W.topRows(fan_in).setIdentity();
            layer.W.row(fan_in).setOnes();
            m.layers.push_back(std::move(layer));
            fan_in = s.width;
            continue;
        }
        const double limit = std::sqrt(6.0 / (fan_in + s.width));
        std::uniform_real_distribution<double> unif(-limit, limit);
        layer.W.resize(s.width, fan_in);
        for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
            for (Eigen::Index r = 0; r < layer.W.rows(); ++r) layer.W(r, c) = unif(rng);
        m.layers.push_back(std::move(layer));
        fan_in = s.width;
    }
    return m;
}

inline Model build_arch(Arch arch, const NetworkConfig& cfg, const NormalizationStats& stats, int cell, std::uint64_t seed) {
    Model m = build_model(cfg.input_dim(), arch_layers(arch, cfg.K), stats, cell, seed);
    m.arch = arch;
    m.config_hash = cfg.hash();
    return m;
}

namespace detail {

inline void apply_activation(Activation a, Eigen::MatrixXd& z) {
    if (a == Activation::elu) z = z.unaryExpr([](double t) { return t >= 0.0 ? t : std::expm1(t); });
}

// derivative given pre-activation t; elu'(0) := 1
inline Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& pre) {
    if (a == Activation::linear) return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    return pre.unaryExpr([](double t) { return t >= 0.0 ? 1.0 : std::exp(t); });
}

struct Trace {
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;  // post[0] = standardized input, post[i+1] = layer i output
};

inline Eigen::MatrixXd forward_trace(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, Trace* tr) {
    Eigen::MatrixXd h = (X.colwise() - m.in_mean).array().colwise() / m.in_std.array();
    if (tr) {
        tr->pre.clear();
        tr->post.clear();
        tr->post.push_back(h);
    }
    for (const auto& layer : m.layers) {
        Eigen::MatrixXd z = layer.W * h;
        z.colwise() += layer.b;
        if (tr) tr->pre.push_back(z);
        apply_activation(layer.activation, z);
        h = std::move(z);
        if (tr) tr->post.push_back(h);
    }
    return h;  // model units
}

/// Backpropagate dL/d(output in model units) to dL/d(standardized input),
/// optionally accumulating parameter gradients.
inline Eigen::MatrixXd backward(const Model& m, const Trace& tr, Eigen::MatrixXd delta, std::vector<DenseLayer>* grads) {
    for (int i = static_cast<int>(m.layers.size()) - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        delta.array() *= activation_derivative(m.layers[ui].activation, tr.pre[ui]).array();
        if (grads) {
            (*grads)[ui].W.noalias() = delta * tr.post[ui].transpose();
            (*grads)[ui].b = delta.rowwise().sum();
        }
        delta = m.layers[ui].W.transpose() * delta;
    }
    return delta;
}

inline void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (!X.allFinite()) throw std::invalid_argument("non-finite model input");
}

}  // namespace detail

/// Outputs in mW for a batch of inputs (columns, meters).
inline Eigen::MatrixXd forward_batch(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    detail::check_finite(X);
    return detail::forward_trace(m, X, nullptr) * m.out_scale;
}

inline Eigen::VectorXd forward(const Model& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return forward_batch(m, x).col(0);
}

enum class PowerPath { raw, clamped };

/// First K outputs; PowerPath::clamped floors them at 0 mW for SINR evaluation.
inline Eigen::VectorXd predict_powers(const Model& m, const Eigen::Ref<const Eigen::VectorXd>& x, PowerPath path = PowerPath::clamped) {
    Eigen::VectorXd p = forward(m, x).head(m.K);
    if (path == PowerPath::clamped) p = p.cwiseMax(0.0);
    return p;
}

struct Gradients {
    std::vector<DenseLayer> layers;
    double loss = 0.0;
};

/// MSE over all K+1 outputs in model units (targets / out_scale), averaged over
/// batch and outputs, with its exact gradient. Targets are in mW.
inline Gradients param_gradients(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::MatrixXd>& T) {
    if (X.cols() == 0) throw std::invalid_argument("param_gradients: empty batch");
    detail::Trace tr;
    const Eigen::MatrixXd out = detail::forward_trace(m, X, &tr);
    const Eigen::MatrixXd resid = out - T / m.out_scale;
    const double count = static_cast<double>(resid.size());
    Gradients g;
    g.loss = resid.squaredNorm() / count;
    g.layers.resize(m.layers.size());
    detail::backward(m, tr, (2.0 / count) * resid, &g.layers);
    return g;
}

inline double mse_loss(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& T) {
    const Eigen::MatrixXd resid = detail::forward_trace(m, X, nullptr) - T / m.out_scale;
    return resid.squaredNorm() / static_cast<double>(resid.size());
}

/// Gradient of sum_{k<K} output_k (mW) with respect to the raw inputs (meters),
/// one column per input column. The sum head does not contribute.
inline Eigen::MatrixXd input_gradients(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, double sign = 1.0) {
    detail::check_finite(X);
    detail::Trace tr;
    detail::forward_trace(m, X, &tr);
    Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(m.output_dim(), X.cols());
    seed.topRows(m.K).setConstant(sign * m.out_scale);
    Eigen::MatrixXd g = detail::backward(m, tr, std::move(seed), nullptr);
    return g.array().colwise() / m.in_std.array();
}

inline Eigen::VectorXd input_gradient(const Model& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return input_gradients(m, x).col(0);
}

// --- training ---------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 128;
    int max_epochs = 200;
    int patience = 10;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate > 0 && beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && adam_eps > 0))
            throw std::invalid_argument("TrainConfig: optimizer parameters out of range");
        if (batch_size < 1 || max_epochs < 1 || patience < 1) throw std::invalid_argument("TrainConfig: sizes must be positive");
    }
};

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Returns true when training should stop.
    bool update(double val_loss) {
        if (val_loss < best_) {
            best_ = val_loss;
            stall_ = 0;
            improved_ = true;
        } else {
            ++stall_;
            improved_ = false;
        }
        return stall_ >= patience_;
    }
    bool improved() const { return improved_; }
    double best() const { return best_; }
    int stall() const { return stall_; }

private:
    int patience_;
    int stall_ = 0;
    bool improved_ = false;
    double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    Model model;  // best validation snapshot
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
};

class Adam {
public:
    Adam(const Model& m, const TrainConfig& tc) : tc_(tc) {
        for (const auto& l : m.layers) {
            mw_.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
            vw_.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
            mb_.push_back(Eigen::VectorXd::Zero(l.b.size()));
            vb_.push_back(Eigen::VectorXd::Zero(l.b.size()));
        }
    }

    void step(Model& m, const Gradients& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(tc_.beta1, t_);
        const double c2 = 1.0 - std::pow(tc_.beta2, t_);
        const double lr = tc_.learning_rate * std::sqrt(c2) / c1;
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            if (!m.layers[i].trainable) continue;
            mw_[i] = tc_.beta1 * mw_[i] + (1.0 - tc_.beta1) * g.layers[i].W;
            vw_[i] = tc_.beta2 * vw_[i] + (1.0 - tc_.beta2) * g.layers[i].W.cwiseAbs2();
            mb_[i] = tc_.beta1 * mb_[i] + (1.0 - tc_.beta1) * g.layers[i].b;
            vb_[i] = tc_.beta2 * vb_[i] + (1.0 - tc_.beta2) * g.layers[i].b.cwiseAbs2();
            m.layers[i].W.array() -= lr * mw_[i].array() / (vw_[i].array().sqrt() + tc_.adam_eps);
            m.layers[i].b.array() -= lr * mb_[i].array() / (vb_[i].array().sqrt() + tc_.adam_eps);
        }
    }

private:
    TrainConfig tc_;
    int t_ = 0;
    std::vector<Eigen::MatrixXd> mw_, vw_;
    std::vector<Eigen::VectorXd> mb_, vb_;
};

/// Mini-batch Adam on the MSE loss with validation early stopping. Inputs are
/// columns (meters), targets columns in mW. Deterministic given tc.seed.
inline TrainResult train(Model model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T, const Eigen::MatrixXd& Xval,
                         const Eigen::MatrixXd& Tval, const TrainConfig& tc) {
    tc.validate();
    if (X.cols() == 0 || Xval.cols() == 0) throw std::invalid_argument("train: empty split");
    const Eigen::Index n = X.cols();
    Adam opt(model, tc);
    EarlyStopping stopper(tc.patience);
    TrainResult res;
    res.model = model;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Eigen::MatrixXd xb, tb;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        Rng rng(derive_seed(tc.seed, {static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (Eigen::Index start = 0; start < n; start += tc.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(tc.batch_size, n - start);
            xb.resize(X.rows(), len);
            tb.resize(T.rows(), len);
            for (Eigen::Index c = 0; c < len; ++c) {
                const auto src = order[static_cast<std::size_t>(start + c)];
                xb.col(c) = X.col(src);
                tb.col(c) = T.col(src);
            }
            const Gradients g = param_gradients(model, xb, tb);
            if (!std::isfinite(g.loss)) throw numerical_error("train: loss diverged at epoch " + std::to_string(epoch));
            loss_sum += g.loss * static_cast<double>(len);
            opt.step(model, g);
        }
        const double val = mse_loss(model, Xval, Tval);
        if (!std::isfinite(val)) throw numerical_error("train: validation loss diverged at epoch " + std::to_string(epoch));
        res.history.push_back({epoch, loss_sum / static_cast<double>(n), val});
        const bool stop = stopper.update(val);
        if (stopper.improved()) {
            res.model = model;
            res.best_epoch = epoch;
            res.best_val_loss = val;
        }
        if (stop) {
            res.early_stopped = true;
            break;
        }
    }
    return res;
}

/// One cell's model from a fresh initialization. Initialization and shuffling
/// seeds both derive from tc.seed and the cell index.
inline TrainResult train_cell(Arch arch, const NetworkConfig& cfg, const NormalizationStats& stats, int cell, const Dataset& tr,
                              const Dataset& val, TrainConfig tc) {
    const std::uint64_t root = tc.seed;
    const auto c = static_cast<std::uint64_t>(cell);
    Model m = build_arch(arch, cfg, stats, cell, derive_seed(root, {1, c}));
    tc.seed = derive_seed(root, {2, c});
    return train(std::move(m), input_matrix(tr), target_matrix(tr, cell), input_matrix(val), target_matrix(val, cell), tc);
}

/// L per-cell models; cell j trains on tr[j] / val[j] (a single dataset is shared by all cells).
inline std::vector<TrainResult> train_cells(Arch arch, const NetworkConfig& cfg, const NormalizationStats& stats,
                                            const std::vector<Dataset>& tr, const std::vector<Dataset>& val, const TrainConfig& tc) {
    auto pick = [&](const std::vector<Dataset>& v, int j) -> const Dataset& {
        if (v.size() == 1) return v.front();
        if (v.size() != static_cast<std::size_t>(cfg.L)) throw std::invalid_argument("train_cells: need 1 or L datasets");
        return v[static_cast<std::size_t>(j)];
    };
    std::vector<TrainResult> out;
    for (int j = 0; j < cfg.L; ++j) out.push_back(train_cell(arch, cfg, stats, j, pick(tr, j), pick(val, j), tc));
    return out;
}

// --- checkpoints -------------------------------------------------------------

inline void write_model(std::ostream& os, const Model& m) {
    os << "mmadv-model 1\n";
    os << "arch " << to_string(m.arch) << '\n';
    os << "cell " << m.cell << '\n';
    os << "K " << m.K << '\n';
    os << "config_hash " << (m.config_hash.empty() ? "-" : m.config_hash) << '\n';
    os << "dims " << m.input_dim();
    for (const auto& l : m.layers) os << ' ' << l.W.rows();
    os << "\nactivations";
    for (const auto& l : m.layers) os << ' ' << to_string(l.activation);
    os << "\ntrainable";
    for (const auto& l : m.layers) os << ' ' << (l.trainable ? 1 : 0);
    os << "\nout_scale " << fmt_sig(m.out_scale, 17);
    os << "\nin_mean";
    for (Eigen::Index i = 0; i < m.in_mean.size(); ++i) os << ' ' << fmt_sig(m.in_mean(i), 17);
    os << "\nin_std";
    for (Eigen::Index i = 0; i < m.in_std.size(); ++i) os << ' ' << fmt_sig(m.in_std(i), 17);
    os << '\n';
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i];
        os << "W " << i;
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) os << ' ' << fmt_sig(l.W(r, c), 17);
        os << "\nb " << i;
        for (Eigen::Index r = 0; r < l.b.size(); ++r) os << ' ' << fmt_sig(l.b(r), 17);
        os << '\n';
    }
}

inline Model read_model(std::istream& is) {
    std::string line, key;
    auto next = [&](const char* expect) {
        if (!std::getline(is, line)) throw data_error(std::string("model: missing ") + expect);
        std::istringstream ls(line);
        ls >> key;
        if (key != expect) throw data_error(std::string("model: expected ") + expect + ", got " + key);
        std::string rest;
        std::getline(ls, rest);
        return rest;
    };
    auto numbers = [](const std::string& s) {
        std::vector<double> v;
        std::istringstream ls(s);
        std::string tok;
        while (ls >> tok) v.push_back(parse_double(tok));
        return v;
    };
    auto word = [](const std::string& s) {
        std::istringstream ls(s);
        std::string w;
        ls >> w;
        return w;
    };

    if (!std::getline(is, line) || line != "mmadv-model 1") throw data_error("model: bad magic line");
    Model m;
    m.arch = parse_arch(word(next("arch")));
    m.cell = static_cast<int>(parse_int(word(next("cell"))));
    m.K = static_cast<int>(parse_int(word(next("K"))));
    m.config_hash = word(next("config_hash"));
    if (m.config_hash == "-") m.config_hash.clear();
    const auto dims = numbers(next("dims"));
    std::vector<std::string> acts;
    {
        std::istringstream ls(next("activations"));
        std::string a;
        while (ls >> a) acts.push_back(a);
    }
    if (dims.size() < 2 || acts.size() != dims.size() - 1) throw data_error("model: inconsistent dims/activations");
    const auto flags = numbers(next("trainable"));
    if (flags.size() != acts.size()) throw data_error("model: inconsistent trainable flags");
    m.out_scale = numbers(next("out_scale")).at(0);
    const auto mean = numbers(next("in_mean"));
    const auto sd = numbers(next("in_std"));
    const auto in = static_cast<Eigen::Index>(dims[0]);
    if (static_cast<Eigen::Index>(mean.size()) != in || static_cast<Eigen::Index>(sd.size()) != in)
        throw data_error("model: normalization size mismatch");
    m.in_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), in);
    m.in_std = Eigen::Map<const Eigen::VectorXd>(sd.data(), in);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer l;
        l.activation = acts[i] == "elu" ? Activation::elu : acts[i] == "linear" ? Activation::linear
                                                                                 : throw data_error("model: unknown activation " + acts[i]);
        if (flags[i] != 0.0 && flags[i] != 1.0) throw data_error("model: trainable flag must be 0 or 1");
        l.trainable = flags[i] == 1.0;
        const auto rows = static_cast<Eigen::Index>(dims[i + 1]);
        const auto cols = static_cast<Eigen::Index>(dims[i]);
        auto w = numbers(next("W"));
        if (w.empty() || static_cast<Eigen::Index>(w.size()) != rows * cols + 1) throw data_error("model: weight size mismatch");
        l.W = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data() + 1, rows, cols);
        auto b = numbers(next("b"));
        if (static_cast<Eigen::Index>(b.size()) != rows + 1) throw data_error("model: bias size mismatch");
        l.b = Eigen::Map<const Eigen::VectorXd>(b.data() + 1, rows);
        m.layers.push_back(std::move(l));
    }
    if (m.output_dim() != m.K + 1) throw data_error("model: output width is not K+1");
    return m;
}

inline void save_model(const std::string& path, const Model& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write " + path);
    write_model(os, m);
    if (!os) throw data_error("write failed: " + path);
}

inline Model load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("cannot read " + path);
    return read_model(is);
}

inline std::string model_hash(const Model& m) {
    std::ostringstream os;
    write_model(os, m);
    return hex64(fnv1a64(os.str()));
}

}  // namespace mmadv
