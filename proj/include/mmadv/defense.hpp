#pragma once

// Output rescaling and PGDM adversarial training.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/attacks.hpp"
#include "mmadv/dataset.hpp"
#include "mmadv/nn.hpp"

namespace mmadv {

struct Rescaled {
    Eigen::VectorXd powers;
    bool equal_split = false;  // prediction was all zero after clamping
};

/// Negative entries are clamped to 0, then the vector is scaled to sum to
/// truth_sum (never above it).
inline Rescaled rescale_powers(const Eigen::Ref<const Eigen::VectorXd>& pred, double truth_sum) {
    if (pred.size() == 0) throw std::invalid_argument("rescale_powers: empty prediction");
    if (!pred.allFinite() || !std::isfinite(truth_sum) || truth_sum < 0.0)
        throw std::invalid_argument("rescale_powers: non-finite input or negative target sum");
    Rescaled r;
    const Eigen::VectorXd p = pred.cwiseMax(0.0);
    r.equal_split = !(power_sum(p) > 0.0);
    r.powers = scale_to_sum(r.equal_split ? Eigen::VectorXd::Ones(pred.size()) : p, truth_sum);
    return r;
}

/// One dataset per cell: positions replaced by PGDM examples crafted against
/// that cell's standard model, targets unchanged.
using AdvDataset = std::vector<Dataset>;

inline AdvDataset generate_adv_dataset(const std::vector<Model>& f_std, const Dataset& clean, AttackConfig cfg) {
    cfg.kind = AttackKind::pgdm;
    cfg.validate();
    if (clean.empty()) throw std::invalid_argument("generate_adv_dataset: empty dataset");
    const Eigen::MatrixXd X = input_matrix(clean);
    AdvDataset out;
    for (const auto& m : f_std) {
        const Eigen::MatrixXd Xa = pgdm(m, X, cfg);
        Dataset d = clean;
        d.provenance["adv_cell"] = std::to_string(m.cell);
        d.provenance["adv_source_model"] = model_hash(m);
        d.provenance["adv_attack"] = "pgdm";
        d.provenance["adv_goal"] = to_string(cfg.goal);
        d.provenance["adv_epsilon"] = fmt_exact(cfg.epsilon);
        d.provenance["adv_alpha"] = fmt_exact(cfg.alpha);
        d.provenance["adv_Q"] = std::to_string(cfg.Q);
        for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].positions = Xa.col(static_cast<Eigen::Index>(i));
        out.push_back(std::move(d));
    }
    return out;
}

/// Largest |x_adv - x| over all records of all cells.
inline double max_perturbation(const AdvDataset& adv, const Dataset& clean) {
    double worst = 0.0;
    for (const auto& d : adv) {
        if (d.size() != clean.size()) throw std::invalid_argument("max_perturbation: size mismatch");
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d.samples[i].id != clean.samples[i].id) throw std::invalid_argument("max_perturbation: record order mismatch");
            worst = std::max(worst, (d.samples[i].positions - clean.samples[i].positions).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

/// Trains `arch` per cell on (x_adv, clean targets) with early stopping on the
/// adversarial validation split. `stats` come from the clean training split, so
/// an epsilon = 0 dataset reproduces standard training exactly.
inline std::vector<TrainResult> adversarial_train(const AdvDataset& adv_train, const AdvDataset& adv_val, Arch arch,
                                                  const NetworkConfig& cfg, const NormalizationStats& stats, const TrainConfig& tc) {
    if (adv_train.size() != static_cast<std::size_t>(cfg.L) || adv_val.size() != static_cast<std::size_t>(cfg.L))
        throw std::invalid_argument("adversarial_train: need one adversarial dataset per cell");
    std::set<long long> ids;
    for (const auto& s : adv_train.front().samples) ids.insert(s.id);
    for (const auto& s : adv_val.front().samples)
        if (ids.count(s.id)) throw std::invalid_argument("adversarial_train: training and validation records overlap");
    return train_cells(arch, cfg, stats, adv_train, adv_val, tc);
}

}  // namespace mmadv
