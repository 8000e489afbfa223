#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lorentzfm/geometry.hpp"

namespace lfm {

// One slot of a sparse instance. Multi-valued fields occupy several
// consecutive slots; slots filled with a field's unknown index (either by
// padding or by rare-token folding) carry padding = true so that pooling
// can optionally skip them.
struct InstanceEntry {
    std::int32_t field = 0;
    std::int32_t index = 0;
    double value = 1.0;
    bool padding = false;
};

struct SparseInstance {
    std::vector<InstanceEntry> entries;
    std::int8_t label = 0;  // {0,1}
};

// Lorentz embedding table: |V| rows, each an ambient hyperboloid point of
// dimension dim. The only trainable state of the LorentzFM model; the time
// component of every row is pinned by the manifold constraint, so the free
// parameter count is (dim-1) * |V|.
struct EmbeddingTable {
    RowMatrix rows;
    std::uint64_t seed = 0;

    Eigen::Index count() const { return rows.rows(); }
    Eigen::Index dim() const { return rows.cols(); }
    std::int64_t free_parameters() const { return (dim() - 1) * count(); }
    double max_manifold_residual() const;
};

// Euclidean FM baseline parameters: bias, per-feature linear weights and
// per-feature factor rows.
struct FmParameters {
    double bias = 0.0;
    Eigen::VectorXd linear;
    RowMatrix factors;
    std::uint64_t seed = 0;

    Eigen::Index count() const { return linear.size(); }
    Eigen::Index dim() const { return factors.cols(); }
    std::int64_t free_parameters() const { return 1 + count() + count() * dim(); }
};

// Spatial coordinates ~ Uniform[-0.01, 0.01], then lifted onto the
// hyperboloid. Deterministic per seed.
EmbeddingTable init_lorentz_table(Eigen::Index count, Eigen::Index dim, std::uint64_t seed);

// Zero bias and linear weights, factors ~ Uniform[-0.01, 0.01].
FmParameters init_fm_params(Eigen::Index count, Eigen::Index dim, std::uint64_t seed);

// Model score: sum over ordered slot pairs i != j of
// T(v_i, v_j) * x_i * x_j. Equals twice the sum over unordered pairs.
double lfm_forward(const SparseInstance& inst, const EmbeddingTable& table,
                   bool exclude_padding = false);

// sigmoid(lfm_forward)
double lfm_predict(const SparseInstance& inst, const EmbeddingTable& table,
                   bool exclude_padding = false);

struct FeatureGrad {
    std::int32_t index;
    Eigen::RowVectorXd grad;
};

// Ambient BCE gradient d loss / d row for every feature present in the
// instance, all ambient coordinates treated as independent (the Riemannian
// correction happens in the optimizer). Entries sharing a feature index
// accumulate into one gradient. Result sorted by feature index.
std::vector<FeatureGrad> lfm_grad(const SparseInstance& inst, const EmbeddingTable& table,
                                  bool exclude_padding = false);

// Trainer core: adds `upstream * dscore/drow` into accum rows and records
// newly touched rows. accum must be |V| x dim and zeroed on touched rows.
void accumulate_lfm_score_grad(const SparseInstance& inst, const EmbeddingTable& table,
                               double upstream, RowMatrix& accum,
                               std::vector<std::int32_t>& touched, std::vector<char>& touched_mask,
                               bool exclude_padding = false);

// FM score: bias + sum_i w_i x_i + sum_{i<j} <f_i, f_j> x_i x_j.
double fm_forward(const SparseInstance& inst, const FmParameters& params,
                  bool exclude_padding = false);

double fm_predict(const SparseInstance& inst, const FmParameters& params,
                  bool exclude_padding = false);

// Dense FM gradient of the BCE loss; same shapes as FmParameters.
struct FmDenseGrad {
    double bias = 0.0;
    Eigen::VectorXd linear;
    RowMatrix factors;

    void zero();
};

FmDenseGrad make_fm_grad(Eigen::Index count, Eigen::Index dim);

// Single-instance BCE gradient (bias, linear, factors).
FmDenseGrad fm_grad(const SparseInstance& inst, const FmParameters& params,
                    bool exclude_padding = false);

// Trainer core: adds `upstream * dscore/dparam` into accum.
void accumulate_fm_score_grad(const SparseInstance& inst, const FmParameters& params,
                              double upstream, FmDenseGrad& accum, bool exclude_padding = false);

}  // namespace lfm
