#include "lorentzfm/model.hpp"

#include <algorithm>
#include <random>

#include "lorentzfm/errors.hpp"
#include "lorentzfm/util.hpp"

namespace lfm {

namespace {

void check_indices(const SparseInstance& inst, Eigen::Index count) {
    for (const auto& e : inst.entries) {
        if (e.index < 0 || e.index >= count) {
            throw LookupError("feature index " + std::to_string(e.index) +
                              " out of range [0, " + std::to_string(count) + ")");
        }
    }
}

// Active slot view of an instance: indices into inst.entries that
// participate in pooling.
std::vector<std::size_t> active_slots(const SparseInstance& inst, bool exclude_padding) {
    std::vector<std::size_t> slots;
    slots.reserve(inst.entries.size());
    for (std::size_t i = 0; i < inst.entries.size(); ++i) {
        if (exclude_padding && inst.entries[i].padding) continue;
        slots.push_back(i);
    }
    return slots;
}

}  // namespace

double EmbeddingTable::max_manifold_residual() const {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        worst = std::max(worst, hyperboloid_residual(rows.row(i)));
    }
    return worst;
}

EmbeddingTable init_lorentz_table(Eigen::Index count, Eigen::Index dim, std::uint64_t seed) {
    if (dim < 2) {
        throw ConfigError("embedding dimension must be >= 2, got " + std::to_string(dim));
    }
    if (count < 1) {
        throw ConfigError("embedding table needs at least one row");
    }
    EmbeddingTable table;
    table.seed = seed;
    table.rows.resize(count, dim);
    std::mt19937_64 rng(mix_seed(seed, seed_tag::kInit));
    std::uniform_real_distribution<double> dist(-0.01, 0.01);
    Vector spatial(dim - 1);
    for (Eigen::Index r = 0; r < count; ++r) {
        for (Eigen::Index c = 0; c < dim - 1; ++c) spatial[c] = dist(rng);
        table.rows.row(r) = lift(spatial).transpose();
    }
    return table;
}

FmParameters init_fm_params(Eigen::Index count, Eigen::Index dim, std::uint64_t seed) {
    if (dim < 1) {
        throw ConfigError("factor dimension must be >= 1, got " + std::to_string(dim));
    }
    if (count < 1) {
        throw ConfigError("parameter table needs at least one row");
    }
    FmParameters p;
    p.seed = seed;
    p.bias = 0.0;
    p.linear = Eigen::VectorXd::Zero(count);
    p.factors.resize(count, dim);
    std::mt19937_64 rng(mix_seed(seed, seed_tag::kInit));
    std::uniform_real_distribution<double> dist(-0.01, 0.01);
    for (Eigen::Index r = 0; r < count; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) p.factors(r, c) = dist(rng);
    }
    return p;
}

// The pooling sum is plain algebra over ambient rows; keeping rows on the
// manifold is the optimizer's contract (re-lift after every step) and is
// re-verified when checkpoints are loaded. Evaluating slightly off-manifold
// rows here is deliberate: the ambient finite-difference gradient checks
// depend on it.
double lfm_forward(const SparseInstance& inst, const EmbeddingTable& table,
                   bool exclude_padding) {
    check_indices(inst, table.count());
    const auto slots = active_slots(inst, exclude_padding);
    double score = 0.0;
    for (std::size_t a : slots) {
        const auto& ea = inst.entries[a];
        const auto ra = table.rows.row(ea.index);
        for (std::size_t b : slots) {
            if (a == b) continue;
            const auto& eb = inst.entries[b];
            score += detail::triangle_score_unchecked(ra, table.rows.row(eb.index)) * ea.value *
                     eb.value;
        }
    }
    return score;
}

double lfm_predict(const SparseInstance& inst, const EmbeddingTable& table,
                   bool exclude_padding) {
    return sigmoid(lfm_forward(inst, table, exclude_padding));
}

void accumulate_lfm_score_grad(const SparseInstance& inst, const EmbeddingTable& table,
                               double upstream, RowMatrix& accum,
                               std::vector<std::int32_t>& touched, std::vector<char>& touched_mask,
                               bool exclude_padding) {
    check_indices(inst, table.count());
    const auto slots = active_slots(inst, exclude_padding);
    const Eigen::Index dim = table.dim();
    const Eigen::Index n = dim - 1;

    auto touch = [&](std::int32_t index) {
        if (!touched_mask[static_cast<std::size_t>(index)]) {
            touched_mask[static_cast<std::size_t>(index)] = 1;
            touched.push_back(index);
            accum.row(index).setZero();
        }
    };

    // For T(u,v) = N / (u0 v0) with N = 1 - <u,v>_L - u0 - v0:
    //   dT/du0 = (v0 - 1 - N/u0) / (u0 v0),  dT/du_i = -v_i / (u0 v0)
    // and symmetrically for v. Both orders of the ordered-pair sum
    // contribute, hence the factor 2 per unordered pair.
    for (std::size_t ia = 0; ia < slots.size(); ++ia) {
        const auto& ea = inst.entries[slots[ia]];
        const auto u = table.rows.row(ea.index);
        touch(ea.index);
        for (std::size_t ib = ia + 1; ib < slots.size(); ++ib) {
            const auto& eb = inst.entries[slots[ib]];
            const auto v = table.rows.row(eb.index);
            touch(eb.index);

            const double u0 = u[0];
            const double v0 = v[0];
            const double inner = lorentz_inner(u, v);
            const double numer = 1.0 - inner - u0 - v0;
            const double denom = u0 * v0;
            const double w = 2.0 * upstream * ea.value * eb.value / denom;

            auto gu = accum.row(ea.index);
            auto gv = accum.row(eb.index);
            gu[0] += w * (v0 - 1.0 - numer / u0);
            gv[0] += w * (u0 - 1.0 - numer / v0);
            gu.tail(n) -= w * v.tail(n);
            gv.tail(n) -= w * u.tail(n);
        }
    }
}

std::vector<FeatureGrad> lfm_grad(const SparseInstance& inst, const EmbeddingTable& table,
                                  bool exclude_padding) {
    const double p = lfm_predict(inst, table, exclude_padding);
    const double residual = p - static_cast<double>(inst.label);

    RowMatrix accum(table.count(), table.dim());
    std::vector<std::int32_t> touched;
    std::vector<char> touched_mask(static_cast<std::size_t>(table.count()), 0);
    accumulate_lfm_score_grad(inst, table, residual, accum, touched, touched_mask,
                              exclude_padding);

    std::sort(touched.begin(), touched.end());
    std::vector<FeatureGrad> out;
    out.reserve(touched.size());
    for (std::int32_t index : touched) {
        out.push_back({index, accum.row(index)});
    }
    return out;
}

double fm_forward(const SparseInstance& inst, const FmParameters& params, bool exclude_padding) {
    check_indices(inst, params.count());
    const auto slots = active_slots(inst, exclude_padding);
    double score = params.bias;
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(params.dim());
    double sum_sq = 0.0;
    for (std::size_t s : slots) {
        const auto& e = inst.entries[s];
        score += params.linear[e.index] * e.value;
        const auto f = params.factors.row(e.index) * e.value;
        sum += f;
        sum_sq += f.squaredNorm();
    }
    // sum_{i<j} <f_i,f_j> x_i x_j = (|sum_i f_i x_i|^2 - sum_i |f_i x_i|^2) / 2
    score += 0.5 * (sum.squaredNorm() - sum_sq);
    return score;
}

double fm_predict(const SparseInstance& inst, const FmParameters& params, bool exclude_padding) {
    return sigmoid(fm_forward(inst, params, exclude_padding));
}

void FmDenseGrad::zero() {
    bias = 0.0;
    linear.setZero();
    factors.setZero();
}

FmDenseGrad make_fm_grad(Eigen::Index count, Eigen::Index dim) {
    FmDenseGrad g;
    g.linear = Eigen::VectorXd::Zero(count);
    g.factors = RowMatrix::Zero(count, dim);
    return g;
}

void accumulate_fm_score_grad(const SparseInstance& inst, const FmParameters& params,
                              double upstream, FmDenseGrad& accum, bool exclude_padding) {
    check_indices(inst, params.count());
    if (accum.linear.size() != params.count() || accum.factors.cols() != params.dim()) {
        throw DimensionError("fm gradient accumulator shape mismatch");
    }
    const auto slots = active_slots(inst, exclude_padding);
    accum.bias += upstream;
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(params.dim());
    for (std::size_t s : slots) {
        const auto& e = inst.entries[s];
        sum += params.factors.row(e.index) * e.value;
    }
    for (std::size_t s : slots) {
        const auto& e = inst.entries[s];
        accum.linear[e.index] += upstream * e.value;
        accum.factors.row(e.index) +=
            upstream * e.value * (sum - params.factors.row(e.index) * e.value);
    }
}

FmDenseGrad fm_grad(const SparseInstance& inst, const FmParameters& params,
                    bool exclude_padding) {
    const double p = fm_predict(inst, params, exclude_padding);
    const double residual = p - static_cast<double>(inst.label);
    FmDenseGrad g = make_fm_grad(params.count(), params.dim());
    accumulate_fm_score_grad(inst, params, residual, g, exclude_padding);
    return g;
}

}  // namespace lfm
