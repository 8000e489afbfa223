#pragma once

#include <cstdint>

#include "lorentzfm/data.hpp"

namespace lfm {

// Desk-scale verification data: categorical instances whose labels come
// from a planted low-rank pairwise score table pushed through a sigmoid.
struct SynthSpec {
    int fields = 12;
    int tokens_per_field = 166;  // vocabulary: fields * (tokens + 1)
    std::int64_t instances = 50000;
    int latent_dim = 4;    // rank of the planted pairwise structure
    double signal = 0.25;  // scale applied to the pairwise score sum
    double bias = 0.0;
    std::int64_t val_size = 5000;
    std::int64_t test_size = 5000;
};

struct SyntheticData {
    DatasetBundle bundle;  // ctr task
    // AUC of the generator's true scores against the sampled labels on the
    // validation split: the ceiling any model can reach.
    double bayes_auc = 0.0;
};

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

}  // namespace lfm
