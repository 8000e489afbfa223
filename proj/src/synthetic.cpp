#include "lorentzfm/synthetic.hpp"

#include <random>

#include "lorentzfm/errors.hpp"
#include "lorentzfm/metrics.hpp"
#include "lorentzfm/util.hpp"

namespace lfm {

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.fields < 2) throw ConfigError("synthetic spec needs at least 2 fields");
    if (spec.tokens_per_field < 1) throw ConfigError("synthetic spec needs tokens_per_field >= 1");
    if (spec.latent_dim < 1) throw ConfigError("synthetic spec needs latent_dim >= 1");
    if (spec.val_size + spec.test_size >= spec.instances) {
        throw ConfigError("synthetic spec: val+test exceed the instance count");
    }

    SyntheticData out;
    auto& bundle = out.bundle;
    bundle.task = TaskKind::kCtr;

    // zero-padded token names keep the lexicographic vocabulary order equal
    // to the numeric one
    int width = 1;
    for (int n = spec.tokens_per_field - 1; n >= 10; n /= 10) ++width;
    auto token_name = [&](int j) {
        std::string digits = std::to_string(j);
        return "t" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
    };

    for (int f = 0; f < spec.fields; ++f) {
        bundle.schema.fields.push_back({"f" + std::to_string(f), FieldSide::kContext, 1});
    }
    VocabBuilder builder(bundle.schema);
    for (int f = 0; f < spec.fields; ++f) {
        for (int j = 0; j < spec.tokens_per_field; ++j) builder.count(f, token_name(j));
    }
    bundle.vocab = builder.freeze(0, {});

    std::mt19937_64 rng(mix_seed(seed, seed_tag::kSynthetic));
    std::normal_distribution<double> normal(0.0, 1.0);

    // planted latent vectors, one per non-unknown feature
    RowMatrix latents = RowMatrix::Zero(bundle.vocab.size(), spec.latent_dim);
    for (Eigen::Index i = 0; i < latents.rows(); ++i) {
        if (bundle.vocab.tokens()[static_cast<std::size_t>(i)] == Vocabulary::kUnknownToken) {
            continue;
        }
        for (int k = 0; k < spec.latent_dim; ++k) latents(i, k) = normal(rng);
    }

    std::uniform_int_distribution<int> token(0, spec.tokens_per_field - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::vector<double> true_scores;
    true_scores.reserve(static_cast<std::size_t>(spec.instances));
    std::vector<SparseInstance> instances;
    instances.reserve(static_cast<std::size_t>(spec.instances));
    Eigen::RowVectorXd sum(spec.latent_dim);
    for (std::int64_t n = 0; n < spec.instances; ++n) {
        SparseInstance inst;
        inst.entries.reserve(static_cast<std::size_t>(spec.fields));
        sum.setZero();
        double sum_sq = 0.0;
        for (int f = 0; f < spec.fields; ++f) {
            const std::int32_t index = bundle.vocab.lookup(f, token_name(token(rng)));
            inst.entries.push_back({f, index, 1.0, false});
            const auto z = latents.row(index);
            sum += z;
            sum_sq += z.squaredNorm();
        }
        // sum_{a<b} <z_a, z_b>
        const double pairwise = 0.5 * (sum.squaredNorm() - sum_sq);
        const double score = spec.signal * pairwise + spec.bias;
        const double p = sigmoid(score);
        inst.label = coin(rng) < p ? 1 : 0;
        true_scores.push_back(score);
        instances.push_back(std::move(inst));
    }

    const auto train_size =
        static_cast<std::size_t>(spec.instances - spec.val_size - spec.test_size);
    const auto val_size = static_cast<std::size_t>(spec.val_size);
    bundle.train.assign(instances.begin(),
                        instances.begin() + static_cast<std::ptrdiff_t>(train_size));
    bundle.val.assign(instances.begin() + static_cast<std::ptrdiff_t>(train_size),
                      instances.begin() + static_cast<std::ptrdiff_t>(train_size + val_size));
    bundle.test.assign(instances.begin() + static_cast<std::ptrdiff_t>(train_size + val_size),
                       instances.end());
    bundle.validate();

    // Bayes ceiling: rank the sampled labels by the true scores, over all
    // generated instances. With zero signal every score ties and this is
    // exactly 0.5.
    std::vector<std::int8_t> all_labels;
    all_labels.reserve(instances.size());
    for (const auto* split : {&bundle.train, &bundle.val, &bundle.test}) {
        for (const auto& inst : *split) all_labels.push_back(inst.label);
    }
    out.bayes_auc = auc(true_scores, all_labels);
    return out;
}

}  // namespace lfm
