#include "lorentzfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lorentzfm/errors.hpp"
#include "lorentzfm/util.hpp"

namespace lfm {

namespace {

void require_nonempty(const std::vector<RankingResult>& results) {
    if (results.empty()) {
        throw DataError("ranking metric over an empty result set");
    }
}

}  // namespace

double mrr(const std::vector<RankingResult>& results) {
    require_nonempty(results);
    double sum = 0.0;
    for (const auto& r : results) sum += 1.0 / r.rank;
    return sum / static_cast<double>(results.size());
}

double hit_rate_at(const std::vector<RankingResult>& results, double k) {
    require_nonempty(results);
    double hits = 0.0;
    for (const auto& r : results) {
        if (r.rank <= k) hits += 1.0;
    }
    return hits / static_cast<double>(results.size());
}

double ndcg(const std::vector<RankingResult>& results) {
    // one relevant item per list, so the ideal DCG is 1 and the per-result
    // gain is 1 / log2(rank + 1)
    require_nonempty(results);
    double sum = 0.0;
    for (const auto& r : results) sum += 1.0 / std::log2(r.rank + 1.0);
    return sum / static_cast<double>(results.size());
}

double auc(const std::vector<double>& scores, const std::vector<std::int8_t>& labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("auc: scores and labels differ in length");
    }
    std::int64_t n_pos = 0;
    for (auto y : labels) n_pos += y ? 1 : 0;
    const std::int64_t n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("auc undefined: needs at least one positive and one negative");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tied blocks; ranks and their sums are exact in doubles
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) {
            if (labels[order[t]]) rank_sum_pos += midrank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double logloss(const std::vector<double>& probs, const std::vector<std::int8_t>& labels) {
    if (probs.size() != labels.size()) {
        throw DimensionError("logloss: probs and labels differ in length");
    }
    if (probs.empty()) {
        throw DataError("logloss over an empty set");
    }
    constexpr double kEps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kEps, 1.0 - kEps);
        sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / static_cast<double>(probs.size());
}

RankingResult rank_candidates(const Scorer& scorer, const SparseInstance& positive,
                              const DatasetBundle& bundle, const RankOptions& opts) {
    if (bundle.items.empty()) {
        throw DataError("rank_candidates: empty item catalog");
    }
    const std::int32_t user = bundle.user_of(positive);
    const std::int32_t pos_item = bundle.item_ordinal_of(positive);

    std::vector<char> excluded(bundle.items.size(), 0);
    auto exclude = [&](const std::unordered_map<std::int32_t, std::vector<std::int32_t>>& map) {
        auto it = map.find(user);
        if (it == map.end()) return;
        for (std::int32_t i : it->second) excluded[static_cast<std::size_t>(i)] = 1;
    };
    exclude(bundle.observed_train);
    if (opts.exclude_val_observed) exclude(bundle.observed_val);
    excluded[static_cast<std::size_t>(pos_item)] = 0;  // never excluded

    std::vector<std::int32_t> pool;
    pool.reserve(bundle.items.size());
    for (std::size_t i = 0; i < bundle.items.size(); ++i) {
        if (!excluded[i]) pool.push_back(static_cast<std::int32_t>(i));
    }

    if (opts.candidate_subsample > 0 && pool.size() > opts.candidate_subsample + 1) {
        std::vector<std::int32_t> negatives;
        negatives.reserve(pool.size() - 1);
        for (std::int32_t i : pool) {
            if (i != pos_item) negatives.push_back(i);
        }
        std::mt19937_64 rng(mix_seed(opts.subsample_seed,
                                     seed_tag::kValSubsample + static_cast<std::uint64_t>(user)));
        std::shuffle(negatives.begin(), negatives.end(), rng);
        negatives.resize(opts.candidate_subsample);
        negatives.push_back(pos_item);
        pool = std::move(negatives);
    }

    // All candidates, the positive included, are scored through the same
    // item-substitution path so ties behave consistently.
    double pos_score = 0.0;
    std::vector<double> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        scores[i] = scorer(bundle.with_item(positive, pool[i]));
        if (pool[i] == pos_item) pos_score = scores[i];
    }

    std::size_t higher = 0;
    std::size_t tied = 0;  // including the positive itself
    for (double s : scores) {
        if (s > pos_score) ++higher;
        else if (s == pos_score) ++tied;
    }
    RankingResult result;
    result.candidates = pool.size();
    result.rank = static_cast<double>(higher) + (static_cast<double>(tied) + 1.0) / 2.0;
    return result;
}

std::vector<RankingResult> rank_split(const Scorer& scorer,
                                      const std::vector<SparseInstance>& split,
                                      const DatasetBundle& bundle, const RankOptions& opts) {
    std::vector<RankingResult> results(split.size());
    parallel_for(split.size(), opts.threads, [&](std::size_t i) {
        results[i] = rank_candidates(scorer, split[i], bundle, opts);
    });
    return results;
}

std::string render_metrics_report(const MetricsReport& report) {
    std::ostringstream out;
    out << "task: " << report.task << "  samples: " << report.samples
        << "  seed: " << report.seed << '\n';
    for (const auto& [name, value] : report.values) {
        out << "  " << name << " = " << fmt_double(value) << '\n';
    }
    return out.str();
}

void write_metrics_report(const std::filesystem::path& dir, const std::string& name,
                          const MetricsReport& report) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / (name + ".kv"), std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / (name + ".kv")).string());
        out << "task = " << report.task << '\n';
        out << "samples = " << report.samples << '\n';
        out << "seed = " << report.seed << '\n';
        out << "config_digest = " << report.config_digest << '\n';
        for (const auto& [key, value] : report.values) {
            out << key << " = " << fmt_double(value) << '\n';
        }
    }
    {
        std::ofstream out(dir / (name + ".txt"), std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / (name + ".txt")).string());
        out << render_metrics_report(report);
    }
}

}  // namespace lfm
