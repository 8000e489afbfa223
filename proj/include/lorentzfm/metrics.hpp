#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lorentzfm/data.hpp"

namespace lfm {

// Rank of one test positive among its candidate pool. Ranks are real
// valued: ties resolve to the mean rank of the tied block.
struct RankingResult {
    double rank = 0.0;
    std::size_t candidates = 0;
};

double mrr(const std::vector<RankingResult>& results);
double hit_rate_at(const std::vector<RankingResult>& results, double k = 10.0);
double ndcg(const std::vector<RankingResult>& results);

// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
// correctly, ties counted 0.5. Sort-based O(N log N).
double auc(const std::vector<double>& scores, const std::vector<std::int8_t>& labels);

// Mean binary cross-entropy with probabilities clamped to
// [1e-7, 1 - 1e-7].
double logloss(const std::vector<double>& probs, const std::vector<std::int8_t>& labels);

using Scorer = std::function<double(const SparseInstance&)>;

struct RankOptions {
    // exclude the user's validation positives from the candidate pool
    bool exclude_val_observed = true;
    // 0 = full pool; otherwise at most this many non-positive candidates
    // (training-time validation monitor only; tests always run full pool)
    std::size_t candidate_subsample = 0;
    std::uint64_t subsample_seed = 0;
    int threads = 1;
};

// Scores the positive against every item the user has not interacted with
// in training (and validation, per options); the test positive itself is
// always a candidate.
RankingResult rank_candidates(const Scorer& scorer, const SparseInstance& positive,
                              const DatasetBundle& bundle, const RankOptions& opts = {});

std::vector<RankingResult> rank_split(const Scorer& scorer,
                                      const std::vector<SparseInstance>& split,
                                      const DatasetBundle& bundle, const RankOptions& opts = {});

struct MetricsReport {
    std::string task;
    std::vector<std::pair<std::string, double>> values;
    std::int64_t samples = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
};

// <name>.kv (machine readable key-value) and <name>.txt (small table).
void write_metrics_report(const std::filesystem::path& dir, const std::string& name,
                          const MetricsReport& report);
std::string render_metrics_report(const MetricsReport& report);

}  // namespace lfm
