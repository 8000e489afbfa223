#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lorentzfm/checkpoint.hpp"
#include "lorentzfm/data.hpp"
#include "lorentzfm/kv.hpp"
#include "lorentzfm/metrics.hpp"

namespace lfm {

enum class Monitor { kMrr, kLogloss };

std::string to_string(Monitor m);
Monitor monitor_from_string(const std::string& s);

struct TrainConfig {
    TaskKind task = TaskKind::kRanking;
    ModelKind model = ModelKind::kLorentzFm;
    int embedding_dim = 10;  // ambient dimension k; k-1 free coordinates per row
    double lr = 0.1;
    int batch_size = 256;
    int max_epochs = 50;
    int patience = 20;
    int burn_in_epochs = 25;
    double burn_in_factor = 0.1;
    int negatives_per_positive = 10;
    std::uint64_t seed = 42;
    Monitor monitor = Monitor::kMrr;
    std::size_t val_candidates = 500;  // ranking monitor subsample; 0 = full pool
    bool resample_negatives = true;    // fresh negatives every epoch
    bool exclude_padding = false;
    bool deterministic = true;
    int threads = 1;
    // fm baseline (Adam)
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-5;

    void validate() const;
    // stable key = value form; the run snapshot and the digest source
    std::string canonical_text() const;
    std::string digest() const;
};

// Config file parsing with paper-derived defaults (fm switches the
// learning-rate default to 0.001).
TrainConfig train_config_from_kv(const KvFile& kv);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;    // per-sample mean over the epoch
    double monitor_value = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct RunHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_monitor = 0.0;
    std::int64_t rejected_steps = 0;  // non-finite gradients skipped
};

// Patience-based stopping on a validation monitor; MRR improves upward,
// logloss downward.
class EarlyStopper {
public:
    EarlyStopper(Monitor monitor, int patience);
    bool update(int epoch, double value);  // true when the monitor improved
    bool should_stop() const { return stale_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_value() const { return best_value_; }

private:
    Monitor monitor_;
    int patience_;
    int stale_ = 0;
    int best_epoch_ = -1;
    double best_value_ = 0.0;
};

// Batch loss: sum of -y log p - (1-y) log(1-p) over the batch,
// probabilities clamped to [1e-7, 1-1e-7].
double bce_loss(const std::vector<double>& probs, const std::vector<std::int8_t>& labels);

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    RunHistory history;
};

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle);

// Scorer over a checkpoint, shared by evaluation and the explain command.
Scorer make_scorer(const Checkpoint& ckpt, bool exclude_padding = false);

// Run-directory files. Deterministic mode omits the wall-time column so
// reruns are byte-identical.
void write_history(const std::filesystem::path& path, const TrainConfig& config,
                   const RunHistory& history);
void write_config_snapshot(const std::filesystem::path& path, const TrainConfig& config);
void write_run_summary(const std::filesystem::path& path, const RunHistory& history);

}  // namespace lfm
