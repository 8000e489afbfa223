#include "lorentzfm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lorentzfm/errors.hpp"
#include "lorentzfm/util.hpp"

namespace lfm {

std::string to_string(Monitor m) {
    return m == Monitor::kMrr ? "mrr" : "logloss";
}

Monitor monitor_from_string(const std::string& s) {
    if (s == "mrr") return Monitor::kMrr;
    if (s == "logloss") return Monitor::kLogloss;
    throw ConfigError("unknown monitor '" + s + "' (expected mrr|logloss)");
}

void TrainConfig::validate() const {
    if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (burn_in_epochs < 0) throw ConfigError("burn_in_epochs must be >= 0");
    if (!(burn_in_factor > 0.0) || burn_in_factor > 1.0) {
        throw ConfigError("burn_in_factor must be in (0, 1]");
    }
    if (negatives_per_positive < 1 && task == TaskKind::kRanking) {
        throw ConfigError("negatives_per_positive must be >= 1 for ranking");
    }
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (task == TaskKind::kRanking && monitor != Monitor::kMrr) {
        throw ConfigError("ranking training monitors mrr");
    }
    if (task == TaskKind::kCtr && monitor != Monitor::kLogloss) {
        throw ConfigError("ctr training monitors logloss");
    }
}

std::string TrainConfig::canonical_text() const {
    std::ostringstream out;
    out << "task = " << lfm::to_string(task) << '\n';
    out << "model = " << lfm::to_string(model) << '\n';
    out << "embedding_dim = " << embedding_dim << '\n';
    out << "lr = " << fmt_double(lr) << '\n';
    out << "batch_size = " << batch_size << '\n';
    out << "max_epochs = " << max_epochs << '\n';
    out << "patience = " << patience << '\n';
    out << "burn_in_epochs = " << burn_in_epochs << '\n';
    out << "burn_in_factor = " << fmt_double(burn_in_factor) << '\n';
    out << "negatives_per_positive = " << negatives_per_positive << '\n';
    out << "seed = " << seed << '\n';
    out << "monitor = " << lfm::to_string(monitor) << '\n';
    out << "val_candidates = " << val_candidates << '\n';
    out << "resample_negatives = " << (resample_negatives ? "true" : "false") << '\n';
    out << "exclude_padding = " << (exclude_padding ? "true" : "false") << '\n';
    out << "deterministic = " << (deterministic ? "true" : "false") << '\n';
    out << "adam_beta1 = " << fmt_double(adam_beta1) << '\n';
    out << "adam_beta2 = " << fmt_double(adam_beta2) << '\n';
    out << "adam_eps = " << fmt_double(adam_eps) << '\n';
    out << "weight_decay = " << fmt_double(weight_decay) << '\n';
    return out.str();
}

std::string TrainConfig::digest() const {
    return hex64(fnv1a(canonical_text()));
}

TrainConfig train_config_from_kv(const KvFile& kv) {
    TrainConfig c;
    c.task = task_from_string(kv.get_or("task", "ranking"));
    c.model = model_kind_from_string(kv.get_or("model", "lorentzfm"));
    c.monitor = monitor_from_string(
        kv.get_or("monitor", c.task == TaskKind::kRanking ? "mrr" : "logloss"));
    c.embedding_dim = static_cast<int>(kv.get_int_or("embedding_dim", 10));
    // paper defaults: RSGD lr grid starts at 0.05-0.1; baselines use Adam
    // at 0.001
    c.lr = kv.get_double_or("lr", c.model == ModelKind::kLorentzFm ? 0.1 : 0.001);
    c.batch_size = static_cast<int>(
        kv.get_int_or("batch_size", c.task == TaskKind::kCtr ? 4096 : 256));
    c.max_epochs = static_cast<int>(kv.get_int_or("max_epochs", 50));
    c.patience = static_cast<int>(kv.get_int_or("patience", 20));
    c.burn_in_epochs = static_cast<int>(
        kv.get_int_or("burn_in_epochs", c.model == ModelKind::kLorentzFm ? 25 : 0));
    c.burn_in_factor = kv.get_double_or("burn_in_factor", 0.1);
    c.negatives_per_positive = static_cast<int>(kv.get_int_or("negatives_per_positive", 10));
    c.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", 42));
    c.val_candidates = static_cast<std::size_t>(kv.get_int_or("val_candidates", 500));
    c.resample_negatives = kv.get_bool_or("resample_negatives", true);
    c.exclude_padding = kv.get_bool_or("exclude_padding", false);
    c.deterministic = kv.get_bool_or("deterministic", true);
    c.threads = static_cast<int>(kv.get_int_or("threads", 1));
    c.adam_beta1 = kv.get_double_or("adam_beta1", 0.9);
    c.adam_beta2 = kv.get_double_or("adam_beta2", 0.999);
    c.adam_eps = kv.get_double_or("adam_eps", 1e-8);
    c.weight_decay = kv.get_double_or("weight_decay", 1e-5);
    c.validate();
    return c;
}

EarlyStopper::EarlyStopper(Monitor monitor, int patience)
    : monitor_(monitor), patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopper::update(int epoch, double value) {
    const bool improved =
        best_epoch_ < 0 ||
        (monitor_ == Monitor::kMrr ? value > best_value_ : value < best_value_);
    if (improved) {
        best_epoch_ = epoch;
        best_value_ = value;
        stale_ = 0;
    } else {
        stale_ += 1;
    }
    return improved;
}

double bce_loss(const std::vector<double>& probs, const std::vector<std::int8_t>& labels) {
    if (probs.size() != labels.size()) {
        throw DimensionError("bce_loss: probs and labels differ in length");
    }
    constexpr double kEps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kEps, 1.0 - kEps);
        sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum;
}

Scorer make_scorer(const Checkpoint& ckpt, bool exclude_padding) {
    if (ckpt.kind == ModelKind::kLorentzFm) {
        const EmbeddingTable* table = &ckpt.table;
        return [table, exclude_padding](const SparseInstance& inst) {
            return lfm_forward(inst, *table, exclude_padding);
        };
    }
    const FmParameters* fm = &ckpt.fm;
    return [fm, exclude_padding](const SparseInstance& inst) {
        return fm_forward(inst, *fm, exclude_padding);
    };
}

namespace {

inline double bce_single(double p, std::int8_t label) {
    constexpr double kEps = 1e-7;
    const double q = std::clamp(p, kEps, 1.0 - kEps);
    return label ? -std::log(q) : -std::log(1.0 - q);
}

// Training set for one epoch: views into the bundle plus generated
// negatives (ranking).
struct EpochData {
    std::vector<SparseInstance> instances;
    std::vector<std::size_t> order;
};

EpochData build_epoch_data(const TrainConfig& config, const DatasetBundle& bundle, int epoch) {
    EpochData data;
    if (config.task == TaskKind::kRanking) {
        const std::uint64_t negative_tag =
            config.resample_negatives ? seed_tag::kNegatives + static_cast<std::uint64_t>(epoch)
                                      : seed_tag::kNegatives;
        std::mt19937_64 rng(mix_seed(config.seed, negative_tag));
        data.instances.reserve(bundle.train.size() *
                               static_cast<std::size_t>(1 + config.negatives_per_positive));
        for (const auto& positive : bundle.train) {
            data.instances.push_back(positive);
            data.instances.back().label = 1;
            const auto negatives = sample_negatives(
                bundle.user_of(positive), config.negatives_per_positive, bundle, rng);
            for (std::int32_t item : negatives) {
                data.instances.push_back(bundle.with_item(positive, item));
                data.instances.back().label = 0;
            }
        }
    } else {
        data.instances = bundle.train;
    }
    data.order.resize(data.instances.size());
    std::iota(data.order.begin(), data.order.end(), 0);
    std::mt19937_64 shuffle_rng(
        mix_seed(config.seed, seed_tag::kShuffle + static_cast<std::uint64_t>(epoch)));
    std::shuffle(data.order.begin(), data.order.end(), shuffle_rng);
    return data;
}

double validation_monitor(const TrainConfig& config, const DatasetBundle& bundle,
                          const Checkpoint& ckpt) {
    if (bundle.val.empty()) {
        throw DataError("training needs a nonempty validation split for the monitor");
    }
    if (config.task == TaskKind::kRanking) {
        RankOptions opts;
        opts.exclude_val_observed = true;
        opts.candidate_subsample = config.val_candidates;
        // fixed subsample pools so the monitor is comparable across epochs
        opts.subsample_seed = config.seed;
        opts.threads = config.threads;
        const auto results = rank_split(make_scorer(ckpt, config.exclude_padding), bundle.val,
                                        bundle, opts);
        return mrr(results);
    }
    std::vector<double> probs;
    std::vector<std::int8_t> labels;
    probs.reserve(bundle.val.size());
    for (const auto& inst : bundle.val) {
        probs.push_back(ckpt.kind == ModelKind::kLorentzFm
                            ? lfm_predict(inst, ckpt.table, config.exclude_padding)
                            : fm_predict(inst, ckpt.fm, config.exclude_padding));
        labels.push_back(inst.label);
    }
    return logloss(probs, labels);
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle) {
    config.validate();
    if (bundle.task != config.task) {
        throw ConfigError("config task '" + lfm::to_string(config.task) +
                          "' does not match bundle task '" + lfm::to_string(bundle.task) + "'");
    }
    if (bundle.train.empty()) throw DataError("training split is empty");
    if (config.task == TaskKind::kRanking && bundle.items.empty()) {
        throw DataError("ranking training needs an item catalog");
    }

    const auto vocab_size = static_cast<Eigen::Index>(bundle.vocab.size());
    Checkpoint current;
    current.kind = config.model;
    current.seed = config.seed;
    AdamState adam = make_adam_state(vocab_size, config.embedding_dim);
    AdamConfig adam_cfg{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps,
                        config.weight_decay};
    RsgdConfig rsgd_cfg{config.lr, config.burn_in_epochs, config.burn_in_factor};
    if (config.model == ModelKind::kLorentzFm) {
        current.table = init_lorentz_table(vocab_size, config.embedding_dim, config.seed);
    } else {
        current.fm = init_fm_params(vocab_size, config.embedding_dim, config.seed);
    }

    TrainResult result;
    EarlyStopper stopper(config.monitor, config.patience);

    RowMatrix lfm_accum;
    std::vector<std::int32_t> touched;
    std::vector<char> touched_mask;
    FmDenseGrad fm_accum;
    if (config.model == ModelKind::kLorentzFm) {
        lfm_accum = RowMatrix::Zero(vocab_size, config.embedding_dim);
        touched_mask.assign(static_cast<std::size_t>(vocab_size), 0);
    } else {
        fm_accum = make_fm_grad(vocab_size, config.embedding_dim);
    }

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double elr = config.model == ModelKind::kLorentzFm
                               ? effective_lr(epoch, rsgd_cfg)
                               : config.lr;

        EpochData data = build_epoch_data(config, bundle, epoch);
        double loss_sum = 0.0;

        for (std::size_t batch_start = 0; batch_start < data.order.size();
             batch_start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t batch_end =
                std::min(data.order.size(),
                         batch_start + static_cast<std::size_t>(config.batch_size));
            const double batch_count = static_cast<double>(batch_end - batch_start);

            if (config.model == ModelKind::kLorentzFm) {
                touched.clear();
                for (std::size_t i = batch_start; i < batch_end; ++i) {
                    const auto& inst = data.instances[data.order[i]];
                    const double p = lfm_predict(inst, current.table, config.exclude_padding);
                    loss_sum += bce_single(p, inst.label);
                    accumulate_lfm_score_grad(inst, current.table,
                                              p - static_cast<double>(inst.label), lfm_accum,
                                              touched, touched_mask, config.exclude_padding);
                }
                for (std::int32_t row : touched) {
                    // mean gradient over the batch, one Riemannian step per
                    // touched row
                    const auto g = (lfm_accum.row(row) / batch_count).eval();
                    touched_mask[static_cast<std::size_t>(row)] = 0;
                    if (!g.allFinite()) {
                        result.history.rejected_steps += 1;
                        continue;
                    }
                    current.table.rows.row(row) =
                        rsgd_step(current.table.rows.row(row), g, elr).transpose();
                }
            } else {
                fm_accum.zero();
                for (std::size_t i = batch_start; i < batch_end; ++i) {
                    const auto& inst = data.instances[data.order[i]];
                    const double p = fm_predict(inst, current.fm, config.exclude_padding);
                    loss_sum += bce_single(p, inst.label);
                    accumulate_fm_score_grad(inst, current.fm,
                                             p - static_cast<double>(inst.label), fm_accum,
                                             config.exclude_padding);
                }
                fm_accum.bias /= batch_count;
                fm_accum.linear /= batch_count;
                fm_accum.factors /= batch_count;
                const bool finite = std::isfinite(fm_accum.bias) &&
                                    fm_accum.linear.allFinite() && fm_accum.factors.allFinite();
                if (!finite) {
                    result.history.rejected_steps += 1;
                    continue;
                }
                adam_step(current.fm, fm_accum, adam, adam_cfg);
            }
        }

        const double train_loss = loss_sum / static_cast<double>(data.order.size());
        if (!std::isfinite(train_loss)) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               " (non-finite loss)");
        }
        if (config.model == ModelKind::kLorentzFm &&
            current.table.max_manifold_residual() > kManifoldTol) {
            throw NumericError("embedding rows left the hyperboloid at epoch " +
                               std::to_string(epoch));
        }

        current.epoch = static_cast<std::uint64_t>(epoch);
        if (config.model == ModelKind::kFm) current.adam = adam;
        const double monitor_value = validation_monitor(config, bundle, current);

        const auto t1 = std::chrono::steady_clock::now();
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = train_loss;
        record.monitor_value = monitor_value;
        record.lr = elr;
        record.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        result.history.epochs.push_back(record);

        if (stopper.update(epoch, monitor_value)) {
            result.best = current;
        }
        result.history.best_epoch = stopper.best_epoch();
        result.history.best_monitor = stopper.best_value();
        if (stopper.should_stop()) break;
    }

    result.last = current;
    if (result.history.best_epoch < 0) {
        throw NumericError("training produced no usable checkpoint");
    }
    return result;
}

void write_history(const std::filesystem::path& path, const TrainConfig& config,
                   const RunHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch\ttrain_loss\tval_" << to_string(config.monitor) << "\tlr";
    if (!config.deterministic) out << "\twall_s";
    out << '\n';
    for (const auto& r : history.epochs) {
        out << r.epoch << '\t' << fmt_double(r.train_loss) << '\t'
            << fmt_double(r.monitor_value) << '\t' << fmt_double(r.lr);
        if (!config.deterministic) out << '\t' << fmt_double(r.wall_seconds);
        out << '\n';
    }
}

void write_config_snapshot(const std::filesystem::path& path, const TrainConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << config.canonical_text();
}

void write_run_summary(const std::filesystem::path& path, const RunHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epochs_run = " << history.epochs.size() << '\n';
    out << "best_epoch = " << history.best_epoch << '\n';
    out << "best_monitor = " << fmt_double(history.best_monitor) << '\n';
    out << "rejected_steps = " << history.rejected_steps << '\n';
}

}  // namespace lfm
