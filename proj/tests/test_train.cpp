#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lorentzfm/synthetic.hpp"
#include "lorentzfm/train.hpp"
#include "lorentzfm/util.hpp"

namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("lfm_train_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

lfm::SynthSpec small_spec() {
    lfm::SynthSpec spec;
    spec.fields = 6;
    spec.tokens_per_field = 30;
    spec.instances = 4000;
    spec.latent_dim = 3;
    spec.signal = 0.6;
    spec.val_size = 600;
    spec.test_size = 600;
    return spec;
}

lfm::TrainConfig small_ctr_config(lfm::ModelKind model) {
    lfm::TrainConfig c;
    c.task = lfm::TaskKind::kCtr;
    c.model = model;
    c.monitor = lfm::Monitor::kLogloss;
    c.embedding_dim = 6;
    c.lr = model == lfm::ModelKind::kLorentzFm ? 0.1 : 0.003;
    c.batch_size = 64;
    c.max_epochs = 8;
    c.patience = 8;
    c.burn_in_epochs = 1;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("bce_loss fixed values") {
    CHECK(lfm::bce_loss({0.5}, {1}) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    // summation within a batch: two identical samples double the loss
    const double one = lfm::bce_loss({0.3}, {0});
    CHECK(lfm::bce_loss({0.3, 0.3}, {0, 0}) == doctest::Approx(2.0 * one).epsilon(1e-15));
    CHECK(std::isfinite(lfm::bce_loss({0.0, 1.0}, {1, 0})));
    CHECK_THROWS_AS((void)lfm::bce_loss({0.5}, {1, 0}), lfm::DimensionError);
}

TEST_CASE("bce gradient through the sigmoid is p - y") {
    // d/ds [-y log sigma(s) - (1-y) log(1-sigma(s))] = sigma(s) - y
    const double h = 1e-6;
    for (double s : {-2.0, -0.3, 0.0, 1.2, 3.0}) {
        for (std::int8_t y : {std::int8_t(0), std::int8_t(1)}) {
            const double up = lfm::bce_loss({lfm::sigmoid(s + h)}, {y});
            const double down = lfm::bce_loss({lfm::sigmoid(s - h)}, {y});
            const double fd = (up - down) / (2.0 * h);
            CHECK(fd == doctest::Approx(lfm::sigmoid(s) - y).epsilon(1e-6));
        }
    }
}

TEST_CASE("EarlyStopper patience rule") {
    // patience=1, monitor worsens immediately after epoch 1 (0-based
    // epoch 0): stops after the second epoch, keeps the first.
    lfm::EarlyStopper s(lfm::Monitor::kMrr, 1);
    CHECK(s.update(0, 0.5));
    CHECK(!s.should_stop());
    CHECK(!s.update(1, 0.4));
    CHECK(s.should_stop());
    CHECK(s.best_epoch() == 0);
    CHECK(s.best_value() == 0.5);

    // logloss improves downward
    lfm::EarlyStopper l(lfm::Monitor::kLogloss, 2);
    CHECK(l.update(0, 0.7));
    CHECK(l.update(1, 0.6));
    CHECK(!l.update(2, 0.65));
    CHECK(!l.should_stop());
    CHECK(!l.update(3, 0.66));
    CHECK(l.should_stop());
    CHECK(l.best_epoch() == 1);
}

TEST_CASE("generate_synthetic basics") {
    auto spec = small_spec();
    const auto data = lfm::generate_synthetic(spec, 3);
    CHECK(data.bundle.task == lfm::TaskKind::kCtr);
    CHECK(static_cast<std::int64_t>(data.bundle.train.size() + data.bundle.val.size() +
                                    data.bundle.test.size()) == spec.instances);
    CHECK(data.bundle.val.size() == 600);
    CHECK(data.bundle.vocab.size() == 6 * 31);
    CHECK(data.bayes_auc > 0.8);  // planted signal is informative

    // reproducible per seed
    const auto again = lfm::generate_synthetic(spec, 3);
    CHECK(again.bayes_auc == data.bayes_auc);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(again.bundle.train[i].label == data.bundle.train[i].label);
        CHECK(again.bundle.train[i].entries[0].index == data.bundle.train[i].entries[0].index);
    }

    // zero planted signal: every true score ties, Bayes AUC is exactly 0.5
    auto null_spec = spec;
    null_spec.signal = 0.0;
    const auto null_data = lfm::generate_synthetic(null_spec, 3);
    CHECK(null_data.bayes_auc == 0.5);
}

TEST_CASE("training on null-signal data stays at chance AUC") {
    auto spec = small_spec();
    spec.signal = 0.0;
    spec.instances = 3000;
    spec.val_size = 500;
    spec.test_size = 500;
    const auto data = lfm::generate_synthetic(spec, 5);

    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    config.max_epochs = 4;
    const auto result = lfm::train(config, data.bundle);

    std::vector<double> probs;
    std::vector<std::int8_t> labels;
    for (const auto& inst : data.bundle.val) {
        probs.push_back(lfm::lfm_predict(inst, result.best.table));
        labels.push_back(inst.label);
    }
    const double val_auc = lfm::auc(probs, labels);
    CHECK(val_auc > 0.45);
    CHECK(val_auc < 0.55);
}

TEST_CASE("lorentzfm training learns planted structure (smoke)") {
    const auto data = lfm::generate_synthetic(small_spec(), 7);
    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    const auto result = lfm::train(config, data.bundle);

    CHECK(!result.history.epochs.empty());
    // train loss must have improved over the run
    CHECK(result.history.epochs.back().train_loss <
          result.history.epochs.front().train_loss);

    std::vector<double> probs;
    std::vector<std::int8_t> labels;
    for (const auto& inst : data.bundle.val) {
        probs.push_back(lfm::lfm_predict(inst, result.best.table));
        labels.push_back(inst.label);
    }
    CHECK(lfm::auc(probs, labels) > 0.75);

    // manifold invariant held across the run
    CHECK(result.best.table.max_manifold_residual() < 1e-6);
    CHECK(result.last.table.max_manifold_residual() < 1e-6);
}

TEST_CASE("fm training learns planted structure (smoke)") {
    const auto data = lfm::generate_synthetic(small_spec(), 7);
    auto config = small_ctr_config(lfm::ModelKind::kFm);
    config.max_epochs = 12;
    config.patience = 12;
    const auto result = lfm::train(config, data.bundle);

    std::vector<double> probs;
    std::vector<std::int8_t> labels;
    for (const auto& inst : data.bundle.val) {
        probs.push_back(lfm::fm_predict(inst, result.best.fm));
        labels.push_back(inst.label);
    }
    CHECK(lfm::auc(probs, labels) > 0.75);
    CHECK(result.best.adam.has_value());
}

TEST_CASE("best checkpoint matches the best monitor in history") {
    const auto data = lfm::generate_synthetic(small_spec(), 9);
    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    config.max_epochs = 6;
    const auto result = lfm::train(config, data.bundle);

    double best = result.history.epochs.front().monitor_value;
    for (const auto& r : result.history.epochs) best = std::min(best, r.monitor_value);
    CHECK(result.history.best_monitor == best);
    CHECK(result.history.best_epoch ==
          static_cast<int>(result.best.epoch));

    // recompute the monitor from the returned best checkpoint
    std::vector<double> probs;
    std::vector<std::int8_t> labels;
    for (const auto& inst : data.bundle.val) {
        probs.push_back(lfm::lfm_predict(inst, result.best.table));
        labels.push_back(inst.label);
    }
    CHECK(lfm::logloss(probs, labels) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("training is deterministic per seed") {
    const auto data = lfm::generate_synthetic(small_spec(), 13);
    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    config.max_epochs = 3;

    const auto a = lfm::train(config, data.bundle);
    const auto b = lfm::train(config, data.bundle);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
        CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
        CHECK(a.history.epochs[i].monitor_value == b.history.epochs[i].monitor_value);
    }
    CHECK((a.best.table.rows - b.best.table.rows).cwiseAbs().maxCoeff() == 0.0);

    // history files are byte-identical in deterministic mode
    const auto dir = make_temp_dir("determinism");
    lfm::write_history(dir / "a.tsv", config, a.history);
    lfm::write_history(dir / "b.tsv", config, b.history);
    CHECK(read_file(dir / "a.tsv") == read_file(dir / "b.tsv"));

    auto different = config;
    different.seed = 12345;
    const auto c = lfm::train(different, data.bundle);
    CHECK(c.history.epochs[0].train_loss != a.history.epochs[0].train_loss);
}

TEST_CASE("train loss on a single repeated batch is monotone nonincreasing") {
    // whole-pipeline smoke test for gradient correctness: one batch,
    // small lr, loss can never rise
    auto spec = small_spec();
    spec.instances = 66;  // train split of 64 = one batch
    spec.val_size = 1;
    spec.test_size = 1;
    const auto data = lfm::generate_synthetic(spec, 21);

    for (auto model : {lfm::ModelKind::kLorentzFm, lfm::ModelKind::kFm}) {
        auto config = small_ctr_config(model);
        config.lr = 1e-3;
        config.burn_in_epochs = 0;
        config.batch_size = 64;
        config.max_epochs = 50;
        config.patience = 50;
        const auto result = lfm::train(config, data.bundle);
        for (std::size_t i = 1; i < result.history.epochs.size(); ++i) {
            CHECK(result.history.epochs[i].train_loss <=
                  result.history.epochs[i - 1].train_loss);
        }
    }
}

TEST_CASE("training rejects mismatched and invalid configs") {
    const auto data = lfm::generate_synthetic(small_spec(), 3);
    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    config.task = lfm::TaskKind::kRanking;
    config.monitor = lfm::Monitor::kMrr;
    CHECK_THROWS_AS((void)lfm::train(config, data.bundle), lfm::ConfigError);

    auto bad = small_ctr_config(lfm::ModelKind::kLorentzFm);
    bad.monitor = lfm::Monitor::kMrr;  // ctr monitors logloss
    CHECK_THROWS_AS((void)lfm::train(bad, data.bundle), lfm::ConfigError);

    CHECK_THROWS_AS((void)lfm::monitor_from_string("auc"), lfm::ConfigError);
}

TEST_CASE("training aborts on divergence") {
    const auto data = lfm::generate_synthetic(small_spec(), 3);
    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    config.lr = 1e9;  // exp-map overflow -> non-finite loss
    config.burn_in_epochs = 0;
    CHECK_THROWS_AS((void)lfm::train(config, data.bundle), lfm::NumericError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const auto dir = make_temp_dir("checkpoint");
    const auto data = lfm::generate_synthetic(small_spec(), 17);

    auto config = small_ctr_config(lfm::ModelKind::kLorentzFm);
    config.max_epochs = 2;
    const auto result = lfm::train(config, data.bundle);

    lfm::save_checkpoint(dir / "best.ckpt", result.best);
    const auto loaded = lfm::load_checkpoint(dir / "best.ckpt");
    CHECK(loaded.kind == lfm::ModelKind::kLorentzFm);
    CHECK(loaded.seed == result.best.seed);
    CHECK(loaded.epoch == result.best.epoch);
    CHECK((loaded.table.rows - result.best.table.rows).cwiseAbs().maxCoeff() == 0.0);

    // writing the loaded checkpoint again produces identical bytes
    lfm::save_checkpoint(dir / "again.ckpt", loaded);
    CHECK(read_file(dir / "best.ckpt") == read_file(dir / "again.ckpt"));

    auto fm_config = small_ctr_config(lfm::ModelKind::kFm);
    fm_config.max_epochs = 2;
    const auto fm_result = lfm::train(fm_config, data.bundle);
    lfm::save_checkpoint(dir / "fm.ckpt", fm_result.best);
    const auto fm_loaded = lfm::load_checkpoint(dir / "fm.ckpt");
    CHECK(fm_loaded.kind == lfm::ModelKind::kFm);
    CHECK(fm_loaded.fm.bias == fm_result.best.fm.bias);
    CHECK((fm_loaded.fm.linear - fm_result.best.fm.linear).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fm_loaded.fm.factors - fm_result.best.fm.factors).cwiseAbs().maxCoeff() == 0.0);
    // Adam state round-trips unchanged
    REQUIRE(fm_loaded.adam.has_value());
    CHECK(fm_loaded.adam->step == fm_result.best.adam->step);
    CHECK((fm_loaded.adam->m_factors - fm_result.best.adam->m_factors).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((fm_loaded.adam->v_linear - fm_result.best.adam->v_linear).cwiseAbs().maxCoeff() == 0.0);

    // corrupted magic is rejected
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS_AS((void)lfm::load_checkpoint(dir / "bad.ckpt"), lfm::DataError);
}

TEST_CASE("ranking training end to end on a tiny bundle") {
    // build a small ranking bundle through the real pipeline
    const auto dir = make_temp_dir("ranking");
    std::ostringstream raw;
    raw << "uid\tiid\tgenre\n";
    std::mt19937_64 rng(33);
    std::uniform_int_distribution<int> user(0, 11), item(0, 7);
    for (int r = 0; r < 240; ++r) {
        raw << "u" << user(rng) << "\ti" << item(rng) << "\tg" << item(rng) % 3 << "\n";
    }
    {
        std::ofstream out(dir / "raw.tsv");
        out << raw.str();
    }
    {
        std::ofstream out(dir / "schema.txt");
        out << "task = ranking\nfield = uid user 1\nfield = iid item 1\nfield = genre item 1\n"
            << "k_core_user = 2\nk_core_item = 2\nval_size = 8\ntest_size = 8\n";
    }
    const auto schema = lfm::parse_schema_file(dir / "schema.txt");
    const auto records = lfm::read_raw_file(dir / "raw.tsv", schema);
    const auto bundle = lfm::preprocess_dataset(schema, records, 3);
    REQUIRE(bundle.train.size() > 20);

    lfm::TrainConfig config;
    config.task = lfm::TaskKind::kRanking;
    config.model = lfm::ModelKind::kLorentzFm;
    config.monitor = lfm::Monitor::kMrr;
    config.embedding_dim = 4;
    config.lr = 0.05;
    config.batch_size = 32;
    config.max_epochs = 3;
    config.patience = 3;
    config.burn_in_epochs = 1;
    config.negatives_per_positive = 4;
    config.val_candidates = 0;
    config.seed = 5;
    const auto result = lfm::train(config, bundle);
    CHECK(result.history.epochs.size() == 3);
    for (const auto& r : result.history.epochs) {
        CHECK(r.monitor_value >= 0.0);
        CHECK(r.monitor_value <= 1.0);
    }
    CHECK(result.history.epochs[0].lr == doctest::Approx(0.005));  // burn-in
    CHECK(result.history.epochs[1].lr == 0.05);
}
