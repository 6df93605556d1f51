#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/metrics.hpp"
#include "duckmorph/train.hpp"
#include "support/oracles.hpp"

using namespace duckmorph;
using namespace duckmorph::metrics;

namespace {

dataset::Labels row(double v) {
    dataset::Labels l;
    l.fill(v);
    return l;
}

std::vector<std::vector<double>> as_rows(const std::vector<dataset::Labels>& v) {
    std::vector<std::vector<double>> out;
    for (const auto& l : v) out.emplace_back(l.begin(), l.end());
    return out;
}

fusion::FusionConfig tiny_model() {
    fusion::FusionConfig c;
    c.backbone.variant = "test";
    c.backbone.widths = {4, 4, 4, 8};
    c.backbone.input_size = 16;
    c.seed = 5;
    return c;
}

// Images whose brightness and features both carry the labels.
std::vector<train::FusionSample> toy_samples(std::size_t ducks, std::size_t poses, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<train::FusionSample> out;
    for (std::size_t d = 0; d < ducks; ++d) {
        const double size = rng.uniform(0.2, 0.8);
        for (std::size_t p = 0; p < poses; ++p) {
            train::FusionSample s;
            s.duck_id = "duck" + std::to_string(d);
            s.sample_id = s.duck_id + "_p" + std::to_string(p);
            auto img = [&](std::size_t ch) {
                std::vector<float> v(ch * 16 * 16);
                for (auto& x : v) x = static_cast<float>(size + rng.normal(0, 0.05));
                return fusion::Tensor::from_data({ch, 16, 16}, std::move(v));
            };
            s.top = img(3);
            s.side = img(3);
            s.depth = img(1);
            for (std::size_t k = 0; k < s.features.size(); ++k) s.features[k] = size * (k + 1) + rng.normal(0, 0.01);
            for (std::size_t k = 0; k < s.labels.size(); ++k) s.labels[k] = 10 + 20 * size * (k + 1);
            out.push_back(std::move(s));
        }
    }
    return out;
}

train::TrainConfig quick(std::size_t epochs = 4) {
    train::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 4;
    c.learning_rate = 3e-3;
    c.seed = 2;
    return c;
}

} // namespace

TEST(Metrics, HandExample) {
    const std::vector<double> truth{100, 200}, pred{110, 180};
    const auto m = column_metrics(pred, truth);
    EXPECT_DOUBLE_EQ(m.mape, 10.0);
    EXPECT_DOUBLE_EQ(m.mae, 15.0);
    EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(250.0));
    EXPECT_DOUBLE_EQ(m.r2, 1.0 - 500.0 / 5000.0);
}

TEST(Metrics, PerfectAndMeanPredictions) {
    const std::vector<double> truth{3, 5, 9, 11};
    const auto perfect = column_metrics(truth, truth);
    EXPECT_EQ(perfect.r2, 1.0);
    EXPECT_EQ(perfect.mape, 0.0);
    EXPECT_EQ(perfect.rmse, 0.0);
    EXPECT_EQ(perfect.mae, 0.0);
    const std::vector<double> mean(4, 7.0);
    EXPECT_NEAR(column_metrics(mean, truth).r2, 0.0, 1e-15);
}

TEST(Metrics, RejectsZeroTruthAndTinyInputs) {
    std::vector<dataset::Labels> truth{row(1), row(2), row(3)}, pred = truth;
    truth[2][4] = 0;
    try {
        compute_metrics(pred, truth);
        FAIL() << "expected an error";
    } catch (const ArgumentError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("keel_length"), std::string::npos);
        EXPECT_NE(msg.find("row 2"), std::string::npos);
    }
    const std::vector<double> one{1};
    EXPECT_THROW(column_metrics(one, one), ArgumentError);
    const std::vector<double> a{1, 2}, b{1, std::nan("")};
    EXPECT_THROW(column_metrics(b, a), NumericError);
    EXPECT_THROW(compute_metrics({row(1)}, {row(1), row(2)}), DimensionError);
}

TEST(Metrics, MatchesNaiveDefinitions) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<dataset::Labels> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < dataset::kTargetCount; ++k) {
                truth[i][k] = (k == 0 ? 1000 : 10) * rng.uniform(0.5, 2.0);
                pred[i][k] = truth[i][k] * rng.normal(1, 0.1);
            }
        const auto want = duckmorph::testing::oracle_metrics(as_rows(pred), as_rows(truth));
        const auto pooled = compute_metrics(pred, truth);
        const auto mean = compute_metrics(pred, truth, OverallMode::PerTargetMean);
        TargetMetrics avg{};
        for (std::size_t k = 0; k < dataset::kTargetCount; ++k) {
            const auto& g = pooled.per_target[k];
            EXPECT_NEAR(g.r2, want[k].r2, 1e-9);
            EXPECT_NEAR(g.mape, want[k].mape, 1e-9);
            EXPECT_NEAR(g.rmse, want[k].rmse, 1e-9);
            EXPECT_NEAR(g.mae, want[k].mae, 1e-9);
            avg.r2 += want[k].r2 / 8;
            avg.mape += want[k].mape / 8;
        }
        const auto& all = want.back();
        EXPECT_NEAR(pooled.overall.r2, all.r2, 1e-9);
        EXPECT_NEAR(pooled.overall.mape, all.mape, 1e-9);
        EXPECT_NEAR(pooled.overall.rmse, all.rmse, 1e-9);
        EXPECT_NEAR(pooled.overall.mae, all.mae, 1e-9);
        EXPECT_NEAR(mean.overall.r2, avg.r2, 1e-9);
        EXPECT_NEAR(mean.overall.mape, avg.mape, 1e-9);
    }
}

TEST(Metrics, TableHasOneRowPerTargetAndAnOverallRow) {
    std::vector<dataset::Labels> truth{row(1), row(2), row(4)};
    const auto table = format_table(compute_metrics(truth, truth));
    EXPECT_NE(table.find("Weight (g)"), std::string::npos);
    EXPECT_NE(table.find("Tibia length (cm)"), std::string::npos);
    EXPECT_NE(table.find("Overall (All, pooled)"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 12);
    const auto j = report_to_json(compute_metrics(truth, truth, OverallMode::PerTargetMean));
    EXPECT_EQ(j["overall_mode"], "per_target_mean");
    EXPECT_EQ(j["targets"].size(), 8u);
}

TEST(Split, TenDucksGiveEightOneOne) {
    std::vector<std::string> ids;
    for (int d = 0; d < 10; ++d) ids.push_back("d" + std::to_string(d));
    const auto s = split_dataset(ids, {});
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.val.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
    std::vector<std::string> few(ids.begin(), ids.begin() + 9);
    EXPECT_THROW(split_dataset(few, {}), ArgumentError);
    SplitSpec bad;
    bad.test = 0.3;
    EXPECT_THROW(split_dataset(ids, bad), ConfigError);
}

TEST(Split, PartitionsAndKeepsDucksTogether) {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::string> ids;
        const std::size_t ducks = 10 + rng.below(200);
        for (std::size_t d = 0; d < ducks; ++d)
            for (std::size_t p = 0, n = 1 + rng.below(4); p < n; ++p) ids.push_back("duck" + std::to_string(d));
        rng.shuffle(ids.begin(), ids.end());
        SplitSpec spec;
        spec.seed = trial;
        const auto s = split_dataset(ids, spec);
        std::vector<std::size_t> all;
        for (const auto* v : {&s.train, &s.val, &s.test}) {
            EXPECT_TRUE(std::is_sorted(v->begin(), v->end()));
            all.insert(all.end(), v->begin(), v->end());
        }
        std::sort(all.begin(), all.end());
        ASSERT_EQ(all.size(), ids.size());
        for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
        std::set<std::string> a, b, c;
        for (auto i : s.train) a.insert(ids[i]);
        for (auto i : s.val) b.insert(ids[i]);
        for (auto i : s.test) c.insert(ids[i]);
        for (const auto& d : b) EXPECT_FALSE(a.count(d) || c.count(d));
        for (const auto& d : c) EXPECT_FALSE(a.count(d));
        EXPECT_EQ(b.size(), static_cast<std::size_t>(std::llround(0.1 * ducks)));
        const auto again = split_dataset(ids, spec);
        EXPECT_EQ(again.test, s.test);
    }
}

TEST(Split, UngroupedSplitsSamples) {
    std::vector<std::string> ids(20, "same");
    SplitSpec spec;
    spec.grouped = false;
    const auto s = split_dataset(ids, spec);
    EXPECT_EQ(s.train.size(), 16u);
    EXPECT_EQ(s.val.size(), 2u);
    EXPECT_THROW(split_dataset(ids, {}), ArgumentError);
}

TEST(Training, KeepsTheBestValidationEpoch) {
    const auto all = toy_samples(12, 2, 1);
    const std::vector<train::FusionSample> tr(all.begin(), all.begin() + 18), va(all.begin() + 18, all.end());
    std::vector<train::EpochLog> seen;
    const auto m = train::train_fusion(tr, va, tiny_model(), quick(6), [&](const auto& e) { seen.push_back(e); });
    ASSERT_EQ(m.curve.size(), 6u);
    EXPECT_EQ(seen.size(), 6u);
    const auto best = std::min_element(m.curve.begin(), m.curve.end(),
                                       [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
    EXPECT_EQ(m.best_epoch, best->epoch);
    EXPECT_EQ(m.best_val_loss, best->val_loss);

    // The returned parameters reproduce the best epoch's validation loss.
    double sum = 0;
    for (const auto& s : va) {
        const auto pred = m.predict(s);
        const auto y = m.label_scaler.transform(std::vector<double>(pred.begin(), pred.end()));
        const auto t = m.label_scaler.transform(std::vector<double>(s.labels.begin(), s.labels.end()));
        double se = 0;
        for (std::size_t k = 0; k < 8; ++k) se += (y[k] - t[k]) * (y[k] - t[k]);
        sum += se / 8;
    }
    EXPECT_NEAR(sum / va.size(), m.best_val_loss, 1e-5);
    EXPECT_LT(m.curve.back().train_loss, m.curve.front().train_loss);

    const auto csv = train::curve_csv(m.curve);
    EXPECT_EQ(csv.rfind("epoch,train_loss,val_loss\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Training, IsDeterministic) {
    const auto all = toy_samples(10, 2, 2);
    const std::vector<train::FusionSample> tr(all.begin(), all.begin() + 16), va(all.begin() + 16, all.end());
    const auto a = train::train_fusion(tr, va, tiny_model(), quick());
    const auto b = train::train_fusion(tr, va, tiny_model(), quick());
    for (std::size_t e = 0; e < a.curve.size(); ++e) {
        EXPECT_EQ(a.curve[e].train_loss, b.curve[e].train_loss);
        EXPECT_EQ(a.curve[e].val_loss, b.curve[e].val_loss);
    }
    EXPECT_EQ(a.predict(va[0]), b.predict(va[0]));
}

TEST(Training, CheckpointRoundTrip) {
    const auto all = toy_samples(10, 1, 3);
    const std::vector<train::FusionSample> tr(all.begin(), all.begin() + 8), va(all.begin() + 8, all.end());
    auto m = train::train_fusion(tr, va, tiny_model(), quick(2));
    m.info = {{"note", "round trip"}};
    const auto path = std::filesystem::temp_directory_path() / "duckmorph_fusion_test.ckpt";
    m.save(path);
    const auto back = train::TrainedFusion::load(path);
    std::filesystem::remove(path);
    for (const auto& s : va) EXPECT_EQ(m.predict(s), back.predict(s));
    EXPECT_EQ(back.best_epoch, m.best_epoch);
    EXPECT_EQ(back.curve.size(), m.curve.size());
    EXPECT_EQ(back.info["note"], "round trip");
    EXPECT_EQ(back.model.config().to_json(), m.model.config().to_json());
}

TEST(Training, RejectsBadSettings) {
    const auto all = toy_samples(2, 1, 4);
    EXPECT_THROW(train::train_fusion({all[0]}, {}, tiny_model(), quick()), ArgumentError);
    auto c = quick();
    c.epochs = 0;
    EXPECT_THROW(train::train_fusion(all, {}, tiny_model(), c), ConfigError);
    c = quick();
    c.learning_rate = 0;
    EXPECT_THROW(train::train_fusion(all, {}, tiny_model(), c), ConfigError);
}

TEST(Sweep, SubsetsAreNestedAndWholeDucks) {
    const auto all = toy_samples(20, 3, 5);
    const auto full = train::nested_subset(all, 1.0, 9);
    ASSERT_EQ(full.size(), all.size());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(full[i].sample_id, all[i].sample_id);
    std::set<std::string> prev;
    for (double f : {0.25, 0.5, 0.75}) {
        const auto sub = train::nested_subset(all, f, 9);
        std::set<std::string> ids, ducks;
        for (const auto& s : sub) {
            ids.insert(s.sample_id);
            ducks.insert(s.duck_id);
        }
        EXPECT_EQ(ducks.size(), static_cast<std::size_t>(std::ceil(f * 20)));
        EXPECT_EQ(sub.size(), 3 * ducks.size());
        EXPECT_TRUE(std::includes(ids.begin(), ids.end(), prev.begin(), prev.end()));
        prev = ids;
    }
    EXPECT_THROW(train::nested_subset(all, 0.0, 9), ArgumentError);
    EXPECT_THROW(train::nested_subset(all, 1.5, 9), ArgumentError);
}

TEST(Sweep, FullFractionMatchesPlainTraining) {
    const auto all = toy_samples(14, 1, 6);
    const std::vector<train::FusionSample> tr(all.begin(), all.begin() + 10), va(all.begin() + 10, all.begin() + 12),
        te(all.begin() + 12, all.end());
    const auto rows = train::dataset_size_sweep(tr, va, te, {0.5, 1.0}, tiny_model(), quick(2));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].train_samples, 5u);
    EXPECT_EQ(rows[1].train_samples, 10u);
    const auto plain = train::evaluate(train::train_fusion(tr, va, tiny_model(), quick(2)), te);
    EXPECT_EQ(rows[1].report.overall.r2, plain.overall.r2);
    EXPECT_EQ(rows[1].report.per_target[3].mape, plain.per_target[3].mape);
    EXPECT_THROW(train::dataset_size_sweep(tr, va, te, {}, tiny_model(), quick(2)), ArgumentError);
}
