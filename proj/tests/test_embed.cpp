#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prefmix/embed.hpp"

using namespace prefmix;
using prefmix::testing::error_code_of;
using prefmix::testing::random_unit;

namespace {

struct Planted {
    std::vector<Vector> vectors;
    std::vector<PairExample> train, val;
};

// Labels are the sign of a planted direction applied to the embedding difference.
Planted planted_examples(std::size_t n_train, std::size_t n_val, Eigen::Index dim, std::uint64_t seed,
                         bool shuffle_labels = false) {
    std::mt19937_64 rng(seed);
    const Vector u = random_unit(dim, rng);
    Planted p;
    const std::size_t n = n_train + n_val;
    p.vectors.reserve(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) p.vectors.push_back(random_unit(dim, rng));
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n; ++i) {
        const double gap = u.dot(p.vectors[2 * i] - p.vectors[2 * i + 1]);
        const int dir = gap >= 0 ? 1 : -1;
        labels.push_back(static_cast<Label>(dir * (std::abs(gap) > 0.3 ? 2 : 1)));
    }
    if (shuffle_labels) std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        PairExample ex{&p.vectors[2 * i], &p.vectors[2 * i + 1], labels[i]};
        (i < n_train ? p.train : p.val).push_back(ex);
    }
    return p;
}

} // namespace

TEST(Store, NormalizesOnLoad) {
    std::istringstream in("dim=2\na 3 4\nb 0 -2\n");
    const auto store = parse_embeddings(in);
    EXPECT_EQ(store.dim(), 2);
    EXPECT_NEAR(store.at("a")(0), 0.6, 1e-15);
    EXPECT_NEAR(store.at("a")(1), 0.8, 1e-15);
    EXPECT_NEAR(store.at("b").norm(), 1.0, 1e-12);
}

TEST(Store, DimensionMismatch) {
    EmbeddingStore store;
    store.add("a", Vector::Ones(8));
    EXPECT_EQ(error_code_of([&] { store.add("b", Vector::Ones(16)); }), ErrorCode::DimensionMismatch);
    std::istringstream in("dim=3\na 1 2\n");
    EXPECT_EQ(error_code_of([&] { parse_embeddings(in); }), ErrorCode::DimensionMismatch);
}

TEST(Store, ZeroVectorRejected) {
    EmbeddingStore store(3);
    EXPECT_EQ(error_code_of([&] { store.add("z", Vector::Zero(3)); }), ErrorCode::ZeroVector);
}

TEST(Store, ParseErrors) {
    std::istringstream no_header("a 1 2\n");
    EXPECT_EQ(error_code_of([&] { parse_embeddings(no_header); }), ErrorCode::ParseError);
    std::istringstream junk("dim=2\na 1 x\n");
    EXPECT_EQ(error_code_of([&] { parse_embeddings(junk); }), ErrorCode::ParseError);
}

TEST(Store, ValidateAgainstBank) {
    const auto bank = prefmix::testing::bank_from_table({{1, -1}});
    EmbeddingStore store(2);
    store.add("p000a", Vector::Ones(2));
    store.add("p000b", Vector::Ones(2));
    store.add("p001a", Vector::Ones(2));
    EXPECT_EQ(error_code_of([&] { store.validate_against(bank); }), ErrorCode::MissingScreen);
    store.add("p001b", Vector::Ones(2));
    EXPECT_NO_THROW(store.validate_against(bank));
    EXPECT_EQ(error_code_of([&] { store.for_screen(bank, "nope"); }), ErrorCode::UnknownScreen);
}

TEST(Store, FileRoundTripIsExact) {
    std::mt19937_64 rng(3);
    EmbeddingStore store(5);
    for (int i = 0; i < 10; ++i) store.add("s" + std::to_string(i), random_unit(5, rng));
    std::stringstream buf;
    write_embeddings(buf, store);
    const auto back = parse_embeddings(buf);
    ASSERT_EQ(back.size(), store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        // Re-normalizing an already unit vector may move the last bit.
        EXPECT_LE((back.vectors()[i] - store.vectors()[i]).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Adapter, ZeroAndIdentityResidualsPreserveInput) {
    std::mt19937_64 rng(1);
    const Vector z = random_unit(6, rng);
    auto adapter = ResidualAdapter::identity(6);
    EXPECT_LE((apply_adapter(adapter, z) - z).norm(), 1e-15);
    adapter.weight = Matrix::Identity(6, 6);
    EXPECT_LE((apply_adapter(adapter, z) - z).norm(), 1e-15);
}

TEST(Adapter, OutputIsUnitNorm) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 50; ++t) {
        auto adapter = ResidualAdapter::identity(8);
        for (auto& w : adapter.weight.reshaped()) w = 0.5 * normal(rng);
        EXPECT_NEAR(apply_adapter(adapter, random_unit(8, rng)).norm(), 1.0, 1e-12);
    }
    EXPECT_EQ(error_code_of([&] { apply_adapter(ResidualAdapter::identity(3), Vector::Ones(4)); }),
              ErrorCode::DimensionMismatch);
}

TEST(MarginLoss, ZeroParametersGiveScaledMargin) {
    std::mt19937_64 rng(4);
    const Vector l = random_unit(4, rng), r = random_unit(4, rng);
    const auto adapter = ResidualAdapter::identity(4);
    EXPECT_DOUBLE_EQ(pair_margin_loss(adapter, l, r, Label::LeftBetter).loss, 0.2);
    EXPECT_DOUBLE_EQ(pair_margin_loss(adapter, l, r, Label::RightMuchBetter).loss, 0.2 * 1.1);
}

TEST(MarginLoss, InactiveHingeHasZeroGradient) {
    Vector l(2), r(2);
    l << 1, 0;
    r << 0, 1;
    auto adapter = ResidualAdapter::identity(2);
    adapter.head << 5, 0;
    const auto out = pair_margin_loss(adapter, l, r, Label::LeftMuchBetter);
    EXPECT_EQ(out.loss, 0.0);
    EXPECT_EQ(out.grad_weight.norm(), 0.0);
    EXPECT_EQ(out.grad_head.norm(), 0.0);
    // Same pair, opposite label: the hinge is active.
    EXPECT_GT(pair_margin_loss(adapter, l, r, Label::RightBetter).loss, 0.0);
}

TEST(MarginLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> pick(0, 3);
    int checked = 0;
    for (int t = 0; t < 40; ++t) {
        ResidualAdapter adapter = ResidualAdapter::identity(5);
        for (auto& w : adapter.weight.reshaped()) w = 0.3 * normal(rng);
        for (auto& a : adapter.head) a = normal(rng);
        adapter.margin = 1.5;
        const Vector l = random_unit(5, rng), r = random_unit(5, rng);
        const Label label = kAllLabels[pick(rng)];
        const auto out = pair_margin_loss(adapter, l, r, label);
        if (out.loss < 1e-3) continue;
        const auto [gw, ga] = oracle::hinge_gradient_fd(adapter.weight, adapter.head, l, r, to_int(label),
                                                        adapter.margin, adapter.margin_multiplier, 1e-5);
        const double scale = std::max(gw.cwiseAbs().maxCoeff(), ga.cwiseAbs().maxCoeff());
        const double err = std::max((out.grad_weight - gw).cwiseAbs().maxCoeff(),
                                    (out.grad_head - ga).cwiseAbs().maxCoeff());
        EXPECT_LT(err / scale, 1e-4);
        ++checked;
    }
    EXPECT_GT(checked, 20);
}

TEST(TrainConfig, TableThreeDefaults) {
    TrainConfig c;
    EXPECT_EQ(c.learning_rate, 5e-4);
    EXPECT_EQ(c.weight_decay, 1e-2);
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.grad_clip, 1.0);
    EXPECT_EQ(c.patience, 5u);
    EXPECT_EQ(c.margin_multiplier, 1.1);
    EXPECT_EQ(c.t_max, 24);
    EXPECT_EQ(c.eta_min, 1e-4);
    EXPECT_EQ(c.max_epochs, 24u);
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.lr_at(0), 5e-4);
    EXPECT_DOUBLE_EQ(c.lr_at(24), 1e-4);
    EXPECT_NEAR(c.lr_at(12), 3e-4, 1e-15);
}

TEST(TrainConfig, RejectsNonPositive) {
    TrainConfig c;
    c.patience = 0;
    EXPECT_EQ(error_code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
    c = {};
    c.learning_rate = -1;
    EXPECT_EQ(error_code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
    c = {};
    c.batch_size = 0;
    EXPECT_EQ(error_code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Training, PlantedDirectionIsLearned) {
    const auto data = planted_examples(4000, 1000, 16, 9);
    const auto result = train_adapter(data.train, data.val, 16, TrainConfig{});
    EXPECT_GE(result.best_val_accuracy, 0.95);
    EXPECT_LE(result.history.size(), 24u);
    EXPECT_TRUE(result.adapter.finite());
}

TEST(Training, ShuffledLabelsStayNearChance) {
    const auto data = planted_examples(4000, 2000, 16, 10, true);
    const auto result = train_adapter(data.train, data.val, 16, TrainConfig{});
    const double acc = direction_accuracy(result.adapter, data.val);
    EXPECT_NEAR(acc, 0.5, 0.05);
}

TEST(Training, DeterministicForSeed) {
    const auto data = planted_examples(500, 200, 8, 11);
    TrainConfig c;
    c.seed = 3;
    const auto a = train_adapter(data.train, data.val, 8, c);
    const auto b = train_adapter(data.train, data.val, 8, c);
    EXPECT_EQ(a.adapter.weight, b.adapter.weight);
    EXPECT_EQ(a.adapter.head, b.adapter.head);
    EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST(Training, FullBatchLossNonIncreasing) {
    const auto data = planted_examples(300, 50, 6, 12);
    TrainConfig c;
    c.batch_size = 300;
    c.learning_rate = 1e-3;
    c.eta_min = 1e-3;
    c.max_epochs = 15;
    c.patience = 100;
    const auto result = train_adapter(data.train, {}, 6, c);
    for (std::size_t e = 1; e < result.history.size(); ++e) {
        EXPECT_LE(result.history[e].train_loss, result.history[e - 1].train_loss + 1e-12);
    }
}

TEST(Training, NonFiniteLossAborts) {
    const auto data = planted_examples(100, 10, 4, 13);
    TrainConfig c;
    c.margin = 1e308;
    EXPECT_EQ(error_code_of([&] { train_adapter(data.train, data.val, 4, c); }), ErrorCode::NonFiniteLoss);
    EXPECT_EQ(error_code_of([&] { train_adapter({}, data.val, 4, TrainConfig{}); }), ErrorCode::EmptyBank);
}

TEST(Checkpoint, RoundTrip) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> normal;
    auto adapter = ResidualAdapter::identity(4);
    for (auto& w : adapter.weight.reshaped()) w = normal(rng);
    for (auto& a : adapter.head) a = normal(rng);
    adapter.margin = 0.25;
    TrainConfig c;
    std::stringstream buf;
    write_adapter(buf, adapter, &c);
    EXPECT_NE(buf.str().find("learning_rate=0.0005"), std::string::npos);
    const auto back = read_adapter(buf);
    EXPECT_EQ(back.weight, adapter.weight);
    EXPECT_EQ(back.head, adapter.head);
    EXPECT_EQ(back.margin, 0.25);
    EXPECT_EQ(back.margin_multiplier, 1.1);

    std::istringstream bad("something else\n");
    EXPECT_EQ(error_code_of([&] { read_adapter(bad); }), ErrorCode::ParseError);
    std::istringstream truncated("prefmix-adapter v1\ndim=2\nW\n1 2\n");
    EXPECT_EQ(error_code_of([&] { read_adapter(truncated); }), ErrorCode::ParseError);
}
