#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "curvepose/curvnet.hpp"
#include "curvepose/errors.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace curvepose {
namespace {

std::vector<CropSample> random_set(const NetConfig& cfg, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> px(0.0f, 1.0f);
    std::uniform_real_distribution<float> dia(0.4f, 1.2f);
    std::vector<CropSample> out;
    for (int i = 0; i < n; ++i) {
        CropSample s{nn::Tensor<float>({cfg.input_channels, cfg.input_height, cfg.input_width}), dia(rng)};
        for (auto& v : s.input.data) v = px(rng);
        out.push_back(std::move(s));
    }
    return out;
}

TEST(NetConfig, ParameterCounts) {
    EXPECT_EQ(expected_parameter_count(NetConfig::small()), 189057u);
    EXPECT_EQ(expected_parameter_count(NetConfig::large()), 684865u);
    CurvNet small(NetConfig::small());
    CurvNet large(NetConfig::large());
    EXPECT_EQ(small.parameter_count(), 189057u);
    EXPECT_EQ(large.parameter_count(), 684865u);
}

TEST(NetConfig, FlattenSizes) {
    EXPECT_EQ(NetConfig::small().flatten_size(), 5 * 5 * 64);
    EXPECT_EQ(NetConfig::large().flatten_size(), 6 * 6 * 128);
}

TEST(NetConfig, FeatureChainOfSmallVariant) {
    CurvNetT<double> net(NetConfig::small());
    net.initialize(1);
    nn::Tensor<double> x({3, 60, 60}, 0.5);
    CurvNetT<double>::Cache cache;
    net.forward(x, cache);
    ASSERT_EQ(cache.conv_out.size(), 3u);
    EXPECT_EQ(cache.conv_out[0].shape, (std::vector<int>{32, 56, 56}));
    EXPECT_EQ(cache.conv_out[1].shape, (std::vector<int>{64, 26, 26}));
    EXPECT_EQ(cache.conv_out[2].shape, (std::vector<int>{64, 10, 10}));
    EXPECT_EQ(cache.flat.size(), 1600u);
    EXPECT_EQ(cache.embedding.size(), 64u);
}

TEST(NetConfig, ValidationRejectsAlteredLayouts) {
    EXPECT_NO_THROW(NetConfig::small().validate());
    EXPECT_NO_THROW(NetConfig::large().validate());
    NetConfig c = NetConfig::small();
    c.conv_kernels[1] = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig::small();
    c.huber_delta = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.loss = LossKind::Mse;
    EXPECT_NO_THROW(c.validate());
    EXPECT_THROW(parse_variant("medium"), ConfigError);
    EXPECT_THROW(parse_loss("l1"), ConfigError);
    EXPECT_EQ(parse_variant("large"), NetVariant::Large);
    EXPECT_EQ(parse_loss("mse"), LossKind::Mse);
}

TEST(CurvNet, WholeNetworkGradient) {
    int skipped = 0;
    EXPECT_LE(gradcheck::network(2, 11, 6, &skipped), 1e-4);
    EXPECT_LE(skipped, 12);
}

TEST(CurvNet, ZeroedHeadOutputsBias) {
    CurvNet net(NetConfig::small());
    net.initialize(3);
    auto& params = net.parameters();
    std::fill(params[8].data.begin(), params[8].data.end(), 0.0f);
    params[9][0] = 0.731f;
    for (const auto& s : random_set(net.config(), 3, 5)) {
        EXPECT_FLOAT_EQ(net.forward(s.input), 0.731f);
    }
}

TEST(CurvNet, InitialisationIsSeeded) {
    CurvNet a(NetConfig::small()), b(NetConfig::small()), c(NetConfig::small());
    a.initialize(9);
    b.initialize(9);
    c.initialize(10);
    EXPECT_EQ(a.parameters()[0].data, b.parameters()[0].data);
    EXPECT_NE(a.parameters()[0].data, c.parameters()[0].data);
    for (float v : a.parameters()[1].data) EXPECT_EQ(v, 0.0f);
    const float limit = std::sqrt(6.0f / (3 * 25));
    for (float v : a.parameters()[0].data) EXPECT_LE(std::abs(v), limit);
}

TEST(CurvNet, WrongInputShapeThrows) {
    CurvNet net(NetConfig::small());
    EXPECT_THROW(net.forward(nn::Tensor<float>({3, 64, 64})), ShapeError);
}

TEST(Preprocess, ContextBoxIsCentredSquare) {
    const BBox b = context_box({10, 20, 40, 30});
    EXPECT_DOUBLE_EQ(b.w, kCropContext * 40);
    EXPECT_DOUBLE_EQ(b.h, b.w);
    EXPECT_DOUBLE_EQ(b.x + 0.5 * b.w, 30.0);
    EXPECT_DOUBLE_EQ(b.y + 0.5 * b.h, 35.0);
}

TEST(Preprocess, OutsideOfImageIsBlack) {
    const RgbImage white(100, 80, Rgb{255, 255, 255});
    const NetConfig cfg = NetConfig::small();
    const auto centred = preprocess_crop(white, {40, 30, 20, 20}, cfg);
    for (float v : centred.data) EXPECT_FLOAT_EQ(v, 1.0f);
    // Box at the left edge: the left part of the context crop is off-image.
    const auto edge = preprocess_crop(white, {0, 30, 20, 20}, cfg);
    EXPECT_FLOAT_EQ(edge[30 * 60 + 0], 0.0f);
    EXPECT_FLOAT_EQ(edge[30 * 60 + 59], 1.0f);
    EXPECT_EQ(edge.shape, (std::vector<int>{3, 60, 60}));
    EXPECT_THROW(preprocess_crop(white, {10, 10, 0, 5}, cfg), ShapeError);
    EXPECT_THROW(preprocess_crop(white, {500, 500, 10, 10}, cfg), ShapeError);
}

TEST(EarlyStopping, StopsAfterPatienceWithoutImprovement) {
    EarlyStopping s(4);
    const std::vector<double> losses{1.0, 0.9, 0.95, 0.96, 0.97, 0.98};
    for (std::size_t i = 0; i + 1 < losses.size(); ++i) EXPECT_FALSE(s.update(losses[i]));
    EXPECT_TRUE(s.update(losses.back()));
    EXPECT_EQ(s.epochs_seen(), 6);
    EXPECT_EQ(s.best_epoch(), 2);
    EXPECT_DOUBLE_EQ(s.best_loss(), 0.9);
}

TEST(EarlyStopping, NeverStopsWhileImproving) {
    EarlyStopping s(4);
    for (int e = 0; e < 50; ++e) EXPECT_FALSE(s.update(1.0 / (e + 1)));
    EXPECT_EQ(s.best_epoch(), 50);
    EXPECT_THROW(EarlyStopping(0), ConfigError);
}

TEST(EarlyStopping, EqualLossIsNotAnImprovement) {
    EarlyStopping s(2);
    s.update(0.5);
    EXPECT_FALSE(s.update(0.5));
    EXPECT_FALSE(s.improved());
    EXPECT_TRUE(s.update(0.5));
    EXPECT_EQ(s.best_epoch(), 1);
}

TEST(Training, SmallStepDecreasesLoss) {
    CurvNet net(NetConfig::small());
    net.initialize(21);
    const auto set = random_set(net.config(), 8, 22);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.batch_size = 8;
    cfg.adam.learning_rate = 1e-5;
    const double before = evaluate_losses(net, set).val_huber;
    const TrainResult r = train(net, set, set, cfg);
    EXPECT_LT(r.history.at(0).val_huber, before);
}

TEST(Training, DeterministicAndHistoryConsistent) {
    CurvNet net(NetConfig::small());
    net.initialize(31);
    const auto tr = random_set(net.config(), 24, 32);
    const auto va = random_set(net.config(), 6, 33);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 5;
    cfg.seed = 4;
    const TrainResult a = train(net, tr, va, cfg);
    const TrainResult b = train(net, tr, va, cfg);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].val_huber, b.history[i].val_huber);
        EXPECT_EQ(a.history[i].train_mse, b.history[i].train_mse);
        EXPECT_EQ(a.history[i].epoch, static_cast<int>(i) + 1);
    }
    for (std::size_t p = 0; p < a.best_net.parameters().size(); ++p) {
        EXPECT_EQ(a.best_net.parameters()[p].data, b.best_net.parameters()[p].data);
    }
    double best = 1e300;
    int best_epoch = 0;
    for (const auto& h : a.history) {
        if (h.val_huber < best) {
            best = h.val_huber;
            best_epoch = h.epoch;
        }
    }
    EXPECT_EQ(a.best_epoch, best_epoch);
    EXPECT_DOUBLE_EQ(evaluate_losses(a.best_net, va).val_huber, best);
}

TEST(Training, DivergenceNamesTheEpoch) {
    CurvNet net(NetConfig::small());
    net.initialize(41);
    auto set = random_set(net.config(), 4, 42);
    set[2].target = std::numeric_limits<float>::infinity();
    TrainConfig cfg;
    cfg.max_epochs = 2;
    try {
        train(net, set, set, cfg);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    }
}

TEST(Training, RejectsBadConfig) {
    CurvNet net(NetConfig::small());
    const auto set = random_set(net.config(), 2, 1);
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(train(net, set, set, cfg), ConfigError);
    EXPECT_THROW(train(net, set, {}, TrainConfig{}), ConfigError);
}

TEST(ModelFile, RoundTrip) {
    testutil::TempDir dir("curvnet");
    for (const auto& cfg : {NetConfig::small(), NetConfig::large()}) {
        CurvNet net(cfg);
        net.initialize(51);
        const auto path = dir.path() / (to_string(cfg.variant) + ".bin");
        save_model(net, path);
        EXPECT_EQ(std::filesystem::file_size(path) % 4, 0u);
        const CurvNet back = load_model(path);
        EXPECT_EQ(back.config().variant, cfg.variant);
        for (std::size_t p = 0; p < net.parameters().size(); ++p) {
            EXPECT_EQ(back.parameters()[p].data, net.parameters()[p].data);
        }
    }
}

TEST(ModelFile, CorruptFilesThrow) {
    testutil::TempDir dir("curvnet");
    CurvNet net(NetConfig::small());
    net.initialize(1);
    const auto good = dir.path() / "m.bin";
    save_model(net, good);

    const auto truncated = dir.path() / "t.bin";
    std::filesystem::copy_file(good, truncated);
    std::filesystem::resize_file(truncated, std::filesystem::file_size(good) - 7);
    EXPECT_THROW(load_model(truncated), IoError);

    const auto garbage = dir.path() / "g.bin";
    std::ofstream(garbage) << "not a model";
    EXPECT_THROW(load_model(garbage), IoError);
    EXPECT_THROW(load_model(dir.path() / "missing.bin"), IoError);
}

TEST(History, CsvHeaderAndRows) {
    testutil::TempDir dir("curvnet");
    const auto path = dir.path() / "h.csv";
    write_history_csv({{1, 0.5, 0.4, 0.3, 0.2}, {2, 0.25, 0.2, 0.15, 0.1}}, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,train_huber,val_huber,train_mse,val_mse");
    std::getline(in, line);
    EXPECT_EQ(line, "1,0.5,0.4,0.3,0.2");
    int rows = 1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2);
}

}  // namespace
}  // namespace curvepose
