#include "selfc/checkpoint.hpp"
#include "selfc/config.hpp"
#include "selfc/errors.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace selfc;
using selfc::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(KeyValueConfig, ParseCommentsAndOverrides) {
    auto kv = KeyValueConfig::parse("# header\n\n k = 2 \nlr=1e-3\nk = 4\n");
    EXPECT_EQ(kv.get("k"), "4");
    EXPECT_EQ(kv.get("lr"), "1e-3");
    EXPECT_FALSE(kv.get("seed").has_value());
    kv.set_override("seed=12");
    EXPECT_EQ(kv.get("seed"), "12");
    EXPECT_THROW(kv.set_override("novalue"), ConfigError);
    try {
        KeyValueConfig::parse("k = 2\nbroken line\n", "cfg.txt");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("cfg.txt:2"), std::string::npos);
    }
    EXPECT_THROW(KeyValueConfig::load("/nonexistent/selfc.cfg"), ConfigError);
}

TEST(TrainConfig, TaskDefaults) {
    auto rescale = TrainConfig::from(KeyValueConfig::parse("task = rescale"));
    EXPECT_EQ(rescale.k, 4);
    EXPECT_DOUBLE_EQ(rescale.weights.recons, 1.0);
    auto compress = TrainConfig::from(KeyValueConfig::parse("task = compress"));
    EXPECT_EQ(compress.task, Task::Compress);
    EXPECT_EQ(compress.k, 2);
    EXPECT_DOUBLE_EQ(compress.weights.recons, 0.1);
    EXPECT_EQ(compress.weights.k, 2);
    auto k2 = TrainConfig::from(KeyValueConfig::parse("k = 2\npatch = 32"));
    EXPECT_EQ(k2.weights.k, 2);
}

TEST(TrainConfig, TextRoundTrip) {
    auto cfg = TrainConfig::from(KeyValueConfig::parse(
        "task = compress\nlr = 0.000123456789\nseed = 77\ntrain_qualities = 11,21\nhf_mode = mean\n"
        "codec = mock\ntransform = plain\nlambda_c = 1e-6\ncorpus = /data/m.txt\nstp_attention = false\n"));
    const auto text = cfg.to_text();
    auto again = TrainConfig::from(KeyValueConfig::parse(text));
    EXPECT_EQ(again.to_text(), text);
    EXPECT_DOUBLE_EQ(again.lr, 0.000123456789);
    EXPECT_EQ(again.seed, 77u);
    EXPECT_EQ(again.train_qualities, (std::vector<int>{11, 21}));
    EXPECT_EQ(again.hf_mode, HfMode::Mean);
    EXPECT_EQ(again.transform, TransformKind::Plain);
    EXPECT_FALSE(again.stp_attention);
    EXPECT_EQ(again.corpus, "/data/m.txt");
}

TEST(TrainConfig, Rejections) {
    auto bad = [](const std::string& text) { return TrainConfig::from(KeyValueConfig::parse(text)); };
    EXPECT_THROW(bad("unknown_key = 1"), ConfigError);
    EXPECT_THROW(bad("k = 3"), ConfigError);
    EXPECT_THROW(bad("k = two"), ConfigError);
    EXPECT_THROW(bad("lr = -1"), ConfigError);
    EXPECT_THROW(bad("k = 4\npatch = 30"), ConfigError);
    EXPECT_THROW(bad("task = compress\nbatch_size = 1"), ConfigError);
    EXPECT_THROW(bad("codec_quality = 60"), ConfigError);
    EXPECT_THROW(bad("train_qualities = 11,99"), ConfigError);
    EXPECT_THROW(bad("hf_mode = random"), ConfigError);
    EXPECT_THROW(bad("augment = maybe"), ConfigError);
    EXPECT_THROW(bad("lambda_c_decay_fraction = 1.5"), ConfigError);
    EXPECT_THROW(bad("task = rescale-ish"), ConfigError);
}

TEST(TrainConfig, HalvingPeriodDefault) {
    auto cfg = TrainConfig::from(KeyValueConfig::parse("total_iters = 400"));
    EXPECT_EQ(cfg.halving_period(), 100);
    cfg.lr_halving_period = 7;
    EXPECT_EQ(cfg.halving_period(), 7);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    TempDir dir("ckpt");
    torch::manual_seed(0);
    Checkpoint ckpt;
    ckpt.iteration = 42;
    ckpt.config_text = "k = 2\n";
    ckpt.tensors = {{"a/float", torch::randn({3, 4})},
                    {"b/double", torch::randn({2, 1, 2}, torch::kFloat64)},
                    {"c/scalar", torch::tensor(5.5)},
                    {"d/long", torch::arange(6, torch::kLong).view({2, 3})},
                    {"e/noncontig", torch::randn({4, 3}).t()},
                    {"f/empty", torch::zeros({0, 3})}};
    save_checkpoint(ckpt, dir / "one");
    auto back = load_checkpoint(dir / "one");
    EXPECT_EQ(back.iteration, 42);
    EXPECT_EQ(back.config_text, "k = 2\n");
    ASSERT_EQ(back.tensors.size(), ckpt.tensors.size());
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        EXPECT_EQ(back.tensors[i].name, ckpt.tensors[i].name);
        EXPECT_EQ(back.tensors[i].value.scalar_type(), ckpt.tensors[i].value.scalar_type());
        EXPECT_TRUE(torch::equal(back.tensors[i].value, ckpt.tensors[i].value)) << ckpt.tensors[i].name;
    }
    ASSERT_NE(back.find("c/scalar"), nullptr);
    EXPECT_EQ(back.find("c/scalar")->dim(), 0);
    EXPECT_EQ(back.find("missing"), nullptr);
    save_checkpoint(back, dir / "two");
    for (const char* f : {"manifest.txt", "blob.bin", "config.txt"})
        EXPECT_EQ(slurp(dir / "one" / f), slurp(dir / "two" / f)) << f;
}

TEST(Checkpoint, CorruptionIsDetected) {
    TempDir dir("ckptbad");
    Checkpoint ckpt;
    ckpt.tensors = {{"w", torch::ones({8})}};
    save_checkpoint(ckpt, dir / "c");
    EXPECT_THROW(load_checkpoint(dir / "missing"), CheckpointError);

    std::filesystem::resize_file(dir / "c" / "blob.bin", 10);
    EXPECT_THROW(load_checkpoint(dir / "c"), CheckpointError);

    save_checkpoint(ckpt, dir / "c");
    auto manifest = slurp(dir / "c" / "manifest.txt");
    std::ofstream(dir / "c" / "manifest.txt") << "selfc-checkpoint 99\n" << manifest.substr(manifest.find('\n') + 1);
    EXPECT_THROW(load_checkpoint(dir / "c"), CheckpointError);

    std::ofstream(dir / "c" / "manifest.txt") << "garbage\n";
    EXPECT_THROW(load_checkpoint(dir / "c"), CheckpointError);
}
