#include <gtest/gtest.h>

#include <filesystem>

#include "synnet/persist.hpp"

using namespace synnet;

namespace {

RunConfig small_config(const std::string& extra = {}) {
    return parse_config("depth = 2\nchannels = 4, 6\nhead_width = 4\nseed = 5\n" + extra);
}

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, EmptyTextGivesDefaults) {
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.topology, Topology{});
    EXPECT_EQ(c.train, TrainConfig{});
    EXPECT_EQ(c.train.lambda.l2, 10.0);
    EXPECT_EQ(c.train.lambda.ssim, 5.0);
    EXPECT_EQ(c.train.lambda.tv, 0.5);
    EXPECT_EQ(c.train.lambda.wd, 1e-4);
    EXPECT_EQ(c.train.batch_size, 32u);
    EXPECT_EQ(c.train.edge_beta, 4.0);
}

TEST(Config, OverridesAndComments) {
    const RunConfig c = parse_config("# a comment\n  lr = 0.05  \n\nloss = weighted_l2\nssim_mode = global\n");
    EXPECT_EQ(c.train.lr, 0.05);
    EXPECT_EQ(c.train.loss, LossKind::WeightedL2);
    EXPECT_EQ(c.train.ssim.mode, SsimMode::Global);
    EXPECT_EQ(c.train.momentum, 0.9);
}

TEST(Config, MimoDefaultsModalities) {
    const RunConfig c = parse_config("topology = mimo\n");
    EXPECT_EQ(c.topology.kind, TopologyKind::Mimo);
    EXPECT_EQ(c.train.input_modalities, (std::vector<std::string>{"t1", "t1c"}));
    EXPECT_EQ(c.train.output_modalities, (std::vector<std::string>{"t2", "flair"}));
    const RunConfig m = parse_config("topology = miso\noutput_modalities = flair\n");
    EXPECT_EQ(m.train.input_modalities.size(), 2u);
    EXPECT_EQ(m.train.output_modalities, std::vector<std::string>{"flair"});
}

TEST(Config, ErrorsNameTheLine) {
    EXPECT_NE(error_of("lr = 0.1\nbogus = 3\n").find("line 2"), std::string::npos);
    EXPECT_NE(error_of("lr = fast\n").find("line 1"), std::string::npos);
    EXPECT_NE(error_of("\n\nepochs = -1\n").find("line 3"), std::string::npos);
    EXPECT_FALSE(error_of("no equals sign\n").empty());
    EXPECT_FALSE(error_of("topology = siso\ninput_modalities = t1, t2\n").empty());
    EXPECT_FALSE(error_of("input_modalities = pd\n").empty());
    EXPECT_FALSE(error_of("depth = 2\n").empty());  // channel list length
}

TEST(Config, PrintParseRoundTrip) {
    RunConfig c = small_config("topology = mimo\nmimo_skip = matched\nlr = 0.1234567890123\nloss = l2\n");
    c.train.ssim = SsimConfig::for_range(2.0, SsimMode::Local, 5);
    const RunConfig back = parse_config(print_config(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(print_config(back), print_config(c));
}

TEST(Checkpoint, FloatAndDoubleRoundTrip) {
    Checkpoint cp;
    cp.kind = TopologyKind::Miso;
    cp.channels = {4, 6};
    RngStream rng(1);
    cp.tensors.push_back({"a", tensor_random<float>(Shape4{2, 3, 3, 3}, rng, 1.0)});
    cp.tensors.push_back({"b", tensor_random<double>(Shape4{1, 1, 1, 5}, rng, 1.0)});
    cp.config_text = "topology = miso\n";
    const auto back = deserialize_checkpoint(serialize_checkpoint(cp));
    EXPECT_EQ(back.kind, TopologyKind::Miso);
    EXPECT_EQ(back.channels, cp.channels);
    ASSERT_EQ(back.tensors.size(), 2u);
    EXPECT_TRUE(std::get<Tensor<float>>(back.tensors[0].value) == std::get<Tensor<float>>(cp.tensors[0].value));
    EXPECT_TRUE(std::get<Tensor<double>>(back.tensors[1].value) == std::get<Tensor<double>>(cp.tensors[1].value));
    EXPECT_EQ(back.config_text, cp.config_text);
    EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(cp));
}

TEST(Checkpoint, CorruptBytesRejected) {
    Checkpoint cp;
    cp.channels = {4};
    cp.tensors.push_back({"w", Tensor<float>(Shape4{1, 1, 2, 2}, 1.0f)});
    const std::string bytes = serialize_checkpoint(cp);
    EXPECT_EQ(bytes.substr(0, 8), "SYNNETCK");

    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad), LoadError);

    try {
        deserialize_checkpoint(bytes.substr(0, bytes.size() - 12));
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
        EXPECT_NE(msg.find("byte offset"), std::string::npos) << msg;
    }
    try {
        deserialize_checkpoint(bytes.substr(0, 10));
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    }
    EXPECT_THROW(deserialize_checkpoint(bytes + "x"), LoadError);
}

TEST(Checkpoint, RestoreReproducesPredictions) {
    const RunConfig cfg = small_config("topology = mimo\nepochs = 1\nbatch_size = 2\n");
    auto run = fresh_run<float>(cfg);
    const auto ds = generate_dataset<float>(4, 16, 16, 9);
    std::vector<std::size_t> idx{0, 1, 2, 3};
    train<float>(run.model, run.params, *run.state, ds, idx, cfg.train);

    const auto dir = std::filesystem::temp_directory_path() / "synnet_persist_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "m.ck", make_checkpoint(cfg, run.params, &*run.state));
    const auto back = restore_checkpoint<float>(load_checkpoint(dir / "m.ck"));

    EXPECT_EQ(back.config, cfg);
    EXPECT_TRUE(back.params == run.params);
    ASSERT_TRUE(back.state.has_value());
    EXPECT_EQ(back.state->iteration, 2u);
    EXPECT_EQ(back.state->epoch, 1u);
    EXPECT_TRUE(back.state->velocity == run.state->velocity);

    std::vector<Tensor<float>> in{ds.samples[3].at("t1"), ds.samples[3].at("t1c")};
    const auto a = predict<float>(run.model, run.params, in);
    const auto b = predict<float>(back.model, back.params, in);
    for (std::size_t h = 0; h < 2; ++h) EXPECT_TRUE(a[h] == b[h]);
}

TEST(Checkpoint, WeightsOnlyHasNoState) {
    const RunConfig cfg = small_config();
    auto run = fresh_run<double>(cfg);
    const auto back = restore_checkpoint<double>(make_checkpoint<double>(cfg, run.params, nullptr));
    EXPECT_FALSE(back.state.has_value());
    EXPECT_THROW(restore_checkpoint<float>(make_checkpoint<double>(cfg, run.params, nullptr)), LoadError);
}

TEST(Checkpoint, TopologyMustMatchConfigEcho) {
    const RunConfig cfg = small_config();
    auto run = fresh_run<float>(cfg);
    auto cp = make_checkpoint<float>(cfg, run.params, nullptr);
    cp.kind = TopologyKind::Mimo;
    EXPECT_THROW(restore_checkpoint<float>(cp), LoadError);
}
