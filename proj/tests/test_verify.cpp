#include <gtest/gtest.h>

#include <sstream>

#include "synnet/verify.hpp"

using namespace synnet;

TEST(FiniteDiff, SumGivesOnes) {
    RngStream rng(1);
    const auto x = tensor_random<double>(Shape4{1, 2, 3, 3}, rng, 1.0);
    const auto g = finite_diff([](const Tensor<double>& t) { return sum(t); }, x);
    for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiff, HalfSquaredNormGivesInput) {
    RngStream rng(2);
    const auto x = tensor_random<double>(Shape4{1, 1, 4, 4}, rng, 1.0);
    const auto g = finite_diff([](const Tensor<double>& t) { return 0.5 * dot(t, t); }, x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(g[i], x[i], 1e-9);
}

TEST(FiniteDiff, AgreesWithAnalyticL2) {
    RngStream rng(3);
    const auto p = tensor_random<double>(Shape4{2, 1, 5, 5}, rng, 1.0);
    const auto t = tensor_random<double>(Shape4{2, 1, 5, 5}, rng, 1.0);
    const auto num = finite_diff([&](const Tensor<double>& x) { return l2_loss(x, t).value; }, p);
    EXPECT_LE(relative_error(l2_loss(p, t).grad, num), 1e-7);
}

TEST(FiniteDiff, NonFiniteObjectiveRejected) {
    const Tensor<double> x(Shape4{1, 1, 1, 1}, 0.0);
    EXPECT_THROW(finite_diff([](const Tensor<double>& t) { return std::log(t[0]); }, x), ParameterError);
    EXPECT_THROW(finite_diff([](const Tensor<double>& t) { return t[0]; }, x, 0.0), ParameterError);
}

TEST(RelativeError, NormalizesByLargestMagnitude) {
    const Tensor<double> a(Shape4{1, 1, 1, 2}, std::vector<double>{1.0, 0.0});
    const Tensor<double> b(Shape4{1, 1, 1, 2}, std::vector<double>{1.0, 1e-6});
    EXPECT_NEAR(relative_error(a, b), 1e-6 / 2.0, 1e-18);
    const Tensor<double> z(Shape4{1, 1, 1, 2}, 0.0);
    EXPECT_EQ(relative_error(z, z), 0.0);
}

TEST(ConvOracle, HandExample) {
    const Tensor<double> x(Shape4{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor<double> w(Shape4{1, 1, 3, 3});
    w(0, 0, 1, 2) = 1.0;  // picks the right neighbour
    const Tensor<double> b(Shape4{1, 1, 1, 1}, 0.5);
    const auto y = conv_oracle(x, w, b);
    EXPECT_EQ(y[0], 2.5);
    EXPECT_EQ(y[1], 0.5);
    EXPECT_EQ(y[2], 4.5);
    EXPECT_EQ(y[3], 0.5);
}

TEST(PoolOracle, FirstMaximumWins) {
    const Tensor<double> x(Shape4{1, 1, 2, 2}, std::vector<double>{1, 3, 3, 0});
    const auto [v, off] = maxpool_oracle(x);
    EXPECT_EQ(v[0], 3.0);
    ASSERT_EQ(off.size(), 1u);
    EXPECT_EQ(off[0], 1);
}

class Suite : public ::testing::Test {
protected:
    static void SetUpTestSuite() { report = new GradcheckReport(gradcheck_suite(7)); }
    static void TearDownTestSuite() {
        delete report;
        report = nullptr;
    }
    static GradcheckReport* report;
};

GradcheckReport* Suite::report = nullptr;

TEST_F(Suite, AllChecksPass) {
    std::ostringstream os;
    print_report(os, *report);
    EXPECT_TRUE(report->all_pass()) << os.str();
    EXPECT_GE(report->entries.size(), 12u);
    for (const char* name : {"conv3x3.input", "batchnorm.input", "maxpool2x2", "ssim.local", "model.mimo.depth2"}) {
        EXPECT_NE(report->find(name), nullptr) << name;
    }
}

TEST_F(Suite, ReportFormat) {
    std::ostringstream os;
    print_report(os, *report);
    EXPECT_NE(os.str().find("PASS conv3x3.weight"), std::string::npos);
    EXPECT_NE(os.str().find("all passed"), std::string::npos);
}

TEST(SuiteHooks, CorruptedConvGradientIsCaught) {
    GradcheckHooks hooks;
    hooks.conv_backward = [](Tensor<double>&, ConvGrads<double>& g) {
        for (double& v : g.weight.data()) v *= 1.01;
    };
    const auto r = gradcheck_suite(7, hooks);
    EXPECT_FALSE(r.all_pass());
    ASSERT_NE(r.find("conv3x3.weight"), nullptr);
    EXPECT_FALSE(r.find("conv3x3.weight")->pass);
    EXPECT_TRUE(r.find("conv3x3.input")->pass);
    EXPECT_TRUE(r.find("relu")->pass);
}
