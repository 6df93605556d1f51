#include <gtest/gtest.h>

#include "support/gradient_suite.hpp"

using namespace duckmorph;
using namespace duckmorph::testing;

TEST(GradientCheck, EveryDifferentiableOpMatchesFiniteDifferences) {
    for (const auto& c : gradient_suite()) {
        for (int seed = 0; seed < kGradSeeds; ++seed) {
            const double err = c.max_error(static_cast<std::uint64_t>(seed) + 1);
            EXPECT_LT(err, c.tolerance) << c.name << " seed " << seed;
        }
    }
}

// The float32 instantiation runs the same code as the double one used by
// the finite-difference checks; its analytic gradients must agree.
TEST(GradientCheck, Float32PathAgreesWithFloat64) {
    Rng rng(21);
    tensor::EncoderLayer<double> dlayer(8, 2, 4, rng);
    Rng rng_f(21);
    tensor::EncoderLayer<float> flayer(8, 2, 4, rng_f);
    tensor::ParameterList<double> dp;
    tensor::ParameterList<float> fp;
    dlayer.collect("e", dp);
    flayer.collect("e", fp);
    ASSERT_EQ(dp.size(), fp.size());
    Rng data(5);
    std::vector<double> xv(5 * 8), w(5 * 8);
    for (auto& e : xv) e = data.uniform(-1, 1);
    for (auto& e : w) e = data.uniform(-1, 1);
    std::vector<float> xf(xv.begin(), xv.end()), wf(w.begin(), w.end());
    auto xd = tensor::BasicTensor<double>::from_data({5, 8}, xv, true);
    auto xff = tensor::Tensor::from_data({5, 8}, xf, true);
    tensor::dot_const(dlayer(xd), std::span<const double>(w)).backward();
    tensor::dot_const(flayer(xff), std::span<const float>(wf)).backward();
    for (std::size_t i = 0; i < dp.size(); ++i) {
        double diff = 0, norm = 0;
        for (std::size_t j = 0; j < dp[i].tensor.numel(); ++j) {
            const double a = dp[i].tensor.grad()[j], b = fp[i].tensor.grad()[j];
            diff += (a - b) * (a - b);
            norm += a * a;
        }
        EXPECT_LT(std::sqrt(diff), 1e-4 * std::max(1.0, std::sqrt(norm))) << dp[i].name;
    }
}
