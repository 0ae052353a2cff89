#include "leakaudit/attacker.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace leakaudit;

namespace {

std::vector<Gender> alternating(std::size_t n) {
    std::vector<Gender> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = i % 2 ? Gender::W : Gender::M;
    return g;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

AttackSources sources_from(const Matrix& x, const std::vector<Gender>& g) {
    const Eigen::Index half = x.rows() / 2;
    AttackSources s;
    s.train_inputs = x.topRows(half);
    s.train_genders.assign(g.begin(), g.begin() + half);
    s.eval_inputs = x.bottomRows(x.rows() - half);
    s.eval_genders.assign(g.begin() + half, g.end());
    return s;
}

AttackerConfig fast_config() {
    AttackerConfig c;
    c.epochs = 15;
    c.hidden_dim = 64;
    c.rounds = 3;
    return c;
}

}  // namespace

TEST(Attacker, IndependentInputsNearChance) {
    const auto g = alternating(5000);
    const Matrix train = gaussian(1000, 6, 1);
    const Matrix dev = gaussian(4000, 6, 2);
    const std::vector<Gender> tg(g.begin(), g.begin() + 1000), dg(g.begin() + 1000, g.end());
    const auto a = train_attacker(train, tg, dev, dg, fast_config(), 7);
    EXPECT_NEAR(100.0 * a.best_dev_accuracy, 50.0, 3.0);
}

TEST(Attacker, OneHotGenderSeparable) {
    const auto g = alternating(2000);
    Matrix x = Matrix::Zero(2000, 2);
    for (std::size_t i = 0; i < g.size(); ++i) x(static_cast<Eigen::Index>(i), index_of(g[i])) = 1.0;
    AttackerConfig c;
    // eval mode needs the running stats (momentum 0.1) to settle, ~12 epochs of 8 steps
    c.epochs = 15;
    const std::vector<Gender> tg(g.begin(), g.begin() + 1000), dg(g.begin() + 1000, g.end());
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto a = train_attacker(x.topRows(1000), tg, x.bottomRows(1000), dg, c, seed);
        EXPECT_GE(a.best_dev_accuracy, 0.98) << seed;
    }
}

TEST(Attacker, ConstantInputIsChance) {
    const auto g = alternating(3000);
    const Matrix x = Matrix::Constant(3000, 4, 0.7);
    const auto e = estimate_leakage(sources_from(x, g), fast_config(), 5);
    for (double r : e.per_round) EXPECT_NEAR(r, 50.0, 1e-9);
}

TEST(Attacker, RoundsBitDeterministic) {
    const auto g = alternating(3000);
    Matrix x = gaussian(3000, 5, 4);
    for (std::size_t i = 0; i < g.size(); ++i) x(static_cast<Eigen::Index>(i), 0) += g[i] == Gender::M ? 0.5 : -0.5;
    const auto s = sources_from(x, g);
    const auto a = estimate_leakage(s, fast_config(), 9);
    const auto b = estimate_leakage(s, fast_config(), 9);
    EXPECT_EQ(a.per_round, b.per_round);
    EXPECT_EQ(a.per_round.size(), 3u);
    const auto c = LeakageEstimate::from_rounds(a.per_round);
    EXPECT_EQ(c.mean, a.mean);
    EXPECT_EQ(c.std, a.std);
    // a 1-sd mean shift is worth about 69% to the Bayes classifier
    EXPECT_GT(a.mean, 62.0);
    EXPECT_LT(a.mean, 73.0);
}

TEST(Attacker, LogitStandardizationAbsorbsAffineScale) {
    const auto g = alternating(3000);
    Matrix x = gaussian(3000, 5, 8);
    for (std::size_t i = 0; i < g.size(); ++i) x(static_cast<Eigen::Index>(i), 1) += g[i] == Gender::M ? 0.8 : -0.8;
    AttackerConfig c = fast_config();
    c.input_kind = InputKind::logits;
    Matrix scaled = x;
    scaled.col(1) = scaled.col(1) * 40.0 + Vector::Constant(3000, 7.0);
    scaled.col(3) *= 0.01;
    const auto a = estimate_leakage(sources_from(x, g), c, 1);
    const auto b = estimate_leakage(sources_from(scaled, g), c, 1);
    EXPECT_NEAR(a.mean, b.mean, 1.0);
}

TEST(Attacker, PoolScaling) {
    const auto g = alternating(600);
    const auto s = sources_from(gaussian(600, 3, 1), g);
    AttackerConfig c = fast_config();
    const PoolSizes p = resolve_pools(s, c);
    // 150 per gender per source: train limited to 150/500, eval to 150/500
    EXPECT_DOUBLE_EQ(p.scale, 0.3);
    EXPECT_EQ(p.train_n_per_gender, 150);
    EXPECT_EQ(p.eval_n_per_gender, 75);
    c.scale_pools = false;
    EXPECT_THROW(resolve_pools(s, c), std::invalid_argument);
}

TEST(Attacker, InputErrors) {
    const auto g = alternating(100);
    AttackerConfig c = fast_config();
    EXPECT_THROW(train_attacker(gaussian(100, 3, 1), g, gaussian(100, 4, 2), g, c, 1), std::invalid_argument);
    EXPECT_THROW(train_attacker(Matrix(0, 3), {}, gaussian(100, 3, 2), g, c, 1), std::invalid_argument);
    c.n_layers = 0;
    EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Attacker, LayerCountMapsToBlocks) {
    EXPECT_EQ(attacker_blocks(1), 0);
    EXPECT_EQ(attacker_blocks(2), 2);
    EXPECT_EQ(attacker_blocks(4), 4);
    const auto g = alternating(200);
    AttackerConfig c = fast_config();
    c.epochs = 1;
    c.n_layers = 1;
    EXPECT_EQ(train_attacker(gaussian(200, 3, 1), g, gaussian(200, 3, 2), g, c, 1).model.layer_count(), 1u);
    c.n_layers = 4;
    // four [linear, batchnorm, leakyrelu] blocks and the head
    EXPECT_EQ(train_attacker(gaussian(200, 3, 1), g, gaussian(200, 3, 2), g, c, 1).model.layer_count(), 13u);
}

TEST(Attacker, AblationSharesPools) {
    const auto g = alternating(2400);
    Matrix x = gaussian(2400, 4, 3);
    for (std::size_t i = 0; i < g.size(); ++i) x(static_cast<Eigen::Index>(i), 2) += g[i] == Gender::M ? 1.0 : -1.0;
    AttackerConfig c = fast_config();
    c.rounds = 1;
    c.epochs = 60;
    const std::vector<AttackerVariant> grid{{2, 64, 1.0}, {3, 64, 1.0}, {3, 64, 0.5}};
    const auto res = robustness_ablation(sources_from(x, g), c, grid, 4);
    ASSERT_EQ(res.size(), 3u);
    // Bayes accuracy of a 1-sd shift on one coordinate: Phi(1) = 84.1%
    for (const auto& v : res) EXPECT_NEAR(v.estimate.mean, 84.1, 5.0);
    EXPECT_EQ(res[1].estimate.pools.train_n_per_gender, res[2].estimate.pools.train_n_per_gender);
    EXPECT_EQ(default_ablation_grid().size(), 7u);
}
