#include "cdn/model_io.hpp"
#include "cdn/random.hpp"
#include "cdn/readout.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

namespace cdn {
namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0)
{
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

std::vector<std::string> labels_for(std::size_t k)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back("c" + std::to_string(i));
    return out;
}

// Two Gaussian blobs per class around well-separated centres, leading 1 column.
struct Blobs {
    Matrix rows;
    std::vector<std::size_t> labels;
};

Blobs make_blobs(std::uint64_t seed, std::size_t k, std::size_t per_class, Eigen::Index dim, double spread)
{
    Rng rng(seed);
    const Matrix centres = random_matrix(rng, static_cast<Eigen::Index>(k), dim, 3.0);
    Blobs b;
    b.rows.resize(static_cast<Eigen::Index>(k * per_class), dim + 1);
    Eigen::Index r = 0;
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < per_class; ++i, ++r) {
            b.rows(r, 0) = 1.0;
            for (Eigen::Index j = 0; j < dim; ++j)
                b.rows(r, 1 + j) = centres(static_cast<Eigen::Index>(c), j) + spread * rng.normal();
            b.labels.push_back(c);
        }
    return b;
}

TEST(Score, ZeroModelGivesZeroScores)
{
    const ReadoutModel m{Matrix::Zero(3, 5), labels_for(3)};
    EXPECT_TRUE(score(m, Vector::Ones(5)).isZero(0.0));
}

TEST(Score, RowSelectorCopiesEntries)
{
    Matrix w = Matrix::Zero(2, 4);
    w(0, 3) = 1.0;
    w(1, 1) = 1.0;
    Vector s(4);
    s << 1.0, 7.5, -2.0, 0.125;
    const auto y = score(ReadoutModel{w, labels_for(2)}, s);
    EXPECT_EQ(y(0), 0.125);
    EXPECT_EQ(y(1), 7.5);
}

TEST(Score, MatchesNaiveProduct)
{
    Rng rng(21);
    const Matrix w = random_matrix(rng, 3, 11);
    const Vector s = random_matrix(rng, 11, 1);
    const Vector y = score(ReadoutModel{w, labels_for(3)}, PooledState{s, 4});
    const Vector naive = oracle::naive_matvec(w, s);
    EXPECT_LE((y - naive).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Score, IsLinear)
{
    Rng rng(5);
    const ReadoutModel m{random_matrix(rng, 4, 9), labels_for(4)};
    const Vector p = random_matrix(rng, 9, 1);
    const Vector q = random_matrix(rng, 9, 1);
    const double a = 1.7, b = -0.3;
    const Vector lhs = score(m, Vector(a * p + b * q));
    const Vector rhs = a * score(m, p) + b * score(m, q);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Score, RejectsWidthMismatch)
{
    const ReadoutModel m{Matrix::Zero(2, 3), labels_for(2)};
    EXPECT_THROW(score(m, Vector::Zero(4)), Error);
}

TEST(Classify, PicksArgmax)
{
    const ReadoutModel m{Matrix::Identity(3, 3), {"a", "b", "c"}};
    Vector s(3);
    s << 0.1, 0.9, 0.3;
    const auto p = classify(m, s);
    EXPECT_EQ(p.index, 1u);
    EXPECT_EQ(p.label, "b");
    EXPECT_NEAR(p.probabilities.sum(), 1.0, 1e-12);
    EXPECT_GE(p.probabilities.minCoeff(), 0.0);
}

TEST(Classify, TiesGoToLowestIndex)
{
    const ReadoutModel m{Matrix::Identity(2, 2), {"a", "b"}};
    Vector s(2);
    s << 0.5, 0.5;
    EXPECT_EQ(classify(m, s).index, 0u);
}

TEST(Classify, UniformProbabilitiesForZeroScores)
{
    const ReadoutModel m{Matrix::Zero(3, 2), labels_for(3)};
    const auto p = classify(m, Vector::Ones(2));
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(p.probabilities(i), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, StableForLargeScores)
{
    Vector s(3);
    s << 1000.0, 999.0, -1000.0;
    const Vector p = softmax(s);
    EXPECT_TRUE(p.allFinite());
    EXPECT_NEAR(p(0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Ridge, IdentitySystemWithoutRegularization)
{
    const auto m = ridge_fit(Matrix::Identity(4, 4), Matrix::Identity(4, 4), 0.0, labels_for(4));
    EXPECT_LE((m.w_out - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Ridge, HugeRegularizationShrinksToZero)
{
    Rng rng(2);
    const Matrix p = random_matrix(rng, 20, 6);
    const Matrix t = one_hot({0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1}, 3);
    EXPECT_LE(ridge_fit(p, t, 1e12, labels_for(3)).w_out.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ridge, MatchesConjugateGradientPrimalAndDual)
{
    Rng rng(17);
    for (const Eigen::Index d : {5, 10, 30}) {
        const Matrix p = random_matrix(rng, 20, d);
        std::vector<std::size_t> y;
        for (int i = 0; i < 20; ++i) y.push_back(static_cast<std::size_t>(i % 3));
        const Matrix t = one_hot(y, 3);
        const auto fit = ridge_fit(p, t, 0.1, labels_for(3));
        const Matrix cg = oracle::cg_ridge(p, t, 0.1);
        EXPECT_LE((fit.w_out - cg).cwiseAbs().maxCoeff(), 1e-8) << "D=" << d;
        const double r_fit = (p * fit.w_out.transpose() - t).norm();
        const double r_cg = (p * cg.transpose() - t).norm();
        EXPECT_NEAR(r_fit, r_cg, 1e-8);
    }
}

TEST(Ridge, SingularUnregularizedSystemIsReported)
{
    Matrix p = Matrix::Ones(5, 3);
    try {
        ridge_fit(p, one_hot({0, 1, 0, 1, 0}, 2), 0.0, labels_for(2));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::Numerical);
        EXPECT_NE(std::string(e.what()).find("lambda > 0"), std::string::npos);
    }
    EXPECT_THROW(ridge_fit(p, one_hot({0, 1, 0, 1, 0}, 2), -1.0, labels_for(2)), Error);
}

TEST(CrossEntropy, MatchesNaiveLoss)
{
    Rng rng(9);
    const Matrix w = random_matrix(rng, 3, 5);
    const Matrix p = random_matrix(rng, 6, 5);
    const std::vector<std::size_t> y{0, 2, 1, 1, 0, 2};
    EXPECT_NEAR(cross_entropy_loss_gradient(w, p, y).loss, oracle::naive_cross_entropy(w, p, y), 1e-12);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences)
{
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto k = static_cast<Eigen::Index>(2 + rng.below(4));
        const auto d = static_cast<Eigen::Index>(2 + rng.below(6));
        const Matrix w = random_matrix(rng, k, d, 0.5);
        const Matrix p = random_matrix(rng, 4, d);
        std::vector<std::size_t> y;
        for (int i = 0; i < 4; ++i) y.push_back(rng.below(static_cast<std::uint64_t>(k)));
        const Matrix analytic = cross_entropy_loss_gradient(w, p, y).gradient;
        const Matrix numeric = oracle::finite_difference_gradient(
            [&](const Matrix& v) { return oracle::naive_cross_entropy(v, p, y); }, w, 1e-5);
        EXPECT_LT((analytic - numeric).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(TrainSoftmax, FirstEpochLossIsLogClassCount)
{
    for (const std::size_t k : {2u, 5u, 10u}) {
        const auto b = make_blobs(k, k, 4, 3, 0.5);
        TrainSpec spec;
        spec.epochs = 1;
        const auto r = train_softmax(b.rows, b.labels, labels_for(k), spec);
        ASSERT_EQ(r.loss_curve.size(), 1u);
        EXPECT_NEAR(r.loss_curve[0], std::log(static_cast<double>(k)), 1e-9);
    }
}

TEST(TrainSoftmax, SeparableTwoClassReachesFullAccuracy)
{
    const auto b = make_blobs(8, 2, 30, 4, 0.3);
    TrainSpec spec;
    spec.epochs = 200;
    std::size_t first_perfect = 0;
    const auto r = train_softmax(b.rows, b.labels, labels_for(2), spec, [&](std::size_t epoch, const Matrix& w) {
        if (first_perfect == 0 && accuracy(w, b.rows, b.labels) == 1.0) first_perfect = epoch;
    });
    EXPECT_GT(first_perfect, 0u);
    EXPECT_EQ(accuracy(r.model.w_out, b.rows, b.labels), 1.0);
}

TEST(TrainSoftmax, GradientDescentLossIsMonotone)
{
    const auto b = make_blobs(3, 3, 10, 4, 1.5);
    TrainSpec spec;
    spec.mode = TrainMode::SoftmaxGd;
    spec.learning_rate = 1e-2;
    spec.epochs = 300;
    const auto r = train_softmax(b.rows, b.labels, labels_for(3), spec);
    for (std::size_t i = 1; i < r.loss_curve.size(); ++i) EXPECT_LE(r.loss_curve[i], r.loss_curve[i - 1]) << i;
}

TEST(TrainSoftmax, AgreesWithRidgeOnSeparableData)
{
    const auto train = make_blobs(30, 4, 25, 6, 0.5);
    const auto test = make_blobs(30, 4, 25, 6, 0.5);
    TrainSpec spec;
    const auto soft = train_softmax(train.rows, train.labels, labels_for(4), spec);
    const auto ridge = ridge_fit(train.rows, one_hot(train.labels, 4), 1e-2, labels_for(4));
    const auto a = predict_indices(soft.model.w_out, test.rows);
    const auto b = predict_indices(ridge.w_out, test.rows);
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    EXPECT_GE(static_cast<double>(same) / static_cast<double>(a.size()), 0.95);
}

TEST(TrainSoftmax, ClassPermutationPermutesRows)
{
    const auto b = make_blobs(12, 3, 8, 3, 1.0);
    const std::vector<std::size_t> perm{2, 0, 1}; // old class c becomes perm[c]
    std::vector<std::size_t> permuted;
    for (const auto y : b.labels) permuted.push_back(perm[y]);
    TrainSpec spec;
    spec.epochs = 50;
    const auto r0 = train_softmax(b.rows, b.labels, {"a", "b", "c"}, spec);
    const auto r1 = train_softmax(b.rows, permuted, {"b", "c", "a"}, spec);
    // softmax sums run in a different class order, so rows agree to rounding
    for (std::size_t c = 0; c < 3; ++c)
        EXPECT_LE((r0.model.w_out.row(static_cast<Eigen::Index>(c)) - r1.model.w_out.row(static_cast<Eigen::Index>(perm[c])))
                      .cwiseAbs().maxCoeff(), 1e-10);
    const auto p0 = predict_indices(r0.model.w_out, b.rows);
    const auto p1 = predict_indices(r1.model.w_out, b.rows);
    for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_EQ(perm[p0[i]], p1[i]);
}

TEST(TrainSoftmax, MiniBatchIsSeededAndLearns)
{
    const auto b = make_blobs(6, 3, 12, 3, 0.4);
    TrainSpec spec;
    spec.epochs = 100;
    spec.batch_size = 5;
    spec.seed = 3;
    const auto r0 = train_softmax(b.rows, b.labels, labels_for(3), spec);
    const auto r1 = train_softmax(b.rows, b.labels, labels_for(3), spec);
    EXPECT_TRUE(r0.model.w_out == r1.model.w_out);
    EXPECT_LT(r0.loss_curve.back(), r0.loss_curve.front());
}

TEST(TrainSoftmax, Rejections)
{
    const auto b = make_blobs(1, 2, 3, 2, 1.0);
    TrainSpec spec;
    EXPECT_THROW(train_softmax(b.rows, b.labels, labels_for(3), spec), Error); // class 2 empty
    spec.epochs = 0;
    EXPECT_THROW(train_softmax(b.rows, b.labels, labels_for(2), spec), Error);
    spec.epochs = 5;
    spec.mode = TrainMode::Ridge;
    EXPECT_THROW(train_softmax(b.rows, b.labels, labels_for(2), spec), Error);
}

TEST(TrainSoftmax, NonFiniteLossAborts)
{
    auto b = make_blobs(1, 2, 3, 2, 1.0);
    b.rows(0, 1) = std::numeric_limits<double>::infinity();
    TrainSpec spec;
    try {
        train_softmax(b.rows, b.labels, labels_for(2), spec);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::Numerical);
    }
}

TEST(ModelIo, RoundTripWithLabels)
{
    Rng rng(3);
    const ReadoutModel m{random_matrix(rng, 3, 7), {"walk", "drink water", "sniff"}};
    const auto back = decode_model(encode_model(m), "mem");
    EXPECT_TRUE(back.w_out == m.w_out);
    EXPECT_EQ(back.class_labels, m.class_labels);

    const auto path = std::filesystem::temp_directory_path() / "cdn_test_model" / "m.cdnw";
    save_model(path, m);
    EXPECT_TRUE(load_model(path).w_out == m.w_out);
    std::filesystem::remove_all(path.parent_path());
}

TEST(ModelIo, RoundTripWithoutLabelsAndCorruption)
{
    const ReadoutModel m{Matrix::Constant(2, 3, 0.5), {"x", "y"}};
    const auto bytes = encode_model(m, false);
    const auto back = decode_model(bytes, "mem");
    EXPECT_EQ(back.class_labels, (std::vector<std::string>{"0", "1"}));
    EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 3), "mem"), Error);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_model(bad, "mem"), Error);
}

} // namespace
} // namespace cdn
