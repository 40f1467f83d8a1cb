#include "rotostep/sparse.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rotostep;

namespace {

CsrMatrix random_matrix(std::size_t n, std::size_t m, double density, unsigned seed, std::vector<double>& dense)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0), v(-2.0, 2.0);
    std::vector<CsrMatrix::Triplet> trips;
    dense.assign(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (u(rng) < density) {
                const double x = v(rng);
                trips.push_back({i, j, x});
                dense[i * m + j] += x;
            }
        }
    }
    std::shuffle(trips.begin(), trips.end(), rng);
    return CsrMatrix::from_triplets(n, m, trips);
}

}  // namespace

TEST(Sparse, FromTripletsSumsDuplicates)
{
    const auto a = CsrMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 0, 2.0}, {1, 2, 0.5}, {0, 1, -1.0}});
    EXPECT_EQ(a.nnz(), 3u);
    EXPECT_EQ(a.at(1, 2), 1.5);
    EXPECT_EQ(a.at(0, 0), 2.0);
    EXPECT_EQ(a.at(0, 1), -1.0);
    EXPECT_EQ(a.at(1, 0), 0.0);
    EXPECT_EQ(a.find(1, 1), -1);
    EXPECT_THROW(CsrMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), Error);
}

TEST(Sparse, MultiplyMatchesDense)
{
    std::vector<double> dense;
    const auto a = random_matrix(37, 23, 0.2, 1, dense);
    std::vector<double> x(23);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::sin(1.0 + j);
    for (int w : {1, 3}) {
        std::vector<double> y(37);
        a.multiply(x, y, w);
        for (std::size_t i = 0; i < 37; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 23; ++j) s += dense[i * 23 + j] * x[j];
            EXPECT_NEAR(y[i], s, 1e-13);
        }
    }
    std::vector<double> bad(5);
    EXPECT_THROW(a.multiply(bad, bad), Error);
}

TEST(Sparse, TransposeRoundTrip)
{
    std::vector<double> dense;
    const auto a = random_matrix(19, 31, 0.15, 2, dense);
    const auto t = a.transposed();
    EXPECT_EQ(t.rows, 31u);
    for (std::size_t i = 0; i < 19; ++i) {
        for (std::size_t j = 0; j < 31; ++j) EXPECT_EQ(t.at(j, i), dense[i * 31 + j]);
    }
    const auto tt = t.transposed();
    EXPECT_EQ(tt.row_ptr, a.row_ptr);
    EXPECT_EQ(tt.col, a.col);
    EXPECT_EQ(tt.val, a.val);
}

TEST(Sparse, IdentityAndDiagonal)
{
    const auto id = CsrMatrix::identity(4);
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_EQ(id * x, x);
    EXPECT_EQ(id.diagonal(), std::vector<double>(4, 1.0));
    EXPECT_DOUBLE_EQ(dot(x, x), 30.0);
    EXPECT_DOUBLE_EQ(norm2(x), std::sqrt(30.0));
}
