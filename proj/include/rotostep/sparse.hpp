#pragma once

#include "rotostep/errors.hpp"
#include "rotostep/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rotostep {

/// Compressed sparse row matrix with sorted column indices in every row.
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::int32_t> col;
    std::vector<double> val;

    std::size_t nnz() const { return val.size(); }

    /// Position of (i, j) in val, or -1 when it is not stored.
    std::ptrdiff_t find(std::size_t i, std::size_t j) const
    {
        const auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
        const auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
        const auto it = std::lower_bound(b, e, static_cast<std::int32_t>(j));
        if (it == e || *it != static_cast<std::int32_t>(j)) return -1;
        return it - col.begin();
    }

    double at(std::size_t i, std::size_t j) const
    {
        const auto p = find(i, j);
        return p < 0 ? 0.0 : val[static_cast<std::size_t>(p)];
    }

    /// y = A x, rows split across workers.
    void multiply(std::span<const double> x, std::span<double> y, int workers = 1) const
    {
        if (x.size() != cols || y.size() != rows) throw Error("CsrMatrix::multiply: size mismatch");
        parallel_for(rows, workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                double s = 0.0;
                for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += val[p] * x[static_cast<std::size_t>(col[p])];
                y[i] = s;
            }
        });
    }

    std::vector<double> operator*(std::span<const double> x) const
    {
        std::vector<double> y(rows);
        multiply(x, y);
        return y;
    }

    std::vector<double> diagonal() const
    {
        std::vector<double> d(std::min(rows, cols), 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
        return d;
    }

    CsrMatrix transposed() const
    {
        CsrMatrix t;
        t.rows = cols;
        t.cols = rows;
        t.row_ptr.assign(cols + 1, 0);
        for (auto c : col) ++t.row_ptr[static_cast<std::size_t>(c) + 1];
        for (std::size_t i = 0; i < cols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
        t.col.resize(nnz());
        t.val.resize(nnz());
        std::vector<std::size_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
                const auto q = next[static_cast<std::size_t>(col[p])]++;
                t.col[q] = static_cast<std::int32_t>(i);
                t.val[q] = val[p];
            }
        }
        return t;
    }

    static CsrMatrix identity(std::size_t n)
    {
        CsrMatrix m;
        m.rows = m.cols = n;
        m.row_ptr.resize(n + 1);
        m.col.resize(n);
        m.val.assign(n, 1.0);
        for (std::size_t i = 0; i <= n; ++i) m.row_ptr[i] = i;
        for (std::size_t i = 0; i < n; ++i) m.col[i] = static_cast<std::int32_t>(i);
        return m;
    }

    /// Build from (row, col, value) triplets; duplicates are summed in input order.
    struct Triplet {
        std::size_t row;
        std::size_t col;
        double value;
    };

    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
    {
        std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        CsrMatrix m;
        m.rows = rows;
        m.cols = cols;
        m.row_ptr.assign(rows + 1, 0);
        std::size_t last_row = static_cast<std::size_t>(-1);
        for (const auto& t : triplets) {
            if (t.row >= rows || t.col >= cols) throw Error("CsrMatrix::from_triplets: index out of range");
            if (t.row == last_row && static_cast<std::size_t>(m.col.back()) == t.col) {
                m.val.back() += t.value;
                continue;
            }
            m.col.push_back(static_cast<std::int32_t>(t.col));
            m.val.push_back(t.value);
            ++m.row_ptr[t.row + 1];
            last_row = t.row;
        }
        for (std::size_t i = 0; i < rows; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
        return m;
    }
};

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace rotostep
