#include "gtma/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gtma {

namespace {

void check_finite(const std::vector<double>& values, const char* what) {
    for (double x : values) {
        if (!std::isfinite(x)) {
            throw NonFiniteError(std::string(what) + ": non-finite element");
        }
    }
}

void check_same_dim(const Vec64& a, const Vec64& b, const char* what) {
    if (a.dim() != b.dim()) {
        throw DimMismatchError(std::string(what) + ": dims " +
                               std::to_string(a.dim()) + " vs " +
                               std::to_string(b.dim()));
    }
}

}  // namespace

Vec64::Vec64(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw DimMismatchError("Vec64: dim must be >= 1");
    }
    check_finite(values_, "Vec64");
}

Vec64 Vec64::zeros(std::size_t dim) {
    return Vec64(std::vector<double>(dim, 0.0));
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows_ == 0 || cols_ == 0) {
        throw DimMismatchError("Mat64: rows and cols must be >= 1");
    }
    if (values_.size() != rows_ * cols_) {
        throw DimMismatchError("Mat64: element count " +
                               std::to_string(values_.size()) +
                               " does not match " + std::to_string(rows_) +
                               "x" + std::to_string(cols_));
    }
    check_finite(values_, "Mat64");
}

Mat64 Mat64::zeros(std::size_t rows, std::size_t cols) {
    return Mat64(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Mat64 Mat64::identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Mat64(n, n, std::move(v));
}

Mat64 Mat64::from_rows(const std::vector<Vec64>& rows) {
    if (rows.empty()) {
        throw DimMismatchError("Mat64::from_rows: no rows");
    }
    const std::size_t cols = rows.front().dim();
    std::vector<double> v;
    v.reserve(rows.size() * cols);
    for (const Vec64& r : rows) {
        if (r.dim() != cols) {
            throw DimMismatchError("Mat64::from_rows: ragged rows");
        }
        v.insert(v.end(), r.values().begin(), r.values().end());
    }
    return Mat64(rows.size(), cols, std::move(v));
}

Vec64 Mat64::row(std::size_t r) const {
    return Vec64(std::vector<double>(values_.begin() + r * cols_,
                                     values_.begin() + (r + 1) * cols_));
}

double dot(const Vec64& a, const Vec64& b) {
    check_same_dim(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec64& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

Vec64 add(const Vec64& a, const Vec64& b) {
    check_same_dim(a, b, "add");
    std::vector<double> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return Vec64(std::move(out));
}

Vec64 sub(const Vec64& a, const Vec64& b) {
    check_same_dim(a, b, "sub");
    std::vector<double> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
    return Vec64(std::move(out));
}

Vec64 scale(const Vec64& v, double s) {
    std::vector<double> out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = v[i] * s;
    return Vec64(std::move(out));
}

Vec64 matvec(const Mat64& m, const Vec64& v) {
    if (m.cols() != v.dim()) {
        throw DimMismatchError("matvec: cols " + std::to_string(m.cols()) +
                               " vs dim " + std::to_string(v.dim()));
    }
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) s += m.at(r, c) * v[c];
        out[r] = s;
    }
    return Vec64(std::move(out));
}

Vec64 matvec_transposed(const Mat64& m, const Vec64& v) {
    if (m.rows() != v.dim()) {
        throw DimMismatchError("matvec_transposed: rows " +
                               std::to_string(m.rows()) + " vs dim " +
                               std::to_string(v.dim()));
    }
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double vr = v[r];
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m.at(r, c) * vr;
    }
    return Vec64(std::move(out));
}

Vec64 l2_normalize(const Vec64& v) {
    const double n = norm(v);
    if (n <= kNormEpsilon) {
        throw ZeroVectorError("l2_normalize: norm below threshold");
    }
    return scale(v, 1.0 / n);
}

double cosine_sim(const Vec64& a, const Vec64& b) {
    check_same_dim(a, b, "cosine_sim");
    const double na = norm(a);
    const double nb = norm(b);
    if (na <= kNormEpsilon || nb <= kNormEpsilon) {
        throw ZeroVectorError("cosine_sim: degenerate operand");
    }
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Vec64 softmax(const Vec64& scores) {
    double max_score = scores[0];
    for (std::size_t i = 1; i < scores.dim(); ++i) {
        max_score = std::max(max_score, scores[i]);
    }
    std::vector<double> out(scores.dim());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.dim(); ++i) {
        out[i] = std::exp(scores[i] - max_score);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return Vec64(std::move(out));
}

Vec64 scaled_dot_attention(const Vec64& query, const Mat64& keys,
                           const Mat64& values) {
    if (query.dim() != keys.cols()) {
        throw DimMismatchError("scaled_dot_attention: query dim vs key cols");
    }
    if (keys.rows() != values.rows()) {
        throw DimMismatchError("scaled_dot_attention: key/value row counts");
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
    std::vector<double> scores(keys.rows(), 0.0);
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < keys.cols(); ++c) {
            s += query[c] * keys.at(i, c);
        }
        scores[i] = s * inv_sqrt_dk;
    }
    const Vec64 weights = softmax(Vec64(std::move(scores)));
    std::vector<double> out(values.cols(), 0.0);
    for (std::size_t i = 0; i < values.rows(); ++i) {
        const double w = weights[i];
        for (std::size_t c = 0; c < values.cols(); ++c) {
            out[c] += w * values.at(i, c);
        }
    }
    return Vec64(std::move(out));
}

Vec64 finite_diff_gradient(const std::function<double(const Vec64&)>& f,
                           const Vec64& z, double h) {
    if (!(h > 0.0)) {
        throw ConfigError("finite_diff_gradient: h must be > 0");
    }
    std::vector<double> probe = z.values();
    std::vector<double> grad(z.dim(), 0.0);
    for (std::size_t i = 0; i < z.dim(); ++i) {
        const double zi = probe[i];
        probe[i] = zi + h;
        const double fp = f(Vec64(probe));
        probe[i] = zi - h;
        const double fm = f(Vec64(probe));
        probe[i] = zi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return Vec64(std::move(grad));
}

}  // namespace gtma
