#include "pcs/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace pcs {

namespace {

void check_index(const SpaceConfig& space, int i, const char* what) {
    if (i < 0 || i >= space.dim())
        throw SimError(ErrorCode::dimension, std::string(what) + " index out of range");
}

std::vector<SparseOperator::BoundaryLoss> merge_losses(
    std::vector<SparseOperator::BoundaryLoss> losses) {
    std::sort(losses.begin(), losses.end(),
              [](const auto& a, const auto& b) { return a.col < b.col; });
    std::vector<SparseOperator::BoundaryLoss> out;
    for (const auto& l : losses) {
        if (l.weight == 0.0) continue;
        if (!out.empty() && out.back().col == l.col)
            out.back().weight += l.weight;
        else
            out.push_back(l);
    }
    return out;
}

}  // namespace

void SparseOperator::Builder::add(int row, int col, Complex value) {
    check_index(space_, row, "row");
    check_index(space_, col, "column");
    entries_.push_back({row, col, value});
}

void SparseOperator::Builder::add_boundary_loss(int col, double weight) {
    check_index(space_, col, "loss column");
    if (weight < 0.0)
        throw SimError(ErrorCode::validation, "boundary loss weight must be nonnegative");
    losses_.push_back({col, weight});
}

SparseOperator SparseOperator::Builder::build() && {
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Entry> merged;
    merged.reserve(entries_.size());
    for (const Entry& e : entries_) {
        if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col)
            merged.back().value += e.value;
        else
            merged.push_back(e);
    }
    std::erase_if(merged, [](const Entry& e) { return e.value == Complex(0.0); });
    return from_sorted(space_, std::move(merged), merge_losses(std::move(losses_)));
}

SparseOperator SparseOperator::from_sorted(const SpaceConfig& space, std::vector<Entry> entries,
                                           std::vector<BoundaryLoss> losses) {
    SparseOperator op(space);
    const int n = space.dim();
    op.row_start_.assign(static_cast<size_t>(n) + 1, 0);
    for (const Entry& e : entries) ++op.row_start_[static_cast<size_t>(e.row) + 1];
    for (int r = 0; r < n; ++r)
        op.row_start_[static_cast<size_t>(r) + 1] += op.row_start_[static_cast<size_t>(r)];
    op.col_.reserve(entries.size());
    op.val_.reserve(entries.size());
    for (const Entry& e : entries) {
        op.col_.push_back(e.col);
        op.val_.push_back(e.value);
    }
    op.losses_ = std::move(losses);
    return op;
}

SparseOperator SparseOperator::identity(const SpaceConfig& space) {
    Builder b(space);
    for (int i = 0; i < space.dim(); ++i) b.add(i, i, 1.0);
    return std::move(b).build();
}

SparseOperator SparseOperator::zero(const SpaceConfig& space) {
    return std::move(Builder(space)).build();
}

std::vector<Complex> SparseOperator::apply_raw(std::span<const Complex> x) const {
    if (static_cast<int>(x.size()) != dim())
        throw SimError(ErrorCode::dimension, "operator/vector dimension mismatch");
    std::vector<Complex> y(x.size());
    const int n = dim();
    for (int r = 0; r < n; ++r) {
        Complex acc = 0.0;
        for (int k = row_start_[static_cast<size_t>(r)]; k < row_start_[static_cast<size_t>(r) + 1];
             ++k)
            acc += val_[static_cast<size_t>(k)] * x[static_cast<size_t>(col_[static_cast<size_t>(k)])];
        y[static_cast<size_t>(r)] = acc;
    }
    return y;
}

void SparseOperator::apply(StateVector& psi) const {
    require_same_space(space_, psi.space());
    psi.add_leak(boundary_loss_for(psi.amplitudes()));
    auto y = apply_raw(psi.amplitudes());
    std::copy(y.begin(), y.end(), psi.amplitudes().begin());
}

double SparseOperator::boundary_loss_for(std::span<const Complex> x) const noexcept {
    double acc = 0.0;
    for (const BoundaryLoss& l : losses_)
        acc += l.weight * std::norm(x[static_cast<size_t>(l.col)]);
    return acc;
}

Complex SparseOperator::coeff(int row, int col) const {
    check_index(space_, row, "row");
    check_index(space_, col, "column");
    for (int k = row_start_[static_cast<size_t>(row)];
         k < row_start_[static_cast<size_t>(row) + 1]; ++k)
        if (col_[static_cast<size_t>(k)] == col) return val_[static_cast<size_t>(k)];
    return 0.0;
}

SparseOperator SparseOperator::scaled(Complex factor) const {
    SparseOperator out = *this;
    if (factor == Complex(0.0)) return zero(space_);
    for (Complex& v : out.val_) v *= factor;
    const double w = std::norm(factor);
    for (BoundaryLoss& l : out.losses_) l.weight *= w;
    return out;
}

SparseOperator SparseOperator::scaled_sum(const SparseOperator& rhs, Complex factor) const {
    require_same_space(space_, rhs.space_);
    Builder b(space_);
    for_each_entry([&](int r, int c, Complex v) { b.add(r, c, v); });
    rhs.for_each_entry([&](int r, int c, Complex v) { b.add(r, c, factor * v); });
    for (const BoundaryLoss& l : losses_) b.add_boundary_loss(l.col, l.weight);
    const double w = std::norm(factor);
    for (const BoundaryLoss& l : rhs.losses_) b.add_boundary_loss(l.col, w * l.weight);
    return std::move(b).build();
}

SparseOperator SparseOperator::multiply(const SparseOperator& rhs) const {
    require_same_space(space_, rhs.space_);
    Builder b(space_);
    const int n = dim();
    // (this * rhs)(r, c) = sum_k this(r, k) rhs(k, c)
    for (int r = 0; r < n; ++r) {
        for (int k = row_start_[static_cast<size_t>(r)];
             k < row_start_[static_cast<size_t>(r) + 1]; ++k) {
            const int mid = col_[static_cast<size_t>(k)];
            const Complex lv = val_[static_cast<size_t>(k)];
            for (int k2 = rhs.row_start_[static_cast<size_t>(mid)];
                 k2 < rhs.row_start_[static_cast<size_t>(mid) + 1]; ++k2)
                b.add(r, rhs.col_[static_cast<size_t>(k2)],
                      lv * rhs.val_[static_cast<size_t>(k2)]);
        }
    }
    // Composition applies rhs first, so rhs losses act on the input directly
    // and this-operator losses act on |rhs x|^2 column by column.
    for (const BoundaryLoss& l : rhs.losses_) b.add_boundary_loss(l.col, l.weight);
    for (const BoundaryLoss& l : losses_) {
        // row l.col of rhs maps source column c with weight |rhs(l.col, c)|^2
        for (int k2 = rhs.row_start_[static_cast<size_t>(l.col)];
             k2 < rhs.row_start_[static_cast<size_t>(l.col) + 1]; ++k2)
            b.add_boundary_loss(rhs.col_[static_cast<size_t>(k2)],
                                l.weight * std::norm(rhs.val_[static_cast<size_t>(k2)]));
    }
    return std::move(b).build();
}

SparseOperator SparseOperator::adjoint() const {
    Builder b(space_);
    for_each_entry([&](int r, int c, Complex v) { b.add(c, r, std::conj(v)); });
    return std::move(b).build();
}

double SparseOperator::max_abs_entry() const noexcept {
    double m = 0.0;
    for (const Complex& v : val_) m = std::max(m, std::abs(v));
    return m;
}

bool SparseOperator::is_hermitian() const {
    const int n = dim();
    for (int r = 0; r < n; ++r) {
        for (int k = row_start_[static_cast<size_t>(r)];
             k < row_start_[static_cast<size_t>(r) + 1]; ++k) {
            const int c = col_[static_cast<size_t>(k)];
            if (coeff(c, r) != std::conj(val_[static_cast<size_t>(k)])) return false;
        }
    }
    return true;
}

void SparseOperator::for_each_entry(const std::function<void(int, int, Complex)>& fn) const {
    const int n = dim();
    for (int r = 0; r < n; ++r)
        for (int k = row_start_[static_cast<size_t>(r)];
             k < row_start_[static_cast<size_t>(r) + 1]; ++k)
            fn(r, col_[static_cast<size_t>(k)], val_[static_cast<size_t>(k)]);
}

}  // namespace pcs
