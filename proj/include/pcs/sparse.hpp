#pragma once

#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include "pcs/density.hpp"
#include "pcs/space.hpp"
#include "pcs/state.hpp"

namespace pcs {

// Sparse operator on the flat basis, stored as frozen CSR. Built through the
// nested Builder, which accepts duplicate (row, col) entries and merges them.
//
// Truncation bookkeeping: an operator that would push amplitude past the
// cutoff drops it instead, and records the lost probability weight per source
// column in boundary_loss(). apply() folds those weights into the state's
// leak accumulator so a run can be aborted once truncation error matters.
class SparseOperator {
public:
    struct Entry {
        int row;
        int col;
        Complex value;
    };

    // Probability weight lost from source column `col` per application.
    struct BoundaryLoss {
        int col;
        double weight;
    };

    class Builder {
    public:
        explicit Builder(const SpaceConfig& space) : space_(space) {}

        void add(int row, int col, Complex value);
        void add_boundary_loss(int col, double weight);

        // Merges duplicates, prunes exact zeros, freezes to CSR.
        SparseOperator build() &&;

    private:
        SpaceConfig space_;
        std::vector<Entry> entries_;
        std::vector<BoundaryLoss> losses_;
    };

    static SparseOperator identity(const SpaceConfig& space);
    static SparseOperator zero(const SpaceConfig& space);

    const SpaceConfig& space() const noexcept { return space_; }
    int dim() const noexcept { return space_.dim(); }
    int nnz() const noexcept { return static_cast<int>(col_.size()); }

    // y = A x into a fresh vector (no leak update).
    std::vector<Complex> apply_raw(std::span<const Complex> x) const;

    // psi <- A psi, folding boundary losses of A into psi.leak().
    void apply(StateVector& psi) const;

    // Entry at (row, col), zero if absent. Linear in the row's fill.
    Complex coeff(int row, int col) const;

    SparseOperator scaled(Complex factor) const;
    // this + factor * rhs.
    SparseOperator scaled_sum(const SparseOperator& rhs, Complex factor) const;
    // this * rhs (operator composition: apply rhs first).
    SparseOperator multiply(const SparseOperator& rhs) const;
    // Conjugate transpose of the stored entries. Boundary losses are NOT
    // transported: they describe amplitude this operator discards, and the
    // adjoint of a truncated operator discards different amplitude. Compose
    // adjoints from primitive factors when loss tracking matters.
    SparseOperator adjoint() const;

    double max_abs_entry() const noexcept;

    // True when the stored entries are exactly conjugate-symmetric.
    bool is_hermitian() const;

    const std::vector<BoundaryLoss>& boundary_loss() const noexcept { return losses_; }
    double boundary_loss_for(std::span<const Complex> x) const noexcept;

    void for_each_entry(const std::function<void(int, int, Complex)>& fn) const;

private:
    explicit SparseOperator(const SpaceConfig& space) : space_(space) {}

    static SparseOperator from_sorted(const SpaceConfig& space, std::vector<Entry> entries,
                                      std::vector<BoundaryLoss> losses);

    SpaceConfig space_;
    std::vector<int> row_start_;  // dim()+1 offsets into col_/val_
    std::vector<int> col_;
    std::vector<Complex> val_;
    std::vector<BoundaryLoss> losses_;  // sorted by col, merged
};

}  // namespace pcs
