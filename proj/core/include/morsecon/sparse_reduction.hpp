#ifndef MORSECON_SPARSE_REDUCTION_HPP
#define MORSECON_SPARSE_REDUCTION_HPP

#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "morsecon/chain_algebra.hpp"

namespace morsecon {

// Large sparse complex. Unit-pivot pairs are eliminated first, the small
// remainder goes to the dense Smith form.
class SparseChainComplex {
public:
    using Cell = std::uint32_t;

    Cell add_cell(int dim);
    void add_boundary_entry(Cell cell, Cell face, const BigInt& coef);

    std::size_t size() const { return dims_.size(); }
    std::size_t alive() const;

    void reduce();
    ChainComplex to_dense() const;
    HomologyResult homology();

private:
    void eliminate(Cell sigma, Cell tau);

    std::vector<int> dims_;
    std::vector<bool> alive_;
    std::vector<std::map<Cell, BigInt>> boundary_;
    std::vector<std::set<Cell>> coboundary_;
};

}  // namespace morsecon

#endif
