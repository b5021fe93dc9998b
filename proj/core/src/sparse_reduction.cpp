#include "morsecon/sparse_reduction.hpp"

#include <algorithm>

namespace morsecon {

SparseChainComplex::Cell SparseChainComplex::add_cell(int dim) {
    dims_.push_back(dim);
    alive_.push_back(true);
    boundary_.emplace_back();
    coboundary_.emplace_back();
    return static_cast<Cell>(dims_.size() - 1);
}

void SparseChainComplex::add_boundary_entry(Cell cell, Cell face, const BigInt& coef) {
    if (dims_.at(face) != dims_.at(cell) - 1) throw Error(ErrorKind::ShapeMismatch, "face dimension");
    if (coef.is_zero()) return;
    BigInt& slot = boundary_[cell][face];
    slot += coef;
    if (slot.is_zero()) {
        boundary_[cell].erase(face);
        coboundary_[face].erase(cell);
    } else {
        coboundary_[face].insert(cell);
    }
}

std::size_t SparseChainComplex::alive() const {
    return static_cast<std::size_t>(std::count(alive_.begin(), alive_.end(), true));
}

void SparseChainComplex::eliminate(Cell sigma, Cell tau) {
    const BigInt a = boundary_[sigma].at(tau);  // +-1, so 1/a == a
    const std::map<Cell, BigInt> dsigma = boundary_[sigma];
    const std::vector<Cell> users(coboundary_[tau].begin(), coboundary_[tau].end());
    for (Cell rho : users) {
        if (rho == sigma) continue;
        const BigInt factor = boundary_[rho].at(tau) * a;
        for (const auto& [face, c] : dsigma) {
            BigInt& slot = boundary_[rho][face];
            slot -= factor * c;
            if (slot.is_zero()) {
                boundary_[rho].erase(face);
                coboundary_[face].erase(rho);
            } else {
                coboundary_[face].insert(rho);
            }
        }
    }
    for (const auto& [face, c] : boundary_[sigma]) coboundary_[face].erase(sigma);
    boundary_[sigma].clear();
    for (Cell up : coboundary_[sigma]) boundary_[up].erase(sigma);
    coboundary_[sigma].clear();
    for (const auto& [face, c] : boundary_[tau]) coboundary_[face].erase(tau);
    boundary_[tau].clear();
    coboundary_[tau].clear();
    alive_[sigma] = false;
    alive_[tau] = false;
}

void SparseChainComplex::reduce() {
    bool progress = true;
    while (progress) {
        progress = false;
        for (Cell sigma = 0; sigma < dims_.size(); ++sigma) {
            if (!alive_[sigma]) continue;
            for (const auto& [face, c] : boundary_[sigma]) {
                if (c == 1 || c == -1) {
                    eliminate(sigma, face);
                    progress = true;
                    break;
                }
            }
        }
    }
}

ChainComplex SparseChainComplex::to_dense() const {
    ChainComplex cc;
    std::map<int, std::vector<Cell>> by_dim;
    for (Cell c = 0; c < dims_.size(); ++c)
        if (alive_[c]) by_dim[dims_[c]].push_back(c);
    if (by_dim.empty()) {
        cc.groups.min_degree = 0;
        return cc;
    }
    const int lo = by_dim.begin()->first, hi = by_dim.rbegin()->first;
    cc.groups.min_degree = lo;
    std::vector<std::size_t> position(dims_.size(), 0);
    for (int k = lo; k <= hi; ++k) {
        auto it = by_dim.find(k);
        std::size_t n = it == by_dim.end() ? 0 : it->second.size();
        cc.groups.ranks.push_back(n);
        if (it != by_dim.end())
            for (std::size_t i = 0; i < n; ++i) position[it->second[i]] = i;
    }
    for (int k = lo + 1; k <= hi; ++k) {
        auto it = by_dim.find(k);
        if (it == by_dim.end()) continue;
        IntegerMatrix d(cc.groups.rank(k - 1), it->second.size());
        bool any = false;
        for (std::size_t j = 0; j < it->second.size(); ++j)
            for (const auto& [face, c] : boundary_[it->second[j]]) {
                d(position[face], j) = c;
                any = true;
            }
        if (any) cc.differentials[k] = std::move(d);
    }
    return cc;
}

HomologyResult SparseChainComplex::homology() {
    reduce();
    return morsecon::homology(to_dense());
}

}  // namespace morsecon
