#ifndef MORSECON_CUBICAL_HPP
#define MORSECON_CUBICAL_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morsecon/chain_algebra.hpp"
#include "morsecon/complex_builder.hpp"
#include "morsecon/flow_model.hpp"

namespace morsecon {

// Uniform grid of top-dimensional cells on an axis-aligned box, ambient dimension 1..3.
struct CubicalGrid {
    std::vector<double> lower, upper;
    std::vector<int> resolution;

    CubicalGrid() = default;
    CubicalGrid(std::vector<double> lower, std::vector<double> upper, std::vector<int> resolution);

    int dim() const { return static_cast<int>(resolution.size()); }
    std::size_t cells() const;
    double width(int axis) const { return (upper[axis] - lower[axis]) / resolution[axis]; }
    std::array<int, 3> multi(std::size_t index) const;
    std::size_t index(const std::array<int, 3>& m) const;
    Vec center(std::size_t index) const;
    double half_diagonal() const;
    CubicalGrid refined() const;
};

struct CubicalSet {
    CubicalGrid grid;
    // Sorted linear cell indices.
    std::vector<std::uint32_t> cells;

    bool contains(std::uint32_t c) const;
};

struct EnclosureOptions {
    // Time step in units of 1 / L, L the sampled Lipschitz bound.
    double time_scale = 0.5;
    double padding_factor = 1.5;
    int substeps = 8;
    std::size_t lipschitz_samples = 4096;
};

// Combinatorial outer approximation of the time-h reverse-flow map. The image of
// every cell is a box of cells; `exits` marks images reaching past the grid.
struct Enclosure {
    CubicalGrid grid;
    double h = 0.0;
    double lipschitz = 0.0;
    double padding = 0.0;
    std::vector<std::array<int, 3>> lo, hi;
    std::vector<bool> exits;

    bool maps_to(std::size_t from, std::size_t to) const;
};

Enclosure enclosure_map(const VectorField& field, const CubicalGrid& grid, const EnclosureOptions& options = {});

struct IndexPair {
    CubicalSet invariant;
    CubicalSet N, L;
    Enclosure map;
};

// N = S u F(S) for the combinatorial invariant part S, L = F(S) \ S.
// Throws NotIsolated when S comes within two cells of the frontier or F(S) leaves the grid.
IndexPair build_index_pair(const VectorField& field, const CubicalGrid& grid, const EnclosureOptions& options = {});

// Set-inclusion checks of the index-pair conditions; empty when all hold.
std::vector<std::string> index_pair_violations(const IndexPair& pair);

// H(N, L), which is the reduced homology of N / L.
HomologyResult relative_cubical_homology(const IndexPair& pair);

struct ConleyComparison {
    bool passed = false;
    HomologyResult morse;
    HomologyResult conley;
    std::string detail;
};

ConleyComparison conley_vs_morse(const VectorField& field, const CubicalGrid& region, const ComplexAssembly& assembly,
                                 const EnclosureOptions& options = {});

// Homology of a closed cubical set given by top cells (the manifold oracle).
HomologyResult cubical_homology(const CubicalSet& set);

}  // namespace morsecon

#endif
