#ifndef MORSECON_CHAIN_ALGEBRA_HPP
#define MORSECON_CHAIN_ALGEBRA_HPP

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "morsecon/errors.hpp"

namespace morsecon {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Dense row-major matrix of arbitrary precision integers.
class IntegerMatrix {
public:
    IntegerMatrix() = default;
    IntegerMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
    IntegerMatrix(std::initializer_list<std::initializer_list<long long>> rows);

    static IntegerMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    BigInt& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const BigInt& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    bool is_zero() const;
    IntegerMatrix transpose() const;
    IntegerMatrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;

    friend IntegerMatrix operator*(const IntegerMatrix& a, const IntegerMatrix& b);
    friend IntegerMatrix operator+(const IntegerMatrix& a, const IntegerMatrix& b);
    friend IntegerMatrix operator-(const IntegerMatrix& a, const IntegerMatrix& b);
    friend IntegerMatrix operator-(const IntegerMatrix& a);
    friend bool operator==(const IntegerMatrix& a, const IntegerMatrix& b);

    std::string str() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<BigInt> data_;
};

struct SmithForm {
    IntegerMatrix D;
    std::size_t rank = 0;
    std::vector<BigInt> divisors;
    // U * M * V = D with U, V unimodular; Uinv and Vinv are their inverses.
    IntegerMatrix U, Uinv, V, Vinv;
};

SmithForm smith_normal_form(const IntegerMatrix& m);

struct GradedGroup {
    int min_degree = 0;
    std::vector<std::size_t> ranks;

    std::size_t rank(int degree) const;
    int max_degree() const { return min_degree + static_cast<int>(ranks.size()) - 1; }
};

struct ChainComplex {
    GradedGroup groups;
    // differentials[k] : C_k -> C_{k-1}, shape rank(k-1) x rank(k). Absent entries are zero.
    std::map<int, IntegerMatrix> differentials;
    // Fractional part of a grading shift, kept out of the integer degree labels.
    Rational offset = 0;

    IntegerMatrix differential(int k) const;
};

struct HomologyDegree {
    int degree = 0;
    std::size_t betti = 0;
    std::vector<BigInt> torsion;

    friend bool operator==(const HomologyDegree&, const HomologyDegree&) = default;
};

struct HomologyResult {
    std::vector<HomologyDegree> degrees;
    Rational offset = 0;

    std::size_t betti(int degree) const;
    std::vector<BigInt> torsion(int degree) const;
    // Nonzero groups only, so results computed over different windows compare equal.
    std::vector<HomologyDegree> nonzero() const;
    bool same_groups(const HomologyResult& other) const;
    std::string str() const;
};

struct GradedMap {
    int degree_shift = 0;
    // blocks[k] : C_k -> C_{k + degree_shift}
    std::map<int, IntegerMatrix> blocks;

    IntegerMatrix block(int k, const GradedGroup& src, const GradedGroup& dst) const;
};

bool verify_complex(const ChainComplex& cc);
HomologyResult homology(const ChainComplex& cc);

// True iff f d = d f in every degree (shapes checked against cc).
bool is_chain_map(const ChainComplex& cc, const GradedMap& f);

struct InducedMap {
    int degree_shift = 0;
    // free[k] : free part of H_k -> free part of H_{k + shift}, in the chosen cycle bases.
    std::map<int, IntegerMatrix> free;
    bool is_zero() const;
};

InducedMap induced_map(const ChainComplex& cc, const GradedMap& f);
InducedMap compose(const InducedMap& g, const InducedMap& f);

// Source copy C_k sits in degree k, target copy C_j in degree j - s - 1, differential
// [[d, f], [0, -d]] on (target, source).
ChainComplex mapping_cone(const ChainComplex& cc, const GradedMap& f);

ChainComplex grading_shift(const ChainComplex& cc, const Rational& s);

// Number of U-tower steps: smallest n with the n-fold composite zero on homology.
int tower_order(const ChainComplex& cc, const GradedMap& f);

}  // namespace morsecon

#endif
