#include "morsecon/chain_algebra.hpp"

#include <algorithm>
#include <sstream>

namespace morsecon {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NotAComplex: return "NotAComplex";
        case ErrorKind::NotChainMap: return "NotChainMap";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ArityError: return "ArityError";
        case ErrorKind::NewtonDivergence: return "NewtonDivergence";
        case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
        case ErrorKind::NormalNotEigenvector: return "NormalNotEigenvector";
        case ErrorKind::NotEquivariant: return "NotEquivariant";
        case ErrorKind::BlowUp: return "BlowUp";
        case ErrorKind::CaptureAmbiguity: return "CaptureAmbiguity";
        case ErrorKind::SingularProjection: return "SingularProjection";
        case ErrorKind::NonTransverseCut: return "NonTransverseCut";
        case ErrorKind::Precondition: return "Precondition";
        case ErrorKind::LeakyRegion: return "LeakyRegion";
        case ErrorKind::ZeroEigenvalue: return "ZeroEigenvalue";
        case ErrorKind::CertificateMissing: return "CertificateMissing";
        case ErrorKind::CertificateFailure: return "CertificateFailure";
        case ErrorKind::NotIsolated: return "NotIsolated";
        case ErrorKind::PairingAmbiguous: return "PairingAmbiguous";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

IntegerMatrix::IntegerMatrix(std::initializer_list<std::initializer_list<long long>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorKind::ShapeMismatch, "ragged matrix literal");
        for (long long v : r) data_.emplace_back(v);
    }
}

IntegerMatrix IntegerMatrix::identity(std::size_t n) {
    IntegerMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
    return m;
}

bool IntegerMatrix::is_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](const BigInt& v) { return v.is_zero(); });
}

IntegerMatrix IntegerMatrix::transpose() const {
    IntegerMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

IntegerMatrix IntegerMatrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    IntegerMatrix b(nr, nc);
    for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
    return b;
}

IntegerMatrix operator*(const IntegerMatrix& a, const IntegerMatrix& b) {
    if (a.cols_ != b.rows_)
        throw Error(ErrorKind::ShapeMismatch, "product of " + std::to_string(a.rows_) + "x" +
                                                  std::to_string(a.cols_) + " and " + std::to_string(b.rows_) +
                                                  "x" + std::to_string(b.cols_));
    IntegerMatrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
        for (std::size_t k = 0; k < a.cols_; ++k) {
            const BigInt& aik = a(i, k);
            if (aik.is_zero()) continue;
            for (std::size_t j = 0; j < b.cols_; ++j)
                if (!b(k, j).is_zero()) c(i, j) += aik * b(k, j);
        }
    return c;
}

IntegerMatrix operator+(const IntegerMatrix& a, const IntegerMatrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw Error(ErrorKind::ShapeMismatch, "sum shape");
    IntegerMatrix c = a;
    for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] += b.data_[i];
    return c;
}

IntegerMatrix operator-(const IntegerMatrix& a, const IntegerMatrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw Error(ErrorKind::ShapeMismatch, "difference shape");
    IntegerMatrix c = a;
    for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] -= b.data_[i];
    return c;
}

IntegerMatrix operator-(const IntegerMatrix& a) {
    IntegerMatrix c = a;
    for (auto& v : c.data_) v = -v;
    return c;
}

bool operator==(const IntegerMatrix& a, const IntegerMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
}

std::string IntegerMatrix::str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < rows_; ++i) {
        os << (i ? ",[" : "[");
        for (std::size_t j = 0; j < cols_; ++j) os << (j ? "," : "") << (*this)(i, j);
        os << "]";
    }
    os << "]";
    return os.str();
}

namespace {

class SnfWorker {
public:
    SnfWorker(const IntegerMatrix& m, bool track) : a(m), track_(track) {
        if (track_) {
            U = Uinv = IntegerMatrix::identity(m.rows());
            V = Vinv = IntegerMatrix::identity(m.cols());
        }
    }

    void swap_rows(std::size_t i, std::size_t j) {
        if (i == j) return;
        for (std::size_t c = 0; c < a.cols(); ++c) std::swap(a(i, c), a(j, c));
        if (!track_) return;
        for (std::size_t c = 0; c < U.cols(); ++c) std::swap(U(i, c), U(j, c));
        for (std::size_t r = 0; r < Uinv.rows(); ++r) std::swap(Uinv(r, i), Uinv(r, j));
    }

    void swap_cols(std::size_t i, std::size_t j) {
        if (i == j) return;
        for (std::size_t r = 0; r < a.rows(); ++r) std::swap(a(r, i), a(r, j));
        if (!track_) return;
        for (std::size_t r = 0; r < V.rows(); ++r) std::swap(V(r, i), V(r, j));
        for (std::size_t c = 0; c < Vinv.cols(); ++c) std::swap(Vinv(i, c), Vinv(j, c));
    }

    // row_i += q * row_j
    void add_row(std::size_t i, std::size_t j, const BigInt& q) {
        for (std::size_t c = 0; c < a.cols(); ++c)
            if (!a(j, c).is_zero()) a(i, c) += q * a(j, c);
        if (!track_) return;
        for (std::size_t c = 0; c < U.cols(); ++c)
            if (!U(j, c).is_zero()) U(i, c) += q * U(j, c);
        for (std::size_t r = 0; r < Uinv.rows(); ++r)
            if (!Uinv(r, i).is_zero()) Uinv(r, j) -= q * Uinv(r, i);
    }

    // col_i += q * col_j
    void add_col(std::size_t i, std::size_t j, const BigInt& q) {
        for (std::size_t r = 0; r < a.rows(); ++r)
            if (!a(r, j).is_zero()) a(r, i) += q * a(r, j);
        if (!track_) return;
        for (std::size_t r = 0; r < V.rows(); ++r)
            if (!V(r, j).is_zero()) V(r, i) += q * V(r, j);
        for (std::size_t c = 0; c < Vinv.cols(); ++c)
            if (!Vinv(i, c).is_zero()) Vinv(j, c) -= q * Vinv(i, c);
    }

    void negate_row(std::size_t i) {
        for (std::size_t c = 0; c < a.cols(); ++c) a(i, c) = -a(i, c);
        if (!track_) return;
        for (std::size_t c = 0; c < U.cols(); ++c) U(i, c) = -U(i, c);
        for (std::size_t r = 0; r < Uinv.rows(); ++r) Uinv(r, i) = -Uinv(r, i);
    }

    std::size_t run() {
        const std::size_t m = a.rows(), n = a.cols();
        std::size_t t = 0;
        while (t < std::min(m, n)) {
            std::size_t pi = m, pj = n;
            BigInt best;
            for (std::size_t i = t; i < m; ++i)
                for (std::size_t j = t; j < n; ++j) {
                    if (a(i, j).is_zero()) continue;
                    BigInt v = abs(a(i, j));
                    if (pi == m || v < best) {
                        best = v;
                        pi = i;
                        pj = j;
                        if (best == 1) goto found;
                    }
                }
        found:
            if (pi == m) break;
            swap_rows(t, pi);
            swap_cols(t, pj);
            for (;;) {
                bool dirty = false;
                for (std::size_t i = t + 1; i < m; ++i) {
                    if (a(i, t).is_zero()) continue;
                    BigInt q = a(i, t) / a(t, t);
                    if (!q.is_zero()) add_row(i, t, -q);
                    if (!a(i, t).is_zero()) dirty = true;
                }
                for (std::size_t j = t + 1; j < n; ++j) {
                    if (a(t, j).is_zero()) continue;
                    BigInt q = a(t, j) / a(t, t);
                    if (!q.is_zero()) add_col(j, t, -q);
                    if (!a(t, j).is_zero()) dirty = true;
                }
                if (dirty) {
                    std::size_t bi = t, bj = t;
                    BigInt bv = abs(a(t, t));
                    for (std::size_t i = t + 1; i < m; ++i)
                        if (!a(i, t).is_zero() && abs(a(i, t)) < bv) {
                            bv = abs(a(i, t));
                            bi = i;
                            bj = t;
                        }
                    for (std::size_t j = t + 1; j < n; ++j)
                        if (!a(t, j).is_zero() && abs(a(t, j)) < bv) {
                            bv = abs(a(t, j));
                            bi = t;
                            bj = j;
                        }
                    swap_rows(t, bi);
                    swap_cols(t, bj);
                    continue;
                }
                bool divisible = true;
                for (std::size_t i = t + 1; i < m && divisible; ++i)
                    for (std::size_t j = t + 1; j < n; ++j)
                        if (!a(i, j).is_zero() && BigInt(a(i, j) % a(t, t)) != 0) {
                            add_row(t, i, 1);
                            divisible = false;
                            break;
                        }
                if (divisible) break;
            }
            if (a(t, t) < 0) negate_row(t);
            ++t;
        }
        return t;
    }

    IntegerMatrix a, U, Uinv, V, Vinv;

private:
    bool track_;
};

SmithForm snf(const IntegerMatrix& m, bool track) {
    SnfWorker w(m, track);
    SmithForm out;
    out.rank = w.run();
    for (std::size_t i = 0; i < out.rank; ++i) out.divisors.push_back(w.a(i, i));
    out.D = std::move(w.a);
    out.U = std::move(w.U);
    out.Uinv = std::move(w.Uinv);
    out.V = std::move(w.V);
    out.Vinv = std::move(w.Vinv);
    return out;
}

}  // namespace

SmithForm smith_normal_form(const IntegerMatrix& m) { return snf(m, true); }

std::size_t GradedGroup::rank(int degree) const {
    if (degree < min_degree) return 0;
    std::size_t idx = static_cast<std::size_t>(degree - min_degree);
    return idx < ranks.size() ? ranks[idx] : 0;
}

IntegerMatrix ChainComplex::differential(int k) const {
    auto it = differentials.find(k);
    if (it != differentials.end()) return it->second;
    return IntegerMatrix(groups.rank(k - 1), groups.rank(k));
}

IntegerMatrix GradedMap::block(int k, const GradedGroup& src, const GradedGroup& dst) const {
    auto it = blocks.find(k);
    if (it != blocks.end()) return it->second;
    return IntegerMatrix(dst.rank(k + degree_shift), src.rank(k));
}

namespace {

void check_shapes(const ChainComplex& cc) {
    for (const auto& [k, d] : cc.differentials) {
        if (d.rows() != cc.groups.rank(k - 1) || d.cols() != cc.groups.rank(k))
            throw Error(ErrorKind::ShapeMismatch, "differential in degree " + std::to_string(k) + " is " +
                                                      std::to_string(d.rows()) + "x" + std::to_string(d.cols()) +
                                                      ", expected " + std::to_string(cc.groups.rank(k - 1)) + "x" +
                                                      std::to_string(cc.groups.rank(k)));
    }
}

}  // namespace

bool verify_complex(const ChainComplex& cc) {
    check_shapes(cc);
    for (const auto& [k, d] : cc.differentials) {
        auto prev = cc.differentials.find(k - 1);
        if (prev == cc.differentials.end()) continue;
        if (!(prev->second * d).is_zero()) return false;
    }
    return true;
}

std::size_t HomologyResult::betti(int degree) const {
    for (const auto& h : degrees)
        if (h.degree == degree) return h.betti;
    return 0;
}

std::vector<BigInt> HomologyResult::torsion(int degree) const {
    for (const auto& h : degrees)
        if (h.degree == degree) return h.torsion;
    return {};
}

std::vector<HomologyDegree> HomologyResult::nonzero() const {
    std::vector<HomologyDegree> out;
    for (const auto& h : degrees)
        if (h.betti > 0 || !h.torsion.empty()) out.push_back(h);
    return out;
}

bool HomologyResult::same_groups(const HomologyResult& other) const {
    return offset == other.offset && nonzero() == other.nonzero();
}

std::string HomologyResult::str() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& h : nonzero()) {
        os << (first ? "" : ", ") << "H" << h.degree << "=";
        first = false;
        bool term = false;
        if (h.betti > 0) {
            os << "Z";
            if (h.betti > 1) os << "^" << h.betti;
            term = true;
        }
        for (const auto& t : h.torsion) {
            os << (term ? "+" : "") << "Z/" << t;
            term = true;
        }
    }
    if (first) os << "0";
    return os.str();
}

HomologyResult homology(const ChainComplex& cc) {
    if (!verify_complex(cc)) throw Error(ErrorKind::NotAComplex, "composite of consecutive differentials is nonzero");
    HomologyResult out;
    out.offset = cc.offset;
    const int lo = cc.groups.min_degree;
    const int hi = cc.groups.max_degree();
    std::map<int, SmithForm> forms;
    for (int k = lo; k <= hi + 1; ++k) forms.emplace(k, snf(cc.differential(k), false));
    for (int k = lo; k <= hi; ++k) {
        HomologyDegree h;
        h.degree = k;
        const std::size_t n = cc.groups.rank(k);
        const std::size_t rk = forms.at(k).rank;
        const auto& next = forms.at(k + 1);
        h.betti = n - rk - next.rank;
        for (const auto& d : next.divisors)
            if (d > 1) h.torsion.push_back(d);
        out.degrees.push_back(std::move(h));
    }
    return out;
}

bool is_chain_map(const ChainComplex& cc, const GradedMap& f) {
    check_shapes(cc);
    const int lo = cc.groups.min_degree, hi = cc.groups.max_degree();
    for (const auto& [k, b] : f.blocks)
        if (b.rows() != cc.groups.rank(k + f.degree_shift) || b.cols() != cc.groups.rank(k))
            throw Error(ErrorKind::ShapeMismatch, "map block in degree " + std::to_string(k));
    for (int k = lo; k <= hi; ++k) {
        IntegerMatrix lhs = f.block(k - 1, cc.groups, cc.groups) * cc.differential(k);
        IntegerMatrix rhs = cc.differential(k + f.degree_shift) * f.block(k, cc.groups, cc.groups);
        if (!(lhs == rhs)) return false;
    }
    return true;
}

namespace {

// Cycle basis bookkeeping for one degree.
struct DegreeBasis {
    std::size_t n = 0, z = 0, rprime = 0, betti = 0;
    IntegerMatrix kernel;       // n x z
    IntegerMatrix kernel_coord; // z x n, left inverse of kernel on cycles
    IntegerMatrix Uprime, Uprime_inv;

    IntegerMatrix free_generators() const {
        IntegerMatrix g = kernel * Uprime_inv;
        return g.block(0, rprime, n, betti);
    }
    IntegerMatrix free_coordinates(const IntegerMatrix& cycles) const {
        IntegerMatrix c = Uprime * (kernel_coord * cycles);
        return c.block(rprime, 0, betti, cycles.cols());
    }
};

DegreeBasis degree_basis(const ChainComplex& cc, int k) {
    DegreeBasis b;
    b.n = cc.groups.rank(k);
    SmithForm s = snf(cc.differential(k), true);
    b.z = b.n - s.rank;
    b.kernel = s.V.block(0, s.rank, b.n, b.z);
    b.kernel_coord = s.Vinv.block(s.rank, 0, b.z, b.n);
    IntegerMatrix img = b.kernel_coord * cc.differential(k + 1);
    SmithForm t = snf(img, true);
    b.rprime = t.rank;
    b.betti = b.z - t.rank;
    b.Uprime = t.U;
    b.Uprime_inv = t.Uinv;
    return b;
}

}  // namespace

bool InducedMap::is_zero() const {
    return std::all_of(free.begin(), free.end(), [](const auto& kv) { return kv.second.is_zero(); });
}

InducedMap induced_map(const ChainComplex& cc, const GradedMap& f) {
    if (!verify_complex(cc)) throw Error(ErrorKind::NotAComplex, "induced map on a non-complex");
    if (!is_chain_map(cc, f)) throw Error(ErrorKind::NotChainMap, "f d != d f");
    InducedMap out;
    out.degree_shift = f.degree_shift;
    const int lo = cc.groups.min_degree, hi = cc.groups.max_degree();
    std::map<int, DegreeBasis> bases;
    for (int k = lo; k <= hi; ++k) bases.emplace(k, degree_basis(cc, k));
    for (int k = lo; k <= hi; ++k) {
        const int t = k + f.degree_shift;
        const DegreeBasis& src = bases.at(k);
        if (t < lo || t > hi) {
            out.free[k] = IntegerMatrix(0, src.betti);
            continue;
        }
        const DegreeBasis& dst = bases.at(t);
        IntegerMatrix images = f.block(k, cc.groups, cc.groups) * src.free_generators();
        out.free[k] = dst.free_coordinates(images);
    }
    return out;
}

InducedMap compose(const InducedMap& g, const InducedMap& f) {
    InducedMap out;
    out.degree_shift = f.degree_shift + g.degree_shift;
    for (const auto& [k, fk] : f.free) {
        auto it = g.free.find(k + f.degree_shift);
        if (it == g.free.end()) {
            out.free[k] = IntegerMatrix(0, fk.cols());
            continue;
        }
        out.free[k] = it->second * fk;
    }
    return out;
}

ChainComplex mapping_cone(const ChainComplex& cc, const GradedMap& f) {
    if (!verify_complex(cc)) throw Error(ErrorKind::NotAComplex, "cone of a non-complex");
    if (!is_chain_map(cc, f)) throw Error(ErrorKind::NotChainMap, "cone of a non-chain map");
    const int s = f.degree_shift;
    const int lo = cc.groups.min_degree, hi = cc.groups.max_degree();
    const int tshift = -s - 1;
    const int clo = std::min(lo, lo + tshift), chi = std::max(hi, hi + tshift);
    ChainComplex cone;
    cone.offset = cc.offset;
    cone.groups.min_degree = clo;
    auto src_rank = [&](int n) { return cc.groups.rank(n); };
    auto tgt_rank = [&](int n) { return cc.groups.rank(n - tshift); };
    for (int n = clo; n <= chi; ++n) cone.groups.ranks.push_back(tgt_rank(n) + src_rank(n));
    for (int n = clo; n <= chi + 1; ++n) {
        const std::size_t tr = tgt_rank(n - 1), sr = src_rank(n - 1);
        const std::size_t tc = tgt_rank(n), sc = src_rank(n);
        if ((tr + sr) == 0 || (tc + sc) == 0) continue;
        IntegerMatrix D(tr + sr, tc + sc);
        IntegerMatrix dt = cc.differential(n - tshift);
        IntegerMatrix fb = f.block(n, cc.groups, cc.groups);
        IntegerMatrix ds = cc.differential(n);
        for (std::size_t i = 0; i < tr; ++i)
            for (std::size_t j = 0; j < tc; ++j) D(i, j) = dt(i, j);
        for (std::size_t i = 0; i < tr; ++i)
            for (std::size_t j = 0; j < sc; ++j) D(i, tc + j) = fb(i, j);
        for (std::size_t i = 0; i < sr; ++i)
            for (std::size_t j = 0; j < sc; ++j) D(tr + i, tc + j) = -ds(i, j);
        if (!D.is_zero()) cone.differentials[n] = std::move(D);
    }
    return cone;
}

ChainComplex grading_shift(const ChainComplex& cc, const Rational& s) {
    using boost::multiprecision::denominator;
    using boost::multiprecision::numerator;
    Rational total = s + cc.offset;
    BigInt fl = numerator(total) / denominator(total);
    if (numerator(total) < 0 && BigInt(numerator(total) % denominator(total)) != 0) fl -= 1;
    const int shift = static_cast<int>(fl);
    ChainComplex out;
    out.offset = total - Rational(fl);
    out.groups.min_degree = cc.groups.min_degree + shift;
    out.groups.ranks = cc.groups.ranks;
    for (const auto& [k, d] : cc.differentials) out.differentials[k + shift] = d;
    return out;
}

int tower_order(const ChainComplex& cc, const GradedMap& f) {
    InducedMap base = induced_map(cc, f);
    InducedMap power = base;
    const int limit = static_cast<int>(cc.groups.ranks.size()) + 2;
    for (int n = 1; n <= limit; ++n) {
        if (power.is_zero()) return n;
        power = compose(base, power);
    }
    return limit + 1;
}

}  // namespace morsecon
