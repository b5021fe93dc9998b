#include "morsecon/expr.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "morsecon/errors.hpp"

namespace morsecon {

namespace {

using Op = Expr::Op;
using NodePtr = Expr::NodePtr;

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr, double value = 0.0, int index = 0) {
    auto n = std::make_shared<Expr::Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    n->value = value;
    n->index = index;
    return n;
}

bool const_value(const NodePtr& n, double& v) {
    if (n->op != Op::Const) return false;
    v = n->value;
    return true;
}

NodePtr cst(double v) { return make(Op::Const, nullptr, nullptr, v); }

NodePtr add(NodePtr a, NodePtr b) {
    double x, y;
    bool ca = const_value(a, x), cb = const_value(b, y);
    if (ca && cb) return cst(x + y);
    if (ca && x == 0.0) return b;
    if (cb && y == 0.0) return a;
    return make(Op::Add, a, b);
}

NodePtr neg(NodePtr a) {
    double x;
    if (const_value(a, x)) return cst(-x);
    if (a->op == Op::Neg) return a->a;
    return make(Op::Neg, a);
}

NodePtr sub(NodePtr a, NodePtr b) {
    double x, y;
    bool ca = const_value(a, x), cb = const_value(b, y);
    if (ca && cb) return cst(x - y);
    if (cb && y == 0.0) return a;
    if (ca && x == 0.0) return neg(b);
    return make(Op::Sub, a, b);
}

NodePtr mul(NodePtr a, NodePtr b) {
    double x, y;
    bool ca = const_value(a, x), cb = const_value(b, y);
    if (ca && cb) return cst(x * y);
    if ((ca && x == 0.0) || (cb && y == 0.0)) return cst(0.0);
    if (ca && x == 1.0) return b;
    if (cb && y == 1.0) return a;
    if (ca && x == -1.0) return neg(b);
    if (cb && y == -1.0) return neg(a);
    return make(Op::Mul, a, b);
}

NodePtr divide(NodePtr a, NodePtr b) {
    double x, y;
    bool ca = const_value(a, x), cb = const_value(b, y);
    if (ca && cb) return cst(x / y);
    if (ca && x == 0.0) return cst(0.0);
    if (cb && y == 1.0) return a;
    return make(Op::Div, a, b);
}

NodePtr power(NodePtr a, int n) {
    double x;
    if (n == 0) return cst(1.0);
    if (n == 1) return a;
    if (const_value(a, x)) return cst(std::pow(x, n));
    return make(Op::Pow, a, nullptr, 0.0, n);
}

NodePtr unary(Op op, NodePtr a) {
    double x;
    if (const_value(a, x)) {
        switch (op) {
            case Op::Sin: return cst(std::sin(x));
            case Op::Cos: return cst(std::cos(x));
            case Op::Exp: return cst(std::exp(x));
            default: break;
        }
    }
    return make(op, a);
}

NodePtr diff(const NodePtr& n, int var) {
    switch (n->op) {
        case Op::Const: return cst(0.0);
        case Op::Var: return cst(n->index == var ? 1.0 : 0.0);
        case Op::Add: return add(diff(n->a, var), diff(n->b, var));
        case Op::Sub: return sub(diff(n->a, var), diff(n->b, var));
        case Op::Neg: return neg(diff(n->a, var));
        case Op::Mul: return add(mul(diff(n->a, var), n->b), mul(n->a, diff(n->b, var)));
        case Op::Div: {
            NodePtr num = sub(mul(diff(n->a, var), n->b), mul(n->a, diff(n->b, var)));
            return divide(num, power(n->b, 2));
        }
        case Op::Pow:
            return mul(mul(cst(static_cast<double>(n->index)), power(n->a, n->index - 1)), diff(n->a, var));
        case Op::Sin: return mul(unary(Op::Cos, n->a), diff(n->a, var));
        case Op::Cos: return neg(mul(unary(Op::Sin, n->a), diff(n->a, var)));
        case Op::Exp: return mul(unary(Op::Exp, n->a), diff(n->a, var));
    }
    return cst(0.0);
}

void to_string(const NodePtr& n, std::ostringstream& os) {
    switch (n->op) {
        case Op::Const: {
            std::ostringstream v;
            v.precision(17);
            v << n->value;
            os << v.str();
            return;
        }
        case Op::Var: os << "x" << (n->index + 1); return;
        case Op::Add: os << "("; to_string(n->a, os); os << " + "; to_string(n->b, os); os << ")"; return;
        case Op::Sub: os << "("; to_string(n->a, os); os << " - "; to_string(n->b, os); os << ")"; return;
        case Op::Mul: os << "("; to_string(n->a, os); os << "*"; to_string(n->b, os); os << ")"; return;
        case Op::Div: os << "("; to_string(n->a, os); os << "/"; to_string(n->b, os); os << ")"; return;
        case Op::Neg: os << "(-"; to_string(n->a, os); os << ")"; return;
        case Op::Pow: os << "("; to_string(n->a, os); os << ")^" << n->index; return;
        case Op::Sin: os << "sin("; to_string(n->a, os); os << ")"; return;
        case Op::Cos: os << "cos("; to_string(n->a, os); os << ")"; return;
        case Op::Exp: os << "exp("; to_string(n->a, os); os << ")"; return;
    }
}

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    NodePtr expression() {
        NodePtr lhs = term();
        for (;;) {
            skip();
            if (peek('+')) {
                ++pos_;
                lhs = add(lhs, term());
            } else if (peek('-')) {
                ++pos_;
                lhs = sub(lhs, term());
            } else {
                return lhs;
            }
        }
    }

    std::vector<NodePtr> tuple() {
        skip();
        std::vector<NodePtr> out;
        if (!peek('(')) {
            out.push_back(expression());
            finish();
            return out;
        }
        // A parenthesized single expression followed by an operator is a scalar.
        std::size_t save = pos_;
        ++pos_;
        skip();
        if (pos_ >= s_.size()) fail("unclosed parenthesis", save);
        out.push_back(expression());
        skip();
        if (peek(')')) {
            ++pos_;
            skip();
            if (pos_ < s_.size()) {
                pos_ = save;
                out.clear();
                out.push_back(expression());
            }
            finish();
            return out;
        }
        while (peek(',')) {
            ++pos_;
            skip();
            if (pos_ >= s_.size()) fail("unclosed parenthesis", save);
            out.push_back(expression());
            skip();
        }
        if (!peek(')')) fail("unclosed parenthesis", save);
        ++pos_;
        finish();
        return out;
    }

    void finish() {
        skip();
        if (pos_ != s_.size()) fail("unexpected trailing input");
    }

private:
    NodePtr term() {
        NodePtr lhs = signed_factor();
        for (;;) {
            skip();
            if (peek('*')) {
                ++pos_;
                lhs = mul(lhs, signed_factor());
            } else if (peek('/')) {
                ++pos_;
                lhs = divide(lhs, signed_factor());
            } else {
                return lhs;
            }
        }
    }

    NodePtr signed_factor() {
        skip();
        if (peek('-')) {
            ++pos_;
            return neg(signed_factor());
        }
        if (peek('+')) {
            ++pos_;
            return signed_factor();
        }
        return factor();
    }

    NodePtr factor() {
        NodePtr base = primary();
        skip();
        if (peek('^')) {
            ++pos_;
            skip();
            std::size_t at = pos_;
            bool paren = peek('(');
            if (paren) {
                ++pos_;
                skip();
            }
            if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_])))
                fail("exponent must be a non-negative integer literal", at);
            long n = 0;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                n = n * 10 + (s_[pos_] - '0');
                if (n > 1000) fail("exponent too large", at);
                ++pos_;
            }
            if (pos_ < s_.size() && (s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E'))
                fail("exponent must be a non-negative integer literal", at);
            if (paren) {
                skip();
                expect(')');
            }
            return power(base, static_cast<int>(n));
        }
        return base;
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (c == '(') {
            std::size_t open = pos_;
            ++pos_;
            NodePtr e = expression();
            skip();
            if (!peek(')')) fail("unclosed parenthesis", open);
            ++pos_;
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            std::string name = s_.substr(start, pos_ - start);
            if (name == "pi") return cst(std::numbers::pi);
            if (name == "sin" || name == "cos" || name == "exp") {
                skip();
                if (!peek('(')) fail("expected '(' after " + name);
                std::size_t open = pos_;
                ++pos_;
                NodePtr arg = expression();
                skip();
                if (!peek(')')) fail("unclosed parenthesis", open);
                ++pos_;
                Op op = name == "sin" ? Op::Sin : name == "cos" ? Op::Cos : Op::Exp;
                return unary(op, arg);
            }
            if (name.size() >= 2 && name[0] == 'x') {
                bool digits = true;
                for (std::size_t i = 1; i < name.size(); ++i)
                    digits = digits && std::isdigit(static_cast<unsigned char>(name[i]));
                int idx = digits ? std::stoi(name.substr(1)) : 0;
                if (digits && idx >= 1) return make(Op::Var, nullptr, nullptr, 0.0, idx - 1);
            }
            fail("unknown identifier '" + name + "'", start);
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr number() {
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        return cst(v);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool peek(char c) const { return pos_ < s_.size() && s_[pos_] == c; }
    void expect(char c) {
        skip();
        if (!peek(c)) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    [[noreturn]] void fail(const std::string& what) { fail(what, pos_); }
    [[noreturn]] void fail(const std::string& what, std::size_t at) {
        throw Error(ErrorKind::ParseError, what + " at byte " + std::to_string(at));
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr::Expr(NodePtr root) : root_(std::move(root)) { compile(); }

Expr Expr::constant(double v) { return Expr(cst(v)); }
Expr Expr::variable(int index) { return Expr(make(Op::Var, nullptr, nullptr, 0.0, index)); }

void Expr::compile() {
    tape_.clear();
    int depth = 0;
    depth_ = 0;
    auto emit = [&](auto&& self, const NodePtr& n) -> void {
        if (n->a) self(self, n->a);
        if (n->b) self(self, n->b);
        tape_.push_back({n->op, n->value, n->index});
        switch (n->op) {
            case Op::Const:
            case Op::Var: ++depth; break;
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div: --depth; break;
            default: break;
        }
        depth_ = std::max(depth_, depth);
    };
    if (root_) emit(emit, root_);
}

double Expr::eval(const double* x) const {
    if (tape_.empty()) return 0.0;
    double stack_small[64];
    std::vector<double> stack_big;
    double* st = stack_small;
    if (depth_ > 64) {
        stack_big.resize(static_cast<std::size_t>(depth_));
        st = stack_big.data();
    }
    int sp = 0;
    for (const Instr& in : tape_) {
        switch (in.op) {
            case Op::Const: st[sp++] = in.value; break;
            case Op::Var: st[sp++] = x[in.index]; break;
            case Op::Add: --sp; st[sp - 1] += st[sp]; break;
            case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
            case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
            case Op::Div: --sp; st[sp - 1] /= st[sp]; break;
            case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::Pow: {
                double b = st[sp - 1], r = 1.0;
                for (int k = 0; k < in.index; ++k) r *= b;
                st[sp - 1] = r;
                break;
            }
            case Op::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
            case Op::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
            case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
        }
    }
    return st[0];
}

Expr Expr::derivative(int var) const { return Expr(root_ ? diff(root_, var) : cst(0.0)); }

bool Expr::is_constant(double* value) const {
    if (!root_) {
        if (value) *value = 0.0;
        return true;
    }
    double v;
    if (!const_value(root_, v)) return false;
    if (value) *value = v;
    return true;
}

int Expr::arity() const {
    int m = 0;
    for (const Instr& in : tape_)
        if (in.op == Op::Var) m = std::max(m, in.index + 1);
    return m;
}

std::string Expr::str() const {
    if (!root_) return "0";
    std::ostringstream os;
    to_string(root_, os);
    return os.str();
}

Expr parse_scalar(const std::string& text) {
    Parser p(text);
    NodePtr e = p.expression();
    p.finish();
    return Expr(e);
}

std::vector<Expr> parse_tuple(const std::string& text) {
    Parser p(text);
    std::vector<Expr> out;
    for (auto& n : p.tuple()) out.emplace_back(n);
    return out;
}

}  // namespace morsecon
