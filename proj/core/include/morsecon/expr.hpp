#ifndef MORSECON_EXPR_HPP
#define MORSECON_EXPR_HPP

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morsecon {

// Scalar expression over real variables x1..xm. Grammar: numeric literals,
// pi, + - * /, ^ with a non-negative integer literal exponent, sin, cos, exp,
// parentheses.
class Expr {
public:
    enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp };

    struct Node {
        Op op;
        double value = 0.0;  // Const
        int index = 0;       // Var (0-based) or Pow exponent
        std::shared_ptr<const Node> a, b;
    };
    using NodePtr = std::shared_ptr<const Node>;

    Expr() = default;
    explicit Expr(NodePtr root);

    static Expr constant(double v);
    static Expr variable(int index);

    double eval(const double* x) const;
    double eval(const Eigen::VectorXd& x) const { return eval(x.data()); }
    Expr derivative(int var) const;
    bool is_constant(double* value = nullptr) const;
    // Largest variable index referenced plus one.
    int arity() const;
    std::string str() const;
    const NodePtr& root() const { return root_; }

private:
    struct Instr {
        Op op;
        double value;
        int index;
    };
    void compile();

    NodePtr root_;
    std::vector<Instr> tape_;
    int depth_ = 0;
};

Expr parse_scalar(const std::string& text);
// "(e1, e2, ...)"; a bare expression is a single component.
std::vector<Expr> parse_tuple(const std::string& text);

}  // namespace morsecon

#endif
