#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "qmeas/errors.hpp"

namespace qmeas {

/// Arithmetic expression over the coordinates x1..xN and the time t,
/// compiled once and evaluated per grid point. Supported: + - * / ^,
/// parentheses, unary minus, the usual elementary functions, pi and e.
class Expression {
public:
    static Expression parse(const std::string& text, int n_coords) {
        Parser p{text, 0, n_coords};
        Expression e;
        e.root_ = p.parse_sum();
        p.skip_ws();
        if (p.pos != text.size())
            throw ConfigError("expression: trailing input at position " + std::to_string(p.pos));
        return e;
    }

    double eval(const std::vector<double>& x, double t) const { return root_->eval(x, t); }

private:
    struct Node {
        virtual ~Node() = default;
        virtual double eval(const std::vector<double>& x, double t) const = 0;
    };
    using NodePtr = std::unique_ptr<Node>;

    struct Const : Node {
        double v;
        explicit Const(double v) : v(v) {}
        double eval(const std::vector<double>&, double) const override { return v; }
    };
    struct Coord : Node {
        std::size_t j;
        explicit Coord(std::size_t j) : j(j) {}
        double eval(const std::vector<double>& x, double) const override { return x[j]; }
    };
    struct Time : Node {
        double eval(const std::vector<double>&, double t) const override { return t; }
    };
    struct Binary : Node {
        char op;
        NodePtr a, b;
        Binary(char op, NodePtr a, NodePtr b) : op(op), a(std::move(a)), b(std::move(b)) {}
        double eval(const std::vector<double>& x, double t) const override {
            const double u = a->eval(x, t);
            const double v = b->eval(x, t);
            switch (op) {
            case '+': return u + v;
            case '-': return u - v;
            case '*': return u * v;
            case '/': return u / v;
            default: return std::pow(u, v);
            }
        }
    };
    struct Negate : Node {
        NodePtr a;
        explicit Negate(NodePtr a) : a(std::move(a)) {}
        double eval(const std::vector<double>& x, double t) const override {
            return -a->eval(x, t);
        }
    };
    struct Call1 : Node {
        double (*fn)(double);
        NodePtr a;
        Call1(double (*fn)(double), NodePtr a) : fn(fn), a(std::move(a)) {}
        double eval(const std::vector<double>& x, double t) const override {
            return fn(a->eval(x, t));
        }
    };
    struct Call2 : Node {
        double (*fn)(double, double);
        NodePtr a, b;
        Call2(double (*fn)(double, double), NodePtr a, NodePtr b)
            : fn(fn), a(std::move(a)), b(std::move(b)) {}
        double eval(const std::vector<double>& x, double t) const override {
            return fn(a->eval(x, t), b->eval(x, t));
        }
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;
        int n_coords;

        void skip_ws() {
            while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
        }
        bool consume(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        NodePtr parse_sum() {
            NodePtr lhs = parse_term();
            while (true) {
                if (consume('+'))
                    lhs = std::make_unique<Binary>('+', std::move(lhs), parse_term());
                else if (consume('-'))
                    lhs = std::make_unique<Binary>('-', std::move(lhs), parse_term());
                else
                    return lhs;
            }
        }

        NodePtr parse_term() {
            NodePtr lhs = parse_power();
            while (true) {
                if (consume('*'))
                    lhs = std::make_unique<Binary>('*', std::move(lhs), parse_power());
                else if (consume('/'))
                    lhs = std::make_unique<Binary>('/', std::move(lhs), parse_power());
                else
                    return lhs;
            }
        }

        NodePtr parse_power() {
            NodePtr base = parse_unary();
            if (consume('^'))
                return std::make_unique<Binary>('^', std::move(base), parse_power());
            return base;
        }

        NodePtr parse_unary() {
            if (consume('-')) return std::make_unique<Negate>(parse_unary());
            consume('+');
            return parse_primary();
        }

        NodePtr parse_primary() {
            skip_ws();
            if (pos >= s.size()) throw ConfigError("expression: unexpected end of input");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                NodePtr inner = parse_sum();
                if (!consume(')')) throw ConfigError("expression: missing ')'");
                return inner;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t used = 0;
                const double v = std::stod(s.substr(pos), &used);
                pos += used;
                return std::make_unique<Const>(v);
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::size_t end = pos;
                while (end < s.size() &&
                       (std::isalnum(static_cast<unsigned char>(s[end])) || s[end] == '_'))
                    ++end;
                const std::string name = s.substr(pos, end - pos);
                pos = end;
                skip_ws();
                if (pos < s.size() && s[pos] == '(') return parse_call(name);
                return make_symbol(name);
            }
            throw ConfigError(std::string("expression: unexpected character '") + c + "'");
        }

        NodePtr parse_call(const std::string& name) {
            ++pos; // '('
            std::vector<NodePtr> args;
            if (!consume(')')) {
                args.push_back(parse_sum());
                while (consume(',')) args.push_back(parse_sum());
                if (!consume(')')) throw ConfigError("expression: missing ')' in call");
            }
            static const std::map<std::string, double (*)(double)> unary = {
                {"sin", std::sin},   {"cos", std::cos},   {"tan", std::tan},
                {"exp", std::exp},   {"log", std::log},   {"sqrt", std::sqrt},
                {"abs", std::fabs},  {"tanh", std::tanh}, {"sinh", std::sinh},
                {"cosh", std::cosh},
            };
            static const std::map<std::string, double (*)(double, double)> binary = {
                {"pow", std::pow},
                {"min", [](double a, double b) { return std::min(a, b); }},
                {"max", [](double a, double b) { return std::max(a, b); }},
            };
            if (auto it = unary.find(name); it != unary.end()) {
                if (args.size() != 1)
                    throw ConfigError("expression: " + name + " takes one argument");
                return std::make_unique<Call1>(it->second, std::move(args[0]));
            }
            if (auto it = binary.find(name); it != binary.end()) {
                if (args.size() != 2)
                    throw ConfigError("expression: " + name + " takes two arguments");
                return std::make_unique<Call2>(it->second, std::move(args[0]),
                                               std::move(args[1]));
            }
            throw ConfigError("expression: unknown function '" + name + "'");
        }

        NodePtr make_symbol(const std::string& name) {
            if (name == "t") return std::make_unique<Time>();
            if (name == "pi") return std::make_unique<Const>(std::numbers::pi);
            if (name == "e") return std::make_unique<Const>(std::numbers::e);
            if (name.size() >= 2 && name[0] == 'x') {
                const std::string num = name.substr(1);
                bool digits = !num.empty();
                for (char d : num)
                    if (!std::isdigit(static_cast<unsigned char>(d))) digits = false;
                if (digits) {
                    const int j = std::stoi(num);
                    if (j < 1 || j > n_coords)
                        throw ConfigError("expression: coordinate " + name + " out of range");
                    return std::make_unique<Coord>(static_cast<std::size_t>(j - 1));
                }
            }
            throw ConfigError("expression: unknown symbol '" + name + "'");
        }
    };

    std::shared_ptr<const Node> root_;
};

} // namespace qmeas
