#pragma once

// Recursive-descent parser for polynomial expressions:
//
//   expr   := ['+'|'-'] term (('+'|'-') term)*
//   term   := factor ('*' factor)*
//   factor := base ('^' uint)?
//   base   := number | identifier | '(' expr ')'
//
// Identifiers are declared variable names or declared numeric parameters.

#include <cctype>
#include <cstdlib>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"

namespace avgbound {

namespace detail {

class ExprParser {
  public:
    ExprParser(std::string_view text, const std::vector<std::string>& vars,
               const std::map<std::string, double>& params)
        : text_(text), vars_(vars), params_(params) {}

    Polynomial parse() {
        Polynomial p = expr();
        skip_ws();
        if (pos_ != text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
        return p;
    }

  private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Polynomial expr() {
        skip_ws();
        bool negate = false;
        if (accept('-'))
            negate = true;
        else
            accept('+');
        Polynomial acc = term();
        if (negate) acc = -acc;
        while (true) {
            if (accept('+'))
                acc += term();
            else if (accept('-'))
                acc -= term();
            else
                return acc;
        }
    }

    Polynomial term() {
        Polynomial acc = factor();
        while (accept('*')) acc *= factor();
        return acc;
    }

    Polynomial factor() {
        Polynomial b = base();
        if (accept('^')) {
            skip_ws();
            const std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (start == pos_) {
                // distinguish "x^-1" / "x^1.5" from a plain syntax error
                if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '.'))
                    throw ParseError("exponent must be a non-negative integer literal", pos_);
                throw ParseError("expected integer exponent", pos_);
            }
            if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E'))
                throw ParseError("exponent must be a non-negative integer literal", start);
            const int k = std::stoi(std::string(text_.substr(start, pos_ - start)));
            return pow(b, k);
        }
        return b;
    }

    Polynomial base() {
        skip_ws();
        const std::size_t n = vars_.size();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Polynomial p = expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return p;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::string rest(text_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(rest.c_str(), &end);
            const std::size_t len = static_cast<std::size_t>(end - rest.c_str());
            if (len == 0) throw ParseError("malformed number", pos_);
            pos_ += len;
            return Polynomial::constant(n, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            const std::string name(text_.substr(start, pos_ - start));
            for (std::size_t i = 0; i < n; ++i)
                if (vars_[i] == name) return Polynomial::variable(n, i);
            if (auto it = params_.find(name); it != params_.end()) return Polynomial::constant(n, it->second);
            throw ParseError("unknown variable '" + name + "'", start);
        }
        throw ParseError(std::string("unexpected '") + c + "'", pos_);
    }

    std::string_view text_;
    const std::vector<std::string>& vars_;
    const std::map<std::string, double>& params_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Polynomial parse_poly(std::string_view text, const std::vector<std::string>& vars,
                             const std::map<std::string, double>& params = {}) {
    return detail::ExprParser(text, vars, params).parse();
}

} // namespace avgbound
