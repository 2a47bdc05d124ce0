#pragma once

// Script reader/writer for the class-level model and its local
// distributions.
//
// A model document is a sequence of bracket blocks tagged with single
// letters: F (fragment), C (context), R (resident), IP (input parent),
// RP (resident parent), L (local distribution). Example:
//
//   [F: SITUATION
//     [C: IsA (rgn, REGION)] [C: IsA (t, TIME)]
//     [R: ThreatLevel (rgn, t)]
//   ]
//
// Local distribution bodies use if/else-if/else chains:
//
//   if some v have (VehicleType = Tracked) [
//     High = 1 - 1 / CARDINALITY(v),
//     Low = 1 - High
//   ] else [
//     High = 0,
//     Low = 1
//   ]
//
// The emitter is canonical (stable block order, one block per line,
// two-space indentation) and emit/parse round-trips losslessly.

#include <algorithm>
#include <cctype>
#include <functional>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/expr.hpp"
#include "mebn/mtheory.hpp"
#include "mebn/util.hpp"

namespace mebn {
namespace detail {

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

struct Token {
    enum class Kind {
        Ident, Number, LBracket, RBracket, LParen, RParen,
        Comma, Dot, Colon, Equals, Plus, Minus, Star, Slash, At, End,
    };
    Kind kind = Kind::End;
    std::string text;
    double num = 0.0;
    int line = 1, col = 1;
};

class Lexer {
  public:
    explicit Lexer(const std::string& text) : s_(text) { advance(); }

    const Token& peek() const { return tok_; }
    Token next() {
        Token t = tok_;
        advance();
        return t;
    }
    bool at(Token::Kind k) const { return tok_.kind == k; }
    bool at_ident(const std::string& word) const {
        return tok_.kind == Token::Kind::Ident && tok_.text == word;
    }
    Token expect(Token::Kind k, const std::string& what) {
        if (tok_.kind != k) err("expected " + what);
        return next();
    }
    std::string expect_ident(const std::string& what) {
        if (tok_.kind != Token::Kind::Ident) err("expected " + what);
        return next().text;
    }
    void expect_word(const std::string& word) {
        if (!at_ident(word)) err("expected '" + word + "'");
        next();
    }
    [[noreturn]] void err(const std::string& msg) const {
        std::string got = tok_.kind == Token::Kind::End ? "end of input" : "'" + tok_.text + "'";
        fail_at(Errc::Syntax, msg + ", got " + got, tok_.line, tok_.col);
    }

  private:
    void advance() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) bump();
        tok_ = Token{};
        tok_.line = line_;
        tok_.col = col_;
        if (pos_ >= s_.size()) return; // End
        const char c = s_[pos_];
        auto single = [&](Token::Kind k) {
            tok_.kind = k;
            tok_.text = std::string(1, c);
            bump();
        };
        switch (c) {
        case '[': single(Token::Kind::LBracket); return;
        case ']': single(Token::Kind::RBracket); return;
        case '(': single(Token::Kind::LParen); return;
        case ')': single(Token::Kind::RParen); return;
        case ',': single(Token::Kind::Comma); return;
        case '.': single(Token::Kind::Dot); return;
        case ':': single(Token::Kind::Colon); return;
        case '=': single(Token::Kind::Equals); return;
        case '+': single(Token::Kind::Plus); return;
        case '-': single(Token::Kind::Minus); return;
        case '*': single(Token::Kind::Star); return;
        case '/': single(Token::Kind::Slash); return;
        case '@': single(Token::Kind::At); return;
        default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            lex_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            tok_.kind = Token::Kind::Ident;
            while (pos_ < s_.size()) {
                const char d = s_[pos_];
                if (!std::isalnum(static_cast<unsigned char>(d)) && d != '_') break;
                tok_.text += d;
                bump();
            }
            return;
        }
        fail_at(Errc::Syntax, std::string("unexpected character '") + c + "'", line_, col_);
    }

    void lex_number() {
        tok_.kind = Token::Kind::Number;
        auto digits = [&] {
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                tok_.text += s_[pos_];
                bump();
            }
        };
        digits();
        if (pos_ + 1 < s_.size() && s_[pos_] == '.' &&
            std::isdigit(static_cast<unsigned char>(s_[pos_ + 1]))) {
            tok_.text += '.';
            bump();
            digits();
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            size_t save = pos_;
            int sline = line_, scol = col_;
            std::string saved = tok_.text;
            tok_.text += s_[pos_];
            bump();
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
                tok_.text += s_[pos_];
                bump();
            }
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                digits();
            } else { // not an exponent after all; rewind
                pos_ = save;
                line_ = sline;
                col_ = scol;
                tok_.text = saved;
            }
        }
        tok_.num = parse_number(tok_.text, "numeric literal");
    }

    void bump() {
        if (s_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& s_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

// ---------------------------------------------------------------------------
// Expression parsing (precedence climbing, depth-guarded)
// ---------------------------------------------------------------------------

constexpr int kMaxDepth = 256;

inline ExprPtr parse_expr(Lexer& lx, int depth);

inline ExprPtr parse_primary(Lexer& lx, int depth) {
    if (depth > kMaxDepth) lx.err("expression nesting too deep");
    if (lx.at(Token::Kind::Number)) return e_num(lx.next().num);
    if (lx.at(Token::Kind::LParen)) {
        lx.next();
        ExprPtr e = parse_expr(lx, depth + 1);
        lx.expect(Token::Kind::RParen, "')'");
        return e;
    }
    if (!lx.at(Token::Kind::Ident)) lx.err("expected an expression");
    Token name = lx.next();
    if (name.text == "CARDINALITY") {
        lx.expect(Token::Kind::LParen, "'(' after CARDINALITY");
        std::string ov = lx.expect_ident("ordinary variable");
        lx.expect(Token::Kind::RParen, "')'");
        return e_card(ov);
    }
    if (name.text == "NormalDist") {
        lx.expect(Token::Kind::LParen, "'(' after NormalDist");
        ExprPtr m = parse_expr(lx, depth + 1);
        lx.expect(Token::Kind::Comma, "','");
        ExprPtr v = parse_expr(lx, depth + 1);
        lx.expect(Token::Kind::RParen, "')'");
        return e_normal(m, v);
    }
    if (name.text == "theta") {
        lx.expect(Token::Kind::LParen, "'(' after theta");
        Token i = lx.expect(Token::Kind::Number, "branch index");
        lx.expect(Token::Kind::Comma, "','");
        Token j = lx.expect(Token::Kind::Number, "parameter index");
        lx.expect(Token::Kind::RParen, "')'");
        auto as_int = [&](const Token& t) {
            int v = static_cast<int>(t.num);
            if (static_cast<double>(v) != t.num || v < 0)
                fail_at(Errc::Syntax, "theta indices must be non-negative integers", t.line, t.col);
            return v;
        };
        return e_theta(as_int(i), as_int(j));
    }
    if (name.text == "average" || name.text == "sum" || name.text == "multiply") {
        if (lx.at(Token::Kind::LParen)) {
            lx.next();
            std::string parent = lx.expect_ident("parent name");
            lx.expect(Token::Kind::RParen, "')'");
            AggFn fn = name.text == "average" ? AggFn::Average
                     : name.text == "sum"     ? AggFn::Sum
                                              : AggFn::Multiply;
            return e_agg(fn, parent);
        }
    }
    return e_ident(name.text);
}

inline ExprPtr parse_factor(Lexer& lx, int depth) {
    if (depth > kMaxDepth) lx.err("expression nesting too deep");
    if (lx.at(Token::Kind::Minus)) {
        lx.next();
        return e_neg(parse_factor(lx, depth + 1));
    }
    return parse_primary(lx, depth);
}

inline ExprPtr parse_term(Lexer& lx, int depth) {
    ExprPtr e = parse_factor(lx, depth);
    while (lx.at(Token::Kind::Star) || lx.at(Token::Kind::Slash)) {
        bool mul = lx.next().kind == Token::Kind::Star;
        ExprPtr r = parse_factor(lx, depth);
        e = e_bin(mul ? Expr::Kind::Mul : Expr::Kind::Div, e, r);
    }
    return e;
}

inline ExprPtr parse_expr(Lexer& lx, int depth) {
    if (depth > kMaxDepth) lx.err("expression nesting too deep");
    ExprPtr e = parse_term(lx, depth);
    while (lx.at(Token::Kind::Plus) || lx.at(Token::Kind::Minus)) {
        bool add = lx.next().kind == Token::Kind::Plus;
        ExprPtr r = parse_term(lx, depth);
        e = e_bin(add ? Expr::Kind::Add : Expr::Kind::Sub, e, r);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Local distribution parsing
// ---------------------------------------------------------------------------

// Convert a theta/number atom to a coefficient, or report failure.
inline bool expr_to_coef(const ExprPtr& e, Coef& out) {
    if (e->kind == Expr::Kind::Num) {
        out = e->num;
        return true;
    }
    if (e->kind == Expr::Kind::Theta) {
        out = ThetaRef{e->ti, e->tj};
        return true;
    }
    if (e->kind == Expr::Kind::Neg && e->a->kind == Expr::Kind::Num) {
        out = -e->a->num;
        return true;
    }
    return false;
}

// Classify a bare continuous expression: linear-Gaussian when it has the
// shape c0 + sum(ci * Parent_i) + NormalDist(c, c) with constant/theta
// coefficients; general formula otherwise.
inline CSD classify_continuous_body(const ExprPtr& body) {
    struct SignedTerm {
        ExprPtr e;
        double sign;
    };
    std::vector<SignedTerm> terms;
    std::function<bool(const ExprPtr&, double)> flatten = [&](const ExprPtr& e, double sign) {
        if (e->kind == Expr::Kind::Add)
            return flatten(e->a, sign) && flatten(e->b, sign);
        if (e->kind == Expr::Kind::Sub)
            return flatten(e->a, sign) && flatten(e->b, -sign);
        terms.push_back({e, sign});
        return true;
    };
    flatten(body, 1.0);

    LinearGaussianCSD g;
    g.intercept = 0.0;
    g.var = 0.0;
    double const_sum = 0.0;
    bool have_const_theta = false, have_noise = false, ok = true;

    auto parent_ref = [](const ExprPtr& e, LinearGaussianCSD::Term& t) {
        if (e->kind == Expr::Kind::Ident) {
            t.parent = e->name;
            t.explicit_agg = false;
            t.agg = AggFn::Average;
            return true;
        }
        if (e->kind == Expr::Kind::Aggregate) {
            t.parent = e->name;
            t.explicit_agg = true;
            t.agg = e->agg;
            return true;
        }
        return false;
    };

    for (const auto& [e, sign] : terms) {
        Coef c;
        LinearGaussianCSD::Term t;
        if (expr_to_coef(e, c)) { // constant term
            if (coef_is_theta(c)) {
                if (have_const_theta || sign < 0) { ok = false; break; }
                have_const_theta = true;
                g.intercept = c;
            } else {
                const_sum += sign * std::get<double>(c);
            }
            continue;
        }
        if (parent_ref(e, t)) { // bare parent, coefficient 1
            t.coef = sign;
            g.terms.push_back(t);
            continue;
        }
        if (e->kind == Expr::Kind::Mul) { // coef * parent (either order)
            Coef k;
            if (expr_to_coef(e->a, k) && parent_ref(e->b, t)) {
            } else if (expr_to_coef(e->b, k) && parent_ref(e->a, t)) {
            } else {
                ok = false;
                break;
            }
            if (coef_is_theta(k)) {
                if (sign < 0) { ok = false; break; }
                t.coef = k;
            } else {
                t.coef = sign * std::get<double>(k);
            }
            g.terms.push_back(t);
            continue;
        }
        if (e->kind == Expr::Kind::NormalDist) { // additive noise
            Coef m, v;
            if (have_noise || sign < 0 || !expr_to_coef(e->a, m) || !expr_to_coef(e->b, v) ||
                coef_is_theta(m)) {
                ok = false;
                break;
            }
            have_noise = true;
            const_sum += std::get<double>(m);
            g.var = v;
            continue;
        }
        ok = false;
        break;
    }
    if (ok) {
        if (have_const_theta) {
            if (const_sum != 0.0) ok = false; // can't fold a number into a theta slot
        } else {
            g.intercept = const_sum;
        }
    }
    if (ok) return g;
    FormulaCSD f;
    f.cont = body;
    return f;
}

// Per-state assignments: plain categorical row when every right-hand side is
// a constant or theta placeholder; formula distribution otherwise.
inline CSD classify_assignments(std::vector<std::pair<std::string, ExprPtr>> assigns) {
    CategoricalCSD c;
    for (const auto& [state, e] : assigns) {
        Coef k;
        if (!expr_to_coef(e, k)) {
            FormulaCSD f;
            f.states = std::move(assigns);
            return f;
        }
        c.probs.emplace_back(state, k);
    }
    return c;
}

// body := ident "=" expr ("," ident "=" expr)* | expr
inline CSD parse_csd_body(Lexer& lx) {
    bool is_assigns = false;
    if (lx.at(Token::Kind::Ident)) {
        // Two-token lookahead: an identifier followed by '=' starts an
        // assignment list; anything else is a bare expression.
        Lexer probe = lx;
        probe.next();
        is_assigns = probe.at(Token::Kind::Equals);
    }
    if (!is_assigns) return classify_continuous_body(parse_expr(lx, 0));
    std::vector<std::pair<std::string, ExprPtr>> assigns;
    while (true) {
        std::string state = lx.expect_ident("state name");
        lx.expect(Token::Kind::Equals, "'='");
        assigns.emplace_back(state, parse_expr(lx, 0));
        if (!lx.at(Token::Kind::Comma)) break;
        lx.next();
    }
    return classify_assignments(std::move(assigns));
}

// cond := "some" ident ((","|".") ident)* "have" "(" ident "=" ident ")"
//       | "config" "(" ident "=" ident ("," ident "=" ident)* ")"
inline CPC parse_cpc(Lexer& lx) {
    CPC cpc;
    if (lx.at_ident("some")) {
        lx.next();
        cpc.kind = CPC::Kind::Some;
        cpc.ovs.push_back(lx.expect_ident("ordinary variable"));
        while (lx.at(Token::Kind::Comma) || lx.at(Token::Kind::Dot)) {
            lx.next();
            cpc.ovs.push_back(lx.expect_ident("ordinary variable"));
        }
        lx.expect_word("have");
        lx.expect(Token::Kind::LParen, "'('");
        cpc.parent = lx.expect_ident("parent name");
        lx.expect(Token::Kind::Equals, "'='");
        cpc.state = lx.expect_ident("state name");
        lx.expect(Token::Kind::RParen, "')'");
        return cpc;
    }
    if (lx.at_ident("config")) {
        lx.next();
        cpc.kind = CPC::Kind::Config;
        lx.expect(Token::Kind::LParen, "'('");
        while (true) {
            std::string parent = lx.expect_ident("parent name");
            lx.expect(Token::Kind::Equals, "'='");
            cpc.config.emplace_back(parent, lx.expect_ident("state name"));
            if (!lx.at(Token::Kind::Comma)) break;
            lx.next();
        }
        lx.expect(Token::Kind::RParen, "')'");
        return cpc;
    }
    lx.err("expected 'some' or 'config'");
}

// lpdl := if-chain with mandatory trailing else, or a bare default body.
inline CLD parse_lpdl_tokens(Lexer& lx) {
    CLD cld;
    if (!lx.at_ident("if")) {
        cld.def = parse_csd_body(lx);
        return cld;
    }
    bool saw_default = false;
    lx.next(); // "if"
    while (true) {
        CPC cpc = parse_cpc(lx);
        lx.expect(Token::Kind::LBracket, "'['");
        CSD csd = parse_csd_body(lx);
        lx.expect(Token::Kind::RBracket, "']'");
        cld.branches.emplace_back(std::move(cpc), std::move(csd));
        lx.expect_word("else");
        if (lx.at_ident("if")) {
            lx.next();
            continue;
        }
        lx.expect(Token::Kind::LBracket, "'['");
        cld.def = parse_csd_body(lx);
        lx.expect(Token::Kind::RBracket, "']'");
        saw_default = true;
        break;
    }
    (void)saw_default;
    return cld;
}

// ---------------------------------------------------------------------------
// Model document parsing
// ---------------------------------------------------------------------------

// ident "(" ident ("," ident)* ")"  — shared by R/IP/RP block heads.
inline std::pair<std::string, std::vector<std::string>> parse_signature(Lexer& lx) {
    std::string name = lx.expect_ident("node name");
    std::vector<std::string> args;
    lx.expect(Token::Kind::LParen, "'('");
    args.push_back(lx.expect_ident("ordinary variable"));
    while (lx.at(Token::Kind::Comma)) {
        lx.next();
        args.push_back(lx.expect_ident("ordinary variable"));
    }
    lx.expect(Token::Kind::RParen, "')'");
    return {std::move(name), std::move(args)};
}

inline void parse_context_block(Lexer& lx, MFrag& f) {
    while (true) {
        std::string head = lx.expect_ident("context expression");
        if (head == "IsA") {
            lx.expect(Token::Kind::LParen, "'('");
            std::string ov = lx.expect_ident("ordinary variable");
            lx.expect(Token::Kind::Comma, "','");
            std::string type = lx.expect_ident("entity type");
            lx.expect(Token::Kind::RParen, "')'");
            if (const auto* existing = f.find_ov(ov); existing && existing->type != type)
                lx.err("ordinary variable '" + ov + "' redeclared with a different type");
            if (!f.find_ov(ov)) f.ovs.push_back({ov, type});
        } else if (lx.at(Token::Kind::LParen)) { // membership constraint
            lx.next();
            std::vector<std::string> args;
            args.push_back(lx.expect_ident("ordinary variable"));
            while (lx.at(Token::Kind::Comma)) {
                lx.next();
                args.push_back(lx.expect_ident("ordinary variable"));
            }
            lx.expect(Token::Kind::RParen, "')'");
            f.contexts.push_back(ContextNode::boolean(head, std::move(args)));
        } else {
            lx.expect(Token::Kind::Equals, "'='");
            std::string rhs = lx.expect_ident("ordinary variable or function");
            if (lx.at(Token::Kind::LParen)) {
                lx.next();
                std::vector<std::string> args;
                args.push_back(lx.expect_ident("ordinary variable"));
                while (lx.at(Token::Kind::Comma)) {
                    lx.next();
                    args.push_back(lx.expect_ident("ordinary variable"));
                }
                lx.expect(Token::Kind::RParen, "')'");
                f.contexts.push_back(ContextNode::relational(head, rhs, std::move(args)));
            } else {
                f.contexts.push_back(ContextNode::equality(head, rhs));
            }
        }
        if (!lx.at(Token::Kind::Comma)) break;
        lx.next();
    }
}

inline void parse_resident_block(Lexer& lx, MFrag& f) {
    ResidentNode r;
    auto [name, args] = parse_signature(lx);
    r.name = std::move(name);
    r.args = std::move(args);
    while (lx.at(Token::Kind::LBracket)) {
        Token open = lx.next();
        std::string letter = lx.expect_ident("block letter");
        lx.expect(Token::Kind::Colon, "':'");
        if (letter == "IP") {
            auto [pname, pargs] = parse_signature(lx);
            r.ip.push_back(f.ensure_input({std::move(pname), std::move(pargs)}));
        } else if (letter == "RP") {
            auto [pname, pargs] = parse_signature(lx);
            (void)pargs; // must match the parent's own declaration; checked below
            r.rp.push_back(std::move(pname));
        } else if (letter == "L") {
            // Either a named distribution reference or an inline body.
            Lexer probe = lx;
            if (probe.at(Token::Kind::Ident)) {
                probe.next();
                if (probe.at(Token::Kind::RBracket) && !lx.at_ident("if")) {
                    r.cld_name = lx.next().text;
                    lx.expect(Token::Kind::RBracket, "']'");
                    continue;
                }
            }
            r.cld = parse_lpdl_tokens(lx);
        } else {
            fail_at(Errc::UnknownBlockLetter, "block letter '" + letter + "' inside a resident",
                    open.line, open.col);
        }
        lx.expect(Token::Kind::RBracket, "']'");
    }
    if (r.cld) r.vs = infer_value_space(*r.cld);
    f.residents.push_back(std::move(r));
}

inline MFrag parse_mfrag(Lexer& lx) {
    MFrag f;
    f.name = lx.expect_ident("fragment name");
    while (lx.at(Token::Kind::LBracket)) {
        Token open = lx.next();
        std::string letter = lx.expect_ident("block letter");
        lx.expect(Token::Kind::Colon, "':'");
        if (letter == "C") {
            parse_context_block(lx, f);
        } else if (letter == "R") {
            parse_resident_block(lx, f);
        } else if (letter == "IP" || letter == "RP" || letter == "L") {
            fail_at(Errc::UnknownBlockLetter, "block '" + letter + "' is only valid inside a resident",
                    open.line, open.col);
        } else {
            fail_at(Errc::UnknownBlockLetter, "unknown block letter '" + letter + "'", open.line,
                    open.col);
        }
        lx.expect(Token::Kind::RBracket, "']'");
    }
    return f;
}

// Every ordinary variable used by contexts, residents, and inputs must be
// declared by an IsA in the same fragment.
inline void check_ov_declarations(const MFrag& f) {
    auto need = [&](const std::string& ov) {
        if (!f.find_ov(ov))
            fail(Errc::UndeclaredOrdinaryVariable,
                 "fragment '" + f.name + "': ordinary variable '" + ov + "' has no IsA declaration");
    };
    for (const auto& c : f.contexts) {
        switch (c.kind) {
        case ContextNode::Kind::Equality:
            need(c.lhs);
            need(c.rhs);
            break;
        case ContextNode::Kind::RelationalConstraint:
            need(c.lhs);
            for (const auto& a : c.args) need(a);
            break;
        case ContextNode::Kind::BooleanConstraint:
            for (const auto& a : c.args) need(a);
            break;
        }
    }
    for (const auto& r : f.residents)
        for (const auto& a : r.args) need(a);
    for (const auto& in : f.inputs)
        for (const auto& a : in.args) need(a);
    for (const auto& r : f.residents)
        for (const auto& p : r.rp)
            if (!f.find_resident(p))
                fail(Errc::UnknownParent,
                     "fragment '" + f.name + "': resident parent '" + p + "' is not defined here");
}

inline bool is_fragment_letter(const std::string& s) {
    if (s.empty() || s[0] != 'F') return false;
    for (size_t i = 1; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

inline MTheory parse_mtheory(const std::string& text) {
    detail::Lexer lx(text);
    MTheory m;
    while (!lx.at(detail::Token::Kind::End)) {
        detail::Token open = lx.expect(detail::Token::Kind::LBracket, "'['");
        std::string letter = lx.expect_ident("block letter");
        if (!detail::is_fragment_letter(letter))
            fail_at(Errc::UnknownBlockLetter, "expected a fragment block, got '" + letter + "'",
                    open.line, open.col);
        lx.expect(detail::Token::Kind::Colon, "':'");
        MFrag f = detail::parse_mfrag(lx);
        lx.expect(detail::Token::Kind::RBracket, "']'");
        if (m.find_mfrag(f.name))
            fail(Errc::DuplicateMFragName, "fragment name '" + f.name + "' is used twice");
        detail::check_ov_declarations(f);
        m.mfrags.push_back(std::move(f));
    }
    for (const auto& f : m.mfrags)
        for (const auto& o : f.ovs) m.ensure_type(o.type);
    detect_ordering_relation(m);
    return m;
}

inline CLD parse_lpdl(const std::string& text) {
    detail::Lexer lx(text);
    CLD cld = detail::parse_lpdl_tokens(lx);
    if (!lx.at(detail::Token::Kind::End)) lx.err("trailing input after distribution");
    return cld;
}

// ---------------------------------------------------------------------------
// Emission (canonical form)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string cpc_text(const CPC& cpc) {
    if (cpc.kind == CPC::Kind::Some)
        return "some " + join(cpc.ovs, ", ") + " have (" + cpc.parent + " = " + cpc.state + ")";
    std::vector<std::string> parts;
    for (const auto& [p, s] : cpc.config) parts.push_back(p + " = " + s);
    return "config(" + join(parts, ", ") + ")";
}

inline ExprPtr lg_to_expr(const LinearGaussianCSD& g) {
    auto coef_expr = [](const Coef& c) -> ExprPtr {
        if (coef_is_theta(c)) {
            const auto& t = std::get<ThetaRef>(c);
            return e_theta(t.i, t.j);
        }
        return e_num(std::get<double>(c));
    };
    ExprPtr e = coef_expr(g.intercept);
    for (const auto& t : g.terms) {
        ExprPtr ref = t.explicit_agg ? e_agg(t.agg, t.parent) : e_ident(t.parent);
        ExprPtr term = ref;
        if (coef_is_theta(t.coef) || std::get<double>(t.coef) != 1.0)
            term = e_bin(Expr::Kind::Mul, coef_expr(t.coef), ref);
        e = e_bin(Expr::Kind::Add, e, term);
    }
    const bool zero_var = !coef_is_theta(g.var) && std::get<double>(g.var) == 0.0;
    if (!zero_var) e = e_bin(Expr::Kind::Add, e, e_normal(e_num(0.0), coef_expr(g.var)));
    return e;
}

inline void emit_csd_body(const CSD& csd, const std::string& ind, std::string& out) {
    if (const auto* c = std::get_if<CategoricalCSD>(&csd)) {
        for (size_t i = 0; i < c->probs.size(); ++i)
            out += ind + c->probs[i].first + " = " + coef_text(c->probs[i].second) +
                   (i + 1 < c->probs.size() ? ",\n" : "\n");
        return;
    }
    if (const auto* g = std::get_if<LinearGaussianCSD>(&csd)) {
        out += ind + emit_expr(lg_to_expr(*g)) + "\n";
        return;
    }
    const auto& f = std::get<FormulaCSD>(csd);
    if (f.continuous()) {
        out += ind + emit_expr(f.cont) + "\n";
        return;
    }
    for (size_t i = 0; i < f.states.size(); ++i)
        out += ind + f.states[i].first + " = " + emit_expr(f.states[i].second) +
               (i + 1 < f.states.size() ? ",\n" : "\n");
}

inline void emit_lpdl_at(const CLD& cld, int indent, std::string& out) {
    const std::string ind(static_cast<size_t>(indent) * 2, ' ');
    const std::string inner(static_cast<size_t>(indent + 1) * 2, ' ');
    if (cld.branches.empty()) { // default-only: bare body, no brackets
        emit_csd_body(cld.def, ind, out);
        return;
    }
    for (size_t i = 0; i < cld.branches.size(); ++i) {
        out += ind + (i == 0 ? "if " : "] else if ") + cpc_text(cld.branches[i].first) + " [\n";
        emit_csd_body(cld.branches[i].second, inner, out);
    }
    out += ind + "] else [\n";
    emit_csd_body(cld.def, inner, out);
    out += ind + "]\n";
}

} // namespace detail

inline std::string emit_lpdl(const CLD& cld) {
    std::string out;
    detail::emit_lpdl_at(cld, 0, out);
    return out;
}

inline std::string emit_mfrag(const MFrag& f) {
    std::string out = "[F: " + f.name + "\n";
    for (const auto& o : f.ovs) out += "  [C: IsA (" + o.name + ", " + o.type + ")]\n";
    for (const auto& c : f.contexts) out += "  [C: " + c.signature() + "]\n";
    for (const auto& r : f.residents) {
        out += "  [R: " + r.name + " (" + join(r.args, ", ") + ")";
        const bool has_inner = !r.ip.empty() || !r.rp.empty() || r.cld || !r.cld_name.empty();
        if (!has_inner) {
            out += "]\n";
            continue;
        }
        out += "\n";
        for (int ii : r.ip) {
            const auto& in = f.inputs[static_cast<size_t>(ii)];
            out += "    [IP: " + in.resident + " (" + join(in.args, ", ") + ")]\n";
        }
        for (const auto& p : r.rp) {
            const auto* pr = f.find_resident(p);
            out += "    [RP: " + p + " (" + join(pr ? pr->args : std::vector<std::string>{}, ", ") +
                   ")]\n";
        }
        if (!r.cld_name.empty()) out += "    [L: " + r.cld_name + "]\n";
        if (r.cld) {
            out += "    [L:\n";
            detail::emit_lpdl_at(*r.cld, 3, out);
            out += "    ]\n";
        }
        out += "  ]\n";
    }
    out += "]\n";
    return out;
}

inline std::string emit_mtheory(const MTheory& m) {
    std::string out;
    for (const auto& f : m.mfrags) out += emit_mfrag(f);
    return out;
}

// ---------------------------------------------------------------------------
// Structural comparison
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csd_signature(const CSD& csd) {
    std::string out;
    emit_csd_body(csd, "", out);
    return out;
}

inline std::string cld_signature(const CLD& cld) {
    std::string out;
    emit_lpdl_at(cld, 0, out);
    return out;
}

} // namespace detail

// Exact structural equality (insertion order matters); value spaces are
// schema-derived annotations and do not participate.
inline bool mtheory_equal(const MTheory& a, const MTheory& b) {
    return emit_mtheory(a) == emit_mtheory(b);
}

inline bool cld_equal(const CLD& a, const CLD& b) {
    return detail::cld_signature(a) == detail::cld_signature(b) && a.default_agg == b.default_agg;
}

// Order-insensitive equivalence: fragments matched by case-insensitive name;
// within a fragment, ordinary variables, contexts, residents, and each
// resident's parent lists are compared as sets. With `ignore_clds` the
// comparison covers structure only, so a parameterized model can be checked
// against a distribution-free reference.
inline bool mtheory_equivalent(const MTheory& a, const MTheory& b, bool ignore_clds = false) {
    if (a.mfrags.size() != b.mfrags.size()) return false;
    for (const auto& fa : a.mfrags) {
        const MFrag* fb = nullptr;
        for (const auto& f : b.mfrags)
            if (ci_equal(f.name, fa.name)) fb = &f;
        if (!fb) return false;

        auto sorted = [](std::vector<std::string> v) {
            std::sort(v.begin(), v.end());
            return v;
        };
        std::vector<std::string> ova, ovb, ctxa, ctxb, resa, resb;
        for (const auto& o : fa.ovs) ova.push_back(o.name + ":" + o.type);
        for (const auto& o : fb->ovs) ovb.push_back(o.name + ":" + o.type);
        for (const auto& c : fa.contexts) ctxa.push_back(c.signature());
        for (const auto& c : fb->contexts) ctxb.push_back(c.signature());
        auto resident_sig = [&](const MFrag& f, const ResidentNode& r) {
            std::string s = r.name + " (" + join(r.args, ", ") + ")";
            std::vector<std::string> parents;
            for (int ii : r.ip) {
                const auto& in = f.inputs[static_cast<size_t>(ii)];
                parents.push_back("IP " + in.resident + " (" + join(in.args, ", ") + ")");
            }
            for (const auto& p : r.rp) parents.push_back("RP " + p);
            for (const auto& p : sorted(parents)) s += "; " + p;
            if (!ignore_clds) {
                if (!r.cld_name.empty()) s += "; L " + r.cld_name;
                if (r.cld) s += ";\n" + detail::cld_signature(*r.cld);
            }
            return s;
        };
        for (const auto& r : fa.residents) resa.push_back(resident_sig(fa, r));
        for (const auto& r : fb->residents) resb.push_back(resident_sig(*fb, r));
        if (sorted(ova) != sorted(ovb) || sorted(ctxa) != sorted(ctxb) ||
            sorted(resa) != sorted(resb))
            return false;
    }
    return true;
}

} // namespace mebn
