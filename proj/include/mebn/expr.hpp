#pragma once

// Expression trees for local-distribution formulas: arithmetic over numbers,
// parent references, instance-count terms, bag aggregations
// (average/sum/multiply), NormalDist(mean, variance) noise terms, and
// theta(i,j) placeholders for parameters that are still to be learned.
//
// Two evaluators:
//   eval_scalar    deterministic value (categorical state expressions)
//   eval_gaussian  (mean, variance) via linear propagation; NormalDist terms
//                  contribute noise, products require one deterministic side

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/util.hpp"

namespace mebn {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class AggFn { Average, Sum, Multiply };

inline const char* agg_name(AggFn f) {
    switch (f) {
    case AggFn::Average: return "average";
    case AggFn::Sum: return "sum";
    case AggFn::Multiply: return "multiply";
    }
    return "average";
}

struct Expr {
    enum class Kind {
        Num,         // numeric literal
        Theta,       // theta(i, j) to-learn placeholder
        Ident,       // parent reference, or an earlier state name (complement shorthand)
        Cardinality, // CARDINALITY(ov)
        Aggregate,   // average|sum|multiply(parent)
        NormalDist,  // NormalDist(mean_expr, variance_expr)
        Add, Sub, Mul, Div,
        Neg,
    };
    Kind kind;
    double num = 0.0;
    int ti = 0, tj = 0;  // Theta
    std::string name;    // Ident / Cardinality ov / Aggregate parent
    AggFn agg = AggFn::Average;
    ExprPtr a, b;
};

inline ExprPtr enum_(Expr e) { return std::make_shared<Expr>(std::move(e)); }
inline ExprPtr e_num(double v) { Expr e; e.kind = Expr::Kind::Num; e.num = v; return enum_(e); }
inline ExprPtr e_theta(int i, int j) { Expr e; e.kind = Expr::Kind::Theta; e.ti = i; e.tj = j; return enum_(e); }
inline ExprPtr e_ident(std::string n) { Expr e; e.kind = Expr::Kind::Ident; e.name = std::move(n); return enum_(e); }
inline ExprPtr e_card(std::string ov) { Expr e; e.kind = Expr::Kind::Cardinality; e.name = std::move(ov); return enum_(e); }
inline ExprPtr e_agg(AggFn f, std::string parent) {
    Expr e; e.kind = Expr::Kind::Aggregate; e.agg = f; e.name = std::move(parent); return enum_(e);
}
inline ExprPtr e_normal(ExprPtr mean, ExprPtr var) {
    Expr e; e.kind = Expr::Kind::NormalDist; e.a = std::move(mean); e.b = std::move(var); return enum_(e);
}
inline ExprPtr e_bin(Expr::Kind k, ExprPtr a, ExprPtr b) {
    Expr e; e.kind = k; e.a = std::move(a); e.b = std::move(b); return enum_(e);
}
inline ExprPtr e_neg(ExprPtr a) { Expr e; e.kind = Expr::Kind::Neg; e.a = std::move(a); return enum_(e); }

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Gaussian {
    double mean = 0.0;
    double var = 0.0;
};

// Everything an expression may refer to at evaluation time.
struct EvalContext {
    // CARDINALITY(ov) for the ovs quantified by the active branch.
    std::map<std::string, double> cardinality;
    // Bags of ground values per class parent (continuous parents).
    std::map<std::string, std::vector<double>> parent_bags;
    // Values of states computed earlier in the same body (complement shorthand).
    std::map<std::string, double> state_values;

    double aggregate(AggFn f, const std::string& parent) const {
        auto it = parent_bags.find(parent);
        if (it == parent_bags.end() || it->second.empty())
            fail(Errc::UnknownParentRef, "no ground instances for parent '" + parent + "'");
        const auto& bag = it->second;
        switch (f) {
        case AggFn::Sum: {
            double s = 0;
            for (double v : bag) s += v;
            return s;
        }
        case AggFn::Average: {
            double s = 0;
            for (double v : bag) s += v;
            return s / static_cast<double>(bag.size());
        }
        case AggFn::Multiply: {
            double p = 1;
            for (double v : bag) p *= v;
            return p;
        }
        }
        return 0;
    }
};

inline Gaussian eval_gaussian(const ExprPtr& e, const EvalContext& ctx);

inline double eval_scalar(const ExprPtr& e, const EvalContext& ctx) {
    Gaussian g = eval_gaussian(e, ctx);
    if (g.var != 0.0)
        fail(Errc::BadDistributionForm, "expression must be deterministic here (NormalDist not allowed)");
    return g.mean;
}

inline Gaussian eval_gaussian(const ExprPtr& e, const EvalContext& ctx) {
    using K = Expr::Kind;
    switch (e->kind) {
    case K::Num:
        return {e->num, 0.0};
    case K::Theta:
        fail(Errc::BadDistributionForm,
             "theta(" + std::to_string(e->ti) + "," + std::to_string(e->tj) + ") is still unlearned");
    case K::Ident: {
        auto st = ctx.state_values.find(e->name);
        if (st != ctx.state_values.end()) return {st->second, 0.0};
        return {ctx.aggregate(AggFn::Average, e->name), 0.0}; // bare parent ref: default aggregation
    }
    case K::Cardinality: {
        auto it = ctx.cardinality.find(e->name);
        if (it == ctx.cardinality.end())
            fail(Errc::UnknownFunction, "CARDINALITY(" + e->name + "): '" + e->name +
                                            "' is not quantified by the active branch");
        return {it->second, 0.0};
    }
    case K::Aggregate:
        return {ctx.aggregate(e->agg, e->name), 0.0};
    case K::NormalDist: {
        Gaussian m = eval_gaussian(e->a, ctx);
        Gaussian v = eval_gaussian(e->b, ctx);
        if (m.var != 0.0 || v.var != 0.0)
            fail(Errc::BadDistributionForm, "NormalDist arguments must be deterministic");
        if (v.mean < 0.0) fail(Errc::BadDistributionForm, "NormalDist variance must be non-negative");
        return {m.mean, v.mean};
    }
    case K::Add: {
        Gaussian x = eval_gaussian(e->a, ctx), y = eval_gaussian(e->b, ctx);
        return {x.mean + y.mean, x.var + y.var};
    }
    case K::Sub: {
        Gaussian x = eval_gaussian(e->a, ctx), y = eval_gaussian(e->b, ctx);
        return {x.mean - y.mean, x.var + y.var};
    }
    case K::Mul: {
        Gaussian x = eval_gaussian(e->a, ctx), y = eval_gaussian(e->b, ctx);
        if (x.var != 0.0 && y.var != 0.0)
            fail(Errc::BadDistributionForm, "product of two noisy terms is not linear-Gaussian");
        if (y.var == 0.0) return {x.mean * y.mean, x.var * y.mean * y.mean};
        return {x.mean * y.mean, y.var * x.mean * x.mean};
    }
    case K::Div: {
        Gaussian x = eval_gaussian(e->a, ctx), y = eval_gaussian(e->b, ctx);
        if (y.var != 0.0) fail(Errc::BadDistributionForm, "division by a noisy term is not linear-Gaussian");
        if (y.mean == 0.0) fail(Errc::BadDistributionForm, "division by zero in formula");
        return {x.mean / y.mean, x.var / (y.mean * y.mean)};
    }
    case K::Neg: {
        Gaussian x = eval_gaussian(e->a, ctx);
        return {-x.mean, x.var};
    }
    }
    fail(Errc::UnknownFunction, "unhandled expression node");
}

// ---------------------------------------------------------------------------
// Structure queries
// ---------------------------------------------------------------------------

inline bool expr_contains(const ExprPtr& e, Expr::Kind k) {
    if (!e) return false;
    if (e->kind == k) return true;
    return expr_contains(e->a, k) || expr_contains(e->b, k);
}

inline void collect_idents(const ExprPtr& e, std::vector<std::string>& out) {
    if (!e) return;
    if (e->kind == Expr::Kind::Ident || e->kind == Expr::Kind::Aggregate) out.push_back(e->name);
    collect_idents(e->a, out);
    collect_idents(e->b, out);
}

// ---------------------------------------------------------------------------
// Emission (canonical text; parenthesize by precedence)
// ---------------------------------------------------------------------------

namespace detail {
inline int expr_prec(Expr::Kind k) {
    switch (k) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Neg: return 3;
    default: return 4;
    }
}
} // namespace detail

inline std::string emit_expr(const ExprPtr& e) {
    using K = Expr::Kind;
    auto paren_child = [&](const ExprPtr& c, int parent_prec, bool right_assoc_side) {
        std::string s = emit_expr(c);
        int cp = detail::expr_prec(c->kind);
        if (cp < parent_prec || (cp == parent_prec && right_assoc_side &&
                                 (c->kind == K::Add || c->kind == K::Sub || c->kind == K::Mul || c->kind == K::Div)))
            return "(" + s + ")";
        return s;
    };
    switch (e->kind) {
    case K::Num: return format_number(e->num);
    case K::Theta: return "theta(" + std::to_string(e->ti) + "," + std::to_string(e->tj) + ")";
    case K::Ident: return e->name;
    case K::Cardinality: return "CARDINALITY(" + e->name + ")";
    case K::Aggregate: return std::string(agg_name(e->agg)) + "(" + e->name + ")";
    case K::NormalDist: return "NormalDist(" + emit_expr(e->a) + ", " + emit_expr(e->b) + ")";
    case K::Add: return paren_child(e->a, 1, false) + " + " + paren_child(e->b, 1, true);
    case K::Sub: return paren_child(e->a, 1, false) + " - " + paren_child(e->b, 1, true);
    case K::Mul: return paren_child(e->a, 2, false) + " * " + paren_child(e->b, 2, true);
    case K::Div: return paren_child(e->a, 2, false) + " / " + paren_child(e->b, 2, true);
    case K::Neg: return "-" + paren_child(e->a, 3, false);
    }
    return "?";
}

} // namespace mebn
