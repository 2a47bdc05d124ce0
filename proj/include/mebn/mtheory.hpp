#pragma once

// Class-level model: entity types, ordinary variables, context constraints,
// resident/input nodes grouped into fragments, and class local distributions
// (ordered condition/distribution pairs plus one default).
//
// A class local distribution (CLD) is an ordered list of
// (class parent condition, class state distribution) pairs plus exactly one
// default distribution; branch selection is first-match in declaration
// order. Distributions come in three shapes: categorical probability rows,
// linear-Gaussian forms, and general formula bodies evaluated against ground
// parent instances.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/expr.hpp"
#include "mebn/util.hpp"

namespace mebn {

// ---------------------------------------------------------------------------
// Types and value spaces
// ---------------------------------------------------------------------------

struct EntityType {
    std::string name;
    bool ordered = false; // has a total order (temporal recursion unrolls along it)
};

struct ValueSpace {
    enum class Kind { Unknown, Categorical, Boolean, Continuous, Entity };
    Kind kind = Kind::Unknown;
    std::vector<std::string> states; // Categorical
    std::string target;              // Entity: entity type whose instances are the values
    std::string unit;                // Continuous

    static ValueSpace categorical(std::vector<std::string> sts) {
        ValueSpace v; v.kind = Kind::Categorical; v.states = std::move(sts); return v;
    }
    static ValueSpace boolean() { ValueSpace v; v.kind = Kind::Boolean; return v; }
    static ValueSpace continuous(std::string unit = "") {
        ValueSpace v; v.kind = Kind::Continuous; v.unit = std::move(unit); return v;
    }
    static ValueSpace entity(std::string t) {
        ValueSpace v; v.kind = Kind::Entity; v.target = std::move(t); return v;
    }
    std::vector<std::string> state_list() const {
        if (kind == Kind::Boolean) return {"True", "False"};
        return states;
    }
    bool discrete() const { return kind == Kind::Categorical || kind == Kind::Boolean; }
};

// ---------------------------------------------------------------------------
// Class parent conditions
// ---------------------------------------------------------------------------

// Some: at least one instance of `parent` is in `state` (quantified over ovs).
// Config: every listed parent is unanimously in the listed state.
struct CPC {
    enum class Kind { Some, Config };
    Kind kind = Kind::Some;
    std::vector<std::string> ovs; // Some: quantified ordinary variables
    std::string parent;           // Some: class parent name
    std::string state;            // Some: required state
    std::vector<std::pair<std::string, std::string>> config; // Config: (parent, state)
};

// A ground parent instance as seen by condition evaluation: which class
// parent it instantiates, its node id, and its (assigned) value.
struct GroundParentInstance {
    std::string parent;
    std::string node_id;
    std::string value;
};

inline bool cpc_holds(const CPC& cpc, const std::vector<GroundParentInstance>& instances) {
    if (cpc.kind == CPC::Kind::Some) {
        for (const auto& gi : instances)
            if (gi.parent == cpc.parent && gi.value == cpc.state) return true;
        return false;
    }
    // Config: unanimous per named parent, and at least one instance each.
    for (const auto& [parent, state] : cpc.config) {
        bool any = false;
        for (const auto& gi : instances) {
            if (gi.parent != parent) continue;
            any = true;
            if (gi.value != state) return false;
        }
        if (!any) return false;
    }
    return true;
}

// Number of instances the branch's quantifier ranges over (instances of the
// condition's parent that are in the condition's state).
inline double cpc_cardinality(const CPC& cpc, const std::vector<GroundParentInstance>& instances) {
    if (cpc.kind != CPC::Kind::Some) return 0.0;
    double n = 0;
    for (const auto& gi : instances)
        if (gi.parent == cpc.parent && gi.value == cpc.state) n += 1;
    return n;
}

// ---------------------------------------------------------------------------
// Class state distributions
// ---------------------------------------------------------------------------

struct ThetaRef {
    int i = 0, j = 0;
    bool operator==(const ThetaRef&) const = default;
};
using Coef = std::variant<double, ThetaRef>;

inline bool coef_is_theta(const Coef& c) { return std::holds_alternative<ThetaRef>(c); }
inline double coef_value(const Coef& c, const std::string& what) {
    if (coef_is_theta(c)) fail(Errc::BadDistributionForm, what + ": parameter is still unlearned");
    return std::get<double>(c);
}
inline std::string coef_text(const Coef& c) {
    if (coef_is_theta(c)) {
        const auto& t = std::get<ThetaRef>(c);
        return "theta(" + std::to_string(t.i) + "," + std::to_string(t.j) + ")";
    }
    return format_number(std::get<double>(c));
}

// Probability row over the resident's states, in state order.
struct CategoricalCSD {
    std::vector<std::pair<std::string, Coef>> probs;
};

// mean = intercept + sum(coef_i * agg_i(parent_i)), noise variance `var`.
// The noise is reported as a variance everywhere (the second argument of
// NormalDist is read as a variance).
struct LinearGaussianCSD {
    struct Term {
        std::string parent;
        Coef coef;
        bool explicit_agg = false; // emitted as agg(parent) instead of a bare name
        AggFn agg = AggFn::Average;
    };
    Coef intercept;
    std::vector<Term> terms;
    Coef var;
};

// General formula body: per-state expressions for a categorical resident, or
// a single expression for a continuous one.
struct FormulaCSD {
    std::vector<std::pair<std::string, ExprPtr>> states; // empty for continuous
    ExprPtr cont;                                        // null for categorical
    bool continuous() const { return cont != nullptr; }
};

using CSD = std::variant<CategoricalCSD, LinearGaussianCSD, FormulaCSD>;

inline bool csd_has_theta(const CSD& csd) {
    if (const auto* c = std::get_if<CategoricalCSD>(&csd)) {
        for (const auto& [s, p] : c->probs)
            if (coef_is_theta(p)) return true;
        return false;
    }
    if (const auto* g = std::get_if<LinearGaussianCSD>(&csd)) {
        if (coef_is_theta(g->intercept) || coef_is_theta(g->var)) return true;
        for (const auto& t : g->terms)
            if (coef_is_theta(t.coef)) return true;
        return false;
    }
    const auto& f = std::get<FormulaCSD>(csd);
    if (f.cont && expr_contains(f.cont, Expr::Kind::Theta)) return true;
    for (const auto& [s, e] : f.states)
        if (expr_contains(e, Expr::Kind::Theta)) return true;
    return false;
}

struct CLD {
    std::vector<std::pair<CPC, CSD>> branches;
    CSD def; // exactly one default, evaluated when no branch condition holds
    AggFn default_agg = AggFn::Average; // bag reduction for bare parent refs

    bool to_learn() const {
        if (csd_has_theta(def)) return true;
        for (const auto& [cpc, csd] : branches)
            if (csd_has_theta(csd)) return true;
        return false;
    }
};

// First-match branch selection over a bag of ground parent instances.
// Returns the matching branch index, or -1 for the default.
inline int pick_branch(const CLD& cld, const std::vector<GroundParentInstance>& instances) {
    for (size_t i = 0; i < cld.branches.size(); ++i)
        if (cpc_holds(cld.branches[i].first, instances)) return static_cast<int>(i);
    return -1;
}

// ---------------------------------------------------------------------------
// CSD evaluation
// ---------------------------------------------------------------------------

// Evaluate a categorical CSD to a normalized probability vector over
// `states`, given the branch condition (for CARDINALITY) and the ground
// parent instances.
inline std::vector<double> eval_categorical_csd(const CSD& csd, const std::vector<std::string>& states,
                                                const CPC* branch_cpc,
                                                const std::vector<GroundParentInstance>& instances) {
    std::vector<double> out(states.size(), 0.0);
    if (const auto* c = std::get_if<CategoricalCSD>(&csd)) {
        std::map<std::string, double> by_state;
        for (const auto& [s, p] : c->probs) by_state[s] = coef_value(p, "P(" + s + ")");
        for (size_t i = 0; i < states.size(); ++i) {
            auto it = by_state.find(states[i]);
            if (it == by_state.end())
                fail(Errc::StatesNotCovered, "state '" + states[i] + "' has no probability");
            out[i] = it->second;
        }
        return out;
    }
    if (std::holds_alternative<LinearGaussianCSD>(csd))
        fail(Errc::WrongVariant, "linear-Gaussian distribution on a categorical node");

    const auto& f = std::get<FormulaCSD>(csd);
    if (f.continuous()) fail(Errc::WrongVariant, "continuous formula on a categorical node");
    EvalContext ctx;
    if (branch_cpc && branch_cpc->kind == CPC::Kind::Some) {
        const double card = cpc_cardinality(*branch_cpc, instances);
        for (const auto& ov : branch_cpc->ovs) ctx.cardinality[ov] = card;
    }
    std::map<std::string, double> computed;
    for (const auto& [state, expr] : f.states) {
        ctx.state_values = computed;
        double v = eval_scalar(expr, ctx);
        if (v < -1e-12) fail(Errc::NegativeProbability, "P(" + state + ") = " + format_number(v));
        computed[state] = std::max(0.0, v);
    }
    double sum = 0.0;
    for (size_t i = 0; i < states.size(); ++i) {
        auto it = computed.find(states[i]);
        if (it == computed.end()) fail(Errc::StatesNotCovered, "state '" + states[i] + "' has no expression");
        out[i] = it->second;
        sum += out[i];
    }
    if (sum <= 1e-12) fail(Errc::Unnormalizable, "formula probabilities sum to " + format_number(sum));
    for (auto& v : out) v /= sum;
    return out;
}

// Linear decomposition of a continuous distribution: mean is affine in
// (aggregated) parent references, noise variance is constant.
struct LinearForm {
    double intercept = 0.0;
    struct Term {
        std::string parent;
        bool explicit_agg = false;
        AggFn agg = AggFn::Average;
        double coef = 0.0;
    };
    std::vector<Term> terms;
    double var = 0.0;

    void add_term(const std::string& parent, bool explicit_agg, AggFn agg, double coef) {
        for (auto& t : terms)
            if (t.parent == parent && t.explicit_agg == explicit_agg && t.agg == agg) {
                t.coef += coef;
                return;
            }
        terms.push_back({parent, explicit_agg, agg, coef});
    }
};

namespace detail {

// Recursive linearization; `card` resolves CARDINALITY terms. Throws NotCLG
// when the expression is not affine in its parent references.
inline LinearForm linearize(const ExprPtr& e, const std::map<std::string, double>& card) {
    using K = Expr::Kind;
    auto constant_only = [](const LinearForm& f) { return f.terms.empty() && f.var == 0.0; };
    LinearForm out;
    switch (e->kind) {
    case K::Num:
        out.intercept = e->num;
        return out;
    case K::Theta:
        fail(Errc::BadDistributionForm, "theta placeholder is still unlearned");
    case K::Ident:
        out.add_term(e->name, false, AggFn::Average, 1.0);
        return out;
    case K::Aggregate:
        out.add_term(e->name, true, e->agg, 1.0);
        return out;
    case K::Cardinality: {
        auto it = card.find(e->name);
        if (it == card.end())
            fail(Errc::UnknownFunction, "CARDINALITY(" + e->name + ") is not bound by the active branch");
        out.intercept = it->second;
        return out;
    }
    case K::NormalDist: {
        LinearForm m = linearize(e->a, card), v = linearize(e->b, card);
        if (!constant_only(m) || !constant_only(v))
            fail(Errc::NotCLG, "NormalDist arguments must be parent-free");
        if (v.intercept < 0.0) fail(Errc::BadDistributionForm, "NormalDist variance must be non-negative");
        out.intercept = m.intercept;
        out.var = v.intercept;
        return out;
    }
    case K::Add:
    case K::Sub: {
        LinearForm a = linearize(e->a, card), b = linearize(e->b, card);
        const double s = (e->kind == K::Add) ? 1.0 : -1.0;
        a.intercept += s * b.intercept;
        a.var += b.var;
        for (const auto& t : b.terms) a.add_term(t.parent, t.explicit_agg, t.agg, s * t.coef);
        return a;
    }
    case K::Mul: {
        LinearForm a = linearize(e->a, card), b = linearize(e->b, card);
        if (!constant_only(a) && !constant_only(b))
            fail(Errc::NotCLG, "product of two parent-dependent terms is not linear-Gaussian");
        if (!constant_only(a)) std::swap(a, b); // a is the constant side
        const double k = a.intercept;
        b.intercept *= k;
        b.var *= k * k;
        for (auto& t : b.terms) t.coef *= k;
        return b;
    }
    case K::Div: {
        LinearForm a = linearize(e->a, card), b = linearize(e->b, card);
        if (!constant_only(b)) fail(Errc::NotCLG, "division by a parent-dependent term");
        if (b.intercept == 0.0) fail(Errc::BadDistributionForm, "division by zero in formula");
        const double k = 1.0 / b.intercept;
        a.intercept *= k;
        a.var *= k * k;
        for (auto& t : a.terms) t.coef *= k;
        return a;
    }
    case K::Neg: {
        LinearForm a = linearize(e->a, card);
        a.intercept = -a.intercept;
        for (auto& t : a.terms) t.coef = -t.coef;
        return a;
    }
    }
    fail(Errc::UnknownFunction, "unhandled expression node");
}

} // namespace detail

// Reduce a continuous CSD to its linear form (throws NotCLG if impossible).
inline LinearForm csd_linear_form(const CSD& csd, const CPC* branch_cpc,
                                  const std::vector<GroundParentInstance>& instances) {
    if (std::holds_alternative<CategoricalCSD>(csd))
        fail(Errc::WrongVariant, "categorical distribution on a continuous node");
    if (const auto* g = std::get_if<LinearGaussianCSD>(&csd)) {
        LinearForm out;
        out.intercept = coef_value(g->intercept, "intercept");
        out.var = coef_value(g->var, "variance");
        if (out.var < 0.0) fail(Errc::BadDistributionForm, "negative noise variance");
        for (const auto& t : g->terms)
            out.add_term(t.parent, t.explicit_agg, t.agg, coef_value(t.coef, "coefficient of " + t.parent));
        return out;
    }
    const auto& f = std::get<FormulaCSD>(csd);
    if (!f.continuous()) fail(Errc::WrongVariant, "categorical formula on a continuous node");
    std::map<std::string, double> card;
    if (branch_cpc && branch_cpc->kind == CPC::Kind::Some) {
        const double c = cpc_cardinality(*branch_cpc, instances);
        for (const auto& ov : branch_cpc->ovs) card[ov] = c;
    }
    return detail::linearize(f.cont, card);
}

// Fully numeric evaluation of a continuous CSD (all parents observed).
inline Gaussian eval_continuous_csd(const CSD& csd, const CPC* branch_cpc,
                                    const std::vector<GroundParentInstance>& instances,
                                    const std::map<std::string, std::vector<double>>& parent_bags) {
    LinearForm lf = csd_linear_form(csd, branch_cpc, instances);
    EvalContext ctx;
    ctx.parent_bags = parent_bags;
    double mean = lf.intercept;
    for (const auto& t : lf.terms) mean += t.coef * ctx.aggregate(t.agg, t.parent);
    return {mean, lf.var};
}

// ---------------------------------------------------------------------------
// Fragments
// ---------------------------------------------------------------------------

struct OrdinaryVariable {
    std::string name;
    std::string type;
};

// Non-membership context constraints. IsA declarations are represented by
// the fragment's ordinary-variable list, not stored here.
struct ContextNode {
    enum class Kind {
        Equality,             // lhs = rhs (two ordinary variables)
        RelationalConstraint, // lhs = func(args): ground RV func(args) has value lhs
        BooleanConstraint,    // func(args): boolean ground RV func(args) is True
    };
    Kind kind = Kind::Equality;
    std::string lhs;
    std::string rhs;
    std::string func;
    std::vector<std::string> args;

    static ContextNode equality(std::string a, std::string b) {
        ContextNode c; c.kind = Kind::Equality; c.lhs = std::move(a); c.rhs = std::move(b); return c;
    }
    static ContextNode relational(std::string lhs, std::string func, std::vector<std::string> args) {
        ContextNode c; c.kind = Kind::RelationalConstraint;
        c.lhs = std::move(lhs); c.func = std::move(func); c.args = std::move(args); return c;
    }
    static ContextNode boolean(std::string func, std::vector<std::string> args) {
        ContextNode c; c.kind = Kind::BooleanConstraint;
        c.func = std::move(func); c.args = std::move(args); return c;
    }
    std::string signature() const {
        switch (kind) {
        case Kind::Equality: return lhs + " = " + rhs;
        case Kind::RelationalConstraint: return lhs + " = " + func + " (" + join(args, ", ") + ")";
        case Kind::BooleanConstraint: return func + " (" + join(args, ", ") + ")";
        }
        return "";
    }
};

// A parent defined in another (or, for temporal recursion, the same)
// fragment, instantiated here under an argument substitution.
struct InputNode {
    std::string resident;          // home resident name
    std::vector<std::string> args; // local ordinary variables, positional
};

struct ResidentNode {
    std::string name;
    std::vector<std::string> args; // ordinary variables
    ValueSpace vs;
    std::vector<std::string> rp; // intra-fragment resident parents (by name)
    std::vector<int> ip;         // indices into MFrag::inputs
    std::string cld_name;        // named distribution reference ([L: Name])
    std::optional<CLD> cld;      // inline distribution
};

struct MFrag {
    std::string name;
    std::vector<OrdinaryVariable> ovs;
    std::vector<ContextNode> contexts;
    std::vector<InputNode> inputs;
    std::vector<ResidentNode> residents;

    const OrdinaryVariable* find_ov(const std::string& n) const {
        for (const auto& o : ovs)
            if (o.name == n) return &o;
        return nullptr;
    }
    const ResidentNode* find_resident(const std::string& n) const {
        for (const auto& r : residents)
            if (r.name == n) return &r;
        return nullptr;
    }
    ResidentNode* find_resident(const std::string& n) {
        for (auto& r : residents)
            if (r.name == n) return &r;
        return nullptr;
    }
    // Index of an equivalent input node, adding it if absent.
    int ensure_input(const InputNode& in) {
        for (size_t i = 0; i < inputs.size(); ++i)
            if (inputs[i].resident == in.resident && inputs[i].args == in.args) return static_cast<int>(i);
        inputs.push_back(in);
        return static_cast<int>(inputs.size()) - 1;
    }
};

struct MTheory {
    std::vector<EntityType> types;
    std::vector<MFrag> mfrags;
    std::string ordering_relation; // name of the boolean predecessor resident, if any

    const MFrag* find_mfrag(const std::string& n) const {
        for (const auto& f : mfrags)
            if (f.name == n) return &f;
        return nullptr;
    }
    MFrag* find_mfrag(const std::string& n) {
        for (auto& f : mfrags)
            if (f.name == n) return &f;
        return nullptr;
    }
    const EntityType* find_type(const std::string& n) const {
        for (const auto& t : types)
            if (t.name == n) return &t;
        return nullptr;
    }
    void ensure_type(const std::string& n) {
        if (!find_type(n)) types.push_back({n, false});
    }
    const std::string* ordered_type() const {
        for (const auto& t : types)
            if (t.ordered) return &t.name;
        return nullptr;
    }

    // Home lookup by resident name + arity.
    struct Home {
        const MFrag* mfrag = nullptr;
        const ResidentNode* resident = nullptr;
    };
    Home find_home(const std::string& name, size_t arity) const {
        Home h;
        for (const auto& f : mfrags)
            for (const auto& r : f.residents)
                if (r.name == name && r.args.size() == arity) {
                    if (h.resident)
                        fail(Errc::DuplicateHome, "resident '" + name + "/" + std::to_string(arity) +
                                                      "' is defined in both '" + h.mfrag->name + "' and '" + f.name + "'");
                    h = {&f, &r};
                }
        return h;
    }
    Home find_home_any_arity(const std::string& name) const {
        Home h;
        for (const auto& f : mfrags)
            for (const auto& r : f.residents)
                if (r.name == name) {
                    if (h.resident) return {nullptr, nullptr}; // ambiguous
                    h = {&f, &r};
                }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Model checks
// ---------------------------------------------------------------------------

// Every resident name+arity must have exactly one defining fragment.
inline void check_unique_home(const MTheory& m) {
    std::map<std::pair<std::string, size_t>, std::string> seen;
    for (const auto& f : m.mfrags) {
        if (m.find_mfrag(f.name) != &f)
            fail(Errc::DuplicateMFragName, "fragment name '" + f.name + "' is used twice");
        for (const auto& r : f.residents) {
            auto key = std::make_pair(r.name, r.args.size());
            auto [it, fresh] = seen.emplace(key, f.name);
            if (!fresh)
                fail(Errc::DuplicateHome, "resident '" + r.name + "/" + std::to_string(r.args.size()) +
                                              "' is defined in both '" + it->second + "' and '" + f.name + "'");
        }
    }
}

namespace detail {

// True when the parent edge steps strictly back along the ordered type:
// the fragment contains an ordering constraint ordering(pre, cur) with the
// input's ordered argument in the `pre` slot and the child's in `cur`.
inline bool temporal_exempt(const MTheory& m, const MFrag& f, const InputNode& in,
                            const ResidentNode& home_res, const ResidentNode& child) {
    if (m.ordering_relation.empty()) return false;
    const std::string* otype = m.ordered_type();
    if (!otype) return false;

    auto ordered_arg = [&](const ResidentNode& r, const std::vector<std::string>& args,
                           const MFrag& decl_frag) -> const std::string* {
        for (size_t i = 0; i < r.args.size() && i < args.size(); ++i) {
            const auto* ov = decl_frag.find_ov(args[i]);
            if (ov && ov->type == *otype) return &args[i];
        }
        return nullptr;
    };
    const std::string* p = ordered_arg(home_res, in.args, f);
    const std::string* c = ordered_arg(child, child.args, f);
    if (!p || !c) return false;
    for (const auto& ctx : f.contexts)
        if (ctx.kind == ContextNode::Kind::BooleanConstraint && ctx.func == m.ordering_relation &&
            ctx.args.size() == 2 && ctx.args[0] == *p && ctx.args[1] == *c)
            return true;
    return false;
}

} // namespace detail

// Class-level acyclicity: edges run from each parent's home resident to the
// child resident; edges that strictly decrease the ordered temporal argument
// through the ordering relation are exempt. Throws with the offending cycle.
inline void check_acyclic(const MTheory& m) {
    check_unique_home(m);
    std::map<std::string, std::set<std::string>> edges; // parent -> children
    std::set<std::string> nodes;
    for (const auto& f : m.mfrags) {
        for (const auto& r : f.residents) {
            nodes.insert(r.name);
            for (const auto& pname : r.rp) {
                if (!f.find_resident(pname))
                    fail(Errc::UnknownParent, "fragment '" + f.name + "': resident parent '" + pname +
                                                  "' of '" + r.name + "' is not defined here");
                edges[pname].insert(r.name);
            }
            for (int ii : r.ip) {
                const auto& in = f.inputs[static_cast<size_t>(ii)];
                auto home = m.find_home(in.resident, in.args.size());
                if (!home.resident)
                    fail(Errc::UnknownParent, "fragment '" + f.name + "': input parent '" + in.resident +
                                                  "' has no home fragment");
                if (detail::temporal_exempt(m, f, in, *home.resident, r)) continue;
                edges[in.resident].insert(r.name);
            }
        }
    }
    // Depth-first cycle detection with path reporting.
    std::map<std::string, int> state; // 0 new, 1 open, 2 done
    std::vector<std::string> path;
    auto dfs = [&](auto&& self, const std::string& u) -> void {
        state[u] = 1;
        path.push_back(u);
        for (const auto& v : edges[u]) {
            if (state[v] == 1) {
                auto it = std::find(path.begin(), path.end(), v);
                std::vector<std::string> cycle(it, path.end());
                cycle.push_back(v);
                fail(Errc::CyclicModel, "dependency cycle: " + join(cycle, " -> "));
            }
            if (state[v] == 0) self(self, v);
        }
        path.pop_back();
        state[u] = 2;
    };
    for (const auto& n : nodes)
        if (state[n] == 0) dfs(dfs, n);
}

// Flag the ordering relation by convention: a two-argument resident named
// `Predecessor` whose arguments share one entity type. Marks that type
// ordered. Safe to call repeatedly.
inline void detect_ordering_relation(MTheory& m) {
    for (const auto& f : m.mfrags)
        for (const auto& r : f.residents) {
            if (r.name != "Predecessor" || r.args.size() != 2) continue;
            const auto* a = f.find_ov(r.args[0]);
            const auto* b = f.find_ov(r.args[1]);
            if (!a || !b || a->type != b->type) continue;
            m.ordering_relation = r.name;
            for (auto& t : m.types)
                if (t.name == a->type) t.ordered = true;
        }
}

// ---------------------------------------------------------------------------
// Instance local distributions (structural view used by reports and tests)
// ---------------------------------------------------------------------------

struct IPC {
    CPC cpc;
    std::vector<std::string> instance_ids; // ground instances the quantifier ranges over
};

struct ILD {
    std::string node_id;
    std::vector<std::pair<IPC, CSD>> pairs;
    CSD def;
};

// Substitute ground instances into a CLD: one (IPC, ISD) pair per class pair,
// or just the default when the node has no ground parents.
inline ILD derive_ild(const std::string& node_id, const CLD& cld,
                      const std::vector<GroundParentInstance>& instances) {
    ILD out;
    out.node_id = node_id;
    out.def = cld.def;
    if (instances.empty()) return out;
    for (const auto& [cpc, csd] : cld.branches) {
        IPC ipc;
        ipc.cpc = cpc;
        for (const auto& gi : instances) {
            bool referenced = false;
            if (cpc.kind == CPC::Kind::Some) {
                referenced = (gi.parent == cpc.parent);
            } else {
                for (const auto& [p, s] : cpc.config) referenced = referenced || gi.parent == p;
            }
            if (referenced) ipc.instance_ids.push_back(gi.node_id);
        }
        out.pairs.emplace_back(std::move(ipc), csd);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CLD validation
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_csd_against(const CSD& csd, const ValueSpace& vs, const std::string& where) {
    if (vs.kind == ValueSpace::Kind::Continuous) {
        if (std::holds_alternative<CategoricalCSD>(csd))
            fail(Errc::WrongVariant, where + ": categorical row on a continuous node");
        if (const auto* f = std::get_if<FormulaCSD>(&csd); f && !f->continuous())
            fail(Errc::WrongVariant, where + ": per-state formulas on a continuous node");
        return;
    }
    if (vs.kind == ValueSpace::Kind::Categorical || vs.kind == ValueSpace::Kind::Boolean) {
        const auto states = vs.state_list();
        auto check_states = [&](const std::vector<std::string>& got) {
            std::set<std::string> want(states.begin(), states.end());
            std::set<std::string> have(got.begin(), got.end());
            if (want != have)
                fail(Errc::StatesNotCovered,
                     where + ": states {" + join(got, ", ") + "} do not cover {" + join(states, ", ") + "}");
        };
        if (const auto* c = std::get_if<CategoricalCSD>(&csd)) {
            std::vector<std::string> got;
            double sum = 0;
            bool theta = false;
            for (const auto& [s, p] : c->probs) {
                got.push_back(s);
                if (coef_is_theta(p)) theta = true;
                else {
                    const double v = std::get<double>(p);
                    if (v < 0.0) fail(Errc::NegativeProbability, where + ": P(" + s + ") = " + format_number(v));
                    sum += v;
                }
            }
            check_states(got);
            if (!theta && std::abs(sum - 1.0) > 1e-9)
                fail(Errc::Unnormalizable, where + ": probabilities sum to " + format_number(sum));
        } else if (const auto* f = std::get_if<FormulaCSD>(&csd)) {
            if (f->continuous()) fail(Errc::WrongVariant, where + ": continuous formula on a discrete node");
            std::vector<std::string> got;
            for (const auto& [s, e] : f->states) got.push_back(s);
            check_states(got);
        } else {
            fail(Errc::WrongVariant, where + ": linear-Gaussian form on a discrete node");
        }
    }
}

} // namespace detail

// Check every branch of a CLD against the resident's value space. Unknown
// value spaces are inferred first (from the state names the CLD assigns).
inline void validate_cld(const CLD& cld, const ValueSpace& vs, const std::string& where) {
    detail::validate_csd_against(cld.def, vs, where + " default");
    for (size_t i = 0; i < cld.branches.size(); ++i)
        detail::validate_csd_against(cld.branches[i].second, vs,
                                     where + " branch " + std::to_string(i + 1));
}

// Infer a value space from a CLD's shape (used when a script does not
// otherwise pin one down).
inline ValueSpace infer_value_space(const CLD& cld) {
    std::vector<std::string> states;
    auto note = [&](const CSD& csd) -> bool { // returns true if continuous
        if (const auto* c = std::get_if<CategoricalCSD>(&csd)) {
            for (const auto& [s, p] : c->probs)
                if (std::find(states.begin(), states.end(), s) == states.end()) states.push_back(s);
            return false;
        }
        if (std::holds_alternative<LinearGaussianCSD>(csd)) return true;
        const auto& f = std::get<FormulaCSD>(csd);
        if (f.continuous()) return true;
        for (const auto& [s, e] : f.states)
            if (std::find(states.begin(), states.end(), s) == states.end()) states.push_back(s);
        return false;
    };
    bool cont = note(cld.def);
    for (const auto& [cpc, csd] : cld.branches) cont = note(csd) || cont;
    if (cont) return ValueSpace::continuous();
    if (states.size() == 2 && states[0] == "True" && states[1] == "False") return ValueSpace::boolean();
    return ValueSpace::categorical(states);
}

} // namespace mebn
