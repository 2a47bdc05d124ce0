#pragma once

// Relational-to-class-level mapping:
//   * build_initial_mapping — one fragment per relation that yields resident
//     nodes: entity keys become typed ordinary variables, non-key attributes
//     become resident nodes, attribute-free relationship relations become
//     boolean resident nodes named after the relation.
//   * causal rules — `causal(Rel.Attr[, ...] -> Rel.Attr) family=...` lines
//     that rewrite the child's fragment: a join path is planned through the
//     schema, join conditions become context nodes, parents become input (or
//     intra-fragment) parents, and a parameter-placeholder distribution is
//     attached for the learner to fill in.
//   * refine_context — merges ordinary variables linked by equality context
//     nodes and drops the equalities.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/mtheory.hpp"
#include "mebn/relational.hpp"
#include "mebn/script.hpp"
#include "mebn/util.hpp"

namespace mebn {

// ---------------------------------------------------------------------------
// Mapping state
// ---------------------------------------------------------------------------

// Where a resident node's data lives: `attr` is empty for membership
// (boolean) residents of attribute-free relationship relations.
struct ResidentSource {
    std::string relation;
    std::string attr;
    std::vector<std::string> key_attrs;
};

// One `causal(...)` line: parent references, child reference, and options.
struct CausalRule {
    struct Ref {
        std::string relation;
        std::string attr;
        bool prev = false;
    };
    enum class Family { Categorical, Clg };
    std::vector<Ref> parents;
    Ref child;
    Family family = Family::Categorical;
    std::vector<std::string> via;
    double prior = 1.0;
    AggFn agg = AggFn::Average;
    bool agg_set = false;
    std::string text; // original line, for error messages
};

struct JoinPlan {
    struct Step {
        std::string relation;
        std::string alias;
        bool ordering = false;                 // step over the ordering relation
        std::map<std::string, std::string> ov; // entity column attr -> ordinary variable
    };
    struct Cond { // equi-join condition between two step columns (a precedes b)
        int a = 0;
        std::string a_attr;
        int b = 0;
        std::string b_attr;
    };
    struct ParentLoc {
        int step = 0;
        std::string resident;
        std::string attr; // value column ("" for membership parents)
        bool prev = false;
        bool sibling = false; // same relation as the child, same row
    };
    std::vector<Step> steps; // steps[0] is the child relation
    std::vector<Cond> conds;
    std::string child_attr;
    std::vector<ParentLoc> parents;
    // Class-level artifacts accumulated while planning:
    std::vector<OrdinaryVariable> ovdecls;
    std::vector<ContextNode> contexts;
};

struct RuleApplication {
    CausalRule rule;
    JoinPlan plan;
    MFrag pre;  // fragment with join conditions still spelled as equalities
    MFrag post; // refined fragment as installed in the model
    std::string child_resident;
};

struct Mapping {
    MTheory mtheory;
    std::map<std::string, ResidentSource> source;     // resident name -> source
    std::map<std::string, std::string> type_relation; // entity type -> relation
    std::string ordering_relation;                    // relation name ("" if none)
    std::string ordered_type;
    std::vector<RuleApplication> applications;

    const ResidentSource& source_of(const std::string& resident) const {
        auto it = source.find(resident);
        if (it == source.end()) fail(Errc::UnknownNode, "no resident named '" + resident + "'");
        return it->second;
    }
};

// ---------------------------------------------------------------------------
// Schema column view
// ---------------------------------------------------------------------------

namespace detail {

struct EntityCol {
    std::string attr;
    std::string type; // entity type the column refers to
    bool key = false;
};

inline std::vector<EntityCol> entity_cols(const Database& db, const std::string& rel) {
    const RelationSchema& s = db.at(rel).schema;
    std::vector<EntityCol> out;
    for (const auto& a : s.attrs) {
        if (a.kind == AttrKind::Key) {
            out.push_back({a.name, upper(rel), true});
        } else if (a.kind == AttrKind::ForeignKey) {
            out.push_back({a.name, upper(a.target), s.is_pk(a.name)});
        }
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Initial mapping
// ---------------------------------------------------------------------------

inline ValueSpace value_space_of(const AttributeSpec& a) {
    switch (a.kind) {
    case AttrKind::Categorical: return ValueSpace::categorical(a.states);
    case AttrKind::Boolean: return ValueSpace::boolean();
    case AttrKind::Continuous: return ValueSpace::continuous(a.unit);
    case AttrKind::ForeignKey: return ValueSpace::entity(upper(a.target));
    case AttrKind::Key: break;
    }
    fail(Errc::BadManifest, "attribute '" + a.name + "' has no value space");
}

inline Mapping build_initial_mapping(const Database& db) {
    Mapping mp;
    // Entity types first, so foreign keys can refer to them.
    for (const auto& [name, inst] : db.relations) {
        RelationKind k = classify_relation(inst.schema);
        if (k == RelationKind::Entity) {
            mp.mtheory.types.push_back({upper(name), false});
            mp.type_relation[upper(name)] = name;
        }
    }
    for (const auto& [name, inst] : db.relations) {
        const RelationSchema& s = inst.schema;
        std::vector<const AttributeSpec*> value_attrs;
        for (const auto& a : s.attrs)
            if (!s.is_pk(a.name)) value_attrs.push_back(&a);
        const bool relationship = classify_relation(s) == RelationKind::Relationship;
        if (value_attrs.empty() && !relationship) continue; // plain entity list: type only

        MFrag f;
        f.name = upper(name);
        std::vector<std::string> key_ovs;
        for (const auto& col : detail::entity_cols(db, name))
            if (col.key) {
                f.ovs.push_back({col.attr, col.type});
                key_ovs.push_back(col.attr);
            }
        auto add_resident = [&](const std::string& rname, const std::string& attr, ValueSpace vs) {
            if (mp.source.count(rname))
                fail(Errc::DuplicateHome, "resident '" + rname + "' maps from both relation '" +
                                              mp.source[rname].relation + "' and '" + name + "'");
            ResidentNode r;
            r.name = rname;
            r.args = key_ovs;
            r.vs = std::move(vs);
            f.residents.push_back(std::move(r));
            mp.source[rname] = {name, attr, key_ovs};
        };
        for (const AttributeSpec* a : value_attrs) add_resident(a->name, a->name, value_space_of(*a));
        if (value_attrs.empty()) add_resident(name, "", ValueSpace::boolean()); // membership
        mp.mtheory.mfrags.push_back(std::move(f));
    }
    detect_ordering_relation(mp.mtheory);
    if (const std::string* ot = mp.mtheory.ordered_type()) {
        mp.ordered_type = *ot;
        if (!mp.mtheory.ordering_relation.empty())
            mp.ordering_relation = mp.source_of(mp.mtheory.ordering_relation).relation;
    }
    check_unique_home(mp.mtheory);
    return mp;
}

// ---------------------------------------------------------------------------
// Causal rules
// ---------------------------------------------------------------------------

namespace detail {

inline CausalRule::Ref parse_rule_ref(std::string s, const std::string& line) {
    CausalRule::Ref ref;
    s = trim(s);
    if (auto at = s.rfind('@'); at != std::string::npos) {
        if (trim(s.substr(at + 1)) != "prev")
            fail(Errc::BadRule, "only '@prev' is supported: " + line);
        ref.prev = true;
        s = trim(s.substr(0, at));
    }
    auto dot = s.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= s.size())
        fail(Errc::BadRule, "reference must be Relation.Attribute: '" + s + "' in: " + line);
    ref.relation = trim(s.substr(0, dot));
    ref.attr = trim(s.substr(dot + 1));
    return ref;
}

} // namespace detail

inline std::vector<CausalRule> parse_rules(const std::string& text) {
    std::vector<CausalRule> out;
    for (std::string raw : split(text, '\n')) {
        if (auto hash = raw.find('#'); hash != std::string::npos) raw = raw.substr(0, hash);
        std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.rfind("causal", 0) != 0)
            fail(Errc::BadRule, "rule must start with 'causal(': " + line);
        auto open = line.find('(');
        auto close = line.rfind(')');
        if (open == std::string::npos || close == std::string::npos || close < open)
            fail(Errc::BadRule, "unbalanced parentheses: " + line);
        std::string head = line.substr(open + 1, close - open - 1);
        auto arrow = head.find("->");
        if (arrow == std::string::npos) fail(Errc::BadRule, "missing '->': " + line);

        CausalRule rule;
        rule.text = line;
        for (const auto& p : split(head.substr(0, arrow), ','))
            if (!trim(p).empty()) rule.parents.push_back(detail::parse_rule_ref(p, line));
        if (rule.parents.empty()) fail(Errc::BadRule, "rule needs at least one parent: " + line);
        rule.child = detail::parse_rule_ref(head.substr(arrow + 2), line);
        if (rule.child.prev) fail(Errc::BadRule, "'@prev' is only valid on parents: " + line);

        bool family_seen = false;
        std::string tail = trim(line.substr(close + 1));
        for (const auto& piece : split(tail, ' ')) {
            std::string kv = trim(piece);
            if (kv.empty()) continue;
            auto eq = kv.find('=');
            if (eq == std::string::npos) fail(Errc::BadRule, "expected key=value, got '" + kv + "'");
            std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (key == "family") {
                family_seen = true;
                if (val == "categorical") rule.family = CausalRule::Family::Categorical;
                else if (val == "clg") rule.family = CausalRule::Family::Clg;
                else fail(Errc::BadRule, "unknown family '" + val + "': " + line);
            } else if (key == "via") {
                for (const auto& r : split(val, ',')) rule.via.push_back(trim(r));
            } else if (key == "prior") {
                rule.prior = parse_number(val, "prior");
                if (rule.prior <= 0.0) fail(Errc::BadPrior, "prior must be positive: " + line);
            } else if (key == "agg") {
                rule.agg_set = true;
                if (val == "average") rule.agg = AggFn::Average;
                else if (val == "sum") rule.agg = AggFn::Sum;
                else if (val == "multiply") rule.agg = AggFn::Multiply;
                else fail(Errc::BadRule, "unknown aggregation '" + val + "': " + line);
            } else {
                fail(Errc::BadRule, "unknown option '" + key + "': " + line);
            }
        }
        if (!family_seen) fail(Errc::BadRule, "missing family=<categorical|clg>: " + line);
        out.push_back(std::move(rule));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Join planning
// ---------------------------------------------------------------------------

namespace detail {

// Resolve a rule reference to the resident node it names.
inline std::string resolve_resident(const Mapping& mp, const Database& db,
                                    const CausalRule::Ref& ref, const std::string& line) {
    if (!db.has(ref.relation))
        fail(Errc::BadRule, "unknown relation '" + ref.relation + "' in: " + line);
    for (const auto& [rname, src] : mp.source)
        if (src.relation == ref.relation && (src.attr == ref.attr || (src.attr.empty() && ref.attr == ref.relation)))
            return rname;
    fail(Errc::BadRule, "relation '" + ref.relation + "' has no resident '" + ref.attr + "' in: " + line);
}

// Non-temporal entity types a relation refers to (adjacency basis). Joining
// two relations purely along the ordered type would relate otherwise
// unconnected entities, so such edges are never planned implicitly.
inline std::set<std::string> link_types(const Database& db, const std::string& rel,
                                        const std::string& ordered_type) {
    std::set<std::string> out;
    for (const auto& c : entity_cols(db, rel))
        if (c.type != ordered_type) out.insert(c.type);
    return out;
}

// Shortest relation path from any of `sources` to `target`; ties broken by
// lexicographically smallest relation-name sequence.
inline std::vector<std::string> shortest_path(const Database& db, const std::string& ordered_type,
                                              const std::set<std::string>& sources,
                                              const std::string& target) {
    std::map<std::string, std::set<std::string>> types;
    for (const auto& [name, inst] : db.relations) types[name] = link_types(db, name, ordered_type);
    auto adjacent = [&](const std::string& a, const std::string& b) {
        for (const auto& t : types[a])
            if (types[b].count(t)) return true;
        return false;
    };
    std::map<std::string, std::vector<std::string>> best;
    for (const auto& s : sources) {
        std::vector<std::string> p{s};
        auto it = best.find(s);
        if (it == best.end() || p < it->second) best[s] = p;
    }
    if (best.count(target)) return best[target];
    std::set<std::string> frontier(sources.begin(), sources.end()), visited = frontier;
    while (!frontier.empty()) {
        std::map<std::string, std::vector<std::string>> next;
        for (const auto& [name, inst] : db.relations) {
            if (visited.count(name)) continue;
            std::vector<std::string> cand;
            for (const auto& u : frontier) {
                if (!adjacent(u, name)) continue;
                std::vector<std::string> p = best[u];
                p.push_back(name);
                if (cand.empty() || p < cand) cand = p;
            }
            if (!cand.empty()) next[name] = cand;
        }
        if (next.empty()) break;
        frontier.clear();
        for (auto& [name, p] : next) {
            best[name] = std::move(p);
            frontier.insert(name);
            visited.insert(name);
        }
        if (best.count(target)) return best[target];
    }
    fail(Errc::NoPath, "no join path to relation '" + target +
                           "' (relations only sharing the ordered type do not connect; use via=)");
}

// Stateful plan builder: fresh ordinary-variable naming, one step per joined
// relation, pairing each new column to the earliest compatible earlier
// column (same-name columns first, then keys, then non-key columns).
struct Planner {
    const Mapping& mp;
    const Database& db;
    JoinPlan plan;
    std::set<std::string> used_ovs;
    std::map<std::pair<int, std::string>, EntityCol> colinfo; // (step, attr) -> column

    Planner(const Mapping& m, const Database& d) : mp(m), db(d) {}

    std::string fresh(const std::string& base, const std::string& type) {
        std::string name = base;
        for (int k = 1; used_ovs.count(name); ++k) name = base + std::to_string(k);
        used_ovs.insert(name);
        plan.ovdecls.push_back({name, type});
        return name;
    }

    const std::string& ov(int step, const std::string& attr) const {
        return plan.steps[static_cast<size_t>(step)].ov.at(attr);
    }

    std::vector<std::string> key_ovs(int step) const {
        std::vector<std::string> out;
        const auto& st = plan.steps[static_cast<size_t>(step)];
        for (const auto& c : entity_cols(db, st.relation))
            if (c.key) out.push_back(st.ov.at(c.attr));
        return out;
    }

    // Earliest earlier column compatible with `col`: exact attribute-name
    // matches first, then key columns, then non-key columns.
    bool find_partner(const EntityCol& col, int before_step, int& ps, std::string& pa) const {
        for (int pass = 0; pass < 3; ++pass) {
            for (int s = 0; s < before_step; ++s) {
                for (const auto& c : entity_cols(db, plan.steps[static_cast<size_t>(s)].relation)) {
                    if (c.type != col.type) continue;
                    const bool want = pass == 0 ? c.attr == col.attr : pass == 1 ? c.key : !c.key;
                    if (!want) continue;
                    ps = s;
                    pa = c.attr;
                    return true;
                }
            }
        }
        return false;
    }

    // The class-level context expressing one join condition. Each column's
    // assigned variable denotes its value, so pairing a new key column is an
    // equality, while a new non-key (entity-valued) column borrows the
    // partner's variable and constrains it to equal the column's function.
    void add_condition_context(int es, const std::string& ea, int ns, const std::string& na) {
        if (colinfo.at({ns, na}).key) {
            const std::string &a = ov(es, ea), &b = ov(ns, na);
            plan.contexts.push_back(a <= b ? ContextNode::equality(a, b)
                                           : ContextNode::equality(b, a));
        } else {
            plan.contexts.push_back(ContextNode::relational(ov(es, ea), na, key_ovs(ns)));
        }
    }

    // Add a relation step. `skip` marks columns excluded from general
    // pairing (used by the temporal-recursion wiring); `force` pre-pairs a
    // column to a specific earlier column.
    int add_step(const std::string& rel, const std::set<std::string>& skip = {},
                 const std::map<std::string, std::pair<int, std::string>>& force = {}) {
        JoinPlan::Step st;
        st.relation = rel;
        st.alias = rel;
        for (int k = 2; std::any_of(plan.steps.begin(), plan.steps.end(),
                                    [&](const JoinPlan::Step& s) { return s.alias == st.alias; });
             ++k)
            st.alias = rel + "#" + std::to_string(k);
        const int idx = static_cast<int>(plan.steps.size());
        plan.steps.push_back(st);
        auto& step = plan.steps.back();

        int pairings = 0;
        std::vector<std::string> unpaired_nonkey;
        for (const auto& col : entity_cols(db, rel)) {
            colinfo[{idx, col.attr}] = col;
            int ps = -1;
            std::string pa;
            bool paired = false;
            if (auto it = force.find(col.attr); it != force.end()) {
                ps = it->second.first;
                pa = it->second.second;
                paired = true;
            } else if (idx > 0 && !skip.count(col.attr)) {
                paired = find_partner(col, idx, ps, pa);
            }
            if (paired && !col.key) {
                // Paired non-key column: reuses the partner's variable.
                step.ov[col.attr] = ov(ps, pa);
            } else {
                step.ov[col.attr] = fresh(col.attr, col.type);
                if (!col.key) unpaired_nonkey.push_back(col.attr);
            }
            if (paired) {
                plan.conds.push_back({ps, pa, idx, col.attr});
                ++pairings;
            }
        }
        // Contexts after all of this step's variables exist (a non-key
        // condition needs the step's full key variable list).
        for (const auto& c : plan.conds)
            if (c.b == idx) add_condition_context(c.a, c.a_attr, c.b, c.b_attr);
        // An unpaired entity-valued column still pins its variable to the
        // column's ground function, so later steps can join against it.
        for (const auto& attr : unpaired_nonkey)
            plan.contexts.push_back(ContextNode::relational(step.ov.at(attr), attr, key_ovs(idx)));
        if (idx > 0 && pairings == 0 && force.empty())
            fail(Errc::NoPath, "relation '" + rel + "' shares no entity type with the plan so far");
        return idx;
    }

    int step_of(const std::string& rel) const {
        for (size_t i = 0; i < plan.steps.size(); ++i)
            if (plan.steps[i].relation == rel && !plan.steps[i].ordering &&
                plan.steps[i].alias == rel)
                return static_cast<int>(i);
        return -1;
    }
};

} // namespace detail

inline JoinPlan plan_join(const Mapping& mp, const Database& db, const CausalRule& rule) {
    detail::Planner pl(mp, db);
    pl.plan.child_attr = rule.child.attr;
    pl.add_step(rule.child.relation);

    // Optional via= waypoints are walked up front so parent paths reuse them.
    for (const auto& rel : rule.via) {
        if (!db.has(rel)) fail(Errc::AmbiguousHint, "via relation '" + rel + "' does not exist");
        if (pl.step_of(rel) < 0) pl.add_step(rel);
    }

    for (const auto& pref : rule.parents) {
        const std::string resident = detail::resolve_resident(mp, db, pref, rule.text);
        const std::string value_attr = mp.source_of(resident).attr;
        if (pref.prev) {
            if (mp.ordering_relation.empty())
                fail(Errc::BadRule, "'@prev' needs an ordering relation in the schema: " + rule.text);
            // Child's ordered key column.
            std::string tcol;
            for (const auto& c : detail::entity_cols(db, rule.child.relation))
                if (c.key && c.type == mp.ordered_type) {
                    if (!tcol.empty())
                        fail(Errc::BadRule, "child has two ordered key columns: " + rule.text);
                    tcol = c.attr;
                }
            if (tcol.empty())
                fail(Errc::BadRule, "child relation has no ordered key column: " + rule.text);
            // Ordering step: second column pairs to the child's ordered key.
            auto ord_cols = detail::entity_cols(db, mp.ordering_relation);
            if (ord_cols.size() != 2)
                fail(Errc::BadRule, "ordering relation must have exactly two key columns");
            const int ord = pl.add_step(
                mp.ordering_relation, {ord_cols[0].attr},
                {{ord_cols[1].attr, {0, tcol}}});
            pl.plan.steps[static_cast<size_t>(ord)].ordering = true;
            pl.plan.contexts.push_back(ContextNode::boolean(
                mp.mtheory.ordering_relation,
                {pl.ov(ord, ord_cols[0].attr), pl.ov(ord, ord_cols[1].attr)}));
            // Fresh parent step: its ordered key column pairs to the
            // ordering step's first (earlier-in-order) column.
            std::string ptcol;
            for (const auto& c : detail::entity_cols(db, pref.relation))
                if (c.key && c.type == mp.ordered_type) ptcol = c.attr;
            if (ptcol.empty())
                fail(Errc::BadRule, "'@prev' parent has no ordered key column: " + rule.text);
            const int pstep =
                pl.add_step(pref.relation, {}, {{ptcol, {ord, ord_cols[0].attr}}});
            pl.plan.parents.push_back({pstep, resident, value_attr, true, false});
            continue;
        }
        if (pref.relation == rule.child.relation) { // same-row sibling parent
            pl.plan.parents.push_back({0, resident, value_attr, false, true});
            continue;
        }
        int pstep = pl.step_of(pref.relation);
        if (pstep < 0) {
            std::set<std::string> sources;
            for (const auto& s : pl.plan.steps)
                if (!s.ordering) sources.insert(s.relation);
            auto path = detail::shortest_path(db, mp.ordered_type, sources, pref.relation);
            for (size_t i = 1; i < path.size(); ++i) pstep = pl.add_step(path[i]);
        }
        pl.plan.parents.push_back({pstep, resident, value_attr, false, false});
    }
    return pl.plan;
}

// ---------------------------------------------------------------------------
// Context refinement
// ---------------------------------------------------------------------------

namespace detail {

struct UnionFind {
    std::map<std::string, std::string> parent;
    const std::string& find(const std::string& x) {
        auto it = parent.find(x);
        if (it == parent.end()) return parent[x] = x;
        if (it->second == x) return it->second;
        std::string root = find(it->second);
        parent[x] = root;
        return parent[x];
    }
    void unite(const std::string& a, const std::string& b) {
        std::string ra = find(a), rb = find(b);
        if (ra != rb) parent[ra] = rb;
    }
};

} // namespace detail

// Merge ordinary variables connected by equality context nodes and drop the
// equalities. Survivor choice per merged class: a name used as a resident
// argument if any, otherwise the case-insensitively smallest name.
// Returns the refined fragment; `renames` (if given) receives old -> new.
inline MFrag refine_context(const MFrag& f, std::map<std::string, std::string>* renames = nullptr) {
    detail::UnionFind uf;
    for (const auto& o : f.ovs) uf.find(o.name);
    for (const auto& c : f.contexts)
        if (c.kind == ContextNode::Kind::Equality) {
            const auto *a = f.find_ov(c.lhs), *b = f.find_ov(c.rhs);
            if (a && b && a->type != b->type)
                fail(Errc::TypeMismatch, "fragment '" + f.name + "': '" + c.lhs + "' (" + a->type +
                                             ") = '" + c.rhs + "' (" + b->type + ")");
            uf.unite(c.lhs, c.rhs);
        }
    // Group members per class, in declaration order.
    std::map<std::string, std::vector<std::string>> members;
    for (const auto& o : f.ovs) members[uf.find(o.name)].push_back(o.name);
    std::set<std::string> resident_args;
    for (const auto& r : f.residents)
        for (const auto& a : r.args) resident_args.insert(a);
    std::map<std::string, std::string> to; // every ov -> survivor
    for (const auto& [root, group] : members) {
        (void)root;
        std::string survivor;
        for (const auto& n : group)
            if (resident_args.count(n)) {
                survivor = n;
                break;
            }
        if (survivor.empty()) {
            survivor = group.front();
            for (const auto& n : group)
                if (ci_less(n, survivor)) survivor = n;
        }
        for (const auto& n : group) to[n] = survivor;
    }
    auto ren = [&](const std::string& n) {
        auto it = to.find(n);
        return it == to.end() ? n : it->second;
    };

    MFrag out;
    out.name = f.name;
    for (const auto& o : f.ovs)
        if (ren(o.name) == o.name) out.ovs.push_back(o);
    std::set<std::string> seen_ctx;
    for (const auto& c : f.contexts) {
        if (c.kind == ContextNode::Kind::Equality) continue;
        ContextNode nc = c;
        nc.lhs = ren(nc.lhs);
        for (auto& a : nc.args) a = ren(a);
        if (seen_ctx.insert(nc.signature()).second) out.contexts.push_back(std::move(nc));
    }
    // Inputs may collapse into one another after renaming.
    std::vector<int> input_remap(f.inputs.size());
    for (size_t i = 0; i < f.inputs.size(); ++i) {
        InputNode in = f.inputs[i];
        for (auto& a : in.args) a = ren(a);
        input_remap[i] = out.ensure_input(in);
    }
    for (const auto& r : f.residents) {
        ResidentNode nr = r;
        for (auto& a : nr.args) a = ren(a);
        std::vector<int> ip;
        for (int ii : r.ip) {
            int m = input_remap[static_cast<size_t>(ii)];
            if (std::find(ip.begin(), ip.end(), m) == ip.end()) ip.push_back(m);
        }
        nr.ip = std::move(ip);
        out.residents.push_back(std::move(nr));
    }
    if (renames) *renames = std::move(to);
    return out;
}

// ---------------------------------------------------------------------------
// Rule application
// ---------------------------------------------------------------------------

namespace detail {

// Parameter-placeholder distribution: one branch per state of the single
// discrete parent (none when the rule has no discrete parent), plus a
// default. Branch i, slot j placeholders follow the convention
// theta(i, j); the default uses branch index 0.
inline std::optional<CLD> theta_skeleton(const Mapping& mp, const CausalRule& rule,
                                         const MFrag& frag, const ResidentNode& child,
                                         const std::vector<JoinPlan::ParentLoc>& parents) {
    std::vector<std::pair<std::string, std::vector<std::string>>> discrete; // resident, quantified ovs
    std::vector<std::string> continuous;
    for (size_t i = 0; i < parents.size(); ++i) {
        const auto& loc = parents[i];
        auto home = mp.mtheory.find_home_any_arity(loc.resident);
        if (!home.resident)
            fail(Errc::UnknownParent, "parent '" + loc.resident + "' has no home fragment");
        const ValueSpace& vs = home.resident->vs;
        std::vector<std::string> quant;
        if (loc.sibling) {
            quant = child.args;
        } else {
            // The input node carrying this parent holds the refined argument list.
            for (int ii : child.ip) {
                const auto& in = frag.inputs[static_cast<size_t>(ii)];
                if (in.resident == loc.resident) quant = in.args;
            }
        }
        if (vs.discrete()) discrete.emplace_back(loc.resident, quant);
        else if (vs.kind == ValueSpace::Kind::Continuous) continuous.push_back(loc.resident);
        else fail(Errc::BadRule, "parent '" + loc.resident + "' is not discrete or continuous: " + rule.text);
    }
    if (rule.family == CausalRule::Family::Categorical && !continuous.empty())
        fail(Errc::BadRule, "continuous parent of a discrete child is not supported: " + rule.text);
    if (rule.family == CausalRule::Family::Clg && child.vs.kind != ValueSpace::Kind::Continuous)
        fail(Errc::BadRule, "family=clg needs a continuous child: " + rule.text);
    if (rule.family == CausalRule::Family::Categorical && !child.vs.discrete())
        fail(Errc::BadRule, "family=categorical needs a discrete child: " + rule.text);
    if (discrete.size() > 1) return std::nullopt; // branches come from observed configurations

    CLD cld;
    if (rule.agg_set) cld.default_agg = rule.agg;
    auto lg_csd = [&](int branch, bool with_terms) {
        LinearGaussianCSD g;
        g.intercept = ThetaRef{branch, 0};
        if (with_terms)
            for (size_t k = 0; k < continuous.size(); ++k)
                g.terms.push_back({continuous[k], ThetaRef{branch, static_cast<int>(k) + 1},
                                   rule.agg_set, rule.agg});
        g.var = ThetaRef{branch, static_cast<int>(continuous.size()) + 1};
        return g;
    };
    auto cat_csd = [&](int branch) {
        CategoricalCSD c;
        const auto states = child.vs.state_list();
        for (size_t j = 0; j < states.size(); ++j)
            c.probs.emplace_back(states[j], ThetaRef{branch, static_cast<int>(j) + 1});
        return c;
    };
    if (!discrete.empty()) {
        const auto& [dres, quant] = discrete.front();
        auto home = mp.mtheory.find_home_any_arity(dres);
        for (size_t s = 0; s < home.resident->vs.state_list().size(); ++s) {
            CPC cpc;
            cpc.kind = CPC::Kind::Some;
            cpc.ovs = quant;
            cpc.parent = dres;
            cpc.state = home.resident->vs.state_list()[s];
            const int bi = static_cast<int>(s) + 1;
            if (rule.family == CausalRule::Family::Clg)
                cld.branches.emplace_back(cpc, lg_csd(bi, true));
            else
                cld.branches.emplace_back(cpc, cat_csd(bi));
        }
    }
    if (rule.family == CausalRule::Family::Clg)
        cld.def = lg_csd(0, discrete.empty()); // with no discrete parent the default is the regression
    else
        cld.def = cat_csd(0);
    return cld;
}

} // namespace detail

inline RuleApplication apply_rule(Mapping& mp, const Database& db, const CausalRule& rule) {
    const std::string child_res = detail::resolve_resident(mp, db, rule.child, rule.text);
    auto home = mp.mtheory.find_home_any_arity(child_res);
    if (!home.resident) fail(Errc::UnknownNode, "resident '" + child_res + "' has no home fragment");
    if (home.resident->vs.kind == ValueSpace::Kind::Entity)
        fail(Errc::BadRule, "entity-valued resident '" + child_res + "' cannot be a rule child: " + rule.text);
    for (const auto& p : rule.parents) {
        const std::string pres = detail::resolve_resident(mp, db, p, rule.text);
        auto ph = mp.mtheory.find_home_any_arity(pres);
        if (ph.resident && ph.resident->vs.kind == ValueSpace::Kind::Entity)
            fail(Errc::BadRule, "entity-valued resident '" + pres + "' cannot be a rule parent: " + rule.text);
    }

    JoinPlan plan = plan_join(mp, db, rule);
    RuleApplication app;
    app.rule = rule;
    app.child_resident = child_res;

    const std::string home_name = home.mfrag->name;
    const MTheory backup = mp.mtheory; // restored if validation below fails
    try {
        MFrag* orig = mp.mtheory.find_mfrag(home_name);
        if (plan.steps.size() == 1) {
            // Sibling-only rule: add intra-fragment parent edges in place.
            ResidentNode* child = orig->find_resident(child_res);
            for (const auto& loc : plan.parents)
                if (std::find(child->rp.begin(), child->rp.end(), loc.resident) == child->rp.end())
                    child->rp.push_back(loc.resident);
            if (auto cld = detail::theta_skeleton(mp, rule, *orig, *child, plan.parents))
                child->cld = *cld;
            app.pre = *orig;
            app.post = *orig;
        } else {
            MFrag nf;
            const bool siblings = orig->residents.size() > 1;
            nf.name = siblings ? home_name + "_" + upper(rule.child.attr) : home_name;
            nf.ovs = plan.ovdecls;
            nf.contexts = plan.contexts;
            ResidentNode child = *orig->find_resident(child_res);
            child.ip.clear();
            child.rp.clear();
            for (const auto& loc : plan.parents) {
                std::vector<std::string> args;
                if (loc.sibling) args = child.args;
                else {
                    const auto& st = plan.steps[static_cast<size_t>(loc.step)];
                    for (const auto& c : detail::entity_cols(db, st.relation))
                        if (c.key) args.push_back(st.ov.at(c.attr));
                }
                child.ip.push_back(nf.ensure_input({loc.resident, args}));
            }
            nf.residents.push_back(std::move(child));
            app.pre = nf;

            std::map<std::string, std::string> renames;
            MFrag post = refine_context(nf, &renames);
            for (auto& step : plan.steps)
                for (auto& [attr, ovname] : step.ov)
                    if (auto it = renames.find(ovname); it != renames.end()) ovname = it->second;
            ResidentNode* pchild = post.find_resident(child_res);
            if (auto cld = detail::theta_skeleton(mp, rule, post, *pchild, plan.parents))
                pchild->cld = *cld;

            if (siblings) {
                auto& rs = orig->residents;
                rs.erase(std::remove_if(rs.begin(), rs.end(),
                                        [&](const ResidentNode& r) { return r.name == child_res; }),
                         rs.end());
                if (mp.mtheory.find_mfrag(nf.name))
                    fail(Errc::DuplicateMFragName, "derived fragment name '" + nf.name + "' already exists");
                mp.mtheory.mfrags.push_back(post);
            } else {
                *mp.mtheory.find_mfrag(home_name) = post;
            }
            app.post = post;
        }
        try {
            check_acyclic(mp.mtheory);
        } catch (const Error& e) {
            fail(Errc::CycleIntroduced, std::string(e.what()) + " (introduced by: " + rule.text + ")");
        }
    } catch (...) {
        mp.mtheory = backup;
        throw;
    }
    app.plan = std::move(plan);
    mp.applications.push_back(app);
    return app;
}

inline void apply_rules(Mapping& mp, const Database& db, const std::vector<CausalRule>& rules) {
    for (const auto& r : rules) apply_rule(mp, db, r);
}

} // namespace mebn
