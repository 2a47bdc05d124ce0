#pragma once

// Ground-network construction: instantiate every distribution-bearing
// resident node over the known entity instances, resolve each fragment's
// context constraints against observed ground values, and wire parent bags.
//
// Grounding is all-or-nothing per fragment binding: a parent instance is
// attached only when some assignment of the fragment's ordinary variables
// satisfies every context constraint. Nodes whose constraints admit no
// assignment get empty parent bags and fall to their default distribution,
// mirroring the inner-join/anti-join split used when the distributions were
// learned.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/mapper.hpp"
#include "mebn/mtheory.hpp"
#include "mebn/relational.hpp"
#include "mebn/util.hpp"

namespace mebn {

// ---------------------------------------------------------------------------
// Ground evidence: entity instances and observed values of ground functions
// ---------------------------------------------------------------------------

struct Evidence {
    // Entity type name -> known instances of that type.
    std::map<std::string, std::vector<std::string>> entities;
    // Resident name -> packed argument tuple -> observed value. Boolean
    // membership functions are closed-world: absent tuples read as False.
    std::map<std::string, std::map<std::string, std::string>> values;

    static std::string pack(const std::vector<std::string>& args) { return join(args, "\x1f"); }

    const std::string* lookup(const std::string& fn, const std::vector<std::string>& args) const {
        auto it = values.find(fn);
        if (it == values.end()) return nullptr;
        auto jt = it->second.find(pack(args));
        return jt == it->second.end() ? nullptr : &jt->second;
    }

    void set(const std::string& fn, const std::vector<std::string>& args, const std::string& v) {
        values[fn][pack(args)] = v;
    }
};

// Read every entity instance and every ground function value out of a
// database, using the mapping's resident -> (relation, attr) table.
inline Evidence evidence_from_database(const Mapping& mp, const Database& db) {
    Evidence ev;
    for (const auto& [type, rel] : mp.type_relation) {
        if (!db.has(rel)) continue;
        const RelationInstance& ri = db.at(rel);
        auto& list = ev.entities[type];
        for (const auto& row : ri.rows) list.push_back(ri.key_of(row)[0]);
        std::sort(list.begin(), list.end());
    }
    for (const auto& [resident, src] : mp.source) {
        if (!db.has(src.relation)) continue;
        const RelationInstance& ri = db.at(src.relation);
        // Membership residents may have gained a value column through
        // closed-world completion; otherwise every stored row reads True.
        std::string attr = src.attr;
        if (attr.empty() && ri.schema.find_attr(src.relation)) attr = src.relation;
        std::vector<int> key_idx;
        for (const auto& k : src.key_attrs) key_idx.push_back(ri.schema.attr_index(k));
        const int val_idx = attr.empty() ? -1 : ri.schema.attr_index(attr);
        for (const auto& row : ri.rows) {
            std::vector<std::string> key;
            for (int i : key_idx) key.push_back(row[i]);
            ev.set(resident, key, val_idx < 0 ? "True" : row[val_idx]);
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Ground network
// ---------------------------------------------------------------------------

struct ParentBag {
    std::string resident;   // class parent name (bags are looked up by it)
    std::vector<int> nodes; // ground parent node indices, sorted
};

struct GroundNode {
    std::string resident;
    std::vector<std::string> args;
    std::string id; // resident and args joined with '_'
    ValueSpace vs;
    CLD cld;
    std::vector<ParentBag> bags;
    std::vector<int> parents; // union of all bags, sorted and unique

    bool discrete() const { return vs.discrete(); }
};

struct Ssbn {
    std::vector<GroundNode> nodes;
    std::map<std::string, int> index;        // node id -> position
    std::vector<std::string> reports;        // context functions missing values
    std::vector<std::vector<int>> children_; // filled by finish()

    int find(const std::string& id) const {
        auto it = index.find(id);
        if (it == index.end()) fail(Errc::UnknownNode, "no ground node named '" + id + "'");
        return it->second;
    }
    bool has(const std::string& id) const { return index.count(id) != 0; }

    void finish() {
        children_.assign(nodes.size(), {});
        for (size_t i = 0; i < nodes.size(); ++i)
            for (int p : nodes[i].parents) children_[p].push_back(static_cast<int>(i));
    }

    // Kahn topological order; cycles are a hard error and name a witness.
    std::vector<int> topo_order() const {
        std::vector<int> indeg(nodes.size(), 0), order;
        for (const auto& n : nodes) indeg[&n - nodes.data()] = static_cast<int>(n.parents.size());
        std::vector<int> ready;
        for (size_t i = 0; i < nodes.size(); ++i)
            if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
        while (!ready.empty()) {
            int v = ready.front();
            ready.erase(ready.begin());
            order.push_back(v);
            for (int c : children_[v])
                if (--indeg[c] == 0) ready.push_back(c);
        }
        if (order.size() != nodes.size()) {
            for (size_t i = 0; i < nodes.size(); ++i)
                if (indeg[i] > 0)
                    fail(Errc::CyclicModel, "ground network has a directed cycle through '" + nodes[i].id + "'");
        }
        return order;
    }
};

inline std::string ground_id(const std::string& resident, const std::vector<std::string>& args) {
    std::string id = resident;
    for (const auto& a : args) id += "_" + a;
    return id;
}

namespace detail {

// Odometer over candidate instance lists; calls fn with the current pick.
template <typename Fn>
inline void for_each_binding(const std::vector<const std::vector<std::string>*>& domains,
                             std::vector<std::string>& pick, size_t at, Fn&& fn) {
    if (at == domains.size()) {
        fn();
        return;
    }
    for (const auto& v : *domains[at]) {
        pick[at] = v;
        for_each_binding(domains, pick, at + 1, fn);
    }
}

} // namespace detail

// Instantiate the class model over the evidence's entity instances.
inline Ssbn ground(const MTheory& m, const Evidence& ev) {
    Ssbn net;
    std::set<std::string> reports;
    const std::vector<std::string> empty_domain;
    auto instances_of = [&](const std::string& type) -> const std::vector<std::string>& {
        auto it = ev.entities.find(type);
        return it == ev.entities.end() ? empty_domain : it->second;
    };

    // Pass 1: a node per type-correct binding of each distribution-bearing
    // resident's own arguments.
    for (const auto& f : m.mfrags) {
        for (const auto& r : f.residents) {
            if (!r.cld) continue;
            std::vector<const std::vector<std::string>*> domains;
            for (const auto& a : r.args) {
                const OrdinaryVariable* ov = f.find_ov(a);
                if (!ov) fail(Errc::UndeclaredOrdinaryVariable, "'" + a + "' in resident '" + r.name + "'");
                domains.push_back(&instances_of(ov->type));
            }
            std::vector<std::string> pick(domains.size());
            detail::for_each_binding(domains, pick, 0, [&] {
                GroundNode n;
                n.resident = r.name;
                n.args = pick;
                n.id = ground_id(r.name, pick);
                n.vs = r.vs;
                n.cld = *r.cld;
                net.index.emplace(n.id, static_cast<int>(net.nodes.size()));
                net.nodes.push_back(std::move(n));
            });
        }
    }

    // Pass 2: parent bags via full fragment bindings.
    for (const auto& f : m.mfrags) {
        for (const auto& r : f.residents) {
            if (!r.cld) continue;

            // Free ordinary variables: everything not fixed by the child's args.
            std::vector<const OrdinaryVariable*> frees;
            for (const auto& ov : f.ovs)
                if (std::find(r.args.begin(), r.args.end(), ov.name) == r.args.end())
                    frees.push_back(&ov);

            std::vector<const std::vector<std::string>*> child_domains;
            for (const auto& a : r.args) child_domains.push_back(&instances_of(f.find_ov(a)->type));
            std::vector<const std::vector<std::string>*> free_domains;
            for (const auto* ov : frees) free_domains.push_back(&instances_of(ov->type));

            std::vector<std::string> cpick(child_domains.size()), fpick(free_domains.size());
            detail::for_each_binding(child_domains, cpick, 0, [&] {
                GroundNode& node = net.nodes[net.find(ground_id(r.name, cpick))];
                std::map<std::string, std::string> bind;
                for (size_t i = 0; i < r.args.size(); ++i) bind[r.args[i]] = cpick[i];

                std::vector<std::set<int>> rp_bags(r.rp.size()), ip_bags(r.ip.size());
                detail::for_each_binding(free_domains, fpick, 0, [&] {
                    for (size_t i = 0; i < frees.size(); ++i) bind[frees[i]->name] = fpick[i];
                    auto val = [&](const std::string& ovname) -> const std::string& {
                        auto it = bind.find(ovname);
                        if (it == bind.end())
                            fail(Errc::UndeclaredOrdinaryVariable, "'" + ovname + "' in fragment '" + f.name + "'");
                        return it->second;
                    };
                    for (const auto& c : f.contexts) {
                        if (c.kind == ContextNode::Kind::Equality) {
                            if (val(c.lhs) != val(c.rhs)) return;
                        } else {
                            std::vector<std::string> gargs;
                            for (const auto& a : c.args) gargs.push_back(val(a));
                            const std::string* v = ev.lookup(c.func, gargs);
                            if (c.kind == ContextNode::Kind::RelationalConstraint) {
                                if (!v) {
                                    reports.insert("unbound context: " + c.func + " (" + join(gargs, ", ") +
                                                   ") has no observed value");
                                    return;
                                }
                                if (*v != val(c.lhs)) return;
                            } else if (!v || *v != "True") {
                                return; // closed world: unstated boolean tuples are False
                            }
                        }
                    }
                    auto parent_index = [&](const std::string& pname, const std::vector<std::string>& pargs) {
                        std::vector<std::string> ground_args;
                        for (const auto& a : pargs) ground_args.push_back(val(a));
                        const std::string id = ground_id(pname, ground_args);
                        if (!net.has(id))
                            fail(Errc::UnknownParent,
                                 "parent '" + id + "' of '" + node.id + "' has no distribution to ground");
                        return net.find(id);
                    };
                    for (size_t i = 0; i < r.rp.size(); ++i) {
                        const ResidentNode* pr = f.find_resident(r.rp[i]);
                        if (!pr) fail(Errc::UnknownParentRef, "resident parent '" + r.rp[i] + "'");
                        rp_bags[i].insert(parent_index(pr->name, pr->args));
                    }
                    for (size_t i = 0; i < r.ip.size(); ++i) {
                        const InputNode& in = f.inputs[r.ip[i]];
                        ip_bags[i].insert(parent_index(in.resident, in.args));
                    }
                });

                std::set<int> all;
                for (size_t i = 0; i < r.rp.size(); ++i) {
                    node.bags.push_back({r.rp[i], {rp_bags[i].begin(), rp_bags[i].end()}});
                    all.insert(rp_bags[i].begin(), rp_bags[i].end());
                }
                for (size_t i = 0; i < r.ip.size(); ++i) {
                    node.bags.push_back({f.inputs[r.ip[i]].resident, {ip_bags[i].begin(), ip_bags[i].end()}});
                    all.insert(ip_bags[i].begin(), ip_bags[i].end());
                }
                node.parents.assign(all.begin(), all.end());
            });
        }
    }

    net.reports.assign(reports.begin(), reports.end());
    net.finish();
    net.topo_order(); // reject cyclic ground structure up front
    return net;
}

// ---------------------------------------------------------------------------
// Node-level evidence
// ---------------------------------------------------------------------------

struct GroundEvidence {
    std::map<int, std::string> disc; // node -> observed state
    std::map<int, double> cont;      // node -> observed value

    bool observed(int node) const { return disc.count(node) || cont.count(node); }
};

// Mark every ground node whose value appears in the evidence table.
inline GroundEvidence observe_all(const Ssbn& net, const Evidence& ev) {
    GroundEvidence ge;
    for (size_t i = 0; i < net.nodes.size(); ++i) {
        const GroundNode& n = net.nodes[i];
        const std::string* v = ev.lookup(n.resident, n.args);
        if (!v) continue;
        if (n.discrete()) {
            const auto states = n.vs.state_list();
            if (std::find(states.begin(), states.end(), *v) == states.end())
                fail(Errc::UnknownState, "'" + *v + "' is not a state of '" + n.id + "'");
            ge.disc[static_cast<int>(i)] = *v;
        } else {
            ge.cont[static_cast<int>(i)] = parse_number(*v, "value of '" + n.id + "'");
        }
    }
    return ge;
}

} // namespace mebn
