#pragma once

// Training-data construction from a planned join:
//   * execute_join — inner join over the plan's steps, grouped into one case
//     per child row with a bag of distinct instances per parent.
//   * flatten — one row per full parent assignment (deduplicated by the
//     child key plus all parent instance keys), in child-row order.
//   * partitioning — assign flattened rows (or whole cases) to the first
//     matching branch of a conditional distribution.
//   * count_table — per-branch state counts for discrete children.
// Child rows with no full parent assignment form the default dataset.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/mapper.hpp"
#include "mebn/mtheory.hpp"
#include "mebn/relational.hpp"

namespace mebn {

struct ParentInstance {
    std::vector<std::string> key; // parent row's primary-key values
    std::string value;            // parent value cell ("True" for membership)
    bool operator<(const ParentInstance& o) const {
        return key != o.key ? key < o.key : value < o.value;
    }
    bool operator==(const ParentInstance& o) const = default;
};

struct JoinedCase {
    std::vector<std::string> child_key;
    std::string child_value;
    std::vector<std::vector<ParentInstance>> bags; // one bag per rule parent
};

struct FlatRow {
    int case_index = 0; // 1-based index of the owning case
    std::vector<std::string> child_key;
    std::string child_value;
    std::vector<ParentInstance> parents; // one instance per rule parent
};

struct JoinedDataset {
    std::vector<std::string> parent_residents; // rule order
    std::vector<JoinedCase> cases;
    // Child rows with no full parent assignment: (key, value) pairs.
    std::vector<std::pair<std::vector<std::string>, std::string>> defaults;
};

inline JoinedDataset execute_join(const Database& db, const JoinPlan& plan) {
    JoinedDataset out;
    for (const auto& p : plan.parents) out.parent_residents.push_back(p.resident);

    const size_t nsteps = plan.steps.size();
    std::vector<const RelationInstance*> rels;
    std::vector<std::vector<std::pair<int, std::pair<int, int>>>> conds(nsteps);
    for (const auto& st : plan.steps) rels.push_back(&db.at(st.relation));
    for (const auto& c : plan.conds) {
        const int ai = rels[static_cast<size_t>(c.a)]->schema.attr_index(c.a_attr);
        const int bi = rels[static_cast<size_t>(c.b)]->schema.attr_index(c.b_attr);
        if (ai < 0 || bi < 0) fail(Errc::BadConfig, "join condition names a missing attribute");
        conds[static_cast<size_t>(c.b)].push_back({c.a, {ai, bi}});
    }
    const RelationInstance& child = *rels[0];
    const int child_val_idx =
        plan.child_attr.empty() ? -1 : child.schema.attr_index(plan.child_attr);
    if (!plan.child_attr.empty() && child_val_idx < 0)
        fail(Errc::BadConfig, "child relation has no attribute '" + plan.child_attr + "'");

    std::vector<const std::vector<std::string>*> assignment(nsteps, nullptr);
    for (const auto& crow : child.rows) {
        assignment[0] = &crow;
        JoinedCase jc;
        jc.child_key = child.key_of(crow);
        jc.child_value = child_val_idx < 0 ? "True" : crow[static_cast<size_t>(child_val_idx)];
        jc.bags.resize(plan.parents.size());
        std::set<std::vector<std::string>> seen; // flat dedup within the case
        bool any = false;

        auto record = [&]() {
            std::vector<std::string> dedup_key;
            std::vector<ParentInstance> insts;
            for (const auto& loc : plan.parents) {
                const auto& prow = *assignment[static_cast<size_t>(loc.step)];
                const RelationInstance& prel = *rels[static_cast<size_t>(loc.step)];
                ParentInstance pi;
                pi.key = prel.key_of(prow);
                const int vi = loc.attr.empty() ? -1 : prel.schema.attr_index(loc.attr);
                pi.value = vi < 0 ? "True" : prow[static_cast<size_t>(vi)];
                for (const auto& k : pi.key) dedup_key.push_back(k);
                dedup_key.push_back("\x1f");
                insts.push_back(std::move(pi));
            }
            if (!seen.insert(dedup_key).second) return;
            any = true;
            for (size_t p = 0; p < insts.size(); ++p) {
                auto& bag = jc.bags[p];
                if (std::find(bag.begin(), bag.end(), insts[p]) == bag.end())
                    bag.push_back(insts[p]);
            }
        };
        auto extend = [&](auto&& self, size_t k) -> void {
            if (k == nsteps) {
                record();
                return;
            }
            for (const auto& row : rels[k]->rows) {
                bool ok = true;
                for (const auto& [a, idx] : conds[k]) {
                    const auto& arow = *assignment[static_cast<size_t>(a)];
                    if (arow[static_cast<size_t>(idx.first)] != row[static_cast<size_t>(idx.second)]) {
                        ok = false;
                        break;
                    }
                }
                if (!ok) continue;
                assignment[k] = &row;
                self(self, k + 1);
            }
            assignment[k] = nullptr;
        };
        extend(extend, 1);

        if (any) {
            for (auto& bag : jc.bags) std::sort(bag.begin(), bag.end());
            out.cases.push_back(std::move(jc));
        } else {
            out.defaults.emplace_back(jc.child_key, jc.child_value);
        }
    }
    return out;
}

// One row per distinct full parent assignment. Cases keep child-row order;
// within a case, rows are ordered by their parent instance keys.
inline std::vector<FlatRow> flatten(const JoinedDataset& ds) {
    std::vector<FlatRow> out;
    for (size_t ci = 0; ci < ds.cases.size(); ++ci) {
        const JoinedCase& jc = ds.cases[ci];
        std::vector<std::vector<ParentInstance>> combos{{}};
        for (const auto& bag : jc.bags) {
            std::vector<std::vector<ParentInstance>> next;
            for (const auto& combo : combos)
                for (const auto& pi : bag) {
                    next.push_back(combo);
                    next.back().push_back(pi);
                }
            combos = std::move(next);
        }
        std::sort(combos.begin(), combos.end());
        for (auto& combo : combos) {
            FlatRow r;
            r.case_index = static_cast<int>(ci) + 1;
            r.child_key = jc.child_key;
            r.child_value = jc.child_value;
            r.parents = std::move(combo);
            out.push_back(std::move(r));
        }
    }
    return out;
}

namespace detail {

inline std::vector<GroundParentInstance>
row_instances(const std::vector<std::string>& parents, const std::vector<ParentInstance>& insts) {
    std::vector<GroundParentInstance> out;
    for (size_t p = 0; p < parents.size() && p < insts.size(); ++p)
        out.push_back({parents[p], join(insts[p].key, "_"), insts[p].value});
    return out;
}

// Every parent a branch condition mentions must be a parent the dataset
// actually carries, otherwise no row could ever satisfy the branch.
inline void check_cpc_parents(const CLD& cld, const std::vector<std::string>& parents) {
    std::set<std::string> have(parents.begin(), parents.end());
    for (const auto& [cpc, csd] : cld.branches) {
        std::vector<std::string> mentioned;
        if (cpc.kind == CPC::Kind::Some) mentioned.push_back(cpc.parent);
        else
            for (const auto& [p, s] : cpc.config) mentioned.push_back(p);
        for (const auto& m : mentioned)
            if (!have.count(m))
                fail(Errc::UnmatchedCase, "branch condition mentions '" + m +
                                              "', which is not a parent of this dataset");
    }
}

} // namespace detail

// First matching branch for a whole case (bag semantics); -1 means default.
inline int partition_case(const JoinedCase& jc, const std::vector<std::string>& parents,
                          const CLD& cld) {
    detail::check_cpc_parents(cld, parents);
    std::vector<GroundParentInstance> insts;
    for (size_t p = 0; p < parents.size() && p < jc.bags.size(); ++p)
        for (const auto& pi : jc.bags[p])
            insts.push_back({parents[p], join(pi.key, "_"), pi.value});
    return pick_branch(cld, insts);
}

struct Partition {
    std::vector<std::vector<int>> branch_rows; // per branch, indices into the flat view
    std::vector<int> default_rows;
};

// First matching branch per flattened row (each row carries exactly one
// instance per parent).
inline Partition partition_rows(const std::vector<FlatRow>& flat,
                                const std::vector<std::string>& parents, const CLD& cld) {
    detail::check_cpc_parents(cld, parents);
    Partition out;
    out.branch_rows.resize(cld.branches.size());
    for (size_t i = 0; i < flat.size(); ++i) {
        const int b = pick_branch(cld, detail::row_instances(parents, flat[i].parents));
        if (b < 0) out.default_rows.push_back(static_cast<int>(i));
        else out.branch_rows[static_cast<size_t>(b)].push_back(static_cast<int>(i));
    }
    return out;
}

struct CountTable {
    std::vector<std::map<std::string, int>> branch; // per branch: state -> count
    std::map<std::string, int> def;
};

// Per-branch child-state counts over the flattened view; each row counts once.
inline CountTable count_table(const std::vector<FlatRow>& flat,
                              const std::vector<std::string>& parents, const CLD& cld) {
    const Partition part = partition_rows(flat, parents, cld);
    CountTable out;
    out.branch.resize(part.branch_rows.size());
    for (size_t b = 0; b < part.branch_rows.size(); ++b)
        for (int i : part.branch_rows[b])
            ++out.branch[b][flat[static_cast<size_t>(i)].child_value];
    for (int i : part.default_rows) ++out.def[flat[static_cast<size_t>(i)].child_value];
    return out;
}

} // namespace mebn
