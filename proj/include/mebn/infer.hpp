#pragma once

// Queries over a ground network.
//
//  - Discrete posteriors by exact variable elimination (min-degree order),
//    computed over the moral connected component of the query inside the
//    ancestor closure of query and evidence.
//  - Continuous posteriors for conditional linear Gaussian networks:
//    enumerate the relevant discrete configurations, propagate a joint
//    Gaussian through the continuous nodes, reweight each configuration by
//    the likelihood of the continuous evidence, and report the resulting
//    mixture.
//
// Tables are materialized per node from its class local distribution: one
// probability row per joint assignment of the ground parents, with branch
// selection and CARDINALITY resolved against that assignment.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/mtheory.hpp"
#include "mebn/ssbn.hpp"

namespace mebn {

// ---------------------------------------------------------------------------
// Factors over discrete ground nodes
// ---------------------------------------------------------------------------

struct Factor {
    std::vector<int> vars; // ground node indices; last var moves fastest
    std::vector<int> card;
    std::vector<double> p;

    size_t size() const { return p.size(); }
};

namespace detail {

inline Factor make_factor(std::vector<int> vars, std::vector<int> card) {
    Factor f;
    f.vars = std::move(vars);
    f.card = std::move(card);
    size_t n = 1;
    for (int c : f.card) n *= static_cast<size_t>(c);
    f.p.assign(n, 0.0);
    return f;
}

// Multiply two factors over the union of their scopes.
inline Factor factor_product(const Factor& a, const Factor& b) {
    std::vector<int> vars = a.vars;
    std::vector<int> card = a.card;
    for (size_t i = 0; i < b.vars.size(); ++i)
        if (std::find(vars.begin(), vars.end(), b.vars[i]) == vars.end()) {
            vars.push_back(b.vars[i]);
            card.push_back(b.card[i]);
        }
    Factor out = make_factor(vars, card);
    std::vector<int> assign(vars.size(), 0);
    auto index_in = [&](const Factor& f) {
        size_t idx = 0;
        for (size_t i = 0; i < f.vars.size(); ++i) {
            const size_t pos = std::find(vars.begin(), vars.end(), f.vars[i]) - vars.begin();
            idx = idx * static_cast<size_t>(f.card[i]) + static_cast<size_t>(assign[pos]);
        }
        return idx;
    };
    for (size_t flat = 0; flat < out.p.size(); ++flat) {
        out.p[flat] = a.p[index_in(a)] * b.p[index_in(b)];
        for (int i = static_cast<int>(vars.size()) - 1; i >= 0; --i) {
            if (++assign[i] < card[i]) break;
            assign[i] = 0;
        }
    }
    return out;
}

// Sum a variable out of a factor.
inline Factor factor_marginalize(const Factor& f, int var) {
    const size_t at = std::find(f.vars.begin(), f.vars.end(), var) - f.vars.begin();
    if (at == f.vars.size()) return f;
    std::vector<int> vars, card;
    for (size_t i = 0; i < f.vars.size(); ++i)
        if (i != at) {
            vars.push_back(f.vars[i]);
            card.push_back(f.card[i]);
        }
    Factor out = make_factor(vars, card);
    std::vector<int> assign(f.vars.size(), 0);
    for (size_t flat = 0; flat < f.p.size(); ++flat) {
        size_t idx = 0;
        for (size_t i = 0; i < f.vars.size(); ++i)
            if (i != at) idx = idx * static_cast<size_t>(f.card[i]) + static_cast<size_t>(assign[i]);
        out.p[idx] += f.p[flat];
        for (int i = static_cast<int>(f.vars.size()) - 1; i >= 0; --i) {
            if (++assign[i] < f.card[i]) break;
            assign[i] = 0;
        }
    }
    return out;
}

// Fix a variable to one state and drop it from the scope.
inline Factor factor_reduce(const Factor& f, int var, int state) {
    const size_t at = std::find(f.vars.begin(), f.vars.end(), var) - f.vars.begin();
    if (at == f.vars.size()) return f;
    std::vector<int> vars, card;
    for (size_t i = 0; i < f.vars.size(); ++i)
        if (i != at) {
            vars.push_back(f.vars[i]);
            card.push_back(f.card[i]);
        }
    Factor out = make_factor(vars, card);
    std::vector<int> assign(f.vars.size(), 0);
    for (size_t flat = 0; flat < f.p.size(); ++flat) {
        if (assign[at] == state) {
            size_t idx = 0;
            for (size_t i = 0; i < f.vars.size(); ++i)
                if (i != at) idx = idx * static_cast<size_t>(f.card[i]) + static_cast<size_t>(assign[i]);
            out.p[idx] = f.p[flat];
        }
        for (int i = static_cast<int>(f.vars.size()) - 1; i >= 0; --i) {
            if (++assign[i] < f.card[i]) break;
            assign[i] = 0;
        }
    }
    return out;
}

} // namespace detail

// Ground parents in bag order (first occurrence wins on duplicates).
inline std::vector<int> cpt_parents(const GroundNode& n) {
    std::vector<int> out;
    for (const auto& bag : n.bags)
        for (int p : bag.nodes)
            if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    return out;
}

inline const std::vector<std::string> node_states(const GroundNode& n) {
    if (!n.discrete())
        fail(Errc::ContinuousInDiscreteQuery, "'" + n.id + "' is continuous");
    return n.vs.state_list();
}

// Materialize the conditional probability table of a discrete ground node:
// scope [parents..., node], last index fastest.
inline Factor build_cpt(const Ssbn& net, int node) {
    const GroundNode& n = net.nodes[node];
    const auto states = node_states(n);
    const std::vector<int> parents = cpt_parents(n);
    std::vector<int> vars = parents, card;
    for (int p : parents) card.push_back(static_cast<int>(node_states(net.nodes[p]).size()));
    vars.push_back(node);
    card.push_back(static_cast<int>(states.size()));
    Factor f = detail::make_factor(vars, card);

    std::vector<int> assign(parents.size(), 0);
    const size_t rows = f.p.size() / states.size();
    for (size_t row = 0; row < rows; ++row) {
        std::map<int, std::string> value;
        for (size_t i = 0; i < parents.size(); ++i)
            value[parents[i]] = net.nodes[parents[i]].vs.state_list()[assign[i]];
        std::vector<GroundParentInstance> instances;
        for (const auto& bag : n.bags)
            for (int p : bag.nodes) instances.push_back({bag.resident, net.nodes[p].id, value.at(p)});
        const int b = pick_branch(n.cld, instances);
        const CSD& csd = b < 0 ? n.cld.def : n.cld.branches[b].second;
        const CPC* cpc = b < 0 ? nullptr : &n.cld.branches[b].first;
        const std::vector<double> probs = eval_categorical_csd(csd, states, cpc, instances);
        for (size_t s = 0; s < states.size(); ++s) f.p[row * states.size() + s] = probs[s];
        for (int i = static_cast<int>(parents.size()) - 1; i >= 0; --i) {
            if (++assign[i] < card[i]) break;
            assign[i] = 0;
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Relevance pruning
// ---------------------------------------------------------------------------

namespace detail {

inline std::set<int> ancestors_of(const Ssbn& net, const std::vector<int>& seeds) {
    std::set<int> out;
    std::vector<int> stack = seeds;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (!out.insert(v).second) continue;
        for (int p : net.nodes[v].parents) stack.push_back(p);
    }
    return out;
}

// Connected component of `query` in the moral graph induced on `keep`.
// Evidence and substructure outside the component cannot change the query.
inline std::set<int> moral_component(const Ssbn& net, const std::set<int>& keep, int query) {
    std::map<int, std::set<int>> adj;
    for (int v : keep) {
        std::vector<int> fam = net.nodes[v].parents;
        fam.push_back(v);
        for (int a : fam)
            for (int b : fam)
                if (a != b && keep.count(a) && keep.count(b)) adj[a].insert(b);
    }
    std::set<int> comp;
    std::vector<int> stack = {query};
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (!comp.insert(v).second) continue;
        for (int u : adj[v]) stack.push_back(u);
    }
    return comp;
}

inline std::set<int> relevant_nodes(const Ssbn& net, int query, const GroundEvidence& ev) {
    std::vector<int> seeds = {query};
    for (const auto& [n, s] : ev.disc) seeds.push_back(n);
    for (const auto& [n, v] : ev.cont) seeds.push_back(n);
    return moral_component(net, ancestors_of(net, seeds), query);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Exact discrete inference
// ---------------------------------------------------------------------------

// Posterior distribution of one discrete node given discrete evidence, in
// the order of the node's state list.
inline std::vector<double> ve_query(const Ssbn& net, int query, const GroundEvidence& ev) {
    const auto qstates = node_states(net.nodes[query]);
    if (!ev.cont.empty())
        fail(Errc::ContinuousInDiscreteQuery, "continuous evidence in a discrete-only query");
    if (auto it = ev.disc.find(query); it != ev.disc.end()) {
        std::vector<double> out(qstates.size(), 0.0);
        out[std::find(qstates.begin(), qstates.end(), it->second) - qstates.begin()] = 1.0;
        return out;
    }

    const std::set<int> keep = detail::relevant_nodes(net, query, ev);
    std::vector<Factor> factors;
    for (int v : keep) {
        Factor f = build_cpt(net, v);
        for (const auto& [n, s] : ev.disc) {
            if (!keep.count(n)) continue;
            const auto states = node_states(net.nodes[n]);
            const int idx = static_cast<int>(std::find(states.begin(), states.end(), s) - states.begin());
            if (idx == static_cast<int>(states.size()))
                fail(Errc::BadEvidence, "'" + s + "' is not a state of '" + net.nodes[n].id + "'");
            f = detail::factor_reduce(f, n, idx);
        }
        factors.push_back(std::move(f));
    }

    std::set<int> to_eliminate;
    for (int v : keep)
        if (v != query && !ev.disc.count(v)) to_eliminate.insert(v);

    while (!to_eliminate.empty()) {
        // Min-degree: eliminate the variable with the fewest distinct
        // co-occurring variables; ties broken by node index.
        int best = -1;
        size_t best_deg = 0;
        for (int v : to_eliminate) {
            std::set<int> nb;
            for (const auto& f : factors)
                if (std::find(f.vars.begin(), f.vars.end(), v) != f.vars.end())
                    nb.insert(f.vars.begin(), f.vars.end());
            nb.erase(v);
            if (best < 0 || nb.size() < best_deg) {
                best = v;
                best_deg = nb.size();
            }
        }
        std::vector<Factor> rest;
        Factor prod;
        bool have = false;
        for (auto& f : factors) {
            if (std::find(f.vars.begin(), f.vars.end(), best) != f.vars.end()) {
                prod = have ? detail::factor_product(prod, f) : std::move(f);
                have = true;
            } else {
                rest.push_back(std::move(f));
            }
        }
        if (have) rest.push_back(detail::factor_marginalize(prod, best));
        factors = std::move(rest);
        to_eliminate.erase(best);
    }

    Factor joint = detail::make_factor({}, {});
    joint.p = {1.0};
    for (const auto& f : factors) joint = detail::factor_product(joint, f);
    std::vector<double> out(qstates.size(), 0.0);
    if (joint.vars.empty()) fail(Errc::UnknownNode, "query node fell out of scope");
    double sum = 0.0;
    for (size_t s = 0; s < qstates.size(); ++s) {
        out[s] = joint.p[s];
        sum += out[s];
    }
    if (sum <= 0.0) fail(Errc::Unnormalizable, "evidence has probability zero");
    for (auto& v : out) v /= sum;
    return out;
}

inline std::vector<double> ve_query(const Ssbn& net, const std::string& id, const GroundEvidence& ev) {
    return ve_query(net, net.find(id), ev);
}

// ---------------------------------------------------------------------------
// Conditional linear Gaussian inference
// ---------------------------------------------------------------------------

struct ClgComponent {
    double weight = 0.0;
    double mean = 0.0;
    double var = 0.0;
};

// Posterior of a continuous node: a Gaussian mixture, one component per
// discrete configuration with nonzero posterior weight.
struct ClgPosterior {
    std::vector<ClgComponent> comps;

    double mean() const {
        double m = 0.0;
        for (const auto& c : comps) m += c.weight * c.mean;
        return m;
    }
    double variance() const {
        const double m = mean();
        double v = 0.0;
        for (const auto& c : comps) v += c.weight * (c.var + c.mean * c.mean);
        return v - m * m;
    }
};

namespace detail {

struct Chol {
    std::vector<std::vector<double>> L;
    bool ok = false;
};

inline Chol cholesky(const std::vector<std::vector<double>>& S) {
    const size_t n = S.size();
    Chol c;
    c.L.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = S[i][j];
            for (size_t k = 0; k < j; ++k) s -= c.L[i][k] * c.L[j][k];
            if (i == j) {
                if (s <= 0.0) return c; // not positive definite
                c.L[i][i] = std::sqrt(s);
            } else {
                c.L[i][j] = s / c.L[j][j];
            }
        }
    }
    c.ok = true;
    return c;
}

inline std::vector<double> chol_solve(const Chol& c, std::vector<double> b) {
    const size_t n = b.size();
    for (size_t i = 0; i < n; ++i) { // L y = b
        for (size_t k = 0; k < i; ++k) b[i] -= c.L[i][k] * b[k];
        b[i] /= c.L[i][i];
    }
    for (size_t i = n; i-- > 0;) { // L^T x = y
        for (size_t k = i + 1; k < n; ++k) b[i] -= c.L[k][i] * b[k];
        b[i] /= c.L[i][i];
    }
    return b;
}

// log N(r + mu; mu, S) for residual r
inline double mvn_logpdf(const std::vector<double>& r, const std::vector<std::vector<double>>& S) {
    const size_t n = r.size();
    Chol c = cholesky(S);
    if (!c.ok) fail(Errc::BadEvidence, "evidence covariance is singular");
    double logdet = 0.0;
    std::vector<double> z = r;
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < i; ++k) z[i] -= c.L[i][k] * z[k];
        z[i] /= c.L[i][i];
        logdet += 2.0 * std::log(c.L[i][i]);
    }
    double q = 0.0;
    for (double v : z) q += v * v;
    return -0.5 * (static_cast<double>(n) * std::log(2.0 * 3.14159265358979323846) + logdet + q);
}

// Per-configuration result of the Gaussian forward pass.
struct ClgConfig {
    double weight = 0.0; // discrete probability x continuous evidence likelihood
    double mean = 0.0;   // of the query node, conditioned on the evidence
    double var = 0.0;
};

template <typename OnConfig>
inline void clg_enumerate(const Ssbn& net, int query, const GroundEvidence& ev, OnConfig&& on_config) {
    const std::set<int> keep = relevant_nodes(net, query, ev);
    std::vector<int> disc, cont;
    for (int v : net.topo_order()) {
        if (!keep.count(v)) continue;
        (net.nodes[v].discrete() ? disc : cont).push_back(v);
    }
    std::map<int, int> cpos;
    for (size_t i = 0; i < cont.size(); ++i) cpos[cont[i]] = static_cast<int>(i);

    std::vector<int> hidden;
    double combos = 1.0;
    for (int d : disc)
        if (!ev.disc.count(d)) {
            hidden.push_back(d);
            combos *= static_cast<double>(node_states(net.nodes[d]).size());
        }
    if (combos > 2e6)
        fail(Errc::BadConfig, "too many discrete configurations (" + format_number(combos) + ")");

    std::vector<Factor> cpts;
    for (int d : disc) cpts.push_back(build_cpt(net, d));

    std::map<int, std::string> config;
    for (const auto& [n, s] : ev.disc)
        if (keep.count(n)) config[n] = s;

    std::vector<int> hidx(hidden.size(), 0);
    while (true) {
        for (size_t i = 0; i < hidden.size(); ++i)
            config[hidden[i]] = node_states(net.nodes[hidden[i]])[hidx[i]];

        // Discrete weight: product of table rows under this configuration.
        double wd = 1.0;
        for (size_t i = 0; i < disc.size() && wd > 0.0; ++i) {
            const Factor& f = cpts[i];
            size_t idx = 0;
            for (size_t k = 0; k < f.vars.size(); ++k) {
                const GroundNode& nd = net.nodes[f.vars[k]];
                const auto states = nd.vs.state_list();
                const int s = static_cast<int>(
                    std::find(states.begin(), states.end(), config.at(f.vars[k])) - states.begin());
                idx = idx * static_cast<size_t>(f.card[k]) + static_cast<size_t>(s);
            }
            wd *= f.p[idx];
        }

        if (wd > 0.0) {
            // Forward pass: joint Gaussian over the continuous nodes.
            const size_t n = cont.size();
            std::vector<double> mu(n, 0.0);
            std::vector<std::vector<double>> Sig(n, std::vector<double>(n, 0.0));
            for (size_t ci = 0; ci < n; ++ci) {
                const GroundNode& node = net.nodes[cont[ci]];
                std::vector<GroundParentInstance> instances;
                for (const auto& bag : node.bags)
                    for (int p : bag.nodes)
                        if (net.nodes[p].discrete())
                            instances.push_back({bag.resident, net.nodes[p].id, config.at(p)});
                const int b = pick_branch(node.cld, instances);
                const CSD& csd = b < 0 ? node.cld.def : node.cld.branches[b].second;
                const CPC* cpc = b < 0 ? nullptr : &node.cld.branches[b].first;
                LinearForm lf = csd_linear_form(csd, cpc, instances);

                std::vector<double> w(ci, 0.0);
                for (const auto& term : lf.terms) {
                    const ParentBag* bag = nullptr;
                    for (const auto& bg : node.bags)
                        if (bg.resident == term.parent) bag = &bg;
                    if (!bag || bag->nodes.empty())
                        fail(Errc::UnknownParentRef,
                             "no ground instances for parent '" + term.parent + "' of '" + node.id + "'");
                    const AggFn agg = term.explicit_agg ? term.agg : node.cld.default_agg;
                    if (agg == AggFn::Multiply && bag->nodes.size() > 1)
                        fail(Errc::NotCLG, "product aggregate over " + std::to_string(bag->nodes.size()) +
                                               " instances of '" + term.parent + "'");
                    const double per = agg == AggFn::Average
                                           ? term.coef / static_cast<double>(bag->nodes.size())
                                           : term.coef;
                    for (int p : bag->nodes) {
                        if (net.nodes[p].discrete()) continue;
                        auto it = cpos.find(p);
                        if (it == cpos.end() || static_cast<size_t>(it->second) >= ci)
                            fail(Errc::CyclicModel, "'" + net.nodes[p].id + "' is not upstream of '" + node.id + "'");
                        w[it->second] += per;
                    }
                }
                mu[ci] = lf.intercept;
                for (size_t j = 0; j < ci; ++j) mu[ci] += w[j] * mu[j];
                for (size_t k = 0; k < ci; ++k) {
                    double cov = 0.0;
                    for (size_t j = 0; j < ci; ++j) cov += w[j] * Sig[j][k];
                    Sig[ci][k] = Sig[k][ci] = cov;
                }
                double v = lf.var;
                for (size_t j = 0; j < ci; ++j) v += w[j] * Sig[ci][j];
                Sig[ci][ci] = v;
            }

            // Condition on the continuous evidence inside the component.
            std::vector<int> eidx;
            std::vector<double> eval_;
            for (const auto& [nd, value] : ev.cont)
                if (cpos.count(nd)) {
                    eidx.push_back(cpos.at(nd));
                    eval_.push_back(value);
                }
            ClgConfig cc;
            cc.weight = wd;
            const int q = cpos.count(query) ? cpos.at(query) : -1;
            if (eidx.empty()) {
                if (q >= 0) {
                    cc.mean = mu[q];
                    cc.var = Sig[q][q];
                }
            } else {
                const size_t k = eidx.size();
                std::vector<std::vector<double>> See(k, std::vector<double>(k));
                std::vector<double> r(k);
                for (size_t i = 0; i < k; ++i) {
                    r[i] = eval_[i] - mu[eidx[i]];
                    for (size_t j = 0; j < k; ++j) See[i][j] = Sig[eidx[i]][eidx[j]];
                }
                cc.weight = wd * std::exp(mvn_logpdf(r, See));
                if (q >= 0) {
                    Chol c = cholesky(See);
                    if (!c.ok) fail(Errc::BadEvidence, "evidence covariance is singular");
                    std::vector<double> sqe(k);
                    for (size_t i = 0; i < k; ++i) sqe[i] = Sig[q][eidx[i]];
                    const std::vector<double> alpha = chol_solve(c, r);
                    const std::vector<double> beta = chol_solve(c, sqe);
                    cc.mean = mu[q];
                    cc.var = Sig[q][q];
                    for (size_t i = 0; i < k; ++i) {
                        cc.mean += sqe[i] * alpha[i];
                        cc.var -= sqe[i] * beta[i];
                    }
                    cc.var = std::max(0.0, cc.var);
                }
            }
            on_config(config, cc);
        }

        // Next hidden configuration.
        int i = static_cast<int>(hidden.size()) - 1;
        for (; i >= 0; --i) {
            if (++hidx[i] < static_cast<int>(node_states(net.nodes[hidden[i]]).size())) break;
            hidx[i] = 0;
        }
        if (i < 0) break;
    }
}

} // namespace detail

// Posterior mixture of a continuous node given mixed evidence.
inline ClgPosterior infer_clg(const Ssbn& net, int query, const GroundEvidence& ev) {
    if (net.nodes[query].discrete())
        fail(Errc::WrongVariant, "'" + net.nodes[query].id + "' is discrete; use a discrete query");
    if (auto it = ev.cont.find(query); it != ev.cont.end())
        return {{{1.0, it->second, 0.0}}};
    ClgPosterior post;
    detail::clg_enumerate(net, query, ev, [&](const std::map<int, std::string>&, const detail::ClgConfig& cc) {
        if (cc.weight > 0.0) post.comps.push_back({cc.weight, cc.mean, cc.var});
    });
    double total = 0.0;
    for (const auto& c : post.comps) total += c.weight;
    if (total <= 0.0) fail(Errc::Unnormalizable, "evidence has probability zero");
    for (auto& c : post.comps) c.weight /= total;
    return post;
}

inline ClgPosterior infer_clg(const Ssbn& net, const std::string& id, const GroundEvidence& ev) {
    return infer_clg(net, net.find(id), ev);
}

// Posterior of a discrete node when the evidence involves continuous nodes.
inline std::vector<double> infer_clg_discrete(const Ssbn& net, int query, const GroundEvidence& ev) {
    const auto states = node_states(net.nodes[query]);
    if (auto it = ev.disc.find(query); it != ev.disc.end()) {
        std::vector<double> out(states.size(), 0.0);
        out[std::find(states.begin(), states.end(), it->second) - states.begin()] = 1.0;
        return out;
    }
    std::vector<double> out(states.size(), 0.0);
    detail::clg_enumerate(net, query, ev, [&](const std::map<int, std::string>& config, const detail::ClgConfig& cc) {
        const size_t s = std::find(states.begin(), states.end(), config.at(query)) - states.begin();
        out[s] += cc.weight;
    });
    double total = 0.0;
    for (double v : out) total += v;
    if (total <= 0.0) fail(Errc::Unnormalizable, "evidence has probability zero");
    for (auto& v : out) v /= total;
    return out;
}

} // namespace mebn
