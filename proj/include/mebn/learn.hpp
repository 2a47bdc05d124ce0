#pragma once

// Parameter learning:
//   * dirichlet_estimate — posterior-predictive state probabilities
//     (alpha + count) / (total + K * alpha); alpha = 0 gives the MLE.
//   * ols — least squares via Householder QR, with the noise standard
//     deviation estimated from the residuals (divisor k - n - 1).
//   * learn_application — fills a rule's placeholder parameters from the
//     joined dataset: per-branch counts for discrete children, per-branch
//     regressions (after collapsing each case's bag with the rule's
//     aggregation) for continuous children, and an intercept-only default
//     fitted on the child rows that had no parent assignment.
//   * learn_all — every applied rule, then a parentless marginal for every
//     value-backed resident no rule touched.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mebn/dataset.hpp"
#include "mebn/error.hpp"
#include "mebn/mapper.hpp"
#include "mebn/mtheory.hpp"

namespace mebn {

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

inline std::vector<double> dirichlet_estimate(const std::vector<int>& counts, double alpha) {
    if (alpha < 0.0) fail(Errc::BadPrior, "prior weight must be non-negative");
    double total = 0.0;
    for (int c : counts) {
        if (c < 0) fail(Errc::BadConfig, "negative count");
        total += c + alpha;
    }
    if (total <= 0.0) fail(Errc::EmptyData, "no observations and no prior weight");
    std::vector<double> out;
    out.reserve(counts.size());
    for (int c : counts) out.push_back((c + alpha) / total);
    return out;
}

struct OlsFit {
    std::vector<double> beta; // beta[0] intercept, then one slope per predictor
    double sigma = 0.0;       // residual standard deviation
};

// Least squares of y on [1, X] via Householder QR. Requires k >= n + 2 rows
// so the residual variance has at least one degree of freedom.
inline OlsFit ols(const std::vector<std::vector<double>>& X, const std::vector<double>& y) {
    const size_t k = X.size();
    if (y.size() != k) fail(Errc::LengthMismatch, "response length does not match design rows");
    const size_t n = k == 0 ? 0 : X[0].size();
    for (const auto& row : X)
        if (row.size() != n) fail(Errc::LengthMismatch, "ragged design matrix");
    const size_t m = n + 1;
    if (k < m + 1)
        fail(Errc::InsufficientRows, "need at least " + std::to_string(m + 1) + " rows to fit " +
                                         std::to_string(n) + " predictors, got " + std::to_string(k));

    std::vector<std::vector<double>> A(k, std::vector<double>(m, 1.0));
    for (size_t i = 0; i < k; ++i)
        for (size_t j = 0; j < n; ++j) A[i][j + 1] = X[i][j];
    std::vector<double> b = y;

    double scale = 0.0;
    for (const auto& row : A)
        for (double v : row) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;

    for (size_t j = 0; j < m; ++j) {
        double norm = 0.0;
        for (size_t i = j; i < k; ++i) norm += A[i][j] * A[i][j];
        norm = std::sqrt(norm);
        if (norm <= 1e-12 * scale)
            fail(Errc::SingularDesign, "design column " + std::to_string(j) + " is linearly dependent");
        if (A[j][j] > 0) norm = -norm;
        std::vector<double> v(k, 0.0);
        for (size_t i = j; i < k; ++i) v[i] = A[i][j];
        v[j] -= norm;
        double vtv = 0.0;
        for (size_t i = j; i < k; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0)
            fail(Errc::SingularDesign, "design column " + std::to_string(j) + " is linearly dependent");
        auto reflect = [&](std::vector<double>& col) {
            double dot = 0.0;
            for (size_t i = j; i < k; ++i) dot += v[i] * col[i];
            const double f = 2.0 * dot / vtv;
            for (size_t i = j; i < k; ++i) col[i] -= f * v[i];
        };
        for (size_t jj = j; jj < m; ++jj) {
            std::vector<double> col(k, 0.0);
            for (size_t i = j; i < k; ++i) col[i] = A[i][jj];
            reflect(col);
            for (size_t i = j; i < k; ++i) A[i][jj] = col[i];
        }
        reflect(b);
    }

    OlsFit fit;
    fit.beta.assign(m, 0.0);
    for (size_t jr = m; jr-- > 0;) {
        double s = b[jr];
        for (size_t jj = jr + 1; jj < m; ++jj) s -= A[jr][jj] * fit.beta[jj];
        fit.beta[jr] = s / A[jr][jr];
    }
    double rss = 0.0;
    for (size_t i = m; i < k; ++i) rss += b[i] * b[i];
    fit.sigma = std::sqrt(rss / static_cast<double>(k - m));
    return fit;
}

// ---------------------------------------------------------------------------
// Per-rule learning
// ---------------------------------------------------------------------------

namespace detail {

inline double aggregate_values(AggFn fn, const std::vector<double>& vals) {
    if (vals.empty()) fail(Errc::EmptyData, "empty bag");
    double acc = fn == AggFn::Multiply ? 1.0 : 0.0;
    for (double v : vals) acc = fn == AggFn::Multiply ? acc * v : acc + v;
    return fn == AggFn::Average ? acc / static_cast<double>(vals.size()) : acc;
}

// Intercept-only fit: sample mean and (k-1)-divisor standard deviation.
inline LinearGaussianCSD intercept_only(const std::vector<double>& ys, const std::string& where) {
    if (ys.empty()) fail(Errc::EmptyData, where + ": no rows");
    if (ys.size() < 2) fail(Errc::InsufficientRows, where + ": need two rows for a variance");
    double mean = 0.0;
    for (double v : ys) mean += v;
    mean /= static_cast<double>(ys.size());
    double ss = 0.0;
    for (double v : ys) ss += (v - mean) * (v - mean);
    LinearGaussianCSD g;
    g.intercept = mean;
    g.var = ss / static_cast<double>(ys.size() - 1);
    return g;
}

inline CategoricalCSD counted_csd(const std::vector<std::string>& states,
                                  const std::map<std::string, int>& counts, double alpha,
                                  const std::string& where) {
    std::set<std::string> known(states.begin(), states.end());
    for (const auto& [s, c] : counts)
        if (!known.count(s)) fail(Errc::UnknownState, where + ": observed state '" + s + "'");
    std::vector<int> cs;
    for (const auto& s : states) {
        auto it = counts.find(s);
        cs.push_back(it == counts.end() ? 0 : it->second);
    }
    const std::vector<double> ps = dirichlet_estimate(cs, alpha);
    CategoricalCSD out;
    for (size_t j = 0; j < states.size(); ++j) out.probs.emplace_back(states[j], ps[j]);
    return out;
}

// Collapse one case's rows (all in the same branch) to a single regression
// row: each continuous parent's distinct instances reduce with `agg`.
struct CollapsedRow {
    std::vector<double> x;
    double y = 0.0;
};

inline std::vector<CollapsedRow> collapse_branch(const std::vector<FlatRow>& flat,
                                                 const std::vector<int>& rows,
                                                 const std::vector<size_t>& cont_idx, AggFn agg) {
    std::map<int, std::vector<int>> by_case;
    for (int i : rows) by_case[flat[static_cast<size_t>(i)].case_index].push_back(i);
    std::vector<CollapsedRow> out;
    for (const auto& [ci, members] : by_case) {
        CollapsedRow cr;
        cr.y = parse_number(flat[static_cast<size_t>(members.front())].child_value, "child value");
        for (size_t p : cont_idx) {
            std::set<std::vector<std::string>> seen;
            std::vector<double> vals;
            for (int i : members) {
                const ParentInstance& pi = flat[static_cast<size_t>(i)].parents[p];
                if (seen.insert(pi.key).second)
                    vals.push_back(parse_number(pi.value, "parent value"));
            }
            cr.x.push_back(aggregate_values(agg, vals));
        }
        out.push_back(std::move(cr));
    }
    return out;
}

inline LinearGaussianCSD
fit_branch_clg(const std::vector<CollapsedRow>& rows,
               const std::vector<std::pair<std::string, AggFn>>& terms, bool explicit_agg,
               const std::string& where) {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (const auto& r : rows) {
        X.push_back(r.x);
        y.push_back(r.y);
    }
    if (X.empty()) fail(Errc::EmptyData, where + ": no rows");
    const OlsFit fit = ols(X, y);
    LinearGaussianCSD g;
    g.intercept = fit.beta[0];
    for (size_t t = 0; t < terms.size(); ++t)
        g.terms.push_back({terms[t].first, fit.beta[t + 1], explicit_agg, terms[t].second});
    g.var = fit.sigma * fit.sigma;
    return g;
}

} // namespace detail

// Learn the parameters of one applied rule in place. Returns the number of
// cases the joined dataset produced.
inline size_t learn_application(Mapping& mp, const Database& db, const RuleApplication& app) {
    const CausalRule& rule = app.rule;
    const JoinedDataset ds = execute_join(db, app.plan);
    const std::vector<FlatRow> flat = flatten(ds);

    MFrag* frag = mp.mtheory.find_mfrag(app.post.name);
    if (!frag) fail(Errc::UnknownNode, "fragment '" + app.post.name + "' is gone");
    ResidentNode* child = frag->find_resident(app.child_resident);
    if (!child) fail(Errc::UnknownNode, "resident '" + app.child_resident + "' is gone");
    const std::string where = "learning '" + child->name + "'";

    // Which parents are discrete / continuous (rule order)?
    std::vector<size_t> cont_idx;
    std::vector<size_t> disc_idx;
    for (size_t p = 0; p < ds.parent_residents.size(); ++p) {
        auto home = mp.mtheory.find_home_any_arity(ds.parent_residents[p]);
        if (!home.resident) fail(Errc::UnknownParent, where + ": parent '" + ds.parent_residents[p] + "'");
        if (home.resident->vs.discrete()) disc_idx.push_back(p);
        else cont_idx.push_back(p);
    }

    // A rule with several discrete parents has no placeholder skeleton: its
    // branches are the discrete-parent configurations observed in the data.
    if (!child->cld) {
        CLD cld;
        if (rule.agg_set) cld.default_agg = rule.agg;
        std::set<std::vector<std::string>> configs;
        for (const auto& r : flat) {
            std::vector<std::string> cfg;
            for (size_t p : disc_idx) cfg.push_back(r.parents[p].value);
            configs.insert(cfg);
        }
        for (const auto& cfg : configs) {
            CPC cpc;
            cpc.kind = CPC::Kind::Config;
            for (size_t i = 0; i < disc_idx.size(); ++i)
                cpc.config.emplace_back(ds.parent_residents[disc_idx[i]], cfg[i]);
            cld.branches.emplace_back(cpc, CSD{CategoricalCSD{}});
        }
        cld.def = CSD{CategoricalCSD{}};
        child->cld = cld;
    }
    CLD& cld = *child->cld;

    const Partition part = partition_rows(flat, ds.parent_residents, cld);
    std::vector<std::pair<std::string, AggFn>> terms;
    for (size_t p : cont_idx) terms.emplace_back(ds.parent_residents[p], rule.agg);

    if (rule.family == CausalRule::Family::Categorical) {
        const std::vector<std::string> states = child->vs.state_list();
        const CountTable counts = count_table(flat, ds.parent_residents, cld);
        for (size_t b = 0; b < cld.branches.size(); ++b)
            cld.branches[b].second =
                detail::counted_csd(states, counts.branch[b], rule.prior, where);
        // Default: unmatched rows plus the child rows with no parents at all.
        std::map<std::string, int> dcounts = counts.def;
        for (const auto& [key, value] : ds.defaults) ++dcounts[value];
        cld.def = detail::counted_csd(states, dcounts, rule.prior, where);
    } else {
        for (size_t b = 0; b < cld.branches.size(); ++b) {
            const auto collapsed =
                detail::collapse_branch(flat, part.branch_rows[b], cont_idx, rule.agg);
            cld.branches[b].second = detail::fit_branch_clg(
                collapsed, terms, rule.agg_set, where + " branch " + std::to_string(b + 1));
        }
        if (cld.branches.empty()) {
            // No discrete parent: the regression itself is the default branch.
            std::vector<int> all_rows;
            for (size_t i = 0; i < flat.size(); ++i) all_rows.push_back(static_cast<int>(i));
            const auto collapsed = detail::collapse_branch(flat, all_rows, cont_idx, rule.agg);
            cld.def = detail::fit_branch_clg(collapsed, terms, rule.agg_set, where + " default");
        } else {
            // Default: intercept-only on the child rows with no parent
            // assignment (plus any rows no branch condition accepted).
            std::vector<double> ys;
            for (const auto& [key, value] : ds.defaults)
                ys.push_back(parse_number(value, "child value"));
            for (int i : part.default_rows)
                ys.push_back(parse_number(flat[static_cast<size_t>(i)].child_value, "child value"));
            if (!ys.empty()) cld.def = detail::intercept_only(ys, where + " default");
            // else: no default observations; the placeholder stays unlearned
            // and only trips if an instance ever falls through to it.
        }
    }
    return ds.cases.size();
}

// ---------------------------------------------------------------------------
// Whole-model learning
// ---------------------------------------------------------------------------

// Parentless marginal for a resident backed by a relation's value column.
inline void learn_marginal(Mapping& mp, const Database& db, ResidentNode& r) {
    const ResidentSource& src = mp.source_of(r.name);
    const RelationInstance& rel = db.at(src.relation);
    const int vi = rel.schema.attr_index(src.attr);
    if (vi < 0) fail(Errc::BadConfig, "resident '" + r.name + "' names a missing attribute");
    CLD cld;
    if (r.vs.discrete()) {
        std::map<std::string, int> counts;
        for (const auto& row : rel.rows) ++counts[row[static_cast<size_t>(vi)]];
        cld.def = detail::counted_csd(r.vs.state_list(), counts, 1.0, "marginal of '" + r.name + "'");
    } else {
        std::vector<double> ys;
        for (const auto& row : rel.rows)
            ys.push_back(parse_number(row[static_cast<size_t>(vi)], r.name));
        cld.def = detail::intercept_only(ys, "marginal of '" + r.name + "'");
    }
    r.cld = cld;
}

// Learn every applied rule, then give a parentless marginal to every
// value-backed resident that still has no distribution. Entity-valued
// residents and attribute-free membership residents stay distribution-free
// (they act as evidence-backed context functions).
inline void learn_all(Mapping& mp, const Database& db) {
    for (const auto& app : mp.applications) learn_application(mp, db, app);
    for (auto& frag : mp.mtheory.mfrags) {
        for (auto& r : frag.residents) {
            if (r.cld || r.vs.kind == ValueSpace::Kind::Entity) continue;
            auto it = mp.source.find(r.name);
            if (it == mp.source.end() || it->second.attr.empty()) continue;
            learn_marginal(mp, db, r);
        }
    }
}

} // namespace mebn
