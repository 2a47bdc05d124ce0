#pragma once

// Train/test evaluation harness: fit distributions on a training database,
// ground the class model over a held-out database with only the declared
// observable functions visible, query the target function for every ground
// case that has a recorded truth value, and score the forecasts against a
// climatological baseline fitted on the training targets.

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "mebn/infer.hpp"
#include "mebn/learn.hpp"
#include "mebn/mapper.hpp"
#include "mebn/scoring.hpp"
#include "mebn/ssbn.hpp"

namespace mebn {

struct EvalReport {
    int n = 0;                   // scored ground targets
    double mae = 0.0;            // of the posterior mean (continuous targets)
    double crps = 0.0;           // mean CRPS of the posterior mixture
    double crps_baseline = 0.0;  // mean CRPS of the train-fitted Gaussian
    double brier = 0.0;          // mean Brier score (discrete targets)
    double brier_baseline = 0.0; // Brier of the train frequency forecast
    bool continuous = true;
};

// Strip the evidence table down to the observable value functions, keeping
// entity-valued and membership functions (grounding needs them as context).
inline Evidence restrict_evidence(const Mapping& mp, Evidence ev, const std::set<std::string>& observable) {
    for (auto it = ev.values.begin(); it != ev.values.end();) {
        const std::string& name = it->first;
        bool keep = observable.count(name) != 0;
        if (!keep) {
            auto src = mp.source.find(name);
            if (src != mp.source.end() && src->second.attr.empty()) keep = true; // membership
            const auto home = mp.mtheory.find_home_any_arity(name);
            if (home.resident && home.resident->vs.kind == ValueSpace::Kind::Entity) keep = true;
        }
        it = keep ? std::next(it) : ev.values.erase(it);
    }
    return ev;
}

// Score `target` over every ground instance with a truth value in `test`,
// observing only the `observable` functions.
inline EvalReport evaluate(const Mapping& mp, const Database& train, const Database& test,
                           const std::string& target, const std::set<std::string>& observable) {
    const ResidentSource& tgt = mp.source_of(target);
    const auto home = mp.mtheory.find_home(target, tgt.key_attrs.size());
    if (!home.resident) fail(Errc::UnknownNode, "target '" + target + "' has no home fragment");
    EvalReport rep;
    rep.continuous = !home.resident->vs.discrete();

    const Evidence truth = evidence_from_database(mp, test);
    const Evidence visible = restrict_evidence(mp, truth, observable);
    const Ssbn net = ground(mp.mtheory, visible);
    const GroundEvidence ge = observe_all(net, visible);

    // Climatological baseline from the training targets.
    std::vector<double> train_vals;
    std::vector<std::string> train_states;
    {
        const RelationInstance& ri = train.at(tgt.relation);
        const int idx = ri.schema.attr_index(tgt.attr.empty() ? tgt.relation : tgt.attr);
        for (const auto& row : ri.rows) {
            if (rep.continuous)
                train_vals.push_back(parse_number(row[idx], "training value of '" + target + "'"));
            else
                train_states.push_back(row[idx]);
        }
    }
    double base_mean = 0.0, base_var = 0.0;
    std::vector<double> base_freq;
    const std::vector<std::string> states = home.resident->vs.state_list();
    if (rep.continuous) {
        if (train_vals.empty()) fail(Errc::EmptyData, "no training values for '" + target + "'");
        for (double v : train_vals) base_mean += v;
        base_mean /= static_cast<double>(train_vals.size());
        for (double v : train_vals) base_var += (v - base_mean) * (v - base_mean);
        base_var /= std::max<double>(1.0, static_cast<double>(train_vals.size()) - 1.0);
    } else {
        base_freq.assign(states.size(), 0.0);
        for (const auto& s : train_states) {
            const auto it = std::find(states.begin(), states.end(), s);
            if (it == states.end()) fail(Errc::UnknownState, "'" + s + "' in training data");
            base_freq[it - states.begin()] += 1.0;
        }
        for (auto& f : base_freq) f /= static_cast<double>(train_states.size());
    }

    for (size_t i = 0; i < net.nodes.size(); ++i) {
        const GroundNode& n = net.nodes[i];
        if (n.resident != target) continue;
        const std::string* tv = truth.lookup(n.resident, n.args);
        if (!tv) continue;
        if (rep.continuous) {
            const double y = parse_number(*tv, "truth for '" + n.id + "'");
            const ClgPosterior post = infer_clg(net, static_cast<int>(i), ge);
            rep.mae += std::abs(post.mean() - y);
            rep.crps += crps_mixture(post, y);
            rep.crps_baseline += crps_gaussian(base_mean, base_var, y);
        } else {
            const std::vector<double> post = ge.cont.empty() ? ve_query(net, static_cast<int>(i), ge)
                                                             : infer_clg_discrete(net, static_cast<int>(i), ge);
            const size_t outcome = std::find(states.begin(), states.end(), *tv) - states.begin();
            if (outcome == states.size()) fail(Errc::UnknownState, "'" + *tv + "' for '" + n.id + "'");
            rep.brier += brier(post, outcome);
            rep.brier_baseline += brier(base_freq, outcome);
        }
        ++rep.n;
    }
    if (rep.n == 0) fail(Errc::EmptyData, "no ground instances of '" + target + "' have truth values");
    const double n = static_cast<double>(rep.n);
    rep.mae /= n;
    rep.crps /= n;
    rep.crps_baseline /= n;
    rep.brier /= n;
    rep.brier_baseline /= n;
    return rep;
}

} // namespace mebn
