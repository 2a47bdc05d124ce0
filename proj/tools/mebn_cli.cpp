// Command-line front end for the relational-to-probabilistic pipeline:
// validate and normalize relational data, map it to a class-level model,
// apply causal rules, learn distributions, ground the model over evidence,
// answer queries, and score forecasts on held-out data.

#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mebn/eval.hpp"
#include "mebn/heater.hpp"
#include "mebn/infer.hpp"
#include "mebn/learn.hpp"
#include "mebn/mapper.hpp"
#include "mebn/relational.hpp"
#include "mebn/scoring.hpp"
#include "mebn/script.hpp"
#include "mebn/ssbn.hpp"

using namespace mebn;

namespace {

struct DataArgs {
    std::string manifest;
    std::string data;
    std::vector<std::string> complete;
};

void add_data_args(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--manifest", a.manifest, "relation manifest file")->required();
    cmd->add_option("--data", a.data, "directory of relation CSV files")->required();
    cmd->add_option("--complete", a.complete,
                    "relationship relation to complete under the closed-world assumption "
                    "(repeatable; adds a boolean column over all candidate pairs)");
}

Database load_normalized(const DataArgs& a) {
    Database db = er_normalize(load_database(a.manifest, a.data));
    for (const auto& rel : a.complete) db.at(rel) = complete_boolean_relation(db, rel);
    return db;
}

void emit_or_print(const std::string& text, const std::string& out) {
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
}

std::string fmt(double v) { return format_number(v); }

void dump_joined(const Mapping& mp, const Database& db, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& app : mp.applications) {
        JoinedDataset ds = execute_join(db, app.plan);
        std::vector<FlatRow> flat = flatten(ds);
        std::string csv = "case";
        for (const auto& p : ds.parent_residents) csv += "," + p + "_key," + p;
        csv += ",child_key," + app.child_resident + "\n";
        for (const auto& r : flat) {
            csv += std::to_string(r.case_index);
            for (const auto& pi : r.parents) csv += "," + join(pi.key, "_") + "," + pi.value;
            csv += "," + join(r.child_key, "_") + "," + r.child_value + "\n";
        }
        write_file(dir + "/" + app.child_resident + "_cases.csv", csv);
        std::string defs = "child_key," + app.child_resident + "\n";
        for (const auto& [key, value] : ds.defaults) defs += join(key, "_") + "," + value + "\n";
        write_file(dir + "/" + app.child_resident + "_defaults.csv", defs);
        std::cout << app.child_resident << ": " << ds.cases.size() << " matched case(s), " << flat.size()
                  << " flattened row(s), " << ds.defaults.size() << " default case(s)\n";
    }
}

Mapping learned_mapping(const DataArgs& a, const std::string& rules_file, Database& db_out) {
    db_out = load_normalized(a);
    Mapping mp = build_initial_mapping(db_out);
    if (!rules_file.empty()) apply_rules(mp, db_out, parse_rules(read_file(rules_file)));
    learn_all(mp, db_out);
    return mp;
}

void print_posterior_discrete(const GroundNode& n, const std::vector<double>& post) {
    const auto states = n.vs.state_list();
    for (size_t i = 0; i < states.size(); ++i)
        std::cout << n.id << " = " << states[i] << "  " << fmt(post[i]) << "\n";
}

void print_posterior_continuous(const GroundNode& n, const ClgPosterior& post) {
    std::cout << n.id << "  mean " << fmt(post.mean()) << "  variance " << fmt(post.variance()) << "\n";
    if (post.comps.size() > 1)
        for (const auto& c : post.comps)
            std::cout << "  component  weight " << fmt(c.weight) << "  mean " << fmt(c.mean)
                      << "  variance " << fmt(c.var) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"relational data to multi-entity probabilistic models"};
    app.require_subcommand(1);

    // --- ingest ---
    DataArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "load and validate a relational database");
    add_data_args(ingest, ingest_args);

    // --- normalize ---
    DataArgs norm_args;
    std::string norm_out;
    auto* normalize = app.add_subcommand("normalize", "fold entity-attribute relations into their entities");
    add_data_args(normalize, norm_args);
    normalize->add_option("--out", norm_out, "directory for the normalized manifest and CSVs")->required();

    // --- map ---
    DataArgs map_args;
    std::string map_out;
    auto* map_cmd = app.add_subcommand("map", "map a normalized schema to an initial class model");
    add_data_args(map_cmd, map_args);
    map_cmd->add_option("--out", map_out, "write the model script here (default: stdout)");

    // --- rules ---
    DataArgs rules_args;
    std::string rules_file, rules_out, rules_dump;
    auto* rules_cmd = app.add_subcommand("rules", "apply causal rules to the mapped model");
    add_data_args(rules_cmd, rules_args);
    rules_cmd->add_option("--rules", rules_file, "causal rule file")->required();
    rules_cmd->add_option("--out", rules_out, "write the model script here (default: stdout)");
    rules_cmd->add_option("--dump-joined", rules_dump, "write each rule's joined training dataset to this directory");

    // --- learn ---
    DataArgs learn_args;
    std::string learn_rules, learn_out;
    auto* learn_cmd = app.add_subcommand("learn", "learn every class local distribution from the data");
    add_data_args(learn_cmd, learn_args);
    learn_cmd->add_option("--rules", learn_rules, "causal rule file");
    learn_cmd->add_option("--out", learn_out, "write the learned model script here (default: stdout)");

    // --- ground ---
    DataArgs ground_args;
    std::string ground_rules, ground_evdir;
    auto* ground_cmd = app.add_subcommand("ground", "instantiate the learned model over a database");
    add_data_args(ground_cmd, ground_args);
    ground_cmd->add_option("--rules", ground_rules, "causal rule file");
    ground_cmd->add_option("--evidence-data", ground_evdir,
                           "ground over this data directory instead of the training data");

    // --- infer ---
    DataArgs infer_args;
    std::string infer_rules, infer_evdir, infer_query;
    std::vector<std::string> infer_ev, infer_observe;
    bool infer_from_data = false;
    auto* infer_cmd = app.add_subcommand("infer", "query a ground node's posterior");
    add_data_args(infer_cmd, infer_args);
    infer_cmd->add_option("--rules", infer_rules, "causal rule file");
    infer_cmd->add_option("--evidence-data", infer_evdir, "ground over this data directory");
    infer_cmd->add_option("--query", infer_query, "ground node id, e.g. ThreatLevel_rgn1_t1")->required();
    infer_cmd->add_option("--evidence", infer_ev, "observation NodeId=Value (repeatable)");
    infer_cmd->add_flag("--evidence-from-data", infer_from_data,
                        "observe every ground value recorded in the evidence data");
    infer_cmd->add_option("--observe", infer_observe,
                          "with --evidence-from-data, observe only these functions (repeatable)");

    // --- eval ---
    DataArgs eval_args; // manifest + train data
    std::string eval_test, eval_rules, eval_target;
    std::vector<std::string> eval_observe;
    auto* eval_cmd = app.add_subcommand("eval", "train on one database, score forecasts on another");
    eval_cmd->add_option("--manifest", eval_args.manifest, "relation manifest file")->required();
    eval_cmd->add_option("--train", eval_args.data, "training data directory")->required();
    eval_cmd->add_option("--test", eval_test, "held-out data directory")->required();
    eval_cmd->add_option("--complete", eval_args.complete, "relationship relation to complete (repeatable)");
    eval_cmd->add_option("--rules", eval_rules, "causal rule file");
    eval_cmd->add_option("--target", eval_target, "resident function to forecast")->required();
    eval_cmd->add_option("--observe", eval_observe, "functions visible at forecast time (repeatable)");

    // --- heater-sim ---
    HeaterConfig heater_cfg;
    std::string heater_out, heater_prefix = "C";
    auto* heater_cmd = app.add_subcommand("heater-sim", "generate the synthetic slab-reheat database");
    heater_cmd->add_option("--out", heater_out, "output directory")->required();
    heater_cmd->add_option("--cases", heater_cfg.cases, "number of reheat cases");
    heater_cmd->add_option("--seed", heater_cfg.seed, "random seed");
    heater_cmd->add_option("--slabs", heater_cfg.slabs, "slabs per case");
    heater_cmd->add_option("--prefix", heater_prefix, "case id prefix");

    // --- pipeline ---
    std::string pipeline_cfg;
    auto* pipeline_cmd = app.add_subcommand("pipeline", "run ingest/map/rules/learn/eval from a JSON config");
    pipeline_cmd->add_option("--config", pipeline_cfg, "JSON configuration file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            Database db = load_database(ingest_args.manifest, ingest_args.data);
            for (const auto& rel : ingest_args.complete) db.at(rel) = complete_boolean_relation(db, rel);
            for (const auto& [name, ri] : db.relations) {
                std::string kind;
                try {
                    kind = classify_relation(ri.schema) == RelationKind::Entity ? "entity" : "relationship";
                } catch (const Error& e) {
                    if (e.code() != Errc::NotNormalized) throw;
                    kind = "entity-attribute (foldable)";
                }
                std::cout << name << ": " << ri.rows.size() << " row(s), " << kind << "\n";
            }
        } else if (*normalize) {
            save_database(load_normalized(norm_args), norm_out);
            std::cout << "normalized database written to " << norm_out << "\n";
        } else if (*map_cmd) {
            Mapping mp = build_initial_mapping(load_normalized(map_args));
            emit_or_print(emit_mtheory(mp.mtheory), map_out);
            std::cerr << mp.mtheory.mfrags.size() << " fragment(s)\n";
        } else if (*rules_cmd) {
            Database db = load_normalized(rules_args);
            Mapping mp = build_initial_mapping(db);
            apply_rules(mp, db, parse_rules(read_file(rules_file)));
            if (!rules_dump.empty()) dump_joined(mp, db, rules_dump);
            emit_or_print(emit_mtheory(mp.mtheory), rules_out);
        } else if (*learn_cmd) {
            Database db;
            Mapping mp = learned_mapping(learn_args, learn_rules, db);
            emit_or_print(emit_mtheory(mp.mtheory), learn_out);
        } else if (*ground_cmd) {
            Database db;
            Mapping mp = learned_mapping(ground_args, ground_rules, db);
            Database evdb = ground_evdir.empty() ? db : er_normalize(load_database(ground_args.manifest, ground_evdir));
            Ssbn net = ground(mp.mtheory, evidence_from_database(mp, evdb));
            for (const auto& n : net.nodes) {
                std::cout << n.id;
                if (!n.parents.empty()) {
                    std::cout << " <-";
                    for (int p : n.parents) std::cout << " " << net.nodes[p].id;
                }
                std::cout << "\n";
            }
            for (const auto& r : net.reports) std::cerr << r << "\n";
            std::cerr << net.nodes.size() << " node(s), " << net.reports.size() << " report(s)\n";
        } else if (*infer_cmd) {
            Database db;
            Mapping mp = learned_mapping(infer_args, infer_rules, db);
            Database evdb = infer_evdir.empty() ? db : er_normalize(load_database(infer_args.manifest, infer_evdir));
            Evidence ev = evidence_from_database(mp, evdb);
            Ssbn net = ground(mp.mtheory, ev);
            GroundEvidence ge;
            if (infer_from_data) {
                Evidence visible = ev;
                if (!infer_observe.empty())
                    visible = restrict_evidence(mp, ev, {infer_observe.begin(), infer_observe.end()});
                ge = observe_all(net, visible);
            }
            for (const auto& spec : infer_ev) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos)
                    fail(Errc::BadConfig, "--evidence expects NodeId=Value, got '" + spec + "'");
                const int node = net.find(trim(spec.substr(0, eq)));
                const std::string value = trim(spec.substr(eq + 1));
                if (net.nodes[node].discrete())
                    ge.disc[node] = value;
                else
                    ge.cont[node] = parse_number(value, "evidence for " + net.nodes[node].id);
            }
            const int q = net.find(infer_query);
            ge.disc.erase(q);
            ge.cont.erase(q);
            if (net.nodes[q].discrete()) {
                const auto post = ge.cont.empty() ? ve_query(net, q, ge) : infer_clg_discrete(net, q, ge);
                print_posterior_discrete(net.nodes[q], post);
            } else {
                print_posterior_continuous(net.nodes[q], infer_clg(net, q, ge));
            }
        } else if (*eval_cmd) {
            Database train;
            Mapping mp = learned_mapping(eval_args, eval_rules, train);
            Database test = er_normalize(load_database(eval_args.manifest, eval_test));
            for (const auto& rel : eval_args.complete) test.at(rel) = complete_boolean_relation(test, rel);
            EvalReport rep =
                evaluate(mp, train, test, eval_target, {eval_observe.begin(), eval_observe.end()});
            std::cout << "targets scored: " << rep.n << "\n";
            if (rep.continuous) {
                std::cout << "mae:           " << fmt(rep.mae) << "\n";
                std::cout << "crps:          " << fmt(rep.crps) << "\n";
                std::cout << "crps baseline: " << fmt(rep.crps_baseline) << "\n";
            } else {
                std::cout << "brier:          " << fmt(rep.brier) << "\n";
                std::cout << "brier baseline: " << fmt(rep.brier_baseline) << "\n";
            }
        } else if (*heater_cmd) {
            save_database(heater_simulate(heater_cfg, heater_prefix), heater_out);
            write_file(heater_out + "/rules.txt", heater_rules());
            std::cout << heater_cfg.cases << " case(s) written to " << heater_out << "\n";
        } else if (*pipeline_cmd) {
            const auto cfg = nlohmann::json::parse(read_file(pipeline_cfg));
            DataArgs a;
            a.manifest = cfg.at("manifest").get<std::string>();
            a.data = cfg.at("train").get<std::string>();
            for (const auto& c : cfg.value("complete", nlohmann::json::array()))
                a.complete.push_back(c.get<std::string>());
            Database train;
            Mapping mp = learned_mapping(a, cfg.value("rules", std::string{}), train);
            if (cfg.contains("dump_joined")) dump_joined(mp, train, cfg.at("dump_joined").get<std::string>());
            if (cfg.contains("model_out"))
                write_file(cfg.at("model_out").get<std::string>(), emit_mtheory(mp.mtheory));
            std::cout << "learned " << mp.mtheory.mfrags.size() << " fragment(s) from " << a.data << "\n";
            if (cfg.contains("test") && cfg.contains("target")) {
                Database test = er_normalize(load_database(a.manifest, cfg.at("test").get<std::string>()));
                for (const auto& rel : a.complete) test.at(rel) = complete_boolean_relation(test, rel);
                std::set<std::string> observe;
                for (const auto& o : cfg.value("observe", nlohmann::json::array()))
                    observe.insert(o.get<std::string>());
                EvalReport rep = evaluate(mp, train, test, cfg.at("target").get<std::string>(), observe);
                std::cout << "targets scored: " << rep.n << "\n";
                if (rep.continuous)
                    std::cout << "mae " << fmt(rep.mae) << ", crps " << fmt(rep.crps) << " vs baseline "
                              << fmt(rep.crps_baseline) << "\n";
                else
                    std::cout << "brier " << fmt(rep.brier) << " vs baseline " << fmt(rep.brier_baseline)
                              << "\n";
            }
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "E_IO: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
