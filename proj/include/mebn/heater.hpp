#pragma once

// Synthetic slab-reheat domain: a furnace heats a fixed number of slabs per
// case; each slab's energy demand is linear in its (noisily sensed) input
// temperature, cost is proportional to energy, and the case's total cost
// sums its slabs. Used as a seeded end-to-end regression/forecast exercise.

#include <random>
#include <string>
#include <vector>

#include "mebn/relational.hpp"
#include "mebn/util.hpp"

namespace mebn {

struct HeaterConfig {
    int cases = 1000;
    int slabs = 3;              // slabs per case
    unsigned seed = 1;
    double input_mean = 300.0;  // true input-temperature distribution
    double input_sd = 50.0;
    double full_temp = 1200.0;  // target temperature after reheat
    double heat_rate = 0.013;   // energy per degree of reheat
    double sensor_var = 3.0;    // variance of the temperature sensor noise
    double price = 0.20;        // cost per unit energy
};

inline double heater_energy(const HeaterConfig& c, double input_temp) {
    return c.heat_rate * (c.full_temp - input_temp);
}

inline std::string heater_manifest() {
    return "relation Case\n"
           "  attr CID key\n"
           "  attr TotalCost cont\n"
           "  pk CID\n"
           "end\n"
           "relation SlabSlot\n"
           "  attr SID key\n"
           "  pk SID\n"
           "end\n"
           "relation Slab\n"
           "  attr c fk:Case\n"
           "  attr s fk:SlabSlot\n"
           "  attr SensedInputTemp cont\n"
           "  attr Energy cont\n"
           "  attr Cost cont\n"
           "  pk c s\n"
           "end\n";
}

inline std::string heater_rules() {
    return "causal(Slab.SensedInputTemp -> Slab.Energy) family=clg\n"
           "causal(Slab.Energy -> Slab.Cost) family=clg\n"
           "causal(Slab.Cost -> Case.TotalCost) family=clg agg=sum\n";
}

// Draw a database of `cases` reheat cases. Case ids carry `prefix` so train
// and test sets cannot collide.
inline Database heater_simulate(const HeaterConfig& cfg, const std::string& prefix = "C") {
    std::mt19937 rng(cfg.seed);
    std::normal_distribution<double> input(cfg.input_mean, cfg.input_sd);
    std::normal_distribution<double> sensor(0.0, std::sqrt(cfg.sensor_var));

    Database db;
    for (const auto& [name, schema] : parse_manifest(heater_manifest()))
        db.relations.emplace(name, RelationInstance{schema, {}});

    RelationInstance& cases = db.at("Case");
    RelationInstance& slots = db.at("SlabSlot");
    RelationInstance& slabs = db.at("Slab");
    for (int j = 0; j < cfg.slabs; ++j) slots.rows.push_back({"S" + std::to_string(j + 1)});
    for (int i = 0; i < cfg.cases; ++i) {
        const std::string cid = prefix + std::to_string(i + 1);
        double total = 0.0;
        for (int j = 0; j < cfg.slabs; ++j) {
            const double actual = input(rng);
            const double sensed = actual + sensor(rng);
            const double energy = heater_energy(cfg, actual);
            const double cost = cfg.price * energy;
            total += cost;
            slabs.rows.push_back({cid, "S" + std::to_string(j + 1), format_number(sensed),
                                  format_number(energy), format_number(cost)});
        }
        cases.rows.push_back({cid, format_number(total)});
    }
    return db;
}

} // namespace mebn
