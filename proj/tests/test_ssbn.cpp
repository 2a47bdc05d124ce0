// Grounding: instantiating the class-level model against concrete entities
// and observations, producing a finite acyclic network.
#include <catch2/catch_amalgamated.hpp>

#include "mebn/learn.hpp"
#include "mebn/mapper.hpp"
#include "mebn/script.hpp"
#include "mebn/ssbn.hpp"

using namespace mebn;

namespace {

const std::string kFix = MEBN_FIXTURE_DIR;

struct Learned {
    Database db;
    Mapping mp;
};

Learned learned() {
    Learned L{er_normalize(load_database(kFix + "/threat_full/manifest.txt", kFix + "/threat_full")),
              {}};
    L.mp = build_initial_mapping(L.db);
    apply_rules(L.mp, L.db, parse_rules(read_file(kFix + "/threat_full/rules.txt")));
    learn_all(L.mp, L.db);
    return L;
}

// A one-resident temporal model: Speed(v, t) depends on Speed(v, prev t).
MTheory chain_model() {
    MTheory chain;
    chain.types.push_back({"VEHICLE", false});
    chain.types.push_back({"TIME", true});
    chain.ordering_relation = "Predecessor";
    MFrag f;
    f.name = "SPEED";
    f.ovs = {{"v", "VEHICLE"}, {"t", "TIME"}, {"pret", "TIME"}};
    f.contexts = {ContextNode::boolean("Predecessor", {"pret", "t"})};
    f.inputs = {{"Speed", {"v", "pret"}}};
    ResidentNode r;
    r.name = "Speed";
    r.args = {"v", "t"};
    r.vs = ValueSpace::continuous();
    r.ip = {0};
    CLD cld;
    LinearGaussianCSD def;
    def.intercept = 1.0;
    def.terms.push_back({"Speed", 2.0, false, AggFn::Average});
    def.var = 0.25;
    cld.def = def;
    r.cld = cld;
    f.residents.push_back(r);
    chain.mfrags.push_back(f);
    return chain;
}

} // namespace

TEST_CASE("database contents translate into evidence") {
    Learned L = learned();
    Evidence ev = evidence_from_database(L.mp, L.db);

    CHECK(ev.entities.at("VEHICLE").size() == 18);
    CHECK(ev.entities.at("TIME").size() == 12);
    CHECK(ev.entities.at("REGION").size() == 12);

    REQUIRE(ev.lookup("Location", {"V1", "T2"}));
    CHECK(*ev.lookup("Location", {"V1", "T2"}) == "R0");
    REQUIRE(ev.lookup("Predecessor", {"T2", "T5"}));
    CHECK(*ev.lookup("Predecessor", {"T2", "T5"}) == "True");
    CHECK_FALSE(ev.lookup("Predecessor", {"T5", "T2"})); // ordering is directed
    REQUIRE(ev.lookup("ActualObject", {"RV1"}));
    CHECK(*ev.lookup("ActualObject", {"RV1"}) == "V1");
    CHECK(*ev.lookup("VehicleType", {"V1"}) == "Tracked");
}

TEST_CASE("grounding the learned model instantiates every type-correct node") {
    Learned L = learned();
    Evidence ev = evidence_from_database(L.mp, L.db);
    Ssbn net = ground(L.mp.mtheory, ev);

    // ThreatLevel 12x12 + Speed 18x12 + Speed_RPT 4x12 + VehicleType 18
    // + MTI_Condition 18x2x12 (two sensors).
    CHECK(net.nodes.size() == 144 + 216 + 48 + 18 + 432);

    SECTION("parent bags follow the context constraints") {
        const GroundNode& tl = net.nodes[net.find("ThreatLevel_R0_T2")];
        REQUIRE(tl.bags.size() == 1);
        CHECK(tl.bags[0].resident == "VehicleType");
        REQUIRE(tl.bags[0].nodes.size() == 2); // V0 and V1 were at R0 at T2
        CHECK(net.nodes[tl.bags[0].nodes[0]].id == "VehicleType_V0");
        CHECK(net.nodes[tl.bags[0].nodes[1]].id == "VehicleType_V1");
    }

    SECTION("unmatched bindings leave the bag empty, not absent") {
        // No vehicle was at region R0 at time T5: every bag of the node is
        // empty and its distribution falls through to the default branch.
        const GroundNode& tl = net.nodes[net.find("ThreatLevel_R0_T5")];
        REQUIRE(tl.bags.size() == 1);
        CHECK(tl.bags[0].nodes.empty());
        CHECK(tl.parents.empty());
    }

    SECTION("temporal recursion links strictly backwards") {
        const GroundNode& sp = net.nodes[net.find("Speed_V1_T5")];
        REQUIRE(sp.bags.size() == 2);
        CHECK(sp.bags[0].resident == "VehicleType");
        CHECK(sp.bags[1].resident == "Speed");
        CHECK(net.nodes[sp.bags[1].nodes.at(0)].id == "Speed_V1_T2");
        // The first time step has no predecessor: both bags are empty and the
        // node uses the intercept-only default.
        const GroundNode& first = net.nodes[net.find("Speed_V1_T2")];
        CHECK(first.bags[0].nodes.empty());
        CHECK(first.bags[1].nodes.empty());
    }

    SECTION("report nodes resolve the observed entity and its sensors") {
        const GroundNode& sr = net.nodes[net.find("Speed_RPT_RV1_T5")];
        REQUIRE(sr.bags.size() == 2);
        CHECK(net.nodes[sr.bags[0].nodes.at(0)].id == "Speed_V1_T5");
        REQUIRE(sr.bags[1].nodes.size() == 2); // both sensors observe V1
        CHECK(net.nodes[sr.bags[1].nodes[0]].id == "MTI_Condition_V1_M1_T5");
    }

    SECTION("context functions without observations are reported once each") {
        // Location is observed for 18 of the 216 vehicle/time pairs; the rest
        // surface as per-binding reports rather than silent drops.
        REQUIRE_FALSE(net.reports.empty());
        CHECK(net.reports[0].rfind("unbound context: Location", 0) == 0);
    }

    SECTION("the ground graph is acyclic and fully ordered") {
        auto order = net.topo_order();
        CHECK(order.size() == net.nodes.size());
    }
}

TEST_CASE("observations attach to ground nodes by identifier") {
    Learned L = learned();
    Evidence ev = evidence_from_database(L.mp, L.db);
    Ssbn net = ground(L.mp.mtheory, ev);
    GroundEvidence ge = observe_all(net, ev);

    REQUIRE(ge.disc.count(net.find("VehicleType_V1")));
    CHECK(ge.disc.at(net.find("VehicleType_V1")) == "Tracked");
    REQUIRE(ge.cont.count(net.find("Speed_V1_T2")));
    CHECK(ge.cont.at(net.find("Speed_V1_T2")) == 40.0);
    // No Situation row exists for (R0, T5): the node stays latent.
    CHECK_FALSE(ge.disc.count(net.find("ThreatLevel_R0_T5")));

    // A state outside the node's value space is rejected at observation time.
    Evidence bad = ev;
    bad.set("VehicleType", {"V1"}, "Hovercraft");
    CHECK_THROWS_AS(observe_all(net, bad), Error);
}

TEST_CASE("a five-step chain grounds into a path") {
    MTheory chain = chain_model();
    CHECK_NOTHROW(check_acyclic(chain)); // backwards-in-time recursion is exempt

    Evidence ev;
    ev.entities["VEHICLE"] = {"V1"};
    ev.entities["TIME"] = {"T1", "T2", "T3", "T4", "T5"};
    for (int i = 1; i < 5; ++i)
        ev.set("Predecessor", {"T" + std::to_string(i), "T" + std::to_string(i + 1)}, "True");

    Ssbn net = ground(chain, ev);
    REQUIRE(net.nodes.size() == 5);
    for (int i = 2; i <= 5; ++i) {
        const GroundNode& n = net.nodes[net.find("Speed_V1_T" + std::to_string(i))];
        REQUIRE(n.parents.size() == 1);
        CHECK(net.nodes[n.parents[0]].id == "Speed_V1_T" + std::to_string(i - 1));
    }
    CHECK(net.nodes[net.find("Speed_V1_T1")].parents.empty());
    CHECK(net.topo_order().size() == 5);
}

TEST_CASE("a cyclic ground instance is rejected with a witness") {
    MTheory chain = chain_model();
    Evidence ev;
    ev.entities["VEHICLE"] = {"V1"};
    ev.entities["TIME"] = {"T1", "T2"};
    ev.set("Predecessor", {"T1", "T2"}, "True");
    ev.set("Predecessor", {"T2", "T1"}, "True"); // T1 < T2 and T2 < T1

    try {
        ground(chain, ev);
        FAIL("expected the ground cycle to be rejected");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CyclicModel);
        CHECK(std::string(e.what()).find("Speed_V1_T") != std::string::npos);
    }
}

TEST_CASE("unknown node lookups fail cleanly") {
    MTheory chain = chain_model();
    Evidence ev;
    ev.entities["VEHICLE"] = {"V1"};
    ev.entities["TIME"] = {"T1"};
    Ssbn net = ground(chain, ev);
    CHECK(net.has("Speed_V1_T1"));
    CHECK_FALSE(net.has("Speed_V9_T1"));
    CHECK_THROWS_AS(net.find("Speed_V9_T1"), Error);
}
