// Relational layer: manifest/CSV loading, validation, entity-relationship
// normalization, and closed-world completion of boolean relationships.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <set>

#include "mebn/relational.hpp"

using namespace mebn;

namespace {

const std::string kFix = MEBN_FIXTURE_DIR;

Database tiny_db() {
    Database db;
    for (auto& [name, schema] : parse_manifest(R"(
relation Vehicle
  attr VID key
  attr VehicleType cat:Wheeled|Tracked
  pk VID
end
relation Speed
  attr v fk:Vehicle
  attr Speed cont:mph
  pk v
end
)")) db.relations[name] = {schema, {}};
    db.at("Vehicle").rows = {{"v1", "Wheeled"}, {"v2", "Tracked"}};
    db.at("Speed").rows = {{"v1", "42.5"}, {"v2", "17"}};
    return db;
}

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error to be thrown");
    return Errc::Io;
}

} // namespace

TEST_CASE("manifest text survives a parse/emit round trip") {
    const std::string manifest = read_file(kFix + "/threat_small/manifest.txt");
    auto schemas = parse_manifest(manifest);
    REQUIRE(schemas.size() == 6);

    const RelationSchema& loc = schemas.at("Location");
    REQUIRE(loc.pk == std::vector<std::string>{"v", "t"});
    REQUIRE(loc.find_attr("Location")->kind == AttrKind::ForeignKey);
    REQUIRE(loc.find_attr("Location")->target == "Region");

    const RelationSchema& vt = schemas.at("VehicleType");
    REQUIRE(vt.find_attr("VehicleType")->states == std::vector<std::string>{"Wheeled", "Tracked"});

    const std::string once = emit_manifest(schemas);
    REQUIRE(emit_manifest(parse_manifest(once)) == once);
}

TEST_CASE("manifest parser rejects malformed input") {
    CHECK(code_of([] { parse_manifest("relation R\n  attr a key\nend"); }) == Errc::BadManifest); // no pk
    CHECK(code_of([] { parse_manifest("relation R\n  attr a wat\n  pk a\nend"); }) == Errc::BadManifest);
    CHECK(code_of([] { parse_manifest("relation R\n  attr a key\n  pk b\nend"); }) == Errc::BadManifest);
    CHECK(code_of([] { parse_manifest("relation R\n  attr a key\n  attr a key\n  pk a\nend"); }) ==
          Errc::BadManifest);
}

TEST_CASE("row validation catches referential and value errors") {
    SECTION("dangling foreign key") {
        Database db = tiny_db();
        db.at("Speed").rows.push_back({"v9", "10"});
        CHECK(code_of([&] { validate_database(db); }) == Errc::DanglingForeignKey);
    }
    SECTION("duplicate primary key") {
        Database db = tiny_db();
        db.at("Vehicle").rows.push_back({"v1", "Tracked"});
        CHECK(code_of([&] { validate_database(db); }) == Errc::DuplicatePrimaryKey);
    }
    SECTION("unknown categorical state") {
        Database db = tiny_db();
        db.at("Vehicle").rows[0][1] = "Hovering";
        CHECK(code_of([&] { validate_database(db); }) == Errc::UnknownState);
    }
    SECTION("non-numeric continuous cell") {
        Database db = tiny_db();
        db.at("Speed").rows[0][1] = "fast";
        CHECK(code_of([&] { validate_database(db); }) == Errc::BadNumber);
    }
    SECTION("empty cell") {
        Database db = tiny_db();
        db.at("Speed").rows[0][1] = "";
        CHECK(code_of([&] { validate_database(db); }) == Errc::MissingValue);
    }
    SECTION("ragged row") {
        Database db = tiny_db();
        db.at("Speed").rows[0].pop_back();
        CHECK(code_of([&] { validate_database(db); }) == Errc::BadCsv);
    }
}

TEST_CASE("relations classify as entity or relationship") {
    auto schemas = parse_manifest(read_file(kFix + "/threat_small/manifest.txt"));
    CHECK(classify_relation(schemas.at("Vehicle")) == RelationKind::Entity);
    CHECK(classify_relation(schemas.at("Location")) == RelationKind::Relationship);
    CHECK(classify_relation(schemas.at("Situation")) == RelationKind::Relationship);
    // A single-foreign-key primary key is not in normal form: it must be folded.
    CHECK(code_of([&] { classify_relation(schemas.at("VehicleType")); }) == Errc::NotNormalized);
    CHECK(is_fold_candidate(schemas.at("VehicleType")));
    CHECK_FALSE(is_fold_candidate(schemas.at("Vehicle")));
}

TEST_CASE("normalization folds single-attribute relations into their entity") {
    Database raw = load_database(kFix + "/threat_small/manifest.txt", kFix + "/threat_small");
    REQUIRE(raw.relations.size() == 6);
    Database db = er_normalize(raw);

    // VehicleType is gone; its attribute now lives on Vehicle.
    REQUIRE(db.relations.size() == 5);
    CHECK_FALSE(db.has("VehicleType"));
    const RelationInstance& veh = db.at("Vehicle");
    REQUIRE(veh.schema.attrs.size() == 2);
    CHECK(veh.schema.attrs[1].name == "VehicleType");
    CHECK(veh.schema.pk == std::vector<std::string>{"VID"});
    REQUIRE(veh.rows == std::vector<std::vector<std::string>>{{"v1", "Wheeled"}, {"v2", "Tracked"}});

    // Every other relation is carried through untouched.
    CHECK(db.at("Time").rows == std::vector<std::vector<std::string>>{{"t1"}, {"t2"}, {"t3"}});
    CHECK(db.at("Region").rows == std::vector<std::vector<std::string>>{{"rgn1"}, {"rgn2"}});
    CHECK(db.at("Location").rows ==
          std::vector<std::vector<std::string>>{{"v1", "t1", "rgn1"}, {"v1", "t2", "rgn1"}});
    CHECK(db.at("Situation").rows ==
          std::vector<std::vector<std::string>>{{"rgn1", "t1", "High"}, {"rgn2", "t3", "Low"}});

    // The result classifies cleanly and validates against itself.
    for (const auto& [name, rel] : db.relations) CHECK_NOTHROW(classify_relation(rel.schema));
    CHECK_NOTHROW(validate_database(db));
}

TEST_CASE("normalization reaches a fixpoint on the full schema") {
    Database raw = load_database(kFix + "/threat_full/manifest.txt", kFix + "/threat_full");
    REQUIRE(raw.relations.size() == 14);
    Database db = er_normalize(raw);
    REQUIRE(db.relations.size() == 12);
    // Two folds: VehicleType -> Vehicle, ActualObject -> ReportedVehicle.
    CHECK(db.at("Vehicle").schema.find_attr("VehicleType") != nullptr);
    CHECK(db.at("ReportedVehicle").schema.find_attr("ActualObject") != nullptr);
    // Foreign keys that pointed at the folded relation were re-targeted.
    CHECK(db.at("Speed_Report").schema.find_attr("r")->target == "ReportedVehicle");
    // Normalizing again is a no-op.
    Database again = er_normalize(db);
    CHECK(again.relations.size() == db.relations.size());
    CHECK(emit_csv(again.at("Vehicle")) == emit_csv(db.at("Vehicle")));
}

TEST_CASE("folding enforces one-to-one cardinality and name uniqueness") {
    Database db;
    for (auto& [name, schema] : parse_manifest(R"(
relation Vehicle
  attr VID key
  pk VID
end
relation VehicleType
  attr v fk:Vehicle
  attr VehicleType cat:A|B
  pk v
end
)")) db.relations[name] = {schema, {}};
    db.at("Vehicle").rows = {{"v1"}, {"v2"}};
    db.at("VehicleType").rows = {{"v1", "A"}};
    CHECK(code_of([&] { er_normalize(db); }) == Errc::MergeCardinality);

    db.at("VehicleType").rows = {{"v1", "A"}, {"v2", "B"}};
    CHECK_NOTHROW(er_normalize(db));

    db.at("Vehicle").schema.attrs.push_back(db.at("VehicleType").schema.attrs[1]);
    db.at("Vehicle").rows = {{"v1", "A"}, {"v2", "B"}};
    CHECK(code_of([&] { er_normalize(db); }) == Errc::MergeNameClash);
}

TEST_CASE("closed-world completion fills in the false pairs") {
    Database db = er_normalize(load_database(kFix + "/comm/manifest.txt", kFix + "/comm"));
    RelationInstance comm = complete_boolean_relation(db, "Communicate");
    RelationInstance meet = complete_boolean_relation(db, "Meet");

    // Four vehicles -> six unordered pairs per relation; the truth column is
    // named after the relation itself.
    REQUIRE(comm.rows.size() == 6);
    REQUIRE(meet.rows.size() == 6);
    REQUIRE(comm.schema.attrs.back().name == "Communicate");
    REQUIRE(comm.schema.attrs.back().kind == AttrKind::Boolean);

    const std::vector<std::vector<std::string>> want_comm = {
        {"v1", "v2", "True"},  {"v1", "v3", "False"}, {"v1", "v4", "False"},
        {"v2", "v3", "True"},  {"v2", "v4", "False"}, {"v3", "v4", "True"}};
    const std::vector<std::vector<std::string>> want_meet = {
        {"v1", "v2", "True"},  {"v1", "v3", "False"}, {"v1", "v4", "True"},
        {"v2", "v3", "True"},  {"v2", "v4", "False"}, {"v3", "v4", "False"}};
    CHECK(comm.rows == want_comm);
    CHECK(meet.rows == want_meet);

    // Stored pair order does not matter: (b, a) asserts the same fact.
    Database swapped = db;
    auto& rows = swapped.at("Meet").rows;
    std::swap(rows[0][0], rows[0][1]);
    CHECK(complete_boolean_relation(swapped, "Meet").rows == want_meet);
}

TEST_CASE("completion rejects relations outside its contract") {
    Database db = er_normalize(load_database(kFix + "/comm/manifest.txt", kFix + "/comm"));
    SECTION("self pair in a strict-order relation") {
        db.at("Meet").rows.push_back({"v2", "v2"});
        CHECK(code_of([&] { complete_boolean_relation(db, "Meet"); }) == Errc::BadPair);
    }
    SECTION("entity relation") {
        CHECK(code_of([&] { complete_boolean_relation(db, "Vehicle"); }) == Errc::NotRelationship);
    }
    SECTION("relationship that already carries attributes") {
        AttributeSpec extra;
        extra.name = "Strength";
        extra.kind = AttrKind::Continuous;
        db.at("Meet").schema.attrs.push_back(extra);
        for (auto& r : db.at("Meet").rows) r.push_back("1.0");
        CHECK(code_of([&] { complete_boolean_relation(db, "Meet"); }) ==
              Errc::NonKeyAttributesPresent);
    }
    SECTION("ternary relationship") {
        Database tri;
        for (auto& [name, schema] : parse_manifest(R"(
relation E
  attr id key
  pk id
end
relation Tri
  attr a fk:E
  attr b fk:E
  attr c fk:E
  pk a b c
end
)")) tri.relations[name] = {schema, {}};
        tri.at("E").rows = {{"e1"}, {"e2"}};
        CHECK(code_of([&] { complete_boolean_relation(tri, "Tri"); }) == Errc::UnsupportedArity);
    }
}

TEST_CASE("cross-type completion enumerates the full product") {
    Database db;
    for (auto& [name, schema] : parse_manifest(R"(
relation Sensor
  attr SID key
  pk SID
end
relation Vehicle
  attr VID key
  pk VID
end
relation Watches
  attr s fk:Sensor
  attr v fk:Vehicle
  pk s v
end
)")) db.relations[name] = {schema, {}};
    db.at("Sensor").rows = {{"s1"}, {"s2"}};
    db.at("Vehicle").rows = {{"v1"}, {"v2"}, {"v3"}};
    db.at("Watches").rows = {{"s2", "v1"}};
    RelationInstance out = complete_boolean_relation(db, "Watches");
    REQUIRE(out.rows.size() == 6); // 2 sensors x 3 vehicles
    int trues = 0;
    for (const auto& r : out.rows) trues += r[2] == "True";
    CHECK(trues == 1);
}

TEST_CASE("a database saved to disk reloads identically") {
    Database db = er_normalize(load_database(kFix + "/threat_small/manifest.txt", kFix + "/threat_small"));
    const std::string dir =
        (std::filesystem::temp_directory_path() / "mebn_test_roundtrip").string();
    std::filesystem::remove_all(dir);
    save_database(db, dir);
    Database back = load_database(dir + "/manifest.txt", dir);
    REQUIRE(back.relations.size() == db.relations.size());
    for (const auto& [name, rel] : db.relations) {
        CHECK(emit_csv(back.at(name)) == emit_csv(rel));
    }
    std::filesystem::remove_all(dir);
}
