#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "survrec/data.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

using namespace survrec;

namespace {

std::string data_dir() {
    const char* d = std::getenv("SURVREC_DATA_DIR");
    return d ? d : "data";
}

std::string write_temp(const std::string& name, const std::string& text) {
    const std::string path = "/tmp/survrec_test_" + name;
    std::ofstream out(path);
    out << text;
    return path;
}

Schema abc_schema() {
    return {{"x", FeatureKind::Continuous, {}},
            {"b", FeatureKind::Binary, {}},
            {"g", FeatureKind::Nominal, {"A", "B", "C"}},
            {"o", FeatureKind::Ordinal, {"I", "II", "III"}}};
}

}  // namespace

TEST_CASE("schema validation rejects duplicates and bad level counts") {
    Schema s = abc_schema();
    CHECK_NOTHROW(validate_schema(s));
    s.push_back({"x", FeatureKind::Continuous, {}});
    CHECK_THROWS_AS(validate_schema(s), SchemaError);

    Schema one_level{{"g", FeatureKind::Nominal, {"A"}}};
    CHECK_THROWS_AS(validate_schema(one_level), SchemaError);
    Schema cont_levels{{"x", FeatureKind::Continuous, {"A", "B"}}};
    CHECK_THROWS_AS(validate_schema(cont_levels), SchemaError);
}

TEST_CASE("encoding: binary passes through, ordinal is the level index, nominal drops first") {
    const Schema s = abc_schema();
    Vec raw(4);
    raw << 1.5, 1.0, 1.0, 2.0;  // g = level B, o = level III
    const Vec enc = encode_row(s, raw);
    // columns: x, b, g=B, g=C, o
    REQUIRE(enc.size() == 5);
    CHECK(enc[0] == 1.5);
    CHECK(enc[1] == 1.0);
    CHECK(enc[2] == 1.0);  // is_B
    CHECK(enc[3] == 0.0);  // is_C
    CHECK(enc[4] == 2.0);  // III -> 2

    const auto cols = encoded_columns(s);
    REQUIRE(cols.size() == 5);
    CHECK(cols[2].label == "g=B");
    CHECK(cols[3].label == "g=C");
    CHECK(cols[4].label == "o");
}

TEST_CASE("load_table parses the bundled cohorts at their published sizes") {
    const auto schema = load_schema(data_dir() + "/gbsg2.schema.json");
    const auto gbsg2 =
        load_table(data_dir() + "/gbsg2.csv", schema, "time", "cens");
    CHECK(gbsg2.n() == 686);
    CHECK(gbsg2.n_features() == 8);

    const auto act_schema = load_schema(data_dir() + "/act.schema.json");
    const auto act =
        load_table(data_dir() + "/act.csv", act_schema, "time", "censor");
    CHECK(act.n() == 1151);
    CHECK(act.n_features() == 11);
}

TEST_CASE("load_table error taxonomy") {
    const Schema s{{"x", FeatureKind::Continuous, {}}};
    SUBCASE("missing column is a schema error naming the column") {
        const auto p = write_temp("missing.csv", "x,time\n1,2\n");
        try {
            load_table(p, s, "time", "event");
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("event") != std::string::npos);
        }
    }
    SUBCASE("non-numeric time is a parse error with the row number") {
        const auto p = write_temp("badtime.csv", "x,time,event\n1,abc,1\n");
        try {
            load_table(p, s, "time", "event");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("row 1") != std::string::npos);
        }
    }
    SUBCASE("event outside 0/1 is a validation error") {
        const auto p = write_temp("badevent.csv", "x,time,event\n1,5,2\n");
        CHECK_THROWS_AS(load_table(p, s, "time", "event"), ValidationError);
    }
    SUBCASE("empty file with a valid header loads n=0") {
        const auto p = write_temp("empty.csv", "x,time,event\n");
        const auto d = load_table(p, s, "time", "event");
        CHECK(d.n() == 0);
    }
    SUBCASE("unseen category names the feature and value") {
        const Schema g{{"g", FeatureKind::Nominal, {"A", "B"}}};
        const auto p = write_temp("badlevel.csv", "g,time,event\nZ,5,1\n");
        try {
            load_table(p, g, "time", "event");
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("g") != std::string::npos);
            CHECK(msg.find("Z") != std::string::npos);
        }
    }
}

TEST_CASE("one-hot exclusivity holds on the bundled ACT table") {
    const auto schema = load_schema(data_dir() + "/act.schema.json");
    const auto act = load_table(data_dir() + "/act.csv", schema, "time", "censor");
    for (Index j = 0; j < act.n_features(); ++j) {
        if (act.schema[static_cast<std::size_t>(j)].kind != FeatureKind::Nominal)
            continue;
        for (Index i = 0; i < act.n(); ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < act.columns.size(); ++c)
                if (act.columns[c].feature == static_cast<int>(j))
                    sum += act.encoded(i, static_cast<Index>(c));
            CHECK((sum == 0.0 || sum == 1.0));
        }
    }
}

namespace {

SurvivalDataset tiny_dataset(Index n) {
    Schema s{{"x", FeatureKind::Continuous, {}}};
    Mat raw(n, 1);
    Vec time(n), event(n);
    for (Index i = 0; i < n; ++i) {
        raw(i, 0) = static_cast<double>(i);
        time[i] = static_cast<double>(i + 1);
        event[i] = i % 2 == 0 ? 1.0 : 0.0;
    }
    return make_dataset(s, raw, time, event);
}

}  // namespace

TEST_CASE("split sizes follow floor(fraction * n)") {
    const auto d10 = tiny_dataset(10);
    const auto s10 = split(d10, 0.8, 7);
    CHECK(s10.train.size() == 8);
    CHECK(s10.test.size() == 2);

    const auto d686 = tiny_dataset(686);
    const auto s686 = split(d686, 0.8, 7);
    CHECK(s686.train.size() == 549);  // 0.8 * 686 = 548.8, remainder to test
    CHECK(s686.test.size() == 137);
}

TEST_CASE("split is a deterministic partition") {
    const auto d = tiny_dataset(101);
    const auto a = split(d, 0.7, 42);
    const auto b = split(d, 0.7, 42);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);

    std::set<Index> all(a.train.begin(), a.train.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 101);

    const auto c = split(d, 0.7, 43);
    CHECK(a.train != c.train);

    CHECK_THROWS_AS(split(d, 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(split(d, 0.0, 1), ArgumentError);
}

TEST_CASE("make_dataset validates outcome vectors") {
    Schema s{{"x", FeatureKind::Continuous, {}}};
    Mat raw(2, 1);
    raw << 1.0, 2.0;
    Vec ok_t(2), ok_e(2);
    ok_t << 1.0, 2.0;
    ok_e << 0.0, 1.0;
    CHECK_NOTHROW(make_dataset(s, raw, ok_t, ok_e));

    Vec bad_t(2);
    bad_t << 0.0, 2.0;  // time must be strictly positive
    CHECK_THROWS_AS(make_dataset(s, raw, bad_t, ok_e), ValidationError);

    Vec bad_e(2);
    bad_e << 0.5, 1.0;
    CHECK_THROWS_AS(make_dataset(s, raw, ok_t, bad_e), ValidationError);
}

TEST_CASE("encode round-trips through re-encoding") {
    const Schema s = abc_schema();
    Vec raw(4);
    raw << -2.25, 0.0, 2.0, 0.0;
    const Vec enc1 = encode_row(s, raw);
    const Vec enc2 = encode_row(s, raw);
    CHECK(enc1 == enc2);
}
