#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "leakguard/dataset.hpp"

using namespace leakguard;

namespace {

const char* kCsv =
    "subject,y,x1,grade,x2\n"
    "s1,1,0.5,low,2\n"
    "s1,0,1.5,high,NA\n"
    "s2,1,-0.25,low,4\n"
    "s2,0,NA,mid,5\n"
    "s3,1,2.25,high,6\n"
    "s3,0,0,low,7\n";

RoleMap demo_roles() {
    RoleMap r;
    r.outcome = "y";
    r.positive_class = "1";
    r.subject = "subject";
    return r;
}

}  // namespace

TEST_CASE("csv parsing infers kinds and handles missing tokens") {
    Dataset ds = parse_csv(kCsv, demo_roles());
    CHECK(ds.n_rows() == 6);
    CHECK(ds.task() == TaskKind::binary_classification);
    CHECK(ds.positive_class() == "1");

    const Column& x1 = ds.column("x1");
    CHECK(x1.kind == ColumnKind::numeric);
    CHECK(std::isnan(x1.values[3]));
    CHECK(x1.values[4] == doctest::Approx(2.25));

    const Column& grade = ds.column("grade");
    CHECK(grade.kind == ColumnKind::categorical);
    // levels freeze in first-appearance order
    CHECK(grade.levels == std::vector<std::string>{"low", "high", "mid"});
    CHECK(grade.codes[0] == 0);
    CHECK(grade.codes[3] == 2);

    // subject was forced categorical by its role even though tokens look text
    CHECK(ds.column("subject").kind == ColumnKind::categorical);
    // outcome forced categorical because a positive class was named
    CHECK(ds.column("y").kind == ColumnKind::categorical);

    // predictors default to the unassigned columns
    CHECK(ds.predictor_names() == std::vector<std::string>{"x1", "grade", "x2"});
}

TEST_CASE("quoted fields round trip") {
    std::string text =
        "id,y,note\n"
        "a,1,\"hello, world\"\n"
        "b,0,\"line\nbreak\"\n"
        "c,1,\"quote \"\" inside\"\n"
        "d,0,plain\n";
    RoleMap roles;
    roles.outcome = "y";
    roles.positive_class = "1";
    roles.subject = "id";
    Dataset ds = parse_csv(text, roles);
    const Column& note = ds.column("note");
    CHECK(note.level_of(0) == "hello, world");
    CHECK(note.level_of(1) == "line\nbreak");
    CHECK(note.level_of(2) == "quote \" inside");

    Dataset back = parse_csv(to_csv(ds), roles);
    CHECK(back.column("note").level_of(1) == "line\nbreak");
    CHECK(to_csv(back) == to_csv(ds));
}

TEST_CASE("outcome handling") {
    SUBCASE("binary outcome maps the positive class to 1") {
        Dataset ds = parse_csv(kCsv, demo_roles());
        auto y = ds.outcome_values();
        CHECK(y == std::vector<double>{1, 0, 1, 0, 1, 0});
        RoleMap flipped = demo_roles();
        flipped.positive_class = "0";
        auto y2 = parse_csv(kCsv, flipped).outcome_values();
        CHECK(y2 == std::vector<double>{0, 1, 0, 1, 0, 1});
    }
    SUBCASE("numeric outcome means regression") {
        RoleMap r;
        r.outcome = "x2";
        r.subject = "subject";
        Dataset ds = parse_csv(
            "subject,x2,a\ns1,2,1\ns1,3,2\ns2,4.5,3\n", r);
        CHECK(ds.task() == TaskKind::regression);
        CHECK(ds.outcome_values() == std::vector<double>{2, 3, 4.5});
    }
    SUBCASE("missing outcome rejected") {
        RoleMap r;
        r.outcome = "x2";
        try {
            parse_csv("x2,a\n1,1\nNA,2\n", r);
            FAIL("expected a missing-outcome error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("missing") != std::string::npos);
        }
    }
    SUBCASE("positive class must exist") {
        RoleMap r = demo_roles();
        r.positive_class = "yes";
        CHECK_THROWS_AS(parse_csv(kCsv, r), std::invalid_argument);
    }
    SUBCASE("positive class on a numeric outcome rejected") {
        RoleMap r;
        r.outcome = "x2";
        r.positive_class = "2";
        CHECK_THROWS_AS(parse_csv("x2,a\n1,1\n2,2\n3,1\n", r), std::invalid_argument);
    }
    SUBCASE("more than two outcome levels rejected") {
        RoleMap r;
        r.outcome = "g";
        r.positive_class = "a";
        CHECK_THROWS_AS(parse_csv("g,x\na,1\nb,2\nc,3\n", r), std::invalid_argument);
    }
}

TEST_CASE("build validation") {
    auto col = Column::numeric_col("x", {1, 2, 3});
    auto y = Column::categorical_col("y", {"a", "b", "a"});
    RoleMap roles;
    roles.outcome = "y";

    SUBCASE("unknown role column") {
        RoleMap r = roles;
        r.batch = "nope";
        CHECK_THROWS_AS(Dataset::build({y, col}, r), std::invalid_argument);
    }
    SUBCASE("duplicate names") {
        CHECK_THROWS_AS(Dataset::build({y, col, col}, roles), std::invalid_argument);
    }
    SUBCASE("ragged columns") {
        auto shorter = Column::numeric_col("z", {1, 2});
        CHECK_THROWS_AS(Dataset::build({y, col, shorter}, roles), std::invalid_argument);
    }
    SUBCASE("explicit predictors are checked") {
        RoleMap r = roles;
        r.predictors = {"x", "ghost"};
        CHECK_THROWS_AS(Dataset::build({y, col}, r), std::invalid_argument);
    }
    SUBCASE("no predictors left") {
        CHECK_THROWS_AS(Dataset::build({y}, roles), std::invalid_argument);
    }
}

TEST_CASE("group codes for categorical and numeric columns") {
    Dataset ds = parse_csv(kCsv, demo_roles());
    auto codes = ds.group_codes("subject");
    CHECK(codes == std::vector<std::int32_t>{0, 0, 1, 1, 2, 2});
    CHECK(ds.group_labels("subject") == std::vector<std::string>{"s1", "s2", "s3"});

    // numeric grouping codes by distinct value
    RoleMap r;
    r.outcome = "y";
    r.positive_class = "1";
    Dataset num = parse_csv("y,site,x\n1,10,1\n0,20,2\n1,10,3\n0,30,4\n", r);
    auto sc = num.group_codes("site");
    CHECK(sc[0] == sc[2]);
    CHECK(sc[0] != sc[1]);
    CHECK(sc[1] != sc[3]);

    CHECK_THROWS_AS(ds.group_codes("x1"), std::invalid_argument);  // has NA
}

TEST_CASE("with_column and without_column adjust the predictor set") {
    Dataset ds = parse_csv(kCsv, demo_roles());
    Dataset plus = ds.with_column(Column::numeric_col("extra", {1, 2, 3, 4, 5, 6}));
    CHECK(plus.predictor_names() == std::vector<std::string>{"x1", "grade", "x2", "extra"});
    CHECK(plus.n_rows() == 6);

    Dataset minus = plus.without_column("grade");
    CHECK(minus.predictor_names() == std::vector<std::string>{"x1", "x2", "extra"});
    CHECK_FALSE(minus.has_column("grade"));

    // original untouched
    CHECK(ds.predictor_names().size() == 3);
}

TEST_CASE("content hash tracks content, not object identity") {
    Dataset a = parse_csv(kCsv, demo_roles());
    Dataset b = parse_csv(kCsv, demo_roles());
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.content_hash().size() == 64);

    std::string tweaked(kCsv);
    tweaked.replace(tweaked.find("0.5"), 3, "0.6");
    CHECK(parse_csv(tweaked, demo_roles()).content_hash() != a.content_hash());
}

TEST_CASE("file round trip") {
    Dataset ds = parse_csv(kCsv, demo_roles());
    std::string path = "test_dataset_roundtrip.csv";
    write_csv(ds, path);
    Dataset back = load_csv(path, demo_roles());
    CHECK(back.content_hash() == ds.content_hash());
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_csv("does_not_exist_anywhere.csv", demo_roles()), std::runtime_error);
}

TEST_CASE("feature encoding dummies categoricals and propagates missing") {
    Dataset ds = parse_csv(kCsv, demo_roles());
    FeatureMatrix fm = encode_features(ds, {"x1", "grade"});
    CHECK(fm.names == std::vector<std::string>{"x1", "grade=low", "grade=high", "grade=mid"});
    CHECK(fm.X.rows() == 6);
    CHECK(fm.X.cols() == 4);
    CHECK(fm.X(0, 1) == 1.0);
    CHECK(fm.X(0, 2) == 0.0);
    CHECK(fm.X(1, 2) == 1.0);
    CHECK(std::isnan(fm.X(3, 0)));

    // a missing categorical row goes NaN in every dummy
    Dataset miss = parse_csv("y,g\n1,a\n0,b\n1,NA\n0,a\n", [] {
        RoleMap r;
        r.outcome = "y";
        r.positive_class = "1";
        return r;
    }());
    FeatureMatrix fm2 = encode_features(miss, {"g"});
    CHECK(std::isnan(fm2.X(2, 0)));
    CHECK(std::isnan(fm2.X(2, 1)));
    CHECK(fm2.X(3, 0) == 1.0);
}

TEST_CASE("csv structural errors") {
    RoleMap r;
    r.outcome = "y";
    CHECK_THROWS_AS(parse_csv("y,x\n", r), std::invalid_argument);                 // no data rows
    CHECK_THROWS_AS(parse_csv("y,x\n1,2,3\n", r), std::invalid_argument);          // ragged row
    CHECK_THROWS_AS(parse_csv("y,x\n\"1,2\n", r), std::invalid_argument);          // open quote
}
