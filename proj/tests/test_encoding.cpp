#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dml/encoding.hpp"
#include "dml/errors.hpp"
#include "dml/rng.hpp"
#include "encoding_support.hpp"

using namespace dml;

namespace {

RawTable parse(const std::string& text, const TableFormat& format = {}) {
    std::istringstream in(text);
    return load_table(in, format);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("dml_test_encoding_" + name);
}

Dataset encode_fixture() {
    return encode(load_table_file(DML_FIXTURE_DIR "/coding_raw.csv"),
                  load_encoding_spec(DML_FIXTURE_DIR "/coding_spec.yaml"));
}

double cell(const Dataset& data, Index row, const std::string& column) {
    return data.design()(row, data.require_index(column));
}

// Every categorical source has at most one nonzero dummy per row.
void check_dummy_exclusivity(const Dataset& data) {
    std::map<std::string, std::vector<Index>> by_source;
    for (Index j = 0; j < data.p(); ++j) {
        if (data.column_info(j).kind == ColumnKind::Dummy) by_source[data.column_info(j).source].push_back(j);
    }
    for (const auto& [source, cols] : by_source) {
        for (Index i = 0; i < data.n(); ++i) {
            double sum = 0.0;
            for (Index j : cols) {
                const double v = data.design()(i, j);
                CHECK((v == 0.0 || v == 1.0));
                sum += v;
            }
            CHECK(sum <= 1.0);
        }
    }
}

void check_interaction_products(const Dataset& data) {
    for (Index j = 0; j < data.p(); ++j) {
        const ColumnInfo& c = data.column_info(j);
        if (c.kind != ColumnKind::Interaction) continue;
        REQUIRE(c.parents.size() == 2);
        const Vector expected = data.design().col(data.require_index(c.parents[0]))
                                    .cwiseProduct(data.design().col(data.require_index(c.parents[1])));
        CHECK(data.design().col(j) == expected);
    }
}

}  // namespace

TEST_CASE("load_table examples") {
    const RawTable t = parse("a,b\n1,x\n2,y\n");
    REQUIRE(t.columns == std::vector<std::string>{"a", "b"});
    REQUIRE(t.n_rows() == 2);
    CHECK(t.rows[0][0].is_number());
    CHECK(t.rows[0][0].number == 1.0);
    CHECK(t.rows[1][0].number == 2.0);
    CHECK(t.rows[0][1].kind == Cell::Kind::Text);
    CHECK(t.rows[1][1].text == "y");

    try {
        parse("a,b\n1,2\n3,4,5\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
    }

    const RawTable m = parse("a,b\n,NA\n3,\n");
    CHECK(m.rows[0][0].missing());
    CHECK(m.rows[0][1].missing());
    CHECK(m.rows[1][1].missing());
}

TEST_CASE("load_table detects tabs, honours quotes and custom missing tokens") {
    const RawTable t = parse("name\tvalue\n\"Smith, J\"\t2.5\n");
    REQUIRE(t.columns.size() == 2);
    CHECK(t.rows[0][0].text == "Smith, J");
    CHECK(t.rows[0][1].number == 2.5);

    const RawTable q = parse("a,b\n\"say \"\"hi\"\"\",\"1,2\"\n");
    CHECK(q.rows[0][0].text == "say \"hi\"");
    CHECK(q.rows[0][1].kind == Cell::Kind::Text);

    TableFormat format;
    format.missing_tokens = {"-99"};
    const RawTable c = parse("a\n-99\nNA\n", format);
    CHECK(c.rows[0][0].missing());
    CHECK(c.rows[1][0].kind == Cell::Kind::Text);

    CHECK_THROWS_AS(parse("a,a\n1,2\n"), SchemaError);
}

TEST_CASE("golden coding fixture encodes to the expected matrix byte for byte") {
    const Dataset data = encode_fixture();
    const auto out = temp_path("golden.csv");
    write_dataset(data, out.string());
    CHECK(slurp(out.string()) == slurp(DML_FIXTURE_DIR "/coding_expected.csv"));
    CHECK(data.dropped_rows() == 1);
    CHECK(static_cast<std::size_t>(data.n()) + data.dropped_rows() == 10);
    CHECK(data.count(Role::Treatment) == 26);
    CHECK(data.count(Role::Control) == 1);
    std::filesystem::remove(out);
    std::filesystem::remove(out.string() + ".meta.yaml");
}

TEST_CASE("coding rules: baseline, derived age and merged citizenship") {
    const Dataset data = encode_fixture();
    // Row 0 is Male, row 1 Female.
    CHECK(cell(data, 0, "gender_Female") == 0.0);
    CHECK(cell(data, 1, "gender_Female") == 1.0);
    CHECK_FALSE(data.index_of("gender_Male"));
    // Born 1990.
    CHECK(cell(data, 0, "Age") == 23.0);
    // EU28 merges into Other against the Germany baseline.
    CHECK(cell(data, 1, "citizenship_Other") == 1.0);
    CHECK(cell(data, 0, "citizenship_Other") == 0.0);
    CHECK_FALSE(data.index_of("citizenship_Germany"));
    // Online rows carry age in the interaction, offline rows zero.
    CHECK(cell(data, 0, "Age*mode_Online") == 23.0);
    CHECK(cell(data, 1, "Age*mode_Online") == 0.0);
}

TEST_CASE("encoded columns keep their provenance") {
    const Dataset data = encode_fixture();
    const std::set<std::string> raw_columns{"mode", "willingness", "persuade_interview", "persuade_followup",
                                            "likelihood", "education", "gender", "citizenship",
                                            "birth_year", "living", "household_size"};
    for (const ColumnInfo& c : data.columns()) {
        if (c.kind == ColumnKind::Interaction) {
            CHECK(c.parents.size() == 2);
            CHECK(c.source == c.parents[0] + "*" + c.parents[1]);
        } else {
            CHECK(raw_columns.count(c.source) == 1);
        }
        CHECK((c.kind == ColumnKind::Dummy) == !c.level.empty());
    }
    CHECK(data.column_info(data.require_index("education_High")).level == "High");
    check_dummy_exclusivity(data);
    check_interaction_products(data);
}

TEST_CASE("encoding errors name the offending column or level") {
    const EncodingSpec spec = load_encoding_spec(DML_FIXTURE_DIR "/coding_spec.yaml");
    RawTable raw = load_table_file(DML_FIXTURE_DIR "/coding_raw.csv");

    RawTable unseen = raw;
    unseen.rows[2][*raw.index_of("gender")] = Cell{Cell::Kind::Text, 0.0, "Diverse"};
    try {
        encode(unseen, spec);
        FAIL("expected an encoding error");
    } catch (const EncodingError& e) {
        CHECK(std::string(e.what()).find("Diverse") != std::string::npos);
    }

    RawTable absent = raw;
    absent.columns[*raw.index_of("living")] = "living_situation";
    try {
        encode(absent, spec);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("'living'") != std::string::npos);
    }

    RawTable empty = raw;
    for (auto& row : empty.rows) row[*raw.index_of("household_size")] = Cell{};
    CHECK_THROWS_AS(encode(empty, spec), EmptyDatasetError);
}

TEST_CASE("spec validation") {
    EncodingSpec spec = load_encoding_spec(DML_FIXTURE_DIR "/coding_spec.yaml");
    CHECK_NOTHROW(spec.validate());

    EncodingSpec bad_baseline = spec;
    std::get<CategoricalRule>(bad_baseline.variables[0].rule).baseline = "Phone";
    CHECK_THROWS_AS(bad_baseline.validate(), SchemaError);

    EncodingSpec bad_merge = spec;
    std::get<CategoricalRule>(bad_merge.variables[1].rule).merge["Medium"] = "Average";
    CHECK_THROWS_AS(bad_merge.validate(), SchemaError);

    EncodingSpec bad_version = spec;
    bad_version.version = 2;
    CHECK_THROWS_AS(bad_version.validate(), SchemaError);

    CHECK_THROWS_AS(parse_encoding_spec("outcome: {column: y}\nvariables: []\n"), SchemaError);
}

TEST_CASE("spec documents round-trip") {
    const EncodingSpec spec = load_encoding_spec(DML_FIXTURE_DIR "/coding_spec.yaml");
    const std::string once = dump_encoding_spec(spec);
    const std::string twice = dump_encoding_spec(parse_encoding_spec(once));
    CHECK(once == twice);
    const RawTable raw = load_table_file(DML_FIXTURE_DIR "/coding_raw.csv");
    CHECK(encode(raw, parse_encoding_spec(once)) == encode(raw, spec));
}

TEST_CASE("encoding is deterministic") {
    const Dataset a = encode_fixture();
    const Dataset b = encode_fixture();
    CHECK(a == b);
    CHECK(a.checksum() == b.checksum());
}

TEST_CASE("standardized numeric columns have mean zero and unit variance") {
    const RawTable raw = parse("y,age,size\n1,30,2\n0,40,3\n1,50,3\n0,20,1\n");
    const EncodingSpec spec = parse_encoding_spec(
        "version: 1\noutcome: {column: y}\nvariables:\n  - {column: age}\n  - {column: size, standardize: false}\n");
    const Dataset data = encode(raw, spec);
    const Vector age = data.design().col(0);
    CHECK(std::fabs(age.mean()) <= 1e-15);
    CHECK(std::sqrt(age.squaredNorm() / 4.0) == doctest::Approx(1.0).epsilon(1e-14));
    const ColumnInfo& info = data.column_info(0);
    CHECK(info.center == 35.0);
    CHECK(info.scale == doctest::Approx(std::sqrt(125.0)));
    for (Index i = 0; i < 4; ++i) CHECK(age(i) * info.scale + info.center == doctest::Approx(raw.rows[i][1].number));
    CHECK(data.design()(0, 1) == 2.0);
}

TEST_CASE("indicator policy keeps rows and flags missing cells") {
    const RawTable raw = parse("y,a,b\n1,1,x\n0,,y\n1,3,\n");
    const EncodingSpec spec = parse_encoding_spec(
        "version: 1\noutcome: {column: y}\nmissing: indicator\nvariables:\n"
        "  - {column: a, standardize: false}\n"
        "  - {column: b, type: categorical, levels: [x, y], baseline: x}\n");
    const Dataset data = encode(raw, spec);
    CHECK(data.n() == 3);
    CHECK(data.dropped_rows() == 0);
    CHECK(cell(data, 1, "a") == 0.0);
    CHECK(cell(data, 1, "a_missing") == 1.0);
    CHECK(cell(data, 0, "a_missing") == 0.0);
    CHECK(cell(data, 2, "b_y") == 0.0);
    CHECK(cell(data, 2, "b_missing") == 1.0);
    CHECK(data.column_info(data.require_index("b_missing")).kind == ColumnKind::MissingIndicator);
}

TEST_CASE("non-numeric cells in numeric rules and outcomes are rejected") {
    const EncodingSpec spec = parse_encoding_spec("version: 1\noutcome: {column: y}\nvariables:\n  - {column: a}\n");
    CHECK_THROWS_AS(encode(parse("y,a\n1,2\n0,abc\n"), spec), EncodingError);
    CHECK_THROWS_AS(encode(parse("y,a\nyes,2\n0,3\n"), spec), EncodingError);
}

TEST_CASE("derived expressions") {
    const Expression e = Expression::parse("2013 - x");
    CHECK(e(1990.0) == 23.0);
    CHECK(Expression::parse("-(value - 10) / 4 * 2")(2.0) == 4.0);
    CHECK_THROWS_AS(Expression::parse("2013 - "), SchemaError);
    CHECK_THROWS_AS(Expression::parse("y + 1"), SchemaError);
}

TEST_CASE("interact examples") {
    const RawTable raw = parse("y,age,online,a,b\n1,20,0,1,1\n0,30,1,1,0\n1,40,1,0,1\n0,50,1,1,1\n");
    const EncodingSpec spec = parse_encoding_spec(
        "version: 1\noutcome: {column: y}\nvariables:\n"
        "  - {column: age}\n  - {column: online, standardize: false}\n"
        "  - {column: a, standardize: false}\n  - {column: b, standardize: false}\n");
    const Dataset base = encode(raw, spec);
    const Dataset out = interact(base, {{"age", "online", Role::Treatment}, {"a", "b", Role::Control}});
    CHECK(cell(out, 0, "age*online") == 0.0);
    CHECK(cell(out, 1, "age*online") == cell(out, 1, "age"));
    for (Index i = 0; i < 4; ++i) {
        const bool both = cell(out, i, "a") == 1.0 && cell(out, i, "b") == 1.0;
        CHECK(cell(out, i, "a*b") == (both ? 1.0 : 0.0));
    }
    CHECK(out.column_info(out.require_index("age*online")).role == Role::Treatment);
    CHECK(out.column_info(out.require_index("a*b")).role == Role::Control);
    check_interaction_products(out);

    CHECK_THROWS_AS(interact(base, {{"age", "nothing", Role::Control}}), InvalidArgument);
    CHECK_THROWS_AS(interact(out, {{"a", "b", Role::Control}}), InvalidArgument);
}

TEST_CASE("interact is order independent") {
    const Dataset data = encode_fixture();
    const std::vector<InteractionSpec> pairs{{"gender_Female", "Age", Role::Control},
                                             {"household_size", "citizenship_Other", Role::Control},
                                             {"willingness_Good", "likelihood_Very likely", Role::Control},
                                             {"education_High", "gender_Female", Role::Control}};
    std::vector<std::size_t> order{0, 1, 2, 3};
    const Dataset ref = interact(data, pairs);
    do {
        std::vector<InteractionSpec> permuted;
        for (std::size_t k : order) permuted.push_back(pairs[k]);
        const Dataset other = interact(data, permuted);
        REQUIRE(other.p() == ref.p());
        for (Index j = 0; j < ref.p(); ++j) {
            const auto idx = other.index_of(ref.column_info(j).name);
            REQUIRE(idx);
            CHECK(other.design().col(*idx) == ref.design().col(j));
        }
    } while (std::next_permutation(order.begin(), order.end()));
}

TEST_CASE("synthetic schema expands to 26 treatment and 303 control columns") {
    const EncodingSpec spec = load_encoding_spec(DML_DATA_DIR "/synthetic_schema.yaml");
    const RawTable raw = test_support::synthetic_raw(spec, 600, 5);
    const Dataset data = encode(raw, spec);
    CHECK(data.p() == 329);
    CHECK(data.count(Role::Treatment) == 26);
    CHECK(data.count(Role::Control) == 303);
    CHECK(static_cast<std::size_t>(data.n()) + data.dropped_rows() == 600);
    check_dummy_exclusivity(data);
    check_interaction_products(data);
    CHECK(encode(raw, spec) == data);
}

TEST_CASE("survey coding spec encodes the treatment block") {
    const EncodingSpec spec = load_encoding_spec(DML_DATA_DIR "/survey_encoding.yaml");
    const Dataset data = encode(test_support::synthetic_raw(spec, 300, 9), spec);
    CHECK(data.count(Role::Treatment) == 26);
    for (const char* name : {"Online", "Age", "Germany", "Female", "Good willingness to answer questions",
                             "Age*Online", "Medium education*Online", "Married living apart*Online"}) {
        CHECK_MESSAGE(data.index_of(name), name);
    }
}

TEST_CASE("datasets round-trip through the matrix file and sidecar") {
    const Dataset data = encode_fixture();
    const auto out = temp_path("roundtrip.csv");
    write_dataset(data, out.string());
    const Dataset back = read_dataset(out.string());
    CHECK(back == data);
    CHECK(back.dropped_rows() == data.dropped_rows());
    std::filesystem::remove(out);
    std::filesystem::remove(out.string() + ".meta.yaml");
}
