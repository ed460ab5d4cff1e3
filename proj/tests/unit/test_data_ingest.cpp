#include "dfl/data_ingest.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace dfl;

TEST_SUITE("core")
{
    TEST_CASE("date parse, format, and arithmetic")
    {
        const Date d = Date::parse("2020-02-29");
        CHECK(d.to_string() == "2020-02-29");
        CHECK(Date::from_days(d.to_days()) == d);
        CHECK(Date::parse("1970-01-01").to_days() == 0);
        CHECK(d.add_months(12).to_string() == "2021-02-28");
        CHECK(Date::parse("2020-01-31").add_months(1).to_string() == "2020-02-29");
        CHECK_THROWS_AS(Date::parse("2021-02-29"), std::invalid_argument);
        CHECK_THROWS_AS(Date::parse("2021-2-01"), std::invalid_argument);
        CHECK(Date::parse("2020-03-01") > Date::parse("2020-02-29"));
    }

    TEST_CASE("rng is deterministic and seeds are mixed")
    {
        Rng a(42), b(42);
        for (int i = 0; i < 10; ++i)
            CHECK(a.next() == b.next());
        CHECK(mix_seed(1, 2) != mix_seed(2, 1));
        Rng c(7);
        for (int i = 0; i < 1000; ++i) {
            const double u = c.uniform();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
            CHECK(c.below(5) < 5);
        }
    }

    TEST_CASE("format_exact round trips")
    {
        Rng rng(3);
        for (int i = 0; i < 200; ++i) {
            const double v = rng.normal() * std::pow(10.0, static_cast<double>(static_cast<int>(rng.below(20)) - 10));
            double back = 0.0;
            REQUIRE(csv::parse_double(format_exact(v), back));
            CHECK(back == v);
        }
    }

    TEST_CASE("csv record splitting honours quotes")
    {
        const auto f = csv::split_record(R"(a,"b,c","say ""hi""",)");
        REQUIRE(f.size() == 4);
        CHECK(f[1] == "b,c");
        CHECK(f[2] == "say \"hi\"");
        CHECK(f[3].empty());
        double v = 0.0;
        CHECK_FALSE(csv::parse_double("1.5x", v));
        CHECK_FALSE(csv::parse_double("nan", v));
    }
}

TEST_SUITE("data_ingest")
{
    TEST_CASE("three valid rows with two tickers")
    {
        testutil::TempDir dir("prices");
        const auto p = dir.write("p.csv", "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n");
        const PricePanel panel = load_prices(p);
        CHECK(panel.periods() == 3);
        CHECK(panel.assets() == 2);
        CHECK(panel.tickers == std::vector<std::string>{"A", "B"});
        CHECK(panel.dropped_rows == 0);
        CHECK(panel.prices(1, 0) == 1.5);
    }

    TEST_CASE("negative, missing, and unparseable rows are dropped and counted")
    {
        testutil::TempDir dir("prices_drop");
        const auto p = dir.write("p.csv", "date,A,B\n2020-01-01,1,2\n2020-01-02,-1,2.5\n2020-01-03,2,3\n");
        const PricePanel panel = load_prices(p);
        CHECK(panel.periods() == 2);
        CHECK(panel.dropped_rows == 1);
        CHECK(panel.dates[1].to_string() == "2020-01-03");

        const auto q = dir.write("q.csv", "date,A,B\n2020-01-01,1,\n2020-01-02,x,2.5\n2020-01-03,2,3\n2020-01-04,0,3\n");
        const PricePanel panel2 = load_prices(q);
        CHECK(panel2.periods() == 1);
        CHECK(panel2.dropped_rows == 3);
    }

    TEST_CASE("duplicate dates, empty files, and zero usable rows are errors")
    {
        testutil::TempDir dir("prices_err");
        const auto dup = dir.write("d.csv", "date,A\n2020-01-01,1\n2020-01-01,2\n");
        CHECK_THROWS_WITH_AS(load_prices(dup), doctest::Contains("duplicate dates"), std::runtime_error);
        const auto none = dir.write("n.csv", "date,A\n2020-01-01,-1\n");
        CHECK_THROWS_AS(load_prices(none), std::runtime_error);
        CHECK_THROWS_AS(load_prices(dir.path() / "missing.csv"), std::runtime_error);
        const auto bad_header = dir.write("h.csv", "day,A\n2020-01-01,1\n");
        CHECK_THROWS_AS(load_prices(bad_header), std::runtime_error);
    }

    TEST_CASE("unordered input dates are sorted")
    {
        testutil::TempDir dir("prices_sort");
        const auto p = dir.write("p.csv", "date,A\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n");
        const PricePanel panel = load_prices(p);
        REQUIRE(panel.periods() == 3);
        CHECK(panel.prices(0, 0) == 1.0);
        CHECK(panel.prices(2, 0) == 3.0);
    }

    TEST_CASE("excess returns arithmetic")
    {
        PricePanel p;
        p.dates = {Date::parse("2020-01-01"), Date::parse("2020-01-02")};
        p.tickers = {"A"};
        p.prices = Matrix(2, 1);
        p.prices << 100, 110;
        CHECK(to_excess_returns(p, 0.0).returns(0, 0) == doctest::Approx(0.10).epsilon(1e-15));
        CHECK(to_excess_returns(p, 0.01).returns(0, 0) == doctest::Approx(0.09).epsilon(1e-14));

        p.prices << 50, 50;
        CHECK(to_excess_returns(p, 0.0).returns(0, 0) == 0.0);

        PricePanel one = p;
        one.dates.resize(1);
        one.prices = Matrix::Constant(1, 1, 5.0);
        CHECK_THROWS_AS(to_excess_returns(one, 0.0), std::invalid_argument);
    }

    TEST_CASE("returns drop one row and are scale free")
    {
        Rng rng(11);
        PricePanel p;
        p.tickers = {"A", "B", "C"};
        p.prices = Matrix(30, 3);
        for (int t = 0; t < 30; ++t) {
            p.dates.push_back(Date::from_days(18000 + t));
            for (int i = 0; i < 3; ++i)
                p.prices(t, i) = 50.0 + 10.0 * rng.uniform();
        }
        const ReturnPanel r = to_excess_returns(p, 0.001);
        CHECK(r.periods() == 29);
        CHECK(r.dates.front() == p.dates[1]);
        PricePanel scaled = p;
        scaled.prices *= 7.0;
        const ReturnPanel rs = to_excess_returns(scaled, 0.001);
        CHECK((rs.returns - r.returns).cwiseAbs().maxCoeff() <= 1e-15);
    }

    TEST_CASE("returns CSV round trip is bit exact")
    {
        Rng rng(5);
        ReturnPanel r;
        r.tickers = {"X", "Y"};
        r.returns = testutil::random_matrix(12, 2, 0.03, rng);
        for (int t = 0; t < 12; ++t)
            r.dates.push_back(Date::from_days(19000 + t));
        testutil::TempDir dir("returns_rt");
        write_returns_csv(r, dir.path() / "r.csv");
        const ReturnPanel back = read_returns_csv(dir.path() / "r.csv");
        CHECK(back.dates == r.dates);
        CHECK(back.tickers == r.tickers);
        CHECK(back.returns == r.returns);
    }

    TEST_CASE("macro panel keeps irregular gaps and descriptions")
    {
        testutil::TempDir dir("macro");
        const auto m = dir.write("m.csv", "variable,date,value\nA,2020-01-01,1\nA,2020-01-08,2\nA,2020-02-08,3\n"
                                          "B,2020-01-01,4\nB,2020-01-02,5\nB,2020-01-03,6\n");
        const auto meta = dir.write("meta.csv", "variable,description\nA,\"claims, weekly\"\n");
        const MacroPanel panel = load_macro(m, meta);
        REQUIRE(panel.size() == 2);
        CHECK(panel.series[0].name == "A");
        CHECK(panel.series[0].description == "claims, weekly");
        CHECK(panel.series[0].times[1].to_days() - panel.series[0].times[0].to_days() == 7);
        CHECK(panel.series[0].times[2].to_days() - panel.series[0].times[1].to_days() == 31);
        CHECK(panel.series[1].values == std::vector<double>{4, 5, 6});

        const auto bad = dir.write("bad.csv", "variable,date,value\nA,2020-01-08,1\nA,2020-01-01,2\n");
        CHECK_THROWS_WITH_AS(load_macro(bad), doctest::Contains("non-monotone"), std::runtime_error);
    }

    TEST_CASE("sector map lookups")
    {
        testutil::TempDir dir("sectors");
        const auto s = dir.write("s.csv", "ticker,sector\nA,Tech\nB,Energy\nC,Tech\n");
        const SectorMap map = load_sector_map(s);
        CHECK(map.at("C") == "Tech");
        CHECK(map.sectors() == std::vector<std::string>{"Energy", "Tech"});
        CHECK_THROWS_AS((void)map.at("Z"), std::invalid_argument);
        const auto dup = dir.write("d.csv", "ticker,sector\nA,Tech\nA,Energy\n");
        CHECK_THROWS_AS(load_sector_map(dup), std::runtime_error);
    }

    TEST_CASE("slice_rows bounds")
    {
        ReturnPanel r;
        r.tickers = {"A"};
        r.returns = Matrix::Zero(5, 1);
        for (int t = 0; t < 5; ++t)
            r.dates.push_back(Date::from_days(t));
        CHECK(slice_rows(r, 1, 4).periods() == 3);
        CHECK(slice_rows(r, 1, 4).dates.front() == r.dates[1]);
        CHECK_THROWS_AS(slice_rows(r, 3, 6), std::out_of_range);
    }
}
