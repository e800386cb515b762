#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "findpo/ingest.hpp"

using namespace findpo;
using namespace findpo::ingest;

namespace {

ArticleParseResult parse(const std::string& s) {
    std::istringstream in(s);
    return parse_articles(in);
}

ArticleRecord with_conf(std::optional<double> c) {
    ArticleRecord a;
    a.id = "x";
    a.ticker = "AAPL";
    a.date = parse_date("2020-01-02");
    a.ner_confidence = c;
    return a;
}

ReturnsTable table(const std::string& csv) {
    std::istringstream in(csv);
    return build_returns_table(parse_prices(in));
}

}  // namespace

TEST(Articles, ValidLineMapsFields) {
    auto r = parse(R"({"id":"1","date":"2017-03-02","ticker":"AAPL","ner_confidence":0.99,"text":"Up."})");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_TRUE(r.errors.empty());
    const auto& a = r.records[0];
    EXPECT_EQ(a.id, "1");
    EXPECT_EQ(to_string(a.date), "2017-03-02");
    EXPECT_EQ(a.ticker, "AAPL");
    EXPECT_EQ(a.text, "Up.");
    EXPECT_DOUBLE_EQ(*a.ner_confidence, 0.99);
}

TEST(Articles, OutOfRangeConfidenceIsRejectedAndTallied) {
    auto r = parse(
        "{\"id\":\"1\",\"date\":\"2017-03-02\",\"ticker\":\"AAPL\",\"ner_confidence\":1.2}\n"
        "{\"id\":\"2\",\"date\":\"2017-03-02\",\"ticker\":\"AAPL\"}\n");
    EXPECT_EQ(r.records.size(), 1u);
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].line, 1u);
}

TEST(Articles, EmptyInputYieldsNothing) {
    auto r = parse("");
    EXPECT_TRUE(r.records.empty());
    EXPECT_TRUE(r.errors.empty());
}

TEST(Articles, MalformedLinesAreCountedNotFatal) {
    auto r = parse(
        "not json\n"
        "\n"
        "{\"id\":\"1\",\"date\":\"2017-13-02\",\"ticker\":\"A\"}\n"
        "{\"id\":\"1\",\"date\":\"2017-03-02\"}\n"
        "{\"id\":\"1\",\"date\":\"2017-03-02\",\"ticker\":\"\"}\n"
        "{\"id\":\"1\",\"date\":\"2017-03-02\",\"ticker\":\"A\",\"label\":\"great\"}\n"
        "{\"id\":\"1\",\"date\":\"2017-03-02\",\"ticker\":\"A\",\"logits\":[1,2]}\n"
        "{\"id\":\"1\",\"date\":\"2017-03-02\",\"ticker\":\"A\",\"score\":1.5}\n"
        "{\"id\":\"1\",\"date\":\"2017-03-02\",\"ticker\":\"A\",\"logits\":[1,2,3],\"score\":-1}\n");
    EXPECT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.errors.size(), 7u);
    EXPECT_EQ(r.errors.front().line, 1u);
    EXPECT_EQ(r.errors.back().line, 8u);
}

TEST(Articles, SerializeRoundTrips) {
    ArticleRecord a = with_conf(0.995);
    a.text = "Shares \"jumped\" today";
    a.label = Label::positive;
    a.logits = Logits{1.5, -0.25, 0.0};
    a.score = -0.125;
    auto r = parse(serialize_article(a));
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0], a);
}

TEST(NerFilter, StrictThreshold) {
    const std::vector<ArticleRecord> v{with_conf(0.99)};
    EXPECT_EQ(ner_filter(v, 0.98).size(), 1u);
    const std::vector<ArticleRecord> w{with_conf(0.98)};
    EXPECT_TRUE(ner_filter(w, 0.98).empty());
    const std::vector<ArticleRecord> x{with_conf(0.97), with_conf(0.99), with_conf(std::nullopt)};
    EXPECT_EQ(ner_filter(x, 0.98).size(), 2u);
    EXPECT_THROW(ner_filter(x, 1.5), Error);
}

TEST(NerFilter, RetainedSetShrinksAsThresholdRises) {
    std::vector<ArticleRecord> v;
    for (int i = 0; i <= 100; ++i) v.push_back(with_conf(i / 100.0));
    std::size_t prev = v.size() + 1;
    for (int t = 0; t <= 100; t += 5) {
        const auto kept = ner_filter(v, t / 100.0);
        EXPECT_LE(kept.size(), prev);
        for (const auto& a : kept) EXPECT_GT(*a.ner_confidence, t / 100.0);
        prev = kept.size();
    }
}

TEST(Prices, LogReturnsUseLog1p) {
    auto t = table("date,ticker,simple_return\n2020-01-02,AAA,0.0\n2020-01-02,BBB,0.01\n");
    EXPECT_EQ(*t.log_return(parse_date("2020-01-02"), "AAA"), 0.0);
    EXPECT_NEAR(*t.log_return(parse_date("2020-01-02"), "BBB"), 0.00995033, 1e-8);
    EXPECT_NEAR(*t.log_return(parse_date("2020-01-02"), "BBB"), std::log(1.01), 1e-15);
}

TEST(Prices, DuplicateKeyIsAnError) {
    try {
        table("date,ticker,simple_return\n2020-01-02,MSFT,0.01\n2020-01-02,MSFT,0.02\n");
        FAIL() << "expected duplicate error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("MSFT"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("2020-01-02"), std::string::npos);
    }
}

TEST(Prices, RejectsBadInput) {
    EXPECT_THROW(table("day,ticker,ret\n"), Error);
    EXPECT_THROW(table("date,ticker,simple_return\n2020-01-02,A,abc\n"), Error);
    EXPECT_THROW(table("date,ticker,simple_return\n2020-01-02,A,-1.0\n"), Error);
}

TEST(Prices, CalendarLookups) {
    auto t = table(
        "date,ticker,simple_return\n"
        "2020-01-06,A,0.01\n2020-01-03,A,0.02\n2020-01-03,B,0.03\n");
    ASSERT_EQ(t.num_days(), 2u);
    EXPECT_EQ(to_string(t.dates()[0]), "2020-01-03");
    EXPECT_EQ(t.tickers(), (std::vector<std::string>{"A", "B"}));
    // Saturday rolls forward to Monday.
    EXPECT_EQ(*t.next_trading_index(parse_date("2020-01-04")), 1u);
    EXPECT_EQ(*t.next_trading_index(parse_date("2020-01-03")), 0u);
    EXPECT_FALSE(t.next_trading_index(parse_date("2020-01-07")));
    EXPECT_FALSE(t.simple_return(1, "B"));
    EXPECT_FALSE(t.simple_return(0, "Z"));
    EXPECT_EQ(t.num_cells(), 3u);
}
